"""Strict loaders for the model and mechanism JSON documents.

Model document::

    {"type": "chain" | "joint" | "markov_network" | "bayes_net",
     "n": int, "domains": [[label, ...], ...], "transition": [[...]],
     "initial": [...], "edges": [[u, v], ...], "probabilities": [...]}

``chain`` needs ``n``, ``transition`` and ``initial``; ``domains`` is optional
and may list the state labels once or once per node.  The other types need
``n``, ``domains`` and a flat or nested ``probabilities`` table in row-major
order.  ``edges`` is required for networks (directed for ``bayes_net``); for
``joint`` it defaults to the complete graph.  Unknown fields are rejected.

Mechanism document::

    {"outputs": [label, ...], "rows": {"a,b,c": [p_y, ...], ...}}
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import DiscreteMechanism
from .errors import InvalidModel
from .graphical_model import DependencyGraph, JointTable, MarkovChainSpec, build_joint_from_chain

MODEL_TYPES = ("chain", "joint", "markov_network", "bayes_net")
MODEL_FIELDS = {"type", "n", "domains", "transition", "initial", "edges", "probabilities"}
REQUIRED = {
    "chain": {"n", "transition", "initial"},
    "joint": {"n", "domains", "probabilities"},
    "markov_network": {"n", "domains", "probabilities", "edges"},
    "bayes_net": {"n", "domains", "probabilities", "edges"},
}
FORBIDDEN = {
    "chain": {"probabilities", "edges"},
    "joint": {"transition", "initial"},
    "markov_network": {"transition", "initial"},
    "bayes_net": {"transition", "initial"},
}
MECHANISM_FIELDS = {"outputs", "rows"}


@dataclass(frozen=True)
class LoadedModel:
    """A parsed model.  ``chain`` is set only for chain documents."""

    kind: str
    n: int
    graph: DependencyGraph
    chain: MarkovChainSpec | None = None
    _joint: JointTable | None = None

    @property
    def domains(self) -> tuple[tuple[str, ...], ...]:
        if self.chain is not None:
            return tuple(self.chain.labels for _ in range(self.n))
        return self._joint.domains

    def joint(self) -> JointTable:
        """Full joint table; built on demand for chains (may raise CapExceeded)."""
        if self._joint is not None:
            return self._joint
        return build_joint_from_chain(self.chain)


def _read(source) -> dict:
    if isinstance(source, dict):
        return source
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise InvalidModel(f"cannot read {source}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidModel(f"{source} is not valid JSON: {exc.msg} at line {exc.lineno}") from None
    if not isinstance(doc, dict):
        raise InvalidModel("document must be a JSON object")
    return doc


def _positive_int(doc, key) -> int:
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise InvalidModel(f"{key!r} must be a positive integer")
    return v


def _array(v, key) -> np.ndarray:
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise InvalidModel(f"{key!r} must be numeric") from None
    if a.dtype == object:
        raise InvalidModel(f"{key!r} must be a rectangular numeric array")
    return a


def _domains(v, n) -> list[list[str]]:
    if not isinstance(v, list) or not all(isinstance(d, list) for d in v):
        raise InvalidModel("'domains' must be a list of label lists")
    if len(v) != n:
        raise InvalidModel(f"'domains' lists {len(v)} nodes, n is {n}")
    return [[str(s) for s in d] for d in v]


def _edges(v, n):
    if not isinstance(v, list) or not all(isinstance(e, list) and len(e) == 2 for e in v):
        raise InvalidModel("'edges' must be a list of [u, v] pairs")
    for e in v:
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in e):
            raise InvalidModel("edge endpoints must be integers")
    return [tuple(e) for e in v]


def load_model(source) -> LoadedModel:
    """Parse a model document from a path or an already decoded dict."""
    doc = _read(source)
    unknown = set(doc) - MODEL_FIELDS
    if unknown:
        raise InvalidModel(f"unknown model fields: {sorted(unknown)}")
    kind = doc.get("type")
    if kind not in MODEL_TYPES:
        raise InvalidModel(f"'type' must be one of {list(MODEL_TYPES)}")
    missing = REQUIRED[kind] - set(doc)
    if missing:
        raise InvalidModel(f"{kind} model is missing {sorted(missing)}")
    extra = FORBIDDEN[kind] & set(doc)
    if extra:
        raise InvalidModel(f"{kind} model does not take {sorted(extra)}")
    n = _positive_int(doc, "n")

    if kind == "chain":
        labels = None
        if "domains" in doc:
            v = doc["domains"]
            if not isinstance(v, list) or not all(isinstance(d, list) for d in v) or len(v) not in (1, n):
                raise InvalidModel("chain 'domains' must list the labels once or once per node")
            labels = [str(s) for s in v[0]]
            if any([str(s) for s in d] != labels for d in v):
                raise InvalidModel("chain nodes must share one label set")
        chain = MarkovChainSpec(_array(doc["transition"], "transition"), _array(doc["initial"], "initial"), n, labels)
        return LoadedModel(kind, n, DependencyGraph.chain(n), chain=chain)

    domains = _domains(doc["domains"], n)
    probs = _array(doc["probabilities"], "probabilities")
    joint = JointTable(tuple(map(tuple, domains)), probs)
    if kind == "joint":
        edges = _edges(doc["edges"], n) if "edges" in doc else list(itertools.combinations(range(n), 2))
        graph = DependencyGraph(n, edges, directed=False)
    else:
        graph = DependencyGraph(n, _edges(doc["edges"], n), directed=kind == "bayes_net")
    return LoadedModel(kind, n, graph, _joint=joint)


def load_mechanism(source, domains) -> DiscreteMechanism:
    """Parse a mechanism document against the node ``domains`` of its model."""
    doc = _read(source)
    unknown = set(doc) - MECHANISM_FIELDS
    if unknown:
        raise InvalidModel(f"unknown mechanism fields: {sorted(unknown)}")
    if MECHANISM_FIELDS - set(doc):
        raise InvalidModel("mechanism needs 'outputs' and 'rows'")
    outputs, rows = doc["outputs"], doc["rows"]
    if not isinstance(outputs, list) or not isinstance(rows, dict):
        raise InvalidModel("'outputs' must be a list and 'rows' an object")
    for key, row in rows.items():
        if not isinstance(row, list):
            raise InvalidModel(f"row {key!r} must be a list of probabilities")
    return DiscreteMechanism.from_rows(domains, [str(o) for o in outputs],
                                       {k: _array(r, f"rows[{k}]") for k, r in rows.items()})
