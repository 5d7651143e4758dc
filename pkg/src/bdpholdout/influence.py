"""Max-influence of one tuple on a set of others, computed exactly.

``I(S <~ i | K) = ln max P(x_S | x_i, x_K) / P(x_S | x_i', x_K)`` over all
``x_S``, ``x_K`` and pairs ``x_i != x_i'``.  Conditioning events of
probability zero are skipped, ``0/0`` ratios count as 1 and ``c/0`` as
``+inf``.  Values within ``ZERO_TOL`` of 0 are rounding noise from
conditioning an exact product table and are reported as 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import CapExceeded, IndexOutOfRange, InvalidModel
from .graphical_model import (
    DependencyGraph,
    JointTable,
    MarkovChainSpec,
    QuiltPartition,
    build_joint_from_chain,
    enumerate_chain_quilts,
    markov_blanket,
)

DEFAULT_NEARBY_CAP = 20
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class InfluenceResult:
    """Influence value (nats, possibly ``inf``) and the maximizing assignment.

    ``witness`` maps ``"S"``/``"K"`` to state tuples (node order as sorted
    indices) and ``"x_i"``/``"x_i_prime"`` to state indices.  It is ``None``
    when the value is 0 because no ratio differs from 1.
    """

    value: float
    witness: dict | None = None

    def __float__(self):
        return self.value


def _log_ratio_table(cond: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Pairwise log-ratios ``cond[s, a, k] / cond[s, b, k]`` with a, b over x_i.

    ``cond`` has shape (|S|, |X_i|, |K|) after flattening; ``valid[a, k]``
    marks conditioning events with positive probability.  Entries that are
    excluded from the supremum are set to 0 (ratio 1).
    """
    num = cond[:, :, None, :]
    den = cond[:, None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(num) - np.log(den)
    out = np.where((num == 0) & (den == 0), 0.0, out)
    out = np.where((num > 0) & (den == 0), np.inf, out)
    ok = valid[:, None, :] & valid[None, :, :]
    ks = cond.shape[1]
    ok = ok & ~np.eye(ks, dtype=bool)[:, :, None]
    return np.where(ok[None], out, 0.0)


def max_influence_cond(joint: JointTable, S: Iterable[int], i: int, K: Iterable[int] = ()) -> InfluenceResult:
    S = sorted(set(int(j) for j in S))
    K = sorted(set(int(j) for j in K))
    if not 0 <= i < joint.n:
        raise IndexOutOfRange(f"node {i} outside 0..{joint.n - 1}")
    for j in S + K:
        if not 0 <= j < joint.n:
            raise IndexOutOfRange(f"node {j} outside 0..{joint.n - 1}")
    if i in S or i in K or set(S) & set(K):
        raise InvalidModel("S, K must be disjoint subsets excluding the target")
    if not S:
        return InfluenceResult(0.0)

    p = joint.marginal(S + [i] + K)
    s_shape = p.shape[: len(S)]
    k_shape = p.shape[len(S) + 1 :]
    p = p.reshape(int(np.prod(s_shape)), p.shape[len(S)], int(np.prod(k_shape)))
    p_cond = p.sum(axis=0)
    valid = p_cond > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(valid[None], p / np.where(valid, p_cond, 1.0)[None], 0.0)

    table = _log_ratio_table(cond, valid)
    flat = int(np.argmax(table))
    value = float(table.flat[flat])
    if value <= ZERO_TOL:
        return InfluenceResult(0.0)
    s_idx, a, b, k_idx = np.unravel_index(flat, table.shape)
    witness = {
        "S": tuple(int(x) for x in np.unravel_index(s_idx, s_shape)),
        "x_i": int(a),
        "x_i_prime": int(b),
        "K": tuple(int(x) for x in np.unravel_index(k_idx, k_shape)) if K else (),
    }
    return InfluenceResult(value, witness)


def max_influence(joint: JointTable, S: Iterable[int], i: int) -> InfluenceResult:
    return max_influence_cond(joint, S, i, ())


def blanket_coefficient(joint: JointTable, g: DependencyGraph, i: int) -> float:
    """Influence of node ``i`` on its Markov blanket under ``g``."""
    if g.n != joint.n:
        raise InvalidModel(f"graph has {g.n} nodes, joint has {joint.n}")
    return max_influence(joint, markov_blanket(g, i), i).value


def quilt_coefficient(joint: JointTable, q: QuiltPartition, cap: int = DEFAULT_NEARBY_CAP) -> float:
    """Worst influence of the target on its quilt over all subsets of the nearby set."""
    nearby = sorted(q.nearby)
    if len(nearby) > cap:
        raise CapExceeded(f"nearby set has {len(nearby)} nodes, cap is {cap}")
    best = 0.0
    for r in range(len(nearby) + 1):
        for L in itertools.combinations(nearby, r):
            best = max(best, max_influence_cond(joint, q.quilt, q.target, L).value)
            if math.isinf(best):
                return best
    return best


def _shift(q: QuiltPartition, offset: int) -> QuiltPartition:
    def mv(s):
        return frozenset(j - offset for j in s)

    return QuiltPartition(q.target - offset, mv(q.quilt), mv(q.nearby), frozenset())


def _small_chain_quilts(n: int, i: int, cap: int) -> list[QuiltPartition]:
    """The chain quilts of ``i`` with at most ``cap`` nearby nodes, in enumeration order."""
    out = []
    for a in range(1, min(i + 1, cap + 1) + 1):
        for b in range(1, min(n - i, cap + 1) + 1):
            if min(a - 1, i) + min(b - 1, n - i - 1) > cap:
                continue
            q = {j for j in (i - a, i + b) if 0 <= j < n}
            nb = set(range(max(i - a + 1, 0), i)) | set(range(i + 1, min(i + b, n)))
            out.append(QuiltPartition(i, frozenset(q), frozenset(nb), frozenset(range(n)) - q - nb - {i}))
    return out


def chain_coefficients(chain: MarkovChainSpec, nearby_cap: int = 4):
    """Blanket and quilt coefficients for every position of a chain.

    Each quantity only involves a contiguous window around the target, so it
    is computed on that window's exact joint.  Windows are cached by their
    starting marginal, which makes stationary chains cost one window per
    shape.  Quilts with more than ``nearby_cap`` nearby nodes are skipped.
    Returns ``(a, quilts)`` where ``quilts[i]`` lists ``(QuiltPartition, b_i)``.
    """
    n = chain.length
    marginals = [chain.initial]
    for _ in range(n - 1):
        m = marginals[-1] @ chain.transition
        marginals.append(m / m.sum())
    cache: dict = {}

    def window(lo, hi, kind, local):
        key = (kind, tuple(np.round(marginals[lo], 12)), hi - lo, local)
        if key not in cache:
            joint = build_joint_from_chain(MarkovChainSpec(chain.transition, marginals[lo], hi - lo, chain.labels))
            if kind == "a":
                cache[key] = blanket_coefficient(joint, DependencyGraph.chain(hi - lo), local)
            else:
                cache[key] = quilt_coefficient(joint, local)
        return cache[key]

    a, quilts = [], []
    for i in range(n):
        lo, hi = max(i - 1, 0), min(i + 2, n)
        a.append(window(lo, hi, "a", i - lo))
        found = []
        for q in _small_chain_quilts(n, i, nearby_cap):
            span = q.quilt | q.nearby | {i}
            lo, hi = min(span), max(span) + 1
            found.append((q, window(lo, hi, "b", _shift(q, lo))))
        quilts.append(found)
    return a, quilts
