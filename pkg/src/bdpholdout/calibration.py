"""DP <-> Bayesian-DP conversions and brute-force leakage checks.

The conversion helpers return ``None`` when no positive DP level achieves the
requested BDP level.  The leakage functions enumerate every database,
adversary and output atom, so they are only meant for desk-sized models.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    CapExceeded,
    ChainTooShort,
    EmptyCandidateSet,
    InvalidConstant,
    InvalidModel,
    InvalidParams,
    NotErgodic,
    NotReversible,
)
from .graphical_model import PROB_TOL, JointTable, MarkovChainSpec

DEFAULT_LEAKAGE_CAP = 2**20
DEFAULT_CHAIN_C = 0.1
BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class NodeDetail:
    node: int
    coefficient: float
    nearby_size: int = 0
    quilt: tuple[int, ...] | None = None


@dataclass(frozen=True)
class CalibrationReport:
    epsilon_bdp: float
    epsilon_dp: float | None
    route: str
    nodes: tuple[NodeDetail, ...] = ()
    witness_node: int | None = None

    @property
    def feasible(self) -> bool:
        return self.epsilon_dp is not None


@dataclass(frozen=True)
class HMarkovTerms:
    epsilon: float
    g: float
    rho: float
    c: float
    d: int
    s: int
    h: float


@dataclass(frozen=True)
class DiscreteMechanism:
    """Output distribution over ``outputs`` for every database of ``domains``.

    ``probs`` has shape ``(k_1, ..., k_n, len(outputs))``.
    """

    domains: tuple[tuple[str, ...], ...]
    outputs: tuple[str, ...]
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        domains = tuple(tuple(map(str, d)) for d in self.domains)
        outputs = tuple(map(str, self.outputs))
        probs = np.array(self.probs, dtype=float)
        shape = tuple(len(d) for d in domains) + (len(outputs),)
        if not outputs:
            raise InvalidModel("mechanism needs at least one output")
        if probs.size != int(np.prod(shape)):
            raise InvalidModel(f"mechanism table has {probs.size} entries, expected shape {shape}")
        probs = probs.reshape(shape)
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise InvalidModel("mechanism probabilities must be finite and nonnegative")
        if np.any(np.abs(probs.sum(axis=-1) - 1.0) > PROB_TOL):
            raise InvalidModel("every mechanism row must sum to 1")
        probs.flags.writeable = False
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_rows(cls, domains, outputs, rows: Mapping[str, Sequence[float]]) -> "DiscreteMechanism":
        """Build from ``{"a,b,c": [p_y...]}`` keyed by comma-joined state labels."""
        domains = [list(map(str, d)) for d in domains]
        shape = tuple(len(d) for d in domains)
        probs = np.full(shape + (len(outputs),), np.nan)
        for key, row in rows.items():
            labels = key.split(",")
            if len(labels) != len(domains):
                raise InvalidModel(f"row key {key!r} does not name one state per node")
            try:
                idx = tuple(d.index(lab) for d, lab in zip(domains, labels))
            except ValueError:
                raise InvalidModel(f"row key {key!r} uses an unknown state label") from None
            if len(row) != len(outputs):
                raise InvalidModel(f"row {key!r} has {len(row)} probabilities for {len(outputs)} outputs")
            probs[idx] = row
        if np.isnan(probs).any():
            raise InvalidModel("mechanism document is missing database rows")
        return cls(tuple(map(tuple, domains)), tuple(outputs), probs)

    @property
    def n(self) -> int:
        return len(self.domains)


def dp_for_bdp_blanket(a: Sequence[float], epsilon_bdp: float) -> float | None:
    """Largest DP level certified by the blanket rule ``min_i (eps - 4 a_i)``."""
    if epsilon_bdp <= 0:
        raise InvalidParams("epsilon_bdp must be positive")
    if any(x < 0 for x in a):
        raise InvalidParams("blanket coefficients must be nonnegative")
    if not len(a):
        return float(epsilon_bdp)
    if any(math.isinf(x) for x in a):
        return None
    out = min(epsilon_bdp - 4.0 * x for x in a)
    return out if out > 0 else None


def _quilt_level(b: float, nearby_size: int, epsilon_bdp: float) -> float:
    if math.isinf(b):
        return -math.inf
    return (epsilon_bdp - 4.0 * b) / (nearby_size + 1)


def dp_for_bdp_quilts(candidates: Sequence[Sequence[tuple[float, int]]], epsilon_bdp: float) -> float | None:
    """``min_i max_quilt (eps - 4 b_i) / (|N_i| + 1)``.

    ``candidates[i]`` lists ``(b_i, |N_i|)`` for each quilt considered for node i.
    """
    return calibrate_quilts(candidates, epsilon_bdp).epsilon_dp


def calibrate_quilts(candidates, epsilon_bdp: float, quilts=None) -> CalibrationReport:
    """Quilt-based conversion with per-node detail; ``quilts`` optionally names them."""
    if epsilon_bdp <= 0:
        raise InvalidParams("epsilon_bdp must be positive")
    details = []
    for i, cands in enumerate(candidates):
        if not cands:
            raise EmptyCandidateSet(f"node {i} has no quilt candidates")
        levels = [_quilt_level(b, m, epsilon_bdp) for b, m in cands]
        j = int(np.argmax(levels))
        q = tuple(sorted(quilts[i][j])) if quilts is not None else None
        details.append((levels[j], NodeDetail(i, float(cands[j][0]), int(cands[j][1]), q)))
    if not details:
        return CalibrationReport(epsilon_bdp, float(epsilon_bdp), "quilt")
    worst = min(range(len(details)), key=lambda k: details[k][0])
    value = details[worst][0]
    return CalibrationReport(
        epsilon_bdp,
        value if value > 0 else None,
        "quilt",
        tuple(d for _, d in details),
        worst,
    )


def calibrate_blanket(a: Sequence[float], epsilon_bdp: float) -> CalibrationReport:
    value = dp_for_bdp_blanket(a, epsilon_bdp)
    worst = int(np.argmax(a)) if len(a) else None
    return CalibrationReport(
        epsilon_bdp, value, "blanket", tuple(NodeDetail(i, float(x)) for i, x in enumerate(a)), worst
    )


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Left eigenvector of ``P`` for eigenvalue 1, normalized to sum 1."""
    w, v = np.linalg.eig(P.T)
    ones = np.flatnonzero(np.abs(w - 1.0) < 1e-9)
    if len(ones) != 1:
        raise NotErgodic(f"eigenvalue 1 has multiplicity {len(ones)}; chain is reducible")
    pi = np.real(v[:, ones[0]])
    pi = pi / pi.sum()
    return pi


def chain_spectral_params(chain: MarkovChainSpec | np.ndarray) -> tuple[float, float]:
    """Spectral gap ``g`` and least stationary probability ``rho``.

    Raises unless the chain is irreducible, aperiodic and reversible.
    """
    P = chain.transition if isinstance(chain, MarkovChainSpec) else np.asarray(chain, dtype=float)
    pi = stationary_distribution(P)
    if np.any(pi <= 0):
        raise NotErgodic("stationary distribution is not strictly positive")
    flow = pi[:, None] * P
    if np.max(np.abs(flow - flow.T)) > BALANCE_TOL:
        raise NotReversible("detailed balance fails")
    # reversible => real spectrum
    lam = np.sort(np.real(np.linalg.eigvals(P)))[::-1]
    second = np.max(np.abs(lam[1:])) if len(lam) > 1 else 0.0
    g = 1.0 - float(second)
    if g <= 1e-12:
        raise NotErgodic("spectral gap is zero; chain is periodic")
    return min(g, 1.0), float(pi.min())


def h_markov(epsilon: float, g: float, rho: float, c: float = DEFAULT_CHAIN_C, n: int | None = None) -> HMarkovTerms:
    """DP level that certifies ``epsilon``-BDP on an ergodic reversible chain.

    ``n`` is the chain length; pass ``None`` to skip the ``n >= 2d`` check.
    """
    if not 0 < c < 1 / 6:
        raise InvalidConstant(f"c must lie in (0, 1/6), got {c}")
    if epsilon <= 0:
        raise InvalidParams("epsilon must be positive")
    if not 0 < g <= 1 or not 0 < rho <= 1:
        raise InvalidParams("g and rho must lie in (0, 1]")
    ec = math.expm1(c * epsilon)
    es = math.expm1(epsilon / 6)
    d = math.ceil(math.log((ec + 2) / (rho * ec)) / g)
    s = math.floor(math.log((es + 2) / (rho * es)) / g)
    if n is not None and n < 2 * d:
        raise ChainTooShort(f"chain length {n} < 2d = {2 * d}")
    h = min((1 - 6 * c) * epsilon / (2 * d - 1), (1 / 3 - 2 * c) * epsilon / (d + s))
    return HMarkovTerms(epsilon, g, rho, c, d, s, h)


def _pair_log_ratios(a: np.ndarray, axis: int, valid: np.ndarray | None = None) -> float:
    """Max ``ln a[.., x, ..] / a[.., x', ..]`` over ``x != x'`` along ``axis``.

    ``valid`` (same shape as ``a`` without the last axis) masks rows whose
    conditioning event has probability zero.
    """
    a = np.moveaxis(a, axis, 0)
    k = a.shape[0]
    best = 0.0
    for x, xp in itertools.permutations(range(k), 2):
        num, den = a[x], a[xp]
        mask = np.ones(num.shape, dtype=bool)
        if valid is not None:
            v = np.moveaxis(valid, axis, 0)
            mask &= (v[x] & v[xp])[..., None]
        if np.any(mask & (num > 0) & (den == 0)):
            return math.inf
        pos = mask & (num > 0)
        if np.any(pos):
            best = max(best, float(np.max(np.log(num[pos]) - np.log(den[pos]))))
    return best


def dp_leakage_bruteforce(mech: DiscreteMechanism, cap: int = DEFAULT_LEAKAGE_CAP) -> float:
    """Sup over neighbouring databases and output atoms of the log-probability ratio."""
    if mech.probs.size > cap:
        raise CapExceeded(f"mechanism table has {mech.probs.size} entries, cap is {cap}")
    return max((_pair_log_ratios(mech.probs, i) for i in range(mech.n)), default=0.0)


def bdpl_bruteforce(mech: DiscreteMechanism, joint: JointTable, cap: int = DEFAULT_LEAKAGE_CAP) -> float:
    """Bayesian leakage: sup over targets, known sets, values and atoms.

    Unknown tuples are marginalized under ``joint``.  A ratio of set
    probabilities never exceeds the largest atom ratio, so atoms suffice.
    """
    if mech.domains != joint.domains:
        raise InvalidModel("mechanism and joint must share node domains")
    n = joint.n
    if mech.probs.size * n * 2 ** max(n - 1, 0) > cap:
        raise CapExceeded("leakage enumeration exceeds cap")
    weighted = joint.probs[..., None] * mech.probs
    best = 0.0
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for r in range(len(others) + 1):
            for S in itertools.combinations(others, r):
                keep = sorted(S + (i,))
                drop = tuple(j for j in range(n) if j not in keep)
                num = weighted.sum(axis=drop)
                den = joint.probs.sum(axis=drop)
                valid = den > 0
                cond = np.where(valid[..., None], num / np.where(valid, den, 1.0)[..., None], 0.0)
                best = max(best, _pair_log_ratios(cond, keep.index(i), valid))
                if math.isinf(best):
                    return best
    return best


def clip_to_dp_level(mech: DiscreteMechanism, epsilon: float, tol: float = 1e-12) -> DiscreteMechanism:
    """Mix ``mech`` with the uniform output law until its DP leakage is at most ``epsilon``.

    Each pairwise ratio moves monotonically toward 1 as the uniform weight
    grows, so bisection on the weight finds the smallest admissible mix.
    """
    if epsilon < 0:
        raise InvalidParams("epsilon must be nonnegative")
    uniform = np.full_like(mech.probs, 1.0 / len(mech.outputs))

    def mix(lam):
        return DiscreteMechanism(mech.domains, mech.outputs, (1 - lam) * mech.probs + lam * uniform)

    if dp_leakage_bruteforce(mech) <= epsilon:
        return mech
    if epsilon == 0:
        return mix(1.0)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if dp_leakage_bruteforce(mix(mid)) <= epsilon:
            hi = mid
        else:
            lo = mid
    return mix(hi)
