"""Closed-form sample-complexity and max-information bounds, plus an exact
estimator of beta-approximate max-information for small discrete joints.

Sample sizes are ceilinged to integers.  Calculators return ``None`` in the
infeasible regime (a coefficient so large that no sample size helps).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .calibration import DEFAULT_CHAIN_C, h_markov
from .errors import CapExceeded, EmptyCandidateSet, InvalidConstant, InvalidParams, NoFeasibleSubset

LOG2E = math.log2(math.e)
BRUTE_FORCE_CAP = 20


@dataclass(frozen=True)
class BoundReport:
    """JSON-ready result of a sample-complexity calculation."""

    inputs: dict
    value: int | None
    witness_node: int | None = None
    witness_quilt: int | None = None

    @property
    def feasible(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["feasible"] = self.feasible
        return d


def _check_common(budget, sigma, tau, beta):
    if not 0 < tau <= 1:
        raise InvalidParams("tau must lie in (0, 1]")
    if not 0 < beta < 1:
        raise InvalidParams("beta must lie in (0, 1)")
    if sigma <= 0 or budget < 0:
        raise InvalidParams("sigma must be positive and budget nonnegative")


def _tail_term(tau: float, beta: float) -> float:
    return 9.0 * math.log(4.0 / beta) / tau**2


def n_star_report(budget: int, sigma: float, tau: float, beta: float, blanket: Sequence[float]) -> BoundReport:
    _check_common(budget, sigma, tau, beta)
    inputs = dict(B=budget, sigma=sigma, tau=tau, beta=beta, a=list(map(float, blanket)))
    worst, worst_node = 0.0, None
    for i, a in enumerate(blanket):
        margin = tau / 3 - 4 * a
        if margin <= 0:
            return BoundReport(inputs, None, i)
        term = 9.0 * budget / (4.0 * sigma * margin)
        if worst_node is None or term > worst:
            worst, worst_node = term, i
    return BoundReport(inputs, math.ceil(max(_tail_term(tau, beta), worst)), worst_node)


def n_star(budget: int, sigma: float, tau: float, beta: float, blanket: Sequence[float]) -> int | None:
    """Holdout size sufficing for per-query accuracy ``tau`` w.p. ``1 - beta``, blanket form."""
    return n_star_report(budget, sigma, tau, beta, blanket).value


def n_pound_report(budget: int, sigma: float, tau: float, beta: float,
                   quilts: Sequence[Sequence[tuple[float, int]]]) -> BoundReport:
    _check_common(budget, sigma, tau, beta)
    inputs = dict(B=budget, sigma=sigma, tau=tau, beta=beta,
                  quilts=[[[float(b), int(m)] for b, m in c] for c in quilts])
    worst, worst_node, worst_quilt = 0.0, None, None
    for i, cands in enumerate(quilts):
        if not cands:
            raise EmptyCandidateSet(f"node {i} has no quilt candidates")
        best, best_j = math.inf, None
        for j, (b, m) in enumerate(cands):
            margin = tau / 3 - 4 * b
            if margin <= 0:
                continue
            term = 9.0 * budget * (m + 1) / (4.0 * sigma * margin)
            if term < best:
                best, best_j = term, j
        if best_j is None:
            return BoundReport(inputs, None, i)
        if worst_node is None or best > worst:
            worst, worst_node, worst_quilt = best, i, best_j
    return BoundReport(inputs, math.ceil(max(_tail_term(tau, beta), worst)), worst_node, worst_quilt)


def n_pound(budget: int, sigma: float, tau: float, beta: float,
            quilts: Sequence[Sequence[tuple[float, int]]]) -> int | None:
    """Quilt form of :func:`n_star`; ``quilts[i]`` lists ``(b_i, |N_i|)`` candidates."""
    return n_pound_report(budget, sigma, tau, beta, quilts).value


def thm2_params(tau: float, m: int, beta: float, c: float) -> tuple[float, float]:
    """Noise rate and threshold for an ``m``-query session: ``(sigma, T)``."""
    if not 0 < c < 1:
        raise InvalidConstant(f"c must lie in (0, 1), got {c}")
    if tau <= 0 or m < 1 or not 0 < beta < 1:
        raise InvalidParams("need tau > 0, m >= 1 and beta in (0, 1)")
    sigma = (1 - c) * tau / (12 * math.log(4 * m / beta))
    return sigma, (1 + c) * tau / 2


def thm2_sample_bound_report(budget: int, tau: float, m: int, beta: float, c: float,
                             quilts: Sequence[Sequence[tuple[float, int]]]) -> BoundReport:
    if budget > m:
        raise InvalidParams("budget may not exceed the query count m")
    sigma, _ = thm2_params(tau, m, beta, c)
    rep = n_pound_report(budget, sigma, (1 - c) * tau / 4, beta / (2 * m), quilts)
    inputs = dict(B=budget, tau=tau, m=m, beta=beta, c=c, quilts=rep.inputs["quilts"])
    return BoundReport(inputs, rep.value, rep.witness_node, rep.witness_quilt)


def thm2_sample_bound(budget: int, tau: float, m: int, beta: float, c: float,
                      quilts: Sequence[Sequence[tuple[float, int]]]) -> int | None:
    """Holdout size for the whole-session guarantee with the session parameters of :func:`thm2_params`."""
    return thm2_sample_bound_report(budget, tau, m, beta, c, quilts).value


def chain_sample_bound(budget: int, tau: float, m: int, beta: float, c: float,
                       g: float, rho: float, c_chain: float = DEFAULT_CHAIN_C) -> dict:
    """Session sample size for an ergodic reversible chain, via the spectral DP level.

    This is the bound whose growth is ``O(B ln(1/tau) / tau^2 * ln(m/beta))``;
    the constants come from substituting ``h(tau'/3, g, rho)`` for the quilt
    term and are reported for orientation, not as a certified minimum.
    """
    sigma, _ = thm2_params(tau, m, beta, c)
    tau_p, beta_p = (1 - c) * tau / 4, beta / (2 * m)
    terms = h_markov(tau_p / 3, g, rho, c_chain)
    value = math.ceil(max(_tail_term(tau_p, beta_p), 9.0 * budget / (4.0 * sigma * terms.h)))
    return {"asymptotic": True, "value": value, "h": terms.h, "d": terms.d, "s": terms.s,
            "order_term": budget * math.log(1 / tau) / tau**2 * math.log(m / beta)}


def maxinfo_bound_bdp(epsilon: float, n: int, beta: float) -> float:
    """Max-information (bits) of an ``epsilon``-BDP algorithm on ``n`` tuples."""
    if epsilon < 0 or n < 1 or not 0 < beta < 1:
        raise InvalidParams("need epsilon >= 0, n >= 1, beta in (0, 1)")
    return (2 * epsilon**2 * n + epsilon * math.sqrt(2 * n * math.log(2 / beta))) * LOG2E


def maxinfo_bound_simple(epsilon: float, n: int) -> float:
    if epsilon < 0:
        raise InvalidParams("epsilon must be nonnegative")
    return epsilon * n * LOG2E


def generalization_tail(tau: float, n: int, sensitivity: float) -> float:
    """``min(1, 4 exp(-tau^2 / (9 n Delta^2)))``: tail bound valid when ``eps <= tau / (3 n Delta)``."""
    if tau <= 0 or n <= 0 or sensitivity <= 0:
        raise InvalidParams("tau, n and sensitivity must be positive")
    return min(1.0, 4.0 * math.exp(-(tau**2) / (9.0 * n * sensitivity**2)))


def _ratio(p_sum: float, q_sum: float, beta: float) -> float:
    if q_sum == 0:
        return math.inf
    return (p_sum - beta) / q_sum


def _split(pxy) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pxy, dtype=float)
    if p.ndim != 2:
        raise InvalidParams("expected a 2-D table P[x, y]")
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise InvalidParams("P[x, y] must be a probability table")
    q = np.outer(p.sum(axis=1), p.sum(axis=0))
    keep = (p > 0) | (q > 0)
    return p[keep], q[keep]


def empirical_max_info(pxy, beta: float, method: str = "sweep") -> float:
    """Exact beta-approximate max-information (bits) of a joint table ``P[x, y]``.

    The optimal event is a superlevel set of ``p / q`` (``q`` the product of
    marginals), so the default sweep checks only prefixes of the outcomes
    sorted by that ratio.  ``method="bruteforce"`` enumerates all subsets.
    Set sums use ``math.fsum`` so both methods agree bit for bit.
    """
    if not 0 <= beta < 1:
        raise InvalidParams("beta must lie in [0, 1)")
    p, q = _split(pxy)
    if method == "bruteforce":
        best = _bruteforce(p, q, beta)
    elif method == "sweep":
        best = _sweep(p, q, beta)
    else:
        raise InvalidParams(f"unknown method {method!r}")
    if best is None:
        raise NoFeasibleSubset(f"no event has probability above beta={beta}")
    return math.inf if math.isinf(best) else math.log2(best)


def _bruteforce(p, q, beta):
    K = len(p)
    if K > BRUTE_FORCE_CAP:
        raise CapExceeded(f"{K} outcomes exceeds brute-force cap {BRUTE_FORCE_CAP}")
    best = None
    idx = np.arange(K)
    for mask in range(1, 2**K):
        sel = idx[(mask >> idx) & 1 == 1]
        ps = math.fsum(p[sel])
        if ps <= beta:
            continue
        r = _ratio(ps, math.fsum(q[sel]), beta)
        if best is None or r > best:
            best = r
    return best


def _sweep(p, q, beta):
    with np.errstate(divide="ignore"):
        ratio = np.where(q > 0, p / np.where(q > 0, q, 1), np.inf)
    order = np.argsort(-ratio, kind="stable")
    cp, cq = np.cumsum(p[order]), np.cumsum(q[order])
    ok = cp > beta
    if not ok.any():
        # cumulative rounding may hide a feasible full set
        if math.fsum(p) <= beta:
            return None
        ok[-1] = True
    with np.errstate(divide="ignore", invalid="ignore"):
        approx = np.where(cq > 0, (cp - beta) / np.where(cq > 0, cq, 1), np.inf)
    approx = np.where(ok, approx, -np.inf)
    top = float(approx.max())
    if math.isinf(top):
        return math.inf
    # re-score near-optimal prefixes exactly; cumsum rounding can reorder ties
    best = None
    for k in np.flatnonzero(approx >= top - 1e-9 * max(1.0, abs(top))):
        sel = order[: k + 1]
        ps = math.fsum(p[sel])
        if ps <= beta:
            continue
        r = _ratio(ps, math.fsum(q[sel]), beta)
        if best is None or r > best:
            best = r
    return best
