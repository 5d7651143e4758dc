"""Budgeted reusable holdout for adaptive statistical queries.

Each query is answered from the training set unless the holdout disagrees by
more than a noisy threshold; then the budget drops by one, the threshold is
re-drawn, and a Laplace-noised holdout value is released.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import IO

from .calibration import (
    DEFAULT_CHAIN_C,
    CalibrationReport,
    calibrate_blanket,
    calibrate_quilts,
    chain_spectral_params,
    h_markov,
)
from .errors import InfeasibleCalibration, InvalidParams
from .graphical_model import MarkovChainSpec, find_quilts
from .influence import blanket_coefficient, chain_coefficients, quilt_coefficient
from .mechanisms import NoiseSource, StatQuery, stat_query_sensitivity


class Provenance(enum.Enum):
    BOTTOM = "bottom"
    TRAINING = "training"
    HOLDOUT = "holdout_noisy"


@dataclass(frozen=True)
class Answer:
    value: float | None
    provenance: Provenance

    @property
    def is_bottom(self) -> bool:
        return self.provenance is Provenance.BOTTOM


BOTTOM = Answer(None, Provenance.BOTTOM)


class HoldoutSession:
    """Single-owner, strictly sequential holdout session.

    Parameters
    ----------
    holdout, train : datasets understood by the queries that will be asked
    sigma : float
        Noise rate; the answer and comparison noises use ``4*sigma`` and ``2*sigma``.
    budget : int
        Number of over-threshold answers allowed before every answer is bottom.
    threshold : float
    rng : NoiseSource
        Use :class:`~bdpholdout.mechanisms.ZeroNoise` for deterministic branch tests.
    """

    def __init__(self, holdout, train, sigma: float, budget: int, threshold: float, rng: NoiseSource):
        if not sigma > 0:
            raise InvalidParams("sigma must be positive")
        if int(budget) != budget or budget < 0:
            raise InvalidParams("budget must be a nonnegative integer")
        if len(holdout) == 0 or len(train) == 0:
            raise InvalidParams("holdout and training sets must be nonempty")
        self.holdout = holdout
        self.train = train
        self.sigma = float(sigma)
        self.initial_budget = int(budget)
        self.budget = int(budget)
        self.threshold = float(threshold)
        self.rng = rng
        self.noisy_threshold = self._draw_threshold()
        self.transcript: list[dict] = []

    @property
    def sigma2(self) -> float:
        return 4.0 * self.sigma

    @property
    def sigma3(self) -> float:
        return 2.0 * self.sigma

    @property
    def n_answered(self) -> int:
        return len(self.transcript)

    def _draw_threshold(self) -> float:
        return self.threshold + float(self.rng.laplace(self.sigma))

    def answer(self, q: StatQuery) -> Answer:
        if self.budget < 1:
            ans = BOTTOM
        else:
            on_holdout = q(self.holdout)
            on_train = q(self.train)
            gamma = float(self.rng.laplace(self.sigma3))
            if abs(on_holdout - on_train) + gamma > self.noisy_threshold:
                self.budget -= 1
                self.noisy_threshold = self._draw_threshold()
                ans = Answer(on_holdout + float(self.rng.laplace(self.sigma2)), Provenance.HOLDOUT)
            else:
                ans = Answer(on_train, Provenance.TRAINING)
        self.transcript.append({
            "index": len(self.transcript),
            "provenance": ans.provenance.value,
            "value": ans.value,
            "budget_after": self.budget,
        })
        return ans

    def export_transcript(self, fh: IO[str]) -> None:
        """Write one JSON object per answered query."""
        for rec in self.transcript:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def new_session(holdout, train, sigma, budget, threshold, rng) -> HoldoutSession:
    return HoldoutSession(holdout, train, sigma, budget, threshold, rng)


def session_dp_epsilon(session: HoldoutSession) -> float:
    """DP level of the whole session: ``9 * B0 * Delta / (4 * sigma)`` with ``Delta = 1/|X|``."""
    delta = stat_query_sensitivity(len(session.holdout))
    return dp_epsilon(session.initial_budget, delta, session.sigma)


def dp_epsilon(budget: int, sensitivity: float, sigma: float) -> float:
    return budget * sensitivity * (1 / sigma + 1 / (4 * sigma) + 2 / (2 * sigma))


@dataclass(frozen=True)
class SessionCalibration:
    sigma: float
    epsilon_dp: float
    route: str
    report: CalibrationReport | None = None
    markov: object | None = None


def _chain_dp_level(epsilon_bdp, chain, route, quilt_cap):
    a, quilts = chain_coefficients(chain, quilt_cap)
    if route in ("auto", "blanket"):
        report = calibrate_blanket(a, epsilon_bdp)
        if route == "blanket" or report.feasible:
            return report
    cands = [[(b, len(q.nearby)) for q, b in qs] for qs in quilts]
    names = [[q.quilt for q, _ in qs] for qs in quilts]
    return calibrate_quilts(cands, epsilon_bdp, names)


def dp_level_for_model(epsilon_bdp, model, n_holdout, route, c, quilt_cap):
    """DP level certifying ``epsilon_bdp`` under ``model``.

    Returns ``(epsilon_dp or None, route used, CalibrationReport or None,
    HMarkovTerms or None)``; see :func:`calibrate_session_for_bdp` for models.
    """
    if model is None:
        return float(epsilon_bdp), "independent", None, None
    if isinstance(model, MarkovChainSpec):
        if route in ("auto", "markov"):
            g, rho = chain_spectral_params(model)
            terms = h_markov(epsilon_bdp, g, rho, c, n_holdout)
            return terms.h, "markov", None, terms
        report = _chain_dp_level(epsilon_bdp, model, route, quilt_cap)
        return report.epsilon_dp, report.route, report, None
    if route == "markov":
        raise InvalidParams("the markov route needs a MarkovChainSpec model")
    joint, graph = model
    if route in ("auto", "blanket"):
        a = [blanket_coefficient(joint, graph, i) for i in range(joint.n)]
        report = calibrate_blanket(a, epsilon_bdp)
        if route == "blanket" or report.feasible:
            return report.epsilon_dp, "blanket", report, None
    cands, names = [], []
    for i in range(joint.n):
        qs = [q for q in find_quilts(graph, i) if len(q.nearby) <= quilt_cap]
        cands.append([(quilt_coefficient(joint, q), len(q.nearby)) for q in qs])
        names.append([q.quilt for q in qs])
    report = calibrate_quilts(cands, epsilon_bdp, names)
    return report.epsilon_dp, "quilt", report, None


def calibrate_session_for_bdp(epsilon_bdp: float, model, budget: int, n_holdout: int,
                              route: str = "auto", c: float = DEFAULT_CHAIN_C,
                              quilt_cap: int = 4) -> SessionCalibration:
    """Noise rate making a ``budget``-query session ``epsilon_bdp``-Bayesian private.

    ``model`` describes the correlation among holdout rows: ``None`` for
    independent rows, a :class:`MarkovChainSpec` (spectral route), or a
    ``(JointTable, DependencyGraph)`` pair (blanket, then quilt route).
    """
    if route not in ("auto", "blanket", "quilt", "markov"):
        raise InvalidParams(f"unknown calibration route {route!r}")
    if epsilon_bdp <= 0 or budget < 1 or n_holdout < 1:
        raise InvalidParams("epsilon_bdp, budget and n_holdout must be positive")
    eps_dp, used, report, terms = dp_level_for_model(epsilon_bdp, model, n_holdout, route, c, quilt_cap)
    if eps_dp is None or not eps_dp > 0 or math.isinf(eps_dp):
        raise InfeasibleCalibration(f"no positive DP level certifies {epsilon_bdp}-BDP via the {used} route")
    sigma = 9.0 * budget * stat_query_sensitivity(n_holdout) / (4.0 * eps_dp)
    return SessionCalibration(sigma, eps_dp, used, report, terms)
