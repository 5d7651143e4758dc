"""Reusable-holdout overfitting demonstration on synthetic correlated data.

Protocol per trial: compute each attribute's agreement rate with the label on
the training set and (directly, or through a :class:`HoldoutSession`) on the
holdout set; keep attributes whose two correlations exceed a cut with the
same sign; take the top ``k`` by pooled correlation and classify with the
sign of their sign-weighted sum.  Accuracy is then measured on training,
holdout (as reported to the analyst) and fresh data.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import InvalidConfig
from .graphical_model import MarkovChainSpec
from .calibration import stationary_distribution
from .holdout import HoldoutSession, calibrate_session_for_bdp
from .mechanisms import NoiseSource, StatQuery

CSV_HEADER = ["round", "k", "mode", "acc_train", "acc_holdout", "acc_fresh", "budget", "Z"]


@dataclass(frozen=True)
class SyntheticConfig:
    n_train: int = 2000
    n_holdout: int = 2000
    n_fresh: int = 2000
    d: int = 500
    n_signal: int = 20
    signal_strength: float = 0.0
    # loading on the shared latent factor; our default, not taken from any source
    attribute_correlation: float = 0.2
    row_transition: tuple | None = ((0.6, 0.4), (0.4, 0.6))
    seed: int = 0

    def __post_init__(self):
        for name in ("n_train", "n_holdout", "n_fresh", "d"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} must be at least 1")
        if not 0 <= self.n_signal <= self.d:
            raise InvalidConfig("n_signal must lie in 0..d")
        if not 0 <= self.signal_strength <= 1:
            raise InvalidConfig("signal_strength must lie in [0, 1]")
        if not 0 <= self.attribute_correlation <= 1:
            raise InvalidConfig("attribute_correlation must lie in [0, 1]")
        if self.row_transition is not None:
            self.row_chain(2)

    def row_chain(self, length: int) -> MarkovChainSpec | None:
        if self.row_transition is None:
            return None
        P = np.asarray(self.row_transition, dtype=float)
        try:
            pi = stationary_distribution(P)
            return MarkovChainSpec(P, pi / pi.sum(), length)
        except ValueError as exc:
            raise InvalidConfig(f"bad row_transition: {exc}") from exc

    def signal_vector(self) -> np.ndarray:
        s = np.zeros(self.d)
        s[: self.n_signal] = self.signal_strength
        return s


@dataclass(frozen=True)
class ExperimentConfig:
    data: SyntheticConfig = field(default_factory=SyntheticConfig)
    ks: tuple[int, ...] = (0, 10, 20, 30, 40, 50)
    trials: int = 20
    modes: tuple[str, ...] = ("naive", "bdp")
    epsilon_bdp: float = 50.0
    budget: int = 20
    threshold: float = 0.05
    chain_c: float = 0.1
    selection_cut: float = 0.5
    tau: float = 0.1
    overfit_c: float = 0.5

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidConfig("trials must be at least 1")
        if any(k < 0 or k > self.data.d for k in self.ks):
            raise InvalidConfig("every k must lie in 0..d")
        if set(self.modes) - {"naive", "bdp"}:
            raise InvalidConfig("modes must be drawn from naive, bdp")
        if self.epsilon_bdp <= 0 or self.budget < 1:
            raise InvalidConfig("epsilon_bdp and budget must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        data_known = {f.name for f in fields(SyntheticConfig)}
        unknown = set(doc) - known
        data = doc.pop("data", {}) or {}
        if unknown or set(data) - data_known:
            raise InvalidConfig(f"unknown config fields: {sorted(unknown | (set(data) - data_known))}")
        if data.get("row_transition") is not None:
            data["row_transition"] = tuple(tuple(r) for r in data["row_transition"])
        for key in ("ks", "modes"):
            if key in doc:
                doc[key] = tuple(doc[key])
        try:
            return cls(data=SyntheticConfig(**data), **doc)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc


@dataclass(frozen=True)
class LabeledData:
    X: np.ndarray  # (n, d) entries in {-1, +1}
    y: np.ndarray  # (n,) entries in {-1, +1}
    latent: np.ndarray

    def __len__(self):
        return len(self.y)


def _latent_path(cfg: SyntheticConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    chain = cfg.row_chain(n)
    if chain is None:
        return rng.integers(0, 2, size=n)
    u = rng.random(n)
    cum_t = np.cumsum(chain.transition, axis=1)
    states = np.empty(n, dtype=int)
    states[0] = min(int(np.searchsorted(np.cumsum(chain.initial), u[0], side="right")), chain.k - 1)
    for t in range(1, n):
        states[t] = min(int(np.searchsorted(cum_t[states[t - 1]], u[t], side="right")), chain.k - 1)
    return states


def _latent_levels(k: int) -> np.ndarray:
    return np.linspace(-1.0, 1.0, k) if k > 1 else np.zeros(1)


def _latent_marginal(cfg: SyntheticConfig) -> np.ndarray:
    chain = cfg.row_chain(2)
    return np.full(2, 0.5) if chain is None else chain.initial


def _sample(cfg: SyntheticConfig, n: int, rng: np.random.Generator) -> LabeledData:
    y = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
    latent = _latent_path(cfg, n, rng)
    k = 2 if cfg.row_transition is None else len(cfg.row_transition)
    level = _latent_levels(k)[latent]
    branch = rng.random((n, cfg.d))
    from_latent = branch < cfg.attribute_correlation
    signal = cfg.signal_vector()[None, :]
    from_label = ~from_latent & (branch < cfg.attribute_correlation + (1 - cfg.attribute_correlation) * signal)
    coin = rng.random((n, cfg.d))
    X = np.where(coin < 0.5, 1, -1).astype(np.int8)
    X = np.where(from_latent, np.where(coin < (1 + level[:, None]) / 2, 1, -1), X).astype(np.int8)
    X = np.where(from_label, y[:, None], X).astype(np.int8)
    return LabeledData(X, y, latent)


def gen_data(cfg: SyntheticConfig, rng: NoiseSource) -> tuple[LabeledData, LabeledData, LabeledData]:
    """Training, holdout and fresh splits; each split is its own row trajectory."""
    return tuple(_sample(cfg, n, rng.split(name).generator)
                 for name, n in (("train", cfg.n_train), ("holdout", cfg.n_holdout), ("fresh", cfg.n_fresh)))


def true_agreement(cfg: SyntheticConfig) -> np.ndarray:
    """Population probability that each attribute equals the label."""
    return 0.5 + (1 - cfg.attribute_correlation) * cfg.signal_vector() / 2


def true_accuracy(cfg: SyntheticConfig, columns, signs) -> float:
    """Population accuracy of ``sign(sum signs_j * x_j)`` (ties predict +1)."""
    columns = np.asarray(columns, dtype=int)
    signs = np.asarray(signs, dtype=float)
    if len(columns) == 0:
        return 0.5
    a = cfg.attribute_correlation
    s = cfg.signal_vector()[columns]
    k = 2 if cfg.row_transition is None else len(cfg.row_transition)
    levels, weights = _latent_levels(k), _latent_marginal(cfg)
    acc = 0.0
    for y in (-1, 1):
        for f, w in zip(levels, weights):
            p_plus = a * (1 + f) / 2 + (1 - a) * (s * (y == 1) + (1 - s) / 2)
            p_agree = np.where(signs > 0, p_plus, 1 - p_plus)
            dist = np.ones(1)
            for p in p_agree:
                dist = np.convolve(dist, [1 - p, p])
            score = 2 * np.arange(len(dist)) - len(columns)
            p_pos = dist[score >= 0].sum()
            acc += 0.5 * w * (p_pos if y == 1 else 1 - p_pos)
    return float(acc)


class SignThresholdClassifier(ClassifierMixin, BaseEstimator):
    """Linear threshold classifier on sign-weighted selected attributes.

    Predicts ``+1`` when ``sum_j weights_j * x_j >= 0`` over ``columns_``.
    ``fit`` stores the columns and weights it is given (selection happens
    outside, because it may consult a holdout).
    """

    def __init__(self, columns=(), weights=()):
        self.columns = columns
        self.weights = weights

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.columns_ = np.asarray(self.columns, dtype=int)
        self.weights_ = np.asarray(self.weights, dtype=float)
        if self.columns_.shape != self.weights_.shape:
            raise ValueError("one weight per selected column required")
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "columns_")
        X = check_array(X)
        return X[:, self.columns_] @ self.weights_ if len(self.columns_) else np.zeros(len(X))

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)


def _agreement_query(j: int) -> StatQuery:
    return StatQuery(lambda D: (1 + D.X[:, j].astype(float) * D.y) / 2, f"agree[{j}]")


def _accuracy_query(clf: SignThresholdClassifier) -> StatQuery:
    return StatQuery(lambda D: (clf.predict(D.X) == D.y).astype(float), "accuracy")


def _select(train_corr: np.ndarray, holdout_corr: np.ndarray, n: int, k: int, cut_multiple: float):
    """Top-``k`` attributes by pooled correlation among sign-consistent strong ones.

    An attribute is a candidate when both correlations reach
    ``cut_multiple / sqrt(n)`` with the same sign; candidates are ranked by
    ``|train + holdout|``.  Missing holdout values (bottom answers) disqualify.
    """
    cut = cut_multiple / math.sqrt(n)
    with np.errstate(invalid="ignore"):
        ok = (np.abs(train_corr) >= cut) & (np.abs(holdout_corr) >= cut)
    ok &= (np.sign(train_corr) == np.sign(holdout_corr)) & ~np.isnan(holdout_corr)
    cand = np.flatnonzero(ok)
    order = cand[np.argsort(-np.abs(train_corr[cand] + holdout_corr[cand]), kind="stable")]
    cols = order[:k]
    return cols, np.sign(train_corr[cols])


def overfit_counter(train_values, truth_values, c: float, tau: float) -> np.ndarray:
    """Running count of training answers off the population value by at least ``c * tau``."""
    bad = np.abs(np.asarray(train_values, dtype=float) - np.asarray(truth_values, dtype=float)) >= c * tau
    return np.cumsum(bad).astype(int)


@dataclass
class ReportRow:
    round: int
    k: int
    mode: str
    acc_train: float
    acc_holdout: float | None
    acc_fresh: float
    budget: int | None
    Z: int


def _run_protocol(cfg: ExperimentConfig, train, holdout, fresh, mode: str, session: HoldoutSession | None):
    d = cfg.data
    agree_q = [_agreement_query(j) for j in range(d.d)]
    train_agree = np.array([q(train) for q in agree_q])
    if mode == "naive":
        holdout_agree = np.array([q(holdout) for q in agree_q])
    else:
        holdout_agree = np.full(d.d, np.nan)
        for j, q in enumerate(agree_q):
            ans = session.answer(q)
            if ans.is_bottom:
                break
            holdout_agree[j] = ans.value
    train_corr, holdout_corr = 2 * train_agree - 1, 2 * holdout_agree - 1

    query_train = list(train_agree)
    query_truth = list(true_agreement(d))
    rows = []
    for r, k in enumerate(cfg.ks):
        cols, signs = _select(train_corr, holdout_corr, len(holdout), k, cfg.selection_cut)
        clf = SignThresholdClassifier(cols, signs).fit(train.X, train.y)
        acc_q = _accuracy_query(clf)
        acc_train = acc_q(train)
        if mode == "naive":
            acc_holdout = acc_q(holdout)
        else:
            ans = session.answer(acc_q)
            acc_holdout = None if ans.is_bottom else ans.value
        query_train.append(acc_train)
        query_truth.append(true_accuracy(d, cols, signs))
        z = overfit_counter(query_train, query_truth, cfg.overfit_c, cfg.tau)
        rows.append(ReportRow(r, k, mode, acc_train, acc_holdout, acc_q(fresh),
                              session.budget if session is not None else None, int(z[-1])))
    return rows


def run_trial(cfg: ExperimentConfig, trial: int, mode: str, calibration=None) -> list[ReportRow]:
    """One trial; the data depend only on ``(seed, trial)`` so modes share datasets."""
    root = NoiseSource(cfg.data.seed).split(f"trial-{trial}")
    train, holdout, fresh = gen_data(cfg.data, root.split("data"))
    session = None
    if mode == "bdp":
        if calibration is None:
            calibration = calibrate_experiment(cfg)
        session = HoldoutSession(holdout, train, calibration.sigma, cfg.budget, cfg.threshold,
                                 root.split("holdout-noise"))
    return _run_protocol(cfg, train, holdout, fresh, mode, session)


def calibrate_experiment(cfg: ExperimentConfig):
    return calibrate_session_for_bdp(cfg.epsilon_bdp, cfg.data.row_chain(cfg.data.n_holdout), cfg.budget,
                                     cfg.data.n_holdout, c=cfg.chain_c)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list[ReportRow]
    sigma: float | None = None
    epsilon_dp: float | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.round, r.k, r.mode, _fmt(r.acc_train), _fmt(r.acc_holdout), _fmt(r.acc_fresh),
                        "" if r.budget is None else r.budget, r.Z])
        return buf.getvalue()

    def gap(self, mode: str, k: int) -> dict:
        sel = [r for r in self.rows if r.mode == mode and r.k == k]
        hold = np.array([np.nan if r.acc_holdout is None else r.acc_holdout for r in sel])
        fresh = np.array([r.acc_fresh for r in sel])
        diff = hold - fresh
        ok = ~np.isnan(diff)
        return {
            "mode": mode, "k": k, "trials": len(sel), "bottom": int((~ok).sum()),
            "holdout_mean": _mean(hold[ok]), "fresh_mean": _mean(fresh),
            "gap_mean": _mean(diff[ok]), "gap_se": _se(diff[ok]),
        }

    def summary(self) -> dict:
        modes = [m for m in self.config.modes if any(r.mode == m for r in self.rows)]
        per_mode = {}
        for m in modes:
            sel = [r for r in self.rows if r.mode == m]
            per_mode[m] = {
                "acc_train": _stats([r.acc_train for r in sel]),
                "acc_holdout": _stats([r.acc_holdout for r in sel if r.acc_holdout is not None]),
                "acc_fresh": _stats([r.acc_fresh for r in sel]),
                "by_k": [self.gap(m, k) for k in self.config.ks],
            }
        return {"config": _config_dict(self.config), "sigma": self.sigma, "epsilon_dp": self.epsilon_dp,
                "modes": per_mode}


def _fmt(x):
    return "" if x is None else f"{x:.6f}"


def _mean(a):
    return float(np.mean(a)) if len(a) else None


def _se(a):
    return float(np.std(a, ddof=1) / math.sqrt(len(a))) if len(a) > 1 else None


def _stats(vals):
    a = np.asarray(vals, dtype=float)
    return {"mean": _mean(a), "se": _se(a)}


def _config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    calibration = calibrate_experiment(cfg) if "bdp" in cfg.modes else None
    rows = []
    for mode in cfg.modes:
        for t in range(cfg.trials):
            for row in run_trial(cfg, t, mode, calibration):
                row.round = t * len(cfg.ks) + row.round
                rows.append(row)
    return ExperimentReport(cfg, rows,
                            None if calibration is None else calibration.sigma,
                            None if calibration is None else calibration.epsilon_dp)


def write_report(report: ExperimentReport, csv_path, json_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        fh.write(report.to_csv())
    with open(json_path, "w") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
