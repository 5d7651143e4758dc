"""Randomized primitives: seeded noise, Laplace and exponential mechanisms,
statistical queries."""

from __future__ import annotations

import hashlib
import math
from typing import Any, Callable, Sequence

import numpy as np

from .errors import EmptyDataset, EmptyRange, InvalidParams


class NoiseSource:
    """Seeded, deterministic random stream with labelled substreams.

    ``split(label)`` derives an independent child whose draws depend only on
    the parent's seed path and the label, never on how much the parent has
    already been consumed.
    """

    def __init__(self, seed: int | None = 0, _path: tuple[int, ...] = ()):
        self.seed = seed
        self._path = _path
        entropy = seed if seed is not None else None
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy, spawn_key=_path)))

    def split(self, label: str) -> "NoiseSource":
        key = int.from_bytes(hashlib.sha256(label.encode()).digest()[:4], "little")
        return type(self)(self.seed, self._path + (key,))

    def uniform(self, size=None):
        """Uniform draws on the open interval (0, 1)."""
        u = self._gen.random(size)
        if size is None:
            while u == 0.0:
                u = self._gen.random()
            return u
        bad = u == 0.0
        while bad.any():
            u[bad] = self._gen.random(int(bad.sum()))
            bad = u == 0.0
        return u

    def laplace(self, scale: float, size=None):
        return sample_laplace(scale, self, size)

    @property
    def generator(self) -> np.random.Generator:
        """Underlying numpy generator, for bulk non-noise sampling (data generation)."""
        return self._gen


class ZeroNoise(NoiseSource):
    """Test hook: every Laplace draw is exactly 0."""

    def laplace(self, scale: float, size=None):
        if scale <= 0:
            raise InvalidParams("Laplace scale must be positive")
        return 0.0 if size is None else np.zeros(size)


def sample_laplace(scale: float, rng: NoiseSource, size=None):
    """Inverse-CDF Laplace draw: ``-scale * sign(u) * ln(1 - 2|u|)``, u ~ U(-1/2, 1/2)."""
    if not scale > 0:
        raise InvalidParams("Laplace scale must be positive")
    if isinstance(rng, ZeroNoise):
        return rng.laplace(scale, size)
    u = rng.uniform(size) - 0.5
    # uniform() excludes 0, so |u| < 1/2 and the log argument stays positive
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_mechanism(value, sensitivity: float, epsilon: float, rng: NoiseSource):
    """Add independent ``Lap(sensitivity / epsilon)`` noise to each coordinate."""
    if sensitivity < 0:
        raise InvalidParams("sensitivity must be nonnegative")
    if epsilon <= 0:
        raise InvalidParams("epsilon must be positive")
    value = np.asarray(value, dtype=float)
    if sensitivity == 0:
        return value if value.ndim else float(value)
    noise = sample_laplace(sensitivity / epsilon, rng, value.shape if value.ndim else None)
    out = value + noise
    return out if value.ndim else float(out)


def exponential_weights(utilities: Sequence[float], sensitivity: float, epsilon: float) -> np.ndarray:
    u = np.asarray(utilities, dtype=float)
    if u.size == 0:
        raise EmptyRange("exponential mechanism needs at least one candidate")
    if sensitivity <= 0:
        raise InvalidParams("utility sensitivity must be positive")
    if epsilon < 0:
        raise InvalidParams("epsilon must be nonnegative")
    logits = epsilon * u / (2.0 * sensitivity)
    w = np.exp(logits - logits.max())
    return w / w.sum()


def exponential_mechanism(candidates: Sequence[Any], utilities: Sequence[float], sensitivity: float,
                          epsilon: float, rng: NoiseSource):
    """Sample a candidate with probability proportional to ``exp(eps * u / (2 * sensitivity))``."""
    if len(candidates) == 0:
        raise EmptyRange("exponential mechanism needs at least one candidate")
    if len(candidates) != len(utilities):
        raise InvalidParams("one utility per candidate required")
    p = exponential_weights(utilities, sensitivity, epsilon)
    idx = int(np.searchsorted(np.cumsum(p), rng.uniform() * p.sum(), side="right"))
    return candidates[min(idx, len(candidates) - 1)]


class StatQuery:
    """Mean of a [0, 1]-valued per-record function.

    ``fn`` maps a whole dataset (anything indexable, typically a 2-D array of
    records) to an array of per-record scores.  Scores outside [0, 1] raise.
    """

    def __init__(self, fn: Callable[[Any], np.ndarray], name: str = ""):
        self.fn = fn
        self.name = name

    @classmethod
    def from_table(cls, scores: Sequence[float], name: str = "") -> "StatQuery":
        """Query over a finite universe ``0..K-1``; records are universe indices."""
        table = np.asarray(scores, dtype=float)
        _check_unit(table)
        return cls(lambda data: table[np.asarray(data, dtype=int)], name)

    def scores(self, data) -> np.ndarray:
        s = np.asarray(self.fn(data), dtype=float)
        _check_unit(s)
        return s

    def __call__(self, data) -> float:
        return stat_query_eval(self, data)

    def __repr__(self):
        return f"StatQuery({self.name!r})"


def _check_unit(s: np.ndarray):
    if s.size and (np.nanmin(s) < 0 or np.nanmax(s) > 1 or np.isnan(s).any()):
        raise InvalidParams("statistical query scores must lie in [0, 1]")


def stat_query_eval(q: StatQuery, data) -> float:
    if len(data) == 0:
        raise EmptyDataset("statistical query on an empty dataset")
    return float(np.mean(q.scores(data)))


def stat_query_sensitivity(n: int) -> float:
    if n < 1:
        raise InvalidParams("dataset size must be at least 1")
    return 1.0 / n
