import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CHAIN_P, CHAIN_PI
from bdpholdout.errors import ChainTooShort, InfeasibleCalibration, InvalidParams
from bdpholdout.graphical_model import DependencyGraph, JointTable, MarkovChainSpec
from bdpholdout.holdout import (
    BOTTOM,
    HoldoutSession,
    Provenance,
    calibrate_session_for_bdp,
    dp_epsilon,
    new_session,
    session_dp_epsilon,
)
from bdpholdout.mechanisms import NoiseSource, StatQuery, ZeroNoise


class ScriptedNoise(NoiseSource):
    """Returns queued unit draws multiplied by the requested scale, and logs scales."""

    def __init__(self, draws):
        super().__init__(0)
        self.draws = list(draws)
        self.scales = []

    def laplace(self, scale, size=None):
        self.scales.append(scale)
        return self.draws.pop(0) * scale


def reference_session(hold_vals, train_vals, sigma, budget, T, draws):
    """Direct transcription of the algorithm's control flow over precomputed values."""
    draws = list(draws)
    That = T + draws.pop(0) * sigma
    out = []
    for qx, qd in zip(hold_vals, train_vals):
        if budget < 1:
            out.append((None, "bottom", budget))
            continue
        gamma = draws.pop(0) * 2 * sigma
        if abs(qx - qd) + gamma > That:
            budget -= 1
            That = T + draws.pop(0) * sigma
            out.append((qx + draws.pop(0) * 4 * sigma, "holdout_noisy", budget))
        else:
            out.append((qd, "training", budget))
    return out


def _query(value_on_holdout, value_on_train):
    # universe {0, 1}: holdout rows are all 1, training rows all 0
    return StatQuery.from_table([value_on_train, value_on_holdout])


HOLD = np.ones(10, dtype=int)
TRAIN = np.zeros(10, dtype=int)


class TestBranches:
    def test_training_branch_zero_noise(self):
        s = HoldoutSession(HOLD, TRAIN, 0.1, 3, 0.2, ZeroNoise())
        a = s.answer(_query(0.55, 0.5))
        assert a.provenance is Provenance.TRAINING and a.value == 0.5 and s.budget == 3

    def test_holdout_branch_zero_noise(self):
        s = HoldoutSession(HOLD, TRAIN, 0.1, 3, 0.2, ZeroNoise())
        a = s.answer(_query(0.9, 0.5))
        assert a.provenance is Provenance.HOLDOUT and a.value == 0.9 and s.budget == 2

    def test_boundary_is_training(self):
        # strict inequality: a gap exactly at the threshold stays on training
        s = HoldoutSession(HOLD, TRAIN, 0.1, 3, 0.25, ZeroNoise())
        assert s.answer(_query(0.75, 0.5)).provenance is Provenance.TRAINING

    def test_bottom_after_budget(self):
        s = HoldoutSession(HOLD, TRAIN, 0.1, 2, 0.1, ZeroNoise())
        answers = [s.answer(_query(1.0, 0.0)) for _ in range(4)]
        assert [a.provenance for a in answers] == [Provenance.HOLDOUT] * 2 + [Provenance.BOTTOM] * 2
        assert answers[-1] == BOTTOM and answers[-1].is_bottom
        assert [r["budget_after"] for r in s.transcript] == [1, 0, 0, 0]

    def test_zero_budget(self):
        s = HoldoutSession(HOLD, TRAIN, 0.1, 0, 0.1, ZeroNoise())
        assert s.answer(_query(0.3, 0.3)).is_bottom

    def test_noise_scales(self):
        noise = ScriptedNoise([0.0, 0.0, 0.0, 0.0])
        s = HoldoutSession(HOLD, TRAIN, 0.1, 3, 0.1, noise)
        s.answer(_query(1.0, 0.0))
        assert noise.scales == pytest.approx([0.1, 0.2, 0.1, 0.4])

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=12),
           st.integers(0, 4), st.floats(0.0, 0.5), st.integers(0, 2**32 - 1))
    def test_matches_reference(self, values, budget, T, seed):
        draws = np.random.default_rng(seed).laplace(size=3 * len(values) + 1).tolist()
        sigma = 0.05
        s = HoldoutSession(HOLD, TRAIN, sigma, budget, T, ScriptedNoise(draws))
        got = [s.answer(_query(qx, qd)) for qx, qd in values]
        want = reference_session([v[0] for v in values], [v[1] for v in values], sigma, budget, T, draws)
        for a, (val, prov, b), rec in zip(got, want, s.transcript):
            assert a.provenance.value == prov and rec["budget_after"] == b
            assert (a.value is None and val is None) or a.value == pytest.approx(val, abs=1e-15)


class TestSession:
    def test_validation(self):
        with pytest.raises(InvalidParams):
            HoldoutSession(HOLD, TRAIN, 0.0, 1, 0.1, ZeroNoise())
        with pytest.raises(InvalidParams):
            HoldoutSession(HOLD, TRAIN, 0.1, -1, 0.1, ZeroNoise())
        with pytest.raises(InvalidParams):
            HoldoutSession([], TRAIN, 0.1, 1, 0.1, ZeroNoise())

    def test_transcript_export(self):
        s = new_session(HOLD, TRAIN, 0.1, 1, 0.1, ZeroNoise())
        s.answer(_query(1.0, 0.0))
        s.answer(_query(1.0, 0.0))
        buf = io.StringIO()
        s.export_transcript(buf)
        recs = [json.loads(line) for line in buf.getvalue().splitlines()]
        assert recs == [
            {"index": 0, "provenance": "holdout_noisy", "value": 1.0, "budget_after": 0},
            {"index": 1, "provenance": "bottom", "value": None, "budget_after": 0},
        ]
        assert s.n_answered == 2

    def test_seeded_determinism(self):
        def run():
            s = HoldoutSession(HOLD, TRAIN, 0.05, 5, 0.1, NoiseSource(4))
            return [s.answer(_query(v, 0.5)).value for v in np.linspace(0, 1, 15)]

        assert run() == run()

    def test_dp_epsilon_pin(self):
        s = HoldoutSession(np.zeros(100, dtype=int), TRAIN, 0.05, 5, 0.1, ZeroNoise())
        assert session_dp_epsilon(s) == pytest.approx(2.25, abs=1e-12)
        assert dp_epsilon(5, 0.01, 0.05) == pytest.approx(9 * 5 * 0.01 / (4 * 0.05))


class TestCalibrateSession:
    def test_independent(self):
        cal = calibrate_session_for_bdp(1.0, None, 5, 100)
        assert cal.route == "independent" and cal.epsilon_dp == 1.0
        assert cal.sigma == pytest.approx(9 * 5 * 0.01 / 4)

    def test_sigma_round_trip(self):
        cal = calibrate_session_for_bdp(0.7, None, 3, 200)
        assert dp_epsilon(3, 1 / 200, cal.sigma) == pytest.approx(0.7)

    def test_markov(self):
        chain = MarkovChainSpec(CHAIN_P, CHAIN_PI, 100)
        cal = calibrate_session_for_bdp(1.0, chain, 1, 100)
        assert cal.route == "markov" and cal.markov.d == 14
        assert cal.epsilon_dp == pytest.approx(min(0.4 / 27, (2 / 15) / 25))

    def test_markov_too_short(self):
        with pytest.raises(ChainTooShort):
            calibrate_session_for_bdp(1.0, MarkovChainSpec(CHAIN_P, CHAIN_PI, 10), 1, 10)

    def test_blanket_on_weak_joint(self):
        p = np.array([[0.26, 0.24], [0.24, 0.26]])
        cal = calibrate_session_for_bdp(1.0, (JointTable.from_array(p), DependencyGraph(2, [(0, 1)])), 1, 2)
        a = math.log((0.26 / 0.5) / (0.24 / 0.5))
        assert cal.route == "blanket" and cal.epsilon_dp == pytest.approx(1.0 - 4 * a)

    def test_quilt_fallback(self):
        p = np.array([[0.45, 0.05], [0.05, 0.45]])
        cal = calibrate_session_for_bdp(1.0, (JointTable.from_array(p), DependencyGraph(2, [(0, 1)])), 1, 2)
        # blanket infeasible; the empty quilt with everything nearby gives eps / n
        assert cal.route == "quilt" and cal.epsilon_dp == pytest.approx(0.5)

    def test_chain_blanket_route_long(self):
        chain = MarkovChainSpec([[0.55, 0.45], [0.45, 0.55]], [0.5, 0.5], 300)
        cal = calibrate_session_for_bdp(2.0, chain, 1, 300, route="blanket")
        a = math.log((0.55 / 0.45) ** 2)
        assert cal.route == "blanket" and cal.epsilon_dp == pytest.approx(2.0 - 4 * a, abs=1e-9)

    def test_infeasible(self):
        p = np.array([[0.5, 0.0], [0.0, 0.5]])
        model = (JointTable.from_array(p), DependencyGraph(2, [(0, 1)]))
        with pytest.raises(InfeasibleCalibration):
            calibrate_session_for_bdp(1.0, model, 1, 2, route="blanket")

    def test_bad_route(self):
        with pytest.raises(InvalidParams):
            calibrate_session_for_bdp(1.0, None, 1, 10, route="nope")
        model = (JointTable.from_array([[0.25, 0.25], [0.25, 0.25]]), DependencyGraph(2, [(0, 1)]))
        with pytest.raises(InvalidParams):
            calibrate_session_for_bdp(1.0, model, 1, 2, route="markov")
