"""Small brute-force oracle suite behind ``bdpholdout selftest``.

Each check compares a library routine with a direct loop or a hand-derived
value on a desk-sized input.  Seeds are fixed, so the output never changes.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np

from .bounds import empirical_max_info, n_star
from .calibration import (
    DiscreteMechanism,
    bdpl_bruteforce,
    chain_spectral_params,
    dp_for_bdp_blanket,
    dp_leakage_bruteforce,
    h_markov,
)
from .graphical_model import DependencyGraph, JointTable, MarkovChainSpec, build_joint_from_chain
from .holdout import HoldoutSession, Provenance, session_dp_epsilon
from .influence import blanket_coefficient
from .mechanisms import StatQuery, ZeroNoise

TRANSITION = np.array([[0.9, 0.1], [0.2, 0.8]])


def _influence_loop(probs: np.ndarray) -> float:
    """Max over x2, x1 != x1' of P(x2|x1) / P(x2|x1') for a 2-node table."""
    best = 0.0
    for a, b in itertools.permutations(range(probs.shape[0]), 2):
        for s in range(probs.shape[1]):
            num = probs[a, s] / probs[a].sum()
            den = probs[b, s] / probs[b].sum()
            best = max(best, math.log(num / den))
    return best


def check_influence() -> str:
    chain = MarkovChainSpec(TRANSITION, [0.5, 0.5], 2)
    joint = build_joint_from_chain(chain)
    got = blanket_coefficient(joint, DependencyGraph.chain(2), 0)
    want = _influence_loop(joint.probs)
    assert abs(got - want) < 1e-12 and abs(got - math.log(8.0)) < 1e-12, (got, want)
    return f"a_0={got:.12f}"


def check_independence() -> str:
    rng = np.random.default_rng(11)
    joint = JointTable.from_array(np.einsum("i,j,k->ijk", *(rng.dirichlet(np.ones(2)) for _ in range(3))))
    assert dp_for_bdp_blanket([0.0, 0.0, 0.0], 0.7) == 0.7
    worst = 0.0
    for _ in range(5):
        mech = DiscreteMechanism(joint.domains, ("0", "1", "2"), rng.dirichlet(np.ones(3), size=(2, 2, 2)))
        worst = max(worst, abs(bdpl_bruteforce(mech, joint) - dp_leakage_bruteforce(mech)))
    assert worst < 1e-9, worst
    return f"max|bdpl-dpl|={worst:.1e}"


def check_maxinfo_sweep() -> str:
    rng = np.random.default_rng(12)
    for _ in range(20):
        p = rng.dirichlet(np.ones(8) * 0.5).reshape(2, 4)
        for beta in (0.0, 0.1, 0.3):
            a = empirical_max_info(p, beta, "sweep")
            b = empirical_max_info(p, beta, "bruteforce")
            assert a == b, (a, b)
    return "20 joints x 3 betas"


def check_spectral() -> str:
    g, rho = chain_spectral_params(TRANSITION)
    terms = h_markov(1.0, g, rho, 0.1, 100)
    assert abs(g - 0.3) < 1e-12 and abs(rho - 1 / 3) < 1e-12
    assert (terms.d, terms.s) == (14, 11), terms
    assert abs(terms.h - min(0.4 / 27, (2 / 15) / 25)) < 1e-12
    return f"d={terms.d} s={terms.s} h={terms.h:.6e}"


def check_holdout() -> str:
    table = np.array([0.0, 1.0])
    q = StatQuery.from_table(table)
    s = HoldoutSession([1, 1, 1, 1], [0, 0, 0, 0], 0.05, 1, 0.5, ZeroNoise())
    first, second = s.answer(q), s.answer(q)
    assert first.provenance is Provenance.HOLDOUT and first.value == 1.0
    assert second.is_bottom and s.budget == 0
    s = HoldoutSession(list(range(2)) * 50, [0, 1] * 50, 0.05, 5, 0.1, ZeroNoise())
    assert s.answer(q).provenance is Provenance.TRAINING
    eps = session_dp_epsilon(s)
    assert abs(eps - 2.25) < 1e-12, eps
    return f"eps_session={eps:.6f}"


def check_n_star() -> str:
    v = n_star(1, 1.0, 0.1, 0.05, [0.0])
    want = math.ceil(max(9 * math.log(80) / 0.01, 9 / (4 * 0.1 / 3)))
    assert v == want, (v, want)
    return f"n_star={v}"


CHECKS: dict[str, Callable[[], str]] = {
    "influence": check_influence,
    "independence": check_independence,
    "maxinfo_sweep": check_maxinfo_sweep,
    "spectral": check_spectral,
    "holdout": check_holdout,
    "n_star": check_n_star,
}


def run_selftest() -> list[tuple[str, bool, str]]:
    """Run every check; returns ``(name, passed, detail)`` in a fixed order."""
    out = []
    for name, fn in CHECKS.items():
        try:
            out.append((name, True, fn()))
        except AssertionError as exc:
            out.append((name, False, f"mismatch {exc}"))
    return out
