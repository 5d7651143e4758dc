"""Command-line entry point: ``bdpholdout <subcommand> ...``.

Results go to stdout (or ``--out``) as sorted-key JSON, except ``holdout``
which writes a JSON-lines transcript and ``experiment`` which writes CSV and
JSON files.  Exit codes: 0 success, 2 validation error, 3 infeasible result
(the report is still written).  Errors are one JSON object on one stderr line.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds
from .calibration import DEFAULT_CHAIN_C, bdpl_bruteforce, chain_spectral_params, dp_leakage_bruteforce
from .errors import BDPError, InfeasibleCalibration, InvalidConfig, InvalidParams
from .experiments import ExperimentConfig, run_experiment, write_report
from .graphical_model import MarkovChainSpec, find_quilts
from .holdout import HoldoutSession, calibrate_session_for_bdp, dp_level_for_model
from .influence import blanket_coefficient, chain_coefficients, quilt_coefficient
from .mechanisms import NoiseSource, StatQuery
from .model_io import load_mechanism, load_model
from .selftest import run_selftest

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(BDPError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _json_value(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, (np.floating, np.integer)):
        return _json_value(x.item())
    if isinstance(x, dict):
        return {str(k): _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, frozenset, set)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_json_value(v) for v in items]
    return x


def _dump(obj) -> str:
    return json.dumps(_json_value(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _model_for_calibration(m):
    return m.chain if m.chain is not None else (m.joint(), m.graph)


def _coefficients(m, quilt_cap):
    """Blanket coefficients and ``(b, |N|)`` quilt candidates for every node."""
    if m.chain is not None:
        a, quilts = chain_coefficients(m.chain, quilt_cap)
        return a, [[(b, len(q.nearby)) for q, b in qs] for qs in quilts]
    joint = m.joint()
    a = [blanket_coefficient(joint, m.graph, i) for i in range(m.n)]
    cands = []
    for i in range(m.n):
        qs = [q for q in find_quilts(m.graph, i) if len(q.nearby) <= quilt_cap]
        cands.append([(quilt_coefficient(joint, q), len(q.nearby)) for q in qs])
    return a, cands


def _node_details(report):
    if report is None:
        return []
    return [{"node": d.node, "coefficient": d.coefficient, "nearby_size": d.nearby_size,
             "quilt": None if d.quilt is None else list(d.quilt)} for d in report.nodes]


def cmd_calibrate(args) -> int:
    m = load_model(args.model)
    n_holdout = args.n_holdout or m.n
    eps_dp, route, report, terms = dp_level_for_model(
        args.epsilon_bdp, _model_for_calibration(m), m.n, args.route, args.c, args.quilt_cap)
    feasible = eps_dp is not None and eps_dp > 0
    out = {
        "epsilon_bdp": args.epsilon_bdp, "epsilon_dp": eps_dp if feasible else None,
        "route": route, "feasible": feasible, "B": args.B, "n_holdout": n_holdout,
        "sigma": 9.0 * args.B / n_holdout / (4.0 * eps_dp) if feasible else None,
        "nodes": _node_details(report),
        "witness_node": None if report is None else report.witness_node,
    }
    if terms is not None:
        out.update(g=terms.g, rho=terms.rho, c=terms.c, d=terms.d, s=terms.s, h=terms.h)
    _emit(_dump(out), args.out)
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def cmd_complexity(args) -> int:
    m = load_model(args.model)
    a, quilts = _coefficients(m, args.quilt_cap)
    thm2_sigma, thm2_T = bounds.thm2_params(args.tau, args.m, args.beta, args.c)
    sigma = args.sigma if args.sigma is not None else thm2_sigma
    out = {
        "sigma": sigma,
        "n_star": bounds.n_star_report(args.B, sigma, args.tau, args.beta, a).to_dict(),
        "n_pound": bounds.n_pound_report(args.B, sigma, args.tau, args.beta, quilts).to_dict(),
        "thm2": bounds.thm2_sample_bound_report(args.B, args.tau, args.m, args.beta, args.c, quilts).to_dict(),
        "thm2_sigma": thm2_sigma, "thm2_threshold": thm2_T,
    }
    if m.chain is not None:
        try:
            g, rho = chain_spectral_params(m.chain)
            out["chain_bound"] = bounds.chain_sample_bound(
                args.B, args.tau, args.m, args.beta, args.c, g, rho, args.chain_c)
        except BDPError as exc:
            out["chain_bound"] = {"error": type(exc).__name__, "message": str(exc)}
    _emit(_dump(out), args.out)
    feasible = all(out[k]["feasible"] for k in ("n_star", "n_pound", "thm2"))
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def cmd_maxinfo(args) -> int:
    out = {}
    if args.model or args.mechanism:
        if not (args.model and args.mechanism):
            raise UsageError("--model and --mechanism go together")
        m = load_model(args.model)
        joint = m.joint()
        mech = load_mechanism(args.mechanism, m.domains)
        eps = bdpl_bruteforce(mech, joint, args.cap)
        pxy = joint.probs.reshape(-1, 1) * mech.probs.reshape(-1, len(mech.outputs))
        out["measured_bdpl"] = eps
        out["empirical_bits"] = bounds.empirical_max_info(pxy, args.beta)
        n = m.n
    else:
        if args.epsilon is None or args.n is None:
            raise UsageError("give --epsilon and --n, or --model and --mechanism")
        eps, n = args.epsilon, args.n
    out.update(epsilon=eps, n=n, beta=args.beta)
    if math.isinf(eps):
        out.update(bdp_bound_bits=math.inf, simple_bound_bits=math.inf)
    else:
        out.update(bdp_bound_bits=bounds.maxinfo_bound_bdp(eps, n, args.beta),
                   simple_bound_bits=bounds.maxinfo_bound_simple(eps, n))
    _emit(_dump(out), args.out)
    return EXIT_OK


def cmd_bdpl(args) -> int:
    m = load_model(args.model)
    joint = m.joint()
    mech = load_mechanism(args.mechanism, m.domains)
    out = {"bdpl": bdpl_bruteforce(mech, joint, args.cap), "dp_leakage": dp_leakage_bruteforce(mech, args.cap),
           "n": m.n, "outputs": list(mech.outputs)}
    _emit(_dump(out), args.out)
    return EXIT_OK


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidParams(f"cannot read {what} file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidParams(f"{what} file {path} is not valid JSON: {exc.msg}") from None


def _read_dataset(path, what, universe):
    data = _read_json(path, what)
    if not isinstance(data, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in data):
        raise InvalidParams(f"{what} must be a JSON list of universe indices")
    if not data:
        raise InvalidParams(f"{what} is empty")
    if any(not 0 <= x < universe for x in data):
        raise InvalidParams(f"{what} has indices outside 0..{universe - 1}")
    return np.array(data, dtype=int)


def _read_queries(path):
    doc = _read_json(path, "queries")
    if not isinstance(doc, list) or not doc or not all(isinstance(q, list) for q in doc):
        raise InvalidParams("queries must be a nonempty JSON list of score tables")
    universe = len(doc[0])
    if any(len(q) != universe for q in doc):
        raise InvalidParams("every query table must cover the same universe")
    return [StatQuery.from_table(q, f"q{j}") for j, q in enumerate(doc)], universe


def _holdout_model(m, n_holdout):
    """Row-correlation model sized to the holdout; chains stretch, tables must match."""
    if m.chain is not None:
        c = m.chain
        return MarkovChainSpec(c.transition, c.initial, n_holdout, c.labels)
    if m.n != n_holdout:
        raise InvalidParams(f"model has {m.n} nodes but the holdout has {n_holdout} rows")
    return m.joint(), m.graph


def cmd_holdout(args) -> int:
    queries, universe = _read_queries(args.queries)
    holdout = _read_dataset(args.holdout, "holdout", universe)
    train = _read_dataset(args.train, "train", universe)
    if args.sigma is not None:
        sigma = args.sigma
    elif args.epsilon_bdp is not None:
        model = _holdout_model(load_model(args.model), len(holdout)) if args.model else None
        sigma = calibrate_session_for_bdp(args.epsilon_bdp, model, args.budget, len(holdout),
                                          args.route, args.c, args.quilt_cap).sigma
    else:
        raise UsageError("give --sigma or --epsilon-bdp")
    session = HoldoutSession(holdout, train, sigma, args.budget, args.threshold,
                             NoiseSource(args.seed).split("holdout"))
    for q in queries:
        session.answer(q)
    lines = "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in session.transcript)
    _emit(lines, args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    doc = _read_json(args.config, "config") if args.config else {}
    if not isinstance(doc, dict):
        raise InvalidConfig("experiment config must be a JSON object")
    if args.seed is not None:
        doc = dict(doc)
        doc["data"] = {**(doc.get("data") or {}), "seed": args.seed}
    if args.mode != "both":
        doc = {**doc, "modes": [args.mode]}
    if args.trials is not None:
        doc = {**doc, "trials": args.trials}
    cfg = ExperimentConfig.from_dict(doc)
    report = run_experiment(cfg)
    prefix = Path(args.out)
    write_report(report, prefix.with_suffix(".csv"), prefix.with_suffix(".json"))
    k = args.k if args.k is not None else (20 if 20 in cfg.ks else cfg.ks[len(cfg.ks) // 2])
    if k not in cfg.ks:
        raise InvalidConfig(f"--k {k} is not among the configured ks")
    parts = []
    for mode in cfg.modes:
        g = report.gap(mode, k)
        gap = "nan" if g["gap_mean"] is None else f"{g['gap_mean']:+.4f}"
        parts.append(f"{mode} gap={gap} fresh={g['fresh_mean']:.4f} bottom={g['bottom']}")
    sys.stdout.write(f"k={k} " + " | ".join(parts) + "\n")
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = run_selftest()
    for name, ok, detail in results:
        sys.stdout.write(f"{'ok' if ok else 'FAIL'} {name} {detail}\n")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bdpholdout", description="Privacy-calibrated reusable holdout for correlated data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(sp, quilt_cap=True):
        sp.add_argument("--model", required=True, help="model JSON file")
        if quilt_cap:
            sp.add_argument("--quilt-cap", type=int, default=4, help="max nearby-set size for quilts")
        sp.add_argument("--out", help="write the report here instead of stdout")

    sp = sub.add_parser("calibrate", help="DP level and noise rate for a BDP target")
    model_flags(sp)
    sp.add_argument("--epsilon-bdp", type=float, required=True)
    sp.add_argument("--route", choices=["auto", "blanket", "quilt", "markov"], default="auto")
    sp.add_argument("--c", type=float, default=DEFAULT_CHAIN_C, help="constant of the chain conversion")
    sp.add_argument("--B", type=int, default=1, help="holdout budget used for sigma")
    sp.add_argument("--n-holdout", type=int, help="holdout size used for sigma (default: model n)")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("complexity", help="holdout sample-size bounds")
    model_flags(sp)
    sp.add_argument("--B", type=int, required=True)
    sp.add_argument("--tau", type=float, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--m", type=int, required=True, help="number of queries")
    sp.add_argument("--c", type=float, required=True, help="slack constant in (0, 1)")
    sp.add_argument("--sigma", type=float, help="noise rate for n_star/n_pound (default: session value)")
    sp.add_argument("--chain-c", type=float, default=DEFAULT_CHAIN_C)
    sp.set_defaults(func=cmd_complexity)

    sp = sub.add_parser("maxinfo", help="max-information bounds, optionally measured on a model")
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--n", type=int)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--model")
    sp.add_argument("--mechanism")
    sp.add_argument("--cap", type=int, default=2**20)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_maxinfo)

    sp = sub.add_parser("bdpl", help="brute-force Bayesian and plain DP leakage of a mechanism")
    model_flags(sp, quilt_cap=False)
    sp.add_argument("--mechanism", required=True)
    sp.add_argument("--cap", type=int, default=2**20)
    sp.set_defaults(func=cmd_bdpl)

    sp = sub.add_parser("holdout", help="answer queries through a holdout session")
    sp.add_argument("--holdout", required=True, help="JSON list of universe indices")
    sp.add_argument("--train", required=True, help="JSON list of universe indices")
    sp.add_argument("--queries", required=True, help="JSON list of per-element score tables")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--threshold", type=float, required=True)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--epsilon-bdp", type=float)
    sp.add_argument("--model", help="row-correlation model for --epsilon-bdp (default: independent rows)")
    sp.add_argument("--route", choices=["auto", "blanket", "quilt", "markov"], default="auto")
    sp.add_argument("--c", type=float, default=DEFAULT_CHAIN_C)
    sp.add_argument("--quilt-cap", type=int, default=4)
    sp.add_argument("--out", help="transcript path (JSON lines)")
    sp.set_defaults(func=cmd_holdout)

    sp = sub.add_parser("experiment", help="overfitting experiment; writes OUT.csv and OUT.json")
    sp.add_argument("--config", help="experiment config JSON (default: built-in defaults)")
    sp.add_argument("--out", required=True, help="output path prefix")
    sp.add_argument("--mode", choices=["naive", "bdp", "both"], default="both")
    sp.add_argument("--seed", type=int, help="overrides the config seed")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--k", type=int, help="k reported on the summary line")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("selftest", help="run the brute-force oracle suite")
    sp.set_defaults(func=cmd_selftest)
    return p


def _error(exc: BaseException, code: int = EXIT_INVALID) -> int:
    rec = {"error": type(exc).__name__, "message": " ".join(str(exc).split()), "exit": code}
    sys.stderr.write(json.dumps(rec, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InfeasibleCalibration as exc:
        return _error(exc, EXIT_INFEASIBLE)
    except (BDPError, OSError, ValueError, TypeError, KeyError, IndexError) as exc:
        return _error(exc)


if __name__ == "__main__":
    sys.exit(main())
