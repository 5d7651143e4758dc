import json
import math
import subprocess
import sys

import numpy as np
import pytest

from bdpholdout.cli import main
from bdpholdout.errors import CyclicGraph, InvalidModel
from bdpholdout.model_io import load_mechanism, load_model

CHAIN_DOC = {"type": "chain", "n": 100, "transition": [[0.9, 0.1], [0.2, 0.8]], "initial": [0.5, 0.5]}
NET_DOC = {"type": "markov_network", "n": 2, "domains": [["a", "b"], ["a", "b"]], "edges": [[0, 1]],
           "probabilities": [[0.4, 0.1], [0.1, 0.4]]}
MECH_DOC = {"outputs": ["0", "1"], "rows": {"a,a": [0.7, 0.3], "a,b": [0.6, 0.4],
                                            "b,a": [0.4, 0.6], "b,b": [0.3, 0.7]}}


@pytest.fixture
def files(tmp_path):
    def write(name, doc):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return str(p)

    return write


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestModelIO:
    def test_chain(self):
        m = load_model(CHAIN_DOC)
        assert m.kind == "chain" and m.chain.length == 100 and m.graph.n == 100

    def test_chain_labels(self):
        m = load_model({**CHAIN_DOC, "n": 3, "domains": [["lo", "hi"]]})
        assert m.domains == (("lo", "hi"),) * 3
        assert m.joint().shape == (2, 2, 2)

    def test_network(self):
        m = load_model(NET_DOC)
        assert m.joint().probability({0: 0, 1: 0}) == pytest.approx(0.4)

    def test_joint_defaults_to_complete_graph(self):
        doc = {"type": "joint", "n": 3, "domains": [["0", "1"]] * 3, "probabilities": [0.125] * 8}
        assert load_model(doc).graph.edges == {(0, 1), (0, 2), (1, 2)}

    def test_bayes_net_directed(self):
        doc = {**NET_DOC, "type": "bayes_net"}
        assert load_model(doc).graph.directed

    @pytest.mark.parametrize("doc", [
        {**CHAIN_DOC, "extra": 1},
        {**CHAIN_DOC, "type": "tree"},
        {k: v for k, v in CHAIN_DOC.items() if k != "initial"},
        {**CHAIN_DOC, "edges": [[0, 1]]},
        {**CHAIN_DOC, "n": 0},
        {**CHAIN_DOC, "n": True},
        {**CHAIN_DOC, "transition": [[0.9, 0.2], [0.2, 0.8]]},
        {**NET_DOC, "probabilities": [0.5, 0.5]},
        {**NET_DOC, "domains": [["a", "b"]]},
        {**NET_DOC, "edges": [[0, 0]]},
        {**NET_DOC, "edges": [[0, "x"]]},
        {**NET_DOC, "probabilities": [["x", 0.1], [0.1, 0.4]]},
    ])
    def test_rejects(self, doc):
        with pytest.raises(InvalidModel):
            load_model(doc)

    def test_cyclic_bayes_net(self):
        with pytest.raises(CyclicGraph):
            load_model({**NET_DOC, "type": "bayes_net", "edges": [[0, 1], [1, 0]]})

    def test_mechanism(self):
        m = load_model(NET_DOC)
        mech = load_mechanism(MECH_DOC, m.domains)
        assert mech.probs.shape == (2, 2, 2)

    @pytest.mark.parametrize("doc", [
        {**MECH_DOC, "extra": 1},
        {"outputs": ["0", "1"]},
        {**MECH_DOC, "rows": {"a,a": [1.0, 0.0]}},
        {**MECH_DOC, "rows": {**MECH_DOC["rows"], "a,c": [0.5, 0.5]}},
    ])
    def test_mechanism_rejects(self, doc):
        with pytest.raises(InvalidModel):
            load_mechanism(doc, load_model(NET_DOC).domains)

    def test_unreadable(self, tmp_path):
        with pytest.raises(InvalidModel):
            load_model(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        with pytest.raises(InvalidModel):
            load_model(bad)


class TestCalibrate:
    def test_markov_route(self, capsys, files):
        code, out, _ = run(capsys, "calibrate", "--model", files("c.json", CHAIN_DOC),
                           "--epsilon-bdp", "1.0", "--route", "markov")
        rep = json.loads(out)
        assert code == 0
        assert (rep["d"], rep["s"]) == (14, 11)
        assert rep["g"] == pytest.approx(0.3) and rep["rho"] == pytest.approx(1 / 3)
        assert rep["h"] == pytest.approx(min(0.4 / 27, (2 / 15) / 25), abs=1e-12)
        assert rep["sigma"] == pytest.approx(9 * 1 * 0.01 / (4 * rep["h"]))

    def test_infeasible_exit_3(self, capsys, files):
        code, out, _ = run(capsys, "calibrate", "--model", files("n.json", NET_DOC),
                           "--epsilon-bdp", "1.0", "--route", "blanket")
        rep = json.loads(out)
        assert code == 3 and rep["feasible"] is False and rep["witness_node"] == 0

    def test_quilt_fallback(self, capsys, files):
        code, out, _ = run(capsys, "calibrate", "--model", files("n.json", NET_DOC), "--epsilon-bdp", "1.0")
        assert code == 0 and json.loads(out)["route"] == "quilt"

    def test_out_file(self, capsys, files, tmp_path):
        target = tmp_path / "rep.json"
        code, out, _ = run(capsys, "calibrate", "--model", files("c.json", CHAIN_DOC),
                           "--epsilon-bdp", "1.0", "--route", "markov", "--out", str(target))
        assert code == 0 and out == "" and json.loads(target.read_text())["d"] == 14


class TestComplexity:
    def test_independent_chain_values(self, capsys, files):
        doc = {**CHAIN_DOC, "transition": [[0.5, 0.5], [0.5, 0.5]], "n": 10}
        code, out, _ = run(capsys, "complexity", "--model", files("c.json", doc), "--B", "5", "--tau", "0.1",
                           "--beta", "0.05", "--m", "100", "--c", "0.5")
        rep = json.loads(out)
        assert code == 0
        sigma = 0.05 / (12 * math.log(8000))
        assert rep["thm2_sigma"] == pytest.approx(sigma)
        want = math.ceil(max(9 * math.log(80) / 0.01, 9 * 5 / (4 * sigma * 0.1 / 3)))
        assert rep["n_star"]["value"] == want == rep["n_pound"]["value"]
        tp, bp = 0.0125, 0.05 / 200
        assert rep["thm2"]["value"] == math.ceil(max(9 * math.log(4 / bp) / tp**2, 9 * 5 / (4 * sigma * tp / 3)))

    def test_correlated_chain_infeasible(self, capsys, files):
        code, out, _ = run(capsys, "complexity", "--model", files("c.json", CHAIN_DOC), "--B", "5",
                           "--tau", "0.1", "--beta", "0.05", "--m", "100", "--c", "0.5")
        rep = json.loads(out)
        assert code == 3 and rep["n_star"]["feasible"] is False
        assert rep["chain_bound"]["asymptotic"] is True


class TestOtherCommands:
    def test_bdpl(self, capsys, files):
        code, out, _ = run(capsys, "bdpl", "--model", files("n.json", NET_DOC),
                           "--mechanism", files("m.json", MECH_DOC))
        rep = json.loads(out)
        assert code == 0 and rep["dp_leakage"] == pytest.approx(math.log(2))
        assert rep["bdpl"] >= rep["dp_leakage"]

    def test_maxinfo_formula(self, capsys):
        code, out, _ = run(capsys, "maxinfo", "--epsilon", "0.05", "--n", "10000", "--beta", "0.05")
        rep = json.loads(out)
        assert rep["bdp_bound_bits"] == pytest.approx(91.728, abs=1e-3)
        assert rep["simple_bound_bits"] == pytest.approx(721.348, abs=1e-3)

    def test_maxinfo_measured(self, capsys, files):
        code, out, _ = run(capsys, "maxinfo", "--model", files("n.json", NET_DOC),
                           "--mechanism", files("m.json", MECH_DOC), "--beta", "0.05")
        rep = json.loads(out)
        assert code == 0 and rep["empirical_bits"] <= rep["bdp_bound_bits"]

    def test_maxinfo_needs_inputs(self, capsys):
        code, _, err = run(capsys, "maxinfo", "--beta", "0.05")
        assert code == 2 and json.loads(err)["error"] == "UsageError"

    def test_selftest(self, capsys):
        code, out, _ = run(capsys, "selftest")
        assert code == 0 and all(line.startswith("ok ") for line in out.splitlines())


class TestHoldoutCommand:
    @pytest.fixture
    def inputs(self, files):
        rng = np.random.default_rng(0)
        return [
            "--holdout", files("h.json", rng.integers(0, 10, 50).tolist()),
            "--train", files("t.json", rng.integers(0, 10, 50).tolist()),
            "--queries", files("q.json", rng.random((8, 10)).round(6).tolist()),
        ]

    def test_transcript(self, capsys, inputs):
        code, out, _ = run(capsys, "holdout", *inputs, "--seed", "3", "--budget", "2",
                           "--threshold", "0.02", "--sigma", "0.01")
        recs = [json.loads(line) for line in out.splitlines()]
        assert code == 0 and len(recs) == 8
        assert set(recs[0]) == {"index", "provenance", "value", "budget_after"}
        assert [r["index"] for r in recs] == list(range(8))

    def test_deterministic(self, capsys, inputs):
        argv = ["holdout", *inputs, "--seed", "3", "--budget", "2", "--threshold", "0.02", "--sigma", "0.01"]
        assert run(capsys, *argv) == run(capsys, *argv)
        other = run(capsys, *argv[:-5], "4", *argv[-4:])
        assert other[1] != run(capsys, *argv)[1]

    def test_seed_required(self, capsys, inputs):
        code, _, err = run(capsys, "holdout", *inputs, "--budget", "2", "--threshold", "0.02", "--sigma", "0.01")
        assert code == 2 and "--seed" in json.loads(err)["message"]

    def test_bdp_calibrated_with_chain(self, capsys, inputs, files):
        chain = {**CHAIN_DOC, "transition": [[0.6, 0.4], [0.4, 0.6]], "n": 2}
        code, out, _ = run(capsys, "holdout", *inputs, "--seed", "3", "--budget", "2", "--threshold", "0.02",
                           "--epsilon-bdp", "5", "--model", files("c.json", chain), "--route", "blanket")
        assert code == 0 and len(out.splitlines()) == 8

    def test_infeasible_exit_3(self, capsys, inputs, files):
        code, _, err = run(capsys, "holdout", *inputs, "--seed", "3", "--budget", "2", "--threshold", "0.02",
                           "--epsilon-bdp", "0.5", "--model", files("c.json", CHAIN_DOC), "--route", "blanket")
        assert code == 3 and json.loads(err)["error"] == "InfeasibleCalibration"

    def test_index_outside_universe(self, capsys, files):
        code, _, err = run(capsys, "holdout", "--holdout", files("h.json", [0, 11]), "--train", files("t.json", [0]),
                           "--queries", files("q.json", [[0.5, 0.5]]), "--seed", "1", "--budget", "1",
                           "--threshold", "0.1", "--sigma", "0.1")
        assert code == 2 and json.loads(err)["error"] == "InvalidParams"


class TestErrors:
    @pytest.mark.parametrize("argv", [
        ["calibrate", "--model", "/nonexistent.json", "--epsilon-bdp", "1"],
        ["calibrate", "--epsilon-bdp", "x"],
        ["nosuchcommand"],
        [],
        ["complexity", "--model", "/nonexistent.json", "--B", "1", "--tau", "0.1", "--beta", "0.05",
         "--m", "10", "--c", "0.5"],
    ])
    def test_single_line_record(self, capsys, argv):
        code, out, err = run(capsys, *argv)
        assert code == 2 and out == ""
        lines = err.splitlines()
        assert len(lines) == 1
        rec = json.loads(lines[0])
        assert set(rec) == {"error", "message", "exit"} and rec["exit"] == 2

    def test_bad_constant(self, capsys, files):
        code, _, err = run(capsys, "calibrate", "--model", files("c.json", CHAIN_DOC), "--epsilon-bdp", "1",
                           "--route", "markov", "--c", "0.3")
        assert code == 2 and json.loads(err)["error"] == "InvalidConstant"

    def test_chain_too_short(self, capsys, files):
        code, _, err = run(capsys, "calibrate", "--model", files("c.json", {**CHAIN_DOC, "n": 10}),
                           "--epsilon-bdp", "1", "--route", "markov")
        assert code == 2 and json.loads(err)["error"] == "ChainTooShort"


class TestExperimentCommand:
    def test_writes_files_and_summary(self, capsys, files, tmp_path):
        cfg = files("cfg.json", {"data": {"n_train": 200, "n_holdout": 200, "n_fresh": 200, "d": 40},
                                 "ks": [0, 5], "trials": 2})
        prefix = tmp_path / "exp"
        code, out, _ = run(capsys, "experiment", "--config", cfg, "--out", str(prefix), "--k", "5")
        assert code == 0
        assert out.startswith("k=5 naive gap=") and "| bdp gap=" in out
        header = (tmp_path / "exp.csv").read_text().splitlines()[0]
        assert header == "round,k,mode,acc_train,acc_holdout,acc_fresh,budget,Z"
        assert "modes" in json.loads((tmp_path / "exp.json").read_text())

    def test_bad_config(self, capsys, files, tmp_path):
        code, _, err = run(capsys, "experiment", "--config", files("cfg.json", {"bogus": 1}),
                           "--out", str(tmp_path / "x"))
        assert code == 2 and json.loads(err)["error"] == "InvalidConfig"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bdpholdout", "selftest"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.count("ok ") == 6
