import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from evsel.cli import BENCH_HEADER, main, parse_grid
from evsel.dataio import synthetic_bank, synthetic_labels, train_test_split, write_bank, write_labels, write_manifest
from evsel.selection import CandidateSet, rank_banks
from evsel.spectral import FeatureBank
from oracles import NOISE_LEVELS


def make_manifest(root, seed=0, noise=NOISE_LEVELS, n=200, k=4, d=30, split=True, extra=()):
    ss = np.random.SeedSequence(seed).spawn(len(noise) + 2)
    labels = synthetic_labels(n, k, ss[0])
    entries = []
    for i, lvl in enumerate(noise):
        name = f"n{int(lvl * 10)}"
        write_bank(root / f"{name}.fbnk", synthetic_bank(labels, d, noise_level=lvl, seed=ss[i + 2], name=name))
        entries.append((name, f"{name}.fbnk"))
    for name, bank in extra:
        write_bank(root / f"{name}.fbnk", bank)
        entries.append((name, f"{name}.fbnk"))
    write_labels(root / "labels.lbls", labels)
    sp = train_test_split(labels, 0.5, ss[1]) if split else None
    write_manifest(root / "m.json", "synthetic", entries, "labels.lbls", split=sp)
    return root / "m.json", labels, sp


def run(*argv):
    return main([str(a) for a in argv])


class TestEvidence:
    def test_ranking_matches_library(self, tmp_path):
        m, labels, (tr, _) = make_manifest(tmp_path)
        assert run("evidence", "--manifest", m, "--out", tmp_path / "o") == 0
        doc = json.loads((tmp_path / "o" / "evidence.json").read_text())
        from evsel.dataio import load_manifest
        man = load_manifest(m)
        cset = CandidateSet([b.columns(tr) for b in man.load_banks()], labels.rows(tr))
        ranked, _ = rank_banks(cset)
        assert doc["ranking"] == [r.name for r in ranked]
        assert doc["ranking"][0] == "n0"

    def test_deterministic(self, tmp_path):
        m, _, _ = make_manifest(tmp_path)
        run("evidence", "--manifest", m, "--out", tmp_path / "a")
        run("evidence", "--manifest", m, "--out", tmp_path / "b", "--workers", "3")
        for name in ("evidence.json", "evidence_trace.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "m.json").write_text('{"banks": [], "labels": "x"}')
        assert run("evidence", "--manifest", tmp_path / "m.json", "--out", tmp_path) == 2

    def test_missing_manifest_flag(self, tmp_path):
        assert run("evidence", "--out", tmp_path) == 2


class TestPipeline:
    def test_noiseless_accuracy_one(self, tmp_path):
        m, _, _ = make_manifest(tmp_path, noise=(0.0,))
        o = tmp_path / "o"
        assert run("train", "--manifest", m, "--out", o) == 0
        assert run("predict", "--manifest", m, "--model", o / "model.bmdl", "--out", o) == 0
        with open(o / "scores.csv") as f:
            assert next(csv.reader(f)) == ["sample", "k0", "k1", "k2", "k3"]
        assert run("eval", "--manifest", m, "--scores", o / "scores.csv", "--out", o) == 0
        doc = json.loads((o / "eval.json").read_text())
        assert doc["measure"] == "accuracy" and float(doc["mean"]) == 1.0

    def test_dimension_mismatch(self, tmp_path, capsys):
        m, labels, _ = make_manifest(tmp_path, noise=(0.0,),
                                     extra=[("wide", FeatureBank("wide", np.ones((31, 200))))])
        o = tmp_path / "o"
        assert run("train", "--manifest", m, "--bank", "n0", "--out", o) == 0
        rc = run("predict", "--manifest", m, "--model", o / "model.bmdl", "--bank", "wide", "--out", o)
        assert rc == 2
        assert "D=31" in capsys.readouterr().err

    def test_corrupt_model(self, tmp_path):
        m, _, _ = make_manifest(tmp_path, noise=(0.0,))
        (tmp_path / "bad.bmdl").write_bytes(b"junk")
        assert run("predict", "--manifest", m, "--model", tmp_path / "bad.bmdl", "--out", tmp_path) == 2

    def test_numerical_failure_exit_3(self, tmp_path):
        m, _, _ = make_manifest(tmp_path, noise=(0.3,))
        rc = run("train", "--manifest", m, "--method", "lambda_plain", "--max-iters", "1",
                 "--epsilon", "1e-15", "--out", tmp_path)
        assert rc == 3

    def test_usage_error(self):
        with pytest.raises(SystemExit) as ei:
            main(["train", "--bogus"])
        assert ei.value.code == 2


class TestSelection:
    def test_select(self, tmp_path):
        m, _, _ = make_manifest(tmp_path)
        assert run("select", "--manifest", m, "--out", tmp_path / "o") == 0
        assert json.loads((tmp_path / "o" / "select.json").read_text())["selected"] == ["n0"]

    def test_greedy_rejects_noise(self, tmp_path):
        m, _, _ = make_manifest(tmp_path, noise=(0.2, 1.0))
        assert run("ensemble", "--manifest", m, "--out", tmp_path / "o") == 0
        assert json.loads((tmp_path / "o" / "ensemble.json").read_text())["selected"] == ["n2"]

    def test_exhaustive_counts_and_dominance(self, tmp_path):
        m, _, _ = make_manifest(tmp_path, noise=(0.0, 0.3, 0.6))
        assert run("ensemble", "--manifest", m, "--strategy", "exhaustive", "--out", tmp_path / "e") == 0
        assert run("ensemble", "--manifest", m, "--strategy", "greedy", "--out", tmp_path / "g") == 0
        ex = json.loads((tmp_path / "e" / "ensemble.json").read_text())
        gr = json.loads((tmp_path / "g" / "ensemble.json").read_text())
        assert ex["n_trainings"] == 7
        assert float(gr["evidence"]) <= float(ex["evidence"])


class TestCv:
    def test_grid_of_one(self, tmp_path):
        m, _, _ = make_manifest(tmp_path, noise=(0.3,))
        assert run("cv", "--manifest", m, "--grid", "0.5", "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "cv.json").read_text())
        assert doc["chosen"] == ["0.5"] * 4
        assert doc["decompositions"] == 5
        assert "test_cv" in doc and "test_evidence" in doc

    def test_chosen_within_grid(self, tmp_path):
        m, _, _ = make_manifest(tmp_path, noise=(0.3,))
        assert run("cv", "--manifest", m, "--grid=-3:3", "--out", tmp_path) == 0
        doc = json.loads((tmp_path / "cv.json").read_text())
        assert all(2**-3 <= float(c) <= 2**3 for c in doc["chosen"])

    def test_parse_grid(self):
        np.testing.assert_array_equal(parse_grid("-1:1"), [0.5, 1, 2])
        np.testing.assert_array_equal(parse_grid("0.1,3"), [0.1, 3])


class TestBench:
    def test_header_and_agreement(self, tmp_path):
        assert run("bench-convergence", "--n-seeds", 3, "--out", tmp_path) == 0
        with open(tmp_path / "convergence.csv") as f:
            lines = f.read().splitlines()
        assert lines[0] == "method,seed,iteration,lambda,log_evidence,elapsed_ms"
        assert lines[0].split(",") == BENCH_HEADER
        rows = list(csv.DictReader(lines))
        final = {}
        for r in rows:
            final[(r["method"], r["seed"])] = float(r["log_evidence"])
        assert {m for m, _ in final} == {"aitken", "lambda_plain", "fixed_point_ab", "em"}
        for seed in ("0", "1", "2"):
            vals = [v for (m, s), v in final.items() if s == seed]
            assert max(vals) - min(vals) < 1e-4


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "evsel.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "evsel" in r.stdout
