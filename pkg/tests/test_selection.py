import json

import numpy as np
import pytest

from evsel.errors import DataError
from evsel.lssvm import fit_with_lambdas, predict_scores, train
from evsel.metrics import accuracy
from evsel.selection import (
    CandidateSet,
    concat_banks,
    cv_grid_search,
    decimal12,
    exhaustive_ensemble,
    fold_assignment,
    greedy_ensemble,
    order_by_evidence,
    rank_banks,
    single_best,
)
from evsel.spectral import FeatureBank, eigh_calls
from oracles import complementary_banks, informative_plus_noise, noise_ladder, regime_problem


def test_order_four_networks_example():
    order = order_by_evidence({"G_I": 46.9e3, "G_P": 38.6e3, "V": 48.0e3, "A": 32.5e3})
    assert order == ["V", "G_I", "G_P", "A"]


def test_order_ties_by_name():
    assert order_by_evidence({"b": 1.0, "a": 1.0, "c": 2.0}) == ["c", "a", "b"]


class TestRank:
    def test_single_bank(self):
        bank, labels = regime_problem(0)
        ranked, failed = rank_banks(CandidateSet((bank,), labels))
        assert [r.name for r in ranked] == [bank.name] and not failed

    def test_duplicates(self):
        bank, labels = regime_problem(0)
        cset = CandidateSet((FeatureBank("zeta", bank.data), FeatureBank("alpha", bank.data)), labels)
        ranked, _ = rank_banks(cset)
        assert [r.name for r in ranked] == ["alpha", "zeta"]
        assert ranked[0].evidence == pytest.approx(ranked[1].evidence, abs=1e-9)

    def test_failure_excluded(self):
        bank, labels = regime_problem(1)
        dead = FeatureBank("dead", np.zeros((3, labels.n)))
        ranked, failed = rank_banks(CandidateSet((bank, dead), labels))
        assert [r.name for r in ranked] == [bank.name] and "dead" in failed

    def test_worker_independent(self):
        banks, labels, _ = noise_ladder(0)
        a, _ = rank_banks(CandidateSet(tuple(banks), labels))
        b, _ = rank_banks(CandidateSet(tuple(banks), labels), workers=4)
        assert [(r.name, r.evidence) for r in a] == [(r.name, r.evidence) for r in b]


class TestConcat:
    def _cset(self):
        rng = np.random.default_rng(0)
        a = FeatureBank("a", rng.random((2, 10)))
        b = FeatureBank("b", rng.random((3, 10)))
        return CandidateSet((a, b), regime_problem(0)[1].rows(np.arange(10)))

    def test_stack(self):
        cset = self._cset()
        c = concat_banks(cset, ["a", "b"])
        assert c.d == 5 and c.name == "a+b"
        np.testing.assert_array_equal(c.data[:2], cset.bank("a").data)

    def test_single(self):
        cset = self._cset()
        np.testing.assert_array_equal(concat_banks(cset, ["b"]).data, cset.bank("b").data)

    def test_errors(self):
        with pytest.raises(DataError):
            concat_banks(self._cset(), [])
        with pytest.raises(DataError):
            concat_banks(self._cset(), ["nope"])

    @pytest.mark.parametrize("seed", range(3))
    def test_permutation_invariant_evidence(self, seed):
        banks, labels = complementary_banks(seed)
        cset = CandidateSet(tuple(banks), labels)
        e1 = train(concat_banks(cset, ["block0", "block1"]), labels).overall_evidence
        e2 = train(concat_banks(cset, ["block1", "block0"]), labels).overall_evidence
        assert e1 == pytest.approx(e2, rel=1e-6)


class TestGreedy:
    def test_rejects_noise_bank(self):
        banks, labels = informative_plus_noise(0)
        rep = greedy_ensemble(CandidateSet(tuple(banks), labels))
        assert rep.selected == ("good",)

    def test_duplicate_rejected(self):
        bank, labels = regime_problem(2)
        rep = greedy_ensemble(CandidateSet((FeatureBank("a", bank.data), FeatureBank("b", bank.data)), labels))
        assert rep.selected == ("a",)
        assert [d.action for d in rep.decisions] == ["accept", "reject"]

    @pytest.mark.parametrize("seed", range(5))
    def test_invariants(self, seed):
        banks, labels = complementary_banks(seed)
        cset = CandidateSet(tuple(banks), labels)
        ranked, _ = rank_banks(cset)
        rep = greedy_ensemble(cset)
        assert [d.name for d in rep.decisions] == [r.name for r in ranked]
        accepted = [d.evidence_after for d in rep.decisions if d.action == "accept"]
        assert all(b > a for a, b in zip(accepted, accepted[1:]))
        for d in rep.decisions[1:]:
            if d.action == "reject":
                assert d.evidence_after <= d.evidence_before + 1e-6 * abs(d.evidence_before)
        assert rep.evidence >= ranked[0].evidence
        ex = exhaustive_ensemble(cset)
        assert ex.evidence >= rep.evidence
        assert ex.n_trainings == 15

    def test_report_json(self):
        banks, labels = informative_plus_noise(1)
        rep = greedy_ensemble(CandidateSet(tuple(banks), labels))
        doc = json.loads(rep.to_json())
        assert doc["selected"] == list(rep.selected)
        assert doc["decisions"][0]["evidence_after"] == decimal12(rep.decisions[0].evidence_after)
        assert rep.to_json() == greedy_ensemble(CandidateSet(tuple(banks), labels)).to_json()

    def test_single_best(self):
        banks, labels = informative_plus_noise(2)
        assert single_best(CandidateSet(tuple(banks), labels)).selected == ("good",)


class TestExhaustive:
    def test_singleton(self):
        bank, labels = regime_problem(3)
        rep = exhaustive_ensemble(CandidateSet((bank,), labels))
        assert rep.selected == (bank.name,) and rep.n_trainings == 1

    def test_independent_pair_wins(self):
        banks, labels = complementary_banks(0, m=2)
        cset = CandidateSet(tuple(banks), labels)
        rep = exhaustive_ensemble(cset)
        evs = {s: train(concat_banks(cset, s), labels).overall_evidence
               for s in (("block0",), ("block1",), ("block0", "block1"))}
        assert max(evs, key=evs.get) == ("block0", "block1")
        assert rep.selected == ("block0", "block1")

    def test_limit(self):
        bank, labels = regime_problem(4)
        cset = CandidateSet(tuple(FeatureBank(f"b{i}", bank.data) for i in range(3)), labels)
        with pytest.raises(DataError, match="limit"):
            exhaustive_ensemble(cset, limit=2)


class TestCv:
    def test_one_decomposition_per_fold(self):
        bank, labels = regime_problem(5)
        before = eigh_calls()
        rep = cv_grid_search(bank, labels, folds=5, seed=0)
        assert eigh_calls() - before == 5 == rep.decompositions
        assert rep.per_lambda_scores.shape == (21, labels.k)

    def test_grid_of_one(self):
        bank, labels = regime_problem(6)
        rep = cv_grid_search(bank, labels, grid=[0.25])
        np.testing.assert_array_equal(rep.chosen, [0.25] * labels.k)

    def test_chosen_first_argmax(self):
        bank, labels = regime_problem(7)
        rep = cv_grid_search(bank, labels)
        for k in range(labels.k):
            col = rep.per_lambda_scores[:, k]
            assert rep.chosen[k] == rep.grid[int(np.flatnonzero(col == col.max())[0])]

    def test_folds_stratified_and_deterministic(self):
        _, labels = regime_problem(8)
        a = fold_assignment(labels, 5, 3)
        np.testing.assert_array_equal(a, fold_assignment(labels, 5, 3))
        for c in range(labels.k):
            counts = np.bincount(a[labels.data[:, c] == 1], minlength=5)
            assert counts.max() - counts.min() <= 1

    def test_bad_args(self):
        bank, labels = regime_problem(9)
        with pytest.raises(DataError):
            cv_grid_search(bank, labels, folds=1)
        with pytest.raises(DataError):
            cv_grid_search(bank, labels, grid=[-1.0])

    def test_multilabel_mode(self):
        bank, labels = regime_problem(10)
        rep = cv_grid_search(bank, labels, mode="multi_label")
        assert np.all((rep.per_lambda_scores >= 0) & (rep.per_lambda_scores <= 1))

    def test_noiseless_competitive(self):
        banks, labels, (tr, te) = noise_ladder(0)
        bank = banks[0]
        ltr, lte = labels.rows(tr), labels.rows(te)
        btr, bte = bank.columns(tr), bank.columns(te)
        rep = cv_grid_search(btr, ltr)
        assert np.all(rep.chosen <= rep.grid[len(rep.grid) // 2])
        cv_acc = accuracy(predict_scores(fit_with_lambdas(btr, ltr, rep.chosen), bte), lte.data).mean
        ev_acc = accuracy(predict_scores(train(btr, ltr), bte), lte.data).mean
        assert cv_acc >= ev_acc - 0.02


def test_cv_and_evidence_accuracies_close():
    gaps = []
    for seed in range(20):
        banks, labels, (tr, te) = noise_ladder(seed)
        bank = banks[1]
        ltr, lte = labels.rows(tr), labels.rows(te)
        btr, bte = bank.columns(tr), bank.columns(te)
        rep = cv_grid_search(btr, ltr)
        cv_acc = accuracy(predict_scores(fit_with_lambdas(btr, ltr, rep.chosen), bte), lte.data).mean
        ev_acc = accuracy(predict_scores(train(btr, ltr), bte), lte.data).mean
        gaps.append(abs(cv_acc - ev_acc))
    assert max(gaps) <= 0.02
