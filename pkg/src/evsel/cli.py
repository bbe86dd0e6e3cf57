"""Command-line front end: ``evsel <subcommand> --manifest M.json --out DIR``.

Exit codes: 0 success, 2 input or usage error, 3 numerical failure.
Log level comes from the ``EVSEL_LOG`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import SynthSpec, generate_synthetic, load_manifest
from .errors import DataError, NumericalError
from .evidence import METHODS, OptimOptions, optimize_lambda
from .lssvm import fit_with_lambdas, load_model, predict_scores, save_model, train
from .metrics import evaluate
from .selection import (CandidateSet, concat_banks, decimal12, cv_grid_search, exhaustive_ensemble,
                        greedy_ensemble, rank_banks, single_best)
from .spectral import FeatureBank, LabelMatrix, build_basis

log = logging.getLogger("evsel")

BENCH_HEADER = ["method", "seed", "iteration", "lambda", "log_evidence", "elapsed_ms"]


def parse_grid(text: str) -> np.ndarray:
    """``"-10:10"`` -> powers of two 2^-10..2^10; otherwise a comma list of values."""
    try:
        if ":" in text:
            lo, hi = (int(v) for v in text.split(":"))
            if hi < lo:
                raise ValueError
            return 2.0 ** np.arange(lo, hi + 1)
        vals = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}") from None
    if vals.size == 0 or np.any(~(vals > 0)):
        raise argparse.ArgumentTypeError(f"grid values must be positive: {text!r}")
    return vals


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evsel", description="Evidence-based LS-SVM training and feature-bank selection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", type=Path, help="dataset manifest (JSON)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=_positive_int, default=1)
    common.add_argument("--lambda-init", type=float, default=1.0)
    common.add_argument("--epsilon", type=float, default=1e-5)
    common.add_argument("--max-iters", type=_positive_int, default=500)
    common.add_argument("--method", choices=METHODS, default="aitken")
    common.add_argument("--accept-unconverged", action="store_true")

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    add("evidence", cmd_evidence, "per-bank evidence report")
    sp = add("train", cmd_train, "train a model and write model.bmdl")
    sp.add_argument("--bank", action="append", help="bank name (repeat to concatenate)")
    sp = add("predict", cmd_predict, "score the test split with a model")
    sp.add_argument("--model", type=Path, required=True)
    sp.add_argument("--bank", action="append")
    sp = add("eval", cmd_eval, "evaluate a scores CSV with the manifest's measure")
    sp.add_argument("--scores", type=Path, required=True)
    add("select", cmd_select, "pick the bank with maximum evidence")
    sp = add("ensemble", cmd_ensemble, "greedy or exhaustive evidence ensemble")
    sp.add_argument("--strategy", choices=("greedy", "exhaustive"), default="greedy")
    sp = add("cv", cmd_cv, "k-fold grid-search baseline")
    sp.add_argument("--grid", type=parse_grid, default=parse_grid("-10:10"))
    sp.add_argument("--folds", type=_positive_int, default=5)
    sp.add_argument("--bank", action="append")
    sp = add("bench-convergence", cmd_bench_convergence, "iteration traces of all optimizers")
    sp.add_argument("--n-seeds", type=_positive_int, default=20)
    return p


def _opts(args) -> OptimOptions:
    return OptimOptions(lambda_init=args.lambda_init, epsilon=args.epsilon,
                        max_iters=args.max_iters, method=args.method)


def _manifest(args):
    if args.manifest is None:
        raise DataError("--manifest is required for this subcommand")
    return load_manifest(args.manifest)


def _out(args, name) -> Path:
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out / name


def _write_json(path, doc):
    path.write_text(json.dumps(doc, indent=2) + "\n")
    log.info("wrote %s", path)


def _training_data(man):
    labels = man.load_labels()
    train_idx, _ = man.split_indices(labels.n)
    banks = [b.columns(train_idx) for b in man.load_banks()]
    return CandidateSet(banks, labels.rows(train_idx))


def _pick_bank(man, names, cset: CandidateSet | None = None, idx=None) -> FeatureBank:
    """Named banks (default: all, manifest order) concatenated, from ``cset`` or the ``idx`` columns."""
    names = names or man.bank_names
    if cset is not None:
        return concat_banks(cset, names)
    banks = [man.load_bank(n) for n in names]
    data = np.vstack([b.data[:, idx] for b in banks])
    return FeatureBank("+".join(names), data)


def _class_rows(model):
    return [
        {
            "class": r.class_index,
            "lambda": decimal12(r.state.lam),
            "alpha": decimal12(r.state.alpha),
            "beta": decimal12(r.state.beta),
            "gamma": decimal12(r.state.gamma),
            "log_evidence": decimal12(r.state.log_evidence),
            "iterations": r.iterations,
            "converged": r.converged,
            "fallbacks": r.fallback_count,
        }
        for r in model.per_class
    ]


def cmd_evidence(args):
    man = _manifest(args)
    cset = _training_data(man)
    ranking, failed = rank_banks(cset, _opts(args), workers=args.workers,
                                 accept_unconverged=args.accept_unconverged)
    doc = {
        "task": man.task,
        "method": args.method,
        "ranking": [r.name for r in ranking],
        "banks": [
            {"name": r.name, "overall_evidence": decimal12(r.evidence), "d": r.model.d, "classes": _class_rows(r.model)}
            for r in ranking
        ],
        "failed": failed,
    }
    _write_json(_out(args, "evidence.json"), doc)
    with open(_out(args, "evidence_trace.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bank", "class", "iteration", "lambda", "log_evidence"])
        for r in ranking:
            for res in r.model.per_class:
                for t in res.trace:
                    w.writerow([r.name, res.class_index, t.iteration, repr(t.lam), repr(t.log_evidence)])
    for r in ranking:
        print(f"{r.name}\t{decimal12(r.evidence)}")
    if not ranking:
        raise NumericalError(f"no bank could be trained: {failed}")


def cmd_train(args):
    man = _manifest(args)
    cset = _training_data(man)
    bank = _pick_bank(man, args.bank, cset)
    model = train(bank, cset.labels, _opts(args), accept_unconverged=args.accept_unconverged,
                  workers=args.workers)
    save_model(model, _out(args, "model.bmdl"))
    _write_json(_out(args, "model.json"), {
        "bank_signature": model.bank_signature,
        "d": model.d,
        "k": model.k,
        "overall_evidence": decimal12(model.overall_evidence),
        "classes": _class_rows(model),
    })
    print(f"{model.bank_signature}\t{decimal12(model.overall_evidence)}")


def cmd_predict(args):
    man = _manifest(args)
    model = load_model(args.model)
    labels = man.load_labels()
    _, test_idx = man.split_indices(labels.n)
    names = args.bank or model.bank_signature.split("+")
    bank = _pick_bank(man, names, idx=test_idx)
    scores = predict_scores(model, bank)
    with open(_out(args, "scores.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["sample"] + [f"k{k}" for k in range(model.k)])
        for i, row in zip(test_idx, scores):
            w.writerow([int(i)] + [repr(float(v)) for v in row])


def read_scores(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][0] != "sample":
        raise DataError(f"{path}: expected a header starting with 'sample'")
    try:
        idx = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
        scores = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed scores CSV ({exc})") from exc
    return idx, scores


def cmd_eval(args):
    man = _manifest(args)
    labels = man.load_labels()
    idx, scores = read_scores(args.scores)
    if idx.size and (idx.min() < 0 or idx.max() >= labels.n):
        raise DataError("score sample index out of range")
    y = labels.data[idx]
    if scores.shape != y.shape:
        raise DataError(f"scores have shape {scores.shape}, labels {y.shape}")
    res = evaluate(scores, y, man.measure)
    _write_json(_out(args, "eval.json"), {
        "measure": res.measure,
        "mean": decimal12(res.mean),
        "per_class": [decimal12(v) for v in res.per_class],
    })
    print(f"{res.measure}\t{res.mean:.6f}")


def cmd_select(args):
    man = _manifest(args)
    cset = _training_data(man)
    rep = single_best(cset, _opts(args), workers=args.workers, accept_unconverged=args.accept_unconverged)
    _out(args, "select.json").write_text(rep.to_json())
    save_model(rep.final_model, _out(args, "model.bmdl"))
    print(rep.selected[0])


def cmd_ensemble(args):
    man = _manifest(args)
    cset = _training_data(man)
    fn = greedy_ensemble if args.strategy == "greedy" else exhaustive_ensemble
    rep = fn(cset, _opts(args), workers=args.workers, accept_unconverged=args.accept_unconverged)
    _out(args, "ensemble.json").write_text(rep.to_json())
    save_model(rep.final_model, _out(args, "model.bmdl"))
    print("+".join(rep.selected) + f"\t{decimal12(rep.evidence)}")


def cmd_cv(args):
    man = _manifest(args)
    cset = _training_data(man)
    bank = _pick_bank(man, args.bank, cset)
    mode = man.mode
    cv = cv_grid_search(bank, cset.labels, args.grid, args.folds, args.seed, mode)
    t0 = time.perf_counter()
    ev_model = train(bank, cset.labels, _opts(args), accept_unconverged=args.accept_unconverged)
    ev_ms = (time.perf_counter() - t0) * 1e3
    doc = {
        "bank": bank.name,
        "mode": mode,
        "folds": cv.folds,
        "seed": cv.fold_assignment_seed,
        "grid": [decimal12(g) for g in cv.grid],
        "chosen": [decimal12(v) for v in cv.chosen],
        "per_lambda_scores": [[decimal12(v) for v in row] for row in cv.per_lambda_scores],
        "decompositions": cv.decompositions,
        "cv_ms": round(cv.elapsed_ms, 3),
        "evidence_ms": round(ev_ms, 3),
        "evidence_lambdas": [decimal12(v) for v in ev_model.lambdas],
    }
    labels = man.load_labels()
    _, test_idx = man.split_indices(labels.n)
    if man.train_idx is not None:
        test_bank = _pick_bank(man, args.bank or man.bank_names, idx=test_idx)
        y_test = labels.data[test_idx]
        cv_model = fit_with_lambdas(bank, cset.labels, cv.chosen)
        doc["test_cv"] = decimal12(evaluate(predict_scores(cv_model, test_bank), y_test, man.measure).mean)
        doc["test_evidence"] = decimal12(evaluate(predict_scores(ev_model, test_bank), y_test, man.measure).mean)
    _write_json(_out(args, "cv.json"), doc)
    print(f"cv {cv.elapsed_ms:.1f} ms\tevidence {ev_ms:.1f} ms")


def _bench_problems(args):
    """(seed, basis) pairs: manifest classes, or seeded synthetic problems."""
    if args.manifest is not None:
        man = load_manifest(args.manifest)
        cset = _training_data(man)
        for b in cset.banks:
            yield b.name, build_basis(b, cset.labels)
        return
    for i in range(args.n_seeds):
        seed = args.seed + i
        bank, labels, _ = generate_synthetic(SynthSpec(n=200, d=50, k=3, seed=seed))
        yield seed, build_basis(bank, labels)


def cmd_bench_convergence(args):
    rows = []
    for seed, basis in _bench_problems(args):
        for method in METHODS:
            opts = OptimOptions(lambda_init=args.lambda_init, epsilon=args.epsilon,
                                max_iters=args.max_iters, method=method)
            optimize_lambda(basis, 0, opts)  # warm-up, not recorded
            res = optimize_lambda(basis, 0, opts)
            for t in res.trace:
                rows.append([method, seed, t.iteration, repr(t.lam), repr(t.log_evidence), f"{t.elapsed_ms:.6f}"])
    with open(_out(args, "convergence.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        w.writerows(rows)


def _setup_logging():
    level = os.environ.get("EVSEL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except DataError as exc:
        print(f"evsel: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"evsel: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"evsel: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
