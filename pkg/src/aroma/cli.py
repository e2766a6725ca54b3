"""Command line front end: ``aroma {prep,train,eval,sweep,curve,verify,synth}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import theory
from .data import TripletStream, format_corpus, infogain_select, read_corpus, tfidf_transform
from .evaluation import evaluate, format_trace_csv, precision_trace
from .factored import NumericalError
from .learners import ALGOS, DEFAULT_PA_C, BaseLearner, make_learner
from .models import ModelFile, load_model, model_to_json
from .synthetic import retrieval_task
from .trace import RunTrace, TraceWriter, read_trace

log = logging.getLogger("aroma")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _k_list(text: str) -> list[int]:
    if not text.strip():
        return []
    try:
        return [int(tok) for tok in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


@dataclass
class RunConfig:
    algo: str
    r: float = 1.0
    iterations: int = 1000
    seed: int = 0
    k_values: list[int] = field(default_factory=lambda: [1, 10])
    update_mode: str = "margin"
    C: float = DEFAULT_PA_C
    train_path: Optional[str] = None
    eval_path: Optional[str] = None
    model_out: Optional[str] = None
    trace_out: Optional[str] = None

    def validate(self) -> None:
        if self.algo not in ALGOS:
            raise UsageError(f"unknown --algo {self.algo!r}; choose from {', '.join(ALGOS)}")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise UsageError(f"--r must be a positive number, got {self.r}")
        if self.iterations < 0:
            raise UsageError(f"--iters must be non-negative, got {self.iterations}")
        if self.update_mode not in ("margin", "mistake"):
            raise UsageError(f"--update-mode must be margin or mistake, got {self.update_mode!r}")
        if self.update_mode == "mistake" and self.algo != "d-aroma":
            raise UsageError("--update-mode mistake only applies to d-aroma (use f-aroma-analysis for f-AROMA)")
        if self.C <= 0:
            raise UsageError(f"--C must be positive, got {self.C}")
        if any(k < 1 for k in self.k_values):
            raise UsageError("--k values must be positive")


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def model_file(learner: BaseLearner) -> ModelFile:
    return ModelFile(learner.variant, np.array(learner.W), learner.r, {k: np.array(v) for k, v in learner.state().items()})


def run_training(cfg: RunConfig, corpus=None) -> tuple[BaseLearner, Optional[RunTrace]]:
    """Train ``cfg.algo`` on triplets sampled from the training corpus."""
    if corpus is None:
        corpus = read_corpus(cfg.train_path)
    learner = make_learner(cfg.algo, corpus.dim, corpus.dim, cfg.r, cfg.update_mode, cfg.C)
    stream = TripletStream(cfg.seed, corpus, count=cfg.iterations) if cfg.iterations else []
    if cfg.trace_out:
        with open(cfg.trace_out, "w", encoding="utf-8", newline="\n") as fh:
            writer = TraceWriter(fh, learner.variant, learner.m, learner.n, learner.r)
            trace = learner.train(stream, sink=writer, keep_records=False)
            writer.close(trace.final)
        return learner, None
    return learner, learner.train(stream, keep_records=False)


# --- commands -------------------------------------------------------------

def cmd_prep(args) -> int:
    corpus = read_corpus(args.train)
    index_map = list(range(corpus.dim))
    if args.infogain is not None:
        if args.infogain > corpus.dim:
            raise UsageError(f"--infogain {args.infogain} exceeds corpus dimension {corpus.dim}")
        corpus, index_map = infogain_select(corpus, args.infogain)
    if args.tfidf:
        corpus = tfidf_transform(corpus)
    _write_text(args.out, format_corpus(corpus))
    map_path = args.map_out or (args.out + ".map" if args.out and args.out != "-" else None)
    if map_path:
        _write_text(map_path, "".join(f"{new} {old}\n" for new, old in enumerate(index_map)))
    return EXIT_OK


def _config(args) -> RunConfig:
    return RunConfig(
        algo=args.algo,
        r=args.r,
        iterations=args.iters,
        seed=args.seed,
        k_values=getattr(args, "k", [1, 10]),
        update_mode=args.update_mode,
        C=args.C,
        train_path=args.train,
        eval_path=getattr(args, "eval", None),
        model_out=getattr(args, "model_out", None),
        trace_out=getattr(args, "trace_out", None),
    )


def cmd_train(args) -> int:
    cfg = _config(args)
    cfg.validate()
    learner, _ = run_training(cfg)
    _write_text(cfg.model_out, model_to_json(model_file(learner)))
    return EXIT_OK


def cmd_eval(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        model = load_model(fh)
    corpus = read_corpus(args.eval)
    if model.W.shape != (corpus.dim, corpus.dim):
        raise ValueError(f"model is {model.W.shape} but the evaluation corpus has dim {corpus.dim}")
    report = evaluate(model.W, corpus, args.k)
    _write_text(args.out, report.to_csv())
    return EXIT_OK


def sweep_rows(cfg: RunConfig, r_values: Sequence[float], train=None, test=None) -> tuple[list[str], list[str]]:
    """CSV rows ``r,k,precision,mAP`` for each r, plus failure messages.

    Every r uses the same seed, so runs differ only in the regularizer.
    """
    train = train if train is not None else read_corpus(cfg.train_path)
    test = test if test is not None else read_corpus(cfg.eval_path)
    rows, failures = [], []
    for r in r_values:
        run = RunConfig(**{**cfg.__dict__, "r": r, "trace_out": None, "model_out": None})
        try:
            run.validate()
            learner, _ = run_training(run, train)
            report = evaluate(np.array(learner.W), test, cfg.k_values)
        except (ValueError, ArithmeticError, UsageError) as exc:
            failures.append(f"r={r!r}: {exc}")
            continue
        for k, p in zip(report.k_values, report.precision_at_k):
            rows.append(f"{r!r},{k},{p!r},{report.mAP!r}")
    return rows, failures


def cmd_sweep(args) -> int:
    cfg = _config(args)
    cfg.validate()
    if not args.sweep_r:
        raise UsageError("--sweep-r needs at least one value")
    rows, failures = sweep_rows(cfg, args.sweep_r)
    _write_text(args.out, "r,k,precision,mAP\n" + "".join(row + "\n" for row in rows))
    for msg in failures:
        print(f"sweep failure: {msg}", file=sys.stderr)
    if failures:
        print(f"{len(failures)} of {len(args.sweep_r)} runs failed", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_curve(args) -> int:
    cfg = _config(args)
    cfg.validate()
    train = read_corpus(cfg.train_path)
    test = read_corpus(args.eval)
    checkpoints = args.checkpoints
    learner = make_learner(cfg.algo, train.dim, train.dim, cfg.r, cfg.update_mode, cfg.C)
    rows = precision_trace(learner, TripletStream(cfg.seed, train), test, checkpoints, args.k_at)
    _write_text(args.out, format_trace_csv(rows, args.k_at))
    return EXIT_OK


def comparator_pool(spec: str, m: int, n: int) -> list[tuple[str, np.ndarray]]:
    """Comparators named by ``spec``.

    ``zero``, ``random:<count>[:<seed>]`` (entries uniform in [-1, 1]),
    ``pool[:<seed>]`` (zero, 20 random matrices and their x0.1 and x10 copies)
    or ``file:<path>`` (a JSON nested array).
    """
    kind, _, rest = spec.partition(":")
    if kind == "zero":
        return [("zero", np.zeros((m, n)))]
    if kind == "file":
        with open(rest, encoding="utf-8") as fh:
            V = np.asarray(json.load(fh), dtype=float)
        return [(f"file:{rest}", V)]
    if kind == "random":
        count, _, seed = rest.partition(":")
        rng = np.random.default_rng(int(seed or 0))
        return [(f"random{i}", rng.uniform(-1, 1, (m, n))) for i in range(int(count))]
    if kind == "pool":
        rng = np.random.default_rng(int(rest or 0))
        base = [rng.uniform(-1, 1, (m, n)) for _ in range(20)]
        pool = [("zero", np.zeros((m, n)))]
        for i, V in enumerate(base):
            pool += [(f"random{i}", V), (f"random{i}x0.1", 0.1 * V), (f"random{i}x10", 10.0 * V)]
        return pool
    raise UsageError(f"unknown comparator spec {spec!r}")


CHECKS_BY_VARIANT = {
    "d-aroma": ("thm1",),
    "f-aroma": ("lemma3",),
    "f-aroma-analysis": ("thm2", "lemma3"),
}


def verify_trace(trace: RunTrace, comparators, checks: Optional[Sequence[str]] = None, run_id: str = "run") -> list[dict]:
    allowed = CHECKS_BY_VARIANT.get(trace.variant)
    if allowed is None:
        raise ValueError(f"no bounds apply to traces of variant {trace.variant!r}")
    checks = tuple(checks) if checks else allowed
    for c in checks:
        if c not in allowed:
            raise ValueError(f"check {c!r} does not apply to a {trace.variant} trace (allowed: {', '.join(allowed)})")
    n_m, n_u = trace.num_mistakes, trace.num_margin_updates
    lemma = theory.lemma3_check(trace) if "lemma3" in checks else None
    reports = []
    for name, V in comparators:
        rec = {"run_id": run_id, "comparator": name, "M": n_m, "U": n_u,
               "bound_thm1": None, "bound_thm2": None, "lemma3": None}
        ok = True
        if "thm1" in checks:
            rec["bound_thm1"] = theory.thm1_bound(V, trace)
            ok &= theory.bound_holds(n_m, rec["bound_thm1"])
        if "thm2" in checks:
            rec["bound_thm2"] = theory.thm2_bound(V, trace)
            ok &= theory.bound_holds(n_m, rec["bound_thm2"])
        if lemma is not None:
            rec["lemma3"] = [lemma.lhs, lemma.rhs_m, lemma.rhs_n, lemma.ok]
            ok &= lemma.ok
        rec["pass"] = bool(ok)
        reports.append(rec)
    return reports


def cmd_verify(args) -> int:
    with open(args.trace, encoding="utf-8") as fh:
        trace = read_trace(fh)
    checks = [c for c in args.checks.split(",") if c] if args.checks != "auto" else None
    comparators = comparator_pool(args.comparator, trace.m, trace.n)
    reports = verify_trace(trace, comparators, checks, args.run_id or args.trace)
    _write_text(args.out, "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in reports))
    failed = sum(not r["pass"] for r in reports)
    print(f"{len(reports) - failed}/{len(reports)} comparators pass", file=sys.stderr)
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def cmd_synth(args) -> int:
    task = retrieval_task(args.dim, args.classes, args.n_train, args.n_test, args.seed, args.decay)
    _write_text(args.train_out, format_corpus(task.train))
    _write_text(args.test_out, format_corpus(task.test))
    if args.v_out:
        _write_text(args.v_out, json.dumps(task.V.tolist()) + "\n")
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def _add_run_flags(p, need_train=True):
    p.add_argument("--algo", required=True, help=f"one of {', '.join(ALGOS)}")
    p.add_argument("--r", type=float, default=1.0, help="regularizer r (default 1)")
    p.add_argument("--iters", type=int, default=1000, help="training triplets")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", required=need_train, help="training corpus")
    p.add_argument("--update-mode", default="margin", choices=["margin", "mistake"], help="d-aroma update gate")
    p.add_argument("--C", type=float, default=DEFAULT_PA_C, help="aggressiveness cap for the pa baseline")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aroma", description="Online bilinear similarity learning with adaptive regularization.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prep", help="tf-idf weighting and information-gain feature selection")
    p.add_argument("--train", required=True, help="input corpus")
    p.add_argument("--out", default="-", help="output corpus (default stdout)")
    p.add_argument("--map-out", help="index map file (default <out>.map)")
    p.add_argument("--tfidf", action="store_true")
    p.add_argument("--infogain", type=int, metavar="K")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train a model on sampled triplets")
    _add_run_flags(p)
    p.add_argument("--model-out", default="-")
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="precision@k and mAP of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--k", type=_k_list, default=[1, 10])
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and evaluate across regularizer values")
    _add_run_flags(p)
    p.add_argument("--eval", required=True)
    p.add_argument("--sweep-r", type=_float_list, required=True)
    p.add_argument("--k", type=_k_list, default=[1, 10])
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("curve", help="precision@k traced at training checkpoints")
    _add_run_flags(p)
    p.add_argument("--eval", required=True)
    p.add_argument("--checkpoints", type=_k_list, required=True)
    p.add_argument("--k-at", type=int, default=10)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("verify", help="check mistake bounds on a training trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--comparator", default="pool", help="zero | random:<count>[:<seed>] | pool[:<seed>] | file:<path>")
    p.add_argument("--checks", default="auto", help="auto or a comma list of thm1,thm2,lemma3")
    p.add_argument("--run-id")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("synth", help="write a synthetic train/test retrieval task")
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.add_argument("--v-out")
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--decay", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"aroma: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"aroma: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"aroma: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
