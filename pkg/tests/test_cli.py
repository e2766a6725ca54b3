import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from aroma.cli import RunConfig, comparator_pool, main, run_training, verify_trace
from aroma.data import Example, LabeledCorpus, TripletStream, information_gain, read_corpus, write_corpus
from aroma.evaluation import evaluate
from aroma.factored import factored_train, init_factored
from aroma.learners import make_learner
from aroma.linalg import SparseVector
from aroma.models import load_model
from aroma.synthetic import random_stream, retrieval_task
from aroma.trace import write_trace

from conftest import rand_sparse


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    task = retrieval_task(dim=6, n_classes=3, n_train=40, n_test=30, seed=2)
    for name, corpus in [("train", task.train), ("test", task.test)]:
        with open(d / f"{name}.txt", "w") as fh:
            write_corpus(corpus, fh)
    return d


def run(*argv):
    return main([str(a) for a in argv])


def read(path):
    return open(path).read()


def test_prep_infogain_and_determinism(tmp_path, rng):
    rows = [Example(f"d{i}", f"c{i % 2}", rand_sparse(rng, 10, 0.5)) for i in range(20)]
    src = tmp_path / "raw.txt"
    with open(src, "w") as fh:
        write_corpus(LabeledCorpus(10, rows), fh)
    corpus = read_corpus(src)
    gains = information_gain(corpus)
    expected = sorted(sorted(range(10), key=lambda t: (-gains[t], t))[:5])
    for out in ("a.txt", "b.txt"):
        assert run("prep", "--train", src, "--out", tmp_path / out, "--tfidf", "--infogain", 5) == 0
    assert read(tmp_path / "a.txt") == read(tmp_path / "b.txt")
    assert read(tmp_path / "a.txt.map") == read(tmp_path / "b.txt.map")
    kept = [int(line.split()[1]) for line in read(tmp_path / "a.txt.map").splitlines()]
    assert kept == expected
    assert read_corpus(tmp_path / "a.txt").dim == 5


def test_prep_full_k_keeps_every_feature(tmp_path, files):
    assert run("prep", "--train", files / "train.txt", "--out", tmp_path / "p.txt", "--infogain", 6, "--tfidf") == 0
    assert read(tmp_path / "p.txt.map") == "".join(f"{i} {i}\n" for i in range(6))
    assert run("prep", "--train", files / "train.txt", "--out", tmp_path / "q.txt", "--infogain", 7) == 1


@pytest.mark.parametrize(
    "algo,extra",
    [("d-aroma", {"Sigma": 1.0}), ("f-aroma", {"Omega": "I", "Lambda": "I"}), ("pa", {})],
)
def test_train_zero_iterations_writes_initial_model(tmp_path, files, algo, extra):
    out = tmp_path / "m.json"
    assert run("train", "--algo", algo, "--iters", 0, "--train", files / "train.txt", "--model-out", out) == 0
    with open(out) as fh:
        model = load_model(fh)
    assert model.variant == algo and not model.W.any()
    for name, val in extra.items():
        expected = np.eye(6) if val == "I" else np.full((6, 6), val)
        np.testing.assert_array_equal(model.extra[name], expected)


def test_identity_model(tmp_path, files):
    out = tmp_path / "id.json"
    assert run("train", "--algo", "identity", "--iters", 50, "--train", files / "train.txt", "--model-out", out) == 0
    with open(out) as fh:
        np.testing.assert_array_equal(load_model(fh).W, np.eye(6))


@pytest.mark.parametrize("algo", ["d-aroma", "f-aroma", "f-aroma-analysis", "arow-vec", "pa"])
def test_train_is_byte_identical(tmp_path, files, algo):
    outs = []
    for tag in "ab":
        m, t = tmp_path / f"{tag}.json", tmp_path / f"{tag}.jsonl"
        argv = ["train", "--algo", algo, "--iters", 100, "--seed", 4, "--r", 0.1]
        assert run(*argv, "--train", files / "train.txt", "--model-out", m, "--trace-out", t) == 0
        outs.append((read(m), read(t)))
    assert outs[0] == outs[1]


def test_eval_matches_in_process(tmp_path, files):
    m, rep = tmp_path / "m.json", tmp_path / "r.csv"
    run("train", "--algo", "f-aroma", "--iters", 200, "--seed", 1, "--train", files / "train.txt", "--model-out", m)
    assert run("eval", "--model", m, "--eval", files / "test.txt", "--k", "1,5,10", "--out", rep) == 0
    cfg = RunConfig("f-aroma", iterations=200, seed=1, train_path=str(files / "train.txt"))
    learner, _ = run_training(cfg)
    report = evaluate(learner.W, read_corpus(files / "test.txt"), [1, 5, 10])
    assert read(rep) == report.to_csv()


def test_eval_empty_k_and_dim_mismatch(tmp_path, files):
    m, rep = tmp_path / "m.json", tmp_path / "r.csv"
    run("train", "--algo", "identity", "--iters", 0, "--train", files / "train.txt", "--model-out", m)
    assert run("eval", "--model", m, "--eval", files / "test.txt", "--k", "", "--out", rep) == 0
    lines = read(rep).splitlines()
    assert lines[0] == "k,precision" and lines[1].startswith("mAP,") and len(lines) == 2
    other = tmp_path / "other.txt"
    other.write_text("dim 3\na x 0:1\n")
    assert run("eval", "--model", m, "--eval", other) == 2


def test_eval_identity_on_orthonormal_duplicates(tmp_path):
    corpus = tmp_path / "dup.txt"
    corpus.write_text("dim 3\n" + "".join(f"{i}{s} c{i} {i}:1\n" for i in range(3) for s in "ab"))
    m, rep = tmp_path / "m.json", tmp_path / "r.csv"
    run("train", "--algo", "identity", "--iters", 0, "--train", corpus, "--model-out", m)
    run("eval", "--model", m, "--eval", corpus, "--k", "1", "--out", rep)
    assert read(rep).splitlines()[1] == "1,1.0"


def test_sweep_rows_and_composition(tmp_path, files):
    out = tmp_path / "s.csv"
    common = ["--algo", "d-aroma", "--iters", 150, "--seed", 3, "--train", files / "train.txt"]
    assert run("sweep", *common, "--eval", files / "test.txt", "--sweep-r", "0.01,0.1,1,10", "--k", "1,5", "--out", out) == 0
    rows = read(out).splitlines()
    assert rows[0] == "r,k,precision,mAP" and len(rows) == 1 + 4 * 2
    assert all(0 <= float(row.split(",")[2]) <= 1 for row in rows[1:])

    assert run("sweep", *common, "--eval", files / "test.txt", "--sweep-r", "0.5,0.5", "--k", "3", "--out", out) == 0
    rows = read(out).splitlines()[1:]
    assert len(rows) == 2 and rows[0] == rows[1]

    m, rep = tmp_path / "m.json", tmp_path / "r.csv"
    run("train", *common, "--r", 0.5, "--model-out", m)
    run("eval", "--model", m, "--eval", files / "test.txt", "--k", "3", "--out", rep)
    _, line, footer = read(rep).splitlines()
    assert rows[0] == f"0.5,{line},{footer.split(',')[1]}"


def test_sweep_reports_failures(tmp_path, files, capsys):
    code = run("sweep", "--algo", "pa", "--iters", 10, "--train", files / "train.txt", "--eval", files / "test.txt",
               "--sweep-r", "1,-1", "--k", "1", "--out", tmp_path / "s.csv")
    assert code == 2
    assert len(read(tmp_path / "s.csv").splitlines()) == 2
    assert "1 of 2 runs failed" in capsys.readouterr().err


def test_curve(tmp_path, files):
    out = tmp_path / "c.csv"
    argv = ["curve", "--algo", "f-aroma", "--train", files / "train.txt", "--eval", files / "test.txt"]
    assert run(*argv, "--checkpoints", "0,10,50", "--k-at", 5, "--out", out) == 0
    lines = read(out).splitlines()
    assert lines[0] == "iteration,k,precision" and [l.split(",")[0] for l in lines[1:]] == ["0", "10", "50"]


def verify_records(path):
    return [json.loads(line) for line in read(path).splitlines()]


def test_verify_empty_trace(tmp_path, files):
    t, out = tmp_path / "t.jsonl", tmp_path / "v.jsonl"
    run("train", "--algo", "f-aroma-analysis", "--iters", 0, "--train", files / "train.txt", "--trace-out", t, "--model-out", tmp_path / "m.json")
    assert run("verify", "--trace", t, "--comparator", "zero", "--out", out) == 0
    (rec,) = verify_records(out)
    assert (rec["M"], rec["U"], rec["bound_thm2"], rec["pass"]) == (0, 0, 0.0, True)
    assert rec["lemma3"] == [0.0, 0.0, 0.0, True]


def test_verify_scalar_lemma3(tmp_path):
    corpus = tmp_path / "s.txt"
    corpus.write_text("dim 1\na x 0:1\nb x 0:1\nc y\n")
    t, out = tmp_path / "t.jsonl", tmp_path / "v.jsonl"
    run("train", "--algo", "f-aroma-analysis", "--iters", 1, "--train", corpus, "--trace-out", t, "--model-out", tmp_path / "m.json")
    assert run("verify", "--trace", t, "--checks", "lemma3", "--comparator", "zero", "--out", out) == 0
    lhs, rm, rn, ok = verify_records(out)[0]["lemma3"]
    assert lhs == pytest.approx(0.25) and rm == pytest.approx(math.log(2)) and rn == pytest.approx(math.log(2)) and ok


@pytest.mark.parametrize("algo", ["d-aroma", "f-aroma-analysis", "f-aroma"])
def test_verify_random_runs_pass(tmp_path, files, algo):
    for seed in range(3):
        t, out = tmp_path / "t.jsonl", tmp_path / "v.jsonl"
        run("train", "--algo", algo, "--iters", 60, "--seed", seed, "--r", 0.1, "--train", files / "train.txt",
            "--trace-out", t, "--model-out", tmp_path / "m.json")
        assert run("verify", "--trace", t, "--comparator", f"pool:{seed}", "--out", out) == 0
        recs = verify_records(out)
        assert len(recs) == 61 and all(r["pass"] for r in recs)


def test_verify_rejects_mismatched_checks(tmp_path, files):
    t = tmp_path / "t.jsonl"
    run("train", "--algo", "d-aroma", "--iters", 5, "--train", files / "train.txt", "--trace-out", t, "--model-out", tmp_path / "m.json")
    assert run("verify", "--trace", t, "--checks", "lemma3") == 2
    run("train", "--algo", "pa", "--iters", 5, "--train", files / "train.txt", "--trace-out", t, "--model-out", tmp_path / "m.json")
    assert run("verify", "--trace", t) == 2


def test_verify_flags_a_violated_bound(rng):
    stream = random_stream(rng, 2, 2, 20)
    _, trace = factored_train(init_factored(2, 2, 1.0, "analysis"), stream)
    trace.final = {"Omega": np.eye(2) * 1e6, "Lambda": np.eye(2)}  # tampered final state
    rec = verify_trace(trace, [("zero", np.zeros((2, 2)))], ["lemma3"])[0]
    assert rec["pass"] is False


def test_comparator_specs(tmp_path):
    assert len(comparator_pool("pool", 2, 3)) == 61
    assert len(comparator_pool("random:5:1", 2, 3)) == 5
    f = tmp_path / "V.json"
    f.write_text("[[1, 2]]")
    ((_, V),) = comparator_pool(f"file:{f}", 1, 2)
    np.testing.assert_array_equal(V, [[1, 2]])


@pytest.mark.parametrize(
    "argv,code",
    [
        (["train", "--algo", "nope", "--train", "x"], 1),
        (["train", "--algo", "pa", "--r", "0", "--train", "x"], 1),
        (["train", "--algo", "f-aroma", "--update-mode", "mistake", "--train", "x"], 1),
        (["eval", "--model", "m.json"], 1),
        (["train", "--algo", "pa", "--train", "/nonexistent/corpus"], 2),
        ([], 1),
    ],
)
def test_exit_codes(argv, code):
    try:
        result = main(argv)
    except SystemExit as exc:  # argparse rejects the command line itself
        result = exc.code
    assert result == code


def test_bad_corpus_exit_code(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("dim 3\na x 5:1\n")
    assert run("train", "--algo", "pa", "--train", bad) == 2


def test_console_script_entry_point(tmp_path, files):
    proc = subprocess.run(
        [sys.executable, "-m", "aroma.cli", "train", "--algo", "identity", "--iters", "0", "--train", str(files / "train.txt")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["variant"] == "identity"


def _time_steps(algo, dim, steps=300, reps=3):
    rng = np.random.default_rng(0)
    stream = random_stream(rng, dim, dim, steps, density=1.0)
    best = math.inf
    for _ in range(reps):
        learner = make_learner(algo, dim, dim, 1.0)
        start = time.perf_counter()
        learner.train(stream, keep_records=False)
        best = min(best, time.perf_counter() - start)
    return best


@pytest.mark.slow
@pytest.mark.parametrize("algo", ["d-aroma", "f-aroma"])
def test_per_step_cost_scales_with_dimension(algo):
    # doubling m = n on dense inputs: both variants are dominated by O(mn)/O(m^2+n^2) work, so x4
    small, large = _time_steps(algo, 150), _time_steps(algo, 300)
    ratio = large / small
    assert 4 / 3 <= ratio <= 4 * 3, ratio
