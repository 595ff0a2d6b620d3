import json
import os

import numpy as np
import pytest

from mcfnd.cli import main
from mcfnd.io import read_instance, read_labels, read_prediction

from conftest import brute_force_optimum, tiny_instance


def run(*argv):
    return main(list(argv))


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _tiny_files(workdir):
    """Generate a tiny instance and return its path."""
    path = str(workdir / "tiny.inst")
    assert run(
        "generate", "--topology", "circular", "--ring-size", "5", "--chords", "0",
        "--commodities", "3", "--seed", "3", "--out", path,
        "--capacity-ratio", "1.3,2.0",
    ) == 0
    return path


def test_unknown_flag_usage_error(capsys):
    assert run("solve", "--bogus") == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_command_usage_error():
    assert run("frobnicate") == 1


def test_generate_deterministic(workdir):
    a, b = str(workdir / "a.inst"), str(workdir / "b.inst")
    for path in (a, b):
        assert run("generate", "--rows", "3", "--cols", "3", "--commodities", "4",
                   "--seed", "7", "--out", path) == 0
    assert open(a).read() == open(b).read()


def test_generate_count_out_dir(workdir):
    out = str(workdir / "set")
    assert run("generate", "--rows", "3", "--cols", "2", "--commodities", "3",
               "--seed", "1", "--count", "3", "--out-dir", out) == 0
    assert len(os.listdir(out)) == 3


def test_missing_file_data_error(workdir):
    assert run("sample", "--instance", "nope.inst", "--routine", "rss",
               "--samples-out", "s.txt") == 2


def test_solve_bnb_matches_oracle(workdir):
    inst_path = _tiny_files(workdir)
    out = str(workdir / "sol.txt")
    assert run("solve", "--instance", inst_path, "--strategy", "bnb",
               "--budget", "60", "--seed", "1", "--out", out) == 0
    text = open(out).read().splitlines()
    objective = float(text[1].split()[1])
    oracle, _ = brute_force_optimum(read_instance(inst_path))
    assert objective == pytest.approx(oracle, rel=1e-6)


def test_full_workflow(workdir):
    inst_path = _tiny_files(workdir)
    samples = str(workdir / "rss.samples")
    archive = str(workdir / "tiny.archive")
    assert run("sample", "--instance", inst_path, "--routine", "rss",
               "--budget", "8", "--per-iter", "2", "--seed", "5",
               "--samples-out", samples, "--archive", archive) == 0
    assert os.path.exists(samples) and os.path.exists(archive)

    labels = str(workdir / "tiny.labels")
    assert run("label", "--archive", archive, "--instance", inst_path,
               "--out", labels) == 0
    bits = read_labels(labels)
    assert bits.shape[0] == read_instance(inst_path).n_arcs

    model = str(workdir / "model.txt")
    assert run("train", "--instance", inst_path, "--samples", samples,
               "--labels", labels, "--family", "linear", "--w1", "0.75",
               "--w0", "0.25", "--out", model) == 0

    preds = str(workdir / "preds.txt")
    assert run("predict", "--model", model, "--instance", inst_path,
               "--samples", samples, "--out", preds) == 0
    decisions, probs = read_prediction(preds)
    assert decisions.shape[0] == probs.shape[0] == bits.shape[0]

    sol = str(workdir / "lsr.sol")
    assert run("solve", "--instance", inst_path, "--strategy", "lsr",
               "--prediction", preds, "--archive", archive,
               "--budget", "15", "--per-mip", "3", "--m0", "4",
               "--seed", "2", "--out", sol) == 0
    assert os.path.exists(sol)


def test_solve_rerunnable_identical(workdir):
    inst_path = _tiny_files(workdir)
    outs = []
    for name in ("s1.txt", "s2.txt"):
        out = str(workdir / name)
        assert run("solve", "--instance", inst_path, "--strategy", "ls",
                   "--budget", "10", "--per-mip", "3", "--m0", "4",
                   "--seed", "9", "--out", out) == 0
        outs.append(open(out).read())
    assert outs[0] == outs[1]


def test_solve_infeasible_exit_code(workdir):
    inst_path = _tiny_files(workdir)
    inst = read_instance(inst_path)
    # Archive with one feasible entry so the warm-start path has data.
    from mcfnd.io import append_archive, write_labels
    from mcfnd.model import new_solution
    from mcfnd.relaxation import solve_flow_lp
    import numpy as np

    all_open = np.ones(inst.n_arcs, dtype=np.int8)
    flows = solve_flow_lp(inst, all_open)
    archive = str(workdir / "t.archive")
    append_archive(archive, new_solution(inst, all_open, flows, 0.0, "a"), inst.name)
    # Remove-everything prediction implies the all-closed design; respect=1
    # pins the search to it, which cannot route anything.
    labels = str(workdir / "allone.labels")
    write_labels(np.ones(inst.n_arcs, dtype=np.int8), inst.name, labels)
    code = run("solve", "--instance", inst_path, "--strategy", "lbh",
               "--labels", labels, "--archive", archive, "--respect", "1.0",
               "--budget", "10", "--seed", "1", "--out", str(workdir / "x.sol"))
    assert code == 3


def test_bench_resume_and_report(workdir):
    inst_dir = workdir / "instances"
    inst_dir.mkdir()
    for seed in (1, 2):
        assert run("generate", "--topology", "circular", "--ring-size", "5",
                   "--chords", "0", "--commodities", "3", "--seed", str(seed),
                   "--capacity-ratio", "1.3,2.0",
                   "--out", str(inst_dir / f"ring{seed}.inst")) == 0
    scenarios = workdir / "scenarios.json"
    scenarios.write_text(json.dumps([
        {"name": "ls", "strategy": "ls", "m0": 4, "per_mip": 3.0},
        {"name": "bnb", "strategy": "bnb"},
    ]))
    records = str(workdir / "records")
    argv = ["bench", "--instances", str(inst_dir / "*.inst"), "--scenarios",
            str(scenarios), "--budget", "10", "--seed", "4", "--out-dir", records]
    assert run(*argv) == 0
    assert len(os.listdir(records)) == 4
    stamp = {f: os.path.getmtime(os.path.join(records, f)) for f in os.listdir(records)}
    assert run(*argv) == 0  # resume: nothing recomputed
    assert all(os.path.getmtime(os.path.join(records, f)) == stamp[f] for f in stamp)

    report = str(workdir / "report.txt")
    assert run("report", "--records", records, "--format", "txt", "--out", report) == 0
    text = open(report).read()
    assert "Primal gap" in text and "Primal integral" in text

    report2 = str(workdir / "report2.txt")
    assert run("report", "--records", records, "--format", "txt", "--out", report2) == 0
    assert open(report).read() == open(report2).read()
