import csv
import math
import re
import subprocess
import sys

import pytest

from annealbench.cli import main
from annealbench.instances import ProblemClass
from annealbench.solvers import RunRecord, SimulatedAnnealing, Solver, write_run_log

TINY = """\
solvers = SA, NMFA
problem_classes = SK, MAXCUT
n_grid = 6, 8
t_grid = 5, 20
instances_per_n = 2
runs_per_instance = 4
batches = 2
master_seed = 11
bootstrap_resamples = 100
time_basis = ops
"""


def write_cfg(tmp_path, text, name="exp.conf"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(cmd, cfg, out, *extra):
    return main([cmd, "--config", cfg, "--out", str(out), *extra])


def synthetic_records(cells, solver=Solver.NMFA, cls=ProblemClass.SK, batches=10):
    """``cells`` maps (n, t) -> list of per-batch success counts (10 runs per batch)."""
    out = []
    for (n, t), per_batch in sorted(cells.items()):
        for b, hits in enumerate(per_batch):
            for r in range(10):
                ok = r < hits
                out.append(RunRecord(len(out), solver, cls, n, 1000 + n, len(out), float(t), b % batches,
                                     -1.0 if ok else 0.0, -1.0, True, ok))
    return out


def test_generate_counts_and_rerun_identical(tmp_path):
    cfg = write_cfg(tmp_path, "problem_classes = SK\nn_grid = 4, 6, 8\ninstances_per_n = 5\nmaster_seed = 3\n")
    assert run("generate", cfg, tmp_path / "a") == 0
    assert run("generate", cfg, tmp_path / "b") == 0
    files = sorted(p.name for p in (tmp_path / "a" / "instances").glob("*.ising"))
    assert len(files) == 15
    for name in files:
        assert (tmp_path / "a" / "instances" / name).read_bytes() == (tmp_path / "b" / "instances" / name).read_bytes()


def test_solve_missing_instance(tmp_path, capsys):
    cfg = write_cfg(tmp_path, TINY)
    out = tmp_path / "o"
    assert run("generate", cfg, out) == 0
    victim = sorted((out / "instances").glob("*.ising"))[0]
    victim.unlink()
    assert run("solve", cfg, out) == 3
    assert victim.name in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "n_grid = 4, 6\nsweeps_per_run = 10\n")
    assert run("generate", cfg, tmp_path) == 2
    assert "exp.conf:2: unknown key 'sweeps_per_run'" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["n_grid = 6, 4\n", "runs_per_instance = 5\nbatches = 2\n", "p_target = 1.0\n",
                                  "time_basis = cpu\n", "n_grid = 4\nn_grid = 6\n", "nmfa_alpha = 1.0\n"])
def test_bad_config_values(tmp_path, text):
    assert run("generate", write_cfg(tmp_path, text), tmp_path) == 2


def test_missing_config_file(tmp_path):
    assert main(["generate", "--config", str(tmp_path / "nope.conf")]) == 2


def test_full_pipeline_two_solvers(tmp_path):
    cfg = write_cfg(tmp_path, TINY)
    out = tmp_path / "o"
    for cmd in ("generate", "solve"):
        assert run(cmd, cfg, out) == 0
    with open(out / "runs.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 2 * 2 * 2 * 2 * 4
    assert all(r["ground_exact"] == "true" and r["success"] in ("true", "false") for r in rows)
    # 2 t values per N: every envelope point is on the grid edge, so fits are refused
    assert run("analyze", cfg, out) == 4
    with open(out / "gaps.csv", newline="") as fh:
        gaps = list(csv.DictReader(fh))
    assert sorted(g["problem_class"] for g in gaps) == ["MAXCUT", "SK"]
    report = (out / "report.md").read_text()
    assert "envelope too small to support trustworthy data analysis" in report
    assert run("plot", cfg, out) == 0
    assert len(list((out / "plots").glob("*.svg"))) == 4


def test_solve_deterministic_except_timing(tmp_path):
    cfg = write_cfg(tmp_path, TINY)
    logs = []
    for name in ("a", "b"):
        out = tmp_path / name
        run("generate", cfg, out)
        run("solve", cfg, out)
        with open(out / "runs.csv", newline="") as fh:
            logs.append([{k: v for k, v in r.items() if k != "wall_ns"} for r in csv.DictReader(fh)])
    assert logs[0] == logs[1]


def test_solve_truncated(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, TINY)
    out = tmp_path / "o"
    run("generate", cfg, out)
    calls = {"n": 0}
    original = SimulatedAnnealing.solve

    def flaky(self, p, t, seed):
        calls["n"] += 1
        if calls["n"] > 7:
            raise KeyboardInterrupt
        return original(self, p, t, seed)

    monkeypatch.setattr(SimulatedAnnealing, "solve", flaky)
    monkeypatch.setenv("ANNEALBENCH_THREADS", "1")
    assert run("solve", cfg, out) == 1
    lines = (out / "runs.csv").read_text().splitlines()
    assert lines[-1] == "#truncated,KeyboardInterrupt"
    assert len(lines) == 1 + 7 + 1


def test_analyze_malformed_log(tmp_path, capsys):
    cfg = write_cfg(tmp_path, TINY)
    recs = synthetic_records({(8, 10): [1] * 10, (8, 100): [5] * 10})
    path = tmp_path / "runs.csv"
    write_run_log(path, recs)
    lines = path.read_text().splitlines()
    lines[5] = lines[5].replace(",true,", ",maybe,")
    path.write_text("\n".join(lines) + "\n")
    assert run("analyze", cfg, tmp_path / "o", "--log", str(path)) == 3
    assert re.search(r"runs\.csv:6:", capsys.readouterr().err)


def test_postproc_factor_from_batches(tmp_path):
    cfg = write_cfg(tmp_path, "solvers = NMFA\nbatches = 10\nruns_per_instance = 100\ntime_basis = ops\n")
    # pooled p_raw = 10/100 = 0.1, best batch p_post = 9/10 = 0.9
    recs = synthetic_records({(10, 10): [0] * 10, (10, 100): [9, 1] + [0] * 8})
    path = tmp_path / "runs.csv"
    write_run_log(path, recs)
    out = tmp_path / "o"
    run("analyze", cfg, out, "--log", str(path))
    with open(out / "postproc.csv", newline="") as fh:
        (row,) = list(csv.DictReader(fh))
    assert float(row["p_raw"]) == 0.1 and float(row["p_post"]) == 0.9
    assert float(row["speedup_factor"]) == pytest.approx(21.854, abs=1e-3)
    assert "21.85" in (out / "report.md").read_text()


def smooth_cells(ns=(8, 12, 16, 20, 24), ts=(1, 8, 64, 512)):
    # p(N, t) = 0.5 (1 - exp(-(t / tau)^2)) with tau = 2^(N/4): the TTS optimum is interior
    cells = {}
    for n in ns:
        tau = 2.0 ** (n / 4)
        for t in ts:
            hits = int(round(100 * 0.5 * (1 - math.exp(-((t / tau) ** 2)))))
            cells[n, t] = [hits // 10 + (1 if b < hits % 10 else 0) for b in range(10)]
    return cells


def test_refusal_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "solvers = NMFA\nbatches = 10\nruns_per_instance = 100\n")
    path = tmp_path / "runs.csv"
    write_run_log(path, synthetic_records(smooth_cells(ns=(8, 12, 16))))
    assert run("analyze", cfg, tmp_path / "o", "--log", str(path)) == 4
    assert "envelope too small to support trustworthy data analysis" in capsys.readouterr().err
    assert (tmp_path / "o" / "curves.csv").exists()


def test_plot_svg_contents(tmp_path):
    cfg = write_cfg(tmp_path, "solvers = NMFA\nbatches = 10\nruns_per_instance = 100\n")
    path = tmp_path / "runs.csv"
    write_run_log(path, synthetic_records(smooth_cells()))
    out = tmp_path / "o"
    assert run("analyze", cfg, out, "--log", str(path)) == 0
    assert run("plot", cfg, out) == 0
    svg = (out / "plots" / "nmfa_sk.svg").read_text()
    assert svg.count("<polyline") == 5
    assert 'class="fit-extrapolated"' in svg and "stroke-dasharray" in svg
    assert "insufficient data" not in svg
    fits = (out / "fits.txt").read_text()
    assert "EXTRAPOLATED" in fits and "INTERPOLATED" in fits


def test_plot_insufficient_data(tmp_path):
    cfg = write_cfg(tmp_path, "solvers = NMFA\nbatches = 10\nruns_per_instance = 100\n")
    path = tmp_path / "runs.csv"
    # one t value per N: no envelope can be formed
    write_run_log(path, synthetic_records({(8, 10): [5] * 10, (12, 10): [3] * 10}))
    out = tmp_path / "o"
    assert run("analyze", cfg, out, "--log", str(path)) == 4
    assert run("plot", cfg, out) == 0
    assert "insufficient data" in (out / "plots" / "nmfa_sk.svg").read_text()


def test_plot_before_analyze(tmp_path):
    cfg = write_cfg(tmp_path, TINY)
    assert run("plot", cfg, tmp_path / "empty") == 3


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "annealbench", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "generate" in res.stdout


def test_generate_defers_ground_truth_above_cap(tmp_path):
    cfg = write_cfg(tmp_path, "problem_classes = MAXCUT\nn_grid = 4, 8\ninstances_per_n = 1\nbrute_force_cap = 6\n")
    out = tmp_path / "o"
    assert run("generate", cfg, out) == 0
    with open(out / "instances" / "index.csv", newline="") as fh:
        truth = {int(r["n"]): r["ground_truth"] for r in csv.DictReader(fh)}
    assert truth == {4: "brute-force", 8: "deferred"}
    assert (out / "instances" / "maxcut_n8_i0.ising").exists()
