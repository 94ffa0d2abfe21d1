import math
import os
import subprocess
import sys

import numpy as np
import pytest

from gradstep.cli import main
from gradstep.optimizer import read_trajectory_csv
from gradstep.problems import load_problem


def _gen(tmp_path, name="p.txt", rows=8, cols=3, seed=5, extra=()):
    path = str(tmp_path / name)
    rc = main(["gen", "--rows", str(rows), "--cols", str(cols), "--seed", str(seed),
               "--normalize", "--out", path, *extra])
    assert rc == 0
    return path


def test_gen_round_trip_least_squares(tmp_path):
    path = _gen(tmp_path)
    problem = load_problem(path)
    assert problem.kind == "least_squares"
    assert problem.A.shape == (8, 3)
    assert problem.rows_normalized
    assert problem.optimum is not None
    # consistent system: planted point has zero residual everywhere
    assert np.max(np.abs(problem.A @ problem.optimum.x_star - problem.b)) < 1e-12


def test_gen_same_flags_identical_files(tmp_path):
    a = _gen(tmp_path, name="a.txt")
    b = _gen(tmp_path, name="b.txt")
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_gen_noise_drops_the_oracle(tmp_path):
    path = _gen(tmp_path, extra=("--noise", "0.5"))
    assert load_problem(path).optimum is None


def test_gen_logistic_labels(tmp_path):
    path = str(tmp_path / "logit.txt")
    rc = main(["gen", "--kind", "logit", "--rows", "10", "--cols", "4",
               "--seed", "3", "--out", path])
    assert rc == 0
    problem = load_problem(path)
    assert problem.kind == "logistic"
    assert set(np.unique(problem.b)) <= {0.0, 1.0}


def test_gen_rejects_bad_dimensions(tmp_path, capsys):
    rc = main(["gen", "--rows", "0", "--cols", "3",
               "--out", str(tmp_path / "x.txt")])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_run_writes_trajectory(tmp_path):
    problem = _gen(tmp_path)
    out = str(tmp_path / "traj.csv")
    rc = main(["run", "--problem", problem, "--rule", "stops",
               "--iters", "30", "--out", out])
    assert rc == 0
    rows = read_trajectory_csv(out)
    assert len(rows) >= 2
    assert rows[0].iter == 0
    # step-valued rule on a least-squares problem: improvement column is filled
    assert math.isfinite(rows[0].improvement)
    assert rows[0].improvement >= 1.0 - 1e-10


def test_run_improvement_left_empty_for_scaling_rules(tmp_path):
    problem = _gen(tmp_path)
    out = str(tmp_path / "traj.csv")
    rc = main(["run", "--problem", problem, "--rule", "grads", "--eta", "auto",
               "--iters", "10", "--out", out])
    assert rc == 0
    for row in read_trajectory_csv(out):
        assert math.isnan(row.improvement)


def test_run_same_seed_is_byte_identical(tmp_path):
    problem = _gen(tmp_path)
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    args = ["run", "--problem", problem, "--rule", "stop", "--batch", "4",
            "--iters", "25", "--seed", "11"]
    assert main(args + ["--out", a]) == 0
    assert main(args + ["--out", b]) == 0
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_run_divergence_exits_3(tmp_path, capsys):
    problem = _gen(tmp_path)
    out = str(tmp_path / "traj.csv")
    with np.errstate(over="ignore", invalid="ignore"):
        rc = main(["run", "--problem", problem, "--rule", "constant",
                   "--eta", "1e200", "--iters", "10", "--out", out])
    assert rc == 3
    capsys.readouterr()


def test_run_missing_oracle_exits_1(tmp_path, capsys):
    logit = str(tmp_path / "logit.txt")
    assert main(["gen", "--kind", "logit", "--rows", "6", "--cols", "2",
                 "--out", logit]) == 0
    rc = main(["run", "--problem", logit, "--rule", "stops",
               "--out", str(tmp_path / "t.csv")])
    assert rc == 1
    assert "oracle" in capsys.readouterr().err


def test_run_eta_rules_require_eta(tmp_path, capsys):
    problem = _gen(tmp_path)
    rc = main(["run", "--problem", problem, "--rule", "grad",
               "--out", str(tmp_path / "t.csv")])
    assert rc == 1
    assert "eta" in capsys.readouterr().err


def test_run_eigenvector_start(tmp_path):
    problem = _gen(tmp_path)
    out = str(tmp_path / "traj.csv")
    rc = main(["run", "--problem", problem, "--rule", "stops", "--iters", "5",
               "--start", "eig:max", "--start-scale", "2.0", "--out", out])
    assert rc == 0
    rows = read_trajectory_csv(out)
    assert rows[0].dist_sq == pytest.approx(4.0, rel=1e-12)


def test_run_start_file_roundtrip_and_length_check(tmp_path, capsys):
    problem = _gen(tmp_path)
    good = tmp_path / "x0.txt"
    good.write_text("0.5 -1.0 2.0\n")
    rc = main(["run", "--problem", problem, "--rule", "sps", "--iters", "3",
               "--start", "file:%s" % good, "--out", str(tmp_path / "t.csv")])
    assert rc == 0
    bad = tmp_path / "short.txt"
    bad.write_text("1.0 2.0\n")
    rc = main(["run", "--problem", problem, "--rule", "sps", "--iters", "3",
               "--start", "file:%s" % bad, "--out", str(tmp_path / "t.csv")])
    assert rc == 1
    assert "dimension" in capsys.readouterr().err


def test_compare_identical_rules_factor_exactly_one(tmp_path):
    problem = _gen(tmp_path)
    out_dir = str(tmp_path / "cmp")
    rc = main(["compare", "--problem", problem, "--rule-a", "stops",
               "--rule-b", "stops", "--iters", "20", "--out-dir", out_dir])
    assert rc == 0
    with open(os.path.join(out_dir, "improvement_0_zeros.csv")) as fh:
        lines = fh.read().strip().split("\n")
    assert lines[0] == "iter,factor"
    factors = [float(line.split(",")[1]) for line in lines[1:]]
    assert factors and all(f == 1.0 for f in factors)


def test_compare_adaptive_vs_tuned_constant(tmp_path):
    out_dir = str(tmp_path / "cmp")
    rc = main(["compare", "--systems", "2", "--rows", "5", "--cols", "2",
               "--iters", "30", "--out-dir", out_dir])
    assert rc == 0
    for i in range(2):
        with open(os.path.join(out_dir, "improvement_%d_zeros.csv" % i)) as fh:
            lines = fh.read().strip().split("\n")[1:]
        factors = [float(line.split(",")[1]) for line in lines]
        assert factors
        assert min(factors) >= 1.0 - 1e-10
        pair = os.path.join(out_dir, "compare_%d_zeros.csv" % i)
        with open(pair) as fh:
            header = fh.readline().strip().split(",")
        assert header == ["iter", "dist_sq_stops", "dist_sq_constant",
                          "f_stops", "f_constant"]
        for name in ("convergence_%d_zeros.png" % i, "improvement_%d_zeros.png" % i):
            assert os.path.getsize(os.path.join(out_dir, name)) > 0


def test_compare_multiple_starts(tmp_path):
    problem = _gen(tmp_path)
    out_dir = str(tmp_path / "cmp")
    rc = main(["compare", "--problem", problem, "--iters", "15",
               "--start", "zeros", "--start", "eig:min",
               "--out-dir", out_dir])
    assert rc == 0
    assert os.path.exists(os.path.join(out_dir, "compare_0_zeros.csv"))
    assert os.path.exists(os.path.join(out_dir, "compare_0_eig_min.csv"))


@pytest.mark.parametrize("theorem,extra", [
    (1, ()),
    (2, ()),
    (3, ("--seeds", "5", "--iters", "150")),
    (4, ("--seeds", "5", "--iters", "150")),
    (5, ("--seeds", "3", "--iters", "150")),
])
def test_verify_theorems_pass(tmp_path, theorem, extra):
    out = str(tmp_path / "report.csv")
    rc = main(["verify", "--theorem", str(theorem), "--out", out, *extra])
    assert rc == 0
    with open(out) as fh:
        lines = fh.read().strip().split("\n")
    assert lines[0] == "check,step_or_seed,lhs,rhs,pass"
    assert len(lines) > 1
    assert all(line.rsplit(",", 1)[1] == "1" for line in lines[1:])
    assert os.path.getsize(str(tmp_path / "report.png")) > 0


def test_verify_detects_broken_assumptions(tmp_path, capsys):
    # a non-interpolating system: the interpolation-dependent gap bound must
    # be reported as violated, not silently passed
    path = tmp_path / "gap.txt"
    path.write_text("ls 2 1\n1\n1\n3 1\nxstar 2\n")
    out = str(tmp_path / "report.csv")
    rc = main(["verify", "--theorem", "5", "--problem", str(path),
               "--seeds", "2", "--iters", "200", "--out", out])
    assert rc == 2
    with open(out) as fh:
        lines = fh.read().strip().split("\n")[1:]
    assert any(line.rsplit(",", 1)[1] == "0" for line in lines)
    capsys.readouterr()


def test_unknown_subcommand_exits_1(capsys):
    assert main(["explode"]) == 1
    capsys.readouterr()


def test_missing_required_flag_exits_1(tmp_path, capsys):
    assert main(["run", "--problem", str(tmp_path / "nope.txt")]) == 1
    capsys.readouterr()


def test_missing_problem_file_exits_1(tmp_path, capsys):
    rc = main(["run", "--problem", str(tmp_path / "nope.txt"),
               "--rule", "sps", "--out", str(tmp_path / "t.csv")])
    assert rc == 1
    capsys.readouterr()


def test_help_exits_zero():
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0


def test_module_entry_point(tmp_path):
    env = dict(os.environ)
    src = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    proc = subprocess.run(
        [sys.executable, "-m", "gradstep", "gen", "--rows", "4", "--cols", "2",
         "--out", str(tmp_path / "p.txt")],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    assert load_problem(str(tmp_path / "p.txt")).A.shape == (4, 2)
