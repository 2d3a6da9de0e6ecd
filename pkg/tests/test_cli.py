import numpy as np
import pytest

from papc.cli import main
from papc.io import read_image, read_signal_csv, read_trace_csv, write_signal_csv


def run_cli(args):
    return main(args)


def read_summary(path):
    out = {}
    for line in path.read_text().splitlines():
        k, _, v = line.partition("=")
        out[k] = v
    return out


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------

def test_tune_unit_conditioning(capsys):
    assert run_cli(["tune", "--kappa-a", "1", "--kappa-f", "1"]) == 0
    out = dict(line.split("=") for line in capsys.readouterr().out.splitlines())
    assert abs(float(out["rho"]) - 1.7446) <= 1e-3
    assert abs(float(out["tau"]) - 0.5732) <= 1e-3
    assert float(out["alpha"]) > 1
    assert float(out["delta_m"]) > 0


def test_tune_budget_output(capsys):
    assert run_cli(["tune", "--kappa-a", "1", "--kappa-f", "1",
                    "--eps", "1e-3", "--c-bound", "1.0"]) == 0
    out = dict(line.split("=") for line in capsys.readouterr().out.splitlines())
    from papc.solver import iteration_budget
    expect = iteration_budget(1e-3, 1.0, float(out["delta_m"]), 1.0, "primal")
    assert int(out["budget_primal"]) == expect


def test_tune_rejects_bad_conditioning(capsys):
    assert run_cli(["tune", "--kappa-a", "0.5"]) == 2


# ---------------------------------------------------------------------------
# denoise-tv
# ---------------------------------------------------------------------------

def test_denoise_tv_writes_outputs(tmp_path, capsys):
    rc = run_cli(["denoise-tv", "--n", "64", "--max-iters", "2000",
                  "--stop-tol", "1e-9", "--output-dir", str(tmp_path)])
    assert rc == 0
    recon = read_signal_csv(tmp_path / "reconstruction.csv")
    data = read_signal_csv(tmp_path / "data.csv")
    assert recon.size == 64 and data.size == 64
    trace = read_trace_csv(tmp_path / "trace.csv")
    assert trace[0].iter == 1
    summary = read_summary(tmp_path / "summary.txt")
    assert summary["problem"] == "denoise-tv"
    assert summary["stop_reason"] in ("tolerance", "budget")
    assert 0.0 < float(summary["estimated_c"]) < 1.0


def test_denoise_tv_zero_budget_emits_initial_state(tmp_path):
    rc = run_cli(["denoise-tv", "--n", "32", "--max-iters", "0",
                  "--output-dir", str(tmp_path)])
    assert rc == 0
    recon = read_signal_csv(tmp_path / "reconstruction.csv")
    np.testing.assert_array_equal(recon, np.zeros(32))
    summary = read_summary(tmp_path / "summary.txt")
    assert summary["iterations"] == "0"


def test_denoise_tv_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run_cli(["denoise-tv", "--n", "64", "--max-iters", "300",
                        "--seed", "5", "--output-dir", str(d)]) == 0
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert (a / "reconstruction.csv").read_bytes() == \
        (b / "reconstruction.csv").read_bytes()


def test_denoise_tv_invalid_tau_exits_2(tmp_path):
    rc = run_cli(["denoise-tv", "--n", "32", "--tau", "1.5",
                  "--output-dir", str(tmp_path)])
    assert rc == 2
    assert not (tmp_path / "reconstruction.csv").exists()


def test_denoise_tv_missing_input_exits_4(tmp_path):
    rc = run_cli(["denoise-tv", "--input", str(tmp_path / "nope.csv"),
                  "--output-dir", str(tmp_path)])
    assert rc == 4


def test_denoise_tv_reads_custom_input(tmp_path):
    sig = np.concatenate([np.zeros(16), np.ones(16)])
    write_signal_csv(tmp_path / "in.csv", sig)
    rc = run_cli(["denoise-tv", "--input", str(tmp_path / "in.csv"),
                  "--lam", "0.01", "--max-iters", "3000",
                  "--stop-tol", "1e-10", "--output-dir", str(tmp_path)])
    assert rc == 0
    recon = read_signal_csv(tmp_path / "reconstruction.csv")
    assert np.linalg.norm(recon - sig) <= 0.2


def test_config_file_with_flag_override(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("n=48\nmax-iters=100\nseed=3\n")
    rc = run_cli(["denoise-tv", "--config", str(conf), "--max-iters", "50",
                  "--output-dir", str(tmp_path)])
    assert rc == 0
    assert read_signal_csv(tmp_path / "reconstruction.csv").size == 48
    trace = read_trace_csv(tmp_path / "trace.csv")
    assert len(trace) == 50  # flag beats config file


def test_config_unknown_key_exits_2(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("frobnicate=1\n")
    assert run_cli(["denoise-tv", "--config", str(conf),
                    "--output-dir", str(tmp_path)]) == 2


# ---------------------------------------------------------------------------
# smre
# ---------------------------------------------------------------------------

def test_smre1d_outputs_and_violations(tmp_path):
    rc = run_cli(["smre1d", "--n", "128", "--levels", "4", "--max-iters", "4000",
                  "--stop-tol", "1e-6", "--output-dir", str(tmp_path)])
    assert rc == 0
    summary = read_summary(tmp_path / "summary.txt")
    assert summary["problem"] == "smre1d"
    assert int(summary["constraints"]) == sum(128 - l + 1 for l in range(1, 5))
    assert int(summary["dual_blocks"]) == 10
    viol = (tmp_path / "violations.csv").read_text().splitlines()
    assert viol[0] == "level,window_len,threshold,violation"
    assert len(viol) == 5
    assert (tmp_path / "reconstruction.csv").exists()


def test_smre1d_objective_switch_keeps_constraints(tmp_path):
    outs = {}
    for obj in ("dirichlet_energy", "smoothed_tv"):
        d = tmp_path / obj
        rc = run_cli(["smre1d", "--n", "64", "--levels", "3", "--objective", obj,
                      "--max-iters", "200", "--output-dir", str(d)])
        assert rc == 0
        outs[obj] = read_summary(d / "summary.txt")
    a, b = outs["dirichlet_energy"], outs["smoothed_tv"]
    assert a["constraints"] == b["constraints"]
    assert a["dual_blocks"] == b["dual_blocks"]
    assert a["q0"] == b["q0"]


def test_smre2d_identity_forward(tmp_path):
    rc = run_cli(["smre2d", "--n", "16", "--levels", "2", "--psf", "none",
                  "--max-iters", "150", "--output-dir", str(tmp_path)])
    assert rc == 0
    recon = read_image(tmp_path / "reconstruction.img")
    assert recon.shape == (16, 16)
    assert (tmp_path / "reconstruction.pgm").exists()
    summary = read_summary(tmp_path / "summary.txt")
    assert summary["psf"] == "none"


def test_smre2d_gaussian_psf(tmp_path):
    rc = run_cli(["smre2d", "--n", "16", "--levels", "2",
                  "--psf", "gaussian:5,1.0", "--max-iters", "100",
                  "--output-dir", str(tmp_path)])
    assert rc == 0
    psf = np.loadtxt(tmp_path / "psf.csv", delimiter=",")
    assert psf.shape == (5, 5)
    assert abs(psf.sum() - 1.0) <= 1e-12


def test_smre2d_bad_psf_string_exits_2(tmp_path):
    assert run_cli(["smre2d", "--n", "16", "--psf", "gaussian:nope",
                    "--output-dir", str(tmp_path)]) == 2


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def test_certify_quadratic_passes(tmp_path, capsys):
    write_signal_csv(tmp_path / "point.csv", np.zeros(4))
    rc = run_cli(["certify", "--objective", "quadratic",
                  "--point", str(tmp_path / "point.csv"),
                  "--mu", "1.0", "--radius", "2.0"])
    assert rc == 0
    out = dict(line.split("=") for line in capsys.readouterr().out.splitlines())
    assert out["passed"] == "true"


def test_certify_huber_linear_branch_fails(capsys):
    rc = run_cli(["certify", "--objective", "huber", "--at", "2.5",
                  "--alpha", "0.25", "--radius", "2.5", "--mu", "1e-6"])
    assert rc == 0
    out = dict(line.split("=") for line in capsys.readouterr().out.splitlines())
    assert out["passed"] == "false"
    assert float(out["worst_slack"]) < 0


def test_certify_modified_huber_kink(capsys):
    rc = run_cli(["certify", "--objective", "modified-huber", "--at", "0",
                  "--alpha", "1.0", "--eps-width", "0.1",
                  "--radius", "0.9", "--mu", "1.0", "--samples", "512"])
    assert rc == 0
    out = dict(line.split("=") for line in capsys.readouterr().out.splitlines())
    assert out["passed"] == "true"


def test_certify_deterministic(capsys):
    args = ["certify", "--objective", "huber", "--at", "0.0",
            "--alpha", "0.5", "--radius", "0.4", "--mu", "1.9", "--seed", "7"]
    assert run_cli(args) == 0
    first = capsys.readouterr().out
    assert run_cli(args) == 0
    assert capsys.readouterr().out == first


def test_help_lists_keys(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["denoise-tv", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for key in ("--lam", "--tau", "--sigma", "--noise-sd", "--stop-tol",
                "--max-iters", "--seed", "--output-dir", "--threads"):
        assert key in text
        assert "default" in text
