"""Experiment front end: reproducible runs wired from key=value configs.

Subcommands
-----------
``denoise-tv``
    TV denoising of a 1D signal (synthetic or from CSV); writes the
    reconstruction, the noisy data, a per-iteration trace, and a summary.
``smre1d`` / ``smre2d``
    Multiresolution-constrained denoising (and deconvolution in 2D) with
    per-level violation reporting.
``tune``
    Rate-optimal step sizes and the implied iteration budget from the two
    condition numbers.
``certify``
    Sampled quadratic-supportability check of a named objective at a point.

Every option can also come from a ``--config`` file holding ``key=value``
lines (keys match the long option names); explicit flags win.  All outputs
are written atomically (temp file plus rename), so a failing run leaves no
partial files behind.  Exit codes: 0 success, 2 configuration error,
3 numerical divergence, 4 I/O or format error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

import numpy as np

from . import io as pio
from .errors import (
    DimensionError,
    DivergenceError,
    FormatError,
    MetricError,
    ParameterError,
    ParseError,
    TuningError,
)
from .functions import (
    huber_grad,
    huber_value,
    modified_huber_value,
    pqs_certificate,
    quadratic_fidelity,
    SmoothObjective,
)
from .linops import convolution_operator, read_psf_csv
from .problems import (
    SmreSpec,
    TvDenoiseSpec,
    build_tv_denoise,
    constraint_violation,
    enumerate_windows,
    enumerate_windows_2d,
    q_schedule,
    solve_smre_compact,
)
from .solver import (
    SolverConfig,
    default_sigma,
    h_metric,
    iteration_budget,
    make_config,
    solve,
    tune_parameters,
    validate_params,
)


def _write_text(path, text: str) -> None:
    pio._atomic_write_bytes(path, text.encode("ascii"))


def _summary_lines(pairs) -> str:
    return "".join(f"{k}={v}\n" for k, v in pairs)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _load_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected key=value, got {line!r}", line=lineno)
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _merge_config(args: argparse.Namespace, schema) -> dict:
    """Layer defaults, config-file values, and explicit flags (strongest)."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
    known = {name for name, _, _, _ in schema}
    for key in file_values:
        if key not in known:
            raise ParameterError(f"unknown config key {key!r}")
    out = {}
    for name, typ, default, _help in schema:
        cli_value = getattr(args, name)
        if cli_value is not None:
            out[name] = cli_value
        elif name in file_values:
            raw = file_values[name]
            try:
                out[name] = (raw.lower() in ("1", "true", "yes")
                             if typ is bool else typ(raw))
            except ValueError:
                raise ParameterError(f"config key {name}: cannot parse {raw!r}")
        else:
            out[name] = default
    return out


def _add_schema(parser: argparse.ArgumentParser, schema) -> None:
    parser.add_argument("--config", metavar="FILE", default=None,
                        help="key=value file; explicit flags override it")
    for name, typ, default, help_text in schema:
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            parser.add_argument(flag, default=None, metavar="BOOL",
                                type=lambda s: s.lower() in ("1", "true", "yes"),
                                help=f"{help_text} (default {default})")
        else:
            parser.add_argument(flag, type=typ, default=None,
                                help=f"{help_text} (default {default})")


_RUN_SCHEMA_COMMON = [
    ("tau", float, None, "primal step size (must satisfy tau < 1/L_f)"),
    ("sigma", float, None, "dual step size; default 1/(tau*lambda_max)"),
    ("max_iters", int, 5000, "iteration budget"),
    ("stop_tol", float, 1e-8, "stop when the weighted step norm drops below"),
    ("seed", int, 0, "seed for synthetic data generation"),
    ("threads", int, 1, "dual-block worker threads (generic route only)"),
    ("output_dir", str, ".", "directory receiving result files"),
]

_DENOISE_SCHEMA = [
    ("n", int, 256, "signal length for synthetic data"),
    ("noise_sd", float, 0.03, "additive Gaussian noise level"),
    ("lam", float, 0.05, "regularization weight of the difference penalty"),
    ("signal", str, "blocks", "synthetic kind: blocks or ramp"),
    ("input", str, None, "CSV with the noisy signal (overrides synthesis)"),
] + _RUN_SCHEMA_COMMON

_SMRE1D_SCHEMA = [
    ("n", int, 512, "signal length for synthetic data"),
    ("levels", int, 10, "number of window lengths (1..levels)"),
    ("noise_sd", float, 0.02, "additive Gaussian noise level"),
    ("q0", float, None, "level-1 threshold; default 3*noise_sd"),
    ("scale_f", float, 0.93, "per-level threshold decay factor"),
    ("objective", str, "dirichlet_energy",
     "smooth regularizer: dirichlet_energy or smoothed_tv"),
    ("alpha", float, 0.25, "smoothing width of the huberized penalty"),
    ("signal", str, "blocks", "synthetic kind: blocks or ramp"),
    ("input", str, None, "CSV with the observed signal (overrides synthesis)"),
] + [row for row in _RUN_SCHEMA_COMMON]

_SMRE2D_SCHEMA = [
    ("n", int, 64, "image side length for synthetic data"),
    ("levels", int, 3, "number of window sizes (1..levels)"),
    ("noise_sd", float, 0.02, "additive Gaussian noise level"),
    ("q0", float, 0.07, "level-1 threshold"),
    ("scale_f", float, 1.0, "per-level threshold decay factor"),
    ("objective", str, "smoothed_tv",
     "smooth regularizer: dirichlet_energy or smoothed_tv"),
    ("alpha", float, 0.25, "smoothing width of the huberized penalty"),
    ("image", str, "stripes", "synthetic kind: stripes or phantom"),
    ("input", str, None, "image file with the observation (overrides synthesis)"),
    ("psf", str, "gaussian:7,1.2",
     "forward blur: none, gaussian:k,width, or a CSV kernel path"),
] + [row for row in _RUN_SCHEMA_COMMON]

_TUNE_SCHEMA = [
    ("kappa_a", float, 1.0, "condition number of the stacked coupling"),
    ("kappa_f", float, 1.0, "condition modulus of the smooth part"),
    ("l_f", float, 1.0, "gradient Lipschitz constant of the smooth part"),
    ("lambda_max", float, 1.0, "largest Gram eigenvalue of the coupling"),
    ("eps", float, None, "optional accuracy target for the iteration budget"),
    ("c_bound", float, 1.0, "initial distance bound used by the budget"),
]

_CERTIFY_SCHEMA = [
    ("objective", str, "quadratic",
     "quadratic, huber, or modified-huber"),
    ("point", str, None, "CSV with the certification point (quadratic)"),
    ("data", str, None, "CSV with the quadratic's data vector (default zeros)"),
    ("at", float, 0.0, "scalar certification point (huber objectives)"),
    ("radius", float, 1.0, "ball radius around the point"),
    ("mu", float, 1.0, "candidate quadratic-support constant"),
    ("samples", int, 256, "number of sampled probe points"),
    ("seed", int, 0, "sampling seed"),
    ("alpha", float, 0.25, "huber width parameter"),
    ("eps_width", float, 0.1, "kink half-width of the modified huber"),
]


def _trace_path(cfg, name):
    os.makedirs(cfg["output_dir"], exist_ok=True)
    return os.path.join(cfg["output_dir"], name)


def _solver_summary(report, cfg_pairs):
    return cfg_pairs + [
        ("iterations", report.iterations_run),
        ("stop_reason", report.stop_reason),
        ("final_step_H", _fmt(float(report.steps_H[-1]) if report.iterations_run else 0.0)),
        ("estimated_c", _fmt(report.estimated_rate_c)),
        ("delta_certified", _fmt(report.delta_certified)),
        ("aposteriori_bound", _fmt(report.aposteriori_bound)),
    ]


def cmd_denoise_tv(cfg: dict) -> int:
    if cfg["input"]:
        b = pio.read_signal_csv(cfg["input"])
        clean = None
    else:
        clean, b = pio.synth_signal(cfg["signal"], cfg["n"], cfg["noise_sd"],
                                    cfg["seed"])
    prob = build_tv_denoise(TvDenoiseSpec(b, cfg["lam"]))
    tau = cfg["tau"] if cfg["tau"] is not None else 0.05
    run_cfg = make_config(prob, tau=tau, sigma=cfg["sigma"],
                          max_iters=cfg["max_iters"], stop_tol=cfg["stop_tol"],
                          record_trace=True, seed=cfg["seed"],
                          parallel_dual=cfg["threads"] > 1,
                          threads=cfg["threads"])
    state, report = solve(prob, run_cfg)

    pio.write_signal_csv(_trace_path(cfg, "reconstruction.csv"), state.x)
    pio.write_signal_csv(_trace_path(cfg, "data.csv"), b)
    if clean is not None:
        pio.write_signal_csv(_trace_path(cfg, "clean.csv"), clean)
    pio.write_trace_csv(_trace_path(cfg, "trace.csv"), report.trace or [])
    pairs = [("problem", "denoise-tv"), ("n", b.size), ("lam", _fmt(cfg["lam"])),
             ("tau", _fmt(run_cfg.tau)), ("sigma", _fmt(run_cfg.sigma)),
             ("seed", cfg["seed"])]
    _write_text(_trace_path(cfg, "summary.txt"),
                _summary_lines(_solver_summary(report, pairs)))
    print(f"denoise-tv: {report.iterations_run} iterations, "
          f"stop={report.stop_reason}, c={_fmt(report.estimated_rate_c)}")
    return 0


def _smre_violation_report(x, spec, windows):
    qs = q_schedule(spec.q0, spec.scale_f, spec.levels)
    v = constraint_violation(x, spec, windows)
    lines = ["level,window_len,threshold,violation"]
    for l in range(1, spec.levels + 1):
        lines.append(f"{l},{l},{qs[l - 1]:.17g},{v[l - 1]:.17g}")
    return v, "\n".join(lines) + "\n"


def cmd_smre1d(cfg: dict) -> int:
    if cfg["input"]:
        b = pio.read_signal_csv(cfg["input"])
        clean = None
    else:
        clean, b = pio.synth_signal(cfg["signal"], cfg["n"], cfg["noise_sd"],
                                    cfg["seed"])
    q0 = cfg["q0"] if cfg["q0"] is not None else 3.0 * cfg["noise_sd"]
    spec = SmreSpec(b=b, q0=q0, scale_f=cfg["scale_f"], levels=cfg["levels"],
                    objective=cfg["objective"], alpha=cfg["alpha"])
    tau = cfg["tau"] if cfg["tau"] is not None else 0.02
    run = solve_smre_compact(spec, tau=tau, sigma=cfg["sigma"],
                             max_iters=cfg["max_iters"],
                             stop_tol=cfg["stop_tol"], record_trace=True)
    report = run.report
    windows = enumerate_windows(b.size, cfg["levels"])
    v, vtext = _smre_violation_report(run.x, spec, windows)

    pio.write_signal_csv(_trace_path(cfg, "reconstruction.csv"), run.x)
    pio.write_signal_csv(_trace_path(cfg, "data.csv"), b)
    if clean is not None:
        pio.write_signal_csv(_trace_path(cfg, "clean.csv"), clean)
    pio.write_trace_csv(_trace_path(cfg, "trace.csv"), report.trace or [])
    _write_text(_trace_path(cfg, "violations.csv"), vtext)
    pairs = [("problem", "smre1d"), ("n", b.size), ("levels", cfg["levels"]),
             ("q0", _fmt(q0)), ("scale_f", _fmt(cfg["scale_f"])),
             ("objective", cfg["objective"]), ("tau", _fmt(tau)),
             ("constraints", windows.total_constraints),
             ("dual_blocks", windows.dual_block_count),
             ("max_violation", _fmt(float(np.max(v)))),
             ("seed", cfg["seed"])]
    _write_text(_trace_path(cfg, "summary.txt"),
                _summary_lines(_solver_summary(report, pairs)))
    print(f"smre1d: {report.iterations_run} iterations, stop={report.stop_reason}, "
          f"c={_fmt(report.estimated_rate_c)}, max violation {np.max(v):.3e}")
    return 0


def _forward_from_option(psf_option: Optional[str], n: int):
    if psf_option in (None, "", "none", "identity"):
        return None, None
    if psf_option.startswith("gaussian:"):
        try:
            k_str, w_str = psf_option.split(":", 1)[1].split(",")
            psf = pio.gaussian_psf(int(k_str), float(w_str))
        except ValueError:
            raise ParameterError(f"cannot parse psf option {psf_option!r}")
    else:
        psf = read_psf_csv(psf_option)
    return convolution_operator(n, psf), psf


def cmd_smre2d(cfg: dict) -> int:
    n = cfg["n"]
    forward, psf = _forward_from_option(cfg["psf"], n)
    if cfg["input"]:
        b = pio.read_image(cfg["input"])
        n = b.shape[0]
        if forward is not None and forward.domain_dim != n * n:
            forward, psf = _forward_from_option(cfg["psf"], n)
        clean = None
    else:
        clean, _ = pio.synth_image(cfg["image"], n, 0.0, cfg["seed"])
        blurred = (forward.apply(clean.ravel()).reshape(n, n)
                   if forward is not None else clean)
        b = blurred + pio.gaussian_noise((n, n), cfg["noise_sd"], cfg["seed"])
    spec = SmreSpec(b=b, q0=cfg["q0"], scale_f=cfg["scale_f"],
                    levels=cfg["levels"], forward=forward,
                    objective=cfg["objective"], alpha=cfg["alpha"])
    tau = cfg["tau"] if cfg["tau"] is not None else 0.02
    run = solve_smre_compact(spec, tau=tau, sigma=cfg["sigma"],
                             max_iters=cfg["max_iters"],
                             stop_tol=cfg["stop_tol"], record_trace=True)
    report = run.report
    windows = enumerate_windows_2d(n, cfg["levels"])
    v, vtext = _smre_violation_report(run.x, spec, windows)

    pio.write_image(_trace_path(cfg, "reconstruction.img"), run.x.reshape(n, n))
    pio.write_image(_trace_path(cfg, "reconstruction.pgm"), run.x.reshape(n, n))
    pio.write_image(_trace_path(cfg, "data.img"), b)
    if clean is not None:
        pio.write_image(_trace_path(cfg, "clean.img"), clean)
    if psf is not None:
        pio.write_psf_csv(_trace_path(cfg, "psf.csv"), psf)
    pio.write_trace_csv(_trace_path(cfg, "trace.csv"), report.trace or [])
    _write_text(_trace_path(cfg, "violations.csv"), vtext)
    pairs = [("problem", "smre2d"), ("n", n), ("levels", cfg["levels"]),
             ("q0", _fmt(cfg["q0"])), ("objective", cfg["objective"]),
             ("alpha", _fmt(cfg["alpha"])), ("tau", _fmt(tau)),
             ("psf", cfg["psf"] or "none"),
             ("constraints", windows.total_constraints),
             ("dual_blocks", windows.dual_block_count),
             ("max_violation", _fmt(float(np.max(v)))),
             ("seed", cfg["seed"])]
    _write_text(_trace_path(cfg, "summary.txt"),
                _summary_lines(_solver_summary(report, pairs)))
    print(f"smre2d: {report.iterations_run} iterations, stop={report.stop_reason}, "
          f"c={_fmt(report.estimated_rate_c)}, max violation {np.max(v):.3e}")
    return 0


def cmd_tune(cfg: dict) -> int:
    tau, sigma, alpha, rho, delta_m = tune_parameters(
        cfg["kappa_a"], cfg["kappa_f"], cfg["l_f"], cfg["lambda_max"])
    validate_params(tau, sigma, cfg["l_f"], cfg["lambda_max"])
    pairs = [("rho", _fmt(rho)), ("tau", _fmt(tau)), ("sigma", _fmt(sigma)),
             ("alpha", _fmt(alpha)), ("delta_m", _fmt(delta_m))]
    if cfg["eps"] is not None:
        budget = iteration_budget(cfg["eps"], cfg["c_bound"], delta_m,
                                  cfg["l_f"], "primal")
        pairs.append(("budget_primal", budget))
    print(_summary_lines(pairs), end="")
    return 0


def _certify_objective(cfg: dict):
    kind = cfg["objective"]
    if kind == "quadratic":
        if cfg["point"] is None:
            raise ParameterError("quadratic certification needs --point")
        y = pio.read_signal_csv(cfg["point"])
        b = pio.read_signal_csv(cfg["data"]) if cfg["data"] else np.zeros_like(y)
        if b.size != y.size:
            raise DimensionError("point and data dimensions differ")
        return quadratic_fidelity(b), y, [None]
    if kind == "huber":
        alpha = cfg["alpha"]
        phi = SmoothObjective(
            1, lambda x: float(huber_value(float(np.ravel(x)[0]), alpha)),
            lambda x: np.array([huber_grad(float(np.ravel(x)[0]), alpha)]),
            lipschitz_grad=1.0 / alpha)
        return phi, np.array([cfg["at"]]), [None]
    if kind == "modified-huber":
        alpha, eps = cfg["alpha"], cfg["eps_width"]
        phi = SmoothObjective(
            1, lambda x: float(modified_huber_value(float(np.ravel(x)[0]), alpha, eps)),
            None, lipschitz_grad=1.0 / alpha)
        t = cfg["at"]
        if t == 0.0:
            # kink: certify against both extreme subgradients
            subs = [np.array([eps / alpha]), np.array([-eps / alpha])]
        elif abs(t) <= alpha - eps:
            subs = [np.array([(t + np.sign(t) * eps) / alpha])]
        else:
            subs = [np.array([np.sign(t)])]
        return phi, np.array([t]), subs
    raise ParameterError(f"unknown objective {kind!r}")


def cmd_certify(cfg: dict) -> int:
    phi, y, subgradients = _certify_objective(cfg)
    worst = np.inf
    passed = True
    for sub in subgradients:
        cert = pqs_certificate(phi, y, cfg["radius"], cfg["mu"],
                               samples=cfg["samples"], seed=cfg["seed"],
                               subgradient=sub)
        worst = min(worst, cert.worst_slack)
        passed = passed and cert.passed
    print(_summary_lines([
        ("objective", cfg["objective"]), ("radius", _fmt(cfg["radius"])),
        ("mu", _fmt(cfg["mu"])), ("samples", cfg["samples"]),
        ("seed", cfg["seed"]), ("passed", "true" if passed else "false"),
        ("worst_slack", _fmt(float(worst))),
    ]), end="")
    return 0


_COMMANDS = {
    "denoise-tv": (_DENOISE_SCHEMA, cmd_denoise_tv,
                   "TV denoising of a 1D signal"),
    "smre1d": (_SMRE1D_SCHEMA, cmd_smre1d,
               "multiresolution-constrained 1D denoising"),
    "smre2d": (_SMRE2D_SCHEMA, cmd_smre2d,
               "multiresolution-constrained 2D denoising/deconvolution"),
    "tune": (_TUNE_SCHEMA, cmd_tune,
             "rate-optimal step sizes from condition numbers"),
    "certify": (_CERTIFY_SCHEMA, cmd_certify,
                "sampled quadratic-supportability certificate"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="papc",
        description="matrix-free primal-dual solver experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (schema, _fn, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_schema(p, schema)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        schema, fn, _ = _COMMANDS[args.command]
        cfg = _merge_config(args, schema)
        return fn(cfg)
    except (ParameterError, DimensionError, ParseError, TuningError,
            MetricError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (OSError, FormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
