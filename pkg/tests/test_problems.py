import numpy as np
import pytest

from papc.errors import DimensionError, ParameterError
from papc.io import synth_signal
from papc.linops import convolution_operator, grad1d_operator, identity_operator
from papc.problems import (
    SmreSpec,
    TvDenoiseSpec,
    WindowSystem,
    build_smre,
    build_smre_1d,
    build_smre_2d,
    build_tv_denoise,
    constraint_violation,
    enumerate_windows,
    enumerate_windows_2d,
    project_tiling_1d,
    project_tiling_2d,
    q_schedule,
    solve_smre_compact,
)
from papc.prox import project_slab
from papc.solver import make_config, solve, zero_state


# ---------------------------------------------------------------------------
# TV denoising
# ---------------------------------------------------------------------------

def test_tv_large_lambda_flattens_everything():
    b = np.full(32, 0.8)
    prob = build_tv_denoise(TvDenoiseSpec(b, lam=50.0))
    cfg = make_config(prob, max_iters=200000, stop_tol=1e-13)
    state, _ = solve(prob, cfg)
    from papc.linops import grad1d_dirichlet

    assert np.max(np.abs(grad1d_dirichlet(state.x))) <= 1e-8


def test_tv_vanishing_lambda_returns_data():
    rng = np.random.Generator(np.random.PCG64(1))
    b = rng.standard_normal(24)
    prob = build_tv_denoise(TvDenoiseSpec(b, lam=1e-11))
    cfg = make_config(prob, tau=0.5, max_iters=20000, stop_tol=1e-13)
    state, _ = solve(prob, cfg)
    assert np.linalg.norm(state.x - b) <= 1e-8


def test_tv_solution_satisfies_stationarity():
    clean, b = synth_signal("blocks", 64, noise_sd=0.05, seed=3)
    prob = build_tv_denoise(TvDenoiseSpec(b, lam=0.05))
    stop_tol = 1e-11
    cfg = make_config(prob, tau=0.2, max_iters=300000, stop_tol=stop_tol)
    state, report = solve(prob, cfg)
    assert report.stop_reason == "tolerance"
    resid = prob.f.gradient(state.x) + prob.apply_stack(state.y)
    assert np.linalg.norm(resid) <= 10 * stop_tol


def test_tv_spectral_bounds_match_dense_gram():
    n = 16
    prob = build_tv_denoise(TvDenoiseSpec(np.zeros(n), lam=1.0))
    op = prob.blocks[0].op
    A = np.stack([op.apply(np.eye(n)[j]) for j in range(n)], axis=1)
    ev = np.linalg.eigvalsh(A.T @ A)
    assert prob.spectral.lambda_min == pytest.approx(ev[0], abs=1e-12)
    assert prob.spectral.lambda_max == pytest.approx(ev[-1], abs=1e-12)
    assert prob.spectral.lambda_max <= 4.0


def test_tv_rejects_nonpositive_lambda():
    with pytest.raises(ParameterError):
        TvDenoiseSpec(np.zeros(4), lam=0.0)


# ---------------------------------------------------------------------------
# window systems
# ---------------------------------------------------------------------------

def test_windows_512_10_counts():
    ws = enumerate_windows(512, 10)
    assert ws.total_constraints == 5075
    assert ws.dual_block_count == 55


def test_windows_4_2_counts():
    ws = enumerate_windows(4, 2)
    assert ws.total_constraints == 7
    assert ws.dual_block_count == 3


def test_windows_tilings_disjoint_sorted_and_complete():
    n, L = 37, 5
    ws = enumerate_windows(n, L)
    for l in range(1, L + 1):
        starts = sorted(
            s for t in ws.tilings if t.length == l for s in t.starts.tolist())
        assert starts == list(range(0, n - l + 1))
    for t in ws.tilings:
        diffs = np.diff(t.starts)
        assert np.all(diffs >= t.length)  # pairwise disjoint
        assert np.all(t.starts[:-1] < t.starts[1:])  # sorted


@pytest.mark.parametrize("n,L", [(8, 1), (16, 4), (100, 10), (512, 10), (33, 33)])
def test_windows_count_formula_sweep(n, L):
    ws = enumerate_windows(n, L)
    assert ws.total_constraints == sum(n - l + 1 for l in range(1, L + 1))
    assert ws.dual_block_count == L * (L + 1) // 2


def test_windows_invalid_levels():
    with pytest.raises(ParameterError):
        enumerate_windows(4, 5)


@pytest.mark.parametrize("n,L", [(8, 2), (16, 3), (9, 4)])
def test_windows_2d_count_formula(n, L):
    ws = enumerate_windows_2d(n, L)
    assert ws.total_constraints == sum((n - l + 1) ** 2 for l in range(1, L + 1))
    assert ws.dual_block_count == sum(l * l for l in range(1, L + 1))


def test_q_schedule_values():
    qs = q_schedule(0.06, 0.93, 10)
    assert qs[0] == pytest.approx(0.06)
    assert qs[1] == pytest.approx(0.0558)
    np.testing.assert_allclose(q_schedule(0.5, 1.0, 4), np.full(4, 0.5))


def test_q_schedule_domain():
    with pytest.raises(ParameterError):
        q_schedule(0.0, 0.9, 3)
    with pytest.raises(ParameterError):
        q_schedule(0.1, 1.5, 3)


# ---------------------------------------------------------------------------
# tiling projections vs the per-window slab oracle
# ---------------------------------------------------------------------------

def test_project_tiling_1d_matches_slab_loop():
    rng = np.random.Generator(np.random.PCG64(7))
    n, L = 29, 4
    ws = enumerate_windows(n, L)
    data = rng.standard_normal(n)
    z = rng.standard_normal(n) * 2
    for t in ws.tilings:
        q = 0.1 + 0.05 * t.length
        ours = project_tiling_1d(z, data, q, t)
        ref = z.copy()
        for s in t.starts:
            sl = slice(s, s + t.length)
            omega = np.full(t.length, 1.0 / t.length)
            ref[sl] = project_slab(z[sl], omega, data[sl], q)
        np.testing.assert_allclose(ours, ref, atol=1e-13)


def test_project_tiling_2d_matches_slab_loop():
    rng = np.random.Generator(np.random.PCG64(8))
    n, L = 9, 3
    ws = enumerate_windows_2d(n, L)
    data = rng.standard_normal(n * n)
    z = rng.standard_normal(n * n) * 2
    for t in ws.tilings:
        q = 0.2
        ours = project_tiling_2d(z, data, q, t, n)
        ref = z.copy().reshape(n, n)
        zz = z.reshape(n, n)
        dd = data.reshape(n, n)
        l = t.length
        oi, oj = t.offset
        for a in range(t.grid[0]):
            for c in range(t.grid[1]):
                si = slice(oi + a * l, oi + (a + 1) * l)
                sj = slice(oj + c * l, oj + (c + 1) * l)
                omega = np.full((l, l), 1.0 / (l * l))
                ref[si, sj] = project_slab(zz[si, sj], omega, dd[si, sj], q)
        np.testing.assert_allclose(ours.reshape(n, n), ref, atol=1e-14)


# ---------------------------------------------------------------------------
# constraint violation
# ---------------------------------------------------------------------------

def brute_force_violation(x, spec, windows):
    b = np.asarray(spec.b, dtype=float)
    Ax = spec.forward.apply(np.asarray(x).ravel()) if spec.forward else np.asarray(x).ravel()
    qs = q_schedule(spec.q0, spec.scale_f, spec.levels)
    out = np.zeros(spec.levels)
    if windows.ndim == 1:
        r = Ax - b.ravel()
        for l in range(1, spec.levels + 1):
            worst = max(abs(np.mean(r[s:s + l])) for s in range(b.size - l + 1))
            out[l - 1] = max(0.0, worst - qs[l - 1])
    else:
        n = b.shape[0]
        r = Ax.reshape(n, n) - b
        for l in range(1, spec.levels + 1):
            worst = max(abs(np.mean(r[i:i + l, j:j + l]))
                        for i in range(n - l + 1) for j in range(n - l + 1))
            out[l - 1] = max(0.0, worst - qs[l - 1])
    return out


def test_violation_zero_at_exact_data():
    b = np.linspace(0, 1, 20)
    spec = SmreSpec(b=b, q0=0.1, scale_f=0.9, levels=3)
    ws = enumerate_windows(20, 3)
    np.testing.assert_array_equal(constraint_violation(b, spec, ws), np.zeros(3))


def test_violation_single_pixel_reduces_to_max_residual():
    rng = np.random.Generator(np.random.PCG64(9))
    b = rng.standard_normal(15)
    x = b + rng.standard_normal(15) * 0.3
    spec = SmreSpec(b=b, q0=0.05, levels=1)
    ws = enumerate_windows(15, 1)
    v = constraint_violation(x, spec, ws)
    assert v[0] == pytest.approx(np.max(np.abs(x - b)) - 0.05)


def test_violation_matches_brute_force_1d():
    rng = np.random.Generator(np.random.PCG64(10))
    b = rng.standard_normal(41)
    x = b + rng.standard_normal(41) * 0.2
    spec = SmreSpec(b=b, q0=0.08, scale_f=0.85, levels=5)
    ws = enumerate_windows(41, 5)
    np.testing.assert_allclose(constraint_violation(x, spec, ws),
                               brute_force_violation(x, spec, ws), atol=1e-12)


def test_violation_matches_brute_force_2d_with_convolution():
    rng = np.random.Generator(np.random.PCG64(11))
    n = 10
    psf = np.array([[0.0, 0.2, 0.0], [0.2, 0.2, 0.2], [0.0, 0.2, 0.0]])
    fwd = convolution_operator(n, psf)
    b = rng.standard_normal((n, n)) * 0.5
    x = rng.standard_normal(n * n) * 0.5
    spec = SmreSpec(b=b, q0=0.05, scale_f=0.9, levels=3, forward=fwd)
    ws = enumerate_windows_2d(n, 3)
    np.testing.assert_allclose(constraint_violation(x, spec, ws),
                               brute_force_violation(x, spec, ws), atol=1e-12)


# ---------------------------------------------------------------------------
# assembled problems
# ---------------------------------------------------------------------------

def test_smre_1d_inactive_constraints_reach_unconstrained_minimum():
    rng = np.random.Generator(np.random.PCG64(12))
    b = rng.standard_normal(32) * 0.05
    spec = SmreSpec(b=b, q0=1e6, levels=3)
    prob = build_smre_1d(spec)
    cfg = make_config(prob, tau=0.2, max_iters=5000, stop_tol=1e-12)
    state, _ = solve(prob, cfg)
    assert np.linalg.norm(prob.f.gradient(state.x)) <= 1e-8


def test_smre_1d_block_count_and_dims():
    spec = SmreSpec(b=np.zeros(64), q0=0.1, levels=4)
    prob = build_smre_1d(spec)
    assert len(prob.blocks) == 4 * 5 // 2
    assert all(blk.prox.block_dim == 64 for blk in prob.blocks)
    assert prob.spectral.lambda_max == pytest.approx(len(prob.blocks))
    assert prob.spectral.lambda_min == 0.0
    assert prob.spectral.certified


def test_smre_1d_single_level_certified_injective():
    spec = SmreSpec(b=np.zeros(16), q0=0.1, levels=1)
    prob = build_smre_1d(spec)
    assert prob.spectral.lambda_min == 1.0
    assert prob.spectral.lambda_max == 1.0


def test_smre_1d_converges_and_respects_constraints():
    clean, b = synth_signal("blocks", 128, noise_sd=0.02, seed=4)
    spec = SmreSpec(b=b, q0=0.06, scale_f=0.93, levels=4)
    prob = build_smre_1d(spec)
    cfg = make_config(prob, tau=0.02, max_iters=60000, stop_tol=1e-7)
    state, report = solve(prob, cfg)
    assert report.stop_reason == "tolerance"
    ws = enumerate_windows(128, 4)
    v = constraint_violation(state.x, spec, ws)
    assert np.all(v <= 5e-5)
    assert report.estimated_rate_c is not None
    assert 0.0 < report.estimated_rate_c < 1.0


def test_smre_2d_small_run_decreases_violation():
    rng = np.random.Generator(np.random.PCG64(13))
    n = 16
    clean = np.zeros((n, n))
    clean[4:12, 4:12] = 1.0
    b = clean + 0.02 * rng.standard_normal((n, n))
    spec = SmreSpec(b=b, q0=0.07, levels=2, objective="smoothed_tv", alpha=0.25)
    prob = build_smre_2d(spec)
    cfg = make_config(prob, tau=0.02, max_iters=400, stop_tol=0.0)
    ws = enumerate_windows_2d(n, 2)
    v0 = np.max(constraint_violation(np.zeros(n * n), spec, ws))
    state, report = solve(prob, cfg)
    v1 = np.max(constraint_violation(state.x, spec, ws))
    assert v1 < v0
    assert np.all(np.isfinite(report.steps_H))


def test_smre_2d_with_psf_forward_runs():
    rng = np.random.Generator(np.random.PCG64(14))
    n = 12
    g = np.array([1.0, 2.0, 1.0])
    psf = np.outer(g, g)
    psf /= psf.sum()
    clean = np.zeros((n, n))
    clean[3:9, 3:9] = 0.8
    fwd = convolution_operator(n, psf)
    b = fwd.apply(clean.ravel()).reshape(n, n) + 0.01 * rng.standard_normal((n, n))
    spec = SmreSpec(b=b, q0=0.05, levels=2, forward=fwd,
                    objective="dirichlet_energy")
    prob = build_smre_2d(spec)
    assert not prob.spectral.certified
    cfg = make_config(prob, tau=0.05, max_iters=300, stop_tol=0.0)
    state, report = solve(prob, cfg)
    assert np.all(np.isfinite(state.x))
    assert report.steps_H[-1] < report.steps_H[0]


def test_build_smre_dispatches_on_data_rank():
    p1 = build_smre(SmreSpec(b=np.zeros(8), q0=1.0, levels=2))
    p2 = build_smre(SmreSpec(b=np.zeros((8, 8)), q0=1.0, levels=2))
    assert p1.f.dim == 8 and p2.f.dim == 64


# ---------------------------------------------------------------------------
# compact route equals the generic block route
# ---------------------------------------------------------------------------

def test_compact_route_matches_generic_1d():
    clean, b = synth_signal("blocks", 48, noise_sd=0.03, seed=20)
    spec = SmreSpec(b=b, q0=0.08, scale_f=0.9, levels=3)
    prob = build_smre_1d(spec)
    tau = 0.05
    cfg = make_config(prob, tau=tau, max_iters=200, stop_tol=0.0,
                      record_trace=True)
    state, report = solve(prob, cfg)
    run = solve_smre_compact(spec, tau=tau, max_iters=200, stop_tol=0.0,
                             record_trace=True)
    np.testing.assert_allclose(run.x, state.x, atol=1e-12)
    np.testing.assert_allclose(run.report.steps_H, report.steps_H,
                               rtol=1e-10, atol=1e-13)
    # block dual iterates are their window scalars times the indicators
    ws = enumerate_windows(48, 3)
    offset = 0
    for blk_y, t in zip(state.y, ws.tilings):
        for j, s in enumerate(t.starts):
            scalar = run.window_duals[offset + j]
            np.testing.assert_allclose(blk_y[s:s + t.length],
                                       np.full(t.length, scalar), atol=1e-12)
        mask = np.ones(48, dtype=bool)
        for s in t.starts:
            mask[s:s + t.length] = False
        np.testing.assert_allclose(blk_y[mask], 0.0, atol=1e-15)
        offset += t.count


def test_compact_route_matches_generic_2d_with_psf():
    rng = np.random.Generator(np.random.PCG64(21))
    n = 10
    g = np.array([1.0, 2.0, 1.0])
    psf = np.outer(g, g)
    psf /= psf.sum()
    fwd = convolution_operator(n, psf)
    clean = np.zeros((n, n))
    clean[2:7, 3:8] = 1.0
    b = fwd.apply(clean.ravel()).reshape(n, n) + 0.02 * rng.standard_normal((n, n))
    spec = SmreSpec(b=b, q0=0.05, levels=2, forward=fwd,
                    objective="smoothed_tv", alpha=0.25)
    prob = build_smre_2d(spec)
    cfg = make_config(prob, tau=0.02, max_iters=120, stop_tol=0.0)
    state, report = solve(prob, cfg)
    run = solve_smre_compact(spec, tau=0.02, max_iters=120, stop_tol=0.0)
    np.testing.assert_allclose(run.x, state.x, atol=1e-12)
    np.testing.assert_allclose(run.report.steps_H, report.steps_H,
                               rtol=1e-10, atol=1e-13)
