"""Assembly of the two shipped applications as saddle-point problems.

* TV denoising of a 1D signal: quadratic fidelity plus an l1 penalty on the
  forward differences, dualized into a single l-infinity-ball block.
* Multiresolution-constrained estimation (1D signals and square images):
  minimize a smoothness objective subject to windowed residual constraints
  ``|<w_s, A x - b>| <= q_l`` over all sliding windows of lengths 1..L.
  Windows of one length and offset tile the grid disjointly, so each tiling
  becomes one separable dual block whose projection is evaluated window by
  window in closed form.

Two equivalent execution routes exist for the constrained problems: the
generic block construction (``build_smre_*`` feeding ``papc.solver.solve``)
and :func:`solve_smre_compact`, which runs the identical iteration in
per-window scalar coordinates.  Every dual block's iterate is a combination
of its window indicators (the update writes ``sigma * excess`` on each
window and zero elsewhere), so the compact route only tracks one scalar per
window; it produces the same trajectory up to round-off and is the one the
experiment front end uses at full problem sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import DimensionError, ParameterError
from .functions import (
    SmoothObjective,
    dirichlet_energy,
    quadratic_fidelity,
    smoothed_tv_objective,
)
from .linops import (
    LinearOperator,
    SpectralBounds,
    grad1d_dirichlet,
    grad1d_gram_extreme_eigs,
    grad1d_operator,
    grad2d_operator,
    identity_operator,
    operator_norm_sq,
    transpose_operator,
)
from .prox import ProxableBlock
from .solver import (
    ConvergenceReport,
    DualBlock,
    SaddleProblem,
    TraceRecord,
    aposteriori_bound,
    endpoint_rate,
    estimate_rate,
    validate_params,
)


# ---------------------------------------------------------------------------
# TV denoising
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TvDenoiseSpec:
    """Noisy signal plus the regularization weight of the difference penalty."""

    b: np.ndarray
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ParameterError("lam must be positive")


def build_tv_denoise(spec: TvDenoiseSpec) -> SaddleProblem:
    """Saddle form of ``min lam ||grad x||_1 + 0.5 ||x - b||^2``.

    Single dual block: coupling ``<grad x, y>`` and the indicator of the
    l-infinity ball of radius ``lam`` as the conjugate nonsmooth term, whose
    prox is the componentwise clamp (independent of the dual step).  The
    spectral bounds are the exact extreme Gram eigenvalues of the shipped
    difference stencil, so the rate certificate is sound.
    """
    b = np.asarray(spec.b, dtype=float).ravel()
    n = b.size
    if n == 0:
        raise DimensionError("signal must be nonempty")
    grad = grad1d_operator(n)
    lo, hi = grad1d_gram_extreme_eigs(n)
    lam = spec.lam

    from .prox import project_linf_ball

    block = DualBlock(
        prox=ProxableBlock(n, lambda z, s: project_linf_ball(z, lam), "linf ball"),
        op=transpose_operator(grad),
    )
    f = quadratic_fidelity(b)
    return SaddleProblem(
        f=f,
        blocks=[block],
        spectral=SpectralBounds(lo, hi, certified=True),
        objective=lambda x: lam * float(np.sum(np.abs(grad1d_dirichlet(x)))) + f.value(x),
    )


# ---------------------------------------------------------------------------
# window systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tiling1d:
    """Disjoint length-``length`` windows at one offset, one dual block."""

    length: int
    offset: int
    starts: np.ndarray  # window start indices, sorted

    @property
    def count(self) -> int:
        return self.starts.size


@dataclass(frozen=True)
class Tiling2d:
    """Disjoint ``length x length`` square windows at one 2D offset."""

    length: int
    offset: tuple[int, int]
    grid: tuple[int, int]  # number of windows along each axis

    @property
    def count(self) -> int:
        return self.grid[0] * self.grid[1]


@dataclass(frozen=True)
class WindowSystem:
    """All sliding windows of lengths 1..levels, grouped into disjoint tilings.

    ``weights`` of each window are the normalized indicator (1/size inside,
    0 outside), so a window constraint bounds the mean residual over the
    window.  ``total_constraints`` counts every sliding window once.
    """

    n: int
    levels: int
    ndim: int
    tilings: Sequence  # Tiling1d or Tiling2d entries
    total_constraints: int

    @property
    def dual_block_count(self) -> int:
        return len(self.tilings)

    def level_of(self, tiling) -> int:
        return tiling.length


def enumerate_windows(n: int, L: int) -> WindowSystem:
    """Sliding 1D windows of lengths 1..L, one tiling per (length, offset).

    A window starting at ``s`` with length ``l`` belongs to the tiling with
    offset ``s mod l``; the union over offsets recovers every sliding window
    of that length, ``n - l + 1`` of them, and windows within one tiling are
    pairwise disjoint.
    """
    if not (1 <= L <= n):
        raise ParameterError(f"need 1 <= L <= n, got L={L}, n={n}")
    tilings = []
    total = 0
    for length in range(1, L + 1):
        for offset in range(length):
            # offsets too large to fit any window still contribute an (empty)
            # tiling so the block count stays length*(length+1)/2 per level
            starts = np.arange(offset, n - length + 1, length)
            tilings.append(Tiling1d(length, offset, starts))
            total += starts.size
    return WindowSystem(n=n, levels=L, ndim=1, tilings=tilings,
                        total_constraints=total)


def enumerate_windows_2d(n: int, L: int) -> WindowSystem:
    """Sliding l-by-l square windows for l = 1..L, tiled by 2D offset.

    The direct product of the 1D construction: level l contributes l*l
    offset-tilings and ``(n - l + 1)^2`` sliding windows in total.
    """
    if not (1 <= L <= n):
        raise ParameterError(f"need 1 <= L <= n, got L={L}, n={n}")
    tilings = []
    total = 0
    for length in range(1, L + 1):
        for oi in range(length):
            for oj in range(length):
                mi = (n - oi) // length
                mj = (n - oj) // length
                tilings.append(Tiling2d(length, (oi, oj), (mi, mj)))
                total += mi * mj
    return WindowSystem(n=n, levels=L, ndim=2, tilings=tilings,
                        total_constraints=total)


def q_schedule(q0: float, scale_f: float, L: int) -> np.ndarray:
    """Per-level thresholds ``q0 * scale_f**(l-1)`` for levels l = 1..L."""
    if q0 <= 0:
        raise ParameterError("q0 must be positive")
    if not (0.0 < scale_f <= 1.0):
        raise ParameterError("scale_f must lie in (0, 1]")
    return q0 * scale_f ** np.arange(L, dtype=float)


# ---------------------------------------------------------------------------
# tiling projections (windowwise slab projections, vectorized)
# ---------------------------------------------------------------------------

def project_tiling_1d(z: np.ndarray, data: np.ndarray, q: float,
                      tiling: Tiling1d) -> np.ndarray:
    """Project onto all window constraints of one 1D tiling at once.

    Each window demands ``|mean(z - data)| <= q`` over its support; with
    normalized indicator weights the projection subtracts the clipped excess
    mean uniformly on the window.  Entries outside every window are free.
    """
    out = z.copy()
    l, o, m = tiling.length, tiling.offset, tiling.count
    seg = out[o:o + m * l].reshape(m, l)
    r = (seg - data[o:o + m * l].reshape(m, l)).mean(axis=1)
    out[o:o + m * l] = (seg - (r - np.clip(r, -q, q))[:, None]).ravel()
    return out


def project_tiling_2d(z: np.ndarray, data: np.ndarray, q: float,
                      tiling: Tiling2d, n: int) -> np.ndarray:
    out = z.copy()
    l = tiling.length
    oi, oj = tiling.offset
    mi, mj = tiling.grid
    field = out.reshape(n, n)
    view = field[oi:oi + mi * l, oj:oj + mj * l]
    dview = data.reshape(n, n)[oi:oi + mi * l, oj:oj + mj * l]
    seg = np.ascontiguousarray(view).reshape(mi, l, mj, l)
    r = (seg - np.ascontiguousarray(dview).reshape(mi, l, mj, l)).mean(axis=(1, 3))
    seg = seg - (r - np.clip(r, -q, q))[:, None, :, None]
    field[oi:oi + mi * l, oj:oj + mj * l] = seg.reshape(mi * l, mj * l)
    return out


def _tiling_block(tiling, data: np.ndarray, q: float, n: int, ndim: int,
                  op: LinearOperator) -> DualBlock:
    if ndim == 1:
        project = lambda z: project_tiling_1d(z, data, q, tiling)
        label = f"windows l={tiling.length} o={tiling.offset}"
    else:
        project = lambda z: project_tiling_2d(z, data, q, tiling, n)
        label = f"windows l={tiling.length} o={tiling.offset}"

    def prox_conj(v, sigma):
        return v - sigma * project(v / sigma)

    return DualBlock(prox=ProxableBlock(op.domain_dim, prox_conj, label), op=op)


# ---------------------------------------------------------------------------
# multiresolution estimation problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmreSpec:
    """Data, forward model and window configuration for one reconstruction.

    ``forward=None`` means pure denoising (identity forward model).
    ``objective`` picks the smooth regularizer: the quadratic difference
    energy or the Huber-smoothed total variation with parameter ``alpha``.
    """

    b: np.ndarray
    q0: float
    scale_f: float = 1.0
    levels: int = 1
    forward: Optional[LinearOperator] = None
    objective: Literal["dirichlet_energy", "smoothed_tv"] = "dirichlet_energy"
    alpha: float = 0.25

    def __post_init__(self):
        if self.q0 <= 0:
            raise ParameterError("q0 must be positive")
        if not (0.0 < self.scale_f <= 1.0):
            raise ParameterError("scale_f must lie in (0, 1]")
        if self.levels < 1:
            raise ParameterError("levels must be >= 1")
        if self.objective == "smoothed_tv" and self.alpha <= 0:
            raise ParameterError("alpha must be positive")


def _stacked_spectral(forward: LinearOperator, p_blocks: int) -> SpectralBounds:
    """Bounds for the stacked coupling operator of ``p_blocks`` equal blocks.

    The stacked Gram has largest eigenvalue ``p * lambda_max(A^T A)``
    exactly; for two or more blocks its smallest eigenvalue is 0 because the
    stacked map cannot be injective on the product dual space.
    """
    if forward.gram_max is not None:
        base_max, certified = forward.gram_max, True
        base_min = forward.gram_min if forward.gram_min is not None else 0.0
    else:
        base_max, certified = 1.01 * operator_norm_sq(forward, seed=0), False
        base_min = 0.0
    lam_max = p_blocks * base_max
    lam_min = base_min if p_blocks == 1 else 0.0
    return SpectralBounds(lam_min, lam_max, certified=certified)


def _smre_objective(spec: SmreSpec, grad_op: LinearOperator) -> SmoothObjective:
    if spec.objective == "dirichlet_energy":
        return dirichlet_energy(grad_op)
    return smoothed_tv_objective(grad_op, spec.alpha)


def build_smre_1d(spec: SmreSpec) -> SaddleProblem:
    """Windowed-residual-constrained smoothing of a 1D signal.

    One dual block per window tiling, each evaluating its conjugate prox via
    the windowwise slab projections; the dual step should follow
    ``sigma = 1 / (tau * lambda_max)`` with the stacked bound recorded here.
    """
    b = np.asarray(spec.b, dtype=float).ravel()
    n = b.size
    windows = enumerate_windows(n, spec.levels)
    qs = q_schedule(spec.q0, spec.scale_f, spec.levels)
    forward = spec.forward if spec.forward is not None else identity_operator(n)
    if forward.codomain_dim != n or forward.domain_dim != n:
        raise DimensionError("forward operator must act on the data space")
    coupling = transpose_operator(forward)
    blocks = [
        _tiling_block(t, b, float(qs[t.length - 1]), n, 1, coupling)
        for t in windows.tilings
    ]
    J = _smre_objective(spec, grad1d_operator(n))
    return SaddleProblem(
        f=J,
        blocks=blocks,
        spectral=_stacked_spectral(forward, len(blocks)),
        objective=lambda x: float(J.value(x)),
        max_violation=lambda x: float(
            np.max(constraint_violation(x, spec, windows))),
    )


def build_smre_2d(spec: SmreSpec) -> SaddleProblem:
    """Windowed-residual-constrained reconstruction of a square image.

    Same construction as the 1D case with square sliding windows; the
    forward operator may be a PSF convolution for joint deconvolution.
    Primal vectors are flattened n*n fields.
    """
    b = np.asarray(spec.b, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise DimensionError("2D data must be a square field")
    n = b.shape[0]
    bflat = b.ravel().copy()
    windows = enumerate_windows_2d(n, spec.levels)
    qs = q_schedule(spec.q0, spec.scale_f, spec.levels)
    forward = spec.forward if spec.forward is not None else identity_operator(n * n)
    if forward.codomain_dim != n * n or forward.domain_dim != n * n:
        raise DimensionError("forward operator must act on flattened fields")
    coupling = transpose_operator(forward)
    blocks = [
        _tiling_block(t, bflat, float(qs[t.length - 1]), n, 2, coupling)
        for t in windows.tilings
    ]
    J = _smre_objective(spec, grad2d_operator(n))
    return SaddleProblem(
        f=J,
        blocks=blocks,
        spectral=_stacked_spectral(forward, len(blocks)),
        objective=lambda x: float(J.value(x)),
        max_violation=lambda x: float(
            np.max(constraint_violation(x, spec, windows))),
    )


def build_smre(spec: SmreSpec) -> SaddleProblem:
    b = np.asarray(spec.b, dtype=float)
    return build_smre_2d(spec) if b.ndim == 2 else build_smre_1d(spec)


# ---------------------------------------------------------------------------
# feasibility reporting
# ---------------------------------------------------------------------------

def _sliding_means_1d(r: np.ndarray, l: int) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(r)])
    return (c[l:] - c[:-l]) / l


def _sliding_means_2d(r: np.ndarray, l: int) -> np.ndarray:
    c = np.zeros((r.shape[0] + 1, r.shape[1] + 1))
    c[1:, 1:] = np.cumsum(np.cumsum(r, axis=0), axis=1)
    s = c[l:, l:] - c[:-l, l:] - c[l:, :-l] + c[:-l, :-l]
    return s / (l * l)


# ---------------------------------------------------------------------------
# compact execution route
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _WindowTables:
    """Vectorized lookup tables over every window, in tiling order."""

    n: int
    ndim: int
    sizes: np.ndarray     # pixels per window
    q: np.ndarray         # per-window threshold
    bmean: np.ndarray     # per-window data mean
    pix_idx: np.ndarray   # flat pixel indices, window-major
    starts: Optional[np.ndarray] = None  # 1D cumsum gather
    ends: Optional[np.ndarray] = None
    corners: Optional[tuple] = None      # 2D integral-image gather

    @property
    def count(self) -> int:
        return self.sizes.size

    def window_means(self, field: np.ndarray) -> np.ndarray:
        """Mean of a flat data-space vector over every window at once."""
        if self.ndim == 1:
            c = np.concatenate([[0.0], np.cumsum(field)])
            return (c[self.ends] - c[self.starts]) / self.sizes
        n = self.n
        ii = np.zeros((n + 1, n + 1))
        ii[1:, 1:] = np.cumsum(np.cumsum(field.reshape(n, n), axis=0), axis=1)
        flat = ii.ravel()
        c11, c12, c21, c22 = self.corners
        sums = flat[c22] - flat[c12] - flat[c21] + flat[c11]
        return sums / self.sizes

    def scatter(self, scalars: np.ndarray) -> np.ndarray:
        """Sum of ``scalars[w] * indicator(w)`` over all windows, flat."""
        size = self.n if self.ndim == 1 else self.n * self.n
        return np.bincount(self.pix_idx, weights=np.repeat(scalars, self.sizes),
                           minlength=size)


def _window_tables(windows: WindowSystem, b: np.ndarray,
                   qs: np.ndarray) -> _WindowTables:
    n = windows.n
    sizes, q, starts, ends, pix = [], [], [], [], []
    corners = ([], [], [], []) if windows.ndim == 2 else None
    for t in windows.tilings:
        if windows.ndim == 1:
            l = t.length
            for s in t.starts:
                sizes.append(l)
                q.append(qs[l - 1])
                starts.append(s)
                ends.append(s + l)
                pix.append(np.arange(s, s + l))
        else:
            l = t.length
            oi, oj = t.offset
            for a in range(t.grid[0]):
                for c in range(t.grid[1]):
                    i0, j0 = oi + a * l, oj + c * l
                    sizes.append(l * l)
                    q.append(qs[l - 1])
                    rows = np.arange(i0, i0 + l)
                    cols = np.arange(j0, j0 + l)
                    pix.append((rows[:, None] * n + cols[None, :]).ravel())
                    corners[0].append(i0 * (n + 1) + j0)
                    corners[1].append(i0 * (n + 1) + j0 + l)
                    corners[2].append((i0 + l) * (n + 1) + j0)
                    corners[3].append((i0 + l) * (n + 1) + j0 + l)
    sizes = np.asarray(sizes, dtype=np.int64)
    pix_idx = np.concatenate(pix) if pix else np.zeros(0, dtype=np.int64)
    bflat = np.asarray(b, dtype=float).ravel()
    tables = _WindowTables(
        n=n, ndim=windows.ndim, sizes=sizes, q=np.asarray(q, dtype=float),
        bmean=np.zeros(sizes.size), pix_idx=pix_idx,
        starts=np.asarray(starts, dtype=np.int64) if windows.ndim == 1 else None,
        ends=np.asarray(ends, dtype=np.int64) if windows.ndim == 1 else None,
        corners=tuple(np.asarray(c, dtype=np.int64) for c in corners)
        if corners else None,
    )
    return replace(tables, bmean=tables.window_means(bflat))


@dataclass(frozen=True)
class SmreRunResult:
    """Final iterate of a compact run plus its per-window dual scalars."""

    x: np.ndarray
    window_duals: np.ndarray
    report: ConvergenceReport


def solve_smre_compact(spec: SmreSpec, tau: float, sigma: Optional[float] = None,
                       alpha: float = 2.0, max_iters: int = 10000,
                       stop_tol: float = 1e-8,
                       record_trace: bool = False) -> SmreRunResult:
    """Run the constrained reconstruction in per-window coordinates.

    Identical trajectory to solving the ``build_smre_*`` problem with the
    generic loop (each dual block's iterate is its windows' scalars times
    their indicators), but every per-iteration quantity is evaluated with a
    couple of vectorized passes: one cumulative sum yields all window means
    and one bincount scatters all dual scalars back to the grid.  ``sigma``
    defaults to ``1 / (tau * lambda_max)`` for the stacked coupling.
    """
    from .errors import DivergenceError

    b = np.asarray(spec.b, dtype=float)
    ndim = b.ndim
    if ndim == 1:
        n = b.size
        windows = enumerate_windows(n, spec.levels)
        grad_op = grad1d_operator(n)
        N = n
    else:
        if b.shape[0] != b.shape[1]:
            raise DimensionError("2D data must be a square field")
        n = b.shape[0]
        windows = enumerate_windows_2d(n, spec.levels)
        grad_op = grad2d_operator(n)
        N = n * n
    forward = spec.forward if spec.forward is not None else identity_operator(N)
    J = _smre_objective(spec, grad_op)
    spectral = _stacked_spectral(forward, windows.dual_block_count)
    if sigma is None:
        sigma = 1.0 / (tau * spectral.lambda_max)
    validate_params(tau, sigma, J.lipschitz_grad, spectral.lambda_max)

    qs = q_schedule(spec.q0, spec.scale_f, spec.levels)
    tables = _window_tables(windows, b, qs)
    identity_forward = spec.forward is None

    x = np.zeros(N)
    S = np.zeros(tables.count)
    Ay = np.zeros(N)  # A^T of the scattered dual sum, tracked incrementally
    steps: list[float] = []
    trace: Optional[list[TraceRecord]] = [] if record_trace else None
    stop_reason = "budget"
    for k in range(1, max_iters + 1):
        g = J.gradient(x)
        p = x - tau * (g + Ay)
        Ap = p if identity_forward else forward.apply(p)
        r = S / sigma + tables.window_means(Ap) - tables.bmean
        S_new = sigma * (r - np.clip(r, -tables.q, tables.q))
        wsum = tables.scatter(S_new)
        Ay_new = wsum if identity_forward else forward.apply_adjoint(wsum)
        x_new = x - tau * (g + Ay_new)

        dS = S_new - S
        dx = x_new - x
        dy_sq = float(np.sum(tables.sizes * dS * dS))
        dAy = Ay_new - Ay
        g_quad = max(dy_sq / sigma - tau * float(np.dot(dAy, dAy)), 0.0)
        step = float(np.sqrt(np.dot(dx, dx) / tau + g_quad))
        if not np.isfinite(step) or not np.all(np.isfinite(x_new)):
            raise DivergenceError(k)
        steps.append(step)
        if trace is not None:
            trace.append(TraceRecord(
                iter=k, step_H=step, primal_step=float(np.linalg.norm(dx)),
                dual_step=float(np.sqrt(dy_sq)), objective=float(J.value(x_new)),
                max_violation=float(np.max(constraint_violation(x_new, spec, windows))),
            ))
        x, S, Ay = x_new, S_new, Ay_new
        if step == 0.0:
            stop_reason = "stagnation"
            break
        if step <= stop_tol:
            stop_reason = "tolerance"
            break

    steps_arr = np.asarray(steps)
    window = min(50, len(steps))
    c = estimate_rate(steps_arr, window) if window >= 2 else None
    if c is None and window >= 2:
        c = endpoint_rate(steps_arr, window)
    report = ConvergenceReport(
        steps_H=steps_arr,
        estimated_rate_c=c,
        delta_certified=None,  # the stacked coupling has a nontrivial kernel
        aposteriori_bound=aposteriori_bound(c, steps_arr[-1])
        if (c is not None and len(steps)) else None,
        iterations_run=len(steps),
        stop_reason=stop_reason,  # type: ignore[arg-type]
        trace=trace,
    )
    return SmreRunResult(x=x, window_duals=S, report=report)


def constraint_violation(x: np.ndarray, spec: SmreSpec,
                         windows: WindowSystem) -> np.ndarray:
    """Worst excess of the windowed mean residual per level, clamped at 0.

    For level l the value is ``max over all sliding windows of
    |mean(A x - b)| - q_l``, or 0 when every window of that length is
    satisfied.  All sliding windows are scanned, not only one tiling.
    """
    x = np.asarray(x, dtype=float).ravel()
    b = np.asarray(spec.b, dtype=float)
    forward = spec.forward
    Ax = forward.apply(x) if forward is not None else x
    qs = q_schedule(spec.q0, spec.scale_f, spec.levels)
    out = np.zeros(spec.levels)
    if windows.ndim == 1:
        r = Ax - b.ravel()
        for l in range(1, spec.levels + 1):
            worst = np.max(np.abs(_sliding_means_1d(r, l)))
            out[l - 1] = max(0.0, worst - qs[l - 1])
    else:
        n = b.shape[0]
        r = Ax.reshape(n, n) - b
        for l in range(1, spec.levels + 1):
            worst = np.max(np.abs(_sliding_means_2d(r, l)))
            out[l - 1] = max(0.0, worst - qs[l - 1])
    return out
