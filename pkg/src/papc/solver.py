"""Predictor-corrector primal-dual iteration with rate certificates.

The iteration solves ``min_x max_y f(x) + <x, A y> - g*(y)`` where ``A``
stacks one linear block per nonsmooth term.  One step consists of a
predictor gradient step, a proximal step on every dual block, and a
corrector gradient step that reuses the predictor's gradient evaluation:

    p   = x - tau * (grad f(x) + A y)
    y_i = prox_sigma^{g_i*}(y_i + sigma * A_i^T p)      for each block
    x'  = x - tau * (grad f(x) + A y')

Progress is measured in the weighted norm
``||u||_H^2 = ||x||^2 / tau + ||y||^2_G`` with ``G = I/sigma - tau A^T A``,
the metric in which the iteration contracts.  When the problem carries
certified spectral bounds and a quadratic-support constant, the solver also
reports a guaranteed per-step contraction factor ``1 / (1 + delta)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .errors import DimensionError, DivergenceError, MetricError, ParameterError, TuningError
from .functions import SmoothObjective
from .linops import LinearOperator, SpectralBounds
from .prox import ProxableBlock


@dataclass(frozen=True)
class DualBlock:
    """Pairing of a nonsmooth conjugate prox with its linear coupling."""

    prox: ProxableBlock
    op: LinearOperator

    def __post_init__(self):
        if self.prox.block_dim != self.op.domain_dim:
            raise DimensionError(
                f"block prox dimension {self.prox.block_dim} does not match "
                f"operator domain {self.op.domain_dim}"
            )


@dataclass(frozen=True)
class SaddleProblem:
    """Structured saddle-point problem: smooth part plus dual blocks.

    ``objective`` and ``max_violation`` are optional diagnostics evaluated at
    the primal iterate when tracing is enabled (primal merit value and worst
    constraint violation; both default to harmless fallbacks).
    """

    f: SmoothObjective
    blocks: Sequence[DualBlock]
    spectral: SpectralBounds
    objective: Optional[Callable[[np.ndarray], float]] = None
    max_violation: Optional[Callable[[np.ndarray], float]] = None

    def __post_init__(self):
        if not self.blocks:
            raise DimensionError("at least one dual block is required")
        for blk in self.blocks:
            if blk.op.codomain_dim != self.f.dim:
                raise DimensionError(
                    f"block operator codomain {blk.op.codomain_dim} does not "
                    f"match primal dimension {self.f.dim}"
                )

    @property
    def dual_dims(self) -> list[int]:
        return [blk.prox.block_dim for blk in self.blocks]

    def apply_stack(self, ys: Sequence[np.ndarray]) -> np.ndarray:
        """The stacked coupling ``A y = sum_i A_i y_i`` into primal space."""
        out = self.blocks[0].op.apply(ys[0])
        acc = np.array(out, dtype=float, copy=True)
        for blk, y in zip(self.blocks[1:], ys[1:]):
            acc += blk.op.apply(y)
        return acc


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes and run controls.

    ``alpha`` is the free parameter of the rate certificate (any value above
    1 is admissible; tuning picks the one that maximizes the certified
    contraction).  ``seed`` only affects estimation helpers, never the
    iteration itself.
    """

    tau: float
    sigma: float
    alpha: float = 2.0
    max_iters: int = 10000
    stop_tol: float = 1e-8
    record_trace: bool = False
    parallel_dual: bool = False
    seed: int = 0
    threads: Optional[int] = None

    def __post_init__(self):
        if self.tau <= 0 or self.sigma <= 0:
            raise ParameterError("tau and sigma must be positive")
        if self.alpha <= 1:
            raise ParameterError("alpha must exceed 1")
        if self.max_iters < 0:
            raise ParameterError("max_iters must be nonnegative")


@dataclass
class IterateState:
    """Full iteration state ``u = (x, y)`` plus the predictor and counter."""

    x: np.ndarray
    p: np.ndarray
    y: list[np.ndarray]
    k: int = 0

    def copy(self) -> "IterateState":
        return IterateState(self.x.copy(), self.p.copy(),
                            [yi.copy() for yi in self.y], self.k)


@dataclass(frozen=True)
class HMetric:
    """Weighted primal-dual norm ``||u||_H^2 = ||x||^2/tau + ||y||^2_G``.

    The seminorm piece uses ``<y, G y> = ||y||^2/sigma - tau ||A y||^2``,
    which is nonnegative whenever ``tau * sigma <= 1 / lambda_max(A^T A)``.
    """

    tau: float
    sigma: float
    apply_stack: Callable[[Sequence[np.ndarray]], np.ndarray]

    def g_quad(self, ys: Sequence[np.ndarray]) -> float:
        sq = sum(float(np.dot(y, y)) for y in ys)
        Ay = self.apply_stack(ys)
        quad = sq / self.sigma - self.tau * float(np.dot(Ay, Ay))
        if quad < -1e-12 * max(1.0, sq / self.sigma):
            raise MetricError(f"G-quadratic form is negative ({quad}); "
                              "step sizes violate the metric condition")
        return max(quad, 0.0)

    def norm(self, x: np.ndarray, ys: Sequence[np.ndarray]) -> float:
        return math.sqrt(float(np.dot(x, x)) / self.tau + self.g_quad(ys))


def h_metric(prob: SaddleProblem, cfg: SolverConfig) -> HMetric:
    return HMetric(cfg.tau, cfg.sigma, prob.apply_stack)


def h_norm(x: np.ndarray, ys: Sequence[np.ndarray], metric: HMetric) -> float:
    """The weighted norm of a primal-dual point; zero only on ker H."""
    return metric.norm(np.asarray(x, dtype=float), [np.asarray(y, dtype=float) for y in ys])


@dataclass(frozen=True)
class TraceRecord:
    """One per-iteration diagnostics row (schema persisted by papc.io)."""

    iter: int
    step_H: float
    primal_step: float
    dual_step: float
    objective: float
    max_violation: float


@dataclass(frozen=True)
class ConvergenceReport:
    """Run summary: step series, estimated rate, and certificates."""

    steps_H: np.ndarray
    estimated_rate_c: Optional[float]
    delta_certified: Optional[float]
    aposteriori_bound: Optional[float]
    iterations_run: int
    stop_reason: Literal["tolerance", "budget", "stagnation"]
    trace: Optional[list[TraceRecord]] = None


# ---------------------------------------------------------------------------
# parameter validation, certificates, tuning
# ---------------------------------------------------------------------------

def validate_params(tau: float, sigma: float, L_f: float, lambda_max: float) -> None:
    """Check ``tau in (0, 1/L_f)`` and ``0 < tau*sigma <= 1/lambda_max``."""
    if L_f <= 0 or lambda_max <= 0:
        raise ParameterError("L_f and lambda_max must be positive")
    if not (0.0 < tau < 1.0 / L_f):
        raise ParameterError(
            f"violated: tau in (0, 1/L_f); got tau={tau}, 1/L_f={1.0 / L_f}")
    # the product constraint admits the boundary; tolerate round-off there
    if not (0.0 < tau * sigma * lambda_max <= 1.0 + 1e-10):
        raise ParameterError(
            f"violated: 0 < tau*sigma <= 1/lambda_max; got tau*sigma={tau * sigma}, "
            f"1/lambda_max={1.0 / lambda_max}")


def delta_bound(alpha: float, tau: float, sigma: float, L_f: float,
                mu: float, lambda_min: float) -> float:
    """Certified per-step contraction margin of the primal-dual iteration.

    delta = min( (alpha-1) tau sigma (1 - tau L_f) lambda_min / alpha,
                 mu tau sigma lambda_min / (alpha tau L_f^2 + sigma lambda_min) )

    Positive whenever ``tau < 1/L_f``, ``alpha > 1`` and ``mu, lambda_min``
    are positive; the iteration then satisfies
    ``||u^k - u*||_H^2 <= ||u^{k-1} - u*||_H^2 / (1 + delta)``.
    """
    if alpha <= 1:
        raise ParameterError("alpha must exceed 1")
    if mu <= 0 or lambda_min <= 0:
        raise ParameterError("mu and lambda_min must be positive")
    if L_f <= 0 or not (0.0 < tau < 1.0 / L_f) or sigma <= 0:
        raise ParameterError("need 0 < tau < 1/L_f and sigma > 0")
    first = (alpha - 1.0) * tau * sigma * (1.0 - tau * L_f) * lambda_min / alpha
    second = mu * tau * sigma * lambda_min / (alpha * tau * L_f ** 2 + sigma * lambda_min)
    return min(first, second)


def tune_parameters(kappa_A: float, kappa_f: float, L_f: float,
                    lambda_max: float) -> tuple[float, float, float, float, float]:
    """Rate-optimal step sizes from the two condition numbers.

    With ``sigma = 1 / (tau lambda_max)`` the certified margin becomes a
    function of ``rho = sqrt(kappa_A * alpha)`` whose two branches are
    equalized at the real root of

        rho^3 - (1 + kappa_A / (2 kappa_f)) rho^2 - kappa_A rho + kappa_A = 0

    with ``rho > sqrt(kappa_A)``.  Returns ``(tau, sigma, alpha, rho,
    delta_m)`` where ``tau = 1/(rho L_f)`` and ``alpha = rho^2 / kappa_A``.
    """
    if kappa_A < 1 or kappa_f < 1:
        raise ParameterError("condition numbers must be >= 1")
    if L_f <= 0 or lambda_max <= 0:
        raise ParameterError("L_f and lambda_max must be positive")

    def cubic(r):
        return r ** 3 - (1.0 + kappa_A / (2.0 * kappa_f)) * r ** 2 - kappa_A * r + kappa_A

    lo = math.sqrt(kappa_A)
    hi = max(2.0, 2.0 * lo)
    expansions = 0
    while cubic(hi) <= 0.0:
        hi *= 2.0
        expansions += 1
        if expansions > 200:
            raise TuningError("no sign change found for the tuning cubic")
    if cubic(lo) >= 0.0:
        # the root sits immediately above sqrt(kappa_A); nudge the bracket
        lo_eps = lo * (1.0 + 1e-12)
        if cubic(lo_eps) >= 0.0:
            raise TuningError("tuning cubic has no root above sqrt(kappa_A)")
        lo = lo_eps
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cubic(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    rho = 0.5 * (lo + hi)

    tau = 1.0 / (rho * L_f)
    sigma = 1.0 / (tau * lambda_max)
    alpha = rho ** 2 / kappa_A
    branch1 = (rho ** 2 - kappa_A) * (1.0 - 1.0 / rho) / (rho ** 2 * kappa_A)
    branch2 = 1.0 / (2.0 * rho * kappa_f)
    if abs(branch1 - branch2) > 1e-6:
        raise TuningError(
            f"tuned margin branches disagree: {branch1} vs {branch2}")
    return tau, sigma, alpha, rho, min(branch1, branch2)


def estimate_rate(steps_H: Sequence[float], window: int) -> Optional[float]:
    """Geometric-mean contraction of successive steps over a trailing window.

    Returns None when any consecutive ratio inside the window reaches 1 or a
    step underflows, so a value is only reported for cleanly decaying tails.
    """
    steps = np.asarray(steps_H, dtype=float)
    if window < 2:
        raise ParameterError("window must be >= 2")
    if steps.size < window:
        raise ParameterError("series shorter than the window")
    tail = steps[-window:]
    if np.any(tail <= 0.0) or np.any(~np.isfinite(tail)) or np.any(tail < 1e-300):
        return None
    ratios = tail[1:] / tail[:-1]
    if np.any(ratios >= 1.0):
        return None
    c = float(np.exp(np.mean(np.log(ratios))))
    return c if 0.0 < c < 1.0 else None


def endpoint_rate(steps_H: Sequence[float], window: int) -> Optional[float]:
    """Endpoint geometric-mean rate over a trailing window.

    Equals :func:`estimate_rate` whenever that estimate exists, but tolerates
    interior non-monotone ratios; used as the report fallback on noisy tails.
    """
    steps = np.asarray(steps_H, dtype=float)
    if window < 2 or steps.size < window:
        return None
    a, b = steps[-window], steps[-1]
    if not (np.isfinite(a) and np.isfinite(b)) or a < 1e-300 or b < 1e-300:
        return None
    if b >= a:
        return None
    return float((b / a) ** (1.0 / (window - 1)))


def aposteriori_bound(c: float, last_step_H: float) -> float:
    """Distance bound ``c * step / (1 - c)`` from an observed contraction."""
    if not (0.0 < c < 1.0):
        raise ParameterError("c must lie in (0, 1)")
    if last_step_H < 0:
        raise ParameterError("last_step_H must be nonnegative")
    return c * last_step_H / (1.0 - c)


def iteration_budget(eps: float, C: float, delta: float, L_f: float,
                     target: Literal["primal", "dual"] = "primal") -> int:
    """Iterations sufficient for an eps-accurate limit, from the margin delta.

    ``ceil(2 ln(C / (L_f eps)) / delta)`` for the primal sequence and
    ``ceil(2 ln(C / eps) / delta)`` for the dual; 0 when already within
    tolerance.  ``C`` is the initial distance in the H-norm.
    """
    if eps <= 0 or C <= 0 or delta <= 0 or L_f <= 0:
        raise ParameterError("all arguments must be positive")
    ratio = C / (L_f * eps) if target == "primal" else C / eps
    if ratio <= 1.0:
        return 0
    return int(math.ceil(2.0 * math.log(ratio) / delta))


# ---------------------------------------------------------------------------
# the iteration
# ---------------------------------------------------------------------------

def zero_state(prob: SaddleProblem) -> IterateState:
    return IterateState(np.zeros(prob.f.dim), np.zeros(prob.f.dim),
                        [np.zeros(d) for d in prob.dual_dims], 0)


def _dual_update(prob: SaddleProblem, ys: Sequence[np.ndarray], p: np.ndarray,
                 sigma: float, pool: Optional[ThreadPoolExecutor]) -> list[np.ndarray]:
    def one(i):
        blk = prob.blocks[i]
        v = ys[i] + sigma * blk.op.apply_adjoint(p)
        return blk.prox.prox_conjugate(v, sigma)

    if pool is None:
        return [one(i) for i in range(len(prob.blocks))]
    return list(pool.map(one, range(len(prob.blocks))))


def papc_step(state: IterateState, prob: SaddleProblem, cfg: SolverConfig,
              _pool: Optional[ThreadPoolExecutor] = None) -> IterateState:
    """One predictor / dual-prox / corrector sweep.

    The gradient of the smooth part is evaluated once, at the incoming
    primal point, and reused by both primal updates.
    """
    x = state.x
    if x.shape != (prob.f.dim,):
        raise DimensionError("state.x has the wrong dimension")
    if len(state.y) != len(prob.blocks):
        raise DimensionError("state.y block count mismatch")
    g = prob.f.gradient(x)
    Ay = prob.apply_stack(state.y)
    p = x - cfg.tau * (g + Ay)
    y_new = _dual_update(prob, state.y, p, cfg.sigma, _pool)
    Ay_new = prob.apply_stack(y_new)
    x_new = x - cfg.tau * (g + Ay_new)
    return IterateState(x_new, p, y_new, state.k + 1)


def solve(prob: SaddleProblem, cfg: SolverConfig,
          init: Optional[IterateState] = None) -> tuple[IterateState, ConvergenceReport]:
    """Iterate until the H-norm step drops below ``stop_tol`` or the budget ends.

    Deterministic for fixed inputs; ``cfg.seed`` never enters the iteration.
    Raises :class:`DivergenceError` with the iteration index if non-finite
    values appear.
    """
    validate_params(cfg.tau, cfg.sigma, prob.f.lipschitz_grad, prob.spectral.lambda_max)
    state = init.copy() if init is not None else zero_state(prob)
    metric = h_metric(prob, cfg)
    steps: list[float] = []
    trace: Optional[list[TraceRecord]] = [] if cfg.record_trace else None
    stop_reason: str = "budget"
    pool = None
    try:
        if cfg.parallel_dual and len(prob.blocks) > 1:
            pool = ThreadPoolExecutor(max_workers=cfg.threads)
        for _ in range(cfg.max_iters):
            new = papc_step(state, prob, cfg, pool)
            dx = new.x - state.x
            dy = [a - b for a, b in zip(new.y, state.y)]
            step = metric.norm(dx, dy)
            if not np.isfinite(step) or not np.all(np.isfinite(new.x)):
                raise DivergenceError(new.k)
            steps.append(step)
            if trace is not None:
                trace.append(TraceRecord(
                    iter=new.k,
                    step_H=step,
                    primal_step=float(np.linalg.norm(dx)),
                    dual_step=math.sqrt(sum(float(np.dot(d, d)) for d in dy)),
                    objective=float(prob.objective(new.x)) if prob.objective
                    else float(prob.f.value(new.x)),
                    max_violation=float(prob.max_violation(new.x))
                    if prob.max_violation else 0.0,
                ))
            state = new
            if step == 0.0:
                stop_reason = "stagnation"
                break
            if step <= cfg.stop_tol:
                stop_reason = "tolerance"
                break
    finally:
        if pool is not None:
            pool.shutdown()

    steps_arr = np.asarray(steps)
    window = min(50, len(steps))
    c = estimate_rate(steps_arr, window) if window >= 2 else None
    if c is None and window >= 2:
        c = endpoint_rate(steps_arr, window)
    delta = None
    if (prob.spectral.certified and prob.spectral.lambda_min > 0.0
            and prob.f.pqs_constant is not None):
        delta = delta_bound(cfg.alpha, cfg.tau, cfg.sigma, prob.f.lipschitz_grad,
                            prob.f.pqs_constant, prob.spectral.lambda_min)
    bound = aposteriori_bound(c, steps_arr[-1]) if (c is not None and len(steps)) else None
    report = ConvergenceReport(
        steps_H=steps_arr,
        estimated_rate_c=c,
        delta_certified=delta,
        aposteriori_bound=bound,
        iterations_run=len(steps),
        stop_reason=stop_reason,  # type: ignore[arg-type]
        trace=trace,
    )
    return state, report


def default_sigma(prob: SaddleProblem, tau: float) -> float:
    """The step coupling ``sigma = 1 / (tau * lambda_max(A^T A))``."""
    if tau <= 0:
        raise ParameterError("tau must be positive")
    return 1.0 / (tau * prob.spectral.lambda_max)


def make_config(prob: SaddleProblem, tau: Optional[float] = None,
                sigma: Optional[float] = None, alpha: Optional[float] = None,
                **kwargs) -> SolverConfig:
    """Config builder applying the tuning rules and validating the result.

    Without ``tau`` the rate-optimal tuned value is used, which requires
    certified spectral bounds with a positive smallest eigenvalue and a
    quadratic-support constant on the smooth part.  Without ``sigma`` the
    coupling rule ``sigma = 1 / (tau lambda_max)`` applies.  ``alpha``
    defaults to the tuned value when tuning ran, otherwise 2.
    """
    sb = prob.spectral
    tuned_alpha = None
    if tau is None:
        if not (sb.certified and sb.lambda_min > 0.0) or prob.f.pqs_constant is None:
            raise ParameterError(
                "tau is required: automatic tuning needs certified spectral "
                "bounds and a quadratic-support constant")
        kappa_A = sb.lambda_max / sb.lambda_min
        kappa_f = prob.f.lipschitz_grad / prob.f.pqs_constant
        tau, sigma_t, tuned_alpha, _, _ = tune_parameters(
            kappa_A, max(kappa_f, 1.0), prob.f.lipschitz_grad, sb.lambda_max)
        if sigma is None:
            sigma = sigma_t
    if sigma is None:
        sigma = default_sigma(prob, tau)
    if alpha is None:
        alpha = tuned_alpha if tuned_alpha is not None else 2.0
    cfg = SolverConfig(tau=tau, sigma=sigma, alpha=alpha, **kwargs)
    validate_params(cfg.tau, cfg.sigma, prob.f.lipschitz_grad, sb.lambda_max)
    return cfg
