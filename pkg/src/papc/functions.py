"""Smooth objectives and the numerical quadratic-supportability certificate.

A :class:`SmoothObjective` bundles value, gradient, a certified Lipschitz
constant of the gradient, and (when one is known) a constant ``mu`` such
that the function admits the quadratic lower support

    phi(x) >= phi(y) + <v, x - y> + (mu / 2) ||x - y||^2

at the points of interest.  ``mu`` feeds the linear-rate certificate of the
solver; :func:`pqs_certificate` checks the inequality by seeded sampling when
no analytic constant is available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import ParameterError
from .linops import LinearOperator, operator_norm_sq


@dataclass(frozen=True)
class SmoothObjective:
    """Differentiable convex objective on flat vectors of length ``dim``."""

    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz_grad: float
    pqs_constant: Optional[float] = None
    name: str = ""


def quadratic_fidelity(b: np.ndarray) -> SmoothObjective:
    """Half squared distance to the data: value ``0.5 ||x - b||^2``.

    The gradient is ``x - b``; both the gradient Lipschitz constant and the
    quadratic-support constant equal 1, globally.
    """
    b = np.asarray(b, dtype=float).ravel().copy()

    return SmoothObjective(
        dim=b.size,
        value=lambda x: 0.5 * float(np.sum((np.asarray(x, dtype=float).ravel() - b) ** 2)),
        gradient=lambda x: np.asarray(x, dtype=float).ravel() - b,
        lipschitz_grad=1.0,
        pqs_constant=1.0,
        name="quadratic_fidelity",
    )


def huber_value(t, alpha: float):
    """Smoothed absolute value: quadratic core of half-width ``alpha``.

    ``t^2 / (2 alpha)`` for ``|t| <= alpha`` and ``|t| - alpha/2`` beyond.
    """
    if alpha <= 0:
        raise ParameterError("alpha must be positive")
    t = np.asarray(t, dtype=float)
    out = np.where(np.abs(t) <= alpha, t * t / (2.0 * alpha), np.abs(t) - alpha / 2.0)
    return float(out) if out.ndim == 0 else out


def huber_grad(t, alpha: float):
    """Derivative of :func:`huber_value`: ``t / alpha`` clipped to [-1, 1]."""
    if alpha <= 0:
        raise ParameterError("alpha must be positive")
    t = np.asarray(t, dtype=float)
    out = np.clip(t / alpha, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def modified_huber_value(t, alpha: float, eps: float):
    """Huber variant whose subdifferential at 0 is the interval [-eps/alpha, eps/alpha].

    Three branches: ``((t + eps)^2 - eps^2) / (2 alpha)`` on [0, alpha - eps],
    the mirrored quadratic on [-(alpha - eps), 0], and
    ``|t| + eps - (eps^2 + alpha^2) / (2 alpha)`` outside.  Convex and
    continuous at the breakpoints; the kink at the origin keeps a quadratic
    lower support on bounded sets even though the tails are linear.
    """
    if not (0.0 < eps < alpha):
        raise ParameterError("need 0 < eps < alpha")
    t = np.asarray(t, dtype=float)
    quad = np.where(t >= 0.0,
                    ((t + eps) ** 2 - eps ** 2) / (2.0 * alpha),
                    ((t - eps) ** 2 - eps ** 2) / (2.0 * alpha))
    lin = np.abs(t) + (eps - (eps ** 2 + alpha ** 2) / (2.0 * alpha))
    out = np.where(np.abs(t) <= alpha - eps, quad, lin)
    return float(out) if out.ndim == 0 else out


def smoothed_tv_objective(grad_op: LinearOperator, alpha: float) -> SmoothObjective:
    """Huber-smoothed total variation ``sum phi_alpha((grad x)_c)``.

    ``grad_op`` supplies the discrete gradient; the objective gradient is
    the adjoint applied to the componentwise Huber derivative and its
    Lipschitz constant is ``||grad||^2 / alpha``.
    """
    if alpha <= 0:
        raise ParameterError("alpha must be positive")
    gram_max = grad_op.gram_max
    if gram_max is None:
        gram_max = 1.01 * operator_norm_sq(grad_op, seed=0)

    def value(x):
        return float(np.sum(huber_value(grad_op.apply(np.asarray(x, dtype=float)), alpha)))

    def gradient(x):
        return grad_op.apply_adjoint(huber_grad(grad_op.apply(np.asarray(x, dtype=float)), alpha))

    return SmoothObjective(grad_op.domain_dim, value, gradient,
                           lipschitz_grad=gram_max / alpha,
                           pqs_constant=None, name="smoothed_tv")


def dirichlet_energy(grad_op: LinearOperator) -> SmoothObjective:
    """Quadratic smoothness energy ``0.5 ||grad x||^2``.

    The Hessian is the Gram operator of ``grad_op``, so the gradient
    Lipschitz constant is its largest eigenvalue and the quadratic-support
    constant its smallest (present only when strictly positive, which holds
    for the 1D stencil but not for the 2D Neumann gradient whose kernel
    contains the constants).
    """
    gram_max = grad_op.gram_max
    if gram_max is None:
        gram_max = 1.01 * operator_norm_sq(grad_op, seed=0)
    mu = grad_op.gram_min if grad_op.gram_min and grad_op.gram_min > 0.0 else None

    def value(x):
        g = grad_op.apply(np.asarray(x, dtype=float))
        return 0.5 * float(np.dot(g, g))

    def gradient(x):
        return grad_op.apply_adjoint(grad_op.apply(np.asarray(x, dtype=float)))

    return SmoothObjective(grad_op.domain_dim, value, gradient,
                           lipschitz_grad=gram_max, pqs_constant=mu,
                           name="dirichlet_energy")


# ---------------------------------------------------------------------------
# quadratic supportability certificate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PqsCertificate:
    """Outcome of a sampled quadratic-support check at one point."""

    passed: bool
    worst_slack: float
    mu: float
    radius: float
    samples: int
    seed: int


def pqs_extension_constant(mu_local: float, radius_local: float,
                           radius_target: float) -> float:
    """Support constant valid on a larger ball, given a local one.

    For a convex function with constant ``mu_local`` on a ball of radius
    ``radius_local``, the constant ``mu_local * radius_local^2 /
    (4 radius_target^2)`` is valid on the ball of radius ``radius_target``.
    """
    if mu_local <= 0 or radius_local <= 0 or radius_target <= 0:
        raise ParameterError("all arguments must be positive")
    return mu_local * radius_local ** 2 / (4.0 * radius_target ** 2)


def _sample_ball(dim: int, samples: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Low-discrepancy directions on the sphere plus uniform radius factors."""
    if dim + 1 <= qmc.Sobol.MAXDIM:
        m = 1 << max(1, int(np.ceil(np.log2(samples))))
        raw = qmc.Sobol(d=dim + 1, scramble=True, seed=seed).random(m)[:samples]
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        raw = rng.random((samples, dim + 1))
    dirs = ndtri(np.clip(raw[:, :dim], 1e-12, 1.0 - 1e-12))
    norms = np.linalg.norm(dirs, axis=1)
    norms[norms == 0.0] = 1.0
    dirs /= norms[:, None]
    radii = raw[:, dim]
    return dirs, radii


def pqs_certificate(phi: SmoothObjective, y: np.ndarray, radius: float,
                    mu: float, samples: int = 256, seed: int = 0,
                    subgradient: Optional[np.ndarray] = None) -> PqsCertificate:
    """Sampled check of the quadratic lower-support inequality at ``y``.

    Draws ``samples`` points in the closed ball of the given radius around
    ``y`` (low-discrepancy directions, uniform radii, deterministic for a
    fixed seed) and evaluates the slack

        phi(x) - phi(y) - <v, x - y> - (mu / 2) ||x - y||^2.

    ``v`` defaults to the gradient at ``y``; pass ``subgradient`` explicitly
    to probe a kink point, and call once per extreme subgradient there.  The
    certificate passes when the worst slack stays above ``-1e-12``; a failing
    certificate is a valid outcome, not an error.
    """
    if samples < 1:
        raise ParameterError("samples must be >= 1")
    if radius <= 0 or mu <= 0:
        raise ParameterError("radius and mu must be positive")
    y = np.asarray(y, dtype=float).ravel()
    v = phi.gradient(y) if subgradient is None else np.asarray(subgradient, dtype=float).ravel()
    fy = phi.value(y)
    dirs, radii = _sample_ball(y.size, samples, seed)
    worst = np.inf
    for k in range(samples):
        d = dirs[k] * (radii[k] * radius)
        x = y + d
        slack = phi.value(x) - fy - float(np.dot(v, d)) - 0.5 * mu * float(np.dot(d, d))
        if slack < worst:
            worst = slack
    return PqsCertificate(passed=bool(worst >= -1e-12), worst_slack=float(worst),
                          mu=mu, radius=radius, samples=samples, seed=seed)
