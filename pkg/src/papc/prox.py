"""Proximal maps and projections used by the dual update.

Conventions: ``prox_c^g(u) = argmin_v g(v) + ||v - u||^2 / (2c)``, so a
larger step ``c`` weights ``g`` more.  Conjugate proxes are obtained from the
primal ones through the decomposition

    prox_c^{g*}(z) = z - c * prox_{1/c}^{g}(z / c),

which is how every dual block in the solver evaluates its update.  All maps
here are pure functions and firmly nonexpansive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass(frozen=True)
class ProxableBlock:
    """One dual block: its dimension and the conjugate prox map.

    ``prox_conjugate(zeta, sigma)`` evaluates ``prox_sigma^{g*}(zeta)`` for
    the block's nonsmooth function ``g``.
    """

    block_dim: int
    prox_conjugate: Callable[[np.ndarray, float], np.ndarray]
    description: str = ""


@dataclass(frozen=True)
class Slab:
    """Constraint set ``{y : |<omega, y - b>| <= q}`` for one window."""

    omega: np.ndarray
    b: np.ndarray
    q: float


def project_linf_ball(y: np.ndarray, lam: float) -> np.ndarray:
    """Componentwise projection onto ``{y : ||y||_inf <= lam}``.

    Equals ``y / max(1, |y| / lam)`` entry by entry, the resolvent of the
    indicator of the ball at any proximal step.
    """
    if lam <= 0:
        raise ParameterError("lam must be positive")
    y = np.asarray(y, dtype=float)
    return y / np.maximum(1.0, np.abs(y) / lam)


def prox_conjugate_via_moreau(prox_of_g, z: np.ndarray, sigma: float) -> np.ndarray:
    """Conjugate prox from a primal prox via the Moreau decomposition.

    ``prox_of_g(u, c)`` must evaluate ``prox_c^g(u)``; the result is
    ``prox_sigma^{g*}(z) = z - sigma * prox_{1/sigma}^g(z / sigma)``.
    """
    if sigma <= 0:
        raise ParameterError("sigma must be positive")
    z = np.asarray(z, dtype=float)
    return z - sigma * np.asarray(prox_of_g(z / sigma, 1.0 / sigma), dtype=float)


def project_slab(y: np.ndarray, omega: np.ndarray, b: np.ndarray, q: float) -> np.ndarray:
    """Euclidean projection onto ``{y : |<omega, y - b>| <= q}``.

    With ``r = <omega, y - b>``: feasible points (``|r| <= q``, boundary
    included) are returned unchanged; otherwise the excess along ``omega`` is
    removed, ``y - omega * (r - sign(r) q) / ||omega||^2``.
    """
    y = np.asarray(y, dtype=float)
    omega = np.asarray(omega, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (y.shape == omega.shape == b.shape):
        raise DimensionError("y, omega, b must share one shape")
    if q <= 0:
        raise ParameterError("q must be positive")
    w2 = float(np.dot(omega.ravel(), omega.ravel()))
    if w2 == 0.0:
        raise ParameterError("omega must be nonzero")
    r = float(np.dot(omega.ravel(), (y - b).ravel()))
    if abs(r) <= q:
        return y.copy()
    return y - omega * ((r - np.sign(r) * q) / w2)


def smre_dual_prox(y_prev: np.ndarray, Ap: np.ndarray, sigma: float, slab: Slab) -> np.ndarray:
    """Dual update for one windowed residual constraint.

    Evaluates ``v - sigma * P(v / sigma)`` at ``v = y_prev + sigma * Ap``,
    where ``P`` projects onto the slab; this is the conjugate prox of the
    slab indicator applied to the shifted dual point.
    """
    if sigma <= 0:
        raise ParameterError("sigma must be positive")
    v = np.asarray(y_prev, dtype=float) + sigma * np.asarray(Ap, dtype=float)
    return v - sigma * project_slab(v / sigma, slab.omega, slab.b, slab.q)


def prox_separable_product(blocks: Sequence[ProxableBlock], zeta: np.ndarray,
                           sigma: float) -> np.ndarray:
    """Apply each block's conjugate prox to its slice of a stacked vector."""
    zeta = np.asarray(zeta, dtype=float)
    total = sum(b.block_dim for b in blocks)
    if zeta.ndim != 1 or zeta.size != total:
        raise DimensionError(f"stacked vector has size {zeta.size}, expected {total}")
    out = np.empty_like(zeta)
    start = 0
    for blk in blocks:
        stop = start + blk.block_dim
        out[start:stop] = blk.prox_conjugate(zeta[start:stop], sigma)
        start = stop
    return out
