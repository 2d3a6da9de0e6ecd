"""Matrix-free linear operators: difference stencils, convolution, spectra.

Every operator is shipped as a pair of pure callables (forward and true
adjoint) wrapped in a :class:`LinearOperator` handle that records the flat
domain/codomain dimensions.  Handles are immutable and safe to share across
threads.  Where the extreme eigenvalues of the Gram operator ``A^T A`` are
known in closed form they are attached to the handle so downstream step-size
rules and rate certificates do not have to fall back on power iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, ParameterError, ParseError


@dataclass(frozen=True)
class LinearOperator:
    """Matrix-free linear map between flat real vector spaces.

    ``apply`` and ``apply_adjoint`` must be linear, pure, and mutually
    adjoint: ``<apply(x), y> == <x, apply_adjoint(y)>`` up to round-off.
    ``gram_min``/``gram_max`` optionally carry certified extreme eigenvalues
    of ``A^T A`` (on the domain side).
    """

    domain_dim: int
    codomain_dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    apply_adjoint: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    gram_min: Optional[float] = None
    gram_max: Optional[float] = None

    def __post_init__(self):
        if self.domain_dim < 1 or self.codomain_dim < 1:
            raise DimensionError("operator dimensions must be positive")


@dataclass(frozen=True)
class SpectralBounds:
    """Extreme eigenvalues of a Gram operator, with a provenance flag.

    ``certified`` is True when the values are analytic (or exact by
    structure) and therefore safe for both step-size validation and rate
    certificates; power-iteration estimates are marked False.
    """

    lambda_min: float
    lambda_max: float
    certified: bool = False

    def __post_init__(self):
        if not (0.0 <= self.lambda_min <= self.lambda_max):
            raise ParameterError(
                f"need 0 <= lambda_min <= lambda_max, got "
                f"({self.lambda_min}, {self.lambda_max})"
            )


# ---------------------------------------------------------------------------
# difference stencils
# ---------------------------------------------------------------------------

def grad1d_dirichlet(x: np.ndarray) -> np.ndarray:
    """Forward difference on a 1D signal, zero state beyond the right end.

    ``(out)_i = x_{i+1} - x_i`` for interior entries and ``(out)_n = -x_n``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DimensionError("grad1d_dirichlet expects a nonempty 1D array")
    out = np.empty_like(x)
    out[:-1] = x[1:] - x[:-1]
    out[-1] = -x[-1]
    return out


def div1d_dirichlet(y: np.ndarray) -> np.ndarray:
    """Discrete divergence matching :func:`grad1d_dirichlet`.

    Satisfies ``<grad1d(x), y> == <x, -div1d(y)>`` exactly, the usual
    sign convention for the adjoint pair (gradient, divergence).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise DimensionError("div1d_dirichlet expects a nonempty 1D array")
    out = np.empty_like(y)
    out[0] = y[0]
    out[1:] = y[1:] - y[:-1]
    return out


def grad2d_neumann(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences of an n-by-n field, zero row/column at the far edge.

    Returns the pair (difference along axis 0, difference along axis 1).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.shape[0] < 2:
        raise DimensionError("grad2d_neumann expects a square field with n >= 2")
    g1 = np.zeros_like(x)
    g2 = np.zeros_like(x)
    g1[:-1, :] = x[1:, :] - x[:-1, :]
    g2[:, :-1] = x[:, 1:] - x[:, :-1]
    return g1, g2


def div2d_neumann(y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`grad2d_neumann`.

    Satisfies ``<grad2d(x), (y1, y2)> == <x, -div2d(y1, y2)>`` exactly, so
    ``div2d(grad2d(x))`` reproduces the five-point Laplacian stencil
    (neighbour sum minus 4x) in the interior.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if y1.shape != y2.shape:
        raise DimensionError("div2d_neumann components must have equal shapes")
    if y1.ndim != 2 or y1.shape[0] != y1.shape[1] or y1.shape[0] < 2:
        raise DimensionError("div2d_neumann expects square fields with n >= 2")
    out = np.zeros_like(y1)
    out[0, :] += y1[0, :]
    out[1:-1, :] += y1[1:-1, :] - y1[:-2, :]
    out[-1, :] += -y1[-2, :]
    out[:, 0] += y2[:, 0]
    out[:, 1:-1] += y2[:, 1:-1] - y2[:, :-2]
    out[:, -1] += -y2[:, -2]
    return out


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _shifted_accumulate(x: np.ndarray, psf: np.ndarray, origin: int) -> np.ndarray:
    # out[i, j] = sum_{a, b} psf[a, b] * x[i - a + origin, j - b + origin],
    # with x extended by zeros.  Direct (spatial) evaluation only.
    n = x.shape[0]
    k = psf.shape[0]
    out = np.zeros_like(x)
    for a in range(k):
        di = origin - a
        si0, si1 = max(0, di), min(n, n + di)
        ti0, ti1 = max(0, -di), min(n, n - di)
        if si0 >= si1:
            continue
        for b in range(k):
            w = psf[a, b]
            if w == 0.0:
                continue
            dj = origin - b
            sj0, sj1 = max(0, dj), min(n, n + dj)
            tj0, tj1 = max(0, -dj), min(n, n - dj)
            if sj0 >= sj1:
                continue
            out[si0:si1, sj0:sj1] += w * x[ti0:ti1, tj0:tj1]
    return out


def _check_psf(x: np.ndarray, psf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    psf = np.asarray(psf, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError("convolve_psf expects a square field")
    if psf.ndim != 2 or psf.shape[0] != psf.shape[1]:
        raise DimensionError("PSF kernel must be square")
    if psf.shape[0] > x.shape[0]:
        raise DimensionError("PSF kernel larger than the image")
    if np.any(psf < 0):
        raise ParameterError("PSF entries must be nonnegative")
    return x, psf


def convolve_psf(x: np.ndarray, psf: np.ndarray) -> np.ndarray:
    """Zero-padded, same-size 2D convolution of a square field with a PSF."""
    x, psf = _check_psf(x, psf)
    return _shifted_accumulate(x, psf, origin=(psf.shape[0] - 1) // 2)


def convolve_psf_adjoint(y: np.ndarray, psf: np.ndarray) -> np.ndarray:
    """Exact adjoint of :func:`convolve_psf`: correlation with the same PSF."""
    y, psf = _check_psf(y, psf)
    k = psf.shape[0]
    return _shifted_accumulate(y, psf[::-1, ::-1], origin=(k - 1) - (k - 1) // 2)


def read_psf_csv(path) -> np.ndarray:
    """Read a square PSF kernel from plain-text CSV (k rows of k decimals)."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError:
                raise ParseError(f"malformed PSF entry in {line!r}", line=lineno)
    if not rows:
        raise ParseError("empty PSF file")
    k = len(rows)
    if any(len(r) != k for r in rows):
        raise DimensionError("PSF CSV must be square (k rows of k values)")
    return np.asarray(rows, dtype=float)


# ---------------------------------------------------------------------------
# operator handles
# ---------------------------------------------------------------------------

def identity_operator(n: int) -> LinearOperator:
    return LinearOperator(n, n, lambda v: np.asarray(v, dtype=float),
                          lambda v: np.asarray(v, dtype=float),
                          name="identity", gram_min=1.0, gram_max=1.0)


def transpose_operator(op: LinearOperator) -> LinearOperator:
    """Handle for ``A^T``; shares the Gram spectrum with ``A`` when square."""
    square = op.domain_dim == op.codomain_dim
    return LinearOperator(
        op.codomain_dim, op.domain_dim, op.apply_adjoint, op.apply,
        name=f"{op.name}^T" if op.name else "transpose",
        gram_min=op.gram_min if square else None,
        gram_max=op.gram_max if square else None,
    )


def grad1d_operator(n: int) -> LinearOperator:
    """Handle for the 1D forward-difference stencil with its exact Gram bounds."""
    lo, hi = grad1d_gram_extreme_eigs(n)
    return LinearOperator(
        n, n, grad1d_dirichlet,
        lambda y: -div1d_dirichlet(y),
        name="grad1d_dirichlet", gram_min=lo, gram_max=hi,
    )


def grad2d_operator(n: int) -> LinearOperator:
    """Handle for the 2D Neumann gradient on flat vectors of length n*n."""
    if n < 2:
        raise DimensionError("grad2d_operator needs n >= 2")
    lo, hi = grad2d_gram_extreme_eigs(n)

    def fwd(v):
        g1, g2 = grad2d_neumann(np.asarray(v, dtype=float).reshape(n, n))
        return np.concatenate([g1.ravel(), g2.ravel()])

    def adj(w):
        w = np.asarray(w, dtype=float)
        y1 = w[: n * n].reshape(n, n)
        y2 = w[n * n:].reshape(n, n)
        return -div2d_neumann(y1, y2).ravel()

    return LinearOperator(n * n, 2 * n * n, fwd, adj,
                          name="grad2d_neumann", gram_min=lo, gram_max=hi)


def convolution_operator(n: int, psf: np.ndarray) -> LinearOperator:
    """Handle for same-size PSF convolution on flat vectors of length n*n."""
    psf = np.asarray(psf, dtype=float)
    _check_psf(np.zeros((n, n)), psf)
    return LinearOperator(
        n * n, n * n,
        lambda v: convolve_psf(np.asarray(v, dtype=float).reshape(n, n), psf).ravel(),
        lambda v: convolve_psf_adjoint(np.asarray(v, dtype=float).reshape(n, n), psf).ravel(),
        name="convolve_psf",
    )


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

def laplacian_min_eig_1d(n: int) -> float:
    """Smallest eigenvalue of the 1D Dirichlet negative Laplacian.

    This is the tridiagonal (-1, 2, -1) matrix with zero boundary values on
    both sides; the minimum of its spectrum is ``4 sin^2(pi / (2n + 2))``.
    """
    if n < 1:
        raise DimensionError("laplacian_min_eig_1d needs n >= 1")
    return float(4.0 * np.sin(np.pi / (2.0 * n + 2.0)) ** 2)


def grad1d_gram_extreme_eigs(n: int) -> tuple[float, float]:
    """Exact extreme eigenvalues of ``D^T D`` for the shipped 1D stencil.

    The stencil of :func:`grad1d_dirichlet` keeps only n of the n+1 Dirichlet
    differences, so its Gram matrix differs from the (-1, 2, -1) Laplacian in
    one corner entry and has spectrum ``4 sin^2((2k-1) pi / (2(2n+1)))``,
    k = 1..n.  Both extremes sit strictly inside (0, 4).
    """
    if n < 1:
        raise DimensionError("grad1d_gram_extreme_eigs needs n >= 1")
    lo = 4.0 * np.sin(np.pi / (2.0 * (2.0 * n + 1.0))) ** 2
    hi = 4.0 * np.sin((2.0 * n - 1.0) * np.pi / (2.0 * (2.0 * n + 1.0))) ** 2
    return float(lo), float(hi)


def grad2d_gram_extreme_eigs(n: int) -> tuple[float, float]:
    """Exact extreme eigenvalues of the 2D Neumann gradient's Gram operator.

    The spectrum is ``4 sin^2(i pi / 2n) + 4 sin^2(j pi / 2n)`` over
    i, j = 0..n-1; constants lie in the kernel, so the minimum is 0 and the
    maximum ``8 sin^2((n-1) pi / 2n) < 8``.
    """
    if n < 2:
        raise DimensionError("grad2d_gram_extreme_eigs needs n >= 2")
    return 0.0, float(8.0 * np.sin((n - 1.0) * np.pi / (2.0 * n)) ** 2)


def operator_norm_sq(op: LinearOperator, max_iters: int = 20000,
                     tol: float = 1e-13, seed: int = 0) -> float:
    """Power-iteration estimate of ``lambda_max(A^T A)``.

    Runs the iteration on the Gram operator starting from a seeded uniform
    random vector until the relative Rayleigh-quotient change drops below
    ``tol`` or the budget is exhausted.  The returned value is the raw
    Rayleigh quotient, which approaches the true eigenvalue from below; use
    :func:`estimate_spectral_bounds` when a safe upper bound is needed.
    """
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.random(op.domain_dim)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        v[...] = 1.0
        nv = np.linalg.norm(v)
    v /= nv
    lam = 0.0
    for _ in range(max_iters):
        w = op.apply_adjoint(op.apply(v))
        lam_new = float(np.dot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam = lam_new
    return lam


def smallest_gram_eig(op: LinearOperator, max_iters: int = 200,
                      tol: float = 1e-10, seed: int = 0,
                      cg_tol: float = 1e-12) -> float:
    """Inverse-power estimate of ``lambda_min(A^T A)`` for a square operator.

    Matrix-free: each inverse application is a conjugate-gradient solve with
    the Gram operator.  The result is an estimate, not a certificate; prefer
    the analytic formulas above when they apply.
    """
    from scipy.sparse.linalg import LinearOperator as ScipyOp, cg

    if op.domain_dim != op.codomain_dim and op.gram_min is None:
        # the Gram operator is still square; nothing special needed
        pass
    m = op.domain_dim
    gram = ScipyOp((m, m), matvec=lambda v: op.apply_adjoint(op.apply(v)))
    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.random(m)
    v /= np.linalg.norm(v)
    lam = None
    for _ in range(max_iters):
        w, info = cg(gram, v, rtol=cg_tol, maxiter=50 * m)
        if info != 0:
            break
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        w /= nw
        lam_new = float(np.dot(w, gram.matvec(w)))
        if lam is not None and abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam, v = lam_new, w
    return float(lam if lam is not None else 0.0)


def estimate_spectral_bounds(op: LinearOperator, max_iters: int = 20000,
                             tol: float = 1e-13, seed: int = 0) -> SpectralBounds:
    """Spectral bounds for ``A^T A``, certified when analytic values exist.

    Without analytic values the power-iteration estimate of ``lambda_max``
    is inflated by 1% so the step-size constraint ``tau*sigma <= 1/lambda_max``
    stays valid, and the bounds are flagged non-certified.
    """
    if op.gram_max is not None:
        return SpectralBounds(op.gram_min if op.gram_min is not None else 0.0,
                              op.gram_max, certified=True)
    est = operator_norm_sq(op, max_iters=max_iters, tol=tol, seed=seed)
    return SpectralBounds(0.0, 1.01 * est, certified=False)
