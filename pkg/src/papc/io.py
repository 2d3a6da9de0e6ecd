"""Data ingestion, synthetic phantoms, and trace persistence.

File formats:

* signals: plain text, one decimal value per line, 17 significant digits on
  write so round trips are exact;
* images: binary portable graymaps (P5, 8 or 16 bit) scaled to [0, 1] on
  read, or a raw lossless format with a 16-byte header (8-byte magic
  ``PAPCIMG1`` plus little-endian uint64 side length) followed by row-major
  float64 values;
* traces: CSV with the fixed header
  ``iter,step_H,primal_step,dual_step,objective,max_violation``.

All synthetic data generation is reproducible: Gaussian samples come from a
Box-Muller transform over the PCG64 stream of the given seed, which pins the
exact bit pattern independent of library internals.
"""

from __future__ import annotations

import os
import struct
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, FormatError, ParameterError, ParseError
from .solver import TraceRecord

_RAW_MAGIC = b"PAPCIMG1"
_TRACE_HEADER = "iter,step_H,primal_step,dual_step,objective,max_violation"


def _atomic_write_bytes(path, payload: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# signals
# ---------------------------------------------------------------------------

def read_signal_csv(path) -> np.ndarray:
    """Read one decimal value per line; scientific notation accepted."""
    values = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ParseError(f"not a decimal value: {line!r}", line=lineno)
    if not values:
        raise ParseError("empty signal file")
    return np.asarray(values, dtype=float)


def write_signal_csv(path, vector: np.ndarray) -> None:
    vector = np.asarray(vector, dtype=float).ravel()
    payload = "".join(f"{v:.17g}\n" for v in vector)
    _atomic_write_bytes(path, payload.encode("ascii"))


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

def _parse_pgm(data: bytes) -> np.ndarray:
    # header tokens may be separated by whitespace and '#' comments
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated graymap header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError("malformed graymap header")
    if width != height:
        raise DimensionError(f"graymap must be square, got {width}x{height}")
    if not (0 < maxval < 65536):
        raise FormatError(f"unsupported graymap maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raster = data[pos:pos + count * dtype.itemsize]
    if len(raster) != count * dtype.itemsize:
        raise FormatError("graymap raster shorter than the header promises")
    values = np.frombuffer(raster, dtype=dtype).astype(float) / float(maxval)
    return values.reshape(height, width)


def read_image(path) -> np.ndarray:
    """Read a square grayscale field scaled to [0, 1], or the raw format."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P5":
        return _parse_pgm(data)
    if data[:8] == _RAW_MAGIC:
        if len(data) < 16:
            raise FormatError("truncated raw image header")
        (n,) = struct.unpack("<Q", data[8:16])
        expect = 16 + 8 * n * n
        if len(data) != expect:
            raise FormatError(f"raw image payload has {len(data)} bytes, "
                              f"expected {expect}")
        return np.frombuffer(data[16:], dtype="<f8").reshape(n, n).copy()
    raise FormatError("unsupported image magic")


def write_image(path, field: np.ndarray) -> None:
    """Write a square field: 16-bit graymap for ``.pgm`` paths, raw otherwise.

    The graymap clips to [0, 1] and quantizes; every other extension uses the
    lossless raw float64 format.
    """
    field = np.asarray(field, dtype=float)
    if field.ndim != 2 or field.shape[0] != field.shape[1]:
        raise DimensionError("image must be a square 2D field")
    n = field.shape[0]
    if str(path).endswith(".pgm"):
        maxval = 65535
        quant = np.clip(field, 0.0, 1.0)
        raster = np.round(quant * maxval).astype(">u2").tobytes()
        header = f"P5\n{n} {n}\n{maxval}\n".encode("ascii")
        _atomic_write_bytes(path, header + raster)
    else:
        payload = _RAW_MAGIC + struct.pack("<Q", n) + field.astype("<f8").tobytes()
        _atomic_write_bytes(path, payload)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def gaussian_noise(shape, sd: float, seed: int) -> np.ndarray:
    """Seeded Gaussian samples via Box-Muller over PCG64 uniforms."""
    if sd < 0:
        raise ParameterError("sd must be nonnegative")
    size = int(np.prod(shape))
    if sd == 0.0 or size == 0:
        return np.zeros(shape)
    rng = np.random.Generator(np.random.PCG64(seed))
    m = (size + 1) // 2
    u1 = rng.random(m)
    u2 = rng.random(m)
    u1 = np.maximum(u1, 1e-300)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2.0 * np.pi * u2),
                        radius * np.sin(2.0 * np.pi * u2)])[:size]
    return (sd * z).reshape(shape)


def _blocks_phantom(n: int) -> np.ndarray:
    edges = [0.0, 0.12, 0.25, 0.4, 0.55, 0.7, 0.82, 1.0]
    levels = [0.1, 0.8, 0.3, 1.0, 0.5, 0.9, 0.2]
    x = np.empty(n)
    for lo, hi, v in zip(edges[:-1], edges[1:], levels):
        x[int(lo * n):max(int(hi * n), int(lo * n) + 1)] = v
    x[int(edges[-2] * n):] = levels[-1]
    return x


def synth_signal(kind: str, n: int, noise_sd: float, seed: int,
                 path=None) -> tuple[np.ndarray, np.ndarray]:
    """Clean phantom plus its noisy observation.

    ``kind`` is ``blocks`` (piecewise constant), ``ramp`` (linear), or
    ``custom-csv`` with ``path`` naming the clean signal file (``n`` is then
    ignored).  Deterministic for a fixed seed.
    """
    if kind == "blocks":
        if n < 1:
            raise ParameterError("n must be >= 1")
        clean = _blocks_phantom(n)
    elif kind == "ramp":
        if n < 1:
            raise ParameterError("n must be >= 1")
        clean = np.linspace(0.0, 1.0, n)
    elif kind == "custom-csv":
        if path is None:
            raise ParameterError("custom-csv requires a path")
        clean = read_signal_csv(path)
    else:
        raise ParameterError(f"unknown signal kind {kind!r}")
    noisy = clean + gaussian_noise(clean.shape, noise_sd, seed)
    return clean, noisy


def synth_image(kind: str, n: int, noise_sd: float, seed: int,
                path=None) -> tuple[np.ndarray, np.ndarray]:
    """Square phantom plus its noisy observation.

    ``kind`` is ``phantom`` (rectangles and a disc on a dark background),
    ``stripes`` (period-2 vertical bars, gradient-rich everywhere), or
    ``custom-image`` with ``path`` naming the clean field.
    """
    if kind == "phantom":
        if n < 4:
            raise ParameterError("n must be >= 4")
        clean = np.zeros((n, n))
        clean[n // 8: n // 2, n // 8: n // 2] = 0.6
        clean[n // 2: 7 * n // 8, n // 3: 2 * n // 3] = 0.9
        i, j = np.ogrid[:n, :n]
        disc = (i - 0.3 * n) ** 2 + (j - 0.72 * n) ** 2 <= (0.14 * n) ** 2
        clean[disc] = 1.0
    elif kind == "stripes":
        if n < 2:
            raise ParameterError("n must be >= 2")
        j = np.arange(n)
        clean = np.tile((j % 2).astype(float), (n, 1))
    elif kind == "custom-image":
        if path is None:
            raise ParameterError("custom-image requires a path")
        clean = read_image(path)
    else:
        raise ParameterError(f"unknown image kind {kind!r}")
    noisy = clean + gaussian_noise(clean.shape, noise_sd, seed)
    return clean, noisy


def gaussian_psf(k: int, width: float) -> np.ndarray:
    """Normalized k-by-k Gaussian point spread function."""
    if k < 1 or width <= 0:
        raise ParameterError("need k >= 1 and width > 0")
    c = (k - 1) / 2.0
    i = np.arange(k)
    g = np.exp(-((i - c) ** 2) / (2.0 * width ** 2))
    psf = np.outer(g, g)
    return psf / psf.sum()


def write_psf_csv(path, psf: np.ndarray) -> None:
    psf = np.asarray(psf, dtype=float)
    if psf.ndim != 2 or psf.shape[0] != psf.shape[1]:
        raise DimensionError("PSF must be square")
    payload = "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in psf)
    _atomic_write_bytes(path, payload.encode("ascii"))


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

def write_trace_csv(path, records: Iterable[TraceRecord]) -> None:
    lines = [_TRACE_HEADER]
    last_iter = None
    for rec in records:
        if last_iter is not None and rec.iter <= last_iter:
            raise ParameterError("trace iterations must be strictly increasing")
        last_iter = rec.iter
        lines.append(
            f"{rec.iter},{rec.step_H:.17g},{rec.primal_step:.17g},"
            f"{rec.dual_step:.17g},{rec.objective:.17g},{rec.max_violation:.17g}")
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_trace_csv(path) -> list[TraceRecord]:
    records = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != _TRACE_HEADER:
            raise ParseError(f"unexpected trace header {header!r}", line=1)
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ParseError("expected 6 comma-separated fields", line=lineno)
            try:
                records.append(TraceRecord(
                    iter=int(parts[0]), step_H=float(parts[1]),
                    primal_step=float(parts[2]), dual_step=float(parts[3]),
                    objective=float(parts[4]), max_violation=float(parts[5])))
            except ValueError:
                raise ParseError("malformed trace row", line=lineno)
    return records
