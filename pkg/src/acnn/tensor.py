"""Dense tensor helpers, seeded RNG, and the finite-difference gradient oracle.

All numeric values are plain numpy arrays, row-major, rank 1-3. Everything here
is rank/shape-checked at the boundary; NaN/Inf escaping a public operation is a
bug and raises NumericError.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# 64-bit is the default everywhere; gradient checking is unreliable at 32-bit.
# Training may switch to float32 for speed via set_default_dtype.
DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    global DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}")
    DTYPE = dtype


class NumericError(RuntimeError):
    """A computation produced NaN/Inf or a numeric check failed."""


class Rng:
    """Deterministic random stream: identical seed gives an identical sample
    stream across runs and platforms (PCG64). Single-owner, never share across
    threads."""

    ALGORITHM = "pcg64"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    def uniform(self, low: float, high: float, size=None):
        out = self._gen.uniform(low, high, size)
        return float(out) if size is None else out.astype(DTYPE)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, seq):
        return seq[int(self._gen.integers(len(seq)))]

    def weighted_index(self, probs) -> int:
        """Index into `probs` sampled proportionally to its entries."""
        p = np.asarray(probs, dtype=np.float64)
        return int(self._gen.choice(len(p), p=p / p.sum()))

    def spawn(self, key: int) -> "Rng":
        """Derive an independent child stream; deterministic in (seed, key)."""
        child = int(np.random.SeedSequence([self.seed, int(key)]).generate_state(1, np.uint64)[0])
        return Rng(child)


def ensure_finite(x: np.ndarray, context: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {context}")
    return x


def dot_window(kernel: np.ndarray, window: np.ndarray) -> float:
    """Sum of elementwise products of two equal-shape (w, m) matrices."""
    kernel = np.asarray(kernel)
    window = np.asarray(window)
    if kernel.ndim != 2 or kernel.shape != window.shape:
        raise ValueError(f"shape mismatch: kernel {kernel.shape} vs window {window.shape}")
    return float((kernel * window).sum())


def hadamard(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Elementwise product of two equal-length vectors."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.ndim != 1 or u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    return u * v


def slice_rows(x: np.ndarray, i: int, j: int) -> np.ndarray:
    """Rows i..j inclusive of a (n, m) matrix, as a copy."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"expected rank-2 input, got shape {x.shape}")
    n = x.shape[0]
    if not (0 <= i <= j < n):
        raise ValueError(f"row range [{i}, {j}] out of bounds for {n} rows")
    return x[i : j + 1].copy()


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    ok: bool
    worst_index: tuple
    checked: int


def grad_check(f, p: np.ndarray, analytic: np.ndarray, eps: float = 1e-5,
               tol: float = 1e-4) -> GradCheckReport:
    """Compare an analytic gradient against central differences, coordinate by
    coordinate.

    `f(p) -> float` must be a pure function of the array `p`, which is
    perturbed in place and restored. Relative error per coordinate is
    |a - b| / max(|a|, |b|, 1e-8).
    """
    p = np.asarray(p)
    analytic = np.asarray(analytic)
    if analytic.shape != p.shape:
        raise ValueError(f"gradient shape {analytic.shape} != parameter shape {p.shape}")
    worst = 0.0
    worst_idx = ()
    it = np.nditer(p, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = p[idx]
        p[idx] = orig + eps
        f_plus = f(p)
        p[idx] = orig - eps
        f_minus = f(p)
        p[idx] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError("non-finite objective during gradient check")
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = float(analytic[idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        if rel > worst:
            worst = rel
            worst_idx = idx
        it.iternext()
    return GradCheckReport(max_rel_error=worst, ok=worst <= tol,
                           worst_index=worst_idx, checked=p.size)
