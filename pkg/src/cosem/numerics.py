"""Dense float64 kernels, parameter storage, and a finite-difference checker.

Matrices are plain 2-D ``numpy.ndarray`` values in row-major order. All
randomness flows through :func:`make_rng`, which pins the generator algorithm
(PCG64) so that identical seeds reproduce identical parameter draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeMismatchError

# Open-interval bounds for sigmoid outputs: smallest positive normal float64
# and the largest float64 strictly below 1.
SIGMOID_LO = float(np.finfo(np.float64).tiny)
SIGMOID_HI = float(np.nextafter(1.0, 0.0))


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the single PRNG used everywhere."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class Param:
    """A learnable array paired with its gradient accumulator."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]
    name: str = ""

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        else:
            self.grad = np.asarray(self.grad, dtype=np.float64)
        if self.value.shape != self.grad.shape:
            raise ShapeMismatchError(
                f"param {self.name!r}: value shape {self.value.shape} "
                f"!= grad shape {self.grad.shape}"
            )

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def dense_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Uniform weights in +-sqrt(6 / (fan_in + fan_out))."""
    limit = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def embedding_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Uniform embedding rows in +-0.5/dim."""
    limit = 0.5 / cols
    return rng.uniform(-limit, limit, size=(rows, cols))


def matvec(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``y[i] = sum_j w[i, j] * x[j]``."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.ndim != 2 or x.ndim != 1:
        raise ShapeMismatchError(f"matvec needs 2-D and 1-D operands, got {w.ndim}-D and {x.ndim}-D")
    if w.shape[1] != x.shape[0]:
        raise ShapeMismatchError(f"matvec: {w.shape} incompatible with vector of length {x.shape[0]}")
    return w @ x


def tanh_forward(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, stable for large ``|x|``.

    Outputs are clamped to the open interval (0, 1): saturated values are
    pulled back to the nearest representable float inside the interval.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, SIGMOID_LO, SIGMOID_HI)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product of two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"hadamard: {a.shape} != {b.shape}")
    return a * b


@dataclass
class FiniteDiffReport:
    """Outcome of a finite-difference gradient comparison."""

    max_rel_error: float
    mean_rel_error: float
    checked: int
    tol: float
    failures: list[tuple[str, tuple[int, ...], float]]

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def finite_diff_check(
    f: Callable[[], float],
    params: Sequence[Param],
    epsilon: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int = 200,
    seed: int = 0,
) -> FiniteDiffReport:
    """Compare analytic gradients in ``param.grad`` against central differences.

    ``f`` must be a deterministic scalar function of the current parameter
    values. The caller populates each ``param.grad`` (one backward pass at the
    unperturbed point) before calling. Up to ``max_coords`` coordinates are
    sampled across all parameters; if the total count is smaller, every
    coordinate is checked. Relative error for one coordinate is
    ``|g_fd - g_an| / max(1e-8, |g_fd| + |g_an|)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    coords: list[tuple[int, tuple[int, ...]]] = []
    for pi, p in enumerate(params):
        for idx in np.ndindex(p.value.shape):
            coords.append((pi, idx))
    if len(coords) > max_coords:
        rng = make_rng(seed)
        chosen = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[int(i)] for i in sorted(chosen)]

    rel_errors = []
    failures = []
    for pi, idx in coords:
        p = params[pi]
        original = p.value[idx]
        p.value[idx] = original + epsilon
        f_plus = f()
        p.value[idx] = original - epsilon
        f_minus = f()
        p.value[idx] = original
        g_fd = (f_plus - f_minus) / (2.0 * epsilon)
        g_an = p.grad[idx]
        rel = abs(g_fd - g_an) / max(1e-8, abs(g_fd) + abs(g_an))
        rel_errors.append(rel)
        if rel >= tol:
            failures.append((p.name, idx, rel))

    return FiniteDiffReport(
        max_rel_error=max(rel_errors) if rel_errors else 0.0,
        mean_rel_error=float(np.mean(rel_errors)) if rel_errors else 0.0,
        checked=len(rel_errors),
        tol=tol,
        failures=failures,
    )
