"""Batched FISTA for per-pixel Lasso problems.

For each pixel column ``y`` of ``Y`` this minimizes
``0.5 * ||y - D c||^2 + lam * ||c||_1``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dictionary import Dictionary

try:  # compiled kernel, unless DYAN_BACKEND=python
    if os.environ.get("DYAN_BACKEND", "").lower() == "python":
        raise ImportError("python backend forced")
    from ._fista_ext import fista_kernel as _compiled_kernel
except ImportError:  # pragma: no cover - depends on build
    _compiled_kernel = None
from ._fista_py import fista_kernel as _python_kernel

BACKEND = "cython" if _compiled_kernel is not None else "python"

__all__ = [
    "BACKEND",
    "SolverError",
    "SolverState",
    "CodeField",
    "soft_threshold",
    "fista_batch",
    "objective",
    "default_threads",
    "ACTIVE_THRESHOLD",
]

ACTIVE_THRESHOLD = 1e-8


class SolverError(ValueError):
    pass


def default_threads() -> int:
    """Worker count from ``DYAN_THREADS`` (0 or unset means all cores)."""
    raw = os.environ.get("DYAN_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise SolverError(f"DYAN_THREADS must be an integer, got {raw!r}")
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def soft_threshold(x, g):
    return np.sign(x) * np.maximum(np.abs(x) - g, 0.0)


@dataclass(frozen=True)
class SolverState:
    """Per-dictionary quantities shared by every pixel solve.

    ``A = I - D^T D / L`` is only materialized when it is cheaper than
    applying ``D`` and ``D^T`` separately (``2 T >= N``).
    """

    D: np.ndarray
    Dt: np.ndarray
    A: Optional[np.ndarray]
    b_base: np.ndarray
    lipschitz: float

    @classmethod
    def from_dictionary(cls, d) -> "SolverState":
        if isinstance(d, Dictionary):
            D, lip = d.encoder_part, d.lipschitz
        else:
            from .dictionary import lipschitz_constant

            D = np.asarray(d, dtype=np.float64)
            lip = lipschitz_constant(D)
        D = np.ascontiguousarray(D, dtype=np.float64)
        Dt = np.ascontiguousarray(D.T)
        T, N = D.shape
        A = None
        if 2 * T >= N:
            A = np.ascontiguousarray(np.eye(N) - (Dt @ D) / lip)
        return cls(D, Dt, A, Dt / lip, float(lip))

    def threshold(self, lam: float) -> float:
        return lam / self.lipschitz


@dataclass
class CodeField:
    """``N x (H*W)`` codes, one column per pixel."""

    codes: np.ndarray
    H: int
    W: int
    iterations: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return self.codes.shape[0]

    def active_mask(self, threshold: float = ACTIVE_THRESHOLD) -> np.ndarray:
        return np.abs(self.codes) > threshold

    @property
    def nnz(self) -> int:
        return int(self.active_mask().sum())

    @property
    def sparsity(self) -> float:
        """Fraction of entries above the activation threshold."""
        return self.nnz / max(self.codes.size, 1)


def fista_batch(
    d,
    Y,
    lam: float,
    max_iter: int = 100,
    tol: float = 1e-6,
    num_threads: Optional[int] = None,
    backend: Optional[str] = None,
    shape=None,
) -> CodeField:
    """Solve the Lasso for every column of ``Y`` (``T x pixels``).

    ``d`` is a :class:`Dictionary`, a :class:`SolverState` or a plain matrix.
    A pixel stops once the infinity norm of its code update is ``<= tol`` or
    after ``max_iter`` iterations.
    """
    state = d if isinstance(d, SolverState) else SolverState.from_dictionary(d)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    T, N = state.D.shape
    if Y.ndim != 2 or Y.shape[0] != T:
        raise SolverError(f"Y must have {T} rows, got shape {Y.shape}")
    if lam < 0 or not np.isfinite(lam):
        raise SolverError(f"lambda must be a finite nonnegative number, got {lam}")
    if max_iter < 1:
        raise SolverError("max_iter must be >= 1")
    finite = np.isfinite(Y).all(axis=0)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise SolverError(f"non-finite input in pixel column {bad}")
    if shape is None:
        shape = (1, Y.shape[1])
    H, W = shape
    if H * W != Y.shape[1]:
        raise SolverError(f"shape {shape} does not match {Y.shape[1]} pixels")

    backend = backend or BACKEND
    if backend == "cython":
        if _compiled_kernel is None:
            raise SolverError("compiled kernel not available")
        kernel = _compiled_kernel
    elif backend == "python":
        kernel = _python_kernel
    else:
        raise SolverError(f"unknown backend {backend!r}")
    threads = default_threads() if num_threads is None else max(int(num_threads), 1)

    Yt = np.ascontiguousarray(Y.T)
    codes, iters = kernel(
        state.D, state.Dt, state.A, Yt, float(lam), state.lipschitz,
        int(max_iter), float(tol), threads,
    )
    return CodeField(np.ascontiguousarray(codes.T), H, W, np.asarray(iters))


def objective(d, y, c, lam: float) -> float:
    D = d.encoder_part if isinstance(d, Dictionary) else np.asarray(d)
    y = np.asarray(y, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if D.shape != (y.shape[0], c.shape[0]):
        raise SolverError(f"shape mismatch: D {D.shape}, y {y.shape}, c {c.shape}")
    r = y - D @ c
    return 0.5 * float(r @ r) + lam * float(np.abs(c).sum())
