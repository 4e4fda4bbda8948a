"""Structured encoder/decoder dictionaries built from a PoleSet."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .atoms import Generator, PoleSet, expand_quadrants

__all__ = [
    "DictionaryError",
    "Dictionary",
    "raw_columns",
    "build_encoder",
    "build_decoder",
    "build_pair",
    "power_iteration",
    "lipschitz_constant",
    "LIPSCHITZ_SAFETY",
]

LIPSCHITZ_SAFETY = 1.001
_POWER_RTOL = 1e-9
_POWER_MAXITER = 1000
_SECOND_START_SEED = 20240917


class DictionaryError(ValueError):
    pass


@dataclass(frozen=True)
class Dictionary:
    """Dense dictionary with column scales and the FISTA Lipschitz constant.

    ``matrix`` has ``T`` rows for an encoder and ``T + 1`` for a decoder.  Both
    share ``col_scales`` (the Euclidean norms of the raw encoder columns) and
    ``lipschitz``, which always refers to the normalized encoder.
    """

    matrix: np.ndarray
    col_scales: np.ndarray
    lipschitz: float
    lambda_max: float
    generators: Tuple[Generator, ...]
    T: int
    decoder: bool = False

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def encoder_part(self) -> np.ndarray:
        return self.matrix[: self.T]


def raw_columns(gens: List[Generator], rows: int) -> np.ndarray:
    """Unnormalized ``rows x len(gens)`` matrix of pole powers."""
    k = np.arange(rows, dtype=np.float64)
    out = np.empty((rows, len(gens)), dtype=np.float64)
    for j, g in enumerate(gens):
        out[:, j] = g.values(k)
    return out


def power_iteration(gram: np.ndarray, rtol: float = _POWER_RTOL, maxiter: int = _POWER_MAXITER,
                    start: Optional[np.ndarray] = None):
    """Largest eigenvalue of a symmetric PSD matrix.

    Starts from the all-ones vector (or ``start``) so results are
    reproducible.  Returns ``(estimate, converged)`` where ``estimate`` is the
    last Rayleigh quotient.
    """
    n = gram.shape[0]
    v = np.ones(n) if start is None else np.asarray(start, dtype=np.float64)
    v = v / np.linalg.norm(v)
    est = float(v @ gram @ v)
    for _ in range(maxiter):
        w = gram @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0, True
        v = w / nrm
        new = float(v @ gram @ v)
        if abs(new - est) <= rtol * abs(new):
            return new, True
        est = new
    return est, False


def _top_eigenvalue(gram: np.ndarray):
    """Power iteration from all ones, then from a fixed random vector; keeps the larger.

    The all-ones vector can be an eigenvector of a smaller eigenvalue (any
    equicorrelated pair of columns does it), which would stall the first run
    at the wrong value.
    """
    est, ok = power_iteration(gram)
    alt = np.random.default_rng(_SECOND_START_SEED).standard_normal(gram.shape[0])
    est2, ok2 = power_iteration(gram, start=alt)
    if est2 > est * (1 + 10 * _POWER_RTOL):
        return est2, ok2
    return est, ok


def lipschitz_constant(d) -> float:
    """Safety-factored estimate of the largest eigenvalue of ``D^T D``.

    Accepts a :class:`Dictionary` (its encoder rows are used) or a bare matrix.
    """
    m = d.encoder_part if isinstance(d, Dictionary) else np.asarray(d, dtype=np.float64)
    est, ok = _top_eigenvalue(m.T @ m)
    if not ok:
        warnings.warn("power iteration hit its cap; inflating Lipschitz estimate", RuntimeWarning)
        return est * 1.01
    return est * LIPSCHITZ_SAFETY


def _scales(raw: np.ndarray, gens: List[Generator]) -> np.ndarray:
    scales = np.sqrt(np.einsum("ij,ij->j", raw, raw))
    bad = np.flatnonzero(~(scales > 0) | ~np.isfinite(scales))
    if bad.size:
        g = gens[int(bad[0])]
        raise DictionaryError(
            f"degenerate {g.kind} column for pole {g.pole} (rho={g.rho}, psi={g.psi})"
        )
    return scales


def build_pair(ps: PoleSet, T: int) -> Tuple[Dictionary, Dictionary]:
    """Encoder (``T`` rows) and decoder (``T + 1`` rows) from one construction."""
    if T < 2:
        raise DictionaryError(f"T must be at least 2, got {T}")
    gens = expand_quadrants(ps)
    if not gens:
        raise DictionaryError("pole set produces no columns")
    raw = raw_columns(gens, T + 1)
    scales = _scales(raw[:T], gens)
    full = raw / scales
    enc = np.ascontiguousarray(full[:T])
    dec = np.ascontiguousarray(full)
    est, ok = _top_eigenvalue(enc.T @ enc)
    if not ok:
        warnings.warn("power iteration hit its cap; inflating Lipschitz estimate", RuntimeWarning)
    lip = est * (LIPSCHITZ_SAFETY if ok else 1.01)
    for a in (enc, dec, scales):
        a.setflags(write=False)
    gens_t = tuple(gens)
    return (
        Dictionary(enc, scales, lip, est, gens_t, T, decoder=False),
        Dictionary(dec, scales, lip, est, gens_t, T, decoder=True),
    )


def build_encoder(ps: PoleSet, T: int) -> Dictionary:
    return build_pair(ps, T)[0]


def build_decoder(ps: PoleSet, T: int) -> Dictionary:
    """Encoder dictionary extended by the row ``k = T``, with encoder scaling."""
    return build_pair(ps, T)[1]
