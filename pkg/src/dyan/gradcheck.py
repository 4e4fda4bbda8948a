"""Finite-difference check of the analytic pole and lambda gradients.

The finite-difference side re-encodes every perturbed instance with cyclic
coordinate descent run to machine precision, so it shares nothing with the
FISTA + implicit-differentiation path it checks.  Instances where the
perturbation changes the active set, or where the active columns are linearly
dependent, are skipped: the fixed-support derivative does not exist there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .atoms import PoleSet
from .dictionary import build_pair
from .gradients import loss_and_grad
from .solver import ACTIVE_THRESHOLD, fista_batch

__all__ = ["GradCheckReport", "run_gradcheck", "fd_loss", "lasso_cd", "REL_TOL", "ABS_TOL"]

REL_TOL = 1e-4
ABS_TOL = 1e-7

_SOLVE = dict(max_iter=50_000, tol=1e-14, num_threads=1)
_MAX_GRAM_COND = 1e8


@dataclass
class GradCheckReport:
    max_rel_err: float = 0.0
    n_checked: int = 0
    n_skipped: int = 0
    n_instances: int = 0
    worst: str = ""
    lines: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= REL_TOL

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} max_rel_err={self.max_rel_err:.3e} "
            f"checked={self.n_checked} skipped={self.n_skipped} instances={self.n_instances}"
        )


def lasso_cd(D, Y, lam: float, tol: float = 1e-15, max_sweeps: int = 100_000) -> np.ndarray:
    """Cyclic coordinate descent for every column of ``Y``.

    Works on the Gram matrix, keeping ``q = D^T (y - D c)`` up to date.
    """
    D = np.asarray(D, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64).reshape(D.shape[0], -1)
    N = D.shape[1]
    gram = D.T @ D
    sq = np.diag(gram).copy()
    out = np.zeros((N, Y.shape[1]))
    for p in range(Y.shape[1]):
        c = [0.0] * N
        q = D.T @ Y[:, p]
        for _ in range(max_sweeps):
            biggest = 0.0
            for j in range(N):
                z = c[j] + q[j] / sq[j]
                t = lam / sq[j]
                new = z - t if z > t else (z + t if z < -t else 0.0)
                delta = new - c[j]
                if delta != 0.0:
                    q -= gram[:, j] * delta
                    c[j] = new
                    if abs(delta) > biggest:
                        biggest = abs(delta)
            if biggest <= tol:
                break
        out[:, p] = c
    return out


def fd_loss(ps: PoleSet, T: int, Y_in, Y_target, lam: float, loss_mode: str = "predict"):
    """Loss after a coordinate-descent encode, plus the active mask it used."""
    d_enc, d_dec = build_pair(ps, T)
    C = lasso_cd(d_enc.matrix, Y_in, lam)
    loss, _ = loss_and_grad(ps, d_enc, d_dec, C, Y_in, Y_target, lam, loss_mode=loss_mode)
    return loss, np.abs(C) > ACTIVE_THRESHOLD


def _well_posed(D, mask) -> bool:
    for p in range(mask.shape[1]):
        idx = np.flatnonzero(mask[:, p])
        if idx.size == 0:
            continue
        if idx.size > D.shape[0]:
            return False
        Ds = D[:, idx]
        if np.linalg.cond(Ds.T @ Ds) > _MAX_GRAM_COND:
            return False
    return True


def _rel_err(a: float, f: float) -> float:
    # normalized so <= REL_TOL means |a - f| <= max(REL_TOL |f|, ABS_TOL)
    return abs(a - f) / max(abs(f), ABS_TOL / REL_TOL)


def run_gradcheck(
    seed: int = 0,
    n_instances: int = 12,
    max_T: int = 8,
    max_poles: int = 2,
    max_pixels: int = 4,
    lam: float = 0.05,
    eps: float = 1e-5,
    loss_modes: Sequence[str] = ("predict", "full"),
    corrupt: float = 0.0,
) -> GradCheckReport:
    """Compare analytic and central-difference gradients on random instances.

    ``corrupt`` scales the analytic gradients by ``1 + corrupt``; it exists so
    the check itself can be shown to fail when the gradient is wrong.
    """
    rng = np.random.default_rng(seed)
    rep = GradCheckReport()
    for inst in range(n_instances):
        T = int(rng.integers(4, max_T + 1))
        P = int(rng.integers(1, max_poles + 1))
        npix = int(rng.integers(1, max_pixels + 1))
        rho = rng.uniform(0.8, 1.1, size=P)
        psi = rng.uniform(0.2, 1.35, size=P)
        ps = PoleSet(rho, psi)
        Y = rng.normal(size=(T, npix))
        target = rng.normal(size=(T + 1, npix))
        mode = loss_modes[inst % len(loss_modes)]
        rep.n_instances += 1

        d_enc, d_dec = build_pair(ps, T)
        codes = fista_batch(d_enc, Y, lam, **_SOLVE)
        base_mask = codes.active_mask(ACTIVE_THRESHOLD)
        if not _well_posed(d_enc.matrix, base_mask):
            rep.n_skipped += 1
            rep.lines.append(f"inst={inst} skipped: rank-deficient active set")
            continue
        _, grad = loss_and_grad(ps, d_enc, d_dec, codes, Y, target, lam,
                                loss_mode=mode, trainable_lambda=True)
        analytic = {}
        for i in range(P):
            analytic[("rho", i)] = grad.d_rho[i]
            analytic[("psi", i)] = grad.d_psi[i]
        analytic[("lambda", 0)] = grad.d_lambda

        for (name, i), a in analytic.items():
            a = a * (1.0 + corrupt)
            vals = []
            stable = True
            for sgn in (1, -1):
                r, p, lm = rho.copy(), psi.copy(), lam
                if name == "rho":
                    r[i] += sgn * eps
                elif name == "psi":
                    p[i] += sgn * eps
                else:
                    lm += sgn * eps
                loss, mask = fd_loss(PoleSet(r, p), T, Y, target, lm, mode)
                stable &= bool(np.array_equal(mask, base_mask))
                vals.append(loss)
            if not stable:
                rep.n_skipped += 1
                continue
            f = (vals[0] - vals[1]) / (2 * eps)
            e = _rel_err(a, f)
            rep.n_checked += 1
            line = f"inst={inst} mode={mode} d/d{name}[{i}] analytic={a:.10e} fd={f:.10e} rel={e:.2e}"
            rep.lines.append(line)
            if e > rep.max_rel_err:
                rep.max_rel_err = e
                rep.worst = line
    return rep
