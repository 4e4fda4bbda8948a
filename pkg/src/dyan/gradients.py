"""Implicit differentiation through the per-pixel Lasso and the SGD update.

On a fixed support ``S`` the Lasso solution satisfies
``c_S = (D_S^T D_S)^{-1} (D_S^T y - lam * sign(c_S))``.  Differentiating that
identity gives the code Jacobians used below; a loss gradient ``g`` on the
codes is pulled back with one adjoint solve ``w = (D_S^T D_S)^{-1} g`` per
pixel, and then through the column normalization to the pole magnitudes and
phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .atoms import PoleSet
from .dictionary import Dictionary, raw_columns
from .solver import ACTIVE_THRESHOLD, CodeField

__all__ = [
    "GradientError",
    "GradientWorkspace",
    "ParamGrad",
    "build_workspace",
    "code_jacobian_wrt_entry",
    "lambda_gradient",
    "loss_and_grad",
    "pole_gradient",
    "sgd_step",
    "RIDGE",
    "PSI_MIN",
    "RHO_MIN",
    "LAMBDA_MIN",
]

RIDGE = 1e-8
PSI_MIN = 1e-3
RHO_MIN = 1e-3
LAMBDA_MIN = 1e-6

LOSS_MODES = ("predict", "full")
_MAX_COND = 1e10
_PINV_RCOND = 1e-10


class GradientError(ValueError):
    pass


@dataclass
class GradientWorkspace:
    active_idx: np.ndarray
    D_active: np.ndarray
    gram_inv: np.ndarray
    sign_vec: np.ndarray
    c_active: np.ndarray


@dataclass
class ParamGrad:
    d_rho: np.ndarray
    d_psi: np.ndarray
    d_lambda: Optional[float] = None

    def max_abs(self) -> float:
        vals = [np.max(np.abs(self.d_rho), initial=0.0), np.max(np.abs(self.d_psi), initial=0.0)]
        if self.d_lambda is not None:
            vals.append(abs(self.d_lambda))
        return float(max(vals))

    def is_finite(self) -> bool:
        ok = np.isfinite(self.d_rho).all() and np.isfinite(self.d_psi).all()
        return bool(ok and (self.d_lambda is None or math.isfinite(self.d_lambda)))


def _matrix(d) -> np.ndarray:
    return d.encoder_part if isinstance(d, Dictionary) else np.asarray(d, dtype=np.float64)


def build_workspace(d, c, threshold: float = ACTIVE_THRESHOLD, ridge: float = RIDGE) -> GradientWorkspace:
    D = _matrix(d)
    c = np.asarray(c, dtype=np.float64)
    idx = np.flatnonzero(np.abs(c) > threshold)
    Da = D[:, idx]
    gram = Da.T @ Da + ridge * np.eye(idx.size)
    gram_inv = np.linalg.inv(gram) if idx.size else np.zeros((0, 0))
    gram_inv = 0.5 * (gram_inv + gram_inv.T)
    return GradientWorkspace(idx, Da, gram_inv, np.sign(c[idx]), c[idx])


def code_jacobian_wrt_entry(ws: GradientWorkspace, y, i: int, j: int) -> np.ndarray:
    """Derivative of the active codes with respect to dictionary entry ``D[i, j]``.

    Columns outside the active set leave the codes unchanged.
    """
    n = ws.active_idx.size
    pos = np.flatnonzero(ws.active_idx == j)
    if n == 0 or pos.size == 0:
        return np.zeros(n)
    q = int(pos[0])
    y = np.asarray(y, dtype=np.float64)
    resid_i = y[i] - ws.D_active[i] @ ws.c_active
    rhs = -ws.c_active[q] * ws.D_active[i].copy()
    rhs[q] += resid_i
    return ws.gram_inv @ rhs


def lambda_gradient(ws: GradientWorkspace, downstream) -> float:
    if ws.active_idx.size == 0:
        return 0.0
    return float(np.asarray(downstream) @ (-(ws.gram_inv @ ws.sign_vec)))


def _adjoint(D: np.ndarray, mask: np.ndarray, G: np.ndarray, ridge: float) -> np.ndarray:
    """``W[S_p, p] = (D_S^T D_S + ridge I)^{-1} G[S_p, p]`` for every pixel ``p``.

    Pixels sharing a support are solved together; groups are visited in a
    fixed order so the result is reproducible.
    """
    N, P = mask.shape
    W = np.zeros((N, P))
    if P == 0:
        return W
    keys, inverse = np.unique(np.packbits(mask, axis=0).T, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for gi in range(keys.shape[0]):
        cols = np.flatnonzero(inverse == gi)
        idx = np.flatnonzero(mask[:, cols[0]])
        if idx.size == 0:
            continue
        Da = D[:, idx]
        gram = Da.T @ Da
        rhs = G[np.ix_(idx, cols)]
        if idx.size > D.shape[0] or np.linalg.cond(gram) > _MAX_COND:
            # singular support (unconverged or non-unique solution): least-norm adjoint
            W[np.ix_(idx, cols)] = np.linalg.pinv(gram, rcond=_PINV_RCOND, hermitian=True) @ rhs
        else:
            W[np.ix_(idx, cols)] = np.linalg.solve(gram + ridge * np.eye(idx.size), rhs)
    return W


def _raw_partials(ps: PoleSet, d: Dictionary):
    """Raw columns and their derivatives w.r.t. rho and psi, rows ``0..T``."""
    rows = d.T + 1
    gens = d.generators
    raw = raw_columns(list(gens), rows)
    k = np.arange(rows, dtype=np.float64)[:, None]
    d_rho = np.zeros_like(raw)
    d_psi = np.zeros_like(raw)
    for j, g in enumerate(gens):
        if g.kind == "const":
            continue
        base = np.power(g.sign * g.rho, k[:, 0])
        kk = k[:, 0]
        d_rho[:, j] = kk * raw[:, j] / g.rho
        if g.kind == "cos":
            d_psi[:, j] = -kk * base * np.sin(kk * g.psi)
        else:
            d_psi[:, j] = kk * base * np.cos(kk * g.psi)
    return raw, d_rho, d_psi


def loss_and_grad(
    ps: PoleSet,
    d_enc: Dictionary,
    d_dec: Dictionary,
    codes,
    Y_in,
    Y_target,
    lam: float,
    loss_mode: str = "predict",
    trainable_lambda: bool = False,
    reduction: str = "mean",
    threshold: float = ACTIVE_THRESHOLD,
    ridge: float = RIDGE,
) -> Tuple[float, ParamGrad]:
    """Squared-error loss of the decoder output and its gradient.

    ``Y_target`` is the true frame ``T`` (``H*W`` values) or, for
    ``loss_mode="full"``, optionally all ``T + 1`` frames.  In predict mode
    only frame ``T`` enters the loss; full mode adds the reconstruction of
    the input frames.  With ``reduction="mean"`` the per-pixel losses
    ``0.5 * ||err||^2`` are averaged over pixels, otherwise summed.
    """
    if loss_mode not in LOSS_MODES:
        raise GradientError(f"loss_mode must be one of {LOSS_MODES}, got {loss_mode!r}")
    C = codes.codes if isinstance(codes, CodeField) else np.asarray(codes, dtype=np.float64)
    if C.ndim == 1:
        C = C[:, None]
    D = d_enc.encoder_part
    T, N = D.shape
    drow = d_dec.matrix[T]
    Y_in = np.asarray(Y_in, dtype=np.float64).reshape(T, -1)
    P = Y_in.shape[1]
    if C.shape != (N, P):
        raise GradientError(f"codes shape {C.shape} does not match ({N}, {P})")
    Yt = np.asarray(Y_target, dtype=np.float64)
    if Yt.size == (T + 1) * P:
        Yt = Yt.reshape(T + 1, P)
        y_next = Yt[T]
    elif Yt.size == P:
        y_next = Yt.reshape(P)
    else:
        raise GradientError(f"target of size {Yt.size} matches neither {P} nor {(T + 1) * P}")
    scale = 1.0 / P if reduction == "mean" else 1.0

    err = drow @ C - y_next
    loss = 0.5 * float(err @ err)
    # loss gradient w.r.t. codes, decoder row and encoder entries (direct part)
    g_c = np.outer(drow, err)
    g_row = C @ err
    g_D = np.zeros((T, N))
    if loss_mode == "full":
        R_rec = D @ C - Y_in
        loss += 0.5 * float(np.sum(R_rec * R_rec))
        g_c += D.T @ R_rec
        g_D += R_rec @ C.T

    mask = np.abs(C) > threshold
    C_act = np.where(mask, C, 0.0)
    W = _adjoint(D, mask, g_c, ridge)
    resid = Y_in - D @ C_act
    g_D += resid @ W.T - (D @ W) @ C_act.T
    d_lam = -float(np.sum(W * np.sign(C_act))) if trainable_lambda else None

    # through the column normalization D = raw / s, s = ||raw[:T]||
    s = d_enc.col_scales
    proj = np.einsum("tn,tn->n", g_D, D) + g_row * drow
    g_raw = np.empty((T + 1, N))
    g_raw[:T] = (g_D - D * proj) / s
    g_raw[T] = g_row / s

    raw, dr, dp = _raw_partials(ps, d_enc)
    col_rho = np.einsum("kn,kn->n", g_raw, dr)
    col_psi = np.einsum("kn,kn->n", g_raw, dp)
    grad_rho = np.zeros(ps.P)
    grad_psi = np.zeros(ps.P)
    for j, g in enumerate(d_enc.generators):
        if g.pole >= 0:
            grad_rho[g.pole] += col_rho[j]
            grad_psi[g.pole] += col_psi[j]
    if d_lam is not None:
        d_lam *= scale
    return loss * scale, ParamGrad(grad_rho * scale, grad_psi * scale, d_lam)


def pole_gradient(ps, d_enc, d_dec, codes, Y_in, Y_target, lam, **kw) -> ParamGrad:
    return loss_and_grad(ps, d_enc, d_dec, codes, Y_in, Y_target, lam, **kw)[1]


def sgd_step(ps: PoleSet, grad: ParamGrad, lr: float, lam: Optional[float] = None):
    """One steepest-descent step.  Returns the new PoleSet (and lambda if given).

    Phases are kept inside ``[PSI_MIN, pi/2 - PSI_MIN]`` and magnitudes above
    ``RHO_MIN``; the constant pole is not a parameter and is never touched.
    """
    if not grad.is_finite():
        raise GradientError("non-finite gradient; step aborted")
    if lr < 0:
        raise GradientError("learning rate must be nonnegative")
    if lr == 0 or grad.max_abs() == 0.0:
        new_ps = ps
    else:
        rho = np.maximum(ps.rho - lr * grad.d_rho, RHO_MIN)
        psi = np.clip(ps.psi - lr * grad.d_psi, PSI_MIN, math.pi / 2 - PSI_MIN)
        new_ps = ps.replace(rho=rho, psi=psi)
    if lam is None:
        return new_ps
    if grad.d_lambda is not None and lr > 0:
        lam = max(lam - lr * grad.d_lambda, LAMBDA_MIN)
    return new_ps, lam
