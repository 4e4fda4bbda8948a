"""Encoder/decoder pass and flow warping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .atoms import PoleSet
from .dictionary import Dictionary, build_pair
from .solver import CodeField, fista_batch

__all__ = [
    "ShapeError",
    "SequenceTensor",
    "FlowField",
    "encode",
    "decode",
    "predict_next",
    "rollout",
    "warp",
]


class ShapeError(ValueError):
    pass


@dataclass
class SequenceTensor:
    """``T`` frames of an ``H x W`` field stored as ``T x (H*W)``.

    Pixel ``(r, c)`` is column ``r * W + c``.
    """

    data: np.ndarray
    H: int
    W: int
    channel_id: str = "intensity"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 3:
            data = data.reshape(data.shape[0], -1)
        if data.ndim != 2 or data.shape[1] != self.H * self.W:
            raise ShapeError(f"data of shape {data.shape} does not hold {self.H}x{self.W} frames")
        if not np.isfinite(data).all():
            raise ShapeError("sequence contains non-finite values")
        self.data = data

    @classmethod
    def from_frames(cls, frames, channel_id: str = "intensity") -> "SequenceTensor":
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 3:
            raise ShapeError(f"expected T x H x W frames, got shape {frames.shape}")
        T, H, W = frames.shape
        return cls(frames.reshape(T, H * W), H, W, channel_id)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    def frames(self) -> np.ndarray:
        return self.data.reshape(self.T, self.H, self.W)

    def frame(self, k: int) -> np.ndarray:
        return self.data[k].reshape(self.H, self.W)


@dataclass
class FlowField:
    """Per-pixel displacement in pixels: ``u`` horizontal, ``v`` vertical."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ShapeError("flow components must be equal-shape 2-D arrays")
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise ShapeError("flow contains non-finite values")

    @property
    def H(self) -> int:
        return self.u.shape[0]

    @property
    def W(self) -> int:
        return self.u.shape[1]


def encode(d_enc: Dictionary, seq: SequenceTensor, lam: float, max_iter: int = 100,
           tol: float = 1e-6, num_threads: Optional[int] = None) -> CodeField:
    if d_enc.rows != seq.T:
        raise ShapeError(f"encoder expects T={d_enc.rows} frames, got {seq.T}")
    return fista_batch(d_enc, seq.data, lam, max_iter=max_iter, tol=tol,
                       num_threads=num_threads, shape=(seq.H, seq.W))


def decode(d_dec: Dictionary, codes: CodeField, channel_id: str = "intensity") -> SequenceTensor:
    """All ``T + 1`` frames: the reconstruction followed by the prediction."""
    if d_dec.cols != codes.N:
        raise ShapeError(f"decoder has {d_dec.cols} columns, codes have {codes.N} rows")
    if d_dec.rows != d_dec.T + 1:
        raise ShapeError("decode needs a decoder dictionary (T + 1 rows)")
    return SequenceTensor(d_dec.matrix @ codes.codes, codes.H, codes.W, channel_id)


def predict_next(ps: PoleSet, seq: SequenceTensor, lam: float, max_iter: int = 100,
                 tol: float = 1e-6, num_threads: Optional[int] = None) -> np.ndarray:
    if seq.T < 2:
        raise ShapeError("need at least two input frames")
    d_enc, d_dec = build_pair(ps, seq.T)
    codes = encode(d_enc, seq, lam, max_iter, tol, num_threads)
    d_row = d_dec.matrix[seq.T]
    return (d_row @ codes.codes).reshape(seq.H, seq.W)


def rollout(ps: PoleSet, seq: SequenceTensor, lam: float, steps: int, **kw) -> np.ndarray:
    """Predict ``steps`` frames, feeding each prediction back as the newest input."""
    window = seq.data.copy()
    preds = []
    for _ in range(steps):
        cur = SequenceTensor(window, seq.H, seq.W, seq.channel_id)
        nxt = predict_next(ps, cur, lam, **kw)
        preds.append(nxt)
        window = np.vstack([window[1:], nxt.reshape(1, -1)])
    return np.stack(preds)


def warp(frame, flow: FlowField) -> np.ndarray:
    """Backward bilinear warp: ``out[r, c] = frame(r - v[r, c], c - u[r, c])``.

    Sample positions outside the frame are clamped to the border.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != flow.u.shape:
        raise ShapeError(f"frame {frame.shape} and flow {flow.u.shape} differ in shape")
    H, W = frame.shape
    rr, cc = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    y = np.clip(rr - flow.v, 0.0, H - 1)
    x = np.clip(cc - flow.u, 0.0, W - 1)
    y0 = np.floor(y).astype(np.intp)
    x0 = np.floor(x).astype(np.intp)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = y - y0
    wx = x - x0
    top = frame[y0, x0] * (1 - wx) + frame[y0, x1] * wx
    bot = frame[y1, x0] * (1 - wx) + frame[y1, x1] * wx
    return top * (1 - wy) + bot * wy
