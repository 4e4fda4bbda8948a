"""Steepest-descent training of the pole parameters."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .atoms import PoleSet
from .dictionary import build_pair
from .gradients import GradientError, loss_and_grad, sgd_step
from .pipeline import SequenceTensor, encode

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "TrainResult", "TrainingError", "train", "evaluate", "prediction_mse"]


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    T: int = 9
    lam: float = 0.01
    lr: float = 1e-3
    epochs: int = 50
    fista_max_iter: int = 100
    fista_tol: float = 1e-6
    loss_mode: str = "predict"
    trainable_lambda: bool = False
    reduction: str = "mean"
    seed: int = 0
    shuffle: bool = True


@dataclass
class TrainResult:
    poles: PoleSet
    lam: float
    history: List[dict] = field(default_factory=list)
    snapshots: List[Tuple[int, PoleSet]] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss"] if self.history else float("nan")


Sample = Tuple[SequenceTensor, np.ndarray]


def _step_terms(ps, lam, seq, target, cfg, trainable):
    d_enc, d_dec = build_pair(ps, seq.T)
    codes = encode(d_enc, seq, lam, cfg.fista_max_iter, cfg.fista_tol)
    loss, grad = loss_and_grad(
        ps, d_enc, d_dec, codes, seq.data, target, lam,
        loss_mode=cfg.loss_mode, trainable_lambda=trainable, reduction=cfg.reduction,
    )
    return loss, grad, codes.sparsity


def evaluate(ps: PoleSet, lam: float, data: Sequence[Sample], cfg: TrainConfig) -> Tuple[float, float]:
    """Mean training loss and mean code density over ``data`` without updating."""
    losses, dens = [], []
    for seq, target in data:
        loss, _, sp = _step_terms(ps, lam, seq, target, cfg, False)
        losses.append(loss)
        dens.append(sp)
    return float(np.mean(losses)), float(np.mean(dens))


def prediction_mse(ps: PoleSet, lam: float, data: Sequence[Sample], cfg: TrainConfig) -> float:
    """Mean squared error of the predicted frame over all samples and pixels."""
    from .pipeline import predict_next

    errs = []
    for seq, target in data:
        pred = predict_next(ps, seq, lam, cfg.fista_max_iter, cfg.fista_tol)
        errs.append(np.mean((pred.reshape(-1) - np.asarray(target).reshape(-1)[-pred.size:]) ** 2))
    return float(np.mean(errs))


def train(
    ps: PoleSet,
    data: Sequence[Sample],
    cfg: TrainConfig,
    snapshot_poles: bool = False,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Run ``cfg.epochs`` epochs of one SGD step per sample.

    The history starts with an epoch-0 row evaluated at the initial poles;
    each later row holds the mean step loss of that epoch.
    """
    if not data:
        raise TrainingError("empty dataset")
    for seq, _ in data:
        if seq.T != cfg.T:
            raise TrainingError(f"sample has T={seq.T}, config expects T={cfg.T}")
    rng = np.random.default_rng(cfg.seed)
    lam = float(cfg.lam)
    t0 = time.perf_counter()
    loss0, dens0 = evaluate(ps, lam, data, cfg)
    res = TrainResult(ps, lam)
    row = dict(epoch=0, loss=loss0, sparsity=dens0, wall=time.perf_counter() - t0)
    res.history.append(row)
    if snapshot_poles:
        res.snapshots.append((0, ps))
    if on_epoch:
        on_epoch(row)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data)) if cfg.shuffle else np.arange(len(data))
        losses, dens = [], []
        for idx in order:
            seq, target = data[int(idx)]
            loss, grad, sp = _step_terms(ps, lam, seq, target, cfg, cfg.trainable_lambda)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, sample {int(idx)}")
            try:
                if cfg.trainable_lambda:
                    ps, lam = sgd_step(ps, grad, cfg.lr, lam)
                else:
                    ps = sgd_step(ps, grad, cfg.lr)
            except GradientError as exc:
                raise TrainingError(f"epoch {epoch}, sample {int(idx)}: {exc}") from exc
            losses.append(loss)
            dens.append(sp)
        row = dict(epoch=epoch, loss=float(np.mean(losses)), sparsity=float(np.mean(dens)),
                   wall=time.perf_counter() - t0)
        res.history.append(row)
        if snapshot_poles:
            res.snapshots.append((epoch, ps))
        log.debug("epoch %d loss %.6g", epoch, row["loss"])
        if on_epoch:
            on_epoch(row)
    res.poles, res.lam = ps, lam
    return res
