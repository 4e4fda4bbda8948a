"""Synthetic sequences that are exact sums of damped oscillations.

Every pixel follows ``y_k = sum_i a_i rho_i**k cos(k psi_i + phi_i)`` for
``k = 0 .. T`` (the last frame is returned separately as the target), which
is exactly the impulse-response model the dictionary atoms are built from.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import numpy as np

from .pipeline import SequenceTensor

__all__ = ["SynthSpec", "generate", "make_dataset", "mode_values"]


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings.

    ``modes`` holds ``(rho, psi, amplitude, phase_offset)`` quadruples.  When
    ``amp_spread > 0`` each pixel scales each mode amplitude by a factor drawn
    uniformly from ``[1 - amp_spread, 1 + amp_spread]``; with the default 0 all
    pixels are identical.
    """

    modes: Tuple[Tuple[float, float, float, float], ...]
    T: int = 9
    H: int = 16
    W: int = 16
    noise_sigma: float = 0.0
    seed: int = 0
    amp_spread: float = 0.0
    offset: float = 0.0
    channel_id: str = "intensity"

    def __post_init__(self):
        modes = tuple(tuple(float(v) for v in m) for m in self.modes)
        for m in modes:
            if len(m) != 4:
                raise ValueError(f"mode must be (rho, psi, amplitude, phase), got {m}")
            if not m[0] > 0:
                raise ValueError(f"mode magnitude must be positive, got {m[0]}")
            if not np.all(np.isfinite(m)):
                raise ValueError("mode parameters must be finite")
        object.__setattr__(self, "modes", modes)
        if self.T < 1 or self.H < 1 or self.W < 1:
            raise ValueError("T, H and W must be positive")


def mode_values(rho: float, psi: float, phase: float, k: np.ndarray) -> np.ndarray:
    return np.power(rho, k) * np.cos(k * psi + phase)


def generate(spec: SynthSpec) -> Tuple[SequenceTensor, np.ndarray]:
    """Return the ``T``-frame sequence and the noise-free frame ``T`` (H x W)."""
    rng = np.random.default_rng(spec.seed)
    HW = spec.H * spec.W
    k = np.arange(spec.T + 1, dtype=np.float64)
    full = np.full((spec.T + 1, HW), spec.offset, dtype=np.float64)
    for rho, psi, amp, phase in spec.modes:
        if spec.amp_spread > 0:
            gains = amp * rng.uniform(1 - spec.amp_spread, 1 + spec.amp_spread, size=HW)
        else:
            gains = np.full(HW, amp)
        full += np.outer(mode_values(rho, psi, phase, k), gains)
    data = full[: spec.T].copy()
    if spec.noise_sigma > 0:
        data += rng.normal(0.0, spec.noise_sigma, size=data.shape)
    seq = SequenceTensor(data, spec.H, spec.W, spec.channel_id)
    return seq, full[spec.T].reshape(spec.H, spec.W)


def make_dataset(
    n_seq: int, template: SynthSpec, jitter: float = 0.0, seed: int = 0
) -> List[Tuple[SequenceTensor, np.ndarray]]:
    """``n_seq`` sequences whose mode (rho, psi) are jittered uniformly by ``+-jitter``."""
    if n_seq < 1:
        raise ValueError("n_seq must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_seq):
        modes = []
        for rho, psi, amp, phase in template.modes:
            if jitter > 0:
                rho = rho + rng.uniform(-jitter, jitter)
                psi = psi + rng.uniform(-jitter, jitter)
            modes.append((rho, psi, amp, phase))
        sub_seed = template.seed if n_seq == 1 and jitter == 0 else int(rng.integers(2**31))
        spec = replace(template, modes=tuple(modes), seed=sub_seed)
        out.append(generate(spec))
    return out
