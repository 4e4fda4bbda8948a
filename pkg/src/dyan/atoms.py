"""Pole parameterization of the dynamical atoms.

Every learnable pole lives in the closed first quadrant and is described by a
magnitude ``rho`` and a phase ``psi``.  Each one generates four real columns
(its cosine/sine parts and those of its mirror image ``-p``); a fixed pole at
``p = 1`` supplies the constant column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

__all__ = [
    "ConfigurationError",
    "PoleSet",
    "Generator",
    "init_ring",
    "expand_quadrants",
    "DEFAULT_GRID",
]

# (radii, phases) used by init_ring when the caller does not pass a grid.
DEFAULT_GRID = {40: (5, 8), 1: (1, 1)}


class ConfigurationError(ValueError):
    """Raised for pole configurations that cannot be built."""


@dataclass(frozen=True)
class PoleSet:
    """First-quadrant poles plus the optional fixed constant pole.

    ``rho`` and ``psi`` are stored as read-only float64 arrays so a PoleSet can
    be shared between threads without copying.
    """

    rho: np.ndarray
    psi: np.ndarray
    include_constant: bool = True

    def __post_init__(self):
        rho = np.array(self.rho, dtype=np.float64).reshape(-1)
        psi = np.array(self.psi, dtype=np.float64).reshape(-1)
        if rho.shape != psi.shape:
            raise ConfigurationError(
                f"rho and psi lengths differ ({rho.size} vs {psi.size})"
            )
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(psi))):
            raise ConfigurationError("pole parameters must be finite")
        if np.any(rho <= 0):
            raise ConfigurationError("pole magnitudes must be positive")
        if np.any(psi < 0) or np.any(psi > math.pi / 2):
            raise ConfigurationError("pole phases must lie in [0, pi/2]")
        rho.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "psi", psi)

    @property
    def P(self) -> int:
        return int(self.rho.size)

    def __len__(self) -> int:
        return self.P

    def __eq__(self, other) -> bool:
        if not isinstance(other, PoleSet):
            return NotImplemented
        return (
            self.include_constant == other.include_constant
            and np.array_equal(self.rho, other.rho)
            and np.array_equal(self.psi, other.psi)
        )

    def __hash__(self):
        return hash((self.rho.tobytes(), self.psi.tobytes(), self.include_constant))

    def replace(self, rho=None, psi=None) -> "PoleSet":
        return PoleSet(
            self.rho if rho is None else rho,
            self.psi if psi is None else psi,
            self.include_constant,
        )

    def complex_poles(self) -> np.ndarray:
        return self.rho * np.exp(1j * self.psi)


@dataclass(frozen=True)
class Generator:
    """Recipe for one dictionary column.

    Row ``k`` of the column is ``(sign * rho)**k * trig(k * psi)``.  The
    constant generator has ``pole == -1`` and ``kind == "const"``.
    """

    pole: int
    kind: str  # "cos", "sin" or "const"
    sign: int = 1
    rho: float = 1.0
    psi: float = 0.0

    def values(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k, dtype=np.float64)
        if self.kind == "const":
            return np.ones_like(k)
        base = np.power(self.sign * self.rho, k)
        trig = np.cos(k * self.psi) if self.kind == "cos" else np.sin(k * self.psi)
        return base * trig


def _phase_grid(Q: int) -> np.ndarray:
    q = np.arange(1, Q + 1, dtype=np.float64)
    return (q - 0.5) * (math.pi / 2) / Q


def _radius_grid(R: int, rho_min: float, rho_max: float) -> np.ndarray:
    if R == 1:
        return np.array([0.5 * (rho_min + rho_max)])
    return np.linspace(rho_min, rho_max, R)


def init_ring(
    num_poles: int = 40,
    rho_min: float = 0.85,
    rho_max: float = 1.15,
    grid: Optional[Tuple[int, int]] = None,
    include_constant: bool = True,
) -> PoleSet:
    """Deterministic polar grid of ``num_poles`` poles inside a ring.

    ``grid = (R, Q)`` gives R radii evenly spaced over ``[rho_min, rho_max]``
    and Q phases at the centres of Q equal slices of ``(0, pi/2)``.  Radii vary
    slowest.  When ``grid`` is omitted it is looked up in ``DEFAULT_GRID``, or
    failing that taken as the most square factorization of ``num_poles``.
    """
    if not isinstance(num_poles, (int, np.integer)) or num_poles < 1:
        raise ConfigurationError(f"num_poles must be a positive integer, got {num_poles!r}")
    if not (0 < rho_min <= rho_max):
        raise ConfigurationError(f"need 0 < rho_min <= rho_max, got {rho_min}, {rho_max}")
    if grid is None:
        grid = DEFAULT_GRID.get(int(num_poles))
        if grid is None:
            R = int(math.isqrt(num_poles))
            while num_poles % R:
                R -= 1
            grid = (R, num_poles // R)
    R, Q = int(grid[0]), int(grid[1])
    if R < 1 or Q < 1 or R * Q != num_poles:
        raise ConfigurationError(
            f"grid {R}x{Q} does not factor num_poles={num_poles}"
        )
    radii = _radius_grid(R, rho_min, rho_max)
    phases = _phase_grid(Q)
    rho = np.repeat(radii, Q)
    psi = np.tile(phases, R)
    return PoleSet(rho, psi, include_constant)


def expand_quadrants(ps: PoleSet) -> List[Generator]:
    """List the column generators of ``ps``, constant column first.

    Each pole contributes cos, sin, mirrored cos and mirrored sin, in that
    order.  Generators that are identically zero or that repeat an earlier
    column (up to sign) are dropped: the sine pair at ``psi == 0``, the
    mirrored pair at ``psi == pi/2``, the cosine of ``p == 1`` (it equals the
    constant column) and exact repeats of an earlier pole.
    """
    gens: List[Generator] = []
    if ps.include_constant:
        gens.append(Generator(pole=-1, kind="const"))
    seen = set()
    if ps.include_constant:
        seen.add(("cos", 1, 1.0, 0.0))
    half_pi = math.pi / 2
    for i, (rho, psi) in enumerate(zip(ps.rho.tolist(), ps.psi.tolist())):
        for sign in (1, -1):
            if sign == -1 and psi == half_pi:
                continue
            for kind in ("cos", "sin"):
                if kind == "sin" and psi == 0.0:
                    continue
                key = (kind, sign, rho, psi)
                if key in seen:
                    continue
                seen.add(key)
                gens.append(Generator(pole=i, kind=kind, sign=sign, rho=rho, psi=psi))
    return gens
