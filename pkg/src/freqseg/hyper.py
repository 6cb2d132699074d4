"""Gamma-scaled Gaussian initialisation and the polynomial learning-rate decay."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import SpecError, ValidationError

POLY_EXPONENT = 0.9
GAMMA_GRID = (0.3, 0.5, 0.7, 0.9, 1.0)


@dataclass(frozen=True)
class InitSpec:
    """``d`` is the fan-in of the layer; how it is counted is up to the caller."""

    d: int
    gamma: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise SpecError(f"d must be a positive integer, got {self.d!r}")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise SpecError(f"gamma must be a non-negative real, got {self.gamma!r}")


@dataclass(frozen=True)
class ScheduleSpec:
    lr_init: float = 1e-2
    max_epoch: int = 1000
    exponent: float = POLY_EXPONENT

    def __post_init__(self):
        if not self.lr_init > 0:
            raise SpecError(f"lr_init must be positive, got {self.lr_init!r}")
        if int(self.max_epoch) != self.max_epoch or self.max_epoch < 1:
            raise SpecError(f"max_epoch must be a positive integer, got {self.max_epoch!r}")
        if self.exponent != POLY_EXPONENT:
            raise SpecError(f"the decay exponent is fixed at {POLY_EXPONENT}")


FINE_TUNE_SCHEDULE = ScheduleSpec(lr_init=1e-3)


def init_std(spec: InitSpec) -> float:
    """Standard deviation d**-gamma; larger gamma gives a smaller scale."""
    return float(spec.d) ** (-float(spec.gamma))


def sample_init(spec: InitSpec, n: int, seed=None) -> np.ndarray:
    """``n`` draws from N(0, init_std(spec)**2) using numpy's PCG64 generator."""
    if int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n!r}")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, init_std(spec), size=int(n))


def sample_stats(spec: InitSpec, n: int, seed=None) -> dict:
    draws = sample_init(spec, n, seed)
    return {
        "n": int(n),
        "d": int(spec.d),
        "gamma": float(spec.gamma),
        "seed": seed,
        "mean": float(draws.mean()),
        "std": float(draws.std()),
        "target_std": init_std(spec),
    }


def lr_at(spec: ScheduleSpec, epoch: int) -> float:
    """lr_init * (1 - epoch / max_epoch) ** 0.9 for 0 <= epoch <= max_epoch."""
    if int(epoch) != epoch or not 0 <= epoch <= spec.max_epoch:
        raise ValidationError(f"epoch must be an integer in [0, {spec.max_epoch}], got {epoch!r}")
    return spec.lr_init * (1.0 - epoch / spec.max_epoch) ** POLY_EXPONENT


def lr_curve(spec: ScheduleSpec) -> list[tuple[int, float]]:
    return [(e, lr_at(spec, e)) for e in range(spec.max_epoch + 1)]
