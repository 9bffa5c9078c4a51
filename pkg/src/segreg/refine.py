"""Post-segmentation polishing: coordinate grid sweeps at coarse then
sub-digit resolution, plus the entropy-triggered re-sampling hook."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .models import ForwardModel, LossSpec, evaluate_errors
from .sampler import (
    EmpiricalDigitDistribution,
    RegisterDistribution,
    candidates,
    entropy_threshold,
    sample_register,
)

__all__ = [
    "GridStage",
    "RefinementConfig",
    "multiscale_refine",
    "fine_tune",
    "entropy_refine_hook",
]


@dataclass(frozen=True)
class GridStage:
    """One uniform sweep: `points` values spanning incumbent +- radius."""

    points: int
    radius: float

    def __post_init__(self):
        if self.points < 1:
            raise ConfigError("/refinement/points", "need at least one grid point")
        if not self.radius > 0:
            raise ConfigError("/refinement/radius", "radius must be positive")


@dataclass(frozen=True)
class RefinementConfig:
    multiscale: GridStage | None = None
    fine: GridStage | None = None

    def to_json(self) -> dict:
        out = {}
        if self.multiscale:
            out["multiscale"] = {"G": self.multiscale.points,
                                 "radius": self.multiscale.radius}
        if self.fine:
            out["fine"] = {"F": self.fine.points, "radius": self.fine.radius}
        return out

    @classmethod
    def from_json(cls, obj: dict | None) -> "RefinementConfig":
        obj = obj or {}
        ms = obj.get("multiscale")
        fi = obj.get("fine")
        return cls(
            multiscale=GridStage(int(ms["G"]), float(ms["radius"])) if ms else None,
            fine=GridStage(int(fi["F"]), float(fi["radius"])) if fi else None,
        )


def _grid(center: float, radius: float, points: int) -> np.ndarray:
    """Uniform grid over [center - radius, center + radius], endpoints
    inclusive; odd point counts place the incumbent exactly on the grid."""
    if points == 1:
        return np.array([center])
    offsets = np.linspace(-radius, radius, points)
    if points % 2 == 1:
        offsets[points // 2] = 0.0
    return center + offsets


def _sweep(model, spec, thetas_base: np.ndarray, k: int, grid: np.ndarray,
           threads: int) -> tuple[float, float]:
    """Evaluate the error along one coordinate slice and pick the argmin
    (ties -> value closest to the incumbent, then smaller value)."""
    batch = np.repeat(thetas_base[None, :], grid.size, axis=0)
    batch[:, k] = grid
    errs = evaluate_errors(spec, model, batch, threads=threads)
    order = np.lexsort((grid, np.abs(grid - thetas_base[k]), errs))
    best = order[0]
    return float(grid[best]), float(errs[best])


def multiscale_refine(model: ForwardModel, spec: LossSpec, theta,
                      config: RefinementConfig, threads: int = 1,
                      recorder=None) -> np.ndarray:
    """Coarse coordinate polish: sweep each component over its grid while
    holding the others at their current (already updated) values."""
    theta = np.array(theta, dtype=np.float64)
    stage = config.multiscale
    if stage is None:
        return theta
    for k in range(theta.size):
        grid = _grid(theta[k], stage.radius, stage.points)
        theta[k], err = _sweep(model, spec, theta, k, grid, threads)
        if recorder is not None:
            recorder.refine_row("multiscale", k, theta[k], err, stage.points)
    return theta


def fine_tune(model: ForwardModel, spec: LossSpec, theta,
              config: RefinementConfig, threads: int = 1,
              recorder=None) -> np.ndarray:
    """High-resolution polish with each component swept in isolation:
    every sweep sees the pre-stage incumbent vector, and the per-component
    winners are applied jointly afterwards."""
    base = np.array(theta, dtype=np.float64)
    stage = config.fine
    if stage is None:
        return base
    out = base.copy()
    for k in range(base.size):
        grid = _grid(base[k], stage.radius, stage.points)
        out[k], err = _sweep(model, spec, base, k, grid, threads)
        if recorder is not None:
            recorder.refine_row("fine", k, out[k], err, stage.points)
    return out


def entropy_refine_hook(reg: RegisterDistribution, emp: EmpiricalDigitDistribution,
                        policy: str = "full", r: int | None = None,
                        tau: float | None = None, eta_delta: float | None = None,
                        seed=None):
    """Re-sample high-entropy registers once with doubled shot count.

    Registers whose frequency entropy reaches log(b) - eta_delta are
    re-measured (fresh stream, 2x shots) and their frequencies replaced;
    candidate sets are then re-extracted under the same policy.

    Returns (empirical, candidate_sets, flags, fired).
    """
    cfg = emp.config
    H = emp.entropy()
    flags = np.zeros((cfg.M, cfg.d), dtype=bool)
    for k in range(cfg.M):
        for c, i in enumerate(cfg.positions):
            b = int(cfg.bases[k, c])
            delta = eta_delta if eta_delta is not None else np.log(b) / 4.0
            flags[k, c] = H[k, c] >= entropy_threshold(b, delta)
    if not flags.any():
        return emp, candidates(emp, policy, r=r, tau=tau), flags, False
    tallies = [[emp.tallies[k][c] for c in range(cfg.d)] for k in range(cfg.M)]
    shots = emp.shots.copy()
    for k, c in zip(*np.nonzero(flags)):
        shots[k, c] = 2 * emp.shots[k, c]
        tallies[k][c] = sample_register(reg, int(k), int(c), int(shots[k, c]),
                                        seed, round_=1)
    emp2 = EmpiricalDigitDistribution(cfg, tallies, shots)
    return emp2, candidates(emp2, policy, r=r, tau=tau), flags, True
