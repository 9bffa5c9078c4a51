"""Forward maps, the weighted error functional, and digit regularizers.

Models are black boxes: the solver only ever asks for point evaluations.
Every evaluation bumps a thread-safe call counter so that search-cost
accounting can be checked against analytic predictions.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ContractError, DomainError
from .lattice import DigitConfig, DigitVector

__all__ = [
    "ForwardModel",
    "LinearModel",
    "WaveModel",
    "InterpolatedModel",
    "LossSpec",
    "geometric_weights",
    "error",
    "loss",
    "digit_sensitivity",
    "evaluate_errors",
    "deceptive_instance",
]


class ForwardModel:
    """Base class for forward maps F: R^M -> R^L.

    Subclasses implement `_eval_many` on an (N, M) batch.  `eval` and
    `eval_many` are the public entry points; both count calls (one per
    parameter vector) under a lock so concurrent evaluation stays exact.
    """

    def __init__(self, input_dim: int, output_dim: int):
        self.input_dim = input_dim
        self.output_dim = output_dim
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        return self._calls

    def reset_calls(self) -> None:
        with self._lock:
            self._calls = 0

    def eval(self, theta) -> np.ndarray:
        return self.eval_many(np.asarray(theta, dtype=np.float64)[None, :])[0]

    def eval_many(self, thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=np.float64)
        if thetas.ndim != 2 or thetas.shape[1] != self.input_dim:
            raise ContractError(
                f"expected (N, {self.input_dim}) parameter batch, got {thetas.shape}"
            )
        with self._lock:
            self._calls += thetas.shape[0]
        return self._eval_many(thetas)

    def _eval_many(self, thetas: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lipschitz_bound(self) -> float | None:
        """Upper bound on the Lipschitz constant, when one is known."""
        return None


class LinearModel(ForwardModel):
    """F(theta) = A @ theta."""

    def __init__(self, A):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2:
            raise ContractError("A must be a 2-D matrix")
        super().__init__(input_dim=A.shape[1], output_dim=A.shape[0])
        self.A = A

    def _eval_many(self, thetas):
        return thetas @ self.A.T

    def lipschitz_bound(self) -> float:
        return float(np.linalg.norm(self.A, 2))


class WaveModel(LinearModel):
    """Final-time snapshot of the 1-D wave equation on [0, 1] with fixed
    ends, zero initial velocity, and a sine-mode initial displacement.

    theta holds the mode coefficients; output is u(x, T) on the sensor
    grid.  Closed form: z_l = sum_k theta_k sin(k pi x_l) cos(k pi c T),
    so the map is linear in theta.
    """

    def __init__(self, modes: int, sensors=50, final_time: float = 1.0,
                 wave_speed: float = 1.0):
        if isinstance(sensors, (int, np.integer)):
            # uniform interior points, exact zeros guaranteed only if a
            # caller passes boundary sensors explicitly
            grid = np.arange(1, sensors + 1, dtype=np.float64) / (sensors + 1)
        else:
            grid = np.asarray(sensors, dtype=np.float64)
        k = np.arange(1, modes + 1)
        A = np.sin(np.pi * np.outer(grid, k)) * np.cos(np.pi * k * wave_speed * final_time)
        super().__init__(A)
        self.modes = modes
        self.sensors = grid
        self.final_time = final_time
        self.wave_speed = wave_speed

    def initial_condition(self, theta, x=None) -> np.ndarray:
        """u(x, 0) for the given mode coefficients (defaults to the sensor grid)."""
        x = self.sensors if x is None else np.asarray(x, dtype=np.float64)
        k = np.arange(1, self.modes + 1)
        return np.sin(np.pi * np.outer(x, k)) @ np.asarray(theta, dtype=np.float64)


class InterpolatedModel(ForwardModel):
    """Scalar model tabulated at knot points, piecewise-linear in between.

    Useful for constructing landscapes with prescribed values at lattice
    points (deceptive basins, multi-minimum toys).
    """

    def __init__(self, knots, values):
        super().__init__(input_dim=1, output_dim=1)
        self.knots = np.asarray(knots, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)

    def _eval_many(self, thetas):
        return np.interp(thetas[:, 0], self.knots, self.values)[:, None]


class LossSpec:
    """Observation, weight matrix, and digit-regularizer weights.

    loss(y) = (F(theta) - x)^T W (F(theta) - x) + lam * sum w_{k,i} |y_{k,i}|
    with W = identity and lam = 0 by default.
    """

    def __init__(self, observation, weight=None, lam: float = 0.0, omega=None):
        self.observation = np.asarray(observation, dtype=np.float64)
        if self.observation.ndim != 1:
            raise ContractError("observation must be a vector")
        if weight is not None:
            weight = np.asarray(weight, dtype=np.float64)
            if weight.ndim == 1:
                if weight.shape[0] != self.observation.shape[0]:
                    raise ContractError("diagonal weight length must match observation")
            elif weight.shape != (self.observation.shape[0],) * 2:
                raise ContractError("weight matrix must be L x L")
        self.weight = weight
        if lam < 0:
            raise ContractError("lambda must be non-negative")
        self.lam = float(lam)
        self.omega = None if omega is None else np.asarray(omega, dtype=np.float64)

    def residual_norm2(self, z: np.ndarray) -> np.ndarray:
        """Weighted squared norms of F-output rows minus the observation."""
        if z.shape[-1] != self.observation.shape[0]:
            raise ContractError(
                f"model output length {z.shape[-1]} != observation length "
                f"{self.observation.shape[0]}"
            )
        r = z - self.observation
        if self.weight is None:
            return np.einsum("...l,...l->...", r, r)
        if self.weight.ndim == 1:
            return np.einsum("...l,...l->...", r * self.weight, r)
        return np.einsum("...l,...l->...", r @ self.weight, r)

    def error_theta(self, model: ForwardModel, theta) -> float:
        return float(self.residual_norm2(model.eval(theta)))

    def error_theta_many(self, model: ForwardModel, thetas) -> np.ndarray:
        return self.residual_norm2(model.eval_many(thetas))

    def omega_matrix(self, cfg: DigitConfig) -> np.ndarray | None:
        """Regularizer weights broadcast to (M, d); None when the
        regularizer is off (omega unset)."""
        if self.omega is None:
            return None
        if self.omega.ndim == 0:
            return np.full((cfg.M, cfg.d), float(self.omega))
        if self.omega.shape != (cfg.M, cfg.d):
            raise ContractError(
                f"omega must be scalar or {(cfg.M, cfg.d)}, got {self.omega.shape}"
            )
        return self.omega

    def reg(self, v: DigitVector) -> float:
        """Weighted l1 digit norm R(y); 0 when omega is unset."""
        w = self.omega_matrix(v.config)
        if w is None:
            return 0.0
        return float((w * np.abs(v.digits)).sum())

    def loss(self, model: ForwardModel, v: DigitVector) -> float:
        return self.error_theta(model, v.decode()) + self.lam * self.reg(v)


def evaluate_errors(spec: LossSpec, model: ForwardModel, thetas,
                    threads: int = 1) -> np.ndarray:
    """Weighted squared errors for a parameter batch, optionally evaluated
    across a thread pool.  Chunks preserve row order, so the result is
    independent of the thread count."""
    thetas = np.asarray(thetas, dtype=np.float64)
    if threads <= 1 or thetas.shape[0] < 2 * threads:
        return spec.error_theta_many(model, thetas)
    chunks = np.array_split(thetas, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: spec.error_theta_many(model, c), chunks))
    return np.concatenate(parts)


def geometric_weights(cfg: DigitConfig, w0: float = 1.0) -> np.ndarray:
    """Regularizer weights w_{k,i} = w0 * b_{k,i}**(-i): heavier on the
    low-significance digits."""
    return w0 * cfg.bases.astype(np.float64) ** (-cfg.positions[None, :])


def error(spec: LossSpec, model: ForwardModel, v: DigitVector) -> float:
    """Weighted squared prediction error of the decoded vector (one
    forward call)."""
    theta = v.decode()
    if not np.all(np.isfinite(theta)):
        raise DomainError("decoded parameter vector is not finite")
    return spec.error_theta(model, theta)


def loss(spec: LossSpec, model: ForwardModel, v: DigitVector) -> float:
    """Regularized objective: error plus lam * weighted digit l1 norm."""
    return error(spec, model, v) + spec.lam * spec.reg(v)


def digit_sensitivity(model: ForwardModel, v: DigitVector) -> dict:
    """Empirical digitwise sensitivity diagnostic.

    For each (k, i) returns max over j != y_{k,i} of
    ||F(y) - F(perturbed)||^2 / b_{k,i}^i, an estimate of the constant
    bounding single-digit forward response.
    """
    cfg = v.config
    base_out = model.eval(v.decode())
    out = {}
    for k in range(cfg.M):
        for i in cfg.positions:
            scale = float(cfg.bases[k, cfg.col(i)]) ** i
            worst = 0.0
            for j in cfg.alphabet(k, i):
                if j == v.digits[k, cfg.col(i)]:
                    continue
                z = model.eval(v.perturb(k, i, int(j)).decode())
                worst = max(worst, float(((z - base_out) ** 2).sum()) / scale)
            out[(k, int(i))] = worst
    return out


def deceptive_instance():
    """1-D landscape whose leading digit misleads greedy descent.

    Lattice {0, 1, 2, 3} (base 2, n=1, m=0); the tabulated forward values
    make theta=3 the global optimum while the first-layer comparison
    favours the 0-branch.  Returns (model, spec, cfg, global_theta).
    """
    cfg = DigitConfig(n=1, m=0, base=2, M=1)
    model = InterpolatedModel([0.0, 1.0, 2.0, 3.0], [2.0, 1.0, 3.0, 0.0])
    spec = LossSpec(observation=[0.0])
    return model, spec, cfg, 3.0
