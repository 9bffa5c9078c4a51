"""Classical emulation of digitwise quantum measurement.

Each digit position (k, i) owns a register with a categorical outcome
distribution over its digit alphabet.  Repeated shots produce empirical
frequencies that drive candidate-set extraction, entropy diagnostics,
majority voting, and digit-noise error models with analytic MSE
predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .lattice import DigitConfig

__all__ = [
    "RegisterDistribution",
    "EmpiricalDigitDistribution",
    "NoiseModel",
    "SamplerSpec",
    "McEstimate",
    "sample",
    "sample_register",
    "full_candidates",
    "candidates",
    "entropy",
    "entropy_threshold",
    "refine_flag",
    "majority_vote",
    "shots_required",
    "predict_mse",
    "measure_mse",
    "mse_upper_bound",
]

_PROB_TOL = 1e-12


class RegisterDistribution:
    """Per-register outcome probabilities over each position's alphabet.

    probs[k][c] is a 1-D array aligned with the ascending digit alphabet
    at component k, column c.
    """

    def __init__(self, config: DigitConfig, probs):
        self.config = config
        clean = []
        for k in range(config.M):
            row = []
            for c, i in enumerate(config.positions):
                p = np.asarray(probs[k][c], dtype=np.float64)
                alpha = config.alphabet(k, int(i))
                if p.shape != alpha.shape:
                    raise ContractError(
                        f"register ({k}, {i}): {alpha.size} outcomes expected, "
                        f"got {p.size}"
                    )
                if np.any(p < 0) or abs(p.sum() - 1.0) > _PROB_TOL:
                    raise ContractError(
                        f"register ({k}, {i}): probabilities must be >= 0 and sum to 1"
                    )
                row.append(p)
            clean.append(row)
        self.probs = clean

    @classmethod
    def uniform(cls, config: DigitConfig) -> "RegisterDistribution":
        probs = [
            [np.full(config.alphabet(k, int(i)).size, 1.0 / config.alphabet(k, int(i)).size)
             for i in config.positions]
            for k in range(config.M)
        ]
        return cls(config, probs)

    def with_digit_noise(self, noise: "NoiseModel") -> "RegisterDistribution":
        """Readout-corruption model: convolve every register's outcome
        distribution with the digit-offset distribution.  Mass landing
        outside an alphabet is clamped to the nearest endpoint.  Only
        per-register (exact/flip/categorical) noise applies here."""
        if noise.kind == "exact":
            return self
        if noise.kind == "flip":
            values = np.array([-1, 0, 1])
            vprobs = np.array([noise.epsilon / 2, 1.0 - noise.epsilon,
                               noise.epsilon / 2])
        elif noise.kind == "categorical":
            values, vprobs = noise.values, noise.probs
        else:
            raise ContractError(
                "correlated digit noise has no per-register form")
        cfg = self.config
        probs = []
        for k in range(cfg.M):
            row = []
            for c, i in enumerate(cfg.positions):
                alpha = cfg.alphabet(k, int(i))
                p, q = self.probs[k][c], np.zeros(alpha.size)
                for v, pv in zip(values, vprobs):
                    shifted = np.clip(alpha + v, alpha[0], alpha[-1])
                    np.add.at(q, shifted - alpha[0], p * pv)
                row.append(q)
            probs.append(row)
        return RegisterDistribution(cfg, probs)

    @classmethod
    def peaked(cls, config: DigitConfig, digits, confidence: float = 0.9
               ) -> "RegisterDistribution":
        """Synthetic outcome model: mass `confidence` on the given digit,
        the remainder spread uniformly over the rest of the alphabet."""
        digits = np.asarray(getattr(digits, "digits", digits), dtype=np.int64)
        probs = []
        for k in range(config.M):
            row = []
            for c, i in enumerate(config.positions):
                alpha = config.alphabet(k, int(i))
                p = np.full(alpha.size, (1.0 - confidence) / max(alpha.size - 1, 1))
                hit = np.nonzero(alpha == digits[k, c])[0]
                if hit.size == 0:
                    raise ContractError(
                        f"digit {digits[k, c]} outside alphabet at ({k}, {i})"
                    )
                if alpha.size == 1:
                    p[...] = 1.0
                else:
                    p[hit[0]] = confidence
                row.append(p)
            probs.append(row)
        return cls(config, probs)


class EmpiricalDigitDistribution:
    """Shot tallies per register; frequencies are tallies / shots."""

    def __init__(self, config: DigitConfig, tallies, shots):
        self.config = config
        self.tallies = tallies
        self.shots = np.asarray(shots, dtype=np.int64)
        if self.shots.shape != (config.M, config.d):
            raise ContractError("shots must be per-register (M, d)")
        for k in range(config.M):
            for c in range(config.d):
                if int(self.tallies[k][c].sum()) != int(self.shots[k, c]):
                    raise ContractError(f"tallies at ({k}, {c}) do not sum to shots")

    def freqs(self, k: int, c: int) -> np.ndarray:
        return self.tallies[k][c] / float(self.shots[k, c])

    def entropy(self) -> np.ndarray:
        """(M, d) Shannon entropies (natural log) of the register frequencies."""
        H = np.zeros((self.config.M, self.config.d))
        for k in range(self.config.M):
            for c in range(self.config.d):
                H[k, c] = entropy(self.freqs(k, c))
        return H

    def majority_digits(self) -> np.ndarray:
        """(M, d) modal digit per register (ties -> smaller digit value)."""
        out = np.zeros((self.config.M, self.config.d), dtype=np.int64)
        for k in range(self.config.M):
            for c, i in enumerate(self.config.positions):
                alpha = self.config.alphabet(k, int(i))
                out[k, c] = alpha[int(np.argmax(self.tallies[k][c]))]
        return out


def _register_rng(seed, index: int, round_: int = 0) -> np.random.Generator:
    # counter-based stream splitting: one independent child stream per
    # register, so parallel and sequential sampling agree
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(
            seed.entropy, spawn_key=tuple(seed.spawn_key) + (round_, index))
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(round_, index))
    return np.random.default_rng(ss)


def sample_register(reg: RegisterDistribution, k: int, c: int, shots: int,
                    seed, round_: int = 0) -> np.ndarray:
    if shots < 1:
        raise ValueError("shot count must be >= 1")
    rng = _register_rng(seed, k * reg.config.d + c, round_)
    return rng.multinomial(shots, reg.probs[k][c])


def sample(reg: RegisterDistribution, shots: int, seed=None) -> EmpiricalDigitDistribution:
    """Draw `shots` independent measurements per register.

    Reproducible for a fixed seed; registers use independent derived
    streams, so sampling order (or parallelism) cannot change the result.
    """
    if shots < 1:
        raise ValueError("shot count must be >= 1")
    cfg = reg.config
    tallies = [
        [sample_register(reg, k, c, shots, seed) for c in range(cfg.d)]
        for k in range(cfg.M)
    ]
    return EmpiricalDigitDistribution(cfg, tallies, np.full((cfg.M, cfg.d), shots))


def full_candidates(cfg: DigitConfig) -> list:
    """Candidate sets equal to the whole alphabet at every position."""
    return [[cfg.alphabet(k, int(i)) for i in cfg.positions] for k in range(cfg.M)]


def _select(alpha: np.ndarray, f: np.ndarray, policy: str, r, tau) -> np.ndarray:
    if policy == "full":
        return alpha
    if policy == "top_r":
        if r is None or r < 1:
            raise ValueError("top_r policy needs r >= 1")
        order = np.lexsort((alpha, -f))  # frequency desc, then smaller digit
        return np.sort(alpha[order[: min(r, alpha.size)]])
    if policy == "threshold":
        if tau is None or not (0.0 < tau <= 1.0):
            raise ValueError("threshold policy needs tau in (0, 1]")
        keep = alpha[f >= tau]
        if keep.size == 0:
            # fall back to the single most frequent digit
            order = np.lexsort((alpha, -f))
            keep = alpha[order[:1]]
        return np.sort(keep)
    raise ValueError(f"unknown candidate policy: {policy!r}")


def candidates(emp: EmpiricalDigitDistribution, policy: str = "full",
               r: int | None = None, tau: float | None = None) -> list:
    """Candidate digit sets per register under the given policy.

    Always non-empty: top_r keeps the r most frequent digits (ties ->
    smaller value), threshold keeps digits with frequency >= tau and
    falls back to the top digit when none qualify.
    """
    cfg = emp.config
    return [
        [
            _select(cfg.alphabet(k, int(i)), emp.freqs(k, c), policy, r, tau)
            for c, i in enumerate(cfg.positions)
        ]
        for k in range(cfg.M)
    ]


def entropy(freqs) -> float:
    """Shannon entropy (natural log) with 0 log 0 := 0."""
    f = np.asarray(freqs, dtype=np.float64)
    nz = f[f > 0]
    return float(-(nz * np.log(nz)).sum())


def entropy_threshold(base: int, delta: float) -> float:
    """Refinement trigger level: log(base) - delta."""
    if not (0.0 < delta < math.log(base)):
        raise ValueError("delta must lie in (0, log(base))")
    return math.log(base) - delta


def refine_flag(H, eta: float):
    """True where entropy meets or exceeds the trigger level."""
    return np.asarray(H) >= eta


def majority_vote(shots) -> int:
    """Modal digit of a shot sequence (ties -> smaller digit value)."""
    shots = np.asarray(shots)
    if shots.size == 0:
        raise ValueError("cannot vote on an empty shot list")
    values, counts = np.unique(shots, return_counts=True)
    return int(values[np.argmax(counts)])


def shots_required(margin: float, failure: float, base: int) -> int:
    """Measurements needed so a majority vote errs with probability at
    most `failure`, given a confidence margin `margin` (natural log)."""
    if not (0.0 < margin < 1.0) or not (0.0 < failure < 1.0):
        raise ValueError("margin and failure rate must lie in (0, 1)")
    return math.ceil(math.log((base - 1) / failure) / (2.0 * margin**2))


@dataclass(frozen=True)
class SamplerSpec:
    """How candidate sets are produced from register measurements.

    policy "full" bypasses sampling; "top_r" keeps the r most frequent
    digits; "threshold" keeps digits with frequency >= tau (top-1
    fallback).  entropy_aware triggers one doubled-shot re-measurement of
    registers whose entropy reaches log(b) - eta_delta.
    """

    shots: int = 1
    policy: str = "full"
    r: int | None = None
    tau: float | None = None
    eta_delta: float | None = None
    entropy_aware: bool = False
    seed: object = None

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.policy not in ("full", "top_r", "threshold"):
            raise ValueError(f"unknown candidate policy: {self.policy!r}")


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo estimate with its standard error."""

    value: float
    stderr: float
    trials: int

    def __float__(self) -> float:
        return self.value


class NoiseModel:
    """Digit-error model for reconstruction-noise studies.

    kinds:
      exact                no error
      flip(epsilon)        independent +-1 flips, each with prob eps/2
      categorical(values, probs)   explicit iid offset distribution
      correlated(sigma2, rho)      exchangeable shared-latent flips: with
          prob rho one common +-1 disturbance hits all positions of the
          component, else independent flips calibrated so that
          E[delta^2] = sigma2 exactly and Cov(delta_i, delta_j) = rho.
    """

    def __init__(self, kind: str = "exact", epsilon: float | None = None,
                 values=None, probs=None, sigma2: float | None = None,
                 rho: float | None = None):
        self.kind = kind
        if kind == "exact":
            pass
        elif kind == "flip":
            if epsilon is None or not (0.0 <= epsilon <= 1.0):
                raise ValueError("flip noise needs epsilon in [0, 1]")
            self.epsilon = float(epsilon)
        elif kind == "categorical":
            self.values = np.asarray(values, dtype=np.int64)
            self.probs = np.asarray(probs, dtype=np.float64)
            if self.values.shape != self.probs.shape or self.values.ndim != 1:
                raise ValueError("categorical noise needs matching 1-D values/probs")
            if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > _PROB_TOL:
                raise ValueError("categorical probs must be >= 0 and sum to 1")
        elif kind == "correlated":
            if sigma2 is None or rho is None:
                raise ValueError("correlated noise needs sigma2 and rho")
            if not (0.0 <= rho <= sigma2 <= 1.0) or rho >= 1.0:
                raise ValueError("need 0 <= rho <= sigma2 <= 1 and rho < 1")
            self.sigma2 = float(sigma2)
            self.rho = float(rho)
            self._q = (sigma2 - rho) / (1.0 - rho)
        else:
            raise ValueError(f"unknown noise kind: {kind!r}")

    def second_moment_matrix(self, d: int) -> np.ndarray:
        """S with S_ii = E[delta_i^2] and S_ij = E[delta_i delta_j]."""
        if self.kind == "exact":
            return np.zeros((d, d))
        if self.kind == "flip":
            return np.eye(d) * self.epsilon
        if self.kind == "categorical":
            mean = float((self.values * self.probs).sum())
            second = float((self.values.astype(np.float64) ** 2 * self.probs).sum())
            S = np.full((d, d), mean * mean)
            np.fill_diagonal(S, second)
            return S
        S = np.full((d, d), self.rho)
        np.fill_diagonal(S, self.sigma2)
        return S

    def sample_deltas(self, d: int, trials: int, rng: np.random.Generator) -> np.ndarray:
        """(trials, d) digit-error draws for one component."""
        if self.kind == "exact":
            return np.zeros((trials, d))
        if self.kind == "flip":
            return _flips(self.epsilon, (trials, d), rng)
        if self.kind == "categorical":
            u = rng.random((trials, d))
            idx = np.searchsorted(np.cumsum(self.probs), u)
            return self.values[np.minimum(idx, self.values.size - 1)].astype(np.float64)
        shared = rng.random(trials) < self.rho
        signs = rng.integers(0, 2, size=trials) * 2 - 1
        indep = _flips(self._q, (trials, d), rng)
        return np.where(shared[:, None], signs[:, None].astype(np.float64), indep)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "flip":
            out["epsilon"] = self.epsilon
        elif self.kind == "categorical":
            out["values"] = self.values.tolist()
            out["probs"] = self.probs.tolist()
        elif self.kind == "correlated":
            out["sigma2"] = self.sigma2
            out["rho"] = self.rho
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "NoiseModel":
        return cls(**obj)


def _flips(eps: float, shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    return np.where(u < eps / 2, 1.0, 0.0) + np.where(u > 1.0 - eps / 2, -1.0, 0.0)


def predict_mse(noise: NoiseModel, cfg: DigitConfig, component: int = 0) -> float:
    """Analytic expected squared reconstruction error of one component:
    p^T S p with p the place values and S the digit second-moment matrix."""
    p = cfg.powers[component]
    S = noise.second_moment_matrix(cfg.d)
    return float(p @ S @ p)


def measure_mse(noise: NoiseModel, cfg: DigitConfig, trials: int, seed=None,
                component: int = 0) -> McEstimate:
    """Monte Carlo estimate of the same quantity: draw digit errors,
    reconstruct, and average the squared deviation."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    deltas = noise.sample_deltas(cfg.d, trials, rng)
    sq = (deltas @ cfg.powers[component]) ** 2
    stderr = float(sq.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return McEstimate(float(sq.mean()), stderr, trials)


def mse_upper_bound(sigma2: float, rho: float, cfg: DigitConfig,
                    component: int = 0) -> float:
    """Bound under |E[delta^2]| <= sigma2 and |Cov| <= rho:
    sigma2 * sum b^{2i} + rho * sum_{i != j} b^i b^j."""
    p = cfg.powers[component]
    total = float(p.sum())
    return sigma2 * float((p * p).sum()) + rho * (total * total - float((p * p).sum()))
