"""Digit-lattice configurations and encode/decode/projection primitives.

A lattice point is an M-component vector whose components are finite
base-b expansions with n digits above the radix point, m below, and one
at position zero (digit depth d = n + m + 1).  Positions are indexed
i = n, n-1, ..., -m; column 0 of a digit matrix holds the most
significant digit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, InvalidDigitError

__all__ = [
    "DigitConfig",
    "DigitVector",
    "decode",
    "lattice_range",
    "project",
    "perturb",
    "clipping_error_bound",
]


@dataclass(frozen=True, eq=False)
class DigitConfig:
    """Shape of a digit lattice: bases, resolution, signedness, components.

    Parameters
    ----------
    n, m : int
        Digits above and below the radix point (depth d = n + m + 1).
    base : int, optional
        Uniform base for every position.  Mutually exclusive with `bases`.
    bases : array-like, optional
        Explicit (M, d) integer bases, column 0 = most significant.
    signed : bool
        Signed positions use the symmetric alphabet
        {-floor(b/2), ..., floor((b-1)/2)}; unsigned use {0, ..., b-1}.
    M : int
        Number of vector components.
    """

    n: int
    m: int
    base: int | None = None
    bases: np.ndarray | None = None
    signed: bool = False
    M: int = 1
    _powers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ConfigError("/digit", "n and m must be non-negative")
        if self.M < 1:
            raise ConfigError("/digit/M", "need at least one component")
        if (self.base is None) == (self.bases is None):
            raise ConfigError("/digit", "give exactly one of base or bases")
        if self.bases is None:
            if self.base < 2:
                raise ConfigError("/digit/base", "base must be >= 2")
            b = np.full((self.M, self.d), self.base, dtype=np.int64)
        else:
            b = np.asarray(self.bases, dtype=np.int64)
            if b.shape != (self.M, self.d):
                raise ConfigError(
                    "/digit/bases", f"expected shape {(self.M, self.d)}, got {b.shape}"
                )
            if np.any(b < 2):
                raise ConfigError("/digit/bases", "every base must be >= 2")
        if np.any(b > 127):
            raise ConfigError("/digit/bases", "bases above 127 are not supported")
        b.flags.writeable = False
        object.__setattr__(self, "bases", b)
        pw = b.astype(np.float64) ** self.positions[None, :]
        pw.flags.writeable = False
        object.__setattr__(self, "_powers", pw)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DigitConfig)
            and (self.n, self.m, self.signed, self.M)
            == (other.n, other.m, other.signed, other.M)
            and np.array_equal(self.bases, other.bases)
        )

    def __hash__(self) -> int:
        return hash((self.n, self.m, self.signed, self.M, self.bases.tobytes()))

    @property
    def d(self) -> int:
        return self.n + self.m + 1

    @property
    def positions(self) -> np.ndarray:
        """Digit positions by column: n, n-1, ..., -m."""
        return np.arange(self.n, -self.m - 1, -1)

    @property
    def powers(self) -> np.ndarray:
        """(M, d) array of b_{k,i}**i aligned with digit columns."""
        return self._powers

    def col(self, i: int) -> int:
        """Column index of position i."""
        if not (-self.m <= i <= self.n):
            raise InvalidDigitError(f"position {i} outside [{-self.m}, {self.n}]")
        return self.n - i

    def alphabet_bounds(self, k: int, i: int) -> tuple[int, int]:
        """Inclusive (lo, hi) digit values at component k, position i."""
        b = int(self.bases[k, self.col(i)])
        if self.signed:
            return -(b // 2), (b - 1) // 2
        return 0, b - 1

    def alphabet(self, k: int, i: int) -> np.ndarray:
        lo, hi = self.alphabet_bounds(k, i)
        return np.arange(lo, hi + 1, dtype=np.int64)

    def is_uniform(self, k: int) -> bool:
        row = self.bases[k]
        return bool(np.all(row == row[0]))

    def to_json(self) -> dict:
        out: dict = {"n": self.n, "m": self.m, "signed": self.signed, "M": self.M}
        if np.all(self.bases == self.bases.flat[0]):
            out["base"] = int(self.bases.flat[0])
        else:
            out["bases"] = self.bases.tolist()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "DigitConfig":
        try:
            return cls(
                n=int(obj["n"]),
                m=int(obj["m"]),
                base=int(obj["base"]) if "base" in obj else None,
                bases=obj.get("bases"),
                signed=bool(obj.get("signed", False)),
                M=int(obj.get("M", 1)),
            )
        except KeyError as exc:
            raise ConfigError(f"/digit/{exc.args[0]}", "missing field") from exc


class DigitVector:
    """Immutable (M, d) digit matrix tied to a DigitConfig."""

    __slots__ = ("digits", "config")

    def __init__(self, digits, config: DigitConfig):
        arr = np.array(digits, dtype=np.int64)
        if arr.shape != (config.M, config.d):
            raise InvalidDigitError(
                f"digit matrix must be {(config.M, config.d)}, got {arr.shape}"
            )
        lo, hi = _alpha_bounds(config)
        if np.any(arr < lo) or np.any(arr > hi):
            bad = np.argwhere((arr < lo) | (arr > hi))[0]
            k, c = int(bad[0]), int(bad[1])
            raise InvalidDigitError(
                f"digit {arr[k, c]} outside alphabet at component {k}, "
                f"position {config.positions[c]}"
            )
        arr.flags.writeable = False
        self.digits = arr
        self.config = config

    @classmethod
    def zeros(cls, config: DigitConfig) -> "DigitVector":
        return cls(np.zeros((config.M, config.d), dtype=np.int64), config)

    def decode(self) -> np.ndarray:
        return (self.digits * self.config.powers).sum(axis=1)

    def perturb(self, k: int, i: int, j: int) -> "DigitVector":
        c = self.config.col(i)
        lo, hi = self.config.alphabet_bounds(k, i)
        if not (lo <= j <= hi):
            raise InvalidDigitError(
                f"digit {j} outside alphabet [{lo}, {hi}] at ({k}, {i})"
            )
        out = self.digits.copy()
        out[k, c] = j
        return DigitVector(out, self.config)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DigitVector)
            and self.config == other.config
            and np.array_equal(self.digits, other.digits)
        )

    def __repr__(self) -> str:
        return f"DigitVector({self.digits.tolist()})"


def _alpha_bounds(cfg: DigitConfig) -> tuple[np.ndarray, np.ndarray]:
    """(M, d) inclusive digit bounds."""
    b = cfg.bases
    if cfg.signed:
        return -(b // 2), (b - 1) // 2
    return np.zeros_like(b), b - 1


def decode(v: DigitVector) -> np.ndarray:
    """Real vector represented by a digit matrix: theta_k = sum y_{k,i} b^i."""
    return v.decode()


def lattice_range(cfg: DigitConfig, k: int = 0) -> tuple[float, float]:
    """Smallest and largest representable value for component k.

    Computed by direct summation over digit positions, so the returned
    endpoints agree bitwise with decode() at the extreme digit matrices.
    """
    lo, hi = _alpha_bounds(cfg)
    pw = cfg.powers[k]
    # same summation order as decode() so endpoints match it bitwise
    t_min = float((lo[k] * pw).sum())
    t_max = float((hi[k] * pw).sum())
    return t_min, t_max


def clipping_error_bound(theta: float, cfg: DigitConfig, k: int = 0) -> float:
    """Worst-case reconstruction error caused by range saturation: the
    distance from theta to the representable interval (0 inside it)."""
    t_min, t_max = lattice_range(cfg, k)
    return max(0.0, theta - t_max, t_min - theta)


def _round_half_away(x: float) -> int:
    return int(math.trunc(x + math.copysign(0.5, x)))


def _digitize_int(q: int, bases_row: np.ndarray, signed: bool) -> list[int]:
    """Write integer q as mixed-radix digits (least significant first)."""
    digits = []
    for b in map(int, bases_row[::-1]):
        r = q % b
        if signed and r > (b - 1) // 2:
            r -= b
        digits.append(r)
        q = (q - r) // b
    return digits[::-1]


def _project_component_uniform(cfg: DigitConfig, k: int, x: float) -> list[int]:
    b = int(cfg.bases[k, 0])
    t_min, t_max = lattice_range(cfg, k)
    x = min(max(x, t_min), t_max)
    q = _round_half_away(x * float(b) ** cfg.m)
    lo, hi = _alpha_bounds(cfg)
    unit = (b ** cfg.d - 1) // (b - 1)
    q = min(max(q, int(lo[k, 0]) * unit), int(hi[k, 0]) * unit)
    return _digitize_int(q, cfg.bases[k], cfg.signed)


def _project_component_greedy(cfg: DigitConfig, k: int, x: float) -> list[int]:
    """Most-significant-first projection for mixed-base rows: at each
    position pick the digit whose remaining residual is closest to the
    interval representable by the suffix (exact for uniform bases)."""
    lo, hi = _alpha_bounds(cfg)
    pw = cfg.powers[k]
    # suffix_lo/hi[c]: representable by columns strictly after c
    suf_lo = np.concatenate([np.cumsum((lo[k] * pw)[::-1])[::-1][1:], [0.0]])
    suf_hi = np.concatenate([np.cumsum((hi[k] * pw)[::-1])[::-1][1:], [0.0]])
    t_min, t_max = lattice_range(cfg, k)
    resid = min(max(x, t_min), t_max)
    digits = []
    for c in range(cfg.d):
        best_j, best_d = None, None
        for j in range(int(lo[k, c]), int(hi[k, c]) + 1):
            rem = resid - j * pw[c]
            dist = max(suf_lo[c] - rem, rem - suf_hi[c], 0.0)
            better = best_d is None or dist < best_d
            # tie: round half away from zero
            if not better and dist == best_d:
                better = j > best_j if resid >= 0 else j < best_j
            if better:
                best_j, best_d = j, dist
        digits.append(best_j)
        resid -= best_j * pw[c]
    return digits


def project(theta, cfg: DigitConfig) -> DigitVector:
    """Nearest lattice point: clamp each component to its representable
    range, then round to the digit grid (ties away from zero).  Uniform
    bases use exact scaled rounding; mixed bases fall back to the greedy
    most-significant-first rule."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if theta.shape != (cfg.M,):
        raise DomainError(f"expected {cfg.M} components, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise DomainError("cannot project non-finite values")
    rows = []
    for k in range(cfg.M):
        if cfg.is_uniform(k):
            rows.append(_project_component_uniform(cfg, k, float(theta[k])))
        else:
            rows.append(_project_component_greedy(cfg, k, float(theta[k])))
    return DigitVector(np.array(rows, dtype=np.int64), cfg)


def perturb(v: DigitVector, k: int, i: int, j: int) -> DigitVector:
    """Copy of v with the digit at (component k, position i) set to j."""
    return v.perturb(k, i, j)
