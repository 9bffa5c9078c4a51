"""Digitwise segmentation search over the lattice.

The engine sweeps digit layers from most to least significant setting one
digit per component per step.  A fixed-size beam of `w` digit strings is
kept throughout (seeded with w copies of the all-zero string, distinct
survivors first at every prune), so each step scores exactly
w * |C_{k,i}| candidates and the forward-call count matches the analytic
prediction.  Checkpoint backtracking re-sweeps recently fixed layers, and
annealed softmax selection replaces the deterministic prune when
configured.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ContractError
from .lattice import DigitConfig, DigitVector, _alpha_bounds
from .models import ForwardModel, LossSpec, evaluate_errors
from .refine import RefinementConfig, entropy_refine_hook
from .sampler import (
    RegisterDistribution,
    SamplerSpec,
    candidates as extract_candidates,
    full_candidates,
    sample,
)

__all__ = [
    "SearchConfig",
    "TraceRow",
    "RunReport",
    "annealed_select",
    "greedy_segment",
    "beam_segment",
    "hybrid_segment",
    "annealed_restarts",
    "call_count_prediction",
]


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for the segmentation search.

    beam_width        number of digit strings kept alive per step
    backtrack_stride  layers between checkpoints (s)
    backtrack_depth   previously fixed layers re-swept per checkpoint
    selection         "deterministic" argmin or "annealed" softmax draws
    schedule          "exponential" (T0 * decay**layer) or "log" (C / log(1+layer))
    """

    beam_width: int = 1
    backtrack_stride: int = 1
    backtrack_depth: int = 0
    selection: str = "deterministic"
    schedule: str = "exponential"
    T0: float = 1.0
    decay: float = 0.85
    C: float = 1.0
    seed: object = None

    def __post_init__(self):
        if self.beam_width < 1:
            raise ConfigError("/search/beam_width", "beam width must be >= 1")
        if self.backtrack_stride < 1:
            raise ConfigError("/search/backtrack/stride", "stride must be >= 1")
        if self.backtrack_depth < 0:
            raise ConfigError("/search/backtrack/depth", "depth must be >= 0")
        if self.selection not in ("deterministic", "annealed"):
            raise ConfigError("/search/selection/mode", f"unknown mode {self.selection!r}")
        if self.schedule not in ("exponential", "log"):
            raise ConfigError("/search/selection/schedule",
                              f"unknown schedule {self.schedule!r}")
        if self.T0 <= 0 or self.C <= 0:
            raise ConfigError("/search/selection", "temperatures must be positive")
        if not (0.0 < self.decay <= 1.0):
            raise ConfigError("/search/selection/decay", "decay must be in (0, 1]")

    def temperature(self, layer: int) -> float:
        """Temperature for the given 0-based layer sweep (non-increasing)."""
        if self.schedule == "log":
            x = math.log(1.0 + layer)
            return math.inf if x == 0.0 else self.C / x
        return self.T0 * self.decay**layer


@dataclass(frozen=True)
class TraceRow:
    step: int
    layer: object  # digit position (int) or refinement stage name
    component: int  # 1-based
    digit: object  # chosen digit, or refined value for refinement rows
    loss: float
    calls: int

    def as_list(self) -> list:
        return [self.step, self.layer, self.component, self.digit,
                self.loss, self.calls]


@dataclass
class RunReport:
    """Everything one search run produced."""

    digits: DigitVector
    theta_segmented: np.ndarray
    theta: np.ndarray
    final_loss: float
    trace: list = field(default_factory=list)
    beam_history: list = field(default_factory=list)
    calls_raw: int = 0
    calls_deduped: int = 0
    calls_predicted: int | None = None
    wall_time_s: float = 0.0
    entropy: np.ndarray | None = None
    resampled: np.ndarray | None = None
    seed: object = None
    candidates: list | None = None  # candidate sets the run used

    def result_dict(self) -> dict:
        """Deterministic payload: excludes wall time and the seed."""
        return {
            "digits": self.digits.digits.tolist(),
            "theta_segmented": [float(t) for t in self.theta_segmented],
            "theta": [float(t) for t in self.theta],
            "final_loss": float(self.final_loss),
            "trace": [r.as_list() for r in self.trace],
            "beam_history": self.beam_history,
            "calls": {
                "raw": self.calls_raw,
                "deduped": self.calls_deduped,
                "predicted": self.calls_predicted,
            },
            "entropy": None if self.entropy is None else np.asarray(self.entropy).tolist(),
            "resampled": None if self.resampled is None
            else np.asarray(self.resampled).tolist(),
        }

    def fingerprint(self) -> str:
        return json.dumps(self.result_dict(), sort_keys=True,
                          separators=(",", ":"))


def annealed_select(losses, temperature: float, rng: np.random.Generator) -> int:
    """Sample an index with probability softmax(-loss / temperature).

    Uses max-subtraction for overflow safety; as temperature -> 0 the
    mass concentrates on the argmin.
    """
    losses = np.asarray(losses, dtype=np.float64)
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    finite = np.isfinite(losses)
    if not finite.any():
        raise ContractError("all candidate losses are non-finite")
    if math.isinf(temperature):
        p = finite / finite.sum()
    else:
        z = np.where(finite, -(losses - losses[finite].min()) / temperature, -np.inf)
        w = np.exp(z)
        p = w / w.sum()
    return int(rng.choice(losses.size, p=p))


def _validate_candidates(cfg: DigitConfig, cand) -> list:
    lo, hi = _alpha_bounds(cfg)
    out = []
    for k in range(cfg.M):
        row = []
        for c in range(cfg.d):
            C = np.asarray(cand[k][c], dtype=np.int64)
            if C.size == 0:
                raise ContractError(
                    f"empty candidate set at component {k}, "
                    f"position {cfg.positions[c]}"
                )
            if C.min() < lo[k, c] or C.max() > hi[k, c]:
                raise ContractError(
                    f"candidate outside alphabet at component {k}, "
                    f"position {cfg.positions[c]}"
                )
            row.append(np.sort(C))
        out.append(row)
    return out


class _Recorder:
    """Accumulates trace rows and raw-call counts across search stages."""

    def __init__(self, collect_trace: bool = True):
        self.collect_trace = collect_trace
        self.trace: list[TraceRow] = []
        self.beam_history: list = []
        self.raw = 0
        self.step = 0

    def search_row(self, layer_i: int, k: int, digit: int, loss: float,
                   beam_losses) -> None:
        if self.collect_trace:
            self.trace.append(TraceRow(self.step, int(layer_i), k + 1,
                                       int(digit), float(loss), self.raw))
            self.beam_history.append([float(x) for x in beam_losses])
        self.step += 1

    def refine_row(self, stage: str, k: int, value: float, err: float,
                   points: int) -> None:
        self.raw += points
        if self.collect_trace:
            self.trace.append(TraceRow(self.step, stage, k + 1, float(value),
                                       float(err), self.raw))
        self.step += 1


def _segment_engine(model: ForwardModel, spec: LossSpec, cfg: DigitConfig,
                    cand: list, search: SearchConfig, *, threads: int = 1,
                    recorder: _Recorder | None = None,
                    init: DigitVector | None = None) -> RunReport:
    t_start = time.perf_counter()
    rec = recorder if recorder is not None else _Recorder()
    w = search.beam_width
    lam = spec.lam
    omega = spec.omega_matrix(cfg)
    annealed = search.selection == "annealed"
    rng = np.random.default_rng(search.seed) if annealed else None
    lo_all, _ = _alpha_bounds(cfg)
    key_off = int(lo_all.min())
    powers = cfg.powers
    calls_before = model.call_count

    if init is None:
        digits = np.zeros((w, cfg.M, cfg.d), dtype=np.int64)
        theta = np.zeros((w, cfg.M), dtype=np.float64)
        regsum = np.zeros(w, dtype=np.float64)
    else:
        digits = np.tile(init.digits, (w, 1, 1))
        theta = np.tile(init.decode(), (w, 1))
        r0 = 0.0 if omega is None else float((omega * np.abs(init.digits)).sum())
        regsum = np.full(w, r0, dtype=np.float64)
    losses = np.full(w, np.inf)
    cache: dict[bytes, float] = {}

    def key_of(row: np.ndarray) -> bytes:
        return (row - key_off).astype(np.uint8).tobytes()

    def expand(k: int, col: int, temperature: float | None) -> None:
        nonlocal digits, theta, regsum, losses
        C = cand[k][col]
        r = C.size
        P = w * r
        pool_slot = np.repeat(np.arange(w), r)
        pool_j = np.tile(C, w)
        cand_digits = digits[pool_slot].copy()
        cand_digits[np.arange(P), k, col] = pool_j
        delta = (pool_j - digits[pool_slot, k, col]).astype(np.float64)
        cand_theta_k = theta[pool_slot, k] + delta * powers[k, col]
        if omega is not None:
            cand_reg = regsum[pool_slot] + omega[k, col] * (
                np.abs(pool_j) - np.abs(digits[pool_slot, k, col]))
        else:
            cand_reg = regsum[pool_slot]
        keys = [key_of(cand_digits[p]) for p in range(P)]
        rec.raw += P

        pool_loss = np.empty(P)
        to_eval: list[int] = []
        pending: dict[bytes, int] = {}
        dup_of: dict[int, bytes] = {}
        for p in range(P):
            kb = keys[p]
            if kb in cache:
                pool_loss[p] = cache[kb]
            elif kb in pending:
                dup_of[p] = kb
            else:
                pending[kb] = p
                to_eval.append(p)
        if to_eval:
            batch = theta[pool_slot[to_eval]].copy()
            batch[:, k] = cand_theta_k[to_eval]
            errs = evaluate_errors(spec, model, batch, threads=threads)
            vals = errs + lam * cand_reg[to_eval]
            bad = ~np.isfinite(vals)
            if bad.any():
                p = to_eval[int(np.nonzero(bad)[0][0])]
                raise ContractError(
                    f"non-finite loss at component {k}, position "
                    f"{cfg.positions[col]}, digit {pool_j[p]}"
                )
            for idx, p in enumerate(to_eval):
                v = float(vals[idx])
                pool_loss[p] = v
                cache[keys[p]] = v
        for p, kb in dup_of.items():
            pool_loss[p] = cache[kb]

        if temperature is None:
            order = sorted(range(P), key=lambda p: (pool_loss[p], keys[p]))
        else:
            g = rng.gumbel(size=P)
            if math.isinf(temperature):
                rank = -g
            else:
                rank = pool_loss - temperature * g
            order = sorted(range(P), key=lambda p: (rank[p], pool_loss[p], keys[p]))

        sel: list[int] = []
        seen: set[bytes] = set()
        for p in order:
            if keys[p] not in seen:
                sel.append(p)
                seen.add(keys[p])
                if len(sel) == w:
                    break
        base = list(sel)
        while len(sel) < w:
            sel.append(base[len(sel) % len(base)])
        sel.sort(key=lambda p: (pool_loss[p], keys[p]))

        new_theta = theta[pool_slot[sel]].copy()
        new_theta[:, k] = cand_theta_k[sel]
        digits = cand_digits[sel].copy()
        theta = new_theta
        regsum = cand_reg[sel].copy()
        losses = pool_loss[sel].copy()
        rec.search_row(cfg.positions[col], k, digits[0, k, col], losses[0], losses)

    for layer in range(cfg.d):
        col = layer
        T = search.temperature(layer) if annealed else None
        cache.clear()
        for k in range(cfg.M):
            expand(k, col, T)
        if search.backtrack_depth > 0 and (layer + 1) % search.backtrack_stride == 0:
            for col_b in range(max(0, col - search.backtrack_depth), col):
                cache.clear()
                for k in range(cfg.M):
                    expand(k, col_b, None)

    best = DigitVector(digits[0], cfg)
    theta_seg = best.decode()
    return RunReport(
        digits=best,
        theta_segmented=theta_seg,
        theta=theta_seg.copy(),
        final_loss=float(losses[0]),
        trace=rec.trace,
        beam_history=rec.beam_history,
        calls_raw=rec.raw,
        calls_deduped=model.call_count - calls_before,
        wall_time_s=time.perf_counter() - t_start,
        seed=search.seed,
        candidates=cand,
    )


def beam_segment(model: ForwardModel, spec: LossSpec, cfg: DigitConfig,
                 candidates=None, search: SearchConfig | None = None, *,
                 threads: int = 1, collect_trace: bool = True,
                 recorder: _Recorder | None = None,
                 init: DigitVector | None = None) -> RunReport:
    """Beam search over digit layers; beam_width 1 reproduces
    greedy_segment exactly (same trace).  `init` warm-starts the sweep
    from a lattice point instead of the all-zero string."""
    search = search if search is not None else SearchConfig()
    cand = _validate_candidates(
        cfg, candidates if candidates is not None else full_candidates(cfg))
    rec = recorder if recorder is not None else _Recorder(collect_trace=collect_trace)
    return _segment_engine(model, spec, cfg, cand, search,
                           threads=threads, recorder=rec, init=init)


def greedy_segment(model: ForwardModel, spec: LossSpec, cfg: DigitConfig,
                   candidates=None, search: SearchConfig | None = None, *,
                   threads: int = 1, collect_trace: bool = True) -> RunReport:
    """Deterministic digitwise descent: most- to least-significant layer,
    components in ascending order, each digit set to the candidate
    minimizing the regularized loss (ties -> smaller digit)."""
    base = search if search is not None else SearchConfig()
    if base.beam_width != 1 or base.selection != "deterministic":
        base = replace(base, beam_width=1, selection="deterministic")
    return beam_segment(model, spec, cfg, candidates, base,
                        threads=threads, collect_trace=collect_trace)


def hybrid_segment(model: ForwardModel, spec: LossSpec, cfg: DigitConfig,
                   born: RegisterDistribution, sampler: SamplerSpec,
                   search: SearchConfig | None = None, *, threads: int = 1,
                   collect_trace: bool = True,
                   recorder: _Recorder | None = None,
                   init: DigitVector | None = None) -> RunReport:
    """Sampler-driven run: measure every register once, extract candidate
    sets, then run the beam exactly as in classical mode.

    The full-candidate policy bypasses sampling entirely, so its report
    is identical to the classical one.  With entropy-aware sampling on,
    flagged registers are re-measured once (doubled shots) before the
    candidate sets are frozen; the report records the register entropies
    and which registers were re-sampled.
    """
    if sampler.policy == "full":
        return beam_segment(model, spec, cfg, None, search, threads=threads,
                            collect_trace=collect_trace, recorder=recorder,
                            init=init)
    emp = sample(born, sampler.shots, seed=sampler.seed)
    flags = None
    if sampler.entropy_aware:
        emp, cand, flags, _fired = entropy_refine_hook(
            born, emp, policy=sampler.policy, r=sampler.r, tau=sampler.tau,
            eta_delta=sampler.eta_delta, seed=sampler.seed)
    else:
        cand = extract_candidates(emp, sampler.policy, r=sampler.r,
                                  tau=sampler.tau)
    report = beam_segment(model, spec, cfg, cand, search, threads=threads,
                          collect_trace=collect_trace, recorder=recorder,
                          init=init)
    report.entropy = emp.entropy()
    report.resampled = flags
    return report


def annealed_restarts(model: ForwardModel, spec: LossSpec, cfg: DigitConfig,
                      candidates=None, search: SearchConfig | None = None,
                      restarts: int = 1, seed=None, *, threads: int = 1):
    """Best-of-N annealed passes.  Each restart runs one full layer sweep
    with a fresh child seed; returns (best report, per-restart losses)."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    base = search if search is not None else SearchConfig(selection="annealed")
    ss = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    children = ss.spawn(restarts)
    best = None
    finals = np.empty(restarts)
    for ridx in range(restarts):
        rep = beam_segment(model, spec, cfg, candidates,
                           replace(base, seed=children[ridx]),
                           threads=threads, collect_trace=False)
        finals[ridx] = rep.final_loss
        if best is None or rep.final_loss < best.final_loss:
            best = rep
    return best, finals


def call_count_prediction(cfg: DigitConfig, search: SearchConfig,
                          candidates=None,
                          refinement: RefinementConfig | None = None) -> int:
    """Exact forward-call count of a deterministic run.

    Beam sweeps cost w * sum |C_{k,i}|; each checkpoint re-sweeps the
    backtrack_depth layers preceding it at the same per-layer cost; grid
    stages add M * points each.  With a uniform candidate count r and
    backtrack_depth <= stride - 1 this reduces to the closed form
    r*M*d*w + floor(d/s)*M*depth*r*w + M*G + M*F.
    """
    cand = candidates if candidates is not None else full_candidates(cfg)
    sizes = np.array([[len(cand[k][c]) for c in range(cfg.d)]
                      for k in range(cfg.M)], dtype=np.int64)
    w = search.beam_width
    total = int(w * sizes.sum())
    if search.backtrack_depth > 0:
        for layer in range(cfg.d):
            if (layer + 1) % search.backtrack_stride == 0:
                for col_b in range(max(0, layer - search.backtrack_depth), layer):
                    total += int(w * sizes[:, col_b].sum())
    if refinement is not None:
        if refinement.multiscale:
            total += cfg.M * refinement.multiscale.points
        if refinement.fine:
            total += cfg.M * refinement.fine.points
    return total
