"""Statistical and exhaustive property suites runnable from the CLI.

Each suite returns a list of CheckResult rows; a suite passes when every
row does.  Fixed seeds keep the statistical suites reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import DigitConfig, clipping_error_bound, lattice_range, project
from .models import LinearModel, LossSpec, deceptive_instance
from .refine import RefinementConfig
from .sampler import NoiseModel, measure_mse, mse_upper_bound, predict_mse
from .search import (
    SearchConfig,
    annealed_restarts,
    beam_segment,
    call_count_prediction,
    greedy_segment,
)

__all__ = [
    "CheckResult",
    "SUITES",
    "run_suite",
    "beam_retention_bound",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: measured={self.measured:.6g} "
                f"bound={self.bound:.6g} {self.detail}".rstrip())


def _roundtrip_check(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    for base, n, m, signed in [(2, 2, 4, False), (3, 1, 3, False),
                               (4, 2, 3, False), (3, 1, 3, True),
                               (5, 1, 2, True), (10, 1, 2, False)]:
        cfg = DigitConfig(n=n, m=m, base=base, signed=signed, M=1)
        lo, hi = lattice_range(cfg)
        half = base ** float(-m) / 2.0
        thetas = rng.uniform(lo, hi, size=2500)
        worst = 0.0
        for t in thetas:
            err = abs(project([t], cfg).decode()[0] - t)
            worst = max(worst, err)
        tol = half * (1.0 + 1e-9)
        out.append(CheckResult(
            f"roundtrip b={base} n={n} m={m} signed={signed}",
            worst <= tol, worst, half, "max |decode(project(t)) - t|"))
    return out


def _clipping_check(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    for base, signed in [(2, False), (3, True), (4, False)]:
        cfg = DigitConfig(n=1, m=2, base=base, signed=signed, M=1)
        lo, hi = lattice_range(cfg)
        worst = 0.0
        ok = True
        for t in np.concatenate([hi + rng.uniform(0.1, 5.0, 200),
                                 lo - rng.uniform(0.1, 5.0, 200)]):
            got = abs(project([t], cfg).decode()[0] - t)
            want = clipping_error_bound(float(t), cfg)
            ok = ok and got == want
            worst = max(worst, abs(got - want))
        out.append(CheckResult(
            f"clipping exact b={base} signed={signed}", ok, worst, 0.0,
            "|reconstruction error - saturation formula|"))
    return out


def _projection_bound_check(rng: np.random.Generator) -> list[CheckResult]:
    # diagonal models on balanced signed lattices: digitwise descent is
    # exact there, so the lattice-projection error bound must hold
    worst_gap = -np.inf
    ok = True
    for _ in range(25):
        M = int(rng.integers(1, 4))
        cfg = DigitConfig(n=1, m=2, base=3, signed=True, M=M)
        A = np.diag(rng.uniform(0.5, 2.0, size=M))
        model = LinearModel(A)
        lo, hi = lattice_range(cfg)
        theta_star = rng.uniform(lo, hi, size=M)
        x = model.eval(theta_star)
        model.reset_calls()
        spec = LossSpec(observation=x)
        rep = greedy_segment(model, spec, cfg, collect_trace=False)
        lhs = math.sqrt(spec.error_theta(model, rep.theta_segmented))
        proj = project(theta_star, cfg).decode()
        rhs = model.lipschitz_bound() * float(np.linalg.norm(theta_star - proj))
        ok = ok and lhs <= rhs + 1e-12
        worst_gap = max(worst_gap, lhs - rhs)
    return [CheckResult("projection error bound (diagonal, signed base 3)",
                        ok, worst_gap, 0.0, "max ||F(y)-x|| - L*||t-proj(t)||")]


def suite_bounds(seed=0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return (_roundtrip_check(rng) + _clipping_check(rng)
            + _projection_bound_check(rng))


def suite_accounting(seed=0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    cases = [
        dict(M=2, n=1, m=1, base=2, search=SearchConfig()),
        dict(M=1, n=2, m=2, base=3, search=SearchConfig(beam_width=3)),
        dict(M=3, n=1, m=2, base=2,
             search=SearchConfig(beam_width=2, backtrack_stride=2,
                                 backtrack_depth=1)),
        dict(M=2, n=2, m=3, base=4,
             search=SearchConfig(beam_width=2, backtrack_stride=3,
                                 backtrack_depth=2)),
    ]
    for case in cases:
        cfg = DigitConfig(n=case["n"], m=case["m"], base=case["base"],
                          M=case["M"])
        model = LinearModel(rng.normal(size=(case["M"] + 1, case["M"])))
        spec = LossSpec(observation=rng.normal(size=case["M"] + 1))
        rep = beam_segment(model, spec, cfg, search=case["search"],
                           collect_trace=False)
        predicted = call_count_prediction(cfg, case["search"])
        s = case["search"]
        r, d, w = case["base"], cfg.d, s.beam_width
        closed = r * case["M"] * d * w
        if s.backtrack_depth and s.backtrack_depth <= s.backtrack_stride - 1:
            closed += (d // s.backtrack_stride) * case["M"] * \
                s.backtrack_depth * r * w
        ok = rep.calls_raw == predicted == closed and \
            rep.calls_deduped <= rep.calls_raw
        out.append(CheckResult(
            f"calls M={case['M']} d={d} w={w} "
            f"bt=({s.backtrack_stride},{s.backtrack_depth})",
            ok, rep.calls_raw, closed,
            f"dedup={rep.calls_deduped}"))
    return out


def suite_noise(seed=0, trials: int = 1_000_000) -> list[CheckResult]:
    out = []
    presets = [
        ("independent flips", NoiseModel("flip", epsilon=0.2),
         DigitConfig(n=0, m=1, base=2, M=1)),
        ("biased categorical", NoiseModel("categorical", values=[-1, 0, 1],
                                          probs=[0.05, 0.8, 0.15]),
         DigitConfig(n=1, m=1, base=2, M=1)),
        ("correlated", NoiseModel("correlated", sigma2=0.3, rho=0.1),
         DigitConfig(n=1, m=2, base=2, M=1)),
    ]
    for name, noise, cfg in presets:
        pred = predict_mse(noise, cfg)
        mc = measure_mse(noise, cfg, trials=trials, seed=seed)
        gap = abs(pred - mc.value)
        out.append(CheckResult(f"mse analytic vs MC ({name})",
                               gap <= 3 * mc.stderr, gap, 3 * mc.stderr,
                               f"pred={pred:.6g} mc={mc.value:.6g}"))
        if noise.kind == "correlated":
            bound = mse_upper_bound(noise.sigma2, noise.rho, cfg)
            out.append(CheckResult(
                "mse within sigma/rho envelope (correlated)",
                mc.value <= bound + 3 * mc.stderr, mc.value, bound))
    exact = measure_mse(NoiseModel("exact"), DigitConfig(n=1, m=1, base=2, M=1),
                        trials=1000, seed=seed)
    out.append(CheckResult("exact noise -> zero mse", exact.value == 0.0,
                           exact.value, 0.0))
    return out


def beam_retention_bound(p: float, M: int, d: int, w: int, stride: int) -> float:
    """Probability that the optimal digit string survives to termination,
    per the retained-prefix argument: 1 - (1 - p^(M*d*w))**(d // stride)."""
    checkpoints = max(d // stride, 1)
    return 1.0 - (1.0 - p ** (M * d * w)) ** checkpoints


def _retention_trial(rng: np.random.Generator, cfg: DigitConfig, model,
                     true_digits: np.ndarray, p: float, w: int) -> bool:
    cand = []
    for k in range(cfg.M):
        row = []
        for c, i in enumerate(cfg.positions):
            alpha = cfg.alphabet(k, int(i))
            keep = [d_ for d_ in alpha
                    if (d_ == true_digits[k, c] and rng.random() < p)
                    or (d_ != true_digits[k, c] and rng.random() < 0.5)]
            if not keep:
                others = alpha[alpha != true_digits[k, c]]
                keep = [int(others[rng.integers(others.size)])]
            row.append(np.array(sorted(keep), dtype=np.int64))
        cand.append(row)
    theta_star = (true_digits * cfg.powers).sum(axis=1)
    spec = LossSpec(observation=model.eval(theta_star))
    model.reset_calls()
    rep = beam_segment(model, spec, cfg, cand,
                       SearchConfig(beam_width=w), collect_trace=False)
    return bool(np.array_equal(rep.digits.digits, true_digits))


def suite_beam(seed=0, trials: int = 2000) -> list[CheckResult]:
    # single checkpoint at termination (stride = d): the one regime where
    # the per-checkpoint retention bound composes soundly
    rng = np.random.default_rng(seed)
    cfg = DigitConfig(n=1, m=2, base=3, signed=True, M=1)
    model = LinearModel(np.eye(1))
    out = []
    for p in (0.9, 0.95):
        for w in (1, 2):
            hits = 0
            for _ in range(trials):
                lo, hi = lattice_range(cfg)
                true_digits = project(
                    [rng.uniform(lo, hi)], cfg).digits
                hits += _retention_trial(rng, cfg, model, true_digits, p, w)
            rate = hits / trials
            se = math.sqrt(max(rate * (1 - rate), 1e-9) / trials)
            bound = beam_retention_bound(p, cfg.M, cfg.d, w, stride=cfg.d)
            out.append(CheckResult(
                f"beam retention p={p} w={w}", rate >= bound - 3 * se,
                rate, bound, f"3se={3 * se:.4g}"))
    return out


def suite_anneal(seed=0, runs: int = 40, restarts: int = 500) -> list[CheckResult]:
    model, spec, cfg, theta_opt = deceptive_instance()
    greedy = greedy_segment(model, spec, cfg, collect_trace=False)
    trapped = CheckResult("deterministic greedy is trapped",
                          greedy.theta_segmented[0] != theta_opt,
                          float(greedy.theta_segmented[0]), theta_opt,
                          "greedy theta vs global optimum")
    search = SearchConfig(selection="annealed", schedule="log", C=10.0)
    children = np.random.SeedSequence(seed).spawn(runs)
    hits = 0
    for ridx in range(runs):
        best, _ = annealed_restarts(model, spec, cfg, search=search,
                                    restarts=restarts, seed=children[ridx])
        hits += best.final_loss == 0.0
    rate = hits / runs
    escaped = CheckResult(
        f"log-schedule annealing escape ({runs} runs x {restarts} restarts)",
        rate >= 0.95, rate, 0.95)
    return [trapped, escaped]


SUITES = {
    "bounds": suite_bounds,
    "noise": suite_noise,
    "beam": suite_beam,
    "anneal": suite_anneal,
    "accounting": suite_accounting,
}


def run_suite(name: str, seed=0) -> list[CheckResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from "
                       f"{', '.join(sorted(SUITES))}")
    return SUITES[name](seed=seed)
