"""Experiment runner: JSON configs in, reports and traces out.

Wires observation synthesis, the optional measurement sampler, the
segmentation search, and grid refinement into one reproducible pipeline.
The optimizer only ever sees the observation vector; any ground-truth
parameters in the config are used solely for building the observation
and for post-hoc error reporting.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ContractError
from .lattice import DigitConfig, project
from .models import ForwardModel, LinearModel, LossSpec, WaveModel, geometric_weights
from .refine import GridStage, RefinementConfig, fine_tune, multiscale_refine
from .sampler import NoiseModel, RegisterDistribution, SamplerSpec
from .search import (
    RunReport,
    SearchConfig,
    _Recorder,
    beam_segment,
    call_count_prediction,
    hybrid_segment,
)

__all__ = [
    "ExperimentConfig",
    "RunArtifacts",
    "preset",
    "run",
    "PRESET_NAMES",
]

PRESET_NAMES = ("wave-full", "wave-beam2", "linear-convex")


@dataclass
class ExperimentConfig:
    """Everything one experiment needs, serializable to a flat JSON file."""

    model: dict
    digit: DigitConfig
    search: SearchConfig
    lam: float = 0.0
    omega: object = None
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    sampler_mode: str = "off"
    sampler_confidence: float = 0.9
    sampler_noise: NoiseModel = field(default_factory=NoiseModel)
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    theta_star: np.ndarray | None = None
    observation: np.ndarray | None = None
    sigma_obs: float = 0.0
    weight: object = None
    init: object = "zero"
    seed: object = None
    threads: int = 1

    def validate(self) -> None:
        kind = self.model.get("kind")
        if kind not in ("wave", "linear"):
            raise ConfigError("/model/kind", f"unknown model kind {kind!r}")
        if kind == "linear":
            A = np.asarray(self.model.get("A", None), dtype=np.float64)
            if A.ndim != 2 or A.shape[1] != self.digit.M:
                raise ConfigError("/model/A",
                                  f"need an L x {self.digit.M} matrix")
        if self.theta_star is None and self.observation is None:
            raise ConfigError("/observation",
                              "need either theta_star or an explicit observation")
        if self.theta_star is not None and len(self.theta_star) != self.digit.M:
            raise ConfigError("/theta_star",
                              f"expected {self.digit.M} components")
        if self.sampler_mode not in ("off", "synthetic"):
            raise ConfigError("/sampler/mode",
                              f"unknown sampler mode {self.sampler_mode!r}")
        if self.sampler_mode == "synthetic" and self.sampler.policy != "full" \
                and self.theta_star is None:
            raise ConfigError("/sampler/mode",
                              "synthetic sampling needs theta_star")
        if self.sampler_noise.kind == "correlated":
            raise ConfigError("/sampler/noise/kind",
                              "correlated digit noise is an analysis model; "
                              "runs accept exact, flip, or categorical")
        if self.sigma_obs < 0:
            raise ConfigError("/sigma_obs", "must be non-negative")
        if self.threads < 1:
            raise ConfigError("/threads", "must be >= 1")
        if not (isinstance(self.init, str) and self.init == "zero") and \
                len(np.atleast_1d(self.init)) != self.digit.M:
            raise ConfigError("/init", "must be \"zero\" or a parameter vector")

    def to_json(self) -> dict:
        search = {
            "beam_width": self.search.beam_width,
            "backtrack": {"stride": self.search.backtrack_stride,
                          "depth": self.search.backtrack_depth},
            "selection": {"mode": self.search.selection,
                          "schedule": self.search.schedule,
                          "T0": self.search.T0, "decay": self.search.decay,
                          "C": self.search.C},
            "lambda": self.lam,
            "omega": self.omega,
        }
        sampler = {
            "mode": self.sampler_mode,
            "shots": self.sampler.shots,
            "policy": self.sampler.policy,
            "r": self.sampler.r,
            "tau": self.sampler.tau,
            "eta_delta": self.sampler.eta_delta,
            "entropy_aware": self.sampler.entropy_aware,
            "confidence": self.sampler_confidence,
            "noise": self.sampler_noise.to_json(),
            "seed": self.sampler.seed,
        }
        out = {
            "model": self.model,
            "digit": self.digit.to_json(),
            "search": search,
            "sampler": sampler,
            "refinement": self.refinement.to_json(),
            "sigma_obs": self.sigma_obs,
            "weight": self.weight,
            "init": self.init if isinstance(self.init, str)
            else [float(v) for v in self.init],
            "seed": self.seed,
            "threads": self.threads,
        }
        if self.theta_star is not None:
            out["theta_star"] = [float(v) for v in self.theta_star]
        if self.observation is not None:
            out["observation"] = [float(v) for v in self.observation]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        for key in ("model", "digit", "search"):
            if key not in obj:
                raise ConfigError(f"/{key}", "missing section")
        s = obj["search"]
        bt = s.get("backtrack") or {}
        sel = s.get("selection") or {}
        try:
            search = SearchConfig(
                beam_width=int(s.get("beam_width", 1)),
                backtrack_stride=int(bt.get("stride", 1)),
                backtrack_depth=int(bt.get("depth", 0)),
                selection=sel.get("mode", "deterministic"),
                schedule=sel.get("schedule", "exponential"),
                T0=float(sel.get("T0", 1.0)),
                decay=float(sel.get("decay", 0.85)),
                C=float(sel.get("C", 1.0)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("/search", str(exc)) from exc
        sa = obj.get("sampler") or {}
        try:
            sampler = SamplerSpec(
                shots=int(sa.get("shots", 1)),
                policy=sa.get("policy", "full"),
                r=sa.get("r"),
                tau=sa.get("tau"),
                eta_delta=sa.get("eta_delta"),
                entropy_aware=bool(sa.get("entropy_aware", False)),
                seed=sa.get("seed"),
            )
            noise = NoiseModel.from_json(sa.get("noise") or {"kind": "exact"})
        except ValueError as exc:
            raise ConfigError("/sampler", str(exc)) from exc
        cfg = cls(
            model=dict(obj["model"]),
            digit=DigitConfig.from_json(obj["digit"]),
            search=search,
            lam=float(s.get("lambda", 0.0)),
            omega=s.get("omega"),
            sampler=sampler,
            sampler_mode=sa.get("mode", "off"),
            sampler_confidence=float(sa.get("confidence", 0.9)),
            sampler_noise=noise,
            refinement=RefinementConfig.from_json(obj.get("refinement")),
            theta_star=None if obj.get("theta_star") is None
            else np.asarray(obj["theta_star"], dtype=np.float64),
            observation=None if obj.get("observation") is None
            else np.asarray(obj["observation"], dtype=np.float64),
            sigma_obs=float(obj.get("sigma_obs", 0.0)),
            weight=obj.get("weight"),
            init=obj.get("init", "zero"),
            seed=obj.get("seed"),
            threads=int(obj.get("threads", 1)),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("/", f"invalid JSON: {exc}") from exc
        return cls.from_json(obj)


def build_model(config: ExperimentConfig) -> ForwardModel:
    kind = config.model["kind"]
    if kind == "wave":
        return WaveModel(
            modes=config.digit.M,
            sensors=config.model.get("sensors", 50),
            final_time=float(config.model.get("T", 1.0)),
            wave_speed=float(config.model.get("c", 1.0)),
        )
    return LinearModel(np.asarray(config.model["A"], dtype=np.float64))


def _resolve_omega(config: ExperimentConfig) -> np.ndarray | None:
    om = config.omega
    if om is None:
        return None
    if isinstance(om, dict):
        if om.get("preset") != "geometric":
            raise ConfigError("/search/omega", "unknown omega preset")
        return geometric_weights(config.digit, w0=float(om.get("w0", 1.0)))
    return np.asarray(om, dtype=np.float64)


def _resolve_weight(config: ExperimentConfig):
    if config.weight is None:
        return None
    return np.asarray(config.weight, dtype=np.float64)


@dataclass
class RunArtifacts:
    """Run outputs plus the recomputed accuracy summary."""

    config: ExperimentConfig
    report: RunReport
    theta: np.ndarray
    final_error: float
    per_component_error: np.ndarray | None
    u0_samples: dict | None
    seed: object
    report_path: str | None = None
    trace_path: str | None = None

    def result_dict(self) -> dict:
        out = self.report.result_dict()
        out["final_error"] = float(self.final_error)
        out["per_component_error"] = (
            None if self.per_component_error is None
            else [float(v) for v in self.per_component_error])
        out["u0"] = self.u0_samples
        return out

    def result_fingerprint(self) -> str:
        return json.dumps(self.result_dict(), sort_keys=True, separators=(",", ":"))

    def report_json(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config.to_json(),
            "seed": self.seed,
            "wall_time_s": self.report.wall_time_s,
            "result": self.result_dict(),
        }


def _write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "layer", "component", "digit", "loss", "calls"])
        for row in trace:
            writer.writerow([row.step, row.layer, row.component, row.digit,
                             repr(row.loss), row.calls])


def run(config: ExperimentConfig | str, out: str | None = None,
        trace: str | None = None, seed=None, threads: int | None = None
        ) -> RunArtifacts:
    """Execute one experiment end to end.

    `seed` overrides the config's master seed; it determines the
    observation noise, sampler shots, and annealing draws.  Deterministic
    configs produce identical results for every seed.
    """
    if isinstance(config, (str, bytes)):
        config = ExperimentConfig.load(config)
    else:
        config.validate()
    t_start = time.perf_counter()
    master = config.seed if seed is None else seed
    threads = config.threads if threads is None else threads
    ss = np.random.SeedSequence(master)
    obs_seed, sampler_seed, anneal_seed = ss.spawn(3)

    model = build_model(config)
    if config.observation is not None:
        x = np.asarray(config.observation, dtype=np.float64)
        if x.shape[0] != model.output_dim:
            raise ConfigError("/observation",
                              f"expected {model.output_dim} entries")
    else:
        x = model.eval(config.theta_star)
        if config.sigma_obs > 0:
            x = x + np.random.default_rng(obs_seed).normal(
                0.0, config.sigma_obs, size=x.shape)
    spec = LossSpec(observation=x, weight=_resolve_weight(config),
                    lam=config.lam, omega=_resolve_omega(config))
    model.reset_calls()

    search = config.search
    if search.selection == "annealed":
        search = replace(search, seed=anneal_seed)
    sampler = replace(config.sampler, seed=sampler_seed)

    recorder = _Recorder()
    init = None if isinstance(config.init, str) \
        else project(np.asarray(config.init, dtype=np.float64), config.digit)
    if config.sampler_mode == "synthetic" and sampler.policy != "full":
        true_digits = project(config.theta_star, config.digit)
        born = RegisterDistribution.peaked(config.digit, true_digits,
                                           config.sampler_confidence)
        if config.sampler_noise.kind != "exact":
            born = born.with_digit_noise(config.sampler_noise)
        report = hybrid_segment(model, spec, config.digit, born, sampler,
                                search, threads=threads, recorder=recorder,
                                init=init)
    else:
        report = beam_segment(model, spec, config.digit, None, search,
                              threads=threads, recorder=recorder, init=init)

    theta = report.theta
    if config.refinement.multiscale is not None:
        theta = multiscale_refine(model, spec, theta, config.refinement,
                                  threads=threads, recorder=recorder)
    if config.refinement.fine is not None:
        theta = fine_tune(model, spec, theta, config.refinement,
                          threads=threads, recorder=recorder)
    report.theta = np.asarray(theta, dtype=np.float64)
    report.calls_raw = recorder.raw
    report.calls_deduped = model.call_count
    report.calls_predicted = call_count_prediction(
        config.digit, search, candidates=report.candidates,
        refinement=config.refinement)
    report.seed = master
    # post-hoc diagnostics; evaluated after the counters are frozen
    final_error = spec.error_theta(model, report.theta)
    report.wall_time_s = time.perf_counter() - t_start

    per_component = None
    if config.theta_star is not None:
        per_component = np.abs(report.theta - np.asarray(config.theta_star))
    u0 = None
    if isinstance(model, WaveModel):
        grid = model.sensors
        u0 = {
            "x": [float(v) for v in grid],
            "recovered": [float(v) for v in model.initial_condition(report.theta)],
            "true": None if config.theta_star is None else
            [float(v) for v in model.initial_condition(config.theta_star)],
        }
    artifacts = RunArtifacts(
        config=config, report=report, theta=report.theta,
        final_error=final_error, per_component_error=per_component,
        u0_samples=u0, seed=master,
    )
    if out:
        with open(out, "w") as fh:
            json.dump(artifacts.report_json(), fh, indent=2)
        artifacts.report_path = out
    if trace:
        _write_trace(trace, report.trace)
        artifacts.trace_path = trace
    return artifacts


def preset(name: str) -> ExperimentConfig:
    """Built-in experiment configurations.

    wave-full      3-mode wave inversion, base-4 17-digit lattice, beam 4,
                   checkpoint backtracking, exponential annealing, and both
                   refinement stages.
    wave-beam2     the narrow variant: base-2 15-digit lattice, beam 2,
                   no backtracking or refinement; third component saturates.
    linear-convex  diagonal linear model on a signed base-3 lattice where
                   digitwise descent provably attains the global optimum.
    """
    if name == "wave-full":
        return ExperimentConfig(
            model={"kind": "wave", "sensors": 50, "T": 1.0, "c": 1.0},
            digit=DigitConfig(n=8, m=8, base=4, M=3),
            search=SearchConfig(beam_width=4, backtrack_stride=4,
                                backtrack_depth=2, selection="annealed",
                                schedule="exponential", T0=1.0, decay=0.85),
            refinement=RefinementConfig(multiscale=GridStage(301, 0.2),
                                        fine=GridStage(6000, 0.2)),
            theta_star=np.array([0.25, 0.5, 0.75]),
            seed=0,
        )
    if name == "wave-beam2":
        return ExperimentConfig(
            model={"kind": "wave", "sensors": 50, "T": 1.0, "c": 1.0},
            digit=DigitConfig(n=7, m=7, base=2, M=3),
            search=SearchConfig(beam_width=2),
            theta_star=np.array([0.25, 0.5, 0.75]),
            seed=0,
        )
    if name == "linear-convex":
        return ExperimentConfig(
            model={"kind": "linear",
                   "A": [[1.3, 0.0, 0.0], [0.0, 0.8, 0.0], [0.0, 0.0, 1.9]]},
            digit=DigitConfig(n=0, m=2, base=3, signed=True, M=3),
            search=SearchConfig(),
            theta_star=np.array([0.4, -0.7, 1.1]),
            seed=0,
        )
    raise ConfigError("/preset", f"unknown preset {name!r}; "
                      f"choose from {', '.join(PRESET_NAMES)}")
