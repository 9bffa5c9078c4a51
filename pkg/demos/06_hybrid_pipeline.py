"""The sampler-driven pipeline end to end: synthetic register
measurements propose digit candidates, the classical search picks among
them, grids polish the result.

Candidate sets shrink the per-layer search (top-2 instead of all four
base-4 digits) while the measurement confidence keeps the true digit in
play; the report records register entropies alongside the usual trace.
"""

import numpy as np

from segreg import ExperimentConfig, preset, run

base = preset("wave-full").to_json()
base["sampler"] = {"mode": "synthetic", "shots": 200, "policy": "top_r",
                   "r": 2, "confidence": 0.9}
cfg = ExperimentConfig.from_json(base)

hits = 0
for seed in range(5):
    art = run(cfg, seed=seed)
    err = art.per_component_error.max()
    hits += err <= 1e-4
    print(f"seed {seed}: theta={np.round(art.theta, 7).tolist()}  "
          f"max|err|={err:.2e}  calls={art.report.calls_raw}")

print(f"\n{hits}/5 seeds within 1e-4 of the truth")
art = run(cfg, seed=0)
H = np.asarray(art.report.entropy)
print(f"register entropy: mean {H.mean():.3f}, max {H.max():.3f} "
      f"(a 0.9-confidence register has entropy ~0.64)")
print("note: the classical-only run costs",
      run(preset('wave-full'), seed=0).report.calls_raw,
      "calls; candidate restriction cut the sweep cost in half")
