"""Digitwise measurement emulation: shot sampling, candidate policies,
entropy diagnostics, and the majority-vote shot budget.
"""

import math

import numpy as np

from segreg import (
    DigitConfig,
    RegisterDistribution,
    candidates,
    entropy_threshold,
    majority_vote,
    sample,
    shots_required,
)
from segreg.refine import entropy_refine_hook

cfg = DigitConfig(n=0, m=1, base=4, M=1)

# a confident register and a flat one
reg = RegisterDistribution(cfg, [[np.array([0.05, 0.85, 0.05, 0.05]),
                                  np.full(4, 0.25)]])
emp = sample(reg, shots=256, seed=0)
print("frequencies, confident register:", np.round(emp.freqs(0, 0), 3))
print("frequencies, flat register:     ", np.round(emp.freqs(0, 1), 3))
print("entropies:", np.round(emp.entropy()[0], 3),
      f"(max ln 4 = {math.log(4):.3f})")

for policy, kw in [("top_r", {"r": 2}), ("threshold", {"tau": 0.2})]:
    sets = candidates(emp, policy, **kw)
    print(f"candidates under {policy}{kw}:",
          [c.tolist() for c in sets[0]])

# the flat register trips the entropy trigger and gets re-measured
emp2, sets, flags, fired = entropy_refine_hook(
    reg, emp, policy="top_r", r=2, eta_delta=math.log(4) / 4, seed=0)
print("entropy flags:", flags[0].tolist(), "-> re-sampled with shots",
      emp2.shots[0].tolist())
print("threshold used: ln(4) - ln(4)/4 =",
      round(entropy_threshold(4, math.log(4) / 4), 3))

# majority vote: shots needed for a 0.2 threshold margin at 5% failure
n_shots = shots_required(margin=0.2, failure=0.05, base=2)
rng = np.random.default_rng(1)
trials = 20_000
wrong = sum(majority_vote((rng.random(n_shots) >= 0.7).astype(int)) != 0
            for _ in range(trials))
print(f"\nmajority vote with N={n_shots} shots at p(correct)=0.7: "
      f"empirical error {wrong / trials:.4f} (requested 0.05)")
