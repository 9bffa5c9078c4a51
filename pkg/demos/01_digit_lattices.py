"""Tour of the digit-lattice layer: encode, decode, project, clip.

Real vectors are represented as fixed-length base-b digit expansions.
This demo walks the basic operations the optimizer is built on.
"""

import numpy as np

from segreg import DigitConfig, DigitVector, clipping_error_bound, lattice_range, project

# a tiny binary lattice: one digit above the radix point, one below
cfg = DigitConfig(n=1, m=1, base=2, M=1)
print(f"base-2 lattice with n=1, m=1 (depth d={cfg.d})")
print("representable values:",
      sorted((np.array([[a, b, c]]) * cfg.powers).sum()
             for a in (0, 1) for b in (0, 1) for c in (0, 1)))

v = DigitVector([[1, 0, 1]], cfg)
print("digits [1,0,1] decode to", v.decode()[0], "(2 + 0 + 1/2)")

# projection rounds to the nearest lattice point, ties away from zero
fine = DigitConfig(n=0, m=3, base=2, M=1)
for theta in (0.3, 0.6875, 0.999):
    got = project([theta], fine).decode()[0]
    print(f"project({theta}) -> {got}  (grid step {2**-3}, max error {2**-3/2})")

# out-of-range targets saturate; the error equals the distance to the range
lo, hi = lattice_range(fine)
theta = hi + 0.4
print(f"range is [{lo}, {hi:.4f}]; project({theta:.4f}) ->",
      project([theta], fine).decode()[0],
      f"clipping error bound {clipping_error_bound(theta, fine):.4f}")

# signed alphabets make the range symmetric about zero
signed = DigitConfig(n=0, m=2, base=3, signed=True, M=1)
print("signed base-3 range:", lattice_range(signed))
print("project(-0.55) ->", project([-0.55], signed).decode()[0])

# mixed bases trade resolution for register width position by position
mixed = DigitConfig(n=1, m=1, bases=[[2, 4, 8]], M=1)
print("mixed bases [2,4,8] place values:", mixed.powers[0].tolist(),
      "range:", lattice_range(mixed))
