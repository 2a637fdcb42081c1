"""
Counterfactual outcomes for one pair of positions
=================================================

Three magnet directions 120 degrees apart: Z_L and Z'_L on the left, and on
the right Z_R (parallel to Z'_L) and Z'_R. The same pair of starting
positions is run through all four combinations.
"""
import math

from bohmsg import experiments as ex
from bohmsg import PhysicalParams

params = PhysicalParams()
r = (math.sqrt(3) / 2, 0.5)

# %%
# Left atom at 10 microns along a direction 30 degrees off its Y axis, right
# atom 10% further out along the same direction.
sample = ex.InitialSample(((1e-3 * r[0], 1e-3 * r[1]), (1.1e-3 * r[0], 1.1e-3 * r[1])))
report = ex.two_particle_contradiction(sample, params)
for name, outcome in report.joint_outcomes.items():
    print(f"{name:>8}: {outcome.signs}")

# %%
# The products over (Z_L,Z_R), (Z'_L,Z'_R) and over (Z'_L,Z_R), (Z_L,Z'_R)
# disagree: +1 = -1 if the outcomes were fixed in advance.
print("products:", report.product_a, report.product_b, "contradiction:", report.contradiction)

# %%
# Mirror the right atom through the beam axis and the paradox disappears.
mirrored = ex.InitialSample(((1e-3 * r[0], 1e-3 * r[1]), (-1e-3 * r[0], -1e-3 * r[1])))
print("mirrored:", {k: v.signs for k, v in ex.two_particle_contradiction(mirrored, params).joint_outcomes.items()})

# %%
# Over Gaussian starting positions, the paradox shows up for about half of them.
est = ex.contradiction_fraction(1000, seed=1, params=params)
print(f"fraction with a contradiction: {est.value:.3f} +- {est.stderr:.3f}")
