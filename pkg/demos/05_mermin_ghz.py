"""
Three and four particles
========================

For the three-particle and four-particle states every starting position
leads to a contradiction, not just a fraction of them.
"""
import numpy as np

from bohmsg import experiments as ex
from bohmsg import PhysicalParams

params = PhysicalParams()

# %%
# One sample, four settings. The first three products imply xxx = +1 while
# the xxx run itself gives -1.
sample = ex.sample_initials(1, params.delta_r0, 3, seed=4)[0]
report = ex.mermin_check(sample, params)
for name, outcome in report.joint_outcomes.items():
    print(f"{name}: {outcome.signs} product {outcome.product:+d}")
print("implied", report.product_a, "observed", report.product_b)

# %%
# The same holds over a batch, with no exceptions.
for label, fn, n in (("Mermin", ex.mermin_batch, 3), ("GHZ-4", ex.ghz4_batch, 4)):
    batch = fn(ex.sample_array(200, params.delta_r0, n, seed=5), params)
    ok = ~batch.indeterminate
    print(f"{label}: settings {batch.settings}, eigenvalues "
          f"{np.unique(ex.eigen_products(batch)[ok], axis=0).tolist()}, "
          f"contradiction in {batch.contradiction[ok].mean():.0%}")
