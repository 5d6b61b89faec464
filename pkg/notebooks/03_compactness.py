# %% [markdown]
# # Why bounded and equicontinuous is not enough
#
# Images of the unit ball under a good Fredholm operator admit an extension
# witness (T, delta): closeness on a ball forces closeness everywhere.
# Translates of one bump are just as bounded and equicontinuous, yet no
# ball controls them, because the mass escapes to infinity.

# %%
import numpy as np

from unbounded_ie.compactness import FunctionFamily, find_extension_witness, translate_bump_family
from unbounded_ie.core import Domain
from unbounded_ie.kernels import exponential_family, ray_cauchy_tail
from unbounded_ie.operators import OperatorSpec, apply_fredholm
from unbounded_ie.sampling import unit_ball_profiles

k = exponential_family("saturating")
spec = OperatorSpec("fredholm", k, np.linspace(-60, 60, 241), radial_probes=False)
fam = FunctionFamily(apply_fredholm(spec, unit_ball_profiles(30, seed=1)))
for eps in (0.1, 0.01):
    w = find_extension_witness(fam, eps, ray_cauchy_tail(k))
    print(f"eps={eps}: T={w.T:.2f}, delta={w.delta} ({w.source})")

# %%
dom = Domain.real_line([1, 2, 4, 8, 16, 32, 64])
bumps = translate_bump_family(dom, np.linspace(0, 100, 401), range(10, 91, 10))
print("bump family witness:", find_extension_witness(bumps, 0.5))
