# %% [markdown]
# # Auditing kernels on the real line
#
# A kernel is admissible when its L1 norm in the second variable stays
# bounded (car4) and the map x -> k(x, .) settles down along rays (K2).
# Here we compare a kernel that saturates with one that never does.

# %%
import numpy as np

from unbounded_ie.kernels import check_car4, check_k2, default_plan, exponential_family

good = exponential_family("saturating")
plan = default_plan(good, T=40.0)
xs = np.linspace(-10, 10, 5)
print("car4 at", xs, "->", [round(check_car4(good, [x], plan), 8) for x in xs])

# %%
rep = check_k2(good, 1e-3)
print("saturating kernel: certified", rep.certified, "tail radius", rep.T_sup)

# %% [markdown]
# The plain translation kernel exp(-|x - y|) keeps moving its mass as x
# grows, so the ray-Cauchy check cannot find a radius.

# %%
shift = exponential_family("identity")
print("translation kernel: certified", check_k2(shift, 1e-3).certified)
