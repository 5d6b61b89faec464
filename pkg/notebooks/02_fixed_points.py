# %% [markdown]
# # Fixed points of a Hammerstein operator
#
# With k = exp(-|x - y|)/4 and F(y, z) = 1 + z/2 the invariant ball has
# radius t* solving c*phi(t) = t with c = 1/2, i.e. t* = 2/3, and the
# fixed point is the constant 2/3.

# %%
import numpy as np

from unbounded_ie.core import SampledFunction
from unbounded_ie.kernels import affine_F, exponential_family
from unbounded_ie.operators import OperatorSpec, apply_hammerstein
from unbounded_ie.solvers import hammerstein_radius, picard_solve

k = exponential_family("identity", scale=0.25)
F = affine_F(1.0, 0.5)
axes = np.linspace(-5, 5, 11)
spec = OperatorSpec("hammerstein", k, axes, eps_tail=1e-12, nonlinearity=F)

rad = hammerstein_radius(k.car4_bound, F.phi, 10.0)
print("invariant radius", rad.radius)

# %%
f0 = SampledFunction.constant(k.domain, axes, [0.0])
fp = picard_solve(lambda f: apply_hammerstein(spec, f), f0, rad.radius, alpha=1.0, tol=1e-8)
print(f"{fp.iterations} iterations, residual {fp.residual:.2e}")
print("solution", np.round(fp.solution.values[:, 0], 8))
