"""
Stochastic parallel transport of a tangent vector to a measure
==============================================================

A tangent vector at a measure is the gradient of a potential.  Transporting
it along a random measure path keeps its norm and stays horizontal, and the
result does not depend on which map over the measure is used to lift the path.
"""

# %%
import numpy as np
from _figure import plt, save

from ottoflow import _spectral as sp
from ottoflow.fields import field_from_catalog
from ottoflow.integrators import sample_brownian
from ottoflow.measures import GridDensity, TangentPotential
from ottoflow.transport import DiscreteDiffeo, stochastic_parallel_transport_P

n = 128
x = sp.grid(n)
mu = GridDensity(1 + 0.5 * np.cos(x))
v0 = TangentPotential(np.sin(x) + 0.3 * np.cos(2 * x))
fields = [field_from_catalog("interaction(cos, 1)"), field_from_catalog("gradient_potential(0.5*sin)")]
driver = sample_brownian(1, 0.5, 1e-3, 3)

out = stochastic_parallel_transport_P(fields, mu, v0, driver, record_every=25)
other = stochastic_parallel_transport_P(fields, mu, v0, driver, phi0=DiscreteDiffeo.from_measure(mu).rotated(1.0),
                                        record_every=25)

# %%
k = len(out.times) - 1
print(f"norm drift: {np.max(np.abs(out.norms - v0.norm(mu))):.2e}")
print(f"largest vertical component: {np.max(out.transport.diagnostics['vertical_norm']):.2e}")
print(f"difference between two lifts: {np.max(np.abs(out.field(k, x) - other.field(k, x))):.2e}")

if plt is not None:
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    ax[0].plot(out.times, out.norms)
    ax[0].set_xlabel("t")
    ax[0].set_ylabel("norm")
    for j in (0, k // 2, k):
        ax[1].plot(x, out.field(j, x), label=f"t={out.times[j]:.2f}")
    ax[1].legend()
    ax[1].set_title("transported vector field")
    save(fig, "parallel_transport")
