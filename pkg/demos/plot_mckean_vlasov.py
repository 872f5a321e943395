"""
Interacting particles with common noise
=======================================

Particles on the circle attract each other through a cosine kernel and all
feel the same Brownian kick.  The Picard iteration on the measure path
contracts quickly, and the empirical density follows the stochastic density
equation driven by the same noise.
"""

# %%
import numpy as np
from _figure import plt, save

from ottoflow import _spectral as sp
from ottoflow.fields import field_from_catalog
from ottoflow.integrators import sample_brownian
from ottoflow.measures import GridDensity, kde
from ottoflow.mckean_vlasov import MKVProblem, density_spde_evolve, picard_solve, self_consistent_step_solve

fields = [field_from_catalog("interaction(cos, 1)"), field_from_catalog("gradient_potential(0.5*sin)")]
mu0 = GridDensity(1 + 0.5 * np.cos(sp.grid(256)))

# %%
# Picard gaps between successive measure paths.
sol = picard_solve(MKVProblem("circle", fields, mu0, 2000, 1e-3, 0.5, seed=2))
gaps = sol.diagnostics["gaps"][0]
print("Picard gaps:", " ".join(f"{g:.1e}" for g in gaps))

# %%
# Density equation against a kernel density estimate of Heun particles.
T = 0.2
fine = sample_brownian(1, T, 1e-4, 3)
rho = density_spde_evolve(mu0, fields, fine, record_every=fine.steps).values[-1]
coarse = fine.coarsen().coarsen().coarsen()
particles = self_consistent_step_solve(MKVProblem("circle", fields, mu0, 20_000, coarse.step, T, scheme="heun", driver=coarse))
est = kde(particles.path.cloud(len(particles.path) - 1), 256).values
print(f"L2 gap between density equation and particles: {np.sqrt(np.mean((est - rho) ** 2)):.2e}")

if plt is not None:
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    ax[0].semilogy(gaps, "o-")
    ax[0].set_xlabel("Picard iteration")
    ax[0].set_ylabel("gap")
    ax[1].plot(sp.grid(256), mu0.values, "k:", label="t=0")
    ax[1].plot(sp.grid(256), rho, label="density equation")
    ax[1].plot(sp.grid(256), est, "--", label="particles (KDE)")
    ax[1].legend()
    save(fig, "mckean_vlasov")
