"""
Brownian motion on the sphere
=============================

Brownian motion on S^2 is driven by the three infinitesimal rotations.  Both
integrators keep the paths on the sphere to rounding error, and the mean of
``<X_t, x0>`` decays like ``exp(-t)``, the first spherical-harmonic mode of the
heat semigroup.
"""

# %%
import numpy as np
from _figure import plt, save

from ottoflow.geometry import get_manifold
from ottoflow.integrators import integrate_manifold_sde, rotation_field, sample_brownian


def generator(i, j):
    g = np.zeros((3, 3))
    g[i, j], g[j, i] = -1.0, 1.0
    return g


M = get_manifold("sphere2")
fields = [lambda x: np.zeros_like(x)] + [rotation_field(generator(i, j)) for i, j in ((0, 1), (0, 2), (1, 2))]
x0 = np.array([0.0, 0.0, 1.0])
paths = 400
driver = sample_brownian(3, 2.0, 1e-3, seed=1, paths=paths)

# %%
# Integrate with both schemes and check the constraint.
runs = {s: integrate_manifold_sde(M, fields, np.tile(x0, (paths, 1)), driver, s, stride=50)
        for s in ("stratonovich_heun", "ito_projected")}
for scheme, path in runs.items():
    drift = np.max(np.abs(np.linalg.norm(path.points, axis=-1) - 1))
    print(f"{scheme:>18}: max | |X| - 1 | = {drift:.2e}")

# %%
# Compare the sample mean of ``<X_t, x0>`` with ``exp(-t)``.
path = runs["stratonovich_heun"]
inner = path.points @ x0
mean = inner.mean(axis=1)
stderr = inner.std(axis=1).max() / np.sqrt(paths)
print(f"largest deviation from exp(-t): {np.max(np.abs(mean - np.exp(-path.times))):.3f} (standard error {stderr:.3f})")

if plt is not None:
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    ax[0].plot(path.times, mean, label="sample mean")
    ax[0].plot(path.times, np.exp(-path.times), "k--", label="exp(-t)")
    ax[0].set_xlabel("t")
    ax[0].legend()
    for k in range(5):
        ax[1].plot(path.points[:, k, 0], path.points[:, k, 1], lw=0.8)
    ax[1].set_aspect("equal")
    ax[1].set_title("paths seen from above")
    save(fig, "sphere_diffusion")
