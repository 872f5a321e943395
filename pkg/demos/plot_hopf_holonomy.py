"""
Holonomy of the Hopf fibration
==============================

Horizontally lifting a loop on the base sphere S^2 (radius 1/2) to S^3 closes
it up to a fibre rotation.  The phase equals minus twice the enclosed area
for a counter-clockwise loop about the outward axis.  Here the loops are
circles of latitude, traced by a rotation field.
"""

# %%
import numpy as np
from _figure import plt, save

from ottoflow.integrators import sample_brownian
from ottoflow.submersion import HOPF, fibre_phase, horizontal_lift_diffusion

spin = 2 * np.pi * np.array([1.0, 0.0, 0.0])
polar = np.linspace(0.2, np.pi - 0.2, 9)
measured, predicted = [], []
for a in polar:
    q0 = np.array([np.cos(a / 2), 0.0, np.sin(a / 2), 0.0])  # lies over (cos a, sin a, 0) / 2
    path = horizontal_lift_diffusion([lambda y: np.cross(spin, y)], q0, sample_brownian(0, 1.0, 1e-3, 0))
    measured.append(np.angle(np.exp(1j * fibre_phase(q0, path.end))))
    predicted.append(np.angle(np.exp(-2j * 2 * np.pi * 0.25 * (1 - np.cos(a)))))
    assert np.linalg.norm(HOPF.project(path.end) - HOPF.project(q0)) < 1e-5

# %%
err = np.max(np.abs(np.angle(np.exp(1j * (np.array(measured) - predicted)))))
print(f"largest phase error over {len(polar)} latitudes: {err:.2e}")

if plt is not None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(polar, measured, "o", label="horizontal lift")
    ax.plot(polar, predicted, "-", label="-2 x enclosed area (mod 2 pi)")
    ax.set_xlabel("polar angle of the loop")
    ax.set_ylabel("fibre phase")
    ax.legend()
    save(fig, "hopf_holonomy")
