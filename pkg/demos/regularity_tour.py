"""Empirical constants of the regularity estimates on small examples.

Run: python demos/regularity_tour.py
"""
import numpy as np

from chernlab.corpus import holomorphic_maps
from chernlab.domains import DomainChart
from chernlab.flow import concentrating_family
from chernlab.pullback import MapState
from chernlab.regularity import (epsilon_regularity_check, fit_differential_inequality,
                                 isoperimetric_check, monotonicity_check, morrey_decay_fit)
from chernlab.targets import make_target

hopf = make_target("Hopf")
suite = [MapState.from_function(DomainChart("Disk", 64, size=0.5), hopf, fn) for fn in holomorphic_maps("Hopf")]

# positively curved factors make Delta e negative where the energy is large
fs = make_target("FSProduct")
fit = fit_differential_inequality([MapState.from_function(DomainChart("Disk", 64, size=0.5), fs, fn)
                                   for fn in holomorphic_maps("FSProduct")])
print(f"FSProduct: Delta e >= -C1 e - C2 e^2 with C1 = {fit.C1:.4g}, C2 = {fit.C2:.4g}; "
      f"after doubling the domain C1 -> {fit.C1_scaled:.4g}, C2 -> {fit.C2_scaled:.4g}")

for ms in suite[:3]:
    iso = isoperimetric_check(ms, 0.0, 0.3)
    p = ms.points[0, 32, 32]
    edge = np.zeros(ms.domain.shape, dtype=bool)
    edge[:, [0, -1], :] = edge[:, :, [0, -1]] = True
    reach = hopf.distance(ms.points, ms.chart_ids, p, 0)[edge].min()
    curve = monotonicity_check(ms, p, reach * np.array([0.2, 0.4, 0.8]))
    morrey = morrey_decay_fit(ms, 0.0, [0.05, 0.1, 0.2, 0.3])
    print(f"A/L^2 {iso.ratio:.5f} (flat 1/4pi = {1 / (4 * np.pi):.5f}), "
          f"min A(r)/r^2 {curve.C5:.3f}, Morrey exponent {morrey.alpha:.3f}")

centers = np.linspace(-0.5, 0.5, 5)
for ms in concentrating_family("FSProductBubble", [4, 8, 16], N=128):
    _, C3 = epsilon_regularity_check(ms, centers, 0.1, epsilon1=4.0)
    print(f"k = {ms.family[1]:4.0f}: sup e r^2 / E(2r) <= {C3:.4f}")
