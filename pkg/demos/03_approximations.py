"""Exact spherical wave vs Fresnel vs Fraunhofer for one point scatterer."""

import math

import numpy as np

from hmimo.channel import (ClusterScattererSet, fraunhofer_channel, fresnel_channel,
                           synthesize_nearfield_greens)
from hmimo.em import CarrierConfig, PlanarArrayGeometry, rayleigh_distance
from hmimo.estimation import nmse_db

carrier = CarrierConfig(30e9)
geom = PlanarArrayGeometry.from_wavelengths(32, 32, 0.25, carrier)
r = rayleigh_distance(geom, carrier)
d_hat = np.array([math.sin(math.radians(20)), 0.0, math.cos(math.radians(20))])

print(" dist/R   fraunhofer dB   fresnel dB")
for f in (0.05, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0):
    s = ClusterScattererSet.single(f * r * d_hat)
    exact = synthesize_nearfield_greens(s, geom, carrier).samples
    far = nmse_db(fraunhofer_channel(s, geom, carrier).samples, exact)
    mid = nmse_db(fresnel_channel(s, geom, carrier).samples, exact)
    print(f"{f:7.2f}  {far:13.2f}  {mid:11.2f}")
