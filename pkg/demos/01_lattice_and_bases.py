"""Wavenumber lattice, the Fourier-harmonic basis and the DFT basis for one array."""

import numpy as np

from hmimo.bases import build_dft_basis, build_fh_basis
from hmimo.em import CarrierConfig, PlanarArrayGeometry, build_lattice, rayleigh_distance

carrier = CarrierConfig(30e9)  # 1 cm wavelength
geom = PlanarArrayGeometry.from_wavelengths(32, 32, 0.25, carrier)
lat = build_lattice(geom, carrier)

# only points inside the radiation disc carry propagating energy
print(f"{geom.n_elements} elements, {lat.propagating_count} propagating lattice points")
print(f"rayleigh distance {rayleigh_distance(geom, carrier):.3f} m")

fh = build_fh_basis(lat, geom)
dft = build_dft_basis(geom, carrier)
print("FH atoms:", fh.n_atoms, " DFT atoms:", dft.n_atoms)

# both are orthonormal at quarter-wavelength spacing
for name, b in (("fh", fh), ("dft", dft)):
    err = np.abs(b.gram() - np.eye(b.n_atoms)).max()
    print(f"{name} max |G - I| = {err:.1e}")

# a DFT atom whose wavenumber lies outside the disc does not radiate
print("invisible DFT bins:", int((~dft.is_propagating).sum()))
