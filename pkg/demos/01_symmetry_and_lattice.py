# %% [markdown]
# Square-lattice symmetry
#
# The medium keeps rotations by quarter turns and translations by the lattice
# spacing 4 pi.  On the drift torus this leaves one generator J, a quarter turn
# that fixes both (0, 0) and (pi, pi).

# %%
import numpy as np

from spiralanchor.perturbation import check_z4_symmetry, parse_spec, simdata_spec
from spiralanchor.se2 import J, LatticeSpec, apply_J, lattice_element, act_on_point, nearest_lattice_point

print(J)
print(apply_J([np.pi, np.pi]) % (2 * np.pi))

# %%
# A lattice element: quarter turn followed by a shift of one cell.
g = lattice_element(1, (1, 0))
print(act_on_point(g, (1.0, 0.0)))

lat = LatticeSpec(4 * np.pi)
for z in [(0.3, -0.2), (6.3, 6.2), (12.0, 1.0)]:
    pt, d = nearest_lattice_point(lat, z)
    dpt, dd = nearest_lattice_point(lat.shifted(), z)
    print(z, "lattice", pt.round(3), round(d, 3), "half-shifted", dpt.round(3), round(dd, 3))

# %% [markdown]
# Perturbations are written as trigonometric polynomials in a, b (the drift
# coordinates) and p (the spiral phase).  The symmetry check is symbolic.

# %%
spec = simdata_spec()
print(spec.to_text())
print(check_z4_symmetry(spec))

broken = parse_spec("fphi: sin(p)\nfpsi1: cos(a)\n")
report = check_z4_symmetry(broken)
print(report.passes, report.violating_terms)
