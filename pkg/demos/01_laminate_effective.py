"""Homogenize a two-phase laminate three ways and watch the answers agree.

A laminate is the one periodic medium whose effective tensor has classical
closed forms: with M = lam + 2 mu and <.> the volume average over layers,

    Cbar_0000 = <1/M>^-1                        (harmonic mean)
    Cbar_0011 = <lam/M> / <1/M>
    Cbar_1111 = <M> - <lam^2/M> + <lam/M>^2 / <1/M>
    Cbar_0101 = <1/mu>^-1

for layering along axis 0.  We compute Cbar by the full 2-D spectral cell
solve, by 1-D quadrature on the layer profile, and by the formulas above,
then print the three side by side.

Run from the repository root:  python3 demos/01_laminate_effective.py
"""

import numpy as np

from perielast.fields import CellGrid, LamePair, LaminateMedium, build_medium
from perielast.correctors import solve_all
from perielast.effective import effective_C
from perielast.laminate import profile_from_laminate, laminate_effective_C

# Layer fractions sit on multiples of 1/n so the spectral grid and the
# quadrature oracle see the same discrete profile.
n = 64
spec = LaminateMedium(fractions=(0.25, 0.75),
                      phases=(LamePair(1.0, 1.0), LamePair(2.5, 0.6)),
                      densities=(1.0, 2.0))

grid = CellGrid(2, n)
medium = build_medium(spec, grid)
cset = solve_all(medium, hat=False, dispersive=False)
C_spec, rep = effective_C(medium.C, cset.field("chi1"))
print("spectral solve: %d x %d grid, convexity margin %.3f"
      % (n, n, rep["margin"]))

profile = profile_from_laminate(spec, dim=2, samples=4096)
C_prof = laminate_effective_C(profile)

# Closed forms straight from the layer data.
frac = np.array(spec.fractions)
lam = np.array([p.lam for p in spec.phases])
mu = np.array([p.mu for p in spec.phases])
M = lam + 2 * mu
avg = lambda f: float(frac @ f)
closed = {
    (0, 0, 0, 0): 1.0 / avg(1.0 / M),
    (0, 0, 1, 1): avg(lam / M) / avg(1.0 / M),
    (1, 1, 1, 1): avg(M) - avg(lam ** 2 / M) + avg(lam / M) ** 2 / avg(1.0 / M),
    (0, 1, 0, 1): 1.0 / avg(1.0 / mu),
}

print()
print("entry        spectral          profile           closed form")
for idx, ref in closed.items():
    s = C_spec.entries[idx]
    p = C_prof.entries[idx]
    print("C_%d%d%d%d   %16.12f  %16.12f  %16.12f" % (*idx, s, p, ref))

defect = max(abs(C_spec.entries[idx] - ref) for idx, ref in closed.items())
print()
print("max |spectral - closed form| = %.3e" % defect)
assert defect < 1e-9
