"""Bloch bands against the homogenized model: second versus fourth order.

For the shear-contrast laminate the exact Bloch frequencies are available
from a transfer-matrix root solve, which pins down the spectral eigensolver
before we lean on it.  Then a sweep in |k| = 2 pi t compares Bloch omega^2
with the quasi-static and the dispersive model predictions.  The quasi-
static error falls like t^2; adding the dispersive tensors buys two more
orders.

Run from the repository root:  python3 demos/03_bloch_bands.py
"""

import numpy as np

from perielast.fields import CellGrid, LamePair, LaminateMedium, build_medium
from perielast.correctors import solve_all
from perielast.effective import build_effective_model
from perielast.bloch import bloch_bands, model_error_slopes
from perielast.laminate import laminate_bloch_oracle

spec = LaminateMedium(fractions=(0.5, 0.5),
                      phases=(LamePair(0.0, 1.0), LamePair(0.0, 3.0)),
                      densities=(1.0, 1.0))
medium = build_medium(spec, CellGrid(2, 64))

# Eigensolver vs transfer matrix at one wavenumber.
t = 0.1
k = 2 * np.pi * t * np.array([1.0, 0.0])
bands = bloch_bands(medium, k, nbands=2)
oracle = laminate_bloch_oracle(spec, 2 * np.pi * t)
print("Bloch omega^2   :", np.array2string(bands.omega2, precision=8))
print("transfer matrix :", np.array2string(oracle, precision=8))
print("rel defect      : %.3e" % (np.abs(bands.omega2 - oracle) / oracle).max())
print("band residuals  : %.3e" % bands.residuals.max())

# Model error sweep.  rel0 is the quasi-static branch-max relative error,
# rel2 the dispersive one; slopes are log-log fits over the interior points.
cset = solve_all(medium, hat=True, dispersive=True)
model = build_effective_model(medium, cset)
study = model_error_slopes(medium, model, direction=np.array([1.0, 0.0]))

print()
print("   t        rel error (2nd order)   rel error (4th order)")
rel0 = np.asarray(study["rel0"]).max(axis=1)        # worst branch per t
rel2 = np.asarray(study["rel2"]).max(axis=1)
for ti, r0, r2 in zip(study["t"], rel0, rel2):
    print("%7.3f        %.6e            %.6e" % (ti, r0, r2))
s0 = study["slope0"].min()
s2 = study["slope2"].min()
print()
print("fitted slopes: %.2f (2nd order), %.2f (4th order)" % (s0, s2))
print("error ratio at t = 0.1: %.1f" % study["ratio_mid"].min())
assert (study["slope2"] - study["slope0"]).min() >= 1.5
