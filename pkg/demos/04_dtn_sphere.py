"""Dirichlet-to-Neumann coefficients on a sphere, checked two ways.

The exterior impedance of a radiating elastic field reduces, mode by mode,
to small matrices built from spherical Hankel functions.  This script pins
the Hankel routine against its order-0/1 closed forms and the Wronskian,
prints the coefficient table for a representative configuration, and
verifies the reciprocity identity that symmetric impedance blocks imply.

Run from the repository root:  python3 demos/04_dtn_sphere.py
"""

import numpy as np

from perielast.fields import LamePair
from perielast.dtn import (dtn_coefficients, dtn_table, reciprocity_defect,
                           spherical_hankel)

# Order 0 and 1 have elementary closed forms; the Wronskian identity
# Im(conj(h) h') = 1/z^2 holds at every order for real argument.
z = 2.7
h0, h0p = spherical_hankel(0, z)
assert abs(h0 - (-1j) * np.exp(1j * z) / z) < 1e-12
for nord in (0, 1, 2, 5, 11):
    h, hp = spherical_hankel(nord, z)
    wr = np.imag(np.conj(h) * hp) - 1.0 / z ** 2
    print("n = %2d   h = %+.6f%+.6fj   Wronskian defect %.1e"
          % (nord, h.real, h.imag, abs(wr)))

R, omega, lame = 1.5, 2.0, LamePair(2.0, 1.0)
print()
print("DtN table at R = %.1f, omega = %.1f, (lam, mu) = (%.1f, %.1f)"
      % (R, omega, lame.lam, lame.mu))
print(" n   lambda_n      a_n                   b_n                   d_n")
for c in dtn_table(range(6), R, omega, lame):
    print("%2d   %8.1f   %+.4f%+.4fj   %+.4f%+.4fj   %+.4f%+.4fj"
          % (c.n, c.lambda_n, c.a_n.real, c.a_n.imag,
             c.b_n.real, c.b_n.imag, c.d_n.real, c.d_n.imag))

# Reciprocity: the traction pairing of two radiating fields is symmetric
# because every modal block is.  Random trial vectors confirm it.
rng = np.random.default_rng(0)
blocks = dtn_table(range(8), R, omega, lame)
al = rng.standard_normal((8, 3)) + 1j * rng.standard_normal((8, 3))
be = rng.standard_normal((8, 3)) + 1j * rng.standard_normal((8, 3))
defect = abs(reciprocity_defect(blocks, al, be))
print()
print("reciprocity defect over 8 modes: %.3e" % defect)
assert defect < 1e-10
