"""Exterior Dirichlet-to-Neumann coefficient algebra on a sphere.

For a homogeneous isotropic exterior (unit density, so the wavenumbers are
w_s = w / sqrt(mu), w_p = w / sqrt(lam + 2 mu)) the traction of a radiating
field on |x| = R acts mode by mode on the vector spherical harmonic
components (V, U, Y r_hat): a scalar a_n on the toroidal part and a 2x2
block [[b_n, c_n], [c_n, d_n]] on the (U, Y r_hat) pair. Only the
coefficient algebra lives here; no operator on the sphere is assembled.

Two quirks of the tabulated formulas are encoded deliberately and checked
only through reading-independent identities (block symmetry, reciprocity):
the intermediates table lists two quantities under the same (1,1) label,
and the b_n / c_n lines are the only users of a (2,1) slot, so the second
entry is taken as B21; and a denominator R - mu * w_s^2 appears verbatim
even though it mixes dimensions. See the README for the full note.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .tensors import LamePair


class ResonantDenominator(ValueError):
    """A coefficient denominator vanished; the frequency is resonant for
    this radius."""


def spherical_hankel(n, z):
    """First-kind spherical Hankel h_n(z) and h_n'(z) by upward recurrence.

    Upward recurrence is the stable direction for h_n (its y_n part is the
    dominant solution), but magnitudes blow up like (2n-1)!!/|z|^(n+1), so
    a warning fires when n is far beyond |z|.
    """
    if n < 0:
        raise ValueError("order must be nonnegative")
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("spherical Hankel functions are singular at z = 0")
    if n > 2 * float(np.abs(z).max()) + 20:
        warnings.warn("spherical_hankel: n >> |z|, values grow factorially "
                      "and may overflow", RuntimeWarning, stacklevel=2)
    ez = np.exp(1j * z)
    hm1 = ez / z                       # h_{-1}
    h0 = -1j * ez / z
    if n == 0:
        h, hprev = h0, hm1
    else:
        h1 = -(1.0 / z + 1j / z ** 2) * ez
        hprev, h = h0, h1
        for m in range(1, n):
            hprev, h = h, (2 * m + 1) / z * h - hprev
    hp = hprev - (n + 1) / z * h
    if np.ndim(z) == 0:
        return complex(h), complex(hp)
    return h, hp


@dataclass
class DtnCoefficients:
    n: int
    R: float
    omega: float
    lame: LamePair
    omega_s: float
    omega_p: float
    lambda_n: float
    gamma_s: complex
    gamma_p: complex
    B11: complex
    B12: complex
    B21: complex
    a_n: complex
    b_n: complex
    c_n: complex
    d_n: complex

    def block(self):
        """3x3 modal impedance on (V, U, Y r_hat) components."""
        return np.array([[self.a_n, 0.0, 0.0],
                         [0.0, self.b_n, self.c_n],
                         [0.0, self.c_n, self.d_n]])


def dtn_coefficients(n, R, omega, lame, floor=1e-12):
    """Impedance coefficients of harmonic order n on the sphere |x| = R."""
    if R <= 0 or omega <= 0:
        raise ValueError("R and omega must be positive")
    if not isinstance(lame, LamePair):
        lame = LamePair(*lame)
    mu = lame.mu
    ws = omega / np.sqrt(mu)
    wp = omega / np.sqrt(lame.lam + 2.0 * mu)
    lam_n = float(n * (n + 1))

    hs, hps = spherical_hankel(n, ws * R)
    hp_, hpp = spherical_hankel(n, wp * R)
    for name, val in (("h_n(w_s R)", hs), ("h_n(w_p R)", hp_)):
        if abs(val) < floor:
            raise ResonantDenominator("%s below %g" % (name, floor))
    gam_s = ws * hps / hs
    gam_p = wp * hpp / hp_

    denom = R * gam_p * (R * gam_s + 1.0) - lam_n
    if abs(denom) < floor:
        raise ResonantDenominator("R gam_p (R gam_s + 1) - lambda_n below %g"
                                  % floor)
    # dimensionally odd, kept exactly as tabulated; the symmetry and
    # reciprocity checks below do not depend on this reading
    denom2 = R - mu * ws ** 2
    if abs(denom2) < floor:
        raise ResonantDenominator("R - mu w_s^2 below %g" % floor)

    sq = np.sqrt(lam_n)
    B11 = -sq * R / denom
    B12 = R * (1.0 + R * gam_s) / denom
    B21 = -R ** 2 * gam_p / denom

    a_n = mu * (gam_s - 1.0 / R)
    b_n = ((2.0 * mu * sq * (gam_p - 1.0 / R)) * B11 / R
           + mu * (2.0 * gam_s + R * ws ** 2 + 2.0 * (1.0 - lam_n) / R)
           * B21 / R)
    c_n = ((2.0 * mu * sq * (-gam_s + 1.0 / R)) * B21 / R
           + (2.0 * mu * (-2.0 * gam_p + lam_n / R)) * B11 / denom2)
    d_n = (-(2.0 * mu * sq * (-gam_s + 1.0 / R)) * B11 / R
           + (2.0 * mu * (-2.0 * gam_p + lam_n / R)) * B12 / denom2)

    return DtnCoefficients(n, float(R), float(omega), lame, float(ws),
                           float(wp), lam_n, complex(gam_s), complex(gam_p),
                           complex(B11), complex(B12), complex(B21),
                           complex(a_n), complex(b_n), complex(c_n),
                           complex(d_n))


def dtn_table(orders, R, omega, lame):
    return [dtn_coefficients(n, R, omega, lame) for n in orders]


def reciprocity_defect(blocks, alphas, betas):
    """Bilinear pairing asymmetry sum_n alpha_n . (M_n^T - M_n) beta_n.

    blocks: per-mode 3x3 impedance matrices (or DtnCoefficients); alphas,
    betas: (N, 3) trial component vectors. The traction pairing of two
    radiating fields differs by exactly this sum, so symmetric blocks give
    zero identically.
    """
    total = 0.0 + 0.0j
    for M, al, be in zip(blocks, alphas, betas):
        if isinstance(M, DtnCoefficients):
            M = M.block()
        total += al @ (M.T - M) @ be
    return abs(total)
