"""1-D oracle for media varying along a single axis.

For a laminate all cell problems reduce to first integrals: the axial flux
C_1j.. - C_1j1l d_1 u_l is constant in the layering coordinate, so each
solve is a pointwise inversion of the acoustic block A_jl(t) = C_1j1l(t)
followed by cumulative quadrature. No Fourier machinery is involved, which
makes this an independent check on the spectral solvers.

Sampling: positions t_s = s / samples. Piecewise-constant profiles assign
the phase containing t_s + h/2 (jumps then sit midway between samples and
the trapezoid antiderivative is exact across them); smooth profiles are
evaluated at t_s directly. Comparisons with rough-profile fields should be
restricted to integrated quantities.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import brentq

from .fields import LaminateMedium, SmoothMedium
from .tensors import Tensor4, isotropic_tensor

DEFAULT_SAMPLES = 65536


@dataclass
class LaminateProfile:
    dim: int
    t: np.ndarray            # (m,) positions s/m
    C: np.ndarray            # (m, d, d, d, d)
    rho: np.ndarray          # (m,)

    @property
    def samples(self):
        return self.t.size

    @property
    def spacing(self):
        return 1.0 / self.t.size

    def acoustic_block(self):
        return self.C[:, 0, :, 0, :]                 # A_jl(t) = C_1j1l


def profile_from_laminate(spec, dim, samples=DEFAULT_SAMPLES):
    fr = np.asarray(spec.fractions, dtype=float)
    edges = np.concatenate([[0.0], np.cumsum(fr)])
    t = np.arange(samples) / samples
    pid = np.clip(np.searchsorted(edges, t + 0.5 / samples, side="right") - 1,
                  0, len(fr) - 1)
    Cph = np.stack([isotropic_tensor(p, dim).entries for p in spec.phases])
    rph = np.asarray(spec.densities, dtype=float)
    return LaminateProfile(dim, t, Cph[pid], rph[pid])


def profile_from_smooth(spec, dim, samples=DEFAULT_SAMPLES, axis=0):
    for kind in (spec.lam_terms, spec.mu_terms, spec.rho_terms):
        for amp, mvec, ph in kind:
            if any(m != 0 for a, m in enumerate(mvec) if a != axis):
                raise ValueError("profile varies off the layering axis")
    if spec.aniso_terms:
        raise ValueError("anisotropic terms not supported in the 1-D oracle")
    t = np.arange(samples) / samples
    lam = np.full(samples, spec.base.lam)
    mu = np.full(samples, spec.base.mu)
    rho = np.full(samples, spec.rho0)
    for acc, terms in ((lam, spec.lam_terms), (mu, spec.mu_terms),
                       (rho, spec.rho_terms)):
        for amp, mvec, ph in terms:
            acc += amp * np.cos(2 * np.pi * mvec[axis] * t + ph)
    eye = np.eye(dim)
    C = (np.einsum("s,ij,kl->sijkl", lam, eye, eye)
         + np.einsum("s,ik,jl->sijkl", mu, eye, eye)
         + np.einsum("s,il,jk->sijkl", mu, eye, eye))
    return LaminateProfile(dim, t, C, rho)


def _pmean(f):
    """Full-period integral of uniform periodic samples (axis 0)."""
    return f.mean(axis=0)


def _cumint(f, h):
    """Trapezoid antiderivative from t=0, same length as f (axis 0)."""
    return cumulative_trapezoid(f, dx=h, initial=0.0, axis=0)


def _first_integral_solve(Ainv, S):
    """Solve A(t) du(t) = S(t) + c with <du> = 0.

    Ainv: (m, d, d); S: (m, ..., d) with the contracted slot last.
    Returns du with the same shape as S.
    """
    M = _pmean(Ainv)                                  # <A^-1>
    rhs_mean = _pmean(np.einsum("slj,s...j->s...l", Ainv, S))
    c = -np.linalg.solve(M, rhs_mean[..., None])[..., 0]
    return np.einsum("slj,s...j->s...l", Ainv, S + c)


def _zero_mean(u):
    return u - _pmean(u)


def laminate_chi_profile(profile):
    """chi[l, p, q, s] and dchi[l, p, q, s] for all source pairs."""
    h = profile.spacing
    Ainv = np.linalg.inv(profile.acoustic_block())
    S = profile.C[:, 0].transpose(0, 2, 3, 1)         # S[s, p, q, j] = C_1jpq
    dchi = _first_integral_solve(Ainv, S)             # [s, p, q, l]
    chi = _zero_mean(_cumint(dchi, h))
    return (np.transpose(chi, (3, 1, 2, 0)), np.transpose(dchi, (3, 1, 2, 0)))


def laminate_effective_C(profile, dchi=None):
    """C_bar_ijpq = <C_ijpq - C_ij1l d_1 chi[l,p,q]>."""
    if dchi is None:
        _, dchi = laminate_chi_profile(profile)
    flux = profile.C - np.einsum("sijl,lpqs->sijpq",
                                 profile.C[:, :, :, 0, :], dchi)
    return Tensor4(profile.dim, _pmean(flux))


def laminate_gamma_profile(profile):
    """gamma[m, l, s]: density corrector along the layering axis."""
    d, h = profile.dim, profile.spacing
    Ainv = np.linalg.inv(profile.acoustic_block())
    R = _cumint(_pmean(profile.rho) - profile.rho, h)  # antiderivative
    S = np.einsum("s,mj->smj", R, np.eye(d))           # S[s, m, j]
    dgam = _first_integral_solve(Ainv, S)              # [s, m, l]
    gam = _zero_mean(_cumint(dgam, h))
    return np.transpose(gam, (1, 2, 0)), np.transpose(dgam, (1, 2, 0))


def laminate_b_profile(profile, chi=None, dchi=None):
    """Regular part and divergence potential of b: b = breg + d/dt bpot."""
    if chi is None:
        chi, dchi = laminate_chi_profile(profile)
    breg = (-profile.C
            + np.einsum("sijn,nkls->sijkl", profile.C[:, :, :, 0, :], dchi))
    bpot = np.einsum("sjkn,nils->sijkl", profile.C[:, 0], chi)
    return breg, bpot


def laminate_chi4_profile(profile, chi=None, dchi=None):
    """chi4[m, n, q, p, s] from the centered b right-hand side."""
    if chi is None:
        chi, dchi = laminate_chi_profile(profile)
    h = profile.spacing
    Ainv = np.linalg.inv(profile.acoustic_block())
    breg, bpot = laminate_b_profile(profile, chi, dchi)
    F = _cumint(breg - _pmean(breg), h) + bpot          # [s, i, j, k, l]
    # first integral of A dchi4[m,n,q,.] = F[m, ., n, q] + c
    S = np.transpose(F, (0, 1, 3, 4, 2))                # [s, m, n, q, j]
    dchi4 = _first_integral_solve(Ainv, S)              # [s, m, n, q, p]
    chi4 = _zero_mean(_cumint(dchi4, h))
    return (np.transpose(chi4, (1, 2, 3, 4, 0)),
            np.transpose(dchi4, (1, 2, 3, 4, 0)))


def laminate_second_order(profile):
    """Higher-order oracle data: gamma, chi4, the axial dispersive blocks
    D_ax[b,q], E_ax[b,q] and the flux effective tensor."""
    h = profile.spacing
    A = profile.acoustic_block()
    Ainv = np.linalg.inv(A)
    chi, dchi = laminate_chi_profile(profile)
    Cbar = laminate_effective_C(profile, dchi)
    gam, dgam = laminate_gamma_profile(profile)
    chi4, dchi4 = laminate_chi4_profile(profile, chi, dchi)
    rho_bar = float(_pmean(profile.rho))

    # d5[i,j,n,m,q] = C_ijnl chi[l,m,q] - C_ij1l dchi4[m,n,q,l]
    d5 = (np.einsum("sijnl,lmqs->sijnmq", profile.C, chi)
          - np.einsum("sijl,mnqls->sijnmq", profile.C[:, :, :, 0, :], dchi4))
    d5c = d5 - _pmean(d5)

    # axial fifth-order dispersive corrector: free (i,n,m) = (0,0,0), q free
    S = (np.einsum("sjl,qls->sqj", -A, chi4[0, 0])
         + np.transpose(_cumint(d5c[:, 0, :, 0, 0, :], h), (0, 2, 1)))
    ddx5 = _first_integral_solve(Ainv, S)               # [s, q, l]

    # axial third-order dispersive corrector: m = 0, n = q
    rhs3 = (-np.einsum("sjl,nls->snj", A, dgam)
            + np.einsum("s,jns->snj", profile.rho, chi[:, 0]))
    rhs3c = rhs3 - _pmean(rhs3)
    S3 = np.einsum("sjl,nls->snj", -A, gam) + _cumint(rhs3c, h)
    ddg3 = _first_integral_solve(Ainv, S3)              # [s, n, l]

    D_ax = (_pmean(np.einsum("sbl,sql->sbq", A, ddx5))
            + _pmean(np.einsum("sbl,qls->sbq", A, chi4[0, 0])))
    E_ax = (_pmean(np.einsum("sbl,sql->sbq", A, ddg3))
            + _pmean(np.einsum("sbl,qls->sbq", A, gam))
            + _pmean(np.einsum("s,qbs->sbq", profile.rho, chi4[0, 0]))
            - np.einsum("jq,jb->bq", Cbar.entries[0, :, 0, :],
                        _pmean(np.einsum("s,jbs->sjb", profile.rho, gam))) / rho_bar)

    return {"Cbar": Cbar, "rho_bar": rho_bar, "gamma": gam, "dgamma": dgam,
            "chi4": chi4, "dchi4": dchi4, "D_axial": D_ax, "E_axial": E_ax}


def oracle_solve_1d(profile, f):
    """Solve d_1(C_1j1l d_1 u_l) = f_j for a zero-mean rhs f[j, s]; returns
    u[l, s]. Used as the ODE ground truth for the spectral solver."""
    h = profile.spacing
    Ainv = np.linalg.inv(profile.acoustic_block())
    fmean = np.abs(_pmean(f.T)).max()
    if fmean > 1e-8 * max(np.abs(f).max(), 1e-300):
        raise ValueError("rhs must have zero mean along the period")
    S = _cumint(f.T, h)                                 # [s, j]
    du = _first_integral_solve(Ainv, S)
    u = _zero_mean(_cumint(du, h))
    return u.T


# ---------------------------------------------------------------------------
# Transfer-matrix dispersion for piecewise-constant stacks

def stack_dispersion_trace(layers, omega):
    """Half-trace of the propagator across one period for the scalar wave
    (M(t) u')' = -rho w^2 u; layers: list of (modulus, rho, fraction)."""
    T = np.eye(2)
    for M, rho, ell in layers:
        q = omega * np.sqrt(rho / M)
        c, s = np.cos(q * ell), np.sin(q * ell)
        L = np.array([[c, s / (M * q)], [-M * q * s, c]])
        T = L @ T
    return 0.5 * np.trace(T)


def stack_omega2(layers, k, bracket_steps=4096):
    """Lowest Bloch frequency squared at wavenumber k (radians per period)
    for the scalar stack; root of half-trace = cos(k)."""
    target = np.cos(k)

    def f(w):
        return stack_dispersion_trace(layers, w) - target
    c_min = min(np.sqrt(M / rho) for M, rho, _ in layers)
    w_hi = np.pi * c_min  # first band edge is below the fastest quarter wave
    grid = np.linspace(1e-9, 2.0 * w_hi, bracket_steps)
    vals = [f(w) for w in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            return float(a ** 2)
        if fa * fb < 0:
            w = brentq(f, a, b, xtol=1e-14, rtol=8.9e-16)
            return float(w ** 2)
    raise RuntimeError("no dispersion root bracketed")


def laminate_bloch_oracle(spec, k_mag, dim=2):
    """Transfer-matrix w^2 for the two decoupled polarizations of an
    isotropic-phase laminate with k along the layering axis. Returns the
    sorted pair [shear, longitudinal] (or the d=3 triple with the doubled
    shear branch)."""
    if not isinstance(spec, LaminateMedium):
        raise TypeError("expected a LaminateMedium")
    shear = [(p.mu, r, f) for p, r, f in
             zip(spec.phases, spec.densities, spec.fractions)]
    longi = [(p.lam + 2 * p.mu, r, f) for p, r, f in
             zip(spec.phases, spec.densities, spec.fractions)]
    ws = stack_omega2(shear, k_mag)
    wl = stack_omega2(longi, k_mag)
    out = [ws] * (dim - 1) + [wl]
    return np.sort(np.array(out))
