"""Effective tensors of the homogenized model and its dispersive extension.

The quasi-static model is div(C_bar grad U) + w^2 rho_bar U = 0 with

    C_bar_ijkl = < C_ijkl - C_ijmn d_m chi1[n,k,l] >,   rho_bar = <rho>.

The dispersive extension appends first- and second-order corrections,

    div(C_bar grad U) + w^2 rho_bar U =
        -eps   (F:grad^3 U + w^2 G:grad U)
        -eps^2 (D:grad^4 U + w^2 E:grad^2 U),

whose coefficient tensors are cell averages of the higher correctors. For a
plane wave U = A exp(i k.x) this gives the generalized eigenproblem

    [Gamma(k) - eps^2 D(k,k,k,k) + i eps F(k,k,k)] A
        = w^2 [rho_bar I - eps^2 E(k,k) + i eps G(k)] A,

with Gamma_bq = C_bar_abmq k_a k_m. The E-block enters with a minus because
grad^2 -> -k^2 under the plane-wave substitution.
"""

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .fields import CellField, cell_average, grad_values
from .tensors import Tensor4, TensorN, check_symmetries, convexity_margin


class ConvexityLost(RuntimeError):
    pass


class NonHermitianWarning(UserWarning):
    """Raised to attention when the dispersive symbol has complex spectrum."""


def _vals(x):
    return x.values if isinstance(x, CellField) else np.asarray(x)


def _avg(values, dim):
    return values.mean(axis=tuple(range(-dim, 0)))


def effective_rho(rho):
    return float(_vals(rho).mean())


def effective_C(C, chi1, margin_floor=0.0):
    """Flux-average effective tensor; returns (Tensor4, report dict)."""
    Cv, x1, grid = _vals(C), _vals(chi1), C.grid
    d = grid.dim
    Dx1 = grad_values(x1, grid)
    flux = Cv - np.einsum("ijmn...,mnkl...->ijkl...", Cv, Dx1)
    Cbar = _avg(flux, d)
    defects = check_symmetries(Cbar)
    Csym = Tensor4(d, 0.5 * (Cbar + Cbar.transpose(2, 3, 0, 1)), symmetric=True)
    margin = convexity_margin(Csym)
    if margin <= margin_floor:
        raise ConvexityLost("effective tensor margin %g" % margin)
    report = {"minor_defect": defects["minor"], "major_defect": defects["major"],
              "margin": margin}
    return Tensor4(d, Cbar), report


def effective_C_energy(C, chi1):
    """Energy-form rewriting <(E - grad chi) : C : (E - grad chi)>; equals
    the flux average up to the cell-problem residual."""
    Cv, x1, grid = _vals(C), _vals(chi1), C.grid
    d = grid.dim
    Dx1 = grad_values(x1, grid)                  # [a, b, i, j]
    eye = np.eye(d)
    T = (np.einsum("ai,bj->abij", eye, eye)[(...,) + (None,) * d] - Dx1)
    Cbar = _avg(np.einsum("abij...,abce...,cekl...->ijkl...", T, Cv, T), d)
    return Tensor4(d, Cbar)


def u1_source_tensors(C, rho, chi1, chi4, gamma):
    """Coefficient tensors of the first-order mean-corrector source.

    Returns dict with:
      src3[j,m,n]      = <-rho chi1[j,m,n] + C_mjkl d_k gamma[n,l]>
      src5[i,j,n,m,q]  = <-C_ijnl chi1[l,m,q] + C_ijkl d_k chi4[m,n,q,l]>
      src3_alt         = <rho (chi1[n,m,j] - chi1[j,m,n])>  (reciprocity form)
      src5_alt         = the three-integral rewriting of src5
    """
    Cv, rv = _vals(C), _vals(rho)
    x1, x4, gm, grid = _vals(chi1), _vals(chi4), _vals(gamma), C.grid
    d = grid.dim
    Dg = grad_values(gm, grid)
    Dx4 = grad_values(x4, grid)

    src3 = _avg(-np.einsum("...,jmn...->jmn...", rv, x1)
                + np.einsum("mjkl...,knl...->jmn...", Cv, Dg), d)
    src5 = _avg(-np.einsum("ijnl...,lmq...->ijnmq...", Cv, x1)
                + np.einsum("ijkl...,kmnql...->ijnmq...", Cv, Dx4), d)

    src3_alt = _avg(np.einsum("...,nmj...->jmn...", rv, x1)
                    - np.einsum("...,jmn...->jmn...", rv, x1), d)

    lhs_alt = grad_chi4_average_by_parts(C, chi1)   # [i,j,m,n,q]
    first = _avg(np.einsum("ijnl...,lmq...->ijnmq...", Cv, x1), d)
    src5_alt = -first + lhs_alt.transpose(0, 1, 3, 2, 4)   # -> [i,j,n,m,q]
    return {"src3": src3, "src5": src5,
            "src3_alt": src3_alt, "src5_alt": src5_alt}


def grad_chi4_average(C, chi4):
    """<C_ijkl d_k chi4[m,n,q,l]> as a [i,j,m,n,q] array (identity tests)."""
    Cv, x4, grid = _vals(C), _vals(chi4), C.grid
    Dx4 = grad_values(x4, grid)
    return _avg(np.einsum("ijkl...,kmnql...->ijmnq...", Cv, Dx4), grid.dim)


def grad_chi4_average_by_parts(C, chi1):
    """The same average computed from chi1 alone via integration by parts:
    <chi1[b,i,j] C_mbnq> - <chi1[b,i,j] C_mbag d_a chi1[g,n,q]>
    + <chi1[g,m,q] C_abng d_a chi1[b,i,j]>, indexed [i,j,m,n,q]."""
    Cv, x1, grid = _vals(C), _vals(chi1), C.grid
    Dx1 = grad_values(x1, grid)
    t1 = _avg(np.einsum("bij...,mbnq...->ijmnq...", x1, Cv), grid.dim)
    t2 = _avg(np.einsum("bij...,mbag...,agnq...->ijmnq...", x1, Cv, Dx1), grid.dim)
    t3 = _avg(np.einsum("gmq...,abng...,abij...->ijmnq...", x1, Cv, Dx1), grid.dim)
    return t1 - t2 + t3


def dispersive_tensors(C, rho, cset, Cbar=None, rho_bar=None):
    """Assemble (D, E, F, G) from the corrector set.

    D[b,a,i,m,n,q] = <C_abkl d_k dchi5[i,n,m,q,l] + C_abil chi4[m,n,q,l]>
    E[b,a,m,q]     = <C_abkl d_k dgamma3[l,m,q] + C_abml gamma[q,l]>
                     + <rho chi4[m,a,q,b]>
                     - (1/rho_bar) sum_j Cbar[a,j,m,q] <rho gamma[j,b]>
    F[b,a,i,m,q]   = <C_abkl d_k chi4[i,m,q,l] - C_abil chi1[l,m,q]>
    G[b,m,q]       = <-rho chi1[b,m,q] + C_mbkl d_k gamma[q,l]>

    The last E term is printed in the source derivation with a stray free
    index; the contraction used here (sum j against the first gamma slot)
    is the one the leading-order substitution actually produces.
    """
    Cv, rv, grid = _vals(C), _vals(rho), C.grid
    d = grid.dim
    x1, x4, gm = cset.chi1, cset.chi4, cset.gamma
    dx5, dg3 = cset.disp_chi5, cset.disp_gamma3
    if Cbar is None:
        Cbar = effective_C(C, cset.field("chi1"))[0]
    Cb = Cbar.entries if isinstance(Cbar, Tensor4) else np.asarray(Cbar)
    if rho_bar is None:
        rho_bar = float(rv.mean())

    Ddx5 = grad_values(dx5, grid)                   # [k, i, n, m, q, l]
    D = _avg(np.einsum("abkl...,kinmql...->baimnq...", Cv, Ddx5)
             + np.einsum("abil...,mnql...->baimnq...", Cv, x4), d)

    Ddg3 = grad_values(dg3, grid)                   # [k, l, m, q]
    E = (_avg(np.einsum("abkl...,klmq...->bamq...", Cv, Ddg3)
              + np.einsum("abml...,ql...->bamq...", Cv, gm), d)
         + _avg(np.einsum("...,maqb...->bamq...", rv, x4), d)
         - np.einsum("ajmq,jb->bamq", Cb, _avg(
             np.einsum("...,jb...->jb...", rv, gm), d)) / rho_bar)

    Dx4 = grad_values(x4, grid)                     # [k, i, m, q, l]
    F = _avg(np.einsum("abkl...,kimql...->baimq...", Cv, Dx4)
             - np.einsum("abil...,lmq...->baimq...", Cv, x1), d)

    Dg = grad_values(gm, grid)                      # [k, q, l]
    G = _avg(-np.einsum("...,bmq...->bmq...", rv, x1)
             + np.einsum("mbkl...,kql...->bmq...", Cv, Dg), d)
    return D, E, F, G


@dataclass
class EffectiveModel:
    dim: int
    Cbar: np.ndarray        # [i,j,k,l]
    rho_bar: float
    D: np.ndarray           # [b,a,i,m,n,q]
    E: np.ndarray           # [b,a,m,q]
    F: np.ndarray           # [b,a,i,m,q]
    G: np.ndarray           # [b,m,q]
    src5: np.ndarray = None
    src3: np.ndarray = None
    medium_hash: str = ""

    def to_json(self):
        def tjson(a, order):
            return {"dim": self.dim, "order": order,
                    "entries": [float(x) for x in np.asarray(a).ravel()]}
        obj = {"dim": self.dim, "rho_bar": self.rho_bar,
               "medium_hash": self.medium_hash,
               "Cbar": tjson(self.Cbar, 4), "D": tjson(self.D, 6),
               "E": tjson(self.E, 4), "F": tjson(self.F, 5),
               "G": tjson(self.G, 3)}
        if self.src5 is not None:
            obj["src_u1_3rd"] = tjson(self.src5, 5)
        if self.src3 is not None:
            obj["src_u1_1st"] = tjson(self.src3, 3)
        return obj

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def from_json(cls, obj):
        d = int(obj["dim"])

        def arr(key, order):
            return np.array(obj[key]["entries"]).reshape((d,) * order)
        return cls(d, arr("Cbar", 4), float(obj["rho_bar"]), arr("D", 6),
                   arr("E", 4), arr("F", 5), arr("G", 3),
                   src5=arr("src_u1_3rd", 5) if "src_u1_3rd" in obj else None,
                   src3=arr("src_u1_1st", 3) if "src_u1_1st" in obj else None,
                   medium_hash=obj.get("medium_hash", ""))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def build_effective_model(medium, cset):
    Cbar, _ = effective_C(medium.C, cset.field("chi1"))
    rho_bar = effective_rho(medium.rho)
    D, E, F, G = dispersive_tensors(medium.C, medium.rho, cset, Cbar, rho_bar)
    src = u1_source_tensors(medium.C, medium.rho, cset.field("chi1"),
                            cset.field("chi4"), cset.field("gamma"))
    return EffectiveModel(medium.dim, Cbar.entries, rho_bar, D, E, F, G,
                          src5=src["src5"], src3=src["src3"],
                          medium_hash=medium.digest())


def acoustic_matrix(Cbar, k):
    """Gamma_bq(k) = Cbar_abmq k_a k_m."""
    Cb = Cbar.entries if isinstance(Cbar, Tensor4) else np.asarray(Cbar)
    k = np.asarray(k, dtype=float)
    return np.einsum("abmq,a,m->bq", Cb, k, k)


@dataclass
class DispersionSymbol:
    k: np.ndarray
    eps: float
    A: np.ndarray
    B: np.ndarray
    omega2: np.ndarray      # sorted by real part
    vectors: np.ndarray     # columns matched to omega2
    max_imag: float


def dispersion_relation(model, k, eps=1.0, warn_tol=1e-8):
    """Solve A(k) U = w^2 B(k) U for the dispersive symbol at wavevector k
    (radians per cell length). eps=0 gives the quasi-static branches."""
    k = np.asarray(k, dtype=float)
    Gamma = acoustic_matrix(model.Cbar, k)
    Dk4 = np.einsum("baimnq,a,i,m,n->bq", model.D, k, k, k, k)
    Ek2 = np.einsum("bamq,a,m->bq", model.E, k, k)
    Fk3 = np.einsum("baimq,a,i,m->bq", model.F, k, k, k)
    Gk1 = np.einsum("bmq,m->bq", model.G, k)
    A = Gamma - eps ** 2 * Dk4 + 1j * eps * Fk3
    B = model.rho_bar * np.eye(model.dim) - eps ** 2 * Ek2 + 1j * eps * Gk1
    w, V = sla.eig(A, B)
    order = np.argsort(w.real)
    w, V = w[order], V[:, order]
    max_imag = float(np.abs(w.imag).max()) if w.size else 0.0
    scale = max(1.0, float(np.abs(w.real).max()))
    if max_imag > warn_tol * scale:
        warnings.warn("dispersive symbol has complex eigenvalues "
                      "(max |Im| = %.3e)" % max_imag, NonHermitianWarning)
    return DispersionSymbol(k, eps, A, B, w, V, max_imag)


def dispersion_sweep_csv(model, direction, magnitudes, path, eps=1.0):
    """k-sweep along one direction; writes CSV rows (|k|, branch, Re/Im w^2)."""
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k_mag"] + ["k%d" % a for a in range(model.dim)]
                    + ["branch", "omega2_re", "omega2_im"])
        for mag in magnitudes:
            sym = dispersion_relation(model, mag * e, eps=eps)
            for b, w in enumerate(sym.omega2):
                wr.writerow([mag] + list(mag * e) + [b, w.real, w.imag])


def identity_checks(medium, cset, Cbar=None):
    """Max-abs defects of the exact discrete identities tying the corrector
    families together. Everything here follows from integration by parts
    plus the cell equations, so the defects sit at solver-tolerance level
    regardless of how rough the medium is."""
    C, rho, grid = medium.C, medium.rho, medium.grid
    d = grid.dim
    if Cbar is None:
        Cbar, _ = effective_C(C, cset.field("chi1"))
    Cb = Cbar.entries if isinstance(Cbar, Tensor4) else np.asarray(Cbar)
    out = {}
    bbar = cset.arrays["b"].mean(axis=tuple(range(-d, 0)))
    out["b_mean_plus_Cbar"] = float(np.abs(bbar + Cb).max())
    src = u1_source_tensors(C, rho, cset.field("chi1"), cset.field("chi4"),
                            cset.field("gamma"))
    out["reciprocity"] = float(np.abs(src["src3"] - src["src3_alt"]).max())
    out["src5_consistency"] = float(
        np.abs(src["src5"] - src["src5_alt"]).max())
    lhs = grad_chi4_average(C, cset.field("chi4"))
    rhs = grad_chi4_average_by_parts(C, cset.field("chi1"))
    out["tedious_integral"] = float(np.abs(lhs - rhs).max())
    return out
