"""Periodic elliptic solves d_i(C_ijkl d_k u_l) = f_j on the unit cell.

The operator is self-adjoint and negative semidefinite (kernel: rigid
translations), so the solve runs preconditioned CG on its negation. The
preconditioner inverts the constant-coefficient symbol built from the cell
average of C exactly in Fourier space; for a constant medium the solve
therefore converges in one iteration.

Right-hand sides must have zero mean (translation kernel). The mean defect
is measured before solving and the mean is projected off every iteration.
Modes whose every frequency component lies in {0, Nyquist} carry no
discrete derivative information and are projected off with the mean.
"""

import json
import time
from dataclasses import dataclass, asdict

import numpy as np
import scipy.fft as sfft

from .fields import CellField, cell_average, grad_values, div_values


class CompatibilityError(ValueError):
    """Right-hand side has a resolvable mean component."""


class NonConvergence(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolverConfig:
    rel_tol: float = 1e-10
    max_iter: int = 2000
    preconditioner: str = "constant"   # "constant" or "none"
    compat_tol: float = 1e-8


@dataclass
class SolveReport:
    iterations: int
    residual: float          # re-verified, relative to the projected rhs
    compat_defect: float
    converged: bool
    rhs_norm: float
    seconds: float = 0.0

    def to_json_line(self):
        return json.dumps(asdict(self))


def _rms(values):
    return float(np.sqrt(np.mean(np.abs(values) ** 2)))


rms_norm = _rms


def apply_operator_values(Cvals, uvals, grid):
    g = grad_values(uvals, grid)                      # g[k, l, ...]
    sigma = np.einsum("ijkl...,kl...->ij...", Cvals, g)
    return div_values(sigma, grid)


def apply_operator(C, u):
    """A u = d_i(C_ijkl d_k u_l); returns a rank-1 CellField."""
    if C.rank != 4 or u.rank != 1:
        raise ValueError("apply_operator expects rank-4 C and rank-1 u")
    return CellField(u.grid, 1, apply_operator_values(C.values, u.values, C.grid))


def project_null_modes(values, grid):
    """Remove the mean and the pure {0, Nyquist} frequency content."""
    dim = grid.dim
    axes = tuple(range(-dim, 0))
    vh = sfft.fftn(values, axes=axes)
    idx = [0, grid.n // 2]
    for combo in np.ndindex(*(2,) * dim):
        sel = (...,) + tuple(idx[c] for c in combo)
        vh[sel] = 0.0
    out = sfft.ifftn(vh, axes=axes)
    return out.real.copy() if not np.iscomplexobj(values) else out


def pcg(apply_B, apply_M, b, tol, max_iter, mean_axes=None):
    """CG for Hermitian positive semidefinite B with preconditioner M.

    With mean_axes set the iterates keep zero mean over those axes (the
    discrete null space of the periodic operator). Returns (x, iterations,
    relative_residual_estimate, converged).
    """
    normb = _rms(b)
    if normb == 0.0:
        return np.zeros_like(b), 0, 0.0, True
    x = np.zeros_like(b)
    r = b.copy()
    z = apply_M(r)
    p = z.copy()
    rz = np.vdot(r, z).real
    it = 0
    res = 1.0
    for it in range(1, max_iter + 1):
        q = apply_B(p)
        pq = np.vdot(p, q).real
        if pq <= 0.0:
            break  # loss of positivity: bail out and let the caller check
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        if mean_axes is not None:
            r -= r.mean(axis=mean_axes, keepdims=True)
        res = _rms(r) / normb
        if res <= tol:
            return x, it, res, True
        z = apply_M(r)
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it, res, False


class PeriodicSolver:
    """Caches the Fourier preconditioner for one medium so that many
    right-hand sides (the corrector hierarchy) reuse the factorization."""

    def __init__(self, C, config=None):
        if isinstance(C, CellField):
            self.grid = C.grid
            self.Cvals = C.values
        else:
            raise TypeError("C must be a rank-4 CellField")
        self.config = config or SolverConfig()
        self.dim = self.grid.dim
        self._mean_axes = tuple(range(-self.dim, 0))
        self.C0 = cell_average(C)
        self._Kinv = self._build_symbol_inverse() \
            if self.config.preconditioner == "constant" else None

    def _build_symbol_inverse(self):
        d = self.dim
        mesh = self.grid.freq_mesh()
        mvec = np.stack(mesh, axis=-1)                       # (*grid, d)
        K = (2.0 * np.pi) ** 2 * np.einsum(
            "...i,ijkl,...k->...jl", mvec, self.C0, mvec)
        live = np.einsum("...i,...i->...", mvec, mvec) > 0
        Kinv = np.zeros_like(K)
        Kinv[live] = np.linalg.inv(K[live])
        return Kinv

    def _apply_prec(self, r):
        if self._Kinv is None:
            return r - r.mean(axis=self._mean_axes, keepdims=True)
        vh = sfft.fftn(r, axes=self._mean_axes)
        vh = np.moveaxis(vh, 0, -1)
        y = np.einsum("...lj,...j->...l", self._Kinv, vh)
        y = np.moveaxis(y, -1, 0)
        out = sfft.ifftn(y, axes=self._mean_axes)
        return out.real.copy() if not np.iscomplexobj(r) else out

    def _apply_B(self, u):
        return -apply_operator_values(self.Cvals, u, self.grid)

    def solve(self, fvals, rel_tol=None, scale=None):
        """Solve A u = f for the zero-mean u; returns (uvals, SolveReport).

        scale, when given, is the norm of the family this rhs belongs to;
        the compatibility check then ignores roundoff-level means of slices
        that are small against it.
        """
        t0 = time.perf_counter()
        cfg = self.config
        tol = cfg.rel_tol if rel_tol is None else rel_tol
        fnorm = _rms(fvals)
        if fnorm == 0.0:
            rep = SolveReport(0, 0.0, 0.0, True, 0.0, time.perf_counter() - t0)
            return np.zeros_like(fvals), rep
        mean = fvals.mean(axis=self._mean_axes)
        defect = float(np.linalg.norm(mean.ravel())
                       / max(fnorm, scale or 0.0))
        if defect > cfg.compat_tol:
            raise CompatibilityError(
                "rhs mean defect %.3e exceeds %.1e" % (defect, cfg.compat_tol))
        fproj = project_null_modes(fvals, self.grid)
        x, it, _, ok = pcg(self._apply_B, self._apply_prec, -fproj,
                           tol, cfg.max_iter, self._mean_axes)
        # re-verify with a fresh operator application
        res = _rms(apply_operator_values(self.Cvals, x, self.grid) - fproj)
        res /= _rms(fproj)
        rep = SolveReport(it, float(res), defect, bool(ok and res <= 2 * tol),
                          float(fnorm), time.perf_counter() - t0)
        if not ok:
            raise NonConvergence(
                "no convergence in %d iterations (residual %.3e)" % (it, res), rep)
        return x, rep


def solve_periodic(C, f, config=None):
    """One-shot wrapper around PeriodicSolver for a rank-1 rhs CellField."""
    if f.rank != 1:
        raise ValueError("rhs must be a rank-1 CellField")
    solver = PeriodicSolver(C, config)
    u, rep = solver.solve(f.values)
    return CellField(f.grid, 1, u), rep


def operator_spot_checks(Cvals, grid, seed=0, trials=3):
    """Adjointness and energy-sign checks on seeded random zero-mean fields.

    Returns {"adjointness": worst relative |<u,Av> - <Au,v>|,
             "energy": worst negative part of <u, -Au>, normalized}.
    Both should be at roundoff level for any admissible C.
    """
    rng = np.random.default_rng(seed)
    d = grid.dim
    npts = grid.n ** d

    def ip(a, b):
        return float(np.vdot(a, b).real) / npts

    worst_adj = 0.0
    worst_en = 0.0
    for _ in range(trials):
        u = project_null_modes(rng.standard_normal((d,) + grid.shape), grid)
        v = project_null_modes(rng.standard_normal((d,) + grid.shape), grid)
        Au = apply_operator_values(Cvals, u, grid)
        Av = apply_operator_values(Cvals, v, grid)
        scale = max(abs(ip(u, Av)), abs(ip(v, Au)), 1e-300)
        worst_adj = max(worst_adj, abs(ip(u, Av) - ip(v, Au)) / scale)
        en = -ip(u, Au)
        worst_en = max(worst_en, max(0.0, -en) / max(abs(en), 1e-300))
    return {"adjointness": worst_adj, "energy": worst_en}
