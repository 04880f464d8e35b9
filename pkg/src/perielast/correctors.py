"""Cell-problem corrector hierarchy for periodic elastic media.

Stored index conventions (component axis marked with *):

  chi1[l*, m, n]        first-order corrector; d_i(C_ijkl d_k chi1[l,m,n])
                        = d_i C_ijmn
  gamma[m, l*]          density corrector; d_i(C_ijkl d_k gamma[m,l])
                        = (rho_bar - rho) delta_jm
  b[i, j, k, l]         b = -C_ijkl + C_ijmn d_m chi1[n,k,l]
                        + d_m(chi1[n,i,l] C_mjkn); <b> = -C_bar
  chi4[m, n, q, p*]     d_a(C_ajbp d_b chi4) = b[m,j,n,q] - <b[m,j,n,q]>
  d5[i, j, n, m, q]     d5 = C_ijnl chi1[l,m,q] - C_ijkl d_k chi4[m,n,q,l]
  hat_chi5[i,n,m,q,l*]  rhs_j = d5[i,j,n,m,q] - <.>
  hat_gamma4[i,k,q,l*]  rhs_j = -C_ijkq + C_ijmn d_m chi1[n,k,q] - <.>
  hat_gamma3[l*,m,n]    rhs_j = -C_mjkl d_k gamma[n,l] + rho chi1[j,m,n] - <.>
  disp_chi5[i,n,m,q,l*] rhs_j = -d_p(C_pjil chi4[m,n,q,l]) + d5[i,j,n,m,q] - <d5>
  disp_gamma3[l*,m,n]   rhs_j = -d_p(C_pjml gamma[n,l]) + (hat_gamma3 rhs)

Every right-hand side is mean-projected before the solve; where a printed
form of these equations is ambiguous about which mean is subtracted, the
mean of the assembled right-hand side itself is used (solvability is then
exact by construction).
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fields import CellField, CellGrid, grad_values, div_values
from .solver import PeriodicSolver, SolveReport, SolverConfig, rms_norm

_FAMILIES = ("chi1", "gamma", "b", "chi4", "d5", "hat_chi5", "hat_gamma4",
             "hat_gamma3", "disp_chi5", "disp_gamma3")


def _vals(x):
    return x.values if isinstance(x, CellField) else np.asarray(x)


def _mean(values, dim):
    return values.mean(axis=tuple(range(-dim, 0)))


def _center(values, dim):
    """Subtract the cell mean of every tensor slot."""
    return values - values.mean(axis=tuple(range(-dim, 0)), keepdims=True)


def _run_solves(solver, items, threads=1, ref=0.0):
    """items: list of (key, rhs_slice). Returns {key: (u, report)} with a
    deterministic result regardless of thread count (solves are independent).

    Slices whose norm is at roundoff level relative to the largest slice in
    the family (symmetry zeros, e.g. isotropic laminates) are not solved;
    they get exact zeros. Their relative mean defect would be meaningless.
    ref is the magnitude of the data generating the family (rms of C, rho,
    b, ...): when even the largest slice sits at roundoff relative to it
    (constant media leave ~eps residue through cell means), the whole family
    is a numerical zero and nothing is solved.
    """
    norms = {key: rms_norm(rhs) for key, rhs in items}
    scale = max(norms.values(), default=0.0)
    dead_family = scale <= 1e-10 * ref
    floor = max(1e-12, solver.config.rel_tol) * scale
    live, out = [], {}
    for key, rhs in items:
        if dead_family or norms[key] <= floor:
            out[key] = (np.zeros_like(rhs),
                        SolveReport(0, 0.0, 0.0, True, norms[key], 0.0))
        else:
            live.append((key, rhs))

    def one(kv):
        key, rhs = kv
        u, rep = solver.solve(rhs, scale=scale)
        return key, u, rep
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for key, u, rep in pool.map(one, live):
                out[key] = (u, rep)
    else:
        for kv in live:
            key, u, rep = one(kv)
            out[key] = (u, rep)
    return out


def solve_chi1(C, config=None, threads=1, solver=None):
    """First-order correctors for all d^2 source pairs (m, n)."""
    Cv, grid = _vals(C), C.grid
    d = grid.dim
    solver = solver or PeriodicSolver(C, config)
    rhs = _center(div_values(Cv, grid), d)          # rhs[j, m, n] = d_i C_ijmn
    items = [((m, n), rhs[:, m, n]) for m in range(d) for n in range(d)]
    got = _run_solves(solver, items, threads, ref=rms_norm(Cv))
    chi1 = np.zeros((d, d, d) + grid.shape)
    reports = {}
    for (m, n), (u, rep) in got.items():
        chi1[:, m, n] = u
        reports[(m, n)] = rep
    return CellField(grid, 3, chi1), reports


def solve_gamma(C, rho, config=None, threads=1, solver=None):
    """Density correctors gamma[m, l] driven by the density fluctuation."""
    Cv, rv, grid = _vals(C), _vals(rho), C.grid
    d = grid.dim
    solver = solver or PeriodicSolver(C, config)
    rho_bar = rv.mean()
    items = []
    for m in range(d):
        f = np.zeros((d,) + grid.shape)
        f[m] = rho_bar - rv
        items.append((m, f))
    got = _run_solves(solver, items, threads, ref=rms_norm(rv))
    gamma = np.zeros((d, d) + grid.shape)
    reports = {}
    for m, (u, rep) in got.items():
        gamma[m] = u
        reports[m] = rep
    return CellField(grid, 2, gamma), reports


def assemble_b(C, chi1):
    """b = -C + C (grad chi1) + div(chi1 C); its cell mean is -C_bar."""
    Cv, x1, grid = _vals(C), _vals(chi1), C.grid
    Dx1 = grad_values(x1, grid)                     # Dx1[m, n, k, l]
    term2 = np.einsum("ijmn...,mnkl...->ijkl...", Cv, Dx1)
    W = np.einsum("mjkn...,nil...->mjkil...", Cv, x1)
    divW = div_values(W, grid)                      # [j, k, i, l]
    term3 = np.transpose(divW, (2, 0, 1, 3) + tuple(range(4, divW.ndim)))
    return CellField(grid, 4, -Cv + term2 + term3)


def solve_chi4(C, b, config=None, threads=1, solver=None):
    """Second-order correctors chi4[m, n, q, p] from the centered b field."""
    Cv, bv, grid = _vals(C), _vals(b), C.grid
    d = grid.dim
    solver = solver or PeriodicSolver(C, config)
    bc = _center(bv, d)
    items = [((m, n, q), bc[m, :, n, q])
             for m in range(d) for n in range(d) for q in range(d)]
    got = _run_solves(solver, items, threads, ref=rms_norm(bv))
    chi4 = np.zeros((d, d, d, d) + grid.shape)
    reports = {}
    for (m, n, q), (u, rep) in got.items():
        chi4[m, n, q] = u                           # component axis lands last
        reports[(m, n, q)] = rep
    return CellField(grid, 4, chi4), reports


def assemble_d(C, chi1, chi4):
    """d5[i,j,n,m,q] = C_ijnl chi1[l,m,q] - C_ijkl d_k chi4[m,n,q,l]."""
    Cv, x1, x4, grid = _vals(C), _vals(chi1), _vals(chi4), C.grid
    Dx4 = grad_values(x4, grid)                     # [k, m, n, q, l]
    t1 = np.einsum("ijnl...,lmq...->ijnmq...", Cv, x1)
    t2 = np.einsum("ijkl...,kmnql...->ijnmq...", Cv, Dx4)
    return CellField(grid, 5, t1 - t2)


def chi4_rhs_reindexed(C, chi1):
    """The second-order rhs written with the divergence term split out:
    d_m(C_mjkn chi1[n,i,q]) + (-C_ijkq + C_ijmn d_m chi1[n,k,q]) - <.>.
    Identical to b - <b> up to roundoff; kept for the cross-check."""
    Cv, x1, grid = _vals(C), _vals(chi1), C.grid
    d = grid.dim
    Dx1 = grad_values(x1, grid)
    W = np.einsum("mjkn...,niq...->mjkiq...", Cv, x1)
    divW = div_values(W, grid)                      # [j, k, i, q]
    reg = _center(-Cv + np.einsum("ijmn...,mnkq...->ijkq...", Cv, Dx1), d)
    rhs = reg + np.transpose(divW, (2, 0, 1, 3) + tuple(range(4, divW.ndim)))
    return CellField(grid, 4, rhs)                  # rhs[i, j, k, q]


def solve_hat_correctors(C, rho, chi1, chi4, gamma, d5, config=None,
                         threads=1, solver=None):
    """Third-order (hat) correctors; returns dict with hat_chi5, hat_gamma4,
    hat_gamma3 and per-family reports."""
    Cv, rv = _vals(C), _vals(rho)
    x1, x4, gm, d5v = _vals(chi1), _vals(chi4), _vals(gamma), _vals(d5)
    grid = C.grid
    d = grid.dim
    solver = solver or PeriodicSolver(C, config)
    ref = rms_norm(Cv) + rms_norm(rv)

    d5c = _center(d5v, d)
    items = [((i, n, m, q), d5c[i, :, n, m, q]) for i in range(d)
             for n in range(d) for m in range(d) for q in range(d)]
    got = _run_solves(solver, items, threads, ref=ref)
    hat_chi5 = np.zeros((d,) * 5 + grid.shape)
    rep5 = {}
    for (i, n, m, q), (u, rep) in got.items():
        hat_chi5[i, n, m, q] = u
        rep5[(i, n, m, q)] = rep

    Dx1 = grad_values(x1, grid)
    rhs4 = _center(-Cv + np.einsum("ijmn...,mnkq...->ijkq...", Cv, Dx1), d)
    items = [((i, k, q), rhs4[i, :, k, q])
             for i in range(d) for k in range(d) for q in range(d)]
    got = _run_solves(solver, items, threads, ref=ref)
    hat_gamma4 = np.zeros((d,) * 4 + grid.shape)
    rep4 = {}
    for (i, k, q), (u, rep) in got.items():
        hat_gamma4[i, k, q] = u
        rep4[(i, k, q)] = rep

    rhs3 = hat_gamma3_rhs(Cv, rv, x1, gm, grid)
    items = [((m, n), rhs3[m, :, n]) for m in range(d) for n in range(d)]
    got = _run_solves(solver, items, threads, ref=ref)
    hat_gamma3 = np.zeros((d, d, d) + grid.shape)
    rep3 = {}
    for (m, n), (u, rep) in got.items():
        hat_gamma3[:, m, n] = u
        rep3[(m, n)] = rep

    return {"hat_chi5": CellField(grid, 5, hat_chi5),
            "hat_gamma4": CellField(grid, 4, hat_gamma4),
            "hat_gamma3": CellField(grid, 3, hat_gamma3),
            "reports": {"hat_chi5": rep5, "hat_gamma4": rep4, "hat_gamma3": rep3}}


def hat_gamma3_rhs(Cv, rv, x1, gm, grid):
    """rhs3[m, j, n] = -C_mjkl d_k gamma[n,l] + rho chi1[j,m,n], centered."""
    d = grid.dim
    Dg = grad_values(gm, grid)                      # [k, n, l]
    rhs3 = (-np.einsum("mjkl...,knl...->mjn...", Cv, Dg)
            + np.einsum("...,jmn...->mjn...", rv, x1))
    return _center(rhs3, d)


def solve_dispersive_correctors(C, rho, chi1, chi4, gamma, d5, config=None,
                                threads=1, solver=None):
    """Fifth- and third-order dispersive correctors. These differ from the
    hat correctors by an extra divergence source carrying the lower-order
    corrector itself."""
    Cv, rv = _vals(C), _vals(rho)
    x1, x4, gm, d5v = _vals(chi1), _vals(chi4), _vals(gamma), _vals(d5)
    grid = C.grid
    d = grid.dim
    solver = solver or PeriodicSolver(C, config)
    ref = rms_norm(Cv) + rms_norm(rv)

    d5c = _center(d5v, d)
    V = np.einsum("pjil...,mnql...->pjimnq...", Cv, x4)
    divV = div_values(V, grid)                      # [j, i, m, n, q]
    items = []
    for i in range(d):
        for n in range(d):
            for m in range(d):
                for q in range(d):
                    f = -divV[:, i, m, n, q] + d5c[i, :, n, m, q]
                    items.append(((i, n, m, q), f))
    got = _run_solves(solver, items, threads, ref=ref)
    disp_chi5 = np.zeros((d,) * 5 + grid.shape)
    rep5 = {}
    for (i, n, m, q), (u, rep) in got.items():
        disp_chi5[i, n, m, q] = u
        rep5[(i, n, m, q)] = rep

    rhs3 = hat_gamma3_rhs(Cv, rv, x1, gm, grid)
    U = np.einsum("pjml...,nl...->pjmn...", Cv, gm)
    divU = div_values(U, grid)                      # [j, m, n]
    items = [((m, n), -divU[:, m, n] + rhs3[m, :, n])
             for m in range(d) for n in range(d)]
    got = _run_solves(solver, items, threads, ref=ref)
    disp_gamma3 = np.zeros((d, d, d) + grid.shape)
    rep3 = {}
    for (m, n), (u, rep) in got.items():
        disp_gamma3[:, m, n] = u
        rep3[(m, n)] = rep

    return {"disp_chi5": CellField(grid, 5, disp_chi5),
            "disp_gamma3": CellField(grid, 3, disp_gamma3),
            "reports": {"disp_chi5": rep5, "disp_gamma3": rep3}}


# ---------------------------------------------------------------------------

@dataclass
class CorrectorSet:
    grid: CellGrid
    medium_hash: str
    arrays: dict                       # family -> ndarray
    reports: dict = field(default_factory=dict)
    rel_tol: float = 1e-10

    def __getattr__(self, name):
        if name in _FAMILIES:
            return self.arrays[name]
        raise AttributeError(name)

    def field(self, name):
        a = self.arrays[name]
        return CellField(self.grid, a.ndim - self.grid.dim, a)

    def max_residual(self, family):
        reps = self.reports.get(family)
        if not reps:
            return None
        return max(r.residual for r in reps.values())

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        manifest = {"dim": self.grid.dim, "n": self.grid.n,
                    "medium_hash": self.medium_hash, "rel_tol": self.rel_tol,
                    "families": {}}
        for name, arr in self.arrays.items():
            fn = name + ".npy"
            np.save(os.path.join(directory, fn), arr)
            entry = {"file": fn, "shape": list(arr.shape)}
            res = self.max_residual(name)
            if res is not None:
                entry["max_residual"] = res
            manifest["families"][name] = entry
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=1)

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = json.load(fh)
        grid = CellGrid(manifest["dim"], manifest["n"])
        arrays = {}
        for name, entry in manifest["families"].items():
            arrays[name] = np.load(os.path.join(directory, entry["file"]))
        return cls(grid, manifest["medium_hash"], arrays,
                   rel_tol=manifest.get("rel_tol", 1e-10))


def estimate_bytes(dim, n):
    """Rough footprint of the stored corrector families plus one transient
    gradient of the largest family."""
    counts = {"chi1": dim ** 3, "gamma": dim ** 2, "b": dim ** 4,
              "chi4": dim ** 4, "d5": dim ** 5, "hat_chi5": dim ** 5,
              "hat_gamma4": dim ** 4, "hat_gamma3": dim ** 3,
              "disp_chi5": dim ** 5, "disp_gamma3": dim ** 3}
    comps = sum(counts.values()) + dim ** 6   # + grad(chi4) style transient
    return comps * n ** dim * 8


def solve_all(medium, config=None, threads=1, hat=True, dispersive=True):
    """Full corrector hierarchy for one medium; returns a CorrectorSet."""
    config = config or SolverConfig()
    grid = medium.grid
    if grid.dim == 3:
        print("corrector storage estimate: %.1f MB (d=3, n=%d)"
              % (estimate_bytes(3, grid.n) / 2 ** 20, grid.n))
    solver = PeriodicSolver(medium.C, config)
    arrays, reports = {}, {}

    chi1, rep = solve_chi1(medium.C, threads=threads, solver=solver)
    arrays["chi1"], reports["chi1"] = chi1.values, rep
    gamma, rep = solve_gamma(medium.C, medium.rho, threads=threads, solver=solver)
    arrays["gamma"], reports["gamma"] = gamma.values, rep
    b = assemble_b(medium.C, chi1)
    arrays["b"] = b.values
    chi4, rep = solve_chi4(medium.C, b, threads=threads, solver=solver)
    arrays["chi4"], reports["chi4"] = chi4.values, rep
    d5 = assemble_d(medium.C, chi1, chi4)
    arrays["d5"] = d5.values

    if hat:
        got = solve_hat_correctors(medium.C, medium.rho, chi1, chi4, gamma, d5,
                                   threads=threads, solver=solver)
        for name in ("hat_chi5", "hat_gamma4", "hat_gamma3"):
            arrays[name] = got[name].values
            reports[name] = got["reports"][name]
    if dispersive:
        got = solve_dispersive_correctors(medium.C, medium.rho, chi1, chi4,
                                          gamma, d5, threads=threads, solver=solver)
        for name in ("disp_chi5", "disp_gamma3"):
            arrays[name] = got[name].values
            reports[name] = got["reports"][name]

    return CorrectorSet(grid, medium.digest(), arrays, reports, config.rel_tol)
