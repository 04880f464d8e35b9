"""Periodic unit-cell grids, tensor-valued fields and medium construction.

Fields live on the torus [0,1)^d sampled at n^d nodes y = idx/n. A rank-r
CellField stores values with the r tensor axes first and the d grid axes
last, so pointwise contractions are einsum calls with a trailing ellipsis.

Derivatives are Fourier multipliers i*2*pi*m with integer frequencies m.
The Nyquist row (m = -n/2 for even n) is zeroed: a real field carries no
usable derivative information there and keeping it would put spurious
vectors in the kernel of the discrete elliptic operators.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .tensors import LamePair, Tensor4, isotropic_tensor, symmetrize_minor_major


@dataclass(frozen=True)
class CellGrid:
    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        n = self.n
        if n < 8 or (n & (n - 1)) != 0:
            raise ValueError("n must be a power of two >= 8, got %d" % n)

    @property
    def spacing(self):
        return 1.0 / self.n

    @property
    def shape(self):
        return (self.n,) * self.dim

    def axes(self):
        """1-D coordinate array, shared by all axes."""
        return np.arange(self.n) / self.n

    def coords(self):
        """d arrays of shape n^d with the node coordinates."""
        return np.meshgrid(*(self.axes(),) * self.dim, indexing="ij")

    def freq(self):
        """Integer frequencies per axis with the Nyquist entry zeroed."""
        m = np.fft.fftfreq(self.n) * self.n
        m[self.n // 2] = 0.0
        return m

    def freq_mesh(self):
        return np.meshgrid(*(self.freq(),) * self.dim, indexing="ij")

    def freq_full(self):
        """Integer frequencies with the signed Nyquist entry kept.

        The zeroed variant is right for derivatives of real periodic fields
        but disastrous for the shifted Bloch operator: a zeroed Nyquist sheet
        carries the multiplier k alone, so every acoustic eigenvalue would
        reappear 2^d times at the bottom of the spectrum. Keeping -n/2 pushes
        those sheets up to O((pi n)^2) where they belong.
        """
        return np.fft.fftfreq(self.n) * self.n

    def freq_full_mesh(self):
        return np.meshgrid(*(self.freq_full(),) * self.dim, indexing="ij")


@dataclass
class CellField:
    """values.shape == (dim,)*rank + (n,)*dim."""

    grid: CellGrid
    rank: int
    values: np.ndarray

    def __post_init__(self):
        want = (self.grid.dim,) * self.rank + self.grid.shape
        v = np.asarray(self.values)
        if v.shape != want:
            raise ValueError("field shape %s, expected %s" % (v.shape, want))
        self.values = v

    @property
    def grid_axes(self):
        return tuple(range(-self.grid.dim, 0))


def cell_average(f):
    """Mean over the grid axes; returns a scalar or a rank-r array."""
    if isinstance(f, CellField):
        return f.values.mean(axis=f.grid_axes)
    raise TypeError("cell_average expects a CellField")


def _mean_over_grid(values, dim):
    return values.mean(axis=tuple(range(-dim, 0)))


def _fft_axes(dim):
    return tuple(range(-dim, 0))


def grad_values(values, grid):
    """Spectral gradient of raw values; new derivative axis first.

    Real input gives real output, complex stays complex (Bloch solves).
    """
    dim = grid.dim
    axes = _fft_axes(dim)
    vh = sfft.fftn(values, axes=axes)
    m = grid.freq()
    out = np.empty((dim,) + values.shape, dtype=complex)
    for k in range(dim):
        shape = [1] * vh.ndim
        shape[axes[k]] = grid.n
        mult = (2j * np.pi) * m.reshape(shape)
        out[k] = sfft.ifftn(mult * vh, axes=axes)
    if not np.iscomplexobj(values):
        return out.real.copy()
    return out


def div_values(values, grid):
    """Spectral divergence contracting the first tensor axis: out = d_i v[i,...]."""
    dim = grid.dim
    if values.shape[0] != dim:
        raise ValueError("first axis must have length dim for a divergence")
    axes = _fft_axes(dim)
    vh = sfft.fftn(values, axes=axes)
    m = grid.freq()
    acc = None
    for k in range(dim):
        shape = [1] * (values.ndim - 1)
        shape[values.ndim - 1 - dim + k] = grid.n
        term = ((2j * np.pi) * m.reshape(shape)) * vh[k]
        acc = term if acc is None else acc + term
    out = sfft.ifftn(acc, axes=axes)
    return out.real.copy() if not np.iscomplexobj(values) else out


def spectral_gradient(f):
    return CellField(f.grid, f.rank + 1, grad_values(f.values, f.grid))


def spectral_divergence(f):
    if f.rank < 1:
        raise ValueError("divergence needs rank >= 1")
    return CellField(f.grid, f.rank - 1, div_values(f.values, f.grid))


def smooth_values(values, grid, width):
    """Periodic Gaussian mollifier, width in cells (std dev = width*h)."""
    if width is None or width == 0:
        return values
    sigma = width * grid.spacing
    axes = _fft_axes(grid.dim)
    mesh = grid.freq_mesh()
    m2 = sum(m * m for m in mesh)
    kernel = np.exp(-2.0 * np.pi ** 2 * sigma ** 2 * m2)
    vh = sfft.fftn(values, axes=axes) * kernel
    out = sfft.ifftn(vh, axes=axes)
    return out.real.copy() if not np.iscomplexobj(values) else out


# ---------------------------------------------------------------------------
# Medium specifications

@dataclass(frozen=True)
class ConstantMedium:
    lame: LamePair
    rho: float = 1.0
    tensor: Tensor4 = None  # overrides lame when given


@dataclass(frozen=True)
class LaminateMedium:
    """Layered medium varying along one axis. Phase p occupies the slab of
    width fractions[p]; boundaries sit midway between samples (node j belongs
    to the phase containing (j + 1/2)/n)."""

    fractions: tuple
    phases: tuple          # LamePair per phase
    densities: tuple
    axis: int = 0
    smoothing_width: float = 0.0


@dataclass(frozen=True)
class VoxelMedium:
    """Phase-id raster (period-1 tile); n must be a multiple of the tile."""

    phase_ids: np.ndarray
    phases: tuple
    densities: tuple
    smoothing_width: float = 0.0


@dataclass(frozen=True)
class SmoothMedium:
    """Trigonometric-polynomial moduli around an isotropic base.

    lam_terms / mu_terms / rho_terms: sequences of (amplitude, freq_vector,
    phase) adding amp*cos(2 pi m.y + phase). aniso_terms: sequences of
    ((i,j,k,l), amplitude, freq_vector, phase) adding the minor+major
    symmetrized unit tensor at that slot times the same kind of wave.
    """

    base: LamePair
    rho0: float = 1.0
    lam_terms: tuple = ()
    mu_terms: tuple = ()
    rho_terms: tuple = ()
    aniso_terms: tuple = ()


@dataclass
class Medium:
    grid: CellGrid
    C: CellField       # rank 4
    rho: CellField     # rank 0
    min_margin: float

    @property
    def dim(self):
        return self.grid.dim

    def digest(self):
        h = hashlib.sha256()
        h.update(np.array([self.grid.dim, self.grid.n]).tobytes())
        h.update(np.ascontiguousarray(self.C.values).tobytes())
        h.update(np.ascontiguousarray(self.rho.values).tobytes())
        return h.hexdigest()


def _wave(grid, amp, mvec, phase):
    coords = grid.coords()
    arg = 2.0 * np.pi * sum(m * y for m, y in zip(mvec, coords)) + phase
    return amp * np.cos(arg)


def pointwise_margin(Cvals, dim):
    """Per-node convexity margin, vectorized over the grid."""
    from .tensors import sym_pair_basis
    B = sym_pair_basis(dim)
    flat = Cvals.reshape((dim,) * 4 + (-1,))
    M = np.einsum("aij,ijklx,bkl->xab", B, flat, B)
    M = 0.5 * (M + M.transpose(0, 2, 1))
    return np.linalg.eigvalsh(M)[:, 0]


def build_medium(spec, grid, margin_floor=1e-12):
    """Sample a MediumSpec on the grid. Raises if the pointwise convexity
    margin or the density ever drops to margin_floor."""
    d, shape = grid.dim, grid.shape

    if isinstance(spec, ConstantMedium):
        C0 = spec.tensor if spec.tensor is not None else isotropic_tensor(spec.lame, d)
        Cvals = np.broadcast_to(
            C0.entries.reshape((d,) * 4 + (1,) * d), (d,) * 4 + shape).copy()
        rvals = np.full(shape, float(spec.rho))

    elif isinstance(spec, LaminateMedium):
        fr = np.asarray(spec.fractions, dtype=float)
        if abs(fr.sum() - 1.0) > 1e-12 or np.any(fr <= 0):
            raise ValueError("fractions must be positive and sum to 1")
        edges = np.concatenate([[0.0], np.cumsum(fr)])
        t = (np.arange(grid.n) + 0.5) / grid.n
        pid = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(fr) - 1)
        Cline = np.stack([isotropic_tensor(p, d).entries for p in spec.phases])[pid]
        rline = np.asarray(spec.densities, dtype=float)[pid]
        # broadcast the 1-D profile along the remaining axes
        ax = spec.axis
        Cvals = np.moveaxis(Cline, 0, -1).reshape((d,) * 4 + tuple(
            grid.n if a == ax else 1 for a in range(d)))
        Cvals = np.broadcast_to(Cvals, (d,) * 4 + shape).copy()
        rvals = np.broadcast_to(rline.reshape(tuple(
            grid.n if a == ax else 1 for a in range(d))), shape).copy()
        if spec.smoothing_width:
            Cvals = smooth_values(Cvals, grid, spec.smoothing_width)
            rvals = smooth_values(rvals, grid, spec.smoothing_width)

    elif isinstance(spec, VoxelMedium):
        ids = np.asarray(spec.phase_ids)
        if ids.ndim != d:
            raise ValueError("phase raster must be %d-dimensional" % d)
        reps = [grid.n // s for s in ids.shape]
        if any(r * s != grid.n for r, s in zip(reps, ids.shape)):
            raise ValueError("grid n must be a multiple of the raster size")
        big = ids
        for a, r in enumerate(reps):
            big = np.repeat(big, r, axis=a)
        Cphase = np.stack([isotropic_tensor(p, d).entries for p in spec.phases])
        Cvals = np.moveaxis(Cphase[big.ravel()], 0, -1).reshape((d,) * 4 + shape)
        rvals = np.asarray(spec.densities, dtype=float)[big]
        if spec.smoothing_width:
            Cvals = smooth_values(Cvals, grid, spec.smoothing_width)
            rvals = smooth_values(rvals, grid, spec.smoothing_width)

    elif isinstance(spec, SmoothMedium):
        lam = np.full(shape, spec.base.lam)
        mu = np.full(shape, spec.base.mu)
        for amp, mvec, ph in spec.lam_terms:
            lam = lam + _wave(grid, amp, mvec, ph)
        for amp, mvec, ph in spec.mu_terms:
            mu = mu + _wave(grid, amp, mvec, ph)
        eye = np.eye(d)
        Cvals = (np.einsum("ij,kl,...->ijkl...", eye, eye, lam)
                 + np.einsum("ik,jl,...->ijkl...", eye, eye, mu)
                 + np.einsum("il,jk,...->ijkl...", eye, eye, mu))
        for slot, amp, mvec, ph in spec.aniso_terms:
            T = np.zeros((d,) * 4)
            T[tuple(slot)] = 1.0
            T = symmetrize_minor_major(T)
            Cvals = Cvals + np.einsum("ijkl,...->ijkl...", T, _wave(grid, amp, mvec, ph))
        rvals = np.full(shape, float(spec.rho0))
        for amp, mvec, ph in spec.rho_terms:
            rvals = rvals + _wave(grid, amp, mvec, ph)

    else:
        raise TypeError("unknown medium spec %r" % type(spec).__name__)

    margins = pointwise_margin(Cvals, d)
    mmin = float(margins.min())
    if mmin <= margin_floor:
        raise ValueError("medium loses pointwise convexity (min margin %g)" % mmin)
    if rvals.min() <= 0:
        raise ValueError("density must stay positive (min %g)" % rvals.min())

    return Medium(grid, CellField(grid, 4, Cvals), CellField(grid, 0, rvals), mmin)


# ---------------------------------------------------------------------------
# External formats

def read_voxel_file(path):
    """Voxel raster file: one ASCII header line 'voxel <dim> <n> <phases>'
    followed by n^dim raw uint8 phase ids in C order."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != "voxel":
            raise ValueError("bad voxel header %r" % header)
        dim, n, nphase = (int(x) for x in header[1:])
        data = np.frombuffer(fh.read(n ** dim), dtype=np.uint8)
    if data.size != n ** dim:
        raise ValueError("voxel payload truncated")
    ids = data.reshape((n,) * dim).copy()
    if ids.max() >= nphase:
        raise ValueError("phase id %d out of range" % ids.max())
    return ids


def write_voxel_file(path, ids, nphase=None):
    ids = np.asarray(ids, dtype=np.uint8)
    nphase = int(ids.max()) + 1 if nphase is None else nphase
    with open(path, "wb") as fh:
        fh.write(("voxel %d %d %d\n" % (ids.ndim, ids.shape[0], nphase)).encode())
        fh.write(np.ascontiguousarray(ids).tobytes())


def _lame_from_table(tab):
    return LamePair(float(tab["lam"]), float(tab["mu"]))


def medium_from_config(tab, base_dir="."):
    """Build a MediumSpec from a parsed config table (nested dicts)."""
    import os
    kind = tab.get("kind")
    if kind == "constant":
        return ConstantMedium(_lame_from_table(tab), float(tab.get("rho", 1.0)))
    if kind == "laminate":
        phases = tuple(_lame_from_table(p) for p in tab["phases"])
        dens = tuple(float(p.get("rho", 1.0)) for p in tab["phases"])
        return LaminateMedium(tuple(float(f) for f in tab["fractions"]),
                              phases, dens, axis=int(tab.get("axis", 0)),
                              smoothing_width=float(tab.get("smoothing_width", 0.0)))
    if kind == "voxel":
        ids = read_voxel_file(os.path.join(base_dir, tab["file"]))
        phases = tuple(_lame_from_table(p) for p in tab["phases"])
        dens = tuple(float(p.get("rho", 1.0)) for p in tab["phases"])
        return VoxelMedium(ids, phases, dens,
                           smoothing_width=float(tab.get("smoothing_width", 0.0)))
    if kind == "smooth":
        def terms(key):
            return tuple((float(t["amp"]), tuple(int(m) for m in t["freq"]),
                          float(t.get("phase", 0.0))) for t in tab.get(key, ()))
        aniso = tuple((tuple(int(i) for i in t["slot"]), float(t["amp"]),
                       tuple(int(m) for m in t["freq"]), float(t.get("phase", 0.0)))
                      for t in tab.get("aniso_terms", ()))
        return SmoothMedium(_lame_from_table(tab), float(tab.get("rho", 1.0)),
                            lam_terms=terms("lam_terms"), mu_terms=terms("mu_terms"),
                            rho_terms=terms("rho_terms"), aniso_terms=aniso)
    raise ValueError("unknown medium kind %r" % kind)
