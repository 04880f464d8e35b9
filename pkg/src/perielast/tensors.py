"""Rank-4 elasticity tensors and small dense tensor containers.

Index convention: formulas use 1-based indices, storage is 0-based ndarray
axes in the same order. A rank-4 modulus C[i,j,k,l] acts on displacement
gradients through the pairing C[i,j,k,l] g[k,l].
"""

import json
from dataclasses import dataclass, field

import numpy as np


class TensorShapeError(ValueError):
    pass


@dataclass(frozen=True)
class LamePair:
    """Isotropic Lame constants. Strong convexity in dimension d needs
    mu > 0 and d*lam + 2*mu > 0."""

    lam: float
    mu: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and np.isfinite(self.mu)):
            raise ValueError("Lame constants must be finite")
        if self.mu <= 0.0:
            raise ValueError("mu must be positive, got %g" % self.mu)

    def convex_in(self, dim):
        return self.mu > 0.0 and dim * self.lam + 2.0 * self.mu > 0.0


def _as_entries(entries, shape):
    a = np.asarray(entries, dtype=float)
    if a.shape != shape:
        raise TensorShapeError("expected shape %s, got %s" % (shape, a.shape))
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite tensor entries")
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Tensor4:
    """Constant rank-4 tensor with d^4 entries, immutable after construction.

    `symmetric` is a promise set by constructors that guarantee minor and
    major symmetry exactly as stored; check_symmetries measures the defects.
    """

    dim: int
    entries: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        d = self.dim
        object.__setattr__(self, "entries", _as_entries(self.entries, (d,) * 4))

    def __getitem__(self, idx):
        return self.entries[idx]


@dataclass(frozen=True)
class TensorN:
    """Dense order-r tensor over R^d. Complex entries are allowed only at
    order 2 (dispersion symbols); everything else is real."""

    dim: int
    order: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        a = np.asarray(self.entries)
        if np.iscomplexobj(a):
            if self.order != 2:
                raise ValueError("complex entries only allowed at order 2")
            a = a.astype(complex)
        else:
            a = a.astype(float)
        if a.shape != (self.dim,) * self.order:
            raise TensorShapeError(
                "expected shape %s, got %s" % ((self.dim,) * self.order, a.shape))
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite tensor entries")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "entries", a)

    def __getitem__(self, idx):
        return self.entries[idx]


def isotropic_tensor(lame, dim):
    """C[i,j,k,l] = lam d_ij d_kl + mu (d_ik d_jl + d_il d_jk)."""
    if not isinstance(lame, LamePair):
        lame = LamePair(*lame)
    if not lame.convex_in(dim):
        raise ValueError("Lame pair (%g, %g) not strongly convex in d=%d"
                         % (lame.lam, lame.mu, dim))
    d = np.eye(dim)
    C = (lame.lam * np.einsum("ij,kl->ijkl", d, d)
         + lame.mu * (np.einsum("ik,jl->ijkl", d, d)
                      + np.einsum("il,jk->ijkl", d, d)))
    return Tensor4(dim, C, symmetric=True)


def check_symmetries(C):
    """Return {'minor': defect, 'major': defect}, max-abs deviations from
    C_ijkl = C_jikl = C_ijlk and C_ijkl = C_klij."""
    a = C.entries if isinstance(C, Tensor4) else np.asarray(C, dtype=float)
    minor = max(np.abs(a - a.transpose(1, 0, 2, 3)).max(),
                np.abs(a - a.transpose(0, 1, 3, 2)).max())
    major = np.abs(a - a.transpose(2, 3, 0, 1)).max()
    return {"minor": float(minor), "major": float(major)}


def sym_pair_basis(dim):
    """Orthonormal basis of symmetric d x d matrices (Frobenius inner
    product): diagonal units, then off-diagonal pairs scaled by 1/sqrt(2)."""
    basis = []
    for i in range(dim):
        E = np.zeros((dim, dim))
        E[i, i] = 1.0
        basis.append(E)
    for i in range(dim):
        for j in range(i + 1, dim):
            E = np.zeros((dim, dim))
            E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            basis.append(E)
    return np.array(basis)


def pack_sym(C):
    """Represent a (minor+major) symmetric rank-4 tensor as the matrix of the
    map a -> C:a on symmetric matrices, in the orthonormal pair basis."""
    a = C.entries if isinstance(C, Tensor4) else np.asarray(C, dtype=float)
    dim = a.shape[0]
    B = sym_pair_basis(dim)
    return np.einsum("aij,ijkl,bkl->ab", B, a, B)


def convexity_margin(C):
    """Smallest eigenvalue of C acting on symmetric matrices.

    For isotropic C the packed spectrum is {2 mu, d lam + 2 mu}, so the
    margin is min(2 mu, d lam + 2 mu). Requires a symmetric tensor; the
    caller is expected to have checked the defects.
    """
    M = pack_sym(C)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def apply_tensor(C, a):
    """Pairing (C:a)[i,j] = C[i,j,k,l] a[k,l]."""
    Ce = C.entries if isinstance(C, Tensor4) else np.asarray(C, dtype=float)
    a = np.asarray(a, dtype=Ce.dtype if not np.iscomplexobj(a) else complex)
    if a.shape != Ce.shape[:2]:
        raise TensorShapeError("matrix shape %s does not match dim %d"
                               % (a.shape, Ce.shape[0]))
    return np.einsum("ijkl,kl->ij", Ce, a)


def symmetrize_minor_major(T):
    """Project a raw d^4 array onto the minor+major symmetric subspace."""
    a = np.asarray(T, dtype=float)
    a = 0.5 * (a + a.transpose(1, 0, 2, 3))
    a = 0.5 * (a + a.transpose(0, 1, 3, 2))
    a = 0.5 * (a + a.transpose(2, 3, 0, 1))
    return a


def tensor_to_json(t):
    """Serialize Tensor4/TensorN to the flat row-major JSON schema."""
    if isinstance(t, Tensor4):
        dim, order, a = t.dim, 4, t.entries
    elif isinstance(t, TensorN):
        dim, order, a = t.dim, t.order, t.entries
    else:
        raise TypeError("expected Tensor4 or TensorN")
    if np.iscomplexobj(a):
        raise ValueError("JSON schema stores real tensors; complex symbols go to CSV")
    return {"dim": dim, "order": order, "entries": [float(x) for x in a.ravel()]}


def tensor_from_json(obj):
    dim = int(obj["dim"])
    order = int(obj["order"])
    a = np.array(obj["entries"], dtype=float).reshape((dim,) * order)
    if order == 4:
        return Tensor4(dim, a)
    return TensorN(dim, order, a)


def dump_tensor(t, path):
    with open(path, "w") as fh:
        json.dump(tensor_to_json(t), fh, indent=1)


def load_tensor(path):
    with open(path) as fh:
        return tensor_from_json(json.load(fh))
