"""Symmetric 3x3 tensor algebra and isotropic elasticity.

Tensors are handled as numpy arrays of shape ``(..., 3, 3)`` so that every
routine works on a single tensor and on a batch of quadrature points alike.
:class:`SymTensor3` is a small convenience wrapper for scalar use.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SQRT2 = np.sqrt(2.0)

# Mandel ordering used for 6x6 operators: xx, yy, zz, yz, xz, xy
MANDEL_INDEX = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
_MANDEL_FACTOR = np.array([1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2])

# relative eigenvalue spread below which the Jacobi fallback is used
DEGENERATE_GAP = 1e-8


@dataclass(frozen=True)
class SymTensor3:
    xx: float = 0.0
    yy: float = 0.0
    zz: float = 0.0
    xy: float = 0.0
    yz: float = 0.0
    xz: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([[self.xx, self.xy, self.xz],
                         [self.xy, self.yy, self.yz],
                         [self.xz, self.yz, self.zz]], dtype=float)

    @classmethod
    def from_array(cls, a) -> "SymTensor3":
        a = np.asarray(a, dtype=float)
        return cls(a[0, 0], a[1, 1], a[2, 2], 0.5 * (a[0, 1] + a[1, 0]),
                   0.5 * (a[1, 2] + a[2, 1]), 0.5 * (a[0, 2] + a[2, 0]))


def as_tensor_array(t) -> np.ndarray:
    """Return ``t`` as a float array of shape ``(..., 3, 3)``."""
    if isinstance(t, SymTensor3):
        return t.as_array()
    a = np.asarray(t, dtype=float)
    if a.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) tensor array, got shape {a.shape}")
    return a


def to_mandel(t: np.ndarray) -> np.ndarray:
    t = as_tensor_array(t)
    out = np.stack([t[..., i, j] for i, j in MANDEL_INDEX], axis=-1)
    return out * _MANDEL_FACTOR


def from_mandel(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float) / _MANDEL_FACTOR
    out = np.zeros(m.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(MANDEL_INDEX):
        out[..., i, j] = m[..., k]
        out[..., j, i] = m[..., k]
    return out


def trace(t: np.ndarray) -> np.ndarray:
    return np.trace(t, axis1=-2, axis2=-1)


def ddot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ij->...", a, b)


def deviator(t: np.ndarray) -> np.ndarray:
    return t - trace(t)[..., None, None] / 3.0 * np.eye(3)


class Spectral3(NamedTuple):
    """Eigenvalues sorted descending with matching eigenvectors/projections."""

    values: np.ndarray        # (..., 3)
    vectors: np.ndarray       # (..., 3, 3), column k is the k-th eigenvector
    projections: np.ndarray   # (..., 3, 3, 3), projections[..., k, :, :]

    def reconstruct(self) -> np.ndarray:
        return np.einsum("...k,...kij->...ij", self.values, self.projections)


def _det3(a):
    return (a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
            - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
            + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]))


def _cardano_values(a):
    """Trigonometric solution of the characteristic cubic, descending."""
    m = trace(a) / 3.0
    b = a - m[:, None, None] * np.eye(3)
    p = np.sqrt(np.einsum("nij,nij->n", b, b) / 6.0)
    safe = np.where(p > 0.0, p, 1.0)
    r = np.clip(_det3(b / safe[:, None, None]) / 2.0, -1.0, 1.0)
    ang = np.arccos(r) / 3.0
    e1 = m + 2.0 * p * np.cos(ang)
    e3 = m + 2.0 * p * np.cos(ang + 2.0 * np.pi / 3.0)
    e2 = 3.0 * m - e1 - e3
    return e1, e2, e3


def _null_vector(a, lam):
    """Unit vector spanning the (numerical) kernel of ``a - lam I``."""
    b = a - lam[:, None, None] * np.eye(3)
    r0, r1, r2 = b[:, 0], b[:, 1], b[:, 2]
    cands = np.stack([np.cross(r0, r1), np.cross(r0, r2), np.cross(r1, r2)], axis=1)
    norms = np.linalg.norm(cands, axis=-1)
    best = np.argmax(norms, axis=1)
    idx = np.arange(len(a))
    v = cands[idx, best]
    return v / norms[idx, best][:, None]


def _complement_basis(n):
    """Two unit vectors completing ``n`` to an orthonormal basis."""
    helper = np.zeros_like(n)
    k = np.argmin(np.abs(n), axis=1)
    helper[np.arange(len(n)), k] = 1.0
    u = np.cross(n, helper)
    u /= np.linalg.norm(u, axis=1)[:, None]
    w = np.cross(n, u)
    return u, w


def _eig_closed_form(a):
    e1, e2, e3 = _cardano_values(a)
    # the eigenvector of the best separated extreme eigenvalue is well conditioned
    first = (e1 - e2) >= (e2 - e3)
    lam = np.where(first, e1, e3)
    n = _null_vector(a, lam)
    u, w = _complement_basis(n)
    au = np.einsum("nij,nj->ni", a, u)
    aw = np.einsum("nij,nj->ni", a, w)
    m11 = np.einsum("ni,ni->n", u, au)
    m22 = np.einsum("ni,ni->n", w, aw)
    m12 = np.einsum("ni,ni->n", u, aw)
    theta = 0.5 * np.arctan2(2.0 * m12, m11 - m22)
    c, s = np.cos(theta), np.sin(theta)
    va = c[:, None] * u + s[:, None] * w
    vb = -s[:, None] * u + c[:, None] * w
    vecs = np.stack([n, va, vb], axis=-1)
    vals = np.einsum("nik,nik->nk", vecs, np.matmul(a, vecs))
    return vals, vecs


def _eig_jacobi(a, sweeps=12):
    """Cyclic Jacobi rotations, vectorised over the batch."""
    a = a.copy()
    v = np.broadcast_to(np.eye(3), a.shape).copy()
    for _ in range(sweeps):
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[:, p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            app, aqq = a[:, p, p], a[:, q, q]
            theta = np.where(active, 0.5 * np.arctan2(2.0 * apq, aqq - app), 0.0)
            c, s = np.cos(theta), np.sin(theta)
            rot = np.broadcast_to(np.eye(3), a.shape).copy()
            rot[:, p, p] = c
            rot[:, q, q] = c
            rot[:, p, q] = s
            rot[:, q, p] = -s
            a = np.einsum("nki,nkl,nlj->nij", rot, a, rot)
            v = np.einsum("nik,nkj->nij", v, rot)
    return np.einsum("nii->ni", a).copy(), v


def _eig_plane(a):
    """Exact decomposition when ``xz = yz = 0``: a 2x2 block plus ``zz``."""
    half = 0.5 * (a[:, 0, 0] - a[:, 1, 1])
    mid = 0.5 * (a[:, 0, 0] + a[:, 1, 1])
    rad = np.hypot(half, a[:, 0, 1])
    theta = 0.5 * np.arctan2(a[:, 0, 1], half)
    c, s = np.cos(theta), np.sin(theta)
    vals = np.stack([mid + rad, mid - rad, a[:, 2, 2]], axis=1)
    vecs = np.zeros((len(a), 3, 3))
    vecs[:, 0, 0], vecs[:, 1, 0] = c, s
    vecs[:, 0, 1], vecs[:, 1, 1] = -s, c
    vecs[:, 2, 2] = 1.0
    return vals, vecs


def spectral_decompose(t) -> Spectral3:
    """Eigen-decomposition of symmetric 3x3 tensors, eigenvalues descending.

    Tensors without out-of-plane shear are split into an in-plane 2x2 block
    and ``zz``.  Otherwise the trigonometric closed form is used, and tensors
    whose eigenvalue spread is below ``DEGENERATE_GAP`` times the tensor norm
    go through Jacobi sweeps.
    """
    a = as_tensor_array(t)
    shape = a.shape[:-2]
    a = 0.5 * (a + np.swapaxes(a, -1, -2)).reshape(-1, 3, 3)
    vals = np.empty((len(a), 3))
    vecs = np.empty((len(a), 3, 3))
    if len(a):
        # plane-strain tensors (zero out-of-plane shear) decouple exactly
        plane = (a[:, 0, 2] == 0.0) & (a[:, 1, 2] == 0.0)
        if np.any(plane):
            vals[plane], vecs[plane] = _eig_plane(a[plane])
        rest = np.flatnonzero(~plane)
        # work on unit-sized tensors so that tiny or huge entries cannot
        # under- or overflow in the cross products
        mag = np.abs(a).max(axis=(1, 2))
        mag = np.where(mag > 0.0, mag, 1.0)
        a = a / mag[:, None, None]
        e1, _, e3 = _cardano_values(a[rest])
        scale = np.linalg.norm(a[rest], axis=(1, 2))
        close = (e1 - e3) <= DEGENERATE_GAP * scale
        degenerate = np.zeros(len(a), dtype=bool)
        degenerate[rest[close]] = True
        good = np.zeros(len(a), dtype=bool)
        good[rest[~close]] = True
        if np.any(good):
            vals[good], vecs[good] = _eig_closed_form(a[good])
        if np.any(degenerate):
            vals[degenerate], vecs[degenerate] = _eig_jacobi(a[degenerate])
        vals[~plane] *= mag[~plane, None]
        order = np.argsort(-vals, axis=1, kind="stable")
        vals = np.take_along_axis(vals, order, axis=1)
        vecs = np.take_along_axis(vecs, order[:, None, :], axis=2)
    proj = np.einsum("nik,njk->nkij", vecs, vecs)
    return Spectral3(vals.reshape(shape + (3,)), vecs.reshape(shape + (3, 3)),
                     proj.reshape(shape + (3, 3, 3)))


@dataclass(frozen=True)
class Elasticity:
    """Isotropic linear elasticity from Young's modulus (kPa) and Poisson's ratio."""

    E: float
    nu: float

    def __post_init__(self):
        if not self.E > 0.0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {self.nu}")

    @property
    def K(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def G(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lame(self) -> float:
        return (3.0 * self.K - 2.0 * self.G) / 3.0


def elastic_apply(el: Elasticity, eps):
    """Stress ``lame * tr(eps) I + 2 G eps``."""
    scalar = isinstance(eps, SymTensor3)
    e = as_tensor_array(eps)
    sig = el.lame * trace(e)[..., None, None] * np.eye(3) + 2.0 * el.G * e
    return SymTensor3.from_array(sig) if scalar else sig


def compliance_energy(el: Elasticity, sig):
    """Complementary energy density ``0.5 * C^-1 sig : sig``."""
    s = as_tensor_array(sig)
    p = trace(s) / 3.0
    dev = deviator(s)
    return 0.5 * p**2 / el.K + ddot(dev, dev) / (4.0 * el.G)


def elastic_matrix_mandel(el: Elasticity) -> np.ndarray:
    """6x6 elasticity operator in Mandel notation."""
    c = 2.0 * el.G * np.eye(6)
    c[:3, :3] += el.lame
    return c
