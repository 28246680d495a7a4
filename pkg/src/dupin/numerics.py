"""Uniform tensor grids, node fields, finite-difference jets and sphere fitting.

Conventions used across the package:

* Ambient vectors are plain numpy arrays of shape ``(N,)`` with ``N >= 2``.
* A scalar field on a grid is an array of shape ``grid.shape``; an ambient
  vector field has shape ``grid.shape + (N,)``.
* Masks are boolean arrays of shape ``grid.shape`` with True = valid node.
  Every stencil that touches an invalid node produces an invalid node.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AxisOutOfRange,
    DegenerateCloud,
    GridTooSmall,
    NotSymmetric,
)

__all__ = [
    "TensorGrid",
    "Field",
    "fd_axis",
    "fd_jet",
    "sym_eigen",
    "EigenResult",
    "sphere_fit",
    "SphereFit",
    "AffineFlat",
    "as_ambient",
]


def as_ambient(x) -> np.ndarray:
    """Validate and return an ambient vector as a float array of shape (N,)."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError(f"ambient vector must be 1-d with length >= 2, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("ambient vector has non-finite entries")
    return v


@dataclass(frozen=True)
class TensorGrid:
    """Uniform tensor-product grid: per-axis node counts, spacings and origins."""

    shape: tuple
    spacings: tuple
    origins: tuple

    def __init__(self, shape: Sequence[int], spacings: Sequence[float], origins: Sequence[float] | None = None):
        shape = tuple(int(n) for n in shape)
        spacings = tuple(float(h) for h in spacings)
        if origins is None:
            origins = (0.0,) * len(shape)
        origins = tuple(float(o) for o in origins)
        if not (len(shape) == len(spacings) == len(origins)):
            raise ValueError("shape, spacings and origins must have equal length")
        if any(n < 1 for n in shape):
            raise ValueError("axis node counts must be >= 1")
        if any(h <= 0 for h in spacings):
            raise ValueError("spacings must be positive (grids are uniform by construction)")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacings", spacings)
        object.__setattr__(self, "origins", origins)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis_coords(self, axis: int) -> np.ndarray:
        self._check_axis(axis)
        return self.origins[axis] + self.spacings[axis] * np.arange(self.shape[axis])

    def meshgrid(self) -> list:
        return list(np.meshgrid(*[self.axis_coords(d) for d in range(self.ndim)], indexing="ij"))

    def point(self, idx: Sequence[int]) -> np.ndarray:
        return np.array([self.origins[d] + self.spacings[d] * idx[d] for d in range(self.ndim)])

    def _check_axis(self, axis: int) -> None:
        if not 0 <= axis < self.ndim:
            raise AxisOutOfRange(f"axis {axis} out of range for {self.ndim}-d grid")

    def product(self, other: "TensorGrid") -> "TensorGrid":
        return TensorGrid(self.shape + other.shape, self.spacings + other.spacings, self.origins + other.origins)

    def interior_mask(self, layers: int) -> np.ndarray:
        """Boolean mask selecting nodes at least `layers` away from every boundary."""
        m = np.ones(self.shape, dtype=bool)
        if layers <= 0:
            return m
        for d in range(self.ndim):
            idx = np.arange(self.shape[d])
            keep = (idx >= layers) & (idx < self.shape[d] - layers)
            sl = [None] * self.ndim
            sl[d] = slice(None)
            m &= keep[tuple(sl)]
        return m


@dataclass(frozen=True)
class Field:
    """Scalar or ambient-vector data attached to the nodes of a grid."""

    grid: TensorGrid
    values: np.ndarray
    mask: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[: self.grid.ndim] != self.grid.shape:
            raise ValueError(f"field shape {values.shape} does not match grid shape {self.grid.shape}")
        if values.ndim > self.grid.ndim + 1:
            raise ValueError("fields are scalar or rank-1 ambient-vector valued")
        object.__setattr__(self, "values", values)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != self.grid.shape:
                raise ValueError("mask shape must equal grid shape")
            object.__setattr__(self, "mask", mask)

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.grid.ndim + 1

    def valid(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.grid.shape, dtype=bool)
        return self.mask


def fd_axis(values: np.ndarray, h: float, axis: int, order: int, acc: int = 2) -> np.ndarray:
    """Finite-difference derivative of `order` (1 or 2) along `axis`.

    acc=2 uses the classical central stencils with one-sided second-order
    boundary rows.  acc=4 upgrades interior rows (two layers deep) to
    fourth-order central stencils; the outer rows keep the acc=2 formulas.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    if order not in (1, 2):
        raise ValueError("derivative order must be 1 or 2")
    if acc not in (2, 4):
        raise ValueError("accuracy must be 2 or 4")
    if n < 5:
        raise GridTooSmall(f"need >= 5 nodes along axis {axis}, got {n}")

    out = np.empty_like(values)
    idx_all = np.arange(n)

    def rows(cond):
        return idx_all[cond]

    def put(rowsel, offsets, coeffs, scale):
        sl = [slice(None)] * values.ndim
        sl[axis] = rowsel
        acc_val = None
        for off, c in zip(offsets, coeffs):
            take = [slice(None)] * values.ndim
            take[axis] = rowsel + off
            term = c * values[tuple(take)]
            acc_val = term if acc_val is None else acc_val + term
        out[tuple(sl)] = acc_val * scale

    if order == 1:
        interior = rows((idx_all >= 1) & (idx_all <= n - 2))
        put(interior, (-1, 1), (-0.5, 0.5), 1.0 / h)
        put(np.array([0]), (0, 1, 2), (-1.5, 2.0, -0.5), 1.0 / h)
        put(np.array([n - 1]), (0, -1, -2), (1.5, -2.0, 0.5), 1.0 / h)
        if acc == 4 and n >= 5:
            deep = rows((idx_all >= 2) & (idx_all <= n - 3))
            put(deep, (-2, -1, 1, 2), (1.0 / 12, -8.0 / 12, 8.0 / 12, -1.0 / 12), 1.0 / h)
    else:
        interior = rows((idx_all >= 1) & (idx_all <= n - 2))
        put(interior, (-1, 0, 1), (1.0, -2.0, 1.0), 1.0 / h**2)
        put(np.array([0]), (0, 1, 2, 3), (2.0, -5.0, 4.0, -1.0), 1.0 / h**2)
        put(np.array([n - 1]), (0, -1, -2, -3), (2.0, -5.0, 4.0, -1.0), 1.0 / h**2)
        if acc == 4 and n >= 5:
            deep = rows((idx_all >= 2) & (idx_all <= n - 3))
            put(deep, (-2, -1, 0, 1, 2),
                (-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12), 1.0 / h**2)
    return out


def _erode_mask(mask: np.ndarray, axis: int, width: int) -> np.ndarray:
    """Invalidate every node whose +-width window along axis touches an invalid node."""
    out = mask.copy()
    for off in range(-width, width + 1):
        if off == 0:
            continue
        shifted = np.ones_like(mask)
        n = mask.shape[axis]
        sl_src = [slice(None)] * mask.ndim
        sl_dst = [slice(None)] * mask.ndim
        sl_src[axis] = slice(max(off, 0), n + min(off, 0))
        sl_dst[axis] = slice(max(-off, 0), n + min(-off, 0))
        shifted[tuple(sl_dst)] = mask[tuple(sl_src)]
        out &= shifted
    return out


def fd_jet(field: Field, axis: int, order: int, acc: int = 2) -> Field:
    """Derivative field of the stated order along a grid axis.

    Central differences at interior nodes, one-sided at the boundary; O(h^2)
    for smooth data (O(h^4) on the deep interior when acc=4).  Any stencil
    touching a masked node is masked in the result.
    """
    field.grid._check_axis(axis)
    h = field.grid.spacings[axis]
    deriv = fd_axis(field.values, h, axis, order, acc=acc)
    mask = None
    if field.mask is not None:
        width = 3 if order == 2 else 2
        if acc == 4:
            width = max(width, 2)
        mask = _erode_mask(field.mask, axis, width)
    return Field(field.grid, deriv, mask=mask, name=f"d{order}_{axis}({field.name})")


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray        # descending
    vectors: np.ndarray       # columns, orthonormal, fixed sign convention
    clusters: tuple           # index groups of near-degenerate eigenvalues


def sym_eigen(M: np.ndarray, tol: float = 1e-10, cluster_tol: float | None = None) -> EigenResult:
    """Orthonormal eigen-decomposition of a symmetric matrix.

    Eigenvalues are returned descending; each eigenvector has its first
    entry of significant magnitude made positive so repeated runs agree.
    Near-degenerate eigenvalues (gap below cluster_tol, default
    1e-7 * ||M||) are reported as clusters, never silently split.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(np.abs(M).max(), 1.0)
    if np.abs(M - M.T).max() > tol * scale:
        raise NotSymmetric(f"asymmetry {np.abs(M - M.T).max():.2e} exceeds tol")
    Ms = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(Ms)
    order = np.argsort(w)[::-1]
    w = w[order]
    V = V[:, order]
    for j in range(V.shape[1]):
        col = V[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12 * max(1.0, np.abs(col).max()))[0]
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    if cluster_tol is None:
        cluster_tol = 1e-7 * max(np.abs(w).max(), 1.0)
    clusters = []
    start = 0
    for j in range(1, len(w) + 1):
        if j == len(w) or abs(w[j] - w[j - 1]) > cluster_tol:
            clusters.append(tuple(range(start, j)))
            start = j
    return EigenResult(values=w, vectors=V, clusters=tuple(clusters))


@dataclass(frozen=True)
class SphereFit:
    center: np.ndarray
    radius: float
    residual: float
    sphere_dim: int           # dimension of the fitted round sphere


@dataclass(frozen=True)
class AffineFlat:
    point: np.ndarray
    basis: np.ndarray         # (dim, N), orthonormal rows
    dim: int
    residual: float


def sphere_fit(points, flat_tol: float = 1e-9, span_tol: float = 1e-8):
    """Least-squares algebraic sphere through a point cloud, or its affine span.

    The cloud is first reduced to its minimal affine span (SVD rank with
    relative threshold span_tol); the algebraic fit
    a*|q|^2 + <b,q> + c = 0 runs inside the span.  When the quadratic
    coefficient `a` is below flat_tol (after normalising the cloud to unit
    RMS radius) the span itself is returned as an AffineFlat.  Residual is
    the RMS of | |p-center| - radius | over the input points.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2:
        raise ValueError("points must be a (m, N) array")
    m, N = P.shape
    centroid = P.mean(axis=0)
    Q = P - centroid
    spread = np.sqrt((Q**2).sum(axis=1).mean())
    if spread < 1e-13 * (1.0 + np.linalg.norm(centroid)):
        raise DegenerateCloud("all points coincide")

    U, s, Vt = np.linalg.svd(Q, full_matrices=False)
    rank = int(np.sum(s > span_tol * s[0]))
    basis = Vt[:rank]                       # (rank, N)
    q = Q @ basis.T                         # span coordinates, (m, rank)
    off_span = Q - q @ basis
    off_rms = float(np.sqrt((off_span**2).sum(axis=1).mean()))

    def flat():
        return AffineFlat(point=centroid.copy(), basis=basis.copy(), dim=rank, residual=off_rms)

    if rank < 2:
        # a 0-sphere is two points; treat 1-d spreads as affine lines
        return flat()

    # normalise to unit RMS radius for a scale-free flatness threshold
    qs = q / spread
    A = np.column_stack([(qs**2).sum(axis=1), qs, np.ones(m)])
    _, _, Wt = np.linalg.svd(A, full_matrices=False)
    coef = Wt[-1]
    a, b, c = coef[0], coef[1 : 1 + rank], coef[-1]
    if abs(a) < flat_tol * np.linalg.norm(coef):
        return flat()
    center_span = -b / (2.0 * a) * spread
    r2 = (np.linalg.norm(b) ** 2 - 4.0 * a * c) / (4.0 * a * a) * spread**2
    if r2 <= 0:
        return flat()
    radius = float(np.sqrt(r2))
    center = centroid + center_span @ basis
    dist = np.linalg.norm(P - center, axis=1)
    residual = float(np.sqrt(((dist - radius) ** 2).mean()))
    if rank < N and residual > max(10.0 * off_rms, 1e-8 * spread):
        # the cloud fills a proper affine subspace without fitting any sphere
        # in it: the flat is the exact container, the sphere is not
        return flat()
    return SphereFit(center=center, radius=radius, residual=residual, sphere_dim=rank - 1)
