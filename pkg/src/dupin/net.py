"""Holonomic principal nets and discretized immersions.

A *triple* ``(v, h, V)`` encodes a holonomic submanifold in principal
coordinates: per-class Lame coefficients ``v_m``, rotation coefficients
``h_{jm}`` and normalized shape coefficients ``V_m^r`` with respect to a
parallel orthonormal normal frame.  The class map sends each coordinate
index ``i`` to its class ``i'``.

Sign conventions (fixed here, documented once):

* ``A_xi X = -(d xi / du)_tangent / v`` so that ``<alpha(X,X), xi_r> = V_{i'}^r / v_{i'}``.
* Lame coefficients are carried *signed*: ``dg/du_i = v_{i'} X_i`` with unit
  ``X_i``; a sign flip of ``v_m`` together with ``V_m^r`` and the h-row is a
  gauge change.  Flipping a frame vector ``xi_r`` flips ``V_m^r``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GridMismatch, NotParallel, ZeroLame
from .numerics import TensorGrid, fd_axis

__all__ = [
    "ClassMap",
    "Triple",
    "TripleCallables",
    "ParallelNormalSubbundle",
    "ImmersionSample",
    "PrincipalData",
    "ResidualReport",
    "validate_triple",
    "principal_normals_from_triple",
    "attach_subbundle",
]


@dataclass(frozen=True)
class ClassMap:
    """Map from coordinate indices to eigenbundle classes (0-based)."""

    classes: tuple

    def __init__(self, classes: Sequence[int]):
        classes = tuple(int(c) for c in classes)
        k = max(classes) + 1 if classes else 0
        if sorted(set(classes)) != list(range(k)):
            raise ValueError("class indices must be surjective onto 0..k-1")
        object.__setattr__(self, "classes", classes)

    @property
    def n_coords(self) -> int:
        return len(self.classes)

    @property
    def n_classes(self) -> int:
        return max(self.classes) + 1

    @property
    def multiplicities(self) -> tuple:
        mult = [0] * self.n_classes
        for c in self.classes:
            mult[c] += 1
        return tuple(mult)

    def is_simple(self) -> bool:
        """True when every class contains exactly one coordinate."""
        return self.n_coords == self.n_classes

    @staticmethod
    def simple(n: int) -> "ClassMap":
        return ClassMap(tuple(range(n)))


class TripleCallables:
    """Closed-form provider for a triple: callables of the coordinate point.

    ``eval(pts)`` receives an array of shape ``(..., D)`` and returns the
    dict ``{"v": (k, ...), "h": (D, k, ...), "V": (k, R, ...)}``.
    """

    def __init__(self, eval_fn: Callable[[np.ndarray], dict]):
        self._eval = eval_fn

    def __call__(self, pts: np.ndarray) -> dict:
        return self._eval(np.asarray(pts, dtype=float))


@dataclass
class Triple:
    """The (v, h, V) data of a holonomic net on a tensor grid.

    Shapes: ``v`` is (k, *grid.shape); ``h`` is (D, k, *grid.shape) with
    ``h[j, m] = v_{j'}^{-1} d v_m / d u_j``; ``V`` is (k, R, *grid.shape)
    where R counts parallel normal frame fields.
    """

    grid: TensorGrid
    class_map: ClassMap
    v: np.ndarray
    h: np.ndarray
    V: np.ndarray
    mask: np.ndarray | None = None
    analytic: TripleCallables | None = None

    def __post_init__(self):
        k = self.class_map.n_classes
        D = self.grid.ndim
        self.v = np.asarray(self.v, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.class_map.n_coords != D:
            raise GridMismatch("class map arity does not match grid dimension")
        if self.v.shape != (k,) + self.grid.shape:
            raise ValueError(f"v shape {self.v.shape} != {(k,) + self.grid.shape}")
        if self.h.shape[:2] != (D, k) or self.h.shape[2:] != self.grid.shape:
            raise ValueError(f"h shape {self.h.shape} is not (D, k, *grid)")
        if self.V.shape[0] != k or self.V.shape[2:] != self.grid.shape:
            raise ValueError(f"V shape {self.V.shape} is not (k, R, *grid)")

    @property
    def n_classes(self) -> int:
        return self.class_map.n_classes

    @property
    def n_normals(self) -> int:
        return self.V.shape[1]

    def lame(self) -> np.ndarray:
        """Per-coordinate signed Lame coefficients v_{i'}, shape (D, *grid)."""
        idx = np.array(self.class_map.classes)
        return self.v[idx]

    def valid(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.grid.shape, dtype=bool)
        return self.mask


@dataclass(frozen=True)
class ParallelNormalSubbundle:
    """Indices of parallel frame vectors spanning a flat normal subbundle."""

    indices: tuple
    residual: float = 0.0

    def __init__(self, indices: Sequence[int], residual: float = 0.0):
        object.__setattr__(self, "indices", tuple(int(i) for i in indices))
        object.__setattr__(self, "residual", float(residual))

    @property
    def rank(self) -> int:
        return len(self.indices)


@dataclass
class ImmersionSample:
    """Discretized immersion: positions, unit tangents, parallel normals, forms.

    ``tangents`` has shape (D, *grid, N) and ``normals`` (R, *grid, N); both
    optional for position-only patches fed to the finite-difference oracle.
    ``sff`` caches <alpha(X_i, X_i), xi_r> as an array (D, R, *grid).
    """

    grid: TensorGrid
    positions: np.ndarray
    tangents: np.ndarray | None = None
    normals: np.ndarray | None = None
    lame: np.ndarray | None = None
    sff: np.ndarray | None = None
    triple: Triple | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.shape[:-1] != self.grid.shape:
            raise ValueError("positions must have shape (*grid, N)")

    @property
    def ambient_dim(self) -> int:
        return self.positions.shape[-1]

    @property
    def n_normals(self) -> int:
        return 0 if self.normals is None else self.normals.shape[0]

    def valid(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.grid.shape, dtype=bool)
        return self.mask

    def has_frames(self) -> bool:
        return self.tangents is not None and self.normals is not None

    def frame_residuals(self, tol: float = 1e-8) -> dict:
        """Orthonormality and dg = v X consistency checks (fd-based)."""
        out = {}
        if not self.has_frames():
            return out
        D = self.grid.ndim
        X = self.tangents
        xi = self.normals
        gram = 0.0
        for i in range(D):
            for j in range(i, D):
                dot = (X[i] * X[j]).sum(-1)
                gram = max(gram, np.abs(dot - (1.0 if i == j else 0.0)).max())
            for r in range(self.n_normals):
                gram = max(gram, np.abs((X[i] * xi[r]).sum(-1)).max())
        for r in range(self.n_normals):
            for s in range(r, self.n_normals):
                dot = (xi[r] * xi[s]).sum(-1)
                gram = max(gram, np.abs(dot - (1.0 if r == s else 0.0)).max())
        out["gram"] = float(gram)
        if self.lame is not None:
            interior = self.grid.interior_mask(2)
            err = 0.0
            for i in range(D):
                dg = fd_axis(self.positions, self.grid.spacings[i], i, 1, acc=4)
                res = dg - self.lame[i][..., None] * X[i]
                err = max(err, np.abs(res[interior]).max() if interior.any() else 0.0)
            out["dg_vs_vX"] = float(err)
        return out


@dataclass
class PrincipalData:
    """Principal normals and eigenbundle data of a proper submanifold patch.

    ``eta`` holds the k principal normals as ambient fields (k, *grid, N);
    ``assignment`` maps tangent-frame/coordinate indices to classes when the
    sample has principal coordinates; ``projectors`` (optional) holds the
    chart-coordinate eigenbundle projectors (k, n, n, *grid) from the
    independent extraction path.
    """

    eta: np.ndarray
    multiplicities: tuple
    assignment: tuple | None = None
    projectors: np.ndarray | None = None
    mask: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.eta.shape[0]


@dataclass
class ResidualReport:
    """Per-equation max residuals with a pass/fail verdict."""

    residuals: dict
    tol: float
    masked_fraction: float = 0.0

    @property
    def max_residual(self) -> float:
        vals = [v for v in self.residuals.values() if np.isfinite(v)]
        return float(max(vals)) if vals else 0.0

    @property
    def passed(self) -> bool:
        return self.max_residual < self.tol

    def rows(self) -> list:
        """CSV-ready rows: (equation id, max residual, masked fraction)."""
        return [(k, float(v), self.masked_fraction) for k, v in self.residuals.items()]

    def __str__(self):
        body = ", ".join(f"{k}={v:.3e}" for k, v in self.residuals.items())
        return f"ResidualReport({body}; tol={self.tol:g}, pass={self.passed})"


def _triple_derivative(values: np.ndarray, grid: TensorGrid, axis: int) -> np.ndarray:
    return fd_axis(values, grid.spacings[axis], axis, 1, acc=4)


def validate_triple(t: Triple, tol: float = 1e-6, interior_layers: int = 2) -> ResidualReport:
    """Residuals of the first-order net system for a candidate triple.

    Checks, by finite differences on the component fields:
      (i)   d v_m / d u_j        = h_{jm} v_{j'}
      (ii)  d h_{ij'}/d u_i + d h_{ji'}/d u_j
               + sum_{l not in {i, j}} h_{li'} h_{lj'}
               + sum_r V_{i'}^r V_{j'}^r = 0          (i' != j')
      (iii) d h_{im} / d u_j     = h_{ij'} h_{jm}     (i != j, m != i')
      (iv)  d V_m^r / d u_j      = h_{jm} V_{j'}^r

    The Gauss-type sum in (ii) runs over all other coordinates, including
    those sharing a class with i or j; dropping the same-class terms breaks
    the identity on nets with multiplicities >= 2 (checked numerically on a
    rank-2-fiber transform, residual 7e-2 vs 2e-9).
    """
    g = t.grid
    D, k, R = g.ndim, t.n_classes, t.n_normals
    cls = t.class_map.classes
    interior = g.interior_mask(interior_layers)
    valid = t.valid() & interior
    if not valid.any():
        valid = t.valid()
    frac = 1.0 - t.valid().mean()

    def mx(arr):
        return float(np.abs(arr[valid]).max()) if valid.any() else float("nan")

    res = {}
    r1 = 0.0
    for j in range(D):
        for m in range(k):
            lhs = _triple_derivative(t.v[m], g, j)
            r1 = max(r1, mx(lhs - t.h[j, m] * t.v[cls[j]]))
    res["I.i"] = r1

    r2 = 0.0
    for i in range(D):
        for j in range(i + 1, D):
            if cls[i] == cls[j]:
                continue
            term = _triple_derivative(t.h[i, cls[j]], g, i) + _triple_derivative(t.h[j, cls[i]], g, j)
            for l in range(D):
                if l in (i, j):
                    continue
                term = term + t.h[l, cls[i]] * t.h[l, cls[j]]
            term = term + (t.V[cls[i]] * t.V[cls[j]]).sum(axis=0)
            r2 = max(r2, mx(term))
    res["I.ii"] = r2

    r3 = 0.0
    for i in range(D):
        for j in range(D):
            if i == j:
                continue
            for m in range(k):
                if m == cls[i]:
                    continue
                lhs = _triple_derivative(t.h[i, m], g, j)
                r3 = max(r3, mx(lhs - t.h[i, cls[j]] * t.h[j, m]))
    res["I.iii"] = r3

    r4 = 0.0
    for j in range(D):
        for m in range(k):
            for r in range(R):
                lhs = _triple_derivative(t.V[m, r], g, j)
                r4 = max(r4, mx(lhs - t.h[j, m] * t.V[cls[j], r]))
    res["I.iv"] = r4

    return ResidualReport(residuals=res, tol=tol, masked_fraction=float(frac))


def principal_normals_from_triple(t: Triple, s: ImmersionSample, zero_tol: float = 1e-12) -> PrincipalData:
    """Principal normals eta_m = v_m^{-1} sum_r V_m^r xi_r per class."""
    if s.triple is not None and s.triple is not t:
        if s.triple.grid.shape != t.grid.shape:
            raise GridMismatch("triple and sample grids differ")
    if s.normals is None:
        raise ValueError("sample carries no normal frame")
    if s.grid.shape != t.grid.shape:
        raise GridMismatch("triple and sample grids differ")
    k = t.n_classes
    vmin = np.abs(t.v).min()
    if vmin < zero_tol:
        raise ZeroLame(f"some Lame coefficient vanishes (min |v| = {vmin:.2e})")
    eta = np.zeros((k,) + t.grid.shape + (s.ambient_dim,))
    for m in range(k):
        coeff = t.V[m] / t.v[m]  # (R, *grid)
        for r in range(t.n_normals):
            eta[m] += coeff[r][..., None] * s.normals[r]
    return PrincipalData(eta=eta, multiplicities=t.class_map.multiplicities,
                         assignment=t.class_map.classes, mask=t.mask)


def attach_subbundle(s: ImmersionSample, indices: Sequence[int], tol: float = 1e-6) -> ParallelNormalSubbundle:
    """Select parallel frame vectors spanning a flat normal subbundle.

    The parallelism residual is max over axes i, selected r and other frame
    indices t of |<d xi_r / du_i, xi_t>| / |v_i| at interior nodes; frames
    failing the check raise NotParallel.
    """
    if s.normals is None:
        raise ValueError("sample carries no normal frame")
    indices = tuple(int(i) for i in indices)
    for r in indices:
        if not 0 <= r < s.n_normals:
            raise ValueError(f"frame index {r} out of range")
    interior = s.grid.interior_mask(2) & s.valid()
    if not interior.any():
        interior = s.valid()
    worst = 0.0
    for r in indices:
        for i in range(s.grid.ndim):
            d = fd_axis(s.normals[r], s.grid.spacings[i], i, 1, acc=4)
            scale = np.abs(s.lame[i][interior]).max() if s.lame is not None else 1.0
            for tix in range(s.n_normals):
                if tix == r:
                    continue
                comp = (d * s.normals[tix]).sum(-1)
                worst = max(worst, np.abs(comp[interior]).max() / max(scale, 1e-30))
    if worst > tol:
        raise NotParallel(f"normal-connection residual {worst:.3e} exceeds tol {tol:g}")
    return ParallelNormalSubbundle(indices=indices, residual=float(worst))
