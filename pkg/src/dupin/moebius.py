"""Conformal/parallel transformation catalog and the cylinder-type constructors.

The catalog acts on holonomic samples (positions, frames, triple) in closed
form; solution data is pushed forward alongside so transform-then-solve and
solve-then-transform commute.  The sign conventions follow net.py; the
pushforward of the tensor data B under inversion is

    B_m  <-  B_m + 2 v_m (phi - <F, f>) / |f|^2,

obtained by differentiating F^i = F - 2(<F,f> - phi) f / |f|^2 along the
coordinate lines.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    AxisIncidence,
    DegenerateOffset,
    DimensionMismatch,
    FocalDegeneracy,
    NotOnQuadric,
    ThroughOrigin,
    UnsupportedGrid,
)
from .integrable import RibaucourSolution
from .net import ClassMap, ImmersionSample, ParallelNormalSubbundle, Triple
from .numerics import TensorGrid
from .ribaucour import GeneralW

__all__ = [
    "Translate",
    "Orthogonal",
    "Homothety",
    "Inversion",
    "ParallelTranslate",
    "apply_ltransform",
    "apply_points",
    "pushforward_w",
    "pushforward_ltrivial",
    "LTrivialSpec",
    "detect_ltrivial",
    "epsilon_of",
    "EpsilonResult",
    "generalized_cylinder",
    "generalized_tube",
    "generalized_rotation",
    "StereographicMap",
    "stereographic",
    "stereographic_points",
    "umbilic_normal_form",
    "random_catalog_transform",
]


# ---------------------------------------------------------------------------
# the catalog


@dataclass(frozen=True)
class Translate:
    u: np.ndarray

    def __init__(self, u):
        object.__setattr__(self, "u", np.asarray(u, dtype=float))


@dataclass(frozen=True)
class Orthogonal:
    O: np.ndarray

    def __init__(self, O, tol: float = 1e-12):
        O = np.asarray(O, dtype=float)
        if np.abs(O @ O.T - np.eye(O.shape[0])).max() > tol:
            raise ValueError("matrix is not orthogonal")
        object.__setattr__(self, "O", O)


@dataclass(frozen=True)
class Homothety:
    k: float

    def __init__(self, k):
        if k == 0:
            raise ValueError("homothety ratio must be nonzero")
        object.__setattr__(self, "k", float(k))


@dataclass(frozen=True)
class Inversion:
    """Inversion about the origin with unit radius: f -> f / |f|^2."""


@dataclass(frozen=True)
class ParallelTranslate:
    """Translation by the parallel normal field xi = sum_r c_r xi_r."""

    coeffs: np.ndarray

    def __init__(self, coeffs):
        object.__setattr__(self, "coeffs", np.asarray(coeffs, dtype=float))


def _p_inv(f: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """The inversion frame map P_i Z = Z - 2 <f, Z> f / |f|^2."""
    Q = (f**2).sum(-1)
    return Z - 2.0 * ((f * Z).sum(-1) / Q)[..., None] * f


def apply_points(T, positions: np.ndarray, xi: np.ndarray | None = None,
                 origin_tol: float = 1e-12) -> np.ndarray:
    """Pointwise action of a catalog transform on a position array.

    ParallelTranslate needs the translated field xi (same leading shape).
    """
    if isinstance(T, Translate):
        return positions + T.u
    if isinstance(T, Orthogonal):
        return positions @ T.O.T
    if isinstance(T, Homothety):
        return T.k * positions
    if isinstance(T, Inversion):
        Q = (positions**2).sum(-1)
        if Q.min() < origin_tol:
            raise ThroughOrigin("a node passes through the inversion center")
        return positions / Q[..., None]
    if isinstance(T, ParallelTranslate):
        if xi is None:
            raise ValueError("ParallelTranslate on raw points needs the xi field")
        return positions + xi
    raise TypeError(f"unknown transform {T!r}")


def apply_ltransform(s: ImmersionSample, T, tol: float = 1e-9) -> ImmersionSample:
    """Catalog transform of a holonomic sample with frames and triple.

    Closed forms:  translations/orthogonal maps act trivially; homotheties
    scale v; the inversion maps frames by P_i, v by v/|f|^2 and V by
    V + 2 v <f, xi_r> / |f|^2; parallel translation shifts v by -sum c_r V^r
    and leaves h, V unchanged.
    """
    t = s.triple
    g = s.grid
    D = g.ndim
    pos = s.positions
    if isinstance(T, Translate):
        return replace_sample(s, positions=pos + T.u)
    if isinstance(T, Orthogonal):
        O = T.O
        return replace_sample(
            s,
            positions=pos @ O.T,
            tangents=None if s.tangents is None else s.tangents @ O.T,
            normals=None if s.normals is None else s.normals @ O.T,
        )
    if isinstance(T, Homothety):
        k = T.k
        newt = None
        if t is not None:
            newt = Triple(t.grid, t.class_map, k * t.v, t.h.copy(), t.V.copy(), mask=t.mask)
        return replace_sample(
            s,
            positions=k * pos,
            lame=None if s.lame is None else k * s.lame,
            sff=None if s.sff is None else s.sff / k,
            triple=newt,
        )
    if isinstance(T, Inversion):
        Q = (pos**2).sum(-1)
        if Q.min() < tol:
            raise ThroughOrigin("sample passes through the inversion center")
        newpos = pos / Q[..., None]
        tangents = None if s.tangents is None else np.stack([_p_inv(pos, s.tangents[i]) for i in range(D)])
        normals = None if s.normals is None else np.stack([_p_inv(pos, s.normals[r]) for r in range(s.n_normals)])
        newt = None
        lame = None if s.lame is None else s.lame / Q
        sff = None
        if t is not None:
            v = t.v / Q
            cls = t.class_map.classes
            h = np.empty_like(t.h)
            V = np.empty_like(t.V)
            for m in range(t.n_classes):
                for r in range(t.n_normals):
                    V[m, r] = t.V[m, r] + 2.0 * t.v[m] * (pos * s.normals[r]).sum(-1) / Q
                for j in range(D):
                    h[j, m] = t.h[j, m] - 2.0 * t.v[m] * (pos * s.tangents[j]).sum(-1) / Q
            newt = Triple(t.grid, t.class_map, v, h, V, mask=t.mask)
            sff = np.stack([V[cls[i]] / v[cls[i]] for i in range(D)])
        return replace_sample(s, positions=newpos, tangents=tangents, normals=normals,
                              lame=lame, sff=sff, triple=newt)
    if isinstance(T, ParallelTranslate):
        if s.normals is None or t is None:
            raise ValueError("parallel translation needs a sample with normal frame and triple")
        c = T.coeffs
        if c.shape != (s.n_normals,):
            raise DimensionMismatch("need one coefficient per frame vector")
        xi = np.einsum("r,r...k->...k", c, s.normals)
        v = t.v - np.einsum("r,mr...->m...", c, t.V)
        if np.abs(v).min() < tol:
            raise DegenerateOffset("I - A_xi degenerates on the patch")
        cls = t.class_map.classes
        newt = Triple(t.grid, t.class_map, v, t.h.copy(), t.V.copy(), mask=t.mask)
        sff = np.stack([t.V[cls[i]] / v[cls[i]] for i in range(D)])
        lame = None if s.lame is None else np.stack([v[cls[i]] for i in range(D)])
        return replace_sample(s, positions=pos + xi, lame=lame, sff=sff, triple=newt)
    raise TypeError(f"unknown transform {T!r}")


def replace_sample(s: ImmersionSample, **kw) -> ImmersionSample:
    data = dict(grid=s.grid, positions=s.positions, tangents=s.tangents, normals=s.normals,
                lame=s.lame, sff=s.sff, triple=s.triple, mask=s.mask)
    data.update({k: v for k, v in kw.items() if v is not None})
    return ImmersionSample(**data)


def pushforward_w(w, T, s: ImmersionSample):
    """Solution data on T(sample) such that transform and solve commute.

    Rules (phi, gamma, beta, and the tensor data):
      translation/orthogonal: unchanged;
      homothety k: phi -> k phi (B unchanged);
      inversion: phi -> phi/|f|^2, gamma_j -= 2 phi <f, X_j>/|f|^2,
                 beta_r -= 2 phi <f, xi_r>/|f|^2,
                 B_m += 2 v_m (phi - <F, f>)/|f|^2;
      parallel translation by xi: phi += <F, xi> (rest unchanged).
    """
    dupin = isinstance(w, RibaucourSolution)
    t = s.triple
    if isinstance(T, (Translate, Orthogonal)):
        return w
    if isinstance(T, Homothety):
        if dupin:
            return replace(w, phi=T.k * w.phi)
        return GeneralW(phi=T.k * w.phi, gamma=w.gamma.copy(), beta=w.beta.copy(),
                        rho=w.rho / T.k)
    if isinstance(T, Inversion):
        pos = s.positions
        Q = (pos**2).sum(-1)
        fX = np.stack([(pos * s.tangents[i]).sum(-1) for i in range(s.grid.ndim)])
        fxi = np.stack([(pos * s.normals[r]).sum(-1) for r in range(s.n_normals)])
        Ff = (w.gamma * fX).sum(0) + (w.beta * fxi).sum(0)
        phi = w.phi / Q
        gamma = w.gamma - 2.0 * w.phi * fX / Q
        beta = w.beta - 2.0 * w.phi * fxi / Q
        if dupin:
            B = w.B + 2.0 * t.v * ((w.phi - Ff) / Q)
            return replace(w, phi=phi, gamma=gamma, beta=beta, B=B)
        rho = Q * w.rho - 2.0 * (Ff - w.phi)
        return GeneralW(phi=phi, gamma=gamma, beta=beta, rho=rho)
    if isinstance(T, ParallelTranslate):
        c = T.coeffs
        Fxi = (w.beta * c.reshape((-1,) + (1,) * s.grid.ndim)).sum(0)
        phi = w.phi + Fxi
        if dupin:
            return replace(w, phi=phi)
        cls = t.class_map.classes
        kap = np.stack([np.einsum("r,r...->...", c, t.V[cls[i]]) / t.v[cls[i]]
                        for i in range(s.grid.ndim)])
        return GeneralW(phi=phi, gamma=w.gamma.copy(), beta=w.beta.copy(),
                        rho=w.rho / (1.0 - kap))
    raise TypeError(f"unknown transform {T!r}")


# ---------------------------------------------------------------------------
# L-trivial data


@dataclass(frozen=True)
class LTrivialSpec:
    """The (a, v0, delta, c) data of an L-trivial solution.

    delta is stored by its constant coefficients against the parallel frame.
    """

    a: float
    v0: np.ndarray
    delta: np.ndarray
    c: float
    exact: bool = False

    def discriminant(self) -> float:
        return self.a * self.c - float(self.v0 @ self.v0) + float(self.delta @ self.delta)


@dataclass(frozen=True)
class EpsilonResult:
    value: int | None
    ambiguous: bool
    discriminant: float


def epsilon_of(spec: LTrivialSpec, tol: float = 1e-9) -> EpsilonResult:
    """Class sign epsilon = sign(a c - |v0|^2 + |delta|^2).

    Values inside the tolerance band are AMBIGUOUS unless the data is exact
    (constructed, not fitted) and the discriminant is exactly zero.
    """
    d = spec.discriminant()
    scale = max(abs(spec.a * spec.c), float(spec.v0 @ spec.v0), float(spec.delta @ spec.delta), 1e-300)
    if d == 0.0 and spec.exact:
        return EpsilonResult(0, False, d)
    if abs(d) < tol * scale:
        return EpsilonResult(None, True, d)
    return EpsilonResult(1 if d > 0 else -1, False, d)


def pushforward_ltrivial(spec: LTrivialSpec, T, s: ImmersionSample) -> LTrivialSpec:
    """Update (a, v0, delta, c) under a catalog transform.

    Translation: (a, v0 - a u, delta, c - 2<u, v0> + a |u|^2);
    orthogonal: v0 rotates; homothety k: (a/k, v0, delta, c k);
    inversion: (c, v0, delta, a); parallel translation by xi = sum c_r xi_r:
    (a, v0, delta - a c_r, c + 2 <delta, xi> - a |xi|^2).
    """
    a, v0, d, c = spec.a, spec.v0, spec.delta, spec.c
    if isinstance(T, Translate):
        u = T.u
        return LTrivialSpec(a, v0 - a * u, d.copy(), c - 2.0 * float(u @ v0) + a * float(u @ u),
                            exact=spec.exact)
    if isinstance(T, Orthogonal):
        return LTrivialSpec(a, T.O @ v0, d.copy(), c, exact=spec.exact)
    if isinstance(T, Homothety):
        return LTrivialSpec(a / T.k, v0.copy(), d.copy(), c * T.k, exact=spec.exact)
    if isinstance(T, Inversion):
        return LTrivialSpec(c, v0.copy(), d.copy(), a, exact=spec.exact)
    if isinstance(T, ParallelTranslate):
        cc = T.coeffs
        return LTrivialSpec(a, v0.copy(), d - a * cc,
                            c + 2.0 * float(d @ cc) - a * float(cc @ cc), exact=spec.exact)
    raise TypeError(f"unknown transform {T!r}")


def detect_ltrivial(s: ImmersionSample, w, tol: float = 1e-8,
                    substantial: bool | None = None):
    """Least-squares detection of L-trivial data F = a f + v0 + delta.

    Returns (LTrivialSpec | None, report).  The fit runs over valid nodes
    with delta constrained to the parallel frame span; acceptance needs both
    the F-fit and the constancy of 2 phi - a |f|^2 - 2 <f, v0> below tol
    (relative).  The decomposition is unique only on conformally substantial
    patches; by default that is checked through the verification module's
    conformal-codimension estimate and reported, never raised.
    """
    pos = s.positions
    N = s.ambient_dim
    R = s.n_normals
    valid = s.valid()
    if substantial is None:
        try:
            from .verify import sf_report

            substantial = bool(sf_report(s).conformal_codim == N - s.grid.ndim)
        except Exception:
            substantial = None
    f = pos[valid]                                  # (m, N)
    F = (np.einsum("i...,i...k->...k", w.gamma, s.tangents)
         + np.einsum("r...,r...k->...k", w.beta, s.normals))[valid]
    xi = np.stack([s.normals[r][valid] for r in range(R)], axis=-1)  # (m, N, R)
    m = f.shape[0]
    A = np.zeros((m * N, 1 + N + R))
    A[:, 0] = f.reshape(-1)
    for col in range(N):
        e = np.zeros(N)
        e[col] = 1.0
        A[:, 1 + col] = np.tile(e, m)
    A[:, 1 + N:] = xi.reshape(m * N, R)
    b = F.reshape(-1)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    a = float(coef[0])
    v0 = coef[1:1 + N]
    d = coef[1 + N:]
    fit_res = np.abs(A @ coef - b).max() / max(np.abs(b).max(), 1e-30)
    cvals = 2.0 * w.phi[valid] - a * (f**2).sum(-1) - 2.0 * (f * v0).sum(-1)
    c = float(cvals.mean())
    scale = max(np.abs(w.phi).max(), 1.0)
    c_res = np.abs(cvals - c).max() / scale
    report = {"fit_residual": float(fit_res), "c_residual": float(c_res),
              "substantial": substantial}
    if substantial is None:
        report["substantial"] = "unchecked"
    elif not substantial:
        report["note"] = "patch not conformally substantial: decomposition not unique"
    if fit_res < tol and c_res < tol:
        return LTrivialSpec(a, v0, d, c), report
    return None, report


# ---------------------------------------------------------------------------
# cylinder-type constructors


def generalized_cylinder(h: ImmersionSample, sub: ParallelNormalSubbundle, eps: int,
                         fiber: TensorGrid | list, quadric_tol: float = 1e-8) -> ImmersionSample:
    """Generalized cylinder over h determined by the parallel subbundle.

    eps = 0: gamma -> h + gamma (flat exponential map); full holonomic data.
    eps = +-1: rational fiber chart of the model-quadric cylinder,
        gamma -> h - (1 + eps^2)(eps h + gamma) / (eps + |gamma|^2),
    positions only (the sample lives on the quadric of R^{N}).
    fiber is a TensorGrid over the subbundle coefficients, or a list of
    per-axis coefficient arrays (monotonicity not required).
    """
    if h.normals is None:
        raise ValueError("base sample needs a parallel normal frame")
    s_rank = sub.rank
    if isinstance(fiber, TensorGrid):
        if fiber.ndim != s_rank:
            raise DimensionMismatch("fiber grid rank must match subbundle rank")
        coeff_axes = [fiber.axis_coords(l) for l in range(s_rank)]
        fgrid = fiber
    else:
        coeff_axes = [np.asarray(c, dtype=float) for c in fiber]
        fgrid = TensorGrid(tuple(len(c) for c in coeff_axes), (1.0,) * s_rank)
    grid = h.grid.product(fgrid)
    Db = h.grid.ndim
    shape = grid.shape
    N = h.ambient_dim
    pos_b = h.positions.reshape(h.grid.shape + (1,) * s_rank + (N,))
    gam = np.zeros(shape + (N,))
    coeffs = []
    for l, r in enumerate(sub.indices):
        cshape = [1] * grid.ndim
        cshape[Db + l] = len(coeff_axes[l])
        cl = coeff_axes[l].reshape(cshape)
        coeffs.append(cl)
        gam = gam + cl[..., None] * h.normals[r].reshape(h.grid.shape + (1,) * s_rank + (N,))

    if eps == 0:
        positions = np.broadcast_to(pos_b, shape + (N,)) + gam
        t = h.triple
        sample = ImmersionSample(grid, positions)
        if t is not None and h.tangents is not None:
            k = t.n_classes
            cls = t.class_map.classes
            Rn = t.n_normals
            out_r = [r for r in range(Rn) if r not in sub.indices]
            v = np.empty((k + 1,) + shape)
            for m in range(k):
                acc = t.v[m].reshape(h.grid.shape + (1,) * s_rank) + np.zeros(shape)
                for l, r in enumerate(sub.indices):
                    acc = acc - coeffs[l] * t.V[m, r].reshape(h.grid.shape + (1,) * s_rank)
                v[m] = acc
            v[k] = 1.0
            hh = np.zeros((grid.ndim, k + 1) + shape)
            # rotation coefficients: d_j v_m = h_{jm} v_{j'} still holds with the
            # shifted v on base axes; fiber rows are -V_m^{n_l}
            for j in range(Db):
                for m in range(k):
                    dv = (t.h[j, m].reshape(h.grid.shape + (1,) * s_rank)
                          * t.v[cls[j]].reshape(h.grid.shape + (1,) * s_rank))
                    for l, r in enumerate(sub.indices):
                        dv = dv - coeffs[l] * (t.h[j, m] * t.V[cls[j], r]).reshape(h.grid.shape + (1,) * s_rank)
                    hh[j, m] = dv / v[cls[j]]
            for l, r in enumerate(sub.indices):
                for m in range(k):
                    hh[Db + l, m] = -t.V[m, r].reshape(h.grid.shape + (1,) * s_rank) / 1.0
            Vn = np.zeros((k + 1, len(out_r)) + shape)
            for m in range(k):
                for jr, r in enumerate(out_r):
                    Vn[m, jr] = t.V[m, r].reshape(h.grid.shape + (1,) * s_rank) + np.zeros(shape)
            cmap = ClassMap(tuple(cls) + (k,) * s_rank)
            newt = Triple(grid, cmap, v, hh, Vn)
            tangents = np.concatenate([
                np.broadcast_to(h.tangents.reshape((Db,) + h.grid.shape + (1,) * s_rank + (N,)), (Db,) + shape + (N,)).copy(),
                np.stack([np.broadcast_to(h.normals[r].reshape(h.grid.shape + (1,) * s_rank + (N,)), shape + (N,)).copy()
                          for r in sub.indices]) if s_rank else np.zeros((0,) + shape + (N,)),
            ])
            normals = (np.stack([np.broadcast_to(h.normals[r].reshape(h.grid.shape + (1,) * s_rank + (N,)), shape + (N,)).copy()
                                 for r in out_r]) if out_r else np.zeros((0,) + shape + (N,)))
            lame = np.stack([v[cmap.classes[i]] for i in range(grid.ndim)])
            sff = np.stack([Vn[cmap.classes[i]] / v[cmap.classes[i]] for i in range(grid.ndim)])
            sample = ImmersionSample(grid, positions, tangents=tangents, normals=normals,
                                     lame=lame, sff=sff, triple=newt)
        return sample

    if eps not in (1, -1):
        raise ValueError("eps must be -1, 0 or +1")
    Qh = _quadric_form(h.positions, eps)
    if np.abs(Qh - eps).max() > quadric_tol:
        raise NotOnQuadric(f"base does not lie on the eps={eps} quadric "
                           f"(max defect {np.abs(Qh - eps).max():.2e})")
    Qg = (gam**2).sum(-1)
    denom = eps + Qg
    positions = np.broadcast_to(pos_b, shape + (N,)) - (1 + eps * eps) * (
        (eps * np.broadcast_to(pos_b, shape + (N,)) + gam) / denom[..., None])
    mask = np.abs(denom) > 1e-10
    return ImmersionSample(grid, positions, mask=None if mask.all() else mask)


def _quadric_form(x: np.ndarray, eps: int) -> np.ndarray:
    """<x, x> in the model metric: Lorentzian first coordinate when eps=-1."""
    Q = (x**2).sum(-1)
    if eps == -1:
        Q = Q - 2.0 * x[..., 0] ** 2
    return Q


def generalized_tube(g: ImmersionSample, sub: ParallelNormalSubbundle, a: float,
                     n_angle: int = 21, angle_range=(0.0, 2.0 * np.pi),
                     angles: np.ndarray | None = None) -> ImmersionSample:
    """Tube of radius a over g along the unit circle of a rank-2 subbundle.

    psi(u, theta) = g(u) + a (cos theta xi_1 + sin theta xi_2); carries the
    full holonomic data.  Nodes inside the focal radius are masked.
    """
    if a == 0:
        raise ValueError("tube radius must be nonzero")
    if sub.rank != 2:
        raise UnsupportedGrid("tube fibers are discretized for rank-2 subbundles")
    t = g.triple
    if t is None or g.tangents is None:
        raise ValueError("tube base needs full holonomic data")
    r1, r2 = sub.indices
    if angles is None:
        fgrid = TensorGrid((n_angle,), ((angle_range[1] - angle_range[0]) / (n_angle - 1),),
                           (angle_range[0],))
        th = fgrid.axis_coords(0)
    else:
        th = np.asarray(angles, dtype=float)
        fgrid = TensorGrid((th.size,), (1.0,))
    grid = g.grid.product(fgrid)
    shape = grid.shape
    N = g.ambient_dim
    Db = g.grid.ndim
    k = t.n_classes
    cls = t.class_map.classes

    def lb(arr):  # lift base scalar
        return arr.reshape(arr.shape + (1,))

    def lbv(arr):  # lift base vector
        return arr.reshape(arr.shape[:-1] + (1, N))

    sth = np.sin(th).reshape((1,) * Db + (-1,))
    cth = np.cos(th).reshape((1,) * Db + (-1,))
    nu_dir = cth[..., None] * lbv(g.normals[r1]) + sth[..., None] * lbv(g.normals[r2])
    tdir = -sth[..., None] * lbv(g.normals[r1]) + cth[..., None] * lbv(g.normals[r2])
    positions = lbv(g.positions) + a * nu_dir

    W = np.empty((k,) + shape)
    for m in range(k):
        W[m] = cth * lb(t.V[m, r1]) + sth * lb(t.V[m, r2])
    v = np.empty((k + 1,) + shape)
    for m in range(k):
        v[m] = lb(t.v[m]) - a * W[m]
    v[k] = a
    focal = np.abs(v[:k]).min(axis=0) > 1e-9
    out_r = [r for r in range(t.n_normals) if r not in sub.indices]
    Vn = np.zeros((k + 1, 1 + len(out_r)) + shape)
    for m in range(k):
        Vn[m, 0] = W[m]
        for jr, r in enumerate(out_r):
            Vn[m, 1 + jr] = lb(t.V[m, r]) + np.zeros(shape)
    Vn[k, 0] = -1.0
    hh = np.zeros((grid.ndim, k + 1) + shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        for j in range(Db):
            for m in range(k):
                dv = lb(t.h[j, m] * t.v[cls[j]]) - a * (cth * lb(t.h[j, m] * t.V[cls[j], r1])
                                                        + sth * lb(t.h[j, m] * t.V[cls[j], r2]))
                hh[j, m] = dv / v[cls[j]]
        for m in range(k):
            hh[Db, m] = (a * (sth * lb(t.V[m, r1]) - cth * lb(t.V[m, r2]))) / v[k]
        cmap = ClassMap(tuple(cls) + (k,))
        newt = Triple(grid, cmap, v, hh, Vn, mask=None if focal.all() else focal)
        tangents = np.concatenate([
            np.broadcast_to(g.tangents.reshape((Db,) + g.grid.shape + (1, N)), (Db,) + shape + (N,)).copy(),
            tdir[None],
        ])
        normals = np.concatenate([
            nu_dir[None],
            np.stack([np.broadcast_to(lbv(g.normals[r]), shape + (N,)).copy() for r in out_r])
            if out_r else np.zeros((0,) + shape + (N,)),
        ])
        lame = np.stack([v[cmap.classes[i]] for i in range(grid.ndim)])
        sff = np.stack([Vn[cmap.classes[i]] / v[cmap.classes[i]] for i in range(grid.ndim)])
    out = ImmersionSample(grid, positions, tangents=tangents, normals=normals,
                          lame=lame, sff=sff, triple=newt,
                          mask=None if focal.all() else focal)
    if not focal.all() and focal.mean() < 0.5:
        raise FocalDegeneracy("tube radius reaches the focal set on most of the patch")
    return out


def generalized_rotation(g: ImmersionSample, sub: ParallelNormalSubbundle, e,
                         fiber: TensorGrid | list, axis_tol: float = 1e-9) -> ImmersionSample:
    """Rotation-type submanifold psi = g - 2 <g, e> (e + gamma) / |e + gamma|^2.

    gamma ranges over the subbundle box; positions only.
    """
    e = np.asarray(e, dtype=float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise ValueError("axis vector e must be unit")
    if g.normals is None:
        raise ValueError("base sample needs a parallel normal frame")
    s_rank = sub.rank
    if isinstance(fiber, TensorGrid):
        coeff_axes = [fiber.axis_coords(l) for l in range(s_rank)]
        fgrid = fiber
    else:
        coeff_axes = [np.asarray(cv, dtype=float) for cv in fiber]
        fgrid = TensorGrid(tuple(len(cv) for cv in coeff_axes), (1.0,) * s_rank)
    grid = g.grid.product(fgrid)
    N = g.ambient_dim
    shape = grid.shape
    Db = g.grid.ndim
    pos_b = g.positions.reshape(g.grid.shape + (1,) * s_rank + (N,))
    gam = np.zeros(shape + (N,))
    for l, r in enumerate(sub.indices):
        cshape = [1] * grid.ndim
        cshape[Db + l] = len(coeff_axes[l])
        gam = gam + coeff_axes[l].reshape(cshape)[..., None] * g.normals[r].reshape(
            g.grid.shape + (1,) * s_rank + (N,))
    ge = (pos_b * e).sum(-1)
    mask = np.broadcast_to(np.abs(ge) > axis_tol, shape).copy()
    if not mask.any():
        raise AxisIncidence("the whole patch is incident to the rotation axis")
    den = ((e + gam) ** 2).sum(-1)
    positions = pos_b - 2.0 * ge[..., None] * (e + gam) / den[..., None]
    positions = np.broadcast_to(positions, shape + (N,)).copy()
    return ImmersionSample(grid, positions, mask=None if mask.all() else mask)


# ---------------------------------------------------------------------------
# stereographic map


@dataclass(frozen=True)
class StereographicMap:
    """S = T_{eps e0} . H_{1+eps^2} . i . T_{-eps^2 e0} from R^N into the
    model quadric of R^{N+1} (Lorentzian first coordinate for eps = -1);
    the inversion uses the model quadratic form.  eps = 0 degenerates to the
    plain inversion of R^N."""

    eps: int

    def __post_init__(self):
        if self.eps not in (-1, 0, 1):
            raise ValueError("eps must be -1, 0 or +1")


def stereographic_points(x: np.ndarray, m: StereographicMap, direction: str = "fwd",
                         tol: float = 1e-12) -> np.ndarray:
    """Apply the stereographic composition to a position array."""
    eps = m.eps
    if eps == 0:
        Q = (x**2).sum(-1)
        if Q.min() < tol:
            raise ThroughOrigin("node at the inversion center")
        return x / Q[..., None]
    if direction == "fwd":
        z = np.zeros(x.shape[:-1] + (x.shape[-1] + 1,))
        z[..., 1:] = x
        z[..., 0] -= eps * eps
        Q = _quadric_form(z, eps)
        if np.abs(Q).min() < tol:
            raise ThroughOrigin("node on the inversion cone")
        out = (1 + eps * eps) * z / Q[..., None]
        out[..., 0] += eps
        return out
    if direction == "inv":
        z = x.copy()
        z[..., 0] -= eps
        z = z / (1 + eps * eps)
        Q = _quadric_form(z, eps)
        if np.abs(Q).min() < tol:
            raise ThroughOrigin("node on the inversion cone")
        z = z / Q[..., None]
        z[..., 0] += eps * eps
        if np.abs(z[..., 0]).max() > 1e-8:
            raise ValueError("inverse stereographic image does not return to the slice")
        return z[..., 1:]
    raise ValueError("direction must be 'fwd' or 'inv'")


def stereographic(s: ImmersionSample, m: StereographicMap, direction: str = "fwd") -> ImmersionSample:
    """Stereographic image of a sample (positions; frames dropped for eps != 0)."""
    pos = stereographic_points(s.positions, m, direction)
    if m.eps == 0:
        return apply_ltransform(s, Inversion())
    return ImmersionSample(s.grid, pos, mask=s.mask)


# ---------------------------------------------------------------------------
# totally umbilical conullity normal forms


def umbilic_normal_form(kind: str, g: ImmersionSample, fiber: TensorGrid,
                    rho: np.ndarray | None = None) -> ImmersionSample:
    """Seed constructors for the three umbilical-conullity normal forms.

    (a) product   f = (g, id): fiber box appended as flat coordinates;
    (b) cone      f = (t g, id_{k-1}): first fiber axis scales a spherical g;
    (c) warped    f = (g, rho z): round-sphere factor of radius rho(u),
        z the unit circle chart (fiber rank 1 discretizes S^1 angles).
    """
    Nb = g.ambient_dim
    grid = g.grid.product(fiber)
    shape = grid.shape
    s_rank = fiber.ndim
    Db = g.grid.ndim
    pos_b = g.positions.reshape(g.grid.shape + (1,) * s_rank + (Nb,))
    if kind == "a":
        N = Nb + s_rank
        positions = np.zeros(shape + (N,))
        positions[..., :Nb] = pos_b
        for l in range(s_rank):
            cshape = [1] * grid.ndim
            cshape[Db + l] = fiber.shape[l]
            positions[..., Nb + l] = fiber.axis_coords(l).reshape(cshape)
        return ImmersionSample(grid, positions)
    if kind == "b":
        nrm = np.linalg.norm(g.positions, axis=-1)
        if np.abs(nrm - 1.0).max() > 1e-9:
            raise DimensionMismatch("cone base must be spherical (|g| = 1)")
        N = Nb + s_rank - 1
        positions = np.zeros(shape + (N,))
        tshape = [1] * grid.ndim
        tshape[Db] = fiber.shape[0]
        tvals = fiber.axis_coords(0).reshape(tshape)
        positions[..., :Nb] = tvals[..., None] * pos_b
        for l in range(1, s_rank):
            cshape = [1] * grid.ndim
            cshape[Db + l] = fiber.shape[l]
            positions[..., Nb + l - 1] = fiber.axis_coords(l).reshape(cshape)
        return ImmersionSample(grid, positions)
    if kind == "c":
        if s_rank != 1:
            raise UnsupportedGrid("warped normal form discretizes a circle fiber")
        if rho is None:
            rho = np.ones(g.grid.shape)
        rho = np.asarray(rho, dtype=float)
        if rho.min() <= 0:
            raise ValueError("warp function must be positive")
        N = Nb + 2
        th = fiber.axis_coords(0)
        cshape = [1] * grid.ndim
        cshape[Db] = fiber.shape[0]
        cth = np.cos(th).reshape(cshape)
        sth = np.sin(th).reshape(cshape)
        rr = rho.reshape(g.grid.shape + (1,))
        positions = np.zeros(shape + (N,))
        positions[..., :Nb] = pos_b
        positions[..., Nb] = rr * cth
        positions[..., Nb + 1] = rr * sth
        return ImmersionSample(grid, positions)
    raise ValueError("kind must be 'a', 'b' or 'c'")


def random_catalog_transform(rng: np.random.Generator, N: int, kinds=("T", "O", "H", "I")):
    """A random catalog transform for invariance tests (inversion kept away
    from the sample by composing with a translation beforehand is the
    caller's job)."""
    kind = kinds[rng.integers(len(kinds))]
    if kind == "T":
        return Translate(rng.normal(size=N))
    if kind == "O":
        A = rng.normal(size=(N, N))
        Qm, _ = np.linalg.qr(A)
        return Orthogonal(Qm)
    if kind == "H":
        k = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
        return Homothety(k)
    return Inversion()
