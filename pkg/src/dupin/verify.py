"""Independent finite-difference differential-geometry oracle.

Everything here works from raw position grids: metric and second fundamental
form by stencils on the chart, shape operators by symmetrized normal
projection, principal normals by simultaneous diagonalization, Dupin and
integrability residuals by contracted derivatives and Lie brackets.  Cached
frames or triples on a sample are deliberately ignored so these checks stay
independent of the construction path.

Diagnostics ignore the two outermost node layers (one-sided stencils are
noisier); rank decisions use singular-value gaps and always report the full
spectrum so borderline calls can be audited.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NotProper, RankDeficient, TooFewNodes
from .net import ImmersionSample, PrincipalData, Triple
from .numerics import TensorGrid, fd_axis, sphere_fit, AffineFlat
from .ribaucour import NRibaucourResult

__all__ = [
    "NumericJet",
    "numeric_jet",
    "extract_principal_normals",
    "dupin_residual",
    "conullity_integrability",
    "sphere_leaf_check",
    "sf_report",
    "dupin_tensor_space",
    "DiagnosticsReport",
]

_RNG_SEED = 20260810


@dataclass
class NumericJet:
    """Finite-difference fundamental forms of a position grid."""

    grid: TensorGrid
    first: np.ndarray          # (D, *grid, N) chart derivatives
    metric: np.ndarray         # (*grid, D, D)
    metric_inv: np.ndarray
    second: np.ndarray         # (D, D, *grid, N) chart second derivatives
    normal_proj: np.ndarray    # (*grid, N, N) projector onto the normal space
    alpha: np.ndarray          # (D, D, *grid, N) normal-projected second derivatives
    shape_sym: np.ndarray      # (p, *grid, D, D) symmetrized shape operators
    normal_basis: np.ndarray   # (p, *grid, N) orthonormal normal basis (not smooth)
    g_isqrt: np.ndarray        # (*grid, D, D) metric inverse square root
    interior: np.ndarray       # bool (*grid)

    @property
    def codim(self) -> int:
        return self.shape_sym.shape[0]


def numeric_jet(s: ImmersionSample, acc: int = 4) -> NumericJet:
    """Fundamental forms from raw positions, independent of cached data."""
    g = s.grid
    D = g.ndim
    pos = s.positions
    N = pos.shape[-1]
    if min(g.shape) < 5:
        raise TooFewNodes("need at least 5 nodes per axis for the oracle")
    interior = g.interior_mask(2) & s.valid()
    if not interior.any():
        raise TooFewNodes("no interior nodes left after masking")

    first = np.stack([fd_axis(pos, g.spacings[i], i, 1, acc=acc) for i in range(D)])
    second = np.empty((D, D) + g.shape + (N,))
    for i in range(D):
        second[i, i] = fd_axis(pos, g.spacings[i], i, 2, acc=acc)
        for j in range(i + 1, D):
            mixed = fd_axis(first[i], g.spacings[j], j, 1, acc=acc)
            second[i, j] = mixed
            second[j, i] = mixed

    metric = np.einsum("i...k,j...k->...ij", first, first)
    metric_inv = np.linalg.inv(metric)

    # orthonormal tangent/normal split per node via SVD of the chart frame
    E = np.moveaxis(first, 0, -2)                     # (*grid, D, N)
    U, sv, Vt = np.linalg.svd(E, full_matrices=True)
    tangent_basis = Vt[..., :D, :]                    # (*grid, D, N)
    normal_basis = np.moveaxis(Vt[..., D:, :], -2, 0)  # (p, *grid, N)
    P_t = np.einsum("...ak,...al->...kl", tangent_basis, tangent_basis)
    normal_proj = np.eye(N) - P_t

    alpha = np.einsum("...kl,ij...l->ij...k", normal_proj, second)

    # metric inverse square root for symmetrized shape operators
    w, Q = np.linalg.eigh(metric)
    g_isqrt = np.einsum("...ik,...k,...jk->...ij", Q, 1.0 / np.sqrt(np.maximum(w, 1e-300)), Q)

    p = N - D
    H = np.einsum("ij...k,r...k->r...ij", alpha, normal_basis)     # (p, *grid, D, D)
    shape_sym = np.einsum("...ia,r...ab,...bj->r...ij", g_isqrt, H, g_isqrt)

    return NumericJet(grid=g, first=first, metric=metric, metric_inv=metric_inv,
                      second=second, normal_proj=normal_proj, alpha=alpha,
                      shape_sym=shape_sym, normal_basis=normal_basis,
                      g_isqrt=g_isqrt, interior=interior)


def normal_curvature_residual(jet: NumericJet) -> float:
    """Flat-normal-bundle estimate: max commutator of shape operators
    (Ricci equation: R-perp = 0 iff all shape operators commute)."""
    S = jet.shape_sym
    p = S.shape[0]
    worst = 0.0
    for r in range(p):
        for q in range(r + 1, p):
            comm = S[r] @ S[q] - S[q] @ S[r]
            worst = max(worst, np.abs(comm[jet.interior]).max())
    return float(worst)


def _cluster_pattern(dist: np.ndarray, tol: float):
    """Group indices 0..n-1 by the adjacency dist < tol (single linkage)."""
    n = dist.shape[0]
    groups = []
    seen = [False] * n
    for a in range(n):
        if seen[a]:
            continue
        stack, cluster = [a], []
        seen[a] = True
        while stack:
            x = stack.pop()
            cluster.append(x)
            for b in range(n):
                if not seen[b] and dist[x, b] < tol:
                    seen[b] = True
                    stack.append(b)
        groups.append(tuple(sorted(cluster)))
    return tuple(sorted(groups))


def extract_principal_normals(s: ImmersionSample, tol: float | None = None,
                              jet: NumericJet | None = None,
                              flat_gate: float = 1e-4) -> PrincipalData:
    """Simultaneous diagonalization of the shape operators into k classes.

    tol defaults to 1e-5 times the largest shape-operator norm.  Classes are
    tracked across nodes by nearest principal normal so the eta fields are
    smooth; borderline nodes (cluster pattern differing from the dominant
    one) are masked rather than guessed, and a NotProper error is raised only
    when no dominant pattern exists.
    """
    jet = numeric_jet(s) if jet is None else jet
    g = jet.grid
    D = g.ndim
    p = jet.codim
    N = s.ambient_dim
    flat_res = normal_curvature_residual(jet)
    shape_scale = max(np.abs(jet.shape_sym[:, jet.interior]).max(), 1e-30)
    if flat_res > flat_gate * max(shape_scale, 1.0):
        raise NotProper(f"normal bundle not numerically flat (commutator {flat_res:.2e})")
    if tol is None:
        tol = 1e-5 * shape_scale
    eta_tol = max(tol, 1e-9 * shape_scale)

    rng = np.random.default_rng(_RNG_SEED)
    c = rng.normal(size=p)
    M = np.einsum("r,r...ij->...ij", c, jet.shape_sym)
    w, Q = np.linalg.eigh(M)                           # Q columns: hat-e_alpha
    # principal normal of each eigendirection: sum_r <S_r e, e> nu_r
    diag = np.einsum("...ia,r...ij,...ja->r...a", Q, jet.shape_sym, Q)  # (p,*grid,D)
    eta_dir = np.einsum("r...a,r...k->...ak", diag, jet.normal_basis)   # (*grid, D, N)

    # pairwise distances between the D candidate normals per node
    dist = np.linalg.norm(eta_dir[..., :, None, :] - eta_dir[..., None, :, :], axis=-1)

    # classify every valid node (boundary rows included) so the eta fields
    # support full stencils; reporting still happens on the interior
    flat_idx = np.argwhere(s.valid())
    patterns = {}
    for idx in flat_idx:
        pat = _cluster_pattern(dist[tuple(idx)], eta_tol * 10)
        patterns.setdefault(pat, []).append(tuple(idx))
    if not patterns:
        raise NotProper("no usable interior nodes")
    pattern = max(patterns, key=lambda k: len(patterns[k]))
    frac = len(patterns[pattern]) / len(flat_idx)
    mask = np.zeros(g.shape, dtype=bool)
    for idx in patterns[pattern]:
        mask[idx] = True
    if frac < 0.5:
        raise NotProper(f"principal-normal count varies (dominant pattern on {frac:.0%} of nodes)")

    k = len(pattern)
    mult = tuple(len(grp) for grp in pattern)
    eta = np.zeros((k,) + g.shape + (N,))
    proj = np.zeros((k,) + g.shape + (D, D))
    g_sqrt = np.linalg.inv(jet.g_isqrt)

    import itertools as _it
    perms = list(_it.permutations(range(k)))
    # track classes against the nearest already-processed neighbor so smooth
    # eta fields survive arbitrarily long patches (frames may rotate fully)
    done = np.zeros(g.shape, dtype=bool)
    ref0 = None
    for idx in sorted(map(tuple, np.argwhere(s.valid()))):
        if not mask[idx]:
            continue
        pat = _cluster_pattern(dist[idx], eta_tol * 10)
        if len(pat) != k or tuple(len(grp) for grp in pat) != mult:
            mask[idx] = False
            continue
        vals = np.stack([eta_dir[idx][list(grp)].mean(axis=0) for grp in pat])
        ref = None
        for d in range(D):
            if idx[d] > 0:
                nb = idx[:d] + (idx[d] - 1,) + idx[d + 1:]
                if done[nb]:
                    ref = np.stack([eta[j][nb] for j in range(k)])
                    break
        if ref is None:
            ref = ref0
        if ref is None:
            best = tuple(range(k))
        else:
            best, bcost = None, np.inf
            for pm in perms:
                cost = sum(np.linalg.norm(vals[pm[j]] - ref[j]) for j in range(k))
                if cost < bcost:
                    best, bcost = pm, cost
        Qn = Q[idx]
        for j in range(k):
            grp = list(pat[best[j]])
            eta[j][idx] = vals[best[j]]
            hat = Qn[:, grp]                            # (D, m)
            proj[(j,) + idx] = jet.g_isqrt[idx] @ (hat @ hat.T) @ g_sqrt[idx]
        done[idx] = True
        if ref0 is None:
            ref0 = np.stack([eta[j][idx] for j in range(k)])
    return PrincipalData(eta=eta, multiplicities=mult, projectors=proj, mask=mask)


def _stencil_valid(grid: TensorGrid, interior: np.ndarray, mask: np.ndarray | None,
                   width: int = 3) -> np.ndarray:
    """Interior nodes whose fd stencils stay inside the valid node set.

    Checks that differentiate an already fd-derived field need four layers of
    margin: the outer two layers of the first derivative carry lower-order
    stencil error, and differentiating across the stencil-regime boundary
    would turn that into O(h) noise.
    """
    from .numerics import _erode_mask

    valid = interior & grid.interior_mask(4)
    if not valid.any():
        valid = interior
    if mask is not None:
        er = mask.copy()
        for ax in range(grid.ndim):
            er = _erode_mask(er, ax, width)
        valid = valid & er
        if not valid.any():
            valid = interior & er
    return valid


def dupin_residual(s: ImmersionSample, pd: PrincipalData,
                   jet: NumericJet | None = None) -> np.ndarray:
    """Per-class max |normal-projected derivative of eta_j along its own
    eigenbundle| over valid interior nodes."""
    jet = numeric_jet(s) if jet is None else jet
    g = jet.grid
    D = g.ndim
    valid = _stencil_valid(g, jet.interior, pd.mask)
    out = np.zeros(pd.k)
    deta = np.stack([np.stack([fd_axis(pd.eta[j], g.spacings[i], i, 1, acc=4)
                               for i in range(D)]) for j in range(pd.k)])  # (k, D, *grid, N)
    for j in range(pd.k):
        Pj = pd.projectors[j]                    # (*grid, D, D)
        # directions: chart components of G-orthonormalized eigenvectors
        # use P_j applied to the g-orthonormal basis columns of g_isqrt
        dirs = np.einsum("...ab,...bc->...ac", Pj, jet.g_isqrt)  # (*grid, D, D) columns
        worst = np.zeros(g.shape)
        for col in range(D):
            X = dirs[..., col]                   # (*grid, D) chart components
            nX = np.sqrt(np.einsum("...i,...ij,...j->...", X, jet.metric, X))
            DXeta = np.einsum("...i,i...k->...k", X, deta[j])
            nor = np.einsum("...kl,...l->...k", jet.normal_proj, DXeta)
            mag = np.linalg.norm(nor, axis=-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                mag = np.where(nX > 1e-8, mag / np.maximum(nX, 1e-300), 0.0)
            worst = np.maximum(worst, mag)
        out[j] = worst[valid].max() if valid.any() else np.nan
    return out


def conullity_integrability(s: ImmersionSample, pd: PrincipalData, j: int,
                            jet: NumericJet | None = None, tol: float = 1e-4) -> dict:
    """Bracket test for the conullity of class j.

    Spanning fields are the conullity projections of the chart basis; the
    residual is the eigenbundle component of their Lie brackets (metric
    norm), relative to the bracket scale.  The pairwise-independence
    sufficient condition (eta_i - eta_l vs eta_j - eta_l everywhere linearly
    independent) is reported alongside.
    """
    jet = numeric_jet(s) if jet is None else jet
    g = jet.grid
    D = g.ndim
    valid = _stencil_valid(g, jet.interior, pd.mask)
    Pj = pd.projectors[j]
    Qj = np.eye(D) - Pj                                    # conullity projector
    # spanning fields: Y_a = Qj e_a, components Qj[..., :, a]
    dY = np.stack([np.stack([fd_axis(Qj[..., a], g.spacings[m], m, 1, acc=4)
                             for m in range(D)]) for a in range(D)])  # (a, m, *grid, D)
    worst = 0.0
    scale = 0.0
    for a in range(D):
        Ya = Qj[..., a]
        for b in range(a + 1, D):
            Yb = Qj[..., b]
            br = (np.einsum("...m,m...i->...i", Ya, dY[b])
                  - np.einsum("...m,m...i->...i", Yb, dY[a]))
            nb = np.sqrt(np.einsum("...i,...ij,...j->...", br, jet.metric, br))
            bad = np.einsum("...ij,...j->...i", Pj, br)
            nbad = np.sqrt(np.einsum("...i,...ij,...j->...", bad, jet.metric, bad))
            worst = max(worst, nbad[valid].max() if valid.any() else np.nan)
            scale = max(scale, nb[valid].max() if valid.any() else 0.0)
    # sufficient condition: differences to other classes pairwise independent
    others = [i for i in range(pd.k) if i != j]
    suff = np.inf
    for x, i in enumerate(others):
        for l in others[x + 1:]:
            di = pd.eta[i] - pd.eta[j]
            dl = pd.eta[l] - pd.eta[j]
            cross2 = (di**2).sum(-1) * (dl**2).sum(-1) - ((di * dl).sum(-1)) ** 2
            suff = min(suff, float(np.sqrt(np.maximum(cross2, 0.0))[valid].min()))
    return {
        "class": j,
        "bracket_residual": float(worst),
        "bracket_scale": float(scale),
        "integrable": bool(worst < tol * max(1.0, scale)),
        "sufficient_independence": None if suff is np.inf else float(suff),
    }


def focal_constancy(s: ImmersionSample, pd: PrincipalData,
                    jet: NumericJet | None = None, eta_floor: float = 1e-8) -> np.ndarray:
    """Per-class spherical-leaf residual: the focal map f + eta_j/|eta_j|^2
    must be constant along the eigenbundle of a nonvanishing Dupin normal
    (its value is the leaf-sphere center).  Classes whose normal vanishes
    somewhere report nan (their leaves are flats there)."""
    jet = numeric_jet(s) if jet is None else jet
    g = jet.grid
    D = g.ndim
    valid = _stencil_valid(g, jet.interior, pd.mask)
    out = np.full(pd.k, np.nan)
    for j in range(pd.k):
        nrm2 = (pd.eta[j] ** 2).sum(-1)
        if nrm2[valid].min() < eta_floor**2:
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            F = s.positions + pd.eta[j] / nrm2[..., None]
        dF = np.stack([fd_axis(F, g.spacings[i], i, 1, acc=4) for i in range(D)])
        dirs = np.einsum("...ab,...bc->...ac", pd.projectors[j], jet.g_isqrt)
        worst = np.zeros(g.shape)
        for col in range(D):
            X = dirs[..., col]
            nX = np.sqrt(np.abs(np.einsum("...i,...ij,...j->...", X, jet.metric, X)))
            DXF = np.einsum("...i,i...k->...k", X, dF)
            mag = np.linalg.norm(DXF, axis=-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                mag = np.where(nX > 1e-8, mag / np.maximum(nX, 1e-300), 0.0)
            worst = np.maximum(worst, mag)
        out[j] = worst[valid].max() if valid.any() else np.nan
    return out


def sphere_leaf_check(result: NRibaucourResult, flat_tol: float = 1e-7) -> dict:
    """Leaf geometry of an N-Ribaucour result: per-base-node sphere fits of
    y -> f(u0, y), plus the constancy of f + eta/|eta|^2 along leaves."""
    g = result.grid
    Db = result.base.grid.ndim
    if min(g.shape[Db:]) < 5:
        raise TooFewNodes("need >= 5 nodes per leaf direction")
    base_shape = g.shape[:Db]
    res = np.zeros(base_shape)
    kinds = np.empty(base_shape, dtype=object)

    def fit_leaf(idx):
        pts = result.leaf_positions(idx).reshape(-1, result.sample.ambient_dim)
        return sphere_fit(pts)

    from ._parallel import pmap

    all_idx = list(np.ndindex(*base_shape))
    for idx, fit in zip(all_idx, pmap(fit_leaf, all_idx)):
        res[idx] = fit.residual
        kinds[idx] = "flat" if isinstance(fit, AffineFlat) else "sphere"
    out = {"max_fit_residual": float(res.max()), "kinds": kinds, "fit_residuals": res}

    eta_new = result.principal.eta[-1]
    nrm2 = (eta_new**2).sum(-1)
    nonvan = nrm2 > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        C = result.sample.positions + eta_new / nrm2[..., None]
    leaf_axes = tuple(range(Db, g.ndim))
    mean = C.mean(axis=leaf_axes, keepdims=True)
    dev = np.linalg.norm(C - mean, axis=-1)
    dev = np.where(nonvan, dev, 0.0)
    out["center_constancy"] = float(dev.max())
    return out


@dataclass
class DiagnosticsReport:
    """Structural diagnostics of a submanifold patch."""

    k: int
    multiplicities: tuple
    dupin_residuals: tuple
    normal_curvature: float
    conullity: tuple                  # per-class dicts from the bracket test
    dim_N1: int
    dim_Sf: int
    conformal_codim: int
    holonomic: bool
    masked_fraction: float
    spherical_leaf: tuple = ()        # per-class focal-map constancy (nan = flat leaves)
    spectra: dict = dc_field(default_factory=dict)
    checks: dict = dc_field(default_factory=dict)

    def rows(self):
        rows = [("k", self.k, ""), ("dim_N1", self.dim_N1, ""), ("dim_Sf", self.dim_Sf, ""),
                ("conformal_codim", self.conformal_codim, ""),
                ("normal_curvature", self.normal_curvature, ""),
                ("holonomic", int(self.holonomic), ""),
                ("masked_fraction", self.masked_fraction, "")]
        for j, r in enumerate(self.dupin_residuals):
            rows.append((f"dupin_residual_{j}", r, ""))
        for j, r in enumerate(self.spherical_leaf):
            rows.append((f"spherical_leaf_{j}", r, ""))
        for c in self.conullity:
            rows.append((f"conullity_integrable_{c['class']}", int(c["integrable"]),
                         c["bracket_residual"]))
        for name, ok in self.checks.items():
            rows.append((name, int(bool(ok)), ""))
        return rows

    def to_dict(self):
        return {
            "k": self.k,
            "multiplicities": list(self.multiplicities),
            "dupin_residuals": [float(x) for x in self.dupin_residuals],
            "normal_curvature": self.normal_curvature,
            "conullity": [
                {kk: (vv if not isinstance(vv, (np.floating, np.bool_)) else float(vv))
                 for kk, vv in c.items()} for c in self.conullity
            ],
            "dim_N1": self.dim_N1,
            "dim_Sf": self.dim_Sf,
            "conformal_codim": self.conformal_codim,
            "holonomic": self.holonomic,
            "masked_fraction": self.masked_fraction,
            "spherical_leaf": [float(x) for x in self.spherical_leaf],
            "spectra": {kk: [float(x) for x in vv] for kk, vv in self.spectra.items()},
            "checks": {kk: bool(vv) for kk, vv in self.checks.items()},
        }


def _span_rank(vectors: np.ndarray, valid: np.ndarray, gap: float = 1e-6):
    """Numerical rank of a family of ambient vectors over valid nodes.

    vectors: (m, *grid, N).  Returns (max node rank, spectrum of the worst
    node attaining it).  Rank uses singular values > gap * sigma_max.
    """
    m = vectors.shape[0]
    V = np.moveaxis(vectors, 0, -2)[valid]     # (nodes, m, N)
    sv = np.linalg.svd(V, compute_uv=False)    # (nodes, min(m,N))
    smax = np.maximum(sv[:, :1], 1e-300)
    ranks = (sv > gap * smax).sum(axis=1)
    worst = int(ranks.max()) if ranks.size else 0
    at = int(np.argmax(ranks)) if ranks.size else 0
    constant = bool(ranks.size and ranks.min() == ranks.max())
    return worst, sv[at], constant


def sf_report(s: ImmersionSample, pd: PrincipalData | None = None,
              jet: NumericJet | None = None, rank_gap: float = 1e-6,
              bracket_tol: float = 1e-4, weakly_irreducible: bool = False) -> DiagnosticsReport:
    """Full diagnostics: principal-normal structure, difference-span and
    first-normal-space dimensions, conformal codimension estimate and the
    holonomicity verdict from per-class bracket tests."""
    jet = numeric_jet(s) if jet is None else jet
    if pd is None:
        pd = extract_principal_normals(s, jet=jet)
    valid = jet.interior if pd.mask is None else (jet.interior & pd.mask)
    k = pd.k

    dupin = dupin_residual(s, pd, jet=jet)
    ncurv = normal_curvature_residual(jet)

    # S_f = span{eta_i - eta_j}: differences to class 0 span the same space
    diffs = np.stack([pd.eta[i] - pd.eta[0] for i in range(1, k)]) if k > 1 else None
    if diffs is None:
        dim_sf, sf_spec, sf_const = 0, np.zeros(0), True
    else:
        dim_sf, sf_spec, sf_const = _span_rank(diffs, valid, gap=rank_gap)

    # N_1 = span of all alpha(X, Y)
    D = jet.grid.ndim
    alpha_list = [jet.alpha[i, j] for i in range(D) for j in range(i, D)]
    dim_n1, n1_spec, n1_const = _span_rank(np.stack(alpha_list), valid, gap=rank_gap)

    conull = tuple(conullity_integrability(s, pd, j, jet=jet, tol=bracket_tol)
                   for j in range(k))
    holonomic = all(c["integrable"] for c in conull)
    leaves = focal_constancy(s, pd, jet=jet)

    checks = {
        "c_le_k_minus_1": dim_sf <= k - 1,
        "n1_bound": (dim_n1 - 1) <= dim_sf <= dim_n1,
        # 1-regularity is assumed per patch; a rank jump means the patch
        # straddles a stratum boundary and should be re-masked
        "N1_rank_constant": n1_const,
        "Sf_rank_constant": sf_const,
    }
    if dim_sf == k - 1:
        checks["holonomic_when_c_eq_k_minus_1"] = holonomic
    if weakly_irreducible:
        checks["weakly_irreducible_codim_bound"] = dim_sf <= (2.0 / 3.0) * k - 1

    return DiagnosticsReport(
        k=k,
        multiplicities=pd.multiplicities,
        dupin_residuals=tuple(float(x) for x in dupin),
        normal_curvature=ncurv,
        conullity=conull,
        dim_N1=dim_n1,
        dim_Sf=dim_sf,
        conformal_codim=dim_sf,
        holonomic=holonomic,
        masked_fraction=float(1.0 - valid.mean()),
        spherical_leaf=tuple(float(x) for x in leaves),
        spectra={"Sf": sf_spec, "N1": n1_spec},
        checks=checks,
    )


def dupin_tensor_space(t: Triple, substeps: int = 8, extra_seeds: int = 2,
                       gap_required: float = 1e6) -> dict:
    """Dimension of the space of net-adapted Dupin tensors.

    Integrates the tensor system from the k unit seeds plus random probes,
    stacks the solutions and reports the singular-value spectrum: the rank
    must equal k and any probe solution must lie in the unit-seed span.
    """
    from .integrable import solve_B

    k = t.n_classes
    sols = []
    for m in range(k):
        e = np.zeros(k)
        e[m] = 1.0
        sol = solve_B(t, e, substeps=substeps, check_alternate=False)
        if sol.mask is not None:
            raise RankDeficient("tensor-system integration masked nodes (blow-up)")
        sols.append(sol.B.reshape(-1))
    rng = np.random.default_rng(_RNG_SEED + 1)
    probes = []
    for _ in range(extra_seeds):
        seed = rng.normal(size=k)
        probes.append((seed, solve_B(t, seed, substeps=substeps, check_alternate=False).B.reshape(-1)))
    A = np.stack(sols + [p[1] for p in probes])
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[k - 1] <= 0:
        raise RankDeficient("unit-seed solutions are numerically dependent")
    gap = sv[k - 1] / sv[k] if len(sv) > k and sv[k] > 0 else np.inf
    basis = np.stack(sols)
    span_res = 0.0
    for seed, vec in probes:
        coef, *_ = np.linalg.lstsq(basis.T, vec, rcond=None)
        span_res = max(span_res, np.abs(basis.T @ coef - vec).max() / max(np.abs(vec).max(), 1e-30))
    return {
        "dimension": int(k),
        "singular_values": sv,
        "gap": float(gap),
        "rank_equals_k": bool(gap > gap_required),
        "probe_span_residual": float(span_res),
        "basis": basis,
    }
