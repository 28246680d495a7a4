"""Versioned JSON schemas, residual CSV rows and mesh export.

Field arrays serialize in row-major node order.  Outputs are deterministic:
floats are written with full repr precision and dict keys in fixed order, so
identical inputs produce bit-identical files.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .errors import ParseError, UnsupportedSlice
from .net import ClassMap, ImmersionSample, Triple
from .numerics import TensorGrid

TRIPLE_SCHEMA = "dupin/triple@1"
SAMPLE_SCHEMA = "dupin/sample@1"
PIPELINE_SCHEMA = "dupin/pipeline@1"

__all__ = [
    "TRIPLE_SCHEMA",
    "SAMPLE_SCHEMA",
    "PIPELINE_SCHEMA",
    "grid_to_dict",
    "grid_from_dict",
    "triple_to_dict",
    "triple_from_dict",
    "sample_to_dict",
    "sample_from_dict",
    "dump_json",
    "load_json",
    "spec_hash",
    "residual_csv",
    "export_obj",
    "export_ply",
    "export_csv",
]


def grid_to_dict(g: TensorGrid) -> dict:
    return {"shape": list(g.shape), "spacings": list(g.spacings), "origins": list(g.origins)}


def grid_from_dict(d: dict) -> TensorGrid:
    try:
        return TensorGrid(d["shape"], d["spacings"], d.get("origins"))
    except KeyError as e:
        raise ParseError(f"grid document missing key {e}") from e


def _arr(a: np.ndarray) -> list:
    return np.asarray(a, dtype=float).reshape(-1).tolist()


def triple_to_dict(t: Triple) -> dict:
    out = {
        "schema": TRIPLE_SCHEMA,
        "grid": grid_to_dict(t.grid),
        "classes": list(t.class_map.classes),
        "n_normals": t.n_normals,
        "v": _arr(t.v),
        "h": _arr(t.h),
        "V": _arr(t.V),
    }
    if t.mask is not None:
        out["mask"] = t.mask.reshape(-1).astype(int).tolist()
    return out


def triple_from_dict(d: dict) -> Triple:
    if d.get("schema") != TRIPLE_SCHEMA:
        raise ParseError(f"expected schema {TRIPLE_SCHEMA}, got {d.get('schema')!r}")
    g = grid_from_dict(d["grid"])
    cm = ClassMap(d["classes"])
    k, D, R = cm.n_classes, g.ndim, int(d["n_normals"])
    v = np.asarray(d["v"], dtype=float).reshape((k,) + g.shape)
    h = np.asarray(d["h"], dtype=float).reshape((D, k) + g.shape)
    V = np.asarray(d["V"], dtype=float).reshape((k, R) + g.shape)
    mask = None
    if "mask" in d:
        mask = np.asarray(d["mask"], dtype=int).reshape(g.shape).astype(bool)
    return Triple(g, cm, v, h, V, mask=mask)


def sample_to_dict(s: ImmersionSample, provenance: dict | None = None) -> dict:
    out = {
        "schema": SAMPLE_SCHEMA,
        "grid": grid_to_dict(s.grid),
        "ambient_dim": s.ambient_dim,
        "positions": _arr(s.positions),
    }
    if s.tangents is not None:
        out["tangents"] = _arr(s.tangents)
        out["n_tangents"] = s.tangents.shape[0]
    if s.normals is not None:
        out["normals"] = _arr(s.normals)
        out["n_normals"] = s.normals.shape[0]
    if s.lame is not None:
        out["lame"] = _arr(s.lame)
    if s.sff is not None:
        out["sff"] = _arr(s.sff)
        out["sff_shape"] = list(s.sff.shape[:2])
    if s.triple is not None:
        out["triple"] = triple_to_dict(s.triple)
    if s.mask is not None:
        out["mask"] = s.mask.reshape(-1).astype(int).tolist()
    if provenance:
        out["provenance"] = provenance
    return out


def sample_from_dict(d: dict) -> ImmersionSample:
    if d.get("schema") != SAMPLE_SCHEMA:
        raise ParseError(f"expected schema {SAMPLE_SCHEMA}, got {d.get('schema')!r}")
    g = grid_from_dict(d["grid"])
    N = int(d["ambient_dim"])
    pos = np.asarray(d["positions"], dtype=float).reshape(g.shape + (N,))
    tangents = normals = lame = sff = mask = triple = None
    if "tangents" in d:
        nt = int(d["n_tangents"])
        tangents = np.asarray(d["tangents"], dtype=float).reshape((nt,) + g.shape + (N,))
    if "normals" in d:
        nn = int(d["n_normals"])
        normals = np.asarray(d["normals"], dtype=float).reshape((nn,) + g.shape + (N,))
    if "lame" in d:
        lame = np.asarray(d["lame"], dtype=float).reshape((g.ndim,) + g.shape)
    if "sff" in d:
        a, b = d["sff_shape"]
        sff = np.asarray(d["sff"], dtype=float).reshape((a, b) + g.shape)
    if "triple" in d:
        triple = triple_from_dict(d["triple"])
    if "mask" in d:
        mask = np.asarray(d["mask"], dtype=int).reshape(g.shape).astype(bool)
    return ImmersionSample(g, pos, tangents=tangents, normals=normals, lame=lame,
                           sff=sff, triple=triple, mask=mask)


def dump_json(obj: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")


def load_json(path) -> dict:
    with open(path) as f:
        return json.load(f)


def spec_hash(obj: dict) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def residual_csv(rows, path) -> None:
    """Rows of (equation id, max residual, masked fraction)."""
    with open(path, "w") as f:
        f.write("equation,max_residual,masked_fraction\n")
        for eq, res, frac in rows:
            f.write(f"{eq},{res!r},{frac!r}\n")


def result_to_dict(result) -> dict:
    """Serialize an N-Ribaucour result: the sample plus a transform-provenance
    block (solution seed values, subbundle indices, jet summary statistics)."""
    w = result.w
    base = (0,) * w.grid.ndim
    jet = result.jet
    prov = {
        "transform": "n_ribaucour",
        "n_indices": list(result.n_indices),
        "w_seed": {
            "phi0": float(w.phi[base]),
            "gamma0": [float(x) for x in w.gamma[(slice(None),) + base]],
            "beta0": [float(x) for x in w.beta[(slice(None),) + base]],
            "B0": [float(x) for x in w.B[(slice(None),) + base]],
        },
        "jet_stats": {
            "phi": [float(jet.phi.min()), float(jet.phi.max())],
            "nu": [float(jet.nu.min()), float(jet.nu.max())],
            "lambda": [float(jet.lam.min()), float(jet.lam.max())],
            "regular_fraction": float(result.regular.mean()),
        },
    }
    return sample_to_dict(result.sample, provenance=prov)


def _mesh_slice(s: ImmersionSample, slice_idx):
    """Positions and mask of a 2-d slice for mesh export."""
    g = s.grid
    if g.ndim == 2:
        return s.positions, (s.mask if s.mask is not None else None)
    if slice_idx is None:
        raise UnsupportedSlice("mesh export of a >2-d sample needs a slice specification")
    sel = []
    free = 0
    for d in range(g.ndim):
        v = slice_idx[d]
        if v is None:
            sel.append(slice(None))
            free += 1
        else:
            sel.append(int(v))
    if free != 2:
        raise UnsupportedSlice("mesh slice must leave exactly two axes free")
    sel = tuple(sel)
    mask = s.mask[sel] if s.mask is not None else None
    return s.positions[sel], mask


def _mesh_data(s: ImmersionSample, slice_idx, coords):
    pos, mask = _mesh_slice(s, slice_idx)
    if pos.shape[-1] < 3:
        pad = np.zeros(pos.shape[:-1] + (3 - pos.shape[-1],))
        pos = np.concatenate([pos, pad], axis=-1)
    coords = tuple(coords) if coords is not None else (0, 1, 2)
    if len(coords) != 3 or max(coords) >= pos.shape[-1]:
        raise UnsupportedSlice("mesh export needs three valid coordinate indices")
    xyz = pos[..., list(coords)]
    n1, n2 = xyz.shape[:2]
    verts = xyz.reshape(-1, 3)
    faces = []
    for i in range(n1 - 1):
        for j in range(n2 - 1):
            if mask is not None:
                if not (mask[i, j] and mask[i + 1, j] and mask[i, j + 1] and mask[i + 1, j + 1]):
                    continue
            a = i * n2 + j
            faces.append((a, a + n2, a + n2 + 1, a + 1))
    return verts, faces


def export_obj(s: ImmersionSample, path, slice_idx=None, coords=None) -> dict:
    """Quad mesh of a 2-d (slice of a) sample; masked cells are omitted."""
    verts, faces = _mesh_data(s, slice_idx, coords)
    with open(path, "w") as f:
        for v in verts:
            f.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for a, b, c, d in faces:
            f.write(f"f {a + 1} {b + 1} {c + 1} {d + 1}\n")
    return {"vertices": len(verts), "faces": len(faces)}


def export_ply(s: ImmersionSample, path, slice_idx=None, coords=None) -> dict:
    verts, faces = _mesh_data(s, slice_idx, coords)
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(verts)}\n")
        f.write("property float x\nproperty float y\nproperty float z\n")
        f.write(f"element face {len(faces)}\n")
        f.write("property list uchar int vertex_indices\nend_header\n")
        for v in verts:
            f.write(f"{v[0]!r} {v[1]!r} {v[2]!r}\n")
        for a, b, c, d in faces:
            f.write(f"4 {a} {b} {c} {d}\n")
    return {"vertices": len(verts), "faces": len(faces)}


def export_csv(s: ImmersionSample, path) -> dict:
    """Full node data: one row per node in row-major order."""
    g = s.grid
    N = s.ambient_dim
    mesh = g.meshgrid()
    cols = [f"u{d}" for d in range(g.ndim)] + [f"x{i}" for i in range(N)] + ["valid"]
    valid = s.valid().reshape(-1)
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        U = np.stack([m.reshape(-1) for m in mesh], axis=1)
        P = s.positions.reshape(-1, N)
        for row in range(U.shape[0]):
            vals = [repr(x) for x in U[row]] + [repr(x) for x in P[row]] + [str(int(valid[row]))]
            f.write(",".join(vals) + "\n")
    return {"rows": U.shape[0]}
