"""Declarative pipeline runner: seed -> transforms -> recursion -> verify -> export.

The pipeline document is a single JSON object (schema dupin/pipeline@1) with
a named seed and an ordered step list.  Unknown keys are rejected so a spec
always means the same thing; every artifact embeds the spec hash and the
executed chain for provenance.  A nonzero exit code signals a failed gate.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import DupinError, ParseError, StepFailure
from .integrable import solve_linear
from .net import ParallelNormalSubbundle, validate_triple
from .moebius import (
    Homothety,
    Inversion,
    Orthogonal,
    ParallelTranslate,
    Translate,
    apply_ltransform,
)
from .ribaucour import dupin_step, inversion_w, ltrivial_w, parallel_w, ribaucour_transform
from .seeds import SEED_BUILDERS
from . import serialize
from .verify import sf_report

_TRANSFORM_KEYS = {
    "translate": {"kind", "u"},
    "orthogonal": {"kind", "matrix"},
    "homothety": {"kind", "k"},
    "inversion": {"kind"},
    "parallel": {"kind", "coeffs"},
}

_W_KEYS = {
    "inversion": {"kind", "P0", "r"},
    "parallel": {"kind", "coeffs"},
    "ltrivial": {"kind", "a", "v0", "delta", "c"},
    "solve": {"kind", "B0", "phi0", "gamma0", "beta0", "substeps"},
}

_STEP_KEYS = {
    "ltransform": {"op", "kind", "u", "matrix", "k", "coeffs"},
    "ribaucour": {"op", "w"},
    "n_ribaucour": {"op", "n_indices", "y", "w"},
    "recursion": {"op", "n_indices", "y", "B0", "phi0", "gamma0", "beta0", "substeps", "gates"},
    "construct": {"op", "kind", "n_indices", "a", "n_angle", "angle_range", "eps", "fiber", "e"},
    "verify": {"op", "gates"},
    "export": {"op", "format", "path", "slice", "coords"},
}

_PIPE_KEYS = {"schema", "seed", "steps", "tolerances", "out"}


def _check_keys(doc: dict, allowed: set, where: str):
    extra = set(doc) - allowed
    if extra:
        raise ParseError(f"unknown keys {sorted(extra)} in {where}")


def _build_transform(doc: dict):
    kind = doc.get("kind")
    if kind not in _TRANSFORM_KEYS:
        raise ParseError(f"unknown transform kind {kind!r}")
    _check_keys(doc, _TRANSFORM_KEYS[kind], f"transform {kind}")
    if kind == "translate":
        return Translate(doc["u"])
    if kind == "orthogonal":
        return Orthogonal(np.asarray(doc["matrix"], dtype=float))
    if kind == "homothety":
        return Homothety(doc["k"])
    if kind == "inversion":
        return Inversion()
    return ParallelTranslate(doc["coeffs"])


def _build_w(doc: dict, sample):
    kind = doc.get("kind")
    if kind not in _W_KEYS:
        raise ParseError(f"unknown solution kind {kind!r}")
    _check_keys(doc, _W_KEYS[kind], f"w {kind}")
    if kind == "inversion":
        return inversion_w(sample, doc["P0"], doc["r"])
    if kind == "parallel":
        return parallel_w(sample, doc["coeffs"])
    if kind == "ltrivial":
        return ltrivial_w(sample, doc["a"], doc["v0"], doc.get("delta"), doc["c"])
    return solve_linear(sample.triple, doc.get("B0"), doc.get("phi0", 1.0),
                        doc.get("gamma0"), doc.get("beta0"),
                        substeps=int(doc.get("substeps", 12)))


def _build_seed(doc: dict):
    _check_keys(doc, {"kind", "params"}, "seed")
    kind = doc.get("kind")
    if kind not in SEED_BUILDERS:
        raise ParseError(f"unknown seed kind {kind!r}; known: {sorted(SEED_BUILDERS)}")
    params = dict(doc.get("params", {}))
    for key, val in list(params.items()):
        if isinstance(val, list):
            params[key] = tuple(val)
    return SEED_BUILDERS[kind](**params)


def _verify_gates(sample, gates: dict, tol: float):
    rep = sf_report(sample)
    failures = []
    gates = dict(gates or {})
    if "k" in gates and rep.k != gates["k"]:
        failures.append(f"k = {rep.k}, expected {gates['k']}")
    if "max_dupin_residual" in gates:
        worst = max(rep.dupin_residuals)
        if worst > gates["max_dupin_residual"]:
            failures.append(f"dupin residual {worst:.3e} > {gates['max_dupin_residual']}")
    if gates.get("holonomic") and not rep.holonomic:
        failures.append("patch is not holonomic")
    if gates.get("c_le_k_minus_1") and not rep.checks.get("c_le_k_minus_1", True):
        failures.append("conformal codimension bound violated")
    return rep, failures


def run_pipeline(spec: dict, outdir: str) -> dict:
    """Execute a pipeline document; returns the summary (also written to disk)."""
    _check_keys(spec, _PIPE_KEYS, "pipeline")
    if spec.get("schema") != serialize.PIPELINE_SCHEMA:
        raise ParseError(f"expected schema {serialize.PIPELINE_SCHEMA}")
    os.makedirs(outdir, exist_ok=True)
    tol = float(spec.get("tolerances", {}).get("validate", 1e-6))
    h = serialize.spec_hash(spec)
    chain = []
    summary = {"spec_sha256": h, "steps": [], "ok": True}

    sample = _build_seed(spec["seed"])
    chain.append({"seed": spec["seed"]})
    serialize.dump_json(serialize.sample_to_dict(sample, provenance={"spec_sha256": h, "chain": list(chain)}),
                        os.path.join(outdir, "step_00_seed.json"))

    for i, step in enumerate(spec.get("steps", []), start=1):
        op = step.get("op")
        if op not in _STEP_KEYS:
            raise ParseError(f"unknown step op {op!r}")
        _check_keys(step, _STEP_KEYS[op], f"step {i} ({op})")
        info = {"op": op}
        try:
            if op == "ltransform":
                T = _build_transform({k: v for k, v in step.items() if k != "op"})
                sample = apply_ltransform(sample, T)
            elif op == "ribaucour":
                w = _build_w(step["w"], sample)
                sample, _jet = ribaucour_transform(sample, w)
            elif op == "recursion":
                ygrid = serialize.grid_from_dict(step["y"])
                res = dupin_step(sample, tuple(step["n_indices"]), ygrid,
                                 B0=step.get("B0"), phi0=step.get("phi0", 1.0),
                                 gamma0=step.get("gamma0"), beta0=step.get("beta0"),
                                 substeps=int(step.get("substeps", 12)))
                rep = validate_triple(res.triple, tol=tol)
                info["validate"] = dict(rep.residuals)
                if not rep.passed:
                    raise StepFailure(i, f"transformed net fails validation: {rep}",
                                      rep.residuals)
                gates = step.get("gates")
                if gates:
                    vrep, failures = _verify_gates(res.sample, gates, tol)
                    info["verify"] = vrep.to_dict()
                    if failures:
                        raise StepFailure(i, "; ".join(failures))
                sample = res.sample
            elif op == "construct":
                from .moebius import generalized_cylinder, generalized_rotation, generalized_tube

                kind = step.get("kind")
                sub = ParallelNormalSubbundle(step.get("n_indices", ()))
                if kind == "tube":
                    sample = generalized_tube(sample, sub, float(step["a"]),
                                              n_angle=int(step.get("n_angle", 21)),
                                              angle_range=tuple(step.get("angle_range", (0.0, 2 * np.pi))))
                elif kind == "cylinder":
                    fib = step.get("fiber")
                    fib = serialize.grid_from_dict(fib) if isinstance(fib, dict) else [np.asarray(x, float) for x in fib]
                    sample = generalized_cylinder(sample, sub, int(step.get("eps", 0)), fib)
                elif kind == "rotation":
                    fib = step.get("fiber")
                    fib = serialize.grid_from_dict(fib) if isinstance(fib, dict) else [np.asarray(x, float) for x in fib]
                    sample = generalized_rotation(sample, sub, step["e"], fib)
                else:
                    raise ParseError(f"unknown construct kind {kind!r}")
            elif op == "n_ribaucour":
                from .ribaucour import n_ribaucour_transform

                w = _build_w(step["w"], sample)
                w = w.canonical(tuple(step["n_indices"]), sample.triple)
                ygrid = serialize.grid_from_dict(step["y"])
                res = n_ribaucour_transform(sample, ParallelNormalSubbundle(step["n_indices"]),
                                            w, ygrid)
                sample = res.sample
            elif op == "verify":
                rep, failures = _verify_gates(sample, step.get("gates"), tol)
                info["report"] = rep.to_dict()
                serialize.dump_json(info["report"], os.path.join(outdir, f"step_{i:02d}_verify.json"))
                serialize.residual_csv(
                    [(name, float(val) if isinstance(val, (int, float)) else 0.0, rep.masked_fraction)
                     for name, val, _ in rep.rows()],
                    os.path.join(outdir, f"step_{i:02d}_verify.csv"))
                if failures:
                    raise StepFailure(i, "; ".join(failures))
            elif op == "export":
                fmt = step.get("format")
                path = os.path.join(outdir, step["path"])
                sl = step.get("slice")
                if fmt == "obj":
                    info["mesh"] = serialize.export_obj(sample, path, sl, step.get("coords"))
                elif fmt == "ply":
                    info["mesh"] = serialize.export_ply(sample, path, sl, step.get("coords"))
                elif fmt == "csv":
                    info["csv"] = serialize.export_csv(sample, path)
                elif fmt == "json":
                    serialize.dump_json(
                        serialize.sample_to_dict(sample, provenance={"spec_sha256": h, "chain": list(chain)}),
                        path)
                else:
                    raise ParseError(f"unknown export format {fmt!r}")
        except StepFailure as e:
            info["error"] = str(e)
            summary["steps"].append(info)
            summary["ok"] = False
            summary["failed_step"] = i
            break
        chain.append({k: v for k, v in step.items()})
        summary["steps"].append(info)

    serialize.dump_json(summary, os.path.join(outdir, "summary.json"))
    final = serialize.sample_to_dict(sample, provenance={"spec_sha256": h, "chain": list(chain)})
    serialize.dump_json(final, os.path.join(outdir, "final_sample.json"))
    return summary


def _cmd_run(args) -> int:
    spec = serialize.load_json(args.spec)
    summary = run_pipeline(spec, args.out)
    if not summary["ok"]:
        print(f"pipeline failed at step {summary.get('failed_step')}", file=sys.stderr)
        return 1
    print(f"pipeline ok; artifacts in {args.out}")
    return 0


def _cmd_seed(args) -> int:
    doc = {"kind": args.kind, "params": json.loads(args.params) if args.params else {}}
    if args.grid:
        doc["params"]["shape"] = tuple(int(x) for x in args.grid.split(","))
    sample = _build_seed(doc)
    serialize.dump_json(serialize.sample_to_dict(sample), args.out)
    print(f"seed '{args.kind}' written to {args.out}")
    return 0


def _cmd_transform(args) -> int:
    sample = serialize.sample_from_dict(serialize.load_json(args.input))
    chain = serialize.load_json(args.spec)
    if not isinstance(chain, list):
        raise ParseError("a transform chain document is an ordered JSON list")
    for doc in chain:
        sample = apply_ltransform(sample, _build_transform(doc))
    serialize.dump_json(serialize.sample_to_dict(sample, provenance={"chain": chain}), args.out)
    print(f"transformed sample written to {args.out}")
    return 0


def _cmd_recurse(args) -> int:
    sample = serialize.sample_from_dict(serialize.load_json(args.input))
    step = serialize.load_json(args.spec)
    _check_keys(step, _STEP_KEYS["recursion"] - {"op"}, "recursion spec")
    ygrid = serialize.grid_from_dict(step["y"])
    res = dupin_step(sample, tuple(step["n_indices"]), ygrid, B0=step.get("B0"),
                     phi0=step.get("phi0", 1.0), gamma0=step.get("gamma0"),
                     beta0=step.get("beta0"), substeps=int(step.get("substeps", 12)))
    serialize.dump_json(serialize.sample_to_dict(res.sample), args.out)
    print(f"recursion output ({res.triple.n_classes} classes) written to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    sample = serialize.sample_from_dict(serialize.load_json(args.input))
    rep = sf_report(sample)
    doc = rep.to_dict()
    serialize.dump_json(doc, args.out)
    if args.csv:
        serialize.residual_csv(
            [(name, float(val) if isinstance(val, (int, float)) else 0.0, rep.masked_fraction)
             for name, val, _ in rep.rows()], args.csv)
    if args.mask_report:
        print(f"masked fraction: {rep.masked_fraction:.4f}")
    worst = max(rep.dupin_residuals) if rep.dupin_residuals else 0.0
    print(f"k={rep.k} dupin_max={worst:.3e} holonomic={rep.holonomic} c={rep.conformal_codim}")
    if args.tol is not None and worst > args.tol:
        print(f"dupin residual exceeds tolerance {args.tol}", file=sys.stderr)
        return 1
    return 0


def _cmd_export(args) -> int:
    sample = serialize.sample_from_dict(serialize.load_json(args.input))
    sl = None
    if args.slice:
        sl = [None if tok in (":", "") else int(tok) for tok in args.slice.split(",")]
    if args.format == "obj":
        info = serialize.export_obj(sample, args.out, sl)
    elif args.format == "ply":
        info = serialize.export_ply(sample, args.out, sl)
    elif args.format == "csv":
        info = serialize.export_csv(sample, args.out)
    elif args.format == "json":
        serialize.dump_json(serialize.sample_to_dict(sample), args.out)
        info = {}
    else:
        raise ParseError(f"unknown format {args.format!r}")
    print(f"exported {args.format} to {args.out} {info}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dupin",
                                 description="Dupin submanifolds by Ribaucour transformations")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a pipeline document")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("seed", help="build a named seed sample")
    p.add_argument("--kind", required=True)
    p.add_argument("--params", help="JSON object of constructor parameters")
    p.add_argument("--grid", help="comma-separated node counts")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_seed)

    p = sub.add_parser("transform", help="apply a transform-chain document to a sample")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_transform)

    p = sub.add_parser("recurse", help="one holonomic recursion step")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_recurse)

    p = sub.add_parser("verify", help="independent diagnostics of a sample")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--tol", type=float)
    p.add_argument("--mask-report", action="store_true")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("export", help="export a sample to obj/ply/csv/json")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--slice", help="comma-separated indices, ':' for free axes")
    p.set_defaults(fn=_cmd_export)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except DupinError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
