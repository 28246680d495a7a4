import json
import os

import numpy as np
import pytest

from dupin.cli import main, run_pipeline
from dupin.errors import ParseError
from dupin.seeds import torus_seed
from dupin import serialize


PIPE_TUBE = {
    "schema": "dupin/pipeline@1",
    "seed": {"kind": "circle", "params": {"radius": 1.0, "n": 21,
                                          "u_range": [0.0, 6.283185307179586]}},
    "steps": [
        {"op": "construct", "kind": "tube", "n_indices": [0, 1], "a": 0.3},
        {"op": "verify", "gates": {"k": 2, "max_dupin_residual": 1e-3, "holonomic": True}},
        {"op": "export", "format": "obj", "path": "torus.obj"},
    ],
}


class TestSerialize:
    def test_sample_roundtrip(self, torus_patch, tmp_path):
        doc = serialize.sample_to_dict(torus_patch)
        path = tmp_path / "s.json"
        serialize.dump_json(doc, path)
        back = serialize.sample_from_dict(serialize.load_json(path))
        assert np.abs(back.positions - torus_patch.positions).max() == 0.0
        assert np.abs(back.triple.v - torus_patch.triple.v).max() == 0.0
        assert back.triple.class_map.classes == torus_patch.triple.class_map.classes

    def test_triple_roundtrip(self, torus_patch):
        doc = serialize.triple_to_dict(torus_patch.triple)
        back = serialize.triple_from_dict(doc)
        assert np.abs(back.h - torus_patch.triple.h).max() == 0.0

    def test_schema_rejected(self):
        with pytest.raises(ParseError):
            serialize.triple_from_dict({"schema": "bogus"})

    def test_obj_counts_and_masking(self, tmp_path):
        t = torus_seed(R=1.0, r=0.3, shape=(9, 9))
        mask = np.ones((9, 9), dtype=bool)
        mask[4, 4] = False
        t.mask = mask
        info = serialize.export_obj(t, tmp_path / "m.obj", None)
        assert info["vertices"] == 81
        assert info["faces"] == 8 * 8 - 4  # four cells touch the masked node

    def test_csv_rows(self, tmp_path, torus_patch):
        info = serialize.export_csv(torus_patch, tmp_path / "t.csv")
        assert info["rows"] == torus_patch.grid.size
        header = open(tmp_path / "t.csv").readline().strip().split(",")
        assert header[:2] == ["u0", "u1"]


class TestPipeline:
    def test_cookbook_circle_tube_verify(self, tmp_path):
        out = tmp_path / "out"
        summary = run_pipeline(PIPE_TUBE, str(out))
        assert summary["ok"]
        obj = (out / "torus.obj").read_text().splitlines()
        nv = sum(1 for line in obj if line.startswith("v "))
        assert nv == 21 * 21

    def test_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_pipeline(PIPE_TUBE, str(a))
        run_pipeline(PIPE_TUBE, str(b))
        for name in ("final_sample.json", "torus.obj", "summary.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_empty_steps_exports_seed_only(self, tmp_path):
        spec = {"schema": "dupin/pipeline@1",
                "seed": {"kind": "torus", "params": {"shape": [9, 9]}}, "steps": []}
        summary = run_pipeline(spec, str(tmp_path / "o"))
        assert summary["ok"] and summary["steps"] == []
        assert (tmp_path / "o" / "step_00_seed.json").exists()

    def test_unknown_keys_rejected(self, tmp_path):
        spec = dict(PIPE_TUBE)
        spec["typo_key"] = 1
        with pytest.raises(ParseError):
            run_pipeline(spec, str(tmp_path / "o"))
        spec2 = json.loads(json.dumps(PIPE_TUBE))
        spec2["steps"][0]["radius"] = 0.3
        with pytest.raises(ParseError):
            run_pipeline(spec2, str(tmp_path / "o"))

    def test_broken_recursion_fails_at_validation(self, tmp_path):
        # a degenerate recursion request fails with a recorded step failure
        spec = {
            "schema": "dupin/pipeline@1",
            "seed": {"kind": "circle", "params": {"radius": 1.0, "n": 21, "u_range": [0.0, 0.4]}},
            "steps": [
                {"op": "recursion", "n_indices": [1],
                 "y": {"shape": [9], "spacings": [0.05], "origins": [0.5]},
                 "B0": [0.0], "phi0": 1.0, "gamma0": [0.0], "beta0": [1.0, 0.0, 0.0]},
            ],
        }
        with pytest.raises(ValueError):
            run_pipeline(spec, str(tmp_path / "o"))

    def test_provenance_embedded(self, tmp_path):
        out = tmp_path / "o"
        run_pipeline(PIPE_TUBE, str(out))
        doc = serialize.load_json(out / "final_sample.json")
        assert doc["provenance"]["spec_sha256"] == serialize.spec_hash(PIPE_TUBE)
        assert any("op" in c and c["op"] == "construct" for c in doc["provenance"]["chain"] if isinstance(c, dict))


class TestCommands:
    def test_seed_verify_export_flow(self, tmp_path):
        seed = tmp_path / "seed.json"
        rc = main(["seed", "--kind", "torus", "--grid", "21,21", "--out", str(seed)])
        assert rc == 0
        rep = tmp_path / "rep.json"
        rc = main(["verify", "--in", str(seed), "--out", str(rep), "--csv", str(tmp_path / "rep.csv"),
                   "--tol", "1e-3", "--mask-report"])
        assert rc == 0
        doc = serialize.load_json(rep)
        assert doc["k"] == 2
        mesh = tmp_path / "m.ply"
        rc = main(["export", "--in", str(seed), "--format", "ply", "--out", str(mesh)])
        assert rc == 0
        assert mesh.read_text().startswith("ply")

    def test_transform_chain_document(self, tmp_path, torus_patch):
        sp = tmp_path / "s.json"
        serialize.dump_json(serialize.sample_to_dict(torus_patch), sp)
        chain = [{"kind": "translate", "u": [0.0, 0.0, 2.0]}, {"kind": "inversion"},
                 {"kind": "homothety", "k": 2.0}]
        cf = tmp_path / "chain.json"
        serialize.dump_json(chain, cf)
        outp = tmp_path / "o.json"
        rc = main(["transform", "--in", str(sp), "--spec", str(cf), "--out", str(outp)])
        assert rc == 0
        out = serialize.sample_from_dict(serialize.load_json(outp))
        f = torus_patch.positions + np.array([0.0, 0.0, 2.0])
        expected = 2.0 * f / (f**2).sum(-1)[..., None]
        assert np.abs(out.positions - expected).max() < 1e-12

    def test_verify_tol_gate_fails(self, tmp_path):
        from dupin.seeds import ellipsoid_patch

        sp = tmp_path / "e.json"
        serialize.dump_json(serialize.sample_to_dict(ellipsoid_patch(shape=(21, 21))), sp)
        rc = main(["verify", "--in", str(sp), "--out", str(tmp_path / "r.json"), "--tol", "1e-4"])
        assert rc == 1
