import numpy as np
import pytest

from dupin.chains import (
    LTrivialFamily,
    euclidean_cylinder_match,
    euclidean_rotation_match,
    euclidean_tube_match,
    normalize_to_form,
    quadric_cylinder_residual,
)
from dupin.moebius import LTrivialSpec
from dupin.net import ParallelNormalSubbundle
from dupin.ribaucour import ltrivial_w, n_ribaucour_transform
from dupin.numerics import TensorGrid
from dupin.seeds import circle_seed


@pytest.fixture(scope="module")
def circle():
    return circle_seed(radius=1.0, n=21, u_range=(0.2, 1.2), ambient=4)


NSUB = ParallelNormalSubbundle((1,))
FIBER = (np.linspace(0.5, 1.5, 11),)


def make_family(circle, a, v0, c):
    spec = LTrivialSpec(a, np.asarray(v0, float), np.zeros(circle.n_normals), c, exact=True)
    return LTrivialFamily(circle, spec, NSUB, FIBER)


def test_family_positions_match_transform_engine(circle):
    # the closed-form family equals the N-Ribaucour engine on matching fibers
    spec = (1.0, np.array([0.2, 0.1, 0.0, 0.0]), None, 1.0)
    w = ltrivial_w(circle, spec[0], spec[1], spec[2], spec[3])
    w = w.canonical(NSUB.indices, circle.triple)
    # canonicalization rescales by 1/phi(base) and shifts the fiber origin
    lam = 1.0 / (0.5 * (spec[0] * (circle.positions[0] ** 2).sum() + 2 * circle.positions[0] @ spec[1] + spec[3]))
    shift = (spec[0] * circle.positions[0] + spec[1]) @ circle.normals[1][0] * lam
    res = n_ribaucour_transform(circle, NSUB, w, TensorGrid((11,), (0.1,), (0.5,)))
    fam = LTrivialFamily(circle, LTrivialSpec(*spec[:2], np.zeros(circle.n_normals), spec[3], exact=True),
                         NSUB, ((np.arange(11) * 0.1 + 0.5 + shift) / lam,))
    assert np.abs(fam.positions() - res.sample.positions).max() < 1e-11


class TestNormalization:
    def test_eps_plus_one(self, circle):
        fam, eps, log = normalize_to_form(make_family(circle, 1.0, [0, 0, 0, 0], 1.0))
        assert eps == 1
        assert max(s["commuting_residual"] for s in log) < 1e-12
        assert quadric_cylinder_residual(fam, eps) < 1e-12

    def test_eps_minus_one(self, circle):
        fam, eps, log = normalize_to_form(make_family(circle, 1.0, [1.5, 0, 0, 0], 1.0))
        assert eps == -1
        assert quadric_cylinder_residual(fam, eps) < 1e-10

    def test_eps_zero(self, circle):
        fam, eps, log = normalize_to_form(make_family(circle, 1.0, [1.0, 0, 0, 0], 1.0))
        assert eps == 0
        assert quadric_cylinder_residual(fam, eps) < 1e-12

    def test_a_zero_route(self, circle):
        # parallel-translation-like data: a = 0 goes through the inversion detour
        fam0 = make_family(circle, 0.0, [0.2, 0.0, 0.0, 0.0], 0.9)
        fam, eps, log = normalize_to_form(fam0)
        names = [s["step"] for s in log]
        assert "make_a_nonzero" in names
        assert abs(fam.spec.a - 1.0) < 1e-12
        assert max(s["commuting_residual"] for s in log) < 1e-10


class TestEuclideanTargets:
    def test_cylinder_match(self, circle):
        fam, eps, _ = normalize_to_form(make_family(circle, 1.0, [1.0, 0, 0, 0], 1.0))
        m = euclidean_cylinder_match(fam)
        assert m["residual"] < 1e-12

    def test_rotation_match(self, circle):
        fam, eps, _ = normalize_to_form(make_family(circle, 1.0, [1.5, 0, 0, 0], 1.0))
        m = euclidean_rotation_match(fam, e=np.array([1.0, 0, 0, 0]))
        assert m["residual"] < 1e-12
        assert max(r for _, r in m["chain"]) < 1e-12

    def test_tube_match(self, circle):
        fam, eps, _ = normalize_to_form(make_family(circle, 1.0, [0, 0, 0, 0], 1.0))
        m = euclidean_tube_match(fam, xi_index=2)
        assert m["radius_residual"] < 1e-12
        assert m["angle_base_spread"] < 1e-12
        assert m["residual"] < 1e-12


def test_delta_data_goes_through_parallel_step(circle):
    spec = LTrivialSpec(1.0, np.zeros(4), np.array([0.0, 0.0, 0.3]), 0.8, exact=True)
    fam = LTrivialFamily(circle, spec, NSUB, FIBER)
    out, eps, log = normalize_to_form(fam)
    names = [s["step"] for s in log]
    assert "kill_delta" in names
    assert max(s["commuting_residual"] for s in log) < 1e-10
    # epsilon matches the discriminant of the original data
    assert eps == int(np.sign(spec.discriminant()))


def test_cq_search_triggers_when_offset_degenerates(circle):
    # delta with <delta, eta> hitting 1 forces the conformal C(q) rescue
    spec = LTrivialSpec(1.0, np.zeros(4), np.array([-1.0, 0.0, 0.0]), 0.8, exact=True)
    fam = LTrivialFamily(circle, spec, NSUB, FIBER)
    out, eps, log = normalize_to_form(fam)
    names = [s["step"] for s in log]
    assert "conformal_rescue" in names
    assert max(s["commuting_residual"] for s in log) < 1e-9
