import numpy as np
import pytest

from dupin.net import ImmersionSample, ParallelNormalSubbundle
from dupin.numerics import TensorGrid
from dupin.seeds import (
    circle_seed,
    cylinder_seed,
    ellipsoid_patch,
    flat_seed,
    sphere_patch,
    torus_seed,
)
from dupin.verify import (
    conullity_integrability,
    dupin_residual,
    dupin_tensor_space,
    extract_principal_normals,
    normal_curvature_residual,
    numeric_jet,
    sf_report,
    sphere_leaf_check,
)


@pytest.fixture(scope="module")
def torus_v():
    return torus_seed(R=1.0, r=0.3, shape=(41, 41), u1_range=(0.1, 0.9), u2_range=(0.2, 1.0))


def clifford_product(a=1.0, b=0.6, n=31):
    """Product of two circles in R^4: a 2-Dupin surface with flat normal bundle."""
    g = TensorGrid((n, n), (0.8 / (n - 1), 0.8 / (n - 1)), (0.1, 0.2))
    U, V = g.meshgrid()
    pos = np.stack([a * np.cos(U), a * np.sin(U), b * np.cos(V), b * np.sin(V)], axis=-1)
    return ImmersionSample(g, pos)


class TestNumericJet:
    def test_flat_plane_alpha_zero(self):
        s = flat_seed(shape=(11, 11))
        jet = numeric_jet(s)
        assert np.abs(jet.alpha[..., jet.interior, :]).max() < 1e-12

    def test_unit_sphere_second_form(self):
        s = sphere_patch(radius=1.0, shape=(121, 121), u_range=(0.0, 1.2), v_range=(-0.5, 0.7))
        jet = numeric_jet(s)
        # alpha(X, X) = -(outward normal) for unit X: diagonal entries of
        # alpha over metric must equal -position direction on the unit sphere
        nrm = s.positions / np.linalg.norm(s.positions, axis=-1)[..., None]
        for i in range(2):
            kap = jet.alpha[i, i] / jet.metric[..., i, i][..., None]
            err = np.abs(kap + nrm)[jet.interior].max()
            assert err < 1e-6

    def test_cached_forms_match_oracle(self, torus_v):
        jet = numeric_jet(torus_v)
        for i in range(2):
            kap_fd = (jet.alpha[i, i] * torus_v.normals[0]).sum(-1) / jet.metric[..., i, i]
            err = np.abs(kap_fd - torus_v.sff[i, 0])[jet.interior].max()
            assert err < 1e-6


class TestExtraction:
    def test_torus_two_classes(self, torus_v):
        pd = extract_principal_normals(torus_v)
        assert pd.k == 2
        assert pd.multiplicities == (1, 1)

    def test_cylinder_has_zero_class(self):
        s = cylinder_seed(shape=(41, 41), u_range=(0.1, 0.9))
        jet = numeric_jet(s)
        pd = extract_principal_normals(s, jet=jet)
        assert pd.k == 2
        inner = np.linalg.norm(pd.eta, axis=-1)[:, jet.interior]
        norms = sorted(inner.max(axis=1))
        assert norms[0] < 1e-7 and abs(norms[1] - 1.0) < 1e-6

    def test_tube_over_torus_three_classes(self):
        from dupin.moebius import generalized_tube

        base = torus_seed(R=1.0, r=0.3, shape=(25, 25), u1_range=(0.1, 0.7),
                          u2_range=(0.2, 0.8), ambient=4)
        tube = generalized_tube(base, ParallelNormalSubbundle((0, 1)), 0.1,
                                n_angle=25, angle_range=(0.3, 0.9))
        pd = extract_principal_normals(tube)
        assert pd.k == 3

    def test_sphere_is_single_class(self):
        s = sphere_patch(radius=1.0, shape=(41, 41))
        pd = extract_principal_normals(s)
        assert pd.k == 1
        assert pd.multiplicities == (2,)


class TestDupinResidual:
    def test_torus_is_dupin(self, torus_v):
        jet = numeric_jet(torus_v)
        pd = extract_principal_normals(torus_v, jet=jet)
        assert dupin_residual(torus_v, pd, jet=jet).max() < 1e-6

    def test_cyclide_is_dupin(self):
        # inversion shrinks the patch by |f - P0|^2 ~ 8; the trailing homothety
        # restores unit scale (conformal, Dupin-ness exactly preserved) so the
        # residual sits at truncation level rather than the roundoff floor
        from dupin.moebius import Homothety, Inversion, Translate, apply_ltransform

        t = torus_seed(R=1.0, r=0.3, shape=(41, 41), u1_range=(0.1, 0.5), u2_range=(0.2, 0.6))
        cyc = apply_ltransform(apply_ltransform(t, Translate([0.0, 0.0, 2.0])), Inversion())
        cyc = apply_ltransform(cyc, Homothety(8.0))
        jet = numeric_jet(cyc)
        pd = extract_principal_normals(cyc, jet=jet)
        assert dupin_residual(cyc, pd, jet=jet).max() < 1e-6

    def test_ellipsoid_is_not_dupin(self):
        el = ellipsoid_patch(shape=(41, 41))
        pd = extract_principal_normals(el)
        assert dupin_residual(el, pd).max() > 1e-2


class TestConullity:
    def test_cylinder_classes_integrable(self):
        s = cylinder_seed(shape=(41, 41), u_range=(0.1, 0.9))
        jet = numeric_jet(s)
        pd = extract_principal_normals(s, jet=jet)
        for j in range(2):
            rep = conullity_integrability(s, pd, j, jet=jet)
            assert rep["integrable"]

    def test_recursion_output_holonomic(self, recursion_step1):
        s = recursion_step1.sample
        jet = numeric_jet(s)
        pd = extract_principal_normals(s, jet=jet)
        for j in range(pd.k):
            rep = conullity_integrability(s, pd, j, jet=jet)
            assert rep["integrable"], rep

    def test_clifford_product_bracket_decides(self):
        # k = 2: the pairwise-independence sufficient condition is empty and
        # the bracket test must decide on its own
        s = clifford_product()
        jet = numeric_jet(s)
        pd = extract_principal_normals(s, jet=jet)
        assert pd.k == 2
        for j in range(2):
            rep = conullity_integrability(s, pd, j, jet=jet)
            assert rep["sufficient_independence"] is None
            assert rep["integrable"]


class TestSphereLeaves:
    def test_generic_spheres(self, recursion_step1):
        rep = sphere_leaf_check(recursion_step1)
        assert rep["max_fit_residual"] < 1e-7
        assert all(k == "sphere" for k in rep["kinds"].reshape(-1))
        assert rep["center_constancy"] < 1e-7

    def test_flat_leaves_for_subbundle_valued_F(self):
        from dupin.integrable import solve_linear
        from dupin.ribaucour import n_ribaucour_transform

        c = circle_seed(radius=1.0, n=21, u_range=(0.0, 0.4), ambient=4)
        sol = solve_linear(c.triple, (0.0,), 1.0, (0.0,), (0.0, 0.4, 0.0), substeps=8)
        sol = sol.canonical((1,), c.triple)
        res = n_ribaucour_transform(c, ParallelNormalSubbundle((1,)), sol,
                                    TensorGrid((9,), (0.1,), (0.3,)))
        rep = sphere_leaf_check(res)
        assert all(k == "flat" for k in rep["kinds"].reshape(-1))

    def test_cylinder_relative_nullity_flats(self):
        # relative nullity (eta = 0): generalized cylinder leaves are lines
        from dupin.moebius import generalized_cylinder

        c = circle_seed(radius=1.0, n=21, u_range=(0.1, 1.1), ambient=3)
        cyl = generalized_cylinder(c, ParallelNormalSubbundle((1,)), 0,
                                   TensorGrid((9,), (0.2,), (0.1,)))
        # every gamma-line is an affine line
        from dupin.numerics import sphere_fit, AffineFlat

        for iu in (0, 10, 20):
            fit = sphere_fit(cyl.positions[iu])
            assert isinstance(fit, AffineFlat) and fit.dim == 1


class TestSfReport:
    def test_torus_dimensions(self, torus_v):
        rep = sf_report(torus_v)
        assert rep.k == 2
        assert rep.dim_Sf == 1 == rep.conformal_codim
        assert rep.dim_N1 == 1
        assert rep.holonomic
        assert rep.checks["c_le_k_minus_1"] and rep.checks["n1_bound"]

    def test_sphere_k1(self):
        s = sphere_patch(radius=1.0, shape=(41, 41))
        rep = sf_report(s)
        assert rep.k == 1
        assert rep.dim_Sf == 0 == rep.conformal_codim

    def test_recursion_step2_bound(self, recursion_step2):
        rep = sf_report(recursion_step2.sample)
        assert rep.k == 3
        assert rep.conformal_codim <= 2
        assert rep.checks["c_le_k_minus_1"]

    def test_report_serializes(self, torus_v):
        rep = sf_report(torus_v)
        d = rep.to_dict()
        assert d["k"] == 2
        rows = rep.rows()
        assert any(r[0] == "dupin_residual_0" for r in rows)


class TestDupinTensorSpace:
    def test_torus_dimension_two(self, torus_v):
        rep = dupin_tensor_space(torus_v.triple)
        assert rep["dimension"] == 2
        assert rep["rank_equals_k"]
        assert rep["gap"] > 1e6
        assert rep["probe_span_residual"] < 1e-9

    def test_cylinder_contains_identity_tensor(self):
        s = cylinder_seed(shape=(21, 21))
        rep = dupin_tensor_space(s.triple)
        assert rep["dimension"] == 2
        # B = v (phi_m = 1) is the identity tensor; it must lie in the span
        t = s.triple
        basis = rep["basis"]
        target = t.v.reshape(-1)
        coef, *_ = np.linalg.lstsq(basis.T, target, rcond=None)
        assert np.abs(basis.T @ coef - target).max() < 1e-9

    def test_recursion_net_dimension_three(self, recursion_step2):
        rep = dupin_tensor_space(recursion_step2.triple, substeps=4)
        assert rep["dimension"] == 3
        assert rep["rank_equals_k"]
        assert rep["probe_span_residual"] < 1e-9


def test_flat_normal_bundle_residuals_small_on_suite(torus_v, recursion_step1):
    for s in (torus_v, recursion_step1.sample):
        jet = numeric_jet(s)
        assert normal_curvature_residual(jet) < 1e-6


def test_focal_constancy_on_torus(torus_v):
    from dupin.verify import focal_constancy

    jet = numeric_jet(torus_v)
    pd = extract_principal_normals(torus_v, jet=jet)
    res = focal_constancy(torus_v, pd, jet=jet)
    # both torus classes have nonvanishing normals: leaves are circles whose
    # centers (the focal map) are constant along them
    assert np.isfinite(res).all()
    assert res.max() < 1e-5


def test_focal_constancy_skips_vanishing_class():
    from dupin.verify import focal_constancy

    s = cylinder_seed(shape=(41, 41), u_range=(0.1, 0.9))
    jet = numeric_jet(s)
    pd = extract_principal_normals(s, jet=jet)
    res = focal_constancy(s, pd, jet=jet)
    assert np.isnan(res).sum() == 1  # the ruling class has eta = 0 (flat leaves)
    assert np.nanmax(res) < 1e-5
