import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optssr.dissipation import (ClassificationGap, ConstitutiveParams, ReturnBranch,
                                _branch_quantities, _classify, brute_force_d1, classify,
                                classify_principal, d1_eval, evaluate, sample_admissible_stress,
                                t_alpha)
from optssr.reduction import Strength, reduce_strength
from optssr.tensors import Elasticity, compliance_energy, to_mandel

EL = Elasticity(40_000.0, 0.3)

PARAM_SETS = {
    "benchmark": ConstitutiveParams.from_reduced(
        reduce_strength(1.0, Strength.from_degrees(6, 45, 45)), EL),
    "reduced": ConstitutiveParams.from_reduced(
        reduce_strength(1.52, Strength.from_degrees(6, 45, 45)), EL),
    "low_friction": ConstitutiveParams.from_reduced(
        reduce_strength(1.0, Strength.from_degrees(20, 10, 10)), Elasticity(10_000.0, 0.45)),
}


def diag(e):
    out = np.zeros(e.shape[:-1] + (3, 3))
    out[..., [0, 1, 2], [0, 1, 2]] = e
    return out


def rotate(rng, e):
    q, _ = np.linalg.qr(rng.normal(size=(len(e), 3, 3)))
    return q @ diag(e) @ np.swapaxes(q, 1, 2)


def yield_strain(p):
    return float(p.c_cos) / float(p.G)


def covering_strains(rng, n, scale):
    """Sorted principal strains spread over every return case."""
    generic = rng.normal(scale=scale, size=(n, 3))
    # right edge needs e2 close to e3 with a dominant e1
    a = np.abs(rng.normal(scale=scale, size=n))
    b = rng.normal(scale=0.3 * scale, size=n)
    right = np.stack([a, b, b - np.abs(rng.normal(scale=0.02 * scale, size=n))], axis=1)
    # left edge: e1 close to e2, dominant compression e3
    left = np.stack([b + np.abs(rng.normal(scale=0.02 * scale, size=n)), b, -a], axis=1)
    # apex: dominant dilation
    apex = a[:, None] * (1.0 + 0.05 * rng.normal(size=(n, 3)))
    tiny = rng.normal(scale=1e-3 * scale, size=(n, 3))
    e = np.concatenate([generic, right, left, apex, tiny])
    return -np.sort(-e, axis=1)


@pytest.mark.parametrize("name", sorted(PARAM_SETS))
def test_closed_form_matches_numerical_supremum(name):
    p = PARAM_SETS[name]
    rng = np.random.default_rng(2024)
    e = covering_strains(rng, 250, 3 * yield_strain(p))
    assert len(e) >= 1000
    res = evaluate(diag(e), p)
    counts = np.bincount(res.branch, minlength=5)
    assert np.all(counts >= 10), counts
    oracle = brute_force_d1(diag(e), p)
    ref = np.maximum(np.abs(res.d1), 1e-12)
    rel = np.abs(res.d1 - oracle) / ref
    for code in ReturnBranch:
        assert rel[res.branch == code].max() <= 1e-6, code.name


def test_closed_form_is_rotation_invariant_and_coaxial():
    p = PARAM_SETS["reduced"]
    rng = np.random.default_rng(3)
    e = covering_strains(rng, 100, 1e-3)
    eps = rotate(rng, e)
    rot, ref = evaluate(eps, p), evaluate(diag(e), p)
    np.testing.assert_allclose(rot.d1, ref.d1, rtol=1e-9, atol=1e-14)
    comm = eps @ rot.t1 - rot.t1 @ eps
    assert np.abs(comm).max() <= 1e-9 * np.abs(rot.t1).max() * np.abs(eps).max()


def test_stress_is_admissible_and_attains_supremum():
    p = PARAM_SETS["benchmark"]
    rng = np.random.default_rng(4)
    e = covering_strains(rng, 200, 1e-3)
    res = evaluate(diag(e), p)
    sig = np.diagonal(res.t1, axis1=-2, axis2=-1)
    s, cc = float(p.sin_phi), float(p.c_cos)
    f = (sig.max(1) - sig.min(1)) + (sig.max(1) + sig.min(1)) * s - 2 * cc
    assert f.max() <= 1e-9 * (np.abs(sig).max() + cc)
    sig_t = res.t1
    value = np.einsum("nij,nij->n", sig_t, diag(e)) - compliance_energy(EL, sig_t)
    np.testing.assert_allclose(value, res.d1, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("name", sorted(PARAM_SETS))
def test_stress_is_gradient_of_energy(name):
    p = PARAM_SETS[name]
    rng = np.random.default_rng(5)
    e = covering_strains(rng, 40, 3 * yield_strain(p))
    eps = rotate(rng, e)
    res = evaluate(eps, p)
    h = 1e-8
    d = rng.normal(size=eps.shape)
    d = 0.5 * (d + np.swapaxes(d, 1, 2))
    fd = (evaluate(eps + h * d, p, False).d1 - evaluate(eps - h * d, p, False).d1) / (2 * h)
    exact = np.einsum("nij,nij->n", res.t1, d)
    scale = np.abs(res.t1).max(axis=(1, 2)) * np.abs(d).max(axis=(1, 2)) + 1.0
    assert np.max(np.abs(fd - exact) / scale) <= 1e-5


@pytest.mark.parametrize("name", sorted(PARAM_SETS))
def test_tangent_matches_finite_differences(name):
    p = PARAM_SETS[name]
    rng = np.random.default_rng(6)
    e = covering_strains(rng, 40, 3 * yield_strain(p))
    eps = rotate(rng, e)
    res = evaluate(eps, p)
    h = 1e-8
    d = rng.normal(size=eps.shape)
    d = 0.5 * (d + np.swapaxes(d, 1, 2))
    fd = (to_mandel(evaluate(eps + h * d, p, False).t1)
          - to_mandel(evaluate(eps - h * d, p, False).t1)) / (2 * h)
    exact = np.einsum("nij,nj->ni", res.tangent, to_mandel(d))
    # finite differences straddling a case boundary are not meaningful
    same = ((evaluate(eps + h * d, p, False).branch == res.branch)
            & (evaluate(eps - h * d, p, False).branch == res.branch))
    assert same.mean() > 0.9
    err = np.abs(fd - exact).max(axis=1)[same]
    scale = np.abs(exact).max(axis=1)[same] + 1e-3 * float(p.K)
    assert np.max(err / scale) <= 1e-5


def test_tangent_is_symmetric_and_positive_semidefinite():
    p = PARAM_SETS["reduced"]
    rng = np.random.default_rng(7)
    res = evaluate(rotate(rng, covering_strains(rng, 100, 1e-3)), p)
    t = res.tangent
    np.testing.assert_allclose(t, np.swapaxes(t, 1, 2), atol=1e-8 * np.abs(t).max())
    assert np.linalg.eigvalsh(t).min() >= -1e-8 * np.abs(t).max()


def test_elastic_branch_is_quadratic_energy():
    p = PARAM_SETS["benchmark"]
    eps = diag(np.array([[1e-6, 0.0, -1e-6]]))
    res = evaluate(eps, p)
    assert res.branch[0] == ReturnBranch.ELASTIC
    assert res.d1[0] == pytest.approx(EL.G * 2e-12, rel=1e-12)


def test_apex_energy_for_pure_dilation():
    p = PARAM_SETS["benchmark"]
    t = 1e-2
    res = d1_eval(t * np.eye(3), p)
    assert res.branch is ReturnBranch.APEX
    apex = float(p.c_cos / p.sin_phi)
    expected = apex * 3 * t - float(p.c_cos) ** 2 / (2 * EL.K * float(p.sin_phi) ** 2)
    assert res.d1 == pytest.approx(expected, rel=1e-12)
    np.testing.assert_allclose(res.t1, apex * np.eye(3), rtol=1e-12)


def test_no_classification_gap_on_a_million_strains():
    rng = np.random.default_rng(8)
    for p in PARAM_SETS.values():
        e = -np.sort(-rng.normal(scale=1e-3, size=(1_000_000, 3)), axis=1)
        assert np.all(classify_principal(e, p) >= 0)


def test_leading_e2_variant_of_apex_threshold_leaves_gaps():
    p = PARAM_SETS["benchmark"]
    rng = np.random.default_rng(8)
    e = -np.sort(-rng.normal(scale=1e-3, size=(1_000_000, 3)), axis=1)
    q = _branch_quantities(e, p)
    assert np.all(_classify(q) >= 0)
    q["g_ra"] = (2.0 * e[:, 1] - e[:, 1] - e[:, 2]) / (3 + q["s"])
    assert np.count_nonzero(_classify(q) < 0) > 1000


def test_classify_scalar_interface():
    p = PARAM_SETS["benchmark"]
    assert classify([1e-2, 1e-2, 1e-2], p) is ReturnBranch.APEX
    assert classify([0.0, 0.0, 0.0], p) is ReturnBranch.ELASTIC
    with pytest.raises(ValueError, match="descending"):
        classify([0.0, 1.0, -1.0], p)
    with pytest.raises(ClassificationGap):
        classify_principal(np.array([[np.nan, 0.0, 0.0]]), p)


def test_regularised_response_scaling():
    p = PARAM_SETS["reduced"]
    rng = np.random.default_rng(9)
    eps = rotate(rng, covering_strains(rng, 20, 1e-2))
    for alpha in (0.5, 10.0, 1000.0):
        r = t_alpha(eps, alpha, p)
        base = evaluate(alpha * eps, p)
        np.testing.assert_allclose(r.d1, base.d1 / alpha, rtol=1e-13)
        np.testing.assert_allclose(r.t1, base.t1, rtol=1e-13)
        np.testing.assert_allclose(r.tangent, alpha * base.tangent, rtol=1e-12, atol=1e-6)
    with pytest.raises(ValueError):
        t_alpha(eps, 0.0, p)


def test_regularisation_tends_to_plastic_dissipation():
    # a strain on the associated flow cone dissipates c cot(phi) tr(e) in the limit
    p = PARAM_SETS["benchmark"]
    s, cc = float(p.sin_phi), float(p.c_cos)
    e = np.array([1 + s, 0.0, -(1 - s)]) * 1e-3
    limit = cc / s * e.sum()
    vals = [t_alpha(diag(e), a, p).d1 for a in (1e2, 1e4, 1e6)]
    assert vals[0] <= vals[1] <= vals[2] <= limit * (1 + 1e-12)
    assert vals[2] == pytest.approx(limit, rel=1e-3)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(-1e-2, 1e-2, allow_nan=False), min_size=3, max_size=3),
       st.lists(st.floats(-1e-2, 1e-2, allow_nan=False), min_size=3, max_size=3))
def test_energy_is_nonnegative_and_convex(a, b):
    p = PARAM_SETS["benchmark"]
    ea, eb = diag(np.array(a)), diag(np.array(b))
    da, db = d1_eval(ea, p).d1, d1_eval(eb, p).d1
    dm = d1_eval(0.5 * (ea + eb), p).d1
    assert da >= 0.0 and db >= 0.0
    assert dm <= 0.5 * (da + db) + 1e-12 * (1 + abs(da) + abs(db))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_fenchel_inequality_against_admissible_stresses(seed):
    p = PARAM_SETS["reduced"]
    rng = np.random.default_rng(seed)
    e = rng.normal(scale=1e-3, size=3)
    sig = sample_admissible_stress(rng, 50, p, spread=20.0)
    lower = sig @ e - np.array([compliance_energy(EL, np.diag(x)) for x in sig])
    assert d1_eval(diag(e), p).d1 >= lower.max() - 1e-9
