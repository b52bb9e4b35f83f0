import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optssr.tensors import (Elasticity, SymTensor3, compliance_energy, deviator, elastic_apply,
                            elastic_matrix_mandel, from_mandel, spectral_decompose, to_mandel,
                            trace)

EL = Elasticity(40_000.0, 0.3)


def random_sym(rng, n, scale=1.0):
    a = rng.normal(scale=scale, size=(n, 3, 3))
    return 0.5 * (a + np.swapaxes(a, 1, 2))


def test_identity_has_triple_eigenvalue():
    s = spectral_decompose(np.eye(3))
    np.testing.assert_allclose(s.values, [1, 1, 1], atol=1e-15)
    np.testing.assert_allclose(s.projections.sum(axis=0), np.eye(3), atol=1e-14)


def test_diagonal_tensor_is_axis_aligned():
    s = spectral_decompose(np.diag([1.0, 3.0, -2.0]))
    np.testing.assert_allclose(s.values, [3, 1, -2])
    np.testing.assert_allclose(s.projections[0], np.diag([0, 1, 0]), atol=1e-14)
    np.testing.assert_allclose(s.projections[2], np.diag([0, 0, 1]), atol=1e-14)


def test_pure_shear_eigenvalues_match_dense_solver():
    t = SymTensor3(xy=1.0).as_array()
    s = spectral_decompose(t)
    np.testing.assert_allclose(s.values, [1, 0, -1], atol=1e-15)
    np.testing.assert_allclose(s.values, np.linalg.eigvalsh(t)[::-1], atol=1e-15)


def test_reconstruction_on_10000_random_tensors():
    rng = np.random.default_rng(11)
    a = random_sym(rng, 10_000, scale=rng.uniform(1e-3, 1e3))
    s = spectral_decompose(a)
    norm = np.linalg.norm(a, axis=(1, 2))
    err = np.linalg.norm(s.reconstruct() - a, axis=(1, 2)) / norm
    assert err.max() <= 1e-10
    assert np.all(np.diff(s.values, axis=1) <= 0.0)
    np.testing.assert_allclose(s.values, np.linalg.eigvalsh(a)[:, ::-1],
                               atol=1e-12 * norm.max())


def test_projections_idempotent_and_complete():
    rng = np.random.default_rng(3)
    s = spectral_decompose(random_sym(rng, 500))
    p = s.projections
    np.testing.assert_allclose(np.einsum("nkij,nkjl->nkil", p, p), p, atol=1e-10)
    np.testing.assert_allclose(p.sum(axis=1), np.broadcast_to(np.eye(3), (500, 3, 3)), atol=1e-10)


def test_repeated_and_nearly_repeated_eigenvalues():
    rng = np.random.default_rng(5)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    for vals in ([2.0, 2.0, -1.0], [2.0, -1.0, -1.0], [1.0, 1.0 + 1e-9, 1.0 - 1e-9],
                 [5.0, 5.0 * (1 + 1e-12), 0.0]):
        t = q @ np.diag(vals) @ q.T
        s = spectral_decompose(t)
        np.testing.assert_allclose(s.reconstruct(), t, atol=1e-12 * np.abs(vals).max())
        np.testing.assert_allclose(s.values, sorted(vals, reverse=True), atol=1e-12 * np.abs(vals).max())


def test_plane_strain_fast_path_matches_general_path():
    rng = np.random.default_rng(9)
    a = random_sym(rng, 2000)
    a[:, 0, 2] = a[:, 2, 0] = a[:, 1, 2] = a[:, 2, 1] = 0.0
    s = spectral_decompose(a)
    np.testing.assert_allclose(s.values, np.linalg.eigvalsh(a)[:, ::-1], atol=1e-13)
    np.testing.assert_allclose(s.reconstruct(), a, atol=1e-13)


def test_batch_shape_is_preserved():
    rng = np.random.default_rng(1)
    a = random_sym(rng, 24).reshape(4, 6, 3, 3)
    s = spectral_decompose(a)
    assert s.values.shape == (4, 6, 3)
    assert s.projections.shape == (4, 6, 3, 3, 3)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=6, max_size=6))
def test_reconstruction_property(c):
    t = SymTensor3(*c).as_array()
    s = spectral_decompose(t)
    scale = max(np.linalg.norm(t), 1e-300)
    assert np.linalg.norm(s.reconstruct() - t) <= 1e-10 * scale + 1e-300


def test_mandel_roundtrip_preserves_inner_product():
    rng = np.random.default_rng(2)
    a, b = random_sym(rng, 2), random_sym(rng, 2)
    np.testing.assert_allclose(from_mandel(to_mandel(a)), a)
    np.testing.assert_allclose(np.einsum("nij,nij->n", a, b),
                               np.einsum("ni,ni->n", to_mandel(a), to_mandel(b)))


def test_elastic_moduli_of_benchmark_soil():
    assert EL.K == pytest.approx(33_333.333333, rel=1e-9)
    assert EL.G == pytest.approx(15_384.615385, rel=1e-9)
    assert EL.lame == pytest.approx(23_076.923077, rel=1e-9)


@pytest.mark.parametrize("E, nu", [(0.0, 0.3), (-1.0, 0.3), (1.0, 0.5), (1.0, -1.0)])
def test_invalid_elasticity_rejected(E, nu):
    with pytest.raises(ValueError):
        Elasticity(E, nu)


def test_elastic_apply_volumetric_and_shear():
    assert np.all(elastic_apply(EL, np.zeros((3, 3))) == 0.0)
    sig = elastic_apply(EL, 1e-3 * np.eye(3))
    np.testing.assert_allclose(sig, 3 * EL.K * 1e-3 * np.eye(3))
    assert sig[0, 0] == pytest.approx(100.0)
    gamma = 2e-3
    shear = elastic_apply(EL, SymTensor3(xy=gamma / 2))
    assert shear.xy == pytest.approx(EL.G * gamma)
    assert shear.xx == shear.yy == shear.zz == 0.0


def test_elastic_apply_is_linear_and_matches_mandel_matrix():
    rng = np.random.default_rng(4)
    x, y = random_sym(rng, 50), random_sym(rng, 50)
    lhs = elastic_apply(EL, 2.5 * x - 0.7 * y)
    rhs = 2.5 * elastic_apply(EL, x) - 0.7 * elastic_apply(EL, y)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-13, atol=1e-9)
    via_matrix = from_mandel(to_mandel(x) @ elastic_matrix_mandel(EL).T)
    np.testing.assert_allclose(elastic_apply(EL, x), via_matrix, rtol=1e-12, atol=1e-9)


def test_compliance_energy_against_dense_oracle():
    rng = np.random.default_rng(8)
    sig = random_sym(rng, 100, scale=50.0)
    c = elastic_matrix_mandel(EL)
    m = to_mandel(sig)
    oracle = 0.5 * np.einsum("ni,ni->n", np.linalg.solve(c, m.T).T, m)
    np.testing.assert_allclose(compliance_energy(EL, sig), oracle, rtol=1e-12)
    assert compliance_energy(EL, np.zeros((3, 3))) == 0.0
    p = 7.0
    assert compliance_energy(EL, p * np.eye(3)) == pytest.approx(p**2 / (2 * EL.K))


def test_compliance_of_elastic_stress_is_elastic_energy():
    rng = np.random.default_rng(6)
    eps = random_sym(rng, 200, scale=1e-3)
    sig = elastic_apply(EL, eps)
    energy = 0.5 * np.einsum("nij,nij->n", sig, eps)
    np.testing.assert_allclose(compliance_energy(EL, sig), energy, rtol=1e-10)


def test_deviator_is_traceless():
    rng = np.random.default_rng(0)
    assert np.abs(trace(deviator(random_sym(rng, 10)))).max() < 1e-14
