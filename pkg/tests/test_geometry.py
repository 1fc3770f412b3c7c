import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bischro.geometry import (
    ConstraintViolation,
    GrassmannProjector,
    RetractionError,
    SphereS2,
    inner,
    make_backend,
)

E1, E2, E3 = np.eye(3)


# -- sphere worked examples ---------------------------------------------------


def test_sphere_projection_examples(sphere):
    q = E3
    assert np.allclose(sphere.tangent_project(q, [1.0, 2.0, 3.0]), [1, 2, 0])
    assert np.allclose(sphere.tangent_project(q, q), 0)


def test_sphere_complex_structure(sphere, rng):
    assert np.allclose(sphere.complex_apply(E3, E1), E2)
    q = sphere.sample_point(rng)
    v = sphere.random_tangent(rng, q)
    assert np.allclose(sphere.complex_apply(q, sphere.complex_apply(q, v)), -v)


def test_sphere_second_fundamental_and_weingarten(sphere, rng):
    assert np.allclose(sphere.second_fundamental(E3, E1, E1), E3)
    assert np.allclose(sphere.second_fundamental(E3, E3, E1), 0)
    X = sphere.random_tangent(rng, E3)
    assert np.allclose(sphere.weingarten(E3, E3, X), X)
    assert np.allclose(sphere.weingarten(E3, 0 * E3, X), 0)


def test_sphere_curvature_examples(sphere):
    assert np.allclose(sphere.curvature(E3, E1, E2, E2), E1)
    assert np.allclose(sphere.curvature(E3, E1, E1, E2), 0)
    assert np.allclose(sphere.curvature(E3, E1, E2, E3), 0)


def test_sphere_retract(sphere):
    assert np.array_equal(sphere.retract(np.array([0.0, 0.0, 2.0])), E3)
    q = np.array([0.6, 0.0, 0.8])
    assert np.allclose(sphere.retract(q), q, atol=1e-15)


def test_off_manifold_point_rejected(sphere):
    with pytest.raises(ConstraintViolation):
        sphere.tangent_project(np.array([0.0, 0.0, 1.1]), E1)


# -- Grassmannian worked examples ---------------------------------------------


@pytest.fixture
def g21():
    return GrassmannProjector(2, 1)


def test_g21_block_diagonal_is_normal(g21):
    q = g21.point_from_matrix(np.diag([1.0, 0.0]))
    v = g21.from_matrix(np.eye(2, dtype=complex))
    assert np.allclose(g21.tangent_project(q, v), 0)


def test_g21_complex_structure(g21):
    Q = np.diag([1.0, 0.0]).astype(complex)
    q = g21.from_matrix(Q)
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    JX = g21.to_matrix(g21.complex_apply(q, g21.from_matrix(X)))
    assert np.allclose(JX, np.array([[0, 1j], [-1j, 0]]))
    assert np.allclose(g21.complex_apply(q, g21.from_matrix(JX)), -g21.from_matrix(X))


def test_g21_retract_picks_top_eigenvector(g21, rng):
    R, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    H = R @ np.diag([0.1, 0.9]) @ R.conj().T
    top = R[:, 1:2]
    expected = top @ top.conj().T
    assert np.allclose(g21.to_matrix(g21.retract(g21.from_matrix(H))), expected)


def test_retract_without_spectral_gap_fails(g21):
    with pytest.raises(RetractionError):
        g21.retract(g21.from_matrix(0.5 * np.eye(2, dtype=complex)))


def test_grassmann_weingarten_is_adjoint_of_A(grassmann, rng):
    q = grassmann.sample_point(rng)
    eta = grassmann.random_normal(rng, q)
    for _ in range(10):
        X = grassmann.random_tangent(rng, q)
        Y = grassmann.random_tangent(rng, q)
        lhs = inner(grassmann.weingarten(q, eta, X), Y)
        rhs = inner(eta, grassmann.second_fundamental(q, X, Y))
        assert abs(lhs - rhs) < 1e-10


def test_grassmann_second_fundamental_matches_finite_difference(grassmann, rng):
    # sign convention: the normal part of the acceleration is -A(X, X),
    # as on the sphere where A(X, X) = |X|^2 q and great circles accelerate by -q
    q = grassmann.sample_point(rng)
    X = grassmann.random_tangent(rng, q)
    h = 1e-4
    path = [grassmann.retract(q + s * X) for s in (-h, 0.0, h)]
    acc = (path[0] - 2 * path[1] + path[2]) / h**2
    A = grassmann.second_fundamental(q, X, X)
    assert np.max(np.abs(grassmann.normal_project(q, acc) + A)) < 1e-6


def test_make_backend():
    assert isinstance(make_backend("sphere"), SphereS2)
    g = make_backend("grassmann", 4, 2)
    assert (g.n, g.k, g.ambient_dim) == (4, 2, 16)
    with pytest.raises(ValueError):
        make_backend("grassmann")
    with pytest.raises(ValueError):
        make_backend("torus")
    with pytest.raises(ValueError):
        GrassmannProjector(3, 3)


# -- randomized invariants ----------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, which=st.sampled_from(["sphere", (2, 1), (3, 1), (4, 2)]))
def test_projector_properties(seed, which):
    bk = SphereS2() if which == "sphere" else GrassmannProjector(*which)
    rng = np.random.default_rng(seed)
    q = bk.sample_point(rng)
    v = bk.random_ambient(rng, q)
    w = bk.random_ambient(rng, q)
    Pv = bk.tangent_project(q, v)
    assert np.allclose(bk.tangent_project(q, Pv), Pv, atol=1e-12)
    assert abs(inner(Pv, w) - inner(v, bk.tangent_project(q, w))) < 1e-12
    assert np.allclose(bk.normal_project(q, v) + Pv, v, atol=1e-12)
    Jv = bk.complex_apply(q, v)
    assert abs(inner(Jv, Pv)) < 1e-12
    assert np.allclose(bk.complex_apply(q, Jv), -Pv, atol=1e-12)
    assert np.allclose(bk.retract(q), q, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_sphere_curvature_closed_form(seed):
    rng = np.random.default_rng(seed)
    bk = SphereS2()
    q = bk.sample_point(rng)
    y1, y2, y3 = (bk.random_tangent(rng, q) for _ in range(3))
    expected = inner(y2, y3) * y1 - inner(y1, y3) * y2
    assert np.allclose(bk.curvature(q, y1, y2, y3), expected, atol=1e-12)


def test_dproject_matches_finite_difference(backend, rng):
    q = backend.sample_point(rng)
    qd = backend.random_tangent(rng, q)
    v = backend.random_ambient(rng, q)
    h = 1e-5
    qp, qm = backend.retract(q + h * qd), backend.retract(q - h * qd)
    fd = (backend.tangent_project(qp, v) - backend.tangent_project(qm, v)) / (2 * h)
    assert np.max(np.abs(fd - backend.dproject(q, qd, v))) < 1e-7
