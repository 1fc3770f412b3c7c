"""Seeded, executable checks of the curvature identities the uniqueness argument uses.

Pointwise identities are evaluated on batches of random points and tangent
data; identities involving derivatives along a curve are checked by
finite-difference convergence order (parallel curvature, parallel J) or spectrally on a smooth
closed curve (the derivative of T).
"""

from __future__ import annotations

import json

import numpy as np

from bischro.geometry import GeometryBackend, SphereS2, norm
from bischro.operators import (
    CurveData,
    OperatorReport,
    op_B,
    op_K,
    op_RJ,
    op_S,
    op_S_minus_decomposed,
    op_S_plus_decomposed,
    op_T,
    op_T_star,
)
from bischro.spectral import PeriodicGrid, covariant_stack, d_dx

ALGEBRA_TOL = 1e-10
FD_STEPS = (1e-2, 5e-3, 2.5e-3)
ORDER_BAND = (1.7, 2.3)


class MutatedBackend:
    """Delegating wrapper whose curvature has the opposite sign (mutation testing)."""

    def __init__(self, inner):
        self._inner = inner
        self.name = f"mutated({inner.name})"

    def __getattr__(self, item):
        return getattr(self._inner, item)

    def curvature(self, q, y1, y2, y3, check=True):
        return -self._inner.curvature(q, y1, y2, y3, check=check)


def _n(x):
    return norm(x)


def _worst(res):
    return float(np.max(res))


def _sample(backend, rng, n):
    q = backend.sample_point(rng, size=n)
    Y = [backend.random_ambient(rng, q) for _ in range(4)]
    return q, Y


def _pointwise_data(backend, rng, n):
    q = backend.sample_point(rng, size=n)
    Ux = backend.random_tangent(rng, q)
    calU = backend.random_tangent(rng, q)
    return CurveData(backend, q, Ux, calU)


# ---------------------------------------------------------------------------
# pointwise geometry and curvature algebra
# ---------------------------------------------------------------------------


def geometry_reports(backend, rng, n):
    q, (v1, v2, v3, _) = _sample(backend, rng, n)
    P = lambda v: backend.tangent_project(q, v, check=False)  # noqa: E731
    J = lambda v: backend.complex_apply(q, v, check=False)  # noqa: E731
    A = lambda x, y: backend.second_fundamental(q, x, y, check=False)  # noqa: E731
    s1, s2 = _n(v1), _n(v2)
    out = []
    out.append(("P_idempotent", _worst(_n(P(P(v1)) - P(v1)) / s1)))
    out.append(("P_symmetric", _worst(np.abs(np.sum(P(v1) * v2, -1) - np.sum(v1 * P(v2), -1)) / (s1 * s2))))
    out.append(("J_skew", _worst(np.abs(np.sum(J(v1) * v2, -1) + np.sum(v1 * J(v2), -1)) / (s1 * s2))))
    out.append(("J_squared", _worst(_n(J(J(v1)) + P(v1)) / s1)))
    out.append(("A_symmetric", _worst(_n(A(v1, v2) - A(v2, v1)) / (s1 * s2))))
    out.append(("A_normal", _worst(_n(P(A(v1, v2))) / (s1 * s2))))
    out.append(("J_A_zero", _worst(_n(J(A(v1, v2))) / (s1 * s2))))
    # Weingarten adjoint identity against a random tangent Y
    eta = backend.normal_project(q, v3, check=False)
    X, Y = P(v1), P(v2)
    lhs = np.sum(backend.weingarten(q, eta, X, check=False) * Y, -1)
    rhs = np.sum(eta * A(X, Y), -1)
    out.append(("weingarten_adjoint", _worst(np.abs(lhs - rhs) / (_n(eta) * s1 * s2))))
    return out


def curvature_reports(backend, rng, n):
    q, (y1, y2, y3, y4) = _sample(backend, rng, n)
    R = lambda a, b, c: backend.curvature(q, a, b, c, check=False)  # noqa: E731
    J = lambda v: backend.complex_apply(q, v, check=False)  # noqa: E731
    dot = lambda a, b: np.sum(a * b, -1)  # noqa: E731
    s3 = _n(y1) * _n(y2) * _n(y3)
    s4 = s3 * _n(y4)
    out = []
    out.append(("R_antisymmetry", _worst(_n(R(y1, y2, y3) + R(y2, y1, y3)) / s3)))
    r2a = np.abs(dot(R(y1, y2, y3), y4) - dot(R(y3, y4, y1), y2))
    r2b = np.abs(dot(R(y1, y2, y3), y4) - dot(R(y4, y3, y2), y1))
    out.append(("R_pair_symmetry", _worst(np.maximum(r2a, r2b) / s4)))
    out.append(("R_bianchi", _worst(_n(R(y1, y2, y3) + R(y2, y3, y1) + R(y3, y1, y2)) / s3)))
    out.append(("R_J_commutes", _worst(_n(R(y1, y2, J(y3)) - J(R(y1, y2, y3))) / s3)))
    out.append(("R_J_pair", _worst(_n(R(J(y1), J(y2), y3) - R(y1, y2, y3)) / s3)))
    r6a = _n(R(J(y1), y2, y3) + R(y1, J(y2), y3))
    r6b = _n(R(J(y1), y2, y3) - R(J(y2), y1, y3))
    out.append(("R_J_swap", _worst(np.maximum(r6a, r6b) / s3)))
    return out


def constant_curvature_residual(rng, n=1000):
    """Sphere curvature against (Y2.Y3)Y1 - (Y1.Y3)Y2 on tangent triples."""
    bk = SphereS2()
    q = bk.sample_point(rng, size=n)
    Y = [bk.random_tangent(rng, q) for _ in range(3)]
    dot = lambda a, b: np.sum(a * b, -1)[..., None]  # noqa: E731
    closed = dot(Y[1], Y[2]) * Y[0] - dot(Y[0], Y[2]) * Y[1]
    generic = GeometryBackend.curvature(bk, q, *Y, check=False)
    scale = _n(Y[0]) * _n(Y[1]) * _n(Y[2])
    return max(
        _worst(_n(bk.curvature(q, *Y, check=False) - closed) / scale),
        _worst(_n(generic - closed) / scale),
    )


def operator_reports(backend, rng, n):
    data = _pointwise_data(backend, rng, n)
    Y = backend.random_ambient(rng, data.U)
    Z = backend.random_ambient(rng, data.U)
    R = data.R
    dot = lambda a, b: np.sum(a * b, -1)  # noqa: E731
    nx, nu, ny, nz = _n(data.Ux), _n(data.calU), _n(Y), _n(Z)
    sB = ny * nu * nx
    B = {i: op_B(i, data, Y) for i in (1, 2, 3)}
    out = []
    lhs1 = R(Y, data.calU, data.JUx)
    rhs1 = 0.5 * R(data.JcalU, data.Ux, Y) + 0.5 * B[1] + 0.25 * B[2] + 0.25 * B[3]
    out.append(("R_split_calU_JUx", _worst(_n(lhs1 - rhs1) / sB)))
    lhs2 = R(Y, data.Ux, data.JcalU)
    rhs2 = 0.5 * R(data.JcalU, data.Ux, Y) - (0.5 * B[1] - 0.25 * B[2] - 0.25 * B[3])
    out.append(("R_split_Ux_JcalU", _worst(_n(lhs2 - rhs2) / sB)))
    sS = ny * nx * nx
    out.append(("S_plus_decomposition", _worst(_n(op_S("+", data, Y) - op_S_plus_decomposed(data, Y)) / sS)))
    out.append(("S_minus_decomposition", _worst(_n(op_S("-", data, Y) - op_S_minus_decomposed(data, Y)) / sS)))
    for i in (1, 2, 3):
        res = np.abs(dot(op_B(i, data, Y), Z) - dot(Y, op_B(i, data, Z)))
        out.append((f"B{i}_symmetric", _worst(res / (sB * nz))))
    sp = np.abs(dot(op_S("+", data, Y), Z) + dot(Y, op_S("+", data, Z)))
    out.append(("S_plus_skew", _worst(sp / (sS * nz))))
    sm = np.abs(dot(op_S("-", data, Y), Z) - dot(Y, op_S("-", data, Z)))
    out.append(("S_minus_symmetric", _worst(sm / (sS * nz))))
    ta = np.abs(dot(op_T(data, Y), Z) - dot(Y, op_T_star(data, Z)))
    out.append(("T_adjoint", _worst(ta / (sS * nz))))
    return out


# ---------------------------------------------------------------------------
# identities along curves
# ---------------------------------------------------------------------------


def _fd_orders(errs):
    errs = np.asarray(errs)
    return np.log2(errs[:-1] / errs[1:])


def _random_path(backend, rng):
    q0 = backend.sample_point(rng)
    v = backend.random_ambient(rng, q0)
    w = 0.5 * backend.random_ambient(rng, q0)

    def path(s):
        return backend.retract(q0 + s * v + s * s * w)

    # the retraction's differential at the manifold is the tangent projection
    return q0, path, backend.tangent_project(q0, v)


def curvature_parallel_orders(backend, rng, trials=5, steps=FD_STEPS):
    """Observed orders of the centred difference for the parallel-curvature identity."""
    orders = []
    for _ in range(trials):
        q0, path, qdot = _random_path(backend, rng)
        Y0 = [backend.random_ambient(rng, q0) for _ in range(3)]
        Y1 = [backend.random_ambient(rng, q0) for _ in range(3)]

        def F(s):
            q = path(s)
            return backend.curvature(q, *[a + s * b for a, b in zip(Y0, Y1)], check=False)

        # d/ds {P(q) Y_i} at s=0
        dPY = [backend.dproject(q0, qdot, a) + backend.tangent_project(q0, b) for a, b in zip(Y0, Y1)]
        R = lambda a, b, c: backend.curvature(q0, a, b, c, check=False)  # noqa: E731
        RY = R(*Y0)
        exact = (
            R(dPY[0], Y0[1], Y0[2])
            + R(Y0[0], dPY[1], Y0[2])
            + R(Y0[0], Y0[1], dPY[2])
            - backend.second_fundamental(q0, RY, qdot, check=False)
        )
        errs = [_n((F(h) - F(-h)) / (2 * h) - exact) for h in steps]
        orders.extend(_fd_orders(errs))
    return np.array(orders)


def j_derivative_orders(backend, rng, trials=5, steps=FD_STEPS, tangent=True):
    """Orders for d/ds(J(q))Y = -A(JY, q') - J W_{NY}(q')."""
    orders = []
    for _ in range(trials):
        q0, path, qdot = _random_path(backend, rng)
        Y = backend.random_ambient(rng, q0)
        if tangent:
            Y = backend.tangent_project(q0, Y)

        def F(s):
            return backend.complex_apply(path(s), Y, check=False)

        JY = backend.complex_apply(q0, Y, check=False)
        NY = backend.normal_project(q0, Y, check=False)
        exact = -backend.second_fundamental(q0, JY, qdot, check=False) - backend.complex_apply(
            q0, backend.weingarten(q0, NY, qdot, check=False), check=False
        )
        errs = [_n((F(h) - F(-h)) / (2 * h) - exact) for h in steps]
        orders.extend(_fd_orders(errs))
    return np.array(orders)


def smooth_closed_curve(backend, rng, N=64, modes=2, amp=0.2):
    """A band-limited ambient loop around a random point, retracted."""
    x = PeriodicGrid(N).x
    q0 = backend.sample_point(rng)
    raw = np.broadcast_to(q0, (N, q0.shape[-1])).copy()
    for k in range(1, modes + 1):
        c = backend.random_tangent(rng, q0)
        s = backend.random_tangent(rng, q0)
        scale = amp / (k * max(float(norm(c)), float(norm(s))))
        raw += scale * (np.cos(k * x)[:, None] * c + np.sin(k * x)[:, None] * s)
    return backend.retract(raw)


def smooth_field(rng, N, d, modes=3):
    x = PeriodicGrid(N).x
    out = rng.standard_normal((1, d))
    for k in range(1, modes + 1):
        out = out + (
            np.cos(k * x)[:, None] * rng.standard_normal(d) + np.sin(k * x)[:, None] * rng.standard_normal(d)
        ) / k
    return out


def t_derivative_residual(backend, rng, N=64):
    """Spectral check of the expression for d_x(T(U))Y on a smooth closed curve."""
    U = smooth_closed_curve(backend, rng, N)
    data = CurveData.from_curve(backend, U)
    Y = smooth_field(rng, N, U.shape[-1])
    Yx = d_dx(Y)
    lhs = d_dx(op_T(data, Y)) - op_T(data, Yx)
    dK = d_dx(op_K(data, Y)) - op_K(data, Yx)
    dN_Y = -backend.dproject(U, data.Ux, Y)
    J, R = data.J, data.R
    rhs = (
        -R(data.JcalU, data.Ux, Y)
        - 0.5 * (op_B(2, data, Y) + op_B(3, data, Y))
        - J(R(data.Ux, dN_Y, data.Ux))
        - data.A(J(R(data.Ux, Y, data.Ux)), data.Ux)
        + dK
    )
    scale = np.max(_n(lhs)) + np.max(_n(dK)) + 1e-300
    return float(np.max(_n(lhs - rhs)) / scale)


def perturbed_pair(backend, rng, N=64, m=4, eps=1e-6):
    """(U, V) with V = retract(U + eps sin(m x) w), w a smooth tangent field."""
    U = smooth_closed_curve(backend, rng, N)
    x = PeriodicGrid(N).x
    w = backend.tangent_project(U, smooth_field(rng, N, U.shape[-1], modes=1))
    w = w / np.max(_n(w))
    V = backend.retract(U + eps * np.sin(m * x)[:, None] * w)
    return U, V


def normal_part_constants(backend, U, V):
    """C1 = max|N(U)W| / max|Z| and C2 for the normal part of d_x W."""
    Ux, calU = covariant_stack(backend, U, 1)
    Vx, calV = covariant_stack(backend, V, 1)
    Z = U - V
    Zx = d_dx(Z)
    W = calU - calV
    zmax = float(np.max(_n(Z)))
    NW = backend.normal_project(U, W, check=False)
    r2 = (
        backend.normal_project(U, d_dx(W), check=False)
        + backend.second_fundamental(U, W, Ux, check=False)
        + backend.second_fundamental(U, Zx, calV, check=False)
    )
    return float(np.max(_n(NW))) / zmax, float(np.max(_n(r2))) / zmax


def normal_part_reports(backend, rng, N=64, modes=(2, 8), eps=1e-6):
    """Normal components of W and d_x W are O(|Z|) with an m-independent constant."""
    state = rng.bit_generator.state
    c = []
    for m in modes:
        rng.bit_generator.state = state
        c.append(normal_part_constants(backend, *perturbed_pair(backend, rng, N, m, eps)))
    c = np.array(c)
    ratio1 = c[-1, 0] / c[0, 0]
    ratio2 = c[-1, 1] / c[0, 1]
    return [
        ("normal_W_is_O_Z", ratio1, f"C(m={modes[0]})={c[0,0]:.3g}, C(m={modes[-1]})={c[-1,0]:.3g}"),
        ("normal_dW_is_O_Z", ratio2, f"C(m={modes[0]})={c[0,1]:.3g}, C(m={modes[-1]})={c[-1,1]:.3g}"),
    ]


# ---------------------------------------------------------------------------
# the suite
# ---------------------------------------------------------------------------


def identity_suite(backend, seed=42, samples=1000, mutation_check=True):
    """Run every identity; failures are reported, never raised."""
    rng = np.random.default_rng(seed)
    reports = []

    def add(name, residual, tol, count, note=""):
        reports.append(OperatorReport(name, float(residual), tol, count, note=note))

    for name, r in geometry_reports(backend, rng, samples):
        add(name, r, ALGEBRA_TOL, samples)
    for name, r in curvature_reports(backend, rng, samples):
        add(name, r, ALGEBRA_TOL, samples)
    for name, r in operator_reports(backend, rng, samples):
        add(name, r, ALGEBRA_TOL, samples)
    if isinstance(backend, SphereS2):
        add("sphere_constant_curvature", constant_curvature_residual(rng, samples), 1e-12, samples)

    lo, hi = ORDER_BAND
    for name, fn in (("R_parallel_fd_order", curvature_parallel_orders), ("J_derivative_fd_order", j_derivative_orders)):
        orders = fn(backend, rng)
        dev = float(np.max(np.abs(orders - 2.0)))
        add(name, dev, hi - 2.0, len(orders), note=f"orders in [{orders.min():.3f}, {orders.max():.3f}]")
    add("T_derivative_spectral", t_derivative_residual(backend, rng), 1e-9, 1)
    for name, ratio, note in normal_part_reports(backend, rng):
        add(name, ratio, 2.0, 2, note=f"constant ratio across modes; {note}")

    if mutation_check:
        mut = MutatedBackend(backend)
        mrng = np.random.default_rng(seed)
        mres = dict(curvature_reports(mut, mrng, 200))
        mres.update(operator_reports(mut, mrng, 200))
        expected = {"R_bianchi": True, "S_plus_decomposition": False, "S_minus_decomposition": False}
        ok = all((mres[k] < ALGEBRA_TOL) == v for k, v in expected.items())
        note = ", ".join(f"{k}={mres[k]:.2e}" for k in ("R_bianchi", "R_split_calU_JUx", "S_plus_decomposition", "S_minus_decomposition"))
        add("mutation_detected", 0.0 if ok else 1.0, 0.5, 200, note=note)
    return reports


def suite_passed(reports):
    return all(r.passed for r in reports)


def reports_json(reports):
    return json.dumps([r.as_dict() for r in reports], indent=2)


def generic_loop(backend, N, seed=0, amp=0.3):
    """A well-resolved closed curve with speed bounded away from zero.

    On the sphere: a tilted, wobbling great circle.  On the Grassmannian: the
    orbit of a random projector under exp(i x K), K = diag(0, 1, ..., n-1),
    pushed off the orbit by a smooth tangent wobble.
    """
    rng = np.random.default_rng(seed)
    x = PeriodicGrid(N).x
    if isinstance(backend, SphereS2):
        raw = np.stack(
            [np.cos(x), np.sin(x), 0.4 + amp * (np.sin(2 * x) + np.cos(x))], axis=-1
        )
        Qr, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        return backend.retract(raw @ Qr.T)
    n = backend.n
    Q0 = backend.to_matrix(backend.sample_point(rng))
    phase = np.exp(1j * np.outer(x, np.arange(n)))
    orbit = phase[:, :, None] * Q0[None] * np.conj(phase)[:, None, :]
    base = backend.from_matrix(orbit)
    H1 = backend.random_ambient(rng, base[0])
    H2 = backend.random_ambient(rng, base[0])
    wob = np.cos(x)[:, None] * H1 + np.sin(2 * x)[:, None] * H2
    wob = backend.tangent_project(base, wob, check=False)
    wob *= amp / np.max(norm(wob))
    return backend.retract(base + wob)
