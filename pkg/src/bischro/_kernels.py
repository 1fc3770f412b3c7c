"""Hot pointwise kernels for the sphere target.

Two implementations of every kernel live here: a numba ``@njit`` one and a
pure-numpy one.  The numba path is used when numba imports and the
environment variable ``BISCHRO_NUMBA`` is not ``0``.  Both paths must agree to
rounding; ``tests/test_kernels.py`` enforces it and
``benchmarks/bench_kernels.py`` times them.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("BISCHRO_NUMBA", "1") != "0"


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def _dot(x, y):
    return np.einsum("...i,...i->...", x, y)


def np_sphere_project(q, v):
    return v - _dot(q, v)[..., None] * q


def np_sphere_complex(q, v):
    return np.cross(q, np_sphere_project(q, v))


def np_sphere_curvature(q, y1, y2, y3):
    p1 = np_sphere_project(q, y1)
    p2 = np_sphere_project(q, y2)
    p3 = np_sphere_project(q, y3)
    return _dot(p2, p3)[..., None] * p1 - _dot(p1, p3)[..., None] * p2


def np_sphere_flow_rhs(U, D, a, lam, b, c):
    """Flow right-hand side on S^2 for a single curve ``U`` of shape (N, 3).

    ``D`` is the dense spectral differentiation matrix.  Covariant
    derivatives are taken in projection form, P(U) d/dx.
    """
    Ux = np_sphere_project(U, D @ U)
    W1 = np_sphere_project(U, D @ Ux)
    W2 = np_sphere_project(U, D @ W1)
    W3 = np_sphere_project(U, D @ W2)
    JUx = np.cross(U, Ux)
    out = a * np.cross(U, W3) + lam * np.cross(U, W1)
    # R(X,Y)Z = (Y.Z)X - (X.Z)Y on tangent vectors
    out += b * (_dot(Ux, JUx)[:, None] * W1 - _dot(W1, JUx)[:, None] * Ux)
    out += c * (_dot(Ux, W1)[:, None] * JUx - _dot(JUx, W1)[:, None] * Ux)
    return out


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True, fastmath=False)
    def _nb_project_rows(q, v, out):
        for i in range(q.shape[0]):
            s = q[i, 0] * v[i, 0] + q[i, 1] * v[i, 1] + q[i, 2] * v[i, 2]
            out[i, 0] = v[i, 0] - s * q[i, 0]
            out[i, 1] = v[i, 1] - s * q[i, 1]
            out[i, 2] = v[i, 2] - s * q[i, 2]

    @numba.njit(cache=True, fastmath=False)
    def _nb_complex_rows(q, v, out):
        for i in range(q.shape[0]):
            s = q[i, 0] * v[i, 0] + q[i, 1] * v[i, 1] + q[i, 2] * v[i, 2]
            p0 = v[i, 0] - s * q[i, 0]
            p1 = v[i, 1] - s * q[i, 1]
            p2 = v[i, 2] - s * q[i, 2]
            out[i, 0] = q[i, 1] * p2 - q[i, 2] * p1
            out[i, 1] = q[i, 2] * p0 - q[i, 0] * p2
            out[i, 2] = q[i, 0] * p1 - q[i, 1] * p0

    @numba.njit(cache=True, fastmath=False)
    def _nb_curvature_rows(q, y1, y2, y3, out):
        p = np.empty((3, 3))
        for i in range(q.shape[0]):
            for r in range(3):
                y = y1 if r == 0 else (y2 if r == 1 else y3)
                s = q[i, 0] * y[i, 0] + q[i, 1] * y[i, 1] + q[i, 2] * y[i, 2]
                for j in range(3):
                    p[r, j] = y[i, j] - s * q[i, j]
            d23 = p[1, 0] * p[2, 0] + p[1, 1] * p[2, 1] + p[1, 2] * p[2, 2]
            d13 = p[0, 0] * p[2, 0] + p[0, 1] * p[2, 1] + p[0, 2] * p[2, 2]
            for j in range(3):
                out[i, j] = d23 * p[0, j] - d13 * p[1, j]

    @numba.njit(cache=True, fastmath=False)
    def _nb_proj_inplace(U, V):
        for i in range(U.shape[0]):
            s = U[i, 0] * V[i, 0] + U[i, 1] * V[i, 1] + U[i, 2] * V[i, 2]
            for j in range(3):
                V[i, j] -= s * U[i, j]

    @numba.njit(cache=True, fastmath=False)
    def _nb_sphere_flow_rhs(U, D, a, lam, b, c):
        n = U.shape[0]
        Ux = np.dot(D, U)
        _nb_proj_inplace(U, Ux)
        W1 = np.dot(D, Ux)
        _nb_proj_inplace(U, W1)
        W2 = np.dot(D, W1)
        _nb_proj_inplace(U, W2)
        W3 = np.dot(D, W2)
        _nb_proj_inplace(U, W3)
        out = np.empty((n, 3))
        for i in range(n):
            u0, u1, u2 = U[i, 0], U[i, 1], U[i, 2]
            x0, x1, x2 = Ux[i, 0], Ux[i, 1], Ux[i, 2]
            j0 = u1 * x2 - u2 * x1
            j1 = u2 * x0 - u0 * x2
            j2 = u0 * x1 - u1 * x0
            w0, w1, w2 = W1[i, 0], W1[i, 1], W1[i, 2]
            t0, t1, t2 = W3[i, 0], W3[i, 1], W3[i, 2]
            ujx = x0 * j0 + x1 * j1 + x2 * j2
            wj = w0 * j0 + w1 * j1 + w2 * j2
            xw = x0 * w0 + x1 * w1 + x2 * w2
            out[i, 0] = (
                a * (u1 * t2 - u2 * t1)
                + lam * (u1 * w2 - u2 * w1)
                + b * (ujx * w0 - wj * x0)
                + c * (xw * j0 - wj * x0)
            )
            out[i, 1] = (
                a * (u2 * t0 - u0 * t2)
                + lam * (u2 * w0 - u0 * w2)
                + b * (ujx * w1 - wj * x1)
                + c * (xw * j1 - wj * x1)
            )
            out[i, 2] = (
                a * (u0 * t1 - u1 * t0)
                + lam * (u0 * w1 - u1 * w0)
                + b * (ujx * w2 - wj * x2)
                + c * (xw * j2 - wj * x2)
            )
        return out


def _rows(*arrays):
    b = np.broadcast_arrays(*arrays)
    shape = b[0].shape
    return shape, [np.ascontiguousarray(x, dtype=np.float64).reshape(-1, 3) for x in b]


def sphere_project(q, v):
    if not USE_NUMBA:
        return np_sphere_project(q, v)
    shape, (qr, vr) = _rows(q, v)
    out = np.empty_like(qr)
    _nb_project_rows(qr, vr, out)
    return out.reshape(shape)


def sphere_complex(q, v):
    if not USE_NUMBA:
        return np_sphere_complex(q, v)
    shape, (qr, vr) = _rows(q, v)
    out = np.empty_like(qr)
    _nb_complex_rows(qr, vr, out)
    return out.reshape(shape)


def sphere_curvature(q, y1, y2, y3):
    if not USE_NUMBA:
        return np_sphere_curvature(q, y1, y2, y3)
    shape, (qr, a, b, c) = _rows(q, y1, y2, y3)
    out = np.empty_like(qr)
    _nb_curvature_rows(qr, a, b, c, out)
    return out.reshape(shape)


def sphere_flow_rhs(U, D, a, lam, b, c):
    """Batched sphere right-hand side; ``U`` has shape (..., N, 3)."""
    U = np.asarray(U, dtype=np.float64)
    kernel = _nb_sphere_flow_rhs if USE_NUMBA else np_sphere_flow_rhs
    if U.ndim == 2:
        return kernel(np.ascontiguousarray(U), D, float(a), float(lam), float(b), float(c))
    flat = U.reshape((-1,) + U.shape[-2:])
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = kernel(np.ascontiguousarray(flat[i]), D, float(a), float(lam), float(b), float(c))
    return out.reshape(U.shape)
