"""Embedded Kähler targets in ambient coordinates.

Every backend stores points and vectors as real arrays whose last axis is the
ambient dimension ``d``; all leading axes are broadcast.  The second
fundamental form follows the sign convention in which the covariant derivative
of a tangent field along a curve is ``dY/dx + A(Y, U_x)``, so on the unit
sphere ``A(X, Y) = (X . Y) q``.

Normal frames are never built.  Frame sums are expressed through ``A`` and its
adjoint, the Weingarten map ``W_eta`` defined by ``(W_eta X, Y) = (eta, A(X, Y))``
for tangent ``Y``.
"""

from __future__ import annotations

import numpy as np

from bischro import _kernels

CONSTRAINT_TOL = 1e-10


class GeometryError(ValueError):
    """Base class for geometric precondition failures."""


class ConstraintViolation(GeometryError):
    """A point is off the embedded manifold beyond tolerance."""


class RetractionError(GeometryError):
    """An ambient point is outside the retraction neighbourhood."""


def inner(x, y):
    """Euclidean pairing over the last axis."""
    return np.einsum("...i,...i->...", x, y)


def norm(x):
    return np.sqrt(inner(x, x))


class GeometryBackend:
    """Common machinery: subclasses supply P, J, A, W, retract and dP."""

    ambient_dim: int
    manifold_dim: int
    name = "abstract"
    bounding_radius = 1.0

    # -- primitives supplied by subclasses -------------------------------
    def _project(self, q, v):
        raise NotImplementedError

    def _complex(self, q, v):
        raise NotImplementedError

    def _second_fundamental(self, q, x, y):
        raise NotImplementedError

    def _weingarten(self, q, eta, x):
        raise NotImplementedError

    def constraint_residual(self, q):
        raise NotImplementedError

    def retract(self, v):
        raise NotImplementedError

    def dproject(self, q, qdot, v):
        """Derivative of ``s -> P(q(s)) v`` along a curve with velocity ``qdot``."""
        raise NotImplementedError

    def sample_point(self, rng, size=()):
        raise NotImplementedError

    # -- checked public operations ---------------------------------------
    def check_point(self, q, tol=CONSTRAINT_TOL):
        res = np.max(np.atleast_1d(self.constraint_residual(q)))
        if not np.isfinite(res) or res > tol:
            raise ConstraintViolation(
                f"{self.name}: point off manifold (residual {res:.3e} > {tol:.1e})"
            )

    def tangent_project(self, q, v, check=True):
        if check:
            self.check_point(q)
        return self._project(q, v)

    def normal_project(self, q, v, check=True):
        return v - self.tangent_project(q, v, check=check)

    def complex_apply(self, q, v, check=True):
        if check:
            self.check_point(q)
        return self._complex(q, v)

    def second_fundamental(self, q, x, y, check=True):
        if check:
            self.check_point(q)
        return self._second_fundamental(q, self._project(q, x), self._project(q, y))

    def weingarten(self, q, eta, x, check=True, tol=1e-8):
        if check:
            self.check_point(q)
            tangential = norm(self._project(q, eta))
            scale = np.maximum(norm(eta), 1.0)
            if np.any(tangential > tol * scale):
                raise GeometryError(
                    f"{self.name}: Weingarten argument is not normal "
                    f"(tangential part {np.max(tangential):.3e})"
                )
        return self._weingarten(q, eta, self._project(q, x))

    def curvature(self, q, y1, y2, y3, check=True):
        """R(Y1, Y2)Y3 = W_{A(Y2,Y3)} Y1 - W_{A(Y1,Y3)} Y2, arguments projected."""
        if check:
            self.check_point(q)
        p1 = self._project(q, y1)
        p2 = self._project(q, y2)
        p3 = self._project(q, y3)
        first = self._weingarten(q, self._second_fundamental(q, p2, p3), p1)
        second = self._weingarten(q, self._second_fundamental(q, p1, p3), p2)
        return first - second

    def random_tangent(self, rng, q, size=None):
        v = rng.standard_normal(np.shape(q))
        return self._project(q, v)

    def random_ambient(self, rng, q):
        return rng.standard_normal(np.shape(q))

    def random_normal(self, rng, q):
        v = rng.standard_normal(np.shape(q))
        return v - self._project(q, v)


class SphereS2(GeometryBackend):
    """Unit sphere in R^3 with J(q)v = q x P(q)v."""

    ambient_dim = 3
    manifold_dim = 2
    name = "sphere"
    bounding_radius = 1.0
    retraction_radius = 1e-8

    def _project(self, q, v):
        return _kernels.sphere_project(q, v)

    def _complex(self, q, v):
        return _kernels.sphere_complex(q, v)

    def _second_fundamental(self, q, x, y):
        return inner(x, y)[..., None] * q

    def _weingarten(self, q, eta, x):
        return inner(eta, q)[..., None] * x

    def curvature(self, q, y1, y2, y3, check=True):
        if check:
            self.check_point(q)
        return _kernels.sphere_curvature(q, y1, y2, y3)

    def constraint_residual(self, q):
        return np.abs(norm(q) - 1.0)

    def retract(self, v):
        r = norm(v)
        if np.any(~np.isfinite(r)) or np.any(r < self.retraction_radius):
            raise RetractionError("sphere: cannot retract a point at the origin")
        return v / r[..., None]

    def dproject(self, q, qdot, v):
        return -(qdot * inner(q, v)[..., None] + q * inner(qdot, v)[..., None])

    def sample_point(self, rng, size=()):
        v = rng.standard_normal(tuple(np.atleast_1d(size)) + (3,) if size != () else (3,))
        return self.retract(v)


class GrassmannProjector(GeometryBackend):
    """Complex Grassmannian G(n, k) as rank-k Hermitian projectors.

    A Hermitian matrix is flattened isometrically into R^{n^2}: the diagonal,
    then sqrt(2) times the real and imaginary parts of the strict upper
    triangle.  The Euclidean product of flattened vectors equals
    Re tr(X Y^*).
    """

    name = "grassmann"
    bounding_radius = None  # set in __init__

    def __init__(self, n, k):
        if not (isinstance(n, (int, np.integer)) and isinstance(k, (int, np.integer))):
            raise TypeError("n and k must be integers")
        if not 1 <= k <= n - 1:
            raise ValueError(f"need 1 <= k <= n-1, got n={n}, k={k}")
        self.n = int(n)
        self.k = int(k)
        self.ambient_dim = self.n * self.n
        self.manifold_dim = 2 * self.k * (self.n - self.k)
        self.bounding_radius = float(np.sqrt(self.k))
        self.name = f"grassmann({self.n},{self.k})"
        iu = np.triu_indices(self.n, 1)
        self._iu = iu
        self._m = len(iu[0])
        self._eye = np.eye(self.n)

    # -- flattening --------------------------------------------------------
    def to_matrix(self, v):
        v = np.asarray(v, dtype=float)
        n, m = self.n, self._m
        out = np.zeros(v.shape[:-1] + (n, n), dtype=complex)
        idx = np.arange(n)
        out[..., idx, idx] = v[..., :n]
        upper = (v[..., n : n + m] + 1j * v[..., n + m :]) / np.sqrt(2.0)
        out[..., self._iu[0], self._iu[1]] = upper
        out[..., self._iu[1], self._iu[0]] = np.conj(upper)
        return out

    def from_matrix(self, h):
        """Flatten the Hermitian part of ``h``."""
        h = 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))
        idx = np.arange(self.n)
        diag = h[..., idx, idx].real
        upper = h[..., self._iu[0], self._iu[1]] * np.sqrt(2.0)
        return np.concatenate([diag, upper.real, upper.imag], axis=-1)

    # -- primitives ----------------------------------------------------------
    def _project_m(self, Q, X):
        QX = Q @ X
        XQ = X @ Q
        return QX + XQ - 2.0 * (QX @ Q)

    def _project(self, q, v):
        Q, X = self.to_matrix(q), self.to_matrix(v)
        return self.from_matrix(self._project_m(Q, X))

    def _complex(self, q, v):
        Q, X = self.to_matrix(q), self.to_matrix(v)
        PX = self._project_m(Q, X)
        return self.from_matrix(1j * (Q @ PX - PX @ Q))

    def _second_fundamental(self, q, x, y):
        Q, X, Y = self.to_matrix(q), self.to_matrix(x), self.to_matrix(y)
        M = X @ Y + Y @ X
        R = self._eye - Q
        return self.from_matrix(Q @ M @ Q - R @ M @ R)

    def _weingarten(self, q, eta, x):
        Q, E, X = self.to_matrix(q), self.to_matrix(eta), self.to_matrix(x)
        R = self._eye - Q
        Et = Q @ E @ Q - R @ E @ R
        return self.from_matrix(self._project_m(Q, Et @ X + X @ Et))

    def constraint_residual(self, q):
        Q = self.to_matrix(q)
        idem = np.linalg.norm(Q @ Q - Q, axis=(-2, -1))
        tr = np.abs(np.trace(Q, axis1=-2, axis2=-1).real - self.k)
        return np.maximum(idem, tr)

    def retract(self, v, gap_tol=1e-8):
        H = self.to_matrix(v)
        w, vec = np.linalg.eigh(H)
        if not np.all(np.isfinite(w)):
            raise RetractionError(f"{self.name}: non-finite input")
        # eigh sorts ascending; the top k eigenvalues must sit above 1/2
        lo = w[..., self.n - self.k - 1]
        hi = w[..., self.n - self.k]
        if np.any(hi - 0.5 < gap_tol) or np.any(0.5 - lo < gap_tol):
            raise RetractionError(
                f"{self.name}: spectrum does not separate at 1/2 "
                f"(gap {np.min(np.minimum(hi - 0.5, 0.5 - lo)):.3e})"
            )
        top = vec[..., :, self.n - self.k :]
        Q = top @ np.conj(np.swapaxes(top, -1, -2))
        return self.from_matrix(Q)

    def dproject(self, q, qdot, v):
        Q, Qd, X = self.to_matrix(q), self.to_matrix(qdot), self.to_matrix(v)
        out = Qd @ X + X @ Qd - 2.0 * (Qd @ X @ Q + Q @ X @ Qd)
        return self.from_matrix(out)

    def sample_point(self, rng, size=()):
        shape = tuple(np.atleast_1d(size)) if size != () else ()
        G = rng.standard_normal(shape + (self.n, self.k)) + 1j * rng.standard_normal(
            shape + (self.n, self.k)
        )
        Qm, _ = np.linalg.qr(G)
        return self.from_matrix(Qm @ np.conj(np.swapaxes(Qm, -1, -2)))

    def point_from_matrix(self, h):
        return self.from_matrix(np.asarray(h, dtype=complex))


def make_backend(spec, n=None, k=None):
    """Build a backend from ``"sphere"`` or ``"grassmann"`` plus (n, k)."""
    if isinstance(spec, GeometryBackend):
        return spec
    spec = str(spec).lower()
    if spec in ("sphere", "s2"):
        return SphereS2()
    if spec.startswith("grassmann"):
        if n is None or k is None:
            raise ValueError("grassmann backend needs n and k")
        return GrassmannProjector(int(n), int(k))
    raise ValueError(f"unknown backend {spec!r}")
