"""Closed curves on the uniform periodic grid and their covariant calculus.

Grid functions carry the node axis second to last: a curve on a target with
ambient dimension ``d`` is an array of shape ``(..., N, d)``.  Differentiation
is the Fourier (Nyquist-free) spectral derivative, which is an exactly
antisymmetric matrix, and quadrature is the uniform trapezoid rule, so
discrete integration by parts holds to rounding.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from bischro.geometry import GeometryBackend, GeometryError, norm

TANGENT_TOL = 1e-8
DENSE_MAX_N = 512


class GridMismatch(ValueError):
    pass


class UnresolvedWarning(RuntimeWarning):
    pass


@lru_cache(maxsize=32)
def diff_matrix(N):
    """Dense first-derivative matrix on N equispaced nodes of [0, 2pi).

    Entries are 0.5 (-1)^(j-l) cot((j-l) h / 2) off the diagonal, which is the
    spectral derivative with the Nyquist mode removed.
    """
    h = 2.0 * np.pi / N
    j = np.arange(N)
    diff = j[:, None] - j[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        D = 0.5 * (-1.0) ** diff / np.tan(diff * h / 2.0)
    D[j, j] = 0.0
    D = 0.5 * (D - D.T)
    D.setflags(write=False)
    return D


@lru_cache(maxsize=32)
def _wavenumbers(N):
    k = np.fft.rfftfreq(N, d=1.0 / N)
    k[-1] = 0.0 if N % 2 == 0 else k[-1]
    return k


@lru_cache(maxsize=32)
def truncation_matrix(N, kmax):
    """Projection onto Fourier modes with |k| <= kmax, as a dense matrix."""
    eye = np.eye(N)
    F = np.fft.rfft(eye, axis=0)
    F[kmax + 1 :] = 0.0
    M = np.fft.irfft(F, n=N, axis=0)
    M = 0.5 * (M + M.T)
    M.setflags(write=False)
    return M


def dealias_kmax(N):
    """Largest wavenumber kept by the two-thirds truncation rule."""
    return int(np.ceil(N / 3.0)) - 1


@dataclass(frozen=True)
class PeriodicGrid:
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise ValueError(f"grid needs an even N >= 8, got {self.N}")

    @property
    def h(self):
        return 2.0 * np.pi / self.N

    @property
    def x(self):
        return self.h * np.arange(self.N)

    @property
    def D(self):
        return diff_matrix(self.N)


def _n_nodes(f):
    return np.shape(f)[-2]


def d_dx(f, order=1):
    """Spectral derivative along the node axis (axis -2), applied ``order`` times."""
    f = np.asarray(f, dtype=float)
    N = _n_nodes(f)
    if N <= DENSE_MAX_N:
        D = diff_matrix(N)
        for _ in range(order):
            f = np.matmul(D, f)
        return f
    ik = 1j * _wavenumbers(N)[:, None]
    for _ in range(order):
        f = np.fft.irfft(ik * np.fft.rfft(f, axis=-2), n=N, axis=-2)
    return f


def truncate(f, kmax):
    """Zero all Fourier modes with |k| > kmax along the node axis."""
    N = _n_nodes(f)
    if kmax >= N // 2:
        return f
    if N <= DENSE_MAX_N:
        return np.matmul(truncation_matrix(N, kmax), f)
    F = np.fft.rfft(f, axis=-2)
    F[..., kmax + 1 :, :] = 0.0
    return np.fft.irfft(F, n=N, axis=-2)


def tail_fraction(f, cutoff=None):
    """Fraction of spectral energy in modes above ``cutoff`` (default 3N/8)."""
    N = _n_nodes(f)
    cutoff = int(3 * N / 8) if cutoff is None else cutoff
    F = np.abs(np.fft.rfft(np.asarray(f, dtype=float), axis=-2)) ** 2
    F[..., 1:, :] *= 2.0
    total = F.sum()
    if total == 0.0:
        return 0.0
    return float(F[..., cutoff + 1 :, :].sum() / total)


def check_resolved(f, what="field", limit=0.1):
    frac = tail_fraction(f)
    if frac > limit:
        warnings.warn(
            f"{what} is under-resolved: {frac:.1%} of spectral energy above 3N/8",
            UnresolvedWarning,
            stacklevel=3,
        )
    return frac


# ---------------------------------------------------------------------------
# curves and tangent fields
# ---------------------------------------------------------------------------


@dataclass
class CurveState:
    points: np.ndarray
    backend: GeometryBackend
    t: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != self.backend.ambient_dim:
            raise ValueError(
                f"points must have shape (N, {self.backend.ambient_dim}), got {self.points.shape}"
            )
        self.backend.check_point(self.points, tol=1e-9)

    @property
    def grid(self):
        return PeriodicGrid(self.points.shape[0])

    @property
    def N(self):
        return self.points.shape[0]


@dataclass
class TangentField:
    vectors: np.ndarray
    base: CurveState
    tangent: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.shape != self.base.points.shape:
            raise GridMismatch("field and base curve have different shapes")
        if self.tangent:
            res = normal_residual(self.base.backend, self.base.points, self.vectors)
            if res > TANGENT_TOL:
                raise GeometryError(f"field flagged tangent has normal residual {res:.2e}")


def _points(curve):
    return curve.points if isinstance(curve, CurveState) else np.asarray(curve, dtype=float)


def _vectors(f):
    return f.vectors if isinstance(f, TangentField) else np.asarray(f, dtype=float)


def normal_residual(backend, U, Y):
    """max_j |N(U_j) Y_j| / max_j |Y_j| (0 for the zero field)."""
    scale = np.max(norm(Y)) if np.size(Y) else 0.0
    if scale == 0.0:
        return 0.0
    nrm = norm(Y - backend.tangent_project(U, Y, check=False))
    return float(np.max(nrm) / scale)


def covariant_dx(backend, curve, field, check=True, return_discrepancy=False):
    """Covariant derivative of a tangent field along a curve, P(U) dY/dx.

    With ``return_discrepancy`` the A-form dY/dx + A(U)(Y, U_x) is evaluated as
    well and the max pointwise discrepancy between the two forms is returned.
    """
    U = _points(curve)
    Y = _vectors(field)
    if Y.shape != U.shape:
        raise GridMismatch(f"field shape {Y.shape} != curve shape {U.shape}")
    if check:
        res = normal_residual(backend, U, Y)
        if res > TANGENT_TOL:
            raise GeometryError(f"covariant_dx needs a tangent field (normal residual {res:.2e})")
    dY = d_dx(Y)
    out = backend.tangent_project(U, dY, check=False)
    if not return_discrepancy:
        return out
    Ux = d_dx(U)
    alt = dY + backend.second_fundamental(U, Y, Ux, check=False)
    return out, float(np.max(norm(out - alt)))


def covariant_chain(backend, curve, m, check=True):
    """m-fold covariant derivative of U_x, for m in {0, 1, 2, 3}."""
    if m not in (0, 1, 2, 3):
        raise ValueError(f"covariant_chain supports m in 0..3, got {m}")
    U = _points(curve)
    Y = backend.tangent_project(U, d_dx(U), check=False)
    for _ in range(m):
        Y = backend.tangent_project(U, d_dx(Y), check=False)
    return Y


def covariant_stack(backend, U, m):
    """[U_x, nabla U_x, ..., nabla^m U_x] computed in one pass."""
    out = [backend.tangent_project(U, d_dx(U), check=False)]
    for _ in range(m):
        out.append(backend.tangent_project(U, d_dx(out[-1]), check=False))
    return out


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def l2_pair(f, g):
    """Trapezoid quadrature of (f(x), g(x)) over [0, 2pi]."""
    f = _vectors(f)
    g = _vectors(g)
    if f.shape != g.shape:
        raise GridMismatch(f"shapes differ: {f.shape} vs {g.shape}")
    N = _n_nodes(f)
    return (2.0 * np.pi / N) * np.einsum("...ij,...ij->...", f, g)


def l2_norm(f):
    return np.sqrt(l2_pair(f, f))


def hk_norm(f, k):
    """Ambient Sobolev norm: sqrt(sum_{l<=k} ||d^l f||^2)."""
    f = _vectors(f)
    total = l2_pair(f, f)
    g = f
    for _ in range(k):
        g = d_dx(g)
        total = total + l2_pair(g, g)
    return np.sqrt(total)


def hk_norm_covariant(backend, curve, Y, k):
    """Sobolev norm built from covariant derivatives of a tangent field."""
    U = _points(curve)
    Y = _vectors(Y)
    total = l2_pair(Y, Y)
    for _ in range(k):
        Y = backend.tangent_project(U, d_dx(Y), check=False)
        total = total + l2_pair(Y, Y)
    return np.sqrt(total)


# ---------------------------------------------------------------------------
# construction and IO
# ---------------------------------------------------------------------------


def curve_from_fn(fn, N, backend, t=0.0):
    """Sample ``fn`` on the grid and retract every node onto the manifold."""
    grid = PeriodicGrid(N)
    raw = np.asarray([fn(x) for x in grid.x], dtype=float)
    pts = backend.retract(raw)
    return CurveState(pts, backend, t)


def write_snapshot(path, curve):
    U = _points(curve)
    N, d = U.shape
    x = PeriodicGrid(N).x
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "x_j"] + [f"coord_{i}" for i in range(d)])
        for j in range(N):
            w.writerow([j, "%.17g" % x[j]] + ["%.17g" % v for v in U[j]])


def read_snapshot(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["j", "x_j"]:
        raise ValueError(f"{path}: not a curve snapshot")
    return np.array([[float(v) for v in r[2:]] for r in body])
