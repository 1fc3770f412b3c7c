"""Composite curvature operators built from U, U_x and the covariant curvature U_xx.

All operators are frame-free: sums over a normal frame are rewritten with the
second fundamental form ``A`` and its adjoint ``W_eta``.  Every pointwise
operator accepts arrays with arbitrary leading axes, so the same code serves
grid curves of shape (N, d) and batches of independent samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bischro.geometry import GeometryBackend, inner, norm
from bischro.spectral import GridMismatch, check_resolved, covariant_stack, d_dx, l2_pair


@dataclass
class CurveData:
    """A point field U with tangent data U_x and calU = nabla_x u_x."""

    backend: GeometryBackend
    U: np.ndarray
    Ux: np.ndarray
    calU: np.ndarray

    def __post_init__(self):
        if not (self.U.shape == self.Ux.shape == self.calU.shape):
            raise GridMismatch("U, U_x and calU must share a shape")
        bk = self.backend
        self.JUx = bk.complex_apply(self.U, self.Ux, check=False)
        self.JcalU = bk.complex_apply(self.U, self.calU, check=False)
        self.eta = bk.second_fundamental(self.U, self.Ux, self.Ux, check=False)

    @classmethod
    def from_curve(cls, backend, U):
        U = np.asarray(U, dtype=float)
        Ux, calU = covariant_stack(backend, U, 1)
        return cls(backend, U, Ux, calU)

    @property
    def shape(self):
        return self.U.shape

    # short aliases used by every operator below
    def P(self, Y):
        return self.backend.tangent_project(self.U, Y, check=False)

    def J(self, Y):
        return self.backend.complex_apply(self.U, Y, check=False)

    def A(self, X, Y):
        return self.backend.second_fundamental(self.U, X, Y, check=False)

    def W(self, eta, X):
        return self.backend.weingarten(self.U, eta, X, check=False)

    def R(self, Y1, Y2, Y3):
        return self.backend.curvature(self.U, Y1, Y2, Y3, check=False)


@dataclass
class OperatorReport:
    name: str
    residual: float
    tolerance: float
    samples: int
    passed: bool = False
    note: str = ""

    def __post_init__(self):
        self.passed = bool(np.isfinite(self.residual) and self.residual < self.tolerance)

    def as_dict(self):
        return {
            "identity": self.name,
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "samples": int(self.samples),
            "pass": self.passed,
            "note": self.note,
        }


def _same(data, Y):
    Y = np.asarray(Y, dtype=float)
    if Y.shape != data.shape:
        raise GridMismatch(f"field shape {Y.shape} != data shape {data.shape}")
    return Y


# ---------------------------------------------------------------------------
# pointwise operators
# ---------------------------------------------------------------------------


def op_B(i, data, Y):
    Y = _same(data, Y)
    R = data.R
    if i == 1:
        return R(Y, data.calU, data.JUx) - R(Y, data.Ux, data.JcalU)
    if i == 2:
        return R(Y, data.calU, data.JUx) + R(Y, data.JUx, data.calU)
    if i == 3:
        return R(Y, data.Ux, data.JcalU) + R(Y, data.JcalU, data.Ux)
    raise ValueError(f"B_i defined for i in 1..3, got {i}")


def op_K(data, Y):
    """K Y = J W_eta(P Y) with eta = A(U_x, U_x); the frame sum behind S and T."""
    Y = _same(data, Y)
    return data.J(data.W(data.eta, Y))


def op_S(sign, data, Y):
    """S_+ (skew) or S_- (symmetric): J W_eta(PY) +/- W_eta(JY)."""
    Y = _same(data, Y)
    first = data.J(data.W(data.eta, Y))
    second = data.W(data.eta, data.J(Y))
    if sign in ("+", 1, "plus"):
        return first + second
    if sign in ("-", -1, "minus"):
        return first - second
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def op_T(data, Y):
    Y = _same(data, Y)
    return data.J(data.W(data.A(Y, data.Ux), data.Ux))


def op_T_star(data, Y):
    Y = _same(data, Y)
    return -data.W(data.A(data.J(Y), data.Ux), data.Ux)


def op_RJ(data, Y):
    """R(J U_x, U_x) Y, skew-symmetric in Y."""
    return data.R(data.JUx, data.Ux, Y)


def op_S_plus_decomposed(data, Y):
    """T - T* + R(J U_x, U_x)."""
    return op_T(data, Y) - op_T_star(data, Y) + op_RJ(data, Y)


def op_S_minus_decomposed(data, Y):
    """T + T* + R(., U_x) J U_x + R(., J U_x) U_x."""
    R = data.R
    return (
        op_T(data, Y)
        + op_T_star(data, Y)
        + R(Y, data.Ux, data.JUx)
        + R(Y, data.JUx, data.Ux)
    )


# ---------------------------------------------------------------------------
# the linearised operator
# ---------------------------------------------------------------------------


def derived_constants(a, b, c):
    """(c1, c2, c3) of the B_i terms in L, as re-derived by hand."""
    c1 = a / 2.0 - 1.5 * b - c
    c2 = -1.25 * a + 0.75 * b - 0.5 * c
    return c1, c2, c2


def op_L_terms(data, Y, params, cs=None):
    """Every term of L(U)Y as a dict, so tests can inspect them separately.

    ``data`` must be grid data (node axis -2).  ``cs`` overrides (c1, c2, c3).
    """
    Y = _same(data, Y)
    a, lam, b, c = params.a, params.lam, params.b, params.c
    if cs is None:
        cs = derived_constants(a, b, c)
    J, R = data.J, data.R
    Y1 = d_dx(Y)
    Y2 = d_dx(Y1)
    Y3 = d_dx(Y2)
    t = {}
    t["a_d2_J_d2"] = a * d_dx(J(Y2), 2)
    t["a_A_J_d3"] = 2.0 * a * data.A(J(Y3), data.Ux)
    t["lam_d_J_d"] = lam * d_dx(J(Y1))
    t["R_d2_JUx_Ux"] = (-a + b) * R(Y2, data.JUx, data.Ux)
    t["d_RJ_d"] = (-a + b + c) * d_dx(op_RJ(data, Y1))
    t["R_JcalU_Ux_d"] = (-a / 2.0 - b / 2.0 + 3.0 * c) * R(data.JcalU, data.Ux, Y1)
    t["B_d"] = sum(ci * op_B(i, data, Y1) for i, ci in zip((1, 2, 3), cs))
    t["d_Splus_d"] = a * d_dx(op_S("+", data, Y1))
    t["dSminus_d"] = a * (d_dx(op_S("-", data, Y1)) - op_S("-", data, Y2))
    t["J_W_d"] = 2.0 * a * J(data.W(data.A(data.calU, data.Ux), Y1))
    return t


def op_L(data, Y, params, cs=None, check=True):
    if check:
        check_resolved(Y, "op_L input")
    return sum(op_L_terms(data, Y, params, cs).values())


# ---------------------------------------------------------------------------
# quadrature annihilation checks
# ---------------------------------------------------------------------------


def annihilation_pairings(data, Y):
    """Pairings that vanish by skew-symmetry plus discrete integration by parts.

    Returns a dict of (value, scale) with scale the natural product of norms.
    """
    Y = _same(data, Y)
    J = data.J
    Y1 = d_dx(Y)
    Y2 = d_dx(Y1)
    nY = np.sqrt(l2_pair(Y, Y))
    nY1 = np.sqrt(l2_pair(Y1, Y1))
    nY2 = np.sqrt(l2_pair(Y2, Y2))
    ux = float(np.max(norm(data.Ux)))
    eta = float(np.max(norm(data.eta)))
    out = {}
    out["J_d2"] = (float(l2_pair(d_dx(J(Y2), 2), Y)), float(nY2 * nY2) + 1e-300)
    out["S_plus"] = (
        float(l2_pair(d_dx(op_S("+", data, Y1)), Y)),
        float(nY1 * nY1 * eta) + 1e-300,
    )
    out["RJ"] = (
        float(l2_pair(d_dx(op_RJ(data, Y1)), Y)),
        float(nY1 * nY1 * ux * ux) + 1e-300,
    )
    return out


def pointwise_pair_residual(lhs, rhs, scale):
    """max |lhs - rhs| / scale over the sample axes."""
    return float(np.max(np.abs(lhs - rhs) / scale))


def pairing(x, y):
    return inner(x, y)
