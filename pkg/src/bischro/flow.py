"""Time integration of the fourth-order curve flow

    u_t = a J nabla^3 u_x + lam J nabla u_x + b R(nabla u_x, u_x) J u_x + c R(J u_x, u_x) nabla u_x

on closed curves, with energy monitoring and the helix dispersion oracle.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from bischro import _kernels
from bischro.geometry import GeometryBackend, GeometryError, RetractionError, SphereS2, norm
from bischro.spectral import (
    DENSE_MAX_N,
    PeriodicGrid,
    check_resolved,
    covariant_stack,
    d_dx,
    dealias_kmax,
    diff_matrix,
    l2_pair,
    truncate,
    write_snapshot,
)

STABILITY_BOUND = 2.0


class BlowUpError(RuntimeError):
    """The integration left the retraction neighbourhood or produced NaNs."""

    def __init__(self, message, last_good=None, t=None, step=None):
        super().__init__(message)
        self.last_good = last_good
        self.t = t
        self.step = step


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class FlowParams:
    a: float
    lam: float
    b: float
    c: float
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    hamiltonian: bool = False

    def __post_init__(self):
        for name in ("a", "lam", "b", "c"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"parameter {name} must be finite")

    @property
    def coeffs(self):
        return (self.a, self.lam, self.b, self.c)

    def as_dict(self):
        return asdict(self)


def params_from_energy(alpha, beta, gamma):
    """Coefficients of the Hamiltonian flow of alpha E + beta E2 + gamma E_star."""
    alpha, beta, gamma = float(alpha), float(beta), float(gamma)
    return FlowParams(
        a=beta + 0.0,
        lam=-alpha + 0.0,
        b=beta + 8.0 * gamma,
        c=-12.0 * gamma + 0.0,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        hamiltonian=True,
    )


@dataclass(frozen=True)
class SolverConfig:
    N: int
    dt: float
    t_end: float
    integrator: str = "rk4"
    reprojection: str = "every_stage"
    seed: int = 0
    stride: int = 100
    dealias: bool = True

    def __post_init__(self):
        PeriodicGrid(self.N)
        if self.integrator != "rk4":
            raise ValueError(f"unsupported integrator {self.integrator!r}")
        if self.reprojection != "every_stage":
            raise ValueError(f"unsupported reprojection {self.reprojection!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ValueError("t_end must be nonnegative")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def kmax(self):
        return dealias_kmax(self.N) if self.dealias else self.N // 2 - 1

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def stability_number(self, params):
        k = self.kmax
        return self.dt * (abs(params.a) * k**4 + abs(params.lam) * k**2)

    def check_stability(self, params):
        s = self.stability_number(params)
        if s > STABILITY_BOUND:
            raise StabilityError(
                f"dt={self.dt:g} at N={self.N} gives stability number {s:.3g} > {STABILITY_BOUND}"
            )
        return s


# ---------------------------------------------------------------------------
# right-hand side
# ---------------------------------------------------------------------------


def rhs_generic(backend, params, U):
    a, lam, b, c = params.coeffs
    Ux, W1, W2, W3 = covariant_stack(backend, U, 3)
    J = lambda v: backend.complex_apply(U, v, check=False)  # noqa: E731
    R = lambda x, y, z: backend.curvature(U, x, y, z, check=False)  # noqa: E731
    JUx = J(Ux)
    out = a * J(W3) + lam * J(W1)
    if b:
        out = out + b * R(W1, Ux, JUx)
    if c:
        out = out + c * R(JUx, Ux, W1)
    return out


def rhs(backend, params, U, check=False):
    """Velocity field of the flow at the curve(s) U, shape (..., N, d)."""
    U = np.asarray(U, dtype=float)
    if check:
        backend.check_point(U, tol=1e-9)
        check_resolved(U, "curve")
    N = U.shape[-2]
    if isinstance(backend, SphereS2) and N <= DENSE_MAX_N:
        out = _kernels.sphere_flow_rhs(U, diff_matrix(N), *params.coeffs)
    else:
        out = rhs_generic(backend, params, U)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("non-finite right-hand side")
    return out


# ---------------------------------------------------------------------------
# RK4 with retraction
# ---------------------------------------------------------------------------


def _guarded_retract(backend, V):
    if not np.all(np.isfinite(V)):
        raise BlowUpError("non-finite state")
    R = backend.bounding_radius
    if np.max(np.abs(V)) > 10.0 * R:
        raise BlowUpError(f"coordinate exceeds 10x bounding radius ({R:g})")
    try:
        return backend.retract(V)
    except RetractionError as exc:
        raise BlowUpError(f"retraction failed: {exc}") from exc


def step(backend, params, U, dt, kmax=None):
    """One classical RK4 step with retraction after every stage.

    Each stage velocity is truncated to wavenumbers |k| <= kmax (two-thirds
    rule by default), which keeps the top of the spectrum from driving the
    explicit scheme unstable.  The filtered velocity is projected back onto
    the tangent space; without that the step only converges at first order.
    """
    U = np.asarray(U, dtype=float)
    if kmax is None:
        kmax = dealias_kmax(U.shape[-2])

    def f(X):
        return backend.tangent_project(X, truncate(rhs(backend, params, X), kmax), check=False)

    K1 = f(U)
    K2 = f(_guarded_retract(backend, U + 0.5 * dt * K1))
    K3 = f(_guarded_retract(backend, U + 0.5 * dt * K2))
    K4 = f(_guarded_retract(backend, U + dt * K3))
    return _guarded_retract(backend, U + (dt / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4))


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------


@dataclass
class EnergyReport:
    E: float
    E2: float
    E_star: float
    E_combined: float
    l2_ux_sq: float

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v):
                raise GeometryError(f"energy {k} is not finite")

    def as_row(self):
        return [self.E, self.E2, self.E_star, self.E_combined, self.l2_ux_sq]


def energies(backend, U, alpha=0.0, beta=0.0, gamma=0.0):
    U = np.asarray(U, dtype=float)
    Ux, W1 = covariant_stack(backend, U, 1)
    JUx = backend.complex_apply(U, Ux, check=False)
    ux2 = float(l2_pair(Ux, Ux))
    E = 0.5 * ux2
    E2 = 0.5 * float(l2_pair(W1, W1))
    Es = float(l2_pair(backend.curvature(U, Ux, JUx, JUx, check=False), Ux))
    return EnergyReport(E, E2, Es, alpha * E + beta * E2 + gamma * Es, ux2)


def _energy_weights(params):
    if params.hamiltonian:
        return params.alpha, params.beta, params.gamma
    return 0.0, 0.0, 0.0


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    final: np.ndarray | None = None
    status: str = "ok"
    message: str = ""
    steps: int = 0
    max_residual: float = 0.0

    def series(self, name):
        return np.array([getattr(r, name) for r in self.reports])

    def drift(self, name):
        s = self.series(name)
        ref = abs(s[0]) if s[0] != 0 else 1.0
        return float(np.max(np.abs(s - s[0])) / ref)


def integrate(backend, params, U0, config, allow_a_zero=False, callback=None, energy=True):
    """Integrate from U0 over config.t_end; record energies every stride steps.

    On blow-up the trajectory is returned with status "blowup" and the last
    good state in ``final``.  ``callback(step, t, U)`` sees every recorded state.
    """
    if params.a == 0.0 and not allow_a_zero:
        raise ValueError("a = 0 is only allowed in validation mode (allow_a_zero)")
    config.check_stability(params)
    U = np.array(U0, dtype=float)
    backend.check_point(U, tol=1e-9)
    weights = _energy_weights(params)
    traj = Trajectory()
    kmax = config.kmax

    def record(n, t, X):
        traj.times.append(t)
        if energy:
            traj.reports.append(energies(backend, X, *weights))
        if callback is not None:
            callback(n, t, X)

    record(0, 0.0, U)
    n_steps = config.n_steps
    for n in range(1, n_steps + 1):
        try:
            U_new = step(backend, params, U, config.dt, kmax)
        except BlowUpError as exc:
            traj.status = "blowup"
            traj.message = str(exc)
            traj.final = U
            traj.steps = n - 1
            return traj
        res = float(np.max(backend.constraint_residual(U_new)))
        traj.max_residual = max(traj.max_residual, res)
        U = U_new
        if n % config.stride == 0 or n == n_steps:
            record(n, n * config.dt, U)
    traj.final = U
    traj.steps = n_steps
    return traj


# ---------------------------------------------------------------------------
# helix oracle
# ---------------------------------------------------------------------------


def helix_dispersion(params, m, theta0):
    """Angular frequency of the latitude helix of winding m on the unit sphere."""
    a, lam, b, c = params.coeffs
    s2 = math.sin(theta0) ** 2
    c2 = math.cos(theta0) ** 2
    return math.cos(theta0) * (lam * m**2 + ((b + c) * s2 - a * c2) * m**4)


def helix_curve(N, m, theta0, phase=0.0):
    x = PeriodicGrid(N).x
    s, c = math.sin(theta0), math.cos(theta0)
    return np.stack(
        [s * np.cos(m * x + phase), s * np.sin(m * x + phase), np.full(N, c)], axis=-1
    )


def helix_residual(params, N, m, theta0):
    """max |rhs + (omega/m) U_x| on the sampled helix (ansatz substitution)."""
    bk = SphereS2()
    U = helix_curve(N, m, theta0)
    omega = helix_dispersion(params, m, theta0)
    return float(np.max(norm(rhs_generic(bk, params, U) + (omega / m) * d_dx(U))))


def helix_phase(U, m):
    z = U[:, 0] + 1j * U[:, 1]
    return float(np.angle(np.fft.fft(z)[m]))


def measure_helix_frequency(params, m, theta0, N=64, dt=1e-5, t_end=0.05):
    """Evolve the helix and read omega off the rotation of its mode-m phase."""
    bk = SphereS2()
    U0 = helix_curve(N, m, theta0)
    cfg = SolverConfig(N=N, dt=dt, t_end=t_end, stride=max(1, int(round(t_end / dt))))
    traj = integrate(bk, params, U0, cfg, allow_a_zero=True, energy=False)
    if traj.status != "ok":
        raise BlowUpError(traj.message)
    dpsi = helix_phase(traj.final, m) - helix_phase(U0, m)
    dpsi = (dpsi + np.pi) % (2 * np.pi) - np.pi
    T = traj.steps * dt
    return -dpsi / T


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

FLOAT_FMT = "%.17g"


def fmt(x):
    return FLOAT_FMT % float(x)


def write_energy_csv(path, traj):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "E", "E2", "Estar", "Ecombined", "l2ux_sq"])
        for t, r in zip(traj.times, traj.reports):
            w.writerow([fmt(t)] + [fmt(v) for v in r.as_row()])


def run_summary(params, config, traj):
    out = {
        "params": params.as_dict(),
        "config": asdict(config),
        "status": traj.status,
        "message": traj.message,
        "steps": traj.steps,
        "max_constraint_residual": traj.max_residual,
    }
    if traj.reports:
        out["drift"] = {
            k: traj.drift(k) for k in ("E", "E2", "E_star", "E_combined", "l2_ux_sq")
        }
    return out


def dump_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(_json_floats(obj), indent=2, sort_keys=True))
        fh.write("\n")


def _json_floats(obj):
    # route floats through the fixed 17-digit format so output is byte stable
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _json_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_floats(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_floats(obj.item())
    return obj


def warn_unresolved(U):
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        return check_resolved(U, "curve")

