"""Difference energies for two nearby solutions and the gauge that closes them.

For curves U, V set Z = U - V and W = calU - calV, where calU = nabla_x u_x in
ambient coordinates.  The classical energy is D^2 = |Z|^2 + |Z_x|^2 + |W|^2;
the modified one replaces W by W + Lambda with

    Lambda = -(e1 / 2a) R(Z, U_x) U_x + (e2 / 8a) R(J U_x, U_x) J Z,
    e1 = a - b,  e2 = -3a/2 + 3b/2 - 3c.

Growth constants follow the convention d/dt X = 2 C X, so e^{2t} gives C = 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from bischro.flow import BlowUpError, SolverConfig, fmt, integrate, rhs
from bischro.geometry import norm
from bischro.operators import CurveData, derived_constants, op_L
from bischro.spectral import PeriodicGrid, covariant_stack, d_dx, l2_pair

NOISE_FLOOR = 1e-20


class ConfigMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GaugeConstants:
    e1: float
    e2: float

    @classmethod
    def from_params(cls, params):
        a, b, c = params.a, params.b, params.c
        return cls(a - b, -1.5 * a + 1.5 * b - 3.0 * c)

    @classmethod
    def off(cls):
        return cls(0.0, 0.0)


def gauge_lambda(backend, data, Z, params, gauge=None):
    """Gauge field at U; tangent at U and linear in Z."""
    if params.a == 0.0:
        raise ValueError("the gauge is undefined for a = 0")
    g = GaugeConstants.from_params(params) if gauge is None else gauge
    Z = np.asarray(Z, dtype=float)
    out = np.zeros_like(Z)
    if g.e1:
        out = out - (g.e1 / (2.0 * params.a)) * data.R(Z, data.Ux, data.Ux)
    if g.e2:
        out = out + (g.e2 / (8.0 * params.a)) * data.R(data.JUx, data.Ux, data.J(Z))
    return out


@dataclass
class PairState:
    backend: object
    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.U.shape != self.V.shape:
            raise ConfigMismatch(f"curves on different grids: {self.U.shape} vs {self.V.shape}")
        self.data = CurveData.from_curve(self.backend, self.U)
        Vx, calV = covariant_stack(self.backend, self.V, 1)
        self.Vx = Vx
        self.calV = calV
        self.Z = self.U - self.V
        self.Zx = d_dx(self.Z)
        self.W = self.data.calU - calV

    def Lam(self, params, gauge=None):
        return gauge_lambda(self.backend, self.data, self.Z, params, gauge)

    def W_tilde(self, params, gauge=None):
        return self.W + self.Lam(params, gauge)


def pair_energies(pair, params, gauge=None):
    """(D^2, modified D^2) for a PairState."""
    base = float(l2_pair(pair.Z, pair.Z) + l2_pair(pair.Zx, pair.Zx))
    Wt = pair.W_tilde(params, gauge)
    return base + float(l2_pair(pair.W, pair.W)), base + float(l2_pair(Wt, Wt))


def lambda_bound(pair, params, gauge=None):
    """Measured |Lambda|_L2 / |Z|_L2 (nan for Z = 0)."""
    nz = np.sqrt(float(l2_pair(pair.Z, pair.Z)))
    if nz == 0.0:
        return float("nan")
    lam = pair.Lam(params, gauge)
    return np.sqrt(float(l2_pair(lam, lam))) / nz


# ---------------------------------------------------------------------------
# co-evolution
# ---------------------------------------------------------------------------


@dataclass
class EnergySeries:
    times: np.ndarray
    D2: np.ndarray
    Dt2: np.ndarray
    extra: dict = field(default_factory=dict)
    status: str = "ok"
    message: str = ""
    final: np.ndarray | None = None

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "D2", "Dtilde2"])
            for row in zip(self.times, self.D2, self.Dt2):
                w.writerow([fmt(v) for v in row])


def evolve_pair(backend, params, u0, v0, config, gauges=None, allow_a_zero=False):
    """Advance U and V in lockstep and record D^2 and the modified energy.

    ``gauges`` maps extra labels to GaugeConstants whose modified energies go
    into ``series.extra``.  Either curve blowing up stops both.
    """
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if u0.shape != v0.shape:
        raise ConfigMismatch("initial curves differ in shape")
    if u0.shape[0] != config.N:
        raise ConfigMismatch(f"curves have {u0.shape[0]} nodes, config says N={config.N}")
    gauges = gauges or {}
    times, D2, Dt2 = [], [], []
    extra = {k: [] for k in gauges}

    def record(n, t, X):
        pair = PairState(backend, X[0], X[1])
        d2, dt2 = pair_energies(pair, params)
        times.append(t)
        D2.append(d2)
        Dt2.append(dt2)
        for k, g in gauges.items():
            extra[k].append(pair_energies(pair, params, g)[1])

    traj = integrate(
        backend, params, np.stack([u0, v0]), config,
        allow_a_zero=allow_a_zero, callback=record, energy=False,
    )
    return EnergySeries(
        np.array(times), np.array(D2), np.array(Dt2),
        {k: np.array(v) for k, v in extra.items()},
        status=traj.status, message=traj.message, final=traj.final,
    )


# ---------------------------------------------------------------------------
# growth fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GronwallFit:
    C: float
    unreliable: bool


def gronwall_fit(times, values, window=None):
    """Least-squares C in d/dt X = 2 C X from centred differences.

    ``window`` is an index range (i0, i1) into the series; the default is all
    of it.  Series below the noise floor are flagged unreliable.
    """
    t = np.asarray(times, dtype=float)
    X = np.asarray(values, dtype=float)
    if window is not None:
        t, X = t[window[0] : window[1]], X[window[0] : window[1]]
    if len(X) < 3:
        raise ValueError("need at least three samples")
    if np.any(X <= 0.0):
        raise ValueError("energies must be positive for a growth fit")
    Xd = (X[2:] - X[:-2]) / (t[2:] - t[:-2])
    Xm = X[1:-1]
    C = float(np.sum(Xd * Xm) / (2.0 * np.sum(Xm * Xm)))
    return GronwallFit(C, bool(np.max(X) < NOISE_FLOOR))


def peak_rate(times, values, width):
    """Largest growth constant over sliding windows of ``width`` samples."""
    n = len(values)
    width = min(max(3, width), n)
    return max(gronwall_fit(times, values, (i, i + width)).C for i in range(0, n - width + 1))


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def perturbation(backend, U, m, eps, w=None):
    """retract(U + eps sin(m x) w) with w a unit tangent field along U."""
    N, d = U.shape
    x = PeriodicGrid(N).x
    if w is None:
        w = backend.complex_apply(U, d_dx(U), check=False)
    w = backend.tangent_project(U, w, check=False)
    w = w / norm(w)[:, None]
    return backend.retract(U + eps * np.sin(m * x)[:, None] * w)


def loss_experiment(backend, params, base, modes=(4, 8, 16), eps=1e-5, config=None, width=None):
    """Peak growth constants of D^2 and the modified energy per perturbation mode.

    ``width`` is the sliding-window length in recorded samples; by default it
    spans 1/8 of the fastest perturbation period so oscillating rates are seen.
    """
    base = np.asarray(base, dtype=float)
    N = base.shape[0]
    if config is None:
        config = SolverConfig(N=N, dt=6e-7, t_end=0.02, stride=5)
    for m in modes:
        if not m < N / 4:
            raise ValueError(f"mode {m} must be below N/4 = {N / 4}")
    rows = []
    for m in modes:
        v0 = perturbation(backend, base, m, eps)
        s = evolve_pair(backend, params, base, v0, config, gauges={"ablation": GaugeConstants.off()})
        if s.status != "ok":
            raise BlowUpError(f"mode {m}: {s.message}")
        w = width if width is not None else _default_width(params, max(modes), config)
        rows.append(
            {
                "m": m,
                "eps": eps,
                "C_classical": peak_rate(s.times, s.D2, w),
                "C_modified": peak_rate(s.times, s.Dt2, w),
                "C_ablation": peak_rate(s.times, s.extra["ablation"], w),
                "mean_C_classical": gronwall_fit(s.times, s.D2).C,
                "mean_C_modified": gronwall_fit(s.times, s.Dt2).C,
                "D2_0": float(s.D2[0]),
                "D2_T": float(s.D2[-1]),
                "Dt2_0": float(s.Dt2[0]),
                "Dt2_T": float(s.Dt2[-1]),
                "window_samples": w,
            }
        )
    lo = rows[0]
    for r in rows:
        r["ratio_classical"] = r["C_classical"] / lo["C_classical"]
        r["ratio_modified"] = r["C_modified"] / lo["C_modified"]
    return rows


def _default_width(params, m, config):
    freq = max(abs(params.a) * m**4, abs(params.lam) * m**2, 1.0)
    period = 2.0 * np.pi / freq
    samples = period / 8.0 / (config.dt * config.stride)
    return int(max(3, round(samples)))


# ---------------------------------------------------------------------------
# linearised-operator validation
# ---------------------------------------------------------------------------


def calU_velocity(backend, U, F):
    """Exact derivative of calU = P(U) D (P(U) D U) when U moves with velocity F."""
    DU = d_dx(U)
    Ux = backend.tangent_project(U, DU, check=False)
    Uxd = backend.dproject(U, F, DU) + backend.tangent_project(U, d_dx(F), check=False)
    DUx = d_dx(Ux)
    return backend.dproject(U, F, DUx) + backend.tangent_project(U, d_dx(Uxd), check=False)


def calW_velocity(backend, params, U, V):
    return calU_velocity(backend, U, rhs(backend, params, U)) - calU_velocity(
        backend, V, rhs(backend, params, V)
    )


def calW_velocity_fd(backend, params, U, V, h=1e-6):
    """Centred difference of W along retracted flow steps (cross-check)."""

    def W(s):
        Us = backend.retract(U + s * rhs(backend, params, U))
        Vs = backend.retract(V + s * rhs(backend, params, V))
        return covariant_stack(backend, Us, 1)[1] - covariant_stack(backend, Vs, 1)[1]

    return (W(h) - W(-h)) / (2.0 * h)


def L_remainder(backend, params, U, V, cs=None):
    """Tangential remainder of d_t W - L(U) W relative to the classical D.

    Returns (|remainder|_L2, D, C = ratio).
    """
    pair = PairState(backend, U, V)
    Wdot = calW_velocity(backend, params, U, V)
    LW = op_L(pair.data, pair.W, params, cs, check=False)
    rem = backend.tangent_project(U, Wdot - LW, check=False)
    nrem = np.sqrt(float(l2_pair(rem, rem)))
    D = np.sqrt(
        float(l2_pair(pair.Z, pair.Z) + l2_pair(pair.Zx, pair.Zx) + l2_pair(pair.W, pair.W))
    )
    return nrem, D, nrem / D


def constants_check(backend, params, base_fn, grids=(64, 128), eps=1e-7, cs=None, mode_div=8):
    """C = |P(d_t W - L W)| / D at perturbation mode N/mode_div on each grid.

    Tying the mode to N makes a wrong constant show up as C growing with N.
    """
    out = []
    for N in grids:
        U = base_fn(N)
        m = N // mode_div
        V = perturbation(backend, U, m, eps)
        nrem, D, C = L_remainder(backend, params, U, V, cs)
        out.append({"N": N, "m": m, "remainder": nrem, "D": D, "C": C})
    return out

