"""Run configuration: INI file plus command-line overrides, strictly validated."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from bischro.flow import FlowParams, SolverConfig, StabilityError, params_from_energy
from bischro.geometry import make_backend

SCENARIOS = ("verify", "simulate", "dispersion", "uniqueness")

# section -> allowed keys
SCHEMA = {
    "run": {"scenario", "backend", "n", "k", "seed", "out", "allow_a_zero"},
    "flow": {"params", "energy_params"},
    "solver": {"grid", "dt", "t_end", "stride"},
    "experiment": {"samples", "initial", "mode", "theta0", "modes", "eps"},
}

DEFAULTS = {
    "backend": "sphere",
    "seed": 0,
    "grid": 64,
    "dt": 1e-5,
    "t_end": 0.05,
    "stride": 100,
    "samples": 1000,
    "initial": "loop",
    "mode": 1,
    "theta0": math.pi / 4,
    "modes": "4,8,16",
    "eps": 1e-5,
    "allow_a_zero": False,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str
    backend_spec: str
    n: int | None
    k: int | None
    params: FlowParams | None
    solver: SolverConfig | None
    out: str
    seed: int
    allow_a_zero: bool = False
    extra: dict = field(default_factory=dict)

    def backend(self):
        return make_backend(self.backend_spec, self.n, self.k)

    def as_dict(self):
        from dataclasses import asdict

        d = {
            "scenario": self.scenario,
            "backend": self.backend_spec,
            "n": self.n,
            "k": self.k,
            "seed": self.seed,
            "allow_a_zero": self.allow_a_zero,
            "extra": dict(self.extra),
        }
        d["params"] = self.params.as_dict() if self.params else None
        d["solver"] = asdict(self.solver) if self.solver else None
        return d


def _floats(text, n, what):
    try:
        vals = [float(v) for v in str(text).split(",")]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected {n} comma-separated numbers, got {text!r}") from exc
    if len(vals) != n or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{what}: expected {n} finite comma-separated numbers, got {text!r}")
    return vals


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def read_ini(path):
    """Flatten an INI file into a dict, rejecting unknown sections and keys."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    flat = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            flat[key] = value
    return flat


def resolve_params(params_text, energy_text, tol=1e-12):
    direct = _floats(params_text, 4, "params") if params_text is not None else None
    energy = _floats(energy_text, 3, "energy_params") if energy_text is not None else None
    if energy is not None:
        p = params_from_energy(*energy)
        if direct is not None and any(abs(x - y) > tol * max(1.0, abs(y)) for x, y in zip(direct, p.coeffs)):
            raise ConfigError(
                f"params {direct} contradict energy_params {energy} (which map to {list(p.coeffs)})"
            )
        return p
    if direct is not None:
        return FlowParams(*direct)
    return None


def build_config(values):
    """Validate a merged dict of settings into a RunConfig."""
    v = dict(DEFAULTS)
    v.update({k: val for k, val in values.items() if val is not None})
    scenario = v.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    if not v.get("out"):
        raise ConfigError("an output directory is required")
    try:
        seed = int(v["seed"])
        n = int(v["n"]) if v.get("n") is not None else None
        k = int(v["k"]) if v.get("k") is not None else None
        grid = int(v["grid"])
        stride = int(v["stride"])
        dt = float(v["dt"])
        t_end = float(v["t_end"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric setting: {exc}") from exc
    allow = _bool(v["allow_a_zero"])
    backend_spec = str(v["backend"]).lower()
    try:
        make_backend(backend_spec, n, k)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc

    params = resolve_params(v.get("params"), v.get("energy_params"))
    extra = {}
    solver = None
    if scenario != "verify":
        if params is None:
            raise ConfigError(f"{scenario} needs params or energy_params")
        if params.a == 0.0 and not allow:
            raise ConfigError("a = 0 requires the allow_a_zero validation flag")
        if scenario == "uniqueness" and params.a == 0.0:
            raise ConfigError("the uniqueness experiment needs a != 0")
        try:
            solver = SolverConfig(N=grid, dt=dt, t_end=t_end, seed=seed, stride=stride)
            solver.check_stability(params)
        except StabilityError as exc:
            raise ConfigError(f"stability bound violated: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if scenario == "verify":
        extra["samples"] = int(v["samples"])
    elif scenario == "simulate":
        if v["initial"] not in ("loop", "helix"):
            raise ConfigError(f"initial must be 'loop' or 'helix', got {v['initial']!r}")
        extra["initial"] = v["initial"]
        extra["mode"] = int(v["mode"])
        extra["theta0"] = float(v["theta0"])
    elif scenario == "dispersion":
        if backend_spec != "sphere":
            raise ConfigError("the dispersion scenario runs on the sphere backend")
        extra["mode"] = int(v["mode"])
        extra["theta0"] = float(v["theta0"])
    elif scenario == "uniqueness":
        modes = [int(m) for m in str(v["modes"]).split(",")]
        if any(m >= grid / 4 or m < 1 for m in modes):
            raise ConfigError(f"modes must lie in [1, N/4), got {modes}")
        extra["modes"] = modes
        extra["eps"] = float(v["eps"])
    return RunConfig(
        scenario=scenario,
        backend_spec=backend_spec,
        n=n,
        k=k,
        params=params,
        solver=solver,
        out=str(v["out"]),
        seed=seed,
        allow_a_zero=allow,
        extra=extra,
    )


def parse_config(path=None, overrides=None):
    """File values first, then non-None overrides on top."""
    values = read_ini(path) if path else {}
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    return build_config(values)
