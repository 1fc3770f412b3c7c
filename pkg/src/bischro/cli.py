"""Command-line front end: ``bischro {verify,simulate,dispersion,uniqueness}``.

Exit codes: 0 all checks pass, 1 a check failed (reports still written),
2 numerical blow-up, 3 configuration error (nothing written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

from bischro.config import ConfigError, parse_config
from bischro.flow import (
    dump_json,
    helix_curve,
    helix_dispersion,
    helix_phase,
    helix_residual,
    integrate,
    run_summary,
    write_energy_csv,
)
from bischro.identities import generic_loop, identity_suite, suite_passed
from bischro.spectral import write_snapshot
from bischro.uniqueness import (
    GaugeConstants,
    _default_width,
    evolve_pair,
    gronwall_fit,
    peak_rate,
    perturbation,
)

EXIT_OK, EXIT_FAIL, EXIT_BLOWUP, EXIT_CONFIG = 0, 1, 2, 3

DISPERSION_TOL = 1e-3
HELIX_GATE = 1e-10


def worker_count():
    try:
        n = int(os.environ.get("BISCHRO_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _map(fn, jobs):
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


# ---------------------------------------------------------------------------
# scenarios: each writes into ``tmp`` and returns an exit code
# ---------------------------------------------------------------------------


def run_verify(cfg, tmp):
    reports = identity_suite(cfg.backend(), cfg.seed, samples=cfg.extra["samples"])
    dump_json(os.path.join(tmp, "identities.json"), [r.as_dict() for r in reports])
    return EXIT_OK if suite_passed(reports) else EXIT_FAIL


def _initial_curve(cfg):
    bk = cfg.backend()
    N = cfg.solver.N
    if cfg.extra["initial"] == "helix":
        if cfg.backend_spec != "sphere":
            raise ConfigError("helix initial data needs the sphere backend")
        return helix_curve(N, cfg.extra["mode"], cfg.extra["theta0"])
    return generic_loop(bk, N, seed=cfg.seed)


def run_simulate(cfg, tmp):
    bk = cfg.backend()
    U0 = _initial_curve(cfg)
    snaps = []

    def keep(n, t, U):
        snaps.append((n, U.copy()))

    traj = integrate(bk, cfg.params, U0, cfg.solver, allow_a_zero=cfg.allow_a_zero, callback=keep)
    write_energy_csv(os.path.join(tmp, "energies.csv"), traj)
    for n, U in snaps:
        write_snapshot(os.path.join(tmp, f"snapshot_{n:08d}.csv"), U)
    if traj.status != "ok":
        write_snapshot(os.path.join(tmp, "last_good.csv"), traj.final)
    dump_json(os.path.join(tmp, "summary.json"), run_summary(cfg.params, cfg.solver, traj))
    return EXIT_OK if traj.status == "ok" else EXIT_BLOWUP


def run_dispersion(cfg, tmp):
    p, s = cfg.params, cfg.solver
    m, th = cfg.extra["mode"], cfg.extra["theta0"]
    omega = helix_dispersion(p, m, th)
    gate = helix_residual(p, 32, m, th)
    U0 = helix_curve(s.N, m, th)
    bk = cfg.backend()
    traj = integrate(bk, p, U0, s, allow_a_zero=cfg.allow_a_zero, energy=False)
    result = {"omega_predicted": omega, "ansatz_residual": gate, "m": m, "theta0": th}
    code = EXIT_OK
    if traj.status != "ok":
        result["status"] = "blowup"
        code = EXIT_BLOWUP
    else:
        dpsi = helix_phase(traj.final, m) - helix_phase(U0, m)
        dpsi = (dpsi + math.pi) % (2 * math.pi) - math.pi
        measured = -dpsi / (traj.steps * s.dt)
        rel = abs(measured - omega) / max(abs(omega), 1e-300)
        result.update(
            omega_measured=measured,
            relative_error=rel,
            status="ok",
            pass_=bool(rel < DISPERSION_TOL and gate < HELIX_GATE),
        )
        if not result["pass_"]:
            code = EXIT_FAIL
    result["pass"] = result.pop("pass_", False)
    result["params"] = p.as_dict()
    dump_json(os.path.join(tmp, "dispersion.json"), result)
    return code


def _uniqueness_job(job):
    cfg, m = job
    bk = cfg.backend()
    base = helix_curve(cfg.solver.N, 1, math.pi / 4) if cfg.backend_spec == "sphere" else generic_loop(
        bk, cfg.solver.N, seed=cfg.seed
    )
    v0 = perturbation(bk, base, m, cfg.extra["eps"])
    return m, evolve_pair(bk, cfg.params, base, v0, cfg.solver, gauges={"ablation": GaugeConstants.off()})


def run_uniqueness(cfg, tmp):
    modes = cfg.extra["modes"]
    results = _map(_uniqueness_job, [(cfg, m) for m in modes])
    width = _default_width(cfg.params, max(modes), cfg.solver)
    rows = []
    code = EXIT_OK
    for m, series in results:
        series.write_csv(os.path.join(tmp, f"pair_m{m}.csv"))
        if series.status != "ok":
            code = EXIT_BLOWUP
            rows.append({"m": m, "eps": cfg.extra["eps"], "status": "blowup"})
            continue
        rows.append(
            {
                "m": m,
                "eps": cfg.extra["eps"],
                "C_classical": peak_rate(series.times, series.D2, width),
                "C_modified": peak_rate(series.times, series.Dt2, width),
                "C_ablation": peak_rate(series.times, series.extra["ablation"], width),
                "mean_C_classical": gronwall_fit(series.times, series.D2).C,
                "mean_C_modified": gronwall_fit(series.times, series.Dt2).C,
                "status": "ok",
            }
        )
    report = {"rows": rows, "window_samples": width, "params": cfg.params.as_dict()}
    if code == EXIT_OK and len(rows) > 1:
        lo, hi = rows[0], rows[-1]
        rc = hi["C_classical"] / lo["C_classical"]
        rm = hi["C_modified"] / lo["C_modified"]
        report.update(ratio_classical=rc, ratio_modified=rm, pass_=bool(rm < 3 and rc >= 2 * rm))
        if not report["pass_"]:
            code = EXIT_FAIL
    report["pass"] = report.pop("pass_", code == EXIT_OK)
    dump_json(os.path.join(tmp, "loss_experiment.json"), report)
    return code


SCENARIO_RUNNERS = {
    "verify": run_verify,
    "simulate": run_simulate,
    "dispersion": run_dispersion,
    "uniqueness": run_uniqueness,
}


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory):
    files = sorted(f for f in os.listdir(directory) if f != "manifest.json")
    entries = [{"file": f, "sha256": _sha256(os.path.join(directory, f))} for f in files]
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump({"artifacts": entries}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare_out(out):
    out = os.path.abspath(out)
    if os.path.exists(out) and (not os.path.isdir(out) or os.listdir(out)):
        raise ConfigError(f"output directory {out} exists and is not empty")
    parent = os.path.dirname(out)
    os.makedirs(parent, exist_ok=True)
    return out, parent


def run(cfg):
    """Execute a validated RunConfig; outputs appear atomically in cfg.out."""
    out, parent = _prepare_out(cfg.out)
    tmp = tempfile.mkdtemp(prefix=".bischro-", dir=parent)
    try:
        dump_json(os.path.join(tmp, "config.json"), cfg.as_dict())
        code = SCENARIO_RUNNERS[cfg.scenario](cfg, tmp)
        write_manifest(tmp)
        if os.path.isdir(out):
            os.rmdir(out)
        os.rename(tmp, out)
        return code
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def build_parser():
    parser = argparse.ArgumentParser(prog="bischro", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in ("verify", "simulate", "dispersion", "uniqueness"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file; flags override its values")
        p.add_argument("--backend", choices=["sphere", "grassmann"])
        p.add_argument("--n", type=int, help="Grassmannian ambient dimension n")
        p.add_argument("--k", type=int, help="Grassmannian subspace dimension k")
        p.add_argument("--grid", type=int, help="number of grid nodes N")
        p.add_argument("--dt", type=float)
        p.add_argument("--t-end", dest="t_end", type=float)
        p.add_argument("--stride", type=int, help="record every STRIDE steps")
        p.add_argument("--params", help="a,lambda,b,c")
        p.add_argument("--energy-params", dest="energy_params", help="alpha,beta,gamma")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory (must not exist or be empty)")
        p.add_argument("--allow-a-zero", dest="allow_a_zero", action="store_const", const=True)
        if name == "verify":
            p.add_argument("--samples", type=int)
        if name == "simulate":
            p.add_argument("--initial", choices=["loop", "helix"])
        if name in ("simulate", "dispersion"):
            p.add_argument("--mode", type=int, help="helix winding number")
            p.add_argument("--theta0", type=float, help="helix polar angle")
        if name == "uniqueness":
            p.add_argument("--modes", help="comma-separated perturbation modes")
            p.add_argument("--eps", type=float)
    return parser


def main(argv=None):
    args = vars(build_parser().parse_args(argv))
    path = args.pop("config")
    try:
        cfg = parse_config(path, args)
        code = run(cfg)
    except ConfigError as exc:
        print(f"bischro: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"bischro {cfg.scenario}: exit {code}, outputs in {os.path.abspath(cfg.out)}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
