"""Command-line entry point: ``elastoscat --config run.json --out results/``.

The run configuration is one JSON document (see ``README.md`` for the
schema).  Every output file carries the configuration hash and the package
version; a rerun with an unchanged configuration whose outputs are intact
is a no-op.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 infeasible scatterer distribution.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4

COMMANDS = ("capacitance", "foldy", "effective", "sweep", "scenario")
OUT_ENV = "ELASTOSCAT_OUT"

_TOP_KEYS = {
    "command", "medium", "shape", "distribution", "wave", "directions", "grid",
    "sweep", "scenario", "tolerances", "cache_dir", "effective",
}


class ConfigError(ValueError):
    pass


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _number(d, key, default=None, positive=False):
    v = d.get(key, default)
    _require(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v), f"'{key}' must be a finite number")
    _require(not positive or v > 0, f"'{key}' must be positive")
    return float(v)


def validate_config(cfg: dict, seed: int | None = None) -> dict:
    """Check the schema and fill defaults; returns a normalised copy."""
    _require(isinstance(cfg, dict), "the configuration must be a JSON object")
    unknown = set(cfg) - _TOP_KEYS
    _require(not unknown, f"unknown configuration keys: {sorted(unknown)}")
    cmd = cfg.get("command")
    _require(cmd in COMMANDS, f"'command' must be one of {list(COMMANDS)}")
    out = {"command": cmd}

    med = cfg.get("medium", {})
    _require(isinstance(med, dict), "'medium' must be an object")
    out["medium"] = {
        "lam": _number(med, "lam", 1.0),
        "mu": _number(med, "mu", 1.0, positive=True),
        "omega": _number(med, "omega", 1.0),
    }
    _require(out["medium"]["omega"] >= 0, "'omega' must be non-negative")
    _require(3 * out["medium"]["lam"] + 2 * out["medium"]["mu"] > 0, "need 3 lam + 2 mu > 0")

    shape = cfg.get("shape", {"builtin": "sphere", "level": 3})
    _require(isinstance(shape, dict), "'shape' must be an object")
    if "mesh" in shape:
        _require(os.path.isfile(shape["mesh"]), f"mesh file not found: {shape['mesh']}")
        out["shape"] = {"mesh": shape["mesh"]}
    else:
        name = shape.get("builtin", "sphere")
        _require(name in ("sphere", "cube", "ellipsoid"), f"unknown builtin shape {name!r}")
        level = shape.get("level", 3)
        _require(isinstance(level, int) and 0 <= level <= 6, "'level' must be an integer in [0, 6]")
        out["shape"] = {"builtin": name, "level": level}

    dist = cfg.get("distribution", {})
    _require(isinstance(dist, dict), "'distribution' must be an object")
    out["distribution"] = {
        "a": _number(dist, "a", 2.0**-9, positive=True),
        "t": _number(dist, "t", 1 / 3, positive=True),
        "s": _number(dist, "s", 1.0, positive=True),
        "K": dist.get("K", {"type": "constant", "value": 0.0}),
        "seed": int(dist.get("seed", 0)) if seed is None else int(seed),
    }
    if "d_min" in dist:
        out["distribution"]["d_min"] = _number(dist, "d_min", positive=True)
    _require(isinstance(out["distribution"]["K"], dict), "'K' must be an object")

    wave = cfg.get("wave", {})
    _require(isinstance(wave, dict), "'wave' must be an object")
    direction = wave.get("direction", [0.0, 0.0, 1.0])
    _require(isinstance(direction, list) and len(direction) == 3, "'wave.direction' must be a 3-vector")
    out["wave"] = {
        "direction": [float(v) for v in direction],
        "alpha": _number(wave, "alpha", 1.0),
        "beta": _number(wave, "beta", 0.5),
        "theta_perp": wave.get("theta_perp"),
    }

    dirs = cfg.get("directions", "cube26")
    _require(
        dirs == "cube26" or (isinstance(dirs, dict) and isinstance(dirs.get("fibonacci"), int) and dirs["fibonacci"] > 0) or (isinstance(dirs, list) and all(isinstance(v, list) and len(v) == 3 for v in dirs)),
        "'directions' must be 'cube26', {'fibonacci': n} or a list of 3-vectors",
    )
    out["directions"] = dirs

    grid = cfg.get("grid", {})
    n = grid.get("n", 16)
    _require(isinstance(n, int) and n >= 4, "'grid.n' must be an integer >= 4")
    out["grid"] = {"n": n}

    tol = cfg.get("tolerances", {})
    _require(isinstance(tol, dict), "'tolerances' must be an object")
    out["tolerances"] = {"rtol": _number(tol, "rtol", 1e-10, positive=True)}

    if cmd == "effective":
        eff = cfg.get("effective", {})
        _require(isinstance(eff, dict), "'effective' must be an object")
        out["effective"] = {"rho": eff.get("rho", 1.0), "c0": eff.get("c0")}
    if cmd == "sweep":
        sw = cfg.get("sweep", {})
        _require(isinstance(sw, dict), "'sweep' must be an object")
        a_values = sw.get("a_values", [2.0**-k for k in range(6, 13)])
        _require(isinstance(a_values, list) and len(a_values) >= 4, "'sweep.a_values' needs at least 4 values")
        out["sweep"] = {"a_values": [float(v) for v in a_values], "ls_levels": list(sw.get("ls_levels", [16, 32, 64]))}
    if cmd == "scenario":
        sc = cfg.get("scenario", {})
        _require(isinstance(sc, dict) and sc.get("name") in ("negative_density", "cloak", "vanishing_s_lt_1"), "'scenario.name' must be negative_density, cloak or vanishing_s_lt_1")
        out["scenario"] = {"name": sc["name"], "params": dict(sc.get("params", {}))}
    if "cache_dir" in cfg:
        out["cache_dir"] = str(cfg["cache_dir"])
    return out


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _plan(cfg: dict) -> dict:
    steps = {
        "capacitance": ["mesh", "capacitance (cached)"],
        "foldy": ["mesh", "capacitance (cached)", "partition", "placement", "precheck", "Foldy solve", "far field"],
        "effective": ["capacitance (cached)", "voxel potential", "volume solve", "far field"],
        "sweep": ["capacitance (cached)", "equivalent-medium reference"] + [f"a = {a:.6g}: placement, Foldy solve, far field" for a in cfg.get("sweep", {}).get("a_values", [])] + ["rate fit"],
        "scenario": [f"scenario {cfg.get('scenario', {}).get('name')}"],
    }[cfg["command"]]
    return {"command": cfg["command"], "config_hash": config_hash(cfg), "steps": steps}


# ---------------------------------------------------------------------------
# pipelines


def _version():
    from . import __version__

    return __version__


def _medium(cfg):
    from .medium import make_medium

    m = cfg["medium"]
    return make_medium(m["lam"], m["mu"], m["omega"])


def _wave(cfg):
    from .medium import IncidentPlaneWave

    w = cfg["wave"]
    return IncidentPlaneWave.along(w["direction"], w["alpha"], w["beta"], w["theta_perp"])


def _directions(cfg):
    import numpy as np

    from .foldy import cube_directions

    d = cfg["directions"]
    if d == "cube26":
        return cube_directions()
    if isinstance(d, dict):
        n = d["fibonacci"]
        k = np.arange(n) + 0.5
        z = 1 - 2 * k / n
        phi = np.pi * (1 + 5**0.5) * k
        r = np.sqrt(1 - z * z)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    x = np.asarray(d, dtype=float)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _mesh(cfg):
    from .mesh import builtin_mesh, read_mesh

    s = cfg["shape"]
    if "mesh" in s:
        return read_mesh(s["mesh"], shape=os.path.basename(s["mesh"]))
    return builtin_mesh(s["builtin"], s["level"])


def _capacitance(cfg, out):
    from .capacitance import CapacitanceCache

    m = cfg["medium"]
    cache = CapacitanceCache(cfg.get("cache_dir") or os.path.join(out, "cache"))
    return cache.get_or_compute(_mesh(cfg), m["lam"], m["mu"])


def _density(cfg):
    from .distribution import DensityFunction

    return DensityFunction.from_spec(cfg["distribution"]["K"])


def _write_json(path, obj, meta):
    from .experiments import _atomic_json

    _atomic_json(path, {**meta, **obj})


def _run_capacitance(cfg, out, meta, log):
    cap, hit = _capacitance(cfg, out)
    log(f"capacitance {'cache hit' if hit else 'computed'}")
    path = os.path.join(out, "capacitance.json")
    _write_json(path, {"capacitance": cap.to_record(), "eigenvalues": cap.eigenvalues.tolist(), "bracket": list(cap.bracket())}, meta)
    return [path]


def _configuration(cfg, cap):
    from .distribution import partition_domain, place_scatterers

    d = cfg["distribution"]
    part = partition_domain(d["a"], _density(cfg), s=d["s"])
    kw = {"d_min": d["d_min"]} if "d_min" in d else {}
    return place_scatterers(part, t=d["t"], seed=d["seed"], **kw).with_capacitances(cap)


def _run_foldy(cfg, out, meta, log):
    import warnings

    import numpy as np

    from .distribution import config_to_json
    from .foldy import foldy_farfield, precheck_invertibility, solve_foldy, write_farfield_csv

    medium, wave = _medium(cfg), _wave(cfg)
    cap, _ = _capacitance(cfg, out)
    config = _configuration(cfg, cap)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        pre = precheck_invertibility(config, medium)
    log(f"M = {config.M}, precheck {'passed' if pre.passed else 'failed (overridden)'}")
    amps = solve_foldy(config, medium, wave, rtol=cfg["tolerances"]["rtol"])
    ff = foldy_farfield(amps, config, medium, _directions(cfg), wave)
    p_ff = os.path.join(out, "farfield.csv")
    write_farfield_csv(ff, p_ff, comment=f"config_hash={meta['config_hash']} version={meta['version']}")
    p_sum = os.path.join(out, "foldy.json")
    _write_json(
        p_sum,
        {
            "M": config.M,
            "a": config.a,
            "d_actual": config.d_actual,
            "solver": amps.solver,
            "iterations": amps.iterations,
            "residual": amps.residual_norm,
            "precheck": pre.as_dict(),
            "precheck_overridden": not pre.passed,
            "max_abs_Q": float(np.linalg.norm(amps.q, axis=1).max()),
            "Q_real": amps.q.real.tolist(),
            "Q_imag": amps.q.imag.tolist(),
        },
        meta,
    )
    p_cfg = os.path.join(out, "configuration.json")
    _write_json(p_cfg, json.loads(config_to_json(config)), meta)
    return [p_ff, p_sum, p_cfg]


def _run_effective(cfg, out, meta, log):
    import numpy as np

    from .effective import PotentialField, VoxelGrid, effective_density, ls_farfield, solve_lippmann_schwinger
    from .foldy import write_farfield_csv

    medium, wave = _medium(cfg), _wave(cfg)
    eff = cfg["effective"]
    if eff["c0"] is None:
        c0 = _capacitance(cfg, out)[0].c_elastic
    else:
        c0 = np.asarray(eff["c0"], dtype=float) * (np.eye(3) if np.ndim(eff["c0"]) == 0 else 1.0)
    grid = VoxelGrid(cfg["grid"]["n"])
    density = _density(cfg)
    pot = PotentialField.perforation(grid, density, c0)
    rho = float(eff["rho"])
    if rho != 1.0:
        pot = pot.with_background(rho, medium.omega)
    y = solve_lippmann_schwinger(medium, pot, wave, rtol=cfg["tolerances"]["rtol"])
    ff = ls_farfield(medium, pot, y, _directions(cfg), wave)
    log(f"volume solve: {y.iterations} iterations, residual {y.residual_norm:.2e}")
    p_ff = os.path.join(out, "farfield.csv")
    write_farfield_csv(ff, p_ff, comment=f"config_hash={meta['config_hash']} version={meta['version']}")
    p_field = os.path.join(out, "volume_field.csv")
    y.write_csv(p_field)
    k1 = density(np.zeros(3)) + 1.0
    summary = {"grid_n": grid.n, "iterations": y.iterations, "residual": y.residual_norm, "farfield_max": ff.max_norm()}
    if medium.omega > 0:
        summary["effective_density_at_centre"] = effective_density(rho, k1, c0, medium.omega).tolist()
    p_sum = os.path.join(out, "effective.json")
    _write_json(p_sum, summary, meta)
    return [p_ff, p_field, p_sum]


def _run_sweep(cfg, out, meta, log):
    from .experiments import SweepSpec, convergence_sweep, write_sweep_report

    cap, _ = _capacitance(cfg, out)
    shape = cfg["shape"]
    spec = SweepSpec(
        a_values=tuple(cfg["sweep"]["a_values"]),
        t=cfg["distribution"]["t"],
        density=_density(cfg),
        shape=shape.get("builtin", shape.get("mesh")),
        level=shape.get("level", 0),
        medium=_medium(cfg),
        wave=_wave(cfg),
        seed=cfg["distribution"]["seed"],
        d_min=cfg["distribution"].get("d_min"),
        ls_levels=tuple(cfg["sweep"]["ls_levels"]),
    )
    res = convergence_sweep(spec, capacitance=cap, directions=_directions(cfg), progress=lambda r: log(f"a = {r['a']:.6g}: M = {r['M']}, e = {r['e']:.4e}"))
    paths = write_sweep_report(res, out, extra=meta)
    log(f"slope {res.slope:.4f} (predicted exponent {spec.predicted_exponent:.4f})")
    return list(paths.values())


def _run_scenario(cfg, out, meta, log):
    from .experiments import run_scenario
    from .foldy import FarFieldPattern, write_farfield_csv

    sc = cfg["scenario"]
    params = dict(sc["params"])
    params.setdefault("lam", cfg["medium"]["lam"])
    params.setdefault("mu", cfg["medium"]["mu"])
    params.setdefault("omega", cfg["medium"]["omega"])
    params.setdefault("wave", _wave(cfg))
    rep = run_scenario(sc["name"], params)
    paths = []
    for key in [k for k, v in rep.items() if isinstance(v, FarFieldPattern)]:
        p = os.path.join(out, f"{key}.csv")
        write_farfield_csv(rep.pop(key), p, comment=f"config_hash={meta['config_hash']} version={meta['version']}")
        paths.append(p)
    p = os.path.join(out, f"scenario_{sc['name']}.json")
    _write_json(p, rep, meta)
    return [p] + paths


_PIPELINES = {
    "capacitance": _run_capacitance,
    "foldy": _run_foldy,
    "effective": _run_effective,
    "sweep": _run_sweep,
    "scenario": _run_scenario,
}


def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _up_to_date(out, chash) -> bool:
    path = os.path.join(out, "manifest.json")
    if not os.path.exists(path):
        return False
    try:
        with open(path) as fh:
            man = json.load(fh)
        return man.get("config_hash") == chash and all(
            os.path.exists(os.path.join(out, f)) and _sha(os.path.join(out, f)) == h for f, h in man["files"].items()
        )
    except (OSError, ValueError, KeyError):
        return False


def _classify(exc: BaseException) -> int:
    from numpy.linalg import LinAlgError

    from .distribution import InfeasibleDistribution

    if isinstance(exc, InfeasibleDistribution):
        return EXIT_INFEASIBLE
    if isinstance(exc, ConfigError):
        return EXIT_SCHEMA
    cause = getattr(exc, "__cause__", None)
    if isinstance(cause, InfeasibleDistribution):
        return EXIT_INFEASIBLE
    if isinstance(exc, (RuntimeError, LinAlgError, ArithmeticError)):
        return EXIT_NUMERICAL
    if isinstance(exc, ValueError):
        return EXIT_SCHEMA
    return EXIT_NUMERICAL


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def run(cfg_raw: dict, out: str, *, dry_run: bool = False, seed: int | None = None, quiet: bool = False) -> int:
    """Validate and execute one run configuration; returns the exit status."""
    try:
        cfg = validate_config(cfg_raw, seed)
    except ConfigError as exc:
        return _fail(EXIT_SCHEMA, exc)
    chash = config_hash(cfg)
    if dry_run:
        print(json.dumps(_plan(cfg), indent=2))
        return EXIT_OK

    def log(msg):
        if not quiet:
            print(msg, file=sys.stderr)

    try:
        os.makedirs(out, exist_ok=True)
        if _up_to_date(out, chash):
            log("outputs are up to date; nothing to do")
            return EXIT_OK
        meta = {"config_hash": chash, "version": _version(), "config": cfg}
        files = _PIPELINES[cfg["command"]](cfg, out, meta, log)
        man = {
            "config_hash": chash,
            "version": meta["version"],
            "files": {os.path.relpath(f, out): _sha(f) for f in files},
        }
        from .experiments import _atomic_json

        _atomic_json(os.path.join(out, "manifest.json"), man)
    except Exception as exc:  # noqa: BLE001
        return _fail(_classify(exc), exc)
    return EXIT_OK


def _set_threads(n: int) -> None:
    # BLAS pools are sized when numpy loads, so the variables only reach
    # libraries that have not initialised yet; the compiled kernels are capped directly
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="elastoscat", description="Elastic scattering by many small rigid bodies.")
    parser.add_argument("--config", required=True, help="run configuration (JSON)")
    parser.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./elastoscat-out)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for compiled kernels and BLAS")
    parser.add_argument("--dry-run", action="store_true", help="validate and print the execution plan")
    parser.add_argument("--seed", type=int, default=None, help="override the distribution seed")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            return _fail(EXIT_SCHEMA, ConfigError("--threads must be positive"))
        _set_threads(args.threads)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, ValueError) as exc:
        return _fail(EXIT_SCHEMA, ConfigError(f"cannot read configuration: {exc}"))
    out = args.out or os.environ.get(OUT_ENV) or "elastoscat-out"
    return run(cfg, out, dry_run=args.dry_run, seed=args.seed, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
