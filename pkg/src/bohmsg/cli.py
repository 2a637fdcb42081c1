"""Command-line entry point: ``bohmsg <scenario> [flags]``.

Each run resolves a :class:`RunConfig` from an optional JSON file plus flags
(flags win), dispatches the scenario and writes ``<scenario>.json`` (and
``trajectory.csv`` for the trajectory scenario) into the output directory.
The ``inputs`` block of every summary is itself a valid config file.

Exit codes: 0 ok, 2 config error, 3 more than 5% ambiguous outcomes, 4 I/O.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata
from pathlib import Path

import numpy as np

from . import experiments as ex
from .dynamics import integrate, StiffnessError, classify
from .physics import InvalidParameterError, PhysicalParams, derive_constants, screen_pattern
from .states import (
    GHZ4_SETTINGS,
    MERMIN_SETTINGS,
    MagnetAxis,
    MeasurementConfig,
    ghz4_branches,
    mermin_branches,
    singlet_branches,
)
from .velocity import max_relative_deviation, oracle_grid

EXIT_OK, EXIT_CONFIG, EXIT_AMBIGUOUS, EXIT_IO = 0, 2, 3, 4
AMBIGUOUS_EXIT_FRACTION = 0.05

SCENARIOS = ("constants", "trajectory", "bell", "chsh", "two-contradiction", "fraction",
             "mermin", "ghz4", "oracle-check", "screen")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str
    physical: PhysicalParams = field(default_factory=PhysicalParams)
    n_samples: int = 1000
    seed: int = 0
    theta: float | None = None
    axes: list | None = None  # magnet angles for the trajectory scenario
    setting: str | None = None  # Mermin / GHZ-4 setting for the trajectory scenario
    initial: list | None = None  # magnet-axis start coordinates, cm
    sample: list | None = None  # [[y, z], ...] per particle, cm
    geometry: str = "trine"  # chsh: "trine" or "parallel"
    distance: float = 100.0  # screen distance past the magnet, cm
    atlas_check: bool = False  # fraction: also run the basin-atlas quadrature
    per_axis: int = 10  # oracle-check grid points per particle
    out: str = "bohmsg-out"
    rotation_sense: int = 1
    workers: int = 1

    def to_json(self) -> dict:
        d = asdict(self)
        d["physical"] = self.physical.as_dict()
        return d


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}
_PHYSICAL_KEYS = {f.name for f in fields(PhysicalParams)}


def _number(name, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name}: must be finite")
    return float(value)


def _float_rows(name, value, width=None):
    try:
        rows = [[float(x) for x in row] for row in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a list of coordinate pairs") from None
    if width is not None and any(len(r) != width for r in rows):
        raise ConfigError(f"{name}: every entry needs {width} numbers")
    return rows


def build_config(scenario: str, data: dict) -> RunConfig:
    """Validate a config mapping; errors name the offending field."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: unknown scenario {scenario!r}")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    if data.get("scenario", scenario) != scenario:
        raise ConfigError(f"scenario: config is for {data['scenario']!r}, not {scenario!r}")
    phys = data.get("physical", {}) or {}
    if not isinstance(phys, dict):
        raise ConfigError("physical: expected an object")
    bad = sorted(set(phys) - _PHYSICAL_KEYS)
    if bad:
        raise ConfigError(f"{bad[0]}: unknown physical parameter")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            physical = PhysicalParams(**phys)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except InvalidParameterError as err:
        raise ConfigError(str(err)) from None

    cfg = RunConfig(scenario=scenario, physical=physical)
    if "n_samples" in data:
        cfg.n_samples = _number("n_samples", data["n_samples"], int)
        if cfg.n_samples < 1:
            raise ConfigError("n_samples: must be positive")
    if "seed" in data:
        cfg.seed = _number("seed", data["seed"], int)
        if cfg.seed < 0:
            raise ConfigError("seed: must be non-negative")
    if data.get("theta") is not None:
        cfg.theta = _number("theta", data["theta"])
    if data.get("axes") is not None:
        cfg.axes = [_number("axes", a) for a in data["axes"]]
    if data.get("setting") is not None:
        cfg.setting = str(data["setting"])
        if cfg.setting not in MERMIN_SETTINGS + GHZ4_SETTINGS:
            raise ConfigError(f"setting: unknown setting {cfg.setting!r}")
    if data.get("initial") is not None:
        cfg.initial = [_number("initial", z) for z in data["initial"]]
    if data.get("sample") is not None:
        cfg.sample = _float_rows("sample", data["sample"], 2)
    for key in ("geometry", "out"):
        if key in data:
            setattr(cfg, key, str(data[key]))
    if cfg.geometry not in ("trine", "parallel"):
        raise ConfigError(f"geometry: expected 'trine' or 'parallel', got {cfg.geometry!r}")
    if "distance" in data:
        cfg.distance = _number("distance", data["distance"])
    if "atlas_check" in data:
        cfg.atlas_check = bool(data["atlas_check"])
    if "per_axis" in data:
        cfg.per_axis = _number("per_axis", data["per_axis"], int)
        if cfg.per_axis < 2:
            raise ConfigError("per_axis: need at least 2 points")
    if "workers" in data:
        cfg.workers = max(1, _number("workers", data["workers"], int))
    if "rotation_sense" in data:
        cfg.rotation_sense = _number("rotation_sense", data["rotation_sense"], int)
        if cfg.rotation_sense not in (1, -1):
            raise ConfigError("rotation_sense: must be +1 or -1")
    _check_required(cfg)
    return cfg


def _check_required(cfg: RunConfig) -> None:
    s = cfg.scenario
    if s == "bell" and cfg.theta is None:
        raise ConfigError("theta: required for the bell scenario")
    if s == "trajectory":
        if cfg.initial is None:
            raise ConfigError("initial: required for the trajectory scenario")
        n = len(cfg.initial)
        if n == 2 and cfg.theta is None and cfg.axes is None:
            raise ConfigError("theta: required for a two-particle trajectory")
        if n in (3, 4) and (cfg.setting is None or len(cfg.setting) != n):
            raise ConfigError(f"setting: a {n}-particle trajectory needs a {n}-letter setting")
        if n not in (2, 3, 4):
            raise ConfigError("initial: need 2, 3 or 4 coordinates")
    if s == "two-contradiction" and (cfg.sample is None or len(cfg.sample) != 2):
        raise ConfigError("sample: required, one [y, z] pair per particle")
    if s in ("bell", "chsh") and cfg.n_samples < 100:
        raise ConfigError("n_samples: need at least 100")
    if s == "fraction" and cfg.n_samples < 1000:
        raise ConfigError("n_samples: need at least 1000")
    if s in ("mermin", "ghz4") and cfg.sample is not None:
        want = 3 if s == "mermin" else 4
        if len(cfg.sample) != want:
            raise ConfigError(f"sample: need {want} [y, z] pairs")


def parse_config(argv=None) -> RunConfig:
    """Parse flags (and the file named by ``--config``) into a RunConfig."""
    args = _parser().parse_args(argv)
    data = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as err:
            raise OSError(f"cannot read config {args.config}: {err}") from err
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config: invalid JSON ({err})") from None
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
    overrides = {
        "seed": args.seed,
        "n_samples": args.samples,
        "theta": args.theta,
        "out": args.out,
        "rotation_sense": args.rotation_sense,
        "workers": args.workers,
        "initial": args.initial,
    }
    data = dict(data)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(args.scenario, data)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int, help="Monte Carlo samples (per setting)")
    common.add_argument("--theta", type=float, help="relative magnet angle, rad")
    common.add_argument("--out", help="output directory")
    common.add_argument("--rotation-sense", type=int, choices=(1, -1), dest="rotation_sense")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--initial", type=lambda s: [float(x) for x in s.split(",")],
                        help="comma-separated magnet-axis start coordinates, cm")
    parser = argparse.ArgumentParser(prog="bohmsg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        sub.add_parser(name, parents=[common])
    return parser


# -- scenarios ----------------------------------------------------------------

def _estimate_dict(e) -> dict:
    return {"value": e.value, "stderr": e.stderr, "n_samples": e.n_samples,
            "n_ambiguous": e.n_ambiguous, "warning": e.warning}


def _report_dict(r: ex.ContradictionReport) -> dict:
    return {
        "joint_outcomes": {k: {"signs": list(o.signs), "ambiguous": o.ambiguous}
                           for k, o in r.joint_outcomes.items()},
        "product_a": r.product_a,
        "product_b": r.product_b,
        "contradiction": r.contradiction,
        "indeterminate": r.indeterminate,
    }


def _run_constants(cfg):
    dc = derive_constants(cfg.physical)
    return {"k": dc.k, "alpha": dc.alpha, "beta": dc.beta}, 0, 0


def _run_screen(cfg):
    return screen_pattern(cfg.physical, cfg.distance), 0, 0


def _trajectory_state(cfg):
    n = len(cfg.initial)
    if n == 2:
        if cfg.axes is not None:
            theta = cfg.axes[1] - cfg.axes[0]
        else:
            theta = cfg.theta
        return singlet_branches(theta)
    return mermin_branches(cfg.setting) if n == 3 else ghz4_branches(cfg.setting)


def _run_trajectory(cfg, out: Path):
    state = _trajectory_state(cfg)
    try:
        traj = integrate(state, cfg.initial, cfg.physical)
    except StiffnessError as err:
        return {"error": str(err), "failed_t": err.t, "last_coords": list(err.coords)}, 1, 1
    outcome = classify(traj)
    n = state.n_particles
    header = ",".join(["t"] + [f"z_{i + 1}" for i in range(n)])
    lines = [header] + [",".join(format(v, ".17g") for v in (t, *row))
                        for t, row in zip(traj.t, traj.coords)]
    (out / "trajectory.csv").write_text("\n".join(lines) + "\n")
    results = {
        "state": state.label,
        "final": [float(v) for v in traj.final],
        "signs": list(outcome.signs),
        "ambiguous": outcome.ambiguous,
        "params_hash": traj.params_hash,
        "csv": "trajectory.csv",
    }
    return results, int(outcome.ambiguous), 1


def _run_bell(cfg):
    est = ex.estimate_correlation(cfg.theta, cfg.n_samples, cfg.seed, cfg.physical, cfg.workers)
    results = _estimate_dict(est)
    results["born"] = ex.born_correlation(cfg.theta)
    return results, est.n_ambiguous, est.n_samples


def _run_chsh(cfg):
    configs = ex.trine_chsh_configs() if cfg.geometry == "trine" else ex.parallel_chsh_configs()
    res = ex.chsh(configs, cfg.n_samples, cfg.seed, cfg.physical, cfg.rotation_sense, cfg.workers)
    results = {
        "S": res.value,
        "stderr": res.stderr,
        "expression": "S = E(ZL,ZR) + E(ZL,Z'R) + E(Z'L,Z'R) - E(Z'L,ZR)",
        "terms": [_estimate_dict(t) for t in res.terms],
        "born": ex.born_chsh(configs),
    }
    n_amb = sum(t.n_ambiguous for t in res.terms)
    return results, n_amb, sum(t.n_samples for t in res.terms)


def _run_two_contradiction(cfg):
    sample = ex.InitialSample(tuple(tuple(p) for p in cfg.sample))
    rep = ex.two_particle_contradiction(sample, cfg.physical, cfg.rotation_sense)
    amb = sum(o.ambiguous for o in rep.joint_outcomes.values())
    return _report_dict(rep), amb, len(rep.joint_outcomes)


def _run_fraction(cfg):
    est = ex.contradiction_fraction(cfg.n_samples, cfg.seed, cfg.physical, cfg.rotation_sense, cfg.workers)
    results = {"fraction": est.value, "stderr": est.stderr, "n_samples": est.n_samples,
               "n_indeterminate": est.n_indeterminate}
    if cfg.atlas_check:
        results["atlas_fraction"] = ex.atlas_contradiction_fraction(cfg.physical, sense=cfg.rotation_sense)
    return results, est.n_indeterminate, est.n_samples


def _run_eigen(cfg):
    three = cfg.scenario == "mermin"
    batch_fn = ex.mermin_batch if three else ex.ghz4_batch
    n_particles = 3 if three else 4
    if cfg.sample is not None:
        batch = batch_fn(np.asarray([cfg.sample], dtype=float), cfg.physical, cfg.rotation_sense)
        rep = batch.report(0)
        return _report_dict(rep), int(rep.indeterminate), 1
    yz = ex.sample_array(cfg.n_samples, cfg.physical.delta_r0, n_particles, cfg.seed)
    batch = batch_fn(yz, cfg.physical, cfg.rotation_sense, cfg.workers)
    ok = ~batch.indeterminate
    observed = ex.eigen_products(batch)[ok]
    expected = ex.expected_eigenvalues(batch.settings)
    results = {
        "settings": list(batch.settings),
        "expected_eigenvalues": list(expected),
        "n_samples": cfg.n_samples,
        "n_indeterminate": int(batch.indeterminate.sum()),
        "n_eigenvalue_violations": int(np.any(observed != np.asarray(expected), axis=1).sum()),
        "contradiction_fraction": float(batch.contradiction[ok].mean()) if ok.any() else None,
    }
    return results, results["n_indeterminate"], cfg.n_samples


def _run_oracle_check(cfg):
    params = cfg.physical
    scenarios = [singlet_branches(0.0), singlet_branches(2 * math.pi / 3)]
    scenarios += [mermin_branches(s) for s in MERMIN_SETTINGS]
    scenarios += [ghz4_branches(s) for s in GHZ4_SETTINGS]
    rows = []
    for state in scenarios:
        for frac in (0.25, 0.5, 1.0):
            t = frac * params.tau
            pts = oracle_grid(params, state.n_particles, t, cfg.per_axis)
            rows.append({"state": state.label, "t": t, "n_points": len(pts),
                         "max_relative_deviation": max_relative_deviation(state, params, pts)})
    worst = max(r["max_relative_deviation"] for r in rows)
    return {"checks": rows, "max_relative_deviation": worst, "passed": worst < 1e-6}, 0, 0


def _versions() -> dict:
    import mpmath
    import scipy

    try:
        own = metadata.version("bohmsg")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"bohmsg": own, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "mpmath": mpmath.__version__}


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run(cfg: RunConfig) -> int:
    """Dispatch ``cfg.scenario`` and write its outputs; returns the exit code."""
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        print(f"error: cannot create {out}: {err}", file=sys.stderr)
        return EXIT_IO
    start = time.perf_counter()
    try:
        if cfg.scenario == "trajectory":
            results, n_amb, n_total = _run_trajectory(cfg, out)
        else:
            handler = {
                "constants": _run_constants,
                "screen": _run_screen,
                "bell": _run_bell,
                "chsh": _run_chsh,
                "two-contradiction": _run_two_contradiction,
                "fraction": _run_fraction,
                "mermin": _run_eigen,
                "ghz4": _run_eigen,
                "oracle-check": _run_oracle_check,
            }[cfg.scenario]
            results, n_amb, n_total = handler(cfg)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    record = {
        "scenario": cfg.scenario,
        "inputs": cfg.to_json(),
        "results": results,
        "ambiguous_fraction": n_amb / n_total if n_total else 0.0,
        "versions": _versions(),
        "wall_time": time.perf_counter() - start,
    }
    try:
        (out / f"{cfg.scenario}.json").write_text(
            json.dumps(_clean(record), indent=2, allow_nan=False) + "\n")
    except OSError as err:
        print(f"error: cannot write summary: {err}", file=sys.stderr)
        return EXIT_IO
    _echo(cfg.scenario, results)
    if n_total and n_amb > AMBIGUOUS_EXIT_FRACTION * n_total:
        print(f"{n_amb} of {n_total} outcomes ambiguous", file=sys.stderr)
        return EXIT_AMBIGUOUS
    return EXIT_OK


def _echo(scenario: str, results: dict) -> None:
    shown = {k: v for k, v in results.items() if isinstance(v, (int, float, str, bool))}
    parts = [f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in shown.items()]
    print(f"{scenario}: " + " ".join(parts))


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
