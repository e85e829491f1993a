"""Command-line orchestration: runs experiments from a JSON config and
writes deterministic CSV artifacts plus a manifest of content hashes.

Subcommands: example1d, simulate, threshold, fatemap, ensemble,
indicators, skill. Exit codes: 1 configuration, 2 convergence,
3 geometry, 4 class starvation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, csvio
from .config import ExperimentConfig, config_hash, load_config, validate_config
from .dynamics import (
    Amoc3Box,
    Example1D,
    TanhRampForcing,
    example_frozen_roots,
    find_equilibria,
)
from .ensembles import EnsembleSpec, build_balanced_ensemble
from .errors import ConfigError, RtipError
from .ews import compute_indicators
from .integrators import (
    METHOD_EM,
    IntegratorConfig,
    NoiseModel,
    Trajectory,
    integrate_ode,
    integrate_sde_batch,
)
from .skill import compute_skill, roc_at_time, ORIENTATIONS
from .threshold import evolve_threshold_backward, grid_fate_map, seed_basin_boundary

SUBCOMMANDS = (
    "example1d",
    "simulate",
    "threshold",
    "fatemap",
    "ensemble",
    "indicators",
    "skill",
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rtip",
        description="Tipping thresholds, geometric early warnings, and ROC skill",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override base_seed")
        p.add_argument(
            "--threads",
            type=int,
            default=int(os.environ.get("RTIP_THREADS", "1")),
            help="worker threads (default $RTIP_THREADS or 1)",
        )
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("base_seed must be a nonnegative integer")
            cfg["base_seed"] = args.seed
        out_dir = Path(args.out if args.out is not None else cfg["output"])
        out_dir.mkdir(parents=True, exist_ok=True)
        files = _RUNNERS[args.command](ExperimentConfig(cfg), out_dir, args.threads)
        _write_manifest(cfg, out_dir, files)
    except RtipError as exc:
        print(f"rtip: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def _write_manifest(cfg: dict, out_dir: Path, files: list[str]) -> None:
    eff_path = out_dir / "effective_config.json"
    with open(eff_path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    validate_config(json.loads(eff_path.read_text()))  # round-trip check
    hashes = {}
    for name in sorted(set(files) | {"effective_config.json"}):
        digest = hashlib.sha256((out_dir / name).read_bytes()).hexdigest()
        hashes[name] = digest
    manifest = {
        "config_hash": config_hash(cfg),
        "versions": {
            "rtip": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        "files": hashes,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# shared pipeline pieces


def _equilibria(xc: ExperimentConfig):
    params = xc.amoc_params()
    forcing = xc.forcing()
    H0 = forcing.value(-1.0)
    return params, forcing, find_equilibria(H0, params)


def _build_history(xc: ExperimentConfig, params, forcing, eq):
    th = xc.cfg["threshold"]
    H0 = forcing.value(-1.0)
    seed_curve = seed_basin_boundary(
        H0,
        params,
        eq,
        arc_extent=th["arc_extent"],
        window=xc.window(),
        target_spacing=th["target_spacing"],
        dt=xc.cfg["integrator"]["dt"],
        t_seed=forcing.end_time,
    )
    return evolve_threshold_backward(
        seed_curve,
        forcing,
        params,
        t_start=th["t_start"],
        snapshot_dt=th["snapshot_dt"],
        reinterp_dt=th["reinterp_dt"],
        target_spacing=th["target_spacing"],
        dt=xc.cfg["integrator"]["dt"],
        window=xc.window(),
    )


def _build_ensemble(xc: ExperimentConfig, params, forcing, eq):
    ens_cfg = xc.cfg["ensemble"]
    spec = EnsembleSpec(
        n_target_per_class=int(ens_cfg["n_target_per_class"]),
        x0=eq.on_state,
        t_init=float(ens_cfg["t_init"]),
        forcing=forcing,
        noise=xc.noise_model(),
        base_seed=xc.base_seed,
        max_draws=int(ens_cfg["max_draws"]),
    )
    return build_balanced_ensemble(
        spec,
        params,
        eq,
        dt=xc.cfg["integrator"]["dt"],
        record_stride=int(xc.cfg["integrator"]["record_stride"]),
        r_class=float(ens_cfg["r_class"]),
        t_horizon=float(ens_cfg["t_horizon"]),
        chunk=int(ens_cfg["chunk"]),
    )


def _forcing_times(forcing, t_start=0.0):
    return np.arange(t_start, forcing.end_time + 0.5, 1.0)


# ---------------------------------------------------------------------------
# subcommands


def _run_simulate(xc: ExperimentConfig, out: Path, threads: int) -> list[str]:
    params, forcing, eq = _equilibria(xc)
    dt = xc.cfg["integrator"]["dt"]
    t_end = forcing.end_time + xc.cfg["integrator"]["t_extend"]
    cfg = IntegratorConfig(
        dt=dt,
        t_start=0.0,
        t_end=t_end,
        record_stride=int(xc.cfg["integrator"]["record_stride"]),
    )
    traj = integrate_ode(Amoc3Box(params), forcing, eq.on_state, cfg)
    csvio.write_trajectory(out / "simulate_trajectory.csv", traj)
    csvio.write_forcing_series(
        out / "simulate_forcing.csv", forcing, _forcing_times(forcing)
    )
    return ["simulate_trajectory.csv", "simulate_forcing.csv"]


def _run_threshold(xc: ExperimentConfig, out: Path, threads: int) -> list[str]:
    params, forcing, eq = _equilibria(xc)
    history = _build_history(xc, params, forcing, eq)
    csvio.write_history(out / "threshold_history.csv", history)
    csvio.write_forcing_series(
        out / "threshold_forcing.csv", forcing, _forcing_times(forcing)
    )
    return ["threshold_history.csv", "threshold_forcing.csv"]


def _run_fatemap(xc: ExperimentConfig, out: Path, threads: int) -> list[str]:
    params, forcing, eq = _equilibria(xc)
    th = xc.cfg["threshold"]
    grid = xc.window().grid(int(th["grid_n"]))
    ens = xc.cfg["ensemble"]

    def one(t_init: float):
        return grid_fate_map(
            t_init,
            forcing,
            params,
            grid,
            eq,
            dt=xc.cfg["integrator"]["dt"],
            r_class=float(ens["r_class"]),
            t_horizon=float(ens["t_horizon"]),
        )

    times = [float(t) for t in th["fate_times"]]
    if threads > 1 and len(times) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            maps = list(pool.map(one, times))
    else:
        maps = [one(t) for t in times]
    files = []
    for fm in maps:
        name = f"fatemap_t{fm.t_init:g}.csv"
        csvio.write_fatemap(out / name, fm)
        files.append(name)
    return files


def _run_ensemble(xc: ExperimentConfig, out: Path, threads: int) -> list[str]:
    params, forcing, eq = _equilibria(xc)
    ens = _build_ensemble(xc, params, forcing, eq)
    csvio.write_ensemble(
        out / "ensemble_trajectories.csv", out / "ensemble_labels.csv", ens
    )
    csvio.write_forcing_series(
        out / "ensemble_forcing.csv", forcing, _forcing_times(forcing)
    )
    return ["ensemble_trajectories.csv", "ensemble_labels.csv", "ensemble_forcing.csv"]


def _run_indicators(xc: ExperimentConfig, out: Path, threads: int) -> list[str]:
    params, forcing, eq = _equilibria(xc)
    history = _build_history(xc, params, forcing, eq)
    ens = _build_ensemble(xc, params, forcing, eq)
    series = compute_indicators(
        ens,
        history,
        eq.off_state,
        return_rate_window=float(xc.cfg["skill"]["return_rate_window"]),
    )
    csvio.write_indicators(out / "indicators.csv", series)
    csvio.write_ensemble(
        out / "ensemble_trajectories.csv", out / "ensemble_labels.csv", ens
    )
    csvio.write_forcing_series(
        out / "ensemble_forcing.csv", forcing, _forcing_times(forcing)
    )
    return [
        "indicators.csv",
        "ensemble_trajectories.csv",
        "ensemble_labels.csv",
        "ensemble_forcing.csv",
    ]


def _run_skill(xc: ExperimentConfig, out: Path, threads: int) -> list[str]:
    params, forcing, eq = _equilibria(xc)
    history = _build_history(xc, params, forcing, eq)
    ens = _build_ensemble(xc, params, forcing, eq)
    sk = xc.cfg["skill"]
    series = compute_indicators(
        ens, history, eq.off_state, return_rate_window=float(sk["return_rate_window"])
    )
    report = compute_skill(
        series,
        ens.labels,
        fixed_thresholds=sk["fixed_thresholds"],
        sens_level=float(sk["sens_level"]),
        spec_level=float(sk["spec_level"]),
    )
    csvio.write_skill(out / "skill.csv", report)
    roc_curves = {}
    for ind, s in series.items():
        curves = []
        for t in sk["roc_times"]:
            k = int(np.argmin(np.abs(s.times - float(t))))
            vals = s.values[:, k]
            if not np.isfinite(vals).any():
                continue
            curves.append(
                roc_at_time(vals, ens.labels, ORIENTATIONS[ind], t=float(s.times[k]))
            )
        roc_curves[ind] = curves
    csvio.write_roc_curves(out / "roc_curves.csv", roc_curves)
    csvio.write_indicators(out / "indicators.csv", series)
    csvio.write_ensemble(
        out / "ensemble_trajectories.csv", out / "ensemble_labels.csv", ens
    )
    csvio.write_forcing_series(
        out / "ensemble_forcing.csv", forcing, _forcing_times(forcing)
    )
    return [
        "skill.csv",
        "roc_curves.csv",
        "indicators.csv",
        "ensemble_trajectories.csv",
        "ensemble_labels.csv",
        "ensemble_forcing.csv",
    ]


def _example_threshold_curve(params, theta, t_hi, t_lo, dt, x_cap):
    """Backward trajectory from the frozen unstable state at late time.

    Traces the curve separating initial conditions that reach the upper
    attractor from those that reach the lower one; stops once |x| exceeds
    x_cap (backward blow-up of the cubic).
    """
    forcing = TanhRampForcing(p_plus=params.p_plus, theta=theta)
    roots = example_frozen_roots(forcing.value(t_hi), params.p_plus)
    x = float(roots[1]) if len(roots) == 3 else float(roots[0])
    ts = [t_hi]
    xs = [x]
    t = t_hi
    h = -dt
    n = round((t_hi - t_lo) / dt)
    f = Example1D(params).rhs_scalar
    for _ in range(n):
        p1 = forcing.value(t)
        pm = forcing.value(t + 0.5 * h)
        p2 = forcing.value(t + h)
        (k1,) = f(x, p1)
        (k2,) = f(x + 0.5 * h * k1, pm)
        (k3,) = f(x + 0.5 * h * k2, pm)
        (k4,) = f(x + h * k3, p2)
        x += (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        t += h
        if not math.isfinite(x) or abs(x) > x_cap:
            break
        ts.append(t)
        xs.append(x)
    return np.array(ts[::-1]), np.array(xs[::-1])


def _run_example1d(xc: ExperimentConfig, out: Path, threads: int) -> list[str]:
    ex = xc.cfg["example"]
    params = xc.example_params()
    model = Example1D(params)
    dt = float(ex["dt"])
    files: list[str] = []
    for theta in ex["thetas"]:
        theta = float(theta)
        span = max(math.ceil(6.0 / theta) if theta > 0 else 50.0, 50.0)
        forcing = TanhRampForcing(p_plus=params.p_plus, theta=theta)
        stride = max(1, round(0.5 / dt))
        cfg = IntegratorConfig(dt=dt, t_start=-span, t_end=span, record_stride=stride)
        x0 = example_frozen_roots(forcing.value(-span), params.p_plus)[-1]
        det = integrate_ode(model, forcing, np.array([x0]), cfg)
        tag = f"example1d_theta{theta:g}"
        csvio.write_trajectory(out / f"{tag}_deterministic.csv", det)
        files.append(f"{tag}_deterministic.csv")

        n_members = int(ex["n_members"])
        seeds = xc.base_seed + np.arange(n_members, dtype=np.uint64)
        cfg_s = IntegratorConfig(
            dt=dt, t_start=-span, t_end=span, method=METHOD_EM, record_stride=stride
        )
        times, states = integrate_sde_batch(
            model,
            forcing,
            np.full((n_members, 1), x0),
            NoiseModel.scalar(float(ex["sigma"])),
            seeds,
            cfg_s,
        )
        tipped = states[-1, :, 0] < 0.0
        csvio.write_rows(
            out / f"{tag}_members.csv",
            ["member_index", "t", "x1"],
            (
                [m, t, states[k, m, 0]]
                for m in range(n_members)
                for k, t in enumerate(times)
            ),
        )
        csvio.write_rows(
            out / f"{tag}_labels.csv",
            ["member_index", "seed", "tipped"],
            ([m, int(seeds[m]), int(tipped[m])] for m in range(n_members)),
        )
        files += [f"{tag}_members.csv", f"{tag}_labels.csv"]

        def eq_row(t):
            roots = example_frozen_roots(forcing.value(float(t)), params.p_plus)
            if len(roots) == 3:
                return [t, roots[0], roots[1], roots[2]]
            return [t, roots[0], math.nan, math.nan]

        csvio.write_rows(
            out / f"{tag}_equilibria.csv",
            ["t", "x_lower", "x_mid", "x_upper"],
            (eq_row(t) for t in det.times),
        )
        files.append(f"{tag}_equilibria.csv")

        ts, xs = _example_threshold_curve(
            params, theta, t_hi=span, t_lo=-span, dt=dt, x_cap=float(ex["x_cap"])
        )
        csvio.write_rows(
            out / f"{tag}_threshold.csv", ["t", "x1"], zip(ts, xs)
        )
        files.append(f"{tag}_threshold.csv")

        csvio.write_forcing_series(
            out / f"{tag}_forcing.csv", forcing, np.arange(-span, span + 0.5, 1.0)
        )
        files.append(f"{tag}_forcing.csv")
    return files


_RUNNERS = {
    "example1d": _run_example1d,
    "simulate": _run_simulate,
    "threshold": _run_threshold,
    "fatemap": _run_fatemap,
    "ensemble": _run_ensemble,
    "indicators": _run_indicators,
    "skill": _run_skill,
}


if __name__ == "__main__":
    sys.exit(main())
