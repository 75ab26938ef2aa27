"""Batch experiment runner.

Subcommands: simulate, fit, filter, single-shot, calibrate, linearity.
Every run is deterministic given (config, seed); results are written as CSV
datasets plus sorted-key JSON, and every SVG plot gets a sibling CSV so the
plot is never the only record.

Exit codes: 0 success, 2 usage (argparse), 3 config/schema, 4 scheduling,
5 fit, 6 calibration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import analysis, measurement, presets, protocol, states
from .dynamics import dispersive_coefficients
from .errors import CalibrationError, ConfigError, FitError, SchedulingError
from .space import make_space

SCHEMA_VERSION = 1
TWO_PI = 2 * math.pi

EXIT_CONFIG = 3
EXIT_SCHEDULING = 4
EXIT_FIT = 5
EXIT_CALIBRATION = 6


# -- small helpers -------------------------------------------------------------


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    # pin the id hash salt so repeated runs emit identical SVG bytes
    matplotlib.rcParams["svg.hashsalt"] = "fockshift"
    import matplotlib.pyplot as plt
    return plt


def _save_plot(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def _plot_trace(out_dir, stem, times, traces):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, p in traces.items():
        ax.plot(np.asarray(times) * 1e3, p, marker="o", ms=3, lw=1, label=str(label))
    ax.set_xlabel("interaction time (ms)")
    ax.set_ylabel("P(up)")
    ax.set_ylim(-0.02, 1.02)
    if len(traces) > 1:
        ax.legend(title="ratio")
    _save_plot(fig, os.path.join(out_dir, stem + ".svg"))
    plt.close(fig)


def _plot_populations(out_dir, stem, populations, errors=None):
    plt = _pyplot()
    keys = sorted(populations)
    vals = [populations[k] for k in keys]
    errs = [errors.get(k, 0.0) for k in keys] if errors else None
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(keys)), vals, yerr=errs, capsize=2)
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels([",".join(map(str, k)) for k in keys], rotation=60, fontsize=7)
    ax.set_xlabel("occupation")
    ax.set_ylabel("population")
    _save_plot(fig, os.path.join(out_dir, stem + ".svg"))
    plt.close(fig)


def _plot_grid(out_dir, stem, grid):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4.4))
    im = ax.imshow(grid, origin="lower", cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xlabel("measured n")
    ax.set_ylabel("prepared n")
    fig.colorbar(im, ax=ax, label="estimated population")
    _save_plot(fig, os.path.join(out_dir, stem + ".svg"))
    plt.close(fig)


def _require(config, key, path=""):
    if key not in config:
        raise ConfigError(f"{path}{key}", "missing required key")
    return config[key]


def _time_grid(cfg) -> np.ndarray:
    if isinstance(cfg, dict):
        return np.linspace(cfg["start"], cfg["stop"], int(cfg["num"]))
    return np.asarray(cfg, dtype=float)


def _build_setting_spec(name):
    if name not in presets.RATIO_SETTINGS:
        raise ConfigError("setting", f"unknown setting {name!r}; choose from "
                          f"{sorted(presets.RATIO_SETTINGS)}")
    modes = presets.trap_modes(2)
    spec = protocol.schedule_selective_decoupling(
        modes, [math.pi, math.nan], presets.OMEGA_RABI,
        presets.RATIO_SETTINGS[name])
    return modes, spec


def _fit_setting(name, spec, modes):
    # the single-mode setting leaves mode 2 unshifted, so fit over one mode
    if name == "single_mode":
        return analysis.FitSetting(etas=(modes[0].eta,), ratios=(1.0,),
                                   chi1_design=float(spec.chi_eff[0]))
    return analysis.setting_from_spec(spec, modes)


def _build_state(space, state_cfg):
    kind = _require(state_cfg, "kind", "initial_state.")
    if kind == "fock":
        return states.fock_state(space, state_cfg["n"], 0)
    if kind == "coherent":
        alphas = state_cfg["alpha"]
        if np.isscalar(alphas):
            alphas = [alphas] + [0.0] * (space.n_modes - 1)
        return states.coherent_state(space, alphas, 0)
    if kind == "cat":
        return states.cat_state(space, state_cfg["alpha"],
                                int(state_cfg.get("sign", 1)),
                                int(state_cfg.get("mode", 0)), 0)
    if kind == "ecs":
        return states.entangled_coherent_state(space, state_cfg["alpha"],
                                               int(state_cfg.get("sign", 1)))
    raise ConfigError("initial_state.kind", f"unknown state kind {kind!r}")


def _sampled(p, shots, rng):
    if shots and shots > 0:
        return rng.binomial(shots, np.clip(p, 0.0, 1.0)) / shots
    return p


# -- subcommand handlers -------------------------------------------------------


def run_simulate(config, out_dir, seed, threads):
    setting = config.get("setting", "single_mode")
    modes, spec = _build_setting_spec(setting)
    dims = config.get("mode_dims", [13, 3])
    space = make_space(dims)
    state = _build_state(space, _require(config, "initial_state"))
    times = _time_grid(_require(config, "times_s"))
    gammas = config.get("gamma_per_s")
    shots = int(config.get("shots", 0))
    nonlinear = config.get("model", "full") == "nonlinear"
    p = protocol.simulate_trace(space, state, modes, spec, times,
                                nonlinear=nonlinear, include_stark=True,
                                gammas=gammas)
    rng = np.random.default_rng(seed)
    p_obs = _sampled(p, shots, rng)
    ratio = round(spec.chi_eff[1] / spec.chi_eff[0], 6) if len(spec.chi_eff) > 1 else 0.0
    rows = [(t, float(pp), shots, ratio) for t, pp in zip(times, p_obs)]
    csv_path = os.path.join(out_dir, "trace.csv")
    analysis.write_trace_csv(csv_path, rows)
    _write_json(os.path.join(out_dir, "simulate.json"), {
        "schema_version": SCHEMA_VERSION,
        "setting": setting,
        "spec": spec.to_json_dict(),
        "seed": seed,
        "shots": shots,
        "trace_csv": os.path.basename(csv_path),
    })
    _plot_trace(out_dir, "trace", times, {round(ratio, 4): p_obs})
    return 0


def run_fit(config, out_dir, seed, threads):
    setting_names = config.get("settings") or [config.get("setting", "single_mode")]
    n_max = int(config.get("n_max", 4))
    datasets = []
    if "data" in config:
        groups = analysis.read_trace_csv(config["data"])
        labels = sorted(groups)
        if len(labels) != len(setting_names):
            raise ConfigError("settings", f"{len(setting_names)} settings given for "
                              f"{len(labels)} ratio labels in {config['data']}")
        for label, name in zip(labels, setting_names):
            modes, spec = _build_setting_spec(name)
            t, p, shots = groups[label]
            datasets.append(analysis.RamseyDataset(
                times=t, p_up=p, shots=int(np.max(shots)), ratio_label=label,
                setting=_fit_setting(name, spec, modes)))
    else:
        # no measured data: simulate the configured state at each setting
        space = make_space(config.get("mode_dims", [13, 3]))
        state = _build_state(space, _require(config, "initial_state"))
        times = _time_grid(_require(config, "times_s"))
        shots = int(config.get("shots", 300))
        gammas = config.get("gamma_per_s")
        rng = np.random.default_rng(seed)
        rows = []
        for name in setting_names:
            modes, spec = _build_setting_spec(name)
            p = protocol.simulate_trace(space, state, modes, spec, times,
                                        nonlinear=True, include_stark=True,
                                        gammas=gammas)
            p_obs = _sampled(p, shots, rng)
            label = (round(spec.chi_eff[1] / spec.chi_eff[0], 6)
                     if len(spec.chi_eff) > 1 else 0.0)
            datasets.append(analysis.RamseyDataset(
                times=times, p_up=p_obs, shots=shots, ratio_label=label,
                setting=_fit_setting(name, spec, modes)))
            rows.extend((t, float(pp), shots, label) for t, pp in zip(times, p_obs))
        analysis.write_trace_csv(os.path.join(out_dir, "trace.csv"), rows)
    result = analysis.fit_populations(datasets, n_max=n_max)
    parity, parity_err = analysis.parity_from_populations(
        result.populations, config.get("parity_mask", [0]), result.population_errors)
    payload = result.to_json_dict()
    payload.update({
        "schema_version": SCHEMA_VERSION,
        "parity": parity,
        "parity_err": parity_err,
    })
    _write_json(os.path.join(out_dir, "fit.json"), payload)
    _write_csv(os.path.join(out_dir, "populations.csv"),
               ("occupation", "population", "error"),
               [(",".join(map(str, k)), result.populations[k],
                 result.population_errors[k]) for k in sorted(result.populations)])
    _plot_populations(out_dir, "populations", result.populations, result.population_errors)
    return 0


def run_filter(config, out_dir, seed, threads):
    dims = config.get("mode_dims", [13])
    space = make_space(dims)
    state = _build_state(space, _require(config, "initial_state"))
    sector = config.get("sector", "even")
    mask = config.get("mode_mask", [0])
    shots = int(config.get("shots", 1000))
    step = protocol.parity_filter_plan(space.n_modes, mask, sector)
    p_pass = measurement.pass_probability(space, state, step)
    model = measurement.DetectionModel(**config.get("detection", {})) \
        if config.get("detection") else measurement.DetectionModel.perfect()
    passes = 0
    for shot in range(shots):
        rng = measurement.shot_rng(seed, shot)
        passed, _, _, _ = measurement.run_filter_step(space, state, step, model, rng)
        passes += passed
    _write_json(os.path.join(out_dir, "filter.json"), {
        "schema_version": SCHEMA_VERSION,
        "sector": sector,
        "mode_mask": list(mask),
        "pass_probability_analytic": p_pass,
        "pass_fraction": passes / shots,
        "shots": shots,
        "seed": seed,
    })
    _write_csv(os.path.join(out_dir, "filter.csv"),
               ("sector", "pass_probability_analytic", "pass_fraction", "shots"),
               [(sector, p_pass, passes / shots, shots)])
    return 0


def run_single_shot(config, out_dir, seed, threads):
    n_max = int(config.get("n_max", 5))
    bits = int(config.get("bits", max(1, math.ceil(math.log2(n_max + 1)))))
    shots = int(config.get("shots", 500))
    phase_mode = config.get("phase_mode", "exact")
    det_cfg = config.get("detection")
    model = (measurement.DetectionModel(**det_cfg) if det_cfg
             else measurement.DetectionModel.perfect())
    space = make_space([2**bits])
    plans = [protocol.binary_filter_plan(n, bits, phase_mode=phase_mode)
             for n in range(n_max + 1)]
    unitaries = [[protocol.ideal_ramsey_unitary(space, s.theta, s.phi) for s in plan.steps]
                 for plan in plans]

    def cell(args):
        prep, target = args
        state = states.fock_state(space, [prep], 0)
        ledger = measurement.single_shot_measure(
            space, state, plans[target], shots, model,
            seed=seed + 1000003 * (prep * (n_max + 1) + target),
            unitaries=unitaries[target])
        est, err, degen = measurement.estimate_population(ledger)
        return prep, target, est, err, degen

    cells = [(p, t) for p in range(n_max + 1) for t in range(n_max + 1)]
    grid = np.zeros((n_max + 1, n_max + 1))
    errs = np.zeros_like(grid)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for prep, target, est, err, _ in pool.map(cell, cells):
            grid[prep, target] = est
            errs[prep, target] = err
    _write_json(os.path.join(out_dir, "single_shot.json"), {
        "schema_version": SCHEMA_VERSION,
        "n_max": n_max,
        "bits": bits,
        "shots": shots,
        "phase_mode": phase_mode,
        "seed": seed,
        "estimates": grid.tolist(),
        "uncertainties": errs.tolist(),
    })
    _write_csv(os.path.join(out_dir, "single_shot.csv"),
               ("prepared", "measured", "estimate", "uncertainty"),
               [(p, t, grid[p, t], errs[p, t]) for p, t in cells])
    _plot_grid(out_dir, "single_shot", grid)
    return 0


def run_calibrate(config, out_dir, seed, threads):
    which = config.get("which", "offset")
    setting = config.get("setting", "single_mode")
    modes, spec = _build_setting_spec(setting)
    space = make_space(config.get("mode_dims", [5, 3]))
    sim = protocol.SimulatedRamsey(
        space=space, modes=modes, spec=spec,
        residual_shift=TWO_PI * float(config.get("residual_hz", 0.0)))
    if which == "offset":
        t_cal = float(config.get("t_cal_s", protocol.DEFAULT_T_CAL))
        found = protocol.calibrate_offset(sim, t_cal=t_cal)
        payload = {"which": "offset", "t_cal_s": t_cal,
                   "residual_injected_hz": config.get("residual_hz", 0.0),
                   "residual_found_hz": found / TWO_PI}
    elif which == "tpi":
        t_pi = protocol.calibrate_tpi(sim)
        payload = {"which": "tpi", "t_pi_s": t_pi,
                   "t_pi_design_s": math.pi / (2 * abs(spec.chi_eff[0]))}
    else:
        raise ConfigError("which", f"unknown calibration {which!r}")
    payload["schema_version"] = SCHEMA_VERSION
    payload["setting"] = setting
    _write_json(os.path.join(out_dir, "calibrate.json"), payload)
    return 0


def run_linearity(config, out_dir, seed, threads):
    setting = config.get("setting", "single_mode")
    modes, spec = _build_setting_spec(setting)
    n_top = int(config.get("n_top", 4))
    points = int(config.get("points", 81))
    dims = config.get("mode_dims", [n_top + 4, 3])
    space = make_space(dims)
    t_max = abs(math.pi / spec.chi_eff[0])
    times = np.linspace(t_max / points, t_max, points)
    rng = np.random.default_rng(seed)
    shots = int(config.get("shots", 0))
    pairs = []
    rows = []
    for n in range(n_top + 1):
        state = states.fock_state(space, [n, 0], 0)
        p = protocol.simulate_trace(space, state, modes, spec, times, include_stark=True)
        p_obs = _sampled(p, shots, rng)
        fit = analysis.fit_single_fock(times, p_obs)
        pairs.append(((n,), fit.chi))
        rows.append((n, fit.chi / TWO_PI, fit.chi_err / TWO_PI, fit.gamma))
    slopes, slope_errs = analysis.linearity_regression(pairs)
    _write_json(os.path.join(out_dir, "linearity.json"), {
        "schema_version": SCHEMA_VERSION,
        "setting": setting,
        "chi_eff_hz": [s / TWO_PI for s in slopes],
        "chi_eff_err_hz": [e / TWO_PI for e in slope_errs],
        "chi_eff_design_hz": spec.chi_eff[0] / TWO_PI,
        "ladder": [{"n": r[0], "chi_hz": r[1], "chi_err_hz": r[2]} for r in rows],
    })
    _write_csv(os.path.join(out_dir, "linearity.csv"),
               ("n", "chi_hz", "chi_err_hz", "gamma_per_s"), rows)
    return 0


HANDLERS = {
    "simulate": run_simulate,
    "fit": run_fit,
    "filter": run_filter,
    "single-shot": run_single_shot,
    "calibrate": run_calibrate,
    "linearity": run_linearity,
}


def run_experiment(config, out_dir=".", seed=None, threads=None):
    """Dispatch one experiment config; returns the handler's exit status."""
    if not isinstance(config, dict):
        raise ConfigError("", "config must be a JSON object")
    version = config.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    proto = _require(config, "protocol")
    key = proto.replace("_", "-")
    if key not in HANDLERS:
        raise ConfigError("protocol", f"unknown protocol {proto!r}")
    if seed is None:
        seed = int(config.get("seed", 0))
    if threads is None:
        threads = os.cpu_count() or 1
    os.makedirs(out_dir, exist_ok=True)
    return HANDLERS[key](config, out_dir, seed, threads)


def _load_config(args) -> dict:
    if args.config:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(args.config, f"invalid JSON: {exc}") from exc
    elif getattr(args, "preset", None):
        config = presets.preset_config(args.preset)
    else:
        config = {"schema_version": SCHEMA_VERSION}
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fockshift",
        description="Simulate and analyze dispersive-shift Fock-state measurements.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--out-dir", default=".")
    parser.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="preferred tabular output format")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")

    p = sub.add_parser("simulate", help="Ramsey time traces")
    common(p)
    p.add_argument("--setting", default="single_mode",
                   choices=sorted(presets.RATIO_SETTINGS))
    p.add_argument("--state", default="coherent:1.0",
                   help="kind:args, e.g. fock:2,0 cat:1.5:+ ecs:1.0:- coherent:1.0")
    p.add_argument("--t-max", type=float, default=6e-3)
    p.add_argument("--points", type=int, default=61)
    p.add_argument("--shots", type=int, default=0)

    p = sub.add_parser("fit", help="fit Fock populations from trace CSVs")
    common(p)
    p.add_argument("--data", help="trace CSV with ratio_label column")
    p.add_argument("--settings", help="comma list of setting names, one per ratio label")
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--preset", choices=presets.PRESET_NAMES)

    p = sub.add_parser("filter", help="parity filter statistics")
    common(p)
    p.add_argument("--sector", choices=("even", "odd"), default="even")
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--shots", type=int, default=1000)

    p = sub.add_parser("single-shot", help="binary Fock measurement grid")
    common(p)
    p.add_argument("--n-max", type=int, default=5)
    p.add_argument("--shots", type=int, default=500)
    p.add_argument("--bits", type=int)
    p.add_argument("--perfect-detection", action="store_true")
    p.add_argument("--phase-mode", choices=("exact", "bitwise"), default="exact")
    p.add_argument("--preset", choices=presets.PRESET_NAMES)

    p = sub.add_parser("calibrate", help="offset or interaction-time calibration")
    common(p)
    p.add_argument("which", choices=("offset", "tpi"))
    p.add_argument("--residual-hz", type=float, default=0.0)
    p.add_argument("--t-cal", type=float, default=protocol.DEFAULT_T_CAL)

    p = sub.add_parser("linearity", help="Fock-ladder dispersive-shift regression")
    common(p)
    p.add_argument("--setting", default="single_mode",
                   choices=sorted(presets.RATIO_SETTINGS))
    p.add_argument("--n-top", type=int, default=4)
    p.add_argument("--shots", type=int, default=0)
    return parser


def _parse_state_flag(text) -> dict:
    parts = text.split(":")
    kind = parts[0]
    if kind == "fock":
        return {"kind": "fock", "n": [int(v) for v in parts[1].split(",")]}
    if kind == "coherent":
        return {"kind": "coherent", "alpha": float(parts[1])}
    if kind in ("cat", "ecs"):
        sign = 1 if len(parts) < 3 or parts[2] == "+" else -1
        return {"kind": kind, "alpha": float(parts[1]), "sign": sign}
    raise ConfigError("state", f"cannot parse state {text!r}")


def _merge_flags(config, args) -> dict:
    cmd = args.command
    config.setdefault("schema_version", SCHEMA_VERSION)
    config["protocol"] = cmd.replace("-", "_")
    if cmd == "simulate":
        config.setdefault("setting", args.setting)
        config.setdefault("initial_state", _parse_state_flag(args.state))
        config.setdefault("times_s", {"start": args.t_max / args.points,
                                      "stop": args.t_max, "num": args.points})
        config.setdefault("shots", args.shots)
    elif cmd == "fit":
        if args.data:
            config.setdefault("data", args.data)
        if args.settings:
            config.setdefault("settings", args.settings.split(","))
        config.setdefault("n_max", args.n_max)
    elif cmd == "filter":
        config.setdefault("sector", args.sector)
        config.setdefault("initial_state", {"kind": "coherent", "alpha": args.alpha})
        config.setdefault("shots", args.shots)
    elif cmd == "single-shot":
        config.setdefault("n_max", args.n_max)
        config.setdefault("shots", args.shots)
        if args.bits:
            config.setdefault("bits", args.bits)
        config.setdefault("phase_mode", args.phase_mode)
        if not args.perfect_detection:
            config.setdefault("detection", {"lambda_bright": 5.0, "lambda_dark": 0.05})
    elif cmd == "calibrate":
        config.setdefault("which", args.which)
        config.setdefault("residual_hz", args.residual_hz)
        config.setdefault("t_cal_s", args.t_cal)
    elif cmd == "linearity":
        config.setdefault("setting", args.setting)
        config.setdefault("n_top", args.n_top)
        config.setdefault("shots", args.shots)
    return config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
        config = _merge_flags(config, args)
        return run_experiment(config, out_dir=args.out_dir, seed=args.seed,
                              threads=args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchedulingError as exc:
        print(f"error: scheduling: {exc}", file=sys.stderr)
        return EXIT_SCHEDULING
    except FitError as exc:
        print(f"error: fit: {exc}", file=sys.stderr)
        return EXIT_FIT
    except CalibrationError as exc:
        print(f"error: calibration: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION


if __name__ == "__main__":
    sys.exit(main())
