"""``spinsim`` command line: run a configured task and write its artifacts."""
import argparse
import os
import sys

import numpy as np

from . import __version__, adiabaticity, artifacts, dynamics, ion_chain, phase_diagram, spectral
from .config import load_preset, parse_config
from .errors import ConfigError, NumericalError, SpinSimError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def resolve_threads(threads=None):
    if threads is None:
        env = os.environ.get("SPINSIM_THREADS", "0")
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"SPINSIM_THREADS: expected an integer, got {env!r}") from None
    if threads < 0:
        raise ConfigError(f"--threads must be >= 0, got {threads}")
    return threads or (os.cpu_count() or 1)


def _j_ref(couplings):
    j = np.abs(couplings.j[0, 1]) if couplings.n > 1 else 0.0
    return float(j) or 1.0


def _spectrum(cfg, workers):
    c = cfg.couplings
    ref = _j_ref(c)
    fields = cfg.grid.field_array()
    if fields is None:
        fields = np.linspace(0.0, 10.0, 201)
    sweep = spectral.sweep_levels(c, fields * ref, workers=workers)
    table = spectral.LevelTable.from_sweep(sweep)
    gap, at = table.min_coupled_gap()
    return [("", table.rows(ref), table.to_dict(), {"min_coupled_gap": gap, "min_gap_b_y": at})]


def _modes(cfg, workers):
    modes = ion_chain.transverse_modes(cfg.trap)
    eta = ion_chain.lamb_dicke(cfg.trap, modes)
    rows = []
    for m, f in enumerate(modes.freqs):
        row = {"mode": m, "freq": float(f)}
        for i in range(cfg.trap.n_ions):
            row[f"b_{i}"] = float(modes.b[i, m])
        for i in range(cfg.trap.n_ions):
            row[f"eta_{i}"] = float(eta[i, m])
        rows.append(row)
    return [("", rows, modes.to_dict(), {"trap": cfg.trap.to_dict()})]


def _couplings(cfg, workers):
    modes = ion_chain.transverse_modes(cfg.trap)
    rep = ion_chain.validate_regime(cfg.trap, modes, cfg.drive)
    c = cfg.couplings
    rows = [{"i": i, "k": k, "j": float(c.j[i, k])} for i in range(c.n) for k in range(i + 1, c.n)]
    meta = {
        "mu": cfg.drive.mu,
        "regime_min_ratio": rep.min_ratio,
        "regime_ok": rep.ok,
    }
    if c.n >= 3:
        meta["ratio_j13_over_abs_j12"] = ion_chain.coupling_ratio(c)
    if not rep.ok:
        print(
            f"warning: virtual-phonon ratio {rep.min_ratio:.3g} < {ion_chain.REGIME_WARN_RATIO:g} "
            f"(ion {rep.worst_ion}, mode {rep.worst_mode})",
            file=sys.stderr,
        )
    return [("", rows, c.to_dict(), meta)]


def _evolve(cfg, workers):
    rec = dynamics.propagate(cfg.couplings, cfg.ramp, samples=cfg.samples, max_phase_step=cfg.max_phase_step)
    out = [("", rec.rows(), rec.to_dict(), {"ramp": cfg.ramp.to_dict(), "norm_error": rec.norm_error})]
    if cfg.measurement is not None:
        counts = dynamics.measure_shots(rec.final_state, cfg.measurement)
        n = cfg.couplings.n
        rows = [{"outcome": a, "count": int(counts[a])} for a in range(1 << n)]
        shots = dynamics.ShotRecord(counts, cfg.measurement)
        out.append(("_shots", rows, shots.to_dict(), {"p_fm_estimate": dynamics.estimate_pfm(counts)}))
    return out


def _adiabaticity(cfg, workers):
    times = np.linspace(0.0, cfg.ramp.t_end, cfg.samples)
    trace = adiabaticity.adiabaticity_trace(cfg.couplings, cfg.ramp, times)
    value, at, level = adiabaticity.max_criterion(trace)
    meta = {"max_criterion": value, "max_time": at, "max_level": level if level is not None else "none",
            "ramp": cfg.ramp.to_dict()}
    return [("", trace.rows(), trace.to_dict(), meta)]


def _phase_diagram(cfg, workers):
    g = cfg.grid
    grid = phase_diagram.compute_grid(
        g.j1, g.ratio_array(), g.field_array(), g.mode, cfg.ramp, workers=workers,
        max_phase_step=cfg.max_phase_step,
    )
    return [("", grid.rows(), grid.to_dict(), {"mode": g.mode, "j1": g.j1})]


def _roundtrip(cfg, workers):
    p = dynamics.roundtrip_return_probability(cfg.couplings, cfg.ramp, cfg.max_phase_step)
    return [("", [{"return_probability": p}], {"return_probability": p}, {"ramp": cfg.ramp.to_dict()})]


_TASKS = {
    "spectrum": _spectrum,
    "modes": _modes,
    "couplings": _couplings,
    "evolve": _evolve,
    "adiabaticity": _adiabaticity,
    "phase-diagram": _phase_diagram,
    "roundtrip": _roundtrip,
}


def execute(cfg, threads=None):
    """Run ``cfg`` and write its artifacts; return the written paths.

    Errors propagate as :class:`SpinSimError` subclasses with the task name
    prepended.
    """
    workers = resolve_threads(threads)
    artifacts.ensure_writable(cfg.output_dir)
    try:
        outputs = _TASKS[cfg.task](cfg, workers)
    except SpinSimError as exc:
        raise type(exc)(f"task {cfg.task}: {exc}") from exc
    base = {
        "tool_version": __version__,
        "config_sha256": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "task": cfg.task,
    }
    paths = []
    for suffix, rows, result, extra in outputs:
        stem = os.path.join(cfg.output_dir, cfg.stem + suffix)
        artifacts.write_text(stem + ".csv", artifacts.csv_text(rows, base))
        artifacts.write_text(stem + ".json", artifacts.json_text(result, {**base, **extra}))
        paths += [stem + ".csv", stem + ".json"]
    return paths


def run(cfg, threads=None):
    """Run and map failures to exit codes (0 ok, 2 config, 3 numerical)."""
    try:
        execute(cfg, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="spinsim", description=__doc__)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="TOML run configuration")
    src.add_argument("--preset", help="name of a shipped preset configuration")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    p.add_argument("--threads", type=int, help="worker threads, 0 = auto (default: $SPINSIM_THREADS or 0)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
            cfg = parse_config(text)
        else:
            cfg = load_preset(args.preset)
        cfg = cfg.with_overrides(seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.threads)


if __name__ == "__main__":
    sys.exit(main())
