"""Batch command-line front end.

    odtbec trap   --config paper_single_beam
    odtbec wings  --config fig1_1um --out out/ [--no-exact] [--svg]
    odtbec evolve --config paper_full_ramp --out out/ [--svg]
    odtbec vtab   --config harmonic_test --out out/

Exit codes: 0 success, 1 configuration error, 2 no trap, 3 numerical
domain error, 4 trajectory collapse.
"""

import argparse
import csv
import hashlib
import io
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.constants import k, pi

from . import __version__
from .config import load
from .errors import BetaTooLarge, ConfigError, OdtError, StateCollapse
from .evap import detect_stagnation, evolve, trajectory_to_csv, trap_timeseries
from .thermo import (
    TruncatedThermalState,
    analytic_populations,
    exact_populations,
    wing_fraction_half_point,
)
from .trap import characterize
from .volume import BETA_REFUSE, harmonic_volume_table, volume_table

log = logging.getLogger("odtbec")

WINGS_COLUMNS = [
    "eta",
    "wing_frac_analytic",
    "wing_frac_exact",
    "wing_frac_exact_err",
    "n0_analytic_cm3",
    "n0_exact_cm3",
    "n0_exact_err",
]
TIMESERIES_COLUMNS = ["t", "depth_J", "aux_depth_J", "mean_freq_hz"]
PSD_DEGENERATE = 2.612


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not "no trap"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(x):
    return repr(float(x))


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="ascii")


def _out_dir(args, run):
    out = Path(args.out or run.output_dir or "odtbec_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, args, run, files, started):
    lines = [
        "tool=odtbec",
        f"version={__version__}",
        f"command={args.command}",
        f"config_source={run.source}",
        f"config_sha256={run.digest}",
        f"seed={run.thermo.seed}",
        f"samples={run.thermo.samples}",
        f"threads={args.threads}",
        f"started_utc={started}",
        f"finished_utc={datetime.now(timezone.utc).isoformat(timespec='seconds')}",
        f"outputs={','.join(Path(f).name for f in files)}",
    ]
    for f in files:
        digest = hashlib.sha256(Path(f).read_bytes()).hexdigest()
        lines.append(f"sha256.{Path(f).name}={digest}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="ascii")


def _svg(path, series, xlabel, ylabel, logy=False):
    """Line plot of ``series`` = [(label, x, y, style), ...] as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "odtbec"
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, x, y, style in series:
        ax.plot(x, y, style, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _require_trap(run):
    if run.trap is None:
        raise ConfigError(f"{run.source}: this command needs [[beams]]")
    return run.trap


def cmd_trap(args, run):
    config = _require_trap(run)
    trap = characterize(config, escape_fraction=run.escape_fraction)
    depths = config.beam_depths
    rows = [("depth_uK", trap.depth / k * 1e6), ("depth_mK", trap.depth / k * 1e3)]
    print(f"config: {run.source}")
    for i, b in enumerate(config.beams):
        print(
            f"beam {b.name or i}: P={b.power:g} W, waists {b.waist_x * 1e6:g} x {b.waist_y * 1e6:g} um, "
            f"lambda {b.wavelength * 1e9:g} nm, z_R {b.rayleigh_x * 1e6:.1f} / {b.rayleigh_y * 1e6:.1f} um, "
            f"U0 {depths[i] / k * 1e6:.2f} uK"
        )
        rows += [(f"zR_x_um.{i}", b.rayleigh_x * 1e6), (f"zR_y_um.{i}", b.rayleigh_y * 1e6)]
    print(f"depth: {trap.depth / k * 1e6:.2f} uK ({trap.depth / k * 1e3:.4f} mK)")
    fx, fy, fz = np.asarray(trap.frequencies) / (2 * pi)
    print(f"frequencies (lab x, y, z): {fx:.2f}, {fy:.2f}, {fz:.2f} Hz")
    pf = np.asarray(trap.principal_frequencies) / (2 * pi)
    print("principal frequencies: " + ", ".join(f"{f:.2f}" for f in pf) + " Hz")
    print(f"mean frequency: {trap.mean_frequency / (2 * pi):.2f} Hz")
    print(f"U0 (primary): {trap.single_beam_depth_U0 / k * 1e6:.2f} uK, beta = depth/U0 = {trap.beta:.5f}")
    print("minimum: " + ", ".join(f"{x * 1e6:.4f}" for x in trap.minimum_position) + " um")
    if args.out:
        out = _out_dir(args, run)
        rows += [
            ("freq_x_hz", fx),
            ("freq_y_hz", fy),
            ("freq_z_hz", fz),
            ("mean_freq_hz", trap.mean_frequency / (2 * pi)),
            ("U0_uK", trap.single_beam_depth_U0 / k * 1e6),
            ("beta", trap.beta),
        ]
        path = out / "trap.csv"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "value"])
        w.writerows((q, _fmt(v)) for q, v in rows)
        path.write_text(buf.getvalue(), encoding="ascii")
        return [path]
    return []


def _wavelengths(run, config):
    if run.thermo.wavelengths:
        return run.thermo.wavelengths
    return (config.beams[config.primary].wavelength,)


def cmd_wings(args, run):
    base = _require_trap(run)
    th = run.thermo
    if th.beta > BETA_REFUSE:
        raise BetaTooLarge(f"beta={th.beta} is above the {BETA_REFUSE} limit")
    out = _out_dir(args, run)
    files = []
    w0 = th.waist or base.beams[base.primary].waist_x
    for lam in _wavelengths(run, base):
        config = replace(base, beams=tuple(replace(b, wavelength=lam) for b in base.beams))
        trap = characterize(config, escape_fraction=run.escape_fraction)
        vtab = None
        if not args.no_exact:
            vtab = volume_table(config, th.beta, th.samples, th.seed, th.n_bins, args.threads, trap=trap)
        rows = []
        for eta in th.eta:
            an = analytic_populations(th.N, eta, w0, lam)
            ex_f = ex_ferr = ex_n0 = ex_n0err = float("nan")
            if vtab is not None:
                state = TruncatedThermalState.at_eta(config, th.N, eta, th.beta, trap=trap)
                ex = exact_populations(state, vtab, tolerance=th.tolerance)
                ex_f, ex_ferr, ex_n0, ex_n0err = ex.wing_fraction, ex.wing_fraction_err, ex.n0, ex.n0_err
            rows.append((eta, an.wing_fraction, ex_f, ex_ferr, an.n0 * 1e-6, ex_n0 * 1e-6, ex_n0err * 1e-6))
        tag = f"{lam * 1e9:.0f}nm"
        path = out / f"wings_{tag}.csv"
        _write_csv(path, WINGS_COLUMNS, rows)
        files.append(path)
        print(f"{tag}: half-wing point eta* = {wing_fraction_half_point(w0, lam):.3f}; wrote {path}")
        if args.svg:
            a = np.array(rows)
            svg = out / f"wings_{tag}.svg"
            series = [("analytic", a[:, 0], a[:, 1], "-")]
            if vtab is not None:
                series.append(("exact", a[:, 0], a[:, 2], "o"))
            _svg(svg, series, "eta", "wing fraction")
            files.append(svg)
    return files


def _initial_state(run, config, schedule):
    from types import SimpleNamespace

    ini = run.initial
    N = float(ini.get("N", 4e6))
    if "temperature" in ini:
        T = float(ini["temperature"])
    else:
        trap0 = characterize(schedule.configured(config, schedule.t_start), escape_fraction=run.escape_fraction)
        T = trap0.depth / (k * float(ini.get("eta", 10.0)))
    return SimpleNamespace(N=N, temperature=T)


def _summary(points, run):
    s = {"points": len(points), "final_t": points[-1].t, "final_N": points[-1].N, "final_T_K": points[-1].T}
    s["final_psd"] = points[-1].psd
    s["final_eta"] = points[-1].eta
    s["final_wing_fraction"] = points[-1].wing_fraction
    if len(points) >= 10:
        st = detect_stagnation(points)
        s.update(
            stagnated=st.stagnated,
            t_stagnation=st.t_stagnation,
            peak_psd=st.peak_psd,
            t_peak=st.t_peak,
            collision_rate_at_peak=st.collision_rate_at_peak,
        )
    tc = next((p for p in points if p.degenerate), None)
    s["tc_crossed"] = tc is not None
    if tc is not None:
        s.update(t_tc=tc.t, N_at_tc=tc.N, T_at_tc_K=tc.T, Tc_K=tc.critical_temperature)
    deg = next((p for p in points if p.psd >= PSD_DEGENERATE), None)
    s["psd_2612_crossed"] = deg is not None
    if deg is not None:
        s.update(t_psd_2612=deg.t, N_at_psd_2612=deg.N, T_at_psd_2612_K=deg.T)
    return s


def _write_summary(path, summary):
    lines = []
    for key, v in summary.items():
        if isinstance(v, bool) or isinstance(v, int):
            lines.append(f"{key}={str(v).lower() if isinstance(v, bool) else v}")
        else:
            lines.append(f"{key}={_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def cmd_evolve(args, run):
    config = _require_trap(run)
    if run.schedule is None:
        raise ConfigError(f"{run.source}: evolve needs a [schedule]")
    schedule = run.schedule
    out = _out_dir(args, run)
    initial = _initial_state(run, config, schedule)
    traj_path = out / "trajectory.csv"
    try:
        points = evolve(initial, config, schedule, run.evap)
    except StateCollapse as exc:
        if exc.trajectory:
            trajectory_to_csv(exc.trajectory, traj_path)
            p = exc.trajectory[-1]
            print(f"collapse: {exc}; last valid point t={p.t:.4g} s N={p.N:.4g} T={p.T:.4g} K", file=sys.stderr)
        raise
    trajectory_to_csv(points, traj_path)
    files = [traj_path]

    t_grid = np.linspace(schedule.t_start, schedule.t_end, 61)
    ts = trap_timeseries(config, schedule, t_grid)
    ts_path = out / "timeseries.csv"
    _write_csv(ts_path, TIMESERIES_COLUMNS, [(p.t, p.depth, p.auxiliary_depth, p.mean_frequency / (2 * pi)) for p in ts])
    files.append(ts_path)

    summary = _summary(points, run)
    sum_path = out / "summary.txt"
    _write_summary(sum_path, summary)
    files.append(sum_path)
    for key in ("final_N", "final_T_K", "peak_psd", "t_peak", "stagnated", "tc_crossed", "t_tc", "N_at_tc"):
        if key in summary:
            print(f"{key} = {summary[key]}")

    if args.svg:
        t = [p.t for p in ts]
        fig3 = out / "timeseries.svg"
        _svg(
            fig3,
            [
                ("combined depth", t, [p.depth / k * 1e6 for p in ts], "-"),
                ("auxiliary only", t, [p.auxiliary_depth / k * 1e6 for p in ts], "--"),
                ("mean frequency [Hz]", t, [p.mean_frequency / (2 * pi) for p in ts], "-"),
            ],
            "t [s]",
            "depth [uK] / frequency [Hz]",
            logy=True,
        )
        psd_svg = out / "psd.svg"
        _svg(psd_svg, [("PSD", [p.t for p in points], [p.psd for p in points], "-")], "t [s]", "PSD", logy=True)
        files += [fig3, psd_svg]
    return files


def cmd_vtab(args, run):
    th = run.thermo
    if th.beta > BETA_REFUSE:
        raise BetaTooLarge(f"beta={th.beta} is above the {BETA_REFUSE} limit")
    out = _out_dir(args, run)
    if run.trap is None:
        vt = harmonic_volume_table(run.harmonic_radius, th.beta, th.samples, th.seed, th.n_bins, args.threads)
    else:
        trap = characterize(run.trap, escape_fraction=run.escape_fraction)
        vt = volume_table(run.trap, th.beta, th.samples, th.seed, th.n_bins, args.threads, trap=trap)
    path = out / "vtable.csv"
    vt.to_csv(path)
    print(f"V(beta={th.beta}) = {vt.V[-1]:.6e} m^3 from {vt.samples} samples; wrote {path}")
    return [path]


COMMANDS = {"trap": cmd_trap, "wings": cmd_wings, "evolve": cmd_evolve, "vtab": cmd_vtab}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML file or bundled config name")
    common.add_argument("--seed", type=int, help="override thermo.seed")
    common.add_argument("--samples", type=int, help="override thermo.samples")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--svg", action="store_true", help="also write SVG plots")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="odtbec", description="Optical dipole trap and evaporation toolkit.")
    parser.add_argument("--version", action="version", version=f"odtbec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("trap", parents=[common], help="trap depth and frequencies")
    wings = sub.add_parser("wings", parents=[common], help="centre/wing populations versus eta")
    wings.add_argument("--no-exact", action="store_true", help="analytic columns only")
    sub.add_parser("evolve", parents=[common], help="evaporation trajectory")
    sub.add_parser("vtab", parents=[common], help="equipotential volume table")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if not hasattr(args, "no_exact"):
        args.no_exact = False
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        run = load(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.samples is not None:
            overrides["samples"] = args.samples
        if overrides:
            run = replace(run, thermo=replace(run.thermo, **overrides))
        files = COMMANDS[args.command](args, run)
        if files:
            _write_manifest(Path(files[0]).parent, args, run, files, started)
    except OdtError as exc:
        print(f"odtbec: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"odtbec: error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
