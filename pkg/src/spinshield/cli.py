"""Command-line orchestration.

Subcommands: enumerate, simulate, protection-time, compare, sweep, heat,
reproduce-table.  Configuration comes from an optional config file (JSON
or ``key = value`` lines, '#' comments) plus CLI overrides; every run
writes its result files atomically (temp file + rename) together with a
JSON summary recording the spec, pair convention, integrator settings and
code version.  There is no randomness anywhere, so identical configs
produce identical files.

Exit codes: 0 success, 2 config/argument parse error, 3 validation error,
4 simulation fault.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__, experiments, model, topology
from .dynamics import IntegratorConfig, TimeSeries, ToleranceBreachError, evolve
from .experiments import ProtocolError
from .metrics import MetricName
from .model import ClusterSpec, NoiseSpec
from .topology import BufferGraph

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_SIMULATION = 4

OUTPUT_DIR_ENV = "SPINSHIELD_OUTPUT_DIR"

TABLE_IDS = ("I", "II", "III", "IV")


class ConfigError(ValueError):
    """Config file or flag combination cannot be parsed."""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict:
    """Parse a config document: JSON or flat ``key = value`` lines.

    Dotted keys nest (``noise.gamma = 1e-4``); '#' starts a comment.
    """
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON config: {exc}") from None
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: key {key!r} conflicts with scalar")
        node[parts[-1]] = _coerce_scalar(value)
    return out


def _coerce_scalar(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value


def _parse_geometry(text: str, n_buffer: int) -> BufferGraph:
    text = text.strip()
    if text in ("empty", "maximal"):
        return topology.extreme_geometry(n_buffer, text)
    g = BufferGraph.from_text(text)
    if g.n_buffer != n_buffer:
        raise ConfigError(
            f"geometry has {g.n_buffer} buffer vertices but n={n_buffer} requested"
        )
    return g


_CONVENTION_ALIASES = {
    "once": model.UNORDERED_ONCE,
    "double": model.ORDERED_DOUBLE,
    model.UNORDERED_ONCE: model.UNORDERED_ONCE,
    model.ORDERED_DOUBLE: model.ORDERED_DOUBLE,
}


def build_spec(settings: dict) -> ClusterSpec:
    """ClusterSpec from merged config/flag settings (physics defaults apply)."""
    n_buffer = int(settings.get("n_buffer", 4))
    channel = settings.get("channel", model.THERMAL)
    noise_settings = dict(settings.get("noise", {}))
    if channel == model.THERMAL:
        noise = NoiseSpec(
            channel=model.THERMAL,
            temperature=float(noise_settings.get("temperature", settings.get("temperature", experiments.TEMPERATURE))),
            gamma=float(noise_settings.get("gamma", settings.get("gamma", experiments.GAMMA_THERMAL))),
        )
    elif channel == model.DEPHASING:
        noise = NoiseSpec(
            channel=model.DEPHASING,
            temperature=float(noise_settings.get("temperature", settings.get("temperature", experiments.TEMPERATURE))),
            gamma_d=float(noise_settings.get("gamma_d", settings.get("gamma_d", experiments.GAMMA_DEPHASING))),
        )
    else:
        raise ConfigError(f"unknown channel {channel!r}")
    convention = settings.get("pair_convention", "once")
    if convention == "calibrate":
        convention = experiments.calibrate_pair_convention().convention
    if convention not in _CONVENTION_ALIASES:
        raise ConfigError(f"unknown pair convention {convention!r}")
    geometry = settings.get("geometry", "maximal")
    graph = geometry if isinstance(geometry, BufferGraph) else _parse_geometry(str(geometry), n_buffer)
    initial_buffer = str(settings.get("initial_buffer", "thermal")).replace("-", "_")
    return ClusterSpec(
        n_buffer=n_buffer,
        graph=graph,
        omega=float(settings.get("omega", experiments.OMEGA)),
        g=float(settings.get("g", experiments.COUPLING)),
        pair_convention=_CONVENTION_ALIASES[convention],
        noise=noise,
        initial_buffer=initial_buffer,
    )


def build_integrator(settings: dict, default_t_max: float) -> IntegratorConfig:
    return IntegratorConfig(
        t_max=float(settings.get("t_max", default_t_max)),
        dt=float(settings.get("dt", experiments.TABLE_DT)),
        sample_every=float(settings.get("sample_every", experiments.SAMPLE_EVERY)),
        frame=str(settings.get("frame", "rotating")),
    )


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def atomic_write(path: str, data: str):
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x: float) -> str:
    return f"{x:.17g}"


def rows_to_csv(header: list, rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def write_summary(out_dir: str, command: str, payload: dict, outputs: list):
    summary = {
        "version": __version__,
        "command": command,
        "seedless": True,
        "outputs": outputs,
    }
    summary.update(payload)
    atomic_write(
        os.path.join(out_dir, "summary.json"),
        json.dumps(summary, indent=2, sort_keys=True) + "\n",
    )


def _spec_payload(spec: ClusterSpec, cfg: IntegratorConfig | None) -> dict:
    payload = {"spec": spec.to_dict()}
    if cfg is not None:
        payload["integrator"] = {
            "t_max": cfg.t_max,
            "dt": cfg.dt,
            "sample_every": cfg.sample_every,
            "frame": cfg.frame,
            "scheme": cfg.scheme,
        }
    payload["pair_convention"] = spec.pair_convention
    return payload


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_enumerate(args, settings, out_dir) -> int:
    n = int(settings.get("n_buffer", 4))
    graphs = topology.enumerate_buffer_graphs(
        n, planar_filter=args.planar, up_to_isomorphism=args.iso
    )
    count = topology.geometry_count(n)
    if args.dry_run:
        print(f"enumerate n={n}: admissible-count formula gives {count}")
        return EXIT_OK
    lines = "\n".join(g.to_text() for g in graphs) + "\n"
    path = os.path.join(out_dir, "graphs.txt")
    atomic_write(path, lines)
    write_summary(
        out_dir,
        "enumerate",
        {
            "n_buffer": n,
            "planar_filter": args.planar,
            "up_to_isomorphism": args.iso,
            "n_graphs": len(graphs),
            "count_formula": count,
        },
        ["graphs.txt"],
    )
    print(f"enumerate n={n}: {len(graphs)} graphs (formula count {count}) -> {path}")
    return EXIT_OK


def _default_observables(settings):
    obs = settings.get("observables")
    if obs is None:
        return list(experiments.TABLE_METRICS)
    if isinstance(obs, str):
        obs = [o.strip() for o in obs.split(",") if o.strip()]
    return [MetricName.parse(o).column for o in obs]


def cmd_simulate(args, settings, out_dir) -> int:
    spec = build_spec(settings)
    cfg = build_integrator(settings, default_t_max=30000.0)
    observables = _default_observables(settings)
    if args.dry_run:
        print(f"simulate: valid; {cfg.n_steps} integration steps, {cfg.n_samples + 1} samples")
        return EXIT_OK
    res = evolve(spec, cfg, observables)
    path = os.path.join(out_dir, "timeseries.csv")
    atomic_write(path, res.series.to_csv_text())
    payload = _spec_payload(spec, cfg)
    payload["trace_drift"] = res.trace_drift
    payload["herm_drift"] = res.herm_drift
    write_summary(out_dir, "simulate", payload, ["timeseries.csv"])
    print(
        f"simulate: {len(res.series.times)} samples x {len(observables)} metrics -> {path} "
        f"(trace drift {res.trace_drift:.2e})"
    )
    return EXIT_OK


def cmd_protection_time(args, settings, out_dir) -> int:
    spec = build_spec(settings)
    cfg = build_integrator(settings, default_t_max=experiments.HORIZON_THERMAL
                           if spec.noise.channel == model.THERMAL else experiments.HORIZON_DEPHASING)
    threshold = float(settings.get("threshold", experiments.THRESHOLD))
    observables = _default_observables(settings)
    if args.dry_run:
        print(f"protection-time: valid; {cfg.n_steps} integration steps")
        return EXIT_OK
    res = evolve(spec, cfg, observables)
    window = experiments.confirmation_window(spec.g)
    rows = []
    for column in observables:
        p = experiments.protection_time_from_series(res.series, column, threshold, window)
        rows.append(
            [
                spec.n_spins,
                spec.graph.to_text(),
                column,
                fmt(threshold),
                "" if p.time is None else fmt(p.time),
                fmt(p.confirmed_until),
            ]
        )
        shown = "not detected" if p.time is None else f"{p.time:.1f}"
        print(f"protection-time {column}: {shown}")
    path = os.path.join(out_dir, "protection.csv")
    atomic_write(
        path,
        rows_to_csv(
            ["n_total", "geometry", "metric", "threshold", "protection_time", "confirmed_until"],
            rows,
        ),
    )
    payload = _spec_payload(spec, cfg)
    payload["threshold"] = threshold
    write_summary(out_dir, "protection-time", payload, ["protection.csv"])
    return EXIT_OK


def _parse_n_range(text: str) -> tuple:
    text = text.strip()
    if "-" in text and "," not in text:
        lo, hi = text.split("-", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(x) for x in text.split(",") if x.strip())


def cmd_compare(args, settings, out_dir) -> int:
    n_range = _parse_n_range(str(settings.get("n_range", "2-6")))
    if any(n < 2 or n > 6 for n in n_range):
        raise ConfigError("n_range must lie within 2..6 (buffer spins)")
    channel = settings.get("channel", model.THERMAL)
    spec0 = build_spec({**settings, "n_buffer": n_range[0], "geometry": "empty"})
    cfg = build_integrator(settings, default_t_max=experiments.HORIZON_THERMAL
                           if channel == model.THERMAL else experiments.HORIZON_DEPHASING)
    if args.dry_run:
        total = cfg.n_steps * 2 * len(n_range)
        print(f"compare: valid; {total} integration steps over {2 * len(n_range)} runs")
        return EXIT_OK
    comparison = experiments.compare_extremes(
        n_range,
        experiments.TABLE_METRICS,
        noise=spec0.noise,
        cfg=cfg,
        initial_buffer=spec0.initial_buffer,
        pair_convention=spec0.pair_convention,
        threshold=float(settings.get("threshold", experiments.THRESHOLD)),
        jobs=args.jobs,
    )
    prot_rows, mean_rows = [], []
    for row in comparison.rows:
        for column in comparison.metrics:
            p = row.protection[column]
            prot_rows.append(
                [
                    row.n_total,
                    row.geometry,
                    column,
                    fmt(p.threshold),
                    "" if p.time is None else fmt(p.time),
                    fmt(p.confirmed_until),
                ]
            )
            if column in row.window_means:
                m = row.window_means[column]
                mean_rows.append(
                    [row.n_total, row.geometry, column, fmt(m.t1), fmt(m.t2), fmt(m.mean)]
                )
    outputs = []
    path = os.path.join(out_dir, "protection.csv")
    atomic_write(
        path,
        rows_to_csv(
            ["n_total", "geometry", "metric", "threshold", "protection_time", "confirmed_until"],
            prot_rows,
        ),
    )
    outputs.append("protection.csv")
    if mean_rows:
        atomic_write(
            os.path.join(out_dir, "window_means.csv"),
            rows_to_csv(["n_total", "geometry", "metric", "t1", "t2", "mean"], mean_rows),
        )
        outputs.append("window_means.csv")
    argmax = comparison.argmax_n_total("coh_l1")
    payload = {
        "channel": channel,
        "n_range": list(n_range),
        "argmax_n_total_coh_l1_maximal": argmax,
        "pair_convention": spec0.pair_convention,
    }
    write_summary(out_dir, "compare", payload, outputs)
    for row in comparison.rows:
        times = " ".join(
            f"{c}={row.protection[c].time:.0f}" if row.protection[c].time is not None else f"{c}=?"
            for c in comparison.metrics
        )
        print(f"compare N+1={row.n_total} {row.geometry}: {times}")
    print(f"compare: best-protected cluster size N+1={argmax} (coh_l1, maximal)")
    return EXIT_OK


def _parse_grid_axis(text: str) -> tuple:
    parts = [p for p in str(text).split(":") if p]
    if len(parts) == 3:
        lo, hi, k = float(parts[0]), float(parts[1]), int(parts[2])
        return tuple(np.linspace(lo, hi, k))
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def cmd_sweep(args, settings, out_dir) -> int:
    n = int(settings.get("n_buffer", 4))
    geometry = _parse_geometry(str(settings.get("geometry", "maximal")), n)
    g_values = _parse_grid_axis(settings.get("g_range", "0.001:0.004:5"))
    gamma_values = _parse_grid_axis(settings.get("gamma_range", "0.00025:0.001:5"))
    grid = experiments.SweepGrid(g_values, gamma_values, geometry)
    t2 = float(settings.get("t2", experiments.WINDOW_T2))
    t1 = float(settings.get("t1", experiments.WINDOW_T1))
    cfg = build_integrator(settings, default_t_max=t2)
    if args.dry_run:
        runs = len(g_values) * len(gamma_values) * (2 if args.diff_n else 1)
        print(f"sweep: valid; {runs} runs of {cfg.n_steps} steps")
        return EXIT_OK
    if args.diff_n:
        other = _parse_geometry(args.diff_geometry or "maximal", int(args.diff_n))
        result = experiments.sweep_difference(
            grid, other, cfg, t1=t1, t2=t2,
            initial_buffer=str(settings.get("initial_buffer", "thermal")).replace("-", "_"),
            jobs=args.jobs,
        )
    else:
        result = experiments.sweep(
            grid, cfg, t1=t1, t2=t2,
            initial_buffer=str(settings.get("initial_buffer", "thermal")).replace("-", "_"),
            jobs=args.jobs,
        )
    rows = []
    for i, g in enumerate(grid.g_values):
        for j, gamma in enumerate(grid.gamma_values):
            rows.append([fmt(g), fmt(gamma), fmt(result.values[i, j])])
    path = os.path.join(out_dir, "sweep.csv")
    atomic_write(path, rows_to_csv(["g", "gamma", "statistic_value"], rows))
    payload = {
        "geometry": geometry.to_text(),
        "statistic": grid.statistic,
        "window": [t1, t2],
        "difference_with": (None if not args.diff_n else f"n={args.diff_n} {args.diff_geometry or 'maximal'}"),
        "cell_errors": result.errors,
    }
    write_summary(out_dir, "sweep", payload, ["sweep.csv"])
    print(f"sweep: {len(rows)} cells -> {path} ({len(result.errors)} failures)")
    return EXIT_OK


def cmd_heat(args, settings, out_dir) -> int:
    n = int(settings.get("n_buffer", 4))
    cfg = build_integrator(settings, default_t_max=6.0e4)
    if args.dry_run:
        print(f"heat: valid; {2 * cfg.n_steps} integration steps over 2 runs")
        return EXIT_OK
    result = experiments.heat_comparison(n, cfg, check=not args.no_check, jobs=args.jobs)
    outputs = []
    for label, series in (("empty", result.series_empty), ("maximal", result.series_maximal)):
        name = f"heat_{label}.csv"
        atomic_write(os.path.join(out_dir, name), series.to_csv_text())
        outputs.append(name)
    payload = {
        "n_total": result.n_total,
        "erasure_cost": result.erasure_cost,
        "final_q": result.final_q,
        "half_crossing": result.half_crossing,
        "delay": result.delay,
    }
    write_summary(out_dir, "heat", payload, outputs)
    print(
        f"heat N+1={result.n_total}: E_c={result.erasure_cost:.4f}, "
        f"Q_end empty {result.final_q['empty']:.4f} / maximal {result.final_q['maximal']:.4f}, "
        f"half-cost delay {result.delay:.0f}"
    )
    return EXIT_OK


_TABLE_CHANNEL = {"I": model.THERMAL, "II": model.THERMAL,
                  "III": model.DEPHASING, "IV": model.DEPHASING}


def cmd_reproduce_table(args, settings, out_dir) -> int:
    table = args.table
    if table not in TABLE_IDS:
        raise ConfigError(f"table must be one of {TABLE_IDS}")
    channel = _TABLE_CHANNEL[table]
    settings = dict(settings)
    settings.setdefault("channel", channel)
    convention = settings.get("pair_convention", "calibrate")
    if convention == "calibrate":
        convention = experiments.calibrate_pair_convention(jobs=args.jobs).convention
    cfg = build_integrator(settings, default_t_max=experiments.HORIZON_THERMAL
                           if channel == model.THERMAL else experiments.HORIZON_DEPHASING)
    if args.dry_run:
        print(f"reproduce-table {table}: valid; {10 * cfg.n_steps} integration steps over 10 runs")
        return EXIT_OK
    noise = build_spec({**settings, "n_buffer": 2, "geometry": "empty"}).noise
    comparison = experiments.compare_extremes(
        (2, 3, 4, 5, 6),
        experiments.TABLE_METRICS,
        noise=noise,
        cfg=cfg,
        initial_buffer=str(settings.get("initial_buffer", "thermal")).replace("-", "_"),
        pair_convention=_CONVENTION_ALIASES[convention],
        jobs=args.jobs,
    )
    protection_mode = table in ("I", "III")
    header = ["n_total"]
    for column in experiments.TABLE_METRICS:
        header += [f"{column}_empty", f"{column}_maximal"]
    rows = []
    for n_total in (3, 4, 5, 6, 7):
        row = [n_total]
        for column in experiments.TABLE_METRICS:
            for geometry in ("empty", "maximal"):
                r = comparison.row(n_total, geometry)
                if protection_mode:
                    p = r.protection[column].rounded()
                    row.append("" if p is None else fmt(p))
                else:
                    row.append(fmt(r.window_means[column].mean))
        rows.append(row)
    name = f"table_{table}.csv"
    atomic_write(os.path.join(out_dir, name), rows_to_csv(header, rows))
    payload = {
        "table": table,
        "channel": channel,
        "pair_convention": _CONVENTION_ALIASES[convention],
        "mode": "protection_time" if protection_mode else "window_mean",
        "argmax_n_total_coh_l1_maximal": comparison.argmax_n_total("coh_l1"),
    }
    write_summary(out_dir, f"reproduce-table {table}", payload, [name])
    for row in rows:
        print("table", table, "row:", ",".join(str(x) for x in row))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinshield",
        description="Buffer-network geometry search for central-spin coherence protection",
    )
    parser.add_argument("--version", action="version", version=f"spinshield {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_spec=True):
        p.add_argument("--config", help="config file (JSON or key = value lines)")
        p.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_DIR_ENV} or .)")
        p.add_argument("--dry-run", action="store_true", help="validate and report step count only")
        p.add_argument("--jobs", type=int, default=None, help="max parallel worker processes")
        if needs_spec:
            p.add_argument("--n", type=int, dest="n_buffer", help="number of buffer spins")
            p.add_argument("--geometry", help="edge list 'N=..; edges=..', or empty/maximal")
            p.add_argument("--channel", choices=[model.THERMAL, model.DEPHASING])
            p.add_argument("--g", type=float, help="exchange coupling strength")
            p.add_argument("--gamma", type=float, help="thermal dissipation rate")
            p.add_argument("--gamma-d", type=float, dest="gamma_d", help="dephasing rate")
            p.add_argument("--temp", type=float, dest="temperature", help="bath temperature")
            p.add_argument("--threshold", type=float, help="protection threshold")
            p.add_argument("--t-max", type=float, dest="t_max", help="integration horizon")
            p.add_argument("--dt", type=float, help="integration step")
            p.add_argument("--sample-every", type=float, dest="sample_every")
            p.add_argument("--frame", choices=["lab", "rotating"])
            p.add_argument("--initial-buffer", dest="initial_buffer",
                           choices=["thermal", "max-coherent", "max_coherent"])
            p.add_argument("--pair-convention", dest="pair_convention",
                           choices=["once", "double", "calibrate"])
            p.add_argument("--observables", help="comma-separated metric names")

    p = sub.add_parser("enumerate", help="list buffer networks")
    common(p)
    p.add_argument("--planar", action="store_true", help="keep only planar graphs")
    p.add_argument("--iso", action="store_true", help="deduplicate up to isomorphism")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("simulate", help="evolve one cluster, record metrics")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("protection-time", help="detect protection times for one cluster")
    common(p)
    p.set_defaults(func=cmd_protection_time)

    p = sub.add_parser("compare", help="empty vs maximal geometries over a size range")
    common(p)
    p.add_argument("--n-range", dest="n_range", help="e.g. 2-6 or 2,3,4")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="window-mean statistic over a (g, gamma) grid")
    common(p)
    p.add_argument("--g-range", dest="g_range", help="lo:hi:k or comma list")
    p.add_argument("--gamma-range", dest="gamma_range", help="lo:hi:k or comma list")
    p.add_argument("--t1", type=float, help="window start")
    p.add_argument("--t2", type=float, help="window end")
    p.add_argument("--diff-n", dest="diff_n", type=int,
                   help="subtract the same sweep for this buffer count")
    p.add_argument("--diff-geometry", dest="diff_geometry",
                   help="geometry of the subtracted network")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("heat", help="integrated heat, empty vs maximal geometry")
    common(p)
    p.add_argument("--no-check", action="store_true",
                   help="skip convergence/delay verification")
    p.set_defaults(func=cmd_heat)

    p = sub.add_parser("reproduce-table", help="reproduce a reference result table")
    p.add_argument("table", choices=list(TABLE_IDS))
    common(p)
    p.set_defaults(func=cmd_reproduce_table)

    return parser


_FLAG_KEYS = (
    "n_buffer", "geometry", "channel", "g", "gamma", "gamma_d", "temperature",
    "threshold", "t_max", "dt", "sample_every", "frame", "initial_buffer",
    "pair_convention", "observables", "n_range", "g_range", "gamma_range",
    "t1", "t2",
)


def merge_settings(args) -> dict:
    settings: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                settings.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        settings = merge_settings(args)
        out_dir = args.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "."
        return args.func(args, settings, out_dir)
    except ConfigError as exc:
        _error(args, "parse", exc)
        return EXIT_PARSE
    except (ValueError, KeyError) as exc:
        _error(args, "validation", exc)
        return EXIT_VALIDATION
    except (ToleranceBreachError, ProtocolError, ArithmeticError) as exc:
        _error(args, "simulation", exc)
        return EXIT_SIMULATION


def _error(args, kind: str, exc: Exception):
    record = {"error": kind, "message": str(exc), "command": getattr(args, "command", None)}
    print(json.dumps(record), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
