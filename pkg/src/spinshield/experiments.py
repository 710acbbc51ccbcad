"""Measurement protocols: protection times, windowed means, geometry
comparison, parameter sweeps, heat analysis, single-spin baseline.

The standard cluster settings are omega = 1, g = 0.002, gamma = 0.0005,
T = 0.4 (thermal channel) and gamma_d = 0.00059 (dephasing), with the
buffer spins starting in their local Gibbs state and the central spin in
the maximally coherent superposition.  A protection time is the last
instant after which the chosen central-spin measure stays below the
detection threshold (1e-4) continuously; because the exchange coupling
makes every measure oscillate, "stays below" is operationalized as a
confirmation window of max(5 * 2pi/(4g), 5000) time units beyond the last
interpolated upward crossing.

Independent simulations are distributed over worker processes; results
are always assembled in task order, never completion order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics, model, qstate
from .dynamics import IntegratorConfig, SpinSystem, TimeSeries, evolve, evolve_system
from .metrics import MetricName
from .model import ClusterSpec, LindbladTerm, NoiseSpec, planck_n, thermal_state
from .topology import BufferGraph, extreme_geometry

OMEGA = 1.0
COUPLING = 0.002
GAMMA_THERMAL = 0.0005
GAMMA_DEPHASING = 0.00059
TEMPERATURE = 0.4
THRESHOLD = 1e-4
WINDOW_T1 = 29000.0
WINDOW_T2 = 30000.0
HORIZON_THERMAL = 1.0e5
HORIZON_DEPHASING = 6.0e4
TABLE_DT = 2.0
SAMPLE_EVERY = 10.0
CALIBRATION_TARGET = 41770.0

TABLE_METRICS = (
    "rel_entropy_vs_thermal",
    "trace_distance_vs_thermal",
    "coh_rel_entropy",
    "coh_l1",
)


class ProtocolError(RuntimeError):
    """A protocol-level check failed (calibration, heat analysis, ...)."""


def default_noise(channel: str = model.THERMAL) -> NoiseSpec:
    if channel == model.THERMAL:
        return NoiseSpec(channel=model.THERMAL, temperature=TEMPERATURE, gamma=GAMMA_THERMAL)
    return NoiseSpec(channel=model.DEPHASING, temperature=TEMPERATURE, gamma_d=GAMMA_DEPHASING)


def cluster_spec(
    n_buffer: int,
    geometry="maximal",
    *,
    noise: NoiseSpec | None = None,
    g: float = COUPLING,
    omega: float = OMEGA,
    initial_buffer: str = "thermal",
    pair_convention: str = model.UNORDERED_ONCE,
) -> ClusterSpec:
    """Standard-settings cluster; ``geometry`` is a BufferGraph or
    ``empty``/``maximal``."""
    graph = geometry
    if isinstance(geometry, str):
        graph = extreme_geometry(n_buffer, geometry)
    return ClusterSpec(
        n_buffer=n_buffer,
        graph=graph,
        omega=omega,
        g=g,
        pair_convention=pair_convention,
        noise=noise if noise is not None else default_noise(),
        initial_buffer=initial_buffer,
    )


def table_config(channel: str = model.THERMAL, t_max: float | None = None) -> IntegratorConfig:
    if t_max is None:
        t_max = HORIZON_THERMAL if channel == model.THERMAL else HORIZON_DEPHASING
    return IntegratorConfig(t_max=t_max, dt=TABLE_DT, sample_every=SAMPLE_EVERY)


def confirmation_window(g: float) -> float:
    """Quiet span required after the last crossing before it counts."""
    if g <= 0:
        return 5000.0
    return max(5.0 * 2.0 * math.pi / (4.0 * g), 5000.0)


# ---------------------------------------------------------------------------
# Protection times
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProtectionTimeResult:
    metric: str
    threshold: float
    time: float | None
    confirmed_until: float
    detected: bool

    def rounded(self, grid: float = SAMPLE_EVERY) -> float | None:
        """Crossing time snapped to the sampling grid (table-reproduction mode)."""
        if self.time is None:
            return None
        return round(self.time / grid) * grid


def protection_time_from_series(
    series: TimeSeries,
    metric: str,
    threshold: float = THRESHOLD,
    window: float = 5000.0,
) -> ProtectionTimeResult:
    """Last-crossing detection on an existing trajectory record.

    The crossing is located by linear interpolation between the last
    sample at or above ``threshold`` and its successor; the result counts
    as detected only if the series stays below threshold for ``window``
    time units beyond the crossing.
    """
    times = series.times
    vals = series.column(metric)
    if len(times) == 0:
        raise ValueError("empty series")
    above = vals >= threshold
    t_end = times[-1]
    if not above.any():
        t_cross = float(times[0])
    else:
        idx = int(np.nonzero(above)[0][-1])
        if idx + 1 >= len(times):
            return ProtectionTimeResult(metric, threshold, None, float(t_end), False)
        t0, t1 = times[idx], times[idx + 1]
        v0, v1 = vals[idx], vals[idx + 1]
        t_cross = float(t0 + (v0 - threshold) / (v0 - v1) * (t1 - t0))
    if t_end - t_cross < window:
        return ProtectionTimeResult(metric, threshold, None, float(t_end), False)
    return ProtectionTimeResult(metric, threshold, t_cross, float(t_end), True)


def protection_time(
    spec: ClusterSpec,
    cfg: IntegratorConfig,
    metric="coh_l1",
    threshold: float = THRESHOLD,
) -> ProtectionTimeResult:
    """Simulate the cluster and detect the metric's protection time."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    column = MetricName.parse(metric).column
    res = evolve(spec, cfg, [column])
    return protection_time_from_series(
        res.series, column, threshold, confirmation_window(spec.g)
    )


# ---------------------------------------------------------------------------
# Window means
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowMeanResult:
    metric: str
    t1: float
    t2: float
    mean: float


def window_mean_from_series(
    series: TimeSeries, metric: str, t1: float = WINDOW_T1, t2: float = WINDOW_T2
) -> WindowMeanResult:
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    w = series.window(t1, t2)
    if len(w.times) == 0:
        raise ValueError(f"no samples in window [{t1}, {t2}]")
    return WindowMeanResult(metric, t1, t2, float(w.column(metric).mean()))


def window_mean(
    spec: ClusterSpec,
    cfg: IntegratorConfig,
    metric="coh_l1",
    t1: float = WINDOW_T1,
    t2: float = WINDOW_T2,
) -> WindowMeanResult:
    """Arithmetic mean of the sampled metric over t1 <= t <= t2."""
    if t2 > cfg.t_max:
        raise ValueError("window extends past the integration horizon")
    column = MetricName.parse(metric).column
    res = evolve(spec, cfg, [column])
    return window_mean_from_series(res.series, column, t1, t2)


# ---------------------------------------------------------------------------
# Parallel run helper
# ---------------------------------------------------------------------------


def _run_task(task):
    spec, cfg, observables = task
    res = evolve(spec, cfg, observables)
    return res.series


def run_clusters(tasks, jobs: int | None = None) -> list[TimeSeries]:
    """Evolve independent clusters, preserving task order in the results."""
    tasks = list(tasks)
    if jobs is None:
        jobs = min(len(tasks), os.cpu_count() or 1)
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks))


# ---------------------------------------------------------------------------
# Geometry comparison (the protection-time tables)
# ---------------------------------------------------------------------------


@dataclass
class ExtremesRow:
    n_total: int
    geometry: str
    graph: BufferGraph
    protection: dict
    window_means: dict


@dataclass
class ExtremesComparison:
    rows: list
    metrics: tuple
    channel: str

    def row(self, n_total: int, geometry: str) -> ExtremesRow:
        for r in self.rows:
            if r.n_total == n_total and r.geometry == geometry:
                return r
        raise KeyError((n_total, geometry))

    def argmax_n_total(self, metric: str, geometry: str = "maximal") -> int:
        column = MetricName.parse(metric).column
        best, best_t = None, -math.inf
        for r in self.rows:
            if r.geometry != geometry:
                continue
            res = r.protection[column]
            if res.detected and res.time > best_t:
                best, best_t = r.n_total, res.time
        if best is None:
            raise ProtocolError(f"no detected protection times for {column}")
        return best


def compare_extremes(
    n_range=(2, 3, 4, 5, 6),
    metric_names=TABLE_METRICS,
    noise: NoiseSpec | None = None,
    cfg: IntegratorConfig | None = None,
    *,
    initial_buffer: str = "thermal",
    pair_convention: str = model.UNORDERED_ONCE,
    threshold: float = THRESHOLD,
    jobs: int | None = None,
) -> ExtremesComparison:
    """Protection times and window means for the two extreme geometries.

    One simulation per (N, geometry) records every requested metric; all
    runs are independent work items.
    """
    if isinstance(metric_names, (str, MetricName)):
        metric_names = (metric_names,)
    columns = [MetricName.parse(m).column for m in metric_names]
    noise = noise if noise is not None else default_noise()
    cfg = cfg if cfg is not None else table_config(noise.channel)

    tasks, keys = [], []
    for n_buffer in n_range:
        for geometry in ("empty", "maximal"):
            spec = cluster_spec(
                n_buffer,
                geometry,
                noise=noise,
                initial_buffer=initial_buffer,
                pair_convention=pair_convention,
            )
            tasks.append((spec, cfg, columns))
            keys.append((n_buffer, geometry, spec))
    all_series = run_clusters(tasks, jobs=jobs)

    rows = []
    for (n_buffer, geometry, spec), series in zip(keys, all_series):
        window = confirmation_window(spec.g)
        prot = {
            c: protection_time_from_series(series, c, threshold, window) for c in columns
        }
        means = {}
        if WINDOW_T2 <= cfg.t_max:
            means = {c: window_mean_from_series(series, c) for c in columns}
        rows.append(ExtremesRow(n_buffer + 1, geometry, spec.graph, prot, means))
    return ExtremesComparison(rows, tuple(columns), noise.channel)


# ---------------------------------------------------------------------------
# Pair-convention calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    convention: str
    times: dict
    target: float
    tolerance: float

    def relative_error(self, convention: str) -> float:
        return abs(self.times[convention] - self.target) / self.target


_calibration_cache: dict = {}


def calibrate_pair_convention(jobs: int | None = None) -> CalibrationResult:
    """Settle how the exchange sum's ordered pairs map onto couplings.

    Runs the N+1 = 3 zero-connectivity cluster under both conventions with
    the standard table settings and picks the one whose C_L1 protection
    time lands within 15% of the reference value 41770.  In this coupling
    regime the two conventions are nearly degenerate (the decay rates are
    set by the bath, not by g), so when both qualify the default
    unordered_once wins; deterministic either way.  Raises ProtocolError
    if neither qualifies.
    """
    key = "default"
    if key in _calibration_cache:
        return _calibration_cache[key]
    cfg = table_config(model.THERMAL, t_max=7.0e4)
    tasks = []
    conventions = (model.UNORDERED_ONCE, model.ORDERED_DOUBLE)
    for conv in conventions:
        spec = cluster_spec(2, "empty", pair_convention=conv)
        tasks.append((spec, cfg, ["coh_l1"]))
    series = run_clusters(tasks, jobs=jobs)
    times = {}
    for conv, s in zip(conventions, series):
        res = protection_time_from_series(s, "coh_l1", THRESHOLD, confirmation_window(COUPLING))
        if not res.detected:
            raise ProtocolError(f"calibration run for {conv} did not settle below threshold")
        times[conv] = res.time
    tol = 0.15
    qualifying = [c for c in conventions if abs(times[c] - CALIBRATION_TARGET) / CALIBRATION_TARGET <= tol]
    if not qualifying:
        raise ProtocolError(
            "pair-convention calibration failed: "
            + ", ".join(f"{c}: {times[c]:.0f}" for c in conventions)
            + f" vs target {CALIBRATION_TARGET:.0f} (±15%)"
        )
    chosen = model.UNORDERED_ONCE if model.UNORDERED_ONCE in qualifying else qualifying[0]
    result = CalibrationResult(chosen, times, CALIBRATION_TARGET, tol)
    _calibration_cache[key] = result
    return result


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepGrid:
    g_values: tuple
    gamma_values: tuple
    geometry: BufferGraph
    statistic: str = "window_mean_l1"

    def __post_init__(self):
        g = tuple(float(x) for x in self.g_values)
        gam = tuple(float(x) for x in self.gamma_values)
        if not g or not gam:
            raise ValueError("sweep grid must be nonempty")
        if any(x <= 0 or not math.isfinite(x) for x in g + gam):
            raise ValueError("grid values must be positive and finite")
        object.__setattr__(self, "g_values", g)
        object.__setattr__(self, "gamma_values", gam)
        if self.statistic != "window_mean_l1":
            raise ValueError(f"unknown sweep statistic {self.statistic!r}")


@dataclass
class SweepResult:
    grid: SweepGrid
    values: np.ndarray  # shape (len(g_values), len(gamma_values))
    errors: list  # (i, j, message) for failed cells


def sweep(
    grid: SweepGrid,
    cfg: IntegratorConfig | None = None,
    *,
    initial_buffer: str = "thermal",
    t1: float = WINDOW_T1,
    t2: float = WINDOW_T2,
    jobs: int | None = None,
) -> SweepResult:
    """Windowed C_L1 mean over a (g, gamma) grid for one geometry.

    Cell failures are recorded (NaN in the matrix) and the sweep continues.
    """
    if cfg is None:
        cfg = table_config(model.THERMAL, t_max=t2)
    tasks = []
    for g in grid.g_values:
        for gamma in grid.gamma_values:
            noise = NoiseSpec(channel=model.THERMAL, temperature=TEMPERATURE, gamma=gamma)
            spec = cluster_spec(
                grid.geometry.n_buffer,
                grid.geometry,
                noise=noise,
                g=g,
                initial_buffer=initial_buffer,
            )
            tasks.append((spec, cfg, ["coh_l1"]))

    n_g, n_gam = len(grid.g_values), len(grid.gamma_values)
    values = np.full((n_g, n_gam), np.nan)
    errors = []
    results = run_clusters(tasks, jobs=jobs)
    for idx, series in enumerate(results):
        i, j = divmod(idx, n_gam)
        try:
            values[i, j] = window_mean_from_series(series, "coh_l1", t1, t2).mean
        except Exception as exc:  # per-cell failure, sweep continues
            errors.append((i, j, str(exc)))
    return SweepResult(grid, values, errors)


def sweep_difference(
    grid: SweepGrid,
    other_geometry: BufferGraph,
    cfg: IntegratorConfig | None = None,
    **kwargs,
) -> SweepResult:
    """Difference map: grid.geometry statistic minus other_geometry's."""
    first = sweep(grid, cfg, **kwargs)
    second = sweep(
        SweepGrid(grid.g_values, grid.gamma_values, other_geometry, grid.statistic),
        cfg,
        **kwargs,
    )
    return SweepResult(grid, first.values - second.values, first.errors + second.errors)


# ---------------------------------------------------------------------------
# Heat analysis
# ---------------------------------------------------------------------------


@dataclass
class HeatComparison:
    n_total: int
    series_empty: TimeSeries
    series_maximal: TimeSeries
    erasure_cost: float
    final_q: dict
    half_crossing: dict

    @property
    def delay(self) -> float:
        return self.half_crossing["maximal"] - self.half_crossing["empty"]


def _first_crossing(times: np.ndarray, q: np.ndarray, level: float) -> float:
    """First time Q(t) reaches ``level`` (Q decreases from 0 toward E_c < 0)."""
    hit = q <= level
    if not hit.any():
        raise ProtocolError(f"heat never reached {level:.4g} within the horizon")
    idx = int(np.nonzero(hit)[0][0])
    if idx == 0:
        return float(times[0])
    t0, t1 = times[idx - 1], times[idx]
    q0, q1 = q[idx - 1], q[idx]
    return float(t0 + (q0 - level) / (q0 - q1) * (t1 - t0))


def heat_comparison(
    n_buffer: int,
    cfg: IntegratorConfig | None = None,
    *,
    convergence_rtol: float = 0.02,
    check: bool = True,
    jobs: int | None = None,
) -> HeatComparison:
    """Integrated central-spin heat for the two extreme geometries.

    Checks (unless ``check=False`` or the cluster is closed) that both
    curves converge to the coherence-erasure cost within ``convergence_rtol``
    at the horizon and that the coupled geometry reaches half that cost
    strictly later than the uncoupled one.
    """
    if not 2 <= n_buffer <= 5:
        raise ValueError("heat comparison supports 2..5 buffer spins")
    if cfg is None:
        cfg = table_config(model.THERMAL, t_max=6.0e4)
    specs = {
        label: cluster_spec(n_buffer, label, initial_buffer="thermal")
        for label in ("empty", "maximal")
    }
    tasks = [(specs[k], cfg, ["heat_current", "heat_integrated"]) for k in ("empty", "maximal")]
    series_empty, series_maximal = run_clusters(tasks, jobs=jobs)

    spec = specs["empty"]
    e_cost = metrics.erasure_cost(
        spec.omega,
        qstate.plus_state(),
        thermal_state(spec.omega, spec.noise.temperature),
    )
    out = HeatComparison(
        n_total=n_buffer + 1,
        series_empty=series_empty,
        series_maximal=series_maximal,
        erasure_cost=e_cost,
        final_q={
            "empty": float(series_empty.column("heat_integrated")[-1]),
            "maximal": float(series_maximal.column("heat_integrated")[-1]),
        },
        half_crossing={
            "empty": _first_crossing(
                series_empty.times, series_empty.column("heat_integrated"), e_cost / 2.0
            ),
            "maximal": _first_crossing(
                series_maximal.times, series_maximal.column("heat_integrated"), e_cost / 2.0
            ),
        },
    )
    dissipative = spec.noise.gamma > 0
    if check and dissipative:
        for label, q_end in out.final_q.items():
            if abs(q_end - e_cost) > convergence_rtol * abs(e_cost):
                raise ProtocolError(
                    f"{label} heat {q_end:.4f} not within {convergence_rtol:.0%} "
                    f"of {e_cost:.4f} at the horizon"
                )
        if not out.delay > 0:
            raise ProtocolError(
                f"no heat-exchange delay: maximal {out.half_crossing['maximal']:.0f} "
                f"vs empty {out.half_crossing['empty']:.0f}"
            )
    return out


# ---------------------------------------------------------------------------
# Single-spin baseline rig
# ---------------------------------------------------------------------------


@dataclass
class SingleSpinBaseline:
    series: TimeSeries
    protection: ProtectionTimeResult
    analytic_crossing: float
    decay_rate: float


def single_spin_baseline(
    omega: float = OMEGA,
    temperature: float = TEMPERATURE,
    gamma: float = GAMMA_THERMAL,
    cfg: IntegratorConfig | None = None,
    threshold: float = THRESHOLD,
) -> SingleSpinBaseline:
    """One spin in its own thermal bath: the analytically solvable rig.

    The coherence decays as exp(-gamma (1+2n) t / 2), so the threshold
    crossing has a closed form against which the integrator is checked.
    Note the cluster model never damps the central spin; this rig exists
    as an oracle and for the thermalization-time baseline.
    """
    n_occ = planck_n(omega, temperature)
    rate = gamma * (1.0 + 2.0 * n_occ) / 2.0
    analytic = math.log(1.0 / threshold) / rate
    if cfg is None:
        cfg = IntegratorConfig(t_max=40000.0, dt=0.5, sample_every=SAMPLE_EVERY)
    rig = SpinSystem(
        n_spins=1,
        omega=omega,
        jumps=(
            LindbladTerm(1, "minus", gamma * (1.0 + n_occ)),
            LindbladTerm(1, "plus", gamma * n_occ),
        ),
    )
    res = evolve_system(
        rig,
        qstate.plus_state(),
        cfg,
        ["coh_l1"],
        reference_state=thermal_state(omega, temperature),
    )
    prot = protection_time_from_series(res.series, "coh_l1", threshold, window=5000.0)
    return SingleSpinBaseline(res.series, prot, analytic, rate)
