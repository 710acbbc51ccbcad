"""Observables: coherence measures, distances to equilibrium, heat.

All entropic quantities use base-2 logarithms (values in bits).
Eigenvalues in [-1e-10, 0) are treated as numerical zeros inside entropy
computations; anything more negative indicates a broken state and raises.

Every state measure here is invariant under conjugation of its arguments
by diagonal unitaries, which is what makes it safe to evaluate them
directly on rotating-frame states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qstate

EIG_CLIP = 1e-10
_LOG2 = math.log(2.0)

STATE_METRICS = (
    "rel_entropy_vs_thermal",
    "trace_distance_vs_thermal",
    "coh_rel_entropy",
    "coh_l1",
    "sigma_z_expect",
    "purity",
)
GENERATOR_METRICS = ("heat_current", "heat_integrated")
ALL_METRICS = STATE_METRICS + GENERATOR_METRICS

COHERENCE_METRICS = ("rel_entropy_vs_thermal", "trace_distance_vs_thermal",
                     "coh_rel_entropy", "coh_l1")


class MetricError(ValueError):
    """A metric was asked to evaluate an unusable state."""


@dataclass(frozen=True)
class MetricName:
    """A registry metric plus the spin subset it is evaluated on.

    The default subset is the central spin {1}.  The column string is the
    bare metric name for the default subset and ``name@i,j,...`` otherwise;
    these strings are the stable CSV column identifiers.
    """

    name: str
    sites: tuple = (1,)

    def __post_init__(self):
        if self.name not in ALL_METRICS:
            raise MetricError(f"unknown metric {self.name!r}")
        sites = tuple(sorted(set(int(s) for s in self.sites)))
        if not sites:
            raise MetricError("metric needs a nonempty site subset")
        object.__setattr__(self, "sites", sites)
        if self.name in GENERATOR_METRICS and sites != (1,):
            raise MetricError(f"{self.name} is defined on the central spin only")

    @property
    def column(self) -> str:
        if self.sites == (1,):
            return self.name
        return f"{self.name}@{','.join(str(s) for s in self.sites)}"

    @classmethod
    def parse(cls, text) -> "MetricName":
        if isinstance(text, MetricName):
            return text
        name, _, sub = text.partition("@")
        sites = (1,) if not sub else tuple(int(s) for s in sub.split(","))
        return cls(name, sites)


def _clipped_eigs(rho: np.ndarray) -> np.ndarray:
    vals = np.linalg.eigvalsh(rho)
    if vals.min() < -EIG_CLIP:
        raise MetricError(
            f"eigenvalue {vals.min():.3e} below -{EIG_CLIP:g}: state too far from positive"
        )
    return np.clip(vals, 0.0, None)


def entropy_bits(rho: np.ndarray) -> float:
    """Von Neumann entropy -tr(rho log2 rho), with 0 log 0 = 0."""
    vals = _clipped_eigs(rho)
    nz = vals[vals > 0.0]
    return float(-(nz * np.log2(nz)).sum())


def relative_entropy(rho: np.ndarray, sigma: np.ndarray) -> float:
    """S(rho||sigma) = tr(rho log2 rho) - tr(rho log2 sigma), in bits.

    Returns ``math.inf`` when rho has weight outside the support of sigma
    (no exception: infinity is a legitimate value of this measure).
    """
    rho = np.asarray(rho, dtype=complex)
    s_vals, s_vecs = np.linalg.eigh(np.asarray(sigma, dtype=complex))
    weights = np.einsum("ij,jk,ki->i", s_vecs.conj().T, rho, s_vecs).real
    support = s_vals > EIG_CLIP
    if (weights[~support] > 1e-12).any():
        return math.inf
    cross = float((weights[support] * np.log2(s_vals[support])).sum())
    return -entropy_bits(rho) - cross


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """T(rho, sigma) = half the sum of |eigenvalues| of rho - sigma."""
    diff = np.asarray(rho, dtype=complex) - np.asarray(sigma, dtype=complex)
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def coherence_l1(rho: np.ndarray) -> float:
    """Sum of |rho_ij| over i != j in the computational product basis."""
    a = np.abs(np.asarray(rho))
    return float(a.sum() - np.trace(a))


def coherence_rel_entropy(rho: np.ndarray) -> float:
    """Relative entropy of coherence S(rho_d) - S(rho) in bits."""
    rho = np.asarray(rho, dtype=complex)
    diag = np.diag(np.diag(rho))
    return entropy_bits(diag) - entropy_bits(rho)


def purity(rho: np.ndarray) -> float:
    """tr(rho^2) for Hermitian rho."""
    rho = np.asarray(rho, dtype=complex)
    return float(np.vdot(rho, rho).real)


def sigma_z_expectation(rho: np.ndarray) -> float:
    """<sum_i sigma_z^(i)> on the (possibly multi-spin) state."""
    p = np.diag(np.asarray(rho)).real
    n = int(round(math.log2(len(p))))
    signs = np.array([n - 2 * int(x).bit_count() for x in range(len(p))])
    return float((p * signs).sum())


def heat_current(omega: float, rho_full: np.ndarray, generator, total_spins: int) -> float:
    """J = tr(H_s d rho_s/dt) with H_s = (omega/2) sigma_z on the central spin.

    ``generator`` maps the full-space density matrix to the master-equation
    right-hand side; the derivative of the reduced state is obtained by
    tracing it down, never by finite differencing.
    """
    drho = generator(np.asarray(rho_full, dtype=complex))
    red = qstate.partial_trace(drho, {1}, total_spins)
    return float((omega / 2.0) * (red[0, 0] - red[1, 1]).real)


def integrate_heat(series):
    """Cumulative trapezoid of the heat current: Q(t) with Q(0) = 0.

    Takes a TimeSeries containing a ``heat_current`` column and returns a
    new TimeSeries with a ``heat_integrated`` column added.
    """
    from .dynamics import TimeSeries

    if "heat_current" not in series.values:
        raise KeyError("series has no heat_current column")
    q = cumulative_trapezoid(series.times, series.values["heat_current"])
    values = dict(series.values)
    values["heat_integrated"] = q
    return TimeSeries(series.times.copy(), values)


def cumulative_trapezoid(times: np.ndarray, current: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    increments = 0.5 * dt * (current[1:] + current[:-1])
    return np.concatenate([[0.0], np.cumsum(increments)])


def erasure_cost(omega: float, rho_initial: np.ndarray, rho_final: np.ndarray) -> float:
    """Energy cost tr(H_s (rho_final - rho_initial)) of resetting the spin."""
    d = np.asarray(rho_final) - np.asarray(rho_initial)
    return float((omega / 2.0) * (d[0, 0] - d[1, 1]).real)


# ---------------------------------------------------------------------------
# Recorder support
# ---------------------------------------------------------------------------


@dataclass
class MetricContext:
    """Everything evaluators need besides the state itself."""

    omega: float
    total_spins: int
    reference_state: np.ndarray  # single-spin comparison state


class Evaluator:
    """Bound metric: computes one column value from (rho_full, rhs_value)."""

    def __init__(self, metric: MetricName, ctx: MetricContext):
        self.metric = metric
        self.ctx = ctx
        self.column = metric.column
        self.needs_generator = metric.name in GENERATOR_METRICS
        self._q_accum = 0.0
        self._last = None  # (t, J) for trapezoid accumulation
        if metric.name.endswith("_vs_thermal"):
            ref = ctx.reference_state
            for _ in range(len(metric.sites) - 1):
                ref = np.kron(ref, ctx.reference_state)
            self._ref = ref
        else:
            self._ref = None

    def _reduced(self, rho_full, cache):
        key = self.metric.sites
        if key not in cache:
            if len(key) == self.ctx.total_spins:
                cache[key] = rho_full
            else:
                cache[key] = qstate.partial_trace(rho_full, key, self.ctx.total_spins)
        return cache[key]

    def compute(self, t: float, rho_full, rhs_value, cache) -> float:
        name = self.metric.name
        if name == "heat_current" or name == "heat_integrated":
            red = qstate.partial_trace(rhs_value, {1}, self.ctx.total_spins)
            j = float((self.ctx.omega / 2.0) * (red[0, 0] - red[1, 1]).real)
            if name == "heat_current":
                return j
            if self._last is not None:
                t0, j0 = self._last
                self._q_accum += 0.5 * (t - t0) * (j + j0)
            self._last = (t, j)
            return self._q_accum
        rho = self._reduced(rho_full, cache)
        if name == "rel_entropy_vs_thermal":
            return relative_entropy(rho, self._ref)
        if name == "trace_distance_vs_thermal":
            return trace_distance(rho, self._ref)
        if name == "coh_rel_entropy":
            return coherence_rel_entropy(rho)
        if name == "coh_l1":
            return coherence_l1(rho)
        if name == "sigma_z_expect":
            return sigma_z_expectation(rho)
        if name == "purity":
            return purity(rho)
        raise MetricError(f"unhandled metric {name!r}")


def make_evaluators(names, ctx: MetricContext) -> list:
    return [Evaluator(MetricName.parse(n), ctx) for n in names]
