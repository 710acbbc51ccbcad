"""Physical specification of a spin cluster and its noise channels.

A cluster is one central spin (site 1) exchange-coupled to N buffer spins
(sites 2..N+1) whose mutual couplings are given by a planar buffer graph.
The Hamiltonian is an XX central-spin model,

    H = sum_i (omega/2) sigma_z^(i)
        + sum_pairs coeff (sigma_x sigma_x + sigma_y sigma_y),

with pairs = {(1, j) : j buffer} plus the buffer-graph edges.  Because the
flip-flop sum in the defining model runs over ordered index pairs, the
coupling enters either once per unordered pair (coeff = g) or twice
(coeff = 2g); which convention reproduces the reference protection times
is settled empirically by ``experiments.calibrate_pair_convention``.

Noise acts on the buffer spins only.  The thermal channel attaches, per
buffer spin, jump sigma^- at rate gamma*(1+n) and jump sigma^+ at rate
gamma*n with n the Planck occupation at the spin frequency; its unique
local fixed point is the Gibbs state of (omega/2) sigma_z.  The pure
dephasing channel attaches jump sigma_z at rate gamma_d, which makes the
generator gamma_d (sigma_z rho sigma_z - rho) exactly.  All rates are
homogeneous across buffer spins.  hbar = k_B = 1 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import qstate
from .topology import BufferGraph

THERMAL = "thermal"
DEPHASING = "dephasing"
UNORDERED_ONCE = "unordered_once"
ORDERED_DOUBLE = "ordered_double"

MAX_TOTAL_SPINS = 7


class DimensionOverflowError(ValueError):
    """Cluster would exceed the supported Hilbert-space size."""


@dataclass(frozen=True)
class NoiseSpec:
    """Local noise channel acting on every buffer spin.

    For the thermal channel ``temperature`` and ``gamma`` are required; for
    pure dephasing only ``gamma_d`` is.  ``reference_state`` returns the
    single-spin state the channel drives populations toward, which is what
    the *_vs_thermal metrics compare against: the Gibbs state for the
    thermal channel and the maximally mixed state (its infinite-
    temperature limit) for pure dephasing.
    """

    channel: str = THERMAL
    temperature: float | None = 0.4
    gamma: float = 0.0005
    gamma_d: float = 0.0

    def __post_init__(self):
        if self.channel not in (THERMAL, DEPHASING):
            raise ValueError(f"unknown noise channel {self.channel!r}")
        if self.channel == THERMAL:
            if self.temperature is None or not self.temperature > 0:
                raise ValueError("thermal channel requires temperature > 0")
            if self.gamma < 0 or not math.isfinite(self.gamma):
                raise ValueError("gamma must be finite and >= 0")
        else:
            # The ambient temperature is optional here: the channel itself
            # is temperature-free, but thermal *initial* buffer states
            # still need it.
            if self.temperature is not None and not self.temperature > 0:
                raise ValueError("temperature must be > 0 when given")
            if self.gamma_d < 0 or not math.isfinite(self.gamma_d):
                raise ValueError("gamma_d must be finite and >= 0")

    def reference_state(self, omega: float) -> np.ndarray:
        """Single-spin state the channel drives an isolated spin toward."""
        if self.channel == THERMAL:
            return thermal_state(omega, self.temperature)
        return np.eye(2, dtype=complex) / 2.0


@dataclass(frozen=True)
class LindbladTerm:
    """One jump operator acting on a single site, with its rate.

    ``kind`` is ``minus``, ``plus`` or ``z``; the full-space operator is
    materialized on demand (the dynamics engine applies the term directly
    from this sparse description instead).
    """

    site: int
    kind: str
    rate: float

    def __post_init__(self):
        if self.kind not in ("minus", "plus", "z"):
            raise ValueError(f"unknown jump kind {self.kind!r}")
        if self.rate < 0 or not math.isfinite(self.rate):
            raise ValueError("rate must be finite and >= 0")

    def matrix(self, total_spins: int) -> np.ndarray:
        return qstate.embed(qstate.pauli(self.kind), self.site, total_spins)


@dataclass(frozen=True)
class ClusterSpec:
    """Complete physical description of one simulation target."""

    n_buffer: int
    graph: BufferGraph
    omega: float = 1.0
    g: float = 0.002
    pair_convention: str = UNORDERED_ONCE
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    initial_buffer: str = "thermal"
    initial_central: str = "max_coherent"

    def __post_init__(self):
        if self.n_buffer < 0:
            raise ValueError("n_buffer must be >= 0")
        if self.graph.n_buffer != self.n_buffer:
            raise ValueError(
                f"graph has {self.graph.n_buffer} buffer vertices, spec says {self.n_buffer}"
            )
        if not self.omega > 0:
            raise ValueError("omega must be > 0")
        if self.g < 0:
            raise ValueError("g must be >= 0")
        if self.pair_convention not in (UNORDERED_ONCE, ORDERED_DOUBLE):
            raise ValueError(f"unknown pair convention {self.pair_convention!r}")
        if self.initial_buffer not in ("thermal", "max_coherent"):
            raise ValueError(f"unknown initial_buffer {self.initial_buffer!r}")
        if self.initial_central != "max_coherent":
            raise ValueError("only the maximally coherent central initial state is supported")

    @property
    def n_spins(self) -> int:
        return self.n_buffer + 1

    @property
    def dim(self) -> int:
        return 2**self.n_spins

    def with_(self, **changes) -> "ClusterSpec":
        return replace(self, **changes)

    def interaction_pairs(self) -> list[tuple[int, int]]:
        """Coupled site pairs: central-to-every-buffer plus the graph edges."""
        star = [(1, j) for j in range(2, self.n_buffer + 2)]
        return star + self.graph.sorted_edges()

    def pair_coefficient(self) -> float:
        """Strength multiplying (sx sx + sy sy) for each unordered pair."""
        return self.g if self.pair_convention == UNORDERED_ONCE else 2.0 * self.g

    def to_dict(self) -> dict:
        d = {
            "n_buffer": self.n_buffer,
            "graph": self.graph.to_text(),
            "omega": self.omega,
            "g": self.g,
            "pair_convention": self.pair_convention,
            "noise": {"channel": self.noise.channel},
            "initial_buffer": self.initial_buffer,
            "initial_central": self.initial_central,
        }
        if self.noise.channel == THERMAL:
            d["noise"]["temperature"] = self.noise.temperature
            d["noise"]["gamma"] = self.noise.gamma
        else:
            d["noise"]["gamma_d"] = self.noise.gamma_d
            if self.noise.temperature is not None:
                d["noise"]["temperature"] = self.noise.temperature
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterSpec":
        noise_d = dict(d.get("noise", {}))
        channel = noise_d.get("channel", THERMAL)
        if channel == THERMAL:
            noise = NoiseSpec(
                channel=THERMAL,
                temperature=float(noise_d.get("temperature", 0.4)),
                gamma=float(noise_d.get("gamma", 0.0005)),
            )
        else:
            temp = noise_d.get("temperature")
            noise = NoiseSpec(
                channel=DEPHASING,
                temperature=None if temp is None else float(temp),
                gamma_d=float(noise_d.get("gamma_d", 0.0)),
            )
        graph = d["graph"]
        if isinstance(graph, str):
            graph = BufferGraph.from_text(graph)
        return cls(
            n_buffer=int(d["n_buffer"]),
            graph=graph,
            omega=float(d.get("omega", 1.0)),
            g=float(d.get("g", 0.002)),
            pair_convention=str(d.get("pair_convention", UNORDERED_ONCE)),
            noise=noise,
            initial_buffer=str(d.get("initial_buffer", "thermal")),
            initial_central=str(d.get("initial_central", "max_coherent")),
        )


def planck_n(omega: float, temperature: float) -> float:
    """Mean thermal occupation 1/(exp(omega/T) - 1) at the spin frequency."""
    if math.isinf(temperature):
        raise ValueError("Planck occupation diverges at infinite temperature")
    return 1.0 / math.expm1(omega / temperature)


def thermal_state(omega: float, temperature: float) -> np.ndarray:
    """Single-spin Gibbs state exp(-omega sigma_z / 2T) / Z.

    With sigma_z = diag(1, -1) the |1> state carries the larger weight;
    Z = 2 cosh(omega / 2T).  ``temperature = math.inf`` gives the
    maximally mixed state.
    """
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    if math.isinf(temperature):
        return np.eye(2, dtype=complex) / 2.0
    x = omega / (2.0 * temperature)
    z = 2.0 * math.cosh(x)
    return np.diag([math.exp(-x) / z, math.exp(x) / z]).astype(complex)


def build_hamiltonian(spec: ClusterSpec, max_spins: int = MAX_TOTAL_SPINS) -> np.ndarray:
    """Dense XX central-spin Hamiltonian for the cluster.

    Hermitian and excitation-conserving: it commutes with the total
    sigma_z.  Clusters above ``max_spins`` total spins are rejected.
    """
    n = spec.n_spins
    if n > max_spins:
        raise DimensionOverflowError(f"{n} spins exceeds the {max_spins}-spin limit")
    dim = 2**n
    h = np.zeros((dim, dim), dtype=complex)
    sz = qstate.pauli("z")
    for i in range(1, n + 1):
        h += (spec.omega / 2.0) * qstate.embed(sz, i, n)
    coeff = spec.pair_coefficient()
    if coeff:
        sx, sy = qstate.pauli("x"), qstate.pauli("y")
        for i, j in spec.interaction_pairs():
            h += coeff * (
                qstate.embed(sx, i, n) @ qstate.embed(sx, j, n)
                + qstate.embed(sy, i, n) @ qstate.embed(sy, j, n)
            )
    return h


def build_dissipator_terms(spec: ClusterSpec) -> list[LindbladTerm]:
    """Jump terms of the local noise channel, buffer spins only.

    Thermal: (sigma^-, gamma(1+n)) and (sigma^+, gamma n) per buffer spin.
    Dephasing: (sigma_z, gamma_d) per buffer spin.  The central spin never
    appears.
    """
    terms = []
    if spec.noise.channel == THERMAL:
        n_occ = planck_n(spec.omega, spec.noise.temperature)
        for site in range(2, spec.n_buffer + 2):
            terms.append(LindbladTerm(site, "minus", spec.noise.gamma * (1.0 + n_occ)))
            terms.append(LindbladTerm(site, "plus", spec.noise.gamma * n_occ))
    else:
        for site in range(2, spec.n_buffer + 2):
            terms.append(LindbladTerm(site, "z", spec.noise.gamma_d))
    return terms


def initial_state(spec: ClusterSpec) -> np.ndarray:
    """Initial product state: central |+><+| times the buffer states.

    Buffers start either in the local Gibbs state at the ambient
    temperature (``thermal``) or each in |+><+| (``max_coherent``).
    """
    factors = [qstate.plus_state()]
    if spec.n_buffer:
        if spec.initial_buffer == "max_coherent":
            buf = qstate.plus_state()
        else:
            if spec.noise.temperature is None:
                raise ValueError(
                    "thermal initial buffers need a temperature in the noise spec"
                )
            buf = thermal_state(spec.omega, spec.noise.temperature)
        factors.extend([buf] * spec.n_buffer)
    rho = qstate.kron_all(*factors)
    return qstate.check_density_matrix(rho)


def stationary_central_state(spec: ClusterSpec) -> np.ndarray:
    """Reduced state the central spin relaxes to; the *_vs_thermal reference.

    Thermal channel: the local Gibbs state (the cluster's unique fixed
    point is the global Gibbs state, since the XX interaction commutes
    with the free Hamiltonian).

    Dephasing channel: both the interaction and the sigma_z jumps conserve
    the total magnetization, and the generator mixes every fixed-
    excitation sector to uniformity, so the conserved initial <sum sigma_z>
    ends up shared equally among the N+1 spins.  The central spin starts
    at <sigma_z> = 0; thermal buffers contribute -tanh(omega/2T) each,
    maximally coherent buffers contribute 0.
    """
    if spec.noise.channel == THERMAL:
        return thermal_state(spec.omega, spec.noise.temperature)
    if spec.initial_buffer == "thermal":
        if spec.noise.temperature is None:
            raise ValueError("thermal buffers under dephasing need a temperature")
        z_buffer = -math.tanh(spec.omega / (2.0 * spec.noise.temperature))
    else:
        z_buffer = 0.0
    m = spec.n_buffer * z_buffer / (spec.n_buffer + 1)
    return np.diag([(1.0 + m) / 2.0, (1.0 - m) / 2.0]).astype(complex)


def total_sz(n_spins: int) -> np.ndarray:
    """Total-excitation operator sum_i sigma_z^(i) (dense)."""
    out = np.zeros((2**n_spins, 2**n_spins), dtype=complex)
    sz = qstate.pauli("z")
    for i in range(1, n_spins + 1):
        out += qstate.embed(sz, i, n_spins)
    return out
