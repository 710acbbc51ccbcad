import math

import numpy as np
import pytest

from spinshield import dynamics, metrics, model, qstate
from spinshield.metrics import (
    MetricError,
    MetricName,
    coherence_l1,
    coherence_rel_entropy,
    entropy_bits,
    erasure_cost,
    integrate_heat,
    purity,
    relative_entropy,
    trace_distance,
)
from spinshield.model import ClusterSpec, thermal_state
from spinshield.topology import extreme_geometry


def random_qubit_state(rng):
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def plus():
    return qstate.plus_state()


def test_relative_entropy_self_is_zero():
    rng = np.random.default_rng(1)
    for _ in range(5):
        rho = random_qubit_state(rng)
        assert abs(relative_entropy(rho, rho)) < 1e-10


def test_relative_entropy_pure_vs_mixed():
    assert abs(relative_entropy(plus(), np.eye(2) / 2) - 1.0) < 1e-12


def test_relative_entropy_thermal_example():
    # scalar evaluation of sum p log2(p/q) with p the T=0.4 Gibbs weights
    rho = thermal_state(1.0, 0.4)
    p = np.diag(rho).real
    expected = float((p * np.log2(2.0 * p)).sum())  # q = 1/2
    assert abs(expected - 0.612586) < 1e-6
    got = relative_entropy(rho, np.eye(2) / 2)
    assert abs(got - expected) < 1e-12


def test_relative_entropy_support_violation():
    assert relative_entropy(plus(), np.diag([1.0, 0.0]).astype(complex)) == math.inf


def test_relative_entropy_nonnegative():
    rng = np.random.default_rng(8)
    for _ in range(20):
        a, b = random_qubit_state(rng), random_qubit_state(rng)
        assert relative_entropy(a, b) >= -1e-12


def test_trace_distance_basics():
    rho = random_qubit_state(np.random.default_rng(4))
    assert abs(trace_distance(rho, rho)) < 1e-14
    assert abs(trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) - 1.0) < 1e-14
    assert abs(trace_distance(np.diag([0.6, 0.4]), np.diag([0.5, 0.5])) - 0.1) < 1e-14


def test_trace_distance_properties():
    rng = np.random.default_rng(12)
    for _ in range(20):
        a, b, c = (random_qubit_state(rng) for _ in range(3))
        tab, tbc, tac = trace_distance(a, b), trace_distance(b, c), trace_distance(a, c)
        assert 0.0 <= tab <= 1.0 + 1e-12
        assert abs(tab - trace_distance(b, a)) < 1e-12
        assert tac <= tab + tbc + 1e-12


def test_coherence_l1():
    assert abs(coherence_l1(plus()) - 1.0) < 1e-14
    assert coherence_l1(np.diag([0.3, 0.7])) == 0.0
    rho = np.array([[0.5, 0.25], [0.25, 0.5]], dtype=complex)
    assert abs(coherence_l1(rho) - 0.5) < 1e-14


def test_coherence_rel_entropy():
    assert abs(coherence_rel_entropy(plus()) - 1.0) < 1e-12
    assert abs(coherence_rel_entropy(np.diag([0.3, 0.7]).astype(complex))) < 1e-12
    rho = np.array([[0.5, 0.25], [0.25, 0.5]], dtype=complex)
    # eigenvalues {0.75, 0.25}: C_RE = 1 - H2(0.25)
    h2 = -(0.25 * math.log2(0.25) + 0.75 * math.log2(0.75))
    assert abs(coherence_rel_entropy(rho) - (1.0 - h2)) < 1e-12
    assert abs(coherence_rel_entropy(rho) - 0.188722) < 1e-6


def test_entropy_clipping():
    # an eigenvalue in [-1e-10, 0) is treated as an exact zero; anything
    # more negative is an integrator fault
    slightly_negative = np.diag([1.0 + 5e-11, -5e-11]).astype(complex)
    assert entropy_bits(slightly_negative) > -1e-9
    with pytest.raises(MetricError):
        entropy_bits(np.diag([1.0 + 1e-8, -1e-8]).astype(complex))


def test_coherence_bound_for_qubits():
    rng = np.random.default_rng(21)
    for _ in range(50):
        rho = random_qubit_state(rng)
        assert coherence_rel_entropy(rho) <= coherence_l1(rho) + 1e-10


def test_purity_and_sigma_z():
    assert abs(purity(plus()) - 1.0) < 1e-14
    assert abs(purity(np.eye(2) / 2) - 0.5) < 1e-14
    rho = thermal_state(1.0, 0.4)
    assert abs(metrics.sigma_z_expectation(rho) + math.tanh(1.25)) < 1e-12
    two = np.kron(np.diag([1.0, 0.0]), np.diag([1.0, 0.0])).astype(complex)
    assert abs(metrics.sigma_z_expectation(two) - 2.0) < 1e-14


def test_diagonal_unitary_invariance():
    # all four state measures must be exactly blind to diagonal phases
    rng = np.random.default_rng(33)
    ref = thermal_state(1.0, 0.4)
    for _ in range(20):
        rho = random_qubit_state(rng)
        phase = np.exp(1j * rng.uniform(0, 2 * np.pi))
        u = np.diag([1.0, phase])
        rot = u @ rho @ u.conj().T
        ref_rot = u @ ref @ u.conj().T
        assert abs(relative_entropy(rot, ref_rot) - relative_entropy(rho, ref)) < 1e-12
        assert abs(trace_distance(rot, ref_rot) - trace_distance(rho, ref)) < 1e-12
        assert abs(coherence_l1(rot) - coherence_l1(rho)) < 1e-12
        assert abs(coherence_rel_entropy(rot) - coherence_rel_entropy(rho)) < 1e-12


def test_heat_current_zero_cases():
    spec = ClusterSpec(n_buffer=2, graph=extreme_geometry(2, "maximal"))
    gen = dynamics.Generator(dynamics.system_from_spec(spec), frame="rotating")
    # stationary thermal product
    rho_th = qstate.kron_all(*([thermal_state(1.0, 0.4)] * 3))
    assert abs(metrics.heat_current(1.0, rho_th, gen.rhs, 3)) < 1e-15
    # initial product state: coherent central, thermal buffers
    rho0 = model.initial_state(spec)
    assert abs(metrics.heat_current(1.0, rho0, gen.rhs, 3)) < 1e-15


def test_heat_current_matches_finite_difference():
    spec = ClusterSpec(n_buffer=2, graph=extreme_geometry(2, "maximal"))
    gen = dynamics.Generator(dynamics.system_from_spec(spec), frame="rotating")
    rho = model.initial_state(spec)
    for _ in range(500):
        rho = gen.step_rk4(rho, 0.5)
    dt = 0.5
    j_exact = metrics.heat_current(1.0, rho, gen.rhs, 3)
    before = gen.step_rk4(rho.copy(), -dt)
    after = gen.step_rk4(rho.copy(), dt)
    e = lambda r: (1.0 / 2.0) * (
        qstate.partial_trace(r, {1}, 3)[0, 0] - qstate.partial_trace(r, {1}, 3)[1, 1]
    ).real
    j_fd = (e(after) - e(before)) / (2 * dt)
    assert abs(j_exact - j_fd) < 1e-2 * max(abs(j_exact), 1e-12) + 1e-12


def test_integrate_heat_constant_and_sin():
    times = np.arange(0.0, 100.0, 1.0)
    const = dynamics.TimeSeries(times, {"heat_current": np.full_like(times, 0.3)})
    q = integrate_heat(const).column("heat_integrated")
    assert np.abs(q - 0.3 * times).max() < 1e-12
    dense_t = np.linspace(0.0, 10.0, 2001)
    sin = dynamics.TimeSeries(dense_t, {"heat_current": np.sin(dense_t)})
    q2 = integrate_heat(sin).column("heat_integrated")
    assert np.abs(q2 - (1.0 - np.cos(dense_t))).max() < 1e-4


def test_integrate_heat_requires_column():
    ts = dynamics.TimeSeries(np.array([0.0, 1.0]), {"coh_l1": np.array([1.0, 0.5])})
    with pytest.raises(KeyError):
        integrate_heat(ts)


def test_erasure_cost():
    rho_th = thermal_state(1.0, 0.4)
    value = erasure_cost(1.0, plus(), rho_th)
    assert abs(value - (-0.5 * math.tanh(1.25))) < 1e-12
    assert abs(value - (-0.424142)) < 1e-6
    assert erasure_cost(1.0, rho_th, rho_th) == 0.0
    assert erasure_cost(1.0, plus(), plus()) == 0.0


def test_metric_name_parsing():
    assert MetricName.parse("coh_l1").column == "coh_l1"
    assert MetricName.parse("coh_l1@2,3").sites == (2, 3)
    assert MetricName.parse("coh_l1@2,3").column == "coh_l1@2,3"
    assert MetricName.parse(MetricName("purity")).column == "purity"
    with pytest.raises(MetricError):
        MetricName.parse("negativity")
    with pytest.raises(MetricError):
        MetricName("heat_current", (2,))


def test_multi_site_coherence_observable():
    # buffer-subset coherence from a product of |+> states: 2^k - ... the
    # reduced two-qubit |+><+| x |+><+| has l1 coherence 3
    spec = ClusterSpec(
        n_buffer=2,
        graph=extreme_geometry(2, "empty"),
        noise=model.NoiseSpec(channel="thermal", temperature=0.4, gamma=0.0),
        initial_buffer="max_coherent",
    )
    res = dynamics.evolve(spec, dynamics.IntegratorConfig(t_max=10.0, dt=0.5), ["coh_l1@2,3"])
    assert abs(res.series.column("coh_l1@2,3")[0] - 3.0) < 1e-12
