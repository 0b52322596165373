import io
import math

import numpy as np
import pytest
from scipy.linalg import expm

from lindlearn.exact import ExactPropagator
from lindlearn.pauli import PauliString, ProductStateSpec, apply_pauli, dense_pauli
from lindlearn.rng import derive_rng
from lindlearn.simulator import (
    LindbladModel,
    NoiseRealization,
    SimConfig,
    TimeTrace,
    apply_amplitude_damping,
    apply_markovian_dephasing,
    apply_measurement_noise,
    dephasing_angle_variance,
    evolve_and_measure,
    evolve_and_measure_many,
    read_traces_csv,
    sample_initial_state,
    trotter_step,
    write_traces_csv,
)


def P(text, n):
    return PauliString.parse(text, n)


def S(text, n):
    return ProductStateSpec.parse(text, n)


def expval(psi, O):
    return float(np.real(np.vdot(psi, apply_pauli(O, psi))))


def dense_h(model):
    d = 2**model.n_qubits
    H = np.zeros((d, d), dtype=complex)
    for c, Pw in model.hamiltonian_terms():
        H += c * dense_pauli(Pw)
    return H


# -- model


def test_model_validation():
    with pytest.raises(ValueError):
        LindbladModel(2, ((0, 0),))
    with pytest.raises(ValueError):
        LindbladModel(2, ((0, 1), (1, 0)))
    with pytest.raises(ValueError):
        LindbladModel(2, ((0, 1),), t1=(1.0,))
    # textbook T2 <= 2 T1 is not enforced
    m = LindbladModel(1, t1=(10.0,), t2=(100.0,))
    assert m.t2 == (100.0,)


def test_khz_conversion():
    m = LindbladModel.from_khz(2, [(0, 1)], [1.0], [0.0, 1.0])
    assert m.coupling[0] == pytest.approx(2 * math.pi * 1e-3)


def test_static_shift_std():
    m = LindbladModel(1, t2star=(150.0,))
    assert m.static_shift_std[0] == pytest.approx(math.sqrt(2) / 150.0)
    r = NoiseRealization.draw(LindbladModel(1), np.random.default_rng(0))
    assert r.static_shifts[0] == 0.0


# -- initial states


def test_sample_initial_state_fixed():
    rng = np.random.default_rng(0)
    psi = sample_initial_state(S("+X0 -Y1 +Z2", 3), rng)
    assert np.isclose(np.linalg.norm(psi), 1.0)
    assert np.allclose(psi, sample_initial_state(S("+X0 -Y1 +Z2", 3), rng))
    assert expval(psi, P("X0", 3)) == pytest.approx(1.0)
    assert expval(psi, P("Y1", 3)) == pytest.approx(-1.0)
    assert expval(psi, P("Z2", 3)) == pytest.approx(1.0)


def test_sample_initial_state_mixed_symmetry():
    rng = np.random.default_rng(1)
    n = 10
    vals = np.array([[expval(psi, P(f"Z{j}", n)) for j in range(n)] for psi in (sample_initial_state(S("", n), rng) for _ in range(1000))])
    assert np.all(np.abs(vals.mean(axis=0)) < 4 / math.sqrt(1000))


def test_sample_initial_state_partially_fixed():
    rng = np.random.default_rng(2)
    for _ in range(20):
        psi = sample_initial_state(S("+X0", 3), rng)
        assert expval(psi, P("X0", 3)) == pytest.approx(1.0)


# -- unitary step


def test_trotter_zero_model_is_identity():
    rng = np.random.default_rng(0)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    assert np.allclose(trotter_step(psi, LindbladModel(3), None, 0.1), psi)


def test_trotter_single_qubit_rotation():
    m = LindbladModel(1, frequency=(2 * math.pi,))
    plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
    out = trotter_step(plus, m, None, 0.25)
    assert abs(expval(out, P("X0", 1)) - math.cos(2 * math.pi * 0.25)) < 1e-10


def test_trotter_xx_only_matches_expm():
    m = LindbladModel(2, ((0, 1),), (0.7,))
    rng = np.random.default_rng(3)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    dt = 1e-3
    out = trotter_step(psi, m, None, dt)
    ref = expm(-1j * dense_h(m) * dt) @ psi
    assert abs(np.vdot(ref, out)) ** 2 >= 1 - 1e-8


def _trotter_error(model, psi, t, steps):
    dt = t / steps
    out = psi
    for _ in range(steps):
        out = trotter_step(out, model, None, dt)
    return np.linalg.norm(out - expm(-1j * dense_h(model) * t) @ psi)


def test_trotter_second_order_convergence():
    m = LindbladModel(3, ((0, 1), (1, 2)), (0.9, -0.6), (0.5, -0.3, 0.8))
    rng = np.random.default_rng(4)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    e1 = _trotter_error(m, psi, 1.0, 20)
    e2 = _trotter_error(m, psi, 1.0, 40)
    assert 3.2 <= e1 / e2 <= 4.8


def test_norm_and_energy_conserved():
    m = LindbladModel(3, ((0, 1), (1, 2)), (0.9, -0.6), (0.5, -0.3, 0.8))
    rng = np.random.default_rng(5)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    H = dense_h(m)
    e0 = np.vdot(psi, H @ psi).real
    dt, steps = 0.01, 200
    for _ in range(steps):
        psi = trotter_step(psi, m, None, dt)
        assert abs(np.linalg.norm(psi) - 1) < 1e-10
    assert abs(np.vdot(psi, H @ psi).real - e0) < 10 * dt**2 * dt * steps


# -- noise steps


def test_dephasing_and_damping_off_leave_state():
    rng = np.random.default_rng(0)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    m = LindbladModel(2)
    assert np.allclose(apply_markovian_dephasing(psi, m, 0.1, rng), psi)
    assert np.allclose(apply_amplitude_damping(psi, m, 0.1, rng), psi)


def test_damping_ground_state_unchanged():
    m = LindbladModel(2, t1=(5.0, 7.0))
    psi = np.eye(4, dtype=complex)[0]
    assert np.allclose(apply_amplitude_damping(psi, m, 0.3, np.random.default_rng(0)), psi)


def test_dephasing_angle_variance_sampler():
    rng = np.random.default_rng(6)
    dt, t2 = 0.01, 50.0
    var = dephasing_angle_variance(t2, dt, "half_angle")
    assert var == pytest.approx(4 * dt / t2)
    draws = rng.normal(size=100_000) * math.sqrt(var)
    assert abs(draws.var() / var - 1) < 0.05


@pytest.mark.parametrize("convention", ["calibrated", "half_angle", "full_angle"])
def test_dephasing_rate_matches_exact_oracle(convention):
    t2 = 20.0
    m = LindbladModel(1, t2=(t2,))
    times = np.linspace(2.0, 20.0, 10)
    cfg = SimConfig(dt=0.05, n_trajectories=4000, noise_mode="none", master_seed=7, dephasing_convention=convention)
    tr = evolve_and_measure(m, S("+X0", 1), P("X0", 1), times, cfg)
    ref = ExactPropagator(m, convention).expectations(S("+X0", 1), [P("X0", 1)], times)[0]
    assert np.all(np.abs(tr.means - ref) <= 4 * tr.std_errors + 1e-12)
    if convention == "calibrated":
        assert np.allclose(ref, np.exp(-times / t2))


def test_amplitude_damping_closed_form():
    t1 = 10.0
    m = LindbladModel(1, t1=(t1,))
    times = np.linspace(1.0, 20.0, 8)
    cfg = SimConfig(dt=0.02, n_trajectories=2000, noise_mode="none", master_seed=8)
    tr = evolve_and_measure(m, S("-Z0", 1), P("Z0", 1), times, cfg)
    ref = 1 - 2 * np.exp(-times / t1)
    assert np.all(np.abs(tr.means - ref) <= 3 * tr.std_errors)


def test_quasi_static_gaussian_decay():
    t2s = 5.0
    m = LindbladModel(1, t2star=(t2s,))
    times = np.linspace(0.5, 8.0, 8)
    cfg = SimConfig(dt=0.05, n_trajectories=2000, noise_mode="none", master_seed=9)
    tr = evolve_and_measure(m, S("+X0", 1), P("X0", 1), times, cfg)
    ref = np.exp(-(times**2) / t2s**2)
    assert np.all(np.abs(tr.means - ref) <= 3 * tr.std_errors + 1e-12)


# -- ensembles


def test_constant_trace_without_dynamics():
    tr = evolve_and_measure(LindbladModel(2), S("+Z0", 2), P("Z0", 2), [0.1, 0.5, 1.0], SimConfig(noise_mode="none", n_trajectories=5))
    assert np.allclose(tr.means, 1.0)


def test_determinism_independent_of_chunks_and_threads():
    m = LindbladModel(3, ((0, 1), (1, 2)), (0.9, -0.6), (0.5, -0.3, 0.8), (30.0,) * 3, (40.0,) * 3, (50.0,) * 3)
    times = [0.2, 0.7, 1.5]
    base = SimConfig(n_trajectories=37, noise_mode="gaussian", noise_level=1e-3, master_seed=11)
    a = evolve_and_measure(m, S("+X0 +Y1", 3), P("X0 Y1", 3), times, base)
    b = evolve_and_measure(m, S("+X0 +Y1", 3), P("X0 Y1", 3), times, SimConfig(**{**base.__dict__, "chunk_size": 5, "n_workers": 3}))
    assert np.array_equal(a.means, b.means)
    assert np.array_equal(a.std_errors, b.std_errors)


def test_reference_row_is_noise_free():
    m = LindbladModel(2, ((0, 1),), (0.5,))
    cfg = SimConfig(n_trajectories=50, noise_level=0.1, master_seed=1)
    tr = evolve_and_measure_many(m, S("+X0", 2), [P("X0", 2)], [0.1, 0.2], cfg, reference=True)[0]
    assert tr.has_reference and tr.times[0] == 0.0
    assert tr.means[0] == pytest.approx(1.0)
    f0, t, y = tr.split_reference()
    assert f0 == pytest.approx(1.0) and len(t) == 2


def test_measurement_noise_modes():
    rng = derive_rng(0, "noise")
    means = np.full(20000, 0.2)
    g = apply_measurement_noise(means, "gaussian", 0.1, rng)
    assert abs(g.std() - 0.1) < 0.005
    s = apply_measurement_noise(means[:10], "shots", 1000, rng)
    assert np.all(np.abs(s) <= 1)
    assert np.array_equal(apply_measurement_noise(means, "none", 0.0, rng), means)


def test_dt_limit_enforced():
    m = LindbladModel(1, t1=(1.0,))
    with pytest.raises(ValueError):
        SimConfig(dt=0.1).resolve_dt(m, [1.0])
    assert SimConfig().resolve_dt(m, [0.05]) == pytest.approx(0.001)


def test_trace_validation_and_csv_round_trip():
    with pytest.raises(ValueError):
        TimeTrace(P("X0", 1), S("+X0", 1), [0.2, 0.1], [0, 0], [0, 0])
    tr = TimeTrace(P("X0 Z1", 2), S("+X0 -Z1", 2), [0.1, 0.3], [0.5, -1 / 3], [0.01, 0.02], "gaussian", 1e-3, 42)
    buf = io.StringIO()
    write_traces_csv([tr], buf)
    back = read_traces_csv(buf.getvalue(), 2)[0]
    assert back.key == tr.key
    assert np.array_equal(back.means, tr.means) and back.noise_level == 1e-3 and back.seed == 42
