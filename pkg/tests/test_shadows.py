import io
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from lindlearn.exact import PauliLindbladian, dissipator_from_rates
from lindlearn.pauli import AXES, PauliString, all_pauli_strings
from lindlearn.shadows import (
    DenseChannel,
    DepolarizingChannel,
    IdentityChannel,
    ShadowRecord,
    TrajectoryChannel,
    estimate_overlaps,
    estimator_value,
    estimator_values,
    exact_overlap,
    median_of_means,
    run_round,
    run_rounds,
    sample_counts,
    write_overlaps_csv,
)
from lindlearn.simulator import LindbladModel, SimConfig

X, Y, Z = (int(a) for a in AXES)


def P(text, n):
    return PauliString.parse(text, n)


# -- rounds


def test_identity_channel_matched_bases_return_preparation():
    rng = np.random.default_rng(0)
    for _ in range(50):
        rec = run_round(IdentityChannel(3), rng)
        for b, s, e, m in zip(rec.B, rec.S, rec.E, rec.M):
            if b == s:
                assert m == e


def test_fully_depolarizing_outcomes_uniform():
    B, S, E, M = run_rounds(DepolarizingChannel(2, 1.0), 20_000, np.random.default_rng(1))
    for j in range(2):
        counts = [np.sum(M[:, j] == 1), np.sum(M[:, j] == -1)]
        assert chisquare(counts).pvalue > 1e-3
    assert abs(np.mean((M[:, 0] == E[:, 0])[S[:, 0] == B[:, 0]]) - 0.5) < 0.02


def test_record_validation():
    with pytest.raises(ValueError):
        ShadowRecord((1,), (1, 2), (1,), (1,))


# -- estimator


def test_estimator_examples():
    Pa, Pb = P("X0", 2), P("Z1", 2)
    rec = ShadowRecord((X, Z), (Y, Z), (1, 1), (1, -1))
    assert estimator_value(rec, Pa, Pb) == 9.0
    assert estimator_value(rec, Pa, Pb, normalization=0.5) == pytest.approx(4.5)
    mixed = ShadowRecord((X, Z), (Y, Z), (1, 1), (-1, -1))
    assert estimator_value(mixed, Pa, Pb, normalization=0.5) == pytest.approx(-4.5)
    # basis misses P_a's support
    assert estimator_value(ShadowRecord((Y, Z), (Y, Z), (1, 1), (1, 1)), Pa, Pb) == 0.0
    # sign of the Pauli strings enters the estimator
    assert estimator_value(rec, P("-X0", 2), Pb) == -9.0


def test_estimator_vectorised_matches_scalar():
    rng = np.random.default_rng(2)
    B, S, E, M = run_rounds(DepolarizingChannel(3, 0.3), 500, rng)
    Pa, Pb = P("X0 Z2", 3), P("Y1", 3)
    vec = estimator_values(B, S, E, M, Pa, Pb)
    for r in range(0, 500, 37):
        rec = ShadowRecord(tuple(B[r]), tuple(S[r]), tuple(E[r]), tuple(M[r]))
        assert vec[r] == estimator_value(rec, Pa, Pb)


def test_nonzero_frequency_is_three_to_minus_weight():
    rng = np.random.default_rng(3)
    R = 200_000
    B, S, E, M = run_rounds(IdentityChannel(3), R, rng)
    for Pa, Pb in ((P("X0", 3), P("Z1", 3)), (P("X0 Y1", 3), P("Z2", 3))):
        freq = np.mean(estimator_values(B, S, E, M, Pa, Pb) != 0)
        p = 3.0 ** -(Pa.weight + Pb.weight)
        assert abs(freq - p) <= 4 * math.sqrt(p * (1 - p) / R)


# -- median of means


def test_median_of_means():
    assert median_of_means([0.7] * 20, 4) == pytest.approx(0.7)
    vals = np.zeros(25)
    vals[:5] = 1e6  # one corrupted group of five
    assert median_of_means(vals, 5) == 0.0
    with pytest.raises(ValueError):
        median_of_means([1.0], 2)


def test_sample_counts():
    assert sample_counts(2, 0.1, 0.05, 6, 6) == (3600, math.ceil(2 * math.log(36 / 0.05)))
    with pytest.raises(ValueError):
        sample_counts(2, 0.0, 0.05, 1, 1)


# -- overlaps


def test_identity_overlaps_are_kronecker_deltas():
    paulis = all_pauli_strings(2, (0, 1), max_weight=1)
    est = estimate_overlaps(IdentityChannel(2), paulis, paulis, 0.1, 0.05, rng=4)
    for e in est:
        assert abs(e.value - (1.0 if e.P_a == e.P_b else 0.0)) <= 0.1


def test_overlap_input_checks():
    with pytest.raises(ValueError):
        estimate_overlaps(IdentityChannel(3), [P("X0 Y1 Z2", 3)], [P("X0 Y1", 3)], 0.1, 0.05)
    with pytest.raises(ValueError):
        estimate_overlaps(IdentityChannel(1), [P("Y0", 1)], [P("X0", 1)], 0.1, 0.05, axes=(AXES[0], AXES[2]))


def test_dense_channel_identity_overlaps():
    ch = DenseChannel(1, np.eye(4))
    assert exact_overlap(ch.superop, P("X0", 1), P("X0", 1)) == pytest.approx(1.0)
    assert exact_overlap(ch.superop, P("X0", 1), P("Y0", 1)) == 0.0


def test_amplitude_damping_overlap():
    t1, t = 10.0, 4.0
    lind = PauliLindbladian(1, [], {0: dissipator_from_rates(1.0 / t1)})
    ch = DenseChannel.from_lindbladian(lind, t)
    # closed forms: Z -> e^{-t/T1} Z, X -> e^{-t/2T1} X
    assert exact_overlap(ch.superop, P("Z0", 1), P("Z0", 1)) == pytest.approx(math.exp(-t / t1))
    assert exact_overlap(ch.superop, P("X0", 1), P("X0", 1)) == pytest.approx(math.exp(-t / (2 * t1)))
    est = estimate_overlaps(ch, [P("X0", 1), P("Z0", 1)], [P("X0", 1), P("Z0", 1)], 0.05, 0.05, rng=5)
    for e in est:
        assert abs(e.value - exact_overlap(ch.superop, e.P_a, e.P_b)) <= 0.05


def test_estimator_unbiased_on_random_channel():
    rng = np.random.default_rng(6)
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    H = [(float(rng.normal()), w) for w in all_pauli_strings(2, (0, 1), max_weight=2)]
    lind = PauliLindbladian(2, H, {0: 0.2 * A @ A.conj().T})
    ch = DenseChannel.from_lindbladian(lind, 0.3)
    B, S, E, M = run_rounds(ch, 400_000, rng)
    for Pa, Pb in ((P("X0", 2), P("Y0", 2)), (P("Z0 X1", 2), P("Y1", 2)), (P("Y1", 2), P("X0 Z1", 2))):
        vals = estimator_values(B, S, E, M, Pa, Pb)
        se = vals.std() / math.sqrt(len(vals))
        assert abs(vals.mean() - exact_overlap(ch.superop, Pa, Pb)) <= 4 * se


def test_trajectory_channel_matches_dense():
    m = LindbladModel(1, frequency=(1.3,), t1=(8.0,))
    t = 1.0
    cfg = SimConfig(dt=0.01, noise_mode="none", master_seed=3)
    traj = TrajectoryChannel(m, t, cfg)
    dense = DenseChannel.from_lindbladian(m, t)
    Pa, Pb = P("Y0", 1), P("X0", 1)
    rng = np.random.default_rng(7)
    B, S, E, M = run_rounds(traj, 20_000, rng)
    vals = estimator_values(B, S, E, M, Pa, Pb)
    se = vals.std() / math.sqrt(len(vals))
    assert abs(vals.mean() - exact_overlap(dense.superop, Pa, Pb)) <= 4 * se


def test_overlaps_csv():
    est = estimate_overlaps(IdentityChannel(1), [P("X0", 1)], [P("X0", 1)], 0.3, 0.1, rng=0)
    buf = io.StringIO()
    write_overlaps_csv(est, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "pa,pb,estimate,epsilon,delta,samples" and lines[1].startswith("X0,X0,")
