import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lindlearn.pauli import (
    AXES,
    PauliAxis,
    PauliString,
    ProductStateSpec,
    all_pauli_strings,
    apply_pauli,
    dense_pauli,
    dense_state,
    multiply,
    pauli_product,
    trace_commutator_term,
    trace_dissipator_term,
)

X, Y, Z = AXES


def P(text, n):
    return PauliString.parse(text, n)


def S(text, n):
    return ProductStateSpec.parse(text, n)


# -- strategies


@st.composite
def pauli_strings(draw, n):
    axes = draw(st.lists(st.sampled_from([None, X, Y, Z]), min_size=n, max_size=n))
    return PauliString(n, tuple((s, a) for s, a in enumerate(axes) if a is not None))


@st.composite
def product_states(draw, n):
    fixed = []
    for s in range(n):
        a = draw(st.sampled_from([None, X, Y, Z]))
        if a is not None:
            fixed.append((s, a, draw(st.sampled_from([1, -1]))))
    return ProductStateSpec(n, tuple(fixed))


def dense_commutator(H, rho, O):
    h, r, o = dense_pauli(H), dense_state(rho), dense_pauli(O)
    return np.trace(-1j * (h @ r - r @ h) @ o)


def dense_dissipator(mu, nu, site, rho, O):
    n = O.n_qubits
    sm = dense_pauli(PauliString(n, ((site, mu),)))
    sn = dense_pauli(PauliString(n, ((site, nu),)))
    r, o = dense_state(rho), dense_pauli(O)
    return np.trace((sm @ r @ sn - 0.5 * (sn @ sm @ r + r @ sn @ sm)) @ o)


# -- multiply


def test_multiply_examples():
    assert multiply(X, X) == (1, None)
    assert multiply(X, Y) == (1j, Z)
    assert multiply(Z, Y) == (-1j, X)


@given(st.sampled_from(AXES), st.sampled_from(AXES))
def test_multiply_anticommutes(p, q):
    c1, r1 = multiply(p, q)
    c2, r2 = multiply(q, p)
    assert r1 == r2
    if p != q:
        assert c1 == -c2 and c1 == np.conj(c2)


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(pauli_strings(n), pauli_strings(n))))
def test_pauli_product_matches_dense(pair):
    a, b = pair
    phase, r = pauli_product(a, b)
    assert np.allclose(dense_pauli(a) @ dense_pauli(b), phase * dense_pauli(r))


def test_parse_and_label_round_trip():
    for text in ("X0 Y2", "-Z1", "I"):
        assert P(text, 3).label() == text
    assert S("+X0 -Z2", 3).label() == "+X0 -Z2"
    assert S("mixed", 3).fixed == ()


def test_invalid_strings_rejected():
    with pytest.raises(ValueError):
        PauliString(2, ((0, X), (0, Y)))
    with pytest.raises(ValueError):
        PauliString(2, ((2, X),))
    with pytest.raises(ValueError):
        ProductStateSpec(2, ((0, X, 2),))


# -- apply_pauli


def test_apply_pauli_examples():
    zero = np.array([1, 0], dtype=complex)
    assert np.allclose(apply_pauli(P("X0", 1), zero), [0, 1])
    psi = np.random.default_rng(0).normal(size=4) + 0j
    assert np.allclose(apply_pauli(P("I", 2), psi), psi)
    # Y (x) Z on |00> gives i|10>  (4x4 matrix-vector oracle)
    e00 = np.eye(4)[0]
    out = apply_pauli(P("Y0 Z1", 2), e00)
    assert np.allclose(out, 1j * np.eye(4)[2])
    assert np.allclose(out, np.kron(dense_pauli(P("Y0", 1)), dense_pauli(P("Z0", 1))) @ e00)


def test_apply_pauli_dimension_mismatch():
    with pytest.raises(ValueError):
        apply_pauli(P("X0", 2), np.ones(8))


@given(st.integers(1, 4).flatmap(lambda n: st.tuples(pauli_strings(n), st.integers(0, 2**31))))
def test_apply_pauli_involution_and_norm(args):
    Pw, seed = args
    rng = np.random.default_rng(seed)
    d = 2**Pw.n_qubits
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    once = apply_pauli(Pw, psi)
    assert np.isclose(np.linalg.norm(once), np.linalg.norm(psi))
    assert np.allclose(apply_pauli(Pw, once), psi)
    assert np.allclose(once, dense_pauli(Pw) @ psi)


# -- product states


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(product_states(n), pauli_strings(n))))
def test_expectation_and_expansion_match_dense(args):
    rho, O = args
    r = dense_state(rho)
    assert np.isclose(rho.expectation(O), np.trace(r @ dense_pauli(O)).real)
    d = 2**rho.n_qubits
    rebuilt = sum(c * dense_pauli(R) for c, R in rho.expansion()) / d
    assert np.allclose(rebuilt, r)


# -- closed-form traces: values frozen from 2- and 3-qubit dense oracles


@pytest.mark.parametrize(
    "H, rho, O, n, expected",
    [
        ("X0", "+Z0", "Y0", 2, -2.0),
        ("X0 Y1", "+Z0 +Z1", "Y0 Y1", 2, -2.0),
    ],
)
def test_commutator_frozen_values(H, rho, O, n, expected):
    assert trace_commutator_term(P(H, n), S(rho, n), P(O, n)) == pytest.approx(expected, abs=1e-12)


def test_commutator_disjoint_support_vanishes():
    assert trace_commutator_term(P("X0", 3), S("+Z0", 3), P("Y2", 3)) == 0.0


@pytest.mark.parametrize(
    "mu, nu, site, rho, O, n, expected",
    [
        (X, X, 0, "+Z0", "Z0", 2, -2.0),
        (Z, Z, 0, "+Z0", "Z0", 2, 0.0),
        (X, Y, 2, "+X0 +Y1 +Z2", "X0 Y1 Z2", 3, 2j),
        (Y, X, 2, "+X0 +Y1 +X2", "X0 Y1 Y2", 3, 1.0),
        (X, Z, 1, "+Y1", "Y1", 2, -2j),
    ],
)
def test_dissipator_frozen_values(mu, nu, site, rho, O, n, expected):
    assert trace_dissipator_term(mu, nu, site, S(rho, n), P(O, n)) == pytest.approx(expected, abs=1e-12)


def test_dissipator_outside_support_vanishes():
    assert trace_dissipator_term(X, Y, 2, S("+Z0", 3), P("Z0 X1", 3)) == 0


@given(
    st.integers(1, 3).flatmap(lambda n: st.tuples(pauli_strings(n), product_states(n), pauli_strings(n)))
)
def test_commutator_matches_dense(args):
    H, rho, O = args
    assert abs(trace_commutator_term(H, rho, O) - dense_commutator(H, rho, O)) < 1e-12


@given(
    st.integers(1, 3).flatmap(
        lambda n: st.tuples(
            st.sampled_from(AXES), st.sampled_from(AXES), st.integers(0, n - 1), product_states(n), pauli_strings(n)
        )
    )
)
def test_dissipator_matches_dense(args):
    mu, nu, site, rho, O = args
    assert abs(trace_dissipator_term(mu, nu, site, rho, O) - dense_dissipator(mu, nu, site, rho, O)) < 1e-12


@given(
    st.integers(1, 3).flatmap(lambda n: st.tuples(pauli_strings(n), product_states(n), pauli_strings(n)))
)
def test_commutator_support_rule(args):
    H, rho, O = args
    allowed = set(H.sites) | {s for s, _, _ in rho.fixed}
    if not set(O.sites) <= allowed:
        assert trace_commutator_term(H, rho, O) == 0.0


def test_all_pauli_strings_count():
    assert len(all_pauli_strings(3, (0, 2))) == 15
    assert len(all_pauli_strings(3, (0, 1, 2), max_weight=1)) == 9


def test_axis_parse():
    assert PauliAxis.parse("y") is Y
    assert PauliAxis.parse(3) is Z
