"""Sparse Pauli strings, product-state specifications and analytic traces.

Sites are indexed from 0 and site 0 is the most significant qubit of a dense
state vector, so ``Y`` on site 0 times ``Z`` on site 1 maps ``|00>`` to
``i|10>``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "PauliAxis",
    "PauliString",
    "ProductStateSpec",
    "multiply",
    "apply_pauli",
    "pauli_phases",
    "trace_commutator_term",
    "trace_dissipator_term",
    "dense_pauli",
    "dense_state",
]


class PauliAxis(enum.IntEnum):
    X = 1
    Y = 2
    Z = 3

    @classmethod
    def parse(cls, value) -> "PauliAxis":
        if isinstance(value, PauliAxis):
            return value
        if isinstance(value, str):
            return cls[value.strip().upper()]
        return cls(int(value))

    def __str__(self) -> str:
        return self.name


AXES = (PauliAxis.X, PauliAxis.Y, PauliAxis.Z)


def levi_civita(a: int, b: int, c: int) -> int:
    return int((a - b) * (b - c) * (c - a) / 2)


def multiply(p: PauliAxis, q: PauliAxis) -> tuple[complex, PauliAxis | None]:
    """Single-site product ``sigma_p sigma_q = coefficient * sigma_r``.

    ``r`` is ``None`` for the identity.
    """
    if p == q:
        return 1.0 + 0j, None
    r = PauliAxis(6 - int(p) - int(q))
    return 1j * levi_civita(p, q, r), r


_SINGLE = {
    None: np.eye(2, dtype=complex),
    PauliAxis.X: np.array([[0, 1], [1, 0]], dtype=complex),
    PauliAxis.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    PauliAxis.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    """Pauli word ``sign * prod_k sigma_{axis_k}^{(site_k)}`` on ``n_qubits``."""

    n_qubits: int
    support: tuple[tuple[int, PauliAxis], ...] = ()
    sign: int = 1

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        items = tuple(sorted((int(s), PauliAxis.parse(a)) for s, a in self.support))
        sites = [s for s, _ in items]
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site in support {sites}")
        if any(s < 0 or s >= self.n_qubits for s in sites):
            raise ValueError(f"support {sites} out of range for {self.n_qubits} qubits")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        object.__setattr__(self, "support", items)

    @classmethod
    def from_dict(cls, n_qubits: int, support: Mapping[int, PauliAxis | str], sign: int = 1):
        return cls(n_qubits, tuple(support.items()), sign)

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits)

    @classmethod
    def parse(cls, text: str, n_qubits: int) -> "PauliString":
        """Parse ``"X0 Y2"`` / ``"-Z1"`` / ``"I"`` into a Pauli string."""
        text = text.strip()
        sign = 1
        if text.startswith("-"):
            sign, text = -1, text[1:]
        elif text.startswith("+"):
            text = text[1:]
        support = {}
        for tok in text.replace("*", " ").split():
            if tok.upper() == "I":
                continue
            support[int(tok[1:])] = PauliAxis.parse(tok[0])
        return cls.from_dict(n_qubits, support, sign)

    @property
    def weight(self) -> int:
        return len(self.support)

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.support)

    def as_dict(self) -> dict[int, PauliAxis]:
        return dict(self.support)

    def label(self) -> str:
        body = " ".join(f"{a.name}{s}" for s, a in self.support) or "I"
        return ("-" if self.sign < 0 else "") + body

    def __str__(self) -> str:
        return self.label()

    def __mul__(self, other: "PauliString") -> tuple[complex, "PauliString"]:
        return pauli_product(self, other)


def pauli_product(*strings: PauliString) -> tuple[complex, PauliString]:
    """Ordered product of Pauli strings as ``(phase, unsigned PauliString)``."""
    n = strings[0].n_qubits
    phase = 1.0 + 0j
    acc: dict[int, PauliAxis] = {}
    for p in strings:
        if p.n_qubits != n:
            raise ValueError("qubit count mismatch")
        phase *= p.sign
        for site, axis in p.support:
            cur = acc.get(site)
            if cur is None:
                acc[site] = axis
                continue
            c, r = multiply(cur, axis)
            phase *= c
            if r is None:
                del acc[site]
            else:
                acc[site] = r
    return phase, PauliString.from_dict(n, acc)


def _normalized_trace(*strings: PauliString) -> complex:
    """``2^-n tr(prod strings)``: the phase if the product is the identity, else 0."""
    phase, rest = pauli_product(*strings)
    return phase if rest.weight == 0 else 0.0


@dataclass(frozen=True)
class ProductStateSpec:
    """Product state with Pauli eigenstates on ``fixed`` sites, maximally mixed elsewhere.

    ``fixed`` holds ``(site, axis, sign)`` triples; the site is in the
    ``sign`` eigenstate of ``sigma_axis``.
    """

    n_qubits: int
    fixed: tuple[tuple[int, PauliAxis, int], ...] = field(default=())

    def __post_init__(self):
        items = tuple(sorted((int(s), PauliAxis.parse(a), int(e)) for s, a, e in self.fixed))
        sites = [s for s, _, _ in items]
        if len(set(sites)) != len(sites):
            raise ValueError("repeated site in product state")
        if any(s < 0 or s >= self.n_qubits for s in sites):
            raise ValueError(f"fixed sites {sites} out of range for {self.n_qubits} qubits")
        if any(e not in (1, -1) for _, _, e in items):
            raise ValueError("eigenstate signs must be +1 or -1")
        object.__setattr__(self, "fixed", items)

    @classmethod
    def from_axes(cls, n_qubits: int, axes: Mapping[int, PauliAxis | str], signs: Mapping[int, int] | None = None):
        signs = signs or {}
        return cls(n_qubits, tuple((s, PauliAxis.parse(a), signs.get(s, 1)) for s, a in axes.items()))

    @classmethod
    def parse(cls, text: str, n_qubits: int) -> "ProductStateSpec":
        """Parse ``"+X0 -Z3"``; an empty string or ``"mixed"`` is fully mixed."""
        fixed = []
        for tok in text.replace(",", " ").split():
            if tok.lower() == "mixed":
                continue
            sign = -1 if tok[0] == "-" else 1
            tok = tok.lstrip("+-")
            fixed.append((int(tok[1:]), PauliAxis.parse(tok[0]), sign))
        return cls(n_qubits, tuple(fixed))

    def label(self) -> str:
        return " ".join(f"{'+' if e > 0 else '-'}{a.name}{s}" for s, a, e in self.fixed) or "mixed"

    def __str__(self) -> str:
        return self.label()

    def expansion(self) -> list[tuple[float, PauliString]]:
        """Terms ``(c, R)`` with ``rho = 2^-n sum c R``."""
        out = []
        for r in range(len(self.fixed) + 1):
            for subset in itertools.combinations(self.fixed, r):
                c = float(np.prod([e for _, _, e in subset])) if subset else 1.0
                out.append((c, PauliString(self.n_qubits, tuple((s, a) for s, a, _ in subset))))
        return out

    def expectation(self, O: PauliString) -> float:
        """``tr(rho O)`` evaluated analytically."""
        if O.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        fixed = {s: (a, e) for s, a, e in self.fixed}
        val = O.sign
        for site, axis in O.support:
            if site not in fixed or fixed[site][0] != axis:
                return 0.0
            val *= fixed[site][1]
        return float(val)


def trace_commutator_term(H_term: PauliString, rho: ProductStateSpec, O: PauliString) -> float:
    """``-i tr([H_term, rho] O)`` for a Pauli word ``H_term`` and product state ``rho``."""
    if not (H_term.n_qubits == rho.n_qubits == O.n_qubits):
        raise ValueError("qubit count mismatch")
    total = 0j
    for c, R in rho.expansion():
        total += c * (_normalized_trace(H_term, R, O) - _normalized_trace(R, H_term, O))
    val = -1j * total
    return float(val.real)


def trace_dissipator_term(
    mu: PauliAxis, nu: PauliAxis, site: int, rho: ProductStateSpec, O: PauliString
) -> complex:
    """``tr((s_mu rho s_nu - 1/2 {s_nu s_mu, rho}) O)`` with both Paulis on ``site``."""
    if rho.n_qubits != O.n_qubits:
        raise ValueError("qubit count mismatch")
    n = O.n_qubits
    smu = PauliString(n, ((site, PauliAxis.parse(mu)),))
    snu = PauliString(n, ((site, PauliAxis.parse(nu)),))
    total = 0j
    for c, R in rho.expansion():
        total += c * (
            _normalized_trace(smu, R, snu, O)
            - 0.5 * _normalized_trace(snu, smu, R, O)
            - 0.5 * _normalized_trace(R, snu, smu, O)
        )
    return complex(total)


def _index_bits(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    return (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1


def pauli_phases(P: PauliString) -> tuple[np.ndarray, np.ndarray]:
    """Flat-index action of ``P``: ``(P psi)[k] = phase[k] * psi[perm[k]]``."""
    n = P.n_qubits
    bits = _index_bits(n)
    mask = 0
    for site, axis in P.support:
        if axis in (PauliAxis.X, PauliAxis.Y):
            mask |= 1 << (n - 1 - site)
    perm = np.arange(2**n) ^ mask
    phase = np.full(2**n, complex(P.sign))
    src_bits = bits[perm]
    for site, axis in P.support:
        b = src_bits[:, site]
        if axis is PauliAxis.Z:
            phase *= 1 - 2 * b
        elif axis is PauliAxis.Y:
            # Y|0> = i|1>, Y|1> = -i|0>
            phase *= np.where(b == 0, 1j, -1j)
    return perm, phase


def apply_pauli(P: PauliString, psi: np.ndarray) -> np.ndarray:
    """Return ``P|psi>``; ``psi`` may carry leading batch axes."""
    psi = np.asarray(psi)
    if psi.shape[-1] != 2**P.n_qubits:
        raise ValueError(f"state dimension {psi.shape[-1]} does not match {P.n_qubits} qubits")
    perm, phase = pauli_phases(P)
    return phase * psi[..., perm]


def dense_pauli(P: PauliString) -> np.ndarray:
    ops = P.as_dict()
    out = np.array([[1.0 + 0j]])
    for site in range(P.n_qubits):
        out = np.kron(out, _SINGLE[ops.get(site)])
    return P.sign * out


def dense_state(spec: ProductStateSpec) -> np.ndarray:
    fixed = {s: (a, e) for s, a, e in spec.fixed}
    out = np.array([[1.0 + 0j]])
    for site in range(spec.n_qubits):
        if site in fixed:
            a, e = fixed[site]
            factor = 0.5 * (np.eye(2) + e * _SINGLE[a])
        else:
            factor = 0.5 * np.eye(2, dtype=complex)
        out = np.kron(out, factor)
    return out


def eigenstate(axis: PauliAxis, sign: int) -> np.ndarray:
    """Normalized single-qubit eigenvector of ``sigma_axis`` with eigenvalue ``sign``."""
    vals, vecs = np.linalg.eigh(_SINGLE[PauliAxis.parse(axis)])
    v = vecs[:, int(np.argmin(np.abs(vals - sign)))]
    # fix the global phase so the first nonzero amplitude is real positive
    k = int(np.argmax(np.abs(v) > 1e-12))
    return v * (abs(v[k]) / v[k])


def all_pauli_strings(n_qubits: int, sites: Iterable[int], max_weight: int | None = None) -> list[PauliString]:
    """All non-identity Pauli words supported on a subset of ``sites``."""
    sites = list(sites)
    max_weight = len(sites) if max_weight is None else max_weight
    out = []
    for w in range(1, max_weight + 1):
        for subset in itertools.combinations(sites, w):
            for axes in itertools.product(AXES, repeat=w):
                out.append(PauliString(n_qubits, tuple(zip(subset, axes))))
    return out
