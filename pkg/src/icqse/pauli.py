"""Symbolic N-qubit Pauli algebra in the symplectic (x-mask, z-mask) encoding.

Qubit ``q`` lives in bit ``q`` of both masks.  A letter is encoded as
``X = (1, 0)``, ``Y = (1, 1)``, ``Z = (0, 1)`` and always denotes the Hermitian
single-qubit Pauli matrix, so ``Y = i X Z``.  A :class:`PauliString` carries an
extra global phase ``i**phase_exp``; :class:`PauliSum` keys are phase free and
fold phases into the complex coefficients.

Masks are plain Python integers, so there is no limit on the qubit count for
the symbolic layer (the expansion of ``H**3`` at 80 qubits runs through the
same code as the 4-qubit unit tests).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import ConfigError, DimensionError, ResourceError

COLLECT_THRESHOLD = 1e-12
DENSE_MAX_QUBITS = 12
APPLY_MAX_QUBITS = 24

_PHASES = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}
_TOKEN = re.compile(r"^([IXYZ])(\d+)$")

_SINGLE = {
    (0, 0): np.eye(2, dtype=complex),
    (1, 0): np.array([[0, 1], [1, 0]], dtype=complex),
    (1, 1): np.array([[0, -1j], [1j, 0]], dtype=complex),
    (0, 1): np.array([[1, 0], [0, -1]], dtype=complex),
}


def _product_phase(x1: int, z1: int, x2: int, z2: int) -> int:
    # letter(x,z) = i^{|x&z|} X^x Z^z and Z^z X^x = (-1)^{|x&z|} X^x Z^z
    x = x1 ^ x2
    z = z1 ^ z2
    return ((x1 & z1).bit_count() + (x2 & z2).bit_count()
            - (x & z).bit_count() + 2 * (z1 & x2).bit_count()) & 3


@dataclass(frozen=True, slots=True)
class PauliString:
    """``i**phase_exp`` times a tensor product of Hermitian Paulis."""

    n_qubits: int
    x_mask: int = 0
    z_mask: int = 0
    phase_exp: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ConfigError(f"n_qubits must be positive, got {self.n_qubits}")
        limit = 1 << self.n_qubits
        if not (0 <= self.x_mask < limit and 0 <= self.z_mask < limit):
            raise ConfigError("mask has bits beyond n_qubits")
        object.__setattr__(self, "phase_exp", self.phase_exp & 3)

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits)

    @classmethod
    def single(cls, n_qubits: int, letter: str, qubit: int) -> "PauliString":
        if not 0 <= qubit < n_qubits:
            raise ConfigError(f"qubit {qubit} out of range for {n_qubits} qubits")
        x, z = _LETTER_BITS[letter.upper()]
        return cls(n_qubits, x << qubit, z << qubit)

    @classmethod
    def from_ops(cls, n_qubits: int, ops: Iterable[tuple[str, int]]) -> "PauliString":
        """Build from ``(letter, 0-based qubit)`` pairs; repeated sites multiply."""
        out = cls.identity(n_qubits)
        for letter, q in ops:
            out = out * cls.single(n_qubits, letter, q % n_qubits)
        return out

    @classmethod
    def from_label(cls, label: str, n_qubits: int) -> "PauliString":
        """Parse the textual format, e.g. ``"Z5 X6 Z7"`` (1-based qubit indices).

        ``"I"`` or an empty string gives the identity.
        """
        tokens = label.split()
        if tokens in ([], ["I"]):
            return cls.identity(n_qubits)
        ops = []
        for tok in tokens:
            m = _TOKEN.match(tok)
            if m is None:
                raise ConfigError(f"bad Pauli token {tok!r} in {label!r}")
            q = int(m.group(2)) - 1
            if not 0 <= q < n_qubits:
                raise ConfigError(f"qubit index {q + 1} out of range 1..{n_qubits}")
            if m.group(1) != "I":
                ops.append((m.group(1), q))
        if len({q for _, q in ops}) != len(ops):
            raise ConfigError(f"repeated qubit in {label!r}")
        return cls.from_ops(n_qubits, ops)

    @property
    def key(self) -> tuple[int, int]:
        return (self.x_mask, self.z_mask)

    @property
    def support_mask(self) -> int:
        return self.x_mask | self.z_mask

    @property
    def weight(self) -> int:
        return self.support_mask.bit_count()

    def support(self) -> list[int]:
        m = self.support_mask
        return [q for q in range(self.n_qubits) if (m >> q) & 1]

    def letter(self, qubit: int) -> str:
        return _BITS_LETTER[((self.x_mask >> qubit) & 1, (self.z_mask >> qubit) & 1)]

    @property
    def is_hermitian(self) -> bool:
        return self.phase_exp % 2 == 0

    @property
    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    @property
    def phase(self) -> complex:
        return _PHASES[self.phase_exp]

    def __mul__(self, other: "PauliString") -> "PauliString":
        return mul(self, other)

    def commutes(self, other: "PauliString") -> bool:
        _check_dims(self.n_qubits, other.n_qubits)
        s = (self.x_mask & other.z_mask).bit_count() + (other.x_mask & self.z_mask).bit_count()
        return s % 2 == 0

    def dagger(self) -> "PauliString":
        return PauliString(self.n_qubits, self.x_mask, self.z_mask, -self.phase_exp)

    def permuted(self, perm: Iterable[int]) -> "PauliString":
        """Relabel qubit ``q`` as ``perm[q]``."""
        x = z = 0
        for q, p in enumerate(perm):
            x |= ((self.x_mask >> q) & 1) << p
            z |= ((self.z_mask >> q) & 1) << p
        return PauliString(self.n_qubits, x, z, self.phase_exp)

    def to_label(self) -> str:
        """Phase-free textual form with 1-based indices."""
        if self.is_identity:
            return "I"
        return " ".join(f"{self.letter(q)}{q + 1}" for q in self.support())

    def __str__(self) -> str:
        prefix = ("", "i*", "-", "-i*")[self.phase_exp]
        return prefix + self.to_label()


def mul(p: PauliString, q: PauliString) -> PauliString:
    """Matrix product ``p @ q`` including the accumulated phase."""
    _check_dims(p.n_qubits, q.n_qubits)
    e = p.phase_exp + q.phase_exp + _product_phase(p.x_mask, p.z_mask, q.x_mask, q.z_mask)
    return PauliString(p.n_qubits, p.x_mask ^ q.x_mask, p.z_mask ^ q.z_mask, e)


def _check_dims(n1: int, n2: int) -> None:
    if n1 != n2:
        raise DimensionError(f"qubit count mismatch: {n1} vs {n2}")


def random_pauli(n_qubits: int, weight: int, rng) -> PauliString:
    """Uniformly random Pauli string of exactly ``weight`` non-identity letters.

    ``rng`` is a seed or a :class:`numpy.random.Generator`.
    """
    if not 1 <= weight <= n_qubits:
        raise ConfigError(f"weight must be in [1, {n_qubits}], got {weight}")
    rng = np.random.default_rng(rng)
    sites = rng.choice(n_qubits, size=weight, replace=False)
    letters = rng.integers(0, 3, size=weight)
    return PauliString.from_ops(n_qubits, [("XYZ"[l], int(s)) for s, l in zip(sites, letters)])


class PauliSum:
    """Sparse complex linear combination of phase-free Pauli strings.

    Instances are treated as immutable.  ``terms`` maps ``(x_mask, z_mask)`` to
    the coefficient and is kept sorted by key so that iteration order and any
    derived output is reproducible.
    """

    __slots__ = ("n_qubits", "_terms")

    def __init__(self, n_qubits: int, terms: Mapping[tuple[int, int], complex] | None = None,
                 threshold: float = COLLECT_THRESHOLD):
        if n_qubits < 1:
            raise ConfigError(f"n_qubits must be positive, got {n_qubits}")
        self.n_qubits = n_qubits
        items = {} if terms is None else terms
        self._terms = {k: complex(items[k]) for k in sorted(items) if abs(items[k]) >= threshold}

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n_qubits, {(0, 0): coeff})

    @classmethod
    def from_pauli(cls, p: PauliString, coeff: complex = 1.0) -> "PauliSum":
        return cls(p.n_qubits, {p.key: coeff * p.phase})

    @classmethod
    def from_list(cls, n_qubits: int, items: Iterable[tuple[complex, PauliString]]) -> "PauliSum":
        acc: dict[tuple[int, int], complex] = {}
        for c, p in items:
            _check_dims(n_qubits, p.n_qubits)
            acc[p.key] = acc.get(p.key, 0.0) + c * p.phase
        return cls(n_qubits, acc)

    @classmethod
    def from_text(cls, text: str, n_qubits: int) -> "PauliSum":
        """Parse ``"0.5 Z1 Z2 + -1 X3"``-style sums or a bare Pauli label."""
        acc: dict[tuple[int, int], complex] = {}
        for chunk in re.split(r"\s\+\s", text):
            tokens = chunk.split()
            if not tokens:
                continue
            try:
                coeff = complex(tokens[0])
                tokens = tokens[1:]
            except ValueError:
                coeff = 1.0
            p = PauliString.from_label(" ".join(tokens), n_qubits)
            acc[p.key] = acc.get(p.key, 0.0) + coeff * p.phase
        if not acc:
            raise ConfigError(f"empty Pauli sum {text!r}")
        return cls(n_qubits, acc)

    @property
    def terms(self) -> Mapping[tuple[int, int], complex]:
        return self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[tuple[PauliString, complex]]:
        for (x, z), c in self._terms.items():
            yield PauliString(self.n_qubits, x, z), c

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.n_qubits == other.n_qubits and self._terms == other._terms

    def __hash__(self):
        return hash((self.n_qubits, tuple(self._terms.items())))

    def __repr__(self) -> str:
        return f"PauliSum(n_qubits={self.n_qubits}, n_terms={len(self)})"

    def allclose(self, other: "PauliSum", atol: float = 1e-10) -> bool:
        _check_dims(self.n_qubits, other.n_qubits)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self._terms.get(k, 0) - other._terms.get(k, 0)) <= atol for k in keys)

    def paulis(self) -> list[PauliString]:
        return [PauliString(self.n_qubits, x, z) for x, z in self._terms]

    def max_weight(self) -> int:
        return max(((x | z).bit_count() for x, z in self._terms), default=0)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= atol for c in self._terms.values())

    @property
    def is_identity(self) -> bool:
        return list(self._terms) == [(0, 0)]

    def dagger(self) -> "PauliSum":
        return PauliSum(self.n_qubits, {k: c.conjugate() for k, c in self._terms.items()})

    def real_part(self) -> "PauliSum":
        """Hermitian part ``(A + A^dagger) / 2``."""
        return PauliSum(self.n_qubits, {k: c.real for k, c in self._terms.items()})

    def scale(self, alpha: complex) -> "PauliSum":
        return PauliSum(self.n_qubits, {k: alpha * c for k, c in self._terms.items()})

    def __add__(self, other: "PauliSum") -> "PauliSum":
        _check_dims(self.n_qubits, other.n_qubits)
        acc = dict(self._terms)
        for k, c in other._terms.items():
            acc[k] = acc.get(k, 0.0) + c
        return PauliSum(self.n_qubits, acc)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + other.scale(-1.0)

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            return sum_mul(self, other)
        if isinstance(other, PauliString):
            return sum_mul(self, PauliSum.from_pauli(other))
        return self.scale(other)

    def __rmul__(self, alpha):
        return self.scale(alpha)

    def permuted(self, perm) -> "PauliSum":
        perm = list(perm)
        acc = {}
        for p, c in self:
            acc[p.permuted(perm).key] = c
        return PauliSum(self.n_qubits, acc)

    def to_text(self, precision: int = 12) -> str:
        parts = []
        for p, c in self:
            coeff = f"{c.real:.{precision}g}" if c.imag == 0 else f"{c:.{precision}g}"
            parts.append(f"{coeff} {p.to_label()}")
        return " + ".join(parts)

    def dense(self) -> np.ndarray:
        return dense(self)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return apply(self, psi)

    def expectation(self, psi: np.ndarray) -> complex:
        return complex(np.vdot(psi, apply(self, psi)))


def sum_mul(a: PauliSum, b: PauliSum, threshold: float = COLLECT_THRESHOLD) -> PauliSum:
    """Distribute the product ``a @ b`` over all term pairs and collect by key."""
    _check_dims(a.n_qubits, b.n_qubits)
    out: dict[tuple[int, int], complex] = {}
    get = out.get
    b_items = list(b.terms.items())
    for (x1, z1), ca in a.terms.items():
        for (x2, z2), cb in b_items:
            x = x1 ^ x2
            z = z1 ^ z2
            e = ((x1 & z1).bit_count() + (x2 & z2).bit_count()
                 - (x & z).bit_count() + 2 * (z1 & x2).bit_count()) & 3
            k = (x, z)
            out[k] = get(k, 0.0) + ca * cb * _PHASES[e]
    return PauliSum(a.n_qubits, out, threshold=threshold)


def pow(a: PauliSum, p: int) -> PauliSum:  # noqa: A001 - mirrors the operator name
    if p < 0:
        raise ConfigError(f"negative power {p}")
    if p == 0:
        return PauliSum.identity(a.n_qubits)
    out = PauliSum(a.n_qubits, a.terms)
    for _ in range(p - 1):
        out = sum_mul(out, a)
    return out


def dense(a: PauliSum) -> np.ndarray:
    """Dense ``2**N x 2**N`` matrix; basis index bit ``q`` is qubit ``q``."""
    n = a.n_qubits
    if n > DENSE_MAX_QUBITS:
        raise ResourceError(f"dense() limited to {DENSE_MAX_QUBITS} qubits, got {n}")
    out = np.zeros((1 << n, 1 << n), dtype=complex)
    for p, c in a:
        m = np.ones((1, 1), dtype=complex)
        for q in range(n - 1, -1, -1):
            m = np.kron(m, _SINGLE[((p.x_mask >> q) & 1, (p.z_mask >> q) & 1)])
        out += c * m
    return out


def _parity(values: np.ndarray) -> np.ndarray:
    return np.bitwise_count(values) & 1


def apply(a: PauliSum, psi: np.ndarray) -> np.ndarray:
    """Matrix-free ``a @ psi`` for a statevector in the little-endian basis."""
    n = a.n_qubits
    if n > APPLY_MAX_QUBITS:
        raise ResourceError(f"statevector ops limited to {APPLY_MAX_QUBITS} qubits")
    psi = np.asarray(psi)
    if psi.shape[-1] != 1 << n:
        raise DimensionError(f"state has length {psi.shape[-1]}, expected {1 << n}")
    idx = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(psi.shape, dtype=complex)
    for (x, z), c in a.terms.items():
        # letter(x, z)|b> = i^{|x&z|} (-1)^{|z&b|} |b ^ x>
        src = idx ^ x
        sign = 1.0 - 2.0 * _parity(src & z)
        out += (c * _PHASES[(x & z).bit_count() & 3]) * sign * psi[..., src]
    return out


def to_sparse(a: PauliSum):
    """``scipy.sparse`` CSR matrix of ``a`` (used by the eigensolver)."""
    from scipy import sparse

    n = a.n_qubits
    if n > APPLY_MAX_QUBITS:
        raise ResourceError(f"sparse matrices limited to {APPLY_MAX_QUBITS} qubits")
    dim = 1 << n
    cols = np.arange(dim, dtype=np.int64)
    by_x: dict[int, np.ndarray] = {}
    for (x, z), c in a.terms.items():
        diag = (c * _PHASES[(x & z).bit_count() & 3]) * (1.0 - 2.0 * _parity(cols & z))
        by_x[x] = by_x[x] + diag if x in by_x else diag
    rows, data, cc = [], [], []
    for x, diag in by_x.items():
        rows.append(cols ^ x)
        cc.append(cols)
        data.append(diag)
    mat = sparse.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cc))),
                            shape=(dim, dim))
    if a.is_hermitian():
        mat = mat.real.tocsr() if np.all(np.isreal(mat.data)) else mat
    return mat
