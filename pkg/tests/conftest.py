import numpy as np
import pytest

from icqse.pauli import PauliString, PauliSum

LETTERS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


def kron_pauli(p: PauliString) -> np.ndarray:
    """Independent dense oracle: explicit Kronecker product, qubit 0 rightmost."""
    mat = np.ones((1, 1), dtype=complex)
    for q in range(p.n_qubits):
        mat = np.kron(LETTERS[p.letter(q)], mat)
    return p.phase * mat


def kron_sum(a: PauliSum) -> np.ndarray:
    dim = 1 << a.n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for p, c in a:
        out += c * kron_pauli(p)
    return out


def random_sum(rng, n, n_terms, real=False) -> PauliSum:
    items = []
    for _ in range(n_terms):
        x, z = (int(v) for v in rng.integers(0, 1 << n, 2))
        c = rng.normal() if real else complex(rng.normal(), rng.normal())
        items.append((c, PauliString(n, x, z)))
    return PauliSum.from_list(n, items)


def random_state(rng, n) -> np.ndarray:
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
