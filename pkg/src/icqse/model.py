"""Three-body spin chain along its one-parameter trajectory, plus exact references."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ResourceError
from .pauli import PauliString, PauliSum, to_sparse

log = logging.getLogger(__name__)

ED_MAX_QUBITS = 14
DENSE_ED_MAX_QUBITS = 10
LANCZOS_MAX_KRYLOV = 200
LANCZOS_TOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    n_qubits: int
    g: float
    g_zz: float
    g_x: float
    g_zxz: float
    pbc: bool = True

    @classmethod
    def from_g(cls, n_qubits: int, g: float, pbc: bool = True) -> "ModelParams":
        if not -1.0 <= g <= 1.0:
            raise ConfigError(f"g must lie in [-1, 1], got {g}")
        return cls(n_qubits, g, *couplings(g), pbc=pbc)


def couplings(g: float) -> tuple[float, float, float]:
    """``(g_zz, g_x, g_zxz)`` on the trajectory."""
    return 2.0 * (1.0 - g * g), (1.0 + g) ** 2, (g - 1.0) ** 2


def build_hamiltonian(params: ModelParams) -> PauliSum:
    """``sum_i -g_zz Z_i Z_{i+1} - g_x X_i + g_zxz Z_i X_{i+1} Z_{i+2}``.

    Terms with zero coupling are omitted.  Open chains (``pbc=False``) drop the
    bonds that would wrap around.
    """
    n = params.n_qubits
    if params.pbc and n < 3:
        raise ConfigError(f"periodic chain needs at least 3 qubits, got {n}")
    if n < 2:
        raise ConfigError(f"chain needs at least 2 qubits, got {n}")

    def site_ok(*sites):
        return params.pbc or max(sites) < n

    items = []
    for i in range(n):
        if params.g_zz and site_ok(i + 1):
            items.append((-params.g_zz, PauliString.from_ops(n, [("Z", i), ("Z", (i + 1) % n)])))
        if params.g_x:
            items.append((-params.g_x, PauliString.single(n, "X", i)))
        if params.g_zxz and site_ok(i + 2):
            ops = [("Z", i), ("X", (i + 1) % n), ("Z", (i + 2) % n)]
            items.append((params.g_zxz, PauliString.from_ops(n, ops)))
    return PauliSum.from_list(n, items)


def hamiltonian(n_qubits: int, g: float) -> PauliSum:
    return build_hamiltonian(ModelParams.from_g(n_qubits, g))


def exact_gs_density(g: float) -> float:
    return -2.0 * (g * g + 1.0)


def order_parameter_ops(n_qubits: int) -> tuple[PauliSum, PauliSum]:
    """``S^X = sum_j X_j / N`` and ``S^ZY = sum_j Z_j Y_{j+1} X_{j+2} Y_{j+3} Z_{j+4} / N``."""
    if n_qubits < 5:
        raise ConfigError(f"S^ZY needs at least 5 qubits, got {n_qubits}")
    n = n_qubits
    sx = PauliSum.from_list(n, [(1.0 / n, PauliString.single(n, "X", j)) for j in range(n)])
    szy = PauliSum.from_list(n, [
        (1.0 / n, PauliString.from_ops(n, [(letter, (j + d) % n) for d, letter in enumerate("ZYXYZ")]))
        for j in range(n)
    ])
    return sx, szy


def sx_theory(g: float) -> float:
    return 4.0 * g / (1.0 + g) ** 2 if g > 0 else 0.0


def szy_theory(g: float) -> float:
    return -4.0 * g / (1.0 - g) ** 2 if g < 0 else 0.0


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    ground_vector: np.ndarray = field(repr=False)
    energy_density: float


def _fix_phase(v: np.ndarray) -> np.ndarray:
    # first amplitude above noise made real-positive
    lead = np.flatnonzero(np.abs(v) > 1e-8)[0]
    v = v * (abs(v[lead]) / v[lead])
    return v / np.linalg.norm(v)


def diagonalize(h: PauliSum, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``k`` eigenvalues and the ground vector of an arbitrary Pauli sum."""
    n = h.n_qubits
    if n > ED_MAX_QUBITS:
        raise ResourceError(f"exact diagonalization limited to {ED_MAX_QUBITS} qubits, got {n}")
    dim = 1 << n
    k = min(k, dim)
    mat = to_sparse(h)
    if n <= DENSE_ED_MAX_QUBITS or k >= dim - 1:
        w, v = np.linalg.eigh(mat.toarray())
        return w[:k], _fix_phase(v[:, 0])

    from scipy.sparse.linalg import ArpackNoConvergence, eigsh

    ncv = min(dim - 1, LANCZOS_MAX_KRYLOV, max(2 * k + 1, 20))
    # seeded random start: a symmetric v0 would confine Lanczos to one symmetry sector
    v0 = np.random.default_rng(0).standard_normal(dim)
    try:
        w, v = eigsh(mat, k=k, which="SA", ncv=ncv, tol=LANCZOS_TOL, v0=v0, maxiter=100 * dim)
    except ArpackNoConvergence as exc:
        raise NumericalError(
            f"Lanczos did not converge: {len(exc.eigenvalues)} of {k} eigenpairs "
            f"after maxiter={100 * dim}") from exc
    order = np.argsort(w)
    return w[order], _fix_phase(v[:, order[0]].astype(complex))


def exact_diag(params: ModelParams, k: int = 1) -> SpectrumResult:
    w, v = diagonalize(build_hamiltonian(params), k)
    return SpectrumResult(eigenvalues=w, ground_vector=v, energy_density=float(w[0]) / params.n_qubits)


def reference_density(params: ModelParams, spectrum: SpectrumResult | None = None,
                      atol: float = 1e-6) -> float:
    """Ground-state energy density used as truth.

    The closed form is returned when exact diagonalization agrees with it to
    ``atol``; otherwise the deviation is logged and the ED value is used.
    """
    closed = exact_gs_density(params.g)
    if spectrum is None:
        if params.n_qubits > ED_MAX_QUBITS:
            return closed
        spectrum = exact_diag(params)
    if abs(spectrum.energy_density - closed) > atol:
        log.warning("finite-size deviation at N=%d g=%g: ED %.10f vs closed form %.10f",
                    params.n_qubits, params.g, spectrum.energy_density, closed)
        return spectrum.energy_density
    return closed
