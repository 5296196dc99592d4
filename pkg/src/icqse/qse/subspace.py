"""Subspace operators, their symbolic expansion and per-configuration tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..errors import ConfigError, ConsistencyError, DimensionError, NumericalError
from ..pauli import PauliString, PauliSum, sum_mul
from ..shadows import PauliEvalTable, evaluate_paulis, warn_heavy
from ..statesim import ShadowDataset, StateHandle

LABELS = ("krylov", "krylov+", "custom")


@dataclass(frozen=True)
class SubspaceSpec:
    """Ordered expansion operators; the first one is always the identity."""

    operators: tuple[PauliSum, ...]
    label: str = "custom"
    names: tuple[str, ...] = ()

    def __post_init__(self):
        ops = tuple(self.operators)
        object.__setattr__(self, "operators", ops)
        if not ops:
            raise ConfigError("subspace needs at least one operator")
        if self.label not in LABELS:
            raise ConfigError(f"unknown subspace label {self.label!r}")
        if not ops[0].is_identity or abs(ops[0].terms[(0, 0)] - 1) > 1e-12:
            raise ConfigError("first expansion operator must be the identity")
        n = ops[0].n_qubits
        for i, op in enumerate(ops):
            if op.n_qubits != n:
                raise DimensionError("expansion operators act on different qubit counts")
            if not op.is_hermitian(1e-12):
                raise ConfigError(f"expansion operator {i} is not Hermitian")
        if len(set(ops)) != len(ops):
            raise ConfigError("duplicate expansion operators")
        if not self.names:
            object.__setattr__(self, "names", tuple(_default_name(op) for op in ops))

    @property
    def dim(self) -> int:
        return len(self.operators)

    @property
    def n_qubits(self) -> int:
        return self.operators[0].n_qubits

    @classmethod
    def identity(cls, n_qubits: int) -> "SubspaceSpec":
        return cls((PauliSum.identity(n_qubits),), "custom", ("I",))

    @classmethod
    def krylov(cls, h: PauliSum) -> "SubspaceSpec":
        return cls((PauliSum.identity(h.n_qubits), h), "krylov", ("I", "H"))

    @classmethod
    def with_paulis(cls, h: PauliSum | None, paulis, label: str = "krylov+") -> "SubspaceSpec":
        """``{I, H}`` (or ``{I}`` when ``h`` is None) extended by Pauli strings, skipping repeats."""
        n = paulis[0].n_qubits if h is None else h.n_qubits
        ops = [PauliSum.identity(n)]
        names = ["I"]
        if h is not None:
            ops.append(h)
            names.append("H")
        for p in paulis:
            op = PauliSum.from_pauli(PauliString(n, p.x_mask, p.z_mask))
            if op not in ops:
                ops.append(op)
                names.append(p.to_label())
        return cls(tuple(ops), label, tuple(names))


def _default_name(op: PauliSum) -> str:
    if len(op) == 1:
        (p, c), = list(op)
        if c == 1:
            return p.to_label()
    return f"<{len(op)} terms>"


@dataclass
class Expansion:
    """Hermitian parts of ``sigma_j O sigma_i`` and ``sigma_j sigma_i`` for ``i <= j``."""

    n_qubits: int
    dim: int
    op_terms: dict[tuple[int, int], PauliSum]
    overlap_terms: dict[tuple[int, int], PauliSum]

    def paulis(self) -> list[PauliString]:
        keys = set()
        for d in (self.op_terms, self.overlap_terms):
            for s in d.values():
                keys.update(s.terms)
        return [PauliString(self.n_qubits, x, z) for x, z in sorted(keys)]


def expand_subspace(spec: SubspaceSpec, op: PauliSum, *, check_atol: float = 1e-9) -> Expansion:
    """Symbolically expand the subspace matrix elements of ``op`` and of the overlap.

    Expansion operators are Hermitian and ``c`` is real, so only the Hermitian
    part ``(G_ij + G_ij^dagger) / 2`` of each off-diagonal product contributes;
    its coefficients are the real parts.  Diagonal products must already be
    Hermitian and are checked.
    """
    if op.n_qubits != spec.n_qubits:
        raise DimensionError("operator and subspace act on different qubit counts")
    sig = spec.operators
    op_right = [sum_mul(op, s) for s in sig]
    op_terms, overlap_terms = {}, {}
    for i in range(spec.dim):
        for j in range(i, spec.dim):
            g_op = sum_mul(sig[j], op_right[i])
            g_ov = sum_mul(sig[j], sig[i])
            if i == j:
                for g in (g_op, g_ov):
                    if not g.is_hermitian(check_atol):
                        raise NumericalError(f"diagonal product ({i},{i}) has imaginary coefficients")
            op_terms[i, j] = g_op.real_part()
            overlap_terms[i, j] = g_ov.real_part()
    exp = Expansion(spec.n_qubits, spec.dim, op_terms, overlap_terms)
    warn_heavy(exp.paulis())
    return exp


@dataclass
class SampleTensors:
    """Per-configuration subspace matrices, each ``(n_configs, L, L)`` and symmetric."""

    aH: np.ndarray
    aS: np.ndarray
    trace_counter: int = 0
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.aH.shape != self.aS.shape or self.aH.ndim != 3 or self.aH.shape[1] != self.aH.shape[2]:
            raise ConfigError(f"tensor shapes {self.aH.shape} / {self.aS.shape} are inconsistent")

    @property
    def n_configs(self) -> int:
        return self.aH.shape[0]

    @property
    def dim(self) -> int:
        return self.aH.shape[1]

    def mean_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        return self.aH.mean(axis=0), self.aS.mean(axis=0)

    def with_op(self, a_op: np.ndarray) -> "SampleTensors":
        return SampleTensors(a_op, self.aS, self.trace_counter, self.names)

    def restrict(self, idx) -> "SampleTensors":
        idx = np.asarray(idx)
        sub = np.ix_(np.arange(self.n_configs), idx, idx)
        names = tuple(self.names[i] for i in idx) if self.names else ()
        return SampleTensors(self.aH[sub], self.aS[sub], self.trace_counter, names)


def _coefficient_matrix(table: PauliEvalTable, terms: dict, dim: int) -> sparse.csc_matrix:
    rows, cols, vals = [], [], []
    for (i, j), s in terms.items():
        for key, c in s.terms.items():
            col = table.index.get(key)
            if col is None:
                raise ConsistencyError(f"Pauli {PauliString(s.n_qubits, *key)} missing from table")
            for a, b in {(i, j), (j, i)}:
                rows.append(col)
                cols.append(a * dim + b)
                vals.append(c.real)
    return sparse.csc_matrix((vals, (rows, cols)), shape=(table.n_paulis, dim * dim))


def assemble_tensors(table: PauliEvalTable, expansion: Expansion) -> SampleTensors:
    """Contract the evaluation table with the expansion coefficients."""
    L = expansion.dim
    nc = table.n_configs
    ch = _coefficient_matrix(table, expansion.op_terms, L)
    cs = _coefficient_matrix(table, expansion.overlap_terms, L)
    aH = np.asarray((table.values @ ch).todense()).reshape(nc, L, L)
    aS = np.asarray((table.values @ cs).todense()).reshape(nc, L, L)
    return SampleTensors(aH, aS, table.trace_counter)


def build_tensors(dataset: ShadowDataset, spec: SubspaceSpec, ops: dict[str, PauliSum],
                  **kwargs) -> tuple[dict[str, SampleTensors], PauliEvalTable]:
    """Expand ``spec`` for each named operator, evaluate one shared table, assemble tensors."""
    expansions = {name: expand_subspace(spec, op) for name, op in ops.items()}
    keys = set()
    for e in expansions.values():
        keys.update(p.key for p in e.paulis())
    paulis = [PauliString(spec.n_qubits, x, z) for x, z in sorted(keys)]
    table = evaluate_paulis(dataset, paulis, **kwargs)
    out = {}
    for name, e in expansions.items():
        t = assemble_tensors(table, e)
        t.names = spec.names
        out[name] = t
    return out, table


def exact_tensors(state: StateHandle, spec: SubspaceSpec, op: PauliSum) -> SampleTensors:
    """Infinite-sample tensors ``<psi|sigma_i op sigma_j|psi>`` as a single row.

    With one row the sample variance is undefined; estimators report zero error.
    """
    psi = state.amplitudes
    vecs = [s.apply(psi) for s in spec.operators]
    op_vecs = [op.apply(v) for v in vecs]
    L = spec.dim
    aH = np.empty((1, L, L))
    aS = np.empty((1, L, L))
    for i in range(L):
        for j in range(L):
            aH[0, i, j] = np.vdot(vecs[i], op_vecs[j]).real
            aS[0, i, j] = np.vdot(vecs[i], vecs[j]).real
    return SampleTensors(aH, aS, 0, spec.names)
