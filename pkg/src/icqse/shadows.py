"""Pauli expectation values from randomized-measurement data.

For outcome bit ``m`` in basis ``b`` the single-qubit dual is ``3|m><m| - I``,
whose trace against a Pauli letter ``P`` is 1 for ``P = I``, ``3 (-1)**m`` when
``P`` equals the measured letter and 0 otherwise.  A weight-``w`` Pauli
therefore contributes ``3**w * (-1)**popcount(outcome & support)`` when every
support qubit was measured in the matching basis and nothing otherwise.  The
basis test is shot independent, so each (configuration, Pauli) pair needs one
mask comparison followed, on a match, by a popcount per shot.

Shot averaging happens inside the kernel: downstream code only sees one
i.i.d. row per configuration.
"""

from __future__ import annotations

import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numba
import numpy as np
from scipy import sparse

from .errors import ConfigError, ConsistencyError, CostWarning, DimensionError, ResourceError
from .pauli import PauliString, PauliSum
from .results import EnergyEstimate
from .statesim import ShadowDataset

MAX_WEIGHT = 12
DEFAULT_BLOCK = 2048

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


@numba.njit(inline="always")
def _popcount(v):
    v = v - ((v >> np.uint64(1)) & _M1)
    v = (v & _M2) + ((v >> np.uint64(2)) & _M2)
    v = (v + (v >> np.uint64(4))) & _M4
    return np.int64((v * _H01) >> np.uint64(56))


@numba.njit(nogil=True, cache=True)
def _match_pass(bx, bz, px, pz, supp, weight, n_shots, counts):
    """Count matching Paulis per configuration; returns the trace counter."""
    n_conf, n_words = bx.shape
    n_pauli = px.shape[0]
    traces = 0
    for k in range(n_conf):
        c = 0
        for p in range(n_pauli):
            seen = 0
            matched = True
            for w in range(n_words):
                s = supp[p, w]
                mis = ((bx[k, w] ^ px[p, w]) | (bz[k, w] ^ pz[p, w])) & s
                if mis != 0:
                    low = mis & (~mis + np.uint64(1))
                    seen += _popcount(s & ((low - np.uint64(1)) | low))
                    matched = False
                    break
                seen += _popcount(s)
            if matched:
                c += 1
                traces += weight[p] * (1 + n_shots)
            else:
                traces += seen
        counts[k] = c
    return traces


@numba.njit(nogil=True, cache=True)
def _fill_pass(bx, bz, out, px, pz, supp, scale, indptr, indices, data):
    n_conf, n_words = bx.shape
    n_pauli = px.shape[0]
    n_shots = out.shape[1]
    for k in range(n_conf):
        pos = indptr[k]
        for p in range(n_pauli):
            matched = True
            for w in range(n_words):
                if ((bx[k, w] ^ px[p, w]) | (bz[k, w] ^ pz[p, w])) & supp[p, w]:
                    matched = False
                    break
            if not matched:
                continue
            total = 0
            for s in range(n_shots):
                par = 0
                for w in range(n_words):
                    par += _popcount(out[k, s, w] & supp[p, w])
                total += 1 - 2 * (par & 1)
            indices[pos] = p
            data[pos] = scale[p] * total / n_shots
            pos += 1


def _pauli_words(paulis: list[PauliString], n_words: int):
    px = np.zeros((len(paulis), n_words), dtype=np.uint64)
    pz = np.zeros_like(px)
    mask = (1 << 64) - 1
    for i, p in enumerate(paulis):
        for w in range(n_words):
            px[i, w] = (p.x_mask >> (64 * w)) & mask
            pz[i, w] = (p.z_mask >> (64 * w)) & mask
    return px, pz, px | pz


def _block(bx, bz, out, px, pz, supp, weight, scale):
    n_conf = bx.shape[0]
    counts = np.zeros(n_conf, dtype=np.int64)
    traces = _match_pass(bx, bz, px, pz, supp, weight, out.shape[1], counts)
    indptr = np.zeros(n_conf + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int32)
    data = np.empty(indptr[-1], dtype=np.float64)
    _fill_pass(bx, bz, out, px, pz, supp, scale, indptr, indices, data)
    return counts, indices, data, int(traces)


def default_workers() -> int:
    n = int(os.environ.get("QSE_THREADS", "0") or 0)
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass(eq=False)
class PauliEvalTable:
    """Shot-averaged single-configuration estimates of each Pauli.

    ``values`` is a sparse ``(n_configs, n_paulis)`` CSR matrix: an entry is
    zero whenever the configuration's bases miss the Pauli on some support
    qubit, which is the overwhelmingly common case for high weights.
    """

    unique_paulis: list[PauliString]
    values: sparse.csr_matrix
    trace_counter: int
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {p.key: i for i, p in enumerate(self.unique_paulis)}

    @property
    def n_configs(self) -> int:
        return self.values.shape[0]

    @property
    def n_paulis(self) -> int:
        return self.values.shape[1]

    def column(self, key) -> np.ndarray:
        if isinstance(key, PauliString):
            key = key.key
        if key not in self.index:
            raise ConsistencyError(f"Pauli {key} missing from evaluation table")
        return self.values[:, self.index[key]].toarray().ravel()

    def coefficient_vector(self, op: PauliSum) -> np.ndarray:
        vec = np.zeros(self.n_paulis)
        for key, c in op.terms.items():
            if key not in self.index:
                raise ConsistencyError(f"Pauli {key} missing from evaluation table")
            vec[self.index[key]] = c.real
        return vec

    def save(self, path) -> None:
        save_table(self, path)

    @classmethod
    def load(cls, path) -> "PauliEvalTable":
        return load_table(path)


def evaluate_paulis(dataset: ShadowDataset, paulis: Iterable[PauliString], *,
                    workers: int | None = None, block_size: int = DEFAULT_BLOCK,
                    max_weight: int | None = MAX_WEIGHT) -> PauliEvalTable:
    """Evaluate every Pauli against every configuration.

    Paulis are deduplicated by phase-free key, keeping first-occurrence order.
    The result is identical for any ``workers``/``block_size``: blocks cover
    disjoint configuration ranges and are concatenated in order.
    """
    n = dataset.n_qubits
    unique: list[PauliString] = []
    seen = set()
    for p in paulis:
        if p.n_qubits != n:
            raise DimensionError(f"Pauli on {p.n_qubits} qubits, dataset has {n}")
        if p.key not in seen:
            seen.add(p.key)
            unique.append(PauliString(n, p.x_mask, p.z_mask))
    if max_weight is not None:
        heavy = [p for p in unique if p.weight > max_weight]
        if heavy:
            raise ResourceError(
                f"{len(heavy)} Paulis exceed weight {max_weight} (max {max(p.weight for p in heavy)}); "
                f"their shadow variance grows as 3**w")

    bx, bz, out = dataset.packed()
    px, pz, supp = _pauli_words(unique, bx.shape[1])
    weight = np.array([p.weight for p in unique], dtype=np.int64)
    scale = 3.0 ** weight.astype(np.float64)
    n_conf = dataset.n_configs
    starts = list(range(0, n_conf, max(1, block_size)))
    args = [(bx[s:s + block_size], bz[s:s + block_size], out[s:s + block_size]) for s in starts]

    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or len(args) == 1:
        parts = [_block(*a, px, pz, supp, weight, scale) for a in args]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _block(*a, px, pz, supp, weight, scale), args))

    counts = np.concatenate([c for c, _, _, _ in parts]) if parts else np.zeros(0, np.int64)
    indptr = np.zeros(n_conf + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.concatenate([i for _, i, _, _ in parts])
    data = np.concatenate([d for _, _, d, _ in parts])
    values = sparse.csr_matrix((data, indices, indptr), shape=(n_conf, len(unique)))
    return PauliEvalTable(unique, values, sum(t for _, _, _, t in parts))


def observable_rows(table: PauliEvalTable, op: PauliSum) -> np.ndarray:
    """Per-configuration estimates ``sum_P coeff(P) * value[k][P]``."""
    return table.values @ table.coefficient_vector(op)


def estimate_observable(dataset: ShadowDataset, op: PauliSum, *,
                        table: PauliEvalTable | None = None, **kwargs) -> EnergyEstimate:
    """Plain shadow estimate of ``<op>``: mean over configurations and its SEM."""
    if not op.is_hermitian(1e-12):
        raise ConfigError("observable must be Hermitian (real Pauli coefficients)")
    if table is None:
        table = evaluate_paulis(dataset, op.paulis(), **kwargs)
    rows = observable_rows(table, op)
    n = rows.size
    sem = float(np.std(rows, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return EnergyEstimate(float(rows.mean()), sem, n)


_TABLE_HEADER = struct.Struct("<4sHHIIQ")
_TABLE_MAGIC = b"ICPT"


def save_table(table: PauliEvalTable, path) -> None:
    """Cache format: header, Pauli keys as uint64 words (x then z), then the CSR
    arrays ``indptr`` (int64, n_configs + 1), ``indices`` (int64) and ``data`` (f64)."""
    n = table.unique_paulis[0].n_qubits if table.unique_paulis else 0
    w = max(1, -(-n // 64))
    px, pz, _ = _pauli_words(table.unique_paulis, w)
    vals = table.values.tocsr()
    with open(path, "wb") as fh:
        fh.write(_TABLE_HEADER.pack(_TABLE_MAGIC, 1, n, table.n_configs, table.n_paulis,
                                    table.trace_counter))
        fh.write(np.uint64(vals.nnz).astype("<u8").tobytes())
        fh.write(np.ascontiguousarray(px, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(pz, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(vals.indptr, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(vals.indices, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(vals.data, dtype="<f8").tobytes())


def load_table(path) -> PauliEvalTable:
    raw = Path(path).read_bytes()
    if len(raw) < _TABLE_HEADER.size + 8:
        raise ConfigError(f"{path} is not a Pauli table cache")
    magic, version, n, nc, npauli, traces = _TABLE_HEADER.unpack_from(raw)
    if magic != _TABLE_MAGIC or version != 1:
        raise ConfigError(f"{path} is not a Pauli table cache")
    w = max(1, -(-n // 64))
    off = _TABLE_HEADER.size
    nnz = int(np.frombuffer(raw, dtype="<u8", count=1, offset=off)[0])
    off += 8
    words = np.frombuffer(raw, dtype="<u8", count=2 * npauli * w, offset=off).reshape(2, npauli, w)
    off += words.nbytes
    indptr = np.frombuffer(raw, dtype="<i8", count=nc + 1, offset=off)
    off += indptr.nbytes
    indices = np.frombuffer(raw, dtype="<i8", count=nnz, offset=off)
    off += indices.nbytes
    data = np.frombuffer(raw, dtype="<f8", count=nnz, offset=off)
    paulis = []
    for i in range(npauli):
        x = sum(int(words[0, i, j]) << (64 * j) for j in range(w))
        z = sum(int(words[1, i, j]) << (64 * j) for j in range(w))
        paulis.append(PauliString(n, x, z))
    values = sparse.csr_matrix((data.copy(), indices.copy(), indptr.copy()), shape=(nc, npauli))
    return PauliEvalTable(paulis, values, int(traces))


def warn_heavy(paulis: Iterable[PauliString], max_weight: int = MAX_WEIGHT) -> None:
    heavy = sum(1 for p in paulis if p.weight > max_weight)
    if heavy:
        warnings.warn(f"{heavy} Paulis exceed weight {max_weight} and will be rejected by the "
                      f"shadow evaluator", CostWarning, stacklevel=3)
