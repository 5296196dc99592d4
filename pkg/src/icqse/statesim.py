"""Imperfect root states and randomized single-qubit X/Y/Z measurements.

A root state is the exact ground state of the chain at a detuned parameter
``g + detune``.  Hardware imperfection is modelled at sampling time by a
per-shot global depolarizing channel and independent single-qubit Pauli
errors, which act on outcomes as bit flips.

Datasets serialize to a small little-endian binary format::

    header  "ICQS" | version u16 | n_qubits u16 | n_configs u32 | shots u16 | rng id u16 | seed u64
    body    per configuration: ceil(N/4) bytes of 2-bit basis codes (Z=0, X=1, Y=2,
            qubit 0 in the low bits), then `shots` records of ceil(N/8) outcome bytes
            (bit q = outcome of qubit q)
"""

from __future__ import annotations

import hashlib
import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ResourceError
from .model import ModelParams, build_hamiltonian, diagonalize, ED_MAX_QUBITS
from .pauli import PauliSum

MAGIC = b"ICQS"
FORMAT_VERSION = 1
# rng id 1: numpy PCG64 seeded by SeedSequence(seed, spawn_key=(config_index,))
RNG_PCG64_SPAWN = 1
_HEADER = struct.Struct("<4sHHIHHQ")

BASIS_Z, BASIS_X, BASIS_Y = 0, 1, 2
ENUMERATE_MAX_QUBITS = 4

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) * _INV_SQRT2
# maps the Y eigenbasis onto the computational basis: H @ S^dagger
_Y_TO_Z = _HADAMARD @ np.diag([1.0, -1.0j])
_ROTATIONS = {BASIS_X: _HADAMARD, BASIS_Y: _Y_TO_Z}


@dataclass(frozen=True)
class NoiseSpec:
    global_depolarizing_p: float = 0.0
    local_pauli_q: float = 0.0

    def __post_init__(self):
        for name in ("global_depolarizing_p", "local_pauli_q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")

    @property
    def is_ideal(self) -> bool:
        return self.global_depolarizing_p == 0.0 and self.local_pauli_q == 0.0


@dataclass(frozen=True)
class RootSpec:
    params: ModelParams
    detune: float = 0.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if abs(self.params.g + self.detune) > 1.0:
            raise ConfigError(f"detuned parameter g + detune = {self.params.g + self.detune} outside [-1, 1]")


@dataclass(frozen=True)
class StateHandle:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "StateHandle":
        amp = np.asarray(amplitudes, dtype=complex).copy()
        n = int(np.log2(amp.size))
        if amp.size != 1 << n:
            raise ConfigError(f"state length {amp.size} is not a power of two")
        amp /= np.linalg.norm(amp)
        amp.setflags(write=False)
        return cls(n, amp)

    @classmethod
    def basis_state(cls, n_qubits: int, index: int = 0) -> "StateHandle":
        amp = np.zeros(1 << n_qubits, dtype=complex)
        amp[index] = 1.0
        return cls.from_amplitudes(amp)

    @classmethod
    def product(cls, vectors) -> "StateHandle":
        """Product state; ``vectors[q]`` is the single-qubit state of qubit ``q``."""
        amp = np.ones(1, dtype=complex)
        for v in vectors:
            amp = np.kron(np.asarray(v, dtype=complex), amp)
        return cls.from_amplitudes(amp)

    def expectation(self, op: PauliSum) -> float:
        return op.expectation(self.amplitudes).real


def prepare_root(spec: RootSpec) -> StateHandle:
    params = spec.params
    if params.n_qubits > ED_MAX_QUBITS:
        raise ResourceError(f"root preparation limited to {ED_MAX_QUBITS} qubits")
    detuned = ModelParams.from_g(params.n_qubits, params.g + spec.detune, pbc=params.pbc)
    _, vec = diagonalize(build_hamiltonian(detuned), k=1)
    return StateHandle.from_amplitudes(vec)


@dataclass(eq=False)
class ShadowDataset:
    """Raw randomized-measurement record.

    ``bases`` has shape ``(n_configs, n_qubits)`` with codes Z=0, X=1, Y=2;
    ``outcomes`` has shape ``(n_configs, shots, n_qubits)`` with bits 0/1.
    """

    n_qubits: int
    seed: int
    bases: np.ndarray
    outcomes: np.ndarray
    rng_id: int = RNG_PCG64_SPAWN

    def __post_init__(self):
        self.bases = np.ascontiguousarray(self.bases, dtype=np.uint8)
        self.outcomes = np.ascontiguousarray(self.outcomes, dtype=np.uint8)
        nc, n = self.bases.shape
        if n != self.n_qubits or self.outcomes.shape[0] != nc or self.outcomes.shape[2] != n:
            raise ConfigError("dataset array shapes inconsistent with header")
        if self.bases.size and self.bases.max() > 2:
            raise ConfigError("basis codes must be 0 (Z), 1 (X) or 2 (Y)")
        if self.outcomes.size and self.outcomes.max() > 1:
            raise ConfigError("outcomes must be bits")

    @property
    def n_configs(self) -> int:
        return self.bases.shape[0]

    @property
    def shots_per_config(self) -> int:
        return self.outcomes.shape[1]

    def header(self) -> bytes:
        return _HEADER.pack(MAGIC, FORMAT_VERSION, self.n_qubits, self.n_configs,
                            self.shots_per_config, self.rng_id, self.seed & (2**64 - 1))

    def to_bytes(self) -> bytes:
        n, nc, ns = self.n_qubits, self.n_configs, self.shots_per_config
        nb = -(-n // 4)
        codes = np.zeros((nc, 4 * nb), dtype=np.uint8)
        codes[:, :n] = self.bases
        codes = codes.reshape(nc, nb, 4)
        basis_bytes = (codes[..., 0] | (codes[..., 1] << 2) | (codes[..., 2] << 4) | (codes[..., 3] << 6))
        outcome_bytes = np.packbits(self.outcomes, axis=-1, bitorder="little").reshape(nc, -1)
        body = np.concatenate([basis_bytes.astype(np.uint8), outcome_bytes], axis=1)
        return self.header() + body.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ShadowDataset":
        if len(data) < _HEADER.size:
            raise ConfigError("file too short for a dataset header")
        magic, version, n, nc, ns, rng_id, seed = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ConfigError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise ConfigError(f"unsupported format version {version}")
        nb, no = -(-n // 4), -(-n // 8)
        rec = nb + ns * no
        body = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
        if body.size != nc * rec:
            raise ConfigError(f"body has {body.size} bytes, expected {nc * rec}")
        body = body.reshape(nc, rec)
        packed = body[:, :nb]
        codes = np.stack([(packed >> s) & 3 for s in (0, 2, 4, 6)], axis=-1).reshape(nc, 4 * nb)[:, :n]
        outcomes = np.unpackbits(body[:, nb:].reshape(nc, ns, no), axis=-1, count=n, bitorder="little")
        return cls(n_qubits=n, seed=seed, bases=codes, outcomes=outcomes, rng_id=rng_id)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ShadowDataset":
        return cls.from_bytes(Path(path).read_bytes())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def packed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Bit-packed ``(basis_x, basis_z, outcomes)`` as uint64 words.

        ``basis_x[k]`` has bit q set when qubit q was measured in X or Y,
        ``basis_z[k]`` when measured in Z or Y; the letter of the measured basis
        in the symplectic encoding.  Shapes ``(n_configs, W)`` and
        ``(n_configs, shots, W)`` with ``W = ceil(n_qubits / 64)``.
        """
        n = self.n_qubits
        w = -(-n // 64)
        pad = 64 * w - n
        letter_x = (self.bases != BASIS_Z)
        letter_z = (self.bases != BASIS_X)
        return (_pack_words(letter_x, w, pad), _pack_words(letter_z, w, pad),
                _pack_words(self.outcomes.astype(bool), w, pad))


def _pack_words(bits: np.ndarray, n_words: int, pad: int) -> np.ndarray:
    if pad:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (pad,), dtype=bool)], axis=-1)
    by = np.packbits(bits, axis=-1, bitorder="little")
    return np.ascontiguousarray(by).view("<u8").reshape(bits.shape[:-1] + (n_words,)).astype(np.uint64)


def config_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def rotated_probabilities(state: StateHandle, bases) -> np.ndarray:
    """Born probabilities of computational outcomes after rotating each qubit into its basis."""
    n = state.n_qubits
    psi = state.amplitudes.reshape((2,) * n)
    for q, b in enumerate(bases):
        if b != BASIS_Z:
            ax = n - 1 - q
            psi = np.moveaxis(np.tensordot(_ROTATIONS[int(b)], psi, axes=([1], [ax])), 0, ax)
    p = np.abs(psi.reshape(-1)) ** 2
    return p / p.sum()


def sample_config(state: StateHandle, noise: NoiseSpec, shots: int,
                  rng: np.random.Generator, bases=None) -> tuple[np.ndarray, np.ndarray]:
    """One measurement configuration: bases (uniform unless given) and ``shots`` outcome rows."""
    n = state.n_qubits
    dim = 1 << n
    if bases is None:
        bases = rng.integers(0, 3, size=n).astype(np.uint8)
    probs = rotated_probabilities(state, bases)
    idx = rng.choice(dim, size=shots, p=probs)
    if noise.global_depolarizing_p > 0:
        mixed = rng.random(shots) < noise.global_depolarizing_p
        idx = np.where(mixed, rng.integers(0, dim, size=shots), idx)
    bits = ((idx[:, None] >> np.arange(n)) & 1).astype(np.uint8)
    if noise.local_pauli_q > 0:
        q = noise.local_pauli_q
        u = rng.random((shots, n))
        # 0 = I, 1 = X, 2 = Y, 3 = Z with probabilities 1-q, q/3, q/3, q/3
        letter = np.where(u < q, 1 + np.minimum((u * 3.0 / q).astype(np.int64), 2), 0)
        basis_letter = np.where(bases == BASIS_Z, 3, bases)
        flip = (letter != 0) & (letter != basis_letter[None, :])
        bits ^= flip.astype(np.uint8)
    return np.asarray(bases, dtype=np.uint8), bits


def sample_shadows(state: StateHandle, noise: NoiseSpec, n_configs: int, shots: int,
                   seed: int) -> ShadowDataset:
    """Draw ``n_configs`` uniformly random X/Y/Z bases and ``shots`` outcomes in each.

    Configuration ``k`` uses its own PCG64 stream spawned from ``seed``, so the
    result does not depend on how configurations are scheduled.
    """
    if n_configs < 1 or shots < 1:
        raise ConfigError("n_configs and shots must be positive")
    if shots >= 1 << 16 or n_configs >= 1 << 32:
        raise ResourceError("shots or n_configs exceed the file format limits")
    n = state.n_qubits
    bases = np.empty((n_configs, n), dtype=np.uint8)
    outcomes = np.empty((n_configs, shots, n), dtype=np.uint8)
    for k in range(n_configs):
        bases[k], outcomes[k] = sample_config(state, noise, shots, config_rng(seed, k))
    return ShadowDataset(n_qubits=n, seed=seed, bases=bases, outcomes=outcomes)


def enumerate_povm_distribution(state: StateHandle, observable: PauliSum) -> tuple[float, float]:
    """Exact mean and variance of the single-shot estimator over all ``6**N`` outcomes."""
    n = state.n_qubits
    if n > ENUMERATE_MAX_QUBITS:
        raise ResourceError(f"enumeration limited to {ENUMERATE_MAX_QUBITS} qubits, got {n}")
    if observable.n_qubits != n:
        raise ConfigError("observable and state act on different qubit counts")
    outcomes = np.arange(1 << n)
    terms = [(p.x_mask, p.z_mask, p.support_mask, p.weight, c) for p, c in observable]
    mean = second = 0.0
    weight = 3.0 ** -n
    for bases in itertools.product(range(3), repeat=n):
        bx = sum(1 << q for q, b in enumerate(bases) if b != BASIS_Z)
        bz = sum(1 << q for q, b in enumerate(bases) if b != BASIS_X)
        probs = rotated_probabilities(state, bases)
        omega = np.zeros(1 << n, dtype=complex)
        for x, z, supp, w, c in terms:
            if (bx & supp) == x and (bz & supp) == z:
                omega += c * 3.0 ** w * (1.0 - 2.0 * (np.bitwise_count(outcomes & supp) & 1))
        if np.max(np.abs(omega.imag), initial=0.0) > 1e-12:
            raise ConfigError("observable is not Hermitian")
        omega = omega.real
        mean += weight * float(probs @ omega)
        second += weight * float(probs @ omega ** 2)
    return mean, second - mean ** 2
