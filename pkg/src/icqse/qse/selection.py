"""Ranking random low-weight Paulis as extra expansion operators."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import ConfigError, NumericalError
from ..pauli import PauliString, PauliSum, random_pauli
from ..shadows import PauliEvalTable, evaluate_paulis, observable_rows
from ..statesim import ShadowDataset
from .estimator import RatioObjective
from .optimize import minimize_upper_bound
from .subspace import SubspaceSpec, assemble_tensors, expand_subspace

log = logging.getLogger(__name__)

DEFAULT_POOLS = {1: 150, 2: 150, 3: 150, 4: 150, 5: 150}
DEFAULT_TOP_K = 5
CONDITION_CAP = 1e8
SCORE_MODES = ("upper", "energy")


@dataclass(frozen=True)
class CandidateScore:
    pauli: PauliString
    score: float
    energy: float
    error: float

    @property
    def weight(self) -> int:
        return self.pauli.weight


class Selection(NamedTuple):
    spec: SubspaceSpec
    chosen: list[CandidateScore]
    unmitigated: float
    trace_counter: int


def draw_pools(n_qubits: int, pools: dict[int, int], seed) -> dict[int, list[PauliString]]:
    """Random pools per weight, duplicates within a pool removed (first draw kept)."""
    rng = np.random.default_rng(seed)
    out = {}
    for w in sorted(pools):
        if not 1 <= w <= min(5, n_qubits):
            raise ConfigError(f"pool weight {w} outside 1..{min(5, n_qubits)}")
        if pools[w] < 1:
            raise ConfigError(f"pool size for weight {w} must be positive")
        seen, pool = set(), []
        for _ in range(pools[w]):
            p = random_pauli(n_qubits, w, rng)
            if p.key not in seen:
                seen.add(p.key)
                pool.append(p)
        out[w] = pool
    return out


def rank_candidates(dataset: ShadowDataset, h: PauliSum, candidates: list[PauliString], *,
                    score_mode: str = "upper", table: PauliEvalTable | None = None,
                    **kwargs) -> tuple[list[CandidateScore], float, PauliEvalTable]:
    """Score each candidate by the energy it gains in the two-operator space ``{I, P}``.

    ``score_mode="upper"`` scores ``H_unmit - (H(c*) + eps(c*))``;
    ``"energy"`` scores ``H_unmit - H(c*)``.  ``c*`` minimizes ``H + eps`` in
    both cases.  Returns the scores (input order, skipped candidates omitted),
    the unmitigated energy and the shared evaluation table.
    """
    if score_mode not in SCORE_MODES:
        raise ConfigError(f"score_mode must be one of {SCORE_MODES}")
    n = h.n_qubits
    specs = []
    for p in candidates:
        if p.is_identity:
            log.info("skipping identity candidate")
            continue
        specs.append((p, SubspaceSpec.with_paulis(None, [p], label="custom")))
    expansions = [(p, expand_subspace(spec, h)) for p, spec in specs]
    if table is None:
        keys = set(h.terms)
        for _, e in expansions:
            keys.update(q.key for q in e.paulis())
        table = evaluate_paulis(dataset, [PauliString(n, x, z) for x, z in sorted(keys)], **kwargs)
    h_unmit = float(observable_rows(table, h).mean())

    scores = []
    for p, e in expansions:
        t = assemble_tensors(table, e)
        s_bar = t.aS.mean(axis=0)
        if np.linalg.cond(s_bar) > CONDITION_CAP:
            log.info("skipping %s: overlap condition number above %.0e", p.to_label(), CONDITION_CAP)
            continue
        try:
            _, est = minimize_upper_bound(RatioObjective(t))
        except NumericalError as exc:
            log.info("skipping %s: %s", p.to_label(), exc)
            continue
        gain = h_unmit - est.value
        score = gain - est.std_error if score_mode == "upper" else gain
        scores.append(CandidateScore(p, float(score), est.value, est.std_error))
    return scores, h_unmit, table


def select_paulis(dataset: ShadowDataset, h: PauliSum, pools: dict | None = None,
                  top_k: int = DEFAULT_TOP_K, seed=0, *, score_mode: str = "upper",
                  **kwargs) -> Selection:
    """Build the ``{I, H} + best Paulis`` subspace.

    ``pools`` maps weight to a pool size (random draw with ``seed``) or to an
    explicit list of Pauli strings.  Up to ``top_k`` positively scoring Paulis
    are kept per weight; ties break by (weight, symplectic key).  Returns the
    subspace, the chosen scores, the unmitigated energy and the trace count
    of the candidate evaluation table.
    """
    pools = DEFAULT_POOLS if pools is None else pools
    n = h.n_qubits
    sizes = {w: v for w, v in pools.items() if isinstance(v, int)}
    drawn = draw_pools(n, sizes, seed) if sizes else {}
    explicit = {w: list(v) for w, v in pools.items() if not isinstance(v, int)}
    by_weight = {**drawn, **explicit}
    candidates = [p for w in sorted(by_weight) for p in by_weight[w]]
    pool_of = {p.key: w for w in sorted(by_weight) for p in by_weight[w]}
    scores, h_unmit, table = rank_candidates(dataset, h, candidates, score_mode=score_mode, **kwargs)

    chosen: list[CandidateScore] = []
    for w in sorted(by_weight):
        group = [s for s in scores if pool_of[s.pauli.key] == w and s.score > 0]
        group.sort(key=lambda s: (-s.score, s.weight, s.pauli.key))
        chosen.extend(group[:top_k])
    spec = SubspaceSpec.with_paulis(h, [s.pauli for s in chosen], label="krylov+")
    return Selection(spec, chosen, h_unmit, table.trace_counter)
