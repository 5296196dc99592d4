"""Subspace expansion on shadow data: tensors, estimators, optimization, selection, GEVP."""

from .estimator import RatioObjective, SingularNormalization, observable_at, ratio_estimate
from .gevp import GevpResult, gevp_sweep, regularized_gevp
from .optimize import (SolveResult, constrained_minimize, eps_ratio_for_size, eps_sweep,
                       landscape_scan, minimize_upper_bound)
from .selection import CandidateScore, Selection, draw_pools, rank_candidates, select_paulis
from .subspace import (Expansion, SampleTensors, SubspaceSpec, assemble_tensors, build_tensors,
                       exact_tensors, expand_subspace)

__all__ = [
    "CandidateScore", "Expansion", "GevpResult", "RatioObjective", "SampleTensors", "Selection",
    "SingularNormalization", "SolveResult", "SubspaceSpec", "assemble_tensors", "build_tensors",
    "constrained_minimize", "draw_pools", "eps_ratio_for_size", "eps_sweep", "exact_tensors",
    "expand_subspace", "gevp_sweep", "landscape_scan", "minimize_upper_bound", "observable_at",
    "rank_candidates", "ratio_estimate", "regularized_gevp", "select_paulis",
]
