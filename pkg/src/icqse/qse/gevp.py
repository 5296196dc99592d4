"""Generalized eigenvalue baseline with a truncated-SVD overlap inverse."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericalError
from .subspace import SampleTensors

RANK_FLOOR = 1e-14


@dataclass(frozen=True)
class GevpResult:
    pseudoeigenvalue: float
    discarded_sv_count: int
    singular_values: np.ndarray


def regularized_gevp(t: SampleTensors, discard: int = 0) -> GevpResult:
    """Lowest pseudoeigenvalue of ``S~^-1 H`` after dropping the ``discard`` smallest singular values.

    With ``S = U diag(s) Vh`` the regularized inverse is ``Vh^T diag(1/s_kept) U^T``.
    Its product with ``H`` has rank ``L - discard``; the discarded directions only
    add exact zeros to the spectrum, so the eigenvalues are taken from the
    equivalent kept-block problem ``diag(1/s_kept) U_kept^T H Vh_kept^T``.
    """
    h, s_mat = t.mean_matrices()
    L = t.dim
    if not 0 <= discard < L:
        raise ConfigError(f"discard must be in [0, {L - 1}], got {discard}")
    u, s, vh = np.linalg.svd(s_mat)
    if s[0] < RANK_FLOOR:
        raise NumericalError("overlap matrix is numerically zero")
    keep = L - discard
    s_keep = s[:keep]
    if s_keep[-1] < RANK_FLOOR:
        raise NumericalError(f"kept singular value {s_keep[-1]:.3e} below {RANK_FLOOR}")
    block = (u[:, :keep].T @ h @ vh[:keep].T) / s_keep[:, None]
    lam = np.linalg.eigvals(block)
    return GevpResult(float(np.min(lam.real)), discard, s)


def gevp_sweep(t: SampleTensors, max_discard: int | None = None) -> list[GevpResult]:
    top = t.dim - 1 if max_discard is None else min(max_discard, t.dim - 1)
    out = []
    for d in range(top + 1):
        try:
            out.append(regularized_gevp(t, d))
        except NumericalError:
            continue
    return out
