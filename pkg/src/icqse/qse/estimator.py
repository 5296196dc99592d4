"""Ratio-of-means estimator for subspace expectation values and its error.

For real coefficients ``c`` each configuration contributes ``x_k = c^T aH[k] c``
and ``y_k = c^T aS[k] c``.  The estimate is ``mean(x) / mean(y)`` and its
variance is the second-order (delta method) expansion around the means::

    eps^2 = ( Var x / my^2 + mx^2 Var y / my^4 - 2 mx Cov(x, y) / my^3 ) / S

with unbiased (S - 1) sample moments.  Dropping the covariance term badly
misstates the error because all matrix entries come from the same samples.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NumericalError
from ..results import EnergyEstimate
from .subspace import SampleTensors

SINGULAR_RTOL = 1e-10


class SingularNormalization(NumericalError):
    """The normalization mean is statistically indistinguishable from zero."""


def _check_c(t: SampleTensors, c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (t.dim,):
        raise ConfigError(f"coefficient vector has shape {c.shape}, expected ({t.dim},)")
    return c


def _delta_variance(n, mx, my, vx, vy, cxy) -> float:
    var = (vx / my**2 + mx**2 * vy / my**4 - 2.0 * mx * cxy / my**3) / n
    return max(var, 0.0)


def ratio_estimate(t: SampleTensors, c, *, covariance: bool = True) -> EnergyEstimate:
    """``x̄ / ȳ`` with its delta-method standard error.

    ``covariance=False`` drops the cross term; only useful for demonstrating
    why it is needed.
    """
    c = _check_c(t, c)
    x = np.einsum("kij,i,j->k", t.aH, c, c)
    y = np.einsum("kij,i,j->k", t.aS, c, c)
    n = x.size
    mx, my = x.mean(), y.mean()
    rms = np.sqrt(np.mean(y * y))
    if not abs(my) > SINGULAR_RTOL * rms:
        raise SingularNormalization(f"mean normalization {my:.3e} vs rms {rms:.3e}")
    if n < 2:
        return EnergyEstimate(float(mx / my), 0.0, n, False)
    dx, dy = x - mx, y - my
    vx = dx @ dx / (n - 1)
    vy = dy @ dy / (n - 1)
    cxy = (dx @ dy) / (n - 1) if covariance else 0.0
    err = np.sqrt(_delta_variance(n, mx, my, vx, vy, cxy))
    return EnergyEstimate(float(mx / my), float(err), n, False)


class RatioObjective:
    """Fast repeated evaluation of :func:`ratio_estimate` for one tensor set.

    Only the upper triangle of the symmetric per-configuration matrices is
    needed; means and centred second moments of those ``L(L+1)/2`` features are
    precomputed once, so each evaluation costs ``O(L**4)`` instead of
    ``O(n_configs * L**2)``.
    """

    def __init__(self, t: SampleTensors):
        self.dim = t.dim
        self.n = t.n_configs
        iu, ju = np.triu_indices(t.dim)
        self._iu, self._ju = iu, ju
        self._w = np.where(iu == ju, 1.0, 2.0)
        fh = t.aH[:, iu, ju]
        fs = t.aS[:, iu, ju]
        self.mean_h = fh.mean(axis=0)
        self.mean_s = fs.mean(axis=0)
        if self.n > 1:
            dh = fh - self.mean_h
            ds = fs - self.mean_s
            self.cov_hh = dh.T @ dh / (self.n - 1)
            self.cov_ss = ds.T @ ds / (self.n - 1)
            self.cov_hs = dh.T @ ds / (self.n - 1)
            self.second_s = fs.T @ fs / self.n
        else:
            self.second_s = np.outer(fs[0], fs[0])

    def __call__(self, c) -> EnergyEstimate:
        c = np.asarray(c, dtype=float)
        q = c[self._iu] * c[self._ju] * self._w
        mx = float(q @ self.mean_h)
        my = float(q @ self.mean_s)
        rms = np.sqrt(max(float(q @ self.second_s @ q), 0.0))
        if not abs(my) > SINGULAR_RTOL * rms:
            raise SingularNormalization(f"mean normalization {my:.3e} vs rms {rms:.3e}")
        if self.n < 2:
            return EnergyEstimate(mx / my, 0.0, self.n, False)
        vx = float(q @ self.cov_hh @ q)
        vy = float(q @ self.cov_ss @ q)
        cxy = float(q @ self.cov_hs @ q)
        err = np.sqrt(_delta_variance(self.n, mx, my, vx, vy, cxy))
        return EnergyEstimate(mx / my, float(err), self.n, False)


def observable_at(t_op: SampleTensors, c_opt) -> EnergyEstimate:
    """Estimate another observable in the subspace state found for the energy."""
    est = ratio_estimate(t_op, c_opt)
    return EnergyEstimate(est.value, est.std_error, est.n_samples, True)
