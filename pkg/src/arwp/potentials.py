"""Target potentials V and their gradients.

Every potential evaluates on a single point (shape ``(d,)``) or on a batch of
particles (shape ``(d, N)``), returning a scalar / length-N vector for values
and an array of the input shape for gradients.  Potentials are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "QuadraticPotential",
    "RosenbrockPotential",
    "GaussianMixturePotential",
    "make_potential",
    "POTENTIAL_KINDS",
]


def _as_batch(x):
    """View input as (d, N); remember whether it was a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[:, None], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"expected a vector or d x N matrix, got shape {arr.shape}")


class QuadraticPotential:
    """V(x) = x^T Lambda^{-1} x / 2 for an SPD covariance Lambda.

    Caches both Lambda and its inverse; exposes the extreme eigenvalues and
    the condition number, which drive step-size and damping choices.
    """

    kind = "quadratic"

    def __init__(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.ndim == 0:
            lam = lam.reshape(1, 1)
        elif lam.ndim == 1:
            lam = np.diag(lam)
        if lam.shape[0] != lam.shape[1]:
            raise ValueError("lambda must be square")
        if not np.allclose(lam, lam.T, atol=1e-12 * max(1.0, np.abs(lam).max())):
            raise ValueError("lambda must be symmetric")
        eigs = np.linalg.eigvalsh(lam)
        if eigs.min() <= 0:
            raise ValueError("lambda must be positive definite")
        self.lam = lam
        self.lam_inv = np.linalg.inv(lam)
        self.lambda_min = float(eigs.min())
        self.lambda_max = float(eigs.max())
        self.kappa = self.lambda_max / self.lambda_min

    @property
    def dim(self) -> int:
        return self.lam.shape[0]

    def value(self, x):
        xb, single = _as_batch(x)
        v = 0.5 * np.einsum("dn,dn->n", xb, self.lam_inv @ xb)
        return float(v[0]) if single else v

    def grad(self, x):
        xb, single = _as_batch(x)
        g = self.lam_inv @ xb
        return g[:, 0] if single else g


class RosenbrockPotential:
    """Scaled 2-D Rosenbrock well, V(x, y) = s [(1-x)^2 + 100 (y-x^2)^2].

    The gradient is the exact derivative of V (note the -2(1-x) term in
    d/dx); it agrees with central finite differences everywhere, and
    vanishes only at the global minimizer (1, 1).
    """

    kind = "rosenbrock"

    def __init__(self, scale: float = 1.0 / 20.0):
        if not scale > 0:
            raise ValueError("scale must be positive")
        self.scale = float(scale)

    @property
    def dim(self) -> int:
        return 2

    def value(self, x):
        xb, single = _as_batch(x)
        if xb.shape[0] != 2:
            raise ValueError("rosenbrock potential is 2-D")
        a, b = xb[0], xb[1]
        v = self.scale * ((1.0 - a) ** 2 + 100.0 * (b - a**2) ** 2)
        return float(v[0]) if single else v

    def grad(self, x):
        xb, single = _as_batch(x)
        if xb.shape[0] != 2:
            raise ValueError("rosenbrock potential is 2-D")
        a, b = xb[0], xb[1]
        resid = b - a**2
        g = self.scale * np.stack([-2.0 * (1.0 - a) - 400.0 * a * resid, 200.0 * resid])
        return g[:, 0] if single else g


class GaussianMixturePotential:
    """V(x) = -log sum_i w_i exp(-||x - c_i||^2 / (2 sigma_i^2)).

    Gradients use log-sum-exp stabilized responsibilities so evaluation stays
    finite arbitrarily far from every center.
    """

    kind = "gaussian-mixture"

    def __init__(self, centers, weights, bandwidths):
        centers = np.asarray(centers, dtype=float)
        if centers.ndim == 1:
            centers = centers[:, None]
        weights = np.asarray(weights, dtype=float)
        bandwidths = np.asarray(bandwidths, dtype=float)
        if not (len(centers) == len(weights) == len(bandwidths)):
            raise ValueError("centers, weights and bandwidths must have equal length")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        if np.any(bandwidths <= 0):
            raise ValueError("bandwidths must be positive")
        self.centers = centers          # (k, d)
        self.weights = weights          # (k,)
        self.bandwidths = bandwidths    # (k,) variances sigma_i^2

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def _component_logs(self, xb):
        # log w_i - ||x - c_i||^2 / (2 sigma_i^2), shape (k, N)
        diff = xb[None, :, :] - self.centers[:, :, None]          # (k, d, N)
        sq = np.einsum("kdn,kdn->kn", diff, diff)
        return np.log(self.weights)[:, None] - sq / (2.0 * self.bandwidths[:, None]), diff

    def value(self, x):
        xb, single = _as_batch(x)
        logs, _ = self._component_logs(xb)
        m = logs.max(axis=0)
        v = -(m + np.log(np.exp(logs - m).sum(axis=0)))
        return float(v[0]) if single else v

    def grad(self, x):
        xb, single = _as_batch(x)
        logs, diff = self._component_logs(xb)
        m = logs.max(axis=0)
        resp = np.exp(logs - m)
        resp /= resp.sum(axis=0)                                   # (k, N)
        g = np.einsum("kn,kdn->dn", resp / self.bandwidths[:, None], diff)
        return g[:, 0] if single else g


POTENTIAL_KINDS = {
    "quadratic": QuadraticPotential,
    "rosenbrock": RosenbrockPotential,
    "gaussian-mixture": GaussianMixturePotential,
}


def make_potential(kind: str, **params):
    """Construct a potential by its CLI name."""
    try:
        cls = POTENTIAL_KINDS[kind]
    except KeyError:
        raise ValueError(
            f"unknown potential {kind!r}; expected one of {sorted(POTENTIAL_KINDS)}"
        ) from None
    return cls(**params)
