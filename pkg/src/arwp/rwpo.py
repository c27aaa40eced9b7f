"""Score estimation through the regularized Wasserstein proximal operator.

For an empirical distribution of N particles the proximal density is a sum of
potential-aware Gaussian kernels.  Its log-gradient at a point x reduces to

    score(x) = -beta/2 grad V(x) - beta/(2T) x + beta/(2T) sum_j softmax(W_{x,.})_j x_j

where W is the N-column interaction matrix built from pairwise distances and
per-particle log-normalizers.  Everything is computed in log-space: W entries
scale like -||x_i - x_j||^2 / (4T) and would overflow a naive exponential.

The constant (4 pi T / beta)^{d/2} common to all normalizers is dropped
throughout; it cancels inside the row softmax.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .core import (
    LAPLACE,
    STREAM_NORMALIZER,
    ConfigError,
    ParticleEnsemble,
    RngStream,
    SamplerConfig,
)

__all__ = [
    "InteractionData",
    "ScoreField",
    "log_normalizer",
    "log_normalizers",
    "interaction_matrix",
    "rwpo_score",
    "rwpo_score_at",
]


@dataclass(frozen=True)
class InteractionData:
    """Interaction matrix W and its row softmax.

    ``log_z`` holds the per-particle log-normalizers (up to a shared additive
    constant); ``softmax_w`` is row-stochastic.
    """

    log_z: np.ndarray      # (N,)
    w: np.ndarray          # (M, N); M query rows over N ensemble columns
    softmax_w: np.ndarray  # (M, N)


@dataclass(frozen=True)
class ScoreField:
    """Estimated score of the proximal density at each query point."""

    scores: np.ndarray     # (d, M)


def _log_mean_exp(values: np.ndarray, axis: int = -1) -> np.ndarray:
    m = values.max(axis=axis, keepdims=True)
    out = m.squeeze(axis) + np.log(np.exp(values - m).mean(axis=axis))
    return out


def _row_softmax(w: np.ndarray) -> np.ndarray:
    shifted = w - w.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_normalizer(potential, y, cfg: SamplerConfig, rng: RngStream) -> float:
    """Log-normalizer log Z(y) of the proximal kernel, up to a constant.

    Monte Carlo mode averages exp(-beta V(z) / 2) over z ~ N(y, 2T/beta I)
    via a log-mean-exp; Laplace mode returns -beta V(y) / 2, whose dropped
    curvature constant is shared by all y.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if cfg.normalizer == LAPLACE:
        return float(-0.5 * cfg.beta * potential.value(y))
    if not cfg.T > 0:
        raise ConfigError("Monte Carlo normalizer requires T > 0")
    gen = rng.generator()
    z = y[None, :] + np.sqrt(2.0 * cfg.T / cfg.beta) * gen.standard_normal(
        (cfg.mc_samples, y.shape[0])
    )
    log_terms = -0.5 * cfg.beta * potential.value(z.T)
    return float(_log_mean_exp(np.atleast_1d(log_terms)))


def log_normalizers(
    ensemble: ParticleEnsemble, potential, cfg: SamplerConfig
) -> np.ndarray:
    """Vectorized log Z over all particles of the ensemble.

    Monte Carlo draws come from a fresh stream per (iteration, particle), so
    z-samples are never reused across iterations and the result is identical
    under any evaluation order.
    """
    x = ensemble.positions
    d, n = x.shape
    if cfg.normalizer == LAPLACE:
        return -0.5 * cfg.beta * potential.value(x)
    if not cfg.T > 0:
        raise ConfigError("Monte Carlo normalizer requires T > 0")

    stream = RngStream(cfg.seed, STREAM_NORMALIZER)
    scale = np.sqrt(2.0 * cfg.T / cfg.beta)
    draws = np.empty((n, cfg.mc_samples, d))
    for j in range(n):
        gen = stream.generator(ensemble.iteration, j)
        draws[j] = gen.standard_normal((cfg.mc_samples, d))
    z = x.T[:, None, :] + scale * draws                      # (N, mc, d)
    log_terms = -0.5 * cfg.beta * potential.value(z.reshape(-1, d).T)
    return _log_mean_exp(log_terms.reshape(n, cfg.mc_samples), axis=1)


def _squared_distances(query: np.ndarray, points: np.ndarray) -> np.ndarray:
    # (M, N) pairwise ||q_m - x_j||^2, clipped against negative round-off
    q_sq = np.einsum("dm,dm->m", query, query)
    x_sq = np.einsum("dn,dn->n", points, points)
    sq = q_sq[:, None] + x_sq[None, :] - 2.0 * (query.T @ points)
    return np.maximum(sq, 0.0)


def interaction_matrix(
    ensemble: ParticleEnsemble,
    potential,
    cfg: SamplerConfig,
    log_z: np.ndarray,
    query: np.ndarray | None = None,
) -> InteractionData:
    """W_{i,j} = -beta ||x_i - x_j||^2 / (4T) - log Z(x_j), row-softmaxed.

    Rows may range over arbitrary query points; columns always range over the
    ensemble.  Requires T > 0 (at T = 0 the kernel collapses to the identity
    and the proximal samplers reduce to plain gradient flow).
    """
    if not cfg.T > 0:
        raise ConfigError("interaction matrix requires T > 0")
    x = ensemble.positions
    q = x if query is None else np.asarray(query, dtype=float)
    log_z = np.asarray(log_z, dtype=float)
    if log_z.shape != (x.shape[1],):
        raise ValueError(f"log_z must have shape ({x.shape[1]},), got {log_z.shape}")
    w = -cfg.beta * _squared_distances(q, x) / (4.0 * cfg.T) - log_z[None, :]
    return InteractionData(log_z=log_z, w=w, softmax_w=_row_softmax(w))


def rwpo_score_at(
    query: np.ndarray,
    ensemble: ParticleEnsemble,
    potential,
    cfg: SamplerConfig,
    interaction: InteractionData | None = None,
) -> ScoreField:
    """Score of the proximal density evaluated at arbitrary query points.

    Args:
        query: d x M matrix of evaluation points.
        interaction: reuse a precomputed interaction matrix for these query
            points; when omitted both normalizers and W are computed here.
    """
    q = np.asarray(query, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    if interaction is None:
        log_z = log_normalizers(ensemble, potential, cfg)
        interaction = interaction_matrix(ensemble, potential, cfg, log_z, query=q)
    smoothed = ensemble.positions @ interaction.softmax_w.T    # (d, M)
    half_beta = 0.5 * cfg.beta
    scores = -half_beta * potential.grad(q) - (half_beta / cfg.T) * (q - smoothed)
    return ScoreField(scores=scores)


def rwpo_score(
    ensemble: ParticleEnsemble, potential, cfg: SamplerConfig
) -> ScoreField:
    """Score of the proximal density at every particle of the ensemble."""
    return rwpo_score_at(ensemble.positions, ensemble, potential, cfg)
