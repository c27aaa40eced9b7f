"""Shared domain types: particle ensembles, sampler configuration, RNG streams.

Particles live in d x N matrices (one particle per column).  Ensembles are
immutable snapshots: a sampler step consumes one ensemble and builds the next,
so concurrent readers never observe partial updates.

Randomness is counter-based (Philox) and keyed by ``(seed, stream_id,
counter)``.  The same key always yields the same draws, independent of thread
scheduling, which is what makes the stochastic baselines reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

__all__ = [
    "ConfigError",
    "DivergenceError",
    "Damping",
    "SamplerConfig",
    "RngStream",
    "ParticleEnsemble",
    "init_gaussian_ensemble",
    "ensemble_covariance",
    "MONTE_CARLO",
    "LAPLACE",
]

_UINT64_MASK = (1 << 64) - 1

# Stream purposes. Each consumer of randomness owns a distinct stream id so
# that adding a draw in one place never shifts the draws of another.
STREAM_INIT = 0
STREAM_NORMALIZER = 1
STREAM_ULA = 2
STREAM_MALA_PROPOSAL = 3
STREAM_MALA_ACCEPT = 4
STREAM_ILA = 5
STREAM_KLMC = 6

MONTE_CARLO = "montecarlo"
LAPLACE = "laplace"


class ConfigError(ValueError):
    """Invalid sampler or experiment configuration."""


class DivergenceError(RuntimeError):
    """A trajectory produced a non-finite state.

    Attributes:
        iteration: first iteration (or integration time) at which the state
            went bad.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class Damping:
    """Momentum damping schedule.

    ``constant`` keeps a fixed coefficient a > 0, giving the heavy-ball
    momentum factor 1 - a*eta.  ``nesterov`` uses the time-varying factor
    (k - 1) / (k + 2), clamped at zero for the first step.
    """

    kind: str
    a: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "nesterov"):
            raise ConfigError(f"unknown damping kind {self.kind!r}")
        if self.kind == "constant":
            if self.a is None or not self.a > 0:
                raise ConfigError("constant damping requires a > 0")
        elif self.a is not None:
            raise ConfigError("nesterov damping takes no coefficient")

    @classmethod
    def constant(cls, a: float) -> "Damping":
        return cls("constant", float(a))

    @classmethod
    def nesterov(cls) -> "Damping":
        return cls("nesterov")

    def momentum_factor(self, k: int, eta: float) -> float:
        """Multiplier applied to the previous momentum at (1-based) step k."""
        if self.kind == "constant":
            return 1.0 - self.a * eta
        return max((k - 1.0) / (k + 2.0), 0.0)


@dataclass(frozen=True)
class SamplerConfig:
    """Parameters shared by every sampler.

    ``damping`` carries the heavy-ball coefficient a for the accelerated
    proximal sampler, and doubles as the friction/Lipschitz knob for the
    kinetic Langevin baselines (KLMC's a, ILA's L).
    """

    eta: float
    T: float = 0.0
    beta: float = 1.0
    damping: Damping | None = None
    mc_samples: int = 100
    normalizer: str = MONTE_CARLO
    seed: int = 0
    max_iter: int = 100

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError(f"step-size eta must be positive, got {self.eta}")
        if not self.beta > 0:
            raise ConfigError(f"diffusion beta must be positive, got {self.beta}")
        if self.T < 0:
            raise ConfigError(f"regularization T must be >= 0, got {self.T}")
        if self.mc_samples < 1:
            raise ConfigError("mc_samples must be >= 1")
        if self.normalizer not in (MONTE_CARLO, LAPLACE):
            raise ConfigError(f"unknown normalizer {self.normalizer!r}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")


@dataclass(frozen=True)
class RngStream:
    """A named, splittable random stream.

    Draws come from a Philox counter-based generator keyed by
    ``(seed, stream_id)`` with the 256-bit counter seeded from up to three
    extra indices (iteration, particle, ...).  Identical keys and counters
    give identical draws on any machine, under any parallel schedule.
    """

    seed: int
    stream_id: int

    def generator(self, *counters: int) -> np.random.Generator:
        if len(counters) > 3:
            raise ValueError("at most 3 counter indices are supported")
        counter = [0, 0, 0, 0]
        for i, c in enumerate(counters):
            counter[i + 1] = int(c) & _UINT64_MASK
        key = [int(self.seed) & _UINT64_MASK, int(self.stream_id) & _UINT64_MASK]
        return np.random.Generator(np.random.Philox(counter=counter, key=key))


@dataclass(frozen=True)
class ParticleEnsemble:
    """Positions and momenta of N particles in R^d, as d x N matrices."""

    positions: np.ndarray
    momenta: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        p = np.asarray(self.momenta, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"positions must be a d x N matrix, got shape {x.shape}")
        if x.shape != p.shape:
            raise ValueError(
                f"positions {x.shape} and momenta {p.shape} must have the same shape"
            )
        if self.iteration < 0:
            raise ValueError("iteration must be nonnegative")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "momenta", p)

    @property
    def dim(self) -> int:
        return self.positions.shape[0]

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]


def init_gaussian_ensemble(mean, cov, n: int, seed: int) -> ParticleEnsemble:
    """Draw N i.i.d. Gaussian particles; momenta start at zero.

    Positions are mean + L z with L the Cholesky factor of ``cov`` and z
    standard normal, so the draw is exact (not approximate) for any SPD
    covariance.

    Args:
        mean: length-d vector (scalars are treated as 1-D).
        cov: d x d SPD matrix, or a positive scalar in 1-D.
        n: number of particles, >= 1.
        seed: RNG seed; the initializer uses its own stream.

    Raises:
        ValueError: if ``cov`` is not symmetric positive definite.
    """
    mu = np.atleast_1d(np.asarray(mean, dtype=float))
    sigma = np.asarray(cov, dtype=float)
    if sigma.ndim == 0:
        sigma = sigma.reshape(1, 1)
    d = mu.shape[0]
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma.shape != (d, d):
        raise ValueError(f"cov must be {d} x {d}, got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
        raise ValueError("covariance matrix is not symmetric")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance matrix is not positive definite") from exc

    rng = RngStream(seed, STREAM_INIT).generator()
    z = rng.standard_normal((d, n))
    positions = mu[:, None] + chol @ z
    return ParticleEnsemble(positions=positions, momenta=np.zeros((d, n)), iteration=0)


def ensemble_covariance(ensemble: ParticleEnsemble) -> np.ndarray:
    """Population (1/N) covariance of the particle positions.

    The 1/N convention matches comparisons against analytic covariances,
    where the O(1/N) bias is negligible at the sizes used here.
    """
    x = ensemble.positions
    n = x.shape[1]
    if n < 2:
        raise ValueError("covariance needs at least 2 particles")
    centered = x - x.mean(axis=1, keepdims=True)
    return (centered @ centered.T) / n
