"""One-step update rules mapping an ensemble to the next ensemble.

Interacting, deterministic methods:

* ``arwp_step``  -- accelerated proximal sampler: symplectic Euler on
  (position, momentum) with damped momentum and the proximal score.
* ``brwp_step``  -- its non-accelerated, position-only counterpart.

Independent-particle stochastic baselines:

* ``ula_step``   -- Euler--Maruyama on the overdamped Langevin equation.
* ``mala_step``  -- ULA proposal with a Metropolis--Hastings correction.
* ``ila_step``   -- inertial (heavy-ball) Langevin with momentum stored as a
  position difference.
* ``klmc_step``  -- exact exponential integrator of kinetic Langevin with the
  correlated position/momentum Gaussian pair.

Every step consumes an immutable ensemble, checks the result for finiteness,
and returns a fresh ensemble with the iteration counter advanced.  Any
non-finite coordinate raises :class:`DivergenceError` naming the iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    STREAM_ILA,
    STREAM_KLMC,
    STREAM_MALA_PROPOSAL,
    STREAM_ULA,
    ConfigError,
    DivergenceError,
    ParticleEnsemble,
    RngStream,
    SamplerConfig,
)
from .rwpo import interaction_matrix, log_normalizers

__all__ = [
    "SAMPLER_NAMES",
    "KlmcCoefficients",
    "arwp_step",
    "brwp_step",
    "ula_step",
    "mala_step",
    "ila_step",
    "klmc_coefficients",
    "klmc_step",
    "mh_log_accept",
    "step_function",
    "validate_sampler_config",
]

ILA_FRICTION = 1.5

SAMPLER_NAMES = ("arwp-hb", "arwp-nesterov", "brwp", "ula", "mala", "ila", "klmc")


def _next(ensemble, positions, momenta, iteration):
    if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(momenta))):
        raise DivergenceError(
            f"sampler diverged at iteration {iteration}", iteration=iteration
        )
    return ParticleEnsemble(positions=positions, momenta=momenta, iteration=iteration)


def _constant_damping(cfg: SamplerConfig, role: str) -> float:
    if cfg.damping is None or cfg.damping.kind != "constant":
        raise ConfigError(f"{role} requires a constant damping coefficient")
    return cfg.damping.a


def _interaction_drift(ensemble, potential, cfg):
    # X - X softmax(W)^T: each particle pulled toward its attention-weighted
    # ensemble average
    log_z = log_normalizers(ensemble, potential, cfg)
    inter = interaction_matrix(ensemble, potential, cfg, log_z)
    x = ensemble.positions
    return x - x @ inter.softmax_w.T


def arwp_step(
    ensemble: ParticleEnsemble,
    potential,
    cfg: SamplerConfig,
    score_fn=None,
) -> ParticleEnsemble:
    """Accelerated proximal step: momentum first, then position (symplectic).

        P' = factor_k P - eta/2 grad V(X) + eta/(2T) (X - X softmax(W)^T)
        X' = X + eta P'

    ``factor_k`` comes from the damping schedule at step k = iteration + 1.
    ``score_fn`` (d x N -> d x N) replaces the proximal score estimate when
    given; the momentum update then uses the raw form
    P' = factor_k P - eta (grad V + beta^{-1} score).
    """
    if cfg.damping is None:
        raise ConfigError("accelerated sampler requires a damping schedule")
    k = ensemble.iteration + 1
    factor = cfg.damping.momentum_factor(k, cfg.eta)
    x, p = ensemble.positions, ensemble.momenta
    if score_fn is None:
        drift = _interaction_drift(ensemble, potential, cfg)
        momenta = (
            factor * p
            - 0.5 * cfg.eta * potential.grad(x)
            + cfg.eta / (2.0 * cfg.T) * drift
        )
    else:
        momenta = factor * p - cfg.eta * (
            potential.grad(x) + score_fn(x) / cfg.beta
        )
    positions = x + cfg.eta * momenta
    return _next(ensemble, positions, momenta, k)


def brwp_step(ensemble, potential, cfg: SamplerConfig) -> ParticleEnsemble:
    """Position-only proximal step; momenta are left untouched."""
    x = ensemble.positions
    drift = _interaction_drift(ensemble, potential, cfg)
    positions = x - 0.5 * cfg.eta * potential.grad(x) + cfg.eta / (2.0 * cfg.T) * drift
    return _next(ensemble, positions, ensemble.momenta, ensemble.iteration + 1)


def ula_step(
    ensemble, potential, cfg: SamplerConfig, rng: RngStream | None = None
) -> ParticleEnsemble:
    """Euler--Maruyama step x' = x - eta grad V(x) + sqrt(2 eta / beta) xi."""
    if rng is None:
        rng = RngStream(cfg.seed, STREAM_ULA)
    x = ensemble.positions
    xi = rng.generator(ensemble.iteration).standard_normal(x.shape)
    positions = x - cfg.eta * potential.grad(x) + np.sqrt(2.0 * cfg.eta / cfg.beta) * xi
    return _next(ensemble, positions, ensemble.momenta, ensemble.iteration + 1)


def mh_log_accept(log_target_new, log_target_old, log_q_reverse, log_q_forward):
    """Log Metropolis--Hastings acceptance ratio (before the min with 0)."""
    return log_target_new - log_target_old + log_q_reverse - log_q_forward


def mala_step(
    ensemble, potential, cfg: SamplerConfig, rng: RngStream | None = None
) -> ParticleEnsemble:
    """ULA proposal + Metropolis accept/reject targeting exp(-beta V).

    All densities are handled in the log domain.  ``rng`` seeds the proposal
    noise; the acceptance uniforms come from the stream one id above it, so a
    single (seed, stream) pair fixes the whole chain.
    """
    if rng is None:
        rng = RngStream(cfg.seed, STREAM_MALA_PROPOSAL)
    accept_rng = RngStream(rng.seed, rng.stream_id + 1)
    x = ensemble.positions
    step_var = 2.0 * cfg.eta / cfg.beta

    mean_fwd = x - cfg.eta * potential.grad(x)
    xi = rng.generator(ensemble.iteration).standard_normal(x.shape)
    proposal = mean_fwd + np.sqrt(step_var) * xi
    mean_rev = proposal - cfg.eta * potential.grad(proposal)

    log_q_forward = -np.sum((proposal - mean_fwd) ** 2, axis=0) / (2.0 * step_var)
    log_q_reverse = -np.sum((x - mean_rev) ** 2, axis=0) / (2.0 * step_var)
    log_alpha = mh_log_accept(
        -cfg.beta * potential.value(proposal),
        -cfg.beta * potential.value(x),
        log_q_reverse,
        log_q_forward,
    )
    u = accept_rng.generator(ensemble.iteration).random(x.shape[1])
    accept = np.log(u) < log_alpha
    positions = np.where(accept, proposal, x)
    return _next(ensemble, positions, ensemble.momenta, ensemble.iteration + 1)


def ila_step(
    ensemble, potential, cfg: SamplerConfig, rng: RngStream | None = None
) -> ParticleEnsemble:
    """Inertial Langevin step with momentum stored as a position difference.

    With friction epsilon = 1.5 fixed and the Lipschitz knob L taken from the
    (constant) damping coefficient:

        beta_inertia = 1 - epsilon eta,   tau = eta^2 / L
        P' = beta_inertia P - tau grad V(X) + sqrt(2 tau / beta) xi
        X' = X + P'

    so P' = X' - X.  The noise enters the position update scaled by
    sqrt(2 tau / beta).
    """
    lipschitz = _constant_damping(cfg, "inertial Langevin")
    if rng is None:
        rng = RngStream(cfg.seed, STREAM_ILA)
    if ILA_FRICTION * cfg.eta >= 1.0:
        warnings.warn(
            f"inertia coefficient 1 - {ILA_FRICTION} * eta is nonpositive for "
            f"eta={cfg.eta}; the update loses its heavy-ball interpretation",
            RuntimeWarning,
            stacklevel=2,
        )
    beta_inertia = 1.0 - ILA_FRICTION * cfg.eta
    tau = cfg.eta**2 / lipschitz
    x, p = ensemble.positions, ensemble.momenta
    xi = rng.generator(ensemble.iteration).standard_normal(x.shape)
    momenta = beta_inertia * p - tau * potential.grad(x) + np.sqrt(2.0 * tau / cfg.beta) * xi
    positions = x + momenta
    return _next(ensemble, positions, momenta, ensemble.iteration + 1)


@dataclass(frozen=True)
class KlmcCoefficients:
    """Exponential-integrator weights and the per-dimension noise covariance.

    ``noise_cov`` is int_0^eta (psi_0, psi_1)(psi_0, psi_1)^T dt: the [0,0]
    block integrates psi_0^2 (momentum channel), the [1,1] block psi_1^2
    (position channel).
    """

    psi0: float
    psi1: float
    psi2: float
    noise_cov: np.ndarray


def klmc_coefficients(a: float, eta: float) -> KlmcCoefficients:
    """Closed forms psi_0 = e^{-a t}, psi_{k+1} = int psi_k, and the noise cov."""
    if not a > 0:
        raise ConfigError(f"klmc damping must be positive, got {a}")
    if eta < 0:
        raise ConfigError("step-size must be nonnegative")
    u = np.exp(-a * eta)
    u2 = np.exp(-2.0 * a * eta)
    psi0 = u
    psi1 = (1.0 - u) / a
    psi2 = (a * eta + u - 1.0) / a**2
    c00 = (1.0 - u2) / (2.0 * a)
    c01 = (1.0 - u) ** 2 / (2.0 * a**2)
    c11 = (2.0 * a * eta - u2 + 4.0 * u - 3.0) / (2.0 * a**3)
    return KlmcCoefficients(
        psi0=float(psi0),
        psi1=float(psi1),
        psi2=float(psi2),
        noise_cov=np.array([[c00, c01], [c01, c11]]),
    )


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(matrix)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def klmc_step(
    ensemble, potential, cfg: SamplerConfig, rng: RngStream | None = None
) -> ParticleEnsemble:
    """Exact exponential-integrator step of kinetic Langevin dynamics.

        X' = X + psi_1 P - psi_2 grad V(X) + sqrt(2a/beta) xi
        P' = psi_0 P - psi_1 grad V(X) + sqrt(2a/beta) xi'

    (xi, xi') is the correlated Gaussian pair per dimension: xi carries the
    psi_1-channel variance (position), xi' the psi_0-channel (momentum).
    """
    a = _constant_damping(cfg, "kinetic Langevin")
    if rng is None:
        rng = RngStream(cfg.seed, STREAM_KLMC)
    coeff = klmc_coefficients(a, cfg.eta)
    c = coeff.noise_cov
    pos_mom_cov = np.array([[c[1, 1], c[0, 1]], [c[0, 1], c[0, 0]]])
    chol_like = _psd_sqrt(pos_mom_cov)

    x, p = ensemble.positions, ensemble.momenta
    z = rng.generator(ensemble.iteration).standard_normal((2,) + x.shape)
    noise = np.einsum("ab,b...->a...", chol_like, z)
    scale = np.sqrt(2.0 * a / cfg.beta)
    grad = potential.grad(x)
    positions = x + coeff.psi1 * p - coeff.psi2 * grad + scale * noise[0]
    momenta = coeff.psi0 * p - coeff.psi1 * grad + scale * noise[1]
    return _next(ensemble, positions, momenta, ensemble.iteration + 1)


_STEP_FUNCTIONS = {
    "arwp-hb": arwp_step,
    "arwp-nesterov": arwp_step,
    "brwp": brwp_step,
    "ula": ula_step,
    "mala": mala_step,
    "ila": ila_step,
    "klmc": klmc_step,
}


def step_function(name: str):
    """Look up a sampler's one-step update by its CLI name."""
    try:
        return _STEP_FUNCTIONS[name]
    except KeyError:
        raise ConfigError(
            f"unknown sampler {name!r}; expected one of {SAMPLER_NAMES}"
        ) from None


def validate_sampler_config(name: str, cfg: SamplerConfig) -> None:
    """Check name-specific requirements before a run starts."""
    if name not in _STEP_FUNCTIONS:
        raise ConfigError(f"unknown sampler {name!r}; expected one of {SAMPLER_NAMES}")
    if name in ("arwp-hb", "arwp-nesterov", "brwp") and not cfg.T > 0:
        raise ConfigError(f"sampler {name!r} requires regularization T > 0")
    if name == "arwp-hb" and (cfg.damping is None or cfg.damping.kind != "constant"):
        raise ConfigError("arwp-hb requires constant damping with a > 0")
    if name == "arwp-nesterov" and (
        cfg.damping is None or cfg.damping.kind != "nesterov"
    ):
        raise ConfigError("arwp-nesterov requires the nesterov damping schedule")
    if name in ("ila", "klmc"):
        _constant_damping(cfg, name)
