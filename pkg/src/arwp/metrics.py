"""Empirical distribution quality metrics.

Gaussian KDE on a regular grid, Riemann-sum KL divergence against a known
(unnormalized) log-density, and the covariance trace error.  Grids use cell
centers, so sums times the cell volume are midpoint-rule quadratures.

The KL target is always renormalized over the integration box.  That makes
targets known only up to a constant usable directly, and keeps the number
meaningful for heavy-tailed targets whose mass leaks outside the box; the
box mass is reported so the offset is visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridSpec",
    "DensityGrid",
    "kde_density",
    "grid_kl",
    "trace_error",
]

# Densities below this floor contribute nothing to KL sums (x log x -> 0).
KL_DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box [lo, hi]^d discretized with cell width ``mesh``."""

    lo: np.ndarray
    hi: np.ndarray
    mesh: float

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same dimension")
        if not np.all(hi > lo):
            raise ValueError("need hi > lo componentwise")
        if not self.mesh > 0:
            raise ValueError("mesh must be positive")
        counts = (hi - lo) / self.mesh
        if not np.allclose(counts, np.round(counts), rtol=0.0, atol=1e-8 * counts.max()):
            raise ValueError("(hi - lo) must be an integer multiple of mesh")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(round(n)) for n in (self.hi - self.lo) / self.mesh)

    def axes(self) -> list[np.ndarray]:
        """Cell-center coordinates along each dimension."""
        return [
            self.lo[i] + (np.arange(n) + 0.5) * self.mesh
            for i, n in enumerate(self.shape)
        ]

    @property
    def cell_volume(self) -> float:
        return self.mesh**self.dim

    def nodes(self) -> np.ndarray:
        """All cell centers as a d x (prod shape) matrix, C-order."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in grids])


@dataclass(frozen=True)
class DensityGrid:
    """Nonnegative density values on the cell centers of a grid."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid shape {self.grid.shape}"
            )
        object.__setattr__(self, "values", values)

    @property
    def mass(self) -> float:
        """Midpoint-rule integral over the box."""
        return float(self.values.sum() * self.grid.cell_volume)


def _gauss_1d(axis: np.ndarray, centers: np.ndarray, bandwidth: float) -> np.ndarray:
    # (nodes, samples) normalized 1-D kernel factors
    z = (axis[:, None] - centers[None, :]) / bandwidth
    return np.exp(-0.5 * z**2) / (math.sqrt(2.0 * math.pi) * bandwidth)


def kde_density(samples: np.ndarray, bandwidth: float, grid: GridSpec) -> DensityGrid:
    """Isotropic Gaussian KDE with covariance bandwidth^2 I on the grid.

    Kernels are normalized over R^d (not over the box).  The isotropic kernel
    factorizes over dimensions, so in 1-D/2-D the evaluation is a matrix
    product over samples instead of a full (nodes x samples) broadcast.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] != grid.dim:
        raise ValueError(f"samples have dimension {x.shape[0]}, grid has {grid.dim}")
    n = x.shape[1]
    if n < 1:
        raise ValueError("need at least one sample")
    axes = grid.axes()
    if grid.dim == 1:
        values = _gauss_1d(axes[0], x[0], bandwidth).mean(axis=1)
    elif grid.dim == 2:
        kx = _gauss_1d(axes[0], x[0], bandwidth)
        ky = _gauss_1d(axes[1], x[1], bandwidth)
        values = (kx @ ky.T) / n
    else:
        nodes = grid.nodes()
        values = np.zeros(nodes.shape[1])
        norm = (math.sqrt(2.0 * math.pi) * bandwidth) ** grid.dim
        for j in range(n):
            sq = np.sum((nodes - x[:, j : j + 1]) ** 2, axis=0)
            values += np.exp(-0.5 * sq / bandwidth**2)
        values = values.reshape(grid.shape) / (n * norm)
    return DensityGrid(values=values, grid=grid)


def target_box_mass(target_log_density, grid: GridSpec) -> float:
    """Midpoint-rule integral of exp(log-density) over the box."""
    logp = np.asarray(target_log_density(grid.nodes()), dtype=float)
    m = logp.max()
    return float(np.exp(m) * np.exp(logp - m).sum() * grid.cell_volume)


def grid_kl(estimated: DensityGrid, target_log_density, grid: GridSpec) -> float:
    """Riemann-sum KL divergence of an estimated density from a target.

    ``target_log_density`` maps a d x M matrix of points to M log-density
    values, normalized or not: the target is renormalized over the box before
    the divergence is taken.  Cells where the estimate is below the floor
    contribute zero.
    """
    if (
        estimated.grid.mesh != grid.mesh
        or not np.array_equal(estimated.grid.lo, grid.lo)
        or not np.array_equal(estimated.grid.hi, grid.hi)
    ):
        raise ValueError("estimated density lives on an incompatible grid")
    logp = np.asarray(target_log_density(grid.nodes()), dtype=float)
    m = logp.max()
    log_mass = m + np.log(np.exp(logp - m).sum() * grid.cell_volume)
    logp = (logp - log_mass).reshape(grid.shape)

    rho = estimated.values
    mask = rho > KL_DENSITY_FLOOR
    contrib = rho[mask] * (np.log(rho[mask]) - logp[mask])
    return float(contrib.sum() * grid.cell_volume)


def trace_error(sigma: np.ndarray, sigma_star: np.ndarray) -> float:
    """|Tr(Sigma - Sigma*)|, the scalar covariance-bias summary."""
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    s_star = np.atleast_2d(np.asarray(sigma_star, dtype=float))
    if s.shape != s_star.shape:
        raise ValueError("covariances must have the same shape")
    return float(abs(np.trace(s - s_star)))
