"""Density-to-density maps applied after filtering, with their derivatives.

Two projections act on the filtered field: the density-gradient-informed (DGI)
projection deblurs structural edges by pushing each value toward its local
neighborhood extremes with a sharpness proportional to the local density
variation, and the low-thickness projection drives densities below rho_low
toward zero while leaving thicker material nearly untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ElementField, StructuredGrid
from .pde_filter import DensityFilter

DGI_THRESHOLD = 0.5
# Below this local density variation the deblurring map degenerates to the
# identity, matching the analytic beta -> 0 limit, so the guard is continuous.
DEGENERATE_RANGE = 1e-9
# Below this sharpness the smoothed step is evaluated by its leading-order
# series, which is the identity map.
SMALL_BETA = 1e-6


@dataclass(frozen=True)
class ProjectionParams:
    """Parameters of the post-filter projection chain."""

    rho_low: float = 0.1
    beta_bar: float = 1.0
    beta_hat: float = 0.1
    radius: float = 0.375
    eta_hat: float = DGI_THRESHOLD

    def __post_init__(self):
        if not 0 < self.rho_low < 1:
            raise ValueError(f"rho_low must be in (0, 1), got {self.rho_low}")
        if self.beta_bar < 1:
            raise ValueError(f"beta_bar must be >= 1, got {self.beta_bar}")
        if self.beta_hat < 0:
            raise ValueError(f"beta_hat must be >= 0, got {self.beta_hat}")
        if self.radius < 0:
            raise ValueError(f"neighborhood radius must be >= 0, got {self.radius}")
        if self.eta_hat != DGI_THRESHOLD:
            raise ValueError(f"deblurring threshold is fixed at {DGI_THRESHOLD}")


@dataclass
class NeighborhoodStats:
    """Per-element min/max/variation/midpoint of the field over each neighborhood."""

    rho_min: np.ndarray
    rho_max: np.ndarray
    diff: np.ndarray
    rho_mid: np.ndarray


def switching_weight(rho, beta: float, eta: float):
    """Sigmoid blend weight rising from 0 to 1 around a beta-shifted threshold."""
    if not 0 < eta < 1:
        raise ValueError(f"threshold eta must be in (0, 1), got {eta}")
    if not beta > 0:
        raise ValueError(f"sharpness beta must be positive, got {beta}")
    rho = np.asarray(rho, dtype=float)
    return 0.5 * (1.0 + np.tanh(beta * (rho / eta - eta ** (1.0 / beta))))


def lt_project(rho_tilde, beta_bar: float, rho_low: float):
    """Blend of the beta-power-penalized density and the identity.

    The switching weight keeps densities above rho_low nearly unchanged while
    suppressing lower values; beta_bar = 1 is handled as an exact identity.
    """
    if beta_bar < 1:
        raise ValueError(f"beta_bar must be >= 1, got {beta_bar}")
    rho = np.asarray(rho_tilde, dtype=float)
    if beta_bar == 1.0:
        return rho.copy()
    s = switching_weight(rho, beta_bar, rho_low)
    return (1.0 - s) * rho ** beta_bar + s * rho


def lt_project_derivative(rho_tilde, beta_bar: float, rho_low: float):
    if beta_bar < 1:
        raise ValueError(f"beta_bar must be >= 1, got {beta_bar}")
    rho = np.asarray(rho_tilde, dtype=float)
    if beta_bar == 1.0:
        return np.ones_like(rho)
    t = beta_bar * (rho / rho_low - rho_low ** (1.0 / beta_bar))
    tanh_t = np.tanh(t)
    s = 0.5 * (1.0 + tanh_t)
    s_prime = (beta_bar / (2.0 * rho_low)) * (1.0 - tanh_t ** 2)
    return s_prime * (rho - rho ** beta_bar) + (1.0 - s) * beta_bar * rho ** (beta_bar - 1.0) + s


def smoothed_heaviside(rho, beta, eta: float):
    """Standard tanh-smoothed step fixing H(0) = 0 and H(1) = 1.

    beta may be a scalar or a per-element array; values below SMALL_BETA fall
    back to the identity (the leading term of the small-beta series).
    """
    if not 0 < eta < 1:
        raise ValueError(f"threshold eta must be in (0, 1), got {eta}")
    rho = np.asarray(rho, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if (beta < 0).any():
        raise ValueError("sharpness beta must be >= 0")
    small = beta < SMALL_BETA
    b = np.where(small, 1.0, beta)
    num = np.tanh(b * eta) + np.tanh(b * (rho - eta))
    den = np.tanh(b * eta) + np.tanh(b * (1.0 - eta))
    return np.where(small, rho, num / den)


def smoothed_heaviside_derivative(rho, beta, eta: float):
    if not 0 < eta < 1:
        raise ValueError(f"threshold eta must be in (0, 1), got {eta}")
    rho = np.asarray(rho, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if (beta < 0).any():
        raise ValueError("sharpness beta must be >= 0")
    small = beta < SMALL_BETA
    b = np.where(small, 1.0, beta)
    den = np.tanh(b * eta) + np.tanh(b * (1.0 - eta))
    return np.where(small, 1.0, b * (1.0 - np.tanh(b * (rho - eta)) ** 2) / den)


def neighborhood_stats(grid: StructuredGrid, rho_tilde, r: float) -> NeighborhoodStats:
    """Min/max/variation/midpoint over each element's cached radius neighborhood."""
    values = rho_tilde.values if isinstance(rho_tilde, ElementField) else np.asarray(rho_tilde, dtype=float)
    if values.shape != (grid.n_elements,):
        raise ValueError(f"field shape {values.shape} does not match grid")
    table = grid.neighbor_table(r)
    gathered = values[table.indices]
    starts = table.indptr[:-1]
    rho_min = np.minimum.reduceat(gathered, starts)
    rho_max = np.maximum.reduceat(gathered, starts)
    diff = rho_max - rho_min
    return NeighborhoodStats(rho_min=rho_min, rho_max=rho_max, diff=diff,
                             rho_mid=rho_min + 0.5 * diff)


def dgi_project(rho_tilde, stats: NeighborhoodStats, beta_hat: float):
    """Deblurring projection: a smoothed step rescaled to the local density range.

    Each value is mapped within [rho_min, rho_max] of its neighborhood with
    sharpness beta_hat * diff, so flat regions (small diff) are barely touched
    while edges (large diff) are resharpened. Degenerate neighborhoods pass
    through unchanged.
    """
    if beta_hat < 0:
        raise ValueError(f"beta_hat must be >= 0, got {beta_hat}")
    rho = np.asarray(rho_tilde, dtype=float)
    degenerate = stats.diff < DEGENERATE_RANGE
    d = np.where(degenerate, 1.0, stats.diff)
    local = (rho - stats.rho_min) / d
    projected = stats.diff * smoothed_heaviside(local, beta_hat * stats.diff, DGI_THRESHOLD) \
        + stats.rho_min
    return np.where(degenerate, rho, projected)


def dgi_derivative(rho_tilde, stats: NeighborhoodStats, beta_hat: float):
    """Derivative of dgi_project in its density argument with stats held fixed.

    The outer diff scale and the inner 1/diff cancel, leaving the smoothed-step
    slope at the local coordinate; degenerate neighborhoods give 1.
    """
    if beta_hat < 0:
        raise ValueError(f"beta_hat must be >= 0, got {beta_hat}")
    rho = np.asarray(rho_tilde, dtype=float)
    degenerate = stats.diff < DEGENERATE_RANGE
    d = np.where(degenerate, 1.0, stats.diff)
    local = (rho - stats.rho_min) / d
    slope = smoothed_heaviside_derivative(local, beta_hat * stats.diff, DGI_THRESHOLD)
    return np.where(degenerate, 1.0, slope)


# final projection applied after the deblurring step:
#   low_thickness - suppresses densities below rho_low only (variable thickness runs)
#   black_white   - standard threshold projection at 0.5 (penalized reference runs)
#   none          - pass-through
PROJECTION_STYLES = ("low_thickness", "black_white", "none")


@dataclass
class RegularizedChain:
    """Forward pass of filter -> deblurring -> final projection.

    Derivative factors of both projections are cached for the backward pass;
    neighborhood statistics are treated as constants within one iteration.
    """

    rho_tilde: ElementField
    rho_hat: ElementField
    rho_physical: ElementField
    stats: NeighborhoodStats | None
    d_hat_d_tilde: np.ndarray
    d_phys_d_hat: np.ndarray
    raw_revision: int
    filter: DensityFilter


def regularize_chain(grid: StructuredGrid, rho_raw: ElementField, params: ProjectionParams,
                     filt: DensityFilter, projection: str = "low_thickness",
                     dgi_enabled: bool = True,
                     frozen_stats: NeighborhoodStats | None = None) -> RegularizedChain:
    """Run the full regularization chain and cache its per-element derivatives."""
    if rho_raw.stage != "raw":
        raise ValueError(f"chain input must be a raw field, got stage {rho_raw.stage!r}")
    if projection not in PROJECTION_STYLES:
        raise ValueError(f"unknown projection {projection!r}, expected one of {PROJECTION_STYLES}")
    tilde = filt.apply(rho_raw.values)

    if dgi_enabled:
        stats = frozen_stats if frozen_stats is not None else neighborhood_stats(grid, tilde, params.radius)
        hat = np.clip(dgi_project(tilde, stats, params.beta_hat), 0.0, 1.0)
        d_hat = dgi_derivative(tilde, stats, params.beta_hat)
    else:
        stats = None
        hat = tilde
        d_hat = np.ones_like(tilde)

    if projection == "low_thickness":
        phys = np.clip(lt_project(hat, params.beta_bar, params.rho_low), 0.0, 1.0)
        d_phys = lt_project_derivative(hat, params.beta_bar, params.rho_low)
    elif projection == "black_white":
        phys = np.clip(smoothed_heaviside(hat, params.beta_bar, 0.5), 0.0, 1.0)
        d_phys = smoothed_heaviside_derivative(hat, params.beta_bar, 0.5)
    else:
        phys = hat
        d_phys = np.ones_like(hat)

    return RegularizedChain(
        rho_tilde=ElementField(tilde, "filtered"),
        rho_hat=ElementField(hat, "dgi"),
        rho_physical=ElementField(phys, "physical"),
        stats=stats,
        d_hat_d_tilde=d_hat,
        d_phys_d_hat=d_phys,
        raw_revision=rho_raw.revision,
        filter=filt,
    )


def chain_gradient(chain: RegularizedChain, grad_physical: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. the physical density back to the raw design field."""
    grad_physical = np.asarray(grad_physical, dtype=float)
    if grad_physical.shape != chain.d_phys_d_hat.shape:
        raise ValueError(f"gradient shape {grad_physical.shape} does not match chain")
    return chain.filter.apply_transpose(grad_physical * chain.d_phys_d_hat * chain.d_hat_d_tilde)
