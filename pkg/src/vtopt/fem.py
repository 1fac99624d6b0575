"""Plane-stress FEM on the structured grid with selective thin-density penalization.

The state problem is linear elasticity with bilinear quad elements; the element
Young's modulus is interpolated from the physical density, penalizing only
densities below the thin-region threshold (or globally in the penalized
reference mode).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import cg, splu

from .errors import NumericalError, StaleStateError, StructuralError
from .grid import ElementField, StructuredGrid

DIRECT_RESIDUAL_TOL = 1e-10
ITERATIVE_RESIDUAL_TOL = 1e-8

INTERPOLATIONS = ("selective", "global")


@dataclass(frozen=True)
class MaterialModel:
    """Linear-elastic material with a small stiffness floor standing in for void."""

    E0: float = 1.0
    nu: float = 0.3
    rho_min: float = 1e-9

    def __post_init__(self):
        if not self.E0 > 0:
            raise ValueError(f"E0 must be positive, got {self.E0}")
        if not 0 <= self.nu < 0.5:
            raise ValueError(f"nu must be in [0, 0.5), got {self.nu}")
        if not 0 < self.rho_min < 1:
            raise ValueError(f"rho_min must be in (0, 1), got {self.rho_min}")


@dataclass
class BoundaryConditions:
    """Fixed dofs as (node, axis) pairs and point loads as (node, axis, value)."""

    fixed: list[tuple[int, int]]
    loads: list[tuple[int, int, float]]

    def __post_init__(self):
        if len(self.fixed_dofs()) < 3:
            raise StructuralError("at least 3 independent fixed dofs are required")
        if not any(v != 0.0 for _, _, v in self.loads):
            raise StructuralError("load vector is zero")

    def fixed_dofs(self) -> np.ndarray:
        return np.unique([2 * n + a for n, a in self.fixed])

    def load_vector(self, n_dofs: int) -> np.ndarray:
        f = np.zeros(n_dofs)
        for n, a, v in self.loads:
            f[2 * n + a] += v
        return f


@dataclass
class StateSolution:
    """Displacements and compliance of one state solve, pinned to a field revision."""

    u: np.ndarray
    compliance: float
    field_revision: int
    residual: float


def penalize_thin(rho, p: float, rho_low: float):
    """Power-law penalization applied only below rho_low; identity above it."""
    _check_penalty(p, rho_low)
    rho = np.asarray(rho, dtype=float)
    return np.where(rho >= rho_low, rho, (rho / rho_low) ** p * rho_low)


def penalize_thin_derivative(rho, p: float, rho_low: float):
    """Branch derivative of penalize_thin, chosen by inequality at the kink."""
    _check_penalty(p, rho_low)
    rho = np.asarray(rho, dtype=float)
    return np.where(rho >= rho_low, 1.0, p * (rho / rho_low) ** (p - 1.0))


def _check_penalty(p: float, rho_low: float):
    if p < 1:
        raise ValueError(f"penalty exponent must be >= 1, got {p}")
    if not 0 < rho_low < 1:
        raise ValueError(f"rho_low must be in (0, 1), got {rho_low}")


def interpolate_modulus(rho_physical, p: float, rho_low: float, mat: MaterialModel,
                        interpolation: str = "selective"):
    """Element Young's modulus from the physical density; strictly positive."""
    rho = np.asarray(rho_physical, dtype=float)
    if interpolation == "selective":
        stiff = penalize_thin(rho, p, rho_low)
    elif interpolation == "global":
        stiff = rho ** p
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    return (stiff * (1.0 - mat.rho_min) + mat.rho_min) * mat.E0


def modulus_derivative(rho_physical, p: float, rho_low: float, mat: MaterialModel,
                       interpolation: str = "selective"):
    rho = np.asarray(rho_physical, dtype=float)
    if interpolation == "selective":
        dstiff = penalize_thin_derivative(rho, p, rho_low)
    elif interpolation == "global":
        dstiff = p * rho ** (p - 1.0)
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    return dstiff * (1.0 - mat.rho_min) * mat.E0


def element_stiffness(nu: float) -> np.ndarray:
    """Unit-modulus plane-stress stiffness of a square bilinear element.

    Size-independent for square elements, so one matrix serves the whole grid.
    Node order: lower-left, lower-right, upper-right, upper-left; dofs (ux, uy)
    per node. Computed on the reference square with 2x2 Gauss quadrature.
    """
    C = np.array([[1.0, nu, 0.0],
                  [nu, 1.0, 0.0],
                  [0.0, 0.0, (1.0 - nu) / 2.0]]) / (1.0 - nu ** 2)
    corners = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])
    g = 1.0 / np.sqrt(3.0)
    k = np.zeros((8, 8))
    for xi in (-g, g):
        for eta in (-g, g):
            dn_dxi = 0.25 * corners[:, 0] * (1.0 + eta * corners[:, 1])
            dn_deta = 0.25 * corners[:, 1] * (1.0 + xi * corners[:, 0])
            B = np.zeros((3, 8))
            B[0, 0::2] = dn_dxi
            B[1, 1::2] = dn_deta
            B[2, 0::2] = dn_deta
            B[2, 1::2] = dn_dxi
            k += B.T @ C @ B
    return k


def element_dof_map(grid: StructuredGrid) -> np.ndarray:
    """(n_elements, 8) global dof indices per element, matching element_stiffness order."""
    e = np.arange(grid.n_elements)
    i = e % grid.nx
    j = e // grid.nx
    ll = j * (grid.nx + 1) + i
    nodes = np.column_stack([ll, ll + 1, ll + grid.nx + 2, ll + grid.nx + 1])
    dofs = np.empty((grid.n_elements, 8), dtype=np.int64)
    dofs[:, 0::2] = 2 * nodes
    dofs[:, 1::2] = 2 * nodes + 1
    return dofs


def cantilever_bc(grid: StructuredGrid, clamp_edge: str = "left",
                  load_x: float | None = None, load_y: float | None = None,
                  load_fx: float = 0.0, load_fy: float = -1.0) -> BoundaryConditions:
    """Clamp one edge fully and apply a point load at the node nearest (load_x, load_y).

    Defaults reproduce the benchmark: left edge clamped, unit downward load at
    the right-edge mid-height node.
    """
    nx, ny, h = grid.nx, grid.ny, grid.h
    if clamp_edge == "left":
        clamp_nodes = [grid.node_index(0, j) for j in range(ny + 1)]
    elif clamp_edge == "right":
        clamp_nodes = [grid.node_index(nx, j) for j in range(ny + 1)]
    elif clamp_edge == "bottom":
        clamp_nodes = [grid.node_index(i, 0) for i in range(nx + 1)]
    elif clamp_edge == "top":
        clamp_nodes = [grid.node_index(i, ny) for i in range(nx + 1)]
    else:
        raise ValueError(f"unknown clamp edge {clamp_edge!r}")
    fixed = [(n, a) for n in clamp_nodes for a in (0, 1)]

    if load_x is None:
        load_x = grid.origin[0] + nx * h
    if load_y is None:
        load_y = grid.origin[1] + ny * h / 2.0
    li = int(np.clip(round((load_x - grid.origin[0]) / h), 0, nx))
    lj = int(np.clip(round((load_y - grid.origin[1]) / h), 0, ny))
    node = grid.node_index(li, lj)
    loads = []
    if load_fx != 0.0:
        loads.append((node, 0, load_fx))
    if load_fy != 0.0:
        loads.append((node, 1, load_fy))
    return BoundaryConditions(fixed=fixed, loads=loads)


def assemble_and_solve(grid: StructuredGrid, bc: BoundaryConditions,
                       rho_physical: ElementField, p: float, rho_low: float,
                       mat: MaterialModel, interpolation: str = "selective",
                       solver: str = "direct") -> StateSolution:
    """Assemble K(rho) and solve K u = f; returns displacements and compliance."""
    if len(rho_physical) != grid.n_elements:
        raise ValueError(f"field length {len(rho_physical)} does not match grid "
                         f"with {grid.n_elements} elements")
    E = interpolate_modulus(rho_physical.values, p, rho_low, mat, interpolation)
    k0 = element_stiffness(mat.nu)
    edof = element_dof_map(grid)
    n_dofs = 2 * grid.n_nodes

    data = (E[:, None, None] * k0).ravel()
    rows = np.repeat(edof, 8, axis=1).ravel()
    cols = np.tile(edof, (1, 8)).ravel()
    K = coo_matrix((data, (rows, cols)), shape=(n_dofs, n_dofs)).tocsc()

    fixed = bc.fixed_dofs()
    free = np.setdiff1d(np.arange(n_dofs), fixed)
    f = bc.load_vector(n_dofs)
    Kff = K[free][:, free]
    ff = f[free]

    u = np.zeros(n_dofs)
    fnorm = np.linalg.norm(ff)
    if fnorm == 0.0:
        residual = 0.0
    elif solver == "direct":
        try:
            lu = splu(Kff)
        except RuntimeError as err:
            raise StructuralError(f"stiffness factorization failed: {err}") from err
        u[free] = lu.solve(ff)
        if not np.isfinite(u[free]).all():
            raise StructuralError("singular stiffness system (insufficient constraints)")
        residual = np.linalg.norm(Kff @ u[free] - ff) / fnorm
        if not residual <= DIRECT_RESIDUAL_TOL:
            if residual > 1e-6:   # far beyond roundoff: rank deficiency, not precision loss
                raise StructuralError("singular stiffness system (insufficient constraints), "
                                      f"solve residual {residual:.3e}")
            raise NumericalError(f"direct solve residual {residual:.3e} exceeds "
                                 f"{DIRECT_RESIDUAL_TOL:.0e}")
    elif solver == "cg":
        precond = diags(1.0 / Kff.diagonal())
        sol, info = cg(Kff, ff, rtol=ITERATIVE_RESIDUAL_TOL, atol=0.0, M=precond,
                       maxiter=20 * Kff.shape[0])
        if info != 0:
            raise NumericalError(f"cg did not converge (info={info})")
        u[free] = sol
        residual = np.linalg.norm(Kff @ sol - ff) / fnorm
    else:
        raise ValueError(f"unknown solver {solver!r}")

    compliance = float(f @ u)
    return StateSolution(u=u, compliance=compliance,
                         field_revision=rho_physical.revision, residual=residual)


def compliance_sensitivity(grid: StructuredGrid, solution: StateSolution,
                           rho_physical: ElementField, p: float, rho_low: float,
                           mat: MaterialModel, interpolation: str = "selective") -> np.ndarray:
    """d(compliance)/d(physical density) per element; nonpositive everywhere."""
    if solution.field_revision != rho_physical.revision:
        raise StaleStateError("displacements were solved for a different density field "
                              f"(revision {solution.field_revision} != {rho_physical.revision})")
    k0 = element_stiffness(mat.nu)
    edof = element_dof_map(grid)
    ue = solution.u[edof]
    energies = np.einsum("ij,jk,ik->i", ue, k0, ue)
    dE = modulus_derivative(rho_physical.values, p, rho_low, mat, interpolation)
    return -(energies * dE)
