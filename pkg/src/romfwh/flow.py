"""Velocity-gradient post-processing on structured grids and sphere force coefficients."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .snapshot import Field, Mesh, write_columns_csv

OMEGA_X_THRESHOLD = 1.0  # 1/s
DEFAULT_BINS = 64


class UnsupportedMeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GradientField:
    """``tensor[i, j]`` holds du_i/dx_j per cell, shape ``(3, 3, n_cells)``."""

    tensor: np.ndarray

    @property
    def strain(self) -> np.ndarray:
        return 0.5 * (self.tensor + self.tensor.transpose(1, 0, 2))

    @property
    def rotation(self) -> np.ndarray:
        return 0.5 * (self.tensor - self.tensor.transpose(1, 0, 2))

    @property
    def omega_x(self) -> np.ndarray:
        return self.tensor[2, 1] - self.tensor[1, 2]

    def vorticity(self) -> np.ndarray:
        g = self.tensor
        return np.stack([g[2, 1] - g[1, 2], g[0, 2] - g[2, 0], g[1, 0] - g[0, 1]])


@dataclass(frozen=True, eq=False)
class WakeMask:
    mask: np.ndarray
    threshold: float

    @property
    def count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class WeightedHistogram:
    bin_edges: np.ndarray
    densities: np.ndarray

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])

    def to_csv(self, path):
        write_columns_csv(path, "bin_center,density", [self.bin_centers, self.densities])


@dataclass(frozen=True, eq=False)
class SphereSurface:
    centers: np.ndarray  # (n, 3)
    normals: np.ndarray  # (n, 3), outward
    areas: np.ndarray  # (n,)
    diameter: float

    @property
    def n_panels(self) -> int:
        return self.areas.size

    @property
    def reference_area(self) -> float:
        return np.pi * self.diameter ** 2 / 4.0


def velocity_gradient(vel: Field, mesh: Mesh) -> GradientField:
    """Second-order central differences inside, second-order one-sided on the boundary."""
    if not mesh.is_structured:
        raise UnsupportedMeshError("velocity gradients need a structured mesh")
    if vel.kind != "vector3" or vel.n_cells != mesh.n_cells:
        raise ValueError("velocity must be a 3-vector field on the mesh")
    if min(mesh.dims) < 3:
        raise UnsupportedMeshError("each grid direction needs at least 3 cells")
    hx, hy, hz = mesh.spacing
    g = np.empty((3, 3, mesh.n_cells))
    for i in range(3):
        dz, dy, dx = np.gradient(mesh.to_grid(vel.values[i]), hz, hy, hx, edge_order=2)
        g[i, 0], g[i, 1], g[i, 2] = dx.ravel(), dy.ravel(), dz.ravel()
    return GradientField(g)


def q_criterion(grad: GradientField) -> Field:
    """``Q = (|Omega|_F^2 - |S|_F^2) / 2``."""
    S, W = grad.strain, grad.rotation
    q = 0.5 * (np.sum(W ** 2, axis=(0, 1)) - np.sum(S ** 2, axis=(0, 1)))
    return Field(q, "1/s^2")


def q_isosurface_points(q: Field, mesh: Mesh, level: float, D: float | None = None,
                        U0: float | None = None) -> np.ndarray:
    """Cells on the high side of the ``level`` crossing: rows ``(x, y, z, Q)``.

    With ``D`` and ``U0`` both given, ``Q`` and ``level`` are in units of ``U0^2/D^2``.
    """
    if not mesh.is_structured:
        raise UnsupportedMeshError("iso-surface extraction needs a structured mesh")
    vals = np.asarray(q.values, dtype=float)
    if D is not None and U0 is not None:
        vals = vals * D ** 2 / U0 ** 2
    grid = mesh.to_grid(vals)
    above = grid >= level
    crossing = np.zeros_like(above)
    for axis in range(3):
        below_next = np.zeros_like(above)
        sl_a = [slice(None)] * 3
        sl_b = [slice(None)] * 3
        sl_a[axis], sl_b[axis] = slice(0, -1), slice(1, None)
        below_next[tuple(sl_a)] = ~above[tuple(sl_b)]
        crossing |= above & below_next
        below_prev = np.zeros_like(above)
        below_prev[tuple(sl_b)] = ~above[tuple(sl_a)]
        crossing |= above & below_prev
    idx = np.flatnonzero(crossing.ravel())
    if idx.size == 0:
        warnings.warn("Q level %g not crossed anywhere; empty iso-surface" % level, stacklevel=2)
    return np.column_stack([mesh.cell_centers[idx], vals[idx]])


def q_isosurface_export(q: Field, mesh: Mesh, level: float, path, D=None, U0=None) -> int:
    pts = q_isosurface_points(q, mesh, level, D, U0)
    write_columns_csv(path, "x,y,z,q", pts.T)
    return pts.shape[0]


def wake_mask(grad: GradientField, threshold: float = OMEGA_X_THRESHOLD) -> WakeMask:
    return WakeMask(np.abs(grad.omega_x) > threshold, float(threshold))


def wake_error_histogram(error, mask: WakeMask, mesh: Mesh, n_bins: int = DEFAULT_BINS) -> WeightedHistogram:
    """Density of ``error`` over wake cells, each weighted by its normalized volume."""
    e = np.asarray(getattr(error, "values", error), dtype=float)
    if not mask.mask.any():
        raise ValueError("wake mask is empty")
    samples = e[mask.mask]
    w = mesh.cell_volumes[mask.mask]
    dens, edges = np.histogram(samples, bins=n_bins, weights=w / w.sum(), density=True)
    return WeightedHistogram(edges, dens)


def surface_forces(p_surface, surface: SphereSurface) -> np.ndarray:
    """Pressure force ``-sum p n dA`` for each time row, shape ``(n_t, 3)``."""
    p = np.atleast_2d(np.asarray(p_surface, dtype=float))
    if p.shape[1] != surface.n_panels:
        raise ValueError("pressure history has %d panels, surface has %d" % (p.shape[1], surface.n_panels))
    return -(p * surface.areas) @ surface.normals


def force_coefficients(p_surface, surface: SphereSurface, rho0: float, U0: float):
    """Drag (x) and lift (z) coefficients from pressure alone."""
    q_dyn = 0.5 * rho0 * U0 ** 2
    if q_dyn == 0:
        raise ZeroDivisionError("zero dynamic pressure")
    F = surface_forces(p_surface, surface)
    denom = q_dyn * surface.reference_area
    return F[:, 0] / denom, F[:, 2] / denom


def weighted_mean_error(error, mask: WakeMask, mesh: Mesh) -> float:
    """Volume-weighted mean of ``error`` over the wake cells."""
    e = np.asarray(getattr(error, "values", error), dtype=float)
    if not mask.mask.any():
        raise ValueError("wake mask is empty")
    w = mesh.cell_volumes[mask.mask]
    return float(np.sum(w * e[mask.mask]) / np.sum(w))
