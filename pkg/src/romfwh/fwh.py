"""Advective Ffowcs Williams-Hawkings post-processing under the compact-source assumption.

The medium moves with speed ``U0`` along +x. For an observer ``x`` and a source
point ``y`` with ``d = x - y``::

    r*  = sqrt(d1^2 + beta^2 (d2^2 + d3^2))
    r   = (-M d1 + r*) / beta^2
    rhat*_i = d r* / d x_i = (d1, beta^2 d2, beta^2 d3) / r*
    rhat_i  = d r / d x_i  = (rhat*_1 - M, rhat*_2, rhat*_3) / beta^2
    R*_ij   = d^2 (r*^2 / 2) / dx_i dx_j = diag(1, beta^2, beta^2)

The "unit" radiation vectors are gradients of the radiation distances; they
have unit length only when ``M = 0``, where every quantity collapses to the
classical ``|x - y|`` geometry and ``R*_ij = delta_ij``.

Retarded times are not evaluated: every integrand is taken at ``tau = t``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .flow import SphereSurface
from .snapshot import Field, TimeSeries, write_columns_csv
from .spectral import Spectrum, amplitude_spectrum

SPL_FLOOR_DB = -400.0


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class AcousticConfig:
    c0: float = 1500.0
    rho0: float = 1000.0
    U0: float = 1.0
    p0: float = 0.0
    p_ref: float = 1e-6

    def __post_init__(self):
        if not self.c0 > self.U0 >= 0:
            raise ValueError("need c0 > U0 >= 0 (got c0=%g, U0=%g)" % (self.c0, self.U0))

    @property
    def mach(self) -> float:
        return self.U0 / self.c0

    @property
    def beta(self) -> float:
        return float(np.sqrt(1.0 - self.mach ** 2))


@dataclass(frozen=True, eq=False)
class Microphone:
    label: str
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))


def default_microphones(D: float = 0.01) -> list[Microphone]:
    return [Microphone("A", (0.0, 2 * D, 0.0)), Microphone("B", (2 * D, 2 * D, 0.0))]


@dataclass(frozen=True, eq=False)
class RadiationGeometry:
    """Per-source-point radiation quantities toward one observer."""

    r: np.ndarray
    r_star: np.ndarray
    r_hat: np.ndarray  # (n, 3)
    r_hat_star: np.ndarray  # (n, 3)
    R_star: np.ndarray  # (3, 3)


def radiation_geometry(x, y, config: AcousticConfig) -> RadiationGeometry:
    """Geometry from source points ``y`` (shape ``(3,)`` or ``(n, 3)``) to observer ``x``."""
    x = np.asarray(x, dtype=float).reshape(3)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = x[None, :] - y
    M, b2 = config.mach, config.beta ** 2
    rs = np.sqrt(d[:, 0] ** 2 + b2 * (d[:, 1] ** 2 + d[:, 2] ** 2))
    if np.any(rs == 0):
        raise GeometryError("observer coincides with a source point")
    r = (-M * d[:, 0] + rs) / b2
    rhs = np.column_stack([d[:, 0], b2 * d[:, 1], b2 * d[:, 2]]) / rs[:, None]
    rh = rhs.copy()
    rh[:, 0] -= M
    rh /= b2
    return RadiationGeometry(r, rs, rh, rhs, np.diag([1.0, b2, b2]))


@dataclass(frozen=True, eq=False)
class LighthillField:
    """Symmetric ``T[i, j]`` per cell, shape ``(3, 3, n_cells)`` (or with a leading time axis)."""

    tensor: np.ndarray


def lighthill_tensor(u: Field | np.ndarray, p_tilde: Field | np.ndarray, config: AcousticConfig) -> LighthillField:
    """``T_ij = rho0 u_i u_j + p_tilde delta_ij`` (zero density perturbation)."""
    uv = np.asarray(getattr(u, "values", u), dtype=float)
    pv = np.asarray(getattr(p_tilde, "values", p_tilde), dtype=float)
    if uv.shape[-2] != 3 or uv.shape[-1] != pv.shape[-1] or uv.shape[:-2] != pv.shape[:-1]:
        raise ValueError("velocity %s and pressure %s shapes do not match" % (uv.shape, pv.shape))
    T = config.rho0 * (uv[..., :, None, :] * uv[..., None, :, :])  # product first: exact symmetry
    idx = np.arange(3)
    T[..., idx, idx, :] += pv[..., None, :]
    return LighthillField(T)


def time_derivative(values, order: int, dt: float) -> np.ndarray:
    """Derivative along axis 0 with second-order central / one-sided stencils."""
    f = np.asarray(values, dtype=float)
    n = f.shape[0]
    if order == 1:
        if n < 3:
            raise ValueError("first derivative needs at least 3 samples")
        return np.gradient(f, dt, axis=0, edge_order=2)
    if order == 2:
        if n < 5:
            raise ValueError("second derivative needs at least 5 samples")
        out = np.empty_like(f)
        out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / dt ** 2
        out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / dt ** 2
        out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / dt ** 2
        return out
    raise ValueError("order must be 1 or 2")


def solid_angle_fraction(surface: SphereSurface, x) -> float:
    """Solid angle subtended by the closed surface at ``x`` over 4 pi (1 inside, 0 outside)."""
    d = surface.centers - np.asarray(x, dtype=float)[None, :]
    dist3 = np.linalg.norm(d, axis=1) ** 3
    return float(np.sum(np.einsum("ij,ij->i", surface.normals, d) / dist3 * surface.areas) / (4 * np.pi))


def _check_outside_surface(surface: SphereSurface, mic: Microphone):
    if solid_angle_fraction(surface, mic.position) > 0.5:
        raise GeometryError("microphone %s lies inside the source surface" % mic.label)


def _check_outside_volume(centers, volumes, mic: Microphone):
    half = 0.5 * np.cbrt(volumes)
    inside = np.all(np.abs(centers - mic.position[None, :]) < half[:, None], axis=1)
    if np.any(inside):
        raise GeometryError("microphone %s lies inside the source volume" % mic.label)


def dipole_integrals(p_hist, surface: SphereSurface, mic: Microphone, config: AcousticConfig) -> np.ndarray:
    """Surface sums ``(sum p n.rhat / r* dS, sum p n.rhat* / r*^2 dS)`` per time, shape ``(2, n_t)``."""
    _check_outside_surface(surface, mic)
    p = np.atleast_2d(np.asarray(p_hist, dtype=float)) - config.p0
    g = radiation_geometry(mic.position, surface.centers, config)
    nr = np.einsum("ij,ij->i", surface.normals, g.r_hat)
    nrs = np.einsum("ij,ij->i", surface.normals, g.r_hat_star)
    kernels = np.stack([nr / g.r_star, nrs / g.r_star ** 2]) * surface.areas
    return kernels @ p.T


def dipole_pressure(p_hist, surface: SphereSurface, mic: Microphone, config: AcousticConfig,
                    dt: float, t0: float = 0.0, return_terms: bool = False):
    """Loading-noise pressure at ``mic`` from a surface pressure history ``(n_t, n_panels)``.

    ``return_terms`` gives the far-field (time-derivative) and near-field parts
    separately, each already divided by 4 pi.
    """
    J = dipole_integrals(p_hist, surface, mic, config)
    far = time_derivative(J[0], 1, dt) / config.c0 / (4 * np.pi)
    near = J[1] / (4 * np.pi)
    times = t0 + dt * np.arange(J.shape[1])
    ts = TimeSeries(times, far + near)
    return (ts, np.stack([far, near])) if return_terms else ts


def quadrupole_kernels(centers, volumes, mic: Microphone, config: AcousticConfig) -> np.ndarray:
    """Volume-weighted kernels ``K[k, i, j, cell]`` for the three quadrupole terms."""
    centers = np.asarray(centers, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    _check_outside_volume(centers, volumes, mic)
    g = radiation_geometry(mic.position, centers, config)
    rh, rhs, rs = g.r_hat.T, g.r_hat_star.T, g.r_star
    R = g.R_star[:, :, None]
    rhs_rhs = rhs[:, None, :] * rhs[None, :, :]
    k1 = rh[:, None, :] * rh[None, :, :] / rs
    k2 = (2 * rh[:, None, :] * rhs[None, :, :] + (rhs_rhs - R) / config.beta ** 2) / rs ** 2
    k3 = (3 * rhs_rhs - R) / rs ** 3
    return np.stack([k1, k2, k3]) * volumes


def quadrupole_integrals_from_tensor(T_hist, kernels) -> np.ndarray:
    """Contract a Lighthill history ``(n_t, 3, 3, n)`` with the kernels: ``(3, n_t)``."""
    T = np.asarray(getattr(T_hist, "tensor", T_hist), dtype=float)
    if T.ndim == 3:
        T = T[None]
    return np.einsum("kijc,tijc->kt", kernels, T)


def quadrupole_integrals_from_flow(u_hist, p_hist, kernels, config: AcousticConfig) -> np.ndarray:
    """Same contraction without materializing ``T``: ``u_hist`` is ``(n_t, 3, n)``."""
    u = np.asarray(u_hist, dtype=float)
    p = np.asarray(p_hist, dtype=float) - config.p0
    trace = np.einsum("kiic->kc", kernels)
    out = np.empty((3, u.shape[0]))
    for t in range(u.shape[0]):
        uu = u[t][:, None, :] * u[t][None, :, :]
        out[:, t] = config.rho0 * np.einsum("kijc,ijc->k", kernels, uu) + trace @ p[t]
    return out


def assemble_quadrupole(I, config: AcousticConfig, dt: float) -> np.ndarray:
    """Apply time derivatives and prefactors to the three volume integrals."""
    terms = np.stack([
        time_derivative(I[0], 2, dt) / config.c0 ** 2,
        time_derivative(I[1], 1, dt) / config.c0,
        I[2],
    ]) / (4 * np.pi)
    return terms


def quadrupole_pressure(T_hist, centers, volumes, mic: Microphone, config: AcousticConfig,
                        dt: float, t0: float = 0.0, return_terms: bool = False):
    """Volume (quadrupole) pressure at ``mic`` from a Lighthill history.

    ``return_terms`` yields the 1/r, 1/r^2 and 1/r^3 parts separately.
    """
    K = quadrupole_kernels(centers, volumes, mic, config)
    terms = assemble_quadrupole(quadrupole_integrals_from_tensor(T_hist, K), config, dt)
    ts = TimeSeries(t0 + dt * np.arange(terms.shape[1]), terms.sum(axis=0))
    return (ts, terms) if return_terms else ts


def quadrupole_pressure_from_flow(u_hist, p_hist, centers, volumes, mic: Microphone,
                                  config: AcousticConfig, dt: float, t0: float = 0.0) -> TimeSeries:
    K = quadrupole_kernels(centers, volumes, mic, config)
    terms = assemble_quadrupole(quadrupole_integrals_from_flow(u_hist, p_hist, K, config), config, dt)
    return TimeSeries(t0 + dt * np.arange(terms.shape[1]), terms.sum(axis=0))


def spectrum_level(ts: TimeSeries, config: AcousticConfig) -> Spectrum:
    """Amplitude spectrum in dB re ``p_ref``; empty bins floor at -400 dB."""
    spec = amplitude_spectrum(ts)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(spec.amplitudes / config.p_ref)
    return Spectrum(spec.frequencies, np.maximum(db, SPL_FLOOR_DB))


def mfp(config: AcousticConfig, f_max: float, L_source: float) -> float:
    """Shortest acoustic wavelength over source extent."""
    if f_max <= 0 or L_source <= 0:
        raise ValueError("f_max and L_source must be positive")
    value = (config.c0 / f_max) / L_source
    if np.isclose(value, 1.0, rtol=1e-12, atol=0.0):
        warnings.warn("MFP equals 1: source compactness is marginal", stacklevel=2)
    return value


def compactness_check(config: AcousticConfig, f_max: float, source_points, mics) -> dict:
    """Per-microphone MFP using the source extent projected on the observer direction.

    Values equal to 1 pass with a warning; below 1 fail.
    """
    pts = np.atleast_2d(np.asarray(source_points, dtype=float))
    centre = pts.mean(axis=0)
    out = {}
    for mic in mics:
        e = mic.position - centre
        e = e / np.linalg.norm(e)
        proj = pts @ e
        L = float(proj.max() - proj.min()) or float(np.max(np.ptp(pts, axis=0)))
        value = mfp(config, f_max, L) if L > 0 else np.inf
        if np.isclose(value, 1.0, rtol=1e-12, atol=0.0):
            status = "marginal"
        elif value < 1:
            status = "fail"
        else:
            status = "pass"
        out[mic.label] = (value, status)
    return out


def write_signal_csv(path, times, p2d, p3d) -> None:
    write_columns_csv(path, "t,p2d_pa,p3d_pa", [times, p2d, p3d])
