import numpy as np
import pytest

from romfwh.flow import (UnsupportedMeshError, force_coefficients, q_criterion, q_isosurface_export,
                         q_isosurface_points, velocity_gradient, wake_error_histogram, wake_mask,
                         weighted_mean_error)
from romfwh.snapshot import Field, Mesh
from romfwh.synth import generate_sphere_surface


@pytest.fixture
def mesh():
    return Mesh.structured((9, 8, 7), (0.25, 0.5, 0.125), (-1.0, -2.0, -0.5))


def _vel(mesh, fn):
    x, y, z = mesh.cell_centers.T
    return Field(np.stack(fn(x, y, z)))


def test_linear_gradient_exact(mesh):
    a, b, c = 0.3, -1.7, 2.2
    g = velocity_gradient(_vel(mesh, lambda x, y, z: (a * x + b * y + c * z, 0 * x, 0 * x)), mesh)
    assert np.allclose(g.tensor[0, 0], a, atol=1e-12)
    assert np.allclose(g.tensor[0, 1], b, atol=1e-12)
    assert np.allclose(g.tensor[0, 2], c, atol=1e-12)
    assert np.allclose(g.tensor[1:], 0, atol=1e-12)


def test_quadratic_gradient(mesh):
    g = velocity_gradient(_vel(mesh, lambda x, y, z: (x ** 2, 0 * x, 0 * x)), mesh)
    assert np.allclose(g.tensor[0, 0], 2 * mesh.cell_centers[:, 0], atol=1e-12)


def test_smooth_field_matches_loop_oracle(mesh):
    vel = _vel(mesh, lambda x, y, z: (np.sin(x) * np.cos(y), z * np.exp(x), x * y * z))
    g = velocity_gradient(vel, mesh)
    nx, ny, nz = mesh.dims
    hx, hy, hz = mesh.spacing
    w = mesh.to_grid(vel.values[1])  # (nz, ny, nx)
    oracle = np.empty_like(w)
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                if 0 < j < ny - 1:
                    oracle[k, j, i] = (w[k, j + 1, i] - w[k, j - 1, i]) / (2 * hy)
                elif j == 0:
                    oracle[k, j, i] = (-3 * w[k, 0, i] + 4 * w[k, 1, i] - w[k, 2, i]) / (2 * hy)
                else:
                    oracle[k, j, i] = (3 * w[k, -1, i] - 4 * w[k, -2, i] + w[k, -3, i]) / (2 * hy)
    assert np.allclose(g.tensor[1, 1], oracle.ravel(), rtol=1e-12, atol=1e-12)


def test_q_examples(mesh):
    for om in (1.0, 3.5):
        g = velocity_gradient(_vel(mesh, lambda x, y, z: (-om * y, om * x, 0 * x)), mesh)
        assert np.allclose(q_criterion(g).values, om ** 2, rtol=1e-10, atol=0)
    gam = 2.0
    g = velocity_gradient(_vel(mesh, lambda x, y, z: (gam * y, 0 * x, 0 * x)), mesh)
    assert np.allclose(q_criterion(g).values, 0, atol=1e-10)
    g = velocity_gradient(_vel(mesh, lambda x, y, z: (1 + 0 * x, 0 * x, 0 * x)), mesh)
    assert np.all(q_criterion(g).values == 0)


def test_q_identity_from_raw_gradient(mesh, rng):
    vel = Field(rng.standard_normal((3, mesh.n_cells)))
    g = velocity_gradient(vel, mesh)
    G = g.tensor
    raw = -0.5 * np.einsum("ijc,jic->c", G, G)  # 0.5(|W|^2 - |S|^2) = -0.5 tr(G G)
    assert np.allclose(q_criterion(g).values, raw, rtol=1e-12, atol=1e-12 * np.abs(raw).max())


def test_galilean_invariance(mesh, rng):
    # dyadic spacings and dyadic-rational velocities keep arithmetic exact
    vel = Field(rng.integers(-64, 64, (3, mesh.n_cells)) / 8.0)
    shifted = Field(vel.values + np.array([[1.5], [-0.25], [4.0]]))
    g0, g1 = velocity_gradient(vel, mesh), velocity_gradient(shifted, mesh)
    assert np.array_equal(g0.tensor, g1.tensor)
    assert np.array_equal(q_criterion(g0).values, q_criterion(g1).values)
    assert np.array_equal(wake_mask(g0).mask, wake_mask(g1).mask)
    # arbitrary floats: invariant to rounding
    v = Field(rng.standard_normal((3, mesh.n_cells)))
    d = velocity_gradient(Field(v.values + 0.37), mesh).tensor - velocity_gradient(v, mesh).tensor
    assert np.abs(d).max() < 1e-12 * 100


def test_unstructured_rejected():
    m = Mesh(np.zeros((4, 3)) + np.arange(4)[:, None], np.ones(4))
    with pytest.raises(UnsupportedMeshError):
        velocity_gradient(Field(np.zeros((3, 4))), m)


def test_wake_mask(mesh):
    g = velocity_gradient(_vel(mesh, lambda x, y, z: (0 * x, -z, y)), mesh)
    assert np.allclose(g.omega_x, 2.0)
    assert wake_mask(g).mask.all()
    assert not wake_mask(g, np.inf).mask.any()
    g0 = velocity_gradient(_vel(mesh, lambda x, y, z: (1 + 0 * x, 0 * x, 0 * x)), mesh)
    assert not wake_mask(g0).mask.any()


def test_histogram_cases(mesh, rng):
    g = velocity_gradient(_vel(mesh, lambda x, y, z: (0 * x, -z, y)), mesh)
    mask = wake_mask(g)
    h = wake_error_histogram(np.full(mesh.n_cells, 0.3), mask, mesh, 10)
    assert np.count_nonzero(h.densities) == 1
    assert np.isclose(h.densities.max(), 1 / h.bin_width)
    e = rng.standard_normal(mesh.n_cells)
    sym = np.concatenate([e[: mesh.n_cells // 2], -e[: mesh.n_cells // 2]])
    msk = type(mask)(np.arange(mesh.n_cells) < sym.size, 1.0)
    hs = wake_error_histogram(np.concatenate([sym, np.zeros(mesh.n_cells - sym.size)]), msk, mesh, 16)
    assert np.allclose(hs.densities, hs.densities[::-1])


def test_histogram_brute_force(rng):
    mesh = Mesh(rng.uniform(size=(200, 3)), rng.uniform(0.5, 2.0, 200))
    from romfwh.flow import WakeMask
    mask = WakeMask(rng.uniform(size=200) > 0.3, 1.0)
    e = rng.standard_normal(200)
    h = wake_error_histogram(e, mask, mesh, 12)
    s, v = e[mask.mask], mesh.cell_volumes[mask.mask]
    v = v / v.sum()
    lo, hi = s.min(), s.max()
    width = (hi - lo) / 12
    dens = np.zeros(12)
    for si, vi in zip(s, v):
        dens[min(int((si - lo) / width), 11)] += vi
    assert np.allclose(h.densities, dens / width, rtol=1e-12)
    assert np.isclose(np.sum(h.densities * h.bin_width), 1.0)
    assert np.isclose(weighted_mean_error(e, mask, mesh), np.sum(s * v))
    with pytest.raises(ValueError):
        wake_error_histogram(e, WakeMask(np.zeros(200, bool), 1.0), mesh)


def test_q_isosurface(tmp_path, mesh):
    with pytest.warns(UserWarning):
        assert q_isosurface_points(Field(np.full(mesh.n_cells, 2.0)), mesh, 3.0).shape[0] == 0
    r2 = mesh.cell_centers[:, 1] ** 2 + mesh.cell_centers[:, 2] ** 2
    q = Field(4e4 * np.exp(-r2 / 0.5) * 2)  # dimensional Q; level 4 in units of U0^2/D^2
    pts = q_isosurface_points(q, mesh, 4.0, D=0.01, U0=1.0)
    assert pts.shape[0] > 0
    n = q_isosurface_export(q, mesh, 4.0, tmp_path / "q.csv", D=0.01, U0=1.0)
    assert n == pts.shape[0]
    assert (tmp_path / "q.csv").read_text().startswith("x,y,z,q\n")


def test_force_coefficients():
    D, rho0, U0 = 0.01, 1000.0, 1.0
    surf = generate_sphere_surface(D, 2000)
    cd, cl = force_coefficients(np.full((3, 2000), 5.0), surf, rho0, U0)
    assert np.abs(cd).max() < 10 / 2000 and np.abs(cl).max() < 10 / 2000
    A = 7.0
    surf = generate_sphere_surface(D, 10000)
    cd, _ = force_coefficients(A * surf.centers[:, 0][None, :], surf, rho0, U0)
    exact = -A * (np.pi * D ** 3 / 6) / (0.5 * rho0 * U0 ** 2 * np.pi * D ** 2 / 4)
    assert abs(cd[0] - exact) < 0.01 * abs(exact)
    cd2, _ = force_coefficients(A * surf.centers[:, 0][None, :], surf, 2 * rho0, U0)
    assert np.isclose(cd2[0], cd[0] / 2)
    with pytest.raises(ZeroDivisionError):
        force_coefficients(np.zeros((1, 10000)), surf, rho0, 0.0)
