import numpy as np
import pytest

from conftest import make_dataset
from romfwh.podi import (ExtrapolationError, coefficient_trace, evaluate_podi, fit_podi, fit_splines,
                         load_podi, save_podi)
from romfwh.spectral import amplitude_spectrum, dominant_frequency


def _natural_spline_oracle(x, y, t):
    # dense assembly of the natural-spline moment equations
    n = x.size
    h = np.diff(x)
    A = np.zeros((n, n))
    rhs = np.zeros(n)
    A[0, 0] = A[-1, -1] = 1.0
    for i in range(1, n - 1):
        A[i, i - 1], A[i, i], A[i, i + 1] = h[i - 1] / 6, (h[i - 1] + h[i]) / 3, h[i] / 6
        rhs[i] = (y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]
    M = np.linalg.solve(A, rhs)
    out = np.empty_like(t)
    for k, tk in enumerate(t):
        i = min(max(np.searchsorted(x, tk) - 1, 0), n - 2)
        a, b = (x[i + 1] - tk) / h[i], (tk - x[i]) / h[i]
        out[k] = a * y[i] + b * y[i + 1] + ((a ** 3 - a) * M[i] + (b ** 3 - b) * M[i + 1]) * h[i] ** 2 / 6
    return out


def _smooth_dataset(rng, m=40, n=60):
    t = np.linspace(0, 1, m)
    X = sum(np.outer(rng.standard_normal(n), np.sin(2 * np.pi * f * t + f)) for f in (1, 2, 3))
    return make_dataset(X, dt=t[1] - t[0])


def test_knot_interpolation_full_rank(rng):
    ds = _smooth_dataset(rng)
    model = fit_podi(ds, 3)
    rec = evaluate_podi(model, ds.times)
    err = np.linalg.norm(rec - ds.snapshots, axis=0) / np.linalg.norm(ds.snapshots, axis=0)
    assert err.max() < 1e-10
    vals = model.spline_values(ds.times)
    assert np.allclose(vals, model.coefficients, rtol=0, atol=1e-12 * np.abs(model.coefficients).max())


def test_linear_coefficients_reproduced():
    t = np.linspace(0, 1, 9)
    prof = np.linspace(1, 2, 5)
    X = np.outer(prof, 1 + 2 * t)
    model = fit_podi(make_dataset(X, dt=t[1]), 1)
    mid = 0.5 * (t[3] + t[4])
    assert np.allclose(evaluate_podi(model, mid), 0.5 * (X[:, 3] + X[:, 4]), rtol=1e-12)
    dense = coefficient_trace(model, 0, 16)
    slope = np.diff(dense.values) / np.diff(dense.times)
    assert np.allclose(slope, slope[0], rtol=1e-9)


def test_natural_spline_matches_oracle():
    x = np.linspace(0, 1, 20)
    y = x ** 3
    from romfwh.podi import _eval_cubic
    M = fit_splines(x, y[None, :], "natural")
    t = np.linspace(0, 1, 777)
    ours = _eval_cubic(x, y[None, :], M, t)[0]
    assert np.allclose(ours, _natural_spline_oracle(x, y, t), rtol=0, atol=1e-13)


def test_extrapolation_refused(rng):
    ds = _smooth_dataset(rng)
    model = fit_podi(ds, 2)
    for t in (ds.times[0] - 1e-9, ds.times[-1] + 1e-3):
        with pytest.raises(ExtrapolationError):
            evaluate_podi(model, t)


def test_minimum_snapshots_and_rank():
    X = np.ones((4, 3))
    with pytest.raises(ValueError):
        fit_podi(make_dataset(X), 1)
    with pytest.raises(ValueError):
        fit_podi(make_dataset(np.ones((4, 5))), 0)


def test_trace_knots_and_tone():
    fs, f = 250.0, 20.0
    t = np.arange(100) / fs
    x = np.linspace(0, 1, 30)
    X = np.outer(np.sin(np.pi * x), np.cos(2 * np.pi * f * t)) + np.outer(np.cos(np.pi * x), np.sin(2 * np.pi * f * t))
    model = fit_podi(make_dataset(X, dt=1 / fs), 2)
    tr = coefficient_trace(model, 0, 4)
    assert np.array_equal(tr.times[::4], model.train_times)
    assert np.array_equal(tr.values[::4], model.coefficients[0])
    assert abs(dominant_frequency(amplitude_spectrum(tr)) - f) <= 1 / (tr.times[-1] - tr.times[0]) + 1e-9
    const = fit_podi(make_dataset(np.ones((3, 6))), 1)
    assert np.allclose(coefficient_trace(const, 0).values, const.coefficients[0, 0])
    with pytest.raises(IndexError):
        coefficient_trace(model, 2)


def test_rank_monotone_train_error(rng):
    ds = _smooth_dataset(rng, m=30, n=50)
    errs = [np.linalg.norm(evaluate_podi(fit_podi(ds, r), ds.times) - ds.snapshots) for r in (1, 2, 3)]
    assert errs[0] >= errs[1] >= errs[2]


def test_save_load(tmp_path, rng):
    ds = _smooth_dataset(rng)
    for sub in (False, True):
        model = fit_podi(ds, 3, subtract_mean=sub, end_condition="natural")
        save_podi(model, tmp_path / "m.podimodel")
        back = load_podi(tmp_path / "m.podimodel")
        tq = np.linspace(ds.times[0], ds.times[-1], 57)
        assert np.array_equal(evaluate_podi(back, tq), evaluate_podi(model, tq))
        assert back.end_condition == "natural"
