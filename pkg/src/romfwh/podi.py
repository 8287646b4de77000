"""POD with interpolation: cubic splines through the modal coefficient traces.

Each spline is stored as knot values plus second derivatives at the knots,
which is enough to evaluate the piecewise cubic on any interval.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .decomposition import PODBasis, SingularSpectrum, pod_project, truncated_svd
from .snapshot import SnapshotDataset, TimeSeries

MAGIC = b"PODIMODEL1\n"
END_CONDITIONS = ("not-a-knot", "natural")


class ExtrapolationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PODIModel:
    basis: PODBasis
    train_times: np.ndarray
    coefficients: np.ndarray  # (r, m) knot values
    second_derivatives: np.ndarray  # (r, m)
    mean: np.ndarray | None = None
    end_condition: str = "not-a-knot"
    layout: tuple[str, ...] = ()

    @property
    def rank(self) -> int:
        return self.basis.rank

    def spline_values(self, t) -> np.ndarray:
        """All modal coefficients at times ``t``: shape ``(r, len(t))``."""
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        return _eval_cubic(self.train_times, self.coefficients, self.second_derivatives, tt)


def _eval_cubic(knots, y, M, t):
    # piecewise cubic from knot values y and second derivatives M
    i = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, knots.size - 2)
    h = knots[i + 1] - knots[i]
    a = (knots[i + 1] - t) / h
    b = (t - knots[i]) / h
    out = a * y[:, i] + b * y[:, i + 1] + ((a ** 3 - a) * M[:, i] + (b ** 3 - b) * M[:, i + 1]) * h ** 2 / 6.0
    # exact knot hits return stored values bit-for-bit
    hit_lo = t == knots[i]
    hit_hi = t == knots[i + 1]
    out[:, hit_lo] = y[:, i[hit_lo]]
    out[:, hit_hi] = y[:, i[hit_hi] + 1]
    return out


def fit_splines(times, values, end_condition: str = "not-a-knot"):
    """Second derivatives at the knots of the cubic spline through ``values`` (rows)."""
    if end_condition not in END_CONDITIONS:
        raise ValueError("end_condition must be one of %s" % (END_CONDITIONS,))
    cs = CubicSpline(times, np.asarray(values, dtype=float), axis=1, bc_type=end_condition)
    return cs(times, 2)


def fit_podi(train: SnapshotDataset, r: int, subtract_mean: bool = False,
             end_condition: str = "not-a-knot") -> PODIModel:
    if train.m < 4:
        raise ValueError("cubic-spline PODI needs at least 4 snapshots, got %d" % train.m)
    S = train.snapshots
    mean = None
    if subtract_mean:
        mean = S.mean(axis=1)
        S = S - mean[:, None]
    basis = truncated_svd(S, r)
    alpha = pod_project(basis, S)
    M = fit_splines(train.times, alpha, end_condition)
    return PODIModel(basis, np.array(train.times), alpha, M, mean, end_condition, train.layout)


def evaluate_podi(model: PODIModel, t) -> np.ndarray:
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    lo, hi = model.train_times[0], model.train_times[-1]
    if np.any(tt < lo) or np.any(tt > hi):
        raise ExtrapolationError("PODI refuses extrapolation outside [%g, %g]" % (lo, hi))
    X = model.basis.modes @ model.spline_values(tt)
    if model.mean is not None:
        X += model.mean[:, None]
    return X[:, 0] if scalar else X


def coefficient_trace(model: PODIModel, j: int, samples_per_interval: int = 8) -> TimeSeries:
    """Spline ``j`` sampled densely; every knot appears in the output."""
    if not 0 <= j < model.rank:
        raise IndexError("mode index %d out of range [0, %d)" % (j, model.rank))
    k = model.train_times
    s = int(samples_per_interval)
    frac = np.arange(s) / s
    t = (k[:-1, None] + frac[None, :] * np.diff(k)[:, None]).ravel()
    t = np.append(t, k[-1])
    t[::s] = k
    vals = _eval_cubic(k, model.coefficients[j:j + 1], model.second_derivatives[j:j + 1], t)[0]
    return TimeSeries(t, vals)


def save_podi(model: PODIModel, path) -> None:
    b = model.basis
    n, r, m = b.modes.shape[0], b.rank, model.train_times.size
    header = {"n_dof": n, "rank": r, "m": m, "n_sigma": len(b.spectrum),
              "mean": model.mean is not None, "end_condition": model.end_condition,
              "layout": list(model.layout)}
    parts = [b.spectrum.sigma, b.modes.ravel(order="F"), b.right.ravel(order="F"),
             model.train_times, model.coefficients.ravel(), model.second_derivatives.ravel()]
    if model.mean is not None:
        parts.append(model.mean)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.concatenate(parts).astype("<f8").tobytes())


def load_podi(path) -> PODIModel:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError("not a .podimodel file")
    end = data.index(b"\n", len(MAGIC))
    h = json.loads(data[len(MAGIC):end])
    z = np.frombuffer(data[end + 1:], dtype="<f8").astype(float)
    n, r, m, ns = h["n_dof"], h["rank"], h["m"], h["n_sigma"]
    sizes = [ns, n * r, m * r, m, r * m, r * m] + ([n] if h["mean"] else [])
    if z.size != sum(sizes):
        raise ValueError("podi payload size mismatch")
    chunks = np.split(z, np.cumsum(sizes)[:-1])
    basis = PODBasis(chunks[1].reshape((n, r), order="F"), SingularSpectrum(chunks[0]),
                     chunks[2].reshape((m, r), order="F"))
    return PODIModel(basis, chunks[3], chunks[4].reshape(r, m), chunks[5].reshape(r, m),
                     chunks[6] if h["mean"] else None, h["end_condition"], tuple(h["layout"]))
