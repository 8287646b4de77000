"""Dynamic mode decomposition of a uniformly sampled snapshot sequence.

The reduced operator is built on the POD modes of ``S = [x_0 .. x_{m-2}]``::

    A_tilde = U_r^T Sdot V_r Sigma_r^{-1},  A_tilde W = W Lambda,  Phi = U_r W

and the state at time ``t`` is ``Re(Phi exp(omega (t - t0)) b)`` with
``omega = log(Lambda) / dt`` and ``b = pinv(Phi) x_0``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .decomposition import ZERO_RTOL, truncated_svd
from .snapshot import Field, SnapshotDataset

MAGIC = b"DMDMODEL1\n"
PINV_RTOL = 1e-12
EIGVEC_COND_MAX = 1e12
IMAG_RTOL = 1e-6


class DMDError(ValueError):
    pass


class RankError(DMDError):
    pass


@dataclass(frozen=True, eq=False)
class DMDSpectrumEntry:
    growth_rate: float
    frequency: float


@dataclass(frozen=True, eq=False)
class DMDModel:
    modes: np.ndarray
    eigenvalues: np.ndarray
    amplitudes: np.ndarray
    dt: float
    t0: float
    t_end: float
    layout: tuple[str, ...] = ()
    mean: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return self.eigenvalues.size

    @property
    def n_dof(self) -> int:
        return self.modes.shape[0]

    @property
    def omega(self) -> np.ndarray:
        return np.log(self.eigenvalues.astype(complex)) / self.dt

    def is_conjugate_complete(self, tol: float = 1e-8) -> bool:
        """Eigenvalues closed under conjugation with no negative real members."""
        mu = self.eigenvalues
        scale = max(np.max(np.abs(mu)), 1.0)
        unmatched = list(range(mu.size))
        while unmatched:
            i = unmatched.pop(0)
            if abs(mu[i].imag) <= tol * scale:
                if mu[i].real <= 0:
                    return False
                continue
            dist = [abs(mu[j] - np.conj(mu[i])) for j in unmatched]
            if not dist or min(dist) > tol * scale:
                return False
            unmatched.pop(int(np.argmin(dist)))
        return True


def fit_dmd(train: SnapshotDataset | np.ndarray, r: int, dt: float | None = None,
            t0: float = 0.0, subtract_mean: bool = False) -> DMDModel:
    """Fit a rank-``r`` DMD model to a dataset (or a raw matrix with ``dt``).

    ``subtract_mean`` removes the temporal mean before fitting and adds it back
    on evaluation; by default raw snapshots are used.
    """
    if isinstance(train, SnapshotDataset):
        X = train.snapshots
        dt, t0, t_end = train.dt, float(train.times[0]), float(train.times[-1])
        layout = train.layout
    else:
        X = np.asarray(train, dtype=float)
        if dt is None:
            raise ValueError("dt is required when fitting a raw matrix")
        t_end = t0 + dt * (X.shape[1] - 1)
        layout = ()
    mean = None
    if subtract_mean:
        mean = X.mean(axis=1)
        X = X - mean[:, None]
    m = X.shape[1]
    if m < 3:
        raise ValueError("DMD needs at least 3 snapshots, got %d" % m)
    if not 1 <= r <= m - 1:
        raise RankError("rank r=%d out of range [1, %d]" % (r, m - 1))
    S, Sdot = X[:, :-1], X[:, 1:]
    basis = truncated_svd(S, r)
    sigma = basis.sigma_r
    if sigma[0] == 0 or sigma[-1] <= ZERO_RTOL * sigma[0]:
        numerical = int(np.sum(basis.spectrum.sigma > ZERO_RTOL * basis.spectrum.sigma[0]))
        raise RankError("snapshot matrix is rank deficient below r=%d; try r <= %d" % (r, numerical))
    U, V = basis.modes, basis.right
    A_tilde = (U.T @ Sdot @ V) / sigma
    eigvals, W = np.linalg.eig(A_tilde)
    if not np.all(np.isfinite(eigvals)) or np.linalg.cond(W) > EIGVEC_COND_MAX:
        raise DMDError("reduced operator is defective (ill-conditioned eigenvectors); "
                       "reduce the rank")
    if np.any(eigvals == 0):
        raise DMDError("zero DMD eigenvalue; reduce the rank")
    order = _canonical_order(eigvals)
    eigvals, W = eigvals[order], W[:, order]
    Phi = U @ W
    b = np.linalg.pinv(Phi, rcond=PINV_RTOL) @ X[:, 0]
    return DMDModel(Phi, eigvals, b, float(dt), float(t0), float(t_end), tuple(layout), mean)


def _canonical_order(mu: np.ndarray) -> np.ndarray:
    # by |frequency|, then positive imaginary part first; deterministic across runs
    freq = np.abs(np.angle(mu))
    return np.lexsort((-np.round(mu.imag, 12), -np.round(np.abs(mu), 12), np.round(freq, 12)))


def continuous_spectrum(model: DMDModel) -> list[DMDSpectrumEntry]:
    mu = model.eigenvalues.astype(complex)
    if np.any(mu == 0):
        raise DMDError("zero eigenvalue has no continuous-time counterpart")
    omega = np.log(mu) / model.dt
    return [DMDSpectrumEntry(float(w.real), float(w.imag / (2 * np.pi))) for w in omega]


def evaluate_dmd(model: DMDModel, t, return_imag: bool = False):
    """State at time(s) ``t``; returns a vector for scalar ``t``, else ``(n_dof, len(t))``."""
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    slack = 1e-9 * model.dt
    if np.any(tt < model.t0 - slack):
        raise ValueError("DMD evaluation before t0=%g is not defined" % model.t0)
    if np.any(tt > model.t_end + slack):
        warnings.warn("DMD evaluated beyond the training window (extrapolation)", stacklevel=2)
    dynamics = np.exp(np.outer(model.omega, tt - model.t0)) * model.amplitudes[:, None]
    X = model.modes @ dynamics
    real = X.real
    if model.mean is not None:
        real = real + model.mean[:, None]
    imag_ratio = np.linalg.norm(X.imag, axis=0) / np.maximum(np.linalg.norm(real, axis=0), 1e-300)
    if model.is_conjugate_complete() and np.any(imag_ratio > IMAG_RTOL):
        raise DMDError("imaginary residual %.3g exceeds tolerance for a conjugate-complete model"
                       % imag_ratio.max())
    if scalar:
        real, imag_ratio = real[:, 0], float(imag_ratio[0])
    return (real, imag_ratio) if return_imag else real


def dmd_mode_field(model: DMDModel, k: int, n_cells: int | None = None):
    """Column ``k`` of ``Phi`` split per layout block: ``{name: (real Field, imag Field)}``."""
    if not 0 <= k < model.rank:
        raise IndexError("mode index %d out of range [0, %d)" % (k, model.rank))
    col = model.modes[:, k]
    layout = model.layout or ("x",)
    n = n_cells or model.n_dof // len(layout)
    if n * len(layout) != model.n_dof:
        raise ValueError("dof count %d does not split into %d blocks" % (model.n_dof, len(layout)))
    return {name: (Field(col[i * n:(i + 1) * n].real), Field(col[i * n:(i + 1) * n].imag))
            for i, name in enumerate(layout)}


def save_dmd(model: DMDModel, path) -> None:
    header = {"n_dof": model.n_dof, "rank": model.rank, "dt": model.dt, "t0": model.t0,
              "t_end": model.t_end, "layout": list(model.layout), "mean": model.mean is not None}
    parts = [model.eigenvalues, model.amplitudes, model.modes.ravel(order="F")]
    if model.mean is not None:
        parts.append(model.mean)
    payload = np.concatenate(parts)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload.astype("<c16").tobytes())


def load_dmd(path) -> DMDModel:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError("not a .dmdmodel file")
    end = data.index(b"\n", len(MAGIC))
    h = json.loads(data[len(MAGIC):end])
    n, r = h["n_dof"], h["rank"]
    z = np.frombuffer(data[end + 1:], dtype="<c16").astype(complex)
    has_mean = h.get("mean", False)
    if z.size != r * (n + 2) + (n if has_mean else 0):
        raise ValueError("dmd payload size mismatch")
    modes = z[2 * r:2 * r + n * r].reshape((n, r), order="F")
    mean = z[2 * r + n * r:].real.copy() if has_mean else None
    return DMDModel(modes, z[:r], z[r:2 * r], h["dt"], h["t0"], h["t_end"], tuple(h["layout"]), mean)
