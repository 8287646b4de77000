"""POD basis extraction by truncated SVD, plus the truncation-error identities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

# tall-skinny switch: n/m above this goes through a thin QR first
TALL_RATIO = 10
ZERO_RTOL = 1e-12


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SingularSpectrum:
    sigma: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        if np.any(s < 0) or np.any(np.diff(s) > 0):
            raise ValueError("singular values must be non-negative and non-increasing")
        s.flags.writeable = False
        object.__setattr__(self, "sigma", s)

    def __len__(self):
        return self.sigma.size


@dataclass(frozen=True, eq=False)
class PODBasis:
    """Leading ``rank`` left/right singular vectors and the full spectrum."""

    modes: np.ndarray
    spectrum: SingularSpectrum
    right: np.ndarray

    @property
    def rank(self) -> int:
        return self.modes.shape[1]

    @property
    def sigma_r(self) -> np.ndarray:
        return self.spectrum.sigma[: self.rank]

    def reconstruction(self) -> np.ndarray:
        """``U_r diag(sigma_r) V_r^T``."""
        return (self.modes * self.sigma_r) @ self.right.T


def _full_svd(S: np.ndarray):
    n, m = S.shape
    if n > TALL_RATIO * m:
        Q, R = np.linalg.qr(S, mode="reduced")
        Ur, s, Vt = scipy.linalg.svd(R, full_matrices=False, lapack_driver="gesdd")
        U = Q @ Ur
    else:
        U, s, Vt = scipy.linalg.svd(S, full_matrices=False, lapack_driver="gesdd")
    return U, s, Vt.T


def _fix_signs(U: np.ndarray, V: np.ndarray):
    """Flip each pair so the largest-magnitude entry of the left vector is positive."""
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def truncated_svd(S, r: int) -> PODBasis:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2:
        raise ValueError("snapshot matrix must be 2-D")
    kmax = min(S.shape)
    if not 1 <= r <= kmax:
        raise ValueError("rank r=%d out of range [1, %d]" % (r, kmax))
    U, s, V = _full_svd(S)
    if s[0] > 0:
        s = np.where(s < ZERO_RTOL * s[0], 0.0, s)
    U, V = _fix_signs(U[:, :r], V[:, :r])
    return PODBasis(U, SingularSpectrum(s), V)


def singular_spectrum(S) -> SingularSpectrum:
    return SingularSpectrum(scipy.linalg.svdvals(np.asarray(S, dtype=float)))


def normalized_singular_values(spec: SingularSpectrum) -> np.ndarray:
    s = spec.sigma
    if s.size == 0:
        raise ValueError("empty spectrum")
    if s[0] == 0:
        raise DegenerateDataError("leading singular value is zero; data is identically zero")
    out = s / s[0]
    out[0] = 1.0
    return out


def pod_project(basis: PODBasis, S) -> np.ndarray:
    """Modal coefficients ``alpha = U_r^T S`` (r x m)."""
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[0] != basis.modes.shape[0]:
        raise ValueError("dof mismatch: basis has %d rows, data has %d"
                         % (basis.modes.shape[0], S.shape[0]))
    return basis.modes.T @ S


def pod_reconstruct(basis: PODBasis, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if basis.rank == 0:
        raise ValueError("rank 0 basis cannot reconstruct")
    if alpha.ndim == 1:
        alpha = alpha[:, None]
    if alpha.shape[0] != basis.rank:
        raise ValueError("coefficient rows %d do not match rank %d" % (alpha.shape[0], basis.rank))
    return basis.modes @ alpha


def truncation_error(spec: SingularSpectrum, r: int) -> tuple[float, float]:
    """Spectral and Frobenius norms of the rank-r SVD residual."""
    s = spec.sigma
    if not 0 <= r < s.size:
        raise ValueError("r=%d must be below spectrum length %d" % (r, s.size))
    tail = s[r:]
    return float(tail[0]), float(np.sqrt(np.sum(tail[::-1] ** 2)))


def cumulative_energy(spec: SingularSpectrum, r: int) -> float:
    s2 = spec.sigma ** 2
    total = s2.sum()
    if total == 0:
        raise DegenerateDataError("zero spectrum has no energy")
    if not 0 <= r <= s2.size:
        raise ValueError("r=%d out of range [0, %d]" % (r, s2.size))
    if r == s2.size:
        return 1.0
    return float(min(s2[:r].sum() / total, 1.0))


def spectrum_to_csv(spec: SingularSpectrum, path) -> None:
    from .snapshot import write_columns_csv

    norm = normalized_singular_values(spec)
    write_columns_csv(path, "index,sigma_normalized", [np.arange(1, norm.size + 1), norm])
