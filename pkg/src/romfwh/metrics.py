"""Relative Frobenius errors, rank sweeps and compression/speedup bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .snapshot import SnapshotDataset, write_columns_csv


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Per-snapshot relative errors in percent; ``global_error`` is their mean."""

    per_snapshot: np.ndarray
    times: np.ndarray
    rank: int
    label: str = "reconstruction"

    @property
    def global_error(self) -> float:
        return float(np.mean(self.per_snapshot))


@dataclass(frozen=True, eq=False)
class CompressionReport:
    fom_floats: int
    rom_floats: int
    bytes_per_value: int = 8
    fom_seconds: float | None = None
    rom_seconds: float | None = None

    @property
    def compression_level(self) -> float:
        return self.fom_floats / self.rom_floats

    @property
    def fom_bytes(self) -> int:
        return self.fom_floats * self.bytes_per_value

    @property
    def rom_bytes(self) -> int:
        return self.rom_floats * self.bytes_per_value

    @property
    def speedup(self) -> float | None:
        if self.fom_seconds is None or not self.rom_seconds:
            return None
        return self.fom_seconds / self.rom_seconds


def relative_frobenius_error(x_hat, x_ref) -> float:
    """``100 * ||x_hat - x_ref||_F / ||x_ref||_F``."""
    x_hat = np.asarray(x_hat, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    if x_hat.shape != x_ref.shape:
        raise ValueError("shape mismatch %s vs %s" % (x_hat.shape, x_ref.shape))
    ref = np.linalg.norm(x_ref)
    if ref == 0:
        raise ZeroDivisionError("reference has zero norm")
    return 100.0 * float(np.linalg.norm(x_hat - x_ref)) / float(ref)


def per_snapshot_errors(X_hat, X_ref) -> np.ndarray:
    X_hat = np.asarray(X_hat, dtype=float)
    X_ref = np.asarray(X_ref, dtype=float)
    if X_hat.shape != X_ref.shape:
        raise ValueError("shape mismatch %s vs %s" % (X_hat.shape, X_ref.shape))
    return np.array([relative_frobenius_error(X_hat[:, k], X_ref[:, k]) for k in range(X_ref.shape[1])])


def error_report(X_hat, reference: SnapshotDataset, rank: int, label="reconstruction") -> ErrorReport:
    return ErrorReport(per_snapshot_errors(X_hat, reference.snapshots), np.array(reference.times),
                       rank, label)


def error_sweep(surrogate: Callable[[int, np.ndarray], np.ndarray], reference: SnapshotDataset,
                ranks: Iterable[int], label: str = "reconstruction") -> list[ErrorReport]:
    """One report per rank; ``surrogate(r, times)`` returns states as columns."""
    return [error_report(surrogate(int(r), reference.times), reference, int(r), label)
            for r in ranks]


def pressure_gauge_offset(ds: SnapshotDataset, offset: float, name: str = "p") -> SnapshotDataset:
    """Add a constant to the pressure block only."""
    if name not in ds.layout:
        raise KeyError("dataset has no pressure block %r" % name)
    S = np.array(ds.snapshots)
    S[ds.block_slice(name)] += offset
    return ds.with_snapshots(S)


def rom_payload_floats(n_dof: int, r: int, m_train: int, kind: str) -> int:
    """Stored floats for a rank-r ROM: spatial modes plus its temporal representation."""
    if kind == "podi":
        # knot times, knot values and second derivatives per mode
        dynamics = m_train + 2 * r * m_train
    elif kind == "dmd":
        # complex eigenvalues and amplitudes, re/im each
        dynamics = 4 * r
    else:
        raise ValueError("unknown ROM kind %r" % kind)
    return n_dof * r + dynamics


def compression_report(n_dof: int, m_total: int, r: int, bytes_per_value: int = 8,
                       timings: tuple[float, float] | None = None, kind: str = "mean",
                       m_train: int | None = None) -> CompressionReport:
    """Compression of a rank-r ROM against ``n_dof * m_total`` stored FOM values.

    ``kind="mean"`` averages the DMD and PODI payloads, as the published table does.
    """
    if min(n_dof, m_total, r) <= 0:
        raise ValueError("counts must be positive")
    m_train = m_total // 2 if m_train is None else m_train
    if kind == "mean":
        rom = (rom_payload_floats(n_dof, r, m_train, "dmd")
               + rom_payload_floats(n_dof, r, m_train, "podi")) // 2
    else:
        rom = rom_payload_floats(n_dof, r, m_train, kind)
    if rom <= 0:
        raise ValueError("ROM size must be positive")
    fom_s, rom_s = timings if timings is not None else (None, None)
    return CompressionReport(n_dof * m_total, rom, bytes_per_value, fom_s, rom_s)


def write_error_csv(reports: Sequence[ErrorReport], path) -> None:
    ranks, idx, times, errs = [], [], [], []
    for rep in reports:
        n = rep.per_snapshot.size
        ranks += [rep.rank] * n
        idx += list(range(n))
        times += list(rep.times)
        errs += list(rep.per_snapshot)
    write_columns_csv(path, "rank,snapshot_index,time,error_percent",
                      [np.array(ranks), np.array(idx), np.array(times), np.array(errs)])


def write_summary_csv(rows, path) -> None:
    """``rows``: iterable of (rank, global_error, compression_level, speedup or None)."""
    with open(path, "w", newline="") as fh:
        fh.write("rank,global_error_percent,compression_level,speedup\n")
        for rank, err, level, speed in rows:
            fh.write("%d,%.17g,%.17g,%s\n" % (rank, err, level, "" if speed is None else "%.17g" % speed))
