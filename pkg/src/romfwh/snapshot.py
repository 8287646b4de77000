"""Meshes, fields, snapshot matrices and the ``.romsnap`` container.

A snapshot dataset stores one flattened flow state per column. The dof
layout is block-wise: every named field occupies ``n_cells`` consecutive
rows, by default ``[u, v, w, p]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"ROMSNAP1\n"
DEFAULT_LAYOUT = ("u", "v", "w", "p")
VELOCITY = ("u", "v", "w")
DT_RTOL = 1e-10


class FormatError(ValueError):
    """Raised when a container file or dataset violates its format."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Cell centres and volumes, optionally on a uniform structured grid.

    Structured meshes order cells x-fastest: ``idx = i + nx*(j + ny*k)``.
    """

    cell_centers: np.ndarray
    cell_volumes: np.ndarray
    dims: tuple[int, int, int] | None = None
    spacing: tuple[float, float, float] | None = None
    origin: tuple[float, float, float] | None = None

    def __post_init__(self):
        centers = _frozen(self.cell_centers)
        volumes = _frozen(self.cell_volumes)
        if centers.ndim != 2 or centers.shape[1] != 3:
            raise ValueError("cell_centers must have shape (n_cells, 3)")
        if volumes.shape != (centers.shape[0],):
            raise ValueError("cell_volumes length must equal cell count")
        if np.any(~(volumes > 0)):
            raise ValueError("cell volumes must be positive")
        object.__setattr__(self, "cell_centers", centers)
        object.__setattr__(self, "cell_volumes", volumes)
        if self.dims is not None:
            dims = tuple(int(d) for d in self.dims)
            if int(np.prod(dims)) != centers.shape[0]:
                raise ValueError("nx*ny*nz must equal cell count")
            object.__setattr__(self, "dims", dims)
            object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
            object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @classmethod
    def structured(cls, dims, spacing, origin=(0.0, 0.0, 0.0)) -> "Mesh":
        """Uniform grid whose first cell centre sits at ``origin``."""
        nx, ny, nz = (int(d) for d in dims)
        hx, hy, hz = (float(h) for h in spacing)
        x = origin[0] + hx * np.arange(nx)
        y = origin[1] + hy * np.arange(ny)
        z = origin[2] + hz * np.arange(nz)
        zz, yy, xx = np.meshgrid(z, y, x, indexing="ij")
        centers = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
        volumes = np.full(nx * ny * nz, hx * hy * hz)
        return cls(centers, volumes, (nx, ny, nz), (hx, hy, hz), tuple(origin))

    @property
    def n_cells(self) -> int:
        return self.cell_centers.shape[0]

    @property
    def is_structured(self) -> bool:
        return self.dims is not None

    def to_grid(self, values: np.ndarray) -> np.ndarray:
        """Reshape a per-cell array to ``(nz, ny, nx)``."""
        nx, ny, nz = self.dims
        return np.asarray(values).reshape(nz, ny, nx)

    def to_header(self) -> dict:
        if self.is_structured:
            return {"dims": list(self.dims), "spacing": list(self.spacing),
                    "origin": list(self.origin)}
        return {"cell_centers": self.cell_centers.tolist(),
                "cell_volumes": self.cell_volumes.tolist()}

    @classmethod
    def from_header(cls, h: dict) -> "Mesh":
        if "dims" in h:
            return cls.structured(h["dims"], h["spacing"], h.get("origin", (0.0, 0.0, 0.0)))
        return cls(np.asarray(h["cell_centers"], dtype=float),
                   np.asarray(h["cell_volumes"], dtype=float))


@dataclass(frozen=True, eq=False)
class Field:
    """A scalar or 3-vector cell field. Vector values have shape ``(3, n)``."""

    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim == 2 and v.shape[0] != 3:
            raise ValueError("vector field values must have shape (3, n_cells)")
        if v.ndim not in (1, 2):
            raise ValueError("field values must be 1-D (scalar) or (3, n) (vector)")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def kind(self) -> str:
        return "scalar" if self.values.ndim == 1 else "vector3"

    @property
    def n_cells(self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True, eq=False)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times)
        v = _frozen(self.values)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.times.size

    def to_csv(self, path, header="t,value"):
        write_columns_csv(path, header, [self.times, self.values])


@dataclass(frozen=True, eq=False)
class Probe:
    location: np.ndarray
    index: int


@dataclass(frozen=True, eq=False)
class SnapshotDataset:
    """Snapshot matrix ``S`` (n_dof x m) on a uniform time axis."""

    mesh: Mesh
    times: np.ndarray
    snapshots: np.ndarray
    layout: tuple[str, ...] = DEFAULT_LAYOUT
    label: str = field(default="", compare=False)

    def __post_init__(self):
        times = _frozen(self.times)
        snaps = _frozen(self.snapshots)
        layout = tuple(self.layout)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "layout", layout)
        if snaps.ndim != 2:
            raise FormatError("snapshots must be a 2-D matrix")
        if snaps.shape[1] == 0 or times.size == 0:
            raise FormatError("empty dataset")
        if snaps.shape[1] != times.size:
            raise FormatError("snapshot count mismatch: %d columns, %d times"
                              % (snaps.shape[1], times.size))
        if snaps.shape[0] != len(layout) * self.mesh.n_cells:
            raise FormatError("dof count mismatch: %d rows for layout %s on %d cells"
                              % (snaps.shape[0], layout, self.mesh.n_cells))
        if len(set(layout)) != len(layout):
            raise FormatError("duplicate names in layout")
        if times.size > 1:
            steps = np.diff(times)
            if np.any(steps <= 0):
                raise FormatError("times must be strictly increasing")
            if np.max(np.abs(steps - steps.mean())) > DT_RTOL * abs(steps.mean()):
                raise FormatError("non-uniform time step")

    @property
    def n_dof(self) -> int:
        return self.snapshots.shape[0]

    @property
    def m(self) -> int:
        return self.snapshots.shape[1]

    @property
    def n_cells(self) -> int:
        return self.mesh.n_cells

    @property
    def dt(self) -> float:
        if self.m < 2:
            return 0.0
        return float((self.times[-1] - self.times[0]) / (self.m - 1))

    def block_slice(self, name: str) -> slice:
        if name not in self.layout:
            raise KeyError("field %r not in layout %s" % (name, self.layout))
        i = self.layout.index(name)
        n = self.n_cells
        return slice(i * n, (i + 1) * n)

    def block(self, name: str) -> np.ndarray:
        """Rows of ``S`` belonging to one field, shape ``(n_cells, m)``."""
        return self.snapshots[self.block_slice(name)]

    def velocity(self, k: int) -> Field:
        return Field(np.stack([self.block(c)[:, k] for c in VELOCITY]), "m/s")

    def with_snapshots(self, snapshots, times=None, label=None) -> "SnapshotDataset":
        return SnapshotDataset(self.mesh, self.times if times is None else times,
                               snapshots, self.layout,
                               self.label if label is None else label)

    def subset(self, names: Sequence[str]) -> "SnapshotDataset":
        """Dataset restricted to the named field blocks."""
        rows = np.concatenate([self.block(n) for n in names], axis=0)
        return SnapshotDataset(self.mesh, self.times, rows, tuple(names), self.label)


def save_dataset(ds: SnapshotDataset, path) -> None:
    header = {
        "n_cells": ds.n_cells,
        "m": ds.m,
        "dt": ds.dt,
        "t0": float(ds.times[0]),
        "layout": list(ds.layout),
        "mesh": ds.mesh.to_header(),
        "label": ds.label,
    }
    payload = np.concatenate([ds.times, ds.snapshots.ravel(order="F")])
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(payload.astype("<f8").tobytes())


def load_dataset(path) -> SnapshotDataset:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise FormatError("bad magic: not a .romsnap file")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise FormatError("malformed header: missing terminator")
    try:
        header = json.loads(data[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError("malformed header: %s" % exc) from None
    for key in ("n_cells", "m", "layout", "mesh"):
        if key not in header:
            raise FormatError("malformed header: missing %r" % key)
    try:
        mesh = Mesh.from_header(header["mesh"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError("malformed header: mesh: %s" % exc) from None
    n_cells, m = int(header["n_cells"]), int(header["m"])
    if mesh.n_cells != n_cells:
        raise FormatError("n_cells mismatch: header %d, mesh %d" % (n_cells, mesh.n_cells))
    if m == 0:
        raise FormatError("empty dataset")
    n_dof = n_cells * len(header["layout"])
    body = data[end + 1:]
    if len(body) % 8:
        raise FormatError("payload length is not a multiple of 8 bytes")
    payload = np.frombuffer(body, dtype="<f8").astype(float)
    if payload.size != m * (n_dof + 1):
        raise FormatError("snapshot count mismatch: header declares m=%d, payload holds %.6g columns"
                          % (m, (payload.size - m) / n_dof if n_dof else 0))
    times = payload[:m]
    snaps = payload[m:].reshape((n_dof, m), order="F")
    return SnapshotDataset(mesh, times, snaps, tuple(header["layout"]), header.get("label", ""))


def split_train_test(ds: SnapshotDataset) -> tuple[SnapshotDataset, SnapshotDataset]:
    """Odd/even split: even 0-based indices train, odd ones inside the train window test."""
    if ds.m < 4 or ds.m % 2:
        raise ValueError("split_train_test needs an even snapshot count >= 4, got %d" % ds.m)
    train_idx = np.arange(0, ds.m, 2)
    t_last = ds.times[train_idx[-1]]
    test_idx = np.array([k for k in range(1, ds.m, 2) if ds.times[k] < t_last], dtype=int)
    train = ds.with_snapshots(ds.snapshots[:, train_idx], ds.times[train_idx], "train")
    test = ds.with_snapshots(ds.snapshots[:, test_idx], ds.times[test_idx], "test")
    return train, test


def resolve_probe(mesh: Mesh, location) -> Probe:
    """Nearest cell centre; ties go to the lowest index."""
    loc = np.asarray(location, dtype=float).reshape(3)
    d2 = np.sum((mesh.cell_centers - loc) ** 2, axis=1)
    return Probe(_frozen(loc), int(np.argmin(d2)))


def sample_probe(ds: SnapshotDataset, probe: Probe, selector: str = "u") -> TimeSeries:
    if selector not in ds.layout:
        raise KeyError("selector %r not in layout %s" % (selector, ds.layout))
    if not 0 <= probe.index < ds.n_cells:
        raise IndexError("probe index %d outside mesh" % probe.index)
    return TimeSeries(ds.times, ds.block(selector)[probe.index, :])


def write_columns_csv(path, header: str, columns) -> None:
    """CSV with 17 significant digits, so floats round-trip."""
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)
