"""Manufactured wake-like snapshot data with known modal content.

Every component is a compactly supported envelope carrying a wave convected
downstream at ``U0``::

    u' = a g(x) cos(kappa (x - x_c) - 2 pi f t - psi),  kappa = 2 pi f / U0

plus a swirl about the x axis in (v', w') with the same phase. Each component
is exactly rank 2 in the snapshot matrix, so a noise-free dataset with ``k``
components has rank at most ``2k + 1`` (the uniform stream is the +1).
The pressure companion is ``p = -rho0 U0 u'``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .flow import SphereSurface
from .snapshot import DEFAULT_LAYOUT, Mesh, SnapshotDataset

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True)
class Component:
    pattern: str = "wake"
    amplitude: float = 0.1  # m/s
    frequency: float = 20.0  # Hz
    phase: float = 0.0  # rad


# envelope geometry in units of D: axial centre, axial half-length, radial offset (y, z), radius
PATTERNS = {
    "wake": dict(xc=3.0, lx=3.0, yc=0.0, zc=0.0, rc=1.5),
    "upper": dict(xc=3.5, lx=2.5, yc=0.0, zc=0.5, rc=1.0),
    "lower": dict(xc=3.5, lx=2.5, yc=0.0, zc=-0.5, rc=1.0),
    "tube": dict(xc=3.0, lx=1e9, yc=0.0, zc=0.0, rc=1.5),
}


@dataclass(frozen=True)
class SynthConfig:
    dims: tuple[int, int, int] = (41, 21, 21)
    spacing: tuple[float, float, float] = (0.0025, 0.0025, 0.0025)
    origin: tuple[float, float, float] = (-0.02, -0.025, -0.025)
    D: float = 0.01
    U0: float = 1.0
    rho0: float = 1000.0
    components: tuple[Component, ...] = field(default_factory=lambda: (Component(),))
    noise: float = 0.0
    fs: float = 500.0
    m: int = 200
    t0: float = 0.0
    seed: int = 0

    def validate(self):
        if self.m < 4:
            raise ValueError("m must be at least 4")
        if self.fs <= 0 or self.U0 <= 0 or self.D <= 0:
            raise ValueError("fs, U0 and D must be positive")
        for c in self.components:
            if not 0 <= c.frequency < self.fs / 2:
                raise ValueError("component frequency %g Hz violates Nyquist (fs=%g Hz)"
                                 % (c.frequency, self.fs))
            if c.pattern not in PATTERNS:
                raise ValueError("unknown spatial pattern %r" % c.pattern)

    @property
    def shedding_frequency(self) -> float:
        """``St U0 / D`` with ``St = 0.2``."""
        return 0.2 * self.U0 / self.D


def _bump(s):
    # C2 taper, exactly zero for |s| >= 1
    s = np.minimum(np.abs(s), 1.0)
    return (1.0 - s ** 2) ** 3


def spatial_pattern(pattern: str, centers: np.ndarray, D: float):
    """Envelope ``g`` and the swirl lever arms ``(y - yc, z - zc) / (D/2)``."""
    p = PATTERNS[pattern]
    x, y, z = centers[:, 0] / D, centers[:, 1] / D, centers[:, 2] / D
    dy, dz = y - p["yc"], z - p["zc"]
    rad = np.sqrt(dy ** 2 + dz ** 2) / p["rc"]
    g = _bump(rad) * _bump((x - p["xc"]) / p["lx"]) * np.exp(-2.0 * rad ** 2)
    return g, 2.0 * dy, 2.0 * dz


def generate_synthetic(cfg: SynthConfig) -> SnapshotDataset:
    cfg.validate()
    mesh = Mesh.structured(cfg.dims, cfg.spacing, cfg.origin)
    times = cfg.t0 + np.arange(cfg.m) / cfg.fs
    n = mesh.n_cells
    S = np.zeros((4 * n, cfg.m))
    S[:n] = cfg.U0
    xs = mesh.cell_centers[:, 0]
    for c in cfg.components:
        g, ly, lz = spatial_pattern(c.pattern, mesh.cell_centers, cfg.D)
        kappa = 2 * np.pi * c.frequency / cfg.U0
        xc = PATTERNS[c.pattern]["xc"] * cfg.D
        # cos(kx - wt - psi) = cos(kx - psi) cos(wt) + sin(kx - psi) sin(wt)
        space_c = c.amplitude * g * np.cos(kappa * (xs - xc) - c.phase)
        space_s = c.amplitude * g * np.sin(kappa * (xs - xc) - c.phase)
        wt = 2 * np.pi * c.frequency * (times - cfg.t0)
        up = np.outer(space_c, np.cos(wt)) + np.outer(space_s, np.sin(wt))
        S[:n] += up
        S[n:2 * n] += -lz[:, None] * up
        S[2 * n:3 * n] += ly[:, None] * up
        S[3 * n:] += -cfg.rho0 * cfg.U0 * up
    if cfg.noise > 0:
        rng = np.random.default_rng(cfg.seed)
        S += cfg.noise * rng.standard_normal(S.shape)
    return SnapshotDataset(mesh, times, S, DEFAULT_LAYOUT, "synthetic")


def generate_sphere_surface(D: float, n_panels: int) -> SphereSurface:
    """Fibonacci-lattice panelization of a sphere centred at the origin, equal-area panels."""
    if n_panels < 8:
        raise ValueError("need at least 8 panels, got %d" % n_panels)
    i = np.arange(n_panels)
    z = 1.0 - (2 * i + 1) / n_panels
    rho = np.sqrt(1.0 - z ** 2)
    phi = i * GOLDEN_ANGLE
    normals = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    areas = np.full(n_panels, np.pi * D ** 2 / n_panels)
    return SphereSurface(0.5 * D * normals, normals, areas, float(D))


def parse_components(text: str) -> tuple[Component, ...]:
    """``"wake:0.1:20:0; upper:0.05:40"`` -> components (phase optional)."""
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = [s.strip() for s in item.split(":")]
        if len(parts) not in (3, 4):
            raise ValueError("component %r must be pattern:amplitude:frequency[:phase]" % item)
        phase = float(parts[3]) if len(parts) == 4 else 0.0
        out.append(Component(parts[0], float(parts[1]), float(parts[2]), phase))
    return tuple(out)


def _triple(text, cast):
    vals = [cast(v) for v in text.replace(",", " ").split()]
    if len(vals) != 3:
        raise ValueError("expected three values, got %r" % text)
    return tuple(vals)


def synth_config_from_mapping(values: dict, base: SynthConfig | None = None) -> SynthConfig:
    """Build a config from ``key = value`` strings; unknown keys are rejected."""
    cfg = base or SynthConfig()
    kw = {}
    for key, raw in values.items():
        key = key.strip().lower()
        raw = str(raw).strip()
        if key in ("dims",):
            kw[key] = _triple(raw, int)
        elif key in ("spacing", "origin"):
            kw[key] = _triple(raw, float)
        elif key in ("d", "u0", "rho0", "noise", "fs", "t0"):
            kw[{"d": "D", "u0": "U0"}.get(key, key)] = float(raw)
        elif key in ("m", "seed"):
            kw[key] = int(raw)
        elif key == "components":
            kw[key] = parse_components(raw)
        else:
            raise ValueError("unknown synth config key %r" % key)
    return replace(cfg, **kw)


def load_synth_config(path) -> SynthConfig:
    """Read a ``key = value`` text file (``#`` comments, optional ``[synth]`` section)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if not text.lstrip().startswith("["):
        text = "[synth]\n" + text
    parser.read_string(text)
    section = parser["synth"] if parser.has_section("synth") else parser[parser.sections()[0]]
    return synth_config_from_mapping(dict(section))
