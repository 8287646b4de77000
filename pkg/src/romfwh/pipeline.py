"""End-to-end FOM/ROM/acoustics pipeline.

Stages: acquire data -> split -> basis functions -> fit ROMs -> mid-cast ->
error, spectral, vortex, force and acoustic analyses -> cross-comparison.
All outputs are CSV plus one ``summary.json``; timings are only recorded
when asked for, so repeated runs produce identical files.
"""

from __future__ import annotations

import configparser
import json
import logging
import shutil
import tempfile
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import decomposition as dec
from . import flow, fwh, metrics, spectral
from .dmd import evaluate_dmd, fit_dmd
from .podi import evaluate_podi, fit_podi
from .snapshot import (SnapshotDataset, TimeSeries, load_dataset, resolve_probe, sample_probe,
                       split_train_test, write_columns_csv)
from .synth import SynthConfig, generate_sphere_surface, generate_synthetic, synth_config_from_mapping

log = logging.getLogger(__name__)

ROM_KINDS = ("dmd", "podi")
FIELD_GROUPS = {"U": ("u", "v", "w"), "P": ("p",)}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__("[%s] %s: %s" % (stage, type(exc).__name__, exc))
        self.stage = stage


@dataclass
class PipelineConfig:
    input: str | None = None
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(noise=1e-4))
    ranks: tuple[int, ...] = (2, 10)
    rom: str = "both"
    decomposition: str = "separate"
    probes: dict = field(default_factory=lambda: {"A": (0.02, 0.0, 0.02), "B": (0.02, 0.0, 0.0)})
    microphones: dict | None = None
    acoustic: fwh.AcousticConfig = field(default_factory=fwh.AcousticConfig)
    gauge_offset: float = 1.0
    n_panels: int = 2000
    source_radius: float = 1.5  # in units of D
    q_level: float = 4.0
    hist_bins: int = flow.DEFAULT_BINS
    wake_threshold: float = flow.OMEGA_X_THRESHOLD
    subtract_mean: bool = True  # raw data carries U0 and the gauge offset
    record_timing: bool = False
    fom_seconds: float | None = None
    out: str = "rom_out"

    @property
    def kinds(self) -> tuple[str, ...]:
        return ROM_KINDS if self.rom == "both" else (self.rom,)

    @property
    def D(self) -> float:
        return self.synth.D

    def mic_list(self) -> list[fwh.Microphone]:
        if self.microphones is None:
            return fwh.default_microphones(self.D)
        return [fwh.Microphone(k, v) for k, v in self.microphones.items()]

    def validate(self, m_train: int | None = None):
        if self.rom not in ROM_KINDS + ("both",):
            raise ConfigError("rom must be dmd, podi or both (got %r)" % self.rom)
        if self.decomposition not in ("separate", "joint"):
            raise ConfigError("decomposition must be separate or joint")
        if not self.ranks:
            raise ConfigError("rank list is empty")
        for r in self.ranks:
            if int(r) < 1:
                raise ConfigError("rank %r is invalid: ranks must be >= 1" % r)
            if m_train is not None and int(r) > m_train:
                raise ConfigError("rank %d exceeds the %d training snapshots" % (r, m_train))
            if m_train is not None and "dmd" in self.kinds and int(r) > m_train - 1:
                raise ConfigError("DMD rank %d exceeds m_train - 1 = %d" % (r, m_train - 1))
        if self.n_panels < 8:
            raise ConfigError("n_panels must be at least 8")


def _parse_points(text: str) -> dict:
    """``"A=0.02,0,0.02; B=0.02,0,0"`` -> ``{label: (x, y, z)}``."""
    out = {}
    for i, item in enumerate(s.strip() for s in text.split(";")):
        if not item:
            continue
        label, _, xyz = item.rpartition("=")
        vals = tuple(float(v) for v in xyz.split(","))
        if len(vals) != 3:
            raise ConfigError("point %r needs three coordinates" % item)
        out[label.strip() or "P%d" % i] = vals
    return out


def load_pipeline_config(path) -> PipelineConfig:
    """Read ``[pipeline]``, ``[synth]`` and ``[acoustic]`` sections of a key = value file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError("cannot parse %s: %s" % (path, exc)) from None
    cfg = PipelineConfig()
    try:
        if parser.has_section("synth"):
            cfg.synth = synth_config_from_mapping(dict(parser["synth"]), cfg.synth)
        if parser.has_section("acoustic"):
            names = {f.lower(): f for f in fwh.AcousticConfig.__dataclass_fields__}  # keys arrive lower-cased
            cfg.acoustic = fwh.AcousticConfig(**{names.get(k, k): float(v) for k, v in parser["acoustic"].items()})
        if parser.has_section("pipeline"):
            for key, raw in parser["pipeline"].items():
                apply_override(cfg, key, raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def apply_override(cfg: PipelineConfig, key: str, raw: str) -> None:
    key = key.strip().lower()
    if key == "ranks":
        cfg.ranks = parse_ranks(raw)
    elif key in ("probes", "microphones"):
        setattr(cfg, key, _parse_points(raw))
    elif key in ("rom", "decomposition", "out", "input"):
        setattr(cfg, key, raw.strip())
    elif key in ("gauge_offset", "source_radius", "q_level", "wake_threshold", "fom_seconds"):
        setattr(cfg, key, float(raw))
    elif key in ("n_panels", "hist_bins"):
        setattr(cfg, key, int(raw))
    elif key in ("record_timing", "subtract_mean"):
        setattr(cfg, key, raw.strip().lower() in ("1", "true", "yes", "on"))
    else:
        raise ConfigError("unknown pipeline key %r" % key)


def parse_ranks(text: str) -> tuple[int, ...]:
    try:
        ranks = tuple(int(v) for v in str(text).replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ConfigError("ranks must be comma-separated integers (got %r)" % text) from None
    if any(r < 1 for r in ranks):
        raise ConfigError("invalid rank in %r: ranks must be >= 1" % text)
    return ranks


def field_groups(layout, mode: str) -> dict:
    if mode == "joint":
        return {"UP": tuple(layout)}
    groups = {g: names for g, names in FIELD_GROUPS.items() if all(n in layout for n in names)}
    rest = tuple(n for n in layout if not any(n in v for v in groups.values()))
    if rest:
        groups["X"] = rest
    return groups


def fit_rom(kind: str, train: SnapshotDataset, r: int, subtract_mean: bool = False):
    if kind == "dmd":
        return fit_dmd(train, r, subtract_mean=subtract_mean)
    return fit_podi(train, r, subtract_mean=subtract_mean)


def evaluate_rom(kind: str, model, times) -> np.ndarray:
    return evaluate_dmd(model, times) if kind == "dmd" else evaluate_podi(model, times)


def _stage(name):
    def wrap(fn):
        def inner(*a, **k):
            log.info("stage %s", name)
            try:
                return fn(*a, **k)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        return inner
    return wrap


class Pipeline:
    def __init__(self, cfg: PipelineConfig, outdir: Path):
        self.cfg = cfg
        self.out = outdir
        self.summary: dict = {}
        self.timings: dict = {}

    # -- data ---------------------------------------------------------------
    @_stage("acquire")
    def acquire(self):
        cfg = self.cfg
        ds = load_dataset(cfg.input) if cfg.input else generate_synthetic(cfg.synth)
        if "p" in ds.layout and cfg.gauge_offset:
            ds = metrics.pressure_gauge_offset(ds, cfg.gauge_offset)
        self.full = ds
        self.train, self.test = split_train_test(ds)
        cfg.validate(self.train.m)
        self.groups = field_groups(ds.layout, cfg.decomposition)
        self.summary["dataset"] = {"n_cells": ds.n_cells, "n_dof": ds.n_dof, "m": ds.m, "dt": ds.dt,
                                   "m_train": self.train.m, "m_test": self.test.m,
                                   "layout": list(ds.layout), "groups": {k: list(v) for k, v in self.groups.items()}}

    @_stage("basis")
    def basis(self):
        energy = {}
        for g, names in self.groups.items():
            spec = dec.singular_spectrum(self.train.subset(names).snapshots)
            dec.spectrum_to_csv(spec, self.out / ("sv_%s.csv" % g))
            energy[g] = {str(r): dec.cumulative_energy(spec, min(r, len(spec))) for r in self.cfg.ranks}
        self.summary["cumulative_energy"] = energy

    @_stage("rom")
    def build_roms(self):
        cfg = self.cfg
        self.predictions = {}
        summary = {}
        for kind in cfg.kinds:
            for g, names in self.groups.items():
                tr, te = self.train.subset(names), self.test.subset(names)
                recon_reports, pred_reports, rows = [], [], []
                for r in cfg.ranks:
                    t_start = time.perf_counter()
                    model = fit_rom(kind, tr, r, cfg.subtract_mean)
                    recon = evaluate_rom(kind, model, tr.times)
                    pred = evaluate_rom(kind, model, te.times)
                    elapsed = time.perf_counter() - t_start
                    self.timings["%s_%s_r%d" % (kind, g, r)] = elapsed
                    self.predictions.setdefault((kind, r), {})[g] = pred
                    recon_reports.append(metrics.error_report(recon, tr, r, "reconstruction"))
                    pred_reports.append(metrics.error_report(pred, te, r, "prediction"))
                    comp = metrics.compression_report(
                        tr.n_dof, self.full.m, r, kind=kind, m_train=tr.m,
                        timings=(cfg.fom_seconds, elapsed) if cfg.record_timing else None)
                    rows.append((r, pred_reports[-1].global_error, comp.compression_level, comp.speedup))
                metrics.write_error_csv(recon_reports, self.out / ("errors_recon_%s_%s.csv" % (kind, g)))
                metrics.write_error_csv(pred_reports, self.out / ("errors_pred_%s_%s.csv" % (kind, g)))
                metrics.write_summary_csv(rows, self.out / ("summary_%s_%s.csv" % (kind, g)))
                summary["%s_%s" % (kind, g)] = {
                    str(rep.rank): {"recon_global_percent": rec.global_error,
                                    "pred_global_percent": rep.global_error,
                                    "compression_level": row[2]}
                    for rec, rep, row in zip(recon_reports, pred_reports, rows)}
        self.summary["rom"] = summary
        # full-layout predicted datasets, one per (kind, rank)
        self.sources = {"fom": self.test}
        for (kind, r), parts in self.predictions.items():
            rows = np.empty_like(self.test.snapshots)
            for g, names in self.groups.items():
                sub = parts[g]
                for i, name in enumerate(names):
                    n = self.test.n_cells
                    rows[self.test.block_slice(name)] = sub[i * n:(i + 1) * n]
            self.sources["%s_r%d" % (kind, r)] = self.test.with_snapshots(rows, label="%s_r%d" % (kind, r))

    # -- analyses -----------------------------------------------------------
    @_stage("probes")
    def probes(self):
        dom = {}
        sel = "u" if "u" in self.test.layout else self.test.layout[0]
        for label, loc in sorted(self.cfg.probes.items()):
            probe = resolve_probe(self.test.mesh, loc)
            for name, ds in self.sources.items():
                ts = sample_probe(ds, probe, sel)
                ts.to_csv(self.out / ("probe_%s_%s.csv" % (name, label)))
                spec = spectral.amplitude_spectrum(ts)
                spec.to_csv(self.out / ("fft_%s_%s.csv" % (name, label)))
                dom.setdefault(label, {})[name] = spectral.dominant_frequency(spec)
        self.summary["dominant_frequency_hz"] = dom

    @_stage("qcrit")
    def vortex_analysis(self):
        if not self.test.mesh.is_structured or not all(c in self.test.layout for c in ("u", "v", "w")):
            self.summary["qcrit"] = "skipped: needs structured mesh and velocity"
            return
        cfg, mesh = self.cfg, self.test.mesh
        out = {}
        for name, ds in self.sources.items():
            if name == "fom":
                continue
            u_err = metrics.per_snapshot_errors(ds.subset(("u", "v", "w")).snapshots,
                                                self.test.subset(("u", "v", "w")).snapshots)
            k = int(np.argmax(u_err))
            grad_ref = flow.velocity_gradient(self.test.velocity(k), mesh)
            mask = flow.wake_mask(grad_ref, cfg.wake_threshold)
            entry = {"snapshot_index": k, "time": float(self.test.times[k]), "wake_cells": mask.count}
            for tag, src in (("fom", self.test), ("rom", ds)):
                q = flow.q_criterion(flow.velocity_gradient(src.velocity(k), mesh))
                with warnings.catch_warnings():
                    # an uncrossed level is a legitimate, reported outcome here
                    warnings.simplefilter("ignore")
                    n_pts = flow.q_isosurface_export(q, mesh, cfg.q_level,
                                                     self.out / ("qcrit_%s_%s.csv" % (name, tag)),
                                                     cfg.D, cfg.synth.U0)
                entry["q_points_%s" % tag] = n_pts
            if mask.count:
                for fname in ("u", "p"):
                    if fname not in ds.layout:
                        continue
                    e = ds.block(fname)[:, k] - self.test.block(fname)[:, k]
                    hist = flow.wake_error_histogram(e, mask, mesh, cfg.hist_bins)
                    hist.to_csv(self.out / ("hist_%s_%s.csv" % (name, fname)))
                    entry["weighted_mean_error_%s" % fname] = flow.weighted_mean_error(e, mask, mesh)
            out[name] = entry
        self.summary["qcrit"] = out

    def _surface(self):
        surf = generate_sphere_surface(self.cfg.D, self.cfg.n_panels)
        idx = np.array([resolve_probe(self.test.mesh, c).index for c in surf.centers])
        return surf, idx

    @_stage("forces")
    def forces(self):
        if "p" not in self.test.layout:
            return
        surf, idx = self._surface()
        ac = self.cfg.acoustic
        out = {}
        for name, ds in self.sources.items():
            p = ds.block("p")[idx, :].T - self.cfg.gauge_offset
            cd, cl = flow.force_coefficients(p, surf, ac.rho0, ac.U0)
            write_columns_csv(self.out / ("forces_%s.csv" % name), "t,cd,cl", [ds.times, cd, cl])
            out[name] = {"cd_mean": float(cd.mean()), "cl_rms": float(np.sqrt(np.mean(cl ** 2)))}
        self.summary["forces"] = out

    @_stage("fwh")
    def acoustics(self):
        if not all(c in self.test.layout for c in ("u", "v", "w", "p")):
            self.summary["fwh"] = "skipped: needs u, v, w, p"
            return
        cfg = self.cfg
        ac = replace(cfg.acoustic, p0=cfg.gauge_offset)
        surf, idx = self._surface()
        mesh = self.test.mesh
        c = mesh.cell_centers
        radial = np.hypot(c[:, 1], c[:, 2])
        src = np.flatnonzero((radial <= cfg.source_radius * cfg.D)
                             & (np.linalg.norm(c, axis=1) > 0.5 * cfg.D))
        mics = cfg.mic_list()
        dt = self.test.dt
        f_max = 0.5 / dt
        self.summary["mfp"] = {k: {"mfp": v[0], "status": v[1]} for k, v in
                               fwh.compactness_check(ac, f_max, c[src], mics).items()}
        kernels = {m.label: fwh.quadrupole_kernels(c[src], mesh.cell_volumes[src], m, ac) for m in mics}
        spl = {}
        for name, ds in self.sources.items():
            p_surf = ds.block("p")[idx, :].T
            u_hist = np.stack([ds.block(n)[src, :].T for n in ("u", "v", "w")], axis=1)
            p_vol = ds.block("p")[src, :].T
            for mic in mics:
                p2d = fwh.dipole_pressure(p_surf, surf, mic, ac, dt, float(ds.times[0]))
                I = fwh.quadrupole_integrals_from_flow(u_hist, p_vol, kernels[mic.label], ac)
                p3d = fwh.assemble_quadrupole(I, ac, dt).sum(axis=0)
                fwh.write_signal_csv(self.out / ("fwh_%s_%s.csv" % (name, mic.label)),
                                     p2d.times, p2d.values, p3d)
                for term, vals in (("2d", p2d.values), ("3d", p3d)):
                    s = fwh.spectrum_level(TimeSeries(p2d.times, vals), ac)
                    s.to_csv(self.out / ("spl_%s_%s_%s.csv" % (name, mic.label, term)),
                             "frequency_hz,spl_db")
                    spl[(name, mic.label, term)] = s
        self.spl = spl

    @_stage("report")
    def report(self):
        rows = []
        for (name, mic, term), s in sorted(self.spl.items()):
            ref = self.spl[("fom", mic, term)]
            k = int(np.argmax(s.amplitudes))
            diff = float(np.sqrt(np.mean((s.amplitudes - ref.amplitudes) ** 2)))
            rows.append((name, mic, term, float(s.frequencies[k]), float(s.amplitudes[k]), diff))
        with open(self.out / "comparison.csv", "w") as fh:
            fh.write("source,mic,term,peak_frequency_hz,peak_spl_db,rms_spl_diff_vs_fom_db\n")
            for r in rows:
                fh.write("%s,%s,%s,%.17g,%.17g,%.17g\n" % r)
        self.summary["comparison"] = [dict(zip(("source", "mic", "term", "peak_frequency_hz",
                                                 "peak_spl_db", "rms_spl_diff_vs_fom_db"), r))
                                      for r in rows]

    def run(self):
        self.acquire()
        self.basis()
        self.build_roms()
        self.probes()
        self.vortex_analysis()
        self.forces()
        self.acoustics()
        self.report()
        with open(self.out / "summary.json", "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True, default=float)
        if self.cfg.record_timing:
            with open(self.out / "timings.json", "w") as fh:
                json.dump(self.timings, fh, indent=2, sort_keys=True)
        return self.summary


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage into ``cfg.out``; on failure nothing is left behind."""
    cfg.validate()
    out = Path(cfg.out)
    if out.exists() and (not out.is_dir() or (any(out.iterdir()) and not (out / "summary.json").exists())):
        raise ConfigError("refusing to overwrite %s: not a previous pipeline output" % out)
    out.parent.mkdir(parents=True, exist_ok=True)
    work = Path(tempfile.mkdtemp(prefix=".romfwh-", dir=out.parent))
    try:
        summary = Pipeline(cfg, work).run()
        if out.exists():
            shutil.rmtree(out)
        work.rename(out)
        return summary
    finally:
        if work.exists():
            shutil.rmtree(work)
