"""Command-line front end.

Examples::

    romfwh generate --config synth.cfg --out data.romsnap
    romfwh decompose --input data.romsnap --rank 20 --out decomp/
    romfwh fit-dmd --input data.romsnap --rank 10 --fields u,v,w --out u.dmdmodel
    romfwh errors --input data.romsnap --model u.dmdmodel --out errors.csv
    romfwh fft --input data.romsnap --probe 0.02,0,0 --out spectrum.csv
    romfwh report --ranks 2,10 --rom both --out results/

Exit codes: 0 ok, 2 configuration error, 3 numerical error, 4 I/O error.
``ROM_THREADS`` caps the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import decomposition as dec
from . import flow, fwh, metrics, spectral
from .dmd import load_dmd, save_dmd
from .pipeline import (ConfigError, PipelineConfig, StageError, evaluate_rom, field_groups, fit_rom,
                       load_pipeline_config, parse_ranks, run_pipeline)
from .podi import load_podi, save_podi
from .snapshot import (FormatError, load_dataset, resolve_probe, sample_probe, save_dataset,
                       split_train_test, write_columns_csv)
from .synth import generate_sphere_surface, generate_synthetic, load_synth_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("romfwh")


def _point(text: str):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected x,y,z")
    return tuple(vals)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--input", help="input .romsnap dataset")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="seed for synthetic data")
    p.add_argument("--ranks", help="comma-separated truncation ranks")
    p.add_argument("--rom", choices=("dmd", "podi", "both"), help="reduced model kind")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="romfwh", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic wake dataset")
    _common(p)

    p = sub.add_parser("decompose", help="singular spectrum, energy and compression level")
    _common(p)
    p.add_argument("--rank", type=int, required=True)

    for name in ("fit-dmd", "fit-podi"):
        p = sub.add_parser(name, help="fit a %s model on the training half" % name[4:].upper())
        _common(p)
        p.add_argument("--rank", type=int, required=True)
        p.add_argument("--fields", help="comma-separated layout fields (default: all)")
        p.add_argument("--subtract-mean", action="store_true")
        p.add_argument("--no-split", action="store_true", help="fit on every snapshot")

    p = sub.add_parser("errors", help="per-snapshot relative errors of a saved model")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=("prediction", "reconstruction"), default="prediction")
    p.add_argument("--gauge-offset", type=float, default=1.0)

    p = sub.add_parser("qcrit", help="Q-criterion iso-level point cloud")
    _common(p)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--level", type=float, default=4.0, help="level of Q D^2/U0^2")
    p.add_argument("--D", type=float, default=0.01)
    p.add_argument("--U0", type=float, default=1.0)

    p = sub.add_parser("probes", help="probe time series")
    _common(p)
    p.add_argument("--probe", type=_point, action="append", required=True)
    p.add_argument("--field", default="u")

    p = sub.add_parser("fft", help="normalized amplitude spectrum at a probe")
    _common(p)
    p.add_argument("--probe", type=_point, required=True)
    p.add_argument("--field", default="u")

    p = sub.add_parser("forces", help="pressure drag and lift coefficients on the sphere")
    _common(p)
    p.add_argument("--panels", type=int, default=2000)
    p.add_argument("--D", type=float, default=0.01)
    p.add_argument("--rho0", type=float, default=1000.0)
    p.add_argument("--U0", type=float, default=1.0)
    p.add_argument("--p0", type=float, default=0.0)

    p = sub.add_parser("fwh", help="dipole and quadrupole signals at a microphone")
    _common(p)
    p.add_argument("--mic", default="A", help="A, B or x,y,z")
    p.add_argument("--D", type=float, default=0.01)
    p.add_argument("--panels", type=int, default=2000)
    p.add_argument("--source-radius", type=float, default=1.5, help="in units of D")
    p.add_argument("--c0", type=float, default=1500.0)
    p.add_argument("--rho0", type=float, default=1000.0)
    p.add_argument("--U0", type=float, default=1.0)
    p.add_argument("--p0", type=float, default=0.0)
    p.add_argument("--spl", help="also write the spectrum level of the total signal here")

    for name in ("report", "run"):
        p = sub.add_parser(name, help="full pipeline with cross-comparison report")
        _common(p)
    return parser


def _need(args, attr):
    val = getattr(args, attr)
    if val is None:
        raise ConfigError("--%s is required for %s" % (attr, args.command))
    return val


def _dataset(args):
    return load_dataset(_need(args, "input"))


def cmd_generate(args):
    cfg = load_synth_config(args.config) if args.config else PipelineConfig().synth
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    save_dataset(generate_synthetic(cfg), _need(args, "out"))


def cmd_decompose(args):
    ds = _dataset(args)
    out = Path(_need(args, "out"))
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    with open(out / "decompose_summary.csv", "w") as fh:
        fh.write("group,rank,cumulative_energy,compression_level\n")
        for g, names in field_groups(ds.layout, "separate").items():
            S = ds.subset(names).snapshots
            if not 1 <= args.rank <= min(S.shape):
                raise ConfigError("rank %d out of range [1, %d]" % (args.rank, min(S.shape)))
            spec = dec.singular_spectrum(S)
            dec.spectrum_to_csv(spec, out / ("sv_%s.csv" % g))
            level = metrics.compression_report(S.shape[0], ds.m, args.rank).compression_level
            energy = dec.cumulative_energy(spec, args.rank)
            fh.write("%s,%d,%.17g,%.17g\n" % (g, args.rank, energy, level))
            rows.append((g, energy, level))
    for g, energy, level in rows:
        print("%s: rank %d cumulative_energy %.6f compression_level %.4f" % (g, args.rank, energy, level))


def _fit(args, kind):
    ds = _dataset(args)
    if args.fields:
        ds = ds.subset(tuple(f.strip() for f in args.fields.split(",")))
    train = ds if args.no_split else split_train_test(ds)[0]
    if args.rank < 1:
        raise ConfigError("rank must be >= 1")
    model = fit_rom(kind, train, args.rank, args.subtract_mean)
    (save_dmd if kind == "dmd" else save_podi)(model, _need(args, "out"))


def _load_model(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
    if head.startswith(b"DMDMODEL"):
        return "dmd", load_dmd(path)
    if head.startswith(b"PODIMODEL"):
        return "podi", load_podi(path)
    raise FormatError("unrecognized model file %s" % path)


def cmd_errors(args):
    kind, model = _load_model(args.model)
    ds = _dataset(args)
    if args.gauge_offset and "p" in ds.layout:
        ds = metrics.pressure_gauge_offset(ds, args.gauge_offset)
    if model.layout:
        ds = ds.subset(model.layout)
    train, test = split_train_test(ds)
    ref = test if args.mode == "prediction" else train
    rank = model.rank
    rep = metrics.error_report(evaluate_rom(kind, model, ref.times), ref, rank, args.mode)
    metrics.write_error_csv([rep], _need(args, "out"))
    print("%s rank %d global error %.6g %%" % (args.mode, rank, rep.global_error))


def cmd_qcrit(args):
    ds = _dataset(args)
    q = flow.q_criterion(flow.velocity_gradient(ds.velocity(args.index), ds.mesh))
    n = flow.q_isosurface_export(q, ds.mesh, args.level, _need(args, "out"), args.D, args.U0)
    print("%d cells on the Q D^2/U0^2 = %g level" % (n, args.level))


def cmd_probes(args):
    ds = _dataset(args)
    out = Path(_need(args, "out"))
    out.mkdir(parents=True, exist_ok=True)
    for i, loc in enumerate(args.probe):
        probe = resolve_probe(ds.mesh, loc)
        sample_probe(ds, probe, args.field).to_csv(out / ("probe_%d.csv" % i))


def cmd_fft(args):
    ds = _dataset(args)
    spec = spectral.amplitude_spectrum(sample_probe(ds, resolve_probe(ds.mesh, args.probe), args.field))
    spec.to_csv(_need(args, "out"))
    print("dominant frequency %.6g Hz" % spectral.dominant_frequency(spec))


def _surface_pressure(ds, D, panels):
    surf = generate_sphere_surface(D, panels)
    idx = np.array([resolve_probe(ds.mesh, c).index for c in surf.centers])
    return surf, ds.block("p")[idx, :].T


def cmd_forces(args):
    ds = _dataset(args)
    surf, p = _surface_pressure(ds, args.D, args.panels)
    cd, cl = flow.force_coefficients(p - args.p0, surf, args.rho0, args.U0)
    write_columns_csv(_need(args, "out"), "t,cd,cl", [ds.times, cd, cl])


def cmd_fwh(args):
    ds = _dataset(args)
    ac = fwh.AcousticConfig(c0=args.c0, rho0=args.rho0, U0=args.U0, p0=args.p0)
    mics = {m.label: m for m in fwh.default_microphones(args.D)}
    mic = mics.get(args.mic) or fwh.Microphone("custom", _point(args.mic))
    surf, p_surf = _surface_pressure(ds, args.D, args.panels)
    c = ds.mesh.cell_centers
    src = np.flatnonzero((np.hypot(c[:, 1], c[:, 2]) <= args.source_radius * args.D)
                         & (np.linalg.norm(c, axis=1) > 0.5 * args.D))
    p2d = fwh.dipole_pressure(p_surf, surf, mic, ac, ds.dt, float(ds.times[0]))
    u_hist = np.stack([ds.block(n)[src, :].T for n in ("u", "v", "w")], axis=1)
    p3d = fwh.quadrupole_pressure_from_flow(u_hist, ds.block("p")[src, :].T, c[src],
                                            ds.mesh.cell_volumes[src], mic, ac, ds.dt, float(ds.times[0]))
    fwh.write_signal_csv(_need(args, "out"), p2d.times, p2d.values, p3d.values)
    if args.spl:
        total = fwh.TimeSeries(p2d.times, p2d.values + p3d.values)
        fwh.spectrum_level(total, ac).to_csv(args.spl, "frequency_hz,spl_db")


def cmd_report(args):
    cfg = load_pipeline_config(args.config) if args.config else PipelineConfig()
    if args.input:
        cfg.input = args.input
    if args.ranks:
        cfg.ranks = parse_ranks(args.ranks)
    if args.rom:
        cfg.rom = args.rom
    if args.out:
        cfg.out = args.out
    if args.seed is not None:
        cfg.synth = replace(cfg.synth, seed=args.seed)
    summary = run_pipeline(cfg)
    for probe, freqs in sorted(summary.get("dominant_frequency_hz", {}).items()):
        print("probe %s dominant frequency: %s" % (
            probe, ", ".join("%s=%.4g Hz" % kv for kv in sorted(freqs.items()))))
    print("results written to %s" % cfg.out)


COMMANDS = {
    "generate": cmd_generate, "decompose": cmd_decompose,
    "fit-dmd": lambda a: _fit(a, "dmd"), "fit-podi": lambda a: _fit(a, "podi"),
    "errors": cmd_errors, "qcrit": cmd_qcrit, "probes": cmd_probes, "fft": cmd_fft,
    "forces": cmd_forces, "fwh": cmd_fwh, "report": cmd_report, "run": cmd_report,
}


def exit_code_for(exc: BaseException) -> int:
    cause = exc.__cause__ if isinstance(exc, StageError) and exc.__cause__ else exc
    if isinstance(cause, (ConfigError, KeyError)):
        return EXIT_CONFIG
    if isinstance(cause, (OSError, FormatError)):
        return EXIT_IO
    return EXIT_NUMERICAL


def _thread_limit():
    n = os.environ.get("ROM_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            COMMANDS[args.command](args)
    except (ConfigError, StageError, OSError, FormatError, KeyError, ValueError,
            ArithmeticError, np.linalg.LinAlgError) as exc:
        code = exit_code_for(exc)
        print("romfwh %s: error: %s" % (args.command, exc), file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
