"""Command-line front end.

Subcommands::

    phaseless phantom      write a phantom description file
    phaseless synthesize   modulus-only datasets for every configured slice
    phaseless reconstruct  limit extraction + FBP, volume and metrics
    phaseless evaluate     error tables and convergence figures
    phaseless plot         figures for existing data files

Config fields may be overridden with dotted flags, e.g. ``--fbp.n_image=256``.
Exit codes: 0 success, 2 validation error, 3 I/O error, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as pio
from . import phantom as ph
from .config import RunConfig, apply_overrides, load_config
from .errors import FormatError, PhaselessError, ValidationError
from .geometry import slice_geometry
from .radon import sample_truth
from .recon import Volume, image_metrics, metrics, reconstruct_slice, sinogram_from_data
from .scatter import FrequencyLadder, PhaselessDataset, synthesize_dataset

log = logging.getLogger("phaseless")


def thread_count() -> int:
    env = os.environ.get("PHASELESS_THREADS")
    cap = os.cpu_count() or 1
    if env is None:
        return cap
    try:
        n = int(env)
    except ValueError as exc:
        raise ValidationError(f"PHASELESS_THREADS must be an integer, got {env!r}") from exc
    if n < 1:
        raise ValidationError("PHASELESS_THREADS must be >= 1")
    return min(n, cap)


def dataset_name(index: int) -> str:
    return f"dataset_{index:02d}.phds"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return Path(path)


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config, args.overrides)
    return cfg.validate(check_files=True)


# phantom ------------------------------------------------------------------

def cmd_phantom(args) -> int:
    if args.bump:
        terms = [ph.Bump(tuple(b[:3]), b[3], b[4]) for b in args.bump]
        q = ph.Potential(args.B, tuple(terms))
    else:
        q = ph.zero_phantom(args.B) if args.preset == "zero" else ph.PRESETS[args.preset]()
    ph.save(q, args.output)
    log.info("wrote %s (%d terms, B=%g)", args.output, len(q.terms), q.B)
    return 0


# synthesize ---------------------------------------------------------------

def cmd_synthesize(args) -> int:
    cfg = _load_run_config(args)
    q = ph.load(cfg.phantom)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    ladder = cfg.ladder.build()
    prov = pio.provenance({"phantom": cfg.phantom}, cfg.to_dict())
    workers = thread_count()
    for i, a in enumerate(cfg.slices):
        g = slice_geometry(q.B, a)
        log.info("slice %d: a=%+.4f, model=%s, %dx%d chords x %d k", i, a, cfg.model, cfg.chords.n_alpha,
                 cfg.chords.n_s, len(ladder))

        def progress(done, total):
            if done % max(1, total // 10) == 0:
                log.info("  %d/%d chords", done, total)

        ds = synthesize_dataset(q, g, cfg.chords.n_alpha, cfg.chords.n_s, ladder, cfg.model,
                                noise_seed=cfg.noise.seed, noise_level=cfg.noise.sigma,
                                eps_edge=cfg.chords.eps_edge, spec=cfg.quadrature.spec(),
                                n_t=cfg.quadrature.n_t, tol=cfg.quadrature.tol, n_max=cfg.quadrature.n_max,
                                budget=cfg.budget, workers=workers, progress=progress)
        path = pio.save_dataset(ds, out / dataset_name(i), prov)
        print(path)
    return 0


# reconstruct --------------------------------------------------------------

def _dataset_paths(cfg: RunConfig, given):
    if given:
        return [Path(p) for p in given]
    paths = [Path(cfg.output_dir) / dataset_name(i) for i in range(len(cfg.slices))]
    for p in paths:
        if not p.exists():
            raise FormatError(p, "dataset not found; run synthesize first")
    return paths


def check_provenance(path, ds: PhaselessDataset, cfg: RunConfig, q: ph.Potential, force: bool) -> list:
    """Mismatches between a dataset, its sidecar and the config."""
    problems = []
    side = pio.read_sidecar(path)
    recorded = side.get("provenance", {}).get("inputs", {}).get("phantom")
    actual = pio.sha256_file(cfg.phantom)
    if recorded != actual:
        problems.append(f"phantom hash {str(recorded)[:12]} differs from {cfg.phantom} ({actual[:12]})")
    if not np.isclose(ds.slice.B, q.B):
        problems.append(f"dataset B={ds.slice.B} differs from phantom B={q.B}")
    if not any(np.isclose(ds.slice.a, a) for a in cfg.slices):
        problems.append(f"slice height a={ds.slice.a} is not in the config")
    if ds.f_values.shape[:2] != (cfg.chords.n_alpha, cfg.chords.n_s):
        problems.append(f"chord grid {ds.f_values.shape[:2]} differs from the config "
                        f"({cfg.chords.n_alpha}, {cfg.chords.n_s})")
    if problems and not force:
        raise ValidationError(f"{path}: " + "; ".join(problems) + " (use --force to override)")
    for p in problems:
        log.warning("%s: %s (forced)", path, p)
    return problems


def cmd_reconstruct(args) -> int:
    cfg = _load_run_config(args)
    q = ph.load(cfg.phantom)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = _dataset_paths(cfg, args.datasets)
    inputs = {"phantom": cfg.phantom, **{f"dataset{i}": p for i, p in enumerate(paths)}}
    prov = pio.provenance(inputs, cfg.to_dict())
    slices = []
    for path in paths:
        ds = pio.load_dataset(path)
        check_provenance(path, ds, cfg, q, args.force)
        sg = sinogram_from_data(ds, clamp=cfg.fbp.clamp, basis=cfg.fbp.basis)
        stem = path.stem
        pio.save_sinogram(sg, out / f"{stem}.sgrm", prov)
        img = reconstruct_slice(sg, cfg.fbp.n_image, cfg.fbp.apodization)
        if args.pgm:
            pio.save_pgm(img, out / f"{stem}.pgm", prov)
        slices.append((ds.slice.a, img))
    heights = [a for a, _ in slices]
    if len(set(heights)) != len(heights):
        raise ValidationError(f"duplicate slice heights among datasets: {heights}")
    vol = Volume(q.B, tuple(sorted(slices, key=lambda s: s[0])))
    vol_path = pio.save_volume(vol, out / "volume.simg", prov)
    result = metrics(vol, q)
    (out / "metrics.json").write_text(json.dumps(result, indent=2) + "\n")
    print(vol_path)
    print(json.dumps(result["volume"]))
    return 0


# evaluate -----------------------------------------------------------------

def metrics_rows(vol: Volume, q: ph.Potential):
    return [(r["a"], r["rel_L2"], r["rel_Linf"]) for r in metrics(vol, q)["slices"]]


def kmax_study(ds: PhaselessDataset, q, n_image, apodization="hann", basis="inverse"):
    """Error of the slice reconstruction using ladder prefixes ``k <= k_max``."""
    k = ds.ladder.k_values
    truth = sample_truth(q, ds.slice, n_image)
    rows = []
    for m in range(3, len(k) + 1):
        if k[m - 1] / k[0] < 4.0:
            continue
        sub = PhaselessDataset(ds.slice, ds.alphas, ds.offsets, ds.s_max, FrequencyLadder(k[:m]),
                               ds.f_values[..., :m], ds.model_tag, ds.noise_level, ds.seed)
        img = reconstruct_slice(sinogram_from_data(sub, basis=basis), n_image, apodization)
        err = image_metrics(img.values, truth)
        rows.append((float(k[m - 1]), err["rel_L2"], err["rel_Linf"]))
    return rows


def resolution_study(ds: PhaselessDataset, q, n_image, apodization="hann", basis="inverse", factors=(4, 2, 1)):
    """Error when chords and pixels are coarsened by the given factors."""
    rows = []
    for f in factors:
        if len(ds.alphas) // f < 4 or len(ds.offsets) // f < 4 or n_image // f < 2:
            continue
        sub = PhaselessDataset(ds.slice, ds.alphas[f - 1::f], ds.offsets[::f], ds.s_max, ds.ladder,
                               ds.f_values[f - 1::f, ::f], ds.model_tag, ds.noise_level, ds.seed)
        n = n_image // f
        img = reconstruct_slice(sinogram_from_data(sub, basis=basis), n, apodization)
        err = image_metrics(img.values, sample_truth(q, ds.slice, n))
        rows.append((len(sub.alphas), len(sub.offsets), n, err["rel_L2"], err["rel_Linf"]))
    return rows


def cmd_evaluate(args) -> int:
    from . import plotting

    q = ph.load(args.phantom)
    vol = pio.load_volume(args.volume)
    out = Path(args.out or Path(args.volume).parent)
    out.mkdir(parents=True, exist_ok=True)
    rows = metrics_rows(vol, q)
    _write_csv(out / "metrics.csv", ["a", "rel_L2", "rel_Linf"], rows)
    for i, (a, img) in enumerate(vol):
        plotting.plot_slice(img, out / f"slice_{i:02d}.png", truth=sample_truth(q, img.slice, img.n))
    for a, l2, linf in rows:
        print(f"a={a:+.4f}  rel_L2={l2:.4e}  rel_Linf={linf:.4e}")

    if args.datasets:
        n_image = vol.slices[0][1].n
        for i, path in enumerate(args.datasets):
            ds = pio.load_dataset(path)
            krows = kmax_study(ds, q, n_image, basis=args.basis)
            if krows:
                _write_csv(out / f"convergence_kmax_{i:02d}.csv", ["k_max", "rel_L2", "rel_Linf"], krows)
                kk = [r[0] for r in krows]
                for ext in ("png", "svg"):
                    plotting.plot_convergence(kk, {"rel_L2": [r[1] for r in krows], "rel_Linf": [r[2] for r in krows]},
                                              out / f"convergence_kmax_{i:02d}.{ext}", "k_max",
                                              title=f"a = {ds.slice.a:+.3f}")
            rrows = resolution_study(ds, q, n_image, basis=args.basis)
            if rrows:
                _write_csv(out / f"convergence_resolution_{i:02d}.csv",
                           ["n_alpha", "n_s", "n_image", "rel_L2", "rel_Linf"], rrows)
                nn = [r[2] for r in rrows]
                for ext in ("png", "svg"):
                    plotting.plot_convergence(nn, {"rel_L2": [r[3] for r in rrows], "rel_Linf": [r[4] for r in rrows]},
                                              out / f"convergence_resolution_{i:02d}.{ext}", "n_image",
                                              title=f"a = {ds.slice.a:+.3f}")
    return 0


# plot ---------------------------------------------------------------------

def cmd_plot(args) -> int:
    from . import plotting
    from .timedomain import kernel_trace

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in map(Path, args.inputs):
        magic = pio._read_bytes(path)[:4]
        stem = path.name.replace(".", "_")
        if magic == b"SGRM":
            print(plotting.plot_sinogram(pio.load_sinogram(path), out / f"{stem}_sinogram.png"))
        elif magic == b"SIMG":
            if pio.read_sidecar(path)["header"].get("magic") == "SIMG*":
                images = [img for _, img in pio.load_volume(path)]
            else:
                images = [pio.load_image(path)]
            for i, img in enumerate(images):
                print(plotting.plot_slice(img, out / f"{stem}_{i:02d}.png"))
        elif magic == b"PHDS":
            ds = pio.load_dataset(path)
            sg = sinogram_from_data(ds, basis=args.basis)
            print(plotting.plot_sinogram(sg, out / f"{stem}_sinogram.png", title="estimated sinogram"))
            mid = len(ds.offsets) // 2
            rows = ds.f_values[:: max(1, len(ds.alphas) // 4), mid]
            print(plotting.plot_modulus(ds.ladder.k_values, rows * ds.ladder.k_values, out / f"{stem}_modulus.png"))
        else:
            raise FormatError(path, f"unrecognized file type (magic {magic!r})")
    if args.trace is not None:
        if args.phantom is None:
            raise ValidationError("--trace needs --phantom")
        q = ph.load(args.phantom)
        alpha, s = args.trace
        g = slice_geometry(q.B, args.a)
        from .geometry import pair_from_chord

        x, x0 = pair_from_chord(g, alpha, s)
        tr = kernel_trace(q, x, x0, n_t=args.n_t, n_max=args.n_max)
        tr.to_csv(out / "kernel_trace.csv")
        print(out / "kernel_trace.csv")
        print(plotting.plot_trace(tr, out / "kernel_trace.png"))
    return 0


# entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phaseless", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("phantom", help="write a phantom/1 JSON file")
    sp.add_argument("-o", "--output", default="phantom.json")
    sp.add_argument("--preset", choices=sorted(ph.PRESETS), default="standard")
    sp.add_argument("--bump", nargs=5, type=float, action="append", metavar=("CX", "CY", "CZ", "R", "A"),
                    help="add a bump term (replaces the preset)")
    sp.add_argument("--B", type=float, default=1.0, help="support radius when --bump or the zero preset is used")
    sp.set_defaults(func=cmd_phantom)

    sp = sub.add_parser("synthesize", help="write PHDS datasets for each slice")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("reconstruct", help="reconstruct a volume from datasets")
    sp.add_argument("config")
    sp.add_argument("datasets", nargs="*")
    sp.add_argument("--force", action="store_true", help="accept provenance or geometry mismatches")
    sp.add_argument("--pgm", action="store_true", help="also export 8-bit PGM slices")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("evaluate", help="metrics table and convergence figures")
    sp.add_argument("volume")
    sp.add_argument("phantom")
    sp.add_argument("--datasets", nargs="*", default=[], help="datasets for the k_max and resolution studies")
    sp.add_argument("--basis", default="inverse", choices=("inverse", "inverse-square"))
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("plot", help="figures for SGRM, SIMG or PHDS files")
    sp.add_argument("inputs", nargs="*")
    sp.add_argument("--out", default="figures")
    sp.add_argument("--basis", default="inverse", choices=("inverse", "inverse-square"))
    sp.add_argument("--trace", nargs=2, type=float, metavar=("ALPHA", "S"), help="kernel trace of one chord")
    sp.add_argument("--phantom")
    sp.add_argument("--a", type=float, default=0.0)
    sp.add_argument("--n-t", type=int, default=256)
    sp.add_argument("--n-max", type=int, default=2)
    sp.set_defaults(func=cmd_plot)
    return p


def parse_args(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    overrides = []
    for item in extra:
        if not (item.startswith("--") and "=" in item):
            parser.error(f"unrecognized argument {item!r}")
        overrides.append(item[2:])
    if overrides and args.command not in ("synthesize", "reconstruct"):
        parser.error("config overrides apply to synthesize and reconstruct only")
    args.overrides = overrides
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PhaselessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
