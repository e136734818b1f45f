"""Command-line interface.

    junctionfield analyze IMAGE [flags]      field JSON, boundary PGM, smoothed image, vertex CSV
    junctionfield smooth IMAGE [flags]       smoothed image only
    junctionfield dataset gen --seed S --out DIR
    junctionfield eval boundaries|vertices --pred P --gt GT.json [--match-dist D]
    junctionfield sweep --sigma-list 0,0.1,0.2 [--data DIR] [flags]
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import pnm
from .core import Config, FieldOfJunctions, Image
from .evaluation import (add_noise, best_boundary_fscore, boundary_fscore, generate_dataset, load_dataset,
                         load_truth, make_sample, save_dataset, vertex_fscore)
from .globalmaps import Detection
from .pipeline import analyze

log = logging.getLogger("junctionfield")

_DEFAULTS = Config()

# (flag, Config field, type, help)
_CONFIG_FLAGS = [
    ("--patch-size", "patch_size", int, "patch size R in pixels (odd)"),
    ("--m", "M", int, "number of junction angles, 3 or 4"),
    ("--color-model", "color_model", str, "wedge color model: constant or linear"),
    ("--lambda-b", "lambda_b", float, "boundary consistency weight"),
    ("--lambda-c", "lambda_c", float, "color consistency weight"),
    ("--stride", "stride", int, "patch stride in pixels"),
    ("--eta", "eta", float, "Heaviside width in half-patch units"),
    ("--delta", "delta", float, "boundary-map width in half-patch units"),
    ("--n-init", "n_init", int, "initialization rounds"),
    ("--n-iter", "n_iter", int, "refinement iterations"),
    ("--lr-vertex", "lr_vertex", float, "vertex step size in half-patch units"),
    ("--lr-angle", "lr_angle", float, "angle step size in radians"),
    ("--angle-samples", "angle_samples", int, "angle candidates per coordinate update"),
    ("--vertex-samples", "vertex_samples", int, "vertex candidates per coordinate update"),
    ("--reinit-every", "reinit_every", int, "iterations between re-initialization rounds"),
    ("--gamma", "gamma", float, "vertex vote spread in pixels"),
    ("--nu-d", "nu_d", float, "vertex distance weight scale in pixels"),
    ("--nu-e", "nu_e", float, "vertex angle weight exponent"),
    ("--seed", "seed", int, "random seed"),
]


class CliError(Exception):
    pass


def _default_text(attr: str) -> str:
    if attr == "gamma":
        return "R/4 px"
    if attr == "nu_d":
        return "R/2 px"
    return str(getattr(_DEFAULTS, attr))


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model and optimization")
    for flag, attr, typ, text in _CONFIG_FLAGS:
        g.add_argument(flag, dest=attr, type=typ, default=None, help=f"{text} (default: {_default_text(attr)})")
    g.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    g.add_argument("--log-csv", type=Path, default=None, help="write per-iteration objective terms here")
    g.add_argument("-v", "--verbose", action="store_true")


def config_from_args(args: argparse.Namespace) -> Config:
    kw = {attr: getattr(args, attr) for _, attr, _, _ in _CONFIG_FLAGS if getattr(args, attr, None) is not None}
    try:
        return Config(**kw)
    except ValueError as e:
        raise CliError(str(e)) from None


def _set_threads(n: Optional[int]) -> None:
    if n is None:
        return
    if n < 1:
        raise CliError("--threads must be >= 1")
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def read_image(path: Path) -> Image:
    try:
        data = pnm.read(path)
    except (OSError, ValueError) as e:
        raise CliError(f"cannot read {path}: {e}") from None
    return Image(data)


def field_to_json(field: FieldOfJunctions) -> dict:
    g = field.grid
    M = field.M
    return {
        "width": g.width,
        "height": g.height,
        "patch_size": g.R,
        "stride": g.stride,
        "M": M,
        "color_model": field.color_model,
        "patches": [
            {
                "row": int(r),
                "col": int(c),
                "angles": [float(a) for a in field.params[i, :M]],
                "vertex": [float(field.params[i, M]), float(field.params[i, M + 1])],
                "colors": field.colors[i].tolist(),
            }
            for i, (r, c) in enumerate(zip(g.rows, g.cols))
        ],
    }


def write_detections(path: Path, dets: Sequence[Detection]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "score", "angles_deg"])
        for d in dets:
            w.writerow([repr(d.x), repr(d.y), repr(d.score), " ".join(f"{np.rad2deg(a):.6f}" for a in d.angles)])


def read_detections(path: Path) -> List[Detection]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ang = tuple(np.deg2rad(float(a)) for a in row.get("angles_deg", "").split())
            out.append(Detection(float(row["x"]), float(row["y"]), float(row.get("score") or 0.0), ang))
    return out


def _smoothed_path(out: Path, stem: str, image: Image) -> Path:
    return out / f"{stem}_smooth.{'pgm' if image.channels == 1 else 'ppm'}"


def _save_smoothed(path: Path, image: Image, color: np.ndarray) -> None:
    if image.channels not in (1, 3):
        raise CliError(f"cannot store a {image.channels}-channel image as PGM/PPM")
    pnm.write(path, color if image.channels == 3 else color[:, :, 0], bits=8)


def _run(args: argparse.Namespace, smoothed_only: bool) -> List[Path]:
    cfg = config_from_args(args)
    _set_threads(args.threads)
    image = read_image(args.image)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.image.stem
    try:
        if args.log_csv is not None:
            with open(args.log_csv, "w", newline="") as fh:
                res = analyze(image, cfg, log_csv=fh)
        else:
            res = analyze(image, cfg)
    except ValueError as e:
        raise CliError(str(e)) from None
    written = [_smoothed_path(out, stem, image)]
    _save_smoothed(written[0], image, res.maps.color)
    if not smoothed_only:
        fp = out / f"{stem}_field.json"
        fp.write_text(json.dumps(field_to_json(res.field)))
        bp = out / f"{stem}_boundary.pgm"
        pnm.write(bp, res.maps.boundary, bits=16)
        vp = out / f"{stem}_vertices.csv"
        write_detections(vp, res.detections)
        written += [fp, bp, vp]
    log.info("timings: %s", {k: round(v, 2) for k, v in res.timings.items()})
    return written


def cmd_analyze(args) -> int:
    for p in _run(args, smoothed_only=False):
        print(p)
    return 0


def cmd_smooth(args) -> int:
    for p in _run(args, smoothed_only=True):
        print(p)
    return 0


def cmd_dataset(args) -> int:
    save_dataset(generate_dataset(args.seed, args.per_type), args.out)
    print(args.out)
    return 0


def _truth(path: Path):
    try:
        return load_truth(path)
    except (OSError, ValueError, KeyError) as e:
        raise CliError(f"cannot read ground truth {path}: {e}") from None


def cmd_eval(args) -> int:
    truth = _truth(args.gt)
    if args.what == "boundaries":
        try:
            pred = pnm.read(args.pred)
        except (OSError, ValueError) as e:
            raise CliError(f"cannot read {args.pred}: {e}") from None
        if pred.ndim != 2 or pred.shape != truth.boundary.shape:
            raise CliError("predicted boundary map must be a grayscale image of the ground-truth size")
        if args.threshold is None:
            p, r, f, thr = best_boundary_fscore(pred, truth, args.match_dist)
        else:
            thr = args.threshold
            p, r, f = boundary_fscore(pred, thr, truth, args.match_dist)
        print(f"precision={p:.6f} recall={r:.6f} F={f:.6f} threshold={thr:g}")
    else:
        try:
            dets = read_detections(args.pred)
        except (OSError, ValueError, KeyError) as e:
            raise CliError(f"cannot read {args.pred}: {e}") from None
        p, r, f, _ = vertex_fscore(dets, truth.vertices, args.match_dist)
        print(f"precision={p:.6f} recall={r:.6f} F={f:.6f}")
    return 0


def _sigmas(text: str) -> List[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(f"bad --sigma-list {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise CliError("--sigma-list needs non-negative values")
    return vals


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    _set_threads(args.threads)
    sigmas = _sigmas(args.sigma_list)
    if args.data is not None:
        samples = [s for s in load_dataset(args.data) if s.kind == 3][: args.count]
        if not samples:
            raise CliError(f"no type-3 images in {args.data}")
    else:
        samples = [make_sample(3, i, cfg.seed) for i in range(args.count)]
    out = open(args.csv, "w", newline="") if args.csv else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["sigma", "image", "precision", "recall", "F", "threshold"])
        for sigma in sigmas:
            for s in samples:
                noisy = add_noise(s.image, sigma, seed=cfg.seed * 1000003 + s.index)
                res = analyze(noisy, cfg)
                p, r, f, thr = best_boundary_fscore(res.maps.boundary, s.truth, args.match_dist)
                w.writerow([sigma, s.index, f"{p:.6f}", f"{r:.6f}", f"{f:.6f}", thr])
                out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="junctionfield", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, text in (("analyze", cmd_analyze, "fit a field of junctions and write all outputs"),
                           ("smooth", cmd_smooth, "write the boundary-aware smoothed image only")):
        p = sub.add_parser(name, help=text)
        p.add_argument("image", type=Path, help="input PGM/PPM")
        p.add_argument("--out-dir", default=".", help="output directory (default: .)")
        _add_config_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("dataset", help="synthetic dataset tools")
    dsub = p.add_subparsers(dest="action", required=True)
    g = dsub.add_parser("gen", help="write the synthetic dataset (PGM + JSON per image)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--per-type", type=int, default=100)
    g.add_argument("-v", "--verbose", action="store_true")
    g.set_defaults(func=cmd_dataset)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("what", choices=["boundaries", "vertices"])
    p.add_argument("--pred", type=Path, required=True, help="boundary PGM or vertex CSV")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth JSON")
    p.add_argument("--match-dist", type=float, default=2.0)
    p.add_argument("--threshold", type=float, default=None,
                   help="boundary threshold (default: best of 0.1..0.9)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="boundary F against noise level on type-3 images, as CSV")
    p.add_argument("--sigma-list", required=True, help="comma-separated noise levels")
    p.add_argument("--data", type=Path, default=None, help="dataset directory (default: generate in memory)")
    p.add_argument("--count", type=int, default=10, help="number of type-3 images")
    p.add_argument("--match-dist", type=float, default=2.0)
    p.add_argument("--csv", type=Path, default=None, help="output CSV (default: stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        print(f"junctionfield: error: {e}", file=sys.stderr)
        return 2
    except (OSError, FloatingPointError) as e:
        print(f"junctionfield: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
