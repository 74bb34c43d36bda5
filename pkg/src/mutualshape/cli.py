"""Command-line front end.

Exit codes: 0 success, 1 numerical or degenerate-contour failure, 2 I/O or
argument error (missing input, unwritable output, usage), 3 input masks
with mismatched dimensions, 4 fewer than two input masks.
"""

from __future__ import annotations

import argparse
import logging
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import intersection, majority_vote, staple_em, union
from .evolution import EvolutionConfig, EvolutionError, evolve
from .grid import (BinaryMask, GridMismatchError, MaskFormatError, ShapeSet, dice, encode_pgm,
                   load_mask, save_mask, write_bytes)
from .levelset import dump_field, sign_change_mask
from .synthetic import lozenge_geometry, make_lozenge_set

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_IO = 2
EXIT_GRID = 3
EXIT_TOO_FEW = 4

log = logging.getLogger("mutualshape")

CSV_HELP = """\
output files (under --out):
  consensus.pgm  fused mask, P5, 255 = foreground
  pq.csv         index,name,p,q          final sensitivity/specificity per input
  trace.csv      iter,jh,mi,reg,total,area,sd,changed,p1..pn,q1..qn
                 one row per iteration; energies in nats, reg in pixels
  ranking.csv    rank,name,p,q,p_plus_q[,dice]   (evaluate only)
  run.cfg        every resolved parameter as key=value; accepted by --config
floats are written with 6 significant digits.
"""


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# parameters settable from a config file: key -> (type, default)
PARAMS = {
    "mode": (str, "mutual"),
    "lambda": (float, 10.0),
    "sigma": (float, 0.1),
    "cfl": (float, 0.45),
    "max_iters": (int, 1000),
    "reinit_every": (int, 20),
    "conv_window": (int, 25),
    "conv_tol": (int, 0),
    "init": (str, "circle"),
    "init_radius": (float, None),
    "bubble_spacing": (float, 16.0),
    "bubble_radius": (float, 5.0),
    "working_mask": (str, None),
    "snapshot_every": (int, 0),
    "dump_every": (int, 0),
    "threshold": (int, 128),
    "invert": (bool, False),
}


def _parse_bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def read_config(path) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}", EXIT_IO) from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value", EXIT_IO)
        key, value = (t.strip() for t in line.split("=", 1))
        out[key] = value
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Flags override the config file, which overrides defaults."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, (typ, default) in PARAMS.items():
        attr = key.replace("lambda", "lam")
        flag = getattr(args, attr, None)
        if flag is not None:
            out[key] = flag
        elif key in cfg and cfg[key] not in ("", "None"):
            try:
                out[key] = _parse_bool(cfg[key]) if typ is bool else typ(cfg[key])
            except ValueError as exc:
                raise CliError(f"bad value for {key} in config: {cfg[key]!r}", EXIT_IO) from exc
        else:
            out[key] = default
    inputs = getattr(args, "inputs", None)
    if not inputs and "inputs" in cfg:
        inputs = shlex.split(cfg["inputs"])
    out["inputs"] = list(inputs or [])
    ref = getattr(args, "reference", None)
    if ref is None and cfg.get("reference"):
        ref = cfg["reference"]
    out["reference"] = ref
    return out


def write_run_cfg(out_dir: Path, params: dict, command: str) -> None:
    lines = [f"command={command}"]
    for key, value in params.items():
        if key == "inputs":
            value = " ".join(shlex.quote(str(p)) for p in value)
        lines.append(f"{key}={'' if value is None else value}")
    (out_dir / "run.cfg").write_text("\n".join(lines) + "\n")


def prepare_out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror}", EXIT_IO) from exc
    if not os.access(out, os.W_OK):
        raise CliError(f"output directory {out} is not writable", EXIT_IO)
    return out


def unique_names(paths) -> list[str]:
    names, seen = [], {}
    for p in paths:
        stem = Path(p).stem
        seen[stem] = seen.get(stem, 0) + 1
        names.append(stem if seen[stem] == 1 else f"{stem}_{seen[stem]}")
    return names


def _load(path, threshold: int, invert: bool) -> BinaryMask:
    try:
        return load_mask(path, threshold, invert)
    except FileNotFoundError as exc:
        raise CliError(f"no such file: {path}", EXIT_IO) from exc
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from exc
    except MaskFormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from exc


def load_inputs(params: dict) -> ShapeSet:
    paths = params["inputs"]
    if len(paths) < 2:
        raise CliError(f"need at least two input masks, got {len(paths)}", EXIT_TOO_FEW)
    masks = [_load(p, params["threshold"], params["invert"]) for p in paths]
    for p, m in zip(paths, masks):
        if m.grid != masks[0].grid:
            raise CliError(f"{p} is {m.grid.width}x{m.grid.height}, expected "
                           f"{masks[0].grid.width}x{masks[0].grid.height}", EXIT_GRID)
    return ShapeSet(masks[0].grid, tuple(masks), tuple(unique_names(paths)))


def write_pq(path: Path, names, quality) -> None:
    lines = ["index,name,p,q"]
    for i, (name, p, q) in enumerate(zip(names, quality.p, quality.q), 1):
        lines.append(f"{i},{name},{p:.6g},{q:.6g}")
    path.write_text("\n".join(lines) + "\n")


def overlay(s: ShapeSet, region: np.ndarray) -> np.ndarray:
    """Blank canvas: input boundaries at 128, contour pixels at 255."""
    img = np.zeros(s.grid.shape, dtype=np.uint8)
    for m in s.masks:
        img[sign_change_mask(np.where(m.values.astype(bool), -1.0, 1.0)) & m.values.astype(bool)] = 128
    img[sign_change_mask(np.where(region, -1.0, 1.0)) & region] = 255
    return img


def run_fusion(params: dict, out: Path, command: str):
    s = load_inputs(params)
    init = params["init"]
    init_mask = None
    if init.startswith("mask:"):
        init_mask = _load(init[len("mask:"):], params["threshold"], params["invert"])
        if init_mask.grid != s.grid:
            raise CliError("initial mask dimensions differ from the inputs", EXIT_GRID)
    work = None
    if params["working_mask"]:
        work = _load(params["working_mask"], params["threshold"], params["invert"])
        if work.grid != s.grid:
            raise CliError("working mask dimensions differ from the inputs", EXIT_GRID)
    try:
        cfg = EvolutionConfig(lam=params["lambda"], sigma=params["sigma"], cfl=params["cfl"],
                              max_iters=params["max_iters"], reinit_every=params["reinit_every"],
                              conv_window=params["conv_window"], conv_tol=params["conv_tol"],
                              mode=params["mode"], init=init, init_radius=params["init_radius"],
                              bubble_spacing=params["bubble_spacing"],
                              bubble_radius=params["bubble_radius"])
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    write_run_cfg(out, params, command)

    snap, dump = params["snapshot_every"], params["dump_every"]

    def callback(it, f, F):
        if snap and it % snap == 0:
            write_bytes(out / f"snapshot_{it:05d}.pgm", encode_pgm(overlay(s, f.u < 0)))
        if dump and it % dump == 0:
            dump_field(f, out / f"field_{it:05d}")
            F.astype("<f4").tofile(out / f"speed_{it:05d}.raw")

    try:
        result = evolve(s, cfg, init_mask=init_mask, work=work, callback=callback)
    except EvolutionError as exc:
        if exc.trace.records:
            (out / "trace.csv").write_text(exc.trace.to_csv())
        raise CliError(str(exc), EXIT_NUMERIC) from exc
    save_mask(result.mask, out / "consensus.pgm")
    write_pq(out / "pq.csv", s.names, result.quality)
    (out / "trace.csv").write_text(result.trace.to_csv())
    if snap:
        write_bytes(out / "snapshot_final.pgm", encode_pgm(overlay(s, result.mask.values.astype(bool))))
    log.info("%s: %d iterations, |consensus| = %d", command, len(result.trace), result.mask.area())
    return s, result


def cmd_fuse(args) -> int:
    params = resolve(args)
    out = prepare_out_dir(args.out)
    run_fusion(params, out, "fuse")
    return EXIT_OK


def ranking(names, quality, dices=None) -> list[dict]:
    rows = []
    for i, name in enumerate(names):
        row = {"name": name, "p": float(quality.p[i]), "q": float(quality.q[i])}
        row["p_plus_q"] = row["p"] + row["q"]
        if dices is not None:
            row["dice"] = dices[i]
        rows.append(row)
    rows.sort(key=lambda r: (-round(r["p_plus_q"], 12), r["name"]))
    return rows


def cmd_evaluate(args) -> int:
    params = resolve(args)
    out = prepare_out_dir(args.out)
    s, result = run_fusion(params, out, "evaluate")
    dices = consensus_dice = None
    if params["reference"]:
        ref = _load(params["reference"], params["threshold"], params["invert"])
        if ref.grid != s.grid:
            raise CliError("reference dimensions differ from the inputs", EXIT_GRID)
        dices = [dice(m, ref) for m in s.masks]
        consensus_dice = dice(result.mask, ref)
    rows = ranking(s.names, result.quality, dices)
    header = "rank,name,p,q,p_plus_q" + (",dice" if dices is not None else "")
    lines = [header]
    report = [f"{'rank':>4}  {'name':<20} {'p':>5} {'q':>5} {'p+q':>5}" + ("  dice" if dices else "")]
    for rank, r in enumerate(rows, 1):
        line = f"{rank},{r['name']},{r['p']:.6g},{r['q']:.6g},{r['p_plus_q']:.6g}"
        text = f"{rank:>4}  {r['name']:<20} {r['p']:5.2f} {r['q']:5.2f} {r['p_plus_q']:5.2f}"
        if dices is not None:
            line += f",{r['dice']:.6g}"
            text += f"  {r['dice']:.2f}"
        lines.append(line)
        report.append(text)
    if consensus_dice is not None:
        report.append(f"consensus dice vs reference: {consensus_dice:.4f}")
    (out / "ranking.csv").write_text("\n".join(lines) + "\n")
    (out / "report.txt").write_text("\n".join(report) + "\n")
    print("\n".join(report))
    return EXIT_OK


def cmd_baseline(args) -> int:
    params = resolve(args)
    out = prepare_out_dir(args.out)
    s = load_inputs(params)
    params["method"] = args.method
    write_run_cfg(out, params, "baseline")
    if args.method == "vote":
        consensus = majority_vote(s)
    elif args.method == "union":
        consensus = union(s)
    elif args.method == "intersection":
        consensus = intersection(s)
    else:
        res = staple_em(s, max_em_iters=args.em_iters, tol=args.em_tol)
        consensus = res.consensus
        write_pq(out / "pq.csv", s.names, res.quality)
        if res.ambiguous:
            log.warning("STAPLE posterior has exact ties; consensus is ambiguous")
    save_mask(consensus, out / "consensus.pgm")
    return EXIT_OK


def cmd_synth(args) -> int:
    out = prepare_out_dir(args.out)
    try:
        truth, s = make_lozenge_set(args.size, with_outlier=args.outlier, overlap=args.overlap)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    geo = lozenge_geometry(args.size, overlap=args.overlap, with_outlier=args.outlier)
    save_mask(truth, out / "truth.pgm")
    files = []
    for i, (name, m) in enumerate(zip(s.names, s.masks), 1):
        fname = f"m{i}_{name}.pgm"
        save_mask(m, out / fname)
        files.append(fname)
    manifest = ["kind=lozenge", f"size={args.size}", f"outlier={args.outlier}",
                f"overlap={args.overlap}", f"half_diagonal={geo.half_diagonal:.6g}",
                f"init_radius={geo.init_radius:.6g}", "truth=truth.pgm",
                "inputs=" + " ".join(files)]
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    return EXIT_OK


def _add_fusion_args(p: argparse.ArgumentParser, evolution: bool = True) -> None:
    p.add_argument("--inputs", nargs="+", metavar="PGM", help="input masks (at least two)")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--config", metavar="PATH", help="key=value file; flags take precedence")
    p.add_argument("--threshold", type=int, help="foreground if gray >= threshold (default 128)")
    p.add_argument("--invert", action="store_const", const=True, help="foreground if gray < threshold")
    if not evolution:
        return
    p.add_argument("--mode", choices=("mutual", "sd"), help="criterion (default mutual)")
    p.add_argument("--lambda", dest="lam", type=float, help="regularisation weight (default 10)")
    p.add_argument("--sigma", type=float, help="kernel width (default 0.1)")
    p.add_argument("--cfl", type=float, help="max contour displacement per iteration, px (default 0.45)")
    p.add_argument("--max-iters", dest="max_iters", type=int, help="iteration cap (default 1000)")
    p.add_argument("--reinit-every", dest="reinit_every", type=int, help="redistancing period (default 20)")
    p.add_argument("--conv-window", dest="conv_window", type=int, help="stasis window (default 25)")
    p.add_argument("--conv-tol", dest="conv_tol", type=int, help="pixels allowed to change per iteration in the window (default 0)")
    p.add_argument("--init", help="circle | bubbles | mask:PATH (default circle)")
    p.add_argument("--init-radius", dest="init_radius", type=float, help="circle radius, px (default 0.35*min side)")
    p.add_argument("--bubble-spacing", dest="bubble_spacing", type=float)
    p.add_argument("--bubble-radius", dest="bubble_radius", type=float)
    p.add_argument("--working-mask", dest="working_mask", metavar="PATH", help="restrict statistics to this mask")
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int, metavar="S", help="write an overlay PGM every S iterations")
    p.add_argument("--dump-every", dest="dump_every", type=int, metavar="S", help="dump level-set and speed fields every S iterations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mutualshape", description="Consensus shape estimation from binary segmentations.",
                                     epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fmt = argparse.RawDescriptionHelpFormatter
    p = sub.add_parser("fuse", help="estimate the consensus shape", epilog=CSV_HELP, formatter_class=fmt)
    _add_fusion_args(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", help="fuse, then rank inputs by p+q", epilog=CSV_HELP, formatter_class=fmt)
    _add_fusion_args(p)
    p.add_argument("--reference", metavar="PATH", help="gold mask; adds Dice columns")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="vote / union / intersection / STAPLE", epilog=CSV_HELP, formatter_class=fmt)
    _add_fusion_args(p, evolution=False)
    p.add_argument("--method", required=True, choices=("vote", "union", "intersection", "staple"))
    p.add_argument("--em-iters", dest="em_iters", type=int, default=100)
    p.add_argument("--em-tol", dest="em_tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("synth", help="write the synthetic lozenge fixture")
    p.add_argument("kind", choices=("lozenge",))
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--outlier", action="store_true")
    p.add_argument("--overlap", type=int, default=2)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"mutualshape {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except GridMismatchError as exc:
        print(f"mutualshape {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_GRID


if __name__ == "__main__":
    sys.exit(main())
