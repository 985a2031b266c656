"""Command-line entry point: ``planecycle {lift,featdice,pca,bench,selftest,synth}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import complexity
from .archive import read_archive, write_archive
from .errors import ConvergenceFailure, MissingEntry, PlaneCycleError
from .lifting import (
    LiftingEngine,
    LiftMode,
    build_cycle_schedule,
    extract_global_summary,
    parse_schedule,
)
from .metrics import downsample_mask, feat_dice, pca_project
from .plane import PlaneAxis
from .selftest import run_selftest
from .weights import Arch, load_weights, save_weights, synth_weights


class CliError(PlaneCycleError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _require(path, code, what):
    if not path:
        raise CliError(code, f"{what} path is required")
    if not Path(path).exists():
        raise CliError(code, f"{what} not found: {path}")
    return path


def _engine(args) -> LiftingEngine:
    _require(args.weights, "E_NO_WEIGHTS", "weights archive")
    return LiftingEngine(load_weights(args.weights), threads=args.threads)


def _schedule(args, depth):
    if getattr(args, "schedule", None):
        return parse_schedule(args.schedule, depth)
    return build_cycle_schedule(depth)


def _load_volume(arc, in_channels):
    """``volume`` as ``[D0, H0, W0, in_ch]``; a single-channel volume is replicated."""
    if "volume" not in arc:
        raise MissingEntry("input archive lacks 'volume'")
    vol = arc["volume"]
    if vol.ndim == 3:
        vol = vol[..., None]
    if vol.shape[-1] == 1 and in_channels > 1:
        vol = np.repeat(vol, in_channels, axis=-1)
    return vol


def _features(args, arc):
    """Features from the archive's ``features`` entry, else by lifting its ``volume``."""
    if "features" in arc:
        return arc["features"]
    engine = _engine(args)
    vol = _load_volume(arc, engine.weights.in_channels)
    mode = LiftMode(args.mode)
    feats, _ = engine.forward(vol, mode, _schedule(args, engine.weights.depth))
    return feats


def cmd_lift(args) -> int:
    engine = _engine(args)
    _require(args.input, "E_NO_INPUT", "input archive")
    if not args.output:
        raise CliError("E_NO_OUTPUT", "--output is required")
    w = engine.weights
    mode = LiftMode(args.mode)
    schedule = _schedule(args, w.depth)
    vol = _load_volume(read_archive(args.input), w.in_channels)
    feats, globals_ = engine.forward(vol, mode, schedule)
    meta = {"mode": mode.value}
    if mode.is_plane_cycle:
        meta["schedule"] = ",".join(p.name.lower() for p in schedule)
    write_archive(
        {"features": feats, "globals": globals_, "summary": extract_global_summary(globals_)},
        args.output,
        meta,
    )
    report = complexity.attention_cost(mode, feats.shape[:3], w.num_globals, w.depth, schedule)
    d, h, wd = report.dims
    print(
        f"mode={mode.value} dims={d}x{h}x{wd} depth={w.depth} "
        f"sequences={report.total_sequences} attention_pairs={report.total_pairs}"
    )
    return 0


def cmd_featdice(args) -> int:
    arc = read_archive(_require(args.input, "E_NO_INPUT", "input archive"))
    if "mask" not in arc:
        raise MissingEntry("input archive lacks 'mask'")
    feats = _features(args, arc)
    mask = arc["mask"]
    if mask.shape != feats.shape[:3]:
        mask = downsample_mask(mask)
    print(f"featdice={feat_dice(feats, mask):.4f}")
    return 0


def write_ppm(path, rgb: np.ndarray) -> None:
    """Binary P6 image from ``rgb[rows, cols, 3]`` in [0, 1]."""
    pixels = np.clip(np.round(np.asarray(rgb, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    rows, cols = pixels.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{cols} {rows}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def plane_views(proj: np.ndarray) -> dict[str, np.ndarray]:
    """Central HW, DW and DH slices of a ``[D, H, W, k]`` projection."""
    d, h, w = proj.shape[:3]
    return {"hw": proj[d // 2], "dw": proj[:, h // 2], "dh": proj[:, :, w // 2]}


def cmd_pca(args) -> int:
    arc = read_archive(_require(args.input, "E_NO_INPUT", "input archive"))
    if not args.output:
        raise CliError("E_NO_OUTPUT", "--output prefix is required")
    proj = pca_project(_features(args, arc), k=3, seed=args.seed)
    for name, img in plane_views(proj).items():
        path = f"{args.output}_{name}.ppm"
        write_ppm(path, img)
        print(path)
    return 0


def _parse_dims(text: str) -> list[tuple[int, int, int]]:
    out = []
    for tok in text.split(","):
        parts = [int(p) for p in tok.lower().split("x")]
        if len(parts) == 1:
            parts *= 3
        if len(parts) != 3 or min(parts) < 1:
            raise CliError("E_DIMS", f"bad dims {tok!r}; use N or DxHxW")
        out.append(tuple(parts))
    return out


def cmd_bench(args) -> int:
    dims = _parse_dims(args.dims)
    modes = [LiftMode(m.strip()) for m in args.modes.split(",")]
    if args.weights:
        engine = _engine(args)
    else:
        arch = Arch(args.depth, args.channels, args.heads, in_channels=1)
        engine = LiftingEngine(synth_weights(args.seed, arch), threads=args.threads)
    w = engine.weights
    g = w.num_globals if args.g is None else args.g
    if args.repeats < 3:
        raise CliError("E_REPEATS", "--repeats must be >= 3")
    rows = complexity.benchmark_forward(engine, dims, modes, args.repeats, g=g, seed=args.seed)
    text = complexity.bench_csv(rows)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    for d, h, wd in dims:
        flat = complexity.attention_cost(LiftMode.FLAT3D, (d, h, wd), g, w.depth).total_pairs
        pc = complexity.attention_cost(LiftMode.PCG, (d, h, wd), g, w.depth).total_pairs
        print(f"# ratio {d}x{h}x{wd} flat3d/planecycle={flat / pc:.3f}")
    return 0


def cmd_selftest(args) -> int:
    return 0 if run_selftest() else 1


def cmd_synth(args) -> int:
    if not args.output:
        raise CliError("E_NO_OUTPUT", "--output is required")
    arch = Arch(args.depth, args.channels, args.heads, in_channels=args.in_channels)
    save_weights(synth_weights(args.seed, arch), args.output)
    print(args.output)
    return 0


COMMANDS = {
    "lift": cmd_lift,
    "featdice": cmd_featdice,
    "pca": cmd_pca,
    "bench": cmd_bench,
    "selftest": cmd_selftest,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planecycle", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--weights", help="weight archive")
        p.add_argument("--input", help="input archive (volume / features / mask)")
        p.add_argument("--output", help="output path or prefix")
        p.add_argument("--mode", choices=[m.value for m in LiftMode], default="pcg")
        p.add_argument("--schedule", help='plane schedule override, e.g. "hw,dw,dh,hw"')
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--dims", default="8", help="token grids for bench: N or DxHxW, comma separated")
        p.add_argument("--modes", default="2d,3d,pcg", help="bench modes, comma separated")
        p.add_argument("--repeats", type=int, default=3)
        p.add_argument("--g", type=int, default=None, help="global-token count for attention pairs")
        p.add_argument("--depth", type=int, default=4)
        p.add_argument("--channels", type=int, default=96)
        p.add_argument("--heads", type=int, default=4)
        p.add_argument("--in-channels", type=int, default=3)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("E_THREADS: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except ConvergenceFailure as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    except PlaneCycleError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
