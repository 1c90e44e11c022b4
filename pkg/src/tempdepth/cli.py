"""Command-line entry point.

JSON reports go to stdout, raster/feature artifacts to files.
Exit codes: 0 ok, 2 usage or bad scene spec, 3 I/O or format, 4 failed
invariant/check, 5 no valid data.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .diffmask import MaskConfig, difference_mask, mask_loss
from .errors import EmptyInputError, FormatError, PreconditionError, SizeError
from .losses import LossConfig, gradcheck_suite, mse, silog, total_loss
from .metrics import depth_metrics, temporal_consistency
from .pipeline import run_pair
from .synthetic import SceneSpec, render_sequence
from .temporal import AttentionWeights

log = logging.getLogger("tempdepth")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CHECK, EXIT_EMPTY = 0, 2, 3, 4, 5
GRADCHECK_TOL = 1e-4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _mask_cfg(args) -> MaskConfig:
    return MaskConfig(args.alpha, args.bins, args.open_radius, args.close_radius)


def _loss_cfg(args) -> LossConfig:
    return LossConfig(args.lam, args.silog_scale, args.loss_alpha)


def _config_fields(args) -> dict:
    skip = {"func", "command"}
    out = {}
    for k, v in vars(args).items():
        if k in skip or v is None:
            continue
        out[f"config.{k}"] = str(v) if isinstance(v, Path) else v
    return out


def _emit(report: dict) -> None:
    print(fio.write_report(report))


def _require_file(path: Path) -> Path:
    if not path.is_file():
        raise CliError(EXIT_IO, f"no such file: {path}")
    return path


def cmd_gen(args) -> int:
    try:
        data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        n_frames = int(data.pop("n_frames", 2)) if args.n_frames is None else args.n_frames
        data.pop("frame_stride", None)
        spec = SceneSpec.from_dict(data)
        packets = render_sequence(spec, n_frames, args.frame_stride)
    except (OSError, ValueError, TypeError, AttributeError) as exc:
        raise CliError(EXIT_USAGE, f"bad scene spec {args.spec}: {exc}") from exc

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    warnings = []
    for k, p in enumerate(packets):
        fio.write_pfm(p.depth.astype(np.float32), out / f"depth_{k:04d}.pfm")
        fio.write_pfm(p.normals_gt.astype(np.float32), out / f"normals_{k:04d}.pfm")
        fio.write_flow(p.flow_to_prev, out / f"flow_{k:04d}.pfm")
        fio.write_mask_pgm(p.changed_gt, out / f"changed_{k:04d}.pgm")
        warnings.extend(p.warnings)
    manifest = {
        "scene": spec.to_dict(),
        "n_frames": n_frames,
        "frame_stride": args.frame_stride,
        "warnings": warnings,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(manifest, indent=2))
    return EXIT_OK


def cmd_diffmask(args) -> int:
    d0 = fio.read_pfm(_require_file(Path(args.depth0)))
    d1 = fio.read_pfm(_require_file(Path(args.depth1)))
    if d0.shape != d1.shape:
        raise CliError(EXIT_IO, f"frame sizes differ: {d0.shape} vs {d1.shape}")
    cfg = _mask_cfg(args)
    res = difference_mask(d0, d1, cfg)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        fio.write_pfm(res.normals0.astype(np.float32), out / "normals0.pfm")
        fio.write_pfm(res.normals1.astype(np.float32), out / "normals1.pfm")
        fio.write_pfm(res.variance.astype(np.float32), out / "variance.pfm")
        fio.write_mask_pgm(res.raw, out / "mask_raw.pgm")
        fio.write_mask_pgm(res.refined, out / "mask_refined.pgm")
    report = {
        "baseline": res.baseline,
        "alpha": cfg.alpha,
        "threshold": res.baseline + cfg.alpha,
        "pixels": int(res.raw.size),
        "valid_pixels": int(res.valid.sum()),
        "raw_pixels": int(res.raw.sum()),
        "refined_pixels": int(res.refined.sum()),
        "dynamic_fraction": res.dynamic_fraction,
        "mask_loss": mask_loss(res.raw, res.refined),
    }
    report.update(_config_fields(args))
    _emit(report)
    return EXIT_OK


def _load_weights(path: Path | None, cd: int, seed: int) -> AttentionWeights:
    if path is None:
        return AttentionWeights.random(cd, seed)
    qkv = fio.read_fgrid(_require_file(path / "qkv.fgrid"))
    kern = fio.read_fgrid(_require_file(path / "kernels.fgrid"))
    try:
        return AttentionWeights.unpack(qkv, kern)
    except SizeError as exc:
        raise CliError(EXIT_IO, f"bad weights in {path}: {exc}") from exc


def cmd_pipeline(args) -> int:
    frame_dir = Path(args.frame_dir)
    depths = sorted(frame_dir.glob("depth_*.pfm"))
    if len(depths) < 2:
        raise CliError(EXIT_IO, f"{frame_dir} holds fewer than 2 depth frames")
    weights = _load_weights(Path(args.weights) if args.weights else None, args.cd, args.seed)
    if weights.channels != args.cd:
        raise CliError(EXIT_IO, f"weights have {weights.channels} channels, --cd is {args.cd}")
    out = Path(args.out) if args.out else None
    cfg = _mask_cfg(args)

    report: dict = {"pairs": len(depths) - 1}
    all_ok = True
    prev = fio.read_pfm(depths[0])
    for k in range(1, len(depths)):
        cur = fio.read_pfm(depths[k])
        if cur.shape != prev.shape:
            raise CliError(EXIT_IO, f"frame {depths[k].name} differs in size")
        res = run_pair(prev, cur, weights, cfg, args.stride, args.cd, args.cn, args.seed)
        tag = f"pair{k:04d}"
        for name, val in {**res.stats, **res.checks}.items():
            report[f"{tag}.{name}"] = val
        all_ok &= res.ok
        if out is not None:
            pdir = out / tag
            pdir.mkdir(parents=True, exist_ok=True)
            for name, grid in res.features.items():
                fio.write_fgrid(grid, pdir / f"{name}.fgrid")
            fio.write_mask_pgm(res.mask_feat, pdir / "mask_feat.pgm")
        prev = cur
    report["invariants_ok"] = all_ok
    report.update(_config_fields(args))
    _emit(report)
    return EXIT_OK if all_ok else EXIT_CHECK


def cmd_eval(args) -> int:
    pred = fio.read_pfm(_require_file(Path(args.pred)))
    gt = fio.read_pfm(_require_file(Path(args.gt)))
    if pred.shape != gt.shape:
        raise CliError(EXIT_IO, f"pred {pred.shape} and gt {gt.shape} differ")
    valid = fio.read_mask_pgm(_require_file(Path(args.mask))) if args.mask else None
    m = depth_metrics(pred, gt, args.cap, valid)
    lcfg = _loss_cfg(args)
    ok = np.isfinite(gt) & (gt > 0) & (gt <= args.cap)
    if valid is not None:
        ok &= valid.astype(bool)
    normal_loss = 0.0
    if args.pred_normals and args.gt_normals:
        normal_loss = mse(fio.read_pfm(args.pred_normals), fio.read_pfm(args.gt_normals))
    mloss = 0.0
    if args.mask_raw and args.mask_refined:
        mloss = mask_loss(fio.read_mask_pgm(args.mask_raw), fio.read_mask_pgm(args.mask_refined))
    losses = total_loss(silog(pred, gt, lcfg, ok), normal_loss, mloss, lcfg)
    report = m.to_dict()
    report.update({
        "loss.depth": losses.depth_loss,
        "loss.normal": losses.normal_loss,
        "loss.mask": losses.mask_loss,
        "loss.total": losses.total,
        "valid_pixels": int((ok & np.isfinite(pred) & (pred > 0)).sum()),
    })
    report.update(_config_fields(args))
    _emit(report)
    return EXIT_OK


def cmd_tc(args) -> int:
    dt = fio.read_pfm(_require_file(Path(args.dt)))
    dprev = fio.read_pfm(_require_file(Path(args.dprev)))
    flow = fio.read_flow(_require_file(Path(args.flow)))
    if not (dt.shape == dprev.shape == flow.shape[1:]):
        raise CliError(EXIT_IO, "depth and flow sizes differ")
    valid = fio.read_mask_pgm(_require_file(Path(args.mask))) if args.mask else None
    m = temporal_consistency(dt, dprev, flow, args.thr, valid)
    report = {"qtc": m.qtc, "rtc": m.rtc, "thr": args.thr}
    report.update(_config_fields(args))
    _emit(report)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    worst = gradcheck_suite(args.seed, args.instances, cfg=_loss_cfg(args),
                            inject_bug=args.inject_bug)
    report = {f"max_rel_err.{k}": v for k, v in worst.items()}
    report["tolerance"] = GRADCHECK_TOL
    passed = all(v < GRADCHECK_TOL for v in worst.values())
    report["passed"] = passed
    report.update(_config_fields(args))
    _emit(report)
    return EXIT_OK if passed else EXIT_CHECK


def _add_mask_flags(p):
    d = MaskConfig()
    p.add_argument("--alpha", type=float, default=d.alpha, help="threshold margin above the baseline")
    p.add_argument("--bins", type=int, default=d.histogram_bins, help="histogram bins for the baseline")
    p.add_argument("--open-radius", type=int, default=d.refine_open_radius)
    p.add_argument("--close-radius", type=int, default=d.refine_close_radius)


def _add_loss_flags(p):
    d = LossConfig()
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--silog-scale", type=float, default=d.silog_scale)
    p.add_argument("--loss-alpha", type=float, default=d.loss_alpha)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempdepth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="render a synthetic scene to PFM/PGM files")
    p.add_argument("spec")
    p.add_argument("out_dir")
    p.add_argument("--n-frames", type=int, default=None)
    p.add_argument("--frame-stride", type=int, default=1)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("diffmask", help="difference mask between two depth frames")
    p.add_argument("depth0")
    p.add_argument("depth1")
    p.add_argument("--out", default=None, help="directory for normals, variance and masks")
    _add_mask_flags(p)
    p.set_defaults(func=cmd_diffmask)

    p = sub.add_parser("pipeline", help="mask + SNS/MS + fusion over consecutive frames")
    p.add_argument("frame_dir")
    p.add_argument("--out", default=None)
    p.add_argument("--weights", default=None, help="directory with qkv.fgrid and kernels.fgrid")
    p.add_argument("--stride", type=int, default=8)
    p.add_argument("--cd", type=int, default=8)
    p.add_argument("--cn", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    _add_mask_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="depth accuracy metrics and losses")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--cap", type=float, default=80.0, help="max ground-truth depth in meters")
    p.add_argument("--mask", default=None, help="validity mask PGM")
    p.add_argument("--pred-normals", default=None)
    p.add_argument("--gt-normals", default=None)
    p.add_argument("--mask-raw", default=None)
    p.add_argument("--mask-refined", default=None)
    _add_loss_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tc", help="temporal consistency of two predictions under a flow")
    p.add_argument("dt")
    p.add_argument("dprev")
    p.add_argument("flow")
    p.add_argument("--thr", type=float, default=1.25)
    p.add_argument("--mask", default=None, help="validity mask PGM")
    p.set_defaults(func=cmd_tc)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference loss gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--inject-bug", action="store_true", help="perturb one gradient entry")
    _add_loss_flags(p)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _run(args) -> int:
    try:
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except EmptyInputError as exc:
        log.error("empty input: %s", exc)
        return EXIT_EMPTY
    except (FormatError, SizeError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except PreconditionError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    threads = os.environ.get("TEMPDEPTH_THREADS")
    if threads:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=int(threads)):
            return _run(args)
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
