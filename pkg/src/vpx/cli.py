"""Command-line entry point: ``vpx <command> [options]``.

Every command accepts ``--profile``, ``--seed``, an optional JSON ``--config``
and repeated ``--set key=value`` overrides of the training options. Each run
writes an effective-config snapshot next to its output and JSON-lines events
to a log file (or stderr with ``--verbose``).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, heatmaps, profiles, voxelizer
from ._threads import limit_threads
from .engine import tdf
from .networks import Network
from .pipeline import ablation, data, infer, train
from .pipeline.config import TrainConfig
from .synthdata import generate, read_dataset, write_dataset

ABLATIONS = ("2d-co", "2d-vl", "holistic")


class ConfigError(Exception):
    """Bad flag or config value; exit status 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


# -- configuration --------------------------------------------------------

def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            out[k.strip()] = v
    return out


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"--config: file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"--config: {path} is not valid JSON ({e})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"--config: {path} must hold a JSON object")
    return cfg


def resolve(args) -> tuple[profiles.Profile, TrainConfig, dict]:
    """Profile and training options from defaults < ``--config`` < flags < ``--set``."""
    cfg = _load_config(args.config)
    name = args.profile or cfg.pop("profile", "tiny")
    cfg.pop("profile", None)
    try:
        prof = profiles.get(name)
    except ValueError as e:
        raise ConfigError(f"--profile: {e}") from None
    overrides = {**cfg, **_parse_set(args.set)}
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        tc = TrainConfig.for_profile(prof, **overrides)
    except KeyError as e:
        raise ConfigError(f"--set/--config: {e.args[0]}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"--set/--config: {e}") from None
    return prof, tc, overrides


def _snapshot(path: Path, args, prof: profiles.Profile, tc: TrainConfig) -> None:
    snap = {
        "command": args.command, "version": __version__, "profile": prof.to_dict(), "train": tc.to_dict(),
        "args": {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(snap, indent=1, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _out_paths(out: str, is_dir: bool) -> tuple[Path, Path, Path]:
    """(output, config snapshot, log) paths for a directory or a file output."""
    p = Path(out)
    if is_dir:
        p.mkdir(parents=True, exist_ok=True)
        return p, p / "config.json", p / "log.jsonl"
    p.parent.mkdir(parents=True, exist_ok=True)
    return p, p.with_name(p.name + ".config.json"), p.with_name(p.name + ".log.jsonl")


def _log(args, path: Path) -> train.JsonLog:
    path.write_text("", encoding="utf-8")
    return train.JsonLog.to_file(path, echo=args.verbose)


def _load_net(path: str, flag: str) -> Network:
    try:
        return Network.load(path)
    except FileNotFoundError:
        raise ConfigError(f"{flag}: checkpoint not found: {path}") from None


def _load_data(path: str, flag: str = "--data"):
    if not Path(path).exists():
        raise ConfigError(f"{flag}: dataset not found: {path}")
    return read_dataset(path)


def _ckpt_profile(net: Network, fallback: profiles.Profile) -> profiles.Profile:
    d = net.extra.get("profile") if isinstance(net.extra, dict) else None
    return profiles.from_dict(d) if d else fallback


# -- commands -------------------------------------------------------------

def cmd_synth(args, prof, tc):
    if args.frames < 1:
        raise ConfigError("--frames must be >= 1")
    out, snap, _ = _out_paths(args.out, True)
    ds = generate(args.frames, tc.seed, prof, args.joint_set, args.noise)
    write_dataset(ds, out)
    _snapshot(snap, args, prof, tc)
    print(f"wrote {len(ds)} frames to {out}")


def cmd_train_pnet(args, prof, tc):
    ds = _load_data(args.data)
    out, snap, logp = _out_paths(args.out, True)
    _snapshot(snap, args, prof, tc)
    log = _log(args, logp)
    try:
        res = train.train_pnet(ds, tc, prof, log)
        train.save_result(res, out, tc, prof, joint_names=list(ds.joint_names), z_window=list(ds.z_window))
    finally:
        log.close()
    print(f"P-Net checkpoints in {out} (best iteration {res.best_iteration})")


def cmd_gen_crops(args, prof, tc):
    ds = _load_data(args.data)
    out, snap, _ = _out_paths(args.out, False)
    stage2d = None
    if args.mode == "pnet":
        if not args.pnet:
            raise ConfigError("--pnet is required with --mode pnet")
        net = _load_net(args.pnet, "--pnet")
        prof = _ckpt_profile(net, prof)
        stage2d = infer.NetworkStage2D(net, prof, ds.z_window)
    crops = infer.generate_vnet_crops(ds, prof, args.mode, stage2d, args.jitter, tc.seed)
    crops.save(out)
    _snapshot(snap, args, prof, tc)
    rates = crops.flag_rates(ds.num_joints)
    print(json.dumps({"crops": len(crops), "flag_rates": dict(zip(rates, map(lambda r: [round(x, 4) for x in r],
                                                                             rates.values())))}))


def cmd_train_vnet(args, prof, tc):
    if not Path(args.crops).exists():
        raise ConfigError(f"--crops: file not found: {args.crops}")
    crops = data.CropSet.load(args.crops)
    out, snap, logp = _out_paths(args.out, True)
    _snapshot(snap, args, prof, tc)
    log = _log(args, logp)
    try:
        res = train.train_vnet(crops, tc, prof, log)
        train.save_result(res, out, tc, prof)
    finally:
        log.close()
    print(f"V-Net checkpoints in {out} (best iteration {res.best_iteration})")


def cmd_infer(args, prof, tc):
    ds = _load_data(args.data)
    out, snap, logp = _out_paths(args.out, False)
    vnet = _load_net(args.vnet, "--vnet")
    prof = _ckpt_profile(vnet, prof)
    uv2d = None
    if args.gt_2d:
        uv2d = np.stack([data.gt_centers(f, ds.width, ds.height) for f in ds.frames])
        pnet = None
    else:
        if not args.pnet:
            raise ConfigError("--pnet is required unless --gt-2d is given")
        pnet = _load_net(args.pnet, "--pnet")
    s2, s3 = infer.network_stages(pnet, vnet, prof, ds.z_window)
    _snapshot(snap, args, prof, tc)
    log = _log(args, logp)
    try:
        preds = infer.infer_dataset(ds, s2, s3, prof, uv2d=uv2d, log=log)
        log("done", frames=len(ds), seconds_per_frame=round(preds.seconds_per_frame, 4))
    finally:
        log.close()
    preds.write_jsonl(out)
    print(f"wrote {len(ds)} predictions to {out} ({preds.seconds_per_frame:.3f} s/frame)")


def cmd_eval(args, prof, tc):
    ds = _load_data(args.data)
    if not Path(args.pred).exists():
        raise ConfigError(f"--pred: file not found: {args.pred}")
    recs = infer.read_jsonl(args.pred)
    by_id = {r["frame_id"]: r for r in recs}
    missing = [f.frame_id for f in ds.frames if f.frame_id not in by_id]
    if missing:
        raise RuntimeError(f"predictions missing for {len(missing)} frame(s), first {missing[0]}")
    ordered = [by_id[f.frame_id] for f in ds.frames]
    _, xyz = infer.records_to_xyz(ordered)
    uv = np.array([[[j["u"], j["v"]] for j in r["joints"]] for r in ordered], dtype=np.float64)
    rep = ablation.evaluate_predictions(xyz, ds, uv)
    print(rep.table())
    if args.json:
        Path(args.json).write_text(json.dumps(rep.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(rep.csv(), encoding="utf-8")


def cmd_ablate(args, prof, tc):
    train_ds = _load_data(args.data)
    test_ds = _load_data(args.test, "--test")
    out, snap, logp = _out_paths(args.out, True)
    pnet = _load_net(args.pnet, "--pnet")
    prof = _ckpt_profile(pnet, prof)
    s2 = infer.NetworkStage2D(pnet, prof, train_ds.z_window)
    _snapshot(snap, args, prof, tc)
    log = _log(args, logp)
    try:
        uv_test, _ = infer.predict_2d(s2, test_ds.frames, prof)
        if args.variant == "holistic":
            uv_train, _ = infer.predict_2d(s2, train_ds.frames, prof)
            hs = ablation.build_holistic_set(train_ds, uv_train, prof)
            res = ablation.train_holistic(hs, tc, prof, log)
            xyz = ablation.infer_holistic(res.best, test_ds, uv_test, prof)
        else:
            kind = args.variant.replace("-", "_")
            crops = infer.generate_vnet_crops(train_ds, prof, "pnet", s2, seed=tc.seed)
            res = train.train_patch_model(kind, crops, tc, prof, log)
            preds = infer.infer_dataset(test_ds, s2, ablation.patch_stage(res.best, prof), prof, uv2d=uv_test)
            xyz = preds.xyz
        train.save_result(res, out, tc, prof)
        rep = ablation.evaluate_predictions(xyz, test_ds)
        log("eval", variant=args.variant, map=rep.full_body)
    finally:
        log.close()
    (out / "report.json").write_text(json.dumps({"variant": args.variant, **rep.to_dict()}, indent=1,
                                                sort_keys=True) + "\n", encoding="utf-8")
    print(rep.table())


def cmd_export_heatmaps(args, prof, tc):
    ds = _load_data(args.data)
    if not 0 <= args.frame < len(ds):
        raise ConfigError(f"--frame must be in [0, {len(ds)})")
    net = _load_net(args.pnet, "--pnet")
    prof = _ckpt_profile(net, prof)
    out, snap, _ = _out_paths(args.out, True)
    maps = infer.NetworkStage2D(net, prof, ds.z_window)([ds.frames[args.frame]])[0]
    for k, name in enumerate(ds.joint_names):
        heatmaps.write_pgm(out / f"{ds.frames[args.frame].frame_id}_{k:02d}_{name}.pgm", maps[k])
    _snapshot(snap, args, prof, tc)
    print(f"wrote {len(maps)} heatmaps to {out}")


def cmd_voxelize(args, prof, tc):
    ds = _load_data(args.data)
    if not 0 <= args.frame < len(ds):
        raise ConfigError(f"--frame must be in [0, {len(ds)})")
    if not 0 <= args.joint < ds.num_joints:
        raise ConfigError(f"--joint must be in [0, {ds.num_joints})")
    out, snap, _ = _out_paths(args.out, False)
    fr = ds.frames[args.frame]
    centers = data.gt_centers(fr, ds.width, ds.height)
    torso = ds.joint_names.index(data.TORSO) if data.TORSO in ds.joint_names else None
    metas, grids, _, bad = data.frame_crops(fr, centers, prof, torso)
    g = grids[args.joint]
    tdf.save_archive(out, {"grid": g}, header={"format": "vpx-grid", "crop": metas[args.joint].to_dict(),
                                               "unanchored": bool(bad[args.joint])})
    # front view: nearest occupied bin per column, for a quick look
    occ = g > 0
    front = np.where(occ.any(-1), occ.argmax(-1), g.shape[-1]).astype(np.float32).T
    heatmaps.write_pgm(out.with_suffix(".pgm"), 1.0 - front / g.shape[-1])
    _snapshot(snap, args, prof, tc)
    print(f"wrote grid {g.shape} to {out}")


def cmd_export_plots(args, prof, tc):
    """CSV series: per-body-part mAP for labelled reports, or mAP against patch size."""
    out, snap, _ = _out_paths(args.out, False)
    rows = []
    for item in args.report or []:
        label, _, path = item.partition("=")
        if not path:
            raise ConfigError(f"--report expects label=path, got {item!r}")
        rep = json.loads(Path(path).read_text(encoding="utf-8"))
        for part, value in rep["groups"].items():
            rows.append(("component", label, part, f"{100 * value:.2f}"))
    for path in args.sweep or []:
        for r in json.loads(Path(path).read_text(encoding="utf-8")):
            rows.append(("patch_size", str(r["patch_size"]), "Full Body", f"{100 * r['map']:.2f}"))
    if not rows:
        raise ConfigError("export-plots needs --report or --sweep")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("series,label,part,map_percent\n")
        for r in rows:
            fh.write(",".join(r) + "\n")
    _snapshot(snap, args, prof, tc)
    print(f"wrote {len(rows)} rows to {out}")


def cmd_sweep(args, prof, tc):
    train_ds = _load_data(args.data)
    test_ds = _load_data(args.test, "--test")
    out, snap, logp = _out_paths(args.out, False)
    pnet = _load_net(args.pnet, "--pnet")
    prof = _ckpt_profile(pnet, prof)
    s2 = infer.NetworkStage2D(pnet, prof, train_ds.z_window)
    _snapshot(snap, args, prof, tc)
    log = _log(args, logp)
    try:
        rows = ablation.patch_size_sweep(train_ds, test_ds, s2, args.sizes, tc, prof, log)
    finally:
        log.close()
    out.write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
    print(json.dumps(rows))


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--profile", choices=sorted(profiles.PROFILES), default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", help="JSON file of training options")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one training option")
    common.add_argument("--verbose", action="store_true", help="echo JSON events to stderr")

    p = _Parser(prog="vpx", description="Depth-map 3D pose estimation with local occupancy grids.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="render a synthetic dataset")
    s.add_argument("--frames", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--joint-set", choices=("itop15", "eval12"), default="itop15")
    s.add_argument("--noise", type=float, default=None, help="depth noise sigma in mm")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train-pnet", parents=[common], help="train the 2D network")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_pnet)

    s = sub.add_parser("gen-crops", parents=[common], help="build local grids for V-Net training")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--pnet")
    s.add_argument("--mode", choices=data.CROP_MODES, default="pnet")
    s.add_argument("--jitter", type=int, default=5, help="max pixel shift for gt_jitter")
    s.set_defaults(func=cmd_gen_crops)

    s = sub.add_parser("train-vnet", parents=[common], help="train the 3D network")
    s.add_argument("--crops", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_vnet)

    s = sub.add_parser("infer", parents=[common], help="predict 3D joints (JSON lines)")
    s.add_argument("--data", required=True)
    s.add_argument("--pnet")
    s.add_argument("--vnet", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--gt-2d", action="store_true", help="center crops on ground-truth 2D joints")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    s.add_argument("--data", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--json")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", parents=[common], help="train and score a component-analysis variant")
    s.add_argument("variant", choices=ABLATIONS)
    s.add_argument("--data", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--pnet", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("sweep", parents=[common], help="mAP against local patch size")
    s.add_argument("--data", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--pnet", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--sizes", type=int, nargs="+", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("export-heatmaps", parents=[common], help="write P-Net heatmaps as PGM images")
    s.add_argument("--data", required=True)
    s.add_argument("--pnet", required=True)
    s.add_argument("--frame", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_heatmaps)

    s = sub.add_parser("voxelize", parents=[common], help="write one local grid (TDF) and a PGM preview")
    s.add_argument("--data", required=True)
    s.add_argument("--frame", type=int, default=0)
    s.add_argument("--joint", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_voxelize)

    s = sub.add_parser("export-plots", parents=[common], help="CSV data for component and patch-size charts")
    s.add_argument("--report", action="append", metavar="LABEL=PATH")
    s.add_argument("--sweep", action="append", metavar="PATH")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_plots)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        prof, tc, _ = resolve(args)
        try:
            limiter = limit_threads()
        except ValueError as e:
            raise ConfigError(f"VPX_THREADS: {e}") from None
        with limiter:
            args.func(args, prof, tc)
    except ConfigError as e:
        print(f"vpx: error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:             # --help / --version
        return int(e.code or 0)
    except KeyboardInterrupt:
        return 130
    except Exception as e:              # runtime failure
        print(f"vpx: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
