"""Command-line interface: ``dyan <command> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings
from typing import List, Optional

import numpy as np

from . import io as dio
from .atoms import ConfigurationError, PoleSet, init_ring
from .dictionary import DictionaryError
from .gradcheck import run_gradcheck
from .metrics import score_frames
from .pipeline import FlowField, SequenceTensor, ShapeError, predict_next, warp
from .synth import SynthSpec, make_dataset
from .training import TrainConfig, TrainingError, train

log = logging.getLogger("dyan")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2


class CLIError(Exception):
    pass


def _ring_from(ring: dict) -> PoleSet:
    num = int(ring.get("num_poles", 40))
    grid = None
    if "grid" in ring and ring["grid"]:
        r, _, q = str(ring["grid"]).lower().partition("x")
        grid = (int(r), int(q))
    return init_ring(num, float(ring.get("rho_min", 0.85)), float(ring.get("rho_max", 1.15)), grid=grid)


def _parse_modes(text: str):
    modes = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        vals = [float(v) for v in chunk.split(",")]
        if len(vals) != 4:
            raise CLIError(f"mode {chunk!r}: need rho,psi,amplitude,phase")
        modes.append(tuple(vals))
    if not modes:
        raise CLIError("no modes given")
    return modes


# ---------------------------------------------------------------- commands


def cmd_init_model(args) -> int:
    ring = {"num_poles": args.num_poles, "rho_min": args.rho_min, "rho_max": args.rho_max,
            "grid": args.grid}
    model = dio.ModelFile(T=args.T, lam=args.lam, poles=_ring_from(ring))
    size = dio.save_model(args.out, model)
    print(f"wrote {args.out} ({size} bytes, {model.poles.P} poles)")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.modes:
        modes = _parse_modes(args.modes)
    else:
        model = dio.load_model(args.from_model)
        rng = np.random.default_rng(args.seed)
        modes = [
            (r + args.perturb, p + args.perturb, float(rng.uniform(0.5, 1.0)), 0.0)
            for r, p in zip(model.poles.rho, model.poles.psi)
        ]
    spec = SynthSpec(modes=tuple(modes), T=args.T, H=args.H, W=args.W, noise_sigma=args.noise,
                     seed=args.seed, amp_spread=args.amp_spread, offset=args.offset)
    data = make_dataset(args.count, spec, args.jitter, args.seed)
    if args.no_target:
        arr = np.stack([seq.frames() for seq, _ in data])
    else:
        arr = np.stack([np.concatenate([seq.frames(), tgt[None]]) for seq, tgt in data])
    dio.write_sequences(args.out, arr)
    if args.truth_out:
        dio.write_sequences(args.truth_out, np.stack([tgt[None] for _, tgt in data]))
    print(f"wrote {args.out}: {arr.shape[0]} sequences of {arr.shape[1]} frames {args.H}x{args.W}")
    return EXIT_OK


def _dataset(sf: dio.SequenceFile, T: int):
    if sf.count == 0:
        raise CLIError("dataset is empty")
    if sf.T != T + 1:
        raise CLIError(f"dataset has {sf.T} frames per sequence, expected T+1={T + 1}")
    out = []
    for s in range(sf.count):
        frames = sf.data[s].astype(np.float64)
        out.append((SequenceTensor.from_frames(frames[:T], sf.channel_id), frames[T]))
    return out


def cmd_train(args) -> int:
    cfg, ring = dio.read_config(args.config)
    if args.epochs is not None:
        cfg.epochs = args.epochs
    data = _dataset(dio.read_sequences(args.dataset), cfg.T)
    if args.init:
        init = dio.load_model(args.init)
        if init.T != cfg.T:
            raise CLIError(f"initial model has T={init.T}, config has T={cfg.T}")
        ps = init.poles
    else:
        ps = _ring_from(ring)
    log_path = args.log or (args.out + ".log.csv")
    new_log = not os.path.exists(log_path) or os.path.getsize(log_path) == 0
    with open(log_path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_log:
            writer.writerow(dio.LOG_CSV_HEADER)

        def on_epoch(row):
            writer.writerow([row["epoch"], repr(row["loss"]), repr(row["sparsity"]),
                             f"{row['wall']:.6f}"])
            fh.flush()
            if not args.quiet:
                print(f"epoch {row['epoch']:4d} loss {row['loss']:.6e} density {row['sparsity']:.4f}")

        res = train(ps, data, cfg, snapshot_poles=args.snapshot_poles, on_epoch=on_epoch)
    model = dio.ModelFile(T=cfg.T, lam=res.lam, poles=res.poles, trainable_lambda=cfg.trainable_lambda,
                          epochs=cfg.epochs, final_loss=res.final_loss)
    dio.save_model(args.out, model)
    if args.snapshot_poles:
        dio.save_snapshots(args.out + ".snapshots.json", res.snapshots)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = dio.load_model(args.model)
    lam = model.lam if args.lam is None else args.lam
    kw = dict(max_iter=args.max_iter, tol=args.tol)
    sf = dio.read_sequences(args.input)
    if sf.T != model.T:
        raise CLIError(f"model expects T={model.T} input frames, got T={sf.T}")
    preds = []
    for s in range(sf.count):
        seq = SequenceTensor.from_frames(sf.data[s].astype(np.float64), sf.channel_id)
        preds.append(predict_next(model.poles, seq, lam, **kw))
    channel = sf.channel_id
    if args.flow_v:
        if sf.count != 1:
            raise CLIError("flow mode takes a single u-flow sequence")
        sv = dio.read_sequences(args.flow_v)
        if sv.T != model.T or sv.data.shape[2:] != sf.data.shape[2:]:
            raise CLIError(f"v-flow sequence must match the u-flow sequence ({model.T} frames)")
        seq_v = SequenceTensor.from_frames(sv.data[0].astype(np.float64), sv.channel_id)
        preds.append(predict_next(model.poles, seq_v, lam, **kw))
        channel = "flow_uv"
    out = np.stack(preds)[:, None]
    dio.write_sequences(args.out, out, channel)
    if args.frames:
        if not args.flow_v:
            raise CLIError("--frames needs --flow-v (warping uses both flow components)")
        raw = dio.read_sequences(args.frames)
        if raw.T != model.T + 1:
            raise CLIError(f"raw frame file must hold F=T+1={model.T + 1} frames, got {raw.T}")
        warped = warp(raw.data[0, -1].astype(np.float64), FlowField(preds[0], preds[1]))
        dio.write_sequences(args.warped_out or (args.out + ".warped"), warped[None, None])
    return EXIT_OK


def cmd_eval(args) -> int:
    a = dio.read_sequences(args.prediction)
    b = dio.read_sequences(args.truth)
    if a.data.shape != b.data.shape:
        raise CLIError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    H, W = a.H, a.W
    rep = score_frames(a.data.reshape(-1, H, W).astype(np.float64),
                       b.data.reshape(-1, H, W).astype(np.float64))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dio.EVAL_CSV_HEADER)
        for r in rep.per_frame:
            w.writerow([r["frame"], repr(r["mse"]), repr(r["psnr"]), repr(r["ssim"])])
        w.writerow(["mean", repr(rep.mse), repr(rep.psnr), repr(rep.ssim)])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_inspect_poles(args) -> int:
    model = dio.load_model(args.model)
    snap_path = args.snapshots or (args.model + ".snapshots.json")
    if os.path.exists(snap_path):
        snaps = dio.load_snapshots(snap_path)
    else:
        if args.snapshots:
            raise CLIError(f"snapshot file {snap_path} not found")
        print("warning: no pole snapshots found; writing final poles only", file=sys.stderr)
        snaps = [(model.epochs, model.poles)]
    if args.out == "-":
        n = dio.write_pole_csv(sys.stdout, snaps)
    else:
        n = dio.write_pole_csv(args.out, snaps)
        print(f"wrote {n} rows to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rep = run_gradcheck(seed=args.seed, n_instances=args.instances, max_T=args.max_T,
                        max_poles=args.max_poles, max_pixels=args.max_pixels, lam=args.lam,
                        corrupt=args.corrupt)
    if args.verbose:
        for line in rep.lines:
            print(line)
    print(rep.summary())
    if rep.worst:
        print("worst:", rep.worst)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_convert_pgm(args) -> int:
    sf = dio.convert_pgm_dir(args.src, args.out, args.channel)
    print(f"wrote {args.out}: {sf.T} frames {sf.H}x{sf.W}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dyan", description=__doc__)
    p.add_argument("-v", "--verbose-log", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init-model", help="write an untrained model with the default pole ring")
    s.add_argument("out")
    s.add_argument("--T", type=int, default=9)
    s.add_argument("--lambda", dest="lam", type=float, default=0.01)
    s.add_argument("--num-poles", type=int, default=40)
    s.add_argument("--rho-min", type=float, default=0.85)
    s.add_argument("--rho-max", type=float, default=1.15)
    s.add_argument("--grid", default=None, help="RxQ, e.g. 5x8")
    s.set_defaults(func=cmd_init_model)

    s = sub.add_parser("synth", help="generate a synthetic sequence file")
    s.add_argument("out")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--modes", help="'rho,psi,amp,phase;...'")
    src.add_argument("--from-model", help="use the model's poles shifted by --perturb")
    s.add_argument("--perturb", type=float, default=0.0)
    s.add_argument("--T", type=int, default=9)
    s.add_argument("--H", type=int, default=16)
    s.add_argument("--W", type=int, default=16)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--jitter", type=float, default=0.0)
    s.add_argument("--amp-spread", type=float, default=0.0)
    s.add_argument("--offset", type=float, default=0.0)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-target", action="store_true", help="write only the T input frames")
    s.add_argument("--truth-out", help="also write the target frames to this file")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="learn pole parameters by steepest descent")
    s.add_argument("config")
    s.add_argument("dataset")
    s.add_argument("out")
    s.add_argument("--log", help="CSV log path (default OUT.log.csv, appended)")
    s.add_argument("--init", help="start from this model instead of the configured ring")
    s.add_argument("--epochs", type=int, default=None, help="override the config")
    s.add_argument("--snapshot-poles", action="store_true", help="keep per-epoch poles in OUT.snapshots.json")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict the next frame")
    s.add_argument("model")
    s.add_argument("input", help="T-frame sequence (u-flow in flow mode)")
    s.add_argument("out")
    s.add_argument("--flow-v", help="v-flow sequence; enables flow mode")
    s.add_argument("--frames", help="raw F=T+1 frames; the last one is warped by the predicted flow")
    s.add_argument("--warped-out", help="path of the warped frame (default OUT.warped)")
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--tol", type=float, default=1e-6)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval", help="MSE/PSNR/SSIM of a prediction against ground truth")
    s.add_argument("prediction")
    s.add_argument("truth")
    s.add_argument("--out", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("inspect-poles", help="export poles as CSV")
    s.add_argument("model")
    s.add_argument("out", help="CSV path or '-'")
    s.add_argument("--snapshots", help="snapshot file (default MODEL.snapshots.json)")
    s.set_defaults(func=cmd_inspect_poles)

    s = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--instances", type=int, default=12)
    s.add_argument("--max-T", type=int, default=8)
    s.add_argument("--max-poles", type=int, default=2)
    s.add_argument("--max-pixels", type=int, default=4)
    s.add_argument("--lambda", dest="lam", type=float, default=0.05)
    s.add_argument("--corrupt", type=float, default=0.0, help=argparse.SUPPRESS)
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("convert-pgm", help="stack a directory of 8-bit PGM frames into a sequence file")
    s.add_argument("src")
    s.add_argument("out")
    s.add_argument("--channel", default="intensity")
    s.set_defaults(func=cmd_convert_pgm)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose_log else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CLIError, dio.FormatError, ShapeError, ConfigurationError, DictionaryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TrainingError as exc:
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
