"""Command-line interface: ``gupdm <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import ablation, datasets, metrics, physics, trainer
from .exceptions import GupdmError
from .io import checkpoint, config as config_io
from .io.images import list_images, load_image, save_gray, save_image
from .io.manifest import load_manifest
from .network import GupdmModel, enhance_image


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH, got {text!r}") from exc
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"range must satisfy LOW < HIGH, got {text!r}")
    return lo, hi


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def cmd_degrade(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    replay = None
    if args.replay:
        with open(args.replay, encoding="utf-8") as fh:
            replay = json.load(fh)
    rng = np.random.default_rng(args.seed)
    records = []
    for path in list_images(args.inp):
        img = load_image(path)
        name = os.path.basename(path)
        if replay is not None:
            entry = next((r for r in replay["images"] if r["source"] == name), None)
            if entry is None:
                raise GupdmError(f"{args.replay} has no record for {name}")
            sample = physics.replay_degradation_sample(img, entry["lambdas"], entry["gammas"], args.patch)
        else:
            sample = physics.make_degradation_sample(img, args.m, args.n, rng, args.lambda_range, args.gamma_range, args.patch)
        files = []
        for i, atm_img in enumerate(sample.atmosphere_images):
            fname = f"{_stem(path)}_m{i}.png"
            save_image(os.path.join(args.out, fname), atm_img)
            files.append(fname)
            for j, both in enumerate(sample.transmission_images[i]):
                fname = f"{_stem(path)}_m{i}_n{j}.png"
                save_image(os.path.join(args.out, fname), both)
                files.append(fname)
        records.append({
            "source": name,
            "lambdas": [lam.tolist() for lam in sample.lambdas],
            "gammas": [g.tolist() for g in sample.gammas],
            "files": files,
        })
    sidecar = {
        "seed": args.seed,
        "m": args.m,
        "n": args.n,
        "lambda_range": list(args.lambda_range),
        "gamma_range": list(args.gamma_range),
        "images": records,
    }
    with open(os.path.join(args.out, "provenance.json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {sum(len(r['files']) for r in records)} images for {len(records)} inputs to {args.out}")
    return 0


def cmd_transmission(args) -> int:
    img = load_image(args.inp)
    A = np.maximum(physics.estimate_atmosphere(img, patch=args.patch), 1e-3)
    tmap = physics.estimate_transmission_udcp(img, A, args.patch)[:, :, 0]
    save_gray(args.out, tmap)
    raw = os.path.splitext(args.out)[0] + ".npy"
    np.save(raw, tmap)
    print(f"transmission map: {args.out} (raw {raw}), mean {tmap.mean():.4f}")
    return 0


def _load_training_data(manifest_path, seed: int, size: int):
    if manifest_path:
        inputs, refs = load_manifest(manifest_path).load(require_reference=True)
        return inputs, refs
    degraded, clean, _, _ = datasets.make_pairs(8, min(size, 32), seed)
    return list(degraded), list(clean)


def _train_and_save(model_cfg, train_cfg, data, out: str, history_path: str | None) -> trainer.TrainResult:
    model = GupdmModel(model_cfg)

    def save_epoch(epoch, m, state):
        checkpoint.save(out, checkpoint.from_model(m, state.step, state.adam))

    result = trainer.train(data, model, train_cfg, on_epoch=save_epoch)
    checkpoint.save(out, checkpoint.from_model(model, result.state.step, result.state.adam))
    trainer.write_history(result.history, history_path or out + ".history.jsonl")
    return result


def _configs(path, seed):
    model_cfg, train_cfg = config_io.load(path) if path else config_io.parse("")
    if seed is not None:
        model_cfg.seed = train_cfg.seed = seed
    else:
        model_cfg.seed = train_cfg.seed
    return model_cfg, train_cfg


def cmd_train(args) -> int:
    model_cfg, train_cfg = _configs(args.config, args.seed)
    data = _load_training_data(args.manifest, train_cfg.seed, train_cfg.image_size)
    result = _train_and_save(model_cfg, train_cfg, data, args.out, args.history)
    last = result.history[-1]["loss"] if result.history else float("nan")
    print(f"trained {len(result.history)} steps, final loss {last:.6f}; checkpoint {args.out}")
    return 0


def cmd_ablate(args) -> int:
    model_cfg, train_cfg = _configs(args.config, args.seed)
    model_cfg, train_cfg = ablation.apply_switch(args.switch, model_cfg, train_cfg)
    data = _load_training_data(args.manifest, train_cfg.seed, train_cfg.image_size)
    out = args.out or f"ablate-{args.switch}.ckpt"
    result = _train_and_save(model_cfg, train_cfg, data, out, args.history)
    model = checkpoint.to_model(checkpoint.load(out))
    score = np.mean([metrics.psnr(enhance_image(model, x), y) for x, y in zip(*data)])
    print(f"{args.switch}: {len(result.history)} steps, training-set PSNR {score:.4f} dB; checkpoint {out}")
    return 0


def cmd_enhance(args) -> int:
    model = checkpoint.to_model(checkpoint.load(args.ckpt))
    os.makedirs(args.out, exist_ok=True)
    paths = list_images(args.inp)
    for path in paths:
        save_image(os.path.join(args.out, os.path.basename(path)), enhance_image(model, load_image(path)))
    print(f"enhanced {len(paths)} images into {args.out}")
    return 0


def cmd_eval(args) -> int:
    names = [n.strip() for n in args.metrics.split(",") if n.strip()]
    manifest = load_manifest(args.pairs)
    inputs, refs = manifest.load(require_reference=not args.no_reference)
    model = checkpoint.to_model(checkpoint.load(args.ckpt)) if args.ckpt else None
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out, delimiter=args.delimiter, lineterminator="\n")
        writer.writerow(["image"] + names)
        for (name, _), img, ref in zip(manifest.pairs, inputs, refs):
            result = enhance_image(model, img) if model is not None else img
            vals = metrics.evaluate(result, None if args.no_reference else ref, names)
            writer.writerow([name] + [f"{vals[n]:.6f}" if n in vals else "" for n in names])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gupdm", description="Underwater image enhancement with hypernetwork-conditioned convolutions.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("degrade", help="write atmosphere / transmission re-degradations of every image")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--m", type=int, default=4)
    d.add_argument("--n", type=int, default=4)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--lambda-range", type=_range, default=physics.LAMBDA_RANGE)
    d.add_argument("--gamma-range", type=_range, default=physics.GAMMA_RANGE)
    d.add_argument("--patch", type=int, default=None)
    d.add_argument("--replay", default=None, help="provenance.json to regenerate from")
    d.set_defaults(func=cmd_degrade)

    t = sub.add_parser("transmission", help="UDCP transmission map of one image")
    t.add_argument("--in", dest="inp", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--patch", type=int, default=None)
    t.set_defaults(func=cmd_transmission)

    for name, func in (("train", cmd_train), ("ablate", cmd_ablate)):
        s = sub.add_parser(name, help="train the model" if name == "train" else "train an ablated variant")
        s.add_argument("--manifest", default=None, help="paired dataset; synthetic fixtures when omitted")
        s.add_argument("--config", default=None)
        s.add_argument("--out", required=name == "train")
        s.add_argument("--history", default=None)
        s.add_argument("--seed", type=int, default=None)
        if name == "ablate":
            s.add_argument("--switch", required=True, choices=[x for x in ablation.SWITCHES if x != "full"])
        s.set_defaults(func=func)

    e = sub.add_parser("enhance", help="enhance every image of a directory")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--in", dest="inp", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_enhance)

    v = sub.add_parser("eval", help="metric table over a manifest")
    v.add_argument("--pairs", required=True)
    v.add_argument("--ckpt", default=None)
    v.add_argument("--metrics", default="psnr,ssim,mse,uciqe,uiqm")
    v.add_argument("--no-reference", action="store_true")
    v.add_argument("--delimiter", default=",")
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GupdmError, OSError, ValueError, KeyError) as exc:
        print(f"gupdm {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
