"""Command-line surface.

Subcommands: phantom-gen, train, suppress, fuse, eval, bench,
schedule-dump. Exit codes: 0 success, 2 configuration error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import phantom
from .codec import make_codec
from .config import PipelineConfig, load_config
from .denoise import ToyArch, ToyDenoiser, fit, save_checkpoint
from .errors import ConfigError, NumericError
from .fusion import poisson_fuse
from .imgio import read_image, read_pgm_mask, write_image
from .metrics import MetricsReport, evaluate_image
from .pipeline import bench, run_pipeline, training_examples
from .schedule import make_schedule, schedule_table


def _cmd_phantom_gen(args) -> int:
    config = phantom.GeneratorConfig()
    if args.boneless:
        config = phantom.boneless_config()
    samples = phantom.generate(args.seed, args.count, args.size, config)
    phantom.save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples under {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = phantom.load_dataset(args.data_dir)
    codec = make_codec(args.codec)
    schedule = make_schedule(args.steps)
    examples = training_examples(dataset, codec)
    arch = ToyArch.for_latent(codec.channels, timesteps=args.steps)
    model = ToyDenoiser.seeded(arch, args.seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    steps_per_epoch = max(1, (len(examples) + args.batch_size - 1) // args.batch_size)
    losses = fit(model, examples, schedule, rng,
                 n_steps=args.epochs * steps_per_epoch,
                 batch_size=args.batch_size, lr=args.lr)
    save_checkpoint(model, args.out)
    print(f"trained {len(losses)} steps on {len(examples)} examples; "
          f"loss {losses[0]:.4f} -> {losses[-1]:.4f}; saved {args.out}")
    return 0


def _suppress_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    for key in ("input", "mask", "model", "steps", "seed", "path",
                "out_prefix", "codec"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.alpha_l is not None:
        overrides["alpha_l"] = args.alpha_l
    if args.ground_truth is not None:
        overrides["ground_truth"] = args.ground_truth
    return replace(config, **overrides)


def _cmd_suppress(args) -> int:
    config = _suppress_config(args)
    result = run_pipeline(config)
    for name, path in result.artifacts.items():
        print(f"{name}: {path}")
    if result.report is not None:
        print(result.report.table(), end="")
    return 0


def _cmd_fuse(args) -> int:
    s_g = read_image(args.global_image)
    s_l = read_image(args.local_image)
    mask = read_pgm_mask(args.mask)
    fused = poisson_fuse(s_g, s_l, mask, tol=args.tol)
    write_image(args.out, fused)
    print(f"fused image written to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    dataset = phantom.load_dataset(args.data_dir)
    pred_dir = Path(args.pred_dir)
    rows = []
    for sample in dataset:
        pred_path = None
        for suffix in (".pgm", ".raw"):
            candidate = pred_dir / f"{sample.sample_id}_pred{suffix}"
            if candidate.exists():
                pred_path = candidate
                break
        if pred_path is None:
            raise ConfigError(
                f"no prediction {sample.sample_id}_pred.pgm/.raw under {pred_dir}"
            )
        pred = read_image(pred_path)
        rows.append(
            evaluate_image(sample.sample_id, pred, sample.cxr, sample.soft,
                           sample.lung_mask, sample.bone_mask)
        )
    report = MetricsReport(rows=tuple(rows))
    print(report.table(), end="")
    if args.out_csv:
        report.to_csv(args.out_csv)
        print(f"csv written to {args.out_csv}")
    return 0


def _cmd_bench(args) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    if args.steps is not None:
        config = replace(config, steps=args.steps)
    if args.input is not None:
        cxr = read_image(args.input)
        mask = read_pgm_mask(args.mask) if args.mask else None
        gt = read_image(args.ground_truth) if args.ground_truth else None
    else:
        sample = phantom.generate_one(args.seed, 0, args.phantom_size)
        cxr, mask, gt = sample.cxr, sample.lung_mask, sample.soft
    report = bench(config, cxr, repetitions=args.repetitions, mask=mask,
                   gt_soft=gt)
    print(report.table(), end="")
    return 0


def _cmd_schedule_dump(args) -> int:
    schedule = make_schedule(args.steps, args.beta_start, args.beta_end,
                             args.sigma_data)
    text = schedule_table(schedule)
    if args.out:
        Path(args.out).write_text(text)
        print(f"schedule table written to {args.out}")
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bonesup",
        description="Desk-scale bone suppression: dual-path consistency "
                    "sampling plus Poisson global-local fusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom-gen", help="generate a paired phantom dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--boneless", action="store_true",
                   help="zero rib amplitude (cxr equals soft tissue)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_phantom_gen)

    p = sub.add_parser("train", help="train the toy denoiser on a dataset")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--codec", default="identity")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("suppress", help="run bone suppression on one image")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--input", default=None)
    p.add_argument("--mask", default=None,
                   help="mask PGM path, or 'threshold' to derive one")
    p.add_argument("--model", default=None,
                   help="toy checkpoint path, or 'oracle' (needs --ground-truth)")
    p.add_argument("--ground-truth", default=None)
    p.add_argument("--codec", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--alpha-l", type=float, default=None)
    p.add_argument("--path", default=None,
                   choices=["global", "local", "dual", "fused"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-prefix", default=None)
    p.set_defaults(func=_cmd_suppress)

    p = sub.add_parser("fuse", help="Poisson-fuse a global/local image pair")
    p.add_argument("--global", dest="global_image", required=True)
    p.add_argument("--local", dest="local_image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("eval", help="score predictions against a dataset")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--out-csv", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="per-stage wall-time report")
    p.add_argument("--config", default=None)
    p.add_argument("--input", default=None)
    p.add_argument("--mask", default=None)
    p.add_argument("--ground-truth", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--phantom-size", type=int, default=256)
    p.add_argument("--repetitions", type=int, default=3)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("schedule-dump", help="print the schedule table")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--beta-start", type=float, default=0.00085)
    p.add_argument("--beta-end", type=float, default=0.012)
    p.add_argument("--sigma-data", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_schedule_dump)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
