"""Command-line interface.

Subcommands: simulate, train, finetune, separate, evaluate, count. Training
subcommands read a YAML config mirroring TrainConfig (with nested `model`
and `stft` sections); any flag given on the command line overrides the file.
Nested keys are overridable as `--set model.embed_dim=16`.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import yaml

from .model.config import ModelConfig
from .stft import StftConfig

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common_train_flags(p):
    p.add_argument("--config", help="YAML config file mirroring TrainConfig")
    p.add_argument("--train-manifest", help="training dataset manifest.jsonl")
    p.add_argument("--val-manifest", help="validation dataset manifest.jsonl")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--grad-accum", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda-ce", type=float)
    p.add_argument("--out-dir", help="directory for checkpoints and logs")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--max-steps", type=int, help="stop after this many optimizer steps")
    p.add_argument("--strict-determinism", type=_parse_bool, metavar="{true,false}")
    p.add_argument("--plateau-decay", type=_parse_bool, metavar="{true,false}")
    p.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override any config key, e.g. model.embed_dim=16 or stft.hop_length=256",
    )


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _parse_mic_map(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"mic map must be comma-separated ints, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="soundsep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="render a simulated mixture dataset")
    p.add_argument("--corpus", required=True, help="source clip corpus root (class subdirs)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--num-clips", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-sources", type=int, default=2)
    p.add_argument("--max-sources", type=int, default=4)

    p = sub.add_parser("train", help="stage-1 joint separation + classification training")
    _add_common_train_flags(p)

    p = sub.add_parser("finetune", help="refinement fine-tuning from a stage-1 checkpoint")
    _add_common_train_flags(p)
    p.add_argument("--ckpt", required=True, help="stage-1 checkpoint to start from")

    p = sub.add_parser("separate", help="separate one multichannel WAV into track stems")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="wav_in", required=True, metavar="WAV")
    p.add_argument("--out", required=True, help="output directory for stems + classes.json")
    p.add_argument("--allow-resample", action="store_true")
    p.add_argument("--mic-map", type=_parse_mic_map, metavar="I,J,K,L")

    p = sub.add_parser("evaluate", help="score a dataset and write a JSON report")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--counting", choices=("classifier", "threshold"), default="classifier")

    p = sub.add_parser("count", help="predict the number of active sources in a WAV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="wav_in", required=True, metavar="WAV")
    p.add_argument("--counting", choices=("classifier", "threshold"), default="classifier")
    p.add_argument("--allow-resample", action="store_true")
    p.add_argument("--mic-map", type=_parse_mic_map, metavar="I,J,K,L")
    return parser


def _apply_dotted(target: dict, dotted: str, raw: str) -> None:
    value = yaml.safe_load(raw)
    node = target
    *parents, leaf = dotted.split(".")
    for key in parents:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ValueError(f"config key {dotted!r} does not address a section")
    node[leaf] = value


def build_train_config(args):
    from .training import TrainConfig

    raw: dict = {}
    if args.config:
        loaded = yaml.safe_load(Path(args.config).read_text())
        if loaded is not None:
            if not isinstance(loaded, dict):
                raise ValueError(f"config {args.config} must be a mapping")
            raw = loaded
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        dotted, value = item.split("=", 1)
        _apply_dotted(raw, dotted.strip(), value)

    flag_names = (
        "train_manifest", "val_manifest", "epochs", "lr", "batch_size", "grad_accum",
        "seed", "lambda_ce", "out_dir", "resume", "max_steps",
        "strict_determinism", "plateau_decay",
    )
    for name in flag_names:
        value = getattr(args, name, None)
        if value is not None:
            raw[name] = value

    model_cfg = ModelConfig.from_dict(raw.pop("model", {}) or {})
    stft_cfg = StftConfig(**(raw.pop("stft", {}) or {}))
    raw.pop("stage", None)  # the subcommand fixes the stage
    if "betas" in raw:
        raw["betas"] = tuple(raw["betas"])
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig(model=model_cfg, stft=stft_cfg, **raw)


def _cmd_simulate(args) -> int:
    from .simulator.generate import generate_dataset

    manifest = generate_dataset(
        args.corpus, args.out, args.num_clips, args.seed,
        args.min_sources, args.max_sources,
    )
    print(manifest)
    return 0


def _cmd_train(args) -> int:
    from .training import train_stage1

    result = train_stage1(build_train_config(args))
    print(result.best_ckpt)
    return 0


def _cmd_finetune(args) -> int:
    from .training import train_srt

    result = train_srt(build_train_config(args), args.ckpt)
    print(result.best_ckpt)
    return 0


def _cmd_separate(args) -> int:
    from .inference import separate

    payload = separate(
        args.ckpt, args.wav_in, args.out,
        allow_resample=args.allow_resample, mic_map=args.mic_map,
    )
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_evaluate(args) -> int:
    from .evaluation import evaluate

    report = evaluate(args.ckpt, args.manifest, args.counting, out_path=args.out)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_count(args) -> int:
    from .inference import count_file

    result = count_file(
        args.ckpt, args.wav_in, args.counting,
        allow_resample=args.allow_resample, mic_map=args.mic_map,
    )
    print(json.dumps({
        "predicted_count": result.predicted_count,
        "active_mask": result.active_mask,
        "per_track_class": result.per_track_class,
    }, indent=2))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "finetune": _cmd_finetune,
    "separate": _cmd_separate,
    "evaluate": _cmd_evaluate,
    "count": _cmd_count,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # runtime failures map to exit 2 by contract
        print(f"soundsep: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
