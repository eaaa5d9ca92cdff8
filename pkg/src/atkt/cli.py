"""Command line interface: prepare | train | eval | sweep | trace.

Config files are flat ``key = value`` text with ``#`` comments. Unknown keys
are hard errors (a typo in a hyperparameter name must not silently run with
defaults). Exit codes: 0 success, 1 usage/config error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import model, svg
from .data import (
    DataFormatError,
    Dataset,
    load_dataset,
    make_folds,
    segment_dataset,
    serialize_triple_line,
)
from .linalg import ShapeError
from .metrics import DegenerateLabelsError, PredictionLog
from .model import CheckpointError, load_checkpoint, save_checkpoint
from .training import (
    SWEEP_BETAS,
    SWEEP_EPSILONS,
    DivergenceError,
    TrainConfig,
    evaluate,
    prepare_split_sequences,
    sweep,
    train,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    """Bad config file contents."""


class DataError(Exception):
    """Requested records do not exist in the data or checkpoint."""


class UsageError(Exception):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1, not argparse's 2
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# Config files.
# ---------------------------------------------------------------------------


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_optional(parser):
    def inner(raw: str):
        return None if raw.lower() in ("none", "off") else parser(raw)

    return inner


_FIELD_PARSERS = {
    "skill_dim": int,
    "resp_dim": int,
    "hidden_dim": int,
    "attn_dim": int,
    "batch_size": int,
    "lr": float,
    "lr_decay": float,
    "lr_decay_every": int,
    "max_epochs": int,
    "patience": _parse_optional(int),
    "max_seq_len": int,
    "epsilon": _parse_optional(float),
    "beta": float,
    "attention": _parse_bool,
    "attention_window": str,
    "fgsm_scope": str,
    "strict_truncate": _parse_bool,
    "seed": int,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_eps": float,
    "grad_clip": _parse_optional(float),
}

assert set(_FIELD_PARSERS) == {f.name for f in dataclass_fields(TrainConfig)}


def parse_config_text(text: str) -> TrainConfig:
    """Parse flat key=value config text; unknown keys are errors."""
    values = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value, got {raw_line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _FIELD_PARSERS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _FIELD_PARSERS[key](raw_value)
        except ValueError as exc:
            raise ConfigError(f"config line {lineno}: bad value for {key!r}: {exc}") from None
    config = TrainConfig(**values)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config


def load_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_from_echo(echo: dict) -> TrainConfig:
    known = {f.name for f in dataclass_fields(TrainConfig)}
    return TrainConfig.from_dict({k: v for k, v in echo.items() if k in known})


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------


def _read_text(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def cmd_prepare(args) -> int:
    from .data import parse_triple_line

    text = _read_text(args.data)
    if not text.strip():
        raise DataFormatError(1, "empty input file")
    dataset = parse_triple_line(text)
    print(
        f"{len(dataset.sequences):,} students, {dataset.num_skills:,} KSs, "
        f"{dataset.num_responses:,} responses"
    )
    normalized = segment_dataset(dataset, max_len=args.max_seq_len, strict=args.strict_truncate)
    if len(normalized.sequences) != len(dataset.sequences):
        print(
            f"segmented into {len(normalized.sequences):,} sequences "
            f"(max length {args.max_seq_len})"
        )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(serialize_triple_line(normalized))
    return EXIT_OK


def _check_fold(fold: int, num_folds: int) -> int:
    if not 0 <= fold < num_folds:
        raise UsageError(f"fold must be in [0, {num_folds}), got {fold}")
    return fold


def _apply_overrides(config: TrainConfig, args) -> TrainConfig:
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "no_attention", False):
        config.attention = False
    config.validate()
    return config


def _load_for_checkpoint(data_path, params: model.ModelParams) -> Dataset:
    dataset = load_dataset(data_path)
    if dataset.num_skills > params.num_skills:
        raise CheckpointError(
            f"dataset contains {dataset.num_skills} skills but the checkpoint "
            f"was trained with {params.num_skills}"
        )
    return Dataset(sequences=dataset.sequences, num_skills=params.num_skills)


def cmd_train(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    dataset = load_dataset(args.data)
    folds = make_folds(dataset, config.seed)
    split = folds[_check_fold(args.fold, len(folds))]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = train(config, dataset, split)
    except DivergenceError as exc:
        if exc.last_good is not None:
            dump = out / "diverged_last_good.json"
            save_checkpoint(dump, exc.last_good, dict(config.to_dict(), fold=args.fold),
                            timestamp=not args.no_timestamp)
            logger.error("training diverged at epoch %d; last good state in %s", exc.epoch, dump)
        raise
    echo = dict(config.to_dict(), fold=args.fold)
    save_checkpoint(out / "checkpoint.json", result.params, echo, timestamp=not args.no_timestamp)
    with open(out / "run.csv", "w", encoding="utf-8") as fh:
        result.record.write_csv(fh)
    curves = {
        "train_loss": [e.train_loss for e in result.record.epochs],
        "val_loss": [e.val_loss for e in result.record.epochs],
    }
    with open(out / "loss_curve.svg", "w", encoding="utf-8") as fh:
        fh.write(svg.line_chart(curves, title=f"loss per epoch (fold {args.fold})"))
    print(
        f"fold={args.fold} epochs_run={len(result.record.epochs)} "
        f"best_epoch={result.record.best_epoch} "
        f"best_val_auc={result.record.best_val_auc:.6f} "
        f"best_val_loss={result.record.best_val_loss:.6f}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    params, echo = load_checkpoint(args.checkpoint)
    config = config_from_echo(echo)
    dataset = _load_for_checkpoint(args.data, params)
    folds = make_folds(dataset, config.seed)
    if args.all_folds:
        fold_ids = range(len(folds))
    else:
        wanted = args.fold if args.fold is not None else echo.get("fold", 0)
        fold_ids = [_check_fold(int(wanted), len(folds))]
    combined = PredictionLog()
    scores = []
    for k in fold_ids:
        split = folds[k]
        indices = getattr(split, args.split)
        seqs = prepare_split_sequences(dataset, indices, config)
        _, fold_auc, log = evaluate(params, seqs, config, dataset.num_skills)
        scores.append(fold_auc)
        combined.student_ids.extend(log.student_ids)
        combined.steps.extend(log.steps)
        combined.skills.extend(log.skills)
        combined.probs.extend(log.probs)
        combined.labels.extend(log.labels)
        print(f"fold {k} {args.split} AUC {fold_auc:.6f}")
    if args.all_folds:
        print(f"AUC {np.mean(scores):.6f} ± {np.std(scores):.6f} across {len(scores)} folds")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            combined.write_csv(fh)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    dataset = load_dataset(args.data)
    folds = make_folds(dataset, config.seed)
    if args.folds:
        wanted = [_check_fold(int(tok), len(folds)) for tok in args.folds.split(",")]
        folds = [folds[k] for k in wanted]
    epsilons = [float(tok) for tok in args.epsilons.split(",")]
    betas = [float(tok) for tok in args.betas.split(",")]
    result = sweep(config, dataset, folds, epsilons=epsilons, betas=betas)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", encoding="utf-8") as fh:
        result.write_csv(fh)
    best_eps, best_beta = result.best
    best_value = result.grid[result.epsilons.index(best_eps), result.betas.index(best_beta)]
    print(f"best: epsilon={best_eps:g} beta={best_beta:g} mean_val_auc={best_value:.6f}")
    return EXIT_OK


def _pick_sequence(dataset: Dataset, args):
    if args.student is not None:
        for seq in dataset.sequences:
            if seq.student_id == args.student:
                return seq
        raise DataError(f"student {args.student!r} not found")
    try:
        return dataset.sequences[args.index]
    except IndexError:
        raise DataError(f"sequence index {args.index} out of range") from None


def _default_tracked(seq, limit: int = 5) -> list[int]:
    values, counts = np.unique(seq.skills, return_counts=True)
    order = np.lexsort((values, -counts))
    return [int(values[i]) for i in order[:limit]]


def cmd_trace(args) -> int:
    from .data import make_batches

    params, echo = load_checkpoint(args.checkpoint)
    config = config_from_echo(echo)
    dataset = _load_for_checkpoint(args.data, params)
    seq = _pick_sequence(dataset, args)
    if args.skills:
        tracked = [int(tok) for tok in args.skills.split(",")]
        for s in tracked:
            if not 0 <= s < params.num_skills:
                raise DataError(f"unknown skill id {s}")
    else:
        tracked = _default_tracked(seq)
    batch = make_batches([seq], dataset.num_skills, batch_size=1, rng=None)[0]
    trace, _ = model.forward(
        params, batch, attention_enabled=config.attention, attention_window=config.attention_window
    )
    steps = len(seq)
    # Row 0 is the untouched initial state (zero composite); row t the state
    # after the first t interactions, i.e. what the model believes just
    # before seeing the outcome of exercise t+1.
    initial, _ = model.predict_step(params, np.zeros(2 * params.hidden_dim), tracked[0])
    grid = np.empty((steps, len(tracked)))
    grid[0] = initial[tracked]
    for t in range(1, steps):
        grid[t] = trace.probs[t - 1, 0, tracked]
    attempts = [(int(seq.skills[t]), int(seq.responses[t])) for t in range(steps)]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.csv", "w", encoding="utf-8") as fh:
        import csv as _csv

        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["step"] + [f"skill_{s}" for s in tracked] + ["attempt_skill", "attempt_correct"])
        for t in range(steps):
            writer.writerow([t] + [repr(float(v)) for v in grid[t]] + [attempts[t][0], attempts[t][1]])
    labels = [f"skill {s}" for s in tracked]
    with open(out / "trace.svg", "w", encoding="utf-8") as fh:
        fh.write(svg.mastery_heatmap(grid, labels, attempts, tracked))
    with open(out / "mastery_change.csv", "w", encoding="utf-8") as fh:
        import csv as _csv

        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["skill", "initial", "final"])
        for i, s in enumerate(tracked):
            writer.writerow([s, repr(float(grid[0, i])), repr(float(grid[-1, i]))])
    with open(out / "mastery_change.svg", "w", encoding="utf-8") as fh:
        fh.write(
            svg.bar_pairs(labels, list(grid[0]), list(grid[-1]), title="mastery: first vs last step")
        )
    print(f"traced {seq.student_id}: {steps} steps x {len(tracked)} skills -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point.
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="atkt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="validate, filter and normalize a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-seq-len", type=int, default=500)
    p.add_argument("--strict-truncate", action="store_true")
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("train", help="train one fold and write run artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fold", type=int, default=None)
    p.add_argument("--all-folds", action="store_true")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", default=None, help="write the prediction log CSV here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="train the epsilon x beta grid")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epsilons", default=",".join(f"{e:g}" for e in SWEEP_EPSILONS))
    p.add_argument("--betas", default=",".join(f"{b:g}" for b in SWEEP_BETAS))
    p.add_argument("--folds", default=None, help="comma list of fold indices (default: all)")
    p.add_argument("--no-attention", action="store_true")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("trace", help="export a mastery trace as CSV + SVG")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--student", default=None)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--skills", default=None, help="comma list of skill ids to track")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_trace)
    return parser


def main(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DegenerateLabelsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFormatError, CheckpointError, ShapeError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
