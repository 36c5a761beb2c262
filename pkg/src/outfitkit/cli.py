"""Command line entry points: data generation, training, indexing,
evaluation, and the HTTP service.

Commands print machine-readable JSON on stdout (one object per line) and
exit nonzero with a single diagnostic line on failure.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import logging
import socket
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .data import (
    SyntheticSpec,
    build_cir_queries,
    build_fitb_questions,
    generate_synthetic,
    load_dataset,
    load_fitb_questions,
    save_dataset,
    save_fitb_questions,
)
from .encoders import ItemEncoderConfig
from .errors import CheckpointError, ConfigError, OutfitKitError
from .evaluation import cp_eval, fitb_eval, recall_eval
from .index import (
    build_index,
    index_sizes,
    load_index,
    save_index,
    subspace_baseline_report,
)
from .model import ModelConfig
from .service import ServiceState, create_app
from .training import TrainConfig, finetune_cir, pretrain_cp

# fixture rng streams; training reserves 0/1 and 2**31..2**31+1
_FITB_STREAM = 2**31 + 2
_QUERY_STREAM = 2**31 + 3


def guarded(fn):
    """Turn package errors into one-line diagnostics with exit code 1."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (OutfitKitError, OSError) as e:
            raise SystemExit(f"error: {e}") from None
    return wrapper


def _read_json_file(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise SystemExit(f"error: config file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise SystemExit(f"error: malformed JSON in {p}: {e}") from None
    if not isinstance(obj, dict):
        raise SystemExit(f"error: {p} must contain a JSON object")
    return obj


def _merge_dataclass_dict(cls, base: dict, overrides: dict, what: str) -> dict:
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(overrides) - allowed)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {', '.join(unknown)}")
    base.update(overrides)
    return base


def _model_config(overrides: dict | None) -> ModelConfig:
    base = ModelConfig().to_dict()
    if overrides:
        overrides = dict(overrides)
        enc = base.pop("encoder")
        enc_over = overrides.pop("encoder", None) or {}
        _merge_dataclass_dict(ItemEncoderConfig, enc, enc_over, "encoder config")
        _merge_dataclass_dict(ModelConfig, base, overrides, "model config")
        base["encoder"] = enc
    cfg = ModelConfig.from_dict(base)
    cfg.validate()
    return cfg


def _train_config(overrides: dict, phase: str, flags: dict) -> TrainConfig:
    base = asdict(TrainConfig())
    _merge_dataclass_dict(TrainConfig, base, overrides, "train config")
    mapping = {
        "epochs": "epochs_cp" if phase == "cp" else "epochs_cir",
        "batch_size": "batch_size",
        "lr_initial": "lr_initial",
        "lr_halving_interval": "lr_halving_interval",
        "margin": "margin",
        "negatives": "negatives",
        "switch_fraction": "curriculum_switch_fraction",
        "seed": "seed",
        "use_all": "use_all",
        "use_hard": "use_hard",
        "squared_distance": "squared_distance",
        "freeze_candidates": "freeze_candidates",
        "freeze_item_encoders": "freeze_item_encoders",
    }
    for flag, key in mapping.items():
        value = flags.get(flag)
        if value is not None:
            base[key] = value
    if flags.get("grad_clip") is not None:
        # 0 means "no clipping"; TrainConfig models that as None
        base["grad_clip"] = flags["grad_clip"] if flags["grad_clip"] > 0 else None
    cfg = TrainConfig(**base)
    cfg.validate()
    return cfg


@click.group()
@click.option("--verbose", is_flag=True, default=False,
              help="INFO-level progress logs on stderr.")
def main(verbose):
    """Outfit compatibility scoring and wardrobe completion toolkit."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


# ---- data ----


@main.command("generate-synthetic")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--spec", "spec_path", type=click.Path(dir_okay=False), default=None,
              help="JSON file overriding catalog/outfit generation knobs.")
@guarded
def generate_synthetic_cmd(out_dir, seed, spec_path):
    """Write a seeded synthetic dataset directory (byte-reproducible)."""
    overrides = _read_json_file(spec_path) if spec_path else {}
    fields = _merge_dataclass_dict(SyntheticSpec, asdict(SyntheticSpec()),
                                   overrides, "synthetic spec")
    data = generate_synthetic(SyntheticSpec(**fields), seed=seed)
    save_dataset(data, out_dir)
    summary = {
        "out": str(out_dir), "seed": seed,
        "items": len(data.catalog.ids()),
        "outfits": {s: len(getattr(data, s)) for s in ("train", "valid", "test")},
    }
    for i, split in enumerate(("valid", "test")):
        rng = np.random.default_rng([seed, _FITB_STREAM, i])
        questions = build_fitb_questions(data.positives(split), data.catalog, rng)
        save_fitb_questions(questions, out_dir, split)
        summary[f"fitb_{split}"] = len(questions)
    click.echo(json.dumps(summary, sort_keys=True))


# ---- training ----


def _train_options(fn):
    opts = [
        click.option("--data", "data_dir", required=True,
                     type=click.Path(file_okay=False)),
        click.option("--out", "out_path", required=True,
                     type=click.Path(dir_okay=False),
                     help="Where the best-validation checkpoint is written."),
        click.option("--final-out", "final_out", default=None,
                     type=click.Path(dir_okay=False),
                     help="Also write the last-epoch checkpoint (resume point)."),
        click.option("--config", "config_path", default=None,
                     type=click.Path(dir_okay=False),
                     help='JSON file: {"model": {...}, "train": {...}}.'),
        click.option("--resume", "resume_path", default=None,
                     type=click.Path(dir_okay=False)),
        click.option("--stop-after", type=int, default=None,
                     help="Interrupt after N epochs without shrinking the schedule."),
        click.option("--epochs", type=int, default=None),
        click.option("--batch-size", type=int, default=None),
        click.option("--lr-initial", type=float, default=None),
        click.option("--lr-halving-interval", type=int, default=None),
        click.option("--margin", type=float, default=None),
        click.option("--negatives", type=int, default=None),
        click.option("--switch-fraction", type=float, default=None),
        click.option("--grad-clip", type=float, default=None,
                     help="Global-norm cap; 0 disables clipping."),
        click.option("--seed", type=int, default=None),
        click.option("--use-all/--no-use-all", "use_all", default=None),
        click.option("--use-hard/--no-use-hard", "use_hard", default=None),
        click.option("--squared-distance/--no-squared-distance",
                     "squared_distance", default=None),
        click.option("--freeze-candidates/--no-freeze-candidates",
                     "freeze_candidates", default=None),
        click.option("--freeze-item-encoders/--no-freeze-item-encoders",
                     "freeze_item_encoders", default=None),
        click.option("--quiet", is_flag=True, default=False,
                     help="Suppress per-epoch JSON progress lines."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _run_training(phase, data_dir, out_path, final_out, config_path,
                  resume_path, init_path, stop_after, quiet, flags):
    file_cfg = _read_json_file(config_path) if config_path else {}
    train_cfg = _train_config(file_cfg.get("train", {}), phase, flags)

    resume = load_checkpoint(resume_path) if resume_path else None
    init = load_checkpoint(init_path) if init_path else None
    # without an explicit model section, resume/init carry the architecture
    model_cfg = _model_config(file_cfg["model"]) if "model" in file_cfg else None
    if model_cfg is None and resume is None and init is None:
        model_cfg = _model_config(None)

    data = load_dataset(data_dir)
    progress = None if quiet else (
        lambda entry: click.echo(json.dumps(entry, sort_keys=True)))
    if phase == "cp":
        result = pretrain_cp(model_cfg, data, train_cfg, resume=resume,
                             stop_after=stop_after, on_epoch=progress)
    else:
        result = finetune_cir(model_cfg, data, train_cfg, init=init,
                              resume=resume, stop_after=stop_after,
                              on_epoch=progress)

    best = result.best if result.best is not None else result.final
    save_checkpoint(best, out_path)
    if final_out:
        save_checkpoint(result.final, final_out)
    click.echo(json.dumps({
        "saved": str(out_path), "phase": phase,
        "epochs_run": len(result.history),
        "best_epoch": best.epoch, "best_metric": best.best_metric,
    }, sort_keys=True))


@main.group("train")
def train_group():
    """Two-phase training: compatibility first, retrieval second."""


@train_group.command("cp")
@_train_options
@guarded
def train_cp_cmd(data_dir, out_path, final_out, config_path, resume_path,
                 stop_after, quiet, **flags):
    """Pretrain the scoring model on real-vs-corrupted outfits."""
    _run_training("cp", data_dir, out_path, final_out, config_path,
                  resume_path, None, stop_after, quiet, flags)


@train_group.command("cir")
@_train_options
@click.option("--init", "init_path", default=None,
              type=click.Path(dir_okay=False),
              help="Pretrained checkpoint whose trunk seeds fine-tuning.")
@guarded
def train_cir_cmd(data_dir, out_path, final_out, config_path, resume_path,
                  stop_after, quiet, init_path, **flags):
    """Fine-tune the retrieval head with set-wise ranking."""
    _run_training("cir", data_dir, out_path, final_out, config_path,
                  resume_path, init_path, stop_after, quiet, flags)


# ---- index ----


@main.command("build-index")
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@guarded
def build_index_cmd(ckpt_path, data_dir, out_path):
    """Embed every catalog item with a trained model and save the index."""
    ckpt = load_checkpoint(ckpt_path)
    data = load_dataset(data_dir)
    index = build_index(data.catalog, ckpt)
    save_index(index, out_path)
    click.echo(json.dumps({
        "out": str(out_path), "items": len(index), "dim": index.dim,
        "fingerprint": index.fingerprint, **index_sizes(index),
    }, sort_keys=True))


@main.command("index-report")
@click.option("--index", "index_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--categories", type=int, default=None,
              help="Override the category count in the size comparison.")
@guarded
def index_report_cmd(index_path, categories):
    """Report index storage cost against a per-category-copies layout."""
    index = load_index(index_path)
    report = {**index_sizes(index), **subspace_baseline_report(index, categories)}
    click.echo(json.dumps(report, sort_keys=True))


# ---- evaluation ----


def _eval_options(fn):
    opts = [
        click.option("--checkpoint", "ckpt_path", required=True,
                     type=click.Path(dir_okay=False)),
        click.option("--data", "data_dir", required=True,
                     type=click.Path(file_okay=False)),
        click.option("--split", type=click.Choice(["train", "valid", "test"]),
                     default="test", show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--report", "report_path", default=None,
                     type=click.Path(dir_okay=False),
                     help="Write the full per-example report as JSON."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _emit_report(report, report_path) -> None:
    click.echo(json.dumps({"task": report.task, "metrics": report.metrics},
                          sort_keys=True))
    if report_path:
        Path(report_path).write_text(report.to_json() + "\n")


@main.group("eval")
def eval_group():
    """Quality reports for trained checkpoints."""


@eval_group.command("cp")
@_eval_options
@guarded
def eval_cp_cmd(ckpt_path, data_dir, split, seed, report_path):
    """Score real vs corrupted outfits and report ranking quality."""
    model = restore_model(load_checkpoint(ckpt_path))
    data = load_dataset(data_dir)
    report = cp_eval(model, data.catalog, getattr(data, split), seed=seed)
    _emit_report(report, report_path)


@eval_group.command("fitb")
@_eval_options
@click.option("--mode", type=click.Choice(["cp", "cir", "both"]),
              default="both", show_default=True)
@guarded
def eval_fitb_cmd(ckpt_path, data_dir, split, seed, report_path, mode):
    """Answer held-out 4-way completion questions; both scorers by default."""
    model = restore_model(load_checkpoint(ckpt_path))
    data = load_dataset(data_dir)
    questions = load_fitb_questions(data_dir, split)
    modes = ("cp", "cir") if mode == "both" else (mode,)
    reports = {m: fitb_eval(model, data.catalog, questions, mode=m)
               for m in modes}
    click.echo(json.dumps({m: r.metrics for m, r in reports.items()},
                          sort_keys=True))
    if report_path:
        payload = {m: json.loads(r.to_json()) for m, r in reports.items()}
        Path(report_path).write_text(
            json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


@eval_group.command("cir")
@_eval_options
@click.option("--index", "index_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--ks", default="1,5,10,30", show_default=True,
              help="Comma-separated recall cutoffs.")
@guarded
def eval_cir_cmd(ckpt_path, data_dir, split, seed, report_path, index_path, ks):
    """Rank each held-out item among same-category candidates."""
    model = restore_model(load_checkpoint(ckpt_path))
    index = load_index(index_path)
    if index.fingerprint != model.fingerprint():
        raise CheckpointError(
            f"index {index_path} was not built from checkpoint {ckpt_path}")
    data = load_dataset(data_dir)
    try:
        cutoffs = tuple(int(x) for x in ks.split(","))
    except ValueError:
        raise ConfigError(
            f"--ks must be comma-separated integers, got {ks!r}") from None
    rng = np.random.default_rng([seed, _QUERY_STREAM])
    queries = build_cir_queries(data.positives(split), data.catalog, rng)
    report = recall_eval(model, data.catalog, index, queries, ks=cutoffs, seed=seed)
    _emit_report(report, report_path)


# ---- serving ----


@main.command("serve")
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--index", "index_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True,
              help="0 picks a free port; the bound port is printed either way.")
@guarded
def serve_cmd(ckpt_path, index_path, data_dir, host, port):
    """Serve scoring and completion over HTTP from a frozen snapshot."""
    import uvicorn

    model = restore_model(load_checkpoint(ckpt_path))
    index = load_index(index_path)
    data = load_dataset(data_dir)
    state = ServiceState(model, index, data.catalog)
    if not state.verify():
        raise CheckpointError(
            f"index {index_path} was not built from checkpoint {ckpt_path}")
    app = create_app(state)

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    bound = sock.getsockname()[1]
    click.echo(f"listening on http://{host}:{bound}")
    sys.stdout.flush()
    config = uvicorn.Config(app, host=host, port=bound,
                            log_level="warning", access_log=False)
    uvicorn.Server(config).run(sockets=[sock])


if __name__ == "__main__":
    main()
