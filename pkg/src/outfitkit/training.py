"""Two-phase trainer.

Phase one learns compatibility: balanced batches of real outfits and
category-preserving corruptions, scored by the outfit head and pushed through
the focal loss. Phase two fine-tunes for retrieval with the set-wise ranking
loss, drawing negatives under the two-stage curriculum and validating on
fill-in-the-blank accuracy.

Both phases share the optimizer (Adam), the halving LR schedule, global-norm
gradient clipping, and resumable checkpoints. Every random draw flows from
per-epoch generators derived as (seed, phase, epoch), so a resumed run
replays the exact stream a fresh run would have seen.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, restore_model, snapshot
from .data import DatasetSplit, Outfit, build_fitb_questions
from .errors import CheckpointError, ConfigError, InputError, TrainingDiverged
from .evaluation import _encode_union, cp_eval, fitb_eval
from .losses import focal_loss, setwise_ranking_loss_batch
from .model import ModelConfig, OutfitModel, TargetSpec, pack_features
from .nn import no_grad
from .sampling import (
    make_cir_instance,
    make_negative_outfit,
    sample_negatives,
    stage_for_epoch,
)

log = logging.getLogger(__name__)

_PHASE_CODE = {"cp": 0, "cir": 1}
# Validation fixtures get their own streams, far above any epoch index.
_VALIDATION_STREAM = 2**31


@dataclass
class TrainConfig:
    batch_size: int = 50
    lr_initial: float = 1e-3        # desk-scale default; see full_scale_train_config
    lr_halving_interval: int = 10   # epochs between LR halvings
    epochs_cp: int = 10
    epochs_cir: int = 10
    margin: float = 2.0
    negatives: int = 10
    curriculum_switch_fraction: float = 0.5
    seed: int = 0
    grad_clip: float | None = 5.0   # global norm; None disables
    use_all: bool = True            # average-over-negatives ranking term
    use_hard: bool = True           # hardest-negative ranking term
    squared_distance: bool = False
    freeze_candidates: bool = False     # stop gradients into candidate embeddings
    freeze_item_encoders: bool = False  # leave encoders at random init

    def validate(self) -> None:
        positive = {
            "batch_size": self.batch_size, "lr_initial": self.lr_initial,
            "lr_halving_interval": self.lr_halving_interval,
            "epochs_cp": self.epochs_cp, "epochs_cir": self.epochs_cir,
            "margin": self.margin, "negatives": self.negatives,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 for balanced batches")
        if not 0.0 <= self.curriculum_switch_fraction <= 1.0:
            raise ConfigError("curriculum_switch_fraction must lie in [0, 1]")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive or None")
        if not (self.use_all or self.use_hard):
            raise ConfigError("at least one ranking term must be enabled")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def full_scale_train_config(**overrides) -> TrainConfig:
    """Low learning rate for fine-tuning on top of big pretrained encoders."""
    overrides.setdefault("lr_initial", 1e-5)
    return TrainConfig(**overrides)


def lr_for_epoch(config: TrainConfig, epoch: int) -> float:
    """Halve the initial rate once per interval: lr0 * 0.5^(epoch // interval)."""
    return config.lr_initial * 0.5 ** (epoch // config.lr_halving_interval)


class Adam:
    """Adam over named parameters. State round-trips through checkpoints so a
    resumed run continues with identical moment estimates."""

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, named_params):
        self.params = list(named_params)
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self, lr: float) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue        # parameter outside this phase's graph
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p.data = p.data - lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state_dict(self) -> dict:
        return {"step": self.step_count, "m": self.m, "v": self.v}

    def load_state_dict(self, state: dict) -> None:
        self.step_count = int(state["step"])
        for name in self.m:
            if name in state["m"]:
                self.m[name] = state["m"][name].copy()
                self.v[name] = state["v"][name].copy()


def clip_gradients(params, max_norm: float | None) -> float:
    """Scale all gradients so their global norm is at most max_norm.
    Returns the pre-clip norm."""
    grads = [p.grad for _, p in params if p.grad is not None]
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm is not None and total > max_norm:
        scale = max_norm / total
        for _, p in params:
            if p.grad is not None:
                p.grad = p.grad * scale     # rebind: grads may be shared views
    return total


@dataclass
class TrainResult:
    final: Checkpoint
    best: Checkpoint | None     # None when no epoch beat the incoming best
    history: list               # one dict per epoch, JSON-serializable


def _trainable(model: OutfitModel, config: TrainConfig):
    params = model.parameters()
    if config.freeze_item_encoders:
        params = [(n, p) for n, p in params if not n.startswith("item_encoder")]
    return params


def _step(opt: Adam, loss, lr: float, config: TrainConfig, tag: str) -> float:
    value = float(loss.data)
    if not np.isfinite(value):
        msg = (f"{tag}: loss is {value} at optimizer step {opt.step_count + 1} "
               f"(lr={lr:g}); aborting")
        log.error(msg)
        raise TrainingDiverged(msg)
    opt.zero_grad()
    loss.backward()
    norm = clip_gradients(opt.params, config.grad_clip)
    if not np.isfinite(norm):
        msg = (f"{tag}: gradient norm is {norm} at optimizer step "
               f"{opt.step_count + 1} (loss={value:g}, lr={lr:g}); aborting")
        log.error(msg)
        raise TrainingDiverged(msg)
    opt.step(lr)
    return value


def _all_positive_sets(data: DatasetSplit) -> set:
    return {o.as_set() for split in ("train", "valid", "test")
            for o in data.positives(split)}


def _cp_epoch(model, opt, data, config, lr, rng, positive_sets, tag) -> float:
    catalog = data.catalog
    positives = data.positives("train")
    if not positives:
        raise InputError("no positive training outfits")
    order = rng.permutation(len(positives))
    half = max(1, config.batch_size // 2)
    losses = []
    for lo in range(0, len(order), half):
        batch, labels = [], []
        for i in order[lo:lo + half]:
            source = positives[i]
            corrupted = make_negative_outfit(source, catalog, rng,
                                             positive_sets=positive_sets)
            batch.append(source.items)
            labels.append(1.0)
            batch.append(corrupted.items)
            labels.append(0.0)
        feats, idx_lists = _encode_union(model, catalog, batch)
        padded, lengths = pack_features(feats, idx_lists)
        scores = model.cp_forward_batch(padded, lengths)
        loss = focal_loss(scores, np.asarray(labels))
        losses.append(_step(opt, loss, lr, config, tag))
    return float(np.mean(losses))


def _cir_epoch(model, opt, data, config, lr, rng, stage, tag) -> float:
    catalog = data.catalog
    positives = data.positives("train")
    order = rng.permutation(len(positives))
    instances = []
    for i in order:
        inst = make_cir_instance(positives[i], catalog, rng)
        if inst is None:
            continue
        partial, positive = inst
        negs = sample_negatives(positive, partial, catalog, stage,
                                config.negatives, rng)
        instances.append((partial, positive, negs))
    if not instances:
        raise InputError("no usable retrieval training instances")
    dim = model.config.model_dim
    losses = []
    for lo in range(0, len(instances), config.batch_size):
        chunk = instances[lo:lo + config.batch_size]
        id_lists = [[it.item_id for it in partial] for partial, _, _ in chunk]
        feats, idx_lists = _encode_union(model, catalog, id_lists)
        padded, lengths = pack_features(feats, idx_lists)
        specs = [TargetSpec("category", pos.fine_category) for _, pos, _ in chunk]
        target = model.cir_forward_batch(padded, lengths, specs)
        pos_items = [pos for _, pos, _ in chunk]
        neg_items = [n for _, _, negs in chunk for n in negs]
        if config.freeze_candidates:
            with no_grad():
                f_pos = model.item_encoder.encode_items(pos_items)
                f_negs = model.item_encoder.encode_items(neg_items)
        else:
            f_pos = model.item_encoder.encode_items(pos_items)
            f_negs = model.item_encoder.encode_items(neg_items)
        loss = setwise_ranking_loss_batch(
            target, f_pos, f_negs.reshape(len(chunk), config.negatives, dim),
            margin=config.margin, squared=config.squared_distance,
            use_all=config.use_all, use_hard=config.use_hard)
        losses.append(_step(opt, loss, lr, config, tag))
    return float(np.mean(losses))


def _validation_outfits(data: DatasetSplit, config: TrainConfig) -> list:
    """Labeled validation outfits; datasets without frozen negatives get one
    deterministic corruption per positive so the AUC is stable across epochs."""
    labels = {o.label for o in data.valid if o.label is not None}
    if labels >= {0, 1}:
        return [o for o in data.valid if o.label is not None]
    rng = np.random.default_rng([config.seed, _VALIDATION_STREAM])
    positive_sets = _all_positive_sets(data)
    out = []
    for o in data.positives("valid"):
        out.append(o if o.label == 1 else Outfit(o.outfit_id, list(o.items), 1))
        out.append(make_negative_outfit(o, data.catalog, rng,
                                        positive_sets=positive_sets))
    return out


def pretrain_cp(model_config: ModelConfig | None, data: DatasetSplit,
                config: TrainConfig, resume: Checkpoint | None = None,
                stop_after: int | None = None, on_epoch=None) -> TrainResult:
    """Compatibility pre-training. Tracks the best validation AUC; strict
    improvement only, so ties keep the earlier snapshot. stop_after ends the
    run early (an interruption, not a schedule change)."""
    config.validate()
    data.validate()
    code = _PHASE_CODE["cp"]
    if resume is not None:
        if resume.phase != "cp":
            raise CheckpointError(
                f"cannot resume compatibility training from a {resume.phase!r} checkpoint")
        if model_config is not None and model_config.to_dict() != resume.config.to_dict():
            raise ConfigError("resume checkpoint carries a different model config")
        model = restore_model(resume)
        start_epoch = resume.epoch
        best_metric = resume.best_metric
    else:
        if model_config is None:
            raise ConfigError("a model config is required when not resuming")
        model = OutfitModel(model_config, np.random.default_rng([config.seed, code]))
        start_epoch = 0
        best_metric = float("-inf")

    opt = Adam(_trainable(model, config))
    if resume is not None and resume.optimizer:
        opt.load_state_dict(resume.optimizer)

    positive_sets = _all_positive_sets(data)
    val_outfits = _validation_outfits(data, config)
    history = []
    best = None
    completed = start_epoch
    for epoch in range(start_epoch, config.epochs_cp):
        lr = lr_for_epoch(config, epoch)
        rng = np.random.default_rng([config.seed, code, epoch])
        mean_loss = _cp_epoch(model, opt, data, config, lr, rng, positive_sets,
                              tag=f"cp epoch {epoch}")
        val_auc = cp_eval(model, data.catalog, val_outfits).metrics["auc"]
        entry = {"phase": "cp", "epoch": epoch, "loss": mean_loss,
                 "val_auc": val_auc, "lr": lr}
        history.append(entry)
        log.info("cp epoch %d: loss %.5f val_auc %.4f lr %g",
                 epoch, mean_loss, val_auc, lr)
        if on_epoch is not None:
            on_epoch(entry)
        if val_auc > best_metric:
            best_metric = val_auc
            best = snapshot(model, "cp", epoch + 1, best_metric,
                            config.to_dict(), opt.state_dict())
        completed = epoch + 1
        if stop_after is not None and completed >= stop_after:
            break
    final = snapshot(model, "cp", completed, best_metric,
                     config.to_dict(), opt.state_dict())
    return TrainResult(final=final, best=best, history=history)


def _transfer_trunk(model: OutfitModel, init: Checkpoint) -> None:
    """Copy everything but the task heads from the pretraining checkpoint,
    then prove by hash that fine-tuning starts from the pretrained trunk."""
    heads = ("cp_head", "cir_head")
    source = dict(init.params)
    state = []
    for name, arr in model.state_arrays():
        if name.startswith(heads):
            state.append((name, arr))
        elif name in source:
            state.append((name, source[name]))
        else:
            raise CheckpointError(f"init checkpoint is missing parameter {name!r}")
    model.load_state_arrays(state)
    if model.trunk_fingerprint() != restore_model(init).trunk_fingerprint():
        raise CheckpointError(
            "trunk hash mismatch after transfer: fine-tuning would not start "
            "from the pretrained weights")


def finetune_cir(model_config: ModelConfig | None, data: DatasetSplit,
                 config: TrainConfig, init: Checkpoint | None = None,
                 resume: Checkpoint | None = None, stop_after: int | None = None,
                 on_epoch=None) -> TrainResult:
    """Retrieval fine-tuning, from scratch or from a pretraining checkpoint.
    The retrieval head always starts fresh; the compatibility head is left at
    its random init and receives no gradients here. Best tracked by
    fill-in-the-blank accuracy on held-one-out validation questions."""
    config.validate()
    data.validate()
    code = _PHASE_CODE["cir"]
    if resume is not None:
        if resume.phase != "cir":
            raise CheckpointError(
                f"cannot resume retrieval training from a {resume.phase!r} checkpoint")
        model = restore_model(resume)
        start_epoch = resume.epoch
        best_metric = resume.best_metric
    else:
        if init is not None:
            if model_config is not None and model_config.to_dict() != init.config.to_dict():
                raise ConfigError("init checkpoint carries a different model config")
            model_config = init.config
        if model_config is None:
            raise ConfigError("either a model config or an init checkpoint is required")
        model = OutfitModel(model_config, np.random.default_rng([config.seed, code]))
        if init is not None:
            _transfer_trunk(model, init)
        start_epoch = 0
        best_metric = float("-inf")

    opt = Adam(_trainable(model, config))
    if resume is not None and resume.optimizer:
        opt.load_state_dict(resume.optimizer)

    vrng = np.random.default_rng([config.seed, _VALIDATION_STREAM + 1])
    val_questions = build_fitb_questions(
        data.positives("valid"), data.catalog, vrng,
        wrong_style_distractors=False)
    history = []
    best = None
    completed = start_epoch
    for epoch in range(start_epoch, config.epochs_cir):
        lr = lr_for_epoch(config, epoch)
        stage = stage_for_epoch(epoch, config.epochs_cir,
                                config.curriculum_switch_fraction)
        rng = np.random.default_rng([config.seed, code, epoch])
        mean_loss = _cir_epoch(model, opt, data, config, lr, rng, stage,
                               tag=f"cir epoch {epoch}")
        val_fitb = (fitb_eval(model, data.catalog, val_questions).metrics["accuracy"]
                    if val_questions else 0.0)
        entry = {"phase": "cir", "epoch": epoch, "loss": mean_loss,
                 "val_fitb": val_fitb, "lr": lr, "stage": stage.value}
        history.append(entry)
        log.info("cir epoch %d (%s): loss %.5f val_fitb %.4f lr %g",
                 epoch, stage.value, mean_loss, val_fitb, lr)
        if on_epoch is not None:
            on_epoch(entry)
        if val_fitb > best_metric:
            best_metric = val_fitb
            best = snapshot(model, "cir", epoch + 1, best_metric,
                            config.to_dict(), opt.state_dict())
        completed = epoch + 1
        if stop_after is not None and completed >= stop_after:
            break
    final = snapshot(model, "cir", completed, best_metric,
                     config.to_dict(), opt.state_dict())
    return TrainResult(final=final, best=best, history=history)
