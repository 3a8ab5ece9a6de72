"""Vendor/client source-free training wrappers operating on mixup domains.

The vendor minimizes smoothed cross-entropy on the source-mixup dataset. The
client adapts the shipped backbone on the target-mixup dataset with an
information-maximization objective (mean prediction entropy down, batch
diversity up) plus cross-entropy against two-round nearest-centroid pseudo
labels, then finetunes briefly on the original target data so inference
needs no mixup. Target labels are never readable here: target-role datasets
carry none, and smuggling them in raises a quarantine error.
"""

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    MissingLabelsError,
    QuarantineError,
    RoleError,
)
from .genericdomain import MixupConfig, build_mixup_dataset
from .numerics import autodiff as ad
from .numerics.nn import (
    GradientRecord,
    MlpSpec,
    ModelBundle,
    forward,
    grads_from_nodes,
    init_model,
    mlp_graph,
    param_nodes,
)
from .numerics.optim import OptimizerConfig, init_state, optimizer_step
from .numerics.rng import substream, substream_seed
from .synthdata import DomainDataset, DomainRole


@dataclass(frozen=True)
class VendorConfig:
    epochs: int = 40
    batch_size: int = 32
    optimizer: OptimizerConfig = OptimizerConfig(kind="adam", lr=1e-3)
    label_smoothing: float = 0.1
    mixup: Optional[MixupConfig] = None
    backbone_hidden: tuple = (64,)
    feat_dim: int = 32
    activation: str = "relu"
    source_acc_floor: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label smoothing must be in [0, 1), got {self.label_smoothing}")


@dataclass(frozen=True)
class ClientConfig:
    epochs: int = 30
    batch_size: int = 32
    optimizer: OptimizerConfig = OptimizerConfig(kind="adam", lr=1e-3)
    mixup: Optional[MixupConfig] = None
    refresh_interval: int = 1
    w_ent: float = 1.0
    w_div: float = 1.0
    w_pl: float = 0.3
    freeze_classifier: bool = True
    finetune_fraction: float = 0.1
    finetune_steps: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("epochs and batch_size must be positive")
        if self.refresh_interval <= 0:
            raise ConfigError("refresh_interval must be positive")
        if self.finetune_fraction < 0:
            raise ConfigError("finetune_fraction must be >= 0")


@dataclass
class TrainLogRow:
    epoch: int
    loss_total: float
    loss_ent: float = 0.0
    loss_div: float = 0.0
    loss_pl: float = 0.0
    src_acc: float = float("nan")
    tgt_acc: float = float("nan")


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    wall_time: float = 0.0
    notes: list = field(default_factory=list)

    CSV_HEADER = "epoch,loss_total,loss_ent,loss_div,loss_pl,src_acc,tgt_acc"

    def to_csv(self):
        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.epoch},{r.loss_total:.6f},{r.loss_ent:.6f},{r.loss_div:.6f},"
                f"{r.loss_pl:.6f},{r.src_acc:.6f},{r.tgt_acc:.6f}"
            )
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _mixup_active(mixup):
    return mixup is not None and mixup.lam > 0.0


def evaluate(model, dataset, labels=None):
    """Top-1 accuracy on an eval-labeled dataset."""
    if labels is None:
        labels = dataset.labels
    if labels is None:
        raise MissingLabelsError("evaluate needs labels (dataset labels or an eval sidecar)")
    labels = np.asarray(labels)
    if len(labels) != len(dataset):
        raise DimensionError("eval labels misaligned", labels.shape, (len(dataset),))
    _, logits = forward(model, dataset.flat_payloads())
    return float((logits.argmax(axis=1) == labels).mean())


def _build_model(input_dim, class_count, cfg):
    widths = (input_dim,) + tuple(cfg.backbone_hidden) + (cfg.feat_dim,)
    acts = (cfg.activation,) * (len(widths) - 2)
    backbone = MlpSpec(widths, acts)
    classifier = MlpSpec((cfg.feat_dim, class_count))
    return init_model(backbone, classifier, substream(cfg.seed, "vendor-init"))


def _apply_update(model, grads, opt_state, opt_cfg, train_classifier=True):
    params = model.all_params()
    all_grads = grads.all_grads()
    if not train_classifier:
        nb = len(model.backbone_params)
        params = params[:nb]
        all_grads = all_grads[:nb]
    new_params, opt_state = optimizer_step(params, all_grads, opt_state, opt_cfg)
    nb = len(model.backbone_params)
    if train_classifier:
        model.backbone_params = new_params[:nb]
        model.classifier_params = new_params[nb:]
    else:
        model.backbone_params = new_params
    return opt_state


def _supervised_grads(model, batch, labels, smoothing, producer=None, aug_seed=0):
    b_nodes, c_nodes = param_nodes(model)
    if producer is None:
        x = ad.constant(batch, op="batch")
        z = mlp_graph(model.backbone, b_nodes, x)
    else:
        z = producer.mixup_graph(model.backbone, b_nodes, batch, aug_seed)
    logits = mlp_graph(model.classifier, c_nodes, z)
    loss = ad.cross_entropy(logits, labels, smoothing)
    ad.backward(loss)
    return GradientRecord(float(loss.value), grads_from_nodes(b_nodes), grads_from_nodes(c_nodes))


def vendor_train(dataset, cfg, eval_probe=None):
    """Train backbone + classifier on the source-mixup dataset."""
    if dataset.labels is None:
        raise RoleError("vendor training needs a labeled source dataset")
    if dataset.role not in (DomainRole.SOURCE, DomainRole.SOURCE_MIXUP):
        raise RoleError(f"vendor training expects source-role data, got '{dataset.role.value}'")
    started = time.perf_counter()
    model = _build_model(dataset.payload_kind.flat_dim, dataset.class_count, cfg)

    producer = None
    train_ds = dataset
    if _mixup_active(cfg.mixup):
        if cfg.mixup.mode == "edge":
            train_ds = build_mixup_dataset(dataset, cfg.mixup)
        else:
            producer = build_mixup_dataset(dataset, cfg.mixup, model)

    x = train_ds.flat_payloads() if producer is None else None
    raw = train_ds.payloads
    y = train_ds.labels
    n = len(train_ds)
    opt_state = init_state(model.all_params(), cfg.optimizer)
    log = TrainLog()
    for epoch in range(cfg.epochs):
        rng = substream(cfg.seed, "vendor-shuffle", epoch)
        losses = []
        for step, idx in enumerate(_batches(n, cfg.batch_size, rng)):
            batch = raw[idx] if producer is not None else x[idx]
            rec = _supervised_grads(
                model,
                batch,
                y[idx],
                cfg.label_smoothing,
                producer=producer,
                aug_seed=substream_seed(cfg.seed, "vendor-aug", epoch, step),
            )
            opt_state = _apply_update(model, rec, opt_state, cfg.optimizer)
            losses.append(rec.loss)
        src_acc = evaluate(model, dataset, dataset.labels)
        tgt_acc = evaluate(model, *eval_probe) if eval_probe is not None else float("nan")
        log.rows.append(TrainLogRow(epoch, float(np.mean(losses)), src_acc=src_acc, tgt_acc=tgt_acc))
    if log.rows and log.rows[-1].src_acc < cfg.source_acc_floor:
        msg = (
            f"vendor model reached source accuracy {log.rows[-1].src_acc:.3f}"
            f" below the configured floor {cfg.source_acc_floor:.3f}"
        )
        log.notes.append(msg)
        warnings.warn(msg, stacklevel=2)
    log.wall_time = time.perf_counter() - started
    return model, log


def pseudo_label_centroids(features, probabilities):
    """Two-round nearest-centroid pseudo labels (cosine distance).

    Round 1 weights features by predicted probabilities; round 2 recomputes
    centroids from the round-1 hard assignment. A class that receives no
    round-1 labels keeps its round-1 centroid. Exact distance ties resolve to
    the lowest class index.
    """
    features = np.asarray(features, dtype=np.float64)
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if features.ndim != 2 or probabilities.ndim != 2 or len(features) != len(probabilities):
        raise DimensionError("features/probabilities misaligned", features.shape, probabilities.shape)
    eps = 1e-12

    def nearest(centroids):
        f_norm = np.linalg.norm(features, axis=1, keepdims=True)
        c_norm = np.linalg.norm(centroids, axis=1, keepdims=True)
        cosine = (features @ centroids.T) / (f_norm * c_norm.T + eps)
        return np.argmin(1.0 - cosine, axis=1)

    weight_sums = probabilities.sum(axis=0)
    centroids = (probabilities.T @ features) / (weight_sums[:, None] + eps)
    labels = nearest(centroids)

    round2 = centroids.copy()
    for cls in range(probabilities.shape[1]):
        members = labels == cls
        if members.any():
            round2[cls] = features[members].mean(axis=0)
    return nearest(round2)


def _client_losses(model, b_nodes, c_nodes, batch, pseudo, cfg, producer, aug_seed):
    if producer is None:
        x = ad.constant(batch, op="batch")
        z = mlp_graph(model.backbone, b_nodes, x)
    else:
        z = producer.mixup_graph(model.backbone, b_nodes, batch, aug_seed)
    logits = mlp_graph(model.classifier, c_nodes, z)
    ent = ad.entropy_mean(logits)
    div = ad.diversity(logits)
    pl = ad.cross_entropy(logits, pseudo, 0.0)
    total = ad.weighted_sum([(cfg.w_ent, ent), (cfg.w_div, div), (cfg.w_pl, pl)])
    ad.backward(total)
    return total, ent, div, pl


def _refresh_pseudo_labels(model, payloads, flat, producer, seed):
    if producer is None:
        feats, logits = forward(model, flat)
    else:
        feats = producer.mixup_features(model, payloads, seed)
        from .numerics.nn import mlp_value

        logits = mlp_value(model.classifier, model.classifier_params, feats)
    return pseudo_label_centroids(feats, ad.softmax(logits))


def client_adapt(model, dataset, cfg, eval_probe=None):
    """Adapt a vendor model on the unlabeled target-mixup dataset.

    Ends with a short finetune on the original target data. The classifier is
    untouched throughout when freeze_classifier is set.
    """
    if dataset.labels is not None:
        raise QuarantineError(
            "target dataset carries labels; client-side training must not see them"
        )
    if dataset.role != DomainRole.TARGET:
        raise RoleError(f"client adaptation expects target-role data, got '{dataset.role.value}'")
    started = time.perf_counter()
    model = model.copy()

    producer = None
    adapt_ds = dataset
    if _mixup_active(cfg.mixup):
        if cfg.mixup.mode == "edge":
            adapt_ds = build_mixup_dataset(dataset, cfg.mixup)
        else:
            producer = build_mixup_dataset(dataset, cfg.mixup, model)

    n = len(dataset)
    steps_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    if cfg.finetune_steps is not None:
        finetune_steps = cfg.finetune_steps
    else:
        finetune_steps = int(round(cfg.finetune_fraction * cfg.epochs * steps_per_epoch))
    finetune_epochs = (finetune_steps + steps_per_epoch - 1) // steps_per_epoch

    trainable = model.all_params() if not cfg.freeze_classifier else model.backbone_params
    opt_state = init_state(trainable, cfg.optimizer)
    log = TrainLog()

    phases = [("mixup", cfg.epochs, adapt_ds, producer)]
    if finetune_steps > 0:
        phases.append(("finetune", finetune_epochs, dataset, None))

    epoch_counter = 0
    remaining_finetune = finetune_steps
    pseudo = None
    for phase, phase_epochs, phase_ds, phase_producer in phases:
        raw = phase_ds.payloads
        flat = phase_ds.flat_payloads()
        for epoch in range(phase_epochs):
            if epoch % cfg.refresh_interval == 0:
                pseudo = _refresh_pseudo_labels(
                    model, raw, flat, phase_producer,
                    substream_seed(cfg.seed, "client-pl", phase, epoch),
                )
            rng = substream(cfg.seed, "client-shuffle", phase, epoch)
            sums = np.zeros(4)
            count = 0
            for step, idx in enumerate(_batches(n, cfg.batch_size, rng)):
                if phase == "finetune":
                    if remaining_finetune <= 0:
                        break
                    remaining_finetune -= 1
                batch = raw[idx] if phase_producer is not None else flat[idx]
                b_nodes, c_nodes = param_nodes(model)
                total, ent, div, pl = _client_losses(
                    model, b_nodes, c_nodes, batch, pseudo[idx], cfg, phase_producer,
                    substream_seed(cfg.seed, "client-aug", phase, epoch, step),
                )
                rec = GradientRecord(
                    float(total.value), grads_from_nodes(b_nodes), grads_from_nodes(c_nodes)
                )
                opt_state = _apply_update(
                    model, rec, opt_state, cfg.optimizer,
                    train_classifier=not cfg.freeze_classifier,
                )
                sums += (float(total.value), float(ent.value), float(div.value), float(pl.value))
                count += 1
            if count == 0:
                break
            tgt_acc = evaluate(model, *eval_probe) if eval_probe is not None else float("nan")
            log.rows.append(
                TrainLogRow(
                    epoch_counter,
                    sums[0] / count,
                    loss_ent=sums[1] / count,
                    loss_div=sums[2] / count,
                    loss_pl=sums[3] / count,
                    tgt_acc=tgt_acc,
                )
            )
            epoch_counter += 1
    log.wall_time = time.perf_counter() - started
    return model, log
