"""Controlled domain-shift datasets with ground-truth target labels.

Class identity is always carried by shape; how much the texture (foreground
color) also carries it is set by ``texture_class_corr``. Target labels are
generated but quarantined: target-role datasets ship with ``labels=None`` and
the true labels live in a separate eval-only array that client-side training
never receives.
"""

import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionError, PayloadKindError
from .numerics.rng import substream, substream_seed


class DomainRole(str, Enum):
    SOURCE = "source"
    TARGET = "target"
    SOURCE_GENERIC = "source-generic"
    TARGET_GENERIC = "target-generic"
    SOURCE_MIXUP = "source-mixup"
    TARGET_MIXUP = "target-mixup"


SOURCE_LIKE = (DomainRole.SOURCE, DomainRole.SOURCE_GENERIC, DomainRole.SOURCE_MIXUP)
TARGET_LIKE = (DomainRole.TARGET, DomainRole.TARGET_GENERIC, DomainRole.TARGET_MIXUP)


@dataclass(frozen=True)
class PayloadKind:
    kind: str  # "vector" | "image"
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.kind not in ("vector", "image"):
            raise ConfigError(f"unknown payload kind '{self.kind}'")
        if self.kind == "vector" and len(self.dims) != 1:
            raise ConfigError(f"vector payloads need one dim, got {self.dims}")
        if self.kind == "image" and len(self.dims) != 3:
            raise ConfigError(f"image payloads need (H, W, C), got {self.dims}")

    @property
    def flat_dim(self):
        out = 1
        for d in self.dims:
            out *= d
        return out


@dataclass
class LabeledSample:
    payload: np.ndarray
    label: Optional[int]
    domain_role: DomainRole


@dataclass
class DomainDataset:
    """Samples of one domain role, stored as stacked arrays."""

    payloads: np.ndarray
    labels: Optional[np.ndarray]
    role: DomainRole
    class_count: int
    payload_kind: PayloadKind
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.payloads = np.asarray(self.payloads, dtype=np.float64)
        if self.payloads.shape[1:] != self.payload_kind.dims:
            raise DimensionError(
                "payload array does not match payload kind",
                self.payloads.shape[1:],
                self.payload_kind.dims,
            )
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.payloads),):
                raise DimensionError("labels misaligned", self.labels.shape, (len(self.payloads),))
        if self.payload_kind.kind == "image":
            lo, hi = self.payloads.min(initial=0.0), self.payloads.max(initial=0.0)
            if lo < -1e-12 or hi > 1.0 + 1e-12:
                raise ConfigError(f"image payload values outside [0, 1]: [{lo}, {hi}]")

    def __len__(self):
        return len(self.payloads)

    def sample(self, i):
        label = None if self.labels is None else int(self.labels[i])
        return LabeledSample(self.payloads[i], label, self.role)

    def flat_payloads(self):
        return self.payloads.reshape(len(self.payloads), -1)

    def with_role(self, role, labels="keep"):
        new_labels = self.labels if labels == "keep" else labels
        return DomainDataset(
            self.payloads.copy(),
            None if new_labels is None else np.array(new_labels),
            role,
            self.class_count,
            self.payload_kind,
            dict(self.provenance),
        )

    def subset(self, indices):
        indices = np.asarray(indices)
        return DomainDataset(
            self.payloads[indices].copy(),
            None if self.labels is None else self.labels[indices].copy(),
            self.role,
            self.class_count,
            self.payload_kind,
            dict(self.provenance),
        )


SHAPES = ("square", "circle", "triangle", "cross")


@dataclass(frozen=True)
class DomainStyle:
    """Per-domain texture: foreground palette and background recipe."""

    palette: tuple
    background: str  # "gradient-v" | "gradient-h" | "solid"
    background_colors: tuple

    def __post_init__(self):
        if self.background not in ("gradient-v", "gradient-h", "solid"):
            raise ConfigError(f"unknown background kind '{self.background}'")
        if len(self.palette) < len(SHAPES):
            raise ConfigError(f"palette needs at least {len(SHAPES)} colors")


SOURCE_STYLE = DomainStyle(
    palette=((0.90, 0.12, 0.12), (0.12, 0.85, 0.15), (0.12, 0.20, 0.90), (0.90, 0.85, 0.10)),
    background="gradient-v",
    background_colors=((0.10, 0.10, 0.16), (0.24, 0.22, 0.28)),
)

TARGET_STYLE = DomainStyle(
    palette=((0.95, 0.45, 0.20), (0.40, 0.95, 0.50), (0.40, 0.55, 0.95), (0.95, 0.90, 0.50)),
    background="gradient-h",
    background_colors=((0.70, 0.74, 0.80), (0.88, 0.90, 0.94)),
)


@dataclass(frozen=True)
class ShapeTextureConfig:
    image_hw: tuple = (32, 32)
    channels: int = 3
    source_style: DomainStyle = SOURCE_STYLE
    target_style: DomainStyle = TARGET_STYLE
    texture_class_corr: float = 0.5
    noise: float = 0.02
    samples_per_class: int = 50
    position_jitter: int = 4
    area_range: tuple = (0.08, 0.16)
    seed: int = 0

    def __post_init__(self):
        h, w = self.image_hw
        if h < 16 or w < 16:
            raise ConfigError(f"images smaller than 16x16 cannot render shapes, got {h}x{w}")
        if not 0.0 <= self.texture_class_corr <= 1.0:
            raise ConfigError(f"texture_class_corr must be in [0, 1], got {self.texture_class_corr}")
        if self.noise < 0:
            raise ConfigError(f"noise level must be >= 0, got {self.noise}")
        if self.samples_per_class <= 0:
            raise ConfigError("samples_per_class must be positive")


def _shape_mask(shape, h, w, cy, cx, size):
    yy, xx = np.mgrid[0:h, 0:w]
    dy = yy - cy
    dx = xx - cx
    if shape == "square":
        return (np.abs(dy) <= size) & (np.abs(dx) <= size)
    if shape == "circle":
        return dy * dy + dx * dx <= size * size
    if shape == "triangle":
        yprime = dy + size  # 0 at apex, 2*size at base
        return (yprime >= 0) & (yprime <= 2 * size) & (np.abs(dx) <= yprime / 2)
    if shape == "cross":
        arm = max(size / 3.0, 1.0)
        return ((np.abs(dx) <= arm) & (np.abs(dy) <= size)) | (
            (np.abs(dy) <= arm) & (np.abs(dx) <= size)
        )
    raise ConfigError(f"unknown shape '{shape}'")


def _size_for_area(shape, h, w, cy, cx, target_px):
    """Pick the size whose rendered pixel count is closest to target_px.

    Pixel count is monotone in size for every shape, so a scan is exact
    enough; it keeps per-class areas drawn from the same distribution.
    """
    best_size, best_err = 2.0, float("inf")
    for size in np.linspace(2.0, min(h, w) / 2.0 - 1.0, 48):
        count = int(_shape_mask(shape, h, w, cy, cx, size).sum())
        err = abs(count - target_px)
        if err < best_err:
            best_err, best_size = err, size
    return best_size


def _background(style, h, w, channels, rng):
    c0 = np.asarray(style.background_colors[0])
    c1 = np.asarray(style.background_colors[1])
    if style.background == "solid":
        img = np.tile(c0, (h, w, 1))
    else:
        axis = np.linspace(0.0, 1.0, h if style.background == "gradient-v" else w)
        ramp = axis[:, None, None] if style.background == "gradient-v" else axis[None, :, None]
        img = c0 * (1.0 - ramp) + c1 * ramp
        img = np.broadcast_to(img, (h, w, 3)).copy()
    if channels != 3:
        img = np.repeat(img.mean(axis=2, keepdims=True), channels, axis=2)
    return img


def _render_domain(cfg, style, role, rng):
    h, w = cfg.image_hw
    n_classes = len(SHAPES)
    n = n_classes * cfg.samples_per_class
    labels = np.repeat(np.arange(n_classes), cfg.samples_per_class)
    labels = labels[rng.permutation(n)]
    payloads = np.empty((n, h, w, cfg.channels))
    palette = np.asarray(style.palette, dtype=np.float64)
    for i in range(n):
        cls = int(labels[i])
        cy = h / 2.0 + rng.uniform(-cfg.position_jitter, cfg.position_jitter)
        cx = w / 2.0 + rng.uniform(-cfg.position_jitter, cfg.position_jitter)
        area = rng.uniform(*cfg.area_range) * h * w
        size = _size_for_area(SHAPES[cls], h, w, cy, cx, area)
        mask = _shape_mask(SHAPES[cls], h, w, cy, cx, size)
        if rng.uniform() < cfg.texture_class_corr:
            color_idx = cls
        else:
            color_idx = int(rng.integers(0, len(palette)))
        img = _background(style, h, w, cfg.channels, rng)
        color = palette[color_idx]
        if cfg.channels != 3:
            color = np.full(cfg.channels, float(np.mean(color)))
        img[mask] = color
        if cfg.noise > 0:
            img = img + rng.normal(0.0, cfg.noise, size=img.shape)
        payloads[i] = np.clip(img, 0.0, 1.0)
    return payloads, labels


def gen_shape_texture(cfg):
    """Render the shape/texture benchmark: (source, target, target_eval_labels)."""
    kind = PayloadKind("image", (*cfg.image_hw, cfg.channels))
    src_payloads, src_labels = _render_domain(
        cfg, cfg.source_style, DomainRole.SOURCE, substream(cfg.seed, "shape-texture-source")
    )
    tgt_payloads, tgt_labels = _render_domain(
        cfg, cfg.target_style, DomainRole.TARGET, substream(cfg.seed, "shape-texture-target")
    )
    provenance = {"generator": "shape-texture", "seed": cfg.seed}
    source = DomainDataset(src_payloads, src_labels, DomainRole.SOURCE, len(SHAPES), kind, provenance)
    target = DomainDataset(tgt_payloads, None, DomainRole.TARGET, len(SHAPES), kind, provenance)
    return source, target, tgt_labels


@dataclass(frozen=True)
class GaussianCell:
    mean: tuple
    var: tuple  # diagonal covariance entries

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        object.__setattr__(self, "var", tuple(float(v) for v in self.var))
        if len(self.mean) != len(self.var):
            raise ConfigError("mean and var dimensionality differ")
        if any(v < 0 for v in self.var):
            raise ConfigError(f"covariance entries must be >= 0, got {self.var}")


@dataclass(frozen=True)
class GaussianDomainConfig:
    cells: dict  # DomainRole -> sequence of GaussianCell, one per class
    samples_per_cell: int
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_cell <= 0:
            raise ConfigError("samples_per_cell must be positive")
        dims = {len(cell.mean) for cells in self.cells.values() for cell in cells}
        if len(dims) != 1:
            raise ConfigError(f"all cells must share dimensionality, got {sorted(dims)}")
        counts = {len(cells) for cells in self.cells.values()}
        if len(counts) != 1:
            raise ConfigError("all roles must have the same class count")


@dataclass
class GaussianDomains:
    datasets: dict  # DomainRole -> DomainDataset (target-like roles unlabeled)
    eval_labels: dict  # DomainRole -> np.ndarray


def gen_gaussian_domains(cfg):
    """Sample N(mean, diag var) per (role, class) cell."""
    datasets = {}
    eval_labels = {}
    for role, cells in cfg.cells.items():
        role = DomainRole(role)
        dim = len(cells[0].mean)
        rng = substream(cfg.seed, "gaussian", role.value)
        blocks = []
        labels = []
        for cls, cell in enumerate(cells):
            draws = rng.normal(size=(cfg.samples_per_cell, dim))
            blocks.append(np.asarray(cell.mean) + draws * np.sqrt(np.asarray(cell.var)))
            labels.extend([cls] * cfg.samples_per_cell)
        payloads = np.concatenate(blocks, axis=0)
        labels = np.asarray(labels, dtype=np.int64)
        order = rng.permutation(len(payloads))
        payloads, labels = payloads[order], labels[order]
        keep_labels = role in SOURCE_LIKE
        datasets[role] = DomainDataset(
            payloads,
            labels if keep_labels else None,
            role,
            len(cells),
            PayloadKind("vector", (dim,)),
            {"generator": "gaussian", "seed": cfg.seed},
        )
        eval_labels[role] = labels
    return GaussianDomains(datasets, eval_labels)


@dataclass(frozen=True)
class MoonsConfig:
    samples: int = 400
    noise: float = 0.08
    theta: float = 0.0  # target rotation about the source centroid
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.theta < 2.0 * np.pi:
            raise ConfigError(f"theta must be in [0, 2*pi), got {self.theta}")
        if self.samples < 2:
            raise ConfigError("need at least 2 samples")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")


def gen_two_moons(cfg):
    """Two interleaved arcs; target = the same points rotated by theta."""
    rng = substream(cfg.seed, "two-moons")
    n_upper = cfg.samples // 2
    n_lower = cfg.samples - n_upper
    t_upper = rng.uniform(0.0, np.pi, size=n_upper)
    t_lower = rng.uniform(0.0, np.pi, size=n_lower)
    upper = np.stack([np.cos(t_upper), np.sin(t_upper)], axis=1)
    lower = np.stack([1.0 - np.cos(t_lower), 0.5 - np.sin(t_lower)], axis=1)
    points = np.concatenate([upper, lower], axis=0)
    labels = np.concatenate([np.zeros(n_upper, dtype=np.int64), np.ones(n_lower, dtype=np.int64)])
    if cfg.noise > 0:
        points = points + rng.normal(0.0, cfg.noise, size=points.shape)
    order = rng.permutation(cfg.samples)
    points, labels = points[order], labels[order]

    centroid = points.mean(axis=0)
    c, s = np.cos(cfg.theta), np.sin(cfg.theta)
    rot = np.array([[c, -s], [s, c]])
    target_points = (points - centroid) @ rot.T + centroid

    kind = PayloadKind("vector", (2,))
    provenance = {"generator": "two-moons", "seed": cfg.seed}
    source = DomainDataset(points, labels, DomainRole.SOURCE, 2, kind, provenance)
    target = DomainDataset(target_points, None, DomainRole.TARGET, 2, kind, provenance)
    return source, target, labels.copy()


def split_indices(n, fraction, rng, labels=None):
    """Disjoint (train, eval) index split, stratified when labels are given."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    if labels is None:
        order = rng.permutation(n)
        cut = int(round(n * fraction))
        return np.sort(order[:cut]), np.sort(order[cut:])
    labels = np.asarray(labels)
    train_parts, eval_parts = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        cut = int(round(len(idx) * fraction))
        train_parts.append(idx[:cut])
        eval_parts.append(idx[cut:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(eval_parts))


def split(dataset, fraction, seed, labels=None):
    """Split one dataset into (train, eval) datasets."""
    strat = dataset.labels if dataset.labels is not None else labels
    rng = substream(seed, "split")
    idx_train, idx_eval = split_indices(len(dataset), fraction, rng, strat)
    return dataset.subset(idx_train), dataset.subset(idx_eval)


@dataclass
class Benchmark:
    """Train/eval splits for both domains plus quarantined target labels."""

    source_train: DomainDataset
    source_eval: DomainDataset
    target_train: DomainDataset
    target_eval: DomainDataset
    target_train_labels: np.ndarray  # eval-only privilege, never fed to training
    target_eval_labels: np.ndarray
    name: str = "benchmark"

    @property
    def class_count(self):
        return self.source_train.class_count

    @property
    def payload_kind(self):
        return self.source_train.payload_kind


def make_benchmark(source, target, target_labels, seed, fraction=0.5, name="benchmark"):
    src_train, src_eval = split(source, fraction, substream_seed(seed, "bench-source"))
    rng = substream(seed, "bench-target", "split")
    idx_train, idx_eval = split_indices(len(target), fraction, rng, target_labels)
    return Benchmark(
        source_train=src_train,
        source_eval=src_eval,
        target_train=target.subset(idx_train),
        target_eval=target.subset(idx_eval),
        target_train_labels=np.asarray(target_labels)[idx_train],
        target_eval_labels=np.asarray(target_labels)[idx_eval],
        name=name,
    )


def fixed_conv_stem(images, out_channels=8, stride=2, seed=0):
    """Non-trainable 3x3 conv featurizer for image payloads.

    Kernels are seeded random and never updated; output is relu'd and
    flattened. Stand-in for a pretrained backbone stem at desk scale.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise PayloadKindError(f"conv stem needs [N, H, W, C] images, got shape {images.shape}")
    n, h, w, c_in = images.shape
    rng = substream(seed, "conv-stem")
    kernels = rng.normal(0.0, np.sqrt(2.0 / (9 * c_in)), size=(3, 3, c_in, out_channels))
    out_h = (h - 3) // stride + 1
    out_w = (w - 3) // stride + 1
    out = np.zeros((n, out_h, out_w, out_channels))
    for dy in range(3):
        for dx in range(3):
            patch = images[:, dy : dy + stride * out_h : stride, dx : dx + stride * out_w : stride, :]
            out += np.einsum("nhwc,co->nhwo", patch, kernels[dy, dx])
    return np.maximum(out, 0.0).reshape(n, -1)


# --- dataset file format -------------------------------------------------

HEADER = "gmxdata v1"


def save_dataset(path, dataset):
    """Write the newline-delimited text format (header + one record/sample)."""
    buf = io.StringIO()
    buf.write(HEADER + "\n")
    kind = dataset.payload_kind
    dims = ",".join(str(d) for d in kind.dims)
    flat = dataset.flat_payloads()
    for i in range(len(dataset)):
        label = "-" if dataset.labels is None else str(int(dataset.labels[i]))
        values = " ".join(repr(v) for v in flat[i].tolist())
        buf.write(f"{dataset.role.value} {label} {kind.kind} {dims} {values}\n")
    with open(path, "w", newline="\n") as fh:
        fh.write(buf.getvalue())


def load_dataset(path, class_count=None):
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != HEADER:
            raise ConfigError(f"{path}: expected header '{HEADER}', got '{header}'")
        payloads, labels, roles, kinds = [], [], set(), set()
        for line_no, line in enumerate(fh, start=2):
            parts = line.split()
            if len(parts) < 4:
                raise ConfigError(f"{path}:{line_no}: malformed record")
            role, label, kind_name, dims = parts[:4]
            roles.add(role)
            dims = tuple(int(d) for d in dims.split(","))
            kinds.add((kind_name, dims))
            labels.append(None if label == "-" else int(label))
            values = np.array([float(v) for v in parts[4:]])
            if values.size != int(np.prod(dims)):
                raise ConfigError(f"{path}:{line_no}: payload length mismatch")
            payloads.append(values.reshape(dims))
    if len(roles) != 1 or len(kinds) != 1:
        raise ConfigError(f"{path}: mixed roles or payload kinds")
    role = DomainRole(roles.pop())
    kind_name, dims = kinds.pop()
    has_labels = all(l is not None for l in labels)
    if not has_labels and any(l is not None for l in labels):
        raise ConfigError(f"{path}: records mix labeled and unlabeled samples")
    label_arr = np.array(labels, dtype=np.int64) if has_labels else None
    if class_count is None:
        class_count = int(label_arr.max()) + 1 if has_labels else 0
        if class_count == 0:
            raise ConfigError(f"{path}: class_count required for unlabeled datasets")
    return DomainDataset(
        np.stack(payloads), label_arr, role, class_count, PayloadKind(kind_name, dims)
    )


def save_eval_labels(path, labels):
    with open(path, "w", newline="\n") as fh:
        fh.write("index,label\n")
        for i, label in enumerate(labels):
            fh.write(f"{i},{int(label)}\n")


def load_eval_labels(path):
    labels = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != "index,label":
            raise ConfigError(f"{path}: expected 'index,label' header")
        for line in fh:
            _, label = line.rstrip("\n").split(",")
            labels.append(int(label))
    return np.asarray(labels, dtype=np.int64)
