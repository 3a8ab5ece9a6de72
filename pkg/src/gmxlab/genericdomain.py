"""Generic-domain constructions and the mixup translations built on them.

Two realizations: an input-space edge representation (Sobel magnitude, which
keeps shape and strips color/texture) and a feature-space construction that
averages the backbone features of strongly augmented copies of a sample. Both
feed the same convex mixup x_m = lam * x_g + (1 - lam) * x, which preserves
labels because original and generic sample describe the same instance.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, PayloadKindError, RoleError
from .numerics import autodiff as ad
from .numerics.nn import mlp_value
from .numerics.rng import seeded_rng, substream_seed
from .synthdata import DomainDataset, DomainRole

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


@dataclass(frozen=True)
class EdgeParams:
    operator: str = "sobel"
    normalization: str = "per-image-max"
    channel_policy: str = "replicate"

    def __post_init__(self):
        if self.operator != "sobel":
            raise ConfigError(f"unsupported edge operator '{self.operator}'")
        if self.normalization != "per-image-max":
            raise ConfigError(f"unsupported normalization '{self.normalization}'")
        if self.channel_policy != "replicate":
            raise ConfigError(f"unsupported channel policy '{self.channel_policy}'")


def _sobel_gradients(gray):
    """Interior Gx, Gy via the (1, 2, 1)-weighted pixel differences.

    Formulated as differences first so constant regions give exactly zero,
    which the per-image max normalization would otherwise amplify.
    """
    dx = gray[:, 2:] - gray[:, :-2]
    gx = dx[:-2, :] + 2.0 * dx[1:-1, :] + dx[2:, :]
    dy = gray[2:, :] - gray[:-2, :]
    gy = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return gx, gy


def sobel_edges(image, params=EdgeParams()):
    """Gradient-magnitude edge map in [0, 1], same shape as the input.

    Grayscale is the channel mean. The border ring (no full 3x3 support) is
    zero-filled, so constant images map to all-zero edge maps. The map is
    normalized by its per-image maximum (all-zero stays all-zero) and the
    gray edge map is replicated across the input's channels.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise PayloadKindError(f"edge operator needs an H x W x C image, got shape {image.shape}")
    h, w, c = image.shape
    gray = image.mean(axis=2)
    out = np.zeros((h, w))
    gx, gy = _sobel_gradients(gray)
    out[1:-1, 1:-1] = np.sqrt(gx * gx + gy * gy)
    peak = out.max()
    if peak > 0.0:
        out = out / peak
    return np.repeat(out[:, :, None], c, axis=2)


def sobel_edges_batch(images, params=EdgeParams()):
    return np.stack([sobel_edges(img, params) for img in images])


def edge_mixup(x, lam, params=EdgeParams()):
    """x_m = lam * sobel(x) + (1 - lam) * x, with bitwise endpoints."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"mixup ratio must be in [0, 1], got {lam}")
    x = np.asarray(x, dtype=np.float64)
    if lam == 0.0:
        return x.copy()
    edges = sobel_edges(x, params)
    if lam == 1.0:
        return edges
    return x + lam * (edges - x)


AUGMENTATION_NAMES = (
    "identity",
    "palette_remap",
    "channel_permute",
    "low_freq_swap",
    "additive_fog",
    "contrast_jitter",
)

_IMAGE_ONLY = ("palette_remap", "channel_permute", "low_freq_swap", "additive_fog", "contrast_jitter")


@dataclass(frozen=True, eq=False)
class AugmentationKind:
    """One label-preserving sub-domain transform with its parameters."""

    name: str
    reference: np.ndarray = None  # low_freq_swap style source
    radius: float = 4.0
    strength: float = 0.35  # additive_fog blend toward white
    jitter_range: tuple = (0.6, 1.4)
    permutation: tuple = None  # channel_permute; None draws one per call

    def __post_init__(self):
        if self.name not in AUGMENTATION_NAMES:
            raise ConfigError(f"unknown augmentation '{self.name}'")
        if self.name == "low_freq_swap" and self.reference is None:
            raise ConfigError("low_freq_swap needs a reference image")
        if self.name == "additive_fog" and not 0.0 <= self.strength <= 1.0:
            raise ConfigError(f"fog strength must be in [0, 1], got {self.strength}")


def _freq_distance_grid(h, w):
    fy = np.minimum(np.arange(h), h - np.arange(h))
    fx = np.minimum(np.arange(w), w - np.arange(w))
    return np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)


def _low_freq_swap(x, reference, radius):
    if reference.shape != x.shape:
        raise DimensionError("reference image shape mismatch", reference.shape, x.shape)
    h, w, c = x.shape
    mask = _freq_distance_grid(h, w) < radius
    out = np.empty_like(x)
    for ch in range(c):
        fx = np.fft.fft2(x[:, :, ch])
        fr = np.fft.fft2(reference[:, :, ch])
        amp = np.abs(fx)
        amp[mask] = np.abs(fr)[mask]
        out[:, :, ch] = np.real(np.fft.ifft2(amp * np.exp(1j * np.angle(fx))))
    return out


def apply_augmentation(x, kind, seed):
    """Apply one augmentation; randomness comes only from the given seed."""
    x = np.asarray(x, dtype=np.float64)
    if kind.name == "identity":
        return x.copy()
    if x.ndim != 3:
        raise PayloadKindError(
            f"augmentation '{kind.name}' needs an image payload, got shape {x.shape}"
        )
    rng = seeded_rng(seed)
    if kind.name == "palette_remap":
        c = x.shape[2]
        mix = np.eye(c) + rng.normal(0.0, 0.25, size=(c, c))
        shift = rng.uniform(-0.15, 0.15, size=c)
        out = np.einsum("hwc,cd->hwd", x, mix) + shift
    elif kind.name == "channel_permute":
        perm = kind.permutation
        if perm is None:
            perm = tuple(rng.permutation(x.shape[2]))
        out = x[:, :, list(perm)]
    elif kind.name == "low_freq_swap":
        out = _low_freq_swap(x, np.asarray(kind.reference, dtype=np.float64), kind.radius)
    elif kind.name == "additive_fog":
        out = (1.0 - kind.strength) * x + kind.strength
    else:  # contrast_jitter
        factor = rng.uniform(*kind.jitter_range)
        center = x.mean()
        out = center + (x - center) * factor
    return np.clip(out, 0.0, 1.0)


DEFAULT_AUGMENTATIONS = (
    AugmentationKind("palette_remap"),
    AugmentationKind("channel_permute"),
    AugmentationKind("additive_fog", strength=0.35),
    AugmentationKind("contrast_jitter", jitter_range=(0.6, 1.4)),
)


@dataclass(frozen=True)
class MixupConfig:
    """How to build a mixup domain from an original domain."""

    lam: float = 0.1
    mode: str = "edge"  # "edge" | "feature"
    k: int = 5
    augmentations: tuple = field(default_factory=lambda: DEFAULT_AUGMENTATIONS)
    stop_gradient: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"mixup ratio must be in [0, 1], got {self.lam}")
        if self.mode not in ("edge", "feature"):
            raise ConfigError(f"mixup mode must be 'edge' or 'feature', got '{self.mode}'")
        if self.mode == "feature":
            if self.k < 1:
                raise ConfigError(f"sub-domain count must be >= 1, got {self.k}")
            if len(self.augmentations) < self.k - 1:
                raise ConfigError(
                    f"need at least k-1={self.k - 1} augmentations, got {len(self.augmentations)}"
                )


def feature_generic(z_aug):
    """Mean of K equally-shaped feature tensors (the generic-domain features).

    Uses an anchored formulation, so the mean of identical tensors is bitwise
    equal to them.
    """
    if len(z_aug) == 0:
        raise ConfigError("feature_generic needs at least one feature tensor")
    shape = z_aug[0].shape
    for z in z_aug[1:]:
        if z.shape != shape:
            raise DimensionError("feature tensors differ in shape", shape, z.shape)
    if len(z_aug) == 1:
        return z_aug[0].copy()
    acc = np.zeros(shape)
    for z in z_aug[1:]:
        acc += z - z_aug[0]
    return z_aug[0] + acc / len(z_aug)


def feature_mixup(z, z_g, lam):
    """z_m = lam * z_g + (1 - lam) * z, with bitwise endpoints.

    Anchored as z + lam * (z_g - z), so z_g == z is an exact fixed point for
    every lam.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"mixup ratio must be in [0, 1], got {lam}")
    if z.shape != z_g.shape:
        raise DimensionError("feature shapes differ", z.shape, z_g.shape)
    if lam == 0.0:
        return z.copy()
    if lam == 1.0:
        return z_g.copy()
    return z + lam * (z_g - z)


@dataclass
class FeatureMixupBatch:
    """Intermediates of one feature-mixup application (numpy view)."""

    z: np.ndarray
    z_aug: list
    z_g: np.ndarray
    z_m: np.ndarray
    detached: bool


_MIXUP_ROLE = {
    DomainRole.SOURCE: DomainRole.SOURCE_MIXUP,
    DomainRole.TARGET: DomainRole.TARGET_MIXUP,
}


class FeatureMixupProducer:
    """Recomputes feature mixups per call, since the backbone keeps moving.

    Sub-domain copies are built in input space; their features are averaged
    into z_g and mixed into z_m. Index ``0`` of the sub-domain list is the
    original sample itself, so k=5 means original plus four augmentations.
    """

    def __init__(self, dataset, cfg):
        if cfg.mode != "feature":
            raise ConfigError("FeatureMixupProducer needs a feature-mode MixupConfig")
        if dataset.role not in _MIXUP_ROLE:
            raise RoleError(f"cannot build a mixup domain from role '{dataset.role.value}'")
        self.cfg = cfg
        self.payload_kind = dataset.payload_kind
        self.role = _MIXUP_ROLE[dataset.role]

    def augmented_payloads(self, payloads, seed):
        """K-1 augmented copies of the batch, one array per sub-domain slot."""
        payloads = np.asarray(payloads, dtype=np.float64)
        out = []
        for slot in range(self.cfg.k - 1):
            kind = self.cfg.augmentations[slot]
            aug = np.stack(
                [
                    apply_augmentation(payloads[i], kind, substream_seed(seed, "aug", i, slot))
                    for i in range(len(payloads))
                ]
            )
            out.append(aug)
        return out

    def _flat(self, arr):
        return arr.reshape(len(arr), -1)

    def mixup_batch(self, model, payloads, seed):
        """Numpy feature mixup of one payload batch under the current model."""
        payloads = np.asarray(payloads, dtype=np.float64)
        z = mlp_value(model.backbone, model.backbone_params, self._flat(payloads))
        z_aug = [z]
        for aug in self.augmented_payloads(payloads, seed):
            z_aug.append(mlp_value(model.backbone, model.backbone_params, self._flat(aug)))
        z_g = feature_generic(z_aug)
        z_m = feature_mixup(z, z_g, self.cfg.lam)
        return FeatureMixupBatch(z, z_aug, z_g, z_m, self.cfg.stop_gradient)

    def mixup_features(self, model, payloads, seed):
        return self.mixup_batch(model, payloads, seed).z_m

    def mixup_graph(self, backbone_spec, backbone_nodes, payloads, seed):
        """Autodiff version: returns the z_m node.

        With stop_gradient on, the augmented branches are still built in-graph
        and then detached, so tests can verify that detaching equals constant
        substitution rather than it holding by construction.
        """
        payloads = np.asarray(payloads, dtype=np.float64)
        from .numerics.nn import mlp_graph

        x = ad.constant(self._flat(payloads), op="batch")
        z = mlp_graph(backbone_spec, backbone_nodes, x)
        nodes = [z]
        for aug in self.augmented_payloads(payloads, seed):
            nodes.append(mlp_graph(backbone_spec, backbone_nodes, ad.constant(self._flat(aug))))
        z_g = ad.anchored_mean(nodes)
        if self.cfg.stop_gradient:
            z_g = ad.stop_gradient(z_g)
        return ad.convex_mix(z_g, z, self.cfg.lam)


def build_mixup_dataset(dataset, cfg, model=None):
    """Convert an original dataset into its mixup counterpart.

    Edge mode materializes a dataset once (the input space never changes);
    feature mode returns a producer because features must track the current
    backbone.
    """
    if cfg.mode == "edge":
        if dataset.payload_kind.kind != "image":
            raise PayloadKindError("edge mixup needs image payloads")
        if dataset.role not in _MIXUP_ROLE:
            raise RoleError(f"cannot build a mixup domain from role '{dataset.role.value}'")
        payloads = np.stack([edge_mixup(p, cfg.lam) for p in dataset.payloads])
        return DomainDataset(
            payloads,
            None if dataset.labels is None else dataset.labels.copy(),
            _MIXUP_ROLE[dataset.role],
            dataset.class_count,
            dataset.payload_kind,
            {**dataset.provenance, "mixup": {"mode": "edge", "lam": cfg.lam}},
        )
    if model is not None and dataset.payload_kind.flat_dim != model.input_dim:
        raise DimensionError(
            "model input does not match payloads", (model.input_dim,), dataset.payload_kind.dims
        )
    return FeatureMixupProducer(dataset, cfg)
