"""Small MLP bundles: a backbone feature extractor plus a task classifier."""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..errors import ConfigError, DimensionError
from . import autodiff as ad


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of one MLP: widths plus one activation per hidden layer."""

    layer_widths: tuple
    activations: tuple = ()
    has_softmax_head: bool = False

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(widths) < 2:
            raise ConfigError("MlpSpec needs at least input and output widths")
        if any(w <= 0 for w in widths):
            raise ConfigError(f"layer widths must be positive, got {widths}")
        n_hidden = len(widths) - 2
        if len(self.activations) != n_hidden:
            raise ConfigError(
                f"expected {n_hidden} activations for widths {widths}, got {len(self.activations)}"
            )
        for name in self.activations:
            if name not in ad.ACTIVATIONS:
                raise ConfigError(f"unknown activation '{name}'")

    @property
    def input_dim(self):
        return self.layer_widths[0]

    @property
    def output_dim(self):
        return self.layer_widths[-1]


def init_params(spec, rng):
    """He-style init for relu layers, Xavier-style otherwise; zero biases."""
    params = []
    acts = spec.activations + (None,)
    for i, (fan_in, fan_out) in enumerate(zip(spec.layer_widths[:-1], spec.layer_widths[1:])):
        gain = 2.0 if acts[i] == "relu" else 1.0
        w = rng.normal(0.0, np.sqrt(gain / fan_in), size=(fan_in, fan_out))
        params.append(w)
        params.append(np.zeros(fan_out))
    return params


def mlp_value(spec, params, x):
    """Plain-numpy forward pass."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionError("batch does not match MLP input", x.shape, (spec.input_dim,))
    h = x
    acts = spec.activations
    n_layers = len(spec.layer_widths) - 1
    for i in range(n_layers):
        h = h @ params[2 * i] + params[2 * i + 1]
        if i < n_layers - 1:
            h = ad.ACTIVATIONS_VALUE[acts[i]](h)
    return h


def mlp_graph(spec, param_nodes, x_node):
    """Graph-building forward pass over parameter nodes."""
    h = x_node
    acts = spec.activations
    n_layers = len(spec.layer_widths) - 1
    for i in range(n_layers):
        h = ad.add_bias(ad.matmul(h, param_nodes[2 * i]), param_nodes[2 * i + 1])
        if i < n_layers - 1:
            h = ad.ACTIVATIONS[acts[i]](h)
    return h


@dataclass
class ModelBundle:
    """Backbone h plus task classifier f_c, split at the feature space."""

    backbone: MlpSpec
    backbone_params: list
    classifier: MlpSpec
    classifier_params: list

    def __post_init__(self):
        if self.backbone.output_dim != self.classifier.input_dim:
            raise DimensionError(
                "backbone output width must equal classifier input width",
                (self.backbone.output_dim,),
                (self.classifier.input_dim,),
            )
        _check_param_shapes(self.backbone, self.backbone_params)
        _check_param_shapes(self.classifier, self.classifier_params)

    @property
    def input_dim(self):
        return self.backbone.input_dim

    @property
    def class_count(self):
        return self.classifier.output_dim

    @property
    def feature_dim(self):
        return self.backbone.output_dim

    def all_params(self):
        return list(self.backbone_params) + list(self.classifier_params)

    def copy(self):
        return ModelBundle(
            self.backbone,
            [p.copy() for p in self.backbone_params],
            self.classifier,
            [p.copy() for p in self.classifier_params],
        )


def _check_param_shapes(spec, params):
    expected = []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        expected.append((fan_in, fan_out))
        expected.append((fan_out,))
    if len(params) != len(expected):
        raise DimensionError(f"expected {len(expected)} parameter tensors, got {len(params)}")
    for p, shape in zip(params, expected):
        if p.shape != shape:
            raise DimensionError("parameter shape mismatch", p.shape, shape)


def init_model(backbone, classifier, rng):
    return ModelBundle(backbone, init_params(backbone, rng), classifier, init_params(classifier, rng))


def forward(model, batch):
    """Deterministic forward pass: (features, logits)."""
    features = mlp_value(model.backbone, model.backbone_params, batch)
    logits = mlp_value(model.classifier, model.classifier_params, features)
    return features, logits


def predict(model, batch):
    _, logits = forward(model, batch)
    return logits.argmax(axis=1)


@dataclass(frozen=True)
class LossSpec:
    """One of the supported training losses.

    kind: "cross-entropy" | "entropy" | "diversity" | "composite".
    Cross-entropy needs labels; composite lists (weight, LossSpec) terms that
    all share the same logits.
    """

    kind: str
    labels: Optional[np.ndarray] = None
    smoothing: float = 0.0
    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ("cross-entropy", "entropy", "diversity", "composite"):
            raise ConfigError(f"unknown loss kind '{self.kind}'")
        if self.kind == "cross-entropy" and self.labels is None:
            raise ConfigError("cross-entropy loss needs labels")
        if self.kind == "composite" and not self.components:
            raise ConfigError("composite loss needs components")


def loss_graph(logits_node, spec):
    if spec.kind == "cross-entropy":
        return ad.cross_entropy(logits_node, spec.labels, spec.smoothing)
    if spec.kind == "entropy":
        return ad.entropy_mean(logits_node)
    if spec.kind == "diversity":
        return ad.diversity(logits_node)
    terms = [(w, loss_graph(logits_node, sub)) for w, sub in spec.components]
    return ad.weighted_sum(terms)


@dataclass
class GradientRecord:
    """Loss value plus gradients aligned with a ModelBundle's parameters."""

    loss: float
    backbone_grads: list
    classifier_grads: list

    def all_grads(self):
        return list(self.backbone_grads) + list(self.classifier_grads)


def param_nodes(model):
    backbone_nodes = [ad.Node(p, op="param") for p in model.backbone_params]
    classifier_nodes = [ad.Node(p, op="param") for p in model.classifier_params]
    return backbone_nodes, classifier_nodes


def grads_from_nodes(nodes):
    return [n.grad if n.grad is not None else np.zeros_like(n.value) for n in nodes]


def value_and_grad(model, batch, loss_spec):
    """Loss and exact parameter gradients for a standard forward pass."""
    b_nodes, c_nodes = param_nodes(model)
    x = ad.constant(batch, op="batch")
    features = mlp_graph(model.backbone, b_nodes, x)
    logits = mlp_graph(model.classifier, c_nodes, features)
    loss = loss_graph(logits, loss_spec)
    ad.backward(loss)
    return GradientRecord(
        float(loss.value), grads_from_nodes(b_nodes), grads_from_nodes(c_nodes)
    )


def spec_with_input_dim(spec, input_dim):
    return replace(spec, layer_widths=(input_dim,) + spec.layer_widths[1:])
