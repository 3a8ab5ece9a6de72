"""Estimators for the target-risk bound terms and the trade-off metrics.

d_H is approximated by a trained binary domain classifier (label 1 = target):
the absolute gap between its target-rates on held-out source and target
features. kappa is approximated by one jointly trained task classifier: its
held-out source error plus target error. Both estimators keep the same
hypothesis family when comparing original against mixup domains, and both
use held-out rates only; in-sample rates overstate the divergence.

The measurement protocol mirrors the trade-off analysis the repo exists for:
train a vendor backbone on the mixup source at a given ratio, freeze it,
train the domain classifier on original-domain features, and read the rates
off mixup-domain features.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionError, MissingLabelsError
from .genericdomain import MixupConfig, build_mixup_dataset
from .numerics import autodiff as ad
from .numerics.nn import MlpSpec, init_params, mlp_graph, mlp_value
from .numerics.optim import OptimizerConfig, init_state, optimizer_step
from .numerics.rng import substream, substream_seed
from .sfda import client_adapt, evaluate, vendor_train
from .synthdata import split_indices


@dataclass(frozen=True)
class DomainClassifierConfig:
    """Hypothesis family and training budget for the sup/min approximations."""

    family: str = "linear"
    hidden_widths: tuple = (16,)
    epochs: int = 300
    lr: float = 0.05
    eval_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("linear", "mlp"):
            raise ConfigError(f"hypothesis family must be 'linear' or 'mlp', got '{self.family}'")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ConfigError(f"eval fraction must be in (0, 1), got {self.eval_fraction}")
        if self.epochs <= 0 or self.lr <= 0:
            raise ConfigError("epochs and lr must be positive")


def _classifier_spec(input_dim, class_count, cfg):
    if cfg.family == "linear":
        return MlpSpec((input_dim, class_count))
    widths = (input_dim,) + tuple(cfg.hidden_widths) + (class_count,)
    return MlpSpec(widths, ("relu",) * len(cfg.hidden_widths))


def _fit_softmax_classifier(x, y, class_count, cfg, seed_label):
    spec = _classifier_spec(x.shape[1], class_count, cfg)
    if cfg.family == "linear":
        # zero init keeps logistic regression deterministic and symmetric
        params = [np.zeros((x.shape[1], class_count)), np.zeros(class_count)]
    else:
        params = init_params(spec, substream(cfg.seed, seed_label, "init"))
    opt_cfg = OptimizerConfig(kind="adam", lr=cfg.lr)
    state = init_state(params, opt_cfg)
    for _ in range(cfg.epochs):
        nodes = [ad.Node(p, op="param") for p in params]
        logits = mlp_graph(spec, nodes, ad.constant(x))
        loss = ad.cross_entropy(logits, y, 0.0)
        ad.backward(loss)
        grads = [n.grad if n.grad is not None else np.zeros_like(n.value) for n in nodes]
        params, state = optimizer_step(params, grads, state, opt_cfg)
    return spec, params


@dataclass
class DomainClassifier:
    spec: MlpSpec
    params: list
    heldout_source: np.ndarray
    heldout_target: np.ndarray
    heldout_source_idx: np.ndarray
    heldout_target_idx: np.ndarray
    config: DomainClassifierConfig

    def predict_target(self, feats):
        logits = mlp_value(self.spec, self.params, feats)
        return logits.argmax(axis=1) == 1

    def accuracy(self, feats_source, feats_target):
        rate_s = self.predict_target(feats_source).mean()
        rate_t = self.predict_target(feats_target).mean()
        return 0.5 * ((1.0 - rate_s) + rate_t)


def _balanced_subsample(feats, n, rng):
    if len(feats) == n:
        return np.arange(len(feats))
    return np.sort(rng.choice(len(feats), size=n, replace=False))


def fit_domain_classifier(feats_source, feats_target, cfg):
    """Train the binary domain classifier (0 = source, 1 = target).

    Sides are balanced by subsampling the larger one, and an eval_fraction
    share of each side is held out for rate estimation.
    """
    feats_source = np.asarray(feats_source, dtype=np.float64)
    feats_target = np.asarray(feats_target, dtype=np.float64)
    if len(feats_source) == 0 or len(feats_target) == 0:
        raise ConfigError("domain classifier needs nonempty feature sets")
    if feats_source.shape[1:] != feats_target.shape[1:]:
        raise DimensionError("feature dims differ", feats_source.shape, feats_target.shape)
    n = min(len(feats_source), len(feats_target))
    idx_s = _balanced_subsample(feats_source, n, substream(cfg.seed, "balance-source"))
    idx_t = _balanced_subsample(feats_target, n, substream(cfg.seed, "balance-target"))
    train_s, hold_s = split_indices(n, 1.0 - cfg.eval_fraction, substream(cfg.seed, "split-source"))
    train_t, hold_t = split_indices(n, 1.0 - cfg.eval_fraction, substream(cfg.seed, "split-target"))

    x = np.concatenate([feats_source[idx_s[train_s]], feats_target[idx_t[train_t]]])
    y = np.concatenate([np.zeros(len(train_s), np.int64), np.ones(len(train_t), np.int64)])
    spec, params = _fit_softmax_classifier(x, y, 2, cfg, "domain-clf")
    return DomainClassifier(
        spec,
        params,
        feats_source[idx_s[hold_s]],
        feats_target[idx_t[hold_t]],
        idx_s[hold_s],
        idx_t[hold_t],
        cfg,
    )


def estimate_dH(classifier, feats_source, feats_target):
    """|target-rate on source - target-rate on target| on held-out features."""
    feats_source = np.asarray(feats_source, dtype=np.float64)
    feats_target = np.asarray(feats_target, dtype=np.float64)
    if len(feats_source) == 0 or len(feats_target) == 0:
        raise ConfigError("estimate_dH needs nonempty eval sets")
    rate_s = classifier.predict_target(feats_source).mean()
    rate_t = classifier.predict_target(feats_target).mean()
    return float(np.clip(abs(rate_t - rate_s), 0.0, 1.0))


def _dh_stderr(classifier, feats_source, feats_target):
    rs = classifier.predict_target(feats_source).mean()
    rt = classifier.predict_target(feats_target).mean()
    return math.sqrt(
        rs * (1 - rs) / max(len(feats_source), 1) + rt * (1 - rt) / max(len(feats_target), 1)
    )


@dataclass
class KappaEstimate:
    kappa: float
    eps_s: float
    eps_t: float
    stderr: float


def estimate_kappa(feats_source, labels_source, feats_target, labels_target, cfg, class_count=None):
    """Held-out eps_s + eps_t of one jointly trained task classifier.

    Target labels here are the experimenter's evaluation privilege; the
    client-side training code never sees them.
    """
    if labels_target is None:
        raise MissingLabelsError("kappa estimation needs target evaluation labels")
    feats_source = np.asarray(feats_source, dtype=np.float64)
    feats_target = np.asarray(feats_target, dtype=np.float64)
    labels_source = np.asarray(labels_source)
    labels_target = np.asarray(labels_target)
    if len(feats_source) != len(labels_source) or len(feats_target) != len(labels_target):
        raise DimensionError(
            "features/labels misaligned",
            feats_source.shape,
            labels_source.shape,
            feats_target.shape,
            labels_target.shape,
        )
    if class_count is None:
        class_count = int(max(labels_source.max(), labels_target.max())) + 1
    tr_s, ho_s = split_indices(
        len(feats_source), 1.0 - cfg.eval_fraction, substream(cfg.seed, "kappa-source"), labels_source
    )
    tr_t, ho_t = split_indices(
        len(feats_target), 1.0 - cfg.eval_fraction, substream(cfg.seed, "kappa-target"), labels_target
    )
    x = np.concatenate([feats_source[tr_s], feats_target[tr_t]])
    y = np.concatenate([labels_source[tr_s], labels_target[tr_t]])
    spec, params = _fit_softmax_classifier(x, y, class_count, cfg, "joint-clf")

    def error(feats, labels):
        pred = mlp_value(spec, params, feats).argmax(axis=1)
        return float((pred != labels).mean())

    eps_s = error(feats_source[ho_s], labels_source[ho_s])
    eps_t = error(feats_target[ho_t], labels_target[ho_t])
    stderr = math.sqrt(
        eps_s * (1 - eps_s) / max(len(ho_s), 1) + eps_t * (1 - eps_t) / max(len(ho_t), 1)
    )
    return KappaEstimate(float(np.clip(eps_s + eps_t, 0.0, 2.0)), eps_s, eps_t, stderr)


def gammas(d_h, kappa):
    """(gamma_T, gamma_D) = (1 - d_H, 1 - kappa / 2)."""
    if not 0.0 <= d_h <= 1.0:
        raise ConfigError(f"d_H must be in [0, 1], got {d_h}")
    if not 0.0 <= kappa <= 2.0:
        raise ConfigError(f"kappa must be in [0, 2], got {kappa}")
    return 1.0 - d_h, 1.0 - 0.5 * kappa


@dataclass
class MetricsReport:
    d_H: float
    kappa: float
    gamma_T: float
    gamma_D: float
    eps_s: float
    eps_t: float
    bound: float
    d_H_stderr: float
    kappa_stderr: float
    n_source: int
    n_target: int
    seed: int


@dataclass
class TradeoffPoint:
    lam: float
    mode: str
    seed: int
    report: MetricsReport
    target_acc: float

    CSV_HEADER = "lambda,mode,gamma_T,gamma_D,d_H,kappa,eps_s,eps_t,target_acc,seed"

    def csv_row(self):
        r = self.report
        return (
            f"{self.lam:.6f},{self.mode},{r.gamma_T:.6f},{r.gamma_D:.6f},{r.d_H:.6f},"
            f"{r.kappa:.6f},{r.eps_s:.6f},{r.eps_t:.6f},{self.target_acc:.6f},{self.seed}"
        )


def _model_features(model, dataset):
    return mlp_value(model.backbone, model.backbone_params, dataset.flat_payloads())


def _mixup_view(model, dataset, mixup, seed):
    """(features, model-task-logits) of a dataset's mixup counterpart."""
    if mixup is None or mixup.lam == 0.0:
        feats = _model_features(model, dataset)
    elif mixup.mode == "edge":
        mixed = build_mixup_dataset(dataset, mixup)
        feats = _model_features(model, mixed)
    else:
        producer = build_mixup_dataset(dataset, mixup, model)
        feats = producer.mixup_features(model, dataset.payloads, seed)
    logits = mlp_value(model.classifier, model.classifier_params, feats)
    return feats, logits


def measure_tradeoff_point(
    benchmark,
    mode,
    lam,
    vendor_cfg,
    client_cfg,
    metrics_cfg,
    seed,
    with_adaptation=True,
):
    """One point of the trade-off curve at mixup ratio lam.

    Vendor-trains a backbone on the mixup source, freezes it, estimates d_H
    on mixup features with a domain classifier trained on original features,
    estimates kappa with a joint task classifier on mixup features, and
    (optionally) runs client adaptation for the post-adaptation accuracy.
    """
    mixup = None
    if lam > 0.0:
        base = vendor_cfg.mixup if vendor_cfg.mixup is not None else client_cfg.mixup
        if base is None:
            base = MixupConfig(lam=lam, mode=mode)
        mixup = replace(base, lam=lam, mode=mode)

    v_cfg = replace(vendor_cfg, mixup=mixup, seed=substream_seed(seed, "vendor"))
    model, _ = vendor_train(benchmark.source_train, v_cfg)

    feats_src_orig = _model_features(model, benchmark.source_eval)
    feats_tgt_orig = _model_features(model, benchmark.target_eval)
    mix_seed = substream_seed(seed, "metrics-mixup")
    feats_src_mix, logits_src_mix = _mixup_view(model, benchmark.source_eval, mixup, mix_seed)
    feats_tgt_mix, logits_tgt_mix = _mixup_view(model, benchmark.target_eval, mixup, mix_seed)

    m_cfg = replace(metrics_cfg, seed=substream_seed(seed, "metrics"))
    clf = fit_domain_classifier(feats_src_orig, feats_tgt_orig, m_cfg)
    d_h = estimate_dH(
        clf, feats_src_mix[clf.heldout_source_idx], feats_tgt_mix[clf.heldout_target_idx]
    )
    d_h_stderr = _dh_stderr(
        clf, feats_src_mix[clf.heldout_source_idx], feats_tgt_mix[clf.heldout_target_idx]
    )
    kap = estimate_kappa(
        feats_src_mix,
        benchmark.source_eval.labels,
        feats_tgt_mix,
        benchmark.target_eval_labels,
        m_cfg,
        benchmark.class_count,
    )
    gamma_t, gamma_d = gammas(d_h, kap.kappa)
    eps_s = float((logits_src_mix.argmax(axis=1) != benchmark.source_eval.labels).mean())
    eps_t = float((logits_tgt_mix.argmax(axis=1) != benchmark.target_eval_labels).mean())
    report = MetricsReport(
        d_H=d_h,
        kappa=kap.kappa,
        gamma_T=gamma_t,
        gamma_D=gamma_d,
        eps_s=eps_s,
        eps_t=eps_t,
        bound=eps_s + d_h + kap.kappa,
        d_H_stderr=d_h_stderr,
        kappa_stderr=kap.stderr,
        n_source=len(benchmark.source_eval),
        n_target=len(benchmark.target_eval),
        seed=seed,
    )

    target_acc = float("nan")
    if with_adaptation:
        c_cfg = replace(client_cfg, mixup=mixup, seed=substream_seed(seed, "client"))
        adapted, _ = client_adapt(model, benchmark.target_train, c_cfg)
        target_acc = evaluate(adapted, benchmark.target_eval, benchmark.target_eval_labels)
    return TradeoffPoint(lam=lam, mode=mode, seed=seed, report=report, target_acc=target_acc)


def tradeoff_curve(
    benchmark,
    mode,
    lambda_grid,
    vendor_cfg,
    client_cfg,
    metrics_cfg,
    seeds=(0,),
    with_adaptation=True,
):
    """Rows of (lam, seed) trade-off points, in grid order."""
    if len(lambda_grid) == 0:
        raise ConfigError("lambda grid must be nonempty")
    rows = []
    for lam in lambda_grid:
        for seed in seeds:
            rows.append(
                measure_tradeoff_point(
                    benchmark, mode, lam, vendor_cfg, client_cfg, metrics_cfg, seed,
                    with_adaptation=with_adaptation,
                )
            )
    return rows


def curve_csv(rows):
    lines = [TradeoffPoint.CSV_HEADER]
    lines.extend(row.csv_row() for row in rows)
    return "\n".join(lines) + "\n"


def summarize_curve(rows):
    """Per-lambda means and standard errors over seeds."""
    by_lam = {}
    for row in rows:
        by_lam.setdefault(row.lam, []).append(row)
    out = []
    for lam, group in by_lam.items():
        def agg(getter):
            vals = np.array([getter(r) for r in group], dtype=np.float64)
            stderr = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
            return float(vals.mean()), float(stderr)

        out.append(
            {
                "lambda": lam,
                "mode": group[0].mode,
                "n_seeds": len(group),
                "gamma_T": agg(lambda r: r.report.gamma_T),
                "gamma_D": agg(lambda r: r.report.gamma_D),
                "d_H": agg(lambda r: r.report.d_H),
                "kappa": agg(lambda r: r.report.kappa),
                "target_acc": agg(lambda r: r.target_acc),
            }
        )
    return out


def summary_csv(summary):
    header = (
        "lambda,mode,n_seeds,gamma_T_mean,gamma_T_stderr,gamma_D_mean,gamma_D_stderr,"
        "d_H_mean,d_H_stderr,kappa_mean,kappa_stderr,target_acc_mean,target_acc_stderr"
    )
    lines = [header]
    for row in summary:
        lines.append(
            f"{row['lambda']:.6f},{row['mode']},{row['n_seeds']},"
            f"{row['gamma_T'][0]:.6f},{row['gamma_T'][1]:.6f},"
            f"{row['gamma_D'][0]:.6f},{row['gamma_D'][1]:.6f},"
            f"{row['d_H'][0]:.6f},{row['d_H'][1]:.6f},"
            f"{row['kappa'][0]:.6f},{row['kappa'][1]:.6f},"
            f"{row['target_acc'][0]:.6f},{row['target_acc'][1]:.6f}"
        )
    return "\n".join(lines) + "\n"
