import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from gmxlab.errors import ConfigError, MissingLabelsError
from gmxlab.metrics import (
    DomainClassifierConfig,
    estimate_dH,
    estimate_kappa,
    fit_domain_classifier,
    gammas,
    measure_tradeoff_point,
    tradeoff_curve,
)
from gmxlab.numerics import seeded_rng
from gmxlab.numerics.optim import OptimizerConfig
from gmxlab.sfda import ClientConfig, VendorConfig
from gmxlab.synthdata import ShapeTextureConfig, gen_shape_texture, make_benchmark

CFG = DomainClassifierConfig(family="linear", epochs=300, lr=0.05, seed=0)


class TestDomainClassifier:
    def test_identical_distributions_near_chance(self):
        rng = seeded_rng(42)
        a = rng.normal(size=(800, 4))
        b = rng.normal(size=(800, 4))
        clf = fit_domain_classifier(a, b, CFG)
        acc = clf.accuracy(clf.heldout_source, clf.heldout_target)
        assert abs(acc - 0.5) <= 0.05

    def test_disjoint_gaussians_near_perfect(self):
        rng = seeded_rng(7)
        a = rng.normal(-2.0, 0.25, size=(2000, 1))
        b = rng.normal(2.0, 0.25, size=(2000, 1))
        clf = fit_domain_classifier(a, b, CFG)
        # oracle: error of the optimal threshold is Phi(-8) ~ 6e-16
        assert clf.accuracy(clf.heldout_source, clf.heldout_target) > 0.999

    def test_linear_family_cannot_separate_xor(self):
        rng = seeded_rng(9)
        n = 200
        centers_src = np.array([[0.0, 0.0], [1.0, 1.0]])
        centers_tgt = np.array([[0.0, 1.0], [1.0, 0.0]])
        src = np.concatenate([c + rng.normal(0, 0.05, size=(n, 2)) for c in centers_src])
        tgt = np.concatenate([c + rng.normal(0, 0.05, size=(n, 2)) for c in centers_tgt])

        # oracle: over a dense grid of linear separators, pick the one with
        # the lowest logistic loss (what training approximates); its held-out
        # accuracy stays near chance because the symmetric optimum is w ~ 0.
        def logistic_loss(w, b):
            z = np.concatenate([src, tgt]) @ w + b
            y = np.concatenate([np.zeros(2 * n), np.ones(2 * n)])
            return np.mean(np.log1p(np.exp(-np.where(y == 1, z, -z))))

        best = min(
            (logistic_loss(np.array([math.cos(t), math.sin(t)]) * r, b), t, r, b)
            for t in np.linspace(0, 2 * math.pi, 25)
            for r in (0.5, 1.0, 2.0, 4.0)
            for b in np.linspace(-2, 2, 9)
        )
        assert best[0] >= math.log(2.0) - 0.05  # no separator beats the constant

        clf = fit_domain_classifier(src, tgt, CFG)
        acc = clf.accuracy(clf.heldout_source, clf.heldout_target)
        assert abs(acc - 0.5) <= 0.06

    def test_dim_mismatch_rejected(self):
        with pytest.raises(Exception):
            fit_domain_classifier(np.zeros((10, 3)), np.zeros((10, 4)), CFG)


class TestEstimateDH:
    def test_chance_classifier_gives_small_dh(self):
        rng = seeded_rng(3)
        a = rng.normal(size=(800, 2))
        b = rng.normal(size=(800, 2))
        clf = fit_domain_classifier(a, b, CFG)
        assert estimate_dH(clf, clf.heldout_source, clf.heldout_target) < 0.1

    def test_perfect_classifier_gives_dh_one(self):
        rng = seeded_rng(4)
        a = rng.normal(-3.0, 0.1, size=(400, 1))
        b = rng.normal(3.0, 0.1, size=(400, 1))
        clf = fit_domain_classifier(a, b, CFG)
        assert estimate_dH(clf, clf.heldout_source, clf.heldout_target) > 0.99

    def test_mixup_gaussians_match_normal_cdf_oracle(self):
        # lam=0.5 mixup of N(-2, 0.25^2)/N(+2, 0.25^2) with generic N(0, 1)
        lam, sigma, mu = 0.5, 0.25, 2.0
        rng = seeded_rng(11)
        n = 8000
        z_s = rng.normal(-mu, sigma, size=n)
        z_t = rng.normal(mu, sigma, size=n)
        g_s = rng.normal(0.0, 1.0, size=n)
        g_t = rng.normal(0.0, 1.0, size=n)
        mix_s = (lam * g_s + (1 - lam) * z_s)[:, None]
        mix_t = (lam * g_t + (1 - lam) * z_t)[:, None]
        clf = fit_domain_classifier(mix_s, mix_t, CFG)
        d_h = estimate_dH(clf, clf.heldout_source, clf.heldout_target)
        sigma_m = math.sqrt(lam**2 + (1 - lam) ** 2 * sigma**2)
        oracle = 2 * norm.cdf((1 - lam) * mu / sigma_m) - 1
        assert oracle == pytest.approx(0.9476, abs=5e-4)
        assert d_h == pytest.approx(oracle, abs=0.01)

    def test_symmetry_in_absolute_value(self):
        rng = seeded_rng(5)
        a = rng.normal(0.0, 1.0, size=(300, 2))
        b = rng.normal(0.7, 1.0, size=(300, 2))
        clf = fit_domain_classifier(a, b, CFG)
        assert estimate_dH(clf, a, b) == estimate_dH(clf, b, a)

    def test_empty_eval_rejected(self):
        rng = seeded_rng(6)
        a = rng.normal(size=(50, 2))
        clf = fit_domain_classifier(a, a + 1.0, CFG)
        with pytest.raises(ConfigError):
            estimate_dH(clf, np.zeros((0, 2)), a)


class TestKappa:
    def test_identical_separable_domains_give_small_kappa(self):
        rng = seeded_rng(13)
        centers = np.array([[3.0, 0.0], [-3.0, 0.0], [0.0, 3.0], [0.0, -3.0]])
        n = 100

        def make():
            feats = np.concatenate([c + rng.normal(0, 0.2, size=(n, 2)) for c in centers])
            labels = np.repeat(np.arange(4), n)
            return feats, labels

        fs, ys = make()
        ft, yt = make()
        est = estimate_kappa(fs, ys, ft, yt, CFG)
        assert est.kappa < 0.05
        _, gamma_d = gammas(0.0, est.kappa)
        assert gamma_d > 0.97

    def test_shuffled_labels_give_chance_kappa(self):
        rng = seeded_rng(14)
        fs = rng.normal(size=(800, 3))
        ft = rng.normal(size=(800, 3))
        ys = rng.integers(0, 4, size=800)
        yt = rng.integers(0, 4, size=800)
        est = estimate_kappa(fs, ys, ft, yt, CFG)
        # chance-accuracy oracle: per-domain error 0.75, so kappa ~ 1.5
        assert est.kappa == pytest.approx(1.5, abs=0.1)

    def test_conflicting_labelings_give_kappa_one(self):
        rng = seeded_rng(15)
        n = 400
        x = np.concatenate([rng.normal(-1.0, 0.1, size=n), rng.normal(1.0, 0.1, size=n)])[:, None]
        y = np.concatenate([np.zeros(n, np.int64), np.ones(n, np.int64)])
        y_swapped = 1 - y

        # oracle: exhaustive threshold sweep; every threshold classifier has
        # eps_s + eps_t = 1 when the two domains swap their labels
        sweep = []
        for thr in np.linspace(-2, 2, 81):
            for sign in (1, -1):
                pred = (sign * (x[:, 0] - thr) > 0).astype(int)
                sweep.append((pred != y).mean() + (pred != y_swapped).mean())
        assert min(sweep) == pytest.approx(1.0, abs=1e-9)

        est = estimate_kappa(x, y, x.copy(), y_swapped, CFG)
        assert est.kappa == pytest.approx(1.0, abs=0.1)

    def test_missing_target_labels_rejected(self):
        with pytest.raises(MissingLabelsError):
            estimate_kappa(np.zeros((4, 2)), np.zeros(4, np.int64), np.zeros((4, 2)), None, CFG)


class TestGammas:
    def test_endpoints(self):
        assert gammas(0.0, 0.3)[0] == 1.0
        assert gammas(0.3, 2.0)[1] == 0.0

    def test_cdf_derived_value(self):
        oracle = 2 * norm.cdf(1.9402850002906638) - 1
        gamma_t, _ = gammas(oracle, 0.0)
        assert gamma_t == pytest.approx(0.0524, abs=5e-4)

    def test_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            gammas(1.5, 0.0)
        with pytest.raises(ConfigError):
            gammas(0.0, 2.5)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 2.0))
    @settings(max_examples=50, deadline=None)
    def test_ranges_always_hold(self, d_h, kappa):
        gamma_t, gamma_d = gammas(d_h, kappa)
        assert 0.0 <= gamma_t <= 1.0
        assert 0.0 <= gamma_d <= 1.0


def small_benchmark(seed=0, corr=0.5):
    source, target, labels = gen_shape_texture(
        ShapeTextureConfig(samples_per_class=25, texture_class_corr=corr, seed=seed)
    )
    return make_benchmark(source, target, labels, seed=seed)


VENDOR = VendorConfig(
    epochs=25,
    batch_size=32,
    backbone_hidden=(48,),
    feat_dim=16,
    optimizer=OptimizerConfig(kind="adam", lr=2e-3),
    source_acc_floor=0.0,
    seed=0,
)
CLIENT = ClientConfig(epochs=10, batch_size=32, seed=0)


class TestTradeoffCurve:
    def test_row_ordering_and_count(self):
        bench = small_benchmark()
        rows = tradeoff_curve(
            bench, "edge", [0.0, 0.5], VENDOR, CLIENT, CFG, seeds=(0,), with_adaptation=False
        )
        assert [r.lam for r in rows] == [0.0, 0.5]

    def test_lambda_zero_row_equals_baseline_bitwise(self):
        bench = small_benchmark()
        a = measure_tradeoff_point(bench, "edge", 0.0, VENDOR, CLIENT, CFG, seed=3,
                                   with_adaptation=False)
        b = measure_tradeoff_point(bench, "feature", 0.0, VENDOR, CLIENT, CFG, seed=3,
                                   with_adaptation=False)
        assert a.report.d_H == b.report.d_H
        assert a.report.kappa == b.report.kappa
        assert a.report.gamma_T == b.report.gamma_T
        assert a.report.eps_s == b.report.eps_s

    def test_edge_extremes_trade_transferability_for_discriminability(self):
        # reduced version of the 5-seed protocol: edge maps strip the domain
        # texture, so gamma_T must rise at lam=1 and gamma_D must fall
        gt0, gt1, gd0, gd1 = [], [], [], []
        for seed in (0, 1):
            bench = small_benchmark(seed=seed)
            p0 = measure_tradeoff_point(bench, "edge", 0.0, VENDOR, CLIENT, CFG, seed=seed,
                                        with_adaptation=False)
            p1 = measure_tradeoff_point(bench, "edge", 1.0, VENDOR, CLIENT, CFG, seed=seed,
                                        with_adaptation=False)
            gt0.append(p0.report.gamma_T)
            gt1.append(p1.report.gamma_T)
            gd0.append(p0.report.gamma_D)
            gd1.append(p1.report.gamma_D)
        assert np.mean(gt1) > np.mean(gt0)
        assert np.mean(gd1) < np.mean(gd0)

    def test_metric_ranges_on_real_pipeline(self):
        bench = small_benchmark(seed=2)
        row = measure_tradeoff_point(bench, "edge", 0.25, VENDOR, CLIENT, CFG, seed=2,
                                     with_adaptation=False)
        r = row.report
        assert 0.0 <= r.d_H <= 1.0
        assert 0.0 <= r.kappa <= 2.0
        assert 0.0 <= r.gamma_T <= 1.0 and 0.0 <= r.gamma_D <= 1.0
        assert r.bound == pytest.approx(r.eps_s + r.d_H + r.kappa)
