"""Monte-Carlo verification of the mixup divergence inequality.

Works on diagonal-Gaussian setups where a provably optimal linear threshold
exists, so theorem checks carry no optimizer noise. phi(p) is the fraction of
draws a linear classifier scores positive; the case decomposition classifies
every paired draw by the signs and magnitudes of its two mixup terms and must
reconstruct the direct positive count exactly, not approximately.

The proof's final factorization step multiplies probabilities of events that
are not independent (the magnitude comparison is correlated with the signs),
so the factorization gap is reported but never asserted small; the exact
pre-factorization decomposition and the final inequality are what get
verified.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, SetupInvalidError
from .metrics import measure_tradeoff_point
from .numerics.rng import substream

MIN_MC_SAMPLES = 10_000


@dataclass(frozen=True)
class DiagonalGaussian:
    mean: tuple
    var: tuple

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(m) for m in np.atleast_1d(self.mean)))
        object.__setattr__(self, "var", tuple(float(v) for v in np.atleast_1d(self.var)))
        if len(self.mean) != len(self.var):
            raise ConfigError("mean and var dimensionality differ")
        if any(v < 0 for v in self.var):
            raise ConfigError(f"variances must be >= 0, got {self.var}")

    @property
    def dim(self):
        return len(self.mean)

    def draw(self, n, rng):
        out = np.asarray(self.mean) + rng.normal(size=(n, self.dim)) * np.sqrt(self.var)
        return out


@dataclass(frozen=True)
class LinearClassifier:
    """f_d(z) = w . z + b; 'predict target' means a strictly positive score."""

    weight: tuple
    bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "weight", tuple(float(w) for w in np.atleast_1d(self.weight)))

    def scores(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != len(self.weight):
            raise DimensionError("classifier weight does not match samples", z.shape, (len(self.weight),))
        return z @ np.asarray(self.weight) + self.bias


def best_threshold_gap(scores_source, scores_target):
    """Provably optimal empirical threshold for the rate gap on 1-D scores.

    Returns (gap, threshold, direction): gap = max over thresholds and sign
    of |rate_target - rate_source| where rate = fraction of scores > theta.
    """
    s = np.asarray(scores_source, dtype=np.float64)
    t = np.asarray(scores_target, dtype=np.float64)
    pooled = np.concatenate([s, t])
    is_target = np.concatenate([np.zeros(len(s), bool), np.ones(len(t), bool)])
    order = np.argsort(pooled, kind="stable")
    sorted_scores = pooled[order]
    sorted_target = is_target[order]
    # cut after position i: "> theta" keeps the suffix strictly above theta
    n_t = len(t)
    n_s = len(s)
    target_above = n_t - np.concatenate([[0], np.cumsum(sorted_target)])
    source_above = n_s - np.concatenate([[0], np.cumsum(~sorted_target)])
    diffs = target_above / n_t - source_above / n_s
    # only cuts between distinct values (or at the ends) are realizable
    realizable = np.concatenate([[True], sorted_scores[1:] != sorted_scores[:-1], [True]])
    diffs = np.where(realizable, diffs, 0.0)
    best = int(np.argmax(np.abs(diffs)))
    gap = float(abs(diffs[best]))
    if best == 0:
        theta = float(sorted_scores[0] - 1.0)
    elif best == len(sorted_scores):
        theta = float(sorted_scores[-1])
    else:
        theta = float(sorted_scores[best - 1])
    direction = 1.0 if diffs[best] >= 0 else -1.0
    return gap, theta, direction


def fisher_direction(samples_a, samples_b):
    """Diagonal-LDA direction separating two sample clouds."""
    mean_a = samples_a.mean(axis=0)
    mean_b = samples_b.mean(axis=0)
    pooled_var = 0.5 * (samples_a.var(axis=0) + samples_b.var(axis=0)) + 1e-12
    w = (mean_b - mean_a) / pooled_var
    norm = np.linalg.norm(w)
    return w / norm if norm > 0 else np.ones_like(w) / math.sqrt(len(w))


def sweep_dH(samples_source, samples_target):
    """(d_H, LinearClassifier) with the optimal threshold along the LDA axis."""
    w = fisher_direction(samples_source, samples_target)
    gap, theta, direction = best_threshold_gap(samples_source @ w, samples_target @ w)
    clf = LinearClassifier(tuple(direction * w), -direction * theta)
    return gap, clf


@dataclass(frozen=True)
class TheoremSetup:
    p_s: DiagonalGaussian
    p_t: DiagonalGaussian
    p_sg: DiagonalGaussian
    p_tg: DiagonalGaussian
    lambda_grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    n_samples: int = 200_000
    seed: int = 0
    independent_generic: bool = True
    f_d: LinearClassifier = None
    assert_assumptions: bool = True
    tolerance_sigma: float = 3.0

    def __post_init__(self):
        dims = {self.p_s.dim, self.p_t.dim, self.p_sg.dim, self.p_tg.dim}
        if len(dims) != 1:
            raise ConfigError(f"all distributions must share dimensionality, got {sorted(dims)}")
        if self.n_samples < MIN_MC_SAMPLES:
            raise ConfigError(f"need at least {MIN_MC_SAMPLES} Monte-Carlo samples, got {self.n_samples}")
        grid = tuple(float(l) for l in self.lambda_grid)
        object.__setattr__(self, "lambda_grid", grid)
        if any(not 0.0 <= l <= 1.0 for l in grid) or len(grid) == 0:
            raise ConfigError(f"lambda grid must be nonempty within [0, 1], got {grid}")


REFERENCE_SETUP = TheoremSetup(
    p_s=DiagonalGaussian((-2.0,), (0.0625,)),
    p_t=DiagonalGaussian((2.0,), (0.0625,)),
    p_sg=DiagonalGaussian((0.0,), (1.0,)),
    p_tg=DiagonalGaussian((0.0,), (1.0,)),
)


def mc_phi(dist, f_d, n, seed):
    """(phi, stderr): fraction of draws with f_d(z) > 0. Ties count negative."""
    if n < MIN_MC_SAMPLES:
        raise ConfigError(f"need at least {MIN_MC_SAMPLES} Monte-Carlo samples, got {n}")
    draws = dist.draw(n, substream(seed, "mc-phi"))
    phi = float((f_d.scores(draws) > 0.0).mean())
    return phi, math.sqrt(phi * (1.0 - phi) / n)


@dataclass
class CaseTableCounts:
    """Sign/magnitude partition of paired draws for one lambda.

    Rows follow the proof's table: 1 both terms positive, 2.x generic term
    positive only (2.1 when it dominates), 3.x original term positive only
    (3.1 when it dominates), 4 neither positive. f_d(z) = 0 counts as
    non-positive so the rows partition every pair exactly.
    """

    row1: int
    row2_1: int
    row2_2: int
    row3_1: int
    row3_2: int
    row4: int

    @property
    def total(self):
        return self.row1 + self.row2_1 + self.row2_2 + self.row3_1 + self.row3_2 + self.row4

    @property
    def positive_sum_count(self):
        return self.row1 + self.row2_1 + self.row3_1


def exact_case_decomposition(z_g, z, lam, f_d):
    a = lam * f_d.scores(z_g)
    b = (1.0 - lam) * f_d.scores(z)
    if a.shape != b.shape:
        raise DimensionError("paired draws differ in length", a.shape, b.shape)
    a_pos = a > 0.0
    b_pos = b > 0.0
    dominates = np.abs(a) > np.abs(b)
    row1 = int(np.count_nonzero(a_pos & b_pos))
    row2_1 = int(np.count_nonzero(a_pos & ~b_pos & dominates))
    row2_2 = int(np.count_nonzero(a_pos & ~b_pos & ~dominates))
    row3_1 = int(np.count_nonzero(~a_pos & b_pos & ~dominates))
    row3_2 = int(np.count_nonzero(~a_pos & b_pos & dominates))
    row4 = int(np.count_nonzero(~a_pos & ~b_pos))
    return CaseTableCounts(row1, row2_1, row2_2, row3_1, row3_2, row4)


def direct_positive_count(z_g, z, lam, f_d):
    a = lam * f_d.scores(z_g)
    b = (1.0 - lam) * f_d.scores(z)
    return int(np.count_nonzero(a + b > 0.0))


def zeta(z_g, z, lam, f_d):
    """Empirical Pr[lam * f_d(z_g) > (1 - lam) * f_d(z)]."""
    a = lam * f_d.scores(z_g)
    b = (1.0 - lam) * f_d.scores(z)
    if a.shape != b.shape:
        raise DimensionError("paired draws differ in length", a.shape, b.shape)
    return float((a > b).mean())


@dataclass
class LambdaResult:
    lam: float
    phi_sm: float
    phi_tm: float
    zeta_s: float
    zeta_t: float
    dH_mix: float
    dH_mix_stderr: float
    fact_gap: float
    case_table_s: CaseTableCounts
    case_table_t: CaseTableCounts
    eq5_ok: bool
    monotone_ok: bool


@dataclass
class TheoremReport:
    setup: TheoremSetup
    phi_s: float
    phi_t: float
    phi_sg: float
    phi_tg: float
    dH_orig: float
    dH_orig_stderr: float
    f_d: LinearClassifier
    per_lambda: list = field(default_factory=list)

    CSV_HEADER = (
        "lambda,phi_s,phi_t,phi_sg,phi_tg,phi_sm,phi_tm,zeta_s,zeta_t,"
        "dH_orig,dH_mix,fact_gap,stderr"
    )

    @property
    def passed(self):
        return all(r.eq5_ok and r.monotone_ok for r in self.per_lambda)

    def to_csv(self):
        lines = [self.CSV_HEADER]
        for r in self.per_lambda:
            lines.append(
                f"{r.lam:.6f},{self.phi_s:.6f},{self.phi_t:.6f},{self.phi_sg:.6f},"
                f"{self.phi_tg:.6f},{r.phi_sm:.6f},{r.phi_tm:.6f},{r.zeta_s:.6f},"
                f"{r.zeta_t:.6f},{self.dH_orig:.6f},{r.dH_mix:.6f},{r.fact_gap:.6f},"
                f"{r.dH_mix_stderr:.6f}"
            )
        return "\n".join(lines) + "\n"

    def summary(self):
        lines = []
        for r in self.per_lambda:
            verdict = "PASS" if (r.eq5_ok and r.monotone_ok) else "FAIL"
            lines.append(
                f"{verdict} lambda={r.lam:.2f}: dH_mix={r.dH_mix:.4f} <= dH_orig={self.dH_orig:.4f}"
                f" (eq5 {'ok' if r.eq5_ok else 'VIOLATED'},"
                f" monotone {'ok' if r.monotone_ok else 'VIOLATED'})"
            )
        lines.append(f"{'PASS' if self.passed else 'FAIL'} overall")
        return "\n".join(lines) + "\n"


def _rate_stderr(rate, n):
    return math.sqrt(rate * (1.0 - rate) / n)


def verify_theorem1(setup):
    """Check the divergence inequality and the proof's interpretation.

    Gates on the theorem's assumptions first (separable originals,
    inseparable generics); then for every lambda in the grid verifies
    d_H(mix) <= d_H(orig) and the monotone shift of the two phi values
    within the configured Monte-Carlo tolerance.
    """
    n = setup.n_samples
    z_s = setup.p_s.draw(n, substream(setup.seed, "orig-source"))
    z_t = setup.p_t.draw(n, substream(setup.seed, "orig-target"))
    if setup.independent_generic:
        z_sg = setup.p_sg.draw(n, substream(setup.seed, "gen-source"))
        z_tg = setup.p_tg.draw(n, substream(setup.seed, "gen-target"))
    else:
        # paired deterministic: per-dimension affine quantile transport
        def transport(z, src, dst):
            scale = np.sqrt(np.asarray(dst.var)) / np.sqrt(np.maximum(np.asarray(src.var), 1e-300))
            return np.asarray(dst.mean) + (z - np.asarray(src.mean)) * scale

        z_sg = transport(z_s, setup.p_s, setup.p_sg)
        z_tg = transport(z_t, setup.p_t, setup.p_tg)

    dH_orig, f_d_opt = sweep_dH(z_s, z_t)
    dH_gen, _ = sweep_dH(z_sg, z_tg)
    acc_orig = 0.5 * (1.0 + dH_orig)
    acc_gen = 0.5 * (1.0 + dH_gen)
    if setup.assert_assumptions:
        if not acc_orig > 0.999:
            raise SetupInvalidError(
                "perfect accuracy for domain classifier",
                f"best linear accuracy on originals is {acc_orig:.4f}",
            )
        if not abs(acc_gen - 0.5) <= 0.01:
            raise SetupInvalidError(
                "impossible to separate generic domains",
                f"best linear accuracy on generics is {acc_gen:.4f}",
            )

    f_d = setup.f_d if setup.f_d is not None else f_d_opt
    score_s = f_d.scores(z_s)
    score_t = f_d.scores(z_t)
    score_sg = f_d.scores(z_sg)
    score_tg = f_d.scores(z_tg)
    phi_s = float((score_s > 0).mean())
    phi_t = float((score_t > 0).mean())
    phi_sg = float((score_sg > 0).mean())
    phi_tg = float((score_tg > 0).mean())

    report = TheoremReport(
        setup=setup,
        phi_s=phi_s,
        phi_t=phi_t,
        phi_sg=phi_sg,
        phi_tg=phi_tg,
        dH_orig=dH_orig,
        dH_orig_stderr=math.sqrt(
            _rate_stderr(phi_s, n) ** 2 + _rate_stderr(phi_t, n) ** 2
        ),
        f_d=f_d,
    )

    tol = setup.tolerance_sigma
    for lam in setup.lambda_grid:
        z_sm = lam * z_sg + (1.0 - lam) * z_s
        z_tm = lam * z_tg + (1.0 - lam) * z_t
        phi_sm = float((f_d.scores(z_sm) > 0).mean())
        phi_tm = float((f_d.scores(z_tm) > 0).mean())
        zeta_s = zeta(z_sg, z_s, lam, f_d)
        zeta_t = zeta(z_tg, z_t, lam, f_d)
        dH_mix, _ = sweep_dH(z_sm, z_tm)
        dH_mix_stderr = math.sqrt(
            _rate_stderr(phi_sm, n) ** 2 + _rate_stderr(phi_tm, n) ** 2 + 1e-12
        )
        fact_gap = abs(phi_sm - (phi_s * (1.0 - zeta_s) + 0.5 * zeta_s))
        sigma = math.sqrt(2.0 / n)  # worst-case binomial rate noise
        eq5_ok = dH_mix <= dH_orig + tol * sigma
        monotone_ok = (phi_sm >= phi_s - tol * sigma) and (phi_tm <= phi_t + tol * sigma)
        report.per_lambda.append(
            LambdaResult(
                lam=lam,
                phi_sm=phi_sm,
                phi_tm=phi_tm,
                zeta_s=zeta_s,
                zeta_t=zeta_t,
                dH_mix=dH_mix,
                dH_mix_stderr=dH_mix_stderr,
                fact_gap=fact_gap,
                case_table_s=exact_case_decomposition(z_sg, z_s, lam, f_d),
                case_table_t=exact_case_decomposition(z_tg, z_t, lam, f_d),
                eq5_ok=eq5_ok,
                monotone_ok=monotone_ok,
            )
        )
    return report


@dataclass
class Insight2Report:
    lam: float
    mode: str
    lhs: float  # mean d_H + kappa on the mixup side
    rhs: float  # mean d_H + kappa at lambda = 0
    per_seed: list
    tolerance: float

    @property
    def difference(self):
        return self.lhs - self.rhs

    @property
    def passed(self):
        return self.difference <= self.tolerance

    def summary(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict} insight2 lambda={self.lam:.2f} mode={self.mode}: "
            f"lhs={self.lhs:.4f} rhs={self.rhs:.4f} diff={self.difference:+.4f} "
            f"(tolerance {self.tolerance:.4f})\n"
        )


def insight2_check(
    benchmark, mode, lam, seeds, vendor_cfg, client_cfg, metrics_cfg, tolerance=0.02
):
    """Empirical check of d_H + kappa (mixup) <= d_H + kappa (original).

    The claim is a postulate, not a theorem; the report carries a pass/fail
    flag at the configured tolerance instead of asserting universality.
    """
    per_seed = []
    for seed in seeds:
        mix = measure_tradeoff_point(
            benchmark, mode, lam, vendor_cfg, client_cfg, metrics_cfg, seed,
            with_adaptation=False,
        )
        base = measure_tradeoff_point(
            benchmark, mode, 0.0, vendor_cfg, client_cfg, metrics_cfg, seed,
            with_adaptation=False,
        )
        per_seed.append(
            (
                mix.report.d_H + mix.report.kappa,
                base.report.d_H + base.report.kappa,
            )
        )
    lhs = float(np.mean([p[0] for p in per_seed]))
    rhs = float(np.mean([p[1] for p in per_seed]))
    return Insight2Report(lam=lam, mode=mode, lhs=lhs, rhs=rhs, per_seed=per_seed, tolerance=tolerance)
