"""Analytic task oracle: posteriors, interval moments, and risk reports."""

import math
import warnings

import numpy as np
import pytest
from scipy.special import expit, ndtr

from recalib.core import (
    BinningScheme,
    Constant,
    Identity,
    LabeledSample,
    PiecewiseRecalibrator,
    ShiftCorrector,
    apply,
    apply_batch,
    compose,
    fit_recalibrator,
)
from recalib.oracle import (
    GaussianMixtureTask,
    MonotoneRecalibrator,
    QuadratureFailureError,
    RiskReport,
    ZeroMassError,
    _quad,
    empirical_risk_plugin,
    estimate_K,
    exact_shift_weights,
    hstar,
    interval_mass,
    interval_mean,
    logit,
    population_risk,
    posterior,
    sample,
    sigmoid,
)
from recalib.oracle import EmptyBinError

# Frozen reference values, independent 40-digit arithmetic; regenerate
# with `python3 tests/oracles.py`.
SIGMOID_4 = 0.98201379003790844
MEAN_Z_03 = 0.36218500741204939
BAYES_05 = 0.017149352197684704
BAYES_01 = 0.0092827393944385625
VAR_HSTAR_05 = 0.2328506478023153
MASS_03_02_07 = 0.22449886292187195
MEAN_03_02_07 = 0.16591903376682361
K_BULK = 18.521616940414207

# Three-bin map under pi = 0.5: edges (0, 0.25, 0.6, 1), values (0.2, 0.5,
# 0.9); the merged variant reuses 0.2 in the top bin.
PW3_R_CAL = 0.028120616821602937
PW3_R_SHA = 0.0081174078309346006
PW3_R_TOT = 0.036238024652537538
PW3_MSE = 0.053387376850222242
PW3M_R_CAL = 0.10684050804598736
PW3M_R_SHA = 0.22383471251359156
PW3M_R_TOT = 0.33067522055957892
PW3M_MSE = 0.34782457275726362

TASK05 = GaussianMixtureTask(0.5)
TASK03 = GaussianMixtureTask(0.3)
TASK01 = GaussianMixtureTask(0.1)

PW3 = PiecewiseRecalibrator(BinningScheme((0.0, 0.25, 0.6, 1.0)), (0.2, 0.5, 0.9), (1, 1, 1))
PW3M = PiecewiseRecalibrator(BinningScheme((0.0, 0.25, 0.6, 1.0)), (0.2, 0.5, 0.2), (1, 1, 1))


def random_piecewise(rng: np.random.Generator) -> PiecewiseRecalibrator:
    B = int(rng.integers(2, 7))
    while True:
        interior = np.sort(rng.uniform(0.02, 0.98, B - 1))
        if B == 1 or np.diff(np.concatenate(([0.0], interior, [1.0]))).min() > 1e-3:
            break
    values = tuple(float(v) for v in rng.uniform(0.0, 1.0, B))
    edges = (0.0, *(float(u) for u in interior), 1.0)
    return PiecewiseRecalibrator(BinningScheme(edges), values, (1,) * B)


# ------------------------------------------------------- scalar link maps

def test_sigmoid_saturation_and_value():
    assert sigmoid(37.0) == 1.0
    assert sigmoid(-37.0) == 0.0
    assert sigmoid(0.0) == 0.5
    assert sigmoid(4.0) == pytest.approx(SIGMOID_4, rel=1e-15)


def test_logit_endpoints_and_roundtrip():
    assert logit(0.0) == -math.inf
    assert logit(1.0) == math.inf
    for z in (0.001, 0.3, 0.5, 0.9, 0.999):
        assert sigmoid(logit(z)) == pytest.approx(z, rel=1e-12)
    with pytest.raises(ValueError):
        logit(-0.1)
    with pytest.raises(ValueError):
        logit(1.1)


def test_posterior_values():
    assert posterior(TASK05, 0.0) == 0.5
    assert posterior(TASK05, 1.0) == pytest.approx(SIGMOID_4, rel=1e-15)
    assert posterior(TASK01, 0.0) == pytest.approx(0.1, rel=1e-14)


def test_hstar_values_and_symmetry():
    assert hstar(TASK05, 0.5) == 0.5
    assert hstar(TASK05, sigmoid(1.0)) == pytest.approx(SIGMOID_4, rel=1e-12)
    assert hstar(TASK05, 0.0) == 0.0
    assert hstar(TASK05, 1.0) == 1.0
    for z in np.linspace(0.01, 0.99, 33):
        assert hstar(TASK05, 1.0 - z) == pytest.approx(1.0 - hstar(TASK05, z), abs=1e-12)


def test_exact_shift_weights():
    w = exact_shift_weights(0.5, 0.1)
    assert w.w == (1.8, 0.2)
    assert w.provenance == "exact"
    assert exact_shift_weights(0.3, 0.3).w == (1.0, 1.0)
    with pytest.raises(ValueError):
        exact_shift_weights(0.0, 0.1)
    with pytest.raises(ValueError):
        exact_shift_weights(0.5, 1.0)


def test_task_validation():
    with pytest.raises(ValueError):
        GaussianMixtureTask(0.0)
    with pytest.raises(ValueError):
        GaussianMixtureTask(1.2)


# ------------------------------------------------------------- sampling

def test_sample_moments_match_oracle():
    s = sample(TASK05, 100_000, seed=5)
    assert abs(s.y.mean() - 0.5) <= 3 * math.sqrt(0.25 / s.n)
    se = s.z.std(ddof=1) / math.sqrt(s.n)
    assert abs(s.z.mean() - 0.5) <= 3 * se

    s3 = sample(TASK03, 100_000, seed=5)
    se3 = s3.z.std(ddof=1) / math.sqrt(s3.n)
    assert abs(s3.z.mean() - MEAN_Z_03) <= 3 * se3


def test_sample_deterministic_and_frozen():
    a = sample(TASK05, 5, seed=12345)
    b = sample(TASK05, 5, seed=12345)
    assert np.array_equal(a.z, b.z) and np.array_equal(a.y, b.y)
    np.testing.assert_array_equal(
        a.z,
        [0.8274760007434269, 0.9045618191788573, 0.05265034928094536,
         0.17473071264020035, 0.9726175752381108],
    )
    np.testing.assert_array_equal(a.y, [1, 1, 0, 0, 1])


def test_sample_validation():
    with pytest.raises(ValueError):
        sample(TASK05, 0, seed=1)


# ------------------------------------------------------ interval moments

def test_interval_mass_examples():
    assert interval_mass(TASK05, 0.0, 0.5) == pytest.approx(0.5, abs=1e-14)
    assert interval_mass(TASK05, 0.0, 1.0) == pytest.approx(1.0, abs=1e-14)
    lo_half = interval_mass(TASK05, 0.0, 0.3)
    hi_half = interval_mass(TASK05, 0.7, 1.0)
    assert lo_half == pytest.approx(hi_half, abs=1e-14)
    assert interval_mass(TASK03, 0.2, 0.7) == pytest.approx(MASS_03_02_07, rel=1e-13)


def test_interval_mass_partition_sums_to_one():
    edges = (0.0, 0.11, 0.37, 0.52, 0.88, 1.0)
    total = sum(interval_mass(TASK03, a, b) for a, b in zip(edges, edges[1:]))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_interval_mean_examples():
    assert interval_mean(TASK05, 0.0, 1.0) == pytest.approx(0.5, rel=1e-13)
    assert interval_mean(TASK01, 0.0, 1.0) == pytest.approx(0.1, rel=1e-13)
    assert interval_mean(TASK03, 0.2, 0.7) == pytest.approx(MEAN_03_02_07, rel=1e-13)
    lo = interval_mean(TASK05, 0.1, 0.4)
    hi = interval_mean(TASK05, 0.6, 0.9)
    assert lo == pytest.approx(1.0 - hi, abs=1e-12)


def test_interval_mean_bracketed_by_optimal_map():
    for a, b in ((0.05, 0.2), (0.2, 0.5), (0.5, 0.77), (0.77, 0.99)):
        mean = interval_mean(TASK03, a, b)
        assert hstar(TASK03, a) <= mean <= hstar(TASK03, b)


def test_interval_errors():
    with pytest.raises(ZeroMassError):
        interval_mean(TASK05, 0.3, 0.3)
    with pytest.raises(ValueError):
        interval_mean(TASK05, 0.7, 0.2)
    with pytest.raises(ValueError):
        interval_mass(TASK05, -0.1, 0.5)


# ------------------------------------------------- population risk: exact

def test_optimal_map_is_a_fixed_point():
    for task in (TASK05, TASK01):
        rep = population_risk(task, MonotoneRecalibrator(lambda z, t=task: hstar(t, z)))
        assert rep.r_cal <= 1e-10
        assert rep.r_sha == 0.0
        assert rep.method == "quadrature"


def test_transported_optimal_map_is_calibrated_on_target():
    for pi_q in (0.1, 0.3):
        task_q = GaussianMixtureTask(pi_q)
        corr = ShiftCorrector(exact_shift_weights(0.5, pi_q))
        fn = lambda z, c=corr: apply(c, hstar(TASK05, z))
        rep = population_risk(task_q, MonotoneRecalibrator(fn))
        assert rep.r_cal <= 1e-10
        assert rep.r_sha == 0.0


def test_constant_risk_components():
    rep = population_risk(TASK05, Constant(0.5))
    assert rep.r_cal == 0.0
    assert rep.r_sha == pytest.approx(VAR_HSTAR_05, abs=1e-10)
    assert rep.mse - rep.r_total == pytest.approx(BAYES_05, abs=1e-10)

    off = population_risk(TASK05, Constant(0.3))
    assert off.r_cal == (0.3 - 0.5) ** 2
    assert off.r_sha == pytest.approx(VAR_HSTAR_05, abs=1e-10)


def test_identity_risk_and_bayes_term():
    rep = population_risk(TASK01, Identity())
    assert rep.r_sha == 0.0
    assert rep.r_total > 0.0
    assert rep.mse - rep.r_total == pytest.approx(BAYES_01, abs=1e-10)


def test_piecewise_risk_frozen_values():
    rep = population_risk(TASK05, PW3)
    assert rep.r_cal == pytest.approx(PW3_R_CAL, abs=1e-12)
    assert rep.r_sha == pytest.approx(PW3_R_SHA, abs=1e-12)
    assert rep.r_total == pytest.approx(PW3_R_TOT, abs=1e-12)
    assert rep.mse == pytest.approx(PW3_MSE, abs=1e-12)


def test_piecewise_risk_merges_equal_values():
    # Bins 1 and 3 share the value 0.2, so conditioning pools them; the
    # frozen numbers come from the pooled two-set partition.
    rep = population_risk(TASK05, PW3M)
    assert rep.r_cal == pytest.approx(PW3M_R_CAL, abs=1e-12)
    assert rep.r_sha == pytest.approx(PW3M_R_SHA, abs=1e-12)
    assert rep.r_total == pytest.approx(PW3M_R_TOT, abs=1e-12)
    assert rep.mse == pytest.approx(PW3M_MSE, abs=1e-12)


def test_decomposition_identity_random_maps():
    rng = np.random.Generator(np.random.PCG64(2024))
    for _ in range(20):
        rep = population_risk(TASK05, random_piecewise(rng))
        assert abs(rep.r_total - (rep.r_cal + rep.r_sha)) <= 1e-8
        assert min(rep.r_cal, rep.r_sha) >= 0.0
        assert rep.mse >= rep.r_total


def test_reflection_symmetry_of_risks():
    pw = PiecewiseRecalibrator(
        BinningScheme((0.0, 0.125, 0.5, 0.75, 1.0)), (0.1, 0.3, 0.6, 0.9), (1, 1, 1, 1)
    )
    reflected = PiecewiseRecalibrator(
        BinningScheme((0.0, 0.25, 0.5, 0.875, 1.0)),
        tuple(1.0 - v for v in reversed(pw.values)),
        (1, 1, 1, 1),
    )
    a = population_risk(TASK05, pw)
    b = population_risk(TASK05, reflected)
    assert a.r_cal == pytest.approx(b.r_cal, abs=1e-10)
    assert a.r_sha == pytest.approx(b.r_sha, abs=1e-10)
    assert a.mse == pytest.approx(b.mse, abs=1e-10)


def test_mse_agrees_with_monte_carlo():
    s = sample(TASK05, 1_000_000, seed=777)
    sq = (apply_batch(PW3, s.z) - s.y) ** 2
    se = sq.std(ddof=1) / math.sqrt(s.n)
    assert abs(PW3_MSE - sq.mean()) <= 3 * se


def test_injective_maps_have_zero_sharpness_risk():
    maps = (
        Identity(),
        ShiftCorrector(exact_shift_weights(0.5, 0.1)),
        MonotoneRecalibrator(lambda z: z**2),
    )
    for h in maps:
        assert population_risk(TASK05, h).r_sha == 0.0


def test_step_approximations_of_identity_converge():
    ident = population_risk(TASK05, Identity())
    assert ident.r_total == pytest.approx(0.022555182715854664, rel=1e-10)
    totals, shas = [], []
    for B in (4, 16, 64, 256):
        pw = PiecewiseRecalibrator(
            BinningScheme(tuple(b / B for b in range(B + 1))),
            tuple((b + 0.5) / B for b in range(B)),
            (1,) * B,
        )
        rep = population_risk(TASK05, pw)
        totals.append(rep.r_total)
        shas.append(rep.r_sha)
    assert totals[0] == pytest.approx(0.02748912, abs=1e-7)
    assert all(a > b for a, b in zip(totals, totals[1:]))
    assert all(a > b for a, b in zip(shas, shas[1:]))
    assert abs(totals[-1] - ident.r_total) < 1e-5


# -------------------------------------------------- smoothness estimation

def test_estimate_K_converges_to_bulk_supremum():
    k = estimate_K(TASK05, 100_000)
    assert k == pytest.approx(18.52161577549451, rel=1e-12)
    assert abs(k - K_BULK) / K_BULK < 1e-6
    assert k <= K_BULK + 1e-9
    half = estimate_K(TASK05, 50_000)
    assert abs(k - half) / k < 0.01


def test_estimate_K_monotone_under_grid_doubling():
    ks = [estimate_K(TASK05, g) for g in (1000, 2000, 4000, 8000, 16000, 32000, 64000)]
    assert ks[0] == pytest.approx(18.509978946541423, rel=1e-12)
    for a, b in zip(ks, ks[1:]):
        assert b >= a - 1e-9


def test_estimate_K_matches_independent_reimplementation():
    # Same estimator built from scratch: bisection against the closed-form
    # mixture CDF at the reflected levels 1 - j/G (negating afterwards,
    # valid at pi = 0.5), difference quotients of the posterior against
    # the CDF with the endpoints appended.
    G = 10_000
    j = np.arange(1, G, dtype=np.float64)
    targets = 1.0 - j / G
    lo = np.full(targets.shape, -20.0)
    hi = np.full(targets.shape, 20.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = 0.5 * (ndtr(mid - 2.0) + ndtr(mid + 2.0)) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    x = -(0.5 * (lo + hi))
    h = np.concatenate(([0.0], expit(4.0 * x)[::-1], [1.0]))
    F = np.concatenate(([0.0], (0.5 * (ndtr(x - 2.0) + ndtr(x + 2.0)))[::-1], [1.0]))
    mine = float(np.max(np.diff(h) / np.diff(F)))
    assert abs(mine - estimate_K(TASK05, G)) <= 1e-9


def test_estimate_K_validation():
    with pytest.raises(ValueError):
        estimate_K(TASK05, 999)


# ------------------------------------------------------- plug-in estimator

def test_plugin_in_sample_calibration_risk_is_zero():
    s = sample(TASK05, 10_000, seed=42)
    h = fit_recalibrator(s, 10)
    rep = empirical_risk_plugin(s, h)
    assert rep.r_cal == 0.0
    assert rep.method == "monte_carlo"
    assert rep.r_total == rep.r_cal + rep.r_sha
    assert rep.mse >= rep.r_total


def test_plugin_agrees_with_population_risk_on_fresh_sample():
    h = fit_recalibrator(sample(TASK05, 10_000, seed=42), 10)
    pop = population_risk(TASK05, h)
    fresh = sample(TASK05, 1_000_000, seed=(42, 1))
    full = empirical_risk_plugin(fresh, h)

    chunk = 62_500
    parts = [
        empirical_risk_plugin(
            LabeledSample(fresh.z[i * chunk:(i + 1) * chunk],
                          fresh.y[i * chunk:(i + 1) * chunk]),
            h,
        )
        for i in range(16)
    ]
    for field in ("r_cal", "r_sha", "r_total", "mse"):
        vals = np.array([getattr(p, field) for p in parts])
        se = vals.std(ddof=1) / 4.0
        got = getattr(full, field)
        want = getattr(pop, field)
        assert abs(got - want) <= 3 * se + 1e-8, (field, got, want, se)


def test_plugin_flattens_composites():
    s = sample(TASK05, 2_000, seed=9)
    h = fit_recalibrator(s, 5)
    comp = compose(ShiftCorrector(exact_shift_weights(0.5, 0.3)), h)
    a = empirical_risk_plugin(s, comp)
    b = empirical_risk_plugin(s, comp.flatten())
    assert (a.r_cal, a.r_sha, a.r_total, a.mse) == (b.r_cal, b.r_sha, b.r_total, b.mse)


def test_plugin_empty_bin_fails_loudly():
    h = PiecewiseRecalibrator(BinningScheme((0.0, 0.5, 1.0)), (0.25, 0.75), (1, 1))
    z = np.linspace(0.05, 0.45, 40)
    y = np.zeros(40)
    with pytest.raises(EmptyBinError):
        empirical_risk_plugin(LabeledSample(z, y), h)


def test_plugin_rejects_non_piecewise_maps():
    s = sample(TASK05, 100, seed=3)
    with pytest.raises(TypeError):
        empirical_risk_plugin(s, ShiftCorrector(exact_shift_weights(0.5, 0.1)))


# --------------------------------------------------------- report hygiene

def test_risk_report_validation():
    ok = RiskReport(0.1, 0.2, 0.3, 0.35, "monte_carlo", 1e-14)
    assert ok.r_total == 0.3
    with pytest.raises(ValueError):
        RiskReport(-0.1, 0.2, 0.1, 0.2, "quadrature", 1e-12)
    with pytest.raises(ValueError):
        RiskReport(0.1, 0.2, 0.3, 0.35, "guesswork", 1e-12)
    with pytest.raises(ValueError):
        RiskReport(0.1, 0.1, 0.3, 0.35, "quadrature", 1e-12)
    with pytest.raises(ValueError):
        RiskReport(0.1, 0.1, 0.2, 0.1, "quadrature", 1e-12)
    with pytest.raises(ValueError):
        RiskReport(0.1, 0.1, 0.2, 0.25, "quadrature", 0.0)


def test_quadrature_failure_is_loud():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(QuadratureFailureError):
            _quad(lambda x: math.sin(5e5 * x * x), -12.0, 12.0)
