import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import seqdetect.testing as tst
from seqdetect.extreme import solve_extreme
from seqdetect.numutil import norm_cdf, norm_quantile, stable_sum
from seqdetect.spectra import BesovSpec, ProblemSpec, SequenceFamily


@pytest.fixture(scope="module")
def hand_solution():
    spec = ProblemSpec(a=SequenceFamily("polynomial", exponent=1.0),
                       sigma=SequenceFamily("polynomial", exponent=0.0),
                       q=2.0, r=math.sqrt(0.625), eps=1.0, K=64)
    return solve_extreme(spec)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def test_xi_kernel_values():
    assert tst.xi_kernel(5.0, 0.0) == 0.0
    assert tst.xi_kernel(0.0, 2.0) == pytest.approx(math.exp(2.0) - 1.0, rel=1e-14)
    assert tst.xi_kernel(1.0, 1.0) == pytest.approx(math.exp(0.5) * math.cosh(1.0) - 1.0,
                                                    rel=1e-14)
    assert tst.xi_kernel(1.0, 1.0) == pytest.approx(1.5441098650, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(t=st.floats(-15.0, 15.0), z=st.floats(0.0, 15.0))
def test_xi_kernel_symmetric_and_stable(t, z):
    a = tst.xi_kernel(t, z)
    b = tst.xi_kernel(-t, z)
    assert math.isfinite(a)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)
    assert a >= -1e-15


def test_xi_kernel_overflow():
    with pytest.raises(OverflowError):
        tst.xi_kernel(60.0, 60.0)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def test_build_weighted_thresholds(hand_solution):
    rule = tst.build_weighted(hand_solution, alpha=0.05)
    assert rule.H == pytest.approx(1.6448536269514722, abs=1e-10)
    assert tst.build_weighted(hand_solution, alpha=0.5).H == pytest.approx(0.0, abs=1e-12)
    total_error = tst.build_weighted(hand_solution)
    assert total_error.H == pytest.approx(hand_solution.u / 2.0, rel=1e-12)
    assert tst.build_weighted(hand_solution, H=1.23).H == 1.23
    assert stable_sum(np.asarray(rule.w) ** 2) == pytest.approx(0.5, abs=1e-12)


def test_build_weighted_error_prediction():
    # with u = 2 the Gaussian limit predicts beta = Phi(H_0.05 - 2)
    pred = tst.theoretical_errors(u=2.0, alpha=0.05)
    assert pred["beta"] == pytest.approx(float(norm_cdf(norm_quantile(0.95) - 2.0)),
                                         rel=1e-12)
    assert pred["beta"] == pytest.approx(0.36124, abs=1e-5)


def test_max_threshold_small_m():
    rule = tst.build_max_threshold(2, 0.3)
    assert np.allclose(rule.T, norm_quantile(0.95))
    rule3 = tst.build_max_threshold(3, 0.3)
    # c = 1/6 and (m-k-1) = 1 puts the low coordinate at the same quantile
    assert rule3.T[0] == pytest.approx(1.6448536269514722, abs=1e-10)
    with pytest.raises(ValueError):
        tst.build_max_threshold(1, 0.1)


@pytest.mark.parametrize("m", [3, 5, 50, 400])
def test_max_threshold_budget_identity(m):
    for alpha in (0.05, 0.1, 0.3):
        rule = tst.build_max_threshold(m, alpha)
        total = stable_sum(norm_cdf(-np.asarray(rule.T)))
        assert total == pytest.approx(alpha / 2.0, abs=1e-10)


def test_max_threshold_m2_budget_is_a_third():
    # with no lower block the two top thresholds carry alpha/6 each
    rule = tst.build_max_threshold(2, 0.3)
    total = stable_sum(norm_cdf(-np.asarray(rule.T)))
    assert total == pytest.approx(0.3 / 3.0, abs=1e-12)


def test_build_adaptive_validation():
    with pytest.raises(ValueError, match="C must exceed 2"):
        tst.build_adaptive("chi_grid", L=3, C=2.0)
    with pytest.raises(ValueError):
        tst.build_adaptive("chi_grid", L=1, C=2.5)
    with pytest.raises(ValueError):
        tst.build_adaptive("extreme_max")
    with pytest.raises(ValueError):
        tst.build_adaptive("bogus", L=3, C=2.5)
    rule = tst.build_adaptive("max_grid", L=10, C=2.5)
    assert rule.thresholds(20)[2] == pytest.approx(math.sqrt(2.0 * math.log(10.0)),
                                                   rel=1e-12)
    assert tst.default_grid_floor(1e-3) == math.ceil(math.sqrt(math.log(1e3)))


def test_extreme_max_threshold_sum_shrinks():
    K = 300
    sums = []
    for T_eps in (3.0, 4.0, 5.0):
        rule = tst.build_adaptive("extreme_max", T_eps=T_eps)
        sums.append(float(np.sum(norm_cdf(-rule.thresholds(K)))))
    assert sums[1] <= 0.01
    assert sums[0] > sums[1] > sums[2]


def test_besov_adaptive_grid():
    # K(j) = (ln j)/2 equals 1 at j = e^2
    assert math.log(math.exp(2.0)) / 2.0 == pytest.approx(1.0)
    z = tst.BesovAdaptive.z_grid(int(round(math.exp(2.0))) + 1, 0.15)
    assert z.size >= 1
    # j = 4: K(4) = ln(4)/2 < 1 so k = 1 sits in the sqrt branch
    z4 = tst.BesovAdaptive.z_grid(4, 0.15)
    assert z4[0] == pytest.approx(math.sqrt(1.0 - math.log(4.0) / 2.0), rel=1e-12)
    with pytest.raises(ValueError, match="ln"):
        tst.BesovAdaptive(J0=2, J1=4, c=0.2)
    with pytest.raises(ValueError):
        tst.BesovAdaptive(J0=1, J1=4, c=0.1)


def test_build_besov_adaptive_defaults():
    spec = BesovSpec(alpha=1.0, beta=1.0, q=1.0, t=1.0, r=0.01, eps=1e-4, J=8)
    rule = tst.build_besov_adaptive(spec)
    assert rule.J0 >= 2 and rule.J1 <= max(spec.J, rule.J0)


# ---------------------------------------------------------------------------
# apply
# ---------------------------------------------------------------------------

def test_apply_truncated_examples():
    rule = tst.TruncatedChiSq(m=2, H=0.5)
    assert tst.apply(rule, [1.0, 1.0], 1.0).statistic == pytest.approx(0.0, abs=1e-14)
    out = tst.apply(rule, [2.0, 0.0], 1.0)
    assert out.statistic == pytest.approx(1.0, rel=1e-14)
    assert out.reject and out.reject_probability == 1.0


def test_apply_weighted_example(hand_solution):
    rule = tst.build_weighted(hand_solution, alpha=0.05)
    out = tst.apply(rule, [2.0, 0.0], 1.0)
    w = hand_solution.w
    assert out.statistic == pytest.approx(3.0 * w[0] - w[1], rel=1e-12)
    assert out.statistic == pytest.approx(1.886483, abs=2e-6)
    assert out.reject


def test_apply_length_checks():
    rule = tst.TruncatedChiSq(m=5, H=1.0)
    with pytest.raises(ValueError):
        tst.apply(rule, [1.0, 2.0], 1.0)


def test_apply_max_threshold_boundary():
    rule = tst.MaxThreshold(T=(1.0, 2.0))
    assert tst.apply(rule, [1.0, 0.0], 1.0).reject          # |y| >= T eps
    assert not tst.apply(rule, [0.999, 1.999], 1.0).reject


def test_apply_is_pure():
    rule = tst.build_adaptive("chi_grid", L=2, C=2.5)
    y = np.linspace(-2.0, 2.0, 16)
    first = tst.apply(rule, y, 0.5)
    for _ in range(5):
        again = tst.apply(rule, y, 0.5)
        assert again == first


def test_sparse_combined_modes():
    Q = tst.sparse_event_thresholds(1e-3, 8)
    h = np.zeros(8); h[0] = 0.5
    z = np.zeros(8); z[0] = 1.0
    base = dict(h=tuple(h), z=tuple(z), H=0.0, Q=tuple(Q))
    y_quiet = np.zeros(8)
    y_loud = np.zeros(8); y_loud[0] = 10.0 * 1e-3

    rule_d = tst.SparseCombined(mode="D", **base)
    assert not tst.apply(rule_d, y_quiet, 1e-3).reject
    assert tst.apply(rule_d, y_loud, 1e-3).reject

    rule_rand = tst.SparseCombined(mode="D_randomized", alpha=0.1, **base)
    out = tst.apply(rule_rand, y_quiet, 1e-3)
    assert out.reject_probability == pytest.approx(0.1)
    assert tst.apply(rule_rand, y_loud, 1e-3).reject_probability == 1.0

    rule_g = tst.SparseCombined(mode="G", **base)
    out_g = tst.apply(rule_g, y_loud, 1e-3)
    # statistic is the normalized sinh-kernel sum; event holds, so rejection
    # tracks statistic > H
    assert out_g.reject == (out_g.statistic > 0.0)
    with pytest.raises(ValueError):
        tst.SparseCombined(mode="X", **base)


def test_adaptive_chi_grid_accepts_quiet_data():
    rule = tst.build_adaptive("chi_grid", L=2, C=3.0)
    y = np.full(64, 1e-4)
    out = tst.apply(rule, y, 1.0)
    assert not out.reject and out.statistic < 0.0


def test_besov_adaptive_composite_accepts_quiet():
    rule = tst.BesovAdaptive(J0=2, J1=5, c=0.15)
    spec = BesovSpec(alpha=1.0, beta=1.0, q=1.0, t=1.0, r=0.01, eps=1.0, J=5)
    y = np.zeros(spec.flat_length())
    out = tst.apply(rule, y, 1.0)
    assert not out.reject
    loud = y.copy()
    loud[-1] = 50.0
    assert tst.apply(rule, loud, 1.0).reject


# ---------------------------------------------------------------------------
# error predictions
# ---------------------------------------------------------------------------

def test_theoretical_errors_values():
    assert tst.theoretical_errors(u=2.0, alpha=0.05)["gamma"] == pytest.approx(
        2.0 * float(norm_cdf(-1.0)), rel=1e-12)
    small_u = tst.theoretical_errors(u=1e-9, alpha=0.2)
    assert small_u["beta"] == pytest.approx(0.8, abs=1e-6)
    assert small_u["gamma"] == pytest.approx(1.0, abs=1e-6)
    deg = tst.theoretical_errors(alpha=0.05, D=0.0)
    assert deg["beta"] == pytest.approx(0.475, abs=1e-12)
    assert deg["gamma"] == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        tst.theoretical_errors(u=None, alpha=0.05)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("rule", [
    tst.TruncatedChiSq(m=8, H=1.5),
    tst.MaxThreshold(T=(1.0, 2.0, 3.0)),
    tst.AdaptiveChiGrid(L=3, C=2.5),
    tst.AdaptiveMaxGrid(L=4, C=2.6),
    tst.ExtremeAdaptiveMax(T_eps=4.0),
    tst.BesovAdaptive(J0=2, J1=6, c=0.12),
])
def test_rule_json_round_trip(rule):
    assert tst.rule_from_json(tst.rule_to_json(rule)) == rule


def test_rule_json_round_trip_weighted(hand_solution):
    rule = tst.build_weighted(hand_solution, alpha=0.1)
    again = tst.rule_from_json(tst.rule_to_json(rule))
    assert again == rule
    with pytest.raises(ValueError):
        tst.rule_from_json('{"kind": "NoSuchRule"}')
    with pytest.raises(ValueError):
        tst.rule_from_json('{"kind": "TruncatedChiSq", "m": 2, "H": 1.0, "x": 3}')


def test_besov_sparse_rule_end_to_end():
    from seqdetect.extreme import solve_besov_extreme
    from seqdetect.spectra import BesovSpec
    import seqdetect.simulate as sim

    spec = BesovSpec(alpha=1.0, beta=0.25, q=1.0, t=1.0, r=0.38, eps=0.0818, J=3)
    sol = solve_besov_extreme(spec)
    thresholds = tst.besov_event_thresholds(spec.eps, spec.J)
    j = np.arange(1, spec.J + 1, dtype=float)
    expected = np.sqrt(2.0 * (j * math.log(2.0) + np.log(j)
                              + 2.0 * math.log(max(math.log(1.0 / spec.eps), 1.0))))
    assert thresholds == pytest.approx(expected, rel=1e-12)

    for mode in ("G", "D", "D_randomized"):
        rule = tst.build_besov_sparse(sol, spec, mode=mode, alpha=0.05)
        quiet = tst.apply(rule, np.zeros(spec.flat_length()), spec.eps)
        assert not quiet.reject
        if mode == "D_randomized":
            assert quiet.reject_probability == pytest.approx(0.05)
    # under the null the G statistic is near-centered with unit-scale spread
    rule_g = tst.build_besov_sparse(sol, spec, mode="G", alpha=0.05)
    stream = sim.make_stream(19)
    Y = spec.eps * stream.standard_normal((20_000, spec.flat_length()))
    stats, _, _ = tst.batch_apply(rule_g, Y, spec.eps)
    assert abs(float(stats.mean())) < 0.05
    assert 0.5 < float(stats.std()) < 1.5
