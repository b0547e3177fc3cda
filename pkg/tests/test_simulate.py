import json
import math

import numpy as np
import pytest

import seqdetect.simulate as sim
import seqdetect.testing as tst
from seqdetect.numutil import norm_cdf
from seqdetect.extreme import solve_extreme, weighted_mean_shift
from seqdetect.spectra import ProblemSpec, SequenceFamily


def mild_solution(r=0.05, eps=1e-3, K=256):
    spec = ProblemSpec(a=SequenceFamily("polynomial", exponent=1.0),
                       sigma=SequenceFamily("polynomial", exponent=1.0),
                       q=2.0, r=r, eps=eps, K=K)
    return spec, solve_extreme(spec)


def test_sample_noiseless_and_null():
    obs = sim.sample([1.0, 2.0], 0.0, 4, sim.make_stream(1))
    assert np.array_equal(obs.y, [1.0, 2.0, 0.0, 0.0])
    null = sim.sample(None, 2.0, 3, sim.make_stream(1))
    assert null.y.shape == (3,)


def test_sample_determinism():
    a = sim.sample(None, 1.0, 6, sim.make_stream(7, 2, 3))
    b = sim.sample(None, 1.0, 6, sim.make_stream(7, 2, 3))
    c = sim.sample(None, 1.0, 6, sim.make_stream(7, 2, 4))
    assert np.array_equal(a.y, b.y)
    assert not np.array_equal(a.y, c.y)


def test_sample_null_variance():
    stream = sim.make_stream(123)
    y = stream.standard_normal(1_000_000)
    assert float(np.var(y)) == pytest.approx(1.0, abs=0.005)


def test_sample_rejects_long_eta():
    with pytest.raises(ValueError):
        sim.sample([1.0, 2.0, 3.0], 1.0, 2, sim.make_stream(0))


def test_always_reject_rule():
    rule = tst.WeightedChiSq(w=(0.5,), H=-1e12)
    report = sim.estimate_errors(rule, np.array([1.0]), 1.0, 500, seed=1)
    assert report.alpha_hat == 1.0
    assert report.beta_hat == 0.0
    assert report.gamma_hat == 1.0


def test_estimate_errors_matches_theory_and_is_thread_invariant():
    spec, sol = mild_solution()
    rule = tst.build_weighted(sol, alpha=0.05)
    eta = sol.least_favorable(spec.K)
    reports = [sim.estimate_errors(rule, eta, spec.eps, 30_000, seed=9,
                                   threads=n, theory_u=sol.u)
               for n in (1, 4, 8)]
    blobs = {json.dumps(r.to_json_dict(), sort_keys=True) for r in reports}
    assert len(blobs) == 1
    report = reports[0]
    assert report.gamma_hat == report.alpha_hat + report.beta_hat
    assert report.theory is not None
    # the Gaussian prediction has o(1) error at finite m; stay loose here
    assert report.beta_hat == pytest.approx(report.theory["beta"], abs=0.05)


def test_null_statistic_moments():
    """Weighted statistic: mean 0 variance 1 under the null, mean h(eta)
    and variance within [1, 1 + 4 h w0] under the alternative."""
    spec, sol = mild_solution()
    rule = tst.build_weighted(sol, alpha=0.05)
    reps = 200_000
    stream = sim.make_stream(17)
    Y = spec.eps * stream.standard_normal((reps, spec.K))
    stats, _, _ = tst.batch_apply(rule, Y, spec.eps)
    assert float(stats.mean()) == pytest.approx(0.0, abs=4.0 / math.sqrt(reps))
    assert float(stats.var()) == pytest.approx(1.0, abs=0.02)

    eta = sol.least_favorable(spec.K)
    Y_alt = Y + eta
    stats_alt, _, _ = tst.batch_apply(rule, Y_alt, spec.eps)
    h = weighted_mean_shift(sol, spec.eps)
    assert float(stats_alt.mean()) == pytest.approx(h, abs=4.0 * math.sqrt(2.0 / reps) + 0.01)
    assert 1.0 - 0.02 <= float(stats_alt.var()) <= 1.0 + 4.0 * h * sol.w0 + 0.05


def test_sign_flip_invariance():
    """Flipping signs of eta coordinates leaves both error rates unchanged in
    distribution (the statistics are even in each coordinate jointly with
    the symmetric noise); paired seeds agree within Monte Carlo noise."""
    spec, sol = mild_solution(K=128)
    rule = tst.build_weighted(sol, alpha=0.05)
    eta = sol.least_favorable(spec.K)
    flipped = eta.copy()
    flipped[::2] *= -1.0
    a = sim.estimate_errors(rule, eta, spec.eps, 40_000, seed=3)
    b = sim.estimate_errors(rule, flipped, spec.eps, 40_000, seed=3)
    assert a.alpha_hat == b.alpha_hat   # identical null draws
    assert abs(a.beta_hat - b.beta_hat) <= 3.0 * (a.ci_halfwidths["beta"]
                                                  + b.ci_halfwidths["beta"])


def test_max_threshold_type_one_below_alpha():
    rule = tst.build_max_threshold(50, 0.1)
    report = sim.estimate_errors(rule, np.zeros(50), 1.0, 50_000, seed=5)
    assert report.alpha_hat <= 0.1 + 3.0 * report.ci_halfwidths["alpha"]


def test_randomized_type_one_matches_formula():
    K = 64
    Q = tst.sparse_event_thresholds(1e-3, K)
    rule = tst.SparseCombined(h=tuple(np.zeros(K)), z=tuple(np.zeros(K)),
                              H=0.0, Q=tuple(Q), mode="D_randomized", alpha=0.1)
    reps = 60_000
    report = sim.estimate_errors(rule, np.zeros(K), 1e-3, reps, seed=11)
    # alpha + (1 - alpha) P0(threshold event); the event probability is the
    # complement of the product of per-coordinate normal masses
    p_event = 1.0 - float(np.prod(1.0 - 2.0 * norm_cdf(-Q)))
    expected = 0.1 + 0.9 * p_event
    assert report.alpha_hat == pytest.approx(expected, abs=0.02)


def test_beta_decreases_with_radius():
    reports = []
    for r in (0.02, 0.04, 0.08):
        spec, sol = mild_solution(r=r)
        rule = tst.build_weighted(sol, alpha=0.05)
        reports.append(sim.estimate_errors(rule, sol.least_favorable(spec.K),
                                           spec.eps, 20_000, seed=21))
    noise = max(r.ci_halfwidths["beta"] for r in reports)
    assert reports[0].beta_hat - reports[1].beta_hat > noise
    assert reports[1].beta_hat - reports[2].beta_hat > noise


def test_likelihood_diagnostic_identity():
    assert sim.likelihood_diagnostic(np.zeros(3), 1.0, 100, seed=1) == \
        {"lhs": 1.0, "rhs": 1.0, "ci": 0.0}
    eta = np.full(3, math.sqrt(0.2))
    out = sim.likelihood_diagnostic(eta, 1.0, 150_000, seed=2)
    assert out["rhs"] == pytest.approx(math.cosh(0.2) ** 3, rel=1e-12)
    assert abs(out["lhs"] - out["rhs"]) <= 3.0 * out["ci"]
    with pytest.raises(ValueError, match="heavy-tailed"):
        sim.likelihood_diagnostic(np.array([1.0]), 1.0, 100, seed=3)


def test_rate_fit():
    rs = np.geomspace(1e-3, 1e-1, 10)
    out = sim.rate_fit([(r, r ** 3) for r in rs])
    assert out["slope"] == pytest.approx(3.0, abs=1e-12)
    assert out["r2"] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="at least 5"):
        sim.rate_fit([(0.1, 1.0)] * 4)
    with pytest.raises(ValueError, match="two decades"):
        sim.rate_fit([(0.1 * (1 + i / 10.0), 1.0) for i in range(6)])


def test_wilson_interval_sanity():
    from seqdetect.numutil import wilson_halfwidth
    assert wilson_halfwidth(50, 100) == pytest.approx(0.0958, abs=2e-3)
    assert wilson_halfwidth(0, 100) < wilson_halfwidth(50, 100)
    with pytest.raises(ValueError):
        wilson_halfwidth(0, 0)


def test_trace_outcomes(tmp_path):
    rule = tst.TruncatedChiSq(m=3, H=1.0)
    path = tmp_path / "trace.csv"
    sim.trace_outcomes(rule, np.zeros(3), 1.0, 100, seed=5, path=path,
                       rule_id="trunc3")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "rule_id,rep,statistic,reject"
    assert len(lines) == 101
    first = lines[1].split(",")
    assert first[0] == "trunc3" and first[1] == "0"
    assert first[3] in ("0", "1")
