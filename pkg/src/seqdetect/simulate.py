"""Monte Carlo: sampling, error estimation, likelihood diagnostics, rate fits.

Reproducibility contract: every replicate's draws are a pure function of
(seed, stream identifiers, replicate index).  Replicates are grouped into
fixed-size chunks, each chunk backed by its own Philox counter-based stream,
so reports are bit-identical for any thread count and any chunk execution
order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .numutil import stable_sum, wilson_halfwidth
from .testing import TestRule, batch_apply, theoretical_errors

CHUNK = 4096


@dataclass(frozen=True)
class Observation:
    """One draw y = eta + eps * xi from the sequence model."""
    y: np.ndarray
    eps: float


@dataclass(frozen=True)
class MonteCarloReport:
    reps: int
    alpha_hat: float
    beta_hat: float
    gamma_hat: float
    ci_halfwidths: dict
    theory: dict | None
    seed: int

    def to_json_dict(self) -> dict:
        return {"reps": self.reps, "alpha_hat": self.alpha_hat,
                "beta_hat": self.beta_hat, "gamma_hat": self.gamma_hat,
                "ci": dict(self.ci_halfwidths), "theory": self.theory,
                "seed": self.seed}


def make_stream(seed: int, experiment_id: int = 0, index: int = 0) -> np.random.Generator:
    """Independent counter-based stream: the Philox key encodes
    (seed, experiment, index), so streams never overlap and draws are a pure
    function of the identifiers."""
    key = (int(seed) & (2 ** 64 - 1)) + ((int(experiment_id) & 0xFFFFFFFF) << 96) \
        + ((int(index) & 0xFFFFFFFF) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def sample(eta, eps: float, K: int, stream: np.random.Generator) -> Observation:
    """One observation vector of length K; eta = None draws from the null."""
    y = eps * stream.standard_normal(K)
    if eta is not None:
        eta = np.asarray(eta, dtype=float)
        if eta.size > K:
            raise ValueError("eta longer than the requested observation")
        y[:eta.size] += eta
    return Observation(y=y, eps=eps)


def _run_chunks(rule, eta_row, eps, seed, experiment_id, arm, chunks, K) -> int:
    """Rejection count over a list of (chunk_index, n_rows) work items.

    Draw layout per chunk is fixed (normals for the full block, then one
    uniform per replicate), so results do not depend on how chunks are
    partitioned over threads.  The noise buffer is reused across chunks, and
    the chi-square rules run in place on it; other rules go through the
    generic batch path.
    """
    from .testing import TruncatedChiSq, WeightedChiSq

    buf = np.empty((CHUNK, K))
    shift = None
    if eta_row is not None:
        shift = eta_row / eps
        if shift.size < K:
            shift = np.concatenate([shift, np.zeros(K - shift.size)])
    total = 0
    for chunk_index, n_rows in chunks:
        stream = make_stream(seed, experiment_id, 2 * chunk_index + arm)
        view = buf[:n_rows]
        stream.standard_normal(out=view)
        coins = stream.random(n_rows)
        if isinstance(rule, (WeightedChiSq, TruncatedChiSq)):
            if shift is not None:
                view += shift
            np.square(view, out=view)
            if isinstance(rule, WeightedChiSq):
                w = np.asarray(rule.w)
                stats = view[:, : w.size] @ w - float(np.sum(w))
            else:
                m = rule.m
                stats = (view[:, :m].sum(axis=1) - m) / math.sqrt(2.0 * m)
            prob = (stats > rule.H).astype(float)
        else:
            view *= eps
            if eta_row is not None:
                view[:, : eta_row.size] += eta_row
            _, _, prob = batch_apply(rule, view, eps)
        total += int(np.count_nonzero(coins < prob))
    return total


def estimate_errors(rule: TestRule, eta_alt, eps: float, reps: int, seed: int,
                    threads: int = 1, theory_u: float | None = None,
                    theory_alpha: float = 0.05, theory_D: float | None = None,
                    experiment_id: int = 0) -> MonteCarloReport:
    """Empirical type I / type II errors of a rule at the alternative eta_alt.

    alpha_hat counts rejections under the null, beta_hat acceptances under
    the alternative (canonically the positive square roots of the solved
    least-favorable squares; the families here are even in each coordinate,
    so signs do not matter).  gamma_hat = alpha_hat + beta_hat.  Wilson 95%
    interval half-widths accompany the raw proportions; the gamma entry is
    the conservative sum of the two.
    """
    if reps < 1:
        raise ValueError("need at least one replicate")
    eta_row = np.asarray(eta_alt, dtype=float)
    K = eta_row.size
    if K < 1:
        raise ValueError("alternative must have at least one coordinate")

    chunks = [(ci, min(CHUNK, reps - ci * CHUNK))
              for ci in range((reps + CHUNK - 1) // CHUNK)]

    def run_arm(arm: int, eta) -> int:
        if threads <= 1:
            return _run_chunks(rule, eta, eps, seed, experiment_id, arm,
                               chunks, K)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_chunks, rule, eta, eps, seed,
                                   experiment_id, arm, chunks[t::threads], K)
                       for t in range(threads)]
            return sum(f.result() for f in futures)

    null_rejects = run_arm(0, None)
    alt_rejects = run_arm(1, eta_row)

    alpha_hat = null_rejects / reps
    beta_hat = (reps - alt_rejects) / reps
    ci_alpha = wilson_halfwidth(null_rejects, reps)
    ci_beta = wilson_halfwidth(reps - alt_rejects, reps)
    theory = None
    if theory_D is not None:
        theory = theoretical_errors(alpha=theory_alpha, D=theory_D)
    elif theory_u is not None:
        theory = theoretical_errors(u=theory_u, alpha=theory_alpha)
    return MonteCarloReport(
        reps=reps, alpha_hat=alpha_hat, beta_hat=beta_hat,
        gamma_hat=alpha_hat + beta_hat,
        ci_halfwidths={"alpha": ci_alpha, "beta": ci_beta,
                       "gamma": ci_alpha + ci_beta},
        theory=theory, seed=int(seed))


def trace_outcomes(rule: TestRule, eta, eps: float, reps: int, seed: int,
                   path, rule_id: str = "rule", experiment_id: int = 0,
                   arm: int = 1) -> None:
    """Per-replicate outcome rows (rule_id, rep, statistic, reject) as CSV.

    Uses the same chunked stream layout as :func:`estimate_errors` (arm 0 is
    the null side, arm 1 the alternative side of a report with this seed).
    """
    eta_row = None if eta is None else np.asarray(eta, dtype=float)
    K = eta_row.size if eta_row is not None else None
    if K is None:
        raise ValueError("trace needs an explicit alternative (use zeros for the null)")
    lines = ["rule_id,rep,statistic,reject"]
    done = 0
    ci = 0
    while done < reps:
        n = min(CHUNK, reps - done)
        stream = make_stream(seed, experiment_id, 2 * ci + arm)
        Y = eps * stream.standard_normal((n, K))
        coins = stream.random(n)
        if np.any(eta_row):
            Y[:, : eta_row.size] += eta_row
        stats, _, prob = batch_apply(rule, Y, eps)
        rejected = coins < prob
        for i in range(n):
            lines.append(f"{rule_id},{done + i},{stats[i]:.17g},{int(rejected[i])}")
        done += n
        ci += 1
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def likelihood_diagnostic(eta, eps: float, reps: int, seed: int,
                          experiment_id: int = 0) -> dict:
    """Second moment of the sign-mixture likelihood ratio under the null.

    lhs averages L^2 over null draws with
    L = prod_k exp(-eta_k^2 / 2 eps^2) cosh(y_k eta_k / eps^2); the closed
    form rhs is prod_k cosh(eta_k^2 / eps^2).  A normal 95% CI on the Monte
    Carlo average is attached.  Requires max eta_k^2/eps^2 <= 1/2: beyond
    that the estimator's tails make desk-scale averages meaningless.
    """
    eta = np.asarray(eta, dtype=float)
    snr = eta ** 2 / eps ** 2
    if snr.size == 0 or float(np.max(snr, initial=0.0)) > 0.5:
        raise ValueError(
            "refusing heavy-tailed diagnostic: need max eta_k^2/eps^2 <= 0.5")
    K = eta.size
    total = 0.0
    total_sq = 0.0
    done = 0
    ci = 0
    while done < reps:
        n = min(CHUNK, reps - done)
        stream = make_stream(seed, experiment_id, ci)
        Y = eps * stream.standard_normal((n, K))
        log_l = (np.log(np.cosh(Y * eta / eps ** 2)) - snr / 2.0).sum(axis=1)
        l_sq = np.exp(2.0 * log_l)
        total += stable_sum(l_sq)
        total_sq += stable_sum(l_sq * l_sq)
        done += n
        ci += 1
    mean = total / reps
    var = max(total_sq / reps - mean * mean, 0.0)
    rhs = float(np.exp(np.sum(np.log(np.cosh(snr)))))
    return {"lhs": mean, "rhs": rhs,
            "ci": 1.959963984540054 * math.sqrt(var / reps)}


def rate_fit(points) -> dict:
    """Least-squares slope of ln u against ln r with its R^2.

    Needs at least five points spanning two decades in r; anything narrower
    cannot pin an asymptotic exponent.
    """
    pts = [(float(r), float(u)) for r, u in points]
    if len(pts) < 5:
        raise ValueError("rate fit needs at least 5 points")
    r = np.array([p[0] for p in pts])
    u = np.array([p[1] for p in pts])
    if np.any(r <= 0.0) or np.any(u <= 0.0):
        raise ValueError("rate fit needs positive (r, u) pairs")
    if r.max() / r.min() < 100.0:
        raise ValueError("degenerate spread: points must span two decades in r")
    x = np.log(r)
    y = np.log(u)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return {"slope": float(slope), "r2": r2}
