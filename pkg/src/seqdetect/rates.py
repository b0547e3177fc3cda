"""Separation rates, sharp variants, adaptive rates, and payment classes.

Rates are reported as callables of eps together with their named exponents
and log powers.  Multiplicative constants the theory leaves unspecified are
fixed to 1 and flagged in the result metadata; only exponents and log powers
are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .extreme import sparse_lambda, u_piecewise
from .spectra import ProblemSpec

PAIRS = ("mild_sobolev", "mild_analytic", "severe_sobolev", "severe_analytic")

PAYMENT_NONE = "none"
PAYMENT_SQRT_LOGLOG = "sqrt_loglog"
PAYMENT_LOGLOG = "loglog"


@dataclass(frozen=True)
class RateResult:
    pair: str
    r_star: Callable[[float], float]
    exponents: dict
    sharp: bool
    formula: str
    payment_class: str | None = None
    constants_fixed_to_one: bool = True

    def __call__(self, eps: float) -> float:
        return self.r_star(eps)


def _loglog(eps: float) -> float:
    value = math.log(math.log(1.0 / eps))
    if value <= 0.0:
        raise ValueError("eps too large for a log-log correction")
    return value


def separation_rate(alpha: float, beta: float, q: float, pair: str) -> RateResult:
    """Separation radius r*(eps) for the supported regime pairs.

    mild_sobolev q=2    eps^{4a/(4a+4b+1)}
    mild_sobolev q<2    lambda > 0: eps^{(2a+1/q-1/2)/(2(a+b)+1/q)}
                        lambda <= 0: Lambda eps^{a/(a+b)} ln(1/eps)^{a/2(a+b)},
                        Lambda = (2/(a+b))^{a/2(a+b)} (sharp)
    mild_analytic       eps ln(1/eps)^{b+1/4}
    severe_sobolev      (ln(1/eps)/b)^{-a} (sharp; see sharp_severe_sobolev)
    severe_analytic     eps^{a/(a+b)}

    There is no closed form in the extreme regime; use
    extreme_separation_radius, which inverts the piecewise-linear criterion.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if not 0.0 < q <= 2.0:
        raise ValueError("q must lie in (0, 2]")
    if pair == "mild_sobolev":
        if q == 2.0:
            e = 4.0 * alpha / (4.0 * alpha + 4.0 * beta + 1.0)
            return RateResult(pair, lambda eps: eps ** e, {"eps_exponent": e},
                              sharp=False, formula=f"eps^{e:.6g}")
        lam = sparse_lambda(alpha, beta, q)
        if lam > 0.0:
            e = (2.0 * alpha + 1.0 / q - 0.5) / (2.0 * (alpha + beta) + 1.0 / q)
            return RateResult(pair, lambda eps: eps ** e,
                              {"eps_exponent": e, "lambda": lam},
                              sharp=False, formula=f"eps^{e:.6g}")
        e = alpha / (alpha + beta)
        logp = alpha / (2.0 * (alpha + beta))
        Lam = (2.0 / (alpha + beta)) ** logp
        return RateResult(
            pair,
            lambda eps: Lam * eps ** e * math.log(1.0 / eps) ** logp,
            {"eps_exponent": e, "log_power": logp, "Lambda": Lam, "lambda": lam},
            sharp=True, formula=f"{Lam:.6g} eps^{e:.6g} ln(1/eps)^{logp:.6g}",
            constants_fixed_to_one=False)
    if pair == "mild_analytic":
        e = beta + 0.25
        return RateResult(pair, lambda eps: eps * math.log(1.0 / eps) ** e,
                          {"eps_exponent": 1.0, "log_power": e},
                          sharp=False, formula=f"eps ln(1/eps)^{e:.6g}")
    if pair == "severe_sobolev":
        return RateResult(pair, lambda eps: (math.log(1.0 / eps) / beta) ** -alpha,
                          {"log_power": -alpha},
                          sharp=True, formula=f"(ln(1/eps)/{beta:.6g})^-{alpha:.6g}",
                          constants_fixed_to_one=False)
    if pair == "severe_analytic":
        e = alpha / (alpha + beta)
        return RateResult(pair, lambda eps: eps ** e, {"eps_exponent": e},
                          sharp=False, formula=f"eps^{e:.6g}")
    raise ValueError(
        f"unsupported pair {pair!r}: the extreme regime has no closed-form "
        "rate; use extreme_separation_radius (piecewise-linear criterion)")


def sharp_severe_sobolev(alpha: float, beta: float, eps: float) -> float:
    """Second-order severe-Sobolev radius:
    r* = ((ln(1/eps) - alpha ln ln(1/eps)) / beta)^-alpha, the O(1) term set
    to zero.  Needs eps < e^-e so the corrected log stays positive."""
    if eps >= math.exp(-math.e):
        raise ValueError("eps must be below exp(-e)")
    ln = math.log(1.0 / eps)
    return ((ln - alpha * math.log(ln)) / beta) ** -alpha


def adaptive_rate(alpha: float, beta: float, q: float, pair: str) -> RateResult:
    """Adaptive separation rates with the regime's payment for adaptation.

    Payments (the growth the adaptive distinguishability constant forces on
    u): none for mild_analytic, sqrt(ln ln(1/eps)) for mild_sobolev, and
    ln ln(1/eps) for the severe pairs.  They enter the rate through noise
    inflation: eps(ln ln(1/eps))^{1/4} for mild_sobolev (q = 2 and the
    lambda > 0 sparse range alike) and eps sqrt(ln ln(1/eps)) for
    severe_analytic; severe_sobolev keeps its log-rate with an interior
    log-log-log correction.
    """
    base = separation_rate(alpha, beta, q, pair)
    if pair == "mild_analytic":
        return RateResult(pair, base.r_star, base.exponents, base.sharp,
                          base.formula, payment_class=PAYMENT_NONE)
    if pair == "mild_sobolev":
        lam = base.exponents.get("lambda")
        if lam is not None and lam <= 0.0:
            # degenerate range: the thresholding rule is parameter-free
            return RateResult(pair, base.r_star, base.exponents, base.sharp,
                              base.formula, payment_class=PAYMENT_NONE,
                              constants_fixed_to_one=base.constants_fixed_to_one)
        e = base.exponents["eps_exponent"]

        def r_ad(eps: float) -> float:
            return (eps * _loglog(eps) ** 0.25) ** e

        return RateResult(pair, r_ad, dict(base.exponents, loglog_power=e / 4.0),
                          sharp=False, formula=f"(eps (lnln)^(1/4))^{e:.6g}",
                          payment_class=PAYMENT_SQRT_LOGLOG)
    if pair == "severe_analytic":
        e = base.exponents["eps_exponent"]

        def r_ad(eps: float) -> float:
            return (eps * math.sqrt(_loglog(eps))) ** e

        return RateResult(pair, r_ad, dict(base.exponents, loglog_power=e / 2.0),
                          sharp=False, formula=f"(eps sqrt(lnln))^{e:.6g}",
                          payment_class=PAYMENT_LOGLOG)
    if pair == "severe_sobolev":
        def r_ad(eps: float) -> float:
            ln = math.log(1.0 / eps)
            inner = (2.0 * ln - 2.0 * alpha * math.log(ln)
                     - math.log(max(math.log(ln), 1.0))) / (2.0 * beta)
            if inner <= 0.0:
                raise ValueError("eps too large for the adaptive severe rate")
            return inner ** -alpha

        return RateResult(pair, r_ad, {"log_power": -alpha}, sharp=True,
                          formula="((2 ln - 2a lnln - lnlnln)/2b)^-a",
                          payment_class=PAYMENT_LOGLOG,
                          constants_fixed_to_one=False)
    raise ValueError(
        f"unsupported pair {pair!r}: extreme-regime adaptation pays ln ln(1/eps) "
        "on top of the piecewise-linear criterion")


def u_inf_over_sigma(values) -> float:
    """Worst-case detection value over a parameter set: the plain minimum."""
    values = list(values)
    if not values:
        raise ValueError("need at least one detection value")
    return min(values)


def adaptive_margin(u_values, eps: float) -> float:
    """u(Sigma) / ln ln(1/eps), the margin the adaptive grid tests need to
    grow without bound."""
    return u_inf_over_sigma(u_values) / _loglog(eps)


def extreme_separation_radius(spec: ProblemSpec, target: float = 1.0,
                              tol: float = 1e-10) -> float:
    """Radius where the piecewise-linear value crosses ``target``; this is
    the separation criterion in the extreme regime, solved by bisection on
    ln r (the piecewise-linear value is increasing in r)."""
    ln_a = spec.a.log_values(spec.K)
    lo, hi = -float(ln_a[-1]), -float(ln_a[0]) - 1e-12
    f_lo = u_piecewise(_with_r(spec, math.exp(lo))).u_lin
    f_hi = u_piecewise(_with_r(spec, math.exp(hi))).u_lin
    if not f_lo < target < f_hi:
        raise ValueError(
            f"target {target} outside the reachable range [{f_lo:.3g}, {f_hi:.3g}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if u_piecewise(_with_r(spec, math.exp(mid))).u_lin < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return math.exp(0.5 * (lo + hi))


def _with_r(spec: ProblemSpec, r: float) -> ProblemSpec:
    return ProblemSpec(a=spec.a, sigma=spec.sigma, q=spec.q, r=r,
                       eps=spec.eps, K=spec.K)
