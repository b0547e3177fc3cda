"""Extreme problems behind the detection value.

The central object is the fourth-moment minimization

    u^2 = (1 / 2 eps^4) * inf { sum_k eta_k^4 }

over the quadratic body { sum a_k^2 sigma_k^2 eta_k^2 <= 1 } intersected
with the energy shell { sum sigma_k^2 eta_k^2 >= r^2 }.  Lagrange duality
turns it into a water-filling system: the minimizer is

    eta_k^2 = z0^2 sigma_k^2 (1 - A a_k^2)_+,

with the multiplier A pinned down by a strictly monotone radius map, so a
bisection solves the problem exactly.  The module also carries the
closed-form regime asymptotics, the piecewise (in r^2) approximations used
when sigma grows super-exponentially, the sparse and dyadic-level variants
driven by sinh-type objectives, and the sup-coordinate problem whose
solution is flat except for its last coordinate.

All internal sums run in log space / extended precision: severe and extreme
regimes put sigma_k^4 far outside double range long before the answers
themselves become unrepresentable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numutil import log_sum_exp, safe_exp, stable_sum
from .spectra import BesovSpec, ProblemSpec

_BISECT_MAX_ITER = 200
_BISECT_TOL = 1e-13          # absolute on ln A; ~ relative on A
_MAX_WORKING_LENGTH = 1 << 21
_FEASIBILITY_NUDGE = 6e-14


@dataclass(frozen=True)
class ExtremeSolution:
    """Solved water-filling system for one problem instance.

    eta_sq holds the least-favorable squared sequence on its support
    (length m, zero beyond), w the chi-square weights eta_sq / sqrt(2 sum
    eta_sq^2) with sum w^2 = 1/2, and u the detection value.
    """

    A: float
    m: int
    z0_sq: float
    eta_sq: np.ndarray
    u: float
    w: np.ndarray
    w0: float

    def least_favorable(self, K: int | None = None) -> np.ndarray:
        """Positive square roots of eta_sq, zero-padded to length K."""
        n = self.m if K is None else K
        if n < self.m:
            raise ValueError("K must cover the support")
        eta = np.zeros(n)
        eta[:self.m] = np.sqrt(self.eta_sq)
        return eta

    def to_json_dict(self) -> dict:
        return {"A": self.A, "m": self.m, "z0_sq": self.z0_sq, "u": self.u,
                "w0": self.w0, "eta_sq": self.eta_sq.tolist(),
                "w": self.w.tolist()}


class _Working:
    """Log-space views of (a_k, sigma_k), k = 1..K, grown on demand."""

    def __init__(self, spec: ProblemSpec, K: int):
        self.spec = spec
        self.resize(K)

    def resize(self, K: int):
        K = min(K, self.spec.a.max_index, self.spec.sigma.max_index)
        self.K = K
        self.ln_a = self.spec.a.log_values(K)
        self.ln_s = self.spec.sigma.log_values(K)

    def can_grow(self) -> bool:
        limit = min(self.spec.a.max_index, self.spec.sigma.max_index,
                    _MAX_WORKING_LENGTH)
        return self.K < limit


def _support_length(w: _Working, ln_A: float) -> int:
    """Largest m with A * a_m^2 <= 1."""
    return int(np.searchsorted(ln_A + 2.0 * w.ln_a, 0.0, side="right"))


def _gaps(w: _Working, m: int, ln_A: float, ln_g: float | None) -> np.ndarray:
    """(1 - A a_k^2) for k <= m.  When ln_g is given, A is parametrized as
    a_m^-2 (1 - g); the k = m gap is then g exactly, which keeps the solver
    accurate when the multiplier sits exponentially close to a breakpoint."""
    if ln_g is None:
        return -np.expm1(ln_A + 2.0 * w.ln_a[:m])
    s = math.log1p(-math.exp(ln_g)) + 2.0 * (w.ln_a[:m] - w.ln_a[m - 1])
    gap = -np.expm1(s)
    gap[m - 1] = math.exp(ln_g)
    return gap


def _ln_r2(w: _Working, ln_A: float, m: int | None = None,
           ln_g: float | None = None) -> float:
    """ln r^2(A) where r(A)^2 = sum sigma^4 (1-Aa^2)_+ / sum sigma^4 a^2 (1-Aa^2)_+.

    Both sums are scaled by exp(-max 4 ln sigma); the scale cancels in the
    ratio, so the value is finite even when sigma_k^4 overflows a double.
    """
    if m is None:
        m = _support_length(w, ln_A)
    if m < 1:
        raise ValueError("multiplier A outside (0, a_2^-2]")
    gap = _gaps(w, m, ln_A, ln_g)
    t = 4.0 * w.ln_s[:m]
    base = np.exp(t - t[-1])             # sigma_k^4 scaled by sigma_m^-4
    aa = np.exp(2.0 * (w.ln_a[:m] - w.ln_a[m - 1]))
    num = stable_sum(base * gap)
    den = stable_sum(base * aa * gap)    # sum sigma^4 a^2 gap, scaled by a_m^-2 too
    if num <= 0.0 or den <= 0.0:
        raise ValueError("degenerate radius map; A too close to a_2^-2")
    return -2.0 * w.ln_a[m - 1] + math.log(num) - math.log(den)


def r_of_A(A: float, spec: ProblemSpec) -> float:
    """Radius reached by the multiplier A; strictly increasing on (0, a_2^-2].

    The closed form is r(A)^2 = sum_{k<=m} sigma_k^4 (1 - A a_k^2) /
    sum_{k<=m} sigma_k^4 a_k^2 (1 - A a_k^2) with m the largest index
    satisfying A a_m^2 <= 1.
    """
    if not A > 0.0:
        raise ValueError("multiplier A must be positive")
    w = _Working(spec, spec.K)
    ln_A = math.log(A)
    if ln_A > -2.0 * w.ln_a[1]:
        raise ValueError("multiplier A outside (0, a_2^-2]")
    return safe_exp(0.5 * _ln_r2(w, ln_A), "radius")


def solve_extreme(spec: ProblemSpec) -> ExtremeSolution:
    """Exact least-favorable sequence and detection value for q = 2.

    Bisects the strictly monotone radius map on ln A to relative tolerance
    1e-12, then recovers z0^2 = r^2 / J1, the squared sequence and the
    weights.  The working range doubles automatically while the requested
    radius sits below the smallest reachable one.
    """
    if spec.q != 2.0:
        raise ValueError("exact solver covers the quadratic body only (q = 2)")
    w = _Working(spec, spec.K)
    # Solve at a radius inflated by ~6e-14 and shrink the sequence back by
    # the same amount afterwards: both constraints then hold with ~1e-13
    # relative slack, so double-arithmetic membership of the least-favorable
    # point is deterministic.  The shift is far below every tolerance the
    # solution is held to.
    ln_r_target = 2.0 * (math.log(spec.r) + _FEASIBILITY_NUDGE)

    while True:
        lo = -2.0 * w.ln_a[-1]
        hi = -2.0 * w.ln_a[1] + math.log1p(-1e-12)
        if lo < hi and _ln_r2(w, lo) < ln_r_target:
            break
        if not w.can_grow():
            raise ValueError(
                "radius outside solvable range: r is below the smallest radius "
                f"reachable with working length {w.K}")
        w.resize(2 * w.K)
    if _ln_r2(w, math.nan, 2, -745.0) <= ln_r_target:
        raise ValueError(
            "radius outside solvable range: r must stay below the radius "
            "reached as A approaches a_2^-2")

    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if _ln_r2(w, mid) < ln_r_target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _BISECT_TOL:
            break
    else:
        raise RuntimeError(
            f"bisection failed to converge after {_BISECT_MAX_ITER} iterations "
            f"(bracket width {hi - lo:.3g} on ln A)")

    # Refinement in the gap variable g = 1 - A a_m^2.  In steep regimes the
    # root sits within e^-30 or less of the breakpoint a_m^-2, far below the
    # absolute resolution of ln A; bisecting ln g restores full precision.
    m_coarse = _support_length(w, 0.5 * (lo + hi))
    for m in (m_coarse, m_coarse - 1, m_coarse + 1):
        if not 2 <= m < w.K:
            continue
        g_top = -math.expm1(2.0 * (w.ln_a[m - 1] - w.ln_a[m]))  # A = a_{m+1}^-2
        g_lo, g_hi = -745.0, math.log(g_top)
        slack = 1e-9
        if (_ln_r2(w, math.nan, m, g_lo) + slack >= ln_r_target
                > _ln_r2(w, math.nan, m, g_hi) - slack):
            break
    else:
        raise RuntimeError("failed to isolate the efficient dimension bracket")
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (g_lo + g_hi)
        if _ln_r2(w, math.nan, m, mid) < ln_r_target:
            g_hi = mid
        else:
            g_lo = mid
        if g_hi - g_lo <= _BISECT_TOL:
            break
    return _assemble(spec, w, m, 0.5 * (g_lo + g_hi))


def _assemble(spec: ProblemSpec, w: _Working, m: int, ln_g: float) -> ExtremeSolution:
    ln_A = -2.0 * w.ln_a[m - 1] + math.log1p(-math.exp(ln_g))
    gap = _gaps(w, m, ln_A, ln_g)
    scale = 4.0 * w.ln_s[m - 1]
    base = np.exp(4.0 * w.ln_s[:m] - scale)
    J1_scaled = stable_sum(base * gap)            # J1 * exp(-scale)
    J0_scaled = stable_sum(base * gap * gap)      # J0 * exp(-scale)

    # solved at r (1 + nudge); pull the sequence back by one nudge so both
    # constraints keep ~1e-13 slack (see solve_extreme)
    ln_r_eff = math.log(spec.r) + _FEASIBILITY_NUDGE
    ln_z0_sq = 2.0 * ln_r_eff - math.log(J1_scaled) - scale - _FEASIBILITY_NUDGE
    with np.errstate(divide="ignore"):
        ln_eta_sq = ln_z0_sq + 2.0 * w.ln_s[:m] + np.log(gap)
    eta_sq = np.exp(ln_eta_sq)

    # u^2 = (r/eps)^4 J0 / (2 J1^2), evaluated in logs at the emitted sequence
    ln_u_sq = (4.0 * (ln_r_eff - math.log(spec.eps))
               + math.log(J0_scaled) - 2.0 * math.log(J1_scaled) - math.log(2.0)
               - scale - 2.0 * _FEASIBILITY_NUDGE)
    u = safe_exp(0.5 * ln_u_sq, "detection value u")

    # w_k = eta_k^2 / sqrt(2 sum eta^4); the sum is formed in log space
    # because eta^4 may underflow even when the weights do not.
    ln_sum4 = log_sum_exp(2.0 * ln_eta_sq)
    ln_w = ln_eta_sq - 0.5 * (math.log(2.0) + ln_sum4)
    weights = np.exp(ln_w)
    weights.setflags(write=False)
    eta_sq.setflags(write=False)

    return ExtremeSolution(
        A=safe_exp(ln_A, "multiplier A"), m=m,
        z0_sq=math.exp(ln_z0_sq) if ln_z0_sq >= -745.0 else 0.0,
        eta_sq=eta_sq, u=u, w=weights, w0=float(weights.max()))


def solution_residuals(spec: ProblemSpec, sol: ExtremeSolution) -> dict:
    """Relative residuals of the two active constraints and of the two
    equivalent expressions for u^2 (direct fourth-moment sum vs the
    J0/J1^2 form)."""
    m = sol.m
    ln_a = spec.a.log_values(m)
    ln_s = spec.sigma.log_values(m)
    with np.errstate(divide="ignore"):
        ln_eta = np.log(sol.eta_sq)
    ln_energy = log_sum_exp(2.0 * ln_s + ln_eta)
    ln_body = log_sum_exp(2.0 * ln_a + 2.0 * ln_s + ln_eta)
    ln_u_direct = 0.5 * (log_sum_exp(2.0 * ln_eta) - math.log(2.0)) \
        - 2.0 * math.log(spec.eps)
    return {
        "energy": abs(math.expm1(ln_energy - 2.0 * math.log(spec.r))),
        "body": abs(math.expm1(ln_body)),
        "u_cross": abs(math.expm1(ln_u_direct - math.log(sol.u))),
    }


def weighted_mean_shift(sol: ExtremeSolution, eps: float) -> float:
    """Mean shift of the weighted chi-square statistic at the least-favorable
    point, eps^-2 sum w_k eta_k^2; algebraically equal to u."""
    return stable_sum(sol.w * sol.eta_sq) / eps ** 2


# ---------------------------------------------------------------------------
# closed-form regime asymptotics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticValue:
    u: float
    m: float


def mild_sobolev_constants(alpha: float, beta: float) -> dict:
    """Limit constants of the scaled water-filling sums for polynomial a and
    sigma: d1, d2, d0 are the integrals of x^{4b}(1-x^{2a}), x^{2a+4b}(1-x^{2a})
    and x^{4b}(1-x^{2a})^2 on (0,1); c1 and c2 are the radius and value
    constants built from them."""
    p = 4.0 * beta + 1.0
    d1 = 2.0 * alpha / (p * (p + 2.0 * alpha))
    d2 = 2.0 * alpha / ((p + 2.0 * alpha) * (p + 4.0 * alpha))
    d0 = 8.0 * alpha ** 2 / (p * (p + 2.0 * alpha) * (p + 4.0 * alpha))
    c1 = (d1 / d2) ** (1.0 / (2.0 * alpha))
    c2 = (d2 / d1) ** (p / (2.0 * alpha)) * d0 / (2.0 * d1 ** 2)
    return {"d0": d0, "d1": d1, "d2": d2, "c1": c1, "c2": c2}


def u_asymptotic(spec: ProblemSpec) -> AsymptoticValue:
    """Closed-form asymptotic detection value and real-valued efficient
    dimension for the four (a-kind, sigma-kind) regime pairs.

    polynomial/polynomial      u^2 ~ c2 eps^-4 r^{(4a+4b+1)/a},  m ~ c1 r^{-1/a}
    exponential/exponential    u ~ eps^-2 r^{2(a+b)/a},          m ~ ln(1/r)/a
    polynomial/exponential     u^2 ~ eps^-4 m^{-4a} e^{-4bm} A2/(2 A1^2), m ~ r^{-1/a}
    exponential/polynomial     u^2 ~ (4b+1)/2 (r/eps)^4 m^{-(4b+1)},      m ~ ln(1/r)/a

    Scaled sequences are reduced to scale one through the rescaling identity
    u_{Ca, Dsigma}(r) = (CD)^-2 u(Cr).
    """
    kinds = (spec.a.kind, spec.sigma.kind)
    for kind in kinds:
        if kind not in ("polynomial", "exponential"):
            raise ValueError(
                f"no closed-form asymptotics for sequence kind {kind!r}: "
                "use u_lin for extreme regime")
    C, D = spec.a.scale, spec.sigma.scale
    alpha, beta = spec.a.exponent, spec.sigma.exponent
    r, eps = C * spec.r, spec.eps
    rescale = (C * D) ** -2

    if kinds == ("polynomial", "polynomial"):
        c = mild_sobolev_constants(alpha, beta)
        u = math.sqrt(c["c2"]) * eps ** -2 * r ** ((4 * alpha + 4 * beta + 1) / (2 * alpha))
        m = c["c1"] * r ** (-1.0 / alpha)
    elif kinds == ("exponential", "exponential"):
        u = eps ** -2 * r ** (2.0 * (alpha + beta) / alpha)
        m = math.log(1.0 / r) / alpha
    elif kinds == ("polynomial", "exponential"):
        t = math.exp(-4.0 * beta)
        A1 = t / (1.0 - t) ** 2                      # sum l t^l
        A2 = t * (1.0 + t) / (1.0 - t) ** 3          # sum l^2 t^l
        # r^2 = m^-2a (1 + J0/J1) with J0/J1 = 2a A2 / (A1 m); the O(1)
        # dimension shift matters because u decays like exp(-2 b m).
        m = r ** (-1.0 / alpha)
        for _ in range(4):
            m = r ** (-1.0 / alpha) * (1.0 + 2.0 * alpha * A2 / (A1 * m)) ** (1.0 / (2.0 * alpha))
        ln_u = (-2.0 * math.log(eps) - 2.0 * alpha * math.log(m) - 2.0 * beta * m
                + 0.5 * math.log(A2 / 2.0) - math.log(A1))
        u = safe_exp(ln_u, "asymptotic u")
    else:
        m = math.log(1.0 / r) / alpha
        u = math.sqrt((4.0 * beta + 1.0) / 2.0) * (r / eps) ** 2 \
            * m ** (-(4.0 * beta + 1.0) / 2.0)
    return AsymptoticValue(u=rescale * u, m=m)


# ---------------------------------------------------------------------------
# extreme regime: piecewise quadratic / linear approximations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinApprox:
    m: int
    u_star: float
    u_lin: float
    interval: tuple


def check_super_exponential(sigma, K: int) -> bool:
    """Numeric stand-in for the extreme-regime growth assumption: consecutive
    log-increments of sigma must increase, and grow overall."""
    steps = np.diff(sigma.log_values(K))
    if steps.size < 2:
        return False
    return bool(np.all(np.diff(steps) > 0.0) and steps[-1] > steps[0])


def u_piecewise(spec: ProblemSpec) -> LinApprox:
    """Piecewise approximations of the detection value when sigma grows
    super-exponentially.

    With m located by r in [1/a_m, 1/a_{m-1}], only the last two coordinates
    matter and

      u*^2  = (1 / 2 eps^4 (a_m^2-a_{m-1}^2)^2) ((a_m^2 r^2-1)^2/sigma_{m-1}^4
                                                + (1-a_{m-1}^2 r^2)^2/sigma_m^4),
      u_lin = (1 /   eps^2 (a_m^2-a_{m-1}^2))   ((a_m^2 r^2-1)  /sigma_{m-1}^2
                                                + (1-a_{m-1}^2 r^2)  /sigma_m^2),

    quadratic respectively linear in r^2, with u_lin/2 <= u* <= u_lin/sqrt(2).
    """
    K = spec.K
    if not check_super_exponential(spec.sigma, min(K, 64) if spec.sigma.kind != "explicit-table" else K):
        raise ValueError("sigma does not satisfy the super-exponential growth check")
    ln_a = spec.a.log_values(K)
    ln_r = math.log(spec.r)
    if ln_r >= -ln_a[0]:
        raise ValueError("r must lie below 1/a_1 for the piecewise approximation")
    # m is the first index with a_m >= 1/r, i.e. r in [1/a_m, 1/a_{m-1}]
    m = int(np.searchsorted(ln_a, -ln_r, side="left")) + 1
    if m > K:
        raise ValueError(f"r below 1/a_K at working length {K}; increase K")
    m = max(m, 2)
    ln_s = spec.sigma.log_values(m)

    # x = (a_m^2 r^2 - 1)/sigma_{m-1}^2 >= 0, y = (1 - a_{m-1}^2 r^2)/sigma_m^2 >= 0
    xm1 = math.expm1(2.0 * ln_a[m - 1] + 2.0 * ln_r)
    ym1 = -math.expm1(2.0 * ln_a[m - 2] + 2.0 * ln_r)
    with np.errstate(divide="ignore"):
        ln_x = (math.log(xm1) if xm1 > 0.0 else -math.inf) - 2.0 * ln_s[m - 2]
        ln_y = (math.log(ym1) if ym1 > 0.0 else -math.inf) - 2.0 * ln_s[m - 1]
    ln_den = 2.0 * ln_a[m - 1] + math.log1p(-math.exp(2.0 * (ln_a[m - 2] - ln_a[m - 1])))
    ln_eps2 = 2.0 * math.log(spec.eps)

    # u* / u_lin = sqrt(1 + t^2) / (sqrt(2) (1 + t)) with t = min(x,y)/max(x,y);
    # deriving u* from the ratio keeps the u_lin/2 <= u* <= u_lin/sqrt(2)
    # sandwich exact in floating point, including at the break points (t = 0).
    ln_hi, ln_lo = max(ln_x, ln_y), min(ln_x, ln_y)
    t = 0.0 if ln_lo == -math.inf else math.exp(ln_lo - ln_hi)
    ratio = math.sqrt(1.0 + t * t) / (math.sqrt(2.0) * (1.0 + t))
    u_lin = safe_exp(ln_hi - ln_den - ln_eps2, "piecewise u_lin") * (1.0 + t)
    return LinApprox(
        m=m,
        u_star=u_lin * ratio,
        u_lin=u_lin,
        interval=(math.exp(-ln_a[m - 1]), math.exp(-ln_a[m - 2])))


# ---------------------------------------------------------------------------
# sparse (q < 2) and dyadic-level extreme problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseSolution:
    """Solution of a sinh-type extreme problem: spike heights h in [0,1],
    spike sizes z >= 0, value u, fitted effective dimension and height."""

    h: np.ndarray
    z: np.ndarray
    u: float
    n_eff: float
    h0: float

    def to_json_dict(self) -> dict:
        return {"u": self.u, "n_eff": self.n_eff, "h0": self.h0,
                "h": self.h.tolist(), "z": self.z.tolist()}


def sparse_lambda(alpha: float, beta: float, q: float) -> float:
    """Gate between the Gaussian-type (> 0) and degenerate (<= 0) sparse cases."""
    return (alpha + beta) / 2.0 - beta / q


def _shrink_delta(eps: float) -> float:
    """Canonical radius shrink factor: vanishes slowly enough that
    delta * ln(1/eps) still diverges."""
    if eps >= math.exp(-1.0):
        raise ValueError("sparse solvers need eps < exp(-1)")
    return 1.0 / math.log(1.0 / eps)


def _sparse_objective(h, z, mult):
    return 2.0 * stable_sum(mult * h * h * np.sinh(z * z / 2.0) ** 2)


def sparse_constraint_slacks(spec: ProblemSpec, h, z) -> dict:
    """Signed slack of the two sparse constraints at (h, z); negative energy
    slack flags an infeasible point (the zero point in particular)."""
    h = np.asarray(h, float)
    z = np.asarray(z, float)
    i = np.arange(1, h.size + 1, dtype=float)
    alpha, beta, q = spec.a.exponent, spec.sigma.exponent, spec.q
    E = (spec.r * (1.0 - _shrink_delta(spec.eps))) ** 2 / spec.eps ** 2
    C = spec.eps ** -q
    energy = stable_sum(i ** (2 * beta) * h * z * z) - E
    body = C - stable_sum(i ** (q * (alpha + beta)) * h * z ** q)
    return {"energy": energy, "body": body}


def _coordinate_profiles(nu, mu, M, g, B, ph, pz, z_grid):
    """Per-coordinate minimizers of the Lagrangian
    2 M h^2 s(z) - nu g h z^2 + mu B h^ph z^pz over h in [0,1], z on a grid.

    For ph = 1 the inner h is the clipped stationary point in closed form;
    for ph > 1 the stationarity condition is monotone in h and solved by a
    vectorized bisection.  Coordinates whose best Lagrangian value is
    non-negative stay at zero.
    """
    z = z_grid[None, :]
    s = (np.sinh(z_grid ** 2 / 2.0) ** 2)[None, :]
    gain = nu * g[:, None] * z ** 2
    price = mu * B[:, None] * z ** pz
    if ph == 1.0:
        h = np.clip((gain - price) / (4.0 * M[:, None] * s), 0.0, 1.0)
    else:
        lo = np.zeros_like(gain)
        hi = np.ones_like(gain)
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            f = 4.0 * M[:, None] * mid * s + price * ph * mid ** (ph - 1.0) - gain
            lo = np.where(f < 0.0, mid, lo)
            hi = np.where(f < 0.0, hi, mid)
        h = 0.5 * (lo + hi)
    L = 2.0 * M[:, None] * h * h * s - gain * h + price * h ** ph
    idx = np.argmin(L, axis=1)
    rows = np.arange(h.shape[0])
    h_best = h[rows, idx]
    z_best = z_grid[idx]
    off = L[rows, idx] >= 0.0
    h_best[off] = 0.0
    z_best = np.where(off, 0.0, z_best)
    return h_best, z_best


def _sparse_dual_solve(M, g, B, ph, pz, E, C):
    """Solve  min 2 sum M h^2 sinh^2(z^2/2)  s.t.  sum g h z^2 >= E,
    sum B h^ph z^pz <= C, h in [0,1], z >= 0  through its two-multiplier
    Lagrangian.

    The energy total is increasing in nu and the body total decreasing in
    mu, so a nested bisection (nu inside, mu outside, both on log scale)
    pins the active constraints.  The dual phase runs on a coarse z-grid;
    the per-coordinate refinement afterwards restores full resolution.  The
    grid tops out at z = 26, the largest spike size whose objective term
    sinh^2(z^2/2) still fits in a double.
    """
    z_grid = np.geomspace(2e-3, 26.0, 48)
    nu_floor = [-80.0]   # nu(mu) is increasing in mu: warm-start the bracket

    def energy_at(nu, mu, grid):
        h, z = _coordinate_profiles(nu, mu, M, g, B, ph, pz, grid)
        return stable_sum(g * h * z * z), (h, z)

    def solve_nu(mu, grid):
        lo, hi = nu_floor[0], max(nu_floor[0] + 1.0, 10.0)
        while energy_at(math.exp(hi), mu, grid)[0] < E:
            lo = hi
            hi += 5.0
            if hi > 400.0:
                raise OverflowError(
                    "instance needs spike sizes beyond the representable "
                    "objective range (energy bracket cannot close)")
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            if energy_at(math.exp(mid), mu, grid)[0] < E:
                lo = mid
            else:
                hi = mid
        nu = math.exp(hi)
        _, (h, z) = energy_at(nu, mu, grid)
        return nu, h, z

    def body_of(h, z):
        return stable_sum(B * h ** ph * z ** pz)

    nu, h, z = solve_nu(0.0, z_grid)
    if body_of(h, z) > C:
        # nu(mu) increases with mu, so the mu = 0 solution floors the bracket
        nu_floor[0] = math.log(nu) - 1.0
        lo, hi = -80.0, 0.0
        while body_of(*solve_nu(math.exp(hi), z_grid)[1:]) > C:
            lo = hi
            hi += 5.0
            if hi > 400.0:
                raise OverflowError(
                    "instance needs spike sizes beyond the representable "
                    "objective range (body bracket cannot close)")
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            if body_of(*solve_nu(math.exp(mid), z_grid)[1:]) > C:
                lo = mid
            else:
                hi = mid
        mu = math.exp(hi)
        nu, h, z = solve_nu(mu, z_grid)
    else:
        mu = 0.0

    # refine z locally around the grid optimum at the final multipliers
    step = z_grid[1] / z_grid[0]
    for _ in range(4):
        centers = np.where(z > 0.0, z, z_grid[0])
        fine = np.geomspace(1.0 / step, step, 15)
        best_h, best_z = h.copy(), z.copy()
        s_val = np.sinh(best_z ** 2 / 2.0) ** 2
        best_L = (2.0 * M * best_h ** 2 * s_val - nu * g * best_h * best_z ** 2
                  + mu * B * best_h ** ph * best_z ** pz)
        for factor in fine:
            zz = np.minimum(centers * factor, 26.0)
            hh, _ = _profile_at(nu, mu, M, g, B, ph, pz, zz)
            s_val = np.sinh(zz ** 2 / 2.0) ** 2
            L = (2.0 * M * hh ** 2 * s_val - nu * g * hh * zz ** 2
                 + mu * B * hh ** ph * zz ** pz)
            better = L < best_L
            best_L = np.where(better, L, best_L)
            best_h = np.where(better, hh, best_h)
            best_z = np.where(better, zz, best_z)
        h = np.where(best_L < 0.0, best_h, 0.0)
        z = np.where(best_L < 0.0, best_z, 0.0)
        step = math.sqrt(step)

    # exact feasibility: tighten the energy constraint by scaling z, then
    # relieve any body overshoot by scaling h; the alternation contracts the
    # residual by a factor ~pz/2 per pass
    for _ in range(80):
        energy = stable_sum(g * h * z * z)
        if energy <= 0.0:
            raise RuntimeError("dual solve collapsed to the zero point")
        z = np.minimum(z * math.sqrt(E / energy), 26.0)
        body = body_of(h, z)
        if body <= C * (1.0 + 1e-9):
            if stable_sum(g * h * z * z) >= E * (1.0 - 1e-9):
                break
        else:
            h = h * (C / body) ** (1.0 / ph)
    else:
        raise OverflowError(
            "spike sizes needed for this instance exceed the representable "
            "objective range (sinh overflow)")
    return h, z


def _profile_at(nu, mu, M, g, B, ph, pz, z_vec):
    """Optimal h for given per-coordinate z values (same stationarity as
    :func:`_coordinate_profiles` but with one z per coordinate)."""
    s = np.sinh(z_vec ** 2 / 2.0) ** 2
    gain = nu * g * z_vec ** 2
    price = mu * B * z_vec ** pz
    safe_s = np.where(s > 0.0, s, 1.0)
    if ph == 1.0:
        h = np.clip((gain - price) / (4.0 * M * safe_s), 0.0, 1.0)
    else:
        lo = np.zeros_like(gain)
        hi = np.ones_like(gain)
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            f = 4.0 * M * mid * safe_s + price * ph * mid ** (ph - 1.0) - gain
            lo = np.where(f < 0.0, mid, lo)
            hi = np.where(f < 0.0, hi, mid)
        h = 0.5 * (lo + hi)
    return np.where(s > 0.0, h, 0.0), z_vec


def solve_sparse_extreme(spec: ProblemSpec) -> SparseSolution:
    """Sparse-case extreme problem for polynomial a and sigma with q in (0,2):

        minimize 2 sum_i h_i^2 sinh^2(z_i^2 / 2)
        s.t.     sum_i i^{2 beta} h_i z_i^2      >= (r (1-delta) / eps)^2
                 sum_i i^{q(alpha+beta)} h_i z_i^q <= eps^-q
                 h_i in [0, 1], z_i >= 0.

    A flat ansatz scan (h_i = h0 for i <= n, one common z, energy active and
    h0 capped by the body budget) sizes the working support; the actual
    optimization then runs through the two-multiplier Lagrangian dual, whose
    per-coordinate profiles are exact given the multipliers.  Plain
    coordinate descent cannot serve as the polish here: every allocation
    with an active energy constraint is one of its fixed points.
    """
    if spec.a.kind != "polynomial" or spec.sigma.kind != "polynomial":
        raise ValueError("sparse solver covers the polynomial/polynomial pair")
    if spec.a.scale != 1.0 or spec.sigma.scale != 1.0:
        raise ValueError("sparse solver expects unit-scale sequences")
    if not spec.q < 2.0:
        raise ValueError("sparse solver needs q < 2; use solve_extreme for q = 2")
    alpha, beta, q = spec.a.exponent, spec.sigma.exponent, spec.q
    lam = sparse_lambda(alpha, beta, q)
    if lam <= 0.0:
        raise ValueError("degenerate case: use D_eps")

    E = (spec.r * (1.0 - _shrink_delta(spec.eps))) ** 2 / spec.eps ** 2
    C = spec.eps ** -q
    K = spec.K
    i = np.arange(1, K + 1, dtype=float)
    g = i ** (2.0 * beta)
    b = i ** (q * (alpha + beta))
    S_energy = np.cumsum(g)
    S_body = np.cumsum(b)

    n0 = None
    best = math.inf
    for n in range(1, K + 1):
        P = E / S_energy[n - 1]                    # h0 * z0^2
        Q = C / S_body[n - 1]                      # h0 * z0^q
        z0 = (P / Q) ** (1.0 / (2.0 - q))
        h0 = P / (z0 * z0)
        if h0 > 1.0:
            h0, z0 = 1.0, math.sqrt(P)
            if S_body[n - 1] * z0 ** q > C:
                continue
        if z0 * z0 / 2.0 > 350.0:
            continue
        value = 2.0 * n * h0 * h0 * math.sinh(z0 * z0 / 2.0) ** 2
        if value < best:
            best, n0 = value, n
    if n0 is None:
        raise RuntimeError(
            "sparse ansatz scan found no feasible point; "
            f"slacks at zero: {sparse_constraint_slacks(spec, np.zeros(K), np.zeros(K))}")

    n_work = min(K, max(8 * n0 + 8, 32))
    h_w, z_w = _sparse_dual_solve(np.ones(n_work), g[:n_work], b[:n_work],
                                  1.0, q, E, C)
    h = np.zeros(K)
    z = np.zeros(K)
    h[:n_work] = h_w
    z[:n_work] = z_w
    value = _sparse_objective(h, z, 1.0)

    slacks = sparse_constraint_slacks(spec, h, z)
    if slacks["energy"] < -1e-6 * E or slacks["body"] < -1e-6 * C:
        raise RuntimeError(f"sparse solve left the feasible set: {slacks}")
    return SparseSolution(h=h, z=z, u=math.sqrt(value),
                          n_eff=float(np.count_nonzero(h > 0.0)),
                          h0=float(h.max(initial=0.0)))


def D_eps(spec: ProblemSpec) -> float:
    """Degenerate-case deviation parameter for the sparse thresholding test:
    D = n^-beta r / eps - sqrt(2 ln n) with n = r^(-1/alpha).  Defined for
    polynomial pairs in the lambda <= 0 range, where chi-square aggregation
    loses to plain coordinate thresholding."""
    if spec.a.kind != "polynomial" or spec.sigma.kind != "polynomial":
        raise ValueError("degenerate deviation covers the polynomial/polynomial pair")
    alpha, beta = spec.a.exponent, spec.sigma.exponent
    if sparse_lambda(alpha, beta, spec.q) > 0.0:
        raise ValueError("lambda > 0: Gaussian-type case, use solve_sparse_extreme")
    n = spec.r ** (-1.0 / alpha)
    return n ** -beta * spec.r / spec.eps - math.sqrt(2.0 * math.log(n))


def solve_besov_extreme(spec: BesovSpec) -> SparseSolution:
    """Dyadic-level variant: level j carries 2^j coordinates, so

        minimize 2 sum_j 2^j h_j^2 sinh^2(z_j^2 / 2)
        s.t.     sum_j 2^{j(2 beta + 1)} h_j z_j^2            >= (r(1-delta)/eps)^2
                 sum_j 2^{j t (alpha + beta + 1/q)} h_j^{t/q} z_j^t <= eps^-t.

    The optimization runs through the same two-multiplier dual as the flat
    sparse case, with per-level multiplicities and the h^{t/q} body power.
    The reported shape is u^2 ~ c0 2^{j0} h0^2 with n_eff = 2^{j0} at the
    dominant level.
    """
    lam = sparse_lambda(spec.alpha, spec.beta, spec.q)
    if lam <= 0.0:
        raise ValueError("degenerate case: use D_eps")
    if spec.q > spec.t:
        raise ValueError("level solver needs q <= t")
    alpha, beta, q, t, J = spec.alpha, spec.beta, spec.q, spec.t, spec.J

    E = (spec.r * (1.0 - _shrink_delta(spec.eps))) ** 2 / spec.eps ** 2
    C = spec.eps ** -t
    j = np.arange(1, J + 1, dtype=float)
    mult = 2.0 ** j
    g = 2.0 ** (j * (2.0 * beta + 1.0))
    body_coef = 2.0 ** (j * t * (alpha + beta + 1.0 / q))
    ph = t / q

    h, z = _sparse_dual_solve(mult, g, body_coef, ph, t, E, C)
    value = _sparse_objective(h, z, mult)
    level_terms = mult * h * h * np.sinh(z * z / 2.0) ** 2
    if not np.any(level_terms > 0.0):
        raise RuntimeError("level solve collapsed to the zero point")
    j0 = int(np.argmax(level_terms)) + 1
    return SparseSolution(h=h, z=z, u=math.sqrt(value),
                          n_eff=float(2.0 ** j0), h0=float(h[j0 - 1]))


# ---------------------------------------------------------------------------
# sup-coordinate extreme problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupCoordSolution:
    """Minimizer of sup_i x_i over {sum b c x <= 1, sum c x >= r, x >= 0}:
    flat at w on the first m-1 coordinates, w0 <= w at coordinate m, zero
    beyond."""

    m: int
    w: float
    w0: float
    x_star: np.ndarray

    def to_json_dict(self) -> dict:
        return {"m": self.m, "w": self.w, "w0": self.w0,
                "x_star": self.x_star.tolist()}


def solve_sup_coordinate(b, c, r: float) -> SupCoordSolution:
    """Closed form via sub-differentials of the sup functional.

    m is located by B_m <= r <= B_{m-1} with B_k = sum_{i<=k} c_i / sum_{i<=k}
    b_i c_i, then

        w  = (r b_m - 1) / sum_{i<m} c_i (b_m - b_i),
        w0 = sum_{i<m} c_i (1 - r b_i) / (c_m sum_{i<m} c_i (b_m - b_i)),

    and both constraints hold with equality.
    """
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if b.shape != c.shape or b.ndim != 1 or b.size < 2:
        raise ValueError("b and c must be equal-length vectors of length >= 2")
    if np.any(b <= 0.0) or np.any(c <= 0.0):
        raise ValueError("b and c must be positive")
    if np.any(np.diff(b) <= 0.0):
        raise ValueError("b must be strictly increasing")

    B = np.cumsum(c) / np.cumsum(b * c)
    if r > B[0] or r < B[-1]:
        raise ValueError(
            f"radius {r} outside the solvable bracket [{B[-1]:.6g}, {B[0]:.6g}]")
    m = 1 + int(np.searchsorted(-B, -r, side="left"))  # first k with B_k <= r
    m = max(m, 2)

    head_c = c[:m - 1]
    denom = stable_sum(head_c * (b[m - 1] - b[:m - 1]))
    w = (r * b[m - 1] - 1.0) / denom
    w0 = stable_sum(head_c * (1.0 - r * b[:m - 1])) / (c[m - 1] * denom)
    x = np.zeros(b.size)
    x[:m - 1] = w
    x[m - 1] = w0
    x.setflags(write=False)
    return SupCoordSolution(m=m, w=float(w), w0=float(w0), x_star=x)
