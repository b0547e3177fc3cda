"""Decision rules: chi-square aggregation, coordinate thresholding, adaptive grids.

Every rule is an immutable dataclass; ``apply`` evaluates its statistic on
one observation vector and returns a :class:`TestOutcome`.  Randomized rules
report a rejection probability and leave the coin flip to the Monte Carlo
layer, so ``apply`` stays a pure function.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .numutil import LOG_FLOAT_MAX, clamped_log_log, norm_cdf, norm_quantile, stable_sum
from .spectra import BesovSpec
from .extreme import ExtremeSolution, SparseSolution


@dataclass(frozen=True)
class TestOutcome:
    """statistic is the rule's scalar summary (margin statistics for max-type
    rules are scaled so that rejection means statistic > 0 or > H as
    documented per family).  For randomized rules ``reject`` carries the
    non-randomized indicator event and ``reject_probability`` the actual
    rejection probability."""

    statistic: float
    reject: bool
    reject_probability: float


def _as_matrix(y) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if Y.ndim != 2:
        raise ValueError("observations must be a vector or a matrix of rows")
    return Y


def _require_length(Y: np.ndarray, n: int, name: str):
    if Y.shape[1] < n:
        raise ValueError(f"{name} needs {n} coordinates, observation has {Y.shape[1]}")


# ---------------------------------------------------------------------------
# rule definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedChiSq:
    """t = sum_k w_k ((y_k/eps)^2 - 1) with sum w^2 = 1/2; reject iff t > H."""
    w: tuple
    H: float

    def _stats(self, Y, eps):
        w = np.asarray(self.w)
        _require_length(Y, w.size, "weighted chi-square")
        X = (Y[:, :w.size] / eps) ** 2 - 1.0
        return X @ w


@dataclass(frozen=True)
class TruncatedChiSq:
    """t = (2m)^{-1/2} sum_{k<=m} ((y_k/eps)^2 - 1); reject iff t > H."""
    m: int
    H: float

    def _stats(self, Y, eps):
        _require_length(Y, self.m, "truncated chi-square")
        X = (Y[:, :self.m] / eps) ** 2 - 1.0
        return X.sum(axis=1) / math.sqrt(2.0 * self.m)


@dataclass(frozen=True)
class MaxThreshold:
    """Reject iff |y_k| >= T_k eps for some k <= m; statistic is the largest
    ratio |y_k| / (T_k eps), so rejection means statistic >= 1."""
    T: tuple

    def _stats(self, Y, eps):
        T = np.asarray(self.T)
        _require_length(Y, T.size, "max-threshold")
        return np.max(np.abs(Y[:, :T.size]) / (T * eps), axis=1)


@dataclass(frozen=True)
class SparseCombined:
    """Thresholding event plus a sinh-kernel linear statistic.

    The event Y holds when some |y_i| exceeds eps Q_i.  Modes:
      G             reject iff l(y) > H and Y holds,
      D             reject iff Y holds,
      D_randomized  reject with probability alpha + (1-alpha) 1{Y}.

    l(y) = u^-1 sum_i h_i xi(y_i/eps, z_i) with u^2 = 2 sum h^2 sinh^2(z^2/2),
    the value attached to (h, z).
    """
    h: tuple
    z: tuple
    H: float
    Q: tuple
    mode: str = "G"
    alpha: float = 0.05

    def __post_init__(self):
        if self.mode not in ("G", "D", "D_randomized"):
            raise ValueError(f"unknown sparse mode {self.mode!r}")

    def _norm(self) -> float:
        h = np.asarray(self.h)
        z = np.asarray(self.z)
        return math.sqrt(2.0 * stable_sum(h * h * np.sinh(z * z / 2.0) ** 2))

    def _event(self, Y, eps):
        Q = np.asarray(self.Q)
        _require_length(Y, Q.size, "sparse combined")
        return np.max(np.abs(Y[:, :Q.size]) / (eps * Q), axis=1)

    def _stats(self, Y, eps):
        ratio = self._event(Y, eps)
        if self.mode != "G":
            return ratio
        h = np.asarray(self.h)
        z = np.asarray(self.z)
        u = self._norm()
        l = centered_xi(Y[:, :h.size] / eps, z[None, :]) @ h / u
        return l


@dataclass(frozen=True)
class AdaptiveChiGrid:
    """Truncated chi-square statistics on the dyadic grid m_k = 2^k, k >= L,
    against thresholds sqrt(C ln k); reject iff some statistic exceeds its
    threshold.  The grid tops out at the last power of two inside the
    observation.  Requires C > 2."""
    L: int
    C: float

    def __post_init__(self):
        if self.C <= 2.0:
            raise ValueError("adaptive grid constant C must exceed 2")
        if self.L < 2:
            raise ValueError("grid start L must be >= 2")

    def _stats(self, Y, eps):
        k_top = int(math.floor(math.log2(Y.shape[1])))
        if k_top < self.L:
            raise ValueError(f"observation too short for grid start L={self.L}")
        X = (Y / eps) ** 2 - 1.0
        csum = np.cumsum(X, axis=1)
        best = np.full(Y.shape[0], -np.inf)
        for k in range(self.L, k_top + 1):
            m = 2 ** k
            t = csum[:, m - 1] / math.sqrt(2.0 * m)
            best = np.maximum(best, t - math.sqrt(self.C * math.log(k)))
        return best


@dataclass(frozen=True)
class AdaptiveMaxGrid:
    """Coordinate thresholding with H_k = sqrt(2 ln L) for k < L and
    sqrt(C ln k) for k >= L; reject iff |y_k| > eps H_k somewhere."""
    L: int
    C: float

    def __post_init__(self):
        if self.C <= 2.0:
            raise ValueError("adaptive grid constant C must exceed 2")
        if self.L < 2:
            raise ValueError("grid start L must be >= 2")

    def thresholds(self, K: int) -> np.ndarray:
        k = np.arange(1, K + 1, dtype=float)
        H = np.sqrt(self.C * np.log(k))
        H[: min(self.L - 1, K)] = math.sqrt(2.0 * math.log(self.L))
        return H

    def _stats(self, Y, eps):
        H = self.thresholds(Y.shape[1])
        return np.max(np.abs(Y) / (eps * H), axis=1)


@dataclass(frozen=True)
class ExtremeAdaptiveMax:
    """Coordinate thresholding with T_k = max(T_eps, sqrt(2(ln k + ln ln k)));
    the inner log is clamped below at 1 for small k."""
    T_eps: float

    def thresholds(self, K: int) -> np.ndarray:
        k = np.arange(1, K + 1, dtype=float)
        lnk = np.log(k)
        lnlnk = np.log(np.maximum(lnk, 1.0))
        return np.maximum(self.T_eps, np.sqrt(2.0 * (lnk + lnlnk)))

    def _stats(self, Y, eps):
        T = self.thresholds(Y.shape[1])
        return np.max(np.abs(Y) / (eps * T), axis=1)


@dataclass(frozen=True)
class BesovSparse:
    """Per-level variant of :class:`SparseCombined` on dyadic data: level j
    carries 2^j coordinates with a shared spike size z_j, and the event
    thresholds Q_j depend on the level only.  Observations are flat vectors
    with levels concatenated in order (j = 1..J), as laid out by
    ``BesovSpec.level_slices``."""
    h: tuple
    z: tuple
    H: float
    Q: tuple
    mode: str = "G"
    alpha: float = 0.05

    def __post_init__(self):
        if self.mode not in ("G", "D", "D_randomized"):
            raise ValueError(f"unknown sparse mode {self.mode!r}")
        if not (len(self.h) == len(self.z) == len(self.Q)):
            raise ValueError("h, z, Q must have one entry per level")

    @property
    def J(self) -> int:
        return len(self.h)

    def _norm(self) -> float:
        h = np.asarray(self.h)
        z = np.asarray(self.z)
        mult = 2.0 ** np.arange(1, self.J + 1)
        return math.sqrt(2.0 * stable_sum(mult * h * h * np.sinh(z * z / 2.0) ** 2))

    def _event(self, Y, eps):
        _require_length(Y, 2 ** (self.J + 1) - 2, "dyadic observation")
        best = np.zeros(Y.shape[0])
        start = 0
        for j in range(1, self.J + 1):
            size = 2 ** j
            block = Y[:, start:start + size]
            best = np.maximum(best, np.max(np.abs(block), axis=1) / (eps * self.Q[j - 1]))
            start += size
        return best

    def _stats(self, Y, eps):
        ratio = self._event(Y, eps)
        if self.mode != "G":
            return ratio
        u = self._norm()
        l = np.zeros(Y.shape[0])
        start = 0
        for j in range(1, self.J + 1):
            size = 2 ** j
            if self.h[j - 1] > 0.0 and self.z[j - 1] > 0.0:
                block = Y[:, start:start + size]
                l += self.h[j - 1] * centered_xi(block / eps, self.z[j - 1]).sum(axis=1)
            start += size
        return l / u


@dataclass(frozen=True)
class BesovAdaptive:
    """Composite dyadic rule: a per-level coordinate threshold, per-level
    centered chi-square statistics, and a grid of sinh-kernel statistics over
    spike sizes z_{j,k}; rejects when any component does.

    Component thresholds (natural logs, C = ln 2):
      coordinate   T_j = sqrt(2 C J0) for j <= J0, sqrt(2(C j + ln j)) above,
      chi-square   l_j > 2 sqrt(ln j) for j >= J0,
      sinh grid    l_{j,k} > sqrt(5 ln j) for J0 <= j <= J1, 1 <= k <= K(c,j),
                   z_{j,k} = e^{k-1}/sqrt(j) for k <= K(j) = (ln j)/2,
                   z_{j,k} = sqrt(k - K(j)) above.
    """
    J0: int
    J1: int
    c: float

    _C = math.log(2.0)

    def __post_init__(self):
        if not 0.0 < self.c < math.log(2.0) / 4.0:
            raise ValueError("grid density c must lie in (0, ln(2)/4)")
        if self.J0 < 2 or self.J1 < self.J0:
            raise ValueError("need 2 <= J0 <= J1")

    @staticmethod
    def z_grid(j: int, c: float) -> np.ndarray:
        Kj = math.log(j) / 2.0
        kmax = int(math.floor(Kj + c * j))
        ks = np.arange(1, kmax + 1, dtype=float)
        out = np.empty(ks.size)
        low = ks <= Kj
        out[low] = np.exp(ks[low] - 1.0) / math.sqrt(j)
        out[~low] = np.sqrt(ks[~low] - Kj)
        return out

    def coordinate_threshold(self, j: int) -> float:
        if j <= self.J0:
            return math.sqrt(2.0 * self._C * self.J0)
        return math.sqrt(2.0 * (self._C * j + math.log(j)))

    def _stats(self, Y, eps):
        J = int(math.log2(Y.shape[1] + 2)) - 1
        margin = np.full(Y.shape[0], -np.inf)
        start = 0
        for j in range(1, J + 1):
            size = 2 ** j
            block = Y[:, start:start + size] / eps
            margin = np.maximum(
                margin, np.max(np.abs(block), axis=1) - self.coordinate_threshold(j))
            if j >= self.J0:
                lj = (block ** 2 - 1.0).sum(axis=1) / math.sqrt(2.0 ** (j + 1))
                margin = np.maximum(margin, lj - 2.0 * math.sqrt(math.log(j)))
                if j <= self.J1:
                    tj = math.sqrt(5.0 * math.log(j))
                    for z in self.z_grid(j, self.c):
                        norm = math.sqrt(2.0 ** (j + 1)) * math.sinh(z * z / 2.0)
                        ljk = centered_xi(block, z).sum(axis=1) / norm
                        margin = np.maximum(margin, ljk - tj)
            start += size
        return margin


TestRule = Union[WeightedChiSq, TruncatedChiSq, MaxThreshold, SparseCombined,
                 AdaptiveChiGrid, AdaptiveMaxGrid, ExtremeAdaptiveMax,
                 BesovSparse, BesovAdaptive]


# ---------------------------------------------------------------------------
# kernels and builders
# ---------------------------------------------------------------------------

def xi_kernel(t, z):
    """xi(t, z) = exp(z^2/2) cosh(t z) - 1, evaluated through expm1 of
    log(exp(z^2/2) cosh(tz)) so large arguments neither overflow inside the
    product nor lose the -1.  Raises once the value itself exceeds doubles."""
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    tz = np.abs(t * z)
    log_val = z * z / 2.0 + tz + np.log1p(np.exp(-2.0 * tz)) - math.log(2.0)
    if np.any(log_val > LOG_FLOAT_MAX):
        raise OverflowError("sinh kernel overflows a double")
    out = np.expm1(log_val)
    return float(out) if out.ndim == 0 else out


def centered_xi(t, z):
    """exp(-z^2/2) cosh(t z) - 1: the two-point-mixture likelihood kernel.

    This is the version the sparse statistics aggregate: its null mean is 0
    and its null variance is exactly 2 sinh^2(z^2/2), which is what the
    statistics' normalization assumes (the raw kernel with +z^2/2 in the
    exponent has null mean e^{z^2} - 1 and would destroy the calibration).
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    tz = np.abs(t * z)
    log_val = -z * z / 2.0 + tz + np.log1p(np.exp(-2.0 * tz)) - math.log(2.0)
    if np.any(log_val > LOG_FLOAT_MAX):
        raise OverflowError("sinh kernel overflows a double")
    out = np.expm1(log_val)
    return float(out) if out.ndim == 0 else out


def build_weighted(sol: ExtremeSolution, alpha: float | None = None,
                   H: float | None = None) -> WeightedChiSq:
    """Weighted chi-square rule from a solved instance.  The threshold is,
    in order of precedence: the explicit H, the (1-alpha) normal quantile,
    or u/2 (the total-error choice)."""
    if H is None:
        H = float(norm_quantile(1.0 - alpha)) if alpha is not None else sol.u / 2.0
    return WeightedChiSq(w=tuple(sol.w), H=float(H))


def build_max_threshold(m: int, alpha: float) -> MaxThreshold:
    """Coordinate thresholds splitting the type I budget alpha/2 as alpha/6
    on each of the top two coordinates and c alpha / (m-k-1)^2 below, with c
    normalizing the lower sum to alpha/6.  For m >= 3 this makes
    sum_k Phi(-T_k) = alpha/2 identically; m = 2 keeps the two top
    thresholds only (the sum is then alpha/3)."""
    if m < 2:
        raise ValueError("max-threshold rule needs m >= 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    T = np.empty(m)
    T[m - 1] = T[m - 2] = norm_quantile(1.0 - alpha / 6.0)
    if m >= 3:
        c = 1.0 / (6.0 * stable_sum(1.0 / np.arange(1.0, m - 1.0) ** 2))
        k = np.arange(1, m - 1, dtype=float)
        T[: m - 2] = norm_quantile(1.0 - c * alpha / (m - k - 1.0) ** 2)
    return MaxThreshold(T=tuple(T))


def default_grid_floor(eps: float) -> int:
    """Grid start L = ceil(sqrt(ln(1/eps))): grows without bound but stays
    o(log(1/eps)); a concrete choice, not a canonical one."""
    return max(2, math.ceil(math.sqrt(math.log(1.0 / eps))))


def build_adaptive(kind: str, L: int | None = None, C: float = 2.5,
                   T_eps: float | None = None, eps: float | None = None) -> TestRule:
    """Adaptive rules: ``chi_grid`` (dyadic chi-square grid), ``max_grid``
    (two-regime coordinate thresholds), ``extreme_max`` (T_eps-floored
    coordinate thresholds).  L defaults from eps when omitted."""
    if kind in ("chi_grid", "max_grid"):
        if L is None:
            if eps is None:
                raise ValueError("need L or eps to place the grid start")
            L = default_grid_floor(eps)
        cls = AdaptiveChiGrid if kind == "chi_grid" else AdaptiveMaxGrid
        return cls(L=int(L), C=float(C))
    if kind == "extreme_max":
        if T_eps is None:
            raise ValueError("extreme_max needs the threshold floor T_eps")
        return ExtremeAdaptiveMax(T_eps=float(T_eps))
    raise ValueError(f"unknown adaptive kind {kind!r}")


def sparse_event_thresholds(eps: float, K: int) -> np.ndarray:
    """Q_i = sqrt(2(ln i + ln ln i + 2 ln ln(1/eps))), inner logs clamped
    below at 1."""
    i = np.arange(1, K + 1, dtype=float)
    lni = np.log(i)
    lnlni = np.log(np.maximum(lni, 1.0))
    return np.sqrt(2.0 * (lni + lnlni + 2.0 * clamped_log_log(1.0 / eps)))


def build_sparse_combined(sol: SparseSolution, eps: float, K: int,
                          mode: str = "G", alpha: float = 0.05,
                          H: float | None = None) -> SparseCombined:
    if H is None:
        H = float(norm_quantile(1.0 - alpha)) if mode == "G" else 0.0
    h = np.zeros(K)
    z = np.zeros(K)
    n = min(K, sol.h.size)
    h[:n] = sol.h[:n]
    z[:n] = sol.z[:n]
    return SparseCombined(h=tuple(h), z=tuple(z), H=float(H),
                          Q=tuple(sparse_event_thresholds(eps, K)),
                          mode=mode, alpha=float(alpha))


def besov_event_thresholds(eps: float, J: int) -> np.ndarray:
    """Level thresholds Q_j = sqrt(2(j ln 2 + ln j + 2 ln ln(1/eps)))."""
    j = np.arange(1, J + 1, dtype=float)
    return np.sqrt(2.0 * (j * math.log(2.0) + np.log(j)
                          + 2.0 * clamped_log_log(1.0 / eps)))


def build_besov_sparse(sol: SparseSolution, spec: BesovSpec, mode: str = "G",
                       alpha: float = 0.05, H: float | None = None) -> BesovSparse:
    if H is None:
        H = float(norm_quantile(1.0 - alpha)) if mode == "G" else 0.0
    return BesovSparse(h=tuple(sol.h), z=tuple(sol.z), H=float(H),
                       Q=tuple(besov_event_thresholds(spec.eps, spec.J)),
                       mode=mode, alpha=float(alpha))


def build_besov_adaptive(spec: BesovSpec, c: float = 0.15) -> BesovAdaptive:
    """Composite dyadic rule with J0 ~ ln ln(1/eps) and J1 ~ ln ln(1/eps)
    ln(1/eps), both clipped to the working range of levels."""
    ll = clamped_log_log(1.0 / spec.eps)
    J0 = max(2, round(ll))
    J1 = max(J0, min(spec.J, round(ll * math.log(1.0 / spec.eps))))
    if J0 > spec.J:
        raise ValueError(f"working depth J={spec.J} below the grid start {J0}")
    return BesovAdaptive(J0=J0, J1=J1, c=float(c))


# ---------------------------------------------------------------------------
# evaluation and error predictions
# ---------------------------------------------------------------------------

def _decide(rule: TestRule, stats: np.ndarray):
    if isinstance(rule, (WeightedChiSq, TruncatedChiSq)):
        reject = stats > rule.H
        prob = reject.astype(float)
    elif isinstance(rule, (MaxThreshold,)):
        reject = stats >= 1.0
        prob = reject.astype(float)
    elif isinstance(rule, (AdaptiveMaxGrid, ExtremeAdaptiveMax)):
        reject = stats > 1.0
        prob = reject.astype(float)
    elif isinstance(rule, (AdaptiveChiGrid, BesovAdaptive)):
        reject = stats > 0.0
        prob = reject.astype(float)
    elif isinstance(rule, (SparseCombined, BesovSparse)):
        # mode G is handled in batch_apply; here stats is the event ratio
        reject = stats > 1.0
        if rule.mode == "D_randomized":
            prob = rule.alpha + (1.0 - rule.alpha) * reject.astype(float)
        else:
            prob = reject.astype(float)
    else:
        raise TypeError(f"unknown rule {type(rule).__name__}")
    return reject, prob


def batch_apply(rule: TestRule, Y, eps: float):
    """Vectorized ``apply`` over rows of Y: returns (statistics, reject flags,
    rejection probabilities)."""
    Y = _as_matrix(Y)
    if isinstance(rule, (SparseCombined, BesovSparse)) and rule.mode == "G":
        event = rule._event(Y, eps) > 1.0
        stats = rule._stats(Y, eps)
        reject = (stats > rule.H) & event
        return stats, reject, reject.astype(float)
    stats = rule._stats(Y, eps)
    reject, prob = _decide(rule, stats)
    return stats, reject, prob


def apply(rule: TestRule, y, eps: float) -> TestOutcome:
    """Evaluate the rule on a single observation vector.  Pure: identical
    inputs give identical outcomes bit for bit."""
    stats, reject, prob = batch_apply(rule, y, eps)
    return TestOutcome(statistic=float(stats[0]), reject=bool(reject[0]),
                       reject_probability=float(prob[0]))


def theoretical_errors(u: float | None = None, alpha: float = 0.05,
                       D: float | None = None) -> dict:
    """Predicted errors.  Gaussian limit: beta = Phi(H_alpha - u) and
    gamma = 2 Phi(-u/2).  Degenerate limit (pass D): beta = (1-alpha) Phi(-D)
    and gamma = Phi(-D)."""
    if D is not None:
        p = float(norm_cdf(-D))
        return {"beta": (1.0 - alpha) * p, "gamma": p}
    if u is None or u <= 0.0:
        raise ValueError("Gaussian prediction needs u > 0")
    H = float(norm_quantile(1.0 - alpha))
    return {"beta": float(norm_cdf(H - u)), "gamma": float(2.0 * norm_cdf(-u / 2.0))}


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------

_RULE_TYPES = {cls.__name__: cls for cls in (
    WeightedChiSq, TruncatedChiSq, MaxThreshold, SparseCombined,
    AdaptiveChiGrid, AdaptiveMaxGrid, ExtremeAdaptiveMax, BesovSparse,
    BesovAdaptive)}


def rule_to_json_dict(rule: TestRule) -> dict:
    d = {"kind": type(rule).__name__}
    for name in rule.__dataclass_fields__:
        value = getattr(rule, name)
        d[name] = list(value) if isinstance(value, tuple) else value
    return d


def rule_to_json(rule: TestRule) -> str:
    return json.dumps(rule_to_json_dict(rule), sort_keys=True)


def rule_from_json_dict(d: dict) -> TestRule:
    d = dict(d)
    kind = d.pop("kind")
    if kind not in _RULE_TYPES:
        raise ValueError(f"unknown rule kind {kind!r}")
    cls = _RULE_TYPES[kind]
    kwargs = {}
    for name, fdef in cls.__dataclass_fields__.items():
        if name in d:
            value = d.pop(name)
            kwargs[name] = tuple(value) if isinstance(value, list) else value
    if d:
        raise ValueError(f"unknown rule fields {sorted(d)}")
    return cls(**kwargs)


def rule_from_json(text: str) -> TestRule:
    return rule_from_json_dict(json.loads(text))
