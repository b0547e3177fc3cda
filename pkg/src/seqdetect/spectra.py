"""Sequence families and detection-problem specifications.

The smoothness sequence ``a_k`` fixes the shape of the signal body, the
ill-posedness sequence ``sigma_k`` encodes how fast the noise inflates with
the coordinate index, and a :class:`ProblemSpec` bundles them with the body
exponent ``q``, the separation radius ``r``, the noise level ``eps`` and a
working truncation ``K``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .numutil import LOG_FLOAT_MAX, stable_sum

KINDS = ("polynomial", "exponential", "power-exponential", "explicit-table")

MILD = "mild"
SEVERE = "severe"
EXTREME = "extreme"


@dataclass(frozen=True)
class SequenceFamily:
    """A positive, strictly increasing sequence k -> value, k = 1, 2, ...

    kinds:
      polynomial          scale * k**exponent
      exponential         scale * exp(exponent * k)
      power-exponential   scale * exp(exponent * k**power)
      explicit-table      user-supplied values (strictly increasing)
    """

    kind: str
    scale: float = 1.0
    exponent: float = 1.0
    power: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if self.kind == "explicit-table":
            values = tuple(float(v) for v in self.table)
            if len(values) < 2:
                raise ValueError("explicit-table needs at least two entries")
            if any(v <= 0.0 for v in values):
                raise ValueError("explicit-table entries must be positive")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValueError("explicit-table entries must be strictly increasing")
            object.__setattr__(self, "table", values)
            return
        if not self.scale > 0.0:
            raise ValueError("scale must be positive")
        if self.kind == "polynomial":
            # exponent 0 admits the constant (well-posed) sequence sigma_k = scale
            if self.exponent < 0.0:
                raise ValueError("exponent must be non-negative")
        elif not self.exponent > 0.0:
            raise ValueError("exponent must be positive")
        if self.power < 1.0:
            raise ValueError("power must be >= 1")
        if self.kind in ("polynomial", "exponential") and self.power != 1.0:
            raise ValueError(f"{self.kind} family has power fixed to 1")

    @property
    def max_index(self) -> int:
        return len(self.table) if self.kind == "explicit-table" else np.iinfo(np.int64).max

    def log_values(self, K: int) -> np.ndarray:
        """log of the first K values; exact in log space, never overflows."""
        if K < 1:
            raise ValueError("K must be >= 1")
        if self.kind == "explicit-table":
            if K > len(self.table):
                raise ValueError(
                    f"explicit-table has {len(self.table)} entries, {K} requested")
            return np.log(np.asarray(self.table[:K]))
        k = np.arange(1, K + 1, dtype=float)
        base = math.log(self.scale)
        if self.kind == "polynomial":
            return base + self.exponent * np.log(k)
        if self.kind == "exponential":
            return base + self.exponent * k
        return base + self.exponent * k ** self.power

    def values(self, K: int) -> np.ndarray:
        logs = self.log_values(K)
        bad = np.nonzero(logs > LOG_FLOAT_MAX)[0]
        if bad.size:
            raise OverflowError(f"sequence overflow at index {bad[0] + 1}")
        if self.kind == "explicit-table":
            return np.asarray(self.table[:K], dtype=float)
        if self.kind == "polynomial":
            return self.scale * np.arange(1, K + 1, dtype=float) ** self.exponent
        return np.exp(logs)

    def to_json_dict(self) -> dict:
        if self.kind == "explicit-table":
            return {"kind": self.kind, "table": list(self.table)}
        d = {"kind": self.kind, "scale": self.scale, "exponent": self.exponent}
        if self.kind == "power-exponential":
            d["power"] = self.power
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "SequenceFamily":
        d = dict(d)
        kind = d.pop("kind")
        if kind == "explicit-table":
            fam = SequenceFamily(kind=kind, table=tuple(d.pop("table")))
        else:
            fam = SequenceFamily(kind=kind,
                                 scale=float(d.pop("scale", 1.0)),
                                 exponent=float(d.pop("exponent", 1.0)),
                                 power=float(d.pop("power", 1.0)))
        if d:
            raise ValueError(f"unknown sequence fields {sorted(d)}")
        return fam


def eval_sequence(fam: SequenceFamily, k: int) -> float:
    """Value of the family at index k >= 1.  Raises on exp overflow rather
    than returning infinity (silent infinities would corrupt bisections)."""
    if k < 1:
        raise ValueError("index k must be >= 1")
    if fam.kind == "explicit-table" and k > len(fam.table):
        raise ValueError(f"explicit-table has no index {k}")
    return float(fam.values(k)[-1])


def classify_regime(sigma: SequenceFamily) -> str:
    """Regime tag {mild, severe, extreme} from the growth of sigma.

    Polynomial growth is mild, exponential severe; super-exponential growth
    (consecutive ratios increasing without bound) is extreme.  Explicit
    tables are classified by the behaviour of sigma_{k+1}/sigma_k over the
    table: bounded ratios count as a severe proxy, growing ratios as
    extreme.  The tag is metadata only; no solver branches on it.
    """
    if sigma.kind == "polynomial":
        return MILD
    if sigma.kind == "exponential":
        return SEVERE
    if sigma.kind == "power-exponential":
        return EXTREME if sigma.power > 1.0 else SEVERE
    logs = np.log(np.asarray(sigma.table))
    steps = np.diff(logs)
    if len(steps) >= 2 and steps[-1] > 2.0 * steps[0]:
        return EXTREME
    return SEVERE


@dataclass(frozen=True)
class ProblemSpec:
    """One detection problem: sequences, body exponent, radius, noise, truncation.

    All sums are evaluated over the first K coordinates.  The least-favorable
    sequence has finite support, so K only needs to cover membership checks
    and simulations; the exact solver extends its working range on its own
    when the bisection bracket calls for it.
    """

    a: SequenceFamily
    sigma: SequenceFamily
    q: float = 2.0
    r: float = 0.1
    eps: float = 1e-3
    K: int = 4096

    def __post_init__(self):
        if not 0.0 < self.q <= 2.0:
            raise ValueError("q must lie in (0, 2]")
        if not self.r > 0.0:
            raise ValueError("radius r must be positive")
        if not self.eps > 0.0:
            raise ValueError("noise level eps must be positive")
        if int(self.K) != self.K or self.K < 2:
            raise ValueError("truncation K must be an integer >= 2")
        object.__setattr__(self, "K", int(self.K))

    @property
    def regime(self) -> str:
        return classify_regime(self.sigma)

    def a_values(self, K: int | None = None) -> np.ndarray:
        return self.a.values(self.K if K is None else K)

    def sigma_values(self, K: int | None = None) -> np.ndarray:
        return self.sigma.values(self.K if K is None else K)

    def to_json_dict(self) -> dict:
        return {"a": self.a.to_json_dict(), "sigma": self.sigma.to_json_dict(),
                "q": self.q, "r": self.r, "eps": self.eps, "K": self.K}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json_dict(d: dict) -> "ProblemSpec":
        d = dict(d)
        if "preset" in d:
            name = d.pop("preset")
            kwargs = {}
            for key in ("m", "nu"):
                if key in d:
                    kwargs[key] = d.pop(key)
            base = preset(name, **kwargs)
            return replace(base, **_spec_overrides(base, d))
        a = SequenceFamily.from_json_dict(d.pop("a"))
        sigma = SequenceFamily.from_json_dict(d.pop("sigma"))
        spec = ProblemSpec(a=a, sigma=sigma,
                           q=float(d.pop("q", 2.0)), r=float(d.pop("r")),
                           eps=float(d.pop("eps")), K=int(d.pop("K", 4096)))
        if d:
            raise ValueError(f"unknown problem fields {sorted(d)}")
        return spec


def _spec_overrides(base: ProblemSpec, d: dict) -> dict:
    out = {}
    for key in ("q", "r", "eps", "K"):
        if key in d:
            out[key] = type(getattr(base, key))(d.pop(key))
    if "a" in d:
        out["a"] = SequenceFamily.from_json_dict(d.pop("a"))
    if "sigma" in d:
        out["sigma"] = SequenceFamily.from_json_dict(d.pop("sigma"))
    if d:
        raise ValueError(f"unknown problem fields {sorted(d)}")
    return out


@dataclass(frozen=True)
class BesovSpec:
    """Dyadic-level detection problem: level j carries 2**j coordinates with
    weights a = 2**(alpha j) and sigma = 2**(beta j)."""

    alpha: float
    beta: float
    q: float
    t: float
    r: float
    eps: float
    J: int = 10

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if not 0.0 < self.q < 2.0:
            raise ValueError("Besov q must lie in (0, 2)")
        if self.t <= 0:
            raise ValueError("t must be positive")
        if self.r <= 0 or self.eps <= 0:
            raise ValueError("r and eps must be positive")
        if int(self.J) != self.J or self.J < 1:
            raise ValueError("J must be an integer >= 1")
        object.__setattr__(self, "J", int(self.J))

    def level_sizes(self) -> np.ndarray:
        return 2 ** np.arange(1, self.J + 1)

    def flat_length(self) -> int:
        return int(2 ** (self.J + 1) - 2)

    def level_slices(self) -> list:
        """Slices of the flat coordinate vector, one per level j = 1..J."""
        out, start = [], 0
        for size in self.level_sizes():
            out.append(slice(start, start + int(size)))
            start += int(size)
        return out

    def to_json_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "q": self.q,
                "t": self.t, "r": self.r, "eps": self.eps, "J": self.J}

    @staticmethod
    def from_json_dict(d: dict) -> "BesovSpec":
        d = dict(d)
        spec = BesovSpec(alpha=float(d.pop("alpha")), beta=float(d.pop("beta")),
                         q=float(d.pop("q")), t=float(d.pop("t")),
                         r=float(d.pop("r")), eps=float(d.pop("eps")),
                         J=int(d.pop("J", 10)))
        if d:
            raise ValueError(f"unknown Besov fields {sorted(d)}")
        return spec


_PRESET_NAMES = ("differentiation", "dirichlet", "heat", "deconvolution")


def preset(name: str, m: int = 1, nu=None, **overrides) -> ProblemSpec:
    """Problem templates for the four motivating operators.

    differentiation(m): recovering an m-th derivative, sigma_k = k**m (mild).
    dirichlet: harmonic continuation to the boundary, sigma_k = exp(k) (severe).
    heat: backward heat conduction, sigma_k = exp(k**2) (extreme).
    deconvolution(nu): explicit kernel coefficients, sigma_k = 1/|nu_k|.

    The smoothness side defaults to a_k = k; pass overrides (q, r, eps, K, a)
    to adjust the template.
    """
    if name not in _PRESET_NAMES:
        raise ValueError(f"unknown preset {name!r}; choose from {_PRESET_NAMES}")
    a = overrides.pop("a", SequenceFamily("polynomial", exponent=1.0))
    if name == "differentiation":
        if m < 1:
            raise ValueError("differentiation order m must be >= 1")
        sigma = SequenceFamily("polynomial", exponent=float(m))
        defaults = {"r": 0.1, "eps": 1e-3, "K": 8192}
    elif name == "dirichlet":
        sigma = SequenceFamily("exponential", exponent=1.0)
        defaults = {"r": 0.1, "eps": 1e-3, "K": 512}
    elif name == "heat":
        sigma = SequenceFamily("power-exponential", exponent=1.0, power=2.0)
        defaults = {"r": 0.1, "eps": 1e-3, "K": 64}
    else:
        if nu is None:
            raise ValueError("deconvolution preset needs kernel coefficients nu")
        nu = [float(v) for v in nu]
        if any(v == 0.0 for v in nu):
            raise ValueError("non-injective kernel: zero coefficient in nu")
        sigma = SequenceFamily("explicit-table", table=tuple(1.0 / abs(v) for v in nu))
        defaults = {"r": 0.1, "eps": 1e-3, "K": len(nu)}
    defaults.update(overrides)
    return ProblemSpec(a=a, sigma=sigma, **defaults)


IN_ALTERNATIVE = "in_alternative"
IN_BODY_ONLY = "in_body_only"
OUTSIDE = "outside"


def ellipsoid_membership(eta, spec: ProblemSpec) -> str:
    """Locate eta relative to the alternative set.

    in_alternative  iff sum |a_k sigma_k eta_k|^q <= 1 and sum sigma_k^2 eta_k^2 >= r^2,
    in_body_only    iff only the body constraint holds,
    outside         otherwise.

    Comparisons are exact on the computed sums; no tolerance is applied.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != 1:
        raise ValueError("eta must be a vector")
    if eta.size > spec.K:
        raise ValueError(f"eta has {eta.size} coordinates, spec truncation is {spec.K}")
    n = eta.size
    if n == 0:
        return IN_BODY_ONLY
    a = spec.a_values(n)
    s = spec.sigma_values(n)
    body = stable_sum(np.abs(a * s * eta) ** spec.q)
    energy = stable_sum((s * eta) ** 2)
    if body <= 1.0:
        return IN_ALTERNATIVE if energy >= spec.r ** 2 else IN_BODY_ONLY
    return OUTSIDE
