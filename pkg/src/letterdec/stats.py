"""Classical tests used to compare models: one-way ANOVA and one-tailed t-tests.

Tail probabilities come from the regularized incomplete beta function,
evaluated with a Lentz continued fraction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


class StatsError(ValueError):
    """Degenerate input for which the statistic is undefined."""


_TINY = 1e-300


def _betacf(a: float, b: float, x: float, max_iter: int = 10000, tol: float = 1e-16) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    lbt = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, 1.0 - x) / b


def f_sf(F: float, d1: float, d2: float) -> float:
    """Upper tail of the F distribution."""
    if F <= 0:
        return 1.0
    if math.isinf(F):
        return 0.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * F))


def t_sf(t: float, df: float) -> float:
    """Upper tail ``P(T > t)`` of Student's t."""
    if t == 0:
        return 0.5
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return tail if t > 0 else 1.0 - tail


@dataclass(frozen=True)
class AnovaResult:
    F: float
    p: float
    df_between: int
    df_within: int
    ss_between: float
    ss_within: float

    def to_dict(self) -> dict:
        return asdict(self)


def anova_oneway(groups) -> AnovaResult:
    gs = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(gs) < 2:
        raise StatsError("ANOVA needs at least 2 groups")
    if any(len(g) < 2 for g in gs):
        raise StatsError("each ANOVA group needs at least 2 values")
    n = sum(len(g) for g in gs)
    k = len(gs)
    grand = np.concatenate(gs).mean()
    means = [g.mean() for g in gs]
    ss_b = float(sum(len(g) * (m - grand) ** 2 for g, m in zip(gs, means)))
    ss_w = float(sum(((g - m) ** 2).sum() for g, m in zip(gs, means)))
    df_b, df_w = k - 1, n - k
    if ss_w == 0:
        if ss_b == 0:
            raise StatsError("F undefined: zero within-group and zero between-group variance")
        return AnovaResult(math.inf, 0.0, df_b, df_w, ss_b, ss_w)
    F = (ss_b / df_b) / (ss_w / df_w)
    return AnovaResult(F, f_sf(F, df_b, df_w), df_b, df_w, ss_b, ss_w)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: float
    mode: str

    def to_dict(self) -> dict:
        return asdict(self)


def ttest_one_tailed(a, b, mode: str = "paired") -> TTestResult:
    """Test H1: mean(a) > mean(b).

    ``paired`` uses the per-index differences; ``welch`` uses the
    Welch-Satterthwaite degrees of freedom.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if mode == "paired":
        if len(a) != len(b):
            raise StatsError(f"paired test needs equal lengths, got {len(a)} and {len(b)}")
        if len(a) < 2:
            raise StatsError("paired test needs at least 2 pairs")
        d = a - b
        n = len(d)
        md = d.mean()
        sd = d.std(ddof=1)
        df = float(n - 1)
        if sd == 0:
            if md == 0:
                return TTestResult(0.0, 0.5, df, mode)
            raise StatsError("t undefined: constant nonzero paired difference (zero variance)")
        t = md / (sd / math.sqrt(n))
    elif mode == "welch":
        if len(a) < 2 or len(b) < 2:
            raise StatsError("welch test needs at least 2 values per sample")
        va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
        se2 = va + vb
        diff = a.mean() - b.mean()
        if se2 == 0:
            if diff == 0:
                return TTestResult(0.0, 0.5, float(len(a) + len(b) - 2), mode)
            raise StatsError("t undefined: both samples constant with different means")
        t = diff / math.sqrt(se2)
        df = float(se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1)))
    else:
        raise ValueError(f"unknown t-test mode {mode!r}")
    return TTestResult(float(t), t_sf(float(t), df), float(df), mode)
