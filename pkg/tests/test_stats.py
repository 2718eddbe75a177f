import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from letterdec.stats import StatsError, anova_oneway, betainc, f_sf, t_sf, ttest_one_tailed


@given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0, 1))
def test_betainc_vs_mpmath(a, b, x):
    ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
    assert betainc(a, b, x) == pytest.approx(ref, rel=1e-9, abs=1e-14)


def test_betainc_endpoints():
    assert betainc(2, 3, 0) == 0 and betainc(2, 3, 1) == 1
    with pytest.raises(ValueError):
        betainc(2, 3, 1.5)


@given(st.floats(0, 30), st.integers(1, 10), st.integers(1, 200))
def test_f_sf_vs_scipy(F, d1, d2):
    assert f_sf(F, d1, d2) == pytest.approx(sps.f.sf(F, d1, d2), rel=1e-8, abs=1e-14)


@given(st.floats(-20, 20), st.floats(1, 300))
def test_t_sf_vs_scipy(t, df):
    assert t_sf(t, df) == pytest.approx(sps.t.sf(t, df), rel=1e-8, abs=1e-14)


def test_anova_small_known():
    # hand-worked: grand mean 3, SSB 6, SSW 6, F = (6/2)/(6/6) = 3
    r = anova_oneway([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
    assert (r.ss_between, r.ss_within, r.df_between, r.df_within) == (6.0, 6.0, 2, 6)
    assert r.F == pytest.approx(3.0, abs=1e-12)
    assert r.p == pytest.approx(0.125, abs=1e-12)  # (1 + F/3)^-3 for df (2, 6)


def test_anova_identical_groups():
    r = anova_oneway([[1.0, 2.0, 3.0]] * 4)
    assert r.F == 0.0 and r.p == 1.0


def test_anova_errors():
    with pytest.raises(StatsError):
        anova_oneway([[1, 2]])
    with pytest.raises(StatsError):
        anova_oneway([[1, 1], [1, 1]])
    r = anova_oneway([[1, 1], [2, 2]])
    assert r.F == math.inf and r.p == 0.0


def test_ttest_identical():
    for mode in ("paired", "welch"):
        r = ttest_one_tailed([1, 2, 3.5], [1, 2, 3.5], mode)
        assert r.t == 0.0 and r.p == 0.5


def test_ttest_direction():
    a, b = [5.0, 6, 7, 8], [1.0, 2, 2, 3]
    assert ttest_one_tailed(a, b, "welch").p < 0.01
    assert ttest_one_tailed(b, a, "welch").p > 0.99


def test_ttest_vs_scipy(rng):
    a, b = rng.normal(1, 1, 10), rng.normal(0, 2, 10)
    p = ttest_one_tailed(a, b, "paired")
    ref = sps.ttest_rel(a, b, alternative="greater")
    assert p.t == pytest.approx(ref.statistic, rel=1e-12) and p.p == pytest.approx(ref.pvalue, rel=1e-9)
    w = ttest_one_tailed(a, b, "welch")
    ref = sps.ttest_ind(a, b, equal_var=False, alternative="greater")
    assert w.t == pytest.approx(ref.statistic, rel=1e-12) and w.p == pytest.approx(ref.pvalue, rel=1e-9)


def test_ttest_errors():
    with pytest.raises(StatsError):
        ttest_one_tailed([1, 2], [1, 2, 3], "paired")
    with pytest.raises(StatsError):
        ttest_one_tailed([2, 3], [1, 2], "paired")
    with pytest.raises(ValueError):
        ttest_one_tailed([1, 2], [1, 2], "exact")


@given(st.lists(st.lists(st.floats(-100, 100), min_size=2, max_size=8), min_size=2, max_size=5))
def test_anova_vs_scipy_property(groups):
    g = [np.asarray(x) for x in groups]
    ssw = sum(((x - x.mean()) ** 2).sum() for x in g)
    if ssw < 1e-6:
        return
    r = anova_oneway(g)
    ref = sps.f_oneway(*g)
    assert r.F == pytest.approx(ref.statistic, rel=1e-7, abs=1e-9)
    assert r.p == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-12)
