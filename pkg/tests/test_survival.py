import numpy as np
import pytest

from slicessl.downstream import survival as sv

from oracles import km_loop


def recs(times, events, risks=None):
    return sv.records_from_arrays(times, events, risks)


def test_record_validation():
    with pytest.raises(ValueError):
        sv.SurvivalRecord(time=0.0, event=1)
    with pytest.raises(ValueError):
        sv.SurvivalRecord(time=3.0, event=2)


# ----------------------------------------------------------------------- km

def test_km_all_censored():
    curve = sv.km_estimate(recs([5, 10, 15], [0, 0, 0]))
    assert curve.evaluate(0) == 1.0
    assert curve.evaluate(100) == 1.0


def test_km_one_event_among_four():
    curve = sv.km_estimate(recs([5, 9, 9, 9], [1, 0, 0, 0]))
    assert curve.evaluate(4.9) == 1.0
    assert abs(curve.evaluate(5) - 0.75) < 1e-12


def test_km_five_subject_fixture():
    curve = sv.km_estimate(recs([2, 3, 4, 5, 6], [1, 0, 1, 1, 0]))
    np.testing.assert_allclose(curve.times, [2, 4, 5])
    np.testing.assert_allclose(
        curve.surv, [0.8, 0.8 * (2 / 3), 0.8 * (2 / 3) * 0.5], atol=1e-9)
    assert abs(curve.evaluate(4.5) - 0.53333333333) < 1e-9
    assert abs(curve.evaluate(100) - 0.26666666667) < 1e-9


def test_km_matches_loop_oracle(rng):
    t = rng.integers(1, 40, size=25).astype(float)
    e = rng.integers(0, 2, size=25)
    e[0] = 1
    curve = sv.km_estimate(recs(t, e))
    ot, os_ = km_loop(t, e)
    np.testing.assert_allclose(curve.times, ot)
    np.testing.assert_allclose(curve.surv, os_, atol=1e-12)


def test_km_nonincreasing_and_empirical_without_censoring(rng):
    t = rng.integers(1, 30, size=40).astype(float)
    curve = sv.km_estimate(recs(t, np.ones(40, int)))
    assert (np.diff(curve.surv) <= 1e-12).all()
    for q in (2.0, 10.0, 25.0):
        emp = float((t > q).mean())
        assert abs(curve.evaluate(q) - emp) < 1e-12


def test_km_median():
    curve = sv.km_estimate(recs([1, 2, 3, 4], [1, 1, 1, 1]))
    assert curve.median() == 2.0


# ------------------------------------------------------------------ logrank

def test_logrank_identical_groups():
    g = recs([3, 5, 8, 13], [1, 0, 1, 1])
    chi2, p = sv.logrank_test(g, recs([3, 5, 8, 13], [1, 0, 1, 1]))
    assert chi2 == 0.0 and p == 1.0


def test_logrank_symmetric(rng):
    a = recs(rng.integers(1, 50, 20).astype(float), rng.integers(0, 2, 20))
    b = recs(rng.integers(1, 50, 20).astype(float), rng.integers(0, 2, 20))
    if sum(r.event for r in a) + sum(r.event for r in b) == 0:
        a[0].event = 1
    sa, pa = sv.logrank_test(a, b)
    sb, pb = sv.logrank_test(b, a)
    assert abs(sa - sb) < 1e-10 and abs(pa - pb) < 1e-12


def test_logrank_separated_groups_significant():
    early = recs(range(1, 41), [1] * 40)
    late = recs(range(100, 140), [1] * 40)
    chi2, p = sv.logrank_test(early, late)
    assert p < 0.01

    # independent hand computation of O - E and V over the pooled times
    ta, ea = np.arange(1, 41, dtype=float), np.ones(40)
    tb, eb = np.arange(100, 140, dtype=float), np.ones(40)
    u = v = 0.0
    for t in np.unique(np.concatenate([ta, tb])):
        n1 = (ta >= t).sum()
        n2 = (tb >= t).sum()
        n = n1 + n2
        d1 = ((ta == t) & (ea == 1)).sum()
        d = d1 + ((tb == t) & (eb == 1)).sum()
        if d == 0 or n < 2:
            continue
        u += d1 - d * n1 / n
        v += d * (n1 / n) * (n2 / n) * (n - d) / (n - 1)
    assert abs(chi2 - u * u / v) < 1e-9


def test_logrank_requires_events_and_nonempty():
    with pytest.raises(ValueError):
        sv.logrank_test(recs([1, 2], [0, 0]), recs([3], [0]))
    with pytest.raises(ValueError):
        sv.logrank_test([], recs([3], [1]))


def test_chi2_sf_values():
    assert sv.chi2_sf(0.0) == 1.0
    # known quantile: P(chi2_1 > 3.841459) = 0.05
    assert abs(sv.chi2_sf(3.841458820694124) - 0.05) < 1e-9
    assert abs(sv.chi2_sf(6.634896601021215) - 0.01) < 1e-9


# ------------------------------------------------------------------ c-index

def test_cindex_fixtures():
    t = [10.0, 20.0, 30.0, 40.0]
    e = [1, 1, 1, 1]
    assert sv.concordance_index(recs(t, e, [4, 3, 2, 1])) == 1.0
    assert sv.concordance_index(recs(t, e, [1, 2, 3, 4])) == 0.0
    assert sv.concordance_index(recs(t, e, [2, 2, 2, 2])) == 0.5


def test_cindex_censoring_rules():
    # a censored subject is never the "event" side of a pair
    t = [10.0, 20.0]
    r = sv.concordance_index(recs(t, [1, 0], [5, 1]))
    assert r == 1.0
    with pytest.raises(ValueError):
        sv.concordance_index(recs([10.0, 20.0], [0, 1], [1, 2]))


def test_cindex_invariant_under_monotone_risk_transform(rng):
    t = rng.integers(1, 100, 15).astype(float)
    e = rng.integers(0, 2, 15)
    e[np.argmin(t)] = 1
    h = rng.normal(size=15)
    a = sv.concordance_index(recs(t, e, h))
    b = sv.concordance_index(recs(t, e, np.exp(3 * h) + 2))
    assert abs(a - b) < 1e-12


# ---------------------------------------------------------------- stratify

def test_binary_survival_labels():
    labels = sv.binary_survival_labels([366, 365, 364, 1000])
    np.testing.assert_array_equal(labels, [0, 1, 1, 0])
    labels = sv.binary_survival_labels([366, 365], threshold=400)
    np.testing.assert_array_equal(labels, [1, 1])


def test_km_stratify_threshold_and_shift_invariance(rng):
    train_risks = rng.normal(size=21)
    t = rng.integers(1, 100, 30).astype(float)
    e = rng.integers(0, 2, 30)
    e[:6] = 1
    risks = rng.normal(size=30)
    low, high, rep = sv.km_stratify(train_risks, recs(t, e, risks))
    assert rep["threshold"] == float(np.median(train_risks))
    low2, high2, rep2 = sv.km_stratify(train_risks + 5.0, recs(t, e, risks + 5.0))
    assert len(low2) == len(low) and len(high2) == len(high)
    assert abs(rep2["chi2"] - rep["chi2"]) < 1e-9


def test_km_stratify_degenerate_risks():
    with pytest.raises(ValueError):
        sv.km_stratify([1.0, 1.0, 1.0], recs([5, 6], [1, 1], [1.0, 1.0]))


def test_km_stratify_separates_synthetic_risk():
    # risk inversely related to survival time: stratification must separate
    rng = np.random.default_rng(0)
    n = 60
    risk = rng.normal(size=n)
    t = np.maximum(1, np.round(400 * np.exp(-1.5 * risk)
                               * rng.uniform(0.8, 1.2, n)))
    e = np.ones(n, int)
    train_risk = risk[:30]
    test = recs(t[30:], e[30:], risk[30:])
    _, _, rep = sv.km_stratify(train_risk, test)
    assert rep["p"] < 0.05
    assert rep["km_high"].median() < rep["km_low"].median()
