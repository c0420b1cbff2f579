"""Survival analysis: Kaplan-Meier curves, the log-rank test, concordance,
and risk-based stratification."""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SurvivalRecord:
    time: float               # days, > 0
    event: int                # 1 deceased, 0 censored
    risk: float = float("nan")

    def __post_init__(self):
        if self.time <= 0:
            raise ValueError(f"SurvivalRecord: time {self.time} must be positive")
        if self.event not in (0, 1):
            raise ValueError(f"SurvivalRecord: event {self.event} must be 0 or 1")


def records_from_arrays(times, events, risks=None):
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=np.intp)
    if risks is None:
        risks = np.full(len(times), np.nan)
    return [SurvivalRecord(float(t), int(e), float(r))
            for t, e, r in zip(times, events, np.asarray(risks, np.float64))]


@dataclass
class KMCurve:
    """Right-continuous product-limit step function; S(0) = 1."""

    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    surv: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def evaluate(self, t):
        if self.times.size == 0:
            return 1.0
        i = np.searchsorted(self.times, t, side="right") - 1
        return 1.0 if i < 0 else float(self.surv[i])

    def median(self):
        below = np.flatnonzero(self.surv <= 0.5)
        return float(self.times[below[0]]) if below.size else float("inf")


def km_estimate(records):
    """Kaplan-Meier estimator over (time, event) records."""
    if not records:
        raise ValueError("km_estimate: empty input")
    times = np.array([r.time for r in records])
    events = np.array([r.event for r in records])
    uniq = np.unique(times[events == 1])
    s = 1.0
    out_t, out_s = [], []
    for t in uniq:
        n_at_risk = int((times >= t).sum())
        d = int(((times == t) & (events == 1)).sum())
        s *= (n_at_risk - d) / n_at_risk
        out_t.append(float(t))
        out_s.append(s)
    return KMCurve(times=np.asarray(out_t), surv=np.asarray(out_s))


def chi2_sf(x, df=1):
    """Survival function of chi-squared(1): Q(1/2, x/2) = erfc(sqrt(x/2))."""
    if df != 1:
        raise ValueError("chi2_sf: only one degree of freedom supported")
    if x <= 0:
        return 1.0
    return math.erfc(math.sqrt(x / 2.0))


def logrank_test(group_a, group_b):
    """One-degree-of-freedom log-rank test. Returns (chi2, p)."""
    if not group_a or not group_b:
        raise ValueError("logrank_test: both groups must be nonempty")
    ta = np.array([r.time for r in group_a])
    ea = np.array([r.event for r in group_a])
    tb = np.array([r.time for r in group_b])
    eb = np.array([r.event for r in group_b])
    if ea.sum() + eb.sum() == 0:
        raise ValueError("logrank_test: no events in either group")
    event_times = np.unique(np.concatenate([ta[ea == 1], tb[eb == 1]]))
    u = 0.0
    v = 0.0
    for t in event_times:
        n1 = int((ta >= t).sum())
        n2 = int((tb >= t).sum())
        n = n1 + n2
        d1 = int(((ta == t) & (ea == 1)).sum())
        d2 = int(((tb == t) & (eb == 1)).sum())
        d = d1 + d2
        if n == 0 or d == 0:
            continue
        u += d1 - d * n1 / n
        if n > 1:
            v += d * (n1 / n) * (n2 / n) * (n - d) / (n - 1)
    chi2 = 0.0 if v == 0 else u * u / v
    return float(chi2), chi2_sf(chi2)


def concordance_index(records):
    """Fraction of comparable pairs ranked correctly; risk ties count 0.5.

    A pair (i, j) is comparable when T_i < T_j and subject i had the event.
    """
    n = len(records)
    num = 0.0
    den = 0
    for i in range(n):
        if records[i].event != 1:
            continue
        for j in range(n):
            if records[j].time > records[i].time:
                den += 1
                if records[i].risk > records[j].risk:
                    num += 1.0
                elif records[i].risk == records[j].risk:
                    num += 0.5
    if den == 0:
        raise ValueError("concordance_index: no comparable pairs")
    return num / den


def binary_survival_labels(times, threshold=365.0):
    """0 = low-risk (T > threshold), 1 = high-risk (T <= threshold)."""
    times = np.asarray(times, dtype=np.float64)
    return (times <= threshold).astype(np.intp)


def km_stratify(train_risks, test_records):
    """Split test subjects at the training-median risk; KM + log-rank.

    Returns (low_records, high_records, report) where report carries the
    threshold, both KM curves, and the log-rank statistic / p-value.
    """
    thr = float(np.median(np.asarray(train_risks, dtype=np.float64)))
    low = [r for r in test_records if r.risk <= thr]
    high = [r for r in test_records if r.risk > thr]
    if not low or not high:
        raise ValueError("km_stratify: degenerate risks give a single group")
    chi2, p = logrank_test(low, high)
    report = {
        "threshold": thr,
        "km_low": km_estimate(low),
        "km_high": km_estimate(high),
        "chi2": chi2,
        "p": p,
    }
    return low, high, report
