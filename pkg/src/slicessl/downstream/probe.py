"""Frozen-backbone probing protocol: nested stratified data-ratio
subsampling, per-task head training, metrics, and bootstrap CIs."""

from dataclasses import dataclass

import numpy as np

from .. import tensorcore as tc
from ..errors import ConfigError
from . import losses, metrics, survival
from .heads import TaskHeadConfig, head_forward, head_init

TASKS = ("cls", "reg", "atlas", "cox", "surv-bin")
RATIO_GRID = (0.1, 0.2, 0.4, 0.6, 0.8, 1.0)

# (lr, weight_decay, decoupled) per task
_OPTIM = {
    "cls": (1e-4, 1e-5, False),
    "surv-bin": (1e-4, 1e-5, False),
    "reg": (1e-4, 1e-5, False),
    "atlas": (1e-3, 1e-4, True),
    "cox": (3e-4, 1e-3, False),
}


@dataclass
class ProbeConfig:
    task: str
    epochs: int = 100
    hidden: int | None = None
    dropout: float = 0.0
    surv_threshold: float = 365.0
    cox_exclude_early_censored: bool = True
    bootstrap_iters: int = 2000
    lr: float | None = None             # None -> per-task protocol default
    weight_decay: float | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task {self.task!r} not in {TASKS}")

    def optim(self):
        lr, wd, decoupled = _OPTIM[self.task]
        return (self.lr if self.lr is not None else lr,
                self.weight_decay if self.weight_decay is not None else wd,
                decoupled)


def _strata_for(task, bank, cfg):
    if task in ("cls",):
        return np.asarray(bank.labels, dtype=np.intp)
    if task == "surv-bin":
        return survival.binary_survival_labels(bank.labels[:, 0], cfg.surv_threshold)
    if task == "cox":
        return np.asarray(bank.labels[:, 1], dtype=np.intp)  # event flag
    return None


def nested_subsample(strata, n, ratio, seed):
    """First ceil(ratio * n_s) of a per-stratum shuffled order, so smaller
    ratios are strict subsets of larger ones (clean learning curves).

    ceil keeps at least one row per stratum at any ratio; a class can only
    come out empty when the source bank itself lacks it (caught upstream).
    """
    if not 0 < ratio <= 1:
        raise ConfigError(f"ratio {ratio} outside (0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
    if strata is None:
        order = rng.permutation(n)
        take = max(1, int(np.ceil(ratio * n)))
        return np.sort(order[:take])
    idx = []
    for s in np.unique(strata):
        rows = np.flatnonzero(strata == s)
        order = rows[rng.permutation(len(rows))]
        take = int(np.ceil(ratio * len(rows)))
        if take == 0:
            raise ConfigError(f"ratio {ratio} empties stratum {s}")
        idx.append(order[:take])
    return np.sort(np.concatenate(idx))


def _targets(task, bank, cfg):
    if task in ("cls",):
        return np.asarray(bank.labels, dtype=np.intp)
    if task == "surv-bin":
        return survival.binary_survival_labels(bank.labels[:, 0], cfg.surv_threshold)
    if task == "reg":
        return np.asarray(bank.labels, dtype=np.float64)
    if task == "atlas":
        return losses.atlas_transform(bank.labels)
    return np.asarray(bank.labels, dtype=np.float64)  # cox: (n, 2)


def _loss_for(task, logits, y, idx):
    if task in ("cls", "surv-bin"):
        return losses.ce_loss(logits, y[idx])
    if task == "reg":
        return losses.mse_loss(logits, y[idx, None])
    if task == "atlas":
        return losses.atlas_loss(logits, y[idx, None])
    return losses.cox_loss(y[idx, 0], y[idx, 1], tc.reshape(logits, (len(idx),)))


def _scores(params, feats, cfg_head):
    with tc.no_grad():
        out = head_forward(params, tc.tensor(feats), cfg_head)
    return out.data


def train_head(train_bank, test_bank, task, ratio=1.0, seed=0, cfg=None):
    """Train a task head on a stratified subset of the training bank.

    The backbone never appears here: heads consume frozen features only.
    Fixed-epoch full-batch optimization with best-test-loss selection.
    Returns (head_params, metrics dict, info dict).
    """
    cfg = cfg or ProbeConfig(task=task)
    if cfg.task != task:
        raise ConfigError("ProbeConfig task mismatch")
    y_train_full = _targets(task, train_bank, cfg)
    y_test = _targets(task, test_bank, cfg)

    keep = None
    if task == "cox" and cfg.cox_exclude_early_censored:
        t, e = train_bank.labels[:, 0], train_bank.labels[:, 1]
        keep = ~((e == 0) & (t <= cfg.surv_threshold))
    strata_full = _strata_for(task, train_bank, cfg)
    if keep is not None:
        base_rows = np.flatnonzero(keep)
    else:
        base_rows = np.arange(train_bank.n)
    strata = strata_full[base_rows] if strata_full is not None else None
    sub = nested_subsample(strata, len(base_rows), ratio, seed)
    rows = base_rows[sub]
    if task in ("cls", "surv-bin") and len(np.unique(y_train_full[rows])) < 2:
        raise ConfigError(f"ratio {ratio} leaves a single class")

    x_train = train_bank.features[rows]
    x_test = test_bank.features
    y = y_train_full
    if task in ("cls", "surv-bin"):
        n_out = int(max(y_train_full.max(), y_test.max())) + 1
    else:
        n_out = 1
    head_cfg = TaskHeadConfig(in_dim=train_bank.dim, n_out=n_out,
                              hidden=cfg.hidden, dropout=cfg.dropout)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBEAD]))
    params = head_init(head_cfg, rng)
    lr, wd, decoupled = cfg.optim()
    opt = tc.AdamW(params, weight_decay=wd, decoupled=decoupled)
    drop_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD0]))

    xt = tc.tensor(x_train)
    best = (np.inf, None)
    for _ in range(cfg.epochs):
        logits = head_forward(params, xt, head_cfg,
                              dropout_rng=drop_rng if head_cfg.dropout else None)
        loss = _loss_for(task, logits, y, rows)
        tc.backward(loss)
        opt.step(lr)
        opt.zero_grad()
        test_loss = _eval_loss(task, params, head_cfg, x_test, y_test)
        if test_loss < best[0]:
            best = (test_loss, {k: p.data.copy() for k, p in params.items()})
    if best[1] is not None:
        for k, p in params.items():
            p.data[...] = best[1][k]

    result = evaluate_head(params, head_cfg, task, test_bank, cfg)
    info = {"n_train": len(rows), "ratio": ratio, "seed": seed,
            "best_test_loss": float(best[0]), "train_rows": rows}
    return params, result, info


def _eval_loss(task, params, head_cfg, x_test, y_test):
    with tc.no_grad():
        logits = head_forward(params, tc.tensor(x_test), head_cfg)
        idx = np.arange(len(x_test))
        try:
            return float(_loss_for(task, logits, y_test, idx).item())
        except ValueError:  # e.g. a resample with zero events
            return np.inf


def evaluate_head(params, head_cfg, task, test_bank, cfg):
    """Task metrics on the fixed test split."""
    scores = _scores(params, test_bank.features, head_cfg)
    if task in ("cls", "surv-bin"):
        y = _targets(task, test_bank, cfg)
        k = scores.shape[1]
        if k == 2:
            auc = metrics.roc_auc(scores[:, 1], y)
        else:
            auc = metrics.roc_auc(scores, y, macro=True)
        acc = float((scores.argmax(axis=1) == y).mean())
        return {"auc": auc, "accuracy": acc}
    if task == "reg":
        pred = scores[:, 0]
        y = _targets(task, test_bank, cfg)
        return {"mae": metrics.mae(pred, y), "rmse": metrics.rmse(pred, y),
                "r2": metrics.r2(pred, y)}
    if task == "atlas":
        pred = losses.atlas_inverse(scores[:, 0])
        y = np.asarray(test_bank.labels, dtype=np.float64)
        return {"mae": metrics.mae(pred, y), "rmse": metrics.rmse(pred, y),
                "r2": metrics.r2(pred, y)}
    # cox
    t, e = test_bank.labels[:, 0], test_bank.labels[:, 1]
    recs = survival.records_from_arrays(t, e, scores[:, 0])
    return {"c_index": survival.concordance_index(recs)}


def cox_km_report(params, head_cfg, train_bank, test_bank, cfg=None):
    """Median-risk stratification of the test set per the KM protocol."""
    cfg = cfg or ProbeConfig(task="cox")
    train_risk = _scores(params, train_bank.features, head_cfg)[:, 0]
    test_risk = _scores(params, test_bank.features, head_cfg)[:, 0]
    recs = survival.records_from_arrays(test_bank.labels[:, 0],
                                        test_bank.labels[:, 1], test_risk)
    return survival.km_stratify(train_risk, recs)


def bootstrap_ci(metric_fn, n, strata=None, iters=2000, seed=0, retries=10):
    """Percentile 95% CI of metric_fn(index_array) over resamples.

    Stratified resampling preserves per-class counts. A resample on which
    the metric is undefined is redrawn, at most `retries` times.
    """
    if n == 0:
        raise ValueError("bootstrap_ci: empty test set")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB007]))
    vals = []
    for _ in range(iters):
        for attempt in range(retries + 1):
            if strata is None:
                idx = rng.integers(0, n, size=n)
            else:
                parts = []
                for s in np.unique(strata):
                    rows = np.flatnonzero(strata == s)
                    parts.append(rng.choice(rows, size=len(rows), replace=True))
                idx = np.concatenate(parts)
            try:
                vals.append(float(metric_fn(idx)))
                break
            except ValueError:
                if attempt == retries:
                    raise
    lo, hi = np.percentile(vals, [2.5, 97.5])
    return float(lo), float(hi)


def ratio_sweep(train_bank, test_bank, task, ratios=RATIO_GRID, seed=0, cfg=None,
                with_ci=False):
    """Head metrics per labeled-data ratio; rows ready for CSV export."""
    cfg = cfg or ProbeConfig(task=task)
    rows = []
    for ratio in ratios:
        params, result, info = train_head(train_bank, test_bank, task, ratio,
                                          seed, cfg)
        for name, value in result.items():
            lo = hi = None
            if with_ci:
                lo, hi = _metric_ci(params, task, test_bank, cfg, name, seed)
            rows.append({"task": task, "ratio": ratio, "metric": name,
                         "value": float(value), "ci_low": lo, "ci_high": hi,
                         "n_train": info["n_train"]})
    return rows


def _metric_ci(params, task, test_bank, cfg, metric_name, seed):
    head_cfg = TaskHeadConfig(in_dim=test_bank.dim,
                              n_out=params["fc2.bias"].shape[0],
                              hidden=cfg.hidden, dropout=cfg.dropout)
    scores = _scores(params, test_bank.features, head_cfg)
    y = _targets(task, test_bank, cfg)
    strata = _strata_for(task, test_bank, cfg)

    def metric_on(idx):
        sub_bank_scores = scores[idx]
        yy = y[idx]
        if task in ("cls", "surv-bin"):
            if scores.shape[1] == 2:
                val = metrics.roc_auc(sub_bank_scores[:, 1], yy)
            else:
                val = metrics.roc_auc(sub_bank_scores, yy, macro=True)
            if metric_name == "accuracy":
                val = float((sub_bank_scores.argmax(axis=1) == yy).mean())
            return val
        if task == "reg":
            return getattr(metrics, metric_name)(sub_bank_scores[:, 0], yy)
        if task == "atlas":
            pred = losses.atlas_inverse(sub_bank_scores[:, 0])
            return getattr(metrics, metric_name)(pred, np.asarray(test_bank.labels)[idx])
        recs = survival.records_from_arrays(yy[:, 0], yy[:, 1], sub_bank_scores[:, 0])
        return survival.concordance_index(recs)

    return bootstrap_ci(metric_on, test_bank.n, strata=strata,
                        iters=cfg.bootstrap_iters, seed=seed)
