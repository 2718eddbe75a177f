"""Stratified k-fold training harness, early stopping and run summaries."""

from __future__ import annotations

import csv
import json
import math
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .dataio import N_CLASSES, Dataset
from .models import ModelConfig, build_model
from .nn import functional as F
from .nn.tensor import Tensor, no_grad
from .stats import StatsError, anova_oneway, ttest_one_tailed

CHANCE_LEVEL = 100.0 / N_CLASSES


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 64
    patience: int = 20
    max_epochs: int = 300
    # a fold that reaches 100% cannot improve, so stop there
    stop_at_perfect: bool = True
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.batch_size < 2:
            raise HarnessError("batch_size must be >= 2 (batch norm)")
        if self.patience < 1 or self.max_epochs < 1:
            raise HarnessError("patience and max_epochs must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass(frozen=True)
class FoldPlan:
    """``bins[i]`` is the validation bin of epoch ``i``."""

    k: int
    bins: np.ndarray
    labels: np.ndarray
    seed: int

    def val_indices(self, fold: int) -> np.ndarray:
        self._check(fold)
        return np.flatnonzero(self.bins == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        self._check(fold)
        return np.flatnonzero(self.bins != fold)

    def cell_counts(self) -> np.ndarray:
        """``(n_classes, k)`` table of validation-cell sizes."""
        out = np.zeros((N_CLASSES, self.k), dtype=np.int64)
        np.add.at(out, (self.labels, self.bins), 1)
        return out

    def _check(self, fold):
        if not 0 <= fold < self.k:
            raise HarnessError(f"fold {fold} outside 0..{self.k - 1}")


def make_folds(ds, k: int = 10, seed: int = 0) -> FoldPlan:
    """Per-class seeded shuffle, then contiguous slicing into ``k`` bins.

    ``ds`` may be a Dataset or a label array.
    """
    labels = np.asarray(ds.labels if isinstance(ds, Dataset) else ds, dtype=np.int64)
    if k < 2:
        raise HarnessError("k must be >= 2")
    bins = np.full(len(labels), -1, dtype=np.int64)
    for c in range(N_CLASSES):
        idx = np.flatnonzero(labels == c)
        if len(idx) == 0:
            continue
        if len(idx) < k:
            raise HarnessError(f"class {c} has {len(idx)} samples, fewer than k={k}")
        if len(idx) % k:
            warnings.warn(f"class {c}: {len(idx)} samples not divisible by k={k}; bins differ by 1", stacklevel=2)
        perm = np.random.default_rng([int(seed), 1, c]).permutation(idx)
        for b, part in enumerate(np.array_split(perm, k)):
            bins[part] = b
    return FoldPlan(k, bins, labels, int(seed))


def fold_seed(run_seed: int, model_name: str, fold: int) -> np.random.SeedSequence:
    # crc32, unlike hash(), is stable across processes
    return np.random.SeedSequence([int(run_seed), zlib.crc32(model_name.encode()), int(fold)])


@dataclass
class FoldResult:
    fold_index: int
    best_val_accuracy: float | None
    epoch_of_best: int | None
    train_loss_curve: list = field(default_factory=list)
    val_accuracy_curve: list = field(default_factory=list)
    status: str = "ok"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def n_evaluations(self) -> int:
        return len(self.val_accuracy_curve)

    def to_dict(self) -> dict:
        return asdict(self)


def _batches(idx: np.ndarray, size: int):
    for i in range(0, len(idx), size):
        yield idx[i:i + size]


def evaluate(model, X: np.ndarray, y: np.ndarray, batch_size: int = 256) -> float:
    """Accuracy in percent, eval mode."""
    model.eval()
    correct = 0
    with no_grad():
        for sl in _batches(np.arange(len(y)), batch_size):
            logits = model(Tensor(X[sl]))
            F.check_finite(logits, "validation forward")
            correct += int((logits.data.argmax(axis=1) == y[sl]).sum())
    return 100.0 * correct / len(y)


def _model_input(ds: Dataset) -> np.ndarray:
    return np.ascontiguousarray(ds.data[:, None], dtype=np.float32)


def train_one_fold(cfg: ModelConfig, ds: Dataset, plan: FoldPlan, fold: int, train_cfg: TrainConfig = TrainConfig(),
                   run_seed: int = 0, model_name: str | None = None, X: np.ndarray | None = None,
                   checkpoint=None) -> FoldResult:
    """Train on the other bins and track validation accuracy after every epoch.

    Stops after ``patience`` epochs without strict improvement, at
    ``max_epochs``, or at 100% validation accuracy.  A non-finite loss,
    activation or gradient ends the fold with ``status="diverged"``.
    If ``checkpoint`` is a path, the best-epoch parameters are written there.
    """
    name = model_name or cfg.arch
    ss = fold_seed(run_seed, name, fold)
    init_seed, shuffle_seed, drop_seed = (int(s) for s in ss.generate_state(3))
    model = build_model(cfg, seed=init_seed)
    model.reseed_dropout(drop_seed)
    X = _model_input(ds) if X is None else X
    y = ds.labels
    tr, va = plan.train_indices(fold), plan.val_indices(fold)
    opt = nn.Adam(model.parameters(), lr=train_cfg.lr, betas=train_cfg.betas, eps=train_cfg.eps)
    rng = np.random.default_rng(shuffle_seed)
    losses, accs = [], []
    best, best_epoch, wait = -1.0, None, 0
    try:
        for epoch in range(train_cfg.max_epochs):
            model.train()
            order = rng.permutation(tr)
            total, seen = 0.0, 0
            for bidx in _batches(order, train_cfg.batch_size):
                if len(bidx) < 2:
                    continue
                opt.zero_grad()
                logits = model(Tensor(X[bidx]))
                loss = F.softmax_cross_entropy(logits, y[bidx])
                lv = float(loss.data)
                if not math.isfinite(lv):
                    raise nn.DivergenceError(f"non-finite training loss at epoch {epoch}")
                loss.backward()
                opt.step()
                total += lv * len(bidx)
                seen += len(bidx)
            losses.append(total / max(seen, 1))
            acc = evaluate(model, X[va], y[va], train_cfg.eval_batch_size)
            accs.append(acc)
            if acc > best:
                best, best_epoch, wait = acc, epoch, 0
                if checkpoint is not None:
                    nn.save_checkpoint(model, checkpoint)
            else:
                wait += 1
            if wait >= train_cfg.patience or (train_cfg.stop_at_perfect and acc >= 100.0):
                break
    except (nn.DivergenceError, FloatingPointError) as exc:
        return FoldResult(fold, max(accs) if accs else None, best_epoch, losses, accs, "diverged",
                          f"{type(exc).__name__}: {exc} (after {len(accs)} epoch(s))")
    return FoldResult(fold, best, best_epoch, losses, accs)


# worker-process state for parallel runs
_WORKER_DS: Dataset | None = None
_WORKER_X: np.ndarray | None = None


def _init_worker(ds: Dataset) -> None:
    global _WORKER_DS, _WORKER_X
    _WORKER_DS = ds
    _WORKER_X = _model_input(ds)


def _run_unit(args) -> FoldResult:
    name, cfg, plan, fold, train_cfg, run_seed, ckpt_dir = args
    ckpt = None if ckpt_dir is None else Path(ckpt_dir) / f"{name}_fold{fold:02d}.eegm"
    return train_one_fold(cfg, _WORKER_DS, plan, fold, train_cfg, run_seed, name, _WORKER_X, ckpt)


def run_models(cfgs: dict, ds: Dataset, plan: FoldPlan, train_cfg: TrainConfig = TrainConfig(),
               run_seed: int = 0, jobs: int = 1, folds=None, progress=None, checkpoint_dir=None) -> dict:
    """Cross-validate every ``name -> ModelConfig``; returns ``name -> [FoldResult]`` in fold order.

    All units share ``plan``.  Results do not depend on ``jobs``.
    """
    folds = list(range(plan.k)) if folds is None else list(folds)
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    units = [(name, cfg, plan, f, train_cfg, run_seed, checkpoint_dir) for name, cfg in cfgs.items() for f in folds]
    if jobs <= 1:
        _init_worker(ds)
        out = []
        for u in units:
            out.append(_run_unit(u))
            if progress:
                progress(u[0], out[-1])
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ds,)) as ex:
            out = []
            for u, r in zip(units, ex.map(_run_unit, units)):
                out.append(r)
                if progress:
                    progress(u[0], r)
    res: dict = {name: [] for name in cfgs}
    for u, r in zip(units, out):
        res[u[0]].append(r)
    return res


def cross_validate(cfg: ModelConfig, ds: Dataset, plan: FoldPlan, train_cfg: TrainConfig = TrainConfig(),
                   run_seed: int = 0, jobs: int = 1) -> list:
    return run_models({cfg.arch: cfg}, ds, plan, train_cfg, run_seed, jobs)[cfg.arch]


def grid_search(base: ModelConfig, grid: dict, ds: Dataset, plan: FoldPlan, train_cfg: TrainConfig = TrainConfig(),
                run_seed: int = 0, folds=(0,), jobs: int = 1) -> list:
    """Mean best validation accuracy for every combination in ``grid`` (field -> values)."""
    import itertools

    keys = sorted(grid)
    cfgs = {}
    for combo in itertools.product(*(grid[k] for k in keys)):
        over = dict(zip(keys, combo))
        d = base.to_dict()
        d.update(over)
        arch = d.pop("arch")
        cfgs[json.dumps(over, sort_keys=True)] = ModelConfig.for_arch(arch, **d)
    res = run_models(cfgs, ds, plan, train_cfg, run_seed, jobs, folds)
    rows = []
    for key, frs in res.items():
        vals = [r.best_val_accuracy for r in frs if r.ok]
        rows.append((json.loads(key), float(np.mean(vals)) if vals else None))
    return sorted(rows, key=lambda r: -(r[1] if r[1] is not None else -1))


def noise_floor_bound(n_val: int, n_evals: int, q: float = 0.99, n_classes: int = N_CLASSES,
                      n_sims: int = 200_000, seed: int = 0) -> float:
    """Monte-Carlo ``q``-quantile (percent) of the best of ``n_evals`` chance-level validation passes.

    Each pass is modelled as an independent Binomial(n_val, 1/n_classes)
    count.  Real passes of one training run are positively correlated, so
    the independent model gives a conservative (higher) bound.
    """
    rng = np.random.default_rng(seed)
    best = np.empty(n_sims, dtype=np.int64)
    chunk = max(1, 2_000_000 // max(n_evals, 1))
    for i in range(0, n_sims, chunk):
        m = min(chunk, n_sims - i)
        best[i:i + m] = rng.binomial(n_val, 1.0 / n_classes, size=(m, n_evals)).max(axis=1)
    return 100.0 * float(np.quantile(best, q, method="higher")) / n_val


def noise_floor_exact(n_val: int, n_evals: int, q: float = 0.99, n_classes: int = N_CLASSES) -> float:
    """Closed form of :func:`noise_floor_bound`: smallest k with ``F(k)^n_evals >= q``."""
    from scipy.stats import binom

    cdf = binom.cdf(np.arange(n_val + 1), n_val, 1.0 / n_classes) ** n_evals
    return 100.0 * int(np.searchsorted(cdf, q)) / n_val


@dataclass
class ModelStats:
    n_folds: int
    n_failed: int
    max: float | None
    mean: float | None
    median: float | None
    q1: float | None
    q3: float | None
    iqr: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def model_stats(results: list) -> ModelStats:
    vals = np.array([r.best_val_accuracy for r in results if r.ok], dtype=np.float64)
    failed = sum(not r.ok for r in results)
    if not len(vals):
        return ModelStats(len(results), failed, None, None, None, None, None, None)
    q1, med, q3 = np.percentile(vals, [25, 50, 75])
    return ModelStats(len(results), failed, float(vals.max()), float(vals.mean()), float(med),
                      float(q1), float(q3), float(q3 - q1))


@dataclass
class RunReport:
    subject_id: str
    results: dict            # name -> [FoldResult]
    stats: dict              # name -> ModelStats
    anova: dict | None
    ttests: list
    chance_level: float = CHANCE_LEVEL
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "chance_level": self.chance_level,
            "models": {name: {"stats": self.stats[name].to_dict(),
                              "folds": [r.to_dict() for r in frs]} for name, frs in self.results.items()},
            "anova": self.anova,
            "ttests": self.ttests,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        results = {name: [FoldResult(**fr) for fr in m["folds"]] for name, m in d["models"].items()}
        stats = {name: ModelStats(**m["stats"]) for name, m in d["models"].items()}
        return cls(d["subject_id"], results, stats, d["anova"], d["ttests"], d["chance_level"], d.get("metadata", {}))

    def write(self, out_dir, prefix: str = "run") -> list:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / f"{prefix}_report.json", out_dir / f"{prefix}_table1.csv", out_dir / f"{prefix}_folds.csv"]
        paths[0].write_text(self.to_json())
        write_table1([self], paths[1])
        with open(paths[2], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "model", "fold", "best_val_accuracy", "epoch_of_best", "n_epochs", "status"])
            for name, frs in self.results.items():
                for r in frs:
                    acc = "" if r.best_val_accuracy is None else f"{r.best_val_accuracy:.4f}"
                    w.writerow([self.subject_id, name, r.fold_index, acc,
                                "" if r.epoch_of_best is None else r.epoch_of_best, r.n_evaluations, r.status])
        return paths


def write_table1(reports: list, path) -> None:
    """Models as rows, subjects as columns, cells = max best validation accuracy (4 decimals)."""
    names = list(dict.fromkeys(n for r in reports for n in r.results))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model"] + [r.subject_id for r in reports])
        for n in names:
            row = [n]
            for r in reports:
                s = r.stats.get(n)
                row.append("" if s is None or s.max is None else f"{s.max:.4f}")
            w.writerow(row)


def summarize_run(results: dict, subject_id: str = "subject", t_mode: str = "paired",
                  metadata: dict | None = None) -> RunReport:
    """Per-model order statistics, one-way ANOVA across models and one-tailed pairwise t-tests.

    t-tests cover every ordered pair (a, b), testing mean(a) > mean(b).
    Pairing is by fold index, so only folds that succeeded for both models
    enter a paired test.
    """
    stats = {name: model_stats(frs) for name, frs in results.items()}
    ok = {name: {r.fold_index: r.best_val_accuracy for r in frs if r.ok} for name, frs in results.items()}
    anova = None
    groups = [list(v.values()) for v in ok.values()]
    if len(groups) >= 2:
        try:
            anova = anova_oneway(groups).to_dict()
        except StatsError as exc:
            anova = {"error": str(exc)}
    tests = []
    names = list(results)
    for a in names:
        for b in names:
            if a == b:
                continue
            if t_mode == "paired":
                common = sorted(set(ok[a]) & set(ok[b]))
                xa, xb = [ok[a][f] for f in common], [ok[b][f] for f in common]
            else:
                xa, xb = list(ok[a].values()), list(ok[b].values())
            entry = {"a": a, "b": b, "mode": t_mode}
            try:
                entry.update(ttest_one_tailed(xa, xb, t_mode).to_dict())
            except StatsError as exc:
                entry["error"] = str(exc)
            tests.append(entry)
    return RunReport(subject_id, results, stats, anova, tests, CHANCE_LEVEL, metadata or {})
