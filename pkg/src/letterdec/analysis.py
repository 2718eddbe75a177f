"""Letter-specificity analysis: split-half averages, similarity matrices, PCA."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataio import N_CLASSES, ChannelLayout, Dataset, EpochAxis, letter_name
from .dsp import BandSpec, PreprocessSpec, TimeWindow, preprocess

SNAPSHOT_TIMES_MS = (300.0, 500.0, 700.0, 900.0, 1100.0, 1300.0)


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class AveragePattern:
    data: np.ndarray
    letter: int
    half: str
    n_trials: int


def letter_rng(seed: int, letter: int) -> np.random.Generator:
    # per-letter stream so letters can be processed in any order
    return np.random.default_rng([int(seed), 2, int(letter)])


def split_indices(ds: Dataset, letter: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    idx = ds.indices_of(letter)
    if len(idx) < 2:
        raise AnalysisError(f"letter {letter} has {len(idx)} epoch(s); need at least 2 to split")
    perm = letter_rng(seed, letter).permutation(idx)
    h = len(perm) // 2
    return perm[:h], perm[h:]


def split_half_average(ds: Dataset, letter: int, seed: int) -> tuple[AveragePattern, AveragePattern]:
    """Shuffle one letter's epochs and average each half.  Odd counts put the extra epoch in B."""
    ia, ib = split_indices(ds, letter, seed)
    a = ds.data[ia].mean(axis=0, dtype=np.float64)
    b = ds.data[ib].mean(axis=0, dtype=np.float64)
    return AveragePattern(a, letter, "A", len(ia)), AveragePattern(b, letter, "B", len(ib))


def _data(p) -> np.ndarray:
    return np.asarray(p.data if isinstance(p, AveragePattern) else p, dtype=np.float64)


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel unit-length centred rows; zero rows where variance is zero."""
    xc = x - x.mean(axis=-1, keepdims=True)
    norm = np.sqrt((xc * xc).sum(axis=-1, keepdims=True))
    flat = norm[..., 0] == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(norm > 0, xc / np.where(norm > 0, norm, 1.0), 0.0)
    return z, flat


def pattern_similarity(a, b) -> float:
    """Mean over channels of the per-channel Pearson r (time as samples)."""
    xa, xb = _data(a), _data(b)
    if xa.shape != xb.shape:
        raise AnalysisError(f"pattern shapes differ: {xa.shape} vs {xb.shape}")
    za, fa = _standardize(xa)
    zb, fb = _standardize(xb)
    if fa.any() or fb.any():
        warnings.warn(f"{int((fa | fb).sum())} zero-variance channel(s) counted as r = 0", stacklevel=2)
    r = (za * zb).sum(axis=-1)
    return float(np.clip(r, -1.0, 1.0).mean())


@dataclass
class SimilarityMatrix:
    """Rows are half-A letters, columns half-B letters (or all 52 patterns when ``full``)."""

    values: np.ndarray
    band: BandSpec | None = None
    window: TimeWindow | None = None
    full: bool = False
    seed: int = 0

    @property
    def labels(self) -> list:
        if self.full:
            return [f"{letter_name(i)}A" for i in range(N_CLASSES)] + [f"{letter_name(i)}B" for i in range(N_CLASSES)]
        return [letter_name(i) for i in range(self.values.shape[0])]

    @property
    def cross(self) -> np.ndarray:
        """The A x B block."""
        n = self.values.shape[0]
        return self.values[: n // 2, n // 2:] if self.full else self.values

    def to_csv(self, path) -> None:
        labs = self.labels
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([""] + labs)
            for lab, row in zip(labs, self.values):
                w.writerow([lab] + [repr(float(v)) for v in row])


def similarity_from_patterns(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """``(La, C, T)`` x ``(Lb, C, T)`` -> ``(La, Lb)`` channel-averaged Pearson matrix."""
    za, fa = _standardize(np.asarray(pa, np.float64))
    zb, fb = _standardize(np.asarray(pb, np.float64))
    if fa.any() or fb.any():
        warnings.warn(f"{int(fa.sum() + fb.sum())} zero-variance pattern channel(s) counted as r = 0", stacklevel=2)
    r = np.einsum("ict,jct->ijc", za, zb, optimize=True)
    return np.clip(r, -1.0, 1.0).mean(axis=-1)


def half_patterns(ds: Dataset, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Split-half averages for all 26 letters, ``(26, C, T)`` each."""
    A, B = [], []
    for letter in range(N_CLASSES):
        a, b = split_half_average(ds, letter, seed)
        A.append(a.data)
        B.append(b.data)
    return np.stack(A), np.stack(B)


def similarity_matrix(ds: Dataset, band: BandSpec | None = None, window: TimeWindow | None = None,
                      seed: int = 0, *, baseline: TimeWindow | None = None, zscore: bool = True,
                      full: bool = False, preprocessed: bool = False) -> SimilarityMatrix:
    """Cross-half similarity matrix.

    Unless ``preprocessed`` is set, ``ds`` is first run through the dsp
    pipeline with ``band``, ``baseline`` and ``window`` (``None`` skips a
    stage).  The split depends only on ``seed`` and the letter, so every band
    and window of a sweep shares one split.
    """
    if not preprocessed:
        ds = preprocess(ds, PreprocessSpec(band=band, baseline=baseline, window=window, zscore=zscore))
    A, B = half_patterns(ds, seed)
    if full:
        P = np.concatenate([A, B])
        vals = similarity_from_patterns(P, P)
    else:
        vals = similarity_from_patterns(A, B)
    return SimilarityMatrix(vals, band, window, full, seed)


def diagonal_contrast(m, n_perm: int = 10000, seed: int = 0) -> tuple[float, float]:
    """Mean diagonal minus mean off-diagonal, with a permutation p-value.

    The null permutes column labels.  Applying one permutation to rows and
    columns together maps the diagonal onto itself, so only the columns move.
    ``p = (1 + #{perm stat >= observed}) / (1 + n_perm)``.
    """
    M = np.asarray(m.cross if isinstance(m, SimilarityMatrix) else m, dtype=np.float64)
    n = M.shape[0]
    if M.ndim != 2 or M.shape[1] != n or n < 2:
        raise AnalysisError(f"need a square matrix of size >= 2, got {M.shape}")
    total = M.sum()

    def contrast(dsum):
        return dsum / n - (total - dsum) / (n * n - n)

    obs_sum = np.trace(M)
    obs = float(contrast(obs_sum))
    rng = np.random.default_rng(seed)
    rows = np.arange(n)
    count = 0
    tol = 1e-12 * max(1.0, np.abs(M).max()) * n
    for start in range(0, n_perm, 2000):
        b = min(2000, n_perm - start)
        perms = rng.permuted(np.tile(rows, (b, 1)), axis=1)
        sums = M[rows, perms].sum(axis=1)
        count += int((sums >= obs_sum - tol).sum())
    return obs, (1 + count) / (1 + n_perm)


@dataclass
class PcaResult:
    components: np.ndarray        # (k, C), rows orthonormal
    scores: np.ndarray            # (k, T)
    explained_variance: np.ndarray
    total_variance: float
    mean: np.ndarray = field(repr=False, default=None)  # (C,) time-mean removed before projection

    @property
    def explained_ratio(self) -> np.ndarray:
        return self.explained_variance / self.total_variance


def temporal_pca(avg, k: int = 3) -> PcaResult:
    """PCA with time points as observations of the C-dim scalp vector.

    Covariance uses the ``T - 1`` normaliser.  Each component is signed so
    its largest-magnitude coefficient is positive.
    """
    X = _data(avg)
    C, T = X.shape
    if not 1 <= k <= C:
        raise AnalysisError(f"k must be in 1..{C}, got {k}")
    if T < 2:
        raise AnalysisError("need at least 2 time points")
    mu = X.mean(axis=1)
    Xc = (X - mu[:, None]).T                     # (T, C)
    cov = Xc.T @ Xc / (T - 1)
    total = float(np.trace(cov))
    if not total > 0:
        raise AnalysisError("degenerate pattern: zero variance over time")
    w, V = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1][:k]
    w = np.clip(w[order], 0.0, None)
    comps = V[:, order].T.copy()
    for i in range(k):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    scores = comps @ Xc.T
    return PcaResult(comps, scores, w, total, mu)


@dataclass
class Snapshot:
    times_ms: tuple
    indices: tuple
    labels: tuple
    values: np.ndarray          # (n_times, C)

    def rows(self) -> list:
        return [{"time_ms": t, "sample": i, **{lab: float(v) for lab, v in zip(self.labels, row)}}
                for t, i, row in zip(self.times_ms, self.indices, self.values)]

    def to_csv(self, path, extra: dict | None = None) -> None:
        extra = extra or {}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(extra) + ["time_ms", "sample"] + list(self.labels))
            for t, i, row in zip(self.times_ms, self.indices, self.values):
                w.writerow(list(extra.values()) + [repr(float(t)), i] + [repr(float(v)) for v in row])


def snapshot_index(t_ms: float, axis: EpochAxis) -> int:
    pos = axis.position(t_ms)
    i = int(np.floor(pos + 0.5 + 1e-9))
    if not 0 <= i < axis.n_samples or pos < -0.5 or pos > axis.n_samples - 0.5:
        raise AnalysisError(f"time {t_ms:g} ms outside epoch axis {axis.start_ms:g}..{axis.end_ms:g} ms")
    return i


def scalp_snapshot(avg, times_ms=SNAPSHOT_TIMES_MS, axis: EpochAxis | None = None,
                   layout: ChannelLayout | None = None) -> Snapshot:
    """Channel values at the sample nearest each requested time."""
    X = _data(avg)
    axis = axis if axis is not None else EpochAxis(250.0, 0.0, X.shape[1])
    layout = layout if layout is not None else ChannelLayout.default(X.shape[0])
    if X.shape != (layout.n_channels, axis.n_samples):
        raise AnalysisError(f"pattern shape {X.shape} disagrees with layout/axis "
                            f"({layout.n_channels}, {axis.n_samples})")
    idx = tuple(snapshot_index(t, axis) for t in times_ms)
    return Snapshot(tuple(float(t) for t in times_ms), idx, layout.labels, X[:, list(idx)].T.copy())


def write_pca_csv(path, results: list) -> None:
    """``results`` is a list of ``(letter, half, PcaResult)``; one row per PC score series."""
    path = Path(path)
    T = results[0][2].scores.shape[1] if results else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["letter", "half", "pc", "explained_ratio"] + [f"t{i}" for i in range(T)])
        for letter, half, res in results:
            for i in range(res.scores.shape[0]):
                w.writerow([letter_name(letter), half, i + 1, repr(float(res.explained_ratio[i]))]
                           + [repr(float(v)) for v in res.scores[i]])
