"""Synthetic letter-evoked EEG with a controllable signal-to-noise ratio.

Each class gets a smooth low-rank spatiotemporal template of unit Frobenius
norm.  A trial is::

    gain * (snr * roll(template, jitter) + noise_scale * unit-norm Gaussian field)
        + per-session channel offset

so the per-trial signal/noise amplitude ratio is exactly ``snr`` (for
``noise_scale == 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataio import N_CLASSES, ChannelLayout, Dataset, EpochAxis


@dataclass(frozen=True)
class TemplateSet:
    templates: np.ndarray      # (n_classes, C, T), float64
    seed: int
    smoothness: float
    sampling_rate_hz: float = 250.0

    @property
    def shape(self) -> tuple:
        return self.templates.shape[1:]


def _gaussian_lowpass(x: np.ndarray, sigma: float) -> np.ndarray:
    # circular Gaussian smoothing along the last axis, applied in the frequency domain
    T = x.shape[-1]
    f = np.fft.rfftfreq(T)
    H = np.exp(-2.0 * (math.pi * f * sigma) ** 2)
    return np.fft.irfft(np.fft.rfft(x, axis=-1) * H, n=T, axis=-1)


def make_templates(C: int = 24, T: int = 400, n_classes: int = N_CLASSES, smoothness: float = 4.0,
                   seed: int = 0, rank: int = 3, sampling_rate_hz: float = 250.0,
                   max_similarity: float = 0.99) -> TemplateSet:
    """Random smooth templates.

    ``smoothness`` is the temporal Gaussian width in samples (frequency
    cutoff about ``fs / (2 pi smoothness)``).  Each template is a sum of
    ``rank`` outer products of a random spatial map and a smoothed random
    time course.
    """
    if C < 1 or T < 2 or n_classes < 1 or rank < 1:
        raise ValueError(f"degenerate template dims C={C}, T={T}, n_classes={n_classes}, rank={rank}")
    if smoothness <= 0:
        raise ValueError("smoothness must be positive")
    rng = np.random.default_rng(seed)
    out = np.empty((n_classes, C, T))
    for k in range(n_classes):
        for _ in range(100):
            spatial = rng.standard_normal((rank, C))
            temporal = _gaussian_lowpass(rng.standard_normal((rank, T)), smoothness)
            tpl = spatial.T @ temporal
            tpl /= np.linalg.norm(tpl)
            if k == 0 or np.max(np.abs(out[:k].reshape(k, -1) @ tpl.ravel())) < max_similarity:
                break
        else:  # pragma: no cover
            raise RuntimeError("could not draw a distinct template")
        out[k] = tpl
    return TemplateSet(out, seed, smoothness, sampling_rate_hz)


@dataclass(frozen=True)
class SynthSpec:
    """Generation parameters.

    ``noise_scale = 0`` is the noise-free (snr -> infinity) mode.  ``gain``
    rescales whole trials (default ``sqrt(C*T)``, about unit per-sample
    noise variance); it does not change the SNR.  ``session_drift`` is the
    standard deviation of per-session channel offsets in per-sample noise
    units.
    """

    snr: float = 1.0
    n_per_class: int = 100
    trial_jitter_ms: float = 0.0
    session_drift: float = 0.0
    n_sessions: int = 1
    noise_scale: float = 1.0
    gain: float | None = None
    seed: int = 0
    subject_id: str = "synth"

    def __post_init__(self):
        if not self.snr >= 0 or math.isinf(self.snr):
            raise ValueError(f"snr must be finite and >= 0, got {self.snr}")
        if self.n_per_class < 1 or self.n_sessions < 1:
            raise ValueError("n_per_class and n_sessions must be >= 1")
        if self.trial_jitter_ms < 0 or self.session_drift < 0 or self.noise_scale < 0:
            raise ValueError("jitter, drift and noise_scale must be non-negative")


def synthesize_dataset(ts: TemplateSet, spec: SynthSpec) -> Dataset:
    """Balanced float32 dataset; epoch ``i`` has label ``i % n_classes``.

    Each trial draws from its own generator seeded by ``(spec.seed, i)``.
    """
    L, C, T = ts.templates.shape
    fs = ts.sampling_rate_hz
    n = L * spec.n_per_class
    gain = math.sqrt(C * T) if spec.gain is None else float(spec.gain)
    unit = gain / math.sqrt(C * T)
    max_shift = int(round(spec.trial_jitter_ms * fs / 1000.0))
    labels = np.arange(n) % L
    trials = np.arange(n) // L
    sessions = trials * spec.n_sessions // spec.n_per_class
    drift_rng = np.random.default_rng([spec.seed, 2**31 - 1])
    offsets = drift_rng.standard_normal((spec.n_sessions, C)) * spec.session_drift * unit
    data = np.empty((n, C, T), dtype=np.float32)
    for i in range(n):
        rng = np.random.default_rng([spec.seed, i])
        shift = int(rng.integers(-max_shift, max_shift + 1)) if max_shift else 0
        x = spec.snr * np.roll(ts.templates[labels[i]], shift, axis=-1)
        if spec.noise_scale > 0:
            z = rng.standard_normal((C, T))
            x = x + spec.noise_scale * z / np.linalg.norm(z)
        x = gain * x + offsets[sessions[i]][:, None]
        data[i] = x
    return Dataset(data, labels, sessions, trials, ChannelLayout.default(C), EpochAxis(fs, 0.0, T),
                   spec.subject_id)


def synth_dataset(snr: float = 1.0, n_per_class: int = 100, seed: int = 0, template_seed: int = 0,
                  C: int = 24, T: int = 400, **kw) -> Dataset:
    """Shortcut: templates and dataset in one call."""
    return synthesize_dataset(make_templates(C, T, seed=template_seed),
                              SynthSpec(snr=snr, n_per_class=n_per_class, seed=seed, **kw))
