"""Deterministic preprocessing: bandpass, baseline, crop, z-score.

Each step has an array form working on the last axis of ``(..., T)``
arrays and an :class:`~letterdec.dataio.Epoch` form.  :func:`preprocess`
runs the fixed pipeline over a whole dataset.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .dataio import Dataset, Epoch, EpochAxis


class DspError(ValueError):
    pass


class DegenerateEpochError(DspError):
    """Z-scoring an epoch whose flattened standard deviation is zero."""


@dataclass(frozen=True)
class BandSpec:
    """Butterworth passband.  ``order`` is the design order per cutoff edge.

    ``low_hz == 0`` gives a pure lowpass.
    """

    low_hz: float
    high_hz: float
    order: int = 4

    def __post_init__(self):
        if not (self.low_hz >= 0 and math.isfinite(self.low_hz)):
            raise DspError(f"low_hz must be >= 0, got {self.low_hz}")
        if not self.high_hz > self.low_hz:
            raise DspError(f"high_hz ({self.high_hz}) must exceed low_hz ({self.low_hz})")
        if int(self.order) != self.order or self.order < 2 or self.order % 2:
            raise DspError(f"order must be a positive even integer, got {self.order}")

    def check(self, fs: float) -> None:
        if self.high_hz >= fs / 2:
            raise DspError(f"high_hz {self.high_hz} Hz is not below Nyquist ({fs / 2} Hz)")

    @property
    def padlen(self) -> int:
        return 3 * int(self.order)

    def label(self) -> str:
        return f"{self.low_hz:g}-{self.high_hz:g}Hz"


@dataclass(frozen=True)
class TimeWindow:
    start_ms: float
    end_ms: float

    def __post_init__(self):
        if not self.end_ms > self.start_ms:
            raise DspError(f"empty window: {self.start_ms}..{self.end_ms} ms")

    def indices(self, axis: EpochAxis) -> slice:
        """Half-open sample range ``[round(start), round(end))`` on ``axis``."""
        i0 = _round_half_up(axis.position(self.start_ms))
        i1 = _round_half_up(axis.position(self.end_ms))
        if i1 <= i0:
            raise DspError(f"empty window: {self.label()} covers no samples")
        if i0 < 0 or i1 > axis.n_samples:
            raise DspError(f"window {self.label()} not contained in epoch axis "
                           f"{axis.start_ms:g}..{axis.time_of(axis.n_samples):g} ms")
        return slice(i0, i1)

    def label(self) -> str:
        return f"{self.start_ms:g}-{self.end_ms:g}ms"


def _round_half_up(v: float) -> int:
    # guard against 49.999999 from float time arithmetic
    return int(math.floor(v + 0.5 + 1e-9))


MAIN_BAND = BandSpec(0.1, 45.0)
MAIN_WINDOW = TimeWindow(0.0, 1600.0)
BASELINE_WINDOW = TimeWindow(-200.0, 0.0)
SWEEP_WINDOWS = (TimeWindow(0, 1000), TimeWindow(100, 1200), TimeWindow(200, 1400), TimeWindow(300, 1600))
SWEEP_BANDS = (BandSpec(1, 10), BandSpec(5, 20), BandSpec(9, 30))


def butter_sos(band: BandSpec, fs: float) -> np.ndarray:
    band.check(fs)
    if band.low_hz == 0:
        return signal.butter(band.order, band.high_hz, btype="lowpass", fs=fs, output="sos")
    return signal.butter(band.order, [band.low_hz, band.high_hz], btype="bandpass", fs=fs, output="sos")


def bandpass_array(x: np.ndarray, band: BandSpec, fs: float) -> np.ndarray:
    """Zero-phase Butterworth filter along the last axis (float64 out)."""
    x = np.asarray(x, dtype=np.float64)
    sos = butter_sos(band, fs)
    n = x.shape[-1]
    if n <= band.padlen:
        raise DspError(f"{n} samples is too short for edge padding of {band.padlen}")
    # 'even' extension mirrors about the edge sample without repeating it
    return signal.sosfiltfilt(sos, x, axis=-1, padtype="even", padlen=band.padlen)


def bandpass_filter(epoch: Epoch, band: BandSpec, axis: EpochAxis) -> Epoch:
    return Epoch(bandpass_array(epoch.data, band, axis.sampling_rate_hz),
                 epoch.label, epoch.session_id, epoch.trial_id)


def baseline_array(x: np.ndarray, window: TimeWindow, axis: EpochAxis) -> np.ndarray:
    sl = window.indices(axis)
    x = np.asarray(x, dtype=np.float64)
    return x - x[..., sl].mean(axis=-1, keepdims=True)


def baseline_correct(epoch: Epoch, window: TimeWindow = BASELINE_WINDOW, axis: EpochAxis | None = None) -> Epoch:
    axis = axis if axis is not None else EpochAxis.raw()
    return Epoch(baseline_array(epoch.data, window, axis), epoch.label, epoch.session_id, epoch.trial_id)


def crop_axis(window: TimeWindow, axis: EpochAxis) -> tuple[slice, EpochAxis]:
    sl = window.indices(axis)
    return sl, EpochAxis(axis.sampling_rate_hz, axis.time_of(sl.start), sl.stop - sl.start)


def crop_epoch(epoch: Epoch, window: TimeWindow, axis: EpochAxis) -> tuple[Epoch, EpochAxis]:
    sl, new_axis = crop_axis(window, axis)
    return Epoch(np.asarray(epoch.data)[..., sl], epoch.label, epoch.session_id, epoch.trial_id), new_axis


def zscore_array(x: np.ndarray) -> np.ndarray:
    """Z-score each ``(C, T)`` slice of a ``(..., C, T)`` array over its flattened values."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(x.shape[:-2] + (-1,))
    mu = flat.mean(axis=-1, keepdims=True)
    sd = flat.std(axis=-1, keepdims=True)
    bad = ~(sd > 0) | ~np.isfinite(sd)
    if bad.any():
        where = np.argwhere(bad[..., 0])
        raise DegenerateEpochError(f"degenerate epoch (zero standard deviation) at index {where[0].tolist()}")
    return ((flat - mu) / sd).reshape(x.shape)


def zscore_normalize(epoch: Epoch) -> Epoch:
    return Epoch(zscore_array(epoch.data), epoch.label, epoch.session_id, epoch.trial_id)


def ica_passthrough(x):
    """Reserved artifact-removal slot.  Returns its input unchanged."""
    warnings.warn("ICA stage is a pass-through; no artifact removal applied", stacklevel=2)
    return x


@dataclass(frozen=True)
class PreprocessSpec:
    """Pipeline parameters.  ``None`` disables a stage."""

    band: BandSpec | None = MAIN_BAND
    baseline: TimeWindow | None = BASELINE_WINDOW
    window: TimeWindow | None = MAIN_WINDOW
    zscore: bool = True
    ica: bool = False

    def to_dict(self) -> dict:
        return {
            "band": None if self.band is None else [self.band.low_hz, self.band.high_hz, self.band.order],
            "baseline": None if self.baseline is None else [self.baseline.start_ms, self.baseline.end_ms],
            "window": None if self.window is None else [self.window.start_ms, self.window.end_ms],
            "zscore": self.zscore, "ica": self.ica,
        }


def preprocess_array(x: np.ndarray, axis: EpochAxis, spec: PreprocessSpec) -> tuple[np.ndarray, EpochAxis]:
    """bandpass -> (ICA slot) -> baseline -> crop -> z-score on ``(N, C, T)``."""
    out = np.asarray(x, dtype=np.float64)
    if spec.band is not None:
        out = bandpass_array(out, spec.band, axis.sampling_rate_hz)
    if spec.ica:
        out = ica_passthrough(out)
    if spec.baseline is not None:
        out = baseline_array(out, spec.baseline, axis)
    if spec.window is not None:
        sl, axis = crop_axis(spec.window, axis)
        out = out[..., sl]
    if spec.zscore:
        out = zscore_array(out)
    return np.ascontiguousarray(out), axis


def preprocess(ds: Dataset, spec: PreprocessSpec = PreprocessSpec()) -> Dataset:
    data, axis = preprocess_array(ds.data, ds.axis, spec)
    return ds.replace(data=data, axis=axis)
