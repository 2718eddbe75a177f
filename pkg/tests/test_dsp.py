import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from letterdec.dataio import Dataset, Epoch, EpochAxis
from letterdec.dsp import (BASELINE_WINDOW, MAIN_BAND, MAIN_WINDOW, BandSpec, DegenerateEpochError, DspError,
                           PreprocessSpec, TimeWindow, bandpass_array, baseline_correct, crop_epoch, preprocess,
                           preprocess_array, zscore_array, zscore_normalize)

FS = 250.0


def tone_amp(x, f, fs=FS):
    # single-bin DFT amplitude of a tone at f
    n = x.shape[-1]
    t = np.arange(n) / fs
    return 2 * abs(np.sum(x * np.exp(-2j * np.pi * f * t))) / n


def test_band_validation():
    with pytest.raises(DspError):
        BandSpec(10, 5)
    with pytest.raises(DspError):
        BandSpec(1, 10, order=3)
    with pytest.raises(DspError, match="Nyquist"):
        bandpass_array(np.zeros(100), BandSpec(1, 125), FS)


def test_too_short_for_padding():
    with pytest.raises(DspError, match="too short"):
        bandpass_array(np.zeros(12), MAIN_BAND, FS)


def test_passband_tone():
    t = np.arange(2000) / FS
    x = np.sin(2 * np.pi * 10 * t)
    y = bandpass_array(x, MAIN_BAND, FS)
    assert abs(tone_amp(y[250:-250], 10) - 1) < 0.01


def test_no_phase_shift():
    t = np.arange(2000) / FS
    x = np.sin(2 * np.pi * 8 * t)
    y = bandpass_array(x, MAIN_BAND, FS)
    mid = slice(500, 1500)
    lag = np.argmax(np.correlate(y[mid], x[mid], "full")) - (1000 - 1)
    assert lag == 0


def test_linearity_and_batching(rng):
    x = rng.standard_normal((3, 4, 500))
    y = bandpass_array(x, MAIN_BAND, FS)
    np.testing.assert_allclose(y[1, 2], bandpass_array(x[1, 2], MAIN_BAND, FS), atol=1e-12)
    np.testing.assert_allclose(bandpass_array(2 * x[0] - x[1], MAIN_BAND, FS), 2 * y[0] - y[1], atol=1e-10)


def test_lowpass_only():
    t = np.arange(1000) / FS
    y = bandpass_array(np.sin(2 * np.pi * 60 * t) + 1.0, BandSpec(0, 20), FS)
    assert abs(y[200:-200].mean() - 1.0) < 1e-3
    assert tone_amp(y[200:-200], 60) < 0.01


def test_window_indices():
    ax = EpochAxis.raw()
    assert MAIN_WINDOW.indices(ax) == slice(50, 450)
    assert BASELINE_WINDOW.indices(ax) == slice(0, 50)
    with pytest.raises(DspError, match="not contained"):
        TimeWindow(-300, 0).indices(ax)
    with pytest.raises(DspError, match="empty"):
        TimeWindow(5, 5)
    with pytest.raises(DspError, match="empty"):
        TimeWindow(0, 1).indices(ax)


def test_baseline_zeroes_prestimulus_mean(rng):
    ax = EpochAxis.raw()
    e = Epoch(rng.standard_normal((3, 801)) + 5.0, 0)
    out = baseline_correct(e, BASELINE_WINDOW, ax)
    np.testing.assert_allclose(out.data[:, :50].mean(axis=1), 0, atol=1e-12)


def test_crop_shape_and_axis(rng):
    e = Epoch(rng.standard_normal((2, 801)), 3)
    out, ax = crop_epoch(e, MAIN_WINDOW, EpochAxis.raw())
    assert out.data.shape == (2, 400) and ax.start_ms == 0.0 and ax.n_samples == 400
    np.testing.assert_array_equal(out.data, e.data[:, 50:450])


def test_zscore_degenerate():
    with pytest.raises(DegenerateEpochError):
        zscore_normalize(Epoch(np.ones((2, 5)), 0))


def test_pipeline_shape_and_determinism(rng):
    x = rng.standard_normal((4, 3, 801)).astype(np.float32)
    ds = Dataset(x, [0, 1, 2, 3], axis=EpochAxis.raw())
    a = preprocess(ds)
    b = preprocess(ds)
    assert a.shape == (4, 3, 400) and a.axis.start_ms == 0
    assert a.data.tobytes() == b.data.tobytes()


def test_pipeline_order_matches_manual(rng):
    x = rng.standard_normal((2, 3, 801))
    ax = EpochAxis.raw()
    y, _ = preprocess_array(x, ax, PreprocessSpec())
    f = bandpass_array(x, MAIN_BAND, FS)
    f = f - f[..., :50].mean(axis=-1, keepdims=True)
    f = f[..., 50:450]
    f = (f - f.mean(axis=(1, 2), keepdims=True)) / f.std(axis=(1, 2), keepdims=True)
    np.testing.assert_allclose(y, f, atol=1e-12)


def test_ica_slot_passthrough(rng):
    x = rng.standard_normal((1, 2, 801))
    with pytest.warns(UserWarning, match="pass-through"):
        y, _ = preprocess_array(x, EpochAxis.raw(), PreprocessSpec(ica=True))
    np.testing.assert_array_equal(y, preprocess_array(x, EpochAxis.raw(), PreprocessSpec())[0])


@given(arrays(np.float64, (3, 17), elements=st.floats(-1e3, 1e3)))
def test_zscore_property(x):
    if x.std() < 1e-6:
        return
    z = zscore_array(x)
    assert abs(z.mean()) < 1e-9
    assert abs(z.std() - 1) < 1e-9


@given(st.floats(-100, 100), st.floats(0.5, 2.0))
def test_baseline_removes_offset(offset, scale):
    ax = EpochAxis.raw()
    base = np.sin(np.arange(801) / 9.0)[None]
    a = baseline_correct(Epoch(base, 0), axis=ax).data
    b = baseline_correct(Epoch(base + offset, 0), axis=ax).data
    np.testing.assert_allclose(a, b, atol=1e-9)
