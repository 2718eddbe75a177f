import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from letterdec.dataio import (CSV_PATTERN, HEADER, ChannelLayout, Dataset, DatasetError, Epoch, EpochAxis,
                              export_csv, import_csv, letter_index, letter_name, load_dataset, save_dataset,
                              validate_dataset)


def tiny(n=3, C=4, T=5, seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    return Dataset(rng.standard_normal((n, C, T)).astype(dtype), np.arange(n) % 26,
                   sessions=np.arange(n) % 2, trials=np.arange(n), axis=EpochAxis(250, 0, T), subject_id="s1")


def test_letter_map():
    assert letter_index("A") == 0 and letter_index("z") == 25
    assert letter_name(6) == "G"
    with pytest.raises(ValueError):
        letter_index("AB")


def test_axis_times_raw():
    ax = EpochAxis.raw()
    assert ax.n_samples == 801 and ax.start_ms == -200
    assert ax.time_of(50) == 0.0
    assert ax.end_ms == 3000.0
    np.testing.assert_allclose(ax.times()[:3], [-200, -196, -192])


def test_layout_unique_labels():
    with pytest.raises(DatasetError):
        ChannelLayout(("a", "a"))
    assert ChannelLayout.default(24).n_channels == 24
    assert ChannelLayout.default(3).labels == ("ch00", "ch01", "ch02")


def test_dataset_is_immutable():
    ds = tiny()
    with pytest.raises(ValueError):
        ds.data[0, 0, 0] = 1.0
    e = ds[1]
    assert isinstance(e, Epoch) and e.label == 1 and e.session_id == 1


def test_label_range_enforced():
    with pytest.raises(DatasetError, match="label 26"):
        Dataset(np.zeros((1, 2, 3)), [26])


def test_one_epoch_round_trip(tmp_path):
    ds = tiny(n=1)
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back.identical(ds)


def test_round_trip_preserves_order_and_bytes(tmp_path):
    ds = tiny(n=40, seed=2)
    save_dataset(ds, tmp_path / "a")
    back = load_dataset(tmp_path / "a")
    assert back.identical(ds)
    assert load_dataset(tmp_path / "a").identical(back)
    save_dataset(back, tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_manifest_counts(tmp_path):
    ds = tiny(n=52)
    save_dataset(ds, tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["counts"] == [2] * 26
    assert sum(b["n_epochs"] for b in man["blobs"]) == 52


def test_blob_header_layout(tmp_path):
    ds = tiny(n=3, C=4, T=5)
    save_dataset(ds, tmp_path)
    raw = (tmp_path / "session_000.bin").read_bytes()
    magic, n, C, T = HEADER.unpack_from(raw)
    assert (magic, C, T) == (b"EEGD", 4, 5)
    assert len(raw) == 16 + 4 * n * C * T
    np.testing.assert_array_equal(np.frombuffer(raw[16:], "<f4").reshape(n, C, T), ds.data[ds.sessions == 0])


def test_float64_saved_as_float32(tmp_path):
    ds = tiny(dtype=np.float64)
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.data.dtype == np.float32
    np.testing.assert_array_equal(back.data, ds.data.astype(np.float32))


def test_empty_directory(tmp_path):
    with pytest.raises(DatasetError, match="manifest not found"):
        load_dataset(tmp_path)


def test_truncated_blob_names_file(tmp_path):
    save_dataset(tiny(), tmp_path)
    blob = tmp_path / "session_001.bin"
    blob.write_bytes(blob.read_bytes()[:-1])
    with pytest.raises(DatasetError, match="session_001.bin.*checksum"):
        load_dataset(tmp_path)


def test_corrupt_manifest(tmp_path):
    save_dataset(tiny(), tmp_path)
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(DatasetError, match="corrupt manifest"):
        load_dataset(tmp_path)


def test_manifest_missing_field(tmp_path):
    save_dataset(tiny(), tmp_path)
    d = json.loads((tmp_path / "manifest.json").read_text())
    del d["epochs"]
    (tmp_path / "manifest.json").write_text(json.dumps(d))
    with pytest.raises(DatasetError, match="epochs"):
        load_dataset(tmp_path)


def test_shape_mismatch_reported(tmp_path):
    save_dataset(tiny(), tmp_path)
    d = json.loads((tmp_path / "manifest.json").read_text())
    d["axis"]["n_samples"] = 6
    (tmp_path / "manifest.json").write_text(json.dumps(d))
    with pytest.raises(DatasetError, match="T=5.*T=6"):
        load_dataset(tmp_path)


def test_counts_mismatch_reported(tmp_path):
    save_dataset(tiny(), tmp_path)
    d = json.loads((tmp_path / "manifest.json").read_text())
    d["counts"][0] += 1
    (tmp_path / "manifest.json").write_text(json.dumps(d))
    with pytest.raises(DatasetError, match="field counts"):
        load_dataset(tmp_path)


def test_save_refuses_nan(tmp_path):
    x = np.zeros((2, 3, 4), np.float32)
    x[1, 2, 3] = np.nan
    with pytest.raises(DatasetError, match="invalid"):
        save_dataset(Dataset(x, [0, 1], axis=EpochAxis(250, 0, 4)), tmp_path)
    assert not (tmp_path / "manifest.json").exists()


def test_save_unwritable(tmp_path):
    f = tmp_path / "file"
    f.write_text("x")
    with pytest.raises(DatasetError, match="cannot"):
        save_dataset(tiny(), f / "sub")


def test_validate_balanced():
    ds = Dataset(np.ones((52, 2, 3)), np.arange(52) % 26, axis=EpochAxis(250, 0, 3))
    rep = validate_dataset(ds)
    assert rep.passed and rep.warnings == [] and rep.counts == [2] * 26


def test_validate_missing_class():
    labels = np.arange(50) % 25
    rep = validate_dataset(Dataset(np.ones((50, 2, 3)), labels, axis=EpochAxis(250, 0, 3)))
    assert rep.passed
    assert "class 25 count 0" in rep.warnings


def test_validate_inf_fails_with_index():
    x = np.ones((4, 2, 3))
    x[2, 0, 1] = np.inf
    rep = validate_dataset(Dataset(x, [0, 1, 2, 3], axis=EpochAxis(250, 0, 3)))
    assert not rep.passed
    assert rep.nonfinite_epochs == [2] and rep.nonfinite_count == 1
    assert any("epoch 2" in e for e in rep.errors)
    assert json.loads(rep.to_json())["passed"] is False


def test_validate_shape_vs_layout():
    ds = Dataset(np.ones((1, 3, 4)), [0], layout=ChannelLayout.default(2), axis=EpochAxis(250, 0, 4))
    assert not validate_dataset(ds).passed


def _write_csv(path, arr):
    path.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in arr) + "\n")


def test_import_csv_known_epoch(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((24, 801)) * 37.1
    _write_csv(tmp_path / "A_s01_t001.csv", arr)
    ds = import_csv(tmp_path, ChannelLayout.default(24), EpochAxis.raw())
    assert ds.shape == (1, 24, 801)
    assert ds[0].label == 0 and ds[0].session_id == 1 and ds[0].trial_id == 1
    assert ds.data.dtype == np.float64
    assert ds.data[0].tobytes() == arr.tobytes()


def test_import_csv_exponent_notation(tmp_path):
    (tmp_path / "B_s2_t3.csv").write_text("1e3,2\n-0.5,1E-2\n")
    ds = import_csv(tmp_path, ChannelLayout(("x", "y")), EpochAxis(250, 0, 2))
    assert ds.data[0, 0, 0] == 1000.0
    assert ds.labels[0] == 1


def test_import_csv_row_mismatch(tmp_path):
    _write_csv(tmp_path / "C_s01_t001.csv", np.zeros((23, 801)))
    with pytest.raises(DatasetError, match="C_s01_t001.csv.*23 rows"):
        import_csv(tmp_path, ChannelLayout.default(24), EpochAxis.raw())


def test_import_csv_bad_cell(tmp_path):
    (tmp_path / "A_s1_t1.csv").write_text("1,2\n3,abc\n")
    with pytest.raises(DatasetError, match="row 2, column 2"):
        import_csv(tmp_path, ChannelLayout(("x", "y")), EpochAxis(250, 0, 2))


def test_import_csv_bad_name(tmp_path):
    (tmp_path / "foo.csv").write_text("1\n")
    with pytest.raises(DatasetError, match="filename"):
        import_csv(tmp_path, ChannelLayout(("x",)), EpochAxis(250, 0, 1))


def test_csv_export_import_round_trip(tmp_path):
    ds = tiny(n=6, dtype=np.float64)
    export_csv(ds, tmp_path)
    back = import_csv(tmp_path, ds.layout, ds.axis, "s1")
    order = np.lexsort((back.labels, back.trials, back.sessions))
    ref = np.lexsort((ds.labels, ds.trials, ds.sessions))
    assert back.data[order].tobytes() == ds.data[ref].tobytes()


def test_csv_pattern():
    assert CSV_PATTERN.match("Z_s10_t300.csv")
    assert not CSV_PATTERN.match("a_s1_t1.csv")


@given(st.integers(1, 6), st.integers(1, 5), st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_round_trip_property(n, C, T, seed):
    import tempfile
    rng = np.random.default_rng(seed)
    data = (rng.standard_normal((n, C, T)) * 10.0 ** rng.integers(-3, 4)).astype(np.float32)
    ds = Dataset(data, rng.integers(0, 26, n), rng.integers(-1, 3, n), rng.integers(0, 1000, n),
                 axis=EpochAxis(float(rng.uniform(100, 1000)), float(rng.uniform(-500, 0)), T), subject_id="p")
    with tempfile.TemporaryDirectory() as d:
        save_dataset(ds, d)
        assert load_dataset(d).identical(ds)
