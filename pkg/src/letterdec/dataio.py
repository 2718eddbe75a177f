"""Dataset model and the canonical on-disk format.

A dataset directory holds ``manifest.json`` plus one binary blob per
recording session.  Each blob is::

    offset  size  field
    0       4     magic b"EEGD"
    4       4     u32 n_epochs
    8       4     u32 n_channels (C)
    12      4     u32 n_samples (T)
    16      ...   n_epochs * C * T little-endian float32, C-order

The manifest lists epochs in dataset order; each entry points at a
``(blob, row)`` pair and carries label, session and trial ids.  Every blob's
CRC-32 (over header and payload) is stored in the manifest.
"""

from __future__ import annotations

import csv
import json
import math
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT_VERSION = 1
MAGIC = b"EEGD"
HEADER = struct.Struct("<4sIII")
N_CLASSES = 26
LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"

# placeholder 10-20 names for a 24-electrode cap; the montage is not published
DEFAULT_CHANNELS = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC1", "FC2", "T7", "C3", "Cz",
    "C4", "T8", "CP1", "CP2", "P7", "P3", "Pz", "P4", "P8", "O1", "Oz", "O2",
)

CSV_PATTERN = re.compile(r"^([A-Z])_s(\d+)_t(\d+)\.csv$")


class DatasetError(ValueError):
    """Bad dataset content or on-disk format.  The message names the file/field."""


def letter_index(letter: str) -> int:
    if len(letter) != 1 or letter.upper() not in LETTERS:
        raise ValueError(f"not a letter: {letter!r}")
    return LETTERS.index(letter.upper())


def letter_name(index: int) -> str:
    return LETTERS[index]


@dataclass(frozen=True)
class ChannelLayout:
    labels: tuple
    positions: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise DatasetError("channel labels must be unique")
        if self.positions is not None:
            pos = tuple((float(x), float(y)) for x, y in self.positions)
            if len(pos) != len(self.labels):
                raise DatasetError(f"{len(pos)} positions for {len(self.labels)} channels")
            object.__setattr__(self, "positions", pos)

    @classmethod
    def default(cls, n_channels: int = 24) -> "ChannelLayout":
        if n_channels == len(DEFAULT_CHANNELS):
            return cls(DEFAULT_CHANNELS)
        return cls(tuple(f"ch{i:02d}" for i in range(n_channels)))

    @property
    def n_channels(self) -> int:
        return len(self.labels)

    def to_dict(self) -> dict:
        return {"labels": list(self.labels),
                "positions": None if self.positions is None else [list(p) for p in self.positions]}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelLayout":
        return cls(tuple(d["labels"]), None if d.get("positions") is None else tuple(map(tuple, d["positions"])))


@dataclass(frozen=True)
class EpochAxis:
    """Sample times: ``t_i = start_ms + 1000 * i / sampling_rate_hz``."""

    sampling_rate_hz: float
    start_ms: float
    n_samples: int

    def __post_init__(self):
        if not (self.sampling_rate_hz > 0 and math.isfinite(self.sampling_rate_hz)):
            raise DatasetError(f"sampling rate must be positive, got {self.sampling_rate_hz}")
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise DatasetError(f"n_samples must be a positive integer, got {self.n_samples}")
        object.__setattr__(self, "sampling_rate_hz", float(self.sampling_rate_hz))
        object.__setattr__(self, "start_ms", float(self.start_ms))
        object.__setattr__(self, "n_samples", int(self.n_samples))

    @classmethod
    def raw(cls) -> "EpochAxis":
        # -200 ms .. 3000 ms at 250 Hz
        return cls(250.0, -200.0, 801)

    @property
    def dt_ms(self) -> float:
        return 1000.0 / self.sampling_rate_hz

    @property
    def end_ms(self) -> float:
        """Time of the last sample."""
        return self.time_of(self.n_samples - 1)

    def time_of(self, i) -> float:
        return self.start_ms + 1000.0 * i / self.sampling_rate_hz

    def times(self) -> np.ndarray:
        return self.start_ms + 1000.0 * np.arange(self.n_samples) / self.sampling_rate_hz

    def position(self, t_ms: float) -> float:
        """Fractional sample index of time ``t_ms``."""
        return (t_ms - self.start_ms) * self.sampling_rate_hz / 1000.0

    def to_dict(self) -> dict:
        return {"sampling_rate_hz": self.sampling_rate_hz, "start_ms": self.start_ms,
                "n_samples": self.n_samples}

    @classmethod
    def from_dict(cls, d: dict) -> "EpochAxis":
        return cls(d["sampling_rate_hz"], d["start_ms"], d["n_samples"])


@dataclass(frozen=True)
class Epoch:
    data: np.ndarray
    label: int
    session_id: int = 0
    trial_id: int = 0

    @property
    def letter(self) -> str:
        return letter_name(self.label)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


class Dataset:
    """Immutable epoch collection stored as one ``(N, C, T)`` array.

    ``epochs`` / indexing give per-trial :class:`Epoch` views.  Data may be
    float32 or float64; saving always writes float32.
    """

    def __init__(self, data, labels, sessions=None, trials=None, layout: ChannelLayout | None = None,
                 axis: EpochAxis | None = None, subject_id: str = "subject"):
        data = np.asarray(data)
        if data.ndim != 3:
            raise DatasetError(f"dataset array must be (N, C, T), got shape {data.shape}")
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        n = data.shape[0]
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        sessions = np.zeros(n, np.int64) if sessions is None else np.asarray(sessions, dtype=np.int64).reshape(-1)
        trials = np.arange(n, dtype=np.int64) if trials is None else np.asarray(trials, dtype=np.int64).reshape(-1)
        for name, arr in (("labels", labels), ("sessions", sessions), ("trials", trials)):
            if arr.shape[0] != n:
                raise DatasetError(f"{name} has length {arr.shape[0]}, expected {n}")
        if n and (labels.min() < 0 or labels.max() >= N_CLASSES):
            bad = int(np.flatnonzero((labels < 0) | (labels >= N_CLASSES))[0])
            raise DatasetError(f"epoch {bad}: label {labels[bad]} outside 0..{N_CLASSES - 1}")
        self.data = _frozen(data)
        self.labels = _frozen(labels)
        self.sessions = _frozen(sessions)
        self.trials = _frozen(trials)
        self.layout = layout if layout is not None else ChannelLayout.default(data.shape[1])
        self.axis = axis if axis is not None else EpochAxis(250.0, 0.0, data.shape[2])
        self.subject_id = str(subject_id)

    @classmethod
    def from_epochs(cls, epochs: Sequence[Epoch], layout=None, axis=None, subject_id="subject") -> "Dataset":
        if not epochs:
            raise DatasetError("no epochs")
        shapes = {np.shape(e.data) for e in epochs}
        if len(shapes) != 1:
            raise DatasetError(f"epochs have inconsistent shapes {sorted(shapes)}")
        data = np.stack([np.asarray(e.data) for e in epochs])
        return cls(data, [e.label for e in epochs], [e.session_id for e in epochs],
                   [e.trial_id for e in epochs], layout, axis, subject_id)

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, i) -> Epoch:
        return Epoch(self.data[i], int(self.labels[i]), int(self.sessions[i]), int(self.trials[i]))

    @property
    def epochs(self) -> list:
        return [self[i] for i in range(len(self))]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)

    def indices_of(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def replace(self, data=None, axis=None, **kw) -> "Dataset":
        """Copy with new data (and axis), keeping metadata."""
        return Dataset(self.data if data is None else data, self.labels, self.sessions, self.trials,
                       kw.get("layout", self.layout), self.axis if axis is None else axis,
                       kw.get("subject_id", self.subject_id))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.data[idx], self.labels[idx], self.sessions[idx], self.trials[idx],
                       self.layout, self.axis, self.subject_id)

    def identical(self, other: "Dataset") -> bool:
        """Bit-level equality of arrays and metadata."""
        return (self.data.dtype == other.data.dtype and self.data.shape == other.data.shape
                and self.data.tobytes() == other.data.tobytes()
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.sessions, other.sessions)
                and np.array_equal(self.trials, other.trials)
                and self.layout == other.layout and self.axis == other.axis
                and self.subject_id == other.subject_id)

    def __repr__(self):
        return f"Dataset(subject={self.subject_id!r}, shape={self.data.shape}, dtype={self.data.dtype})"


@dataclass
class Manifest:
    format_version: int
    subject_id: str
    counts: list
    blobs: list            # [{"file", "session", "n_epochs", "crc32"}]
    epochs: list           # [{"label", "session", "trial", "blob", "row"}]
    layout: dict
    axis: dict
    dtype: str = "float32"

    def to_json(self) -> str:
        d = {"format_version": self.format_version, "subject_id": self.subject_id,
             "dtype": self.dtype, "counts": self.counts, "layout": self.layout,
             "axis": self.axis, "blobs": self.blobs, "epochs": self.epochs}
        return json.dumps(d, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, where: str = "manifest.json") -> "Manifest":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise DatasetError(f"{where}: corrupt manifest ({e})") from None
        if not isinstance(d, dict):
            raise DatasetError(f"{where}: corrupt manifest (top level is not an object)")
        missing = [k for k in ("format_version", "subject_id", "counts", "blobs", "epochs", "layout", "axis")
                   if k not in d]
        if missing:
            raise DatasetError(f"{where}: corrupt manifest, missing field(s) {missing}")
        if d["format_version"] != FORMAT_VERSION:
            raise DatasetError(f"{where}: field format_version: unsupported version {d['format_version']!r}")
        if d.get("dtype", "float32") != "float32":
            raise DatasetError(f"{where}: field dtype: unsupported {d['dtype']!r}")
        return cls(d["format_version"], d["subject_id"], d["counts"], d["blobs"], d["epochs"],
                   d["layout"], d["axis"])


@dataclass
class ValidationReport:
    n_epochs: int
    shape: tuple
    counts: list
    min_amplitude: float
    max_amplitude: float
    nonfinite_count: int
    nonfinite_epochs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {"passed": self.passed, "n_epochs": self.n_epochs, "shape": list(self.shape),
                "counts": list(self.counts), "min_amplitude": self.min_amplitude,
                "max_amplitude": self.max_amplitude, "nonfinite_count": self.nonfinite_count,
                "nonfinite_epochs": list(self.nonfinite_epochs), "warnings": list(self.warnings),
                "errors": list(self.errors)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def validate_dataset(ds: Dataset) -> ValidationReport:
    """Report class balance, amplitude range and finiteness; never raises.

    Fails on non-finite values or a shape that disagrees with the layout or
    axis.  Class imbalance only produces warnings.
    """
    n, C, T = ds.data.shape
    errors, warnings = [], []
    if C != ds.layout.n_channels:
        errors.append(f"channel count {C} does not match layout ({ds.layout.n_channels} labels)")
    if T != ds.axis.n_samples:
        errors.append(f"sample count {T} does not match axis n_samples {ds.axis.n_samples}")
    finite = np.isfinite(ds.data)
    bad_per_epoch = (~finite).reshape(n, -1).sum(axis=1)
    bad = np.flatnonzero(bad_per_epoch)
    for i in bad[:20]:
        errors.append(f"epoch {int(i)}: {int(bad_per_epoch[i])} non-finite value(s)")
    if len(bad) > 20:
        errors.append(f"... {len(bad) - 20} more epochs with non-finite values")
    counts = ds.class_counts()
    if n:
        target = int(counts.max())
        for c in range(N_CLASSES):
            if counts[c] != target:
                warnings.append(f"class {c} count {int(counts[c])}")
    else:
        warnings.append("dataset is empty")
    vals = ds.data[finite] if n else np.zeros(0)
    lo = float(vals.min()) if vals.size else float("nan")
    hi = float(vals.max()) if vals.size else float("nan")
    return ValidationReport(n, (n, C, T), [int(c) for c in counts], lo, hi,
                            int((~finite).sum()), [int(i) for i in bad], warnings, errors)


def _blob_name(session: int) -> str:
    return f"session_{session:03d}.bin" if session >= 0 else f"session_m{-session:03d}.bin"


def save_dataset(ds: Dataset, path) -> None:
    """Write ``ds`` in the canonical format, refusing invalid datasets.

    Sessions become blobs in order of first appearance; rows keep dataset
    order within each session.
    """
    rep = validate_dataset(ds)
    if not rep.passed:
        raise DatasetError("refusing to save invalid dataset: " + "; ".join(rep.errors[:3]))
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetError(f"{path}: cannot create directory ({e})") from None
    n, C, T = ds.data.shape
    sessions = list(dict.fromkeys(int(s) for s in ds.sessions))
    blob_of = {s: i for i, s in enumerate(sessions)}
    rows = np.zeros(n, np.int64)
    blobs = []
    data32 = ds.data.astype("<f4", copy=False)
    for s in sessions:
        idx = np.flatnonzero(ds.sessions == s)
        rows[idx] = np.arange(len(idx))
        payload = HEADER.pack(MAGIC, len(idx), C, T) + np.ascontiguousarray(data32[idx]).tobytes()
        name = _blob_name(s)
        try:
            (path / name).write_bytes(payload)
        except OSError as e:
            raise DatasetError(f"{path / name}: cannot write ({e})") from None
        blobs.append({"file": name, "session": s, "n_epochs": int(len(idx)), "crc32": zlib.crc32(payload)})
    epochs = [{"label": int(ds.labels[i]), "session": int(ds.sessions[i]), "trial": int(ds.trials[i]),
               "blob": blob_of[int(ds.sessions[i])], "row": int(rows[i])} for i in range(n)]
    man = Manifest(FORMAT_VERSION, ds.subject_id, [int(c) for c in ds.class_counts()], blobs, epochs,
                   ds.layout.to_dict(), ds.axis.to_dict())
    try:
        (path / "manifest.json").write_text(man.to_json(), encoding="utf-8")
    except OSError as e:
        raise DatasetError(f"{path / 'manifest.json'}: cannot write ({e})") from None


def _read_blob(path: Path, entry: dict, C: int, T: int) -> np.ndarray:
    f = path / entry["file"]
    try:
        raw = f.read_bytes()
    except OSError:
        raise DatasetError(f"{f}: blob file missing") from None
    if zlib.crc32(raw) != entry["crc32"]:
        raise DatasetError(f"{f}: checksum mismatch (manifest crc32 {entry['crc32']}, file {zlib.crc32(raw)})")
    if len(raw) < HEADER.size:
        raise DatasetError(f"{f}: truncated header")
    magic, n, c, t = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetError(f"{f}: bad magic {magic!r}")
    if (c, t) != (C, T):
        raise DatasetError(f"{f}: header shape C={c}, T={t} disagrees with manifest C={C}, T={T}")
    if n != entry["n_epochs"]:
        raise DatasetError(f"{f}: header n_epochs {n} disagrees with manifest n_epochs {entry['n_epochs']}")
    expected = HEADER.size + 4 * n * c * t
    if len(raw) != expected:
        raise DatasetError(f"{f}: payload is {len(raw) - HEADER.size} bytes, expected {expected - HEADER.size}")
    return np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(n, c, t)


def load_dataset(path) -> Dataset:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.is_file():
        raise DatasetError(f"{path}: manifest not found")
    try:
        text = mpath.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetError(f"{mpath}: corrupt manifest ({e})") from None
    man = Manifest.from_json(text, str(mpath))
    try:
        layout = ChannelLayout.from_dict(man.layout)
        axis = EpochAxis.from_dict(man.axis)
    except (KeyError, TypeError) as e:
        raise DatasetError(f"{mpath}: field layout/axis malformed ({e})") from None
    C, T = layout.n_channels, axis.n_samples
    blobs = [_read_blob(path, b, C, T) for b in man.blobs]
    n = len(man.epochs)
    data = np.empty((n, C, T), dtype=np.float32)
    labels = np.empty(n, np.int64)
    sessions = np.empty(n, np.int64)
    trials = np.empty(n, np.int64)
    for i, e in enumerate(man.epochs):
        try:
            b, r = e["blob"], e["row"]
            data[i] = blobs[b][r]
            labels[i], sessions[i], trials[i] = e["label"], e["session"], e["trial"]
        except (KeyError, IndexError, TypeError) as err:
            raise DatasetError(f"{mpath}: field epochs[{i}] invalid ({err!r})") from None
    counts = np.bincount(labels, minlength=N_CLASSES)[:N_CLASSES] if n else np.zeros(N_CLASSES, int)
    if list(map(int, counts)) != list(man.counts):
        raise DatasetError(f"{mpath}: field counts {man.counts} disagrees with epoch labels {counts.tolist()}")
    return Dataset(data, labels, sessions, trials, layout, axis, man.subject_id)


def _parse_csv(f: Path, C: int, T: int) -> np.ndarray:
    out = np.empty((C, T), dtype=np.float64)
    with open(f, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) != C:
        raise DatasetError(f"{f}: {len(rows)} rows, layout expects {C} channels")
    for i, row in enumerate(rows):
        if len(row) != T:
            raise DatasetError(f"{f}: row {i + 1} has {len(row)} columns, axis expects {T} samples")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise DatasetError(f"{f}: row {i + 1}, column {j + 1}: cannot parse {cell!r}") from None
    return out


def import_csv(directory, layout: ChannelLayout, axis: EpochAxis, subject_id: str | None = None) -> Dataset:
    """Import one-CSV-per-epoch exports named ``<LETTER>_s<session>_t<trial>.csv``.

    Rows are channels, columns are samples.  Epochs are ordered by
    (session, trial, letter).  Values keep full float64 precision.
    """
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".csv") if directory.is_dir() else []
    if not files:
        raise DatasetError(f"{directory}: no CSV files found")
    keyed = []
    for f in files:
        m = CSV_PATTERN.match(f.name)
        if not m:
            raise DatasetError(f"{f}: filename does not match <LETTER>_s<session>_t<trial>.csv")
        keyed.append(((int(m[2]), int(m[3]), letter_index(m[1])), f))
    keyed.sort()
    data = np.stack([_parse_csv(f, layout.n_channels, axis.n_samples) for _, f in keyed])
    sessions, trials, labels = (np.array(v) for v in zip(*(k for k, _ in keyed)))
    return Dataset(data, labels, sessions, trials, layout, axis,
                   subject_id if subject_id is not None else directory.name)


def export_csv(ds: Dataset, directory) -> list:
    """Inverse of :func:`import_csv`; values written with ``repr`` precision."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for i in range(len(ds)):
        f = directory / f"{letter_name(int(ds.labels[i]))}_s{int(ds.sessions[i]):02d}_t{int(ds.trials[i]):03d}.csv"
        with open(f, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            for row in np.asarray(ds.data[i], dtype=np.float64):
                w.writerow([repr(float(v)) for v in row])
        out.append(f)
    return out
