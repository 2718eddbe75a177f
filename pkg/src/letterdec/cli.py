"""``letterdec`` command line.

    letterdec {validate|import|preprocess|similarity|pca|snapshot|synth|train|report}
              --config FILE [--jobs N] [--seed S] [--out DIR]

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
failure.  Progress goes to stdout, diagnostics to stderr.  Every command
that writes data also writes ``<command>_provenance.json`` into the output
directory; passing that file back as ``--config`` replays the command.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import warnings
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (AnalysisError, SimilarityMatrix, diagonal_contrast, scalp_snapshot, similarity_matrix,
                       split_half_average, temporal_pca, write_pca_csv)
from .config import ConfigError, RunConfig, load_config
from .dataio import (ChannelLayout, Dataset, DatasetError, EpochAxis, import_csv, letter_index, load_dataset,
                     save_dataset, validate_dataset)
from .dsp import BandSpec, DspError, PreprocessSpec, TimeWindow, preprocess
from .harness import HarnessError, RunReport, make_folds, run_models, summarize_run, write_table1
from .models import ModelBuildError, build_model
from .nn import DivergenceError
from .stats import StatsError
from .synth import SynthSpec, make_templates, synthesize_dataset

COMMANDS = ("validate", "import", "preprocess", "similarity", "pca", "snapshot", "synth", "train", "report")
EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class NumericFailure(RuntimeError):
    pass


def render_heatmap(matrix, path, vmin: float = 0.0, vmax: float = 1.0, scale: int = 16) -> None:
    """Binary 8-bit PGM, each cell a ``scale x scale`` block.

    Pixel value is ``floor((v - vmin) / (vmax - vmin) * 255 + 0.5)`` clamped
    to 0..255, so 0.5 on [0, 1] maps to 128.
    """
    M = np.asarray(matrix.values if isinstance(matrix, SimilarityMatrix) else matrix, dtype=np.float64)
    if M.ndim != 2 or not np.isfinite(M).all():
        raise ValueError("heatmap needs a finite 2-D matrix")
    if not vmax > vmin:
        raise ValueError(f"empty heatmap range [{vmin}, {vmax}]")
    px = np.floor((M - vmin) / (vmax - vmin) * 255.0 + 0.5)
    px = np.clip(px, 0, 255).astype(np.uint8)
    px = np.repeat(np.repeat(px, scale, axis=0), scale, axis=1)
    h, w = px.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


# -- helpers -------------------------------------------------------------------

def _say(msg: str) -> None:
    print(msg, flush=True)


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.output)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_input(cfg: RunConfig) -> Dataset:
    if cfg.dataset is None:
        raise ConfigError("config key 'dataset' (input dataset path) is not set")
    if not Path(cfg.dataset).exists():
        raise ConfigError(f"dataset path {cfg.dataset} does not exist")
    return load_dataset(cfg.dataset)


def _analysis_dataset(cfg: RunConfig, ds: Dataset) -> Dataset:
    return ds if cfg.preprocessed else preprocess(ds, cfg.preprocessing.spec())


def _crc(path: Path) -> int:
    return zlib.crc32(path.read_bytes())


def _write_provenance(cfg: RunConfig, command: str, outputs: list, inputs: dict | None = None) -> Path:
    out = _out(cfg)
    d = cfg.to_json_dict()
    files = []
    for p in outputs:
        p = Path(p)
        for f in sorted(p.rglob("*")) if p.is_dir() else [p]:
            if f.is_file():
                files.append({"file": str(f.relative_to(out)) if f.is_relative_to(out) else str(f),
                              "crc32": _crc(f)})
    d["provenance"] = {"command": command, "version": __version__, "inputs": inputs or {}, "outputs": files}
    path = out / f"{command}_provenance.json"
    path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    return path


def _dataset_inputs(cfg: RunConfig) -> dict:
    if cfg.dataset is None:
        return {}
    m = Path(cfg.dataset) / "manifest.json"
    return {"dataset": cfg.dataset, "manifest_crc32": _crc(m)} if m.is_file() else {"dataset": cfg.dataset}


# -- commands ------------------------------------------------------------------

def cmd_validate(cfg: RunConfig, jobs: int = 1) -> int:
    ds = _load_input(cfg)
    rep = validate_dataset(ds)
    path = _out(cfg) / "validation.json"
    path.write_text(rep.to_json())
    _say(f"validate: {rep.n_epochs} epochs, shape {rep.shape[1:]}, {'pass' if rep.passed else 'FAIL'}, "
         f"{len(rep.warnings)} warning(s) -> {path}")
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for e in rep.errors:
        print(f"error: {e}", file=sys.stderr)
    return 0 if rep.passed else EXIT_DATA


def cmd_import(cfg: RunConfig, jobs: int = 1) -> int:
    imp = cfg.import_
    if imp.csv_dir is None:
        raise ConfigError("config key 'import.csv_dir' is not set")
    layout = ChannelLayout(tuple(imp.channels)) if imp.channels else ChannelLayout.default(24)
    axis = EpochAxis(imp.sampling_rate_hz, imp.start_ms, imp.n_samples)
    ds = import_csv(imp.csv_dir, layout, axis, cfg.subject_id)
    dest = _out(cfg) / "dataset"
    save_dataset(ds, dest)
    _write_provenance(cfg, "import", [dest], {"csv_dir": imp.csv_dir})
    _say(f"import: {len(ds)} epochs -> {dest}")
    return 0


def cmd_preprocess(cfg: RunConfig, jobs: int = 1) -> int:
    ds = _load_input(cfg)
    if cfg.preprocessed:
        warnings.warn("dataset is flagged as preprocessed; running the pipeline again")
    out = preprocess(ds, cfg.preprocessing.spec())
    dest = _out(cfg) / "preprocessed"
    save_dataset(out, dest)
    _write_provenance(cfg, "preprocess", [dest], _dataset_inputs(cfg))
    _say(f"preprocess: {ds.shape[1:]} -> {out.shape[1:]} for {len(out)} epochs -> {dest}")
    return 0


def cmd_synth(cfg: RunConfig, jobs: int = 1) -> int:
    s = cfg.synth
    ts = make_templates(s.n_channels, s.n_samples, smoothness=s.smoothness, seed=s.template_seed,
                        rank=s.rank, sampling_rate_hz=s.sampling_rate_hz)
    spec = SynthSpec(snr=s.snr, n_per_class=s.n_per_class, trial_jitter_ms=s.trial_jitter_ms,
                     session_drift=s.session_drift, n_sessions=s.n_sessions, noise_scale=s.noise_scale,
                     gain=s.gain, seed=cfg.seed, subject_id=s.subject_id)
    ds = synthesize_dataset(ts, spec)
    dest = _out(cfg) / "synth"
    save_dataset(ds, dest)
    _write_provenance(cfg, "synth", [dest])
    _say(f"synth: {len(ds)} epochs of {ds.shape[1:]} at snr {s.snr} -> {dest}")
    return 0


def _sweep(cfg: RunConfig) -> list:
    sim = cfg.similarity
    cases = [("main", BandSpec(*sim.main_band, cfg.preprocessing.filter_order), TimeWindow(*sim.main_window))]
    for w in sim.sweep_windows:
        for b in sim.sweep_bands:
            band, win = BandSpec(*b, cfg.preprocessing.filter_order), TimeWindow(*w)
            cases.append((f"{win.label()}_{band.label()}", band, win))
    return cases


def cmd_similarity(cfg: RunConfig, jobs: int = 1) -> int:
    """Main matrix plus the window x band sweep, each with CSV, PGM and contrast."""
    ds = _load_input(cfg)
    sim = cfg.similarity
    pp = cfg.preprocessing
    dest = _out(cfg) / "similarity"
    dest.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, band, win in _sweep(cfg):
        if cfg.preprocessed:
            # bands and windows re-applied to already filtered, cropped data; no baseline
            m = similarity_matrix(ds, band, win, cfg.seed, baseline=None, zscore=pp.zscore, full=sim.full,
                                  preprocessed=(name == "main"))
        else:
            base = None if pp.baseline is None else TimeWindow(*pp.baseline)
            m = similarity_matrix(ds, band, win, cfg.seed, baseline=base, zscore=pp.zscore, full=sim.full)
        contrast, p = diagonal_contrast(m, sim.n_permutations, cfg.seed)
        m.to_csv(dest / f"{name}.csv")
        render_heatmap(m, dest / f"{name}.pgm", *sim.heatmap_range, scale=sim.heatmap_scale)
        rows.append([name, win.start_ms, win.end_ms, band.low_hz, band.high_hz, repr(contrast), repr(p)])
        _say(f"similarity {name}: contrast {contrast:.4f}, p {p:.3g}")
    with open(dest / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "window_start_ms", "window_end_ms", "band_low_hz", "band_high_hz",
                    "diagonal_contrast", "p_value"])
        w.writerows(rows)
    _write_provenance(cfg, "similarity", [dest], _dataset_inputs(cfg))
    return 0


def _patterns(cfg: RunConfig):
    ds = _analysis_dataset(cfg, _load_input(cfg))
    for letter in cfg.pca.letters:
        li = letter_index(letter)
        for pat in split_half_average(ds, li, cfg.seed):
            yield ds, pat


def cmd_pca(cfg: RunConfig, jobs: int = 1) -> int:
    results, comps = [], []
    layout = None
    for ds, pat in _patterns(cfg):
        layout = ds.layout
        res = temporal_pca(pat, cfg.pca.n_components)
        results.append((pat.letter, pat.half, res))
    dest = _out(cfg) / "pca"
    dest.mkdir(parents=True, exist_ok=True)
    write_pca_csv(dest / "scores.csv", results)
    with open(dest / "components.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["letter", "half", "pc", "explained_variance", "explained_ratio"] + list(layout.labels))
        for letter, half, res in results:
            for i, comp in enumerate(res.components):
                w.writerow([chr(65 + letter), half, i + 1, repr(float(res.explained_variance[i])),
                            repr(float(res.explained_ratio[i]))] + [repr(float(v)) for v in comp])
    _write_provenance(cfg, "pca", [dest], _dataset_inputs(cfg))
    _say(f"pca: {len(results)} patterns x {cfg.pca.n_components} PCs -> {dest}")
    return 0


def cmd_snapshot(cfg: RunConfig, jobs: int = 1) -> int:
    dest = _out(cfg) / "snapshot"
    dest.mkdir(parents=True, exist_ok=True)
    path = dest / "snapshots.csv"
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = False
        for ds, pat in _patterns(cfg):
            snap = scalp_snapshot(pat, cfg.pca.snapshot_times_ms, ds.axis, ds.layout)
            if not header:
                w.writerow(["letter", "half", "time_ms", "sample"] + list(snap.labels))
                header = True
            for t, i, row in zip(snap.times_ms, snap.indices, snap.values):
                w.writerow([chr(65 + pat.letter), pat.half, repr(t), i] + [repr(float(v)) for v in row])
            n += 1
    _write_provenance(cfg, "snapshot", [dest], _dataset_inputs(cfg))
    _say(f"snapshot: {n} patterns x {len(cfg.pca.snapshot_times_ms)} times -> {path}")
    return 0


def cmd_train(cfg: RunConfig, jobs: int = 1) -> int:
    ds = _analysis_dataset(cfg, _load_input(cfg))
    C, T = ds.shape[1:]
    cfgs = {}
    for name, mc in cfg.model_configs().items():
        over = cfg.models[name]
        # input shape follows the data unless the config pins it
        repl = {k: v for k, v in (("n_channels", C), ("n_timepoints", T)) if k not in over}
        try:
            cfgs[name] = dataclasses.replace(mc, **repl)
        except ValueError as exc:
            raise ConfigError(f"model {name!r}: {exc}") from None
    tr = cfg.training
    plan = make_folds(ds, tr.k, cfg.seed)
    out = _out(cfg)
    summaries = {name: build_model(mc, seed=0).summary().to_dict() for name, mc in cfgs.items()}
    (out / "model_summaries.json").write_text(json.dumps(summaries, indent=2, sort_keys=True) + "\n")

    def progress(name, r):
        acc = "failed" if r.best_val_accuracy is None else f"{r.best_val_accuracy:.2f}%"
        _say(f"train {name} fold {r.fold_index}: best {acc} after {r.n_evaluations} epoch(s) [{r.status}]")
        if not r.ok:
            print(f"warning: {name} fold {r.fold_index}: {r.message}", file=sys.stderr)

    ckpt = out / "checkpoints" if tr.save_checkpoints else None
    results = run_models(cfgs, ds, plan, tr.train_config(), cfg.seed, jobs, tr.folds, progress, ckpt)
    meta = {"models": {n: c.to_dict() for n, c in cfgs.items()}, "training": tr.model_dump(mode="json"),
            "seed": cfg.seed, "k": tr.k, "dataset_shape": list(ds.shape),
            "preprocessing": None if cfg.preprocessed else cfg.preprocessing.spec().to_dict()}
    report = summarize_run(results, cfg.subject_id or ds.subject_id, tr.t_test_mode, meta)
    paths = report.write(out, "run")
    _write_provenance(cfg, "train", paths, _dataset_inputs(cfg))
    for name, st in report.stats.items():
        _say(f"train {name}: max {st.max}, mean {st.mean}, failed folds {st.n_failed}/{st.n_folds}")
    dead = [n for n, frs in results.items() if frs and all(not r.ok for r in frs)]
    if dead:
        raise NumericFailure(f"all folds failed for {dead}")
    return 0


def cmd_report(cfg: RunConfig, jobs: int = 1) -> int:
    inputs = cfg.report.inputs or [str(Path(cfg.output) / "run_report.json")]
    reports = []
    for p in inputs:
        try:
            reports.append(RunReport.from_dict(json.loads(Path(p).read_text())))
        except FileNotFoundError:
            raise ConfigError(f"report input {p} not found") from None
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetError(f"{p}: malformed run report ({exc})") from None
    out = _out(cfg)
    write_table1(reports, out / "report_table1.csv")
    with open(out / "report_folds.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "model", "fold", "best_val_accuracy", "status"])
        for r in reports:
            for name, frs in r.results.items():
                for f in frs:
                    acc = "" if f.best_val_accuracy is None else f"{f.best_val_accuracy:.4f}"
                    w.writerow([r.subject_id, name, f.fold_index, acc, f.status])
    tests = {r.subject_id: {"anova": r.anova, "ttests": r.ttests} for r in reports}
    (out / "report_tests.json").write_text(json.dumps(tests, indent=2, sort_keys=True) + "\n")
    _say((out / "report_table1.csv").read_text().rstrip())
    return 0


HANDLERS = {
    "validate": cmd_validate, "import": cmd_import, "preprocess": cmd_preprocess,
    "similarity": cmd_similarity, "pca": cmd_pca, "snapshot": cmd_snapshot,
    "synth": cmd_synth, "train": cmd_train, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="letterdec", description="Imagined-handwriting EEG decoding pipeline.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run config (or a provenance file to replay)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for training (default 1)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out", default=None, help="override the output directory")
    ap.add_argument("--version", action="version", version=f"letterdec {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_config(args.config, {"seed": args.seed})
        if args.out is not None:
            cfg = cfg.model_copy(update={"output": str(Path(args.out).resolve())})
        return HANDLERS[args.command](cfg, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, DspError, AnalysisError, HarnessError, ModelBuildError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericFailure, DivergenceError, StatsError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
