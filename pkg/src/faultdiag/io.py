"""CSV and JSON interchange formats.

Waveform files carry one observation window each, with a ``t_s`` time
column and one column per channel; a manifest CSV lists
``sample_id,timestamp,file_path`` rows pointing at them. Feature,
distance, coordinate, assignment, and selection tables are plain CSV
with ``sample_id`` keys. Floats are written with ``repr`` so files
round-trip bit-exactly.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .distance import DistanceMatrix
from .errors import ParseError
from .features import FeatureMatrix, Observation, TimeSeriesWindow


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# -- waveforms ----------------------------------------------------------------

def write_waveform_csv(path, windows: tuple[TimeSeriesWindow, ...]) -> None:
    """One observation: ``t_s`` plus one column per channel."""
    fs = windows[0].sampling_rate_hz
    n = windows[0].samples.size
    for w in windows:
        if w.samples.size != n or w.sampling_rate_hz != fs:
            raise ParseError("channels of one observation must share length and rate")
    t = np.arange(n) / fs
    header = ["t_s"] + [w.channel_id for w in windows]
    columns = [t] + [w.samples for w in windows]
    _write_rows(path, header, zip(*columns))


def read_waveform_csv(path, sampling_rate_hz: float | None = None,
                      timestamp: int = 0) -> tuple[TimeSeriesWindow, ...]:
    """Read one observation's channels; rate inferred from ``t_s`` when
    not supplied."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0] != "t_s":
            raise ParseError(f"{path}: first column must be t_s")
        channels = header[1:]
        if not channels:
            raise ParseError(f"{path}: no channel columns")
        try:
            data = np.array([[float(v) for v in row] for row in reader])
        except ValueError as err:
            raise ParseError(f"{path}: {err}") from None
    if data.ndim != 2 or data.shape[0] < 4 or data.shape[1] != len(header):
        raise ParseError(f"{path}: malformed waveform table")
    if sampling_rate_hz is None:
        steps = np.diff(data[:, 0])
        if np.any(steps <= 0):
            raise ParseError(f"{path}: t_s must be strictly increasing")
        sampling_rate_hz = 1.0 / float(np.median(steps))
    return tuple(
        TimeSeriesWindow(
            samples=data[:, 1 + i], sampling_rate_hz=sampling_rate_hz,
            channel_id=ch, timestamp=timestamp,
        )
        for i, ch in enumerate(channels)
    )


def write_manifest(path, entries) -> None:
    """``entries`` is an iterable of (sample_id, timestamp, file_path)."""
    _write_rows(path, ["sample_id", "timestamp", "file_path"], entries)


def read_manifest(path) -> list[tuple[str, int, Path]]:
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["sample_id", "timestamp", "file_path"]:
            raise ParseError(f"{path}: expected header sample_id,timestamp,file_path")
        for row in reader:
            try:
                ts = int(row["timestamp"])
            except (TypeError, ValueError):
                raise ParseError(f"{path}: bad timestamp {row['timestamp']!r}") from None
            file_path = Path(row["file_path"])
            if not file_path.is_absolute():
                file_path = path.parent / file_path
            out.append((row["sample_id"], ts, file_path))
    if not out:
        raise ParseError(f"{path}: empty manifest")
    return out


def write_dataset(outdir, observations) -> Path:
    """Write per-observation waveform CSVs plus the manifest; returns
    the manifest path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    entries = []
    for obs in observations:
        fname = f"{obs.sample_id}.csv"
        write_waveform_csv(outdir / fname, obs.windows)
        entries.append((obs.sample_id, obs.timestamp, fname))
    manifest = outdir / "manifest.csv"
    write_manifest(manifest, entries)
    return manifest


def read_dataset(manifest_path, sampling_rate_hz: float | None = None) -> list[Observation]:
    """Load every observation listed in a manifest."""
    observations = []
    for sample_id, timestamp, file_path in read_manifest(manifest_path):
        windows = read_waveform_csv(
            file_path, sampling_rate_hz=sampling_rate_hz, timestamp=timestamp
        )
        observations.append(Observation(sample_id=sample_id, windows=windows))
    return observations


# -- tabular outputs ----------------------------------------------------------

def write_feature_csv(path, fm: FeatureMatrix) -> None:
    header = ["sample_id"] + list(fm.feature_names)
    rows = ([sid] + list(row) for sid, row in zip(fm.sample_ids, fm.values))
    _write_rows(path, header, rows)


def read_feature_csv(path) -> FeatureMatrix:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0] != "sample_id":
            raise ParseError(f"{path}: first column must be sample_id")
        names = tuple(header[1:])
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as err:
                raise ParseError(f"{path}: {err}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return FeatureMatrix(values=np.array(rows), feature_names=names,
                         sample_ids=tuple(ids))


def write_distance_csv(path, D: DistanceMatrix) -> None:
    ids = list(D.sample_ids) if D.sample_ids else [str(i) for i in range(D.n)]
    header = ["sample_id"] + ids
    rows = ([sid] + list(row) for sid, row in zip(ids, D.d))
    _write_rows(path, header, rows)


def read_distance_csv(path, metric_name: str = "precomputed") -> DistanceMatrix:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0] != "sample_id":
            raise ParseError(f"{path}: first column must be sample_id")
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as err:
                raise ParseError(f"{path}: {err}") from None
    if ids != header[1:]:
        raise ParseError(f"{path}: row ids must match column ids")
    return DistanceMatrix(d=np.array(rows), metric_name=metric_name,
                          sample_ids=tuple(ids))


def write_labels_csv(path, sample_ids, labels) -> None:
    _write_rows(path, ["sample_id", "label"], zip(sample_ids, labels))


def read_labels_csv(path) -> dict[str, str]:
    path = Path(path)
    out: dict[str, str] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or reader.fieldnames[:2] != ["sample_id", "label"]:
            raise ParseError(f"{path}: expected header sample_id,label")
        for row in reader:
            out[row["sample_id"]] = row["label"]
    if not out:
        raise ParseError(f"{path}: empty labels file")
    return out


def write_assignments_csv(path, sample_ids, timestamps, labels,
                          responsibilities: np.ndarray) -> None:
    k = responsibilities.shape[1]
    header = ["sample_id", "timestamp", "label"] + [f"resp_{j + 1}" for j in range(k)]
    rows = (
        [sid, ts, lab] + list(resp)
        for sid, ts, lab, resp in zip(sample_ids, timestamps, labels, responsibilities)
    )
    _write_rows(path, header, rows)


def write_selection_csv(path, selection) -> None:
    header = ["k", "wss", "avg_silhouette", "bic", "aic"]
    rows = []
    for i, k in enumerate(selection.k_values):
        row = [k, selection.wss[i]]
        row.append(selection.avg_silhouette[i] if selection.avg_silhouette else "")
        row.append(selection.bic[i] if selection.bic else "")
        row.append(selection.aic[i] if selection.aic else "")
        rows.append(row)
    _write_rows(path, header, rows)


def write_coords_csv(path, sample_ids, coords: np.ndarray,
                     prefix: str = "axis") -> None:
    header = ["sample_id"] + [f"{prefix}{j + 1}" for j in range(coords.shape[1])]
    rows = ([sid] + list(row) for sid, row in zip(sample_ids, coords))
    _write_rows(path, header, rows)


def write_pairwise_csv(path, groups, table: np.ndarray) -> None:
    """Pairwise p-value table: observed in the lower triangle, permuted
    in the upper, empty diagonal."""
    header = [""] + [str(g) for g in groups]
    rows = []
    for i, g in enumerate(groups):
        row = [str(g)]
        for j in range(len(groups)):
            row.append("" if i == j else table[i, j])
        rows.append(row)
    _write_rows(path, header, rows)


def dump_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
