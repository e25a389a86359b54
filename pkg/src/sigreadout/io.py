"""Trace bundles, feature files and demodulation of raw ADC records.

A trace bundle is a directory holding

``manifest.json``
    version, counts, sampling metadata and the names of the two data files.
``traces.f32``
    little-endian float32, trace-major, I and Q interleaved per sample.
``labels.u8``
    one byte per trace for the prepared block, then the initial-check block
    and the final-state block when present; 255 marks an unknown label.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .errors import BundleError, InvalidInputError
from .traces import UNKNOWN, TraceSet

BUNDLE_VERSION = 1
LAYOUT = "trace-major-iq-interleaved"
DTYPE = "f32le"
UNKNOWN_BYTE = 255
FEATURES_VERSION = 1


def _labels_to_bytes(arr):
    return np.where(arr == UNKNOWN, UNKNOWN_BYTE, arr).astype(np.uint8)


def _bytes_to_labels(arr):
    return np.where(arr == UNKNOWN_BYTE, UNKNOWN, arr.astype(np.int64))


def quantize(trace_set: TraceSet) -> TraceSet:
    """The trace set as it will read back from disk (float32 I/Q)."""
    out = trace_set.subset(np.arange(trace_set.n_traces))
    iq = np.stack([trace_set.traces.real, trace_set.traces.imag], axis=-1).astype(np.float32)
    out.traces = iq[..., 0].astype(np.float64) + 1j * iq[..., 1].astype(np.float64)
    return out


def save_bundle(trace_set: TraceSet, directory) -> Path:
    """Write a trace bundle and return the manifest path."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        iq = np.empty((trace_set.n_traces, trace_set.n_samples, 2), dtype="<f4")
        iq[..., 0] = trace_set.traces.real
        iq[..., 1] = trace_set.traces.imag
        (directory / "traces.f32").write_bytes(iq.tobytes())
        blocks = [trace_set.prepared]
        has_initial = trace_set.initial_check is not None
        has_final = trace_set.final is not None
        if has_initial:
            blocks.append(trace_set.initial_check)
        if has_final:
            blocks.append(trace_set.final)
        (directory / "labels.u8").write_bytes(np.concatenate([_labels_to_bytes(b) for b in blocks]).tobytes())
        manifest = {
            "version": BUNDLE_VERSION,
            "n_traces": trace_set.n_traces,
            "n_samples": trace_set.n_samples,
            "sample_period_ns": float(trace_set.sample_period) * 1e3,
            "n_states": trace_set.n_states,
            "has_initial_check": has_initial,
            "has_final_labels": has_final,
            "data_file": "traces.f32",
            "labels_file": "labels.u8",
            "dtype": DTYPE,
            "layout": LAYOUT,
            "meta": {str(k): str(v) for k, v in trace_set.meta.items()},
        }
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write bundle in {directory}: {exc}") from exc
    return path


def _require(manifest, key, kind, path):
    if key not in manifest:
        raise BundleError(key, "missing from manifest", path)
    value = manifest[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise BundleError(key, f"must be an integer, got {value!r}", path)
    if kind is bool and not isinstance(value, bool):
        raise BundleError(key, f"must be a boolean, got {value!r}", path)
    return value


def load_bundle(manifest_path) -> TraceSet:
    """Read and validate a bundle; accepts the manifest path or its directory."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise BundleError("manifest", "file not found", path) from None
    except json.JSONDecodeError as exc:
        raise BundleError("manifest", f"invalid JSON ({exc})", path) from None

    version = manifest.get("version")
    if version != BUNDLE_VERSION:
        raise BundleError("version", f"unsupported bundle version {version!r} (expected {BUNDLE_VERSION})", path)
    if manifest.get("layout") != LAYOUT:
        raise BundleError("layout", f"unknown layout {manifest.get('layout')!r}", path)
    if manifest.get("dtype") != DTYPE:
        raise BundleError("dtype", f"unknown dtype {manifest.get('dtype')!r}", path)
    n_traces = _require(manifest, "n_traces", int, path)
    n_samples = _require(manifest, "n_samples", int, path)
    n_states = _require(manifest, "n_states", int, path)
    has_initial = _require(manifest, "has_initial_check", bool, path)
    has_final = _require(manifest, "has_final_labels", bool, path)
    for key, value in (("n_traces", n_traces), ("n_samples", n_samples), ("n_states", n_states)):
        if value <= 0:
            raise BundleError(key, f"must be positive, got {value}", path)

    base = path.parent
    data_path = base / _require(manifest, "data_file", str, path)
    labels_path = base / _require(manifest, "labels_file", str, path)
    expected = {
        "data_file": (data_path, n_traces * n_samples * 2 * 4),
        "labels_file": (labels_path, n_traces * (1 + has_initial + has_final)),
    }
    for key, (p, size) in expected.items():
        if not p.exists():
            raise BundleError(key, "file not found", p)
        actual = p.stat().st_size
        if actual != size:
            raise BundleError(key, f"size mismatch: expected {size} bytes, found {actual}", p)

    iq = np.fromfile(data_path, dtype="<f4").reshape(n_traces, n_samples, 2)
    traces = iq[..., 0].astype(np.float64) + 1j * iq[..., 1].astype(np.float64)
    raw = np.fromfile(labels_path, dtype=np.uint8)
    blocks = iter(raw.reshape(-1, n_traces))
    prepared = _bytes_to_labels(next(blocks))
    initial = _bytes_to_labels(next(blocks)) if has_initial else None
    final = _bytes_to_labels(next(blocks)) if has_final else None
    try:
        return TraceSet(
            traces=traces,
            prepared=prepared,
            n_states=n_states,
            sample_period=float(manifest.get("sample_period_ns", 1000.0)) / 1e3,
            initial_check=initial,
            final=final,
            meta=dict(manifest.get("meta", {})),
        )
    except InvalidInputError as exc:
        raise BundleError("labels_file", str(exc), labels_path) from None


def read_csv_traces(path, n_states: int | None = None, sample_period: float = 1.0) -> TraceSet:
    """Small fixtures: rows of ``trace_id,sample_idx,I,Q[,prepared,initial,final]``.

    Label columns are read from each trace's first row; empty cells mean unknown.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("trace_id", "sample_idx", "I", "Q"):
            if col not in header:
                raise InvalidInputError(f"CSV header lacks required column {col!r}")
        rows = list(reader)
    if not rows:
        raise InvalidInputError("CSV contains no data rows")
    ids = sorted({int(r["trace_id"]) for r in rows})
    pos = {tid: i for i, tid in enumerate(ids)}
    n_samples = max(int(r["sample_idx"]) for r in rows) + 1
    traces = np.full((len(ids), n_samples), np.nan + 0j)
    labels = {k: np.full(len(ids), UNKNOWN) for k in ("prepared", "initial", "final")}
    for r in rows:
        i = pos[int(r["trace_id"])]
        traces[i, int(r["sample_idx"])] = float(r["I"]) + 1j * float(r["Q"])
        for k in labels:
            if r.get(k) not in (None, ""):
                labels[k][i] = int(r[k])
    if np.isnan(traces.real).any():
        raise InvalidInputError("CSV traces have missing samples")
    if np.any(labels["prepared"] == UNKNOWN):
        raise InvalidInputError("every trace needs a prepared label")
    if n_states is None:
        n_states = int(max(v.max() for v in labels.values())) + 1
    return TraceSet(
        traces=traces,
        prepared=labels["prepared"],
        n_states=n_states,
        sample_period=sample_period,
        initial_check=labels["initial"] if "initial" in header else None,
        final=labels["final"] if "final" in header else None,
        meta={"source": os.fspath(path)},
    )


def save_features(directory, features, prepared=None, final=None, meta=None) -> Path:
    """Write ``features.f64`` (row-major little-endian float64) with a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    X = np.ascontiguousarray(features, dtype="<f8")
    if X.ndim != 2:
        raise InvalidInputError("feature matrix must be 2-D")
    (directory / "features.f64").write_bytes(X.tobytes())
    blocks = [b for b in (prepared, final) if b is not None]
    if blocks:
        (directory / "feature_labels.u8").write_bytes(
            np.concatenate([_labels_to_bytes(np.asarray(b)) for b in blocks]).tobytes()
        )
    manifest = {
        "version": FEATURES_VERSION,
        "n_rows": int(X.shape[0]),
        "n_features": int(X.shape[1]),
        "dtype": "f64le",
        "data_file": "features.f64",
        "labels_file": "feature_labels.u8" if blocks else None,
        "has_prepared": prepared is not None,
        "has_final_labels": final is not None,
        "meta": {str(k): v for k, v in (meta or {}).items()},
    }
    path = directory / "features.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_features(manifest_path):
    """Returns ``(features, prepared, final, meta)``; absent label blocks are ``None``."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "features.json"
    manifest = json.loads(path.read_text())
    if manifest.get("version") != FEATURES_VERSION:
        raise BundleError("version", f"unsupported feature-file version {manifest.get('version')!r}", path)
    n, d = manifest["n_rows"], manifest["n_features"]
    data_path = path.parent / manifest["data_file"]
    if data_path.stat().st_size != n * d * 8:
        raise BundleError("data_file", f"size mismatch: expected {n * d * 8} bytes, found {data_path.stat().st_size}", data_path)
    X = np.fromfile(data_path, dtype="<f8").reshape(n, d)
    prepared = final = None
    if manifest.get("labels_file"):
        raw = np.fromfile(path.parent / manifest["labels_file"], dtype=np.uint8)
        n_blocks = int(manifest["has_prepared"]) + int(manifest["has_final_labels"])
        if raw.size != n * n_blocks:
            raise BundleError("labels_file", f"size mismatch: expected {n * n_blocks} bytes, found {raw.size}", path)
        blocks = iter([raw[i * n : (i + 1) * n] for i in range(n_blocks)])
        prepared = _bytes_to_labels(next(blocks)) if manifest["has_prepared"] else None
        final = _bytes_to_labels(next(blocks)) if manifest["has_final_labels"] else None
    return X, prepared, final, manifest.get("meta", {})


def demodulate(raw, carrier_freq: float, sample_rate: float, segment_len: int) -> np.ndarray:
    """Complex amplitude of a real carrier, one value per full segment.

    ``out[s] = (2/L) * sum_j raw[sL+j] exp(-2 pi i f (sL+j) / f_s)``; the factor
    2 returns ``A exp(i phi)`` for ``raw = A cos(2 pi f t + phi)`` when each
    segment spans whole carrier cycles. A trailing partial segment is dropped.
    """
    x = np.asarray(raw, dtype=np.float64).ravel()
    L = int(segment_len)
    if L < 1:
        raise InvalidInputError("segment_len must be >= 1")
    if x.size < L:
        raise InvalidInputError(f"record has {x.size} samples, shorter than one segment of {L}")
    n_seg = x.size // L
    j = np.arange(n_seg * L)
    # reduce the phase modulo one cycle before the exponential to limit rounding
    phase = np.mod(carrier_freq * j / sample_rate, 1.0)
    mixed = x[: n_seg * L] * np.exp(-2j * np.pi * phase)
    return (2.0 / L) * mixed.reshape(n_seg, L).sum(axis=1)
