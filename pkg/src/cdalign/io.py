"""Disk formats: feature tables, label splits, run outputs, JSON artifacts.

Everything here is plain CSV or JSON so artifacts stay inspectable. Floats
are written with 17 significant digits, which is enough for a double to
survive a write/read cycle bit-exactly. JSON artifacts are written with
sorted keys and contain no timestamps, so a rerun with the same config and
seed produces byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json

import numpy as np

from .data import UNKNOWN, UNLABELED, DomainDataset
from .exceptions import FeatureFileError

FILE_DOMAINS = ("A", "B")
_FIXED_COLUMNS = ("id", "domain", "label")


def format_float(value) -> str:
    """Decimal text that parses back to the identical double."""
    return format(float(value), ".17g")


def encode_label(label) -> str:
    """File spelling of one label: class id, ``unknown``, or empty."""
    label = int(label)
    if label == UNLABELED:
        return ""
    if label == UNKNOWN:
        return "unknown"
    if label < 0:
        raise ValueError(f"label sentinel {label} has no file spelling")
    return str(label)


def decode_label(text, line=None) -> int:
    if text == "":
        return UNLABELED
    if text == "unknown":
        return UNKNOWN
    try:
        value = int(text)
    except ValueError:
        raise FeatureFileError(
            f"label must be a class id, 'unknown', or empty, got {text!r}",
            line=line) from None
    if value < 0:
        raise FeatureFileError(
            f"class ids are non-negative, got {value}", line=line)
    return value


def default_ids(a: DomainDataset, b: DomainDataset) -> dict:
    """Positional sample ids, domain letter plus row index."""
    return {"A": [f"A{i}" for i in range(a.n)],
            "B": [f"B{i}" for i in range(b.n)]}


def _resolve_ids(a, b, ids):
    ids = default_ids(a, b) if ids is None else ids
    for key, n in (("A", a.n), ("B", b.n)):
        if len(ids[key]) != n:
            raise ValueError(
                f"ids[{key!r}] has {len(ids[key])} entries for {n} samples")
    flat = list(ids["A"]) + list(ids["B"])
    if len(set(flat)) != len(flat):
        raise ValueError("sample ids must be unique across both domains")
    return ids


# -- feature tables ----------------------------------------------------------

def save_features(path, a: DomainDataset, b: DomainDataset, ids=None):
    """Write both domains as one table: id,domain,label,f0..f{d-1}.

    The first dataset is written under domain tag A and the second under B,
    whatever their in-memory domain_id strings are.
    """
    if a.d != b.d:
        raise ValueError(f"feature widths differ: {a.d} vs {b.d}")
    ids = _resolve_ids(a, b, ids)
    header = list(_FIXED_COLUMNS) + [f"f{j}" for j in range(a.d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for tag, ds in (("A", a), ("B", b)):
            for i in range(ds.n):
                writer.writerow(
                    [ids[tag][i], tag, encode_label(ds.labels[i])]
                    + [format_float(v) for v in ds.features[i]])


def load_features_with_ids(path):
    """Parse a feature table into the two domains plus their sample ids."""
    rows = {"A": [], "B": []}
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FeatureFileError("empty file, expected a header row", line=1)
        d = len(header) - len(_FIXED_COLUMNS)
        if d < 1 or header != list(_FIXED_COLUMNS) + [f"f{j}" for j in range(d)]:
            raise FeatureFileError(
                "header must read id,domain,label,f0,...,f{d-1}", line=1)
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FeatureFileError(
                    f"expected {len(header)} columns, got {len(row)}",
                    line=line)
            sid, domain, label_text = row[0], row[1], row[2]
            if domain not in rows:
                raise FeatureFileError(
                    f"domain must be 'A' or 'B', got {domain!r}", line=line)
            if sid in seen:
                raise FeatureFileError(f"duplicate id {sid!r}", line=line)
            seen.add(sid)
            label = decode_label(label_text, line=line)
            feats = np.empty(d)
            for j, token in enumerate(row[3:]):
                try:
                    feats[j] = float(token)
                except ValueError:
                    raise FeatureFileError(
                        f"feature f{j} is not numeric: {token!r}",
                        line=line) from None
            if not np.isfinite(feats).all():
                raise FeatureFileError(
                    "features must be finite", line=line)
            rows[domain].append((sid, label, feats))
    out = []
    ids = {}
    for domain in FILE_DOMAINS:
        entries = rows[domain]
        if not entries:
            raise FeatureFileError(f"file has no domain {domain!r} samples")
        out.append(DomainDataset(
            domain_id=domain,
            features=np.vstack([e[2] for e in entries]),
            labels=np.array([e[1] for e in entries], dtype=np.int64)))
        ids[domain] = [e[0] for e in entries]
    return out[0], out[1], ids


def load_features(path):
    a, b, _ = load_features_with_ids(path)
    return a, b


# -- label splits ------------------------------------------------------------

def save_split(path, a: DomainDataset, b: DomainDataset, ids=None):
    """One row per sample: which label, if any, the sample was given.

    Rewriting a fully labeled copy of the same data with these labels
    reproduces the split exactly.
    """
    ids = _resolve_ids(a, b, ids)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_FIXED_COLUMNS)
        for tag, ds in (("A", a), ("B", b)):
            for i in range(ds.n):
                writer.writerow([ids[tag][i], tag, encode_label(ds.labels[i])])


def load_split(path) -> dict:
    """Read a split back as {'A': labels, 'B': labels} in file row order."""
    labels = {"A": [], "B": []}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(_FIXED_COLUMNS):
            raise FeatureFileError("header must read id,domain,label", line=1)
        seen = set()
        for line, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise FeatureFileError(
                    f"expected 3 columns, got {len(row)}", line=line)
            sid, domain, label_text = row
            if domain not in labels:
                raise FeatureFileError(
                    f"domain must be 'A' or 'B', got {domain!r}", line=line)
            if sid in seen:
                raise FeatureFileError(f"duplicate id {sid!r}", line=line)
            seen.add(sid)
            labels[domain].append(decode_label(label_text, line=line))
    return {k: np.array(v, dtype=np.int64) for k, v in labels.items()}


# -- run outputs -------------------------------------------------------------

def save_results(path, result, ids=None):
    """Final per-sample classification table, one row per unlabeled sample.

    ``result`` is a fitted aligner's PredictionResult; ``ids`` optionally
    maps each domain id to that domain's sample-id list.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "domain", "index", "predicted", "p_max"])
        p_max = (result.proba.max(axis=1)
                 if result.n else np.empty(0))
        for row in range(result.n):
            domain = result.domain[row]
            index = int(result.index[row])
            sid = ids[domain][index] if ids is not None else f"{domain}{index}"
            writer.writerow([sid, domain, index,
                             encode_label(result.predicted[row]),
                             format_float(p_max[row])])


def save_report(path, report, ids=None):
    """Pseudo-label audit table: prediction, entropy, and the outlier flag."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "domain", "index", "predicted", "entropy",
                         "outlier"])
        for row in range(report.n):
            domain = report.domain[row]
            index = int(report.index[row])
            sid = ids[domain][index] if ids is not None else f"{domain}{index}"
            writer.writerow([sid, domain, index,
                             encode_label(report.predicted[row]),
                             format_float(report.entropies[row]),
                             int(bool(report.outlier[row]))])


def save_cmc(path, curve):
    """Rank table of a match-rate curve: rank,rate."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "rate"])
        for rank, rate in curve.to_rows():
            writer.writerow([rank, format_float(rate)])


# -- JSON artifacts ----------------------------------------------------------

def json_bytes(obj) -> bytes:
    """Canonical JSON encoding: sorted keys, two-space indent, no NaN."""
    return (json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)
            + "\n").encode("utf-8")


def save_json(path, obj):
    with open(path, "wb") as fh:
        fh.write(json_bytes(obj))


def load_json(path):
    with open(path, "rb") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FeatureFileError(
                f"{path}: invalid JSON: {exc.msg}", line=exc.lineno) from None


save_manifest = save_json
load_manifest = load_json


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
