"""File formats: dataset bundles, traces, results, label files and configs.

Everything is JSON.  Floats are written with Python's shortest
round-trip repr, so every file reads back to identical values and a
re-run with the same inputs writes identical bytes.  A ``.gz`` suffix
selects gzip compression with a zeroed header timestamp.
"""

import gzip
import json
import os
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, HeterogeneousDims, NonSpdObservation
from .sampler import McmcTrace
from .spd import SpdMatrix

FORMAT_VERSION = 1


def _open_write(path):
    path = Path(path)
    if path.suffix == ".gz":
        raw = open(path, "wb")
        return gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0), raw
    return open(path, "wb"), None


def write_json(path, obj):
    text = json.dumps(obj, indent=1, allow_nan=False) + "\n"
    fh, raw = _open_write(path)
    try:
        fh.write(text.encode("utf-8"))
    finally:
        fh.close()
        if raw is not None:
            raw.close()


def read_json(path, what="file"):
    path = Path(path)
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rt", encoding="utf-8") as fh:
                text = fh.read()
        else:
            text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read {what}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _expect(doc, kind, path):
    if not isinstance(doc, dict) or doc.get("format") != kind:
        raise ConfigError(f"{path}: not a {kind} file")
    if doc.get("version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported {kind} version {doc.get('version')!r}")


def require(d, key, path, cast=None):
    """Fetch a config field, raising :class:`ConfigError` naming the field."""
    if key not in d:
        raise ConfigError(f"{path}: missing field {key!r}")
    if cast is None:
        return d[key]
    try:
        return cast(d[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: field {key!r} has invalid value {d[key]!r}") from None


# -- dataset bundles ------------------------------------------------------------------

class DatasetBundle:
    """SPD observations plus optional true labels, subject ids and metadata."""

    def __init__(self, matrices, labels=None, subject_ids=None, meta=None):
        mats = [np.asarray(m, dtype=float) for m in matrices]
        if not mats:
            raise DataError("a dataset needs at least one matrix")
        if len({m.shape for m in mats}) != 1:
            raise HeterogeneousDims("matrices have differing shapes")
        for i, m in enumerate(mats):
            try:
                SpdMatrix(m)
            except DataError as exc:
                raise NonSpdObservation(i, str(exc)) from None
        self.matrices = np.stack(mats)
        n = len(mats)
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise DataError(f"{labels.size} labels for {n} matrices")
        if subject_ids is not None and len(subject_ids) != n:
            raise DataError(f"{len(subject_ids)} subject ids for {n} matrices")
        self.labels = labels
        self.subject_ids = None if subject_ids is None else [str(s) for s in subject_ids]
        self.meta = dict(meta or {})

    @property
    def n(self):
        return self.matrices.shape[0]

    @property
    def p(self):
        return self.matrices.shape[1]

    def to_dict(self):
        return {
            "format": "mfm-wishart-dataset", "version": FORMAT_VERSION, "p": self.p,
            "n": self.n, "meta": self.meta,
            "labels": None if self.labels is None else self.labels.tolist(),
            "subject_ids": self.subject_ids,
            "matrices": self.matrices.tolist(),
        }


def write_dataset(path, bundle):
    write_json(path, bundle.to_dict())


def read_dataset(path):
    doc = read_json(path, "dataset")
    _expect(doc, "mfm-wishart-dataset", path)
    mats = require(doc, "matrices", path)
    try:
        arr = [np.asarray(m, dtype=float) for m in mats]
    except (TypeError, ValueError):
        raise DataError(f"{path}: matrices are not numeric arrays") from None
    if any(a.shape != (doc.get("p"), doc.get("p")) for a in arr):
        raise HeterogeneousDims(f"{path}: matrices do not all have the declared shape p x p")
    return DatasetBundle(arr, doc.get("labels"), doc.get("subject_ids"), doc.get("meta"))


# -- traces -------------------------------------------------------------------------------

def trace_to_dict(trace):
    return {
        "format": "mfm-wishart-trace", "version": FORMAT_VERSION,
        "config": trace.config,
        "nu_accepted": int(trace.nu_accepted), "nu_proposed": int(trace.nu_proposed),
        "nu": trace.nu.tolist(), "k_plus": trace.k_plus.tolist(),
        "labels": trace.labels.tolist(),
    }


def write_trace(path, trace):
    write_json(path, trace_to_dict(trace))


def read_trace(path):
    doc = read_json(path, "trace")
    _expect(doc, "mfm-wishart-trace", path)
    n = len(doc["labels"][0]) if doc["labels"] else 0
    labels = np.asarray(doc["labels"], dtype=np.int32).reshape(-1, n)
    return McmcTrace(labels, np.asarray(doc["nu"], dtype=float),
                     np.asarray(doc["k_plus"], dtype=np.int32),
                     int(doc["nu_accepted"]), int(doc["nu_proposed"]), doc["config"])


# -- results and label files ----------------------------------------------------------------

def write_result(path, result):
    write_json(path, dict(result, format="mfm-wishart-result", version=FORMAT_VERSION))


def read_result(path):
    doc = read_json(path, "result")
    _expect(doc, "mfm-wishart-result", path)
    return doc


def write_labels(path, labels, method, k, meta=None):
    write_json(path, {"format": "mfm-wishart-labels", "version": FORMAT_VERSION,
                      "method": method, "k": int(k), "meta": dict(meta or {}),
                      "labels": [int(x) for x in labels]})


def read_labels(path):
    """Labels from a labels file, a result file (Dahl partition) or a dataset (truth)."""
    doc = read_json(path, "labels")
    kind = doc.get("format") if isinstance(doc, dict) else None
    if kind == "mfm-wishart-labels":
        return np.asarray(doc["labels"], dtype=np.int64)
    if kind == "mfm-wishart-result":
        return np.asarray(doc["dahl"]["labels"], dtype=np.int64)
    if kind == "mfm-wishart-dataset":
        if doc.get("labels") is None:
            raise DataError(f"{path}: dataset carries no labels")
        return np.asarray(doc["labels"], dtype=np.int64)
    raise ConfigError(f"{path}: no labels found (format {kind!r})")


def default_workers():
    """Worker count from ``MFMW_THREADS``, else 1."""
    raw = os.environ.get("MFMW_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"MFMW_THREADS must be an integer, got {raw!r}") from None
