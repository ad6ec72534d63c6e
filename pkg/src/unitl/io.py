"""File formats: dataset CSV, model files, task files, and the external source client.

Every float is written with ``repr``, the shortest decimal that parses back to
the same double, so files reproduce byte for byte and models round-trip
exactly.
"""

from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import numpy as np

from .core import Dataset, TransferPredictor
from .errors import ChildFailure, DimensionMismatch, ModelFormatError, ProtocolError
from .learners import model_from_dict
from .synthdata import task_pair_from_dict

FORMAT_VERSION = 1


def fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _open_text(path_or_file, mode="r"):
    if hasattr(path_or_file, "read") or hasattr(path_or_file, "write"):
        return path_or_file, False
    if path_or_file == "-":
        return (sys.stdin if "r" in mode else sys.stdout), False
    return open(path_or_file, mode, encoding="utf-8", newline=""), True


def _parse_table(text):
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise ModelFormatError("empty CSV input")
    header = [h.strip() for h in rows[0]]
    p = 0
    while p < len(header) and header[p] == f"f{p + 1}":
        p += 1
    if p == 0:
        raise ModelFormatError("CSV header must start with feature columns f1..fp")
    extra = header[p:]
    if extra not in ([], ["y"]):
        raise ModelFormatError(f"unexpected CSV columns {extra}")
    try:
        values = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ModelFormatError(f"unparseable number in CSV: {exc}") from exc
    if values.size == 0:
        values = values.reshape(0, len(header))
    if values.shape[1] != len(header):
        raise ModelFormatError("ragged CSV rows")
    return values[:, :p], (values[:, p] if extra else None)


def read_dataset(path_or_file):
    f, close = _open_text(path_or_file)
    try:
        X, y = _parse_table(f.read())
    finally:
        if close:
            f.close()
    if y is None:
        raise ModelFormatError("dataset CSV needs a target column y")
    return Dataset(X, y)


def read_features(path_or_file):
    """Feature matrix from a CSV; a trailing ``y`` column is ignored."""
    f, close = _open_text(path_or_file)
    try:
        X, _ = _parse_table(f.read())
    finally:
        if close:
            f.close()
    return X


def features_to_csv(features):
    X = np.asarray(features, dtype=np.float64)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"f{j + 1}" for j in range(X.shape[1])])
    for row in X:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def dataset_to_csv(dataset):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"f{j + 1}" for j in range(dataset.p)] + ["y"])
    for row, t in zip(dataset.features, dataset.targets):
        w.writerow([fmt(v) for v in row] + [fmt(t)])
    return buf.getvalue()


def predictions_to_csv(pred, header=True):
    lines = (["prediction"] if header else []) + [fmt(v) for v in pred]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# External source model
# ---------------------------------------------------------------------------

def external_source_client(argv, features, timeout=None):
    """Get source predictions from a child process.

    The features go to the child's stdin as CSV with an ``f1..fp`` header; the
    child must answer with exactly one decimal number per row on stdout.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("features must be a 2-d matrix")
    proc = subprocess.run(list(argv), input=features_to_csv(X), capture_output=True,
                          text=True, timeout=timeout)
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-1:] or [""]
        raise ChildFailure(f"source command exited with status {proc.returncode}: {tail[0]}")
    lines = proc.stdout.splitlines()
    if lines and lines[-1].strip() == "":
        lines = lines[:-1]
    if len(lines) != X.shape[0]:
        raise ProtocolError(f"source command returned {len(lines)} lines for {X.shape[0]} rows")
    try:
        out = np.array([float(s) for s in lines], dtype=np.float64)
    except ValueError as exc:
        raise ProtocolError(f"unparseable prediction from source command: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise ProtocolError("source command returned non-finite predictions")
    return out


class CommandSource:
    """Source model living in another process; one child per batch."""

    def __init__(self, argv):
        self.argv = list(argv)

    def predict_batch(self, features):
        return external_source_client(self.argv, features)

    def predict(self, x):
        return float(self.predict_batch(np.asarray(x, dtype=np.float64)[None, :])[0])


# ---------------------------------------------------------------------------
# Model and task files
# ---------------------------------------------------------------------------

class PlainModel:
    """A learner model read from file, with no transfer blend."""

    def __init__(self, model):
        self.model = model

    def predict_batch(self, features):
        return self.model.predict_batch(features)

    def predict(self, x):
        return self.model.predict(x)


def source_to_dict(source):
    """Descriptor embedded in model files so predictions are self-contained."""
    if isinstance(source, CommandSource):
        return {"kind": "command", "argv": source.argv}
    if isinstance(source, TaskSource):
        return {"kind": "task_pair", "task": source.pair.to_dict()}
    if isinstance(source, (PlainModel, TransferPredictor)):
        return {"kind": "model", "model": model_document(source)}
    raise ModelFormatError(f"cannot serialize source of type {type(source).__name__}")


def source_from_dict(d):
    kind = d.get("kind")
    if kind == "command":
        return CommandSource(d["argv"])
    if kind == "task_pair":
        return TaskSource(task_pair_from_dict(d["task"]))
    if kind == "model":
        return predictor_from_document(d["model"])
    raise ModelFormatError(f"unknown source kind {kind!r}")


class TaskSource:
    """The source model of a synthetic task pair."""

    def __init__(self, pair):
        self.pair = pair
        self._f = pair.source

    def predict_batch(self, features):
        return self._f.predict_batch(features)

    def predict(self, x):
        return self._f.predict(x)


def model_document(predictor, regime=None, provenance=None):
    if isinstance(predictor, PlainModel):
        learner, transfer, source = predictor.model.to_dict(), None, None
    elif isinstance(predictor, TransferPredictor):
        learner = predictor.target_model.to_dict()
        transfer = {"tau": predictor.tau, "rho": predictor.rho, "regime": regime}
        source = source_to_dict(predictor.source)
    else:
        raise ModelFormatError(f"cannot serialize {type(predictor).__name__}")
    return {"format_version": FORMAT_VERSION, "type": "model", "learner": learner,
            "transfer": transfer, "source": source, "provenance": provenance or {}}


def _check_version(doc):
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {doc.get('format_version') if isinstance(doc, dict) else None!r}")


def predictor_from_document(doc):
    _check_version(doc)
    if doc.get("type") != "model":
        raise ModelFormatError(f"expected a model file, got type {doc.get('type')!r}")
    model = model_from_dict(doc["learner"])
    if doc.get("transfer") is None:
        return PlainModel(model)
    t = doc["transfer"]
    return TransferPredictor(rho=float(t["rho"]), source=source_from_dict(doc["source"]),
                             target_model=model, tau=float(t["tau"]))


def dumps(doc):
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def save_model(path, predictor, regime=None, provenance=None):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(model_document(predictor, regime, provenance)))


def _load_json(path):
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc


def load_model(path):
    return predictor_from_document(_load_json(path))


def task_document(pair):
    return {"format_version": FORMAT_VERSION, "type": "task_pair", "task": pair.to_dict()}


def load_task(path):
    doc = _load_json(path)
    _check_version(doc)
    if doc.get("type") != "task_pair":
        raise ModelFormatError(f"{path} is not a task file")
    return task_pair_from_dict(doc["task"])


def load_source(path):
    """A source model from either a model file or a task file."""
    doc = _load_json(path)
    _check_version(doc)
    if doc.get("type") == "task_pair":
        return TaskSource(task_pair_from_dict(doc["task"]))
    return predictor_from_document(doc)
