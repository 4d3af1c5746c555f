"""File formats: datasets, reports, embeddings, and run manifests.

Everything is UTF-8 CSV with leading `# key=value` comment lines so each
file is a single self-describing artifact. Floats are printed with 17
significant digits, which round-trips IEEE doubles exactly; re-running a
command on identical inputs reproduces every byte (timing columns aside).
"""

import csv
import json

import numpy as np

from . import linalg
from .errors import DomainError, ParseError
from .regression import Dataset

__all__ = [
    "TOOL_NAME",
    "TOOL_VERSION",
    "fmt_float",
    "write_dataset",
    "read_dataset",
    "read_covariates",
    "write_embedding_csv",
    "write_report_csv",
    "read_report_csv",
    "write_manifest",
]

TOOL_NAME = "manifold-ilpr"
TOOL_VERSION = "0.1.0"

REPORT_HEADER = ["p", "n", "method", "realization", "rmse", "fit_seconds", "h_selected", "error"]


def fmt_float(v):
    return f"{float(v):.17g}"


def _dataset_header(p, m):
    return [f"x{i}" for i in range(p)] + [f"y{i}" for i in range(m)]


def write_dataset(path, x, y, extra_meta=None):
    """Write covariates and vech'd responses with n/p/N comment metadata."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[1]
    m = linalg.vech_len(n)
    c, r = np.triu_indices(n)
    vechs = y[:, r, c]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {TOOL_NAME} dataset\n")
        fh.write(f"# n={n}\n# p={x.shape[1]}\n# N={x.shape[0]}\n")
        for key, val in (extra_meta or {}).items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        writer.writerow(_dataset_header(x.shape[1], m))
        for i in range(x.shape[0]):
            writer.writerow([fmt_float(v) for v in x[i]] + [fmt_float(v) for v in vechs[i]])


def _read_commented_csv(path):
    meta = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    meta[key.strip()] = val.strip()
                continue
            rows.append((lineno, next(csv.reader([line]))))
    if not rows:
        raise ParseError("file contains no CSV content")
    return meta, rows


def read_dataset(path, validate=True):
    """Parse a dataset file back into a Dataset; optionally re-check PD-ness."""
    meta, rows = _read_commented_csv(path)
    try:
        n = int(meta["n"])
        p = int(meta["p"])
    except KeyError as exc:
        raise ParseError(f"missing required metadata key {exc}") from None
    m = linalg.vech_len(n)
    header_line, header = rows[0]
    if header != _dataset_header(p, m):
        raise ParseError(f"unexpected column header {header}", line=header_line)
    xs = np.empty((len(rows) - 1, p))
    vs = np.empty((len(rows) - 1, m))
    for i, (lineno, row) in enumerate(rows[1:]):
        if len(row) != p + m:
            raise ParseError(f"expected {p + m} fields, got {len(row)}", line=lineno)
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        xs[i] = vals[:p]
        vs[i] = vals[p:]
    c, r = np.triu_indices(n)
    ys = np.zeros((xs.shape[0], n, n))
    ys[:, r, c] = vs
    ys[:, c, r] = vs
    ds = Dataset(xs, ys)
    if validate:
        try:
            ds.validate_spd()
        except DomainError as exc:
            raise DomainError(f"{path}: {exc}") from None
    return ds, meta


def read_covariates(path):
    """Query points: either a dataset file (covariate part) or an x-only CSV."""
    meta, rows = _read_commented_csv(path)
    if "n" in meta:
        ds, _ = read_dataset(path, validate=False)
        return ds.x
    header_line, header = rows[0]
    if not header or not all(name == f"x{i}" for i, name in enumerate(header)):
        raise ParseError(f"expected columns x0..x{{p-1}}, got {header}", line=header_line)
    p = len(header)
    xs = np.empty((len(rows) - 1, p))
    for i, (lineno, row) in enumerate(rows[1:]):
        if len(row) != p:
            raise ParseError(f"expected {p} fields, got {len(row)}", line=lineno)
        try:
            xs[i] = [float(v) for v in row]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return xs


def write_embedding_csv(path, points, labels=None, extra_meta=None):
    points = np.asarray(points, dtype=np.float64)
    dims = points.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {TOOL_NAME} embedding\n")
        for key, val in (extra_meta or {}).items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        writer.writerow(["index"] + [f"dim{i}" for i in range(dims)] + ["label"])
        for i in range(points.shape[0]):
            label = labels[i] if labels is not None else ""
            writer.writerow([str(i)] + [fmt_float(v) for v in points[i]] + [label])


def write_report_csv(path, rows, extra_meta=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {TOOL_NAME} benchmark report\n")
        for key, val in (extra_meta or {}).items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for row in rows:
            writer.writerow(
                [
                    str(row.p),
                    str(row.n),
                    row.method,
                    str(row.realization),
                    fmt_float(row.rmse),
                    fmt_float(row.fit_seconds),
                    fmt_float(row.h_selected),
                    row.error,
                ]
            )


def read_report_csv(path):
    """Rows of a benchmark report as dicts with typed numeric fields."""
    _, rows = _read_commented_csv(path)
    header_line, header = rows[0]
    if header != REPORT_HEADER:
        raise ParseError(f"unexpected report header {header}", line=header_line)
    out = []
    for lineno, row in rows[1:]:
        if len(row) != len(REPORT_HEADER):
            raise ParseError(f"expected {len(REPORT_HEADER)} fields", line=lineno)
        rec = dict(zip(REPORT_HEADER, row))
        for key in ("p", "n", "realization"):
            rec[key] = int(rec[key])
        for key in ("rmse", "fit_seconds", "h_selected"):
            rec[key] = float(rec[key])
        out.append(rec)
    return out


def write_manifest(path, command, parameters, outputs):
    """Config echo sufficient to re-run the command exactly."""
    doc = {
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "command": command,
        "parameters": parameters,
        "outputs": list(outputs),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
