"""File formats: dataset CSV, truth sidecar CSV, scenario config and fit report JSON.

Floats are written with ``repr`` (shortest round-trip form), so every value
reads back bit-for-bit and write -> read -> write is byte-stable.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .core import Assignment, Component, FitResult, MixtureModel, SpatialDataset
from .exceptions import InvalidParameterError, SRMRError
from .simgen import LabeledDataset, ScenarioConfig

REPORT_SCHEMA_ID = "srmr-report/1"

OUTLIER_TYPES = ("none", "type1", "type2")


class ParseError(SRMRError, ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def _fmt(v) -> str:
    return repr(float(v))


def _write_rows(path, header, rows):
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_dataset(path, ds: SpatialDataset):
    p = ds.p
    header = ["y"] + [f"x{j}" for j in range(1, p + 1)] + ["sx", "sy"]
    rows = (
        [_fmt(ds.y[i])] + [_fmt(v) for v in ds.X[i, 1:]] + [_fmt(ds.S[i, 0]), _fmt(ds.S[i, 1])]
        for i in range(ds.n)
    )
    _write_rows(path, header, rows)


def read_dataset(path) -> SpatialDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 4 or header[0] != "y" or header[-2:] != ["sx", "sy"]:
            raise ParseError(path, 1, "header must be y,x1,...,xp,sx,sy")
        expected = [f"x{j}" for j in range(1, len(header) - 2)]
        if header[1:-2] != expected:
            raise ParseError(path, 1, f"predictor columns must be named {','.join(expected)}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, line_no, f"expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(path, line_no, "non-finite value")
            rows.append(vals)
    if not rows:
        raise ParseError(path, 2, "no data rows")
    a = np.array(rows)
    return SpatialDataset.from_predictors(a[:, 0], a[:, 1:-2], a[:, -2:])


def write_truth(path, lds: LabeledDataset):
    t1 = set(lds.true_type1.tolist())
    t2 = set(lds.true_type2.tolist())
    rows = []
    for i in range(lds.n):
        kind = "type1" if i in t1 else "type2" if i in t2 else "none"
        rows.append([i, int(lds.true_labels[i]), kind, int(lds.components[i])])
    _write_rows(path, ["row", "label", "outlier_type", "beta_component"], rows)


def read_truth(path) -> dict:
    """Return dict with arrays ``labels``, ``type1``, ``type2``, ``components``."""
    labels, comps, t1, t2 = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row", "label", "outlier_type", "beta_component"]:
            raise ParseError(path, 1, "header must be row,label,outlier_type,beta_component")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4 or row[2] not in OUTLIER_TYPES:
                raise ParseError(path, line_no, "malformed truth row")
            try:
                i, lab, comp = int(row[0]), int(row[1]), int(row[3])
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
            if i != len(labels):
                raise ParseError(path, line_no, "rows must be numbered 0..N-1 in order")
            labels.append(lab)
            comps.append(comp)
            if row[2] == "type1":
                t1.append(i)
            elif row[2] == "type2":
                t2.append(i)
    return {
        "labels": np.array(labels, dtype=np.intp),
        "type1": np.array(t1, dtype=np.intp),
        "type2": np.array(t2, dtype=np.intp),
        "components": np.array(comps, dtype=np.intp),
    }


def write_scenario(path, cfg: ScenarioConfig):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")


def load_scenario(path) -> ScenarioConfig:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    if not isinstance(d, dict):
        raise InvalidParameterError(f"{path}: scenario file must hold a JSON object")
    return ScenarioConfig.from_dict(d)


REPORT_JSON_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": REPORT_SCHEMA_ID,
    "type": "object",
    "required": [
        "schema", "version", "K", "n", "p", "lambda", "tau2", "seed", "pis", "betas",
        "sigma2s", "centroids", "labels", "cluster_labels", "type1", "type2", "bic",
        "trimmed_loglik", "iterations", "converged",
    ],
    "properties": {
        "schema": {"const": REPORT_SCHEMA_ID},
        "version": {"type": "string"},
        "K": {"type": "integer", "minimum": 1},
        "selected_k": {"type": "integer", "minimum": 1},
        "bic_by_k": {"type": "object", "additionalProperties": {"type": "number"}},
        "n": {"type": "integer", "minimum": 1},
        "p": {"type": "integer", "minimum": 0},
        "lambda": {"type": "number", "minimum": 0, "maximum": 1},
        "tau2": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "options": {"type": "object"},
        "pis": {"type": "array", "items": {"type": "number"}},
        "betas": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "sigma2s": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "centroids": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        },
        "labels": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "cluster_labels": {"type": "array", "items": {"type": "integer", "minimum": -1}},
        "type1": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "type2": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "bic": {"type": "number"},
        "noise_bic": {"type": "number"},
        "trimmed_loglik": {"type": "number"},
        "iterations": {"type": "integer", "minimum": 0},
        "converged": {"type": "boolean"},
        "start_index": {"type": "integer", "minimum": 0},
    },
}


def fit_to_report(fit: FitResult, ds: SpatialDataset, options=None) -> dict:
    m = fit.model
    rep = {
        "schema": REPORT_SCHEMA_ID,
        "version": __version__,
        "K": m.K,
        "n": ds.n,
        "p": ds.p,
        "lambda": m.lam,
        "tau2": m.tau2,
        "seed": int(fit.seed),
        "pis": m.pis.tolist(),
        "betas": m.betas.tolist(),
        "sigma2s": m.sigma2s.tolist(),
        "centroids": m.centroids.tolist(),
        "labels": fit.assignment.labels.tolist(),
        "cluster_labels": (fit.cluster_labels.tolist() if fit.cluster_labels is not None
                           else (fit.assignment.labels - 1).tolist()),
        "type1": fit.assignment.type1.tolist(),
        "type2": fit.assignment.type2.tolist(),
        "bic": fit.bic,
        "trimmed_loglik": fit.trimmed_loglik,
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "start_index": int(fit.start_index),
    }
    if fit.noise_bic is not None:
        rep["noise_bic"] = fit.noise_bic
    if fit.bic_by_k is not None:
        rep["selected_k"] = m.K
        rep["bic_by_k"] = {str(k): v for k, v in sorted(fit.bic_by_k.items())}
    if options is not None:
        rep["options"] = dict(options)
    return rep


def dumps_report(rep: dict) -> str:
    return json.dumps(rep, indent=2, allow_nan=False) + "\n"


def write_report(path, rep: dict):
    Path(path).write_text(dumps_report(rep), encoding="utf-8")


def read_report(path) -> dict:
    try:
        rep = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    if not isinstance(rep, dict) or rep.get("schema") != REPORT_SCHEMA_ID:
        raise InvalidParameterError(f"{path}: not a {REPORT_SCHEMA_ID} document")
    return rep


def report_to_fit(rep: dict) -> FitResult:
    """Rebuild a `FitResult` from a report dictionary."""
    comps = tuple(
        Component(pi=pi, beta=b, sigma2=s2, w=w)
        for pi, b, s2, w in zip(rep["pis"], rep["betas"], rep["sigma2s"], rep["centroids"])
    )
    model = MixtureModel(comps, rep["lambda"], rep["tau2"])
    asg = Assignment(labels=rep["labels"], type1=rep["type1"], type2=rep["type2"])
    bic_by_k = rep.get("bic_by_k")
    return FitResult(
        model=model,
        assignment=asg,
        trimmed_loglik=rep["trimmed_loglik"],
        bic=rep["bic"],
        iterations=rep["iterations"],
        converged=rep["converged"],
        seed=rep["seed"],
        cluster_labels=np.array(rep["cluster_labels"], dtype=np.intp),
        start_index=rep.get("start_index", 0),
        noise_bic=rep.get("noise_bic"),
        bic_by_k=None if bic_by_k is None else {int(k): v for k, v in bic_by_k.items()},
    )
