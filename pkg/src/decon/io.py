"""File formats: SCM JSON documents and role-tagged dataset CSVs."""
from __future__ import annotations

import csv
import io as _io
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DeconError, SchemaError
from .scm import Dataset, LinearScm, Role, Task

SCM_FORMAT = "decon-scm/1"
BUILTIN_PREFIX = "builtin:"


def scm_to_dict(scm: LinearScm) -> dict:
    return {
        "format": SCM_FORMAT,
        "task": scm.task.value,
        "names": list(scm.names),
        "roles": [r.value for r in scm.roles],
        "theta": scm.theta.tolist(),
        "mu": scm.mu.tolist(),
        "error_cov": scm.error_cov.tolist(),
    }


def scm_from_dict(doc: dict) -> LinearScm:
    if not isinstance(doc, dict) or doc.get("format") != SCM_FORMAT:
        raise SchemaError(f"expected a JSON object with \"format\": \"{SCM_FORMAT}\"")
    missing = [k for k in ("names", "roles", "theta", "error_cov") if k not in doc]
    if missing:
        raise SchemaError(f"SCM document lacks keys {missing}")
    p = len(doc["names"])
    try:
        return LinearScm(
            names=doc["names"],
            roles=doc["roles"],
            theta=np.array(doc["theta"], dtype=float).reshape(p, p),
            mu=np.array(doc.get("mu", [0.0] * p), dtype=float),
            error_cov=np.array(doc["error_cov"], dtype=float).reshape(p, p),
            task=Task(doc.get("task", "anticausal")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DeconError):
            raise
        raise SchemaError(f"malformed SCM document: {exc}") from exc


def builtin_scm_path(name: str):
    return resources.files("decon") / "models" / f"{name}.json"


def builtin_names() -> list:
    return sorted(f.name[:-5] for f in (resources.files("decon") / "models").iterdir()
                  if f.name.endswith(".json"))


def read_scm(path) -> LinearScm:
    """Load an SCM file; ``builtin:<name>`` loads a model shipped with the package."""
    path = str(path)
    if path.startswith(BUILTIN_PREFIX):
        source = builtin_scm_path(path[len(BUILTIN_PREFIX):])
        if not source.is_file():
            raise SchemaError(f"unknown builtin model {path!r}; available: {builtin_names()}")
        text = source.read_text()
    else:
        text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return scm_from_dict(doc)


def write_scm(scm: LinearScm, path) -> None:
    Path(path).write_text(json.dumps(scm_to_dict(scm), indent=2) + "\n")


def dataset_to_csv(data: Dataset) -> str:
    buf = _io.StringIO()
    buf.write(f"# provenance: {data.provenance}\n")
    buf.write(",".join(f"{n}:{r.value}" for n, r in zip(data.names, data.roles)) + "\n")
    # repr(float) is the shortest string that round-trips exactly
    for row in data.values.tolist():
        buf.write(",".join(map(repr, row)) + "\n")
    return buf.getvalue()


def write_dataset(data: Dataset, path) -> None:
    Path(path).write_text(dataset_to_csv(data))


def dataset_from_csv(text: str) -> Dataset:
    lines = text.splitlines()
    provenance = "loaded"
    while lines and lines[0].startswith("#"):
        head = lines.pop(0)[1:].strip()
        if head.startswith("provenance:"):
            provenance = head.split(":", 1)[1].strip()
    if not lines:
        raise SchemaError("dataset CSV has no header row")
    rows = list(csv.reader(lines))
    names, roles = [], []
    for cell in rows[0]:
        if ":" not in cell:
            raise SchemaError(f"header cell {cell!r} is not of the form name:role")
        name, role = cell.rsplit(":", 1)
        names.append(name.strip())
        try:
            roles.append(Role.parse(role))
        except DeconError as exc:
            raise SchemaError(str(exc)) from exc
    body = [r for r in rows[1:] if r]
    if not body:
        raise SchemaError("dataset CSV has no data rows")
    try:
        values = np.array(body, dtype=float)
    except ValueError as exc:
        raise SchemaError(f"non-numeric or ragged data: {exc}") from exc
    if values.ndim != 2 or values.shape[1] != len(names):
        raise SchemaError("row width does not match header")
    return Dataset(names, roles, values, provenance)


def read_dataset(path) -> Dataset:
    return dataset_from_csv(Path(path).read_text())
