"""Tabular text outputs (embeddings, predictions, projections) and atomic writes."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_embeddings(path, records) -> None:
    """``#dim=H`` line, column header, then one admission per row."""
    dim = len(records[0].embedding) if records else 0
    lines = [f"#dim={dim}", "\t".join(["admission_id", "stage_class", "mortality"] + [f"z{j}" for j in range(dim)])]
    for r in records:
        lines.append("\t".join([r.admission_id, str(r.stage_class), str(r.mortality)] + [fmt(v) for v in r.embedding]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_embeddings(path):
    """Returns ``(admission_ids, stage, mortality, Z)``."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("#dim="):
            raise ValueError(f"{path}: missing '#dim=' header")
        dim = int(first[5:])
        fh.readline()
        ids, stage, mort, rows = [], [], [], []
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3 + dim:
                raise ValueError(f"{path}: expected {3 + dim} columns, got {len(parts)}")
            ids.append(parts[0])
            stage.append(int(parts[1]))
            mort.append(int(parts[2]))
            rows.append([float(v) for v in parts[3:]])
    Z = np.asarray(rows, dtype=float).reshape(len(rows), dim)
    return np.array(ids, dtype=str), np.array(stage, dtype=np.int64), np.array(mort, dtype=np.int64), Z


def write_predictions(path, admission_ids, mortality, probs) -> None:
    lines = ["admission_id\tmortality\tprob"]
    for a, m, p in zip(admission_ids, mortality, probs):
        lines.append(f"{a}\t{int(m)}\t{fmt(p)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_predictions(path):
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        ids, mort, probs = [], [], []
        for line in fh:
            a, m, p = line.rstrip("\n").split("\t")
            ids.append(a)
            mort.append(int(m))
            probs.append(float(p))
    return np.array(ids, dtype=str), np.array(mort, dtype=np.int64), np.array(probs, dtype=float)


def write_projection(path, admission_ids, stage, points) -> None:
    lines = ["admission_id\tstage_class\tx\ty"]
    for a, s, (x, y) in zip(admission_ids, stage, points):
        lines.append(f"{a}\t{int(s)}\t{fmt(x)}\t{fmt(y)}")
    atomic_write_text(path, "\n".join(lines) + "\n")
