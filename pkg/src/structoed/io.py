"""Problem files, selection reports and matrix CSV interop.

A problem is stored as ``problem.json`` (header) next to ``problem.bin``
(payload). The payload holds little-endian float64 arrays in column-major
order, back to back: ``forward`` (``M x n``), ``prior_sqrt`` (``n x n``),
then ``u_true`` and ``data`` when present. The header lists each array's
name, shape and byte offset.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .problems import DesignProblem
from .tensor import SelectionOperator

__all__ = [
    "FORMAT_VERSION",
    "dump_json",
    "load_problem",
    "load_selection",
    "read_matrix_csv",
    "save_problem",
    "write_matrix_csv",
]

FORMAT_VERSION = 1
_LE_F8 = np.dtype("<f8")


def dump_json(obj, path=None) -> str:
    """Deterministic JSON text (sorted keys, two-space indent)."""
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _resolve(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.is_dir() or path.suffix != ".json":
        return path, path / "problem.json"
    return path.parent, path


def save_problem(p: DesignProblem, out_dir) -> tuple[Path, Path]:
    """Write ``problem.json`` and ``problem.bin`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays = [("forward", p.forward_matrix()), ("prior_sqrt", p.prior_sqrt)]
    if p.u_true is not None:
        arrays.append(("u_true", p.u_true))
    if p.data is not None:
        arrays.append(("data", p.data))
    entries = []
    offset = 0
    with open(out / "problem.bin", "wb") as fh:
        for name, arr in arrays:
            arr = np.asarray(arr, dtype=float)
            raw = arr.astype(_LE_F8).tobytes(order="F")
            fh.write(raw)
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += len(raw)
    header = {
        "format": "structoed-problem",
        "format_version": FORMAT_VERSION,
        "kind": p.kind,
        "config": p.config,
        "seed": p.seed,
        "n_params": p.n_params,
        "n_obs": p.n_obs,
        "mode_sizes": list(p.mode_sizes),
        "noise_sigma": p.noise_sigma,
        "payload": "problem.bin",
        "dtype": "<f8",
        "order": "F",
        "arrays": entries,
    }
    dump_json(header, out / "problem.json")
    return out / "problem.json", out / "problem.bin"


def load_problem(path) -> DesignProblem:
    """Read a problem from its directory or its ``problem.json``."""
    base, header_path = _resolve(path)
    with open(header_path) as fh:
        header = json.load(fh)
    if header.get("format") != "structoed-problem":
        raise ValueError(f"{header_path} is not a problem header")
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported problem format version {header.get('format_version')}")
    raw = (base / header["payload"]).read_bytes()
    arrays = {}
    for e in header["arrays"]:
        shape = tuple(e["shape"])
        count = int(np.prod(shape)) if shape else 1
        if e["offset"] + 8 * count > len(raw):
            raise ValueError(f"payload too short for array {e['name']!r}")
        flat = np.frombuffer(raw, dtype=_LE_F8, count=count, offset=e["offset"])
        arrays[e["name"]] = np.asarray(flat.reshape(shape, order="F"), dtype=float)
    return DesignProblem(
        arrays["forward"], arrays["prior_sqrt"], header["noise_sigma"], tuple(header["mode_sizes"]),
        u_true=arrays.get("u_true"), data=arrays.get("data"), kind=header.get("kind", "custom"),
        config=header.get("config", {}), seed=header.get("seed"),
    )


def load_selection(path) -> SelectionOperator:
    """Selection stored in a report JSON (or a bare selection dict)."""
    with open(path) as fh:
        obj = json.load(fh)
    return SelectionOperator.from_dict(obj.get("selection", obj))


def write_matrix_csv(m, path) -> None:
    """Comma-separated rows with round-trip float formatting."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in m:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    m = np.loadtxt(os.fspath(path), delimiter=",", dtype=float, ndmin=2)
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{path} contains non-finite entries")
    return m
