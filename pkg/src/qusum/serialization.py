"""JSON encodings for matrices, POVMs and channels.

A matrix is stored as ``{"re": [[...]], "im": [[...]]}``; files add a
``"dim"`` field. POVM files carry an ``"elements"`` list and channel files
a ``"kraus"`` list of such matrices.
"""

import json
from pathlib import Path

import numpy as np

from .errors import BadSpec


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def matrix_from_json(obj: dict) -> np.ndarray:
    try:
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise BadSpec(f"malformed matrix object: {exc}") from exc
    if re.ndim != 2 or re.shape != im.shape:
        raise BadSpec(f"matrix parts have incompatible shapes {re.shape} / {im.shape}")
    out = re + 1j * im
    if not np.all(np.isfinite(out)):
        raise BadSpec("matrix has non-finite entries")
    return out


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise BadSpec(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadSpec(f"{path} is not valid JSON: {exc}") from exc


def write_json(path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def load_matrix_file(path) -> np.ndarray:
    obj = read_json(path)
    m = matrix_from_json(obj)
    dim = obj.get("dim", m.shape[0])
    if m.shape != (dim, dim):
        raise BadSpec(f"{path}: declared dim {dim} but matrix is {m.shape}")
    return m


def save_matrix_file(path, m: np.ndarray) -> None:
    write_json(path, {"dim": int(m.shape[0]), **matrix_to_json(m)})


def operator_list_to_json(key: str, ops, dim: int) -> dict:
    return {"dim": int(dim), key: [matrix_to_json(op) for op in ops]}


def operator_list_from_json(obj: dict, key: str) -> tuple[int, list[np.ndarray]]:
    if not isinstance(obj, dict) or key not in obj:
        raise BadSpec(f"expected a JSON object with a {key!r} list")
    ops = [matrix_from_json(item) for item in obj[key]]
    if not ops:
        raise BadSpec(f"{key!r} list is empty")
    dim = int(obj.get("dim", ops[0].shape[1]))
    return dim, ops
