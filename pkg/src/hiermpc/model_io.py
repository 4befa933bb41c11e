"""Serialization of models and reduced models.

JSON is the structured text format; floats are written with Python's repr,
the shortest decimal string (at most 17 significant digits) that round-trips
to the exact same binary value, so save/load is bit-stable.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .lti import CouplingMap, InterconnectedModel, SubsystemModel, assemble
from .sets import BallSet

FORMAT_VERSION = 1


def _matrix_out(M: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(M)]


def model_to_dict(model: InterconnectedModel) -> dict:
    subs = []
    for sub in model.subsystems:
        subs.append({
            "A": _matrix_out(sub.A),
            "B": _matrix_out(sub.B),
            "E": _matrix_out(sub.E),
            "C_z": _matrix_out(sub.C_z),
            "input_radius": float(sub.input_set.radius),
        })
    m = model.n_subsystems
    coupling = [[None if (i == j or model.coupling.block(i, j) is None)
                 else _matrix_out(model.coupling.block(i, j))
                 for j in range(m)] for i in range(m)]
    return {"format_version": FORMAT_VERSION, "subsystems": subs, "coupling": coupling}


def model_from_dict(data: dict) -> InterconnectedModel:
    if data.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {data.get('format_version')}")
    subs = []
    for entry in data["subsystems"]:
        B = np.array(entry["B"], dtype=float)
        subs.append(SubsystemModel(
            A=np.array(entry["A"], dtype=float),
            B=B,
            E=np.array(entry["E"], dtype=float),
            C_z=np.array(entry["C_z"], dtype=float),
            input_set=BallSet(B.shape[1], float(entry["input_radius"])),
        ))
    m = len(subs)
    blocks = tuple(tuple(None if data["coupling"][i][j] is None
                         else np.array(data["coupling"][i][j], dtype=float)
                         for j in range(m)) for i in range(m))
    return assemble(subs, CouplingMap(blocks))


def save_model(model: InterconnectedModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path) -> InterconnectedModel:
    return model_from_dict(json.loads(Path(path).read_text()))
