"""JSON documents and CSV exports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np

from .model import DeviceConfig, EfficiencyCurve, Spectrum

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["n_channels", "channels"],
    "properties": {
        "n_channels": {"type": "integer", "minimum": 2, "multipleOf": 2},
        "delta_unit": {"type": "number", "exclusiveMinimum": 0},
        "kappa": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]},
        "gamma_r_tilde": _nonneg,
        "channels": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "f_sq", "gamma2_inv", "g", "delta_c"],
                "properties": {
                    "index": {"type": "integer", "not": {"const": 0}},
                    "f_sq": _nonneg,
                    "gamma2_inv": {"type": "number", "exclusiveMinimum": 0},
                    "g": _nonneg,
                    "delta_c": _num,
                    "gamma_mini": _nonneg,
                },
            },
        },
        "simulation": {"type": "object"},
    },
}


class SchemaError(ValueError):
    """Document does not match its schema; ``path`` locates the bad field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


def validate_config_doc(doc: dict) -> None:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaError(exc.message, path) from None


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_json(path, doc) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


def config_from_doc(doc: dict) -> DeviceConfig:
    validate_config_doc(doc)
    try:
        return DeviceConfig.from_dict(doc)
    except ValueError as exc:
        raise SchemaError(str(exc), "channels") from None


def load_config(path) -> DeviceConfig:
    return config_from_doc(load_json(path))


def save_config(path, config: DeviceConfig) -> Path:
    return write_json(path, config.to_dict())


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_spectrum_csv(path, spec: Spectrum, curve: EfficiencyCurve | None = None) -> Path:
    """Columns ``nu,re_S,im_S,abs_S2,eta`` at full precision."""
    s = np.asarray(spec.values)
    abs2 = np.abs(s) ** 2
    eta = curve.eta if curve is not None else 1.0 - abs2
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["nu", "re_S", "im_S", "abs_S2", "eta"])
        for row in zip(spec.grid, s.real, s.imag, abs2, eta):
            w.writerow([fmt(v) for v in row])
    return path


def read_spectrum_csv(path) -> Spectrum:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Spectrum(grid=data[:, 0], values=data[:, 1] + 1j * data[:, 2])
