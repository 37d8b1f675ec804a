"""JSON parameter files.

Layout (version 1)::

    {
      "format": "sail-nn-params",
      "version": 1,
      "config": {...},          # model constructor arguments, opaque here
      "layers": {...},          # layer configs, informational
      "parameters": [
        {"name": "net.layers.0.weight", "shape": [4, 32], "trainable": true,
         "values": [...row-major float64...]},
        ...
      ]
    }

Floats are written with ``repr`` precision so 64-bit values round-trip exactly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..errors import InputError, ParseError, ValidationError

FORMAT = "sail-nn-params"
VERSION = 1


def _plain(x):
    if isinstance(x, float) and not math.isfinite(x):
        raise ValueError("non-finite parameter value")
    return x


def module_state(module, config=None):
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": config if config is not None else {},
        "layers": module.config(),
        "parameters": [
            {
                "name": name,
                "shape": list(p.shape),
                "trainable": bool(p.trainable),
                "values": [_plain(v) for v in p.data.ravel().tolist()],
            }
            for name, p in module.named_parameters()
        ],
    }


def save_module(module, path, config=None):
    path = Path(path)
    path.write_text(json.dumps(module_state(module, config), allow_nan=False))


def read_state(path):
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise InputError(f"{path}: no such parameter file") from None
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    try:
        state = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from exc
    if not isinstance(state, dict) or state.get("format") != FORMAT:
        raise ParseError(f"not a {FORMAT} file", path)
    if state.get("version") != VERSION:
        raise ParseError(f"unsupported version {state.get('version')!r}", path)
    return state


def load_into(module, state, path="<state>"):
    """Copy parameter values from a decoded state into ``module`` in place."""
    params = dict(module.named_parameters())
    try:
        entries = {e["name"]: e for e in state["parameters"]}
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed parameter list ({exc})", path) from exc
    if set(entries) != set(params):
        missing = sorted(set(params) - set(entries))
        extra = sorted(set(entries) - set(params))
        raise ValidationError(f"{path}: parameter names differ (missing {missing}, unexpected {extra})")
    for name, p in params.items():
        entry = entries[name]
        try:
            values = np.asarray(entry["values"], dtype=np.float64)
            shape = tuple(entry["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"parameter {name}: {exc}", path) from exc
        if shape != p.shape or values.size != p.data.size:
            raise ValidationError(f"{path}: parameter {name} has shape {shape}, expected {p.shape}")
        p.data = values.reshape(shape)
        p.grad = None
    return module
