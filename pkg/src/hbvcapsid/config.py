"""Run configuration and its canonical JSON form.

Canonical JSON: keys sorted, two-space indent, floats written with 17
significant digits, ``\\n`` line endings. Parsing and re-emitting a
canonical document reproduces it byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from .errors import InvalidInputError
from .integrator import SimConfig
from .params import BASELINE, INITIAL_PRESETS, ModelParams, State, as_state


@dataclasses.dataclass(frozen=True)
class RunConfig:
    params: ModelParams = BASELINE
    initial: object = "ic1"
    sim: SimConfig = SimConfig()
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.initial, str):
            if self.initial not in INITIAL_PRESETS:
                raise InvalidInputError(
                    f"unknown initial preset {self.initial!r}; use {', '.join(INITIAL_PRESETS)} or four numbers"
                )
        else:
            object.__setattr__(self, "initial", as_state(self.initial))
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise InvalidInputError(f"seed must be an integer, got {self.seed!r}")

    @property
    def initial_state(self):
        if isinstance(self.initial, str):
            return INITIAL_PRESETS[self.initial]
        return self.initial

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "initial": self.initial if isinstance(self.initial, str) else list(self.initial),
            "sim": self.sim.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data, base=None):
        """Build from a (possibly partial) dict; missing keys come from ``base``."""
        base = cls() if base is None else base
        if not isinstance(data, dict):
            raise InvalidInputError("config must be a JSON object")
        unknown = set(data) - {"params", "initial", "sim", "seed"}
        if unknown:
            raise InvalidInputError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        params = base.params
        if "params" in data:
            merged = base.params.to_dict()
            merged.update(_require_dict(data["params"], "params"))
            params = ModelParams.from_dict(merged)
        sim = base.sim
        if "sim" in data:
            merged = base.sim.to_dict()
            merged.update(_require_dict(data["sim"], "sim"))
            sim = SimConfig.from_dict(merged)
        initial = data.get("initial", base.initial)
        if isinstance(initial, list):
            initial = State(*as_state(initial))
        return cls(params=params, initial=initial, sim=sim, seed=data.get("seed", base.seed))


def _require_dict(value, name):
    if not isinstance(value, dict):
        raise InvalidInputError(f"config key {name!r} must be an object")
    return value


def _emit(value, indent):
    pad = "  " * indent
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {_emit(value[k], indent + 1)}' for k in sorted(value)
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        return "[" + ", ".join(_emit(v, indent + 1) for v in value) + "]"
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidInputError(f"cannot serialize non-finite number {value!r}")
        return format(value, ".17g")
    return json.dumps(value)


def dumps_canonical(obj):
    """Canonical JSON text (with trailing newline) for plain data."""
    return _emit(obj, 0) + "\n"


def dump_config(config):
    return dumps_canonical(config.to_dict())


def load_config(text, base=None):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config is not valid JSON: {exc}") from None
    return RunConfig.from_dict(data, base=base)


def read_config(path, base=None):
    with open(path) as fh:
        return load_config(fh.read(), base=base)
