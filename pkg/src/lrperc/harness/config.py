"""Experiment spec files.

A spec is a TOML file with flat top-level keys, an optional ``[kernel]``
table and a ``[params]`` table of recipe parameters::

    experiment = "exp-normal1"
    replicas = 100
    seed = 7
    output = "runs/normal1"

    [kernel]
    d = 1
    s = 1.5
    beta = 2.0

    [params]
    Ns = [32, 64]
    rho = 1.0

Tabulated kernels set ``form = "table"`` and list ``table = [[offset..., prob], ...]``
(or ``[[[offset...], prob], ...]``); offsets beyond the table follow the eta tail.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from ..errors import ValidationError
from ..model import Kernel

OUTPUT_ENV = "LRPERC_OUTPUT_DIR"
TOP_KEYS = {"experiment", "replicas", "seed", "output", "workers", "kernel", "params"}


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    replicas: int = 0
    seed: int = 0
    output: str = "results"
    kernel: Kernel | None = None
    params: dict = field(default_factory=dict)
    workers: int = 1

    def to_dict(self) -> dict:
        out = {"experiment": self.experiment, "replicas": self.replicas, "seed": self.seed,
               "params": _plain(self.params)}
        if self.kernel is not None:
            out["kernel"] = self.kernel.to_dict()
        return out

    def digest(self) -> str:
        """Hash of everything that affects results (output dir and workers excluded)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def kernel_from_section(sec: dict) -> Kernel:
    sec = dict(sec)
    form = sec.pop("form", "eta")
    unknown = set(sec) - {"d", "s", "beta", "table"}
    if unknown:
        raise ValidationError(f"unknown kernel keys: {sorted(unknown)}")
    try:
        d, s, beta = int(sec["d"]), float(sec["s"]), float(sec["beta"])
    except KeyError as e:
        raise ValidationError(f"kernel section is missing {e.args[0]!r}") from None
    table = None
    if form == "table":
        rows = sec.get("table")
        if not rows:
            raise ValidationError("tabulated kernel needs a table")
        table = {}
        for r in rows:
            off = r[0] if isinstance(r[0], list) else r[:-1]
            table[tuple(int(x) for x in off)] = float(r[-1])
    elif form != "eta":
        raise ValidationError(f"unknown kernel form {form!r}")
    return Kernel(d, s, beta, table)


def spec_from_dict(data: dict) -> ExperimentSpec:
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ValidationError(f"unknown spec keys: {sorted(unknown)}")
    if "experiment" not in data:
        raise ValidationError("spec needs an 'experiment' key")
    replicas = int(data.get("replicas", 0))
    if replicas < 0:
        raise ValidationError("replicas must be >= 0")
    workers = int(data.get("workers", 1))
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    kern = data.get("kernel")
    return ExperimentSpec(
        experiment=str(data["experiment"]),
        replicas=replicas,
        seed=int(data.get("seed", 0)),
        output=str(data.get("output", "results")),
        kernel=kernel_from_section(kern) if kern is not None else None,
        params=dict(data.get("params", {})),
        workers=workers,
    )


def load_spec(path) -> ExperimentSpec:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"{path}: {e}") from None
    return spec_from_dict(data)


def output_dir(spec: ExperimentSpec, override=None) -> str:
    return override or os.environ.get(OUTPUT_ENV) or spec.output
