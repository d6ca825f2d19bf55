"""Run a recipe, schedule its replicas and write the result bundle.

Seed tree: ``SeedRecord(seed_root).child(experiment)`` is handed to the
recipe, which derives one child per replica (and per sweep point). A replica
therefore reproduces on its own, whatever the worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy

from .. import __version__
from ..errors import ConvergenceError, RenormGraphError
from ..seeding import SeedRecord
from .config import ExperimentSpec, output_dir
from .recipes import RECIPES, resolve_params

RECOVERABLE = (ConvergenceError, RenormGraphError)


def _safe_call(job, args):
    try:
        return True, job(*args)
    except RECOVERABLE as e:
        return False, f"{type(e).__name__}: {e}"


def make_pool(workers: int = 1):
    """Return ``pool(job, arglist, bundle) -> list`` with None for failed replicas.

    Results come back in argument order, so reductions do not depend on
    scheduling.
    """
    def pool(job, arglist, bundle):
        arglist = list(arglist)
        if workers > 1 and len(arglist) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                outs = list(ex.map(_safe_call, [job] * len(arglist), arglist))
        else:
            outs = [_safe_call(job, a) for a in arglist]
        res = []
        for i, (ok, val) in enumerate(outs):
            if ok:
                res.append(val)
            else:
                bundle.failures.append({"job": job.__name__, "index": i, "error": val})
                res.append(None)
        return res
    return pool


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _dump(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def run_experiment(spec: ExperimentSpec, out=None, write: bool = True):
    """Execute ``spec`` and (optionally) write its bundle.

    Returns
    -------
    bundle : recipes.Bundle
    manifest : dict
    """
    params = resolve_params(spec.experiment, spec.params)
    recipe = RECIPES[spec.experiment]
    seed = SeedRecord(spec.seed).child(spec.experiment)
    bundle = recipe.func(spec, params, seed, make_pool(spec.workers))
    files = dict(bundle.tables)
    files["summary.json"] = _dump(bundle.summary)
    manifest = {
        "experiment": spec.experiment,
        "spec_hash": spec.digest(),
        "seed_root": spec.seed,
        "seed_algorithm": seed.algorithm,
        "replicas": spec.replicas,
        "params": params,
        "kernel": spec.kernel.to_dict() if spec.kernel is not None else None,
        "versions": {"lrperc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "complete": not bundle.failures,
        "failures": bundle.failures,
        "files": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(files.items())},
    }
    if write:
        target = output_dir(spec, out)
        os.makedirs(target, exist_ok=True)
        for name, text in files.items():
            with open(os.path.join(target, name), "w", newline="\n") as fh:
                fh.write(text)
        with open(os.path.join(target, "manifest.json"), "w", newline="\n") as fh:
            fh.write(_dump(manifest))
    return bundle, manifest
