"""Command-line entry point ``lrperc``.

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys

from .. import clusters, electro, flow, renorm, walk
from ..errors import ConvergenceError, DomainError, RenormGraphError, ValidationError
from ..model import Kernel
from ..sampler import (Box, config_from_bytes, config_from_csv, config_to_bytes, config_to_csv,
                       sample_config)
from .config import load_spec
from .recipes import RECIPES
from .runner import jsonable, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 2, 3


def _emit(text: str, out):
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _ints(text):
    return [int(x) for x in str(text).replace(",", " ").split()]


def _load_config(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] == b"LRPCFG01":
        return config_from_bytes(blob)
    return config_from_csv(blob.decode())


def _load_network(path):
    with open(path) as fh:
        return electro.network_from_csv(fh.read())


def cmd_sample(args):
    kernel = Kernel(args.d, args.s, args.beta)
    origin = (-(args.N // 2),) * args.d if args.centered else None
    cfg = sample_config(kernel, Box(args.d, args.N, origin), args.seed)
    if args.binary:
        if not args.out:
            raise ValidationError("--binary needs --out")
        with open(args.out, "wb") as fh:
            fh.write(config_to_bytes(cfg))
    else:
        _emit(config_to_csv(cfg), args.out)


def cmd_clusters(args):
    cfg = _load_config(args.config)
    if args.M:
        reports = clusters.cube_aliveness(cfg, args.M, args.K, args.threshold)
        _emit(clusters.reports_to_csv(reports), args.out)
        return
    lab = clusters.label_clusters(cfg)
    roots = lab.roots()
    sizes = lab.sizes[roots]
    order = sorted(range(len(roots)), key=lambda i: (-int(sizes[i]), int(roots[i])))
    lines = ["root,size"] + [f"{roots[i]},{sizes[i]}" for i in order]
    _emit("\n".join(lines) + "\n", args.out)


def cmd_renorm(args):
    cfg = _load_config(args.config)
    sched = renorm.validate_schedule(
        renorm.StageSchedule(args.variant, args.L, args.a, args.b), cfg.box.d, cfg.kernel.s)
    grid = clusters.cube_grid_shape(cfg.box, args.M)
    reports = clusters.cube_aliveness(cfg, args.M, args.K, args.threshold)
    alive0 = [r.alive for r in reports]
    pairs = renorm.attachment_pairs(cfg, reports)
    out = renorm.run_hierarchy(alive0, pairs, grid, sched, cfg.box.d)
    _emit(renorm.stages_to_csv(out), args.out)


def cmd_flow(args):
    C = tuple(_ints(args.C)) if args.C else flow.schedule(args.schedule, args.L, args.d)
    g = flow.build_renorm_graph(C)
    f = flow.build_flow(g, args.method)
    if args.out:
        _emit(f.to_csv(), args.out)
    rec = {"C": list(C), "vertices": g.n_vertices, "edges": g.n_required(),
           "flow_edges": f.n_edges,
           "nonzero_residuals": len(f.residuals()),
           "energy": {str(q): flow.q_energy(f, q) for q in args.q},
           "vertex_energy": flow.vertex_energy(f),
           "recursion_bound": flow.energy_recursion_bound(C, len(C))}
    sys.stdout.write(json.dumps(jsonable(rec), sort_keys=True) + "\n")


def cmd_resist(args):
    net = _load_network(args.network)
    rep = electro.solve_resistance(net, _ints(args.source), _ints(args.sink), tol=args.tol)
    sys.stdout.write(rep.to_json() + "\n")


def cmd_walk(args):
    net = _load_network(args.network)
    st = walk.escape_probability(net, args.start, _ints(args.boundary), args.replicas, args.seed,
                                 budget=args.budget)
    rec = {"start": st.start, "budget": st.budget, "replicas": st.replicas,
           "returns": st.returns, "escapes": st.escapes, "exhausted": st.exhausted,
           "estimate": st.estimate, "stderr": st.stderr}
    if args.check:
        rec["identity"] = walk.escape_identity(net, args.start, _ints(args.boundary))
    sys.stdout.write(json.dumps(jsonable(rec), sort_keys=True) + "\n")


def cmd_experiment(args):
    if args.action == "list":
        for name in sorted(RECIPES):
            sys.stdout.write(f"{name}\t{RECIPES[name].description}\n")
        return
    if not args.spec:
        raise ValidationError("experiment run needs a spec file")
    spec = load_spec(args.spec)
    _, manifest = run_experiment(spec, out=args.output)
    sys.stdout.write(json.dumps({"experiment": spec.experiment, "complete": manifest["complete"],
                                 "spec_hash": manifest["spec_hash"]}) + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lrperc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="sample a configuration")
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--s", type=float, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--centered", action="store_true", help="center the box on the origin")
    s.add_argument("--binary", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("clusters", help="cluster sizes or cube aliveness")
    s.add_argument("config")
    s.add_argument("--M", type=int, default=0)
    s.add_argument("--K", type=int, default=0)
    s.add_argument("--threshold", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_clusters)

    s = sub.add_parser("renorm", help="multi-stage cube hierarchy")
    s.add_argument("config")
    s.add_argument("--M", type=int, required=True)
    s.add_argument("--K", type=int, default=0)
    s.add_argument("--threshold", type=int, required=True)
    s.add_argument("--variant", default="subgraph", choices=["subgraph", "polynomial"])
    s.add_argument("--L", type=int, default=1)
    s.add_argument("--a", type=float)
    s.add_argument("--b", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_renorm)

    s = sub.add_parser("flow", help="hierarchical unit flow and its energies")
    s.add_argument("--C", help="block sizes, e.g. 4,9,16")
    s.add_argument("--schedule", default="subgraph", choices=["subgraph", "power2"])
    s.add_argument("--L", type=int, default=2)
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--q", type=float, nargs="+", default=[1.1, 1.5, 2.0])
    s.add_argument("--method", default="auto", choices=["auto", "fast", "exact"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_flow)

    s = sub.add_parser("resist", help="effective resistance of a network CSV")
    s.add_argument("network")
    s.add_argument("--source", required=True)
    s.add_argument("--sink", required=True)
    s.add_argument("--tol", type=float, default=1e-10)
    s.set_defaults(func=cmd_resist)

    s = sub.add_parser("walk", help="escape probability by random walks")
    s.add_argument("network")
    s.add_argument("--start", type=int, required=True)
    s.add_argument("--boundary", required=True)
    s.add_argument("--replicas", type=int, default=1000)
    s.add_argument("--budget", type=int, default=10**6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--check", action="store_true", help="add the resistance identity value")
    s.set_defaults(func=cmd_walk)

    s = sub.add_parser("experiment", help="run or list recipes")
    s.add_argument("action", choices=["run", "list"])
    s.add_argument("spec", nargs="?")
    s.add_argument("--output")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValidationError, DomainError, RenormGraphError, FileNotFoundError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INVALID
    except ConvergenceError as e:
        sys.stderr.write(f"not converged: {e}\n")
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
