"""Command-line interface: ``mpt <command> ...``.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULT_MC_SAMPLES, DEFAULT_STARTS
from .data import Dataset, simulate
from .dsl import ParseFailure, read_model, serialize_model
from .errors import MptError
from .estimation import back_transform, bootstrap_g2, fit
from .model import validate
from .patterns import PATTERN_NAMES, get_pattern
from .polytope import DominanceOrder, VertexSet, enumerate_vertices, format_vertices, membership
from .reparam import Pipeline, transform_model
from .selection import CompareSettings, compare, fia_penalty


def _header(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "output")}
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()
    return {"program": "mptorder", "version": __version__, "command": args.command,
            "seed": getattr(args, "seed", None), "config_hash": digest[:16]}


def _header_line(h: dict) -> str:
    seed = "none" if h["seed"] is None else h["seed"]
    return f"# mptorder {h['version']}  command={h['command']}  seed={seed}  config={h['config_hash']}"


def _emit(args, text: str, record: dict) -> None:
    h = _header(args)
    if args.format == "records":
        out = json.dumps({"header": h, **record}, indent=2, default=_json_default) + "\n"
    else:
        out = _header_line(h) + "\n" + text.rstrip("\n") + "\n"
    if args.output:
        Path(args.output).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


def _params(text: str) -> dict[str, float]:
    """A JSON file, or inline ``name=value,name=value``."""
    path = Path(text)
    if path.suffix == ".json" or path.is_file():
        return {k: float(v) for k, v in json.loads(path.read_text(encoding="utf-8")).items()}
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, sep, value = part.partition("=")
        if not sep:
            raise MptError(f"cannot read parameter setting {part!r}; expected name=value")
        out[name.strip()] = float(value)
    return out


def _weights(text: str | None) -> dict[str, float] | None:
    return None if text is None else _params(text)


def _model_and_pipeline(args):
    """The fitting model and, when orders were rewritten, the pipeline."""
    model = read_model(args.model)
    if getattr(args, "manifest", None):
        return model, Pipeline.read_manifest(args.manifest)
    if model.orders:
        pl = transform_model(model, args.mode)
        return pl.rewritten, pl
    return model, None


# ----------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    try:
        model = read_model(args.model)
    except ParseFailure as e:
        for err in e.errors:
            print(f"{args.model}:{err}", file=sys.stderr)
        return 1
    diags = validate(model)
    _emit(args, "ok" if not diags else "\n".join(map(str, diags)),
          {"valid": not diags, "diagnostics": [str(d) for d in diags],
           "binary": list(model.binary), "groups": [g.name for g in model.groups],
           "trees": [t.name for t in model.trees], "categories": model.n_categories})
    return 0 if not diags else 1


def cmd_transform(args) -> int:
    model = read_model(args.model)
    pl = transform_model(model, args.mode)
    Path(args.output).write_text(serialize_model(pl.rewritten), encoding="utf-8")
    manifest = args.manifest or str(Path(args.output).with_suffix(".manifest.json"))
    pl.write_manifest(manifest)
    kinds = ", ".join(f"{s.kind}:{s.group}" for s in pl.steps) or "none"
    text = (f"wrote {args.output}\nwrote {manifest}\nsteps: {kinds}\n"
            f"identifiable: {pl.identifiable}")
    h = _header(args)
    print(_header_line(h) if args.format == "text" else json.dumps(
        {"header": h, "model": args.output, "manifest": manifest,
         "steps": [s.kind for s in pl.steps], "identifiable": pl.identifiable}, indent=2))
    if args.format == "text":
        print(text)
    return 0


def _parse_constraints(text: str, members: list[str] | None) -> DominanceOrder:
    pairs = []
    for part in text.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if ">=" in part:
            a, b = part.split(">=")
        elif "<=" in part:
            b, a = part.split("<=")
        else:
            raise MptError(f"cannot read constraint {part!r}; use a>=b or a<=b")
        pairs.append((a.strip(), b.strip()))
    labels = members or sorted({x for p in pairs for x in p})
    return DominanceOrder.from_labels(labels, pairs)


def cmd_vertices(args) -> int:
    if args.pattern:
        pat = get_pattern(args.pattern, args.k)
        vs = VertexSet(pat.vertices, "table")
    else:
        vs = enumerate_vertices(_parse_constraints(args.constraints, args.members))
    _emit(args, format_vertices(vs),
          {"vertices": [[str(x) for x in v] for v in vs.vertices], "count": len(vs)})
    return 0


def cmd_simulate(args) -> int:
    model = read_model(args.model)
    params = _params(args.params)
    for o in model.orders:
        g = model.group(o.group)
        order = DominanceOrder.from_labels(g.members, o.dominance_pairs())
        if not membership(order, [params[m] for m in g.members], tol=1e-9):
            raise MptError(f"parameters violate the order declared on {g.name!r}")
    data = simulate(model.replace(orders=()), params, args.n, args.seed)
    if args.output:
        data.write(args.output)
        print(_header_line(_header(args)))
    else:
        sys.stdout.write(_header_line(_header(args)) + "\n" + data.to_csv())
    return 0


def cmd_fit(args) -> int:
    model, pl = _model_and_pipeline(args)
    data = Dataset.read(args.data)
    res = fit(model, data, starts=args.starts, seed=args.seed)
    bt = back_transform(res, pl)
    text = res.text() + "\n\noriginal parameters\n" + bt.text()
    _emit(args, text, {"fit": res.record(), "back_transformed": bt.record()})
    return 0


def cmd_bootstrap(args) -> int:
    model, _ = _model_and_pipeline(args)
    data = Dataset.read(args.data)
    res = bootstrap_g2(model, data, args.B, args.seed, starts=args.starts,
                       threads=args.threads)
    _emit(args, res.text(), {"bootstrap": res.record()})
    return 0


def cmd_fia(args) -> int:
    model, _ = _model_and_pipeline(args)
    ll = None
    N = args.N
    if args.data:
        data = Dataset.read(args.data)
        N = int(sum(data.totals().values()))
        ll = fit(model, data, starts=args.starts, seed=args.seed).log_likelihood
    if N is None:
        raise MptError("give --N or --data")
    res = fia_penalty(model, _weights(args.weights), N, args.mc_samples, args.seed, ll,
                      args.threads)
    _emit(args, res.text(), {"fia": res.record()})
    return 0


def cmd_compare(args) -> int:
    models = {}
    for path in args.models:
        name = Path(path).stem
        if name in models:
            name = path
        models[name] = read_model(path)
    data = Dataset.read(args.data)
    settings = CompareSettings(args.starts, args.seed, args.mc_samples, _weights(args.weights),
                               args.mode, args.threads)
    rep = compare(models, data, settings)
    _emit(args, rep.text(), {"comparison": rep.record()})
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "records"), default="text",
                        help="aligned text or JSON records")
    common.add_argument("--threads", type=int, default=1, help="worker threads")

    def seeded(p):
        p.add_argument("--seed", type=int, required=True)

    def mode(p):
        p.add_argument("--mode", choices=("theta", "overparameterized"), default="theta",
                       help="parameterization for partial orders")

    parser = argparse.ArgumentParser(prog="mpt", description="Order-constrained MPT models.")
    parser.add_argument("--version", action="version", version=f"mptorder {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a model file")
    p.add_argument("model")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("transform", parents=[common], help="rewrite order constraints")
    p.add_argument("model")
    p.add_argument("-o", "--output", required=True, help="rewritten model file")
    p.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")
    mode(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("vertices", parents=[common], help="vertices of an order polytope")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--constraints", help="e.g. 'A>=B, A>=C'")
    g.add_argument("--pattern", choices=PATTERN_NAMES)
    p.add_argument("--members", nargs="+", help="member order for --constraints")
    p.add_argument("--k", type=int, help="size for the linear pattern")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_vertices)

    p = sub.add_parser("simulate", parents=[common], help="simulate category counts")
    p.add_argument("model")
    p.add_argument("--params", required=True, help="JSON file or name=value,...")
    p.add_argument("--n", type=int, required=True, help="observations per tree")
    seeded(p)
    p.add_argument("-o", "--output", help="CSV output")
    p.set_defaults(func=cmd_simulate)

    for name, func, hlp in (("fit", cmd_fit, "maximum likelihood fit"),
                            ("bootstrap", cmd_bootstrap, "parametric bootstrap of G2")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("model")
        p.add_argument("data")
        seeded(p)
        p.add_argument("--starts", type=int, default=DEFAULT_STARTS if name == "fit" else 5)
        p.add_argument("--manifest", help="manifest of a transformed model")
        mode(p)
        p.add_argument("-o", "--output")
        if name == "bootstrap":
            p.add_argument("--B", type=int, default=199)
        p.set_defaults(func=func)

    p = sub.add_parser("fia", parents=[common], help="FIA penalty")
    p.add_argument("model")
    p.add_argument("--data", help="CSV; adds the fitted log-likelihood")
    p.add_argument("--N", type=int, help="total observations when no data are given")
    p.add_argument("--weights", help="tree weights, JSON file or tree=w,...")
    p.add_argument("--mc-samples", type=int, default=DEFAULT_MC_SAMPLES)
    p.add_argument("--starts", type=int, default=DEFAULT_STARTS)
    p.add_argument("--manifest")
    seeded(p)
    mode(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_fia)

    p = sub.add_parser("compare", parents=[common], help="compare models on one dataset")
    p.add_argument("models", nargs="+")
    p.add_argument("--data", required=True)
    p.add_argument("--weights")
    p.add_argument("--mc-samples", type=int, default=DEFAULT_MC_SAMPLES)
    p.add_argument("--starts", type=int, default=DEFAULT_STARTS)
    seeded(p)
    mode(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except ParseFailure as e:
        for err in e.errors:
            print(f"error: {err}", file=sys.stderr)
        return 1
    except (MptError, OSError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
