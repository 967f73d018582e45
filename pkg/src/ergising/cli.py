"""Command-line interface.

Every subcommand writes one JSON document::

    {"schema_version": ..., "tool_version": ..., "config": {...},
     "result": {...}, "meta": {...}}

``meta`` holds wall-clock information only; everything before it is a pure
function of the inputs.  Floats carry 17 significant digits; non-finite
values are written as the strings "inf", "-inf" and "nan".

Exit codes: 0 success, 1 validation or usage error, 2 resource ceiling.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
import time
from typing import Any

from . import __version__, enumeration, expansions, experiments, moments
from .errors import CeilingExceeded, ValidationError
from .model import GraphSample, ModelParams, PairClass, sample_graph

SCHEMA_VERSION = 1
_NONFINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


# -- serialization -----------------------------------------------------------

def _format_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with 17-significant-digit floats."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):  # numpy scalar
        return dumps(obj.item(), indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [inner + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if hasattr(obj, "to_dict"):
        return dumps(obj.to_dict(), indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _restore(obj):
    if isinstance(obj, dict):
        return {k: _restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_restore(v) for v in obj]
    if isinstance(obj, str) and obj in _NONFINITE:
        return _NONFINITE[obj]
    return obj


def loads(text: str) -> Any:
    """Inverse of :func:`dumps`: non-finite markers become floats again."""
    return _restore(json.loads(text))


# -- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _model_args(p: argparse.ArgumentParser, beta: bool = True):
    p.add_argument("--n", type=int, required=True, help="number of sites N")
    p.add_argument("--p", type=float, required=True, help="edge probability")
    if beta:
        p.add_argument("--beta", type=float, required=True, help="inverse temperature")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker threads (default: ${experiments.WORKERS_ENV} or 1)")


def _regime_args(p: argparse.ArgumentParser):
    p.add_argument("--c", type=float, default=None, help="regime constant for T2a/T3")
    p.add_argument("--p-exponent", type=float, default=None, help="p = N**exponent")
    p.add_argument("--p", type=float, default=None, help="constant p (T1 only)")
    p.add_argument("--beta", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ergising", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample-graph", help="draw a graph and serialize it")
    _model_args(s, beta=False)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--format", choices=["json", "binary"], default="json")
    _common(s)

    s = sub.add_parser("enumerate", help="exact per-graph partition functions")
    s.add_argument("--n", type=int)
    s.add_argument("--p", type=float)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--graph", help="read the graph from a binary or JSON file instead of sampling")
    s.add_argument("--shards", type=int, default=1)
    s.add_argument("--max-sites", type=int, default=None,
                   help=f"enumeration ceiling (default {enumeration.DEFAULT_ENUMERATION_CEILING})")
    _common(s)

    s = sub.add_parser("moments", help="closed-form moments and exact class-sum variances")
    _model_args(s)
    s.add_argument("--quantity", required=True, choices=sorted(_MOMENT_QUANTITIES))
    s.add_argument("--k", type=int)
    s.add_argument("--l", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--max-sites", type=int, default=None,
                   help=f"cubic-cost ceiling (default {moments.DEFAULT_CUBIC_CEILING})")
    _common(s)

    s = sub.add_parser("nu-count", help="number of spin pairs in a class (k, l, m)")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--l", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    _common(s)

    s = sub.add_parser("verify-expansions", help="fit remainder orders of the series claims")
    s.add_argument("--claim", action="append", choices=sorted({**expansions.CLAIMS,
                                                              **expansions.SUPPLEMENTARY_CLAIMS}))
    s.add_argument("--tolerance", type=float, default=expansions.SLOPE_TOLERANCE)
    _common(s)

    s = sub.add_parser("clt-experiment", help="Monte Carlo reproduction of a fluctuation regime")
    s.add_argument("--theorem", required=True, choices=experiments.THEOREMS)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--trials", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    _regime_args(s)
    s.add_argument("--ks-tolerance", type=float, default=0.1)
    s.add_argument("--max-sites", type=int, default=None)
    s.add_argument("--csv", help="also write the raw trials as CSV here")
    s.add_argument("--format", choices=["json", "csv"], default="json")
    _common(s)

    s = sub.add_parser("variance-trend", help="exactly scaled variances over an N grid")
    s.add_argument("--quantity", required=True, choices=experiments.TREND_QUANTITIES)
    s.add_argument("--theorem", choices=experiments.THEOREMS, default=None,
                   help="regime supplying p(N) (default: the quantity's own, else T1)")
    s.add_argument("--n", type=int, nargs="+", required=True)
    _regime_args(s)
    s.add_argument("--max-sites", type=int, default=None)
    s.add_argument("--format", choices=["json", "csv"], default="json")
    _common(s)
    return ap


# -- subcommands -------------------------------------------------------------

def _cls(args) -> PairClass:
    if None in (args.k, args.l, args.m):
        raise ValidationError("this quantity needs --k, --l and --m")
    return PairClass(args.k, args.l, args.m)


def _mag(args) -> int:
    if args.k is None:
        raise ValidationError("this quantity needs --k")
    return args.k


def _log(lm):
    return {"log_value": lm.log_value}


def _val(x):
    return {"value": x}


_MOMENT_QUANTITIES = {
    "expected_boltzmann": lambda P, a: _log(moments.expected_boltzmann(P, _mag(a))),
    "expected_partition": lambda P, a: _log(moments.expected_partition(P)),
    "joint_expected_boltzmann": lambda P, a: _log(moments.joint_expected_boltzmann(P, _cls(a))),
    "cov_hamiltonians": lambda P, a: _val(moments.cov_hamiltonians(P, _cls(a))),
    "cov_boltzmann_hamiltonian": lambda P, a: _val(moments.cov_boltzmann_hamiltonian(P, _cls(a))),
    "expected_T": lambda P, a: _log(moments.expected_T(P, _mag(a))),
    "joint_expected_T": lambda P, a: _log(moments.joint_expected_T(P, _cls(a))),
    "expected_hat_partition": lambda P, a: _log(moments.expected_hat_partition(P)),
    "expected_tilde_partition": lambda P, a: _log(moments.expected_tilde_partition(P)),
    "asymptotic_constants": lambda P, a: _val(moments.asymptotic_constants(P).__dict__),
    "variance_partition": lambda P, a: _val(moments.exact_variance_partition(
        P, a.max_sites, experiments.resolve_workers(a.workers))),
    "variance_hatZ": lambda P, a: _val(moments.exact_variance_hatZ(
        P, a.max_sites, experiments.resolve_workers(a.workers))),
    "variance_W": lambda P, a: _val(moments.exact_variance_W(
        P, a.max_sites, experiments.resolve_workers(a.workers))),
    "variance_x_residual": lambda P, a: _val(moments.exact_variance_x_residual(
        P, a.max_sites, experiments.resolve_workers(a.workers))),
}


def _load_graph(path: str) -> GraphSample:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == GraphSample._MAGIC:
        return GraphSample.from_bytes(data)
    try:
        return GraphSample.from_json(data.decode())
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError) as exc:
        raise ValidationError(f"{path}: not a graph file ({exc})") from None


def _cmd_sample_graph(args):
    g = sample_graph(ModelParams(args.n, args.p, 1.0), args.seed)
    if args.format == "binary":
        if not args.out:
            raise ValidationError("--format binary requires --out")
        return g.to_bytes()
    return g.to_dict()


def _cmd_enumerate(args):
    if args.graph:
        g = _load_graph(args.graph)
        if args.n is not None and args.n != g.n_sites:
            raise ValidationError("--n disagrees with the graph file")
        p = g.edge_prob if args.p is None else args.p
        params = ModelParams(g.n_sites, p, args.beta)
    else:
        if args.n is None or args.p is None:
            raise ValidationError("give --n and --p, or --graph")
        params = ModelParams(args.n, args.p, args.beta)
        ceiling = enumeration.DEFAULT_ENUMERATION_CEILING if args.max_sites is None else args.max_sites
        if args.n > ceiling:  # refuse before sampling a large graph
            raise CeilingExceeded("exact enumeration", args.n, ceiling)
        g = sample_graph(params, args.seed)
    res = enumeration.enumerate_graph(g, params, shards=args.shards,
                                      workers=experiments.resolve_workers(args.workers),
                                      max_sites=args.max_sites)
    d = res.to_dict()
    elapsed = d.pop("elapsed")
    return d, {"elapsed_seconds": elapsed}


def _cmd_moments(args):
    params = ModelParams(args.n, args.p, args.beta)
    out = {"params": params.to_dict(), "quantity": args.quantity}
    out.update(_MOMENT_QUANTITIES[args.quantity](params, args))
    out["method"] = "class-sum" if args.quantity.startswith("variance_") else "closed-form"
    return out


def _cmd_nu_count(args):
    cls = PairClass(args.k, args.l, args.m)
    nu = moments.nu_count(args.n, cls)
    out = {"n": args.n, "k": args.k, "l": args.l, "m": args.m, "nu": nu, "realizable": nu > 0}
    if nu:
        out["lclt_ratio"] = moments.lclt_ratio(args.n, cls)
    return out


def _cmd_verify(args):
    ids = args.claim or list(expansions.CLAIMS) + list(expansions.SUPPLEMENTARY_CLAIMS)
    records = [expansions.series_order_check(c, tolerance=args.tolerance).to_dict() for c in ids]
    for r in records:
        r["supplementary"] = r["claim_id"] in expansions.SUPPLEMENTARY_CLAIMS
    return records


def _regime(args, theorem):
    return experiments.default_regime(theorem, c=args.c, exponent=args.p_exponent, p=args.p)


def _cmd_clt(args):
    spec = _regime(args, args.theorem)
    rep = experiments.run_clt_trials(spec, args.n, args.trials, args.seed, beta=args.beta,
                                     workers=args.workers, max_sites=args.max_sites,
                                     ks_tolerance=args.ks_tolerance)
    if args.csv:
        experiments.write_trials_csv(rep, args.csv)
    if args.format == "csv":
        buf = io.StringIO()
        experiments.write_trials_csv(rep, buf)
        return buf.getvalue()
    return rep.to_dict()


def _cmd_trend(args):
    theorem = args.theorem or (args.quantity if args.quantity in experiments.THEOREMS else "T1")
    if theorem == "T1" and args.quantity == "var_sum" and args.p is None and args.p_exponent is None:
        args.p_exponent = -0.4
    spec = _regime(args, theorem)
    tr = experiments.variance_trend(args.quantity, args.n, spec, beta=args.beta,
                                    max_sites=args.max_sites, workers=args.workers)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "p", "value", "predicted", "gap"])
        for r in tr.rows:
            w.writerow([r["n"], repr(r["p"]), repr(r["value"]), repr(r["predicted"]), repr(r["gap"])])
        return buf.getvalue()
    return tr.to_dict()


_COMMANDS = {
    "sample-graph": _cmd_sample_graph,
    "enumerate": _cmd_enumerate,
    "moments": _cmd_moments,
    "nu-count": _cmd_nu_count,
    "verify-expansions": _cmd_verify,
    "clt-experiment": _cmd_clt,
    "variance-trend": _cmd_trend,
}


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("out",)}
    cfg["workers"] = experiments.resolve_workers(args.workers)
    return cfg


def _write(data, out: str | None, binary: bool = False):
    if out is None:
        sys.stdout.write(data)
        return
    with open(out, "wb" if binary else "w") as fh:
        fh.write(data)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    try:
        inputs = [getattr(args, "graph", None)]
        if args.out and any(i and os.path.abspath(i) == os.path.abspath(args.out) for i in inputs):
            raise ValidationError("--out would overwrite an input file")
        result = _COMMANDS[args.command](args)
        meta = {}
        if isinstance(result, tuple):
            result, meta = result
        if isinstance(result, bytes):
            _write(result, args.out, binary=True)
            return 0
        if isinstance(result, str):
            _write(result, args.out)
            return 0
        meta = {"started": started.isoformat(), "wall_seconds": time.perf_counter() - t0, **meta}
        doc = {"schema_version": SCHEMA_VERSION, "tool_version": __version__,
               "command": args.command, "config": _config(args), "result": result, "meta": meta}
        _write(dumps(doc) + "\n", args.out)
        return 0
    except CeilingExceeded as exc:
        sys.stderr.write(f"refused: {exc}\n")
        return 2
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
