"""Command-line entry point.

Every subcommand resolves its parameters from built-in defaults, then an
optional ``--config`` JSON file, then explicit flags, and embeds the
resolved values in its output.  ``threads`` and ``out`` are left out of the
embedded config: results do not depend on them.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from contextlib import contextmanager
from typing import Any, Iterator, Sequence

import numpy as np

from . import __version__
from .bounds import certificate, choose_k1, constants_of
from .diagnostics import (
    azuma_rhs,
    delta_chain,
    martingale_check,
    sample_path_processes,
    sample_word,
    submartingale_check,
    tail_estimate,
)
from .errors import NumericGuard, ValidationError
from .fourier import decay_scan, ft_lattice_many, write_decay_csv
from .lattice import exceptional_scan, write_scan_jsonl
from .measure import IfsSpec, OriginalIfsSpec, aggregate_weights, support_interval, validate_ifs, validate_original
from .reduction import reduce_ifs

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3

DEFAULTS: dict[str, dict[str, Any]] = {
    "validate": {"format": "json"},
    "ft": {"t": "0", "tol": 1e-8, "format": "json"},
    "decay": {"N0": 4, "N1": 14, "grid": 256, "tol": 1e-8, "format": "csv"},
    "reduce": {"s": None, "ell": None, "merge_equal_ratios": False, "format": "json"},
    "ek-scan": {"N": 40, "k1": None, "s": None, "rho": None, "grid": 64, "trials": 16,
                "format": "jsonl"},
    "diagnose": {"N": 100, "t": None, "rho": None, "trials": 10_000, "k1": None,
                 "tail_N": None, "format": "json"},
    "bounds": {"B1": None, "B2": None, "d": None, "s": None, "k1": None, "N_max": 60,
               "format": "json"},
}
FORMATS = {
    "validate": ("json",),
    "ft": ("json", "csv"),
    "decay": ("csv", "json"),
    "reduce": ("json",),
    "ek-scan": ("jsonl",),
    "diagnose": ("json",),
    "bounds": ("json",),
}
STOCHASTIC = {"ek-scan", "diagnose"}
_NOT_EMBEDDED = {"threads", "out", "config", "command"}


def _clean(obj):
    """JSON-safe copy: NaN and infinities become ``None``, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _read_json(path: str, what: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {what} {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} {path!r} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{what} {path!r} must hold a JSON object")
    return doc


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then ``--config`` file, then flags that were given."""
    cfg = dict(DEFAULTS[args.command])
    cfg["spec"] = None
    if args.command in STOCHASTIC:
        cfg["seed"] = None
    if args.config:
        for k, v in _read_json(args.config, "config").items():
            cfg[k.replace("-", "_")] = v
    for k, v in vars(args).items():
        if k not in ("command", "config") and v is not None:
            cfg[k] = v
    threads = cfg.get("threads")
    if threads is None:
        env = os.environ.get("SSMF_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    cfg["threads"] = int(threads)
    if cfg["threads"] < 1:
        raise ValidationError(f"threads must be >= 1, got {cfg['threads']}")
    fmt = cfg.get("format")
    if fmt not in FORMATS[args.command]:
        raise ValidationError(f"format {fmt!r} not supported by {args.command}; use one of {FORMATS[args.command]}")
    if args.command in STOCHASTIC and cfg.get("seed") is None:
        raise ValidationError(f"{args.command} is stochastic: --seed is required")
    return cfg


def embedded(cfg: dict[str, Any], command: str) -> dict[str, Any]:
    out = {k: v for k, v in cfg.items() if k not in _NOT_EMBEDDED}
    out["command"] = command
    out["version"] = __version__
    return out


def _require(cfg: dict, *keys: str) -> None:
    for k in keys:
        if cfg.get(k) is None:
            raise ValidationError(f"missing required parameter --{k.replace('_', '-')}")


def _positive_int(cfg: dict, key: str, minimum: int = 1) -> int:
    v = cfg[key]
    if int(v) != v or v < minimum:
        raise ValidationError(f"--{key.replace('_', '-')} must be an integer >= {minimum}, got {v!r}")
    return int(v)


def _load_ifs(cfg: dict) -> IfsSpec:
    _require(cfg, "spec")
    spec = validate_ifs(IfsSpec.from_dict(_read_json(cfg["spec"], "spec")))
    cfg["spec_doc"] = spec.to_dict()
    return spec


def _floats(text) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse number list {text!r}") from None


def _ints(text) -> list[int]:
    vals = _floats(text)
    if any(int(v) != v for v in vals):
        raise ValidationError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


@contextmanager
def _output(path: str | None) -> Iterator[io.TextIOBase]:
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="\n") as fh:
            yield fh


def cmd_validate(cfg: dict, fh) -> None:
    _require(cfg, "spec")
    doc = _read_json(cfg["spec"], "spec")
    if "lambda" in doc:
        orig = validate_original(OriginalIfsSpec.from_dict(doc))
        cfg["spec_doc"] = orig.to_dict()
        body = {"kind": "original", "m": orig.m, "C1": orig.C1, "C2": orig.C2}
    else:
        spec = validate_ifs(IfsSpec.from_dict(doc))
        cfg["spec_doc"] = spec.to_dict()
        sup = support_interval(spec)
        w = aggregate_weights(spec)
        body = {
            "kind": "ifs",
            "d": spec.d,
            "B1": spec.B1,
            "B2": spec.B2,
            "ek_normalized": spec.ek_normalized,
            "support": [sup.lo, sup.hi],
            "weights": list(w.p),
            "p_min": w.p_min,
        }
    fh.write(dump_json({"config": embedded(cfg, "validate"), "valid": True, **body}))


def cmd_ft(cfg: dict, fh) -> None:
    spec = _load_ifs(cfg)
    ts = _floats(cfg["t"])
    vals, bounds = ft_lattice_many(spec, ts, float(cfg["tol"]))
    if cfg["format"] == "csv":
        fh.write(f"# config: {json.dumps(_clean(embedded(cfg, 'ft')), sort_keys=True)}\n")
        fh.write("t,re,im,abs,error_bound\n")
        for t, v, b in zip(ts, vals, bounds):
            v = complex(v)
            fh.write(f"{t!r},{v.real!r},{v.imag!r},{abs(v)!r},{float(b)!r}\n")
        return
    rows = [{"t": t, "re": complex(v).real, "im": complex(v).imag, "abs": abs(complex(v)),
             "error_bound": float(b)} for t, v, b in zip(ts, vals, bounds)]
    fh.write(dump_json({"config": embedded(cfg, "ft"), "values": rows}))


def cmd_decay(cfg: dict, fh) -> None:
    spec = _load_ifs(cfg)
    N0 = _positive_int(cfg, "N0")
    N1 = _positive_int(cfg, "N1")
    grid = _positive_int(cfg, "grid", 16)
    if N1 < N0:
        raise ValidationError(f"need N0 <= N1, got {N0} > {N1}")
    curve = decay_scan(spec, N0, N1, grid, float(cfg["tol"]), cfg["threads"])
    if cfg["format"] == "csv":
        write_decay_csv(curve, fh, json.dumps(_clean(embedded(cfg, "decay")), sort_keys=True))
        return
    fh.write(dump_json({
        "config": embedded(cfg, "decay"),
        "B1": curve.B1,
        "blocks": [[b.N, b.argmax_t, b.sup_abs, r] for b, r in zip(curve.blocks, curve.alpha_running)],
        "columns": ["N", "t_argmax", "sup_abs", "alpha_hat_running"],
        "alpha_hat": curve.alpha_hat,
        "fit_residual": curve.fit_residual,
    }))


def cmd_reduce(cfg: dict, fh) -> None:
    _require(cfg, "spec")
    orig = OriginalIfsSpec.from_dict(_read_json(cfg["spec"], "spec"))
    cfg["spec_doc"] = orig.to_dict()
    if cfg.get("s") is None and cfg.get("ell") is None:
        raise ValidationError("reduce needs --s or --ell")
    reduced, params = reduce_ifs(orig, cfg.get("s"), cfg.get("ell"), bool(cfg.get("merge_equal_ratios")))
    fh.write(dump_json({
        "config": embedded(cfg, "reduce"),
        "spec": reduced.spec.to_dict(),
        "provenance": {**reduced.provenance(), "m": params.m, "C1": params.C1, "C2": params.C2,
                       "epsilon": params.epsilon, "binomial_d": params.d},
    }))


def _k1_from(cfg: dict, spec: IfsSpec) -> int:
    if cfg.get("k1") is not None:
        return _positive_int(cfg, "k1")
    if cfg.get("s") is None:
        raise ValidationError("need --k1, or --s to derive k1 from the cover-count rate")
    k1 = choose_k1(constants_of(spec.B1, spec.B2, spec.d, float(cfg["s"])))
    cfg["k1"] = k1
    return k1


def cmd_ek_scan(cfg: dict, fh) -> None:
    spec = _load_ifs(cfg)
    k1 = _k1_from(cfg, spec)
    N = _positive_int(cfg, "N")
    grid = _positive_int(cfg, "grid")
    trials = _positive_int(cfg, "trials")
    seed = int(cfg["seed"])
    p = aggregate_weights(spec).p
    reports = exceptional_scan(spec, N, k1, cfg.get("rho"), grid,
                               lambda k: sample_word(p, N, (seed, k)), trials, cfg["threads"])
    write_scan_jsonl(reports, fh, _clean(embedded(cfg, "ek-scan")))


def cmd_diagnose(cfg: dict, fh) -> None:
    spec = _load_ifs(cfg)
    N = _positive_int(cfg, "N", 4)
    trials = _positive_int(cfg, "trials")
    seed = int(cfg["seed"])
    B1 = float(spec.B1)
    fixed_t = cfg.get("t")
    t = float(fixed_t) if fixed_t is not None else B1 ** (N - 0.5)
    weights = aggregate_weights(spec)
    batch = sample_path_processes(spec, t, cfg.get("rho"), N, trials, seed, cfg["threads"])
    out: dict[str, Any] = {
        "config": embedded(cfg, "diagnose"),
        "weights": list(weights.p),
        "t": t,
        "p_min": weights.p_min,
        "Z": [submartingale_check(batch, r).to_dict() for r in range(spec.d)],
        "U": martingale_check(batch, weights).to_dict(),
        "invariant_Y_le_X": bool((batch.Y <= batch.X[:, 0, :]).all()),
    }
    if cfg.get("k1") is not None:
        k1 = _positive_int(cfg, "k1")
        params = delta_chain(spec.d, k1, weights.p_min, weights.p1)
        out["delta_chain"] = {"delta_r": list(params.delta_r), "delta": params.delta}
        out["azuma_rhs"] = [azuma_rhs(params.delta_r[r + 1], weights.p_min, N) for r in range(spec.d)]
        if cfg.get("tail_N") is not None:
            Ns = _ints(cfg["tail_N"])
            t_of = (lambda n: B1 ** (n - 0.5)) if fixed_t is None else float(fixed_t)
            report = tail_estimate(spec, t_of,
                                   cfg.get("rho"), weights, Ns, params.delta, trials, seed, cfg["threads"])
            out["tail"] = report.to_dict()
    fh.write(dump_json(out))


def cmd_bounds(cfg: dict, fh) -> None:
    _require(cfg, "B1", "B2", "d", "s")
    consts = constants_of(float(cfg["B1"]), float(cfg["B2"]), cfg["d"], float(cfg["s"]))
    k1 = _positive_int(cfg, "k1") if cfg.get("k1") is not None else None
    cert = certificate(consts, k1, _positive_int(cfg, "N_max", 2))
    cert["rho_fraction"] = str(consts.rho_exact)
    cert["A_fraction"] = str(consts.A_exact)
    fh.write(dump_json({"config": embedded(cfg, "bounds"), **cert}))


COMMANDS = {
    "validate": cmd_validate,
    "ft": cmd_ft,
    "decay": cmd_decay,
    "reduce": cmd_reduce,
    "ek-scan": cmd_ek_scan,
    "diagnose": cmd_diagnose,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssmf", description="Fourier analysis of self-similar measures.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, spec: bool = True) -> None:
        p.add_argument("--config", help="JSON file of parameters; explicit flags override it")
        if spec:
            p.add_argument("--spec", help="IFS spec JSON file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", help="output format")
        p.add_argument("--threads", type=int, help="worker cap (default: $SSMF_THREADS or CPU count)")

    p = sub.add_parser("validate", help="check a spec and print its derived data")
    common(p)

    p = sub.add_parser("ft", help="evaluate the Fourier transform")
    common(p)
    p.add_argument("--t", help="frequency or comma-separated list")
    p.add_argument("--tol", type=float)

    p = sub.add_parser("decay", help="block sups of |mu^| and the fitted exponent")
    common(p)
    p.add_argument("--N0", type=int)
    p.add_argument("--N1", type=int)
    p.add_argument("--grid", type=int, help="grid points per block")
    p.add_argument("--tol", type=float)

    p = sub.add_parser("reduce", help="iterate a general IFS into reduced form")
    common(p)
    p.add_argument("--s", type=float, help="dimension parameter fixing the iterate level")
    p.add_argument("--ell", type=int, help="iterate level (overrides --s)")
    p.add_argument("--merge-equal-ratios", action="store_const", const=True, default=None,
                   dest="merge_equal_ratios")

    p = sub.add_parser("ek-scan", help="search for exceptional-set witnesses")
    common(p)
    p.add_argument("--N", type=int)
    p.add_argument("--k1", type=int)
    p.add_argument("--s", type=float, help="derive k1 from the rate when --k1 is absent")
    p.add_argument("--rho", type=float)
    p.add_argument("--grid", type=int, help="t grid points in the block")
    p.add_argument("--trials", type=int, help="sampled words")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("diagnose", help="martingale checks and tail estimates")
    common(p)
    p.add_argument("--N", type=int)
    p.add_argument("--t", type=float, help="frequency (default: B1**(N - 1/2))")
    p.add_argument("--rho", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--k1", type=int, help="enables the delta chain and tail estimate")
    p.add_argument("--tail-N", dest="tail_N", help="comma-separated N values for the tail estimate")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("bounds", help="explicit constants and cover-sum certificate")
    common(p, spec=False)
    p.add_argument("--B1", type=float)
    p.add_argument("--B2", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--k1", type=int)
    p.add_argument("--N-max", dest="N_max", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        buf = io.StringIO()
        COMMANDS[args.command](cfg, buf)
        with _output(cfg.get("out")) as fh:
            fh.write(buf.getvalue())
    except ValidationError as exc:
        print(f"ssmf {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericGuard as exc:
        print(f"ssmf {args.command}: numeric guard: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
