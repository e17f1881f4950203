"""``sendees`` command line: score, bench, sei, send-sim.

Exit codes:

    0  success
    1  scoring or other runtime error
    2  usage error
    3  I/O error (missing or unreadable input, unwritable output)
    4  malformed snapshot or manifest
    5  iteration did not converge
    6  training diverged
    7  invalid config
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import io as sio
from .bench import BenchGrid, run_bench
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DivergenceError,
    ManifestError,
    SendeesError,
    SnapshotError,
)
from .scores import DEFAULT_ALPHA, EesConfig, efficient_eigenscore, exact_eigenscore
from .send import SenDConfig, compare_runs, normal_loop, send_loop
from .sensitivity import average_variability, select_sensitive, variability
from .toymodel import ToyModelConfig, generate_corpus

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_CONVERGENCE = 5
EXIT_DIVERGENCE = 6
EXIT_CONFIG = 7

SEED_ENV = "SENDEES_SEED"

log = logging.getLogger("sendees")

_number = {"type": "number"}
_count = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "send": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "delta": _number,
                "T": {"type": "integer", "minimum": 2},
                "k_percent": {"type": "number", "minimum": 0, "exclusiveMaximum": 100},
                "alpha_split": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 100},
                "max_checkpoints": _count,
                "gen_temperature": {"type": "number", "exclusiveMinimum": 0},
                "gen_count": {"type": "integer", "minimum": 2},
                "gen_length": _count,
                "prompt_length": _count,
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
                "ees": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "moments": {"type": "integer", "minimum": 0},
                        "trace_samples": _count,
                        "quad_points": _count,
                        "lambda_floor": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-3},
                        "power_tol": {"type": "number", "exclusiveMinimum": 0},
                        "power_max_iter": _count,
                        "power_block": _count,
                        "scale_margin": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                        "seed": {"type": "integer"},
                        "probe": {"enum": ["gaussian", "rademacher"]},
                    },
                },
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "vocab": {"type": "integer", "minimum": 2},
                "context": _count,
                "embed_dim": _count,
                "hidden_layers": _count,
                "hidden_width": _count,
                "token_dim": _count,
                "learning_rate": {"type": "number", "minimum": 0},
                "batch_size": _count,
                "init_seed": {"type": "integer"},
            },
        },
        "corpus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_sequences": _count,
                "length": {"type": "integer", "minimum": 2},
                "n_grammars": _count,
                "noise": {"type": "number", "minimum": 0, "maximum": 1},
                "seed": {"type": "integer"},
            },
        },
    },
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{SEED_ENV}={raw!r} is not an integer", EXIT_USAGE) from None


def _resolve_seed(flag):
    if flag is not None:
        return flag
    env = default_seed()
    return 0 if env is None else env


def _write_json(path, obj):
    try:
        sio.write_json(path, obj)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def cmd_score(args):
    path = Path(args.input)
    if not path.is_file():
        raise CliError(f"input file not found: {path}", EXIT_IO)
    E = sio.read_snapshot(path)
    cfg = EesConfig(moments=args.moments, trace_samples=args.trace_samples,
                    quad_points=args.quad_points, lambda_floor=args.floor,
                    seed=_resolve_seed(args.seed))
    reports = []
    if args.method in ("exact", "both"):
        reports.append(exact_eigenscore(E, args.alpha).to_dict())
    if args.method in ("ees", "both"):
        reports.append(efficient_eigenscore(E, cfg).to_dict())
    _write_json(args.output, {"input": str(path), "reports": reports})
    return EXIT_OK


def cmd_bench(args):
    grid = BenchGrid(rows=args.rows, cols=args.cols, moments=args.moments,
                     repeats=args.repeats, seed=_resolve_seed(args.seed), warmup=args.warmup)

    def progress(row):
        log.info("%dx%d M=%d exact=%s ees=%s", row["rows"], row["cols"], row["M"],
                 row["exact_seconds"], row["ees_seconds"])

    rows = run_bench(grid, progress)
    try:
        sio.write_bench_csv(args.output, rows)
    except OSError as exc:
        raise CliError(f"cannot write {args.output}: {exc}", EXIT_IO) from exc
    return EXIT_OK


def cmd_sei(args):
    path = Path(args.manifest)
    if not path.is_file():
        raise CliError(f"manifest not found: {path}", EXIT_IO)
    series = sio.read_manifest(path)
    V = [variability(s, args.window) for s in series]
    V_avg = average_variability(V)
    profile = select_sensitive(V_avg, args.k_percent, args.window)
    warnings = []
    if not np.any(V_avg):
        warnings.append("degenerate variability: all indices have V = 0, selection follows the tie rule")
        log.warning(warnings[-1])
    _write_json(args.output, {
        "window": args.window,
        "k_percent": args.k_percent,
        "datapoints": [{"id": s.datapoint_id, "variability": v.tolist()}
                       for s, v in zip(series, V)],
        "average_variability": V_avg.tolist(),
        "selected": profile.selected.tolist(),
        "warnings": warnings,
    })
    return EXIT_OK


def load_sim_config(path):
    """Parse a send-sim config; returns ``(SenDConfig, ToyModelConfig, corpus kwargs, seeds)``."""
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: at {where}: {exc.message}") from exc
    send_doc = dict(doc.get("send", {}))
    ees = EesConfig(**send_doc.pop("ees", {}))
    try:
        send_cfg = SenDConfig(ees=ees, **send_doc)
        model_cfg = ToyModelConfig(**doc.get("model", {}))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    seeds = doc.get("seeds")
    if seeds is None and "seed" in send_doc:
        seeds = [send_doc["seed"]]
    return send_cfg, model_cfg, dict(doc.get("corpus", {})), seeds


def cmd_send_sim(args):
    send_cfg, model_cfg, corpus_kw, seeds = load_sim_config(args.config)
    if args.seed is not None:
        seeds = [args.seed]
    elif seeds is None:
        seeds = [_resolve_seed(None)]
    corpus = generate_corpus(vocab=model_cfg.vocab, **corpus_kw)
    out = Path(args.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out}: {exc}", EXIT_IO) from exc

    comparisons = []
    for seed in seeds:
        cfg = send_cfg.replace(seed=seed)
        mcfg = ToyModelConfig(**{**model_cfg.to_dict(), "init_seed": seed})
        logs = {}
        if args.mode in ("send", "both"):
            logs["send"] = send_loop(cfg, mcfg, corpus)
        if args.mode in ("normal", "both"):
            logs["normal"] = normal_loop(cfg, mcfg, corpus)
        for mode, run in logs.items():
            sio.write_run_log(out / f"{mode}_seed{seed}.jsonl", run)
            _write_json(out / f"{mode}_seed{seed}_summary.json", run.summary())
        if args.mode == "both":
            comp = {"seed": seed, **compare_runs(logs["send"], logs["normal"])}
            comparisons.append(comp)
            _write_json(out / f"comparison_seed{seed}.json", comp)
    if comparisons:
        reductions = [c["ees_variance_reduction"] for c in comparisons]
        _write_json(out / "comparison.json", {
            "seeds": list(seeds),
            "per_seed": comparisons,
            "mean_ees_variance_reduction": float(np.mean(reductions)),
            "pairs_with_lower_send_variance": int(sum(r > 0 for r in reductions)),
            "mean_final_ees_difference": float(np.mean([c["final_ees_difference"]
                                                        for c in comparisons])),
        })
    return EXIT_OK


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="sendees", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score one EMB1 generation matrix")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--method", choices=("exact", "ees", "both"), default="both")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--moments", "-M", type=int, default=20)
    p.add_argument("--trace-samples", type=int, default=32)
    p.add_argument("--quad-points", type=int, default=2048)
    p.add_argument("--floor", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bench", help="time exact EigenScore against EES")
    p.add_argument("--rows", type=_int_list, default=[1000])
    p.add_argument("--cols", type=_int_list, default=[1000])
    p.add_argument("--moments", type=_int_list, default=[20])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sei", help="sensitive embedding indices from a checkpoint manifest")
    p.add_argument("--manifest", "-m", required=True)
    p.add_argument("--window", "-C", type=int, default=2)
    p.add_argument("--k-percent", "-k", type=float, default=20.0)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_sei)

    p = sub.add_parser("send-sim", help="run SenD and/or baseline training on the toy model")
    p.add_argument("--config", "-c", default=None)
    p.add_argument("--mode", choices=("send", "normal", "both"), default="both")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output-dir", "-o", required=True)
    p.set_defaults(func=cmd_send_sim)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except (SnapshotError, ManifestError) as exc:
        code, msg = EXIT_FORMAT, str(exc)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, str(exc)
    except ConvergenceError as exc:
        code, msg = EXIT_CONVERGENCE, str(exc)
    except DivergenceError as exc:
        code, msg = EXIT_DIVERGENCE, str(exc)
    except OSError as exc:
        code, msg = EXIT_IO, str(exc)
    except (SendeesError, ValueError, ArithmeticError) as exc:
        code, msg = EXIT_ERROR, str(exc)
    print(f"sendees {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
