"""Command-line surface.

Subcommands: search, cost, train, eval, arch, gradcheck. Data goes to
stdout, diagnostics to stderr; exit code 2 means the configuration was
rejected before any compute, 3 means a runtime abort. Every place
randomness exists takes --seed. Flag values beat config-file values
beat defaults; config files are plain ``key=value`` lines using the
long flag names (without the leading dashes).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import archspec, checkpoint, costmodel
from .config import (
    CostQuery,
    EvalConfig,
    GumbelConfig,
    ModelConfig,
    SearchHyperparams,
    SearchSchedule,
)
from .data import build_vocab
from .errors import ConfigError, ParseError, TrainingAbort
from .gradsuite import TOLERANCE, run_suite
from .lm import evaluate, train_fixed
from .search import run_search, write_reports

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_MODEL_DEFAULTS = ModelConfig()
_SEARCH_DEFAULTS = SearchSchedule()
_HYPER_DEFAULTS = SearchHyperparams()
_GUMBEL_DEFAULTS = GumbelConfig()


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


class Resolver:
    """flags > config file > defaults, with unknown config keys rejected."""

    def __init__(self, args: argparse.Namespace, defaults: dict):
        self.args = vars(args)
        self.defaults = defaults
        self.file_values = {}
        if self.args.get("config"):
            self.file_values = read_config_file(self.args["config"])
            unknown = set(self.file_values) - set(defaults)
            if unknown:
                raise ConfigError(
                    f"unknown config keys: {', '.join(sorted(unknown))}"
                )

    def get(self, key: str):
        flag = self.args.get(key.replace("-", "_"))
        if flag is not None:
            return flag
        if key in self.file_values:
            default = self.defaults[key]
            raw = self.file_values[key]
            if isinstance(default, bool):
                return raw.lower() in ("1", "true", "yes")
            if isinstance(default, int):
                return int(raw)
            if isinstance(default, float):
                return float(raw)
            return raw
        return self.defaults[key]


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-model", type=int, help="hidden size")
    p.add_argument("--n-head", type=int, help="attention heads")
    p.add_argument("--d-head", type=int, help="size per head")
    p.add_argument("--d-inner", type=int, help="feed-forward hidden size")
    p.add_argument("--tgt-len", type=int, help="tokens predicted per segment")
    p.add_argument("--mem-len", type=int, help="cached tokens from previous segments")
    p.add_argument("--clamp-len", type=int, help="max relative distance for position bias")
    p.add_argument("--dropout", type=float, help="dropout probability")


_MODEL_KEYS = ("d-model", "n-head", "d-head", "d-inner", "tgt-len",
               "mem-len", "clamp-len", "dropout")


def _model_defaults(overrides: dict | None = None) -> dict:
    base = {k: getattr(_MODEL_DEFAULTS, k.replace("-", "_")) for k in _MODEL_KEYS}
    if overrides:
        base.update(overrides)
    return base


def _model_config(r: Resolver, n_layers: int, vocab_size: int) -> ModelConfig:
    return ModelConfig(
        d_model=r.get("d-model"),
        n_head=r.get("n-head"),
        d_head=r.get("d-head"),
        d_inner=r.get("d-inner"),
        tgt_len=r.get("tgt-len"),
        mem_len=r.get("mem-len"),
        clamp_len=r.get("clamp-len"),
        dropout=r.get("dropout"),
        vocab_size=vocab_size,
        n_layers=n_layers,
    ).validate()


def _load_corpus(path: str, vocab_mode: str):
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read data file: {e}") from None
    if not text:
        raise ConfigError(f"data file {path} is empty")
    vocab = build_vocab(text, vocab_mode)
    return vocab, vocab.encode(text)


def cmd_search(args: argparse.Namespace) -> int:
    defaults = _model_defaults({
        "d-model": 48, "n-head": 2, "d-head": 24, "d-inner": 128,
        "tgt-len": 16, "mem-len": 16, "clamp-len": 16, "dropout": 0.0,
    })
    defaults.update({
        "layers": 8,
        "steps": _SEARCH_DEFAULTS.total_steps,
        "warmup": -1,
        "epoch-steps": _SEARCH_DEFAULTS.epoch_steps,
        "arch-fraction": _SEARCH_DEFAULTS.arch_fraction,
        "snapshot-every": _SEARCH_DEFAULTS.snapshot_every,
        "batch": 32,
        "weight-lr": _HYPER_DEFAULTS.weight_lr,
        "arch-lr": _HYPER_DEFAULTS.arch_lr,
        "weight-weight-decay": _HYPER_DEFAULTS.weight_weight_decay,
        "arch-weight-decay": _HYPER_DEFAULTS.arch_weight_decay,
        "optimizer": _HYPER_DEFAULTS.optimizer,
        "tau-start": _GUMBEL_DEFAULTS.tau_start,
        "tau-end": _GUMBEL_DEFAULTS.tau_end,
    })
    r = Resolver(args, defaults)
    vocab, ids = _load_corpus(args.data, args.vocab_mode)
    config = _model_config(r, n_layers=r.get("layers"), vocab_size=vocab.size)
    warmup = r.get("warmup")
    schedule = SearchSchedule(
        total_steps=r.get("steps"),
        warmup_steps=None if warmup < 0 else warmup,
        epoch_steps=r.get("epoch-steps"),
        arch_fraction=r.get("arch-fraction"),
        snapshot_every=r.get("snapshot-every"),
    ).validate()
    hyper = SearchHyperparams(
        batch_size=r.get("batch"),
        arch_lr=r.get("arch-lr"),
        arch_weight_decay=r.get("arch-weight-decay"),
        weight_lr=r.get("weight-lr"),
        weight_weight_decay=r.get("weight-weight-decay"),
        optimizer=r.get("optimizer"),
    ).validate()
    gumbel = GumbelConfig(tau_start=r.get("tau-start"), tau_end=r.get("tau-end")).validate()

    _log(f"search: vocab={vocab.size} tokens={ids.size} layers={config.n_layers} "
         f"steps={schedule.total_steps} seed={args.seed}")
    result = run_search(ids, config, schedule, hyper, args.seed, gumbel)
    report_path, csv_path = write_reports(result, args.out, args.seed)
    _log(f"search: wrote {report_path} and {csv_path} "
         f"(converged={result.converged}, steps={result.steps_run})")
    stripped = archspec.compact(result.final_spec)
    print(archspec.format(stripped) if len(stripped) else "")
    return 0


def cmd_cost(args: argparse.Namespace) -> int:
    defaults = _model_defaults()
    defaults.update({
        "tgt-len": CostQuery().tgt_len,   # cost defaults are inference shapes
        "mem-len": CostQuery().mem_len,
        "batch": CostQuery().batch_size,
        "vocab-size": _MODEL_DEFAULTS.vocab_size,
        "cached-kv": False,
        "format": "csv",
    })
    r = Resolver(args, defaults)
    specs = [archspec.parse(a) for a in args.arch]
    config = ModelConfig(
        d_model=r.get("d-model"),
        n_head=r.get("n-head"),
        d_head=r.get("d-head"),
        d_inner=r.get("d-inner"),
        tgt_len=r.get("tgt-len"),
        mem_len=r.get("mem-len"),
        clamp_len=r.get("clamp-len"),
        dropout=r.get("dropout"),
        vocab_size=r.get("vocab-size"),
        n_layers=max(len(s) for s in specs),
    ).validate()
    query = CostQuery(
        tgt_len=r.get("tgt-len"), mem_len=r.get("mem-len"), batch_size=r.get("batch")
    ).validate()
    cached = r.get("cached-kv")
    rows = []
    base_gflops = None
    for spec in specs:
        report = costmodel.analyze(spec, config, query, cached)
        counts = archspec.count_blocks(spec)
        gflops = report.block_flops / 1e9
        if base_gflops is None:
            base_gflops = gflops
        rows.append({
            "arch": archspec.format(spec),
            "n_attn": counts.n_attention,
            "n_ff": counts.n_ff,
            "params": report.total_params,
            "gflops": gflops,
            "ratio": gflops / base_gflops if base_gflops else float("nan"),
            "softmax_gflops": report.softmax_flops / 1e9,
            "total_gflops": report.total_flops / 1e9,
        })
    if r.get("format") == "json":
        print(json.dumps({"schema": 1, "query": dataclasses.asdict(query),
                          "rows": rows}, sort_keys=True, indent=1))
    else:
        print("arch,n_attn,n_ff,params,gflops,ratio")
        for row in rows:
            print(f"\"{row['arch']}\",{row['n_attn']},{row['n_ff']},"
                  f"{row['params']},{row['gflops']:.6g},{row['ratio']:.6g}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    defaults = _model_defaults({
        "d-model": 48, "n-head": 2, "d-head": 24, "d-inner": 128,
        "tgt-len": 16, "mem-len": 16, "clamp-len": 16, "dropout": 0.0,
    })
    defaults.update({"steps": 1000, "batch": 16, "lr": 1e-2,
                     "weight-decay": 0.0, "optimizer": "sgd"})
    r = Resolver(args, defaults)
    spec = archspec.compact(archspec.parse(args.arch))
    vocab, ids = _load_corpus(args.data, args.vocab_mode)
    config = _model_config(r, n_layers=len(spec), vocab_size=vocab.size)
    _log(f"train: arch={archspec.format(spec)} vocab={vocab.size} "
         f"tokens={ids.size} steps={r.get('steps')} seed={args.seed}")
    result = train_fixed(
        spec, ids, config, steps=r.get("steps"), seed=args.seed,
        batch_size=r.get("batch"), lr=r.get("lr"),
        weight_decay=r.get("weight-decay"), optimizer=r.get("optimizer"),
    )
    if args.out:
        checkpoint.save_model(result.model, args.out)
        _log(f"train: wrote checkpoint {args.out}")
    curve = result.loss_curve
    print(json.dumps({
        "schema": 1,
        "arch": archspec.format(spec),
        "steps": len(curve),
        "first_loss": curve[0] if curve else None,
        "final_loss": curve[-1] if curve else None,
        "checkpoint": args.out,
    }, sort_keys=True))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    defaults = {"tgt-len": 64, "mem-len": 640, "clamp-len": 400, "batch": 8}
    r = Resolver(args, defaults)
    model = checkpoint.load_model(args.checkpoint)
    vocab, ids = _load_corpus(args.data, args.vocab_mode)
    if vocab.size > model.config.vocab_size:
        raise ConfigError(
            f"eval vocabulary ({vocab.size}) exceeds model vocabulary "
            f"({model.config.vocab_size})"
        )
    eval_config = EvalConfig(
        tgt_len=r.get("tgt-len"),
        mem_len=r.get("mem-len"),
        clamp_len=min(r.get("clamp-len"), model.config.clamp_len),
        batch_size=r.get("batch"),
    )
    report = evaluate(model, ids, eval_config)
    payload = {"schema": 1}
    payload.update(report.to_dict())
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_arch(args: argparse.Namespace) -> int:
    spec = archspec.parse(args.spec)
    if args.verb == "parse":
        print(json.dumps({
            "schema": 1,
            "length": len(spec),
            "blocks": "".join(k.value for k in spec),
        }, sort_keys=True))
    elif args.verb == "format":
        print(archspec.format(spec))
    else:  # count
        counts = archspec.count_blocks(spec)
        print(json.dumps({
            "schema": 1,
            "n_attention": counts.n_attention,
            "n_ff": counts.n_ff,
            "n_identity": counts.n_identity,
            "total": counts.total,
        }, sort_keys=True))
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    n_seeds = 100 if args.all else args.seeds
    worst = run_suite(n_seeds=n_seeds, seed0=args.seed)
    failed = {k: v for k, v in worst.items() if v >= TOLERANCE}
    for name in sorted(worst):
        status = "FAIL" if name in failed else "ok"
        print(f"{name},{worst[name]:.3e},{status}")
    if failed:
        _log(f"gradcheck: {len(failed)} case(s) at or above {TOLERANCE:g}")
        return EXIT_RUNTIME
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blocksearch",
        description="Differentiable search over transformer block layouts, "
                    "plus cost analysis and desk-scale LM training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="key=value config file (flags win)")
        p.add_argument("--threads", type=int, default=1,
                       help="reserved for batch sharding; execution is "
                            "currently single-shard")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("search", help="run the two-stage architecture search")
    p.add_argument("--data", required=True, help="UTF-8 text corpus")
    p.add_argument("--vocab-mode", choices=("char", "word"), default="char")
    p.add_argument("--layers", type=int, help="supernet depth")
    p.add_argument("--steps", type=int, help="total optimization steps")
    p.add_argument("--warmup", type=int, help="weight-only steps (default 25%% of total)")
    p.add_argument("--epoch-steps", type=int)
    p.add_argument("--arch-fraction", type=float)
    p.add_argument("--snapshot-every", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--weight-lr", type=float)
    p.add_argument("--arch-lr", type=float)
    p.add_argument("--weight-weight-decay", type=float)
    p.add_argument("--arch-weight-decay", type=float)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--tau-start", type=float)
    p.add_argument("--tau-end", type=float)
    p.add_argument("--out", default="search_out", help="report directory")
    _add_model_flags(p)
    common(p)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("cost", help="analytic parameter/FLOP table")
    p.add_argument("--arch", action="append", required=True,
                   help="architecture string; repeat to compare")
    p.add_argument("--batch", type=int, help="sequences per query")
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--cached-kv", action="store_const", const=True,
                   help="assume cached memory keys/values (marginal cost)")
    p.add_argument("--format", choices=("csv", "json"))
    _add_model_flags(p)
    common(p, seed=False)
    p.set_defaults(fn=cmd_cost)

    p = sub.add_parser("train", help="train a fixed architecture")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab-mode", choices=("char", "word"), default="char")
    p.add_argument("--arch", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--out", help="checkpoint path to write")
    _add_model_flags(p)
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab-mode", choices=("char", "word"), default="char")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tgt-len", type=int)
    p.add_argument("--mem-len", type=int)
    p.add_argument("--clamp-len", type=int)
    p.add_argument("--batch", type=int)
    common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("arch", help="parse / format / count architecture strings")
    p.add_argument("verb", choices=("parse", "format", "count"))
    p.add_argument("spec")
    p.set_defaults(fn=cmd_arch)

    p = sub.add_parser("gradcheck", help="finite-difference oracle suite")
    p.add_argument("--all", action="store_true", help="full 100-seed sweep")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        _log("error: --threads must be >= 1")
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except ParseError as e:
        _log(f"error: {e}")
        return EXIT_CONFIG
    except ConfigError as e:
        _log(f"error: {e}")
        return EXIT_CONFIG
    except TrainingAbort as e:
        _log(f"abort: {e}")
        return EXIT_RUNTIME
    except OSError as e:
        _log(f"error: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
