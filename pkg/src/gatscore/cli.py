"""Operator command line: ingest, train, eval, gradcheck, gen-synth.

Option precedence is CLI flag > config file > TRANSGAT_SEED env var (seed
only) > built-in default. The config file uses key=value sections
([train], [model], [synth]). Exit codes: 0 success, 1 internal fault,
2 bad input.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import traceback
from pathlib import Path
from typing import Callable, Optional, TypeVar

import numpy as np

from . import autograd as ag
from .checkpoint import read_checkpoint
from .conllu import conllu_to_record, split_documents
from .data import InputError, TRAIT_NAMES, read_scores_csv, validate_record, write_essays_jsonl
from .graphs import batch_graphs
from .model import GatConfig, init_model_params
from .synth import SynthConfig, gen_synthetic, write_synth_dataset
from .train import (TrainConfig, evaluate_split, fit, history_to_csv, load_dataset_dir,
                    model_forward)

EXIT_OK = 0
EXIT_FAULT = 1
EXIT_INPUT = 2

SEED_ENV_VAR = "TRANSGAT_SEED"

T = TypeVar("T")


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {text!r}")


def _load_config(path: Optional[str]) -> Optional[configparser.ConfigParser]:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {path}")
    cfg = configparser.ConfigParser()
    try:
        cfg.read_string(p.read_text(encoding="utf-8"))
    except configparser.Error as exc:
        raise InputError(f"{path}: {exc}") from exc
    return cfg


def _resolve(cli_value: Optional[T], cfg: Optional[configparser.ConfigParser],
             section: str, key: str, cast: Callable[[str], T], default: T,
             env_var: Optional[str] = None) -> T:
    if cli_value is not None:
        return cli_value
    if cfg is not None and cfg.has_option(section, key):
        try:
            return cast(cfg.get(section, key))
        except (ValueError, InputError) as exc:
            raise InputError(f"config [{section}] {key}: {exc}") from exc
    if env_var is not None:
        raw = os.environ.get(env_var)
        if raw:
            try:
                return cast(raw)
            except (ValueError, InputError) as exc:
                raise InputError(f"env {env_var}: {exc}") from exc
    return default


def _resolve_seed(cli_value: Optional[int], cfg, section: str) -> int:
    return _resolve(cli_value, cfg, section, "seed", int, 0, env_var=SEED_ENV_VAR)


def _gat_config(args, cfg) -> GatConfig:
    return GatConfig(
        num_layers=_resolve(args.num_layers, cfg, "model", "num_layers", int, 2),
        num_heads=_resolve(args.num_heads, cfg, "model", "num_heads", int, 4),
        d_head=_resolve(args.d_head, cfg, "model", "d_head", int, 64),
        attention_slope=_resolve(args.attention_slope, cfg, "model", "attention_slope", float, 0.2),
        activation_slope=_resolve(args.activation_slope, cfg, "model", "activation_slope", float, 0.01),
    )


# --- subcommands --------------------------------------------------------------

def cmd_ingest(args) -> int:
    conllu_path = Path(args.conllu)
    if not conllu_path.is_file():
        raise InputError(f"CoNLL-U file not found: {conllu_path}")
    text = conllu_path.read_text(encoding="utf-8")
    scores = read_scores_csv(args.scores)

    docs = split_documents(text)
    if len(docs) == 1 and docs[0][0] == "":
        # No newdoc markers: a single essay whose id comes from the score table.
        if len(scores) != 1:
            raise InputError(
                f"{conllu_path}: no '# newdoc id' markers and {len(scores)} score rows; "
                "cannot infer the essay id")
        docs = [(next(iter(scores)), docs[0][1], docs[0][2])]

    records = []
    for doc_id, doc_text, offset in docs:
        record = conllu_to_record(doc_text, doc_id, line_offset=offset)
        if record.num_tokens == 0:
            raise InputError(f"{conllu_path}: essay {doc_id!r}: no sentences")
        if doc_id not in scores:
            raise InputError(f"no scores for essay id {doc_id!r}")
        records.append(conllu_to_record(doc_text, doc_id, gold=scores[doc_id],
                                        line_offset=offset))
    if not records:
        raise InputError(f"{conllu_path}: no sentences")

    problems = []
    for rec in records:
        problems.extend(f"{rec.id}: {v}" for v in validate_record(rec).violations)
    if problems:
        raise InputError("validation failures:\n  " + "\n  ".join(problems))

    write_essays_jsonl(records, args.out)
    unmatched = len(set(scores) - {r.id for r in records})
    print(f"wrote {len(records)} records to {args.out}")
    if unmatched:
        print(f"note: {unmatched} score rows had no matching essay")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    train_config = TrainConfig(
        batch_size=_resolve(args.batch_size, cfg, "train", "batch_size", int, 4),
        epochs=_resolve(args.epochs, cfg, "train", "epochs", int, 6),
        lr=_resolve(args.lr, cfg, "train", "lr", float, 1e-3),
        weight_decay=_resolve(args.weight_decay, cfg, "train", "weight_decay", float, 0.0),
        betas=(_resolve(args.beta1, cfg, "train", "beta1", float, 0.9),
               _resolve(args.beta2, cfg, "train", "beta2", float, 0.999)),
        eps=_resolve(args.eps, cfg, "train", "eps", float, 1e-8),
        scheduler=_resolve(args.scheduler, cfg, "train", "scheduler", str, "cosine"),
        seed=_resolve_seed(args.seed, cfg, "train"),
        freeze_essay_head=_resolve(args.freeze_essay_head, cfg, "train",
                                   "freeze_essay_head", _parse_bool, False),
    )
    gat_config = _gat_config(args, cfg)

    train_split = load_dataset_dir(args.data, "train")
    val_split = load_dataset_dir(args.val, "validation")
    try:
        result = fit(train_split, val_split, train_config, gat_config)
    except ValueError as exc:
        raise InputError(str(exc)) from exc

    out_path = Path(args.out)
    out_path.write_bytes(result.best_checkpoint_bytes)
    history_path = Path(args.history) if args.history else Path(str(out_path) + ".history.csv")
    history_path.write_text(history_to_csv(result.history), encoding="utf-8", newline="\n")

    final = result.history[-1]
    print(f"trained {train_config.epochs} epochs on {len(train_split)} essays")
    print(f"final train loss {final.train_loss:.6f}")
    print(f"best val avg QWK {result.best_val_qwk:.4f} at epoch {result.best_epoch}")
    print(f"checkpoint: {out_path}")
    print(f"history: {history_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    split = load_dataset_dir(args.data, "test")
    checkpoint = read_checkpoint(args.ckpt)
    try:
        report = evaluate_split(split, checkpoint)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    print(report.to_json() if args.json else report.to_table())
    return EXIT_OK


def _gradcheck_model(seed: int):
    """Tiny double-precision model and loss closure for end-to-end gradcheck."""
    rng = np.random.default_rng(seed)
    config = GatConfig(num_layers=2, num_heads=4, d_head=4)
    d_in = 8
    num_nodes = 6

    deps = [(-1, 0)] + [(int(rng.integers(0, k)), k) for k in range(1, num_nodes)]
    pairs = {(i, i) for i in range(num_nodes)}
    for head, dep in deps:
        if head >= 0:
            pairs.add((head, dep))
            pairs.add((dep, head))
    edges = np.array(sorted(pairs), dtype=np.int64)

    from .graphs import TokenGraph
    graph = TokenGraph(num_nodes=num_nodes, edges=edges,
                       node_features=rng.normal(size=(num_nodes, d_in)))
    batch = batch_graphs([graph])
    essay_vec = rng.normal(size=(1, d_in))
    target = ag.constant(rng.uniform(1.0, 5.0, size=(1, len(TRAIT_NAMES))))
    params = init_model_params(config, d_in, seed=seed)

    def loss_fn():
        y_hat, _, _, _ = model_forward(batch, essay_vec, params, config)
        return ag.mse(y_hat, target)

    return params, loss_fn


def cmd_gradcheck(args) -> int:
    seed = _resolve_seed(args.seed, None, "train")
    params, loss_fn = _gradcheck_model(seed)
    worst = 0.0
    for name, tensor in params.named_parameters():
        err = ag.finite_diff_check(loss_fn, [tensor])
        print(f"{name}: rel err {err:.3e}")
        worst = max(worst, err)
    print(f"max rel err {worst:.3e}")
    if worst <= 1e-4:
        print("gradcheck PASSED")
        return EXIT_OK
    print("gradcheck FAILED")
    return EXIT_FAULT


def cmd_gen_synth(args) -> int:
    cfg = _load_config(args.config)
    config = SynthConfig(
        num_essays=_resolve(args.n, cfg, "synth", "n", int, 64),
        min_tokens=_resolve(args.min_tokens, cfg, "synth", "min_tokens", int, 10),
        max_tokens=_resolve(args.max_tokens, cfg, "synth", "max_tokens", int, 30),
        dim=_resolve(args.dim, cfg, "synth", "dim", int, 16),
        seed=_resolve_seed(args.seed, cfg, "synth"),
        score_scale=_resolve(None, cfg, "synth", "score_scale", float, 1.0),
        token_noise=_resolve(None, cfg, "synth", "token_noise", float, 0.25),
        essay_noise=_resolve(None, cfg, "synth", "essay_noise", float, 0.01),
    )
    try:
        dataset = gen_synthetic(config)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    essays_path, embeddings_path, meta_path = write_synth_dataset(dataset, args.out)
    print(f"wrote {len(dataset.records)} essays to {essays_path}")
    print(f"wrote embeddings to {embeddings_path}")
    print(f"wrote metadata to {meta_path}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatscore",
        description="Graph-attention analytic essay scoring over dependency-parse graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert CoNLL-U parses plus a scores CSV to essay JSONL")
    p.add_argument("--conllu", required=True, help="CoNLL-U input file (essays split by '# newdoc id = X')")
    p.add_argument("--scores", required=True, help="CSV with header id,cohesion,...,conventions")
    p.add_argument("--out", required=True, help="output essays JSONL path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train the fused model and save the best checkpoint")
    p.add_argument("--data", required=True, help="training data directory (essays.jsonl + embeddings.tgeb)")
    p.add_argument("--val", required=True, help="validation data directory")
    p.add_argument("--out", required=True, help="output checkpoint path (TGMC)")
    p.add_argument("--history", help="history CSV path (default: <out>.history.csv)")
    p.add_argument("--config", help="key=value config file with [train]/[model] sections")
    p.add_argument("--lr", type=float, help="peak learning rate (default 1e-3)")
    p.add_argument("--batch-size", type=int, dest="batch_size", help="mini-batch size (default 4)")
    p.add_argument("--epochs", type=int, help="training epochs (default 6)")
    p.add_argument("--weight-decay", type=float, dest="weight_decay", help="decoupled weight decay (default 0)")
    p.add_argument("--beta1", type=float, help="AdamW beta1 (default 0.9)")
    p.add_argument("--beta2", type=float, help="AdamW beta2 (default 0.999)")
    p.add_argument("--eps", type=float, help="AdamW epsilon (default 1e-8)")
    p.add_argument("--scheduler", choices=["cosine", "constant"], help="LR schedule (default cosine)")
    p.add_argument("--seed", type=int, help=f"RNG seed (default 0; env {SEED_ENV_VAR})")
    p.add_argument("--freeze-essay-head", dest="freeze_essay_head", action="store_true",
                   default=None, help="keep the essay-stream head at its initial values")
    p.add_argument("--d-head", type=int, dest="d_head", help="per-head width (default 64)")
    p.add_argument("--num-heads", type=int, dest="num_heads", help="attention heads per layer (default 4)")
    p.add_argument("--num-layers", type=int, dest="num_layers", help="graph attention layers (default 2)")
    p.add_argument("--attention-slope", type=float, dest="attention_slope",
                   help="LeakyReLU slope inside attention logits (default 0.2)")
    p.add_argument("--activation-slope", type=float, dest="activation_slope",
                   help="LeakyReLU slope for feature activations (default 0.01)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a data directory with a checkpoint and report QWK")
    p.add_argument("--data", required=True, help="data directory (essays.jsonl + embeddings.tgeb)")
    p.add_argument("--ckpt", required=True, help="checkpoint path (TGMC)")
    p.add_argument("--json", action="store_true", help="emit JSON instead of the text table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model gradient")
    p.add_argument("--seed", type=int, help=f"RNG seed (default 0; env {SEED_ENV_VAR})")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-synth", help="generate a deterministic synthetic dataset")
    p.add_argument("--n", type=int, help="number of essays (default 64)")
    p.add_argument("--dim", type=int, help="embedding dimension (default 16)")
    p.add_argument("--seed", type=int, help=f"RNG seed (default 0; env {SEED_ENV_VAR})")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--min-tokens", type=int, dest="min_tokens", help="minimum tokens per essay (default 10)")
    p.add_argument("--max-tokens", type=int, dest="max_tokens", help="maximum tokens per essay (default 30)")
    p.add_argument("--config", help="key=value config file with a [synth] section")
    p.set_defaults(func=cmd_gen_synth)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        return EXIT_FAULT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
