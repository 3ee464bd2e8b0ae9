"""Command-line pipeline: corpus building, synthesis, training, generation,
retrieval, and evaluation.

Every command reads and writes only the files named by its flags, writes a
manifest (config hash, seed, input digests) next to its outputs, and exits
with a per-error-class code: 2 missing file, 3 config validation, 4 numerical
divergence, 5 data errors, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import fid as fid_mod
from . import metrics as metrics_mod
from .corpus import Corpus, IntentLabel, load_dataset, split_dataset
from .errors import AlignmentError, CitegenError, ConfigError, NumericalError
from .intent import (
    load_intent_model,
    make_intent_fn,
    placeholder_windows,
    save_intent_model,
    train_intent,
)
from .retrieval import retrieve_baseline, retrieve_oracle
from .synthetic import SynthSpec, generate_synthetic_corpus
from .tokenizer import build_vocab, decode, load_vocab, save_vocab

logger = logging.getLogger(__name__)

SPLIT_RATIOS = (0.8, 0.1, 0.1)  # fixed; split_dataset implements them


# ---------------------------------------------------------------------------
# Config file + manifest plumbing

def _load_config_file(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    cfg: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _merge(args: argparse.Namespace, cfg: dict[str, str], key: str, default, cast):
    """Flag wins over config file, config file over default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in cfg:
        raw = cfg[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes")
        return cast(raw)
    return default


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, options: dict, inputs: list[Path]) -> None:
    canon = json.dumps(options, sort_keys=True)
    manifest = {
        "command": command,
        "options": options,
        "config_hash": hashlib.sha256(canon.encode("utf-8")).hexdigest(),
        "inputs": {str(p): _digest(p) for p in sorted(set(inputs))},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"manifest-{command}.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _save_targets(instances, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps({"instance_id": inst.instance_id, "text": inst.target}) + "\n")


def _load_id_text(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                out[rec["instance_id"]] = rec["text"]
    return out


def _select_split(instances, split: str | None):
    if split is None or split == "all":
        return list(instances)
    return [inst for inst in instances if inst.split == split]


# ---------------------------------------------------------------------------
# Commands

def _cmd_synth(args) -> int:
    cfg = _load_config_file(args.config)
    n_single = _merge(args, cfg, "n_single", 50, int)
    n_multi = _merge(args, cfg, "n_multi", 10, int)
    seed = _merge(args, cfg, "seed", 0, int)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus, bodies, gold = generate_synthetic_corpus(SynthSpec(n_single, n_multi, seed))
    split_dataset(gold, seed)
    corpus_mod.save_documents(corpus.documents.values(), out_dir / "documents.jsonl")
    corpus_mod.save_bodies(bodies, out_dir / "bodies.jsonl")
    corpus_mod.save_key_table(corpus.key_table, out_dir / "key_table.tsv")
    corpus_mod.save_dataset(gold, out_dir / "gold.jsonl")
    _save_targets(gold, out_dir / "gold_targets.jsonl")
    _write_manifest(out_dir, "synth",
                    {"n_single": n_single, "n_multi": n_multi, "seed": seed}, [])
    print(f"wrote {len(gold)} gold instances to {out_dir}")
    return 0


def _cmd_build_corpus(args) -> int:
    cfg = _load_config_file(args.config)
    seed = _merge(args, cfg, "seed", 0, int)
    out_dir = Path(args.out_dir)
    documents = corpus_mod.load_documents(Path(args.documents))
    bodies = corpus_mod.load_bodies(Path(args.bodies))
    key_table = corpus_mod.load_key_table(Path(args.key_table))
    intent_fn = make_intent_fn(load_intent_model(Path(args.intent_model)))
    result = corpus_mod.build_dataset(Corpus(documents, key_table), bodies, intent_fn)
    if result.skipped:
        logger.warning("skipped %d group(s) with unresolvable documents", result.skipped)
    split_dataset(result.instances, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus_mod.save_dataset(result.instances, out_dir / "dataset.jsonl")
    _save_targets(result.instances, out_dir / "targets.jsonl")
    for split in corpus_mod.SPLITS:
        _save_targets(_select_split(result.instances, split),
                      out_dir / f"targets.{split}.jsonl")
    _write_manifest(out_dir, "build-corpus", {"seed": seed, "skipped": result.skipped},
                    [Path(args.documents), Path(args.bodies), Path(args.key_table),
                     Path(args.intent_model)])
    print(f"built {len(result.instances)} instances ({result.skipped} skipped)")
    return 0


def _train_pairs(records) -> list[tuple[str, IntentLabel]]:
    pairs: list[tuple[str, IntentLabel]] = []
    for rec in records:
        labels = [IntentLabel(v) for v in rec["intents"]]
        for label, window in zip(labels, placeholder_windows(rec["target"], len(labels))):
            pairs.append((window, label))
    return pairs


def _cmd_train_intent(args) -> int:
    cfg = _load_config_file(args.config)
    seed = _merge(args, cfg, "seed", 0, int)
    epochs = _merge(args, cfg, "epochs", 40, int)
    lr = _merge(args, cfg, "lr", 1.0, float)
    dim = _merge(args, cfg, "feature_dim", 2 ** 15, int)
    records = corpus_mod.load_dataset_records(Path(args.dataset))
    if args.split != "all":
        records = [r for r in records if r.get("split") == args.split]
    pairs = _train_pairs(records)
    model = train_intent(pairs, epochs=epochs, lr=lr, seed=seed, feature_dim=dim)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_intent_model(model, out)
    _write_manifest(out.parent, "train-intent",
                    {"seed": seed, "epochs": epochs, "lr": lr, "feature_dim": dim,
                     "split": args.split}, [Path(args.dataset)])
    print(f"trained intent model on {len(pairs)} windows -> {out}")
    return 0


def _instances_text(instances) -> list[str]:
    texts: list[str] = []
    for inst in instances:
        texts.append(inst.target)
        texts.append(inst.citing.abstract)
        for doc in inst.cited:
            texts.append(doc.title)
            texts.append(doc.abstract)
    return texts


def _cmd_train_fid(args) -> int:
    cfg = _load_config_file(args.config)
    seed = _merge(args, cfg, "seed", 0, int)
    with_intent = args.with_intent
    documents = corpus_mod.load_documents(Path(args.documents))
    instances = load_dataset(Path(args.dataset), documents)
    train_set = _select_split(instances, "train")
    valid_set = _select_split(instances, "valid")
    if not train_set:
        raise ConfigError("dataset has no train split")
    vocab = build_vocab(_instances_text(train_set),
                        min_freq=_merge(args, cfg, "min_freq", 1, int),
                        max_size=_merge(args, cfg, "max_vocab", 50000, int))
    config = fid_mod.ModelConfig(
        vocab_size=len(vocab.id_to_token),
        d_model=_merge(args, cfg, "d_model", 64, int),
        n_heads=_merge(args, cfg, "n_heads", 4, int),
        n_enc_layers=_merge(args, cfg, "n_enc_layers", 2, int),
        n_dec_layers=_merge(args, cfg, "n_dec_layers", 2, int),
        ffn_dim=_merge(args, cfg, "ffn_dim", None, int),
        block_len=_merge(args, cfg, "block_len", 64, int),
        target_len=_merge(args, cfg, "target_len", 32, int),
        dropout=_merge(args, cfg, "dropout", 0.0, float),
    )
    hyper = fid_mod.TrainConfig(
        epochs=_merge(args, cfg, "epochs", 30, int),
        batch_size=_merge(args, cfg, "batch_size", 16, int),
        lr=_merge(args, cfg, "lr", 3e-4, float),
        grad_clip=_merge(args, cfg, "grad_clip", 1.0, float),
        seed=seed,
    )
    params = fid_mod.init_params(config, seed)
    train_data = fid_mod.prepare_data(train_set, vocab, config, with_intent)
    valid_data = fid_mod.prepare_data(valid_set, vocab, config, with_intent)
    params, history = fid_mod.train(params, config, train_data, valid_data, hyper)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_vocab(vocab, out_dir / "vocab.tsv")
    fid_mod.save_checkpoint(out_dir / "fid.ckpt", config, params,
                            vocab_file="vocab.tsv", with_intent=with_intent)
    (out_dir / "history.json").write_text(json.dumps(history, indent=2) + "\n")
    _write_manifest(out_dir, "train-fid",
                    {"seed": seed, "with_intent": with_intent, "config": config.to_dict(),
                     "epochs": hyper.epochs, "batch_size": hyper.batch_size,
                     "lr": hyper.lr, "grad_clip": hyper.grad_clip},
                    [Path(args.dataset), Path(args.documents)])
    final = history["train_loss"][-1] if history["train_loss"] else float("nan")
    print(f"trained fid model ({'with' if with_intent else 'no'} intent), "
          f"final train loss {final:.4f} -> {out_dir / 'fid.ckpt'}")
    return 0


def _load_model(args):
    ckpt = Path(args.checkpoint)
    config, params, meta = fid_mod.load_checkpoint(ckpt)
    vocab_path = Path(args.vocab) if args.vocab else ckpt.parent / meta["vocab_file"]
    vocab = load_vocab(vocab_path)
    return config, params, meta, vocab, [ckpt, vocab_path]


def _cmd_generate(args) -> int:
    config, params, meta, vocab, inputs = _load_model(args)
    documents = corpus_mod.load_documents(Path(args.documents))
    instances = _select_split(load_dataset(Path(args.dataset), documents), args.split)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        for inst in instances:
            fid_in = fid_mod.build_fid_input(inst, vocab, config, meta["with_intent"])
            ids = fid_mod.generate(params, config, fid_in, mode=args.mode,
                                   beam_size=args.beam_size, max_len=args.max_len)
            f.write(json.dumps({"instance_id": inst.instance_id,
                                "text": decode(ids, vocab)}) + "\n")
    _write_manifest(out.parent, "generate",
                    {"mode": args.mode, "beam_size": args.beam_size,
                     "max_len": args.max_len, "split": args.split,
                     "with_intent": meta["with_intent"]},
                    inputs + [Path(args.dataset), Path(args.documents)])
    print(f"generated {len(instances)} predictions -> {out}")
    return 0


def _cmd_retrieve(args) -> int:
    config, params, meta, vocab, inputs = _load_model(args)
    documents = corpus_mod.load_documents(Path(args.documents))
    instances = _select_split(load_dataset(Path(args.dataset), documents), args.split)
    retrieve = retrieve_oracle if args.oracle else retrieve_baseline
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        for inst in instances:
            result = retrieve(params["emb"], inst, vocab)
            f.write(json.dumps({"instance_id": inst.instance_id, "text": result.text}) + "\n")
    _write_manifest(out.parent, "retrieve",
                    {"mode": "oracle" if args.oracle else "baseline", "split": args.split},
                    inputs + [Path(args.dataset), Path(args.documents)])
    print(f"retrieved {len(instances)} predictions -> {out}")
    return 0


def _cmd_evaluate(args) -> int:
    predictions = _load_id_text(Path(args.predictions))
    references = _load_id_text(Path(args.references))
    intent_model = load_intent_model(Path(args.intent_model))
    records = corpus_mod.load_dataset_records(Path(args.dataset))
    intended = {r["instance_id"]: [IntentLabel(v) for v in r["intents"]] for r in records}
    missing = [i for i in predictions if i not in intended]
    if missing:
        raise AlignmentError(f"ids missing from dataset: {missing[:5]}")
    intended = {i: intended[i] for i in predictions}
    without = _load_id_text(Path(args.predictions_without_intent)) \
        if args.predictions_without_intent else None
    report = metrics_mod.evaluate(predictions, references, intent_model, intended, without)
    out = Path(args.report)
    out.parent.mkdir(parents=True, exist_ok=True)
    metrics_mod.save_report(report, out)
    inputs = [Path(args.predictions), Path(args.references), Path(args.intent_model),
              Path(args.dataset)]
    if args.predictions_without_intent:
        inputs.append(Path(args.predictions_without_intent))
    _write_manifest(out.parent, "evaluate", {"n_examples": report.n_examples}, inputs)
    print(metrics_mod.format_report(report))
    return 0


# ---------------------------------------------------------------------------
# Parser / dispatch

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--seed", type=int, help="seed for every stochastic step (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="citegen",
        description="Citation text generation toolkit: corpus building, block-fused "
                    "encoder-decoder training, retrieval baselines, and evaluation.",
        epilog="exit codes: 0 ok, 2 missing file, 3 config validation, "
               "4 numerical divergence, 5 data errors, 1 unexpected",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with gold instances")
    _add_common(p)
    p.add_argument("--n-single", type=int, dest="n_single")
    p.add_argument("--n-multi", type=int, dest="n_multi")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("build-corpus", help="extract citation instances from bodies")
    _add_common(p)
    p.add_argument("--documents", required=True)
    p.add_argument("--bodies", required=True)
    p.add_argument("--key-table", required=True, dest="key_table")
    p.add_argument("--intent-model", required=True, dest="intent_model")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_build_corpus)

    p = sub.add_parser("train-intent", help="train the intent classifier")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="train", choices=["train", "valid", "test", "all"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--feature-dim", type=int, dest="feature_dim")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_intent)

    p = sub.add_parser("train-fid", help="train the block-fused generation model")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--documents", required=True)
    p.add_argument("--out-dir", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--with-intent", dest="with_intent", action="store_true", default=True,
                   help="prepend intent codes to blocks (default)")
    g.add_argument("--no-intent", dest="with_intent", action="store_false",
                   help="omit intent codes from every block")
    for flag in ("epochs", "batch-size", "d-model", "n-heads", "n-enc-layers",
                 "n-dec-layers", "ffn-dim", "block-len", "target-len",
                 "min-freq", "max-vocab"):
        p.add_argument(f"--{flag}", type=int, dest=flag.replace("-", "_"))
    for flag in ("lr", "grad-clip", "dropout"):
        p.add_argument(f"--{flag}", type=float, dest=flag.replace("-", "_"))
    p.set_defaults(func=_cmd_train_fid)

    p = sub.add_parser("generate", help="decode predictions for a dataset split")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", help="override the vocabulary path from the checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--documents", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test", "all"])
    p.add_argument("--mode", default="greedy", choices=["greedy", "beam"])
    p.add_argument("--beam-size", type=int, default=4, dest="beam_size")
    p.add_argument("--max-len", type=int, dest="max_len")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("retrieve", help="retrieval baselines over cited abstracts")
    _add_common(p)
    p.add_argument("--checkpoint", required=True,
                   help="trained model whose embedding table embeds sentences")
    p.add_argument("--vocab")
    p.add_argument("--dataset", required=True)
    p.add_argument("--documents", required=True)
    p.add_argument("--split", default="test", choices=["train", "valid", "test", "all"])
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--oracle", action="store_true",
                   help="rank against the gold target (upper bound)")
    g.add_argument("--baseline", action="store_true",
                   help="rank against the citing abstract (no target access)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("evaluate", help="score predictions and write a report")
    _add_common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--intent-model", required=True, dest="intent_model")
    p.add_argument("--dataset", required=True,
                   help="dataset records supplying each instance's intended intents")
    p.add_argument("--predictions-without-intent", dest="predictions_without_intent",
                   help="second prediction set for the round-trip ablation column")
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: numerical divergence: {exc}", file=sys.stderr)
        return 4
    except CitegenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: unexpected failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
