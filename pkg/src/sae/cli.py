"""Command-line entry point.

Subcommands: synth, train-selector, train-reasoner, predict, eval,
gradcheck, graph-dump, attn-dump.  A JSON config file may supply defaults
for any flag; explicit flags win.  Exit codes: 0 ok, 1 runtime failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import diffcore as dc
from .annotator import Annotator
from .data_model import load_dataset
from .embedder import EmbedConfig
from .metrics import evaluate_predictions, load_prediction_file
from .reasoner import ReasonerConfig, attention_dump
from .selector import SelectorConfig
from .synth import SynthConfig, generate_json

logger = logging.getLogger("sae")


def _add_embed_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embed", choices=["toy", "interchange"], default="toy")
    p.add_argument("--interchange", default=None, help="interchange file for --embed interchange")
    p.add_argument("--dim", type=int, default=64, help="toy embedding dimension")
    p.add_argument("--max-len", type=int, default=512)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    _add_embed_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sae", description=__doc__)
    parser.add_argument("--config", default=None, help="JSON file of flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=1000, help="training examples")
    p.add_argument("--n-dev", type=int, default=None, help="dev examples (default n/5)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--distractors", type=int, default=8)
    p.add_argument("--ratio", type=float, default=0.8, help="bridge fraction")
    p.add_argument("--padding", type=int, default=2, help="padding sentences per document")

    p = sub.add_parser("train-selector", help="train the document selection model")
    _add_train_flags(p)
    p.add_argument("--loss", choices=["pairwise", "bce"], default="pairwise")
    p.add_argument("--scores", choices=["012", "01"], default="012")
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--mhsa", choices=["on", "off"], default="on")

    p = sub.add_parser("train-reasoner", help="train the answer/explain model")
    _add_train_flags(p)
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--edges", default="1,2,3", help="comma-separated edge types to keep")
    p.add_argument("--attention", choices=["mixed", "self", "mean"], default="mixed")
    p.add_argument("--gnn", choices=["on", "off"], default="on")
    p.add_argument("--graph-dim", type=int, default=None)
    p.add_argument("--detach-span-attn", action="store_true")

    p = sub.add_parser("predict", help="select documents, answer, and explain")
    p.add_argument("--data", required=True)
    p.add_argument("--reasoner", required=True, help="reasoner checkpoint")
    p.add_argument("--selector", default=None, help="selector checkpoint")
    p.add_argument("--out", required=True, help="prediction JSON output")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--oracle-docs", action="store_true", help="use annotated gold documents")
    p.add_argument("--interchange", default=None, help="override embeddings source file")
    p.add_argument("--annotations", default=None, help="precomputed annotation override file")

    p = sub.add_parser("eval", help="score a prediction file")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--by-type", action="store_true")
    p.add_argument("--out", default=None, help="also write the report as JSON")

    p = sub.add_parser("gradcheck", help="finite-difference check of all primitives")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-seeds", type=int, default=20)

    p = sub.add_parser("graph-dump", help="emit the sentence graph of one example")
    p.add_argument("--data", required=True)
    p.add_argument("--example-id", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--edges", default="1,2,3")
    p.add_argument("--annotations", default=None)
    _add_embed_flags(p)

    p = sub.add_parser("attn-dump", help="emit per-sentence pooling attention")
    p.add_argument("--data", required=True)
    p.add_argument("--reasoner", required=True)
    p.add_argument("--example-id", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--interchange", default=None)
    p.add_argument("--annotations", default=None)
    return parser


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    # Pre-scan for --config so its values become defaults that flags override.
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        with open(known.config, encoding="utf-8") as f:
            overrides = json.load(f)
        for action in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
            valid = {a.dest for a in action._actions}
            action.set_defaults(**{k: v for k, v in overrides.items() if k in valid})
    return parser.parse_args(argv)


def _edge_types(spec: str) -> tuple[int, ...]:
    if not spec.strip():
        return ()
    types = tuple(int(x) for x in spec.split(","))
    bad = [t for t in types if t not in (1, 2, 3)]
    if bad:
        raise ValueError(f"unknown edge types {bad}; valid types are 1, 2, 3")
    return types


def _provider_for(args, embed: EmbedConfig):
    from .pipeline import make_provider

    mode = "interchange" if getattr(args, "interchange", None) else getattr(args, "embed", "toy")
    return make_provider(mode, embed, getattr(args, "interchange", None))


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = dict(
        seed=args.seed,
        n_distractors=args.distractors,
        bridge_ratio=args.ratio,
        padding_sentences=args.padding,
    )
    n_dev = args.n_dev if args.n_dev is not None else max(1, args.n // 5)
    (out / "train.json").write_text(
        generate_json(SynthConfig(n_examples=args.n, **base), "train"), encoding="utf-8"
    )
    (out / "dev.json").write_text(
        generate_json(SynthConfig(n_examples=n_dev, **base), "dev"), encoding="utf-8"
    )
    print(f"wrote {args.n} train / {n_dev} dev examples to {out}")
    return 0


def cmd_train_selector(args) -> int:
    from .pipeline import fit_selector, save_selector

    examples = load_dataset(args.data)
    embed = EmbedConfig(dim=args.dim, seed=args.seed, max_len=args.max_len)
    provider = _provider_for(args, embed)
    dim = embed.dim
    if provider.mode == "interchange":
        dim = next(iter(provider.slots.values())).dim if provider.slots else embed.dim
    config = SelectorConfig(
        dim=dim,
        heads=args.heads,
        loss=args.loss,
        scores=args.scores,
        mhsa=args.mhsa == "on",
        seed=args.seed,
    )
    epochs = args.epochs if args.epochs is not None else 12
    model, log = fit_selector(examples, provider, config, epochs, args.lr, args.batch, args.seed)
    save_selector(args.out, model, embed)
    print(f"selector trained: {len(examples)} examples, {epochs} epochs, "
          f"final loss {log.epoch_losses[-1]:.4f}, {log.seconds:.1f}s -> {args.out}")
    return 0


def cmd_train_reasoner(args) -> int:
    from .pipeline import fit_reasoner, save_reasoner

    examples = load_dataset(args.data)
    embed = EmbedConfig(dim=args.dim, seed=args.seed, max_len=args.max_len)
    provider = _provider_for(args, embed)
    dim = embed.dim
    if provider.mode == "interchange":
        dim = next(iter(provider.slots.values())).dim if provider.slots else embed.dim
    config = ReasonerConfig(
        dim=dim,
        graph_dim=args.graph_dim,
        hops=args.hops,
        gamma=args.gamma,
        attention=args.attention,
        use_gnn=args.gnn == "on",
        edge_types=_edge_types(args.edges),
        detach_span_attention=args.detach_span_attn,
        seed=args.seed,
    )
    annotator = Annotator()
    epochs = args.epochs if args.epochs is not None else 12
    model, log = fit_reasoner(
        examples, provider, annotator, config, epochs, args.lr, args.batch, args.seed
    )
    save_reasoner(args.out, model, embed)
    print(f"reasoner trained: {len(examples)} examples, {epochs} epochs, "
          f"final loss {log.epoch_losses[-1]:.4f}, {log.seconds:.1f}s -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    from .pipeline import load_reasoner, load_selector, make_provider, predict, write_predictions

    examples = load_dataset(args.data)
    reasoner, embed = load_reasoner(args.reasoner)
    selector = None
    if args.selector:
        selector, selector_embed = load_selector(args.selector)
        if vars(selector_embed) != vars(embed):
            logger.warning("selector and reasoner checkpoints carry different embed configs")
    mode = "interchange" if args.interchange else "toy"
    provider = make_provider(mode, embed, args.interchange)
    annotator = Annotator(args.annotations)

    result = predict(
        examples,
        reasoner,
        provider,
        annotator,
        selector=selector,
        k=args.k,
        oracle_docs=args.oracle_docs,
    )
    write_predictions(args.out, result)
    print(f"predicted {len(result.predictions['answer'])}/{len(examples)} examples -> {args.out}")
    if result.errors:
        print(f"{len(result.errors)} examples failed; see log", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args) -> int:
    examples = load_dataset(args.gold)
    pred = load_prediction_file(args.pred)
    report = evaluate_predictions(pred, examples, by_type=args.by_type)
    print(report.format_table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=2)
    return 0


def cmd_gradcheck(args) -> int:
    start = time.time()
    results = dc.gradcheck_suite(seed=args.seed, n_seeds=args.n_seeds)
    results.append(_composed_reasoner_check(args.seed))
    failed = [name for name, _, ok in results if not ok]
    for name, worst, ok in results:
        print(f"{'PASS' if ok else 'FAIL'} {name:24s} worst={worst:.3e}")
    print(f"gradcheck: {len(results) - len(failed)}/{len(results)} passed "
          f"in {time.time() - start:.1f}s")
    return 1 if failed else 0


def _composed_reasoner_check(seed: int) -> tuple[str, float, bool]:
    """Finite-difference check of the full reasoner loss on a tiny example."""
    import numpy as np

    from .data_model import derive_gold_labels, parse_dataset
    from .embedder import ToyEmbedder
    from .pipeline import graph_for
    from .reasoner import ReasonerConfig, ReasonerModel, prepare_item
    from .synth import SynthConfig, generate

    records = generate(SynthConfig(seed=seed, n_examples=1, n_distractors=2,
                                   padding_sentences=1), "gradcheck")
    ex = derive_gold_labels(parse_dataset(json.dumps(records).encode())[0])
    embedder = ToyEmbedder(EmbedConfig(dim=6, seed=seed))
    tm = embedder.embed_pair(
        ex.question, [(i, ex.documents[i]) for i in ex.gold_indices()]
    )
    graph = graph_for(ex, tm, Annotator())
    model = ReasonerModel(ReasonerConfig(dim=6, hops=2, seed=seed), dtype=np.float64)
    item = prepare_item(ex, tm, graph)

    def build():
        outputs = model.forward(item.tm, item.graph)
        return model.joint_loss(
            outputs, item.span_label, item.support_labels, item.example.answer_type
        ).loss

    worst = dc.finite_difference_check(build, model.params)
    return ("composed_reasoner_loss", worst, worst <= 1.0)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    args = _apply_config_defaults(parser, argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    handlers = {
        "synth": cmd_synth,
        "train-selector": cmd_train_selector,
        "train-reasoner": cmd_train_reasoner,
        "predict": cmd_predict,
        "eval": cmd_eval,
        "gradcheck": cmd_gradcheck,
        "graph-dump": cmd_graph_dump,
        "attn-dump": cmd_attn_dump,
    }
    try:
        return handlers[args.command](args)
    except Exception as e:  # noqa: BLE001 - single CLI failure boundary
        logger.error("%s", e)
        if args.verbose:
            raise
        return 1


def cmd_graph_dump(args) -> int:
    from .pipeline import graph_for

    examples = load_dataset(args.data)
    ex = next((e for e in examples if e.id == args.example_id), None)
    if ex is None:
        raise KeyError(f"example id {args.example_id!r} not in {args.data}")
    from .data_model import derive_gold_labels
    from .embedder import ToyEmbedder

    ex = derive_gold_labels(ex)
    embed = EmbedConfig(dim=args.dim, max_len=args.max_len)
    provider = _provider_for(args, embed)
    tm = provider.reasoner_matrix(ex, ex.gold_indices())
    graph = graph_for(ex, tm, Annotator(args.annotations), _edge_types(args.edges))
    text = graph.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_attn_dump(args) -> int:
    from .data_model import derive_gold_labels
    from .pipeline import graph_for, load_reasoner, make_provider

    examples = load_dataset(args.data)
    ex = next((e for e in examples if e.id == args.example_id), None)
    if ex is None:
        raise KeyError(f"example id {args.example_id!r} not in {args.data}")
    ex = derive_gold_labels(ex)
    reasoner, embed = load_reasoner(args.reasoner)
    mode = "interchange" if args.interchange else "toy"
    provider = make_provider(mode, embed, args.interchange)
    annotator = Annotator(args.annotations)
    tm = provider.reasoner_matrix(ex, ex.gold_indices())
    graph = graph_for(ex, tm, annotator, reasoner.config.edge_types)
    Path(args.out).write_text(attention_dump(reasoner, tm, graph, ex.id), encoding="utf-8")
    print(f"wrote attention dump for {ex.id} -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
