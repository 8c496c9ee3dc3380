from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sae.annotator import Annotator
from sae.cli import main
from sae.embedder import EmbedConfig, ToyProvider
from sae.pipeline import (
    fit_reasoner,
    fit_selector,
    load_reasoner,
    load_selector,
    predict,
    save_reasoner,
    save_selector,
)
from sae.reasoner import ReasonerConfig
from sae.selector import SelectorConfig


@pytest.fixture(scope="module")
def trained(small_train_module):
    examples = small_train_module
    provider = ToyProvider(EmbedConfig(dim=32, seed=0))
    selector, _ = fit_selector(
        examples, provider, SelectorConfig(dim=32, seed=0), epochs=4, lr=3e-3, batch_size=8, seed=0
    )
    reasoner, _ = fit_reasoner(
        examples,
        provider,
        Annotator(),
        ReasonerConfig(dim=32, seed=0),
        epochs=4,
        lr=3e-3,
        batch_size=8,
        seed=0,
    )
    return examples, provider, selector, reasoner


@pytest.fixture(scope="module")
def small_train_module():
    from conftest import synth_examples

    return synth_examples(40, "train", seed=21)


def test_checkpoint_round_trip_identical_predictions(tmp_path, trained):
    examples, provider, selector, reasoner = trained
    save_selector(tmp_path / "sel.ckpt", selector, provider.config)
    save_reasoner(tmp_path / "rsn.ckpt", reasoner, provider.config)
    selector2, embed2 = load_selector(tmp_path / "sel.ckpt")
    reasoner2, _ = load_reasoner(tmp_path / "rsn.ckpt")
    assert vars(embed2) == vars(provider.config)

    before = predict(examples[:10], reasoner, provider, Annotator(), selector=selector)
    after = predict(examples[:10], reasoner2, provider, Annotator(), selector=selector2)
    assert before.predictions == after.predictions
    assert before.selections == after.selections


def test_predict_oracle_docs_bypasses_selector(trained):
    examples, provider, _, reasoner = trained
    result = predict(examples[:8], reasoner, provider, Annotator(), oracle_docs=True)
    for ex in examples[:8]:
        assert result.selections[ex.id] == sorted(ex.gold_indices())
    assert not result.errors


def test_predict_requires_selector_or_oracle(trained):
    examples, provider, _, reasoner = trained
    with pytest.raises(ValueError):
        predict(examples[:2], reasoner, provider, Annotator())


def test_wrong_checkpoint_kind_rejected(tmp_path, trained):
    _, provider, selector, _ = trained
    save_selector(tmp_path / "sel.ckpt", selector, provider.config)
    from sae.binformat import FormatError

    with pytest.raises(FormatError):
        load_reasoner(tmp_path / "sel.ckpt")


# -- CLI ------------------------------------------------------------------------
def run_cli(*argv) -> int:
    return main(list(argv))


def test_cli_full_pipeline(tmp_path, capsys):
    data = tmp_path / "data"
    assert run_cli("synth", "--out", str(data), "--n", "30", "--n-dev", "10", "--seed", "3") == 0
    assert (data / "train.json").exists() and (data / "dev.json").exists()

    sel = tmp_path / "sel.ckpt"
    rsn = tmp_path / "rsn.ckpt"
    assert run_cli(
        "train-selector", "--data", str(data / "train.json"), "--out", str(sel),
        "--epochs", "2", "--dim", "16",
    ) == 0
    assert run_cli(
        "train-reasoner", "--data", str(data / "train.json"), "--out", str(rsn),
        "--epochs", "2", "--dim", "16",
    ) == 0

    pred = tmp_path / "pred.json"
    assert run_cli(
        "predict", "--data", str(data / "dev.json"), "--selector", str(sel),
        "--reasoner", str(rsn), "--out", str(pred),
    ) == 0
    payload = json.loads(pred.read_text())
    assert set(payload) == {"answer", "sp"}
    assert len(payload["answer"]) == 10

    report = tmp_path / "report.json"
    assert run_cli(
        "eval", "--pred", str(pred), "--gold", str(data / "dev.json"),
        "--by-type", "--out", str(report),
    ) == 0
    scored = json.loads(report.read_text())
    assert {"ans_em", "sup_f1", "joint_f1"} <= set(scored)


def test_cli_eval_identity_predictions_score_one(tmp_path, capsys):
    data = tmp_path / "d"
    run_cli("synth", "--out", str(data), "--n", "8", "--n-dev", "4", "--seed", "5")
    gold = json.loads((data / "dev.json").read_text())
    pred = {
        "answer": {r["_id"]: r["answer"] for r in gold},
        "sp": {r["_id"]: r["supporting_facts"] for r in gold},
    }
    pred_path = tmp_path / "pred.json"
    pred_path.write_text(json.dumps(pred))
    report = tmp_path / "rep.json"
    assert run_cli("eval", "--pred", str(pred_path), "--gold", str(data / "dev.json"), "--out", str(report)) == 0
    scored = json.loads(report.read_text())
    assert scored["ans_em"] == scored["joint_f1"] == 1.0


def test_cli_empty_dataset_prediction(tmp_path, trained):
    _, provider, selector, reasoner = trained
    save_selector(tmp_path / "s.ckpt", selector, provider.config)
    save_reasoner(tmp_path / "r.ckpt", reasoner, provider.config)
    empty = tmp_path / "empty.json"
    empty.write_text("[]")
    out = tmp_path / "pred.json"
    assert run_cli(
        "predict", "--data", str(empty), "--reasoner", str(tmp_path / "r.ckpt"),
        "--selector", str(tmp_path / "s.ckpt"), "--out", str(out),
    ) == 0
    assert json.loads(out.read_text()) == {"answer": {}, "sp": {}}


def test_cli_unknown_flag_exits_2():
    result = subprocess.run(
        [sys.executable, "-m", "sae.cli", "synth", "--does-not-exist", "x", "--out", "y"],
        capture_output=True,
    )
    assert result.returncode == 2


def test_cli_runtime_failure_exits_1(tmp_path):
    assert run_cli("eval", "--pred", str(tmp_path / "missing.json"), "--gold", str(tmp_path / "g.json")) == 1


def test_cli_config_file_supplies_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 6, "n_dev": 3, "seed": 9}))
    out = tmp_path / "out"
    assert run_cli("--config", str(cfg), "synth", "--out", str(out)) == 0
    assert len(json.loads((out / "train.json").read_text())) == 6
    assert len(json.loads((out / "dev.json").read_text())) == 3
    # explicit flags still win
    assert run_cli("--config", str(cfg), "synth", "--out", str(out), "--n", "4") == 0
    assert len(json.loads((out / "train.json").read_text())) == 4


def test_predict_skips_examples_with_missing_interchange_slots(tmp_path, trained):
    from sae.embedder import InterchangeProvider, write_interchange
    from sae.pipeline import predict as predict_fn

    examples, provider, _, reasoner = trained
    subset = examples[:6]
    entries = [
        (ex.id, "reasoner", provider.reasoner_matrix(ex, ex.gold_indices()))
        for ex in subset[:3]  # slots for half the examples only
    ]
    path = tmp_path / "partial.sae"
    write_interchange(path, entries)

    result = predict_fn(
        subset, reasoner, InterchangeProvider(path), Annotator(), oracle_docs=True
    )
    assert set(result.errors) == {ex.id for ex in subset[3:]}
    assert set(result.predictions["answer"]) == {ex.id for ex in subset[:3]}

    # the CLI flags partial failure through the exit code
    save_reasoner(tmp_path / "r.ckpt", reasoner, provider.config)
    data = tmp_path / "subset.json"
    from sae.data_model import dump_dataset

    data.write_text(dump_dataset(subset))
    rc = run_cli(
        "predict", "--data", str(data), "--reasoner", str(tmp_path / "r.ckpt"),
        "--oracle-docs", "--interchange", str(path), "--out", str(tmp_path / "p.json"),
    )
    assert rc == 1
    payload = json.loads((tmp_path / "p.json").read_text())
    assert len(payload["answer"]) == 3


def test_truncation_excludes_dropped_sentences_from_graph_and_support_loss():
    from sae.data_model import parse_dataset, derive_gold_labels
    from sae.embedder import EmbedConfig, ToyProvider
    from sae.pipeline import prepare_reasoner_items

    record = {
        "_id": "trunc-0001",
        "question": "What is the color of the tower that stands in Qopul?",
        "answer": "Vumlor",
        "supporting_facts": [["Qopul tower", 0], ["Brenik Stel", 0]],
        "context": [
            ["Qopul tower", ["The tower that stands in Qopul is Brenik Stel."]],
            ["Brenik Stel", ["The color of Brenik Stel is Vumlor."]],
        ],
        "type": "bridge",
    }
    ex = derive_gold_labels(parse_dataset(json.dumps([record]).encode())[0])
    # budget fits the question and first sentence only; the second
    # supporting sentence is dropped whole
    provider = ToyProvider(EmbedConfig(dim=16, seed=0, max_len=26))
    (item,) = prepare_reasoner_items([ex], provider, Annotator(), (1, 2, 3))
    assert len(item.tm.sentence_spans) == 1
    assert item.graph.n_nodes == 1
    assert list(item.support_labels) == [1.0]
    # the answer lived in the dropped sentence: span loss is masked
    assert item.span_label is None


def test_identical_config_and_seed_give_identical_prediction_files(small_train_module):
    def round_trip():
        provider = ToyProvider(EmbedConfig(dim=16, seed=0))
        selector, _ = fit_selector(
            small_train_module, provider, SelectorConfig(dim=16, seed=4),
            epochs=2, lr=3e-3, batch_size=8, seed=4,
        )
        reasoner, _ = fit_reasoner(
            small_train_module, provider, Annotator(), ReasonerConfig(dim=16, seed=4),
            epochs=2, lr=3e-3, batch_size=8, seed=4,
        )
        result = predict(small_train_module[:12], reasoner, provider, Annotator(), selector=selector)
        return json.dumps(result.predictions, sort_keys=True)

    assert round_trip() == round_trip()


def test_cli_graph_and_attention_dumps(tmp_path, trained):
    _, provider, _, reasoner = trained
    data = tmp_path / "data"
    run_cli("synth", "--out", str(data), "--n", "5", "--n-dev", "2", "--seed", "13")
    example_id = json.loads((data / "dev.json").read_text())[0]["_id"]

    gdump = tmp_path / "graph.json"
    assert run_cli(
        "graph-dump", "--data", str(data / "dev.json"), "--example-id", example_id,
        "--out", str(gdump),
    ) == 0
    graph = json.loads(gdump.read_text())
    assert {"nodes", "edges"} == set(graph)
    assert all(str(r) in graph["edges"] for r in (1, 2, 3))

    save_reasoner(tmp_path / "r.ckpt", reasoner, provider.config)
    adump = tmp_path / "attn.json"
    assert run_cli(
        "attn-dump", "--data", str(data / "dev.json"), "--reasoner", str(tmp_path / "r.ckpt"),
        "--example-id", example_id, "--out", str(adump),
    ) == 0
    attn = json.loads(adump.read_text())
    assert attn["example_id"] == example_id
    for sentence in attn["sentences"]:
        assert len(sentence["attention"]) == len(sentence["tokens"])
        assert sum(sentence["attention"]) == pytest.approx(1.0, abs=1e-5)
