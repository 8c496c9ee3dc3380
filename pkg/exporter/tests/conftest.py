from __future__ import annotations

import json
import re
from pathlib import Path

import pytest
import torch

DATA = Path(__file__).parent / "data" / "mini_dev.json"


def _vocab_from_dataset() -> list[str]:
    records = json.loads(DATA.read_text())
    words: set[str] = set()
    token_re = re.compile(r"\w+|[^\w\s]")
    for r in records:
        texts = [r["question"]] + [s for _, sents in r["context"] for s in sents]
        for t in texts:
            words.update(w.lower() for w in token_re.findall(t))
    return sorted(words)


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> str:
    """A local random-weight BERT checkpoint whose wordpiece vocabulary covers
    the mini dev set; stands in for a downloadable encoder."""
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    out = tmp_path_factory.mktemp("tiny-bert")
    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab = {t: i for i, t in enumerate(specials + _vocab_from_dataset())}
    tok = Tokenizer(models.WordPiece(vocab=vocab, unk_token="[UNK]"))
    tok.normalizer = normalizers.Sequence([normalizers.NFD(), normalizers.Lowercase(), normalizers.StripAccents()])
    tok.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        unk_token="[UNK]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        pad_token="[PAD]",
        mask_token="[MASK]",
    )
    fast.save_pretrained(out)

    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=512,
    )
    torch.manual_seed(0)
    BertModel(config).save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def mini_dev_path() -> str:
    return str(DATA)
