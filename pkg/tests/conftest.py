from __future__ import annotations

import json

import pytest

from sae.data_model import derive_gold_labels, parse_dataset
from sae.synth import SynthConfig, generate

# Two-document fixture mirroring the classic film/actress dev example.
FILM_EXAMPLE = {
    "_id": "dev-film-0001",
    "question": (
        "What government position was held by the woman who portrayed Corliss "
        "Archer in the film Kiss and Tell?"
    ),
    "answer": "Chief of Protocol",
    "supporting_facts": [
        ["Kiss and Tell (1945 film)", 0],
        ["Shirley Temple", 0],
        ["Shirley Temple", 1],
    ],
    "context": [
        [
            "Kiss and Tell (1945 film)",
            [
                "Kiss and Tell is a 1945 American comedy film starring then "
                "17-year-old Shirley Temple as Corliss Archer.",
                "In the film, two teenage girls cause their respective parents "
                "much concern when they start to become interested in boys.",
            ],
        ],
        [
            "Shirley Temple",
            [
                "Shirley Temple Black (April 23, 1928 - February 10, 2014) was "
                "an American actress, singer, dancer, businesswoman, and "
                "diplomat who was Hollywood's number one box-office draw as a "
                "child actress from 1935 to 1938.",
                "As an adult, she was named United States ambassador to Ghana "
                "and to Czechoslovakia and also served as Chief of Protocol of "
                "the United States.",
            ],
        ],
    ],
    "type": "bridge",
}


@pytest.fixture
def film_example():
    return parse_dataset(json.dumps([FILM_EXAMPLE]).encode())[0]


@pytest.fixture
def film_example_labeled(film_example):
    return derive_gold_labels(film_example)


def synth_examples(n: int, stream: str, seed: int = 42, **kwargs):
    records = generate(SynthConfig(seed=seed, n_examples=n, **kwargs), stream)
    return [derive_gold_labels(e) for e in parse_dataset(json.dumps(records).encode())]


@pytest.fixture(scope="session")
def small_train():
    return synth_examples(60, "train", seed=11)


@pytest.fixture(scope="session")
def small_dev():
    return synth_examples(30, "dev", seed=11)
