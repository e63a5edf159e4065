import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make tests/oracles importable

from gdgat.data import MATRES, parse_corpus
from gdgat.probs import synth_prob_table

# 3 documents, 10 pairs, counted by hand:
#   alpha: 4 events, 5 pairs; beta: 2 events, 2 pairs; gamma: 3 events, 3 pairs
CORPUS_3DOCS = """\
{"doc": "alpha", "events": [{"idx": 0, "type": "move", "surface": "toured"}, {"idx": 1, "type": "say", "surface": "said"}, {"idx": 2, "type": "hold", "surface": "grip"}, {"idx": 3, "type": "move", "surface": "continues"}]}
{"pair": {"doc": "alpha", "i": 0, "j": 1, "gold": "BEFORE"}}
{"pair": {"doc": "alpha", "i": 1, "j": 0, "gold": "AFTER"}}
{"pair": {"doc": "alpha", "i": 0, "j": 3, "gold": "BEFORE"}}
{"pair": {"doc": "alpha", "i": 2, "j": 3, "gold": "VAGUE"}}
{"pair": {"doc": "alpha", "i": 3, "j": 1, "gold": "AFTER"}}
{"doc": "beta", "events": [{"idx": 0, "type": "say", "surface": "announced"}, {"idx": 1, "type": "hold", "surface": "kept"}]}
{"pair": {"doc": "beta", "i": 0, "j": 1, "gold": "EQUAL"}}
{"pair": {"doc": "beta", "i": 1, "j": 0, "gold": "EQUAL"}}
{"doc": "gamma", "events": [{"idx": 0, "type": "move", "surface": "left"}, {"idx": 1, "type": "move", "surface": "arrived"}, {"idx": 2, "type": "say", "surface": "reported"}]}
{"pair": {"doc": "gamma", "i": 0, "j": 1, "gold": "BEFORE"}}
{"pair": {"doc": "gamma", "i": 0, "j": 2, "gold": "BEFORE"}}
{"pair": {"doc": "gamma", "i": 2, "j": 1, "gold": "VAGUE"}}
"""


@pytest.fixture
def corpus_3docs(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(CORPUS_3DOCS, encoding="utf-8")
    return path


@pytest.fixture
def dataset_3docs(corpus_3docs):
    return parse_corpus(corpus_3docs, MATRES)


@pytest.fixture
def table_3docs(dataset_3docs):
    return synth_prob_table(dataset_3docs, sharpness=6.0, flip_rate=0.0, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
