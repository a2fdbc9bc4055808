"""Seq2seq pretraining lab: python surface over the C++ core.

The heavy lifting (autodiff, LSTM stacks, BPE, beam search, the experiment
harness) lives in the compiled ``s2sp._core`` module; this package adds a thin
dict-friendly layer so configs can be plain dictionaries.
"""

import json as _json

from s2sp._core import (  # noqa: F401
    S2spError,
    Vocab,
    __version__,
    apply_bpe,
    bleu_corpus,
    checkpoint_tensors,
    decode,
    encode,
    learn_bpe,
    rouge_l,
    rouge_n,
    translate,
)
from s2sp import _core


def default_config():
    """Desk-scale default experiment config as a dict."""
    return _json.loads(_core.default_config())


def _to_json(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def gen_data(config=None):
    return _core.gen_data(_to_json(config))


def pretrain(config=None):
    return _core.pretrain(_to_json(config))


def finetune(config=None):
    return _core.finetune(_to_json(config))


def ablate(config=None):
    return _core.ablate(_to_json(config))


def data_fraction(config=None, fractions=(0.2, 0.5, 1.0)):
    return _core.data_fraction(_to_json(config), list(fractions))
