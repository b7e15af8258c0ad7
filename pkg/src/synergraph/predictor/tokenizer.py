"""Byte-level vocabulary shared by descriptions, SMILES and responses."""
from __future__ import annotations

import numpy as np

BOS = 256
EOS = 257
EMPTY_DESC = 258
PAD = 259
VOCAB_SIZE = 260
SPECIALS = {BOS: "<bos>", EOS: "<eos>", EMPTY_DESC: "<empty>", PAD: "<pad>"}


def tokenize(text):
    return list(text.encode("utf-8"))


def tokenize_description(text):
    """Description bytes, or the single empty-description sentinel."""
    return tokenize(text) if text else [EMPTY_DESC]


def detokenize(ids):
    """Inverse of ``tokenize``; sentinels are dropped."""
    raw = bytes(int(i) for i in ids if 0 <= int(i) < 256)
    return raw.decode("utf-8", errors="replace")


def as_ids(ids):
    arr = np.asarray(ids, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= VOCAB_SIZE):
        raise ValueError("token id outside the vocabulary")
    return arr
