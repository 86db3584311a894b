"""Shared fixtures: a tiny random encoder checkpoint built offline, plus a
synthetic corpus whose positive and negative records use partly disjoint
vocabulary so a small model can separate them quickly."""

from __future__ import annotations

import json
import os
import random
import string

import pytest
import torch

POSITIVE_WORDS = ["randomized", "placebo", "enrolled", "doubleblind", "arm", "dose"]
NEGATIVE_WORDS = ["cohort", "cells", "registry", "survey", "protein", "assay"]
SHARED_WORDS = [
    "patients", "study", "results", "clinical", "we", "of", "the", "in",
    "with", "outcomes", "analysis", "treatment", "report", "data",
]


def _build_vocab() -> list[str]:
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += list(string.ascii_lowercase)
    vocab += ["##" + c for c in string.ascii_lowercase]
    vocab += list(string.digits)
    vocab += ["##" + d for d in string.digits]
    vocab += [".", ",", "-"]
    vocab += POSITIVE_WORDS + NEGATIVE_WORDS + SHARED_WORDS
    return vocab


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory) -> str:
    """A 2-layer masked-LM checkpoint with random weights, saved locally so
    loading never touches a model hub."""
    import transformers

    transformers.utils.logging.disable_progress_bar()
    transformers.utils.logging.set_verbosity_error()
    from transformers import BertConfig, BertForMaskedLM, BertTokenizer

    ckpt = str(tmp_path_factory.mktemp("ckpt") / "tiny-encoder")
    os.makedirs(ckpt)
    vocab = _build_vocab()
    with open(os.path.join(ckpt, "vocab.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(vocab) + "\n")
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=128,
    )
    torch.manual_seed(20240501)
    BertForMaskedLM(config).save_pretrained(ckpt)
    BertTokenizer(vocab_file=os.path.join(ckpt, "vocab.txt")).save_pretrained(ckpt)
    return ckpt


def make_records(
    n: int, seed: int, positive_rate: float = 0.4, missing_abstract_rate: float = 0.0
) -> list[dict]:
    """Synthetic corpus rows. Each row carries a hidden 'gold' field naming
    the planted class; writers strip it."""
    rng = random.Random(seed)
    rows = []
    for i in range(n):
        positive = rng.random() < positive_rate
        pool = POSITIVE_WORDS if positive else NEGATIVE_WORDS
        words = []
        for _ in range(rng.randint(14, 22)):
            source = pool if rng.random() < 0.45 else SHARED_WORDS
            words.append(rng.choice(source))
        abstract = " ".join(words) + "."
        if rng.random() < missing_abstract_rate:
            abstract = None
        rows.append(
            {
                "pmid": str(9_000_000 + i),
                "year": rng.randint(2010, 2022),
                "title": " ".join(words[:4]),
                "abstract": abstract,
                "journal": "Synthetic J",
                "pubtypes": ["journal article"],
                "gold": "include" if positive else "exclude",
            }
        )
    return rows


def write_corpus(rows: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            row = {k: v for k, v in row.items() if k != "gold"}
            fh.write(json.dumps(row))
            fh.write("\n")


def write_weak_labels(rows: list[dict], path: str, flip_rate: float = 0.0, seed: int = 0) -> int:
    """Weak labels for every abstract-bearing row, optionally noised.
    Returns the number written."""
    rng = random.Random(seed)
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            if row["abstract"] is None:
                continue
            verdict = row["gold"]
            if rng.random() < flip_rate:
                verdict = "exclude" if verdict == "include" else "include"
            fh.write(
                json.dumps(
                    {
                        "pmid": row["pmid"],
                        "verdict": verdict,
                        "model_id": "mock",
                        "prompt_id": "1.2",
                    }
                )
            )
            fh.write("\n")
            written += 1
    return written
