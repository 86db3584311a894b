"""Fine-tuning and scoring for binary abstract classification.

The checkpoint's pretraining head is discarded when it is not a two-way
classifier: loading through the sequence-classification architecture swaps
in a single linear layer whose two logits feed a softmax. The whole model
is trained, not just the head, with cross-entropy on the weak labels.
"""

from __future__ import annotations

import json
import logging
import os
import random
from typing import Iterable

import torch

from .data import (
    DataError,
    join_training_examples,
    load_corpus_abstracts,
    load_weak_labels,
)
from .spec import TrainSpec

logger = logging.getLogger(__name__)

SUMMARY_NAME = "train_summary.json"


class TrainerError(Exception):
    pass


def _load_model_and_tokenizer(checkpoint: str, num_labels: int | None = None):
    # imported lazily: transformers is slow to import and the spec/data
    # error paths should not pay for it
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    kwargs = {} if num_labels is None else {"num_labels": num_labels}
    try:
        model = AutoModelForSequenceClassification.from_pretrained(checkpoint, **kwargs)
        tokenizer = AutoTokenizer.from_pretrained(checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise TrainerError(f"cannot load checkpoint {checkpoint!r}: {exc}")
    return model, tokenizer


def _effective_max_tokens(requested: int, model) -> int:
    limit = getattr(model.config, "max_position_embeddings", None)
    if isinstance(limit, int) and 0 < limit < requested:
        return limit
    return requested


def fine_tune(spec: TrainSpec) -> str:
    """Train on the spec's weak labels and write the model artifact to
    spec.output_dir. Returns the artifact directory."""
    labels = load_weak_labels(spec.weak_labels)
    abstracts = load_corpus_abstracts(spec.corpus)
    try:
        texts, targets = join_training_examples(labels, abstracts)
    except DataError as exc:
        raise TrainerError(str(exc))

    # seed before loading: a fresh classification head is randomly initialized
    torch.manual_seed(spec.seed)
    model, tokenizer = _load_model_and_tokenizer(spec.checkpoint, num_labels=2)
    max_tokens = _effective_max_tokens(spec.max_sequence_tokens, model)
    if max_tokens < spec.max_sequence_tokens:
        logger.info(
            "checkpoint caps sequences at %d tokens (spec asked for %d)",
            max_tokens, spec.max_sequence_tokens,
        )

    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=spec.learning_rate,
        betas=(spec.adam_beta1, spec.adam_beta2),
    )
    rng = random.Random(spec.seed)
    order = list(range(len(texts)))
    epoch_losses: list[float] = []
    model.train()
    for epoch in range(spec.epochs):
        rng.shuffle(order)
        total = 0.0
        batches = 0
        for start in range(0, len(order), spec.batch_size):
            idx = order[start : start + spec.batch_size]
            enc = tokenizer(
                [texts[i] for i in idx],
                truncation=True,
                max_length=max_tokens,
                padding=True,
                return_tensors="pt",
            )
            out = model(**enc, labels=torch.tensor([targets[i] for i in idx]))
            optimizer.zero_grad()
            out.loss.backward()
            optimizer.step()
            total += float(out.loss.detach())
            batches += 1
        epoch_losses.append(total / batches)
        logger.info("epoch %d/%d: mean loss %.4f", epoch + 1, spec.epochs, epoch_losses[-1])

    os.makedirs(spec.output_dir, exist_ok=True)
    model.save_pretrained(spec.output_dir)
    tokenizer.save_pretrained(spec.output_dir)
    summary = {
        "checkpoint": spec.checkpoint,
        "scorer_id": spec.scorer_id,
        "n_examples": len(texts),
        "epochs": spec.epochs,
        "batch_size": spec.batch_size,
        "learning_rate": spec.learning_rate,
        "adam_betas": [spec.adam_beta1, spec.adam_beta2],
        "max_sequence_tokens": max_tokens,
        "seed": spec.seed,
        "epoch_mean_loss": epoch_losses,
    }
    with open(os.path.join(spec.output_dir, SUMMARY_NAME), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return spec.output_dir


def read_summary(model_dir: str) -> dict:
    path = os.path.join(model_dir, SUMMARY_NAME)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise TrainerError(f"{model_dir} holds no {SUMMARY_NAME}; was it written by fine_tune?")


def export_scores(
    model_dir: str,
    records: Iterable[tuple[str, str | None]],
    out_path: str,
    scorer_id: str | None = None,
    batch_size: int = 32,
) -> int:
    """Score records with a fine_tune artifact and write one JSONL row per
    abstract-bearing record: {"pmid", "scorer_id", "prob"}. Records without
    an abstract are omitted with a warning. Returns the row count."""
    if scorer_id is None:
        scorer_id = read_summary(model_dir)["scorer_id"]
    model, tokenizer = _load_model_and_tokenizer(model_dir)
    max_tokens = _effective_max_tokens(read_summary(model_dir)["max_sequence_tokens"], model)

    eligible: list[tuple[str, str]] = []
    seen: set[str] = set()
    skipped = 0
    for pmid, abstract in records:
        if pmid in seen:
            raise TrainerError(f"duplicate pmid {pmid!r} among records to score")
        seen.add(pmid)
        if not abstract:
            skipped += 1
            continue
        eligible.append((pmid, abstract))
    if skipped:
        logger.warning("export_scores: skipped %d record(s) with no abstract", skipped)

    probs: dict[str, float] = {}
    model.eval()
    with torch.no_grad():
        for start in range(0, len(eligible), batch_size):
            batch = eligible[start : start + batch_size]
            enc = tokenizer(
                [text for _, text in batch],
                truncation=True,
                max_length=max_tokens,
                padding=True,
                return_tensors="pt",
            )
            positive = torch.softmax(model(**enc).logits, dim=-1)[:, 1]
            for (pmid, _), p in zip(batch, positive.tolist()):
                probs[pmid] = p

    with open(out_path, "w", encoding="utf-8") as fh:
        for pmid in sorted(probs):
            fh.write(json.dumps({"pmid": pmid, "scorer_id": scorer_id, "prob": probs[pmid]}))
            fh.write("\n")
    return len(probs)


def export_corpus_scores(
    model_dir: str, corpus_path: str, out_path: str, scorer_id: str | None = None
) -> int:
    """CLI convenience: score every record in a corpus JSONL file."""
    abstracts = load_corpus_abstracts(corpus_path)
    return export_scores(model_dir, abstracts.items(), out_path, scorer_id=scorer_id)
