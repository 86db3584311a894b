"""Distillation: turn noisy completions into cheap, reusable classifiers.

Weak-label sets are nested prefixes of one seeded shuffle, so learning
curves across sizes compare like with like. Baselines are linear models on
a frozen TF-IDF space; model files carry the full vocabulary and
coefficients so a saved model scores new text with no training state.

Score files from any scorer (a baseline here, or an external fine-tuned
encoder) share one JSONL schema and feed a logistic ensemble fit on hand
labels.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .corpus import PublicationRecord
from .labels import VERDICT_EXCLUDE, VERDICT_INCLUDE
from .prompts import parse_completion

logger = logging.getLogger(__name__)

DEFAULT_SIZE_SCHEDULE = (1000, 2000, 4000, 8000, 16000, 32000, 64000)

_TOKEN = re.compile(r"[a-z0-9]+")

# Tiny ridge applied when an unregularized ensemble fit is degenerate
STABILIZER_L2 = 1e-6


class DistillError(Exception):
    pass


# ---------------------------------------------------------------------------
# Weak labels


@dataclass(frozen=True)
class WeakLabelSet:
    """One assembled training set: (pmid, verdict, model_id, prompt_id) rows."""

    entries: tuple[tuple[str, str, str, str], ...]
    size: int
    dropped_unparseable: int = 0

    def verdicts(self) -> dict[str, str]:
        return {pmid: verdict for pmid, verdict, _, _ in self.entries}


def assemble_weak_labels(
    completions: Sequence[tuple[str, str]],
    family: int,
    sizes: Sequence[int] | None = None,
    seed: int = 0,
    model_id: str = "",
    prompt_id: str = "",
    category_synonyms: Mapping[str, str] | None = None,
) -> list[WeakLabelSet]:
    """Parse completions and cut nested prefix sets at each schedule size.

    Unparseable completions are dropped (with a count) rather than coerced:
    a training label must come from output the parser actually understood.
    """
    sizes = list(DEFAULT_SIZE_SCHEDULE if sizes is None else sizes)
    if sizes != sorted(sizes):
        raise DistillError("size schedule must be ascending")
    if any(s <= 0 for s in sizes):
        raise DistillError("size schedule entries must be positive")

    parsed: list[tuple[str, str]] = []
    dropped = 0
    for pmid, raw in completions:
        pc = parse_completion(family, raw, category_synonyms)
        if pc.unparseable:
            dropped += 1
            continue
        parsed.append((pmid, pc.verdict))
    if dropped:
        logger.warning("dropped %d unparseable completion(s)", dropped)

    rng = random.Random(seed)
    rng.shuffle(parsed)
    out: list[WeakLabelSet] = []
    for size in sizes:
        if size > len(parsed):
            raise DistillError(
                f"schedule size {size} exceeds the {len(parsed)} parseable completions"
            )
        entries = tuple(
            (pmid, verdict, model_id, prompt_id) for pmid, verdict in parsed[:size]
        )
        out.append(WeakLabelSet(entries=entries, size=size, dropped_unparseable=dropped))
    return out


def write_weak_labels(wls: WeakLabelSet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pmid, verdict, model_id, prompt_id in wls.entries:
            fh.write(
                json.dumps(
                    {"pmid": pmid, "verdict": verdict, "model_id": model_id, "prompt_id": prompt_id}
                )
            )
            fh.write("\n")


def load_weak_labels(path: str) -> WeakLabelSet:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj["verdict"] not in (VERDICT_INCLUDE, VERDICT_EXCLUDE):
                raise DistillError(f"bad verdict {obj['verdict']!r} in {path}")
            entries.append((obj["pmid"], obj["verdict"], obj.get("model_id", ""), obj.get("prompt_id", "")))
    return WeakLabelSet(entries=tuple(entries), size=len(entries))


# ---------------------------------------------------------------------------
# TF-IDF features


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass
class TfidfSpace:
    """Frozen vocabulary with smoothed idf weights.

    Tokens are lowercase alphanumeric runs. Terms must appear in at least
    two fitting documents. Transforms use sublinear tf and L2-normalized
    rows; unseen tokens are simply ignored.
    """

    vocabulary: dict[str, int]
    idf: np.ndarray
    min_df: int = 2

    @classmethod
    def fit(cls, texts: Sequence[str], min_df: int = 2) -> "TfidfSpace":
        if not texts:
            raise DistillError("cannot fit a feature space on an empty corpus")
        df: dict[str, int] = {}
        for text in texts:
            for tok in set(tokenize(text)):
                df[tok] = df.get(tok, 0) + 1
        vocab = {tok: i for i, tok in enumerate(sorted(t for t, n in df.items() if n >= min_df))}
        if not vocab:
            raise DistillError("feature space is empty after the document-frequency floor")
        n = len(texts)
        idf = np.zeros(len(vocab))
        for tok, i in vocab.items():
            idf[i] = math.log((1.0 + n) / (1.0 + df[tok])) + 1.0
        return cls(vocabulary=vocab, idf=idf, min_df=min_df)

    def transform(self, texts: Sequence[str]) -> sp.csr_matrix:
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for text in texts:
            counts: dict[int, int] = {}
            for tok in tokenize(text):
                col = self.vocabulary.get(tok)
                if col is not None:
                    counts[col] = counts.get(col, 0) + 1
            row = sorted(counts.items())
            vals = np.array(
                [(1.0 + math.log(tf)) * self.idf[col] for col, tf in row], dtype=np.float64
            )
            norm = np.linalg.norm(vals)
            if norm > 0:
                vals = vals / norm
            indices.extend(col for col, _ in row)
            data.extend(vals)
            indptr.append(len(indices))
        return sp.csr_matrix(
            (np.array(data), np.array(indices, dtype=np.int32), np.array(indptr, dtype=np.int32)),
            shape=(len(texts), len(self.vocabulary)),
        )

    def to_json_dict(self) -> dict:
        return {
            "vocabulary": self.vocabulary,
            "idf": self.idf.tolist(),
            "min_df": self.min_df,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TfidfSpace":
        return cls(
            vocabulary={str(k): int(v) for k, v in obj["vocabulary"].items()},
            idf=np.asarray(obj["idf"], dtype=np.float64),
            min_df=int(obj.get("min_df", 2)),
        )


def featurize_tfidf(texts: Sequence[str], min_df: int = 2) -> tuple[TfidfSpace, sp.csr_matrix]:
    space = TfidfSpace.fit(texts, min_df=min_df)
    return space, space.transform(texts)


# ---------------------------------------------------------------------------
# Baseline heads

LOGREG_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)  # inverse regularization strength C
NB_GRID = (0.01, 0.1, 0.5, 1.0, 2.0)  # additive smoothing


@dataclass
class BaselineHead:
    kind: str  # "logreg" | "nb"
    coef: np.ndarray
    intercept: float
    strength: float  # chosen grid value
    cv_losses: dict[float, float] = field(default_factory=dict)

    def decision(self, X: sp.csr_matrix) -> np.ndarray:
        return np.asarray(X @ self.coef).ravel() + self.intercept

    def predict_proba(self, X: sp.csr_matrix) -> np.ndarray:
        return _sigmoid(self.decision(X))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1.0 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _fit_logreg(X: sp.csr_matrix, y: np.ndarray, c: float) -> tuple[np.ndarray, float]:
    from sklearn.linear_model import LogisticRegression

    clf = LogisticRegression(C=c, solver="lbfgs", max_iter=2000, tol=1e-8)
    clf.fit(X, y)
    return clf.coef_.ravel().astype(np.float64), float(clf.intercept_[0])


def _fit_nb(X: sp.csr_matrix, y: np.ndarray, alpha: float) -> tuple[np.ndarray, float]:
    # multinomial event model over tf-idf mass; linear in the features
    pos = X[y == 1]
    neg = X[y == 0]
    n_features = X.shape[1]
    pos_mass = np.asarray(pos.sum(axis=0)).ravel() + alpha
    neg_mass = np.asarray(neg.sum(axis=0)).ravel() + alpha
    log_theta_pos = np.log(pos_mass) - math.log(pos_mass.sum())
    log_theta_neg = np.log(neg_mass) - math.log(neg_mass.sum())
    coef = log_theta_pos - log_theta_neg
    prior_pos = (y == 1).sum() / len(y)
    intercept = math.log(prior_pos) - math.log(1.0 - prior_pos)
    return coef.astype(np.float64), float(intercept)


def _cv_folds(n: int, folds: int, seed: int) -> list[np.ndarray]:
    order = np.arange(n)
    np.random.default_rng(seed).shuffle(order)
    return [order[i::folds] for i in range(folds)]


def train_baseline(
    X: sp.csr_matrix,
    y: np.ndarray | Sequence[int],
    algorithm: str = "logreg",
    folds: int = 10,
    seed: int = 0,
    grid: Sequence[float] | None = None,
) -> BaselineHead:
    """Fit a linear baseline; pick the regularization strength by k-fold
    cross-validated log-loss, then refit on all rows."""
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != len(y):
        raise DistillError(f"feature rows ({X.shape[0]}) and labels ({len(y)}) differ")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DistillError("training labels contain a single class")
    if len(y) < folds:
        raise DistillError(f"{len(y)} rows cannot support {folds}-fold validation")
    if algorithm == "logreg":
        fit = _fit_logreg
        grid = tuple(LOGREG_GRID if grid is None else grid)
    elif algorithm == "nb":
        fit = _fit_nb
        grid = tuple(NB_GRID if grid is None else grid)
    else:
        raise DistillError(f"unknown algorithm {algorithm!r}")

    fold_indices = _cv_folds(X.shape[0], folds, seed)
    all_rows = np.arange(X.shape[0])
    cv_losses: dict[float, float] = {}
    for strength in grid:
        losses = []
        for held in fold_indices:
            train_rows = np.setdiff1d(all_rows, held, assume_unique=False)
            y_train = y[train_rows]
            if len(np.unique(y_train)) < 2:
                raise DistillError("a cross-validation fold lost one class entirely")
            coef, intercept = fit(X[train_rows], y_train, strength)
            head = BaselineHead(kind=algorithm, coef=coef, intercept=intercept, strength=strength)
            losses.append(_log_loss(y[held], head.predict_proba(X[held])))
        cv_losses[strength] = float(np.mean(losses))
    best = min(grid, key=lambda s: cv_losses[s])
    coef, intercept = fit(X, y, best)
    return BaselineHead(
        kind=algorithm, coef=coef, intercept=intercept, strength=best, cv_losses=cv_losses
    )


@dataclass
class DistilledModel:
    """A frozen feature space plus a linear head: everything needed to score
    new text lives in this object (and in its JSON file)."""

    scorer_id: str
    space: TfidfSpace
    head: BaselineHead

    def predict_proba_texts(self, texts: Sequence[str]) -> np.ndarray:
        return self.head.predict_proba(self.space.transform(texts))

    def save(self, path: str) -> None:
        obj = {
            "scorer_id": self.scorer_id,
            "space": self.space.to_json_dict(),
            "head": {
                "kind": self.head.kind,
                "coef": self.head.coef.tolist(),
                "intercept": self.head.intercept,
                "strength": self.head.strength,
                "cv_losses": {str(k): v for k, v in self.head.cv_losses.items()},
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh)

    @classmethod
    def load(cls, path: str) -> "DistilledModel":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        head = BaselineHead(
            kind=obj["head"]["kind"],
            coef=np.asarray(obj["head"]["coef"], dtype=np.float64),
            intercept=float(obj["head"]["intercept"]),
            strength=float(obj["head"]["strength"]),
            cv_losses={float(k): float(v) for k, v in obj["head"]["cv_losses"].items()},
        )
        return cls(scorer_id=obj["scorer_id"], space=TfidfSpace.from_json_dict(obj["space"]), head=head)


def fit_distilled(
    records: Sequence[PublicationRecord],
    verdicts: Mapping[str, str],
    scorer_id: str,
    algorithm: str = "logreg",
    folds: int = 10,
    seed: int = 0,
) -> DistilledModel:
    """Fit a distilled baseline from records and weak verdicts for them."""
    rows = [r for r in records if r.pmid in verdicts and r.abstract]
    if not rows:
        raise DistillError("no labeled, abstract-bearing records to train on")
    texts = [r.abstract or "" for r in rows]
    y = np.array([1.0 if verdicts[r.pmid] == VERDICT_INCLUDE else 0.0 for r in rows])
    space, X = featurize_tfidf(texts)
    head = train_baseline(X, y, algorithm=algorithm, folds=folds, seed=seed)
    return DistilledModel(scorer_id=scorer_id, space=space, head=head)


def score_records(model: DistilledModel, records: Iterable[PublicationRecord]) -> "ScoreSet":
    """Score abstract-bearing records. Records without abstracts are skipped
    with a warning; an abstract with no in-vocabulary tokens scores at the
    intercept."""
    rows = []
    skipped = 0
    for rec in records:
        if not rec.abstract:
            skipped += 1
            continue
        rows.append(rec)
    if skipped:
        logger.warning("score_records: skipped %d record(s) with no abstract", skipped)
    probs = model.predict_proba_texts([r.abstract or "" for r in rows]) if rows else np.array([])
    return ScoreSet(
        scorer_id=model.scorer_id,
        probs={rec.pmid: float(p) for rec, p in zip(rows, probs)},
    )


# ---------------------------------------------------------------------------
# Score files


@dataclass
class ScoreSet:
    scorer_id: str
    probs: dict[str, float]

    def __post_init__(self) -> None:
        bad = [p for p in self.probs.values() if not (0.0 <= p <= 1.0)]
        if bad:
            raise DistillError(f"{len(bad)} probability value(s) outside [0, 1]")


def write_scores(scores: ScoreSet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pmid in sorted(scores.probs):
            fh.write(
                json.dumps({"pmid": pmid, "scorer_id": scores.scorer_id, "prob": scores.probs[pmid]})
            )
            fh.write("\n")


def import_scores(path: str, scorer_id: str) -> ScoreSet:
    """Read a score file. Out-of-range or mismatched lines are rejected with
    a warning; duplicate pmids and missing fields are hard errors."""
    probs: dict[str, float] = {}
    rejected = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DistillError(f"{path} line {line_no}: not valid JSON: {exc}")
            if not isinstance(obj, dict) or "pmid" not in obj:
                raise DistillError(f"{path} line {line_no}: missing pmid")
            if "prob" not in obj:
                raise DistillError(f"{path} line {line_no}: missing prob")
            pmid = obj["pmid"]
            if obj.get("scorer_id", scorer_id) != scorer_id:
                logger.warning(
                    "%s line %d: scorer_id %r does not match %r, line skipped",
                    path, line_no, obj.get("scorer_id"), scorer_id,
                )
                rejected += 1
                continue
            try:
                prob = float(obj["prob"])
            except (TypeError, ValueError):
                logger.warning("%s line %d: prob is not a number, line skipped", path, line_no)
                rejected += 1
                continue
            if not (0.0 <= prob <= 1.0) or math.isnan(prob):
                logger.warning(
                    "%s line %d: prob %r outside [0, 1], line skipped", path, line_no, obj["prob"]
                )
                rejected += 1
                continue
            if pmid in probs:
                raise DistillError(f"{path} line {line_no}: duplicate pmid {pmid!r}")
            probs[pmid] = prob
    if rejected:
        logger.warning("%s: %d line(s) rejected", path, rejected)
    return ScoreSet(scorer_id=scorer_id, probs=probs)


# ---------------------------------------------------------------------------
# Ensemble


@dataclass
class EnsembleModel:
    scorer_ids: tuple[str, ...]
    coef: np.ndarray  # one weight per scorer, ordered as scorer_ids
    intercept: float
    log_loss: float
    n: int
    separation_flag: bool = False
    rank_deficient: bool = False

    def predict(self, prob_rows: np.ndarray) -> np.ndarray:
        z = prob_rows @ self.coef + self.intercept
        return _sigmoid(z)

    def apply(self, score_sets: Sequence[ScoreSet]) -> ScoreSet:
        by_id = {s.scorer_id: s for s in score_sets}
        missing = [sid for sid in self.scorer_ids if sid not in by_id]
        if missing:
            raise DistillError(f"missing score sets for {missing}")
        ordered = [by_id[sid] for sid in self.scorer_ids]
        common = set(ordered[0].probs)
        for s in ordered[1:]:
            common &= set(s.probs)
        pmids = sorted(common)
        X = np.array([[s.probs[pmid] for s in ordered] for pmid in pmids])
        probs = self.predict(X) if pmids else np.array([])
        return ScoreSet(scorer_id="ensemble", probs={p: float(v) for p, v in zip(pmids, probs)})

    def to_json_dict(self) -> dict:
        return {
            "scorer_ids": list(self.scorer_ids),
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "log_loss": self.log_loss,
            "n": self.n,
            "separation_flag": self.separation_flag,
            "rank_deficient": self.rank_deficient,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "EnsembleModel":
        return cls(
            scorer_ids=tuple(obj["scorer_ids"]),
            coef=np.asarray(obj["coef"], dtype=np.float64),
            intercept=float(obj["intercept"]),
            log_loss=float(obj["log_loss"]),
            n=int(obj["n"]),
            separation_flag=bool(obj["separation_flag"]),
            rank_deficient=bool(obj["rank_deficient"]),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path: str) -> "EnsembleModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _logistic_minimize(X: np.ndarray, y: np.ndarray, l2: float) -> tuple[np.ndarray, float]:
    """Minimize mean logistic loss (+ optional L2 on weights, not intercept)."""
    n, k = X.shape

    def objective(w: np.ndarray) -> tuple[float, np.ndarray]:
        z = X @ w[:k] + w[k]
        p = _sigmoid(z)
        eps = 1e-300
        loss = -np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
        loss += 0.5 * l2 * float(w[:k] @ w[:k])
        resid = (p - y) / n
        grad = np.empty(k + 1)
        grad[:k] = X.T @ resid + l2 * w[:k]
        grad[k] = resid.sum()
        return loss, grad

    w0 = np.zeros(k + 1)
    res = scipy.optimize.minimize(
        objective,
        w0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": 5000, "ftol": 1e-14, "gtol": 1e-12},
    )
    return res.x[:k].copy(), float(res.x[k])


def fit_ensemble(
    score_sets: Sequence[ScoreSet], hand_labels: Mapping[str, str]
) -> EnsembleModel:
    """Unregularized logistic regression of hand labels on scorer probabilities.

    Perfect separation (or an exactly collinear design) makes the
    unregularized optimum ill-defined, so those fits are redone with a tiny
    ridge and flagged; predictions stay well-behaved either way.
    """
    if len(score_sets) < 2:
        raise DistillError("ensemble needs at least two score sets")
    seen = set()
    for s in score_sets:
        if s.scorer_id in seen:
            raise DistillError(f"duplicate scorer_id {s.scorer_id!r}")
        seen.add(s.scorer_id)
    pmids = sorted(hand_labels)
    if not pmids:
        raise DistillError("no hand labels supplied")
    for s in score_sets:
        uncovered = [p for p in pmids if p not in s.probs]
        if uncovered:
            raise DistillError(
                f"score set {s.scorer_id!r} misses {len(uncovered)} labeled pmid(s), "
                f"first: {uncovered[0]}"
            )
    X = np.array([[s.probs[p] for s in score_sets] for p in pmids], dtype=np.float64)
    y = np.array(
        [1.0 if hand_labels[p] == VERDICT_INCLUDE else 0.0 for p in pmids], dtype=np.float64
    )
    if len(np.unique(y)) < 2:
        raise DistillError("hand labels contain a single class")

    design = np.hstack([np.ones((X.shape[0], 1)), X])
    rank_deficient = bool(np.linalg.matrix_rank(design) < design.shape[1])

    separation = False
    if rank_deficient:
        coef, intercept = _logistic_minimize(X, y, STABILIZER_L2)
    else:
        coef, intercept = _logistic_minimize(X, y, 0.0)
        p = _sigmoid(X @ coef + intercept)
        separation = _log_loss(y, p) < 1e-6 or float(np.max(np.abs(coef))) > 100.0
        if separation:
            coef, intercept = _logistic_minimize(X, y, STABILIZER_L2)

    p = _sigmoid(X @ coef + intercept)
    return EnsembleModel(
        scorer_ids=tuple(s.scorer_id for s in score_sets),
        coef=coef,
        intercept=intercept,
        log_loss=_log_loss(y, p),
        n=len(y),
        separation_flag=separation,
        rank_deficient=rank_deficient,
    )
