"""Corpus ingestion, preprocessing, vocabulary, splits, and synthetic data.

The on-disk corpus format is JSONL, one object per line:

    {"id": "...", "article": "space tokenized text",
     "summary": ["sent one", "sent two", "sent three"],
     "label": "parallel" | "parallel_enum" | "sequence" | "sequence_seg",
     "category": "..."}

``label`` and ``category`` are optional.  Text is pre-tokenized; tokens are
whatever whitespace splitting yields.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass

import numpy as np


class CorpusError(ValueError):
    pass


class StructureLabel(enum.Enum):
    PARALLEL = "parallel"
    PARALLEL_ENUM = "parallel_enum"
    SEQUENCE = "sequence"
    SEQUENCE_SEG = "sequence_seg"

    @property
    def binary(self) -> str:
        """Collapse the 4-way taxonomy to the parallel/sequence decision."""
        if self in (StructureLabel.PARALLEL, StructureLabel.PARALLEL_ENUM):
            return "parallel"
        return "sequence"

    @property
    def binary_index(self) -> int:
        return 0 if self.binary == "parallel" else 1


BINARY_CLASSES = ("parallel", "sequence")


@dataclass
class NewsPair:
    """One article with its three-sentence summary."""

    id: str
    article: list[str]
    summary: list[list[str]]
    label: StructureLabel | None = None
    category: str | None = None

    def summary_tokens(self) -> int:
        return sum(len(s) for s in self.summary)

    def to_json(self) -> dict:
        obj = {
            "id": self.id,
            "article": " ".join(self.article),
            "summary": [" ".join(s) for s in self.summary],
        }
        if self.label is not None:
            obj["label"] = self.label.value
        if self.category is not None:
            obj["category"] = self.category
        return obj


class Vocabulary:
    """Token<->id bijection with fixed special ids."""

    PAD, UNK, START, STOP, SB = 0, 1, 2, 3, 4
    SPECIALS = ("<pad>", "<unk>", "<s>", "</s>", "<sb>")

    def __init__(self, tokens):
        self._id_to_token = list(self.SPECIALS)
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}
        for t in tokens:
            if t in self._token_to_id:
                raise CorpusError(f"duplicate vocabulary token {t!r}")
            self._token_to_id[t] = len(self._id_to_token)
            self._id_to_token.append(t)

    @property
    def size(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id(self, token: str) -> int:
        return self._token_to_id.get(token, self.UNK)

    def token(self, i: int) -> str:
        return self._id_to_token[i]

    def encode(self, tokens) -> list[int]:
        return [self.id(t) for t in tokens]

    def content_tokens(self) -> list[str]:
        return self._id_to_token[len(self.SPECIALS):]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"tokens": self.content_tokens()}, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(obj["tokens"])


# -- JSONL ingestion -------------------------------------------------------


def _parse_pair(obj: dict) -> NewsPair:
    for key in ("id", "article", "summary"):
        if key not in obj:
            raise CorpusError(f"missing required field {key!r}")
    article = str(obj["article"]).split()
    if not article:
        raise CorpusError("article is empty")
    summary_raw = obj["summary"]
    if not isinstance(summary_raw, list) or len(summary_raw) != 3:
        got = len(summary_raw) if isinstance(summary_raw, list) else type(summary_raw).__name__
        raise CorpusError(f"summary must have exactly 3 sentences, got {got}")
    summary = [str(s).split() for s in summary_raw]
    if any(not s for s in summary):
        raise CorpusError("summary sentence is empty")
    label = None
    if obj.get("label") is not None:
        try:
            label = StructureLabel(obj["label"])
        except ValueError:
            raise CorpusError(f"invalid label string {obj['label']!r}") from None
    return NewsPair(
        id=str(obj["id"]),
        article=article,
        summary=summary,
        label=label,
        category=obj.get("category"),
    )


def load_jsonl(path, strict: bool = True) -> tuple[list[NewsPair], list[tuple[int, str]]]:
    """Load a corpus file.

    Returns (pairs, errors) where errors is a list of (line_number, message).
    With strict=True the first malformed line raises CorpusError instead.
    """
    pairs: list[NewsPair] = []
    errors: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise CorpusError("line is not a JSON object")
                pairs.append(_parse_pair(obj))
            except (json.JSONDecodeError, CorpusError) as exc:
                if strict:
                    raise CorpusError(f"line {line_no}: {exc}") from None
                errors.append((line_no, str(exc)))
    return pairs, errors


def save_jsonl(pairs, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_json(), ensure_ascii=False))
            fh.write("\n")


def load_summary_file(path) -> dict[str, list[list[str]]]:
    """Load system-output summaries: id -> three token lists.

    Unlike training corpora, system outputs may contain empty sentences
    (padded short decodes), so only the sentence count is enforced.
    """
    out: dict[str, list[list[str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: {exc}") from None
            if "id" not in obj or "summary" not in obj:
                raise CorpusError(f"line {line_no}: needs 'id' and 'summary'")
            sents = obj["summary"]
            if not isinstance(sents, list) or len(sents) != 3:
                raise CorpusError(f"line {line_no}: summary must have 3 sentences")
            out[str(obj["id"])] = [str(s).split() for s in sents]
    return out


def save_summary_file(summaries: dict, path, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc_id, sents in summaries.items():
            obj = {"id": doc_id, "summary": [" ".join(s) for s in sents]}
            if extra and doc_id in extra:
                obj.update(extra[doc_id])
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


# -- preprocessing ---------------------------------------------------------


@dataclass
class PreprocessReport:
    kept: int = 0
    truncated: int = 0
    dropped_short_summary: int = 0

    def to_json(self) -> dict:
        return {
            "kept": self.kept,
            "truncated": self.truncated,
            "dropped_short_summary": self.dropped_short_summary,
        }


def preprocess(
    pairs, max_src_len: int = 400, min_summary_len: int = 70
) -> tuple[list[NewsPair], PreprocessReport]:
    """Truncate articles to their first max_src_len tokens and drop pairs
    whose three summary sentences total fewer than min_summary_len tokens."""
    report = PreprocessReport()
    out = []
    for p in pairs:
        if p.summary_tokens() < min_summary_len:
            report.dropped_short_summary += 1
            continue
        article = p.article
        if len(article) > max_src_len:
            article = article[:max_src_len]
            report.truncated += 1
        out.append(NewsPair(p.id, article, p.summary, p.label, p.category))
        report.kept += 1
    return out, report


# -- vocabulary construction -----------------------------------------------


def build_vocab(pairs, mode: str = "cap", size: int = 50000, min_count: int = 2) -> Vocabulary:
    """Build a vocabulary over article + summary tokens.

    mode="cap" keeps the `size` most frequent tokens (ties broken by first
    occurrence); mode="min_count" keeps tokens seen at least `min_count`
    times.  Specials are always present and do not count against the cap.
    """
    if not pairs:
        raise CorpusError("cannot build vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}

    def feed(tokens):
        for t in tokens:
            counts[t] += 1
            if t not in first_seen:
                first_seen[t] = len(first_seen)

    for p in pairs:
        feed(p.article)
        for s in p.summary:
            feed(s)
    for special in Vocabulary.SPECIALS:
        counts.pop(special, None)

    ordered = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    if mode == "cap":
        kept = ordered[:size]
    elif mode == "min_count":
        kept = [t for t in ordered if counts[t] >= min_count]
    else:
        raise ValueError(f"unknown vocab mode {mode!r}")
    return Vocabulary(kept)


# -- splits ------------------------------------------------------------------

# Split proportions of the full-scale corpus this pipeline mirrors:
# 211,744 / 1,200 / 1,200 out of 214,120.
_REFERENCE_SPLIT = (211744, 1200, 1200)


def split_pairs(pairs, sizes=None, seed: int = 0, id_lists=None):
    """Deterministic train/dev/test split.

    Either pass explicit ``sizes=(n_train, n_dev, n_test)``, or id_lists with
    explicit membership, or leave both unset to scale the reference
    proportions to the corpus size.
    """
    if id_lists is not None:
        by_id = {p.id: p for p in pairs}
        return tuple([by_id[i] for i in ids] for ids in id_lists)
    n = len(pairs)
    if sizes is None:
        total = sum(_REFERENCE_SPLIT)
        n_dev = max(1, round(n * _REFERENCE_SPLIT[1] / total))
        n_test = max(1, round(n * _REFERENCE_SPLIT[2] / total))
        sizes = (n - n_dev - n_test, n_dev, n_test)
    if sum(sizes) > n:
        raise CorpusError(f"requested split sizes {sizes} exceed corpus size {n}")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [pairs[i] for i in order]
    n_train, n_dev, n_test = sizes
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_dev],
        shuffled[n_train + n_dev : n_train + n_dev + n_test],
    )


# -- synthetic corpus --------------------------------------------------------

_ENTITIES = [
    "arden", "bellamy", "corvin", "daria", "elwood", "farrow", "gideon",
    "halsey", "imara", "jarek", "kestrel", "lorne", "mabel", "nolan",
    "opal", "petra",
]
_OBJECTS = ["merger", "festival", "rollout", "expansion", "audit", "tournament", "exhibit"]
_PLACES = ["astoria", "brookfield", "calder", "dunmore", "eastvale", "foxglove"]
_DAYS = ["monday", "tuesday", "wednesday", "thursday", "friday"]
_TIMES = ["spring", "summer", "autumn", "winter"]
_CATEGORIES = ["national", "it", "sports"]
_OOV_STEMS = ["zorv", "vexl", "quam", "kyrr"]


def _fresh_oov_name(rng: np.random.Generator) -> str:
    return f"{_OOV_STEMS[rng.integers(len(_OOV_STEMS))]}{rng.integers(100, 1000)}"


def synth_generate(
    seed: int, n: int, oov_rate: float = 0.2, structure_mix: float = 0.8
) -> list[NewsPair]:
    """Deterministic template corpus with gold structure labels.

    Sentence 1 states the incident about entity e1, sentence 2 introduces a
    second entity e2, and sentence 3's subject decides the label: e1 for
    parallel pairs, e2 for sequence pairs.  Articles contain all three fact
    sentences verbatim plus distractors.  With probability oov_rate each
    entity is a fresh name outside the closed lexicon, so pairs exercise the
    copy path once a vocabulary is built over the corpus.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = []
    for k in range(n):
        e1, e2, e3, e4 = (_ENTITIES[i] for i in rng.choice(len(_ENTITIES), size=4, replace=False))
        if rng.random() < oov_rate:
            e1 = _fresh_oov_name(rng)
        if rng.random() < oov_rate:
            e2 = _fresh_oov_name(rng)
        obj, obj2, obj3 = (_OBJECTS[i] for i in rng.choice(len(_OBJECTS), size=3, replace=False))
        place, place2, place3 = (_PLACES[i] for i in rng.choice(len(_PLACES), size=3, replace=False))
        day, day2 = (_DAYS[i] for i in rng.choice(len(_DAYS), size=2, replace=False))
        time = _TIMES[rng.integers(len(_TIMES))]
        parallel = bool(rng.random() < structure_mix)

        s1 = [e1, "announced", "the", obj, "plan", "in", place, "on", day]
        s2 = [e2, "backed", "the", obj, "effort", "from", place2]
        if parallel:
            s3 = [e1, "outlined", "further", obj2, "steps", "for", time]
        else:
            s3 = [e2, "detailed", "the", obj, "terms", "this", time]

        article = (
            s1
            + [e3, "visited", "the", place3, "fair", "yesterday"]
            + s2
            + [e4, "reviewed", "a", obj3, "proposal", "overnight"]
            + s3
            + ["officials", "expect", "updates", "after", day2]
        )
        pairs.append(
            NewsPair(
                id=f"synth-{seed}-{k:05d}",
                article=article,
                summary=[s1, s2, s3],
                label=StructureLabel.PARALLEL if parallel else StructureLabel.SEQUENCE,
                category=_CATEGORIES[int(rng.integers(len(_CATEGORIES)))],
            )
        )
    return pairs
