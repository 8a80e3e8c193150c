"""Compression metrics, multi-sample accuracy aggregation and keyword counts."""

from __future__ import annotations

import json
import logging
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import InvalidArgumentError, MissingTokenCountError, ParseError

log = logging.getLogger(__name__)

TOKENIZERS = ("whitespace", "bytes", "external")


def token_count(text, tokenizer: str = "whitespace", record: Mapping | None = None) -> int:
    """Count tokens of ``text``.

    ``external`` trusts a precomputed ``token_count`` field on ``record``,
    which is how real model tokenizers plug in.
    """
    if tokenizer == "whitespace":
        return len(text.split())
    if tokenizer == "bytes":
        return len(text.encode("utf-8"))
    if tokenizer == "external":
        if record is None or record.get("token_count") is None:
            raise MissingTokenCountError("external tokenizer requires a token_count field on the record")
        n = record["token_count"]
        if isinstance(n, bool) or not isinstance(n, int) or n < 0:
            raise InvalidArgumentError(f"token_count must be a non-negative integer, got {n!r}")
        return n
    raise InvalidArgumentError(f"unknown tokenizer {tokenizer!r}; expected one of {TOKENIZERS}")


def compression_rate(tokens_original: float, tokens_current: float) -> float:
    if tokens_original == 0:
        raise ZeroDivisionError("original token count is zero")
    if tokens_original < 0 or tokens_current < 0:
        raise InvalidArgumentError("token counts must be non-negative")
    return max((tokens_original - tokens_current) / tokens_original, 0.0)


def avg_compression_rate(per_dataset: Sequence[tuple[float, float]]) -> float:
    """Mean compression rate over benchmarks, given ``(original, current)`` pairs."""
    pairs = list(per_dataset)
    if not pairs:
        raise InvalidArgumentError("need at least one (original, current) pair")
    return sum(compression_rate(o, c) for o, c in pairs) / len(pairs)


def normalized_accuracy(acc_current: float, acc_original: float) -> float:
    if acc_original == 0:
        raise ZeroDivisionError("original accuracy is zero")
    return acc_current / acc_original


def normalized_token(tok_current: float, tok_original: float) -> float:
    if tok_original == 0:
        raise ZeroDivisionError("original token count is zero")
    return tok_current / tok_original


# -- evaluation records -------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    question_id: str
    sample_index: int
    output_text: str
    token_count: int
    correct: bool
    dataset: str

    @property
    def key(self):
        return (self.question_id, self.sample_index, self.dataset)


@dataclass(frozen=True)
class BenchmarkSummary:
    dataset: str
    mean_accuracy: float
    mean_tokens: float
    n_questions: int
    samples_per_question: int

    def to_dict(self):
        return asdict(self)


_RECORD_FIELDS = {
    "question_id": str,
    "sample_index": int,
    "output_text": str,
    "correct": bool,
    "dataset": str,
}


def parse_record(obj, tokenizer="whitespace", path=None, line=None) -> EvalRecord:
    if not isinstance(obj, dict):
        raise ParseError("record is not a JSON object", path, line)
    for name, typ in _RECORD_FIELDS.items():
        if name not in obj:
            raise ParseError(f"missing field {name!r}", path, line)
        value = obj[name]
        ok = isinstance(value, typ) and not (typ is int and isinstance(value, bool))
        if not ok:
            raise ParseError(f"field {name!r} must be {typ.__name__}", path, line)
    if obj["sample_index"] < 0:
        raise ParseError("sample_index must be >= 0", path, line)
    if tokenizer == "external":
        try:
            n = token_count(obj["output_text"], "external", obj)
        except (MissingTokenCountError, InvalidArgumentError) as exc:
            raise ParseError(str(exc), path, line) from exc
    else:
        n = obj.get("token_count")
        if n is None:
            n = token_count(obj["output_text"], tokenizer)
        elif isinstance(n, bool) or not isinstance(n, int) or n < 0:
            raise ParseError("token_count must be a non-negative integer", path, line)
    return EvalRecord(
        question_id=obj["question_id"],
        sample_index=obj["sample_index"],
        output_text=obj["output_text"],
        token_count=n,
        correct=obj["correct"],
        dataset=obj["dataset"],
    )


def load_results(path, tokenizer: str = "whitespace") -> list[EvalRecord]:
    """Read a results file (one JSON record per line).

    A present ``token_count`` field is trusted; otherwise it is computed
    with ``tokenizer``.
    """
    records, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path, lineno) from exc
            rec = parse_record(obj, tokenizer, path, lineno)
            if rec.key in seen:
                raise ParseError(f"duplicate (question_id, sample_index, dataset) {rec.key}", path, lineno)
            seen.add(rec.key)
            records.append(rec)
    return records


def summarize(records: Iterable[EvalRecord]) -> dict[str, BenchmarkSummary]:
    """Per-dataset accuracy as a mean of per-question sample means."""
    by_question: dict[str, dict[str, list[EvalRecord]]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        by_question[r.dataset][r.question_id].append(r)

    out = {}
    for dataset in sorted(by_question):
        questions = by_question[dataset]
        counts = {len(v) for v in questions.values()}
        if len(counts) > 1:
            log.warning("dataset %s has uneven samples per question: %s", dataset, sorted(counts))
        per_q = [sum(r.correct for r in v) / len(v) for v in questions.values()]
        all_tokens = [r.token_count for v in questions.values() for r in v]
        out[dataset] = BenchmarkSummary(
            dataset=dataset,
            mean_accuracy=sum(per_q) / len(per_q),
            mean_tokens=sum(all_tokens) / len(all_tokens),
            n_questions=len(questions),
            samples_per_question=max(counts),
        )
    return out


def compare_runs(original: Mapping[str, BenchmarkSummary], current: Mapping[str, BenchmarkSummary]) -> dict:
    """Per-dataset compression and normalized metrics over shared datasets."""
    shared = sorted(set(original) & set(current))
    if not shared:
        raise InvalidArgumentError("the two result sets share no dataset")
    rows = []
    for name in shared:
        o, c = original[name], current[name]
        rows.append(
            {
                "dataset": name,
                "tokens_original": o.mean_tokens,
                "tokens_current": c.mean_tokens,
                "compression_rate": compression_rate(o.mean_tokens, c.mean_tokens),
                "normalized_token": normalized_token(c.mean_tokens, o.mean_tokens),
                "normalized_accuracy": (
                    normalized_accuracy(c.mean_accuracy, o.mean_accuracy) if o.mean_accuracy > 0 else None
                ),
            }
        )
    acr = avg_compression_rate([(r["tokens_original"], r["tokens_current"]) for r in rows])
    return {"datasets": rows, "avg_compression_rate": acr}


def pct(x: float) -> str:
    return f"{100.0 * x:.1f}%"


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Aligned plain-text table; numbers right-aligned."""
    cells = [[str(h) for h in header]] + [[str(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    numeric = [all(_looks_numeric(r[i]) for r in cells[1:]) and len(cells) > 1 for i in range(len(header))]
    lines = []
    for j, row in enumerate(cells):
        parts = [v.rjust(w) if numeric[i] and j else v.ljust(w) for i, (v, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(parts).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _looks_numeric(s: str) -> bool:
    try:
        float(s.rstrip("%"))
        return True
    except ValueError:
        return False


# -- keyword analysis ---------------------------------------------------------

KEYWORD_CATEGORIES: dict[str, tuple[str, ...]] = {
    "exploratory": ("wait",),
    "reflective": ("but",),
    "checking": ("make sure", "confirm", "verify", "check"),
}


def _keyword_pattern(phrase: str) -> str:
    words = [re.escape(w) for w in phrase.split()]
    return r"(?<!\w)" + r"\W+".join(words) + r"(?!\w)"


_KEYWORD_RES = {
    kw: re.compile(_keyword_pattern(kw), re.IGNORECASE) for kws in KEYWORD_CATEGORIES.values() for kw in kws
}
KEYWORDS = tuple(_KEYWORD_RES)


@dataclass
class KeywordProfile:
    keywords: dict[str, int] = field(default_factory=lambda: {kw: 0 for kw in _KEYWORD_RES})

    @property
    def counts(self) -> dict[str, int]:
        return {cat: sum(self.keywords[kw] for kw in kws) for cat, kws in KEYWORD_CATEGORIES.items()}

    def __add__(self, other: "KeywordProfile") -> "KeywordProfile":
        return KeywordProfile({kw: self.keywords[kw] + other.keywords[kw] for kw in self.keywords})

    def to_dict(self):
        return {"counts": self.counts, "keywords": dict(self.keywords)}


def keyword_frequency(texts: Iterable[str]) -> KeywordProfile:
    """Case-insensitive whole-word counts of the deliberation marker words.

    A word is a maximal run of word characters, so "rebuttal" contains no
    "but". Multi-word phrases match consecutive words separated by any
    non-word characters.
    """
    if isinstance(texts, str):
        texts = [texts]
    profile = KeywordProfile()
    for text in texts:
        for kw, rx in _KEYWORD_RES.items():
            profile.keywords[kw] += sum(1 for _ in rx.finditer(text))
    return profile
