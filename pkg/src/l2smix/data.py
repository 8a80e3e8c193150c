"""System-1 / System-2 instruction pools and mixture-weighted batch sampling."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateIdError,
    EmptyPoolError,
    InvalidArgumentError,
    MissingTokenCountError,
    ParseError,
    TokenCountMismatchError,
    UnmappedSourceError,
)
from .metrics import token_count
from .mixture import _check_simplex

log = logging.getLogger(__name__)

SYSTEMS = ("system1", "system2")
DIFFICULTIES = ("easy", "medium", "hard")

# question sources of the compression data, by difficulty
DEFAULT_DIFFICULTY_RULES = {
    "gsm8k": "easy",
    "math500-train": "medium",
    "s1-prompts": "hard",
}

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class InstructionPair:
    id: str
    question: str
    response: str
    system_tag: str
    source: str
    correct: bool
    token_count: int
    difficulty: str | None = None


@dataclass(frozen=True)
class DevItem:
    id: str
    question: str
    answer: str


@dataclass
class PoolLoad:
    """Result of reading one pool file: accepted pairs plus oversize rejections."""

    pairs: list[InstructionPair]
    oversized: list[str] = field(default_factory=list)
    path: str | None = None

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]


def _require(obj, name, typ, path, line):
    if name not in obj:
        raise ParseError(f"missing field {name!r}", path, line)
    if not isinstance(obj[name], typ):
        raise ParseError(f"field {name!r} must be {typ.__name__}", path, line)
    return obj[name]


def load_pool(path, tag: str | None = None, *, max_tokens: int = 8192, tokenizer: str = "whitespace") -> PoolLoad:
    """Parse and validate a training-pool file.

    Token counts are recomputed with ``tokenizer``; a stored ``token_count``
    that disagrees is an error. Records longer than ``max_tokens`` are
    dropped and listed in ``PoolLoad.oversized``.
    """
    if tag is not None and tag not in SYSTEMS:
        raise InvalidArgumentError(f"unknown system tag {tag!r}")
    pairs, oversized, seen = [], [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path, lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("record is not a JSON object", path, lineno)
            rid = _require(obj, "id", str, path, lineno)
            question = _require(obj, "question", str, path, lineno)
            response = _require(obj, "response", str, path, lineno)
            system = _require(obj, "system", str, path, lineno)
            source = _require(obj, "source", str, path, lineno)
            correct = _require(obj, "correct", bool, path, lineno)
            difficulty = obj.get("difficulty")
            if system not in SYSTEMS:
                raise ParseError(f"system must be one of {SYSTEMS}, got {system!r}", path, lineno)
            if tag is not None and system != tag:
                raise ParseError(f"record tagged {system!r} in a {tag!r} pool", path, lineno)
            if difficulty is not None and difficulty not in DIFFICULTIES:
                raise ParseError(f"difficulty must be one of {DIFFICULTIES}, got {difficulty!r}", path, lineno)
            if rid in seen:
                raise DuplicateIdError(rid, path)
            seen.add(rid)

            try:
                n = token_count(response, tokenizer, obj)
            except MissingTokenCountError as exc:
                raise ParseError(str(exc), path, lineno) from exc
            stored = obj.get("token_count")
            if tokenizer != "external" and stored is not None and stored != n:
                raise TokenCountMismatchError(f"{path}:{lineno}: id {rid!r} stores token_count={stored}, recount gives {n}")
            if n > max_tokens:
                oversized.append(rid)
                continue
            pairs.append(InstructionPair(rid, question, response, system, source, correct, n, difficulty))
    if oversized:
        log.info("%s: rejected %d oversized record(s) (> %d tokens)", path, len(oversized), max_tokens)
    return PoolLoad(pairs, oversized, str(path))


def load_dev_set(path) -> list[DevItem]:
    items, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", path, lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("record is not a JSON object", path, lineno)
            rid = _require(obj, "id", str, path, lineno)
            if rid in seen:
                raise DuplicateIdError(rid, path)
            seen.add(rid)
            items.append(DevItem(rid, _require(obj, "question", str, path, lineno), _require(obj, "answer", str, path, lineno)))
    return items


def filter_correct(pairs: Iterable[InstructionPair]) -> list[InstructionPair]:
    return [p for p in pairs if p.correct]


def tag_by_difficulty(pairs: Iterable[InstructionPair], rules: Mapping[str, str] = DEFAULT_DIFFICULTY_RULES):
    pairs = list(pairs)
    bad = {v for v in rules.values() if v not in DIFFICULTIES}
    if bad:
        raise InvalidArgumentError(f"unknown difficulty level(s) in rules: {sorted(bad)}")
    missing = {p.source for p in pairs if p.source not in rules}
    if missing:
        raise UnmappedSourceError(missing)
    return [replace(p, difficulty=rules[p.source]) for p in pairs]


@dataclass(frozen=True)
class Batch:
    examples: tuple[InstructionPair, ...]
    realized_fraction_sys1: float
    step: int = 0

    def __len__(self):
        return len(self.examples)

    def count(self, tag: str) -> int:
        return sum(1 for e in self.examples if e.system_tag == tag)


class DataPool:
    """Training pools keyed by system tag, plus the dev set.

    Pools are stored as tuples and never mutated after construction.
    """

    def __init__(self, pools: Mapping[str, Sequence[InstructionPair]], dev_set: Sequence[DevItem] = ()):
        unknown = set(pools) - set(SYSTEMS)
        if unknown:
            raise InvalidArgumentError(f"unknown pool tag(s): {sorted(unknown)}")
        self.pools = {tag: tuple(pools.get(tag, ())) for tag in SYSTEMS}
        self.dev_set = tuple(dev_set)
        for tag, items in self.pools.items():
            wrong = [p.id for p in items if p.system_tag != tag]
            if wrong:
                raise InvalidArgumentError(f"pool {tag} holds records tagged otherwise: {wrong[:5]}")

    def check_ready(self, need_dev: bool = False):
        for tag in SYSTEMS:
            if not self.pools[tag]:
                raise EmptyPoolError(f"the {tag} training pool is empty")
        if need_dev and not self.dev_set:
            raise EmptyPoolError("the dev set is empty")
        return self

    @classmethod
    def from_files(cls, sys1_path, sys2_path, dev_path=None, *, max_tokens=8192, tokenizer="whitespace", keep_correct=True):
        pools = {}
        for tag, path in zip(SYSTEMS, (sys1_path, sys2_path)):
            pairs = load_pool(path, tag, max_tokens=max_tokens, tokenizer=tokenizer).pairs
            pools[tag] = filter_correct(pairs) if keep_correct else pairs
        dev = load_dev_set(dev_path) if dev_path else ()
        return cls(pools, dev)

    @classmethod
    def synthetic(cls, per_system: int = 4):
        """Placeholder pools for simulated runs with no data on disk."""
        pools = {
            tag: [
                InstructionPair(f"{tag}-{i}", f"q{i}", f"r{i}", tag, "synthetic", True, 1, None)
                for i in range(per_system)
            ]
            for tag in SYSTEMS
        }
        return cls(pools)


def batch_rng(seed: int, step: int) -> np.random.Generator:
    """PCG64 stream keyed on ``(seed, step)``; identical on every platform."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & _U64, step & _U64])))


def sample_batch(pool: DataPool, alpha, b: int, seed: int, step: int) -> Batch:
    """Draw ``b`` examples; each slot picks a source with probability ``alpha``.

    Slot ``i`` consumes the ``i``-th uniform draw for its source and the
    ``i``-th uniform draw for the example index, so the batch is a pure
    function of (pool, alpha, b, seed, step).
    """
    a = _check_simplex(alpha)
    if a.size != len(SYSTEMS):
        raise InvalidArgumentError(f"alpha must have {len(SYSTEMS)} entries, got {a.size}")
    if b < 1:
        raise InvalidArgumentError("batch size must be positive")
    rng = batch_rng(seed, step)
    u_tag = rng.random(b)
    u_idx = rng.random(b)
    cdf = np.cumsum(a)
    cdf[-1] = 1.0
    choice = np.searchsorted(cdf, u_tag, side="right")
    examples = []
    for slot in range(b):
        tag = SYSTEMS[choice[slot]]
        items = pool.pools[tag]
        if not items:
            raise EmptyPoolError(f"sampled from the empty {tag} pool")
        examples.append(items[int(u_idx[slot] * len(items))])
    frac = float(np.count_nonzero(choice == 0)) / b
    return Batch(tuple(examples), frac, step)
