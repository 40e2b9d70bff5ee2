"""Knowledge-base data model, tokenization, feature hashing, and JSONL loaders."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

PROVENANCES = ("seed", "exact", "rewritten", "bad")

HIGH_OVERLAP = "HighOverlap"
MULTIPLE_CATEGORIES = "MultipleCategories"
AMBIGUOUS_SUBSTRING = "AmbiguousSubstring"
LOW_OVERLAP = "LowOverlap"
OVERLAP_CATEGORIES = (HIGH_OVERLAP, MULTIPLE_CATEGORIES, AMBIGUOUS_SUBSTRING, LOW_OVERLAP)

_SPLIT_RE = re.compile(r"[\W_]+", re.UNICODE)
_PAREN_SUFFIX_RE = re.compile(r"\s*\(([^()]*)\)\s*$")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 1 << 64


class DataError(ValueError):
    """Malformed or inconsistent input data (carries file/line context in the message)."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character, dropping empty fragments."""
    return [t for t in _SPLIT_RE.split(text.lower()) if t]


@lru_cache(maxsize=1 << 20)
def _fnv1a64(token: str) -> int:
    h = _FNV_OFFSET
    for b in token.encode("utf-8"):
        h ^= b
        h = (h * _FNV_PRIME) % _U64
    return h


def hash_token(token: str, num_buckets: int) -> int:
    """FNV-1a 64-bit of the token's UTF-8 bytes, reduced modulo num_buckets."""
    if num_buckets < 2:
        raise ValueError(f"num_buckets must be >= 2, got {num_buckets}")
    return _fnv1a64(token) % num_buckets


@dataclass(frozen=True)
class Entity:
    id: str
    title: str
    description: str
    domain: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("entity id must be nonempty")
        if not tokenize(self.title):
            raise ValueError(f"entity {self.id!r}: title has no tokens")


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    domain: str


@dataclass(frozen=True)
class MentionExample:
    id: str
    context_left: str
    mention: str
    context_right: str
    entity_id: str
    domain: str
    provenance: str
    overlap_category: str | None = None

    def __post_init__(self) -> None:
        if not self.mention:
            raise ValueError(f"example {self.id!r}: mention must be nonempty")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"example {self.id!r}: unknown provenance {self.provenance!r}")
        if self.overlap_category is not None and self.overlap_category not in OVERLAP_CATEGORIES:
            raise ValueError(f"example {self.id!r}: unknown category {self.overlap_category!r}")


class Domain:
    """A named entity dictionary plus its raw document corpus.

    Immutable after construction; safe to share across workers.
    """

    def __init__(self, name: str, entities: Iterable[Entity], documents: Iterable[Document] = ()):
        self.name = name
        self.entities: tuple[Entity, ...] = tuple(entities)
        self.documents: tuple[Document, ...] = tuple(documents)
        self.by_id: dict[str, Entity] = {}
        for ent in self.entities:
            if ent.domain != name:
                raise ValueError(f"entity {ent.id!r} belongs to domain {ent.domain!r}, not {name!r}")
            if ent.id in self.by_id:
                raise DataError(f"duplicate entity id {ent.id!r} in domain {name!r}")
            self.by_id[ent.id] = ent
        self._title_index: dict[tuple[str, ...], str] | None = None
        self._vocabulary: frozenset[str] | None = None

    def __len__(self) -> int:
        return len(self.entities)

    def resolve(self, entity_id: str) -> Entity:
        try:
            return self.by_id[entity_id]
        except KeyError:
            raise KeyError(f"unknown entity id {entity_id!r} in domain {self.name!r}") from None

    def title_index(self) -> dict[tuple[str, ...], str]:
        """Map title token sequence -> lexicographically smallest entity id bearing it."""
        if self._title_index is None:
            index: dict[tuple[str, ...], str] = {}
            for ent in self.entities:
                key = tuple(tokenize(ent.title))
                if key not in index or ent.id < index[key]:
                    index[key] = ent.id
            self._title_index = index
        return self._title_index

    def vocabulary(self) -> frozenset[str]:
        """All tokens observed in this domain's documents, titles, and descriptions."""
        if self._vocabulary is None:
            vocab: set[str] = set()
            for doc in self.documents:
                vocab.update(tokenize(doc.text))
            for ent in self.entities:
                vocab.update(tokenize(ent.title))
                vocab.update(tokenize(ent.description))
            self._vocabulary = frozenset(vocab)
        return self._vocabulary


def split_disambiguation(title: str) -> tuple[str, str | None]:
    """Split a raw title into (base, parenthesized suffix) or (title, None)."""
    m = _PAREN_SUFFIX_RE.search(title)
    if m is None or m.start() == 0:
        return title, None
    return title[: m.start()], m.group(1)


def categorize_overlap(mention: str, title: str) -> str:
    """Assign one of the four mention/title surface-overlap categories.

    Tested in order: token sequences equal; title is mention plus a
    parenthesized suffix; mention tokens form a contiguous run inside the
    title tokens; everything else.
    """
    mention_toks = tokenize(mention)
    title_toks = tokenize(title)
    if not mention_toks:
        raise ValueError(f"mention {mention!r} has no tokens")
    if not title_toks:
        raise ValueError(f"title {title!r} has no tokens")
    if mention_toks == title_toks:
        return HIGH_OVERLAP
    base, suffix = split_disambiguation(title)
    if suffix is not None and tokenize(base) == mention_toks:
        return MULTIPLE_CATEGORIES
    if _is_contiguous_sublist(mention_toks, title_toks):
        return AMBIGUOUS_SUBSTRING
    return LOW_OVERLAP


def _is_contiguous_sublist(needle: list[str], haystack: list[str]) -> bool:
    n = len(needle)
    return any(haystack[i : i + n] == needle for i in range(len(haystack) - n + 1))


def _iter_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fin:
        for lineno, line in enumerate(fin, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: malformed JSON on line {lineno}: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise DataError(f"{path}: line {lineno} is not an object")
            yield lineno, record


def _require(record: dict, field: str, path: str | Path, lineno: int) -> str:
    try:
        value = record[field]
    except KeyError:
        raise DataError(f"{path}: line {lineno} missing field {field!r}") from None
    if not isinstance(value, str):
        raise DataError(f"{path}: line {lineno} field {field!r} is not a string")
    return value


def load_entities(path: str | Path) -> list[Entity]:
    """Load entities from JSONL; duplicate ids within a domain are rejected."""
    entities: list[Entity] = []
    seen: set[tuple[str, str]] = set()
    for lineno, record in _iter_jsonl(path):
        ent = Entity(
            id=_require(record, "id", path, lineno),
            title=_require(record, "title", path, lineno),
            description=_require(record, "description", path, lineno),
            domain=_require(record, "domain", path, lineno),
        )
        key = (ent.domain, ent.id)
        if key in seen:
            raise DataError(f"{path}: duplicate id {ent.id!r} on line {lineno}")
        seen.add(key)
        entities.append(ent)
    return entities


def load_documents(path: str | Path) -> list[Document]:
    """Load raw documents from JSONL."""
    docs: list[Document] = []
    for lineno, record in _iter_jsonl(path):
        docs.append(
            Document(
                id=_require(record, "id", path, lineno),
                text=_require(record, "text", path, lineno),
                domain=_require(record, "domain", path, lineno),
            )
        )
    return docs


def load_domain(entities_path: str | Path, documents_path: str | Path | None = None) -> Domain:
    """Assemble a Domain from entity and (optional) document files.

    The files must describe exactly one domain.
    """
    entities = load_entities(entities_path)
    if not entities:
        raise DataError(f"{entities_path}: no entities")
    names = {e.domain for e in entities}
    documents: list[Document] = []
    if documents_path is not None:
        documents = load_documents(documents_path)
        names |= {d.domain for d in documents}
    if len(names) != 1:
        raise DataError(f"expected a single domain, found {sorted(names)}")
    return Domain(names.pop(), entities, documents)


def load_mentions(path: str | Path, kb: Domain) -> list[MentionExample]:
    """Load mention examples, resolving entity ids and assigning overlap categories."""
    examples: list[MentionExample] = []
    for lineno, record in _iter_jsonl(path):
        example_id = _require(record, "id", path, lineno)
        entity_id = _require(record, "entity_id", path, lineno)
        if entity_id not in kb.by_id:
            raise DataError(
                f"{path}: example {example_id!r} (line {lineno}) references "
                f"unknown entity {entity_id!r}"
            )
        provenance = record.get("provenance", "seed")
        example = MentionExample(
            id=example_id,
            context_left=_require(record, "context_left", path, lineno),
            mention=_require(record, "mention", path, lineno),
            context_right=_require(record, "context_right", path, lineno),
            entity_id=entity_id,
            domain=_require(record, "domain", path, lineno),
            provenance=provenance,
        )
        category = categorize_overlap(example.mention, kb.by_id[entity_id].title)
        examples.append(replace(example, overlap_category=category))
    return examples


def mention_to_record(example: MentionExample) -> dict:
    return {
        "id": example.id,
        "context_left": example.context_left,
        "mention": example.mention,
        "context_right": example.context_right,
        "entity_id": example.entity_id,
        "domain": example.domain,
        "provenance": example.provenance,
    }


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    """Write records as JSONL atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fout:
        for record in records:
            fout.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            fout.write("\n")
    tmp.replace(path)


def write_mentions(path: str | Path, examples: Sequence[MentionExample]) -> None:
    write_jsonl(path, (mention_to_record(e) for e in examples))
