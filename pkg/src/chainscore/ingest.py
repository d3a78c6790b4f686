"""Dataset loaders that normalize multi-hop QA corpora into EvalInstances.

Three raw shapes are supported:

- hotpotqa: a JSON array; each item carries `context` as [title, [sentences]]
  pairs plus `supporting_facts`. Distractor setting, hop count fixed at 2.
- musique: JSONL; paragraphs are unsplit text with `is_supporting`; ids are
  prefixed "<N>hop__"; `answerable` filters the answerable setting.
- 2wiki: hotpotqa-shaped JSON array with a `type` field that maps to a hop
  count (comparison/inference/compositional -> 2, bridge_comparison -> 4).

Documents are numbered 1..k in file order. Unreadable paths raise the
builtin OSError; malformed records raise SchemaError with the item index.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .model import Dataset, Document, EvalInstance

SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+(?=[A-Z])")

TWOWIKI_TYPE_HOPS = {
    "comparison": 2,
    "inference": 2,
    "compositional": 2,
    "bridge_comparison": 4,
}

MUSIQUE_HOP_RE = re.compile(r"^(\d+)hop")


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    def __init__(self, index: int, fieldname: str, message: str = ""):
        self.index = index
        self.fieldname = fieldname
        super().__init__(
            f"item {index}: bad field {fieldname!r}" + (f": {message}" if message else "")
        )


@dataclass(frozen=True)
class DatasetConfig:
    dataset: Dataset
    path: str
    setting: str = "default"
    limit: int | None = None
    default_hops: int = 2

    def __post_init__(self) -> None:
        if self.setting not in ("default", "distractor", "answerable"):
            raise ConfigError(f"unknown setting {self.setting!r}")
        if self.setting == "distractor" and self.dataset is not Dataset.HOTPOTQA:
            raise ConfigError("distractor setting applies to hotpotqa only")
        if self.setting == "answerable" and self.dataset is not Dataset.MUSIQUE:
            raise ConfigError("answerable setting applies to musique only")
        if self.limit is not None and self.limit < 0:
            raise ConfigError("limit must be non-negative")


def split_sentences(text: str) -> list[str]:
    """Terminal-punctuation split used for unsegmented paragraph text."""
    parts = [p.strip() for p in SENTENCE_SPLIT_RE.split(text.strip())]
    return [p for p in parts if p]


def _context_documents(index: int, context: list) -> tuple[Document, ...]:
    docs = []
    for k, pair in enumerate(context, start=1):
        try:
            title, sentences = pair
        except (TypeError, ValueError) as exc:
            raise SchemaError(index, "context", str(exc)) from exc
        if not isinstance(sentences, list):
            raise SchemaError(index, "context", "sentences must be a list")
        docs.append(
            Document(doc_id=k, title=str(title), sentences=tuple(str(s) for s in sentences))
        )
    return tuple(docs)


def _load_hotpot_shaped(path: str, dataset: Dataset, default_hops: int) -> list[EvalInstance]:
    with open(path, encoding="utf-8") as fh:
        items = json.load(fh)
    if not isinstance(items, list):
        raise SchemaError(0, "root", "expected a JSON array")

    out = []
    for i, item in enumerate(items):
        try:
            instance_id = str(item["_id"])
            question = str(item["question"])
            answer = str(item["answer"])
            context = item["context"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(i, str(exc)) from exc
        documents = _context_documents(i, context)
        title_to_id = {d.title: d.doc_id for d in documents}
        supporting = frozenset(
            title_to_id[fact[0]]
            for fact in item.get("supporting_facts", [])
            if fact and fact[0] in title_to_id
        )
        if dataset is Dataset.HOTPOTQA:
            hops = 2
        else:
            hops = TWOWIKI_TYPE_HOPS.get(str(item.get("type", "")), default_hops)
        out.append(
            EvalInstance(
                instance_id=instance_id,
                question=question,
                documents=documents,
                gold_answer=answer,
                hop_count=hops,
                dataset=dataset,
                supporting_doc_ids=supporting,
            )
        )
    return out


def _load_musique(path: str, answerable_only: bool, default_hops: int) -> list[EvalInstance]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                item = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(i, "line", str(exc)) from exc
            try:
                instance_id = str(item["id"])
                question = str(item["question"])
                answer = str(item["answer"])
                paragraphs = item["paragraphs"]
            except (KeyError, TypeError) as exc:
                raise SchemaError(i, str(exc)) from exc
            if answerable_only and not item.get("answerable", True):
                continue

            documents = []
            supporting = set()
            for k, para in enumerate(paragraphs, start=1):
                try:
                    text = str(para["paragraph_text"])
                    title = str(para.get("title", ""))
                except (KeyError, TypeError) as exc:
                    raise SchemaError(i, "paragraphs", str(exc)) from exc
                sentences = split_sentences(text) or [text.strip() or title]
                documents.append(
                    Document(doc_id=k, title=title, sentences=tuple(sentences))
                )
                if para.get("is_supporting"):
                    supporting.add(k)

            match = MUSIQUE_HOP_RE.match(instance_id)
            hops = int(match.group(1)) if match else default_hops
            out.append(
                EvalInstance(
                    instance_id=instance_id,
                    question=question,
                    documents=tuple(documents),
                    gold_answer=answer,
                    gold_aliases=tuple(str(a) for a in item.get("answer_aliases", [])),
                    hop_count=hops,
                    dataset=Dataset.MUSIQUE,
                    supporting_doc_ids=frozenset(supporting),
                )
            )
    return out


def load_dataset(config: DatasetConfig) -> list[EvalInstance]:
    """Load and normalize; limit truncates deterministically from the front."""
    if config.dataset is Dataset.MUSIQUE:
        instances = _load_musique(
            config.path, config.setting == "answerable", config.default_hops
        )
    else:
        instances = _load_hotpot_shaped(config.path, config.dataset, config.default_hops)
    if config.limit is not None:
        instances = instances[: config.limit]
    return instances


def render_document_block(documents: tuple[Document, ...] | list[Document]) -> str:
    """Format documents the way the generation prompt expects them.

    Sentences are wrapped in repeated-opening tags (<S1>text<S1>), matching
    the tag convention the generation template documents.
    """
    blocks = []
    for doc in documents:
        content = " ".join(
            f"<S{i}>{sent}<S{i}>" for i, sent in enumerate(doc.sentences, start=1)
        )
        blocks.append(f"Document [{doc.doc_id}]\nTitle: {doc.title}\nContent: {content}")
    return "\n\n".join(blocks)


_DOC_HEADER_RE = re.compile(r"^Document \[(\d+)\]$", re.MULTILINE)
_DOC_SENT_RE = re.compile(r"<S(\d+)>(.*?)<S\1>", re.DOTALL)


def parse_document_block(text: str) -> tuple[Document, ...]:
    """Inverse of render_document_block (round-trips exactly)."""
    headers = list(_DOC_HEADER_RE.finditer(text))
    docs = []
    for n, header in enumerate(headers):
        end = headers[n + 1].start() if n + 1 < len(headers) else len(text)
        body = text[header.end():end]
        title_match = re.search(r"^Title: (.*)$", body, re.MULTILINE)
        title = title_match.group(1) if title_match else ""
        sentences = [m.group(2) for m in _DOC_SENT_RE.finditer(body)]
        docs.append(
            Document(
                doc_id=int(header.group(1)),
                title=title,
                sentences=tuple(sentences),
            )
        )
    return tuple(docs)
