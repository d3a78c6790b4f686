"""Stage 2: turn a long-form answer into labelled atomic propositions.

The transformation model rewrites the statement sequence as a JSON object of
short propositions plus a conjunction over their labels. This module owns
that call and its parsing, the per-proposition triple extraction and question
NER calls backing the chain search, and entity normalization, which defines
entity identity for the whole system.

Parsing is defensive: models wrap JSON in fences or prose, so we parse the
raw text first and fall back to the first balanced {...} / [...] block. Each
LLM-backed operation retries exactly once with a strictness suffix appended
(a changed prompt, so the retry is not served the cached bad completion).
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from typing import Callable

from .gateway import Gateway, LlmRequest, extract_citations
from .model import EntityKey, LongFormAnswer, Proposition, PropositionSet, Triple
from .prompts import STRICT_RETRY_SUFFIX, TemplateId

log = logging.getLogger(__name__)


class TransformError(Exception):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class TransformParseError(TransformError):
    pass


class TransformEmpty(TransformError):
    pass


class NoTriples(TransformError):
    """The extractor found no triples; caller falls back to surface spans."""


class TripleParseError(TransformError):
    pass


class NerParseError(TransformError):
    pass


_ARTICLES = ("a", "an", "the")

# Capitalized sentence-starters that are not entities on their own.
_SPAN_STOPWORDS = {
    "a", "an", "the", "i", "it", "he", "she", "we", "they", "you",
    "this", "that", "these", "those", "there", "its", "his", "her",
    "their", "if", "when", "then", "step",
}


def normalize_entity(surface: str) -> EntityKey:
    """Collapse a surface form to its matching key.

    NFKC fold, casefold, punctuation to spaces, whitespace collapse, leading
    articles dropped. Idempotent: normalizing a key returns the same key.
    Empty surfaces produce an empty key, which matches nothing.
    """
    text = unicodedata.normalize("NFKC", surface).casefold()
    text = "".join(ch if (ch.isalnum() or ch.isspace()) else " " for ch in text)
    tokens = text.split()
    while tokens and tokens[0] in _ARTICLES:
        tokens.pop(0)
    return EntityKey(key=" ".join(tokens), surface_forms=frozenset({surface}))


def is_token_run(needle: tuple[str, ...], haystack: tuple[str, ...]) -> bool:
    """True when needle's tokens appear contiguously inside haystack."""
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    for i in range(len(haystack) - n + 1):
        if haystack[i : i + n] == needle:
            return True
    return False


def keys_match(a: str, b: str) -> bool:
    """Entity-identity predicate over normalized keys.

    Equal keys match; otherwise one key's tokens must appear as a contiguous
    run inside the other's ("puerto rico trench" vs "the Puerto Rico Trench
    system"). Empty keys never match.
    """
    if not a or not b:
        return False
    if a == b:
        return True
    ta, tb = tuple(a.split()), tuple(b.split())
    return is_token_run(ta, tb) or is_token_run(tb, ta)


def key_in_tokens(key: str, tokens: tuple[str, ...]) -> bool:
    """True when the key's token run appears contiguously in the tokens."""
    if not key:
        return False
    return is_token_run(tuple(key.split()), tokens)


def text_tokens(text: str) -> tuple[str, ...]:
    """Normalized token stream of free text (for key-in-text matching)."""
    folded = unicodedata.normalize("NFKC", text).casefold()
    folded = "".join(ch if (ch.isalnum() or ch.isspace()) else " " for ch in folded)
    return tuple(folded.split())


_CAP_SPAN_RE = re.compile(r"[A-Z][\w.'’-]*(?:\s+[A-Z][\w.'’-]*)*")


def fallback_entity_spans(text: str) -> list[EntityKey]:
    """Capitalized-run fallback when triple extraction yields nothing.

    Pronouns and other capitalized sentence-starters are filtered; duplicates
    collapse to the first surface form seen.
    """
    out: list[EntityKey] = []
    seen: set[str] = set()
    for match in _CAP_SPAN_RE.finditer(text):
        key = normalize_entity(match.group(0))
        if not key.key or key.key in _SPAN_STOPWORDS:
            continue
        if key.key in seen:
            continue
        seen.add(key.key)
        out.append(key)
    return out


def _first_json_block(raw: str, opener: str, closer: str) -> str | None:
    start = raw.find(opener)
    while start != -1:
        depth = 0
        in_string = False
        escape = False
        for i in range(start, len(raw)):
            ch = raw[i]
            if in_string:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == opener:
                depth += 1
            elif ch == closer:
                depth -= 1
                if depth == 0:
                    return raw[start : i + 1]
        start = raw.find(opener, start + 1)
    return None


_TRAILING_COMMA_RE = re.compile(r",(\s*[}\]])")


def try_parse_json(raw: str, opener: str = "{", closer: str = "}"):
    """Parse raw as JSON, else the first balanced block; None on failure.

    Trailing commas (which the transformation prompt's own example contains)
    are stripped before parsing.
    """
    candidates = [raw]
    fenced = re.findall(r"```(?:json)?\s*(.*?)```", raw, re.DOTALL)
    candidates.extend(fenced)
    block = _first_json_block(raw, opener, closer)
    if block is not None:
        candidates.append(block)
    for cand in candidates:
        cand = _TRAILING_COMMA_RE.sub(r"\1", cand.strip())
        try:
            return json.loads(cand)
        except json.JSONDecodeError:
            continue
    return None


_LABEL_TOKEN_RE = re.compile(r"P\d+")
_EXPR_NOISE_RE = re.compile(r"(?:P\d+|∧|\bAND\b|\band\b|[()&+,\s])")


def _parse_expression(expr: str, known: list[str]) -> list[str]:
    residue = _EXPR_NOISE_RE.sub("", expr)
    if residue:
        raise TransformParseError(f"unparseable expression {expr!r}", raw=expr)
    tokens = _LABEL_TOKEN_RE.findall(expr)
    for tok in tokens:
        if tok not in known:
            raise TransformParseError(f"expression references unknown label {tok}", raw=expr)
    return tokens


def parse_horn_output(raw: str) -> PropositionSet:
    """Parse the transformation model's JSON into a PropositionSet.

    Labels are reissued densely as P1..Pn in the object's insertion order
    (models sometimes skip numbers); expression tokens are remapped through
    the same renaming. Citation tokens inside proposition texts are parsed
    out into Citation values.
    """
    obj = try_parse_json(raw)
    if not isinstance(obj, dict):
        raise TransformParseError("no JSON object in transformation output", raw=raw)
    props_obj = obj.get("propositions")
    expr = obj.get("logical_expression", "")
    if not isinstance(props_obj, dict):
        raise TransformParseError("missing propositions object", raw=raw)
    if not props_obj:
        raise TransformEmpty("empty propositions object", raw=raw)

    rename: dict[str, str] = {}
    propositions: list[Proposition] = []
    for n, (old_label, text) in enumerate(props_obj.items(), start=1):
        if not isinstance(text, str):
            raise TransformParseError(f"proposition {old_label!r} is not text", raw=raw)
        new_label = f"P{n}"
        rename[str(old_label)] = new_label
        clean, citations = extract_citations(text)
        propositions.append(Proposition(label=new_label, text=clean, citations=citations))

    if not isinstance(expr, str) or not expr.strip():
        # Degenerate but recoverable: treat the conjunction as all labels.
        tokens = [p.label for p in propositions]
    else:
        old_tokens = _parse_expression(expr, list(rename))
        tokens = [rename[t] for t in old_tokens]

    return PropositionSet(propositions=tuple(propositions), horn_expression=tuple(tokens))


def _rebuild_reasoning(answer: LongFormAnswer) -> str:
    return " ".join(s.render_with_citations() for s in answer.statements)


def _complete_with_strict_retry(
    gateway: Gateway,
    request: LlmRequest,
    parse: Callable[[str], object],
    error: type[TransformError],
    retry_binding: str,
):
    raw = gateway.complete(request).text
    try:
        return parse(raw)
    except TransformError as first:
        if isinstance(first, (TransformEmpty, NoTriples)):
            raise
        log.info("%s; retrying with strict suffix", first)
    # The suffix rides on an input binding so the template body stays
    # untouched; the changed prompt also dodges the cached bad completion.
    strict_bindings = dict(request.bindings)
    strict_bindings[retry_binding] = strict_bindings[retry_binding] + STRICT_RETRY_SUFFIX
    strict = LlmRequest(
        model_id=request.model_id,
        template_id=request.template_id,
        bindings=strict_bindings,
        temperature=request.temperature,
        seed=request.seed,
        max_output=request.max_output,
    )
    raw2 = gateway.complete(strict).text
    try:
        return parse(raw2)
    except TransformError as exc:
        raise error(str(exc), raw=raw2) from exc


def transform(
    question: str,
    answer: LongFormAnswer,
    gateway: Gateway,
    model_id: str,
    temperature: float = 1.0,
    seed: int | None = None,
) -> PropositionSet:
    """Run the logic-transformation call for one instance."""
    request = LlmRequest(
        model_id=model_id,
        template_id=TemplateId.TRANSFORM,
        bindings={"question": question, "reasoning": _rebuild_reasoning(answer)},
        temperature=temperature,
        seed=seed,
    )
    result = _complete_with_strict_retry(
        gateway, request, parse_horn_output, TransformParseError, "reasoning"
    )
    assert isinstance(result, PropositionSet)
    return result


def parse_triples(raw: str) -> list[Triple]:
    obj = try_parse_json(raw, opener="[", closer="]")
    if obj is None:
        obj = try_parse_json(raw)
    if isinstance(obj, dict):
        obj = obj.get("triples")
    if not isinstance(obj, list):
        raise TripleParseError("no JSON array in triple output", raw=raw)
    if not obj:
        raise NoTriples("extractor returned no triples", raw=raw)
    triples = []
    for row in obj:
        if not isinstance(row, dict):
            raise TripleParseError(f"triple row is not an object: {row!r}", raw=raw)
        try:
            triples.append(
                Triple(
                    subject=str(row["subject"]).strip(),
                    predicate=str(row["predicate"]).strip(),
                    object=str(row["object"]).strip(),
                )
            )
        except KeyError as exc:
            raise TripleParseError(f"triple row missing {exc}", raw=raw) from exc
    return triples


def extract_triples(
    proposition_text: str,
    gateway: Gateway,
    model_id: str,
    temperature: float = 1.0,
    seed: int | None = None,
) -> list[Triple]:
    """Triple extraction for one proposition sentence.

    Raises NoTriples when the extractor finds nothing; callers fall back to
    fallback_entity_spans. Results are cached per proposition text by way of
    the gateway's content-addressed cache.
    """
    request = LlmRequest(
        model_id=model_id,
        template_id=TemplateId.TRIPLE_EXTRACT,
        bindings={"sentence": proposition_text},
        temperature=temperature,
        seed=seed,
    )
    result = _complete_with_strict_retry(
        gateway, request, parse_triples, TripleParseError, "sentence"
    )
    assert isinstance(result, list)
    return result


def parse_question_entities(raw: str) -> list[EntityKey]:
    obj = try_parse_json(raw)
    if not isinstance(obj, dict) or not isinstance(obj.get("entities"), list):
        raise NerParseError("no entities object in NER output", raw=raw)
    out = []
    seen: set[str] = set()
    for row in obj["entities"]:
        if not isinstance(row, dict) or "text" not in row:
            raise NerParseError(f"entity row malformed: {row!r}", raw=raw)
        key = normalize_entity(str(row["text"]))
        if key.key and key.key not in seen:
            seen.add(key.key)
            out.append(key)
    return out


def extract_question_entities(
    question: str,
    gateway: Gateway,
    model_id: str,
    temperature: float = 1.0,
    seed: int | None = None,
) -> list[EntityKey]:
    """Question NER; empty results degrade to capitalized-span fallback."""
    request = LlmRequest(
        model_id=model_id,
        template_id=TemplateId.QUESTION_NER,
        bindings={"question": question},
        temperature=temperature,
        seed=seed,
    )
    result = _complete_with_strict_retry(
        gateway, request, parse_question_entities, NerParseError, "question"
    )
    assert isinstance(result, list)
    if not result:
        return fallback_entity_spans(question)
    return result
