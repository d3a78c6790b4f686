"""Backward chain construction over the proposition graph.

The search asks: starting from a proposition that carries the gold answer,
can we walk entity bridges backward through context propositions until we
touch an entity mentioned in the question?

Node identity and adjacency are entity-level. Each proposition node carries
the normalized keys of its extracted triple arguments (or capitalized-span
fallbacks) plus its normalized text tokens. Gold/question contact counts a
key match or a literal key run inside the text; adjacency between nodes is
key-to-key only.

Walk rules, applied depth-first from each candidate in ascending label order:

- arriving at a node consumes the bridge key and every node key matching it
  (the anchors); the remaining keys become bridge candidates
- a bridge matching any already-consumed key is pruned and marks the search
  circular (checked before adjacency)
- a node appears at most once per path; re-encounters are skipped silently
- arrival at a node containing a question key succeeds and ends that path

Among successful paths the shortest wins, ties broken by the numerically
smallest label sequence. Verdicts: Connected when any path succeeded, else
Circular when some branch was pruned on a consumed key, else Broken when the
search extended at least one hop, else Deviated.

A work budget (default 1e6 expansion checks) guarantees termination on
adversarial graphs; exhaustion is surfaced, never silently truncated.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass

from .model import ChainResult, ChainStatus, EntityKey, PropositionSet, TraceStep, Triple
from .transform import (
    fallback_entity_spans,
    key_in_tokens,
    keys_match,
    normalize_entity,
    text_tokens,
)

DEFAULT_WORK_BUDGET = 1_000_000

_LABEL_NUM_RE = re.compile(r"^P(\d+)$")


def _label_num(label: str) -> tuple[int, str]:
    match = _LABEL_NUM_RE.match(label)
    return (int(match.group(1)), "") if match else (1 << 30, label)


@dataclass(frozen=True)
class GraphNode:
    label: str
    keys: tuple[str, ...]
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class PropositionGraph:
    nodes: tuple[GraphNode, ...]
    gold_keys: tuple[str, ...]
    question_keys: tuple[str, ...]


def node_keys_from_triples(triples: list[Triple]) -> list[str]:
    keys: list[str] = []
    for triple in triples:
        for surface in (triple.subject, triple.object):
            key = normalize_entity(surface).key
            if key and key not in keys:
                keys.append(key)
    return keys


def build_graph(
    prop_set: PropositionSet,
    triples_by_label: dict[str, list[Triple]],
    question_entities: list[EntityKey],
    gold_answer: str,
    gold_aliases: tuple[str, ...] = (),
) -> PropositionGraph:
    """Assemble the search graph for one instance.

    Propositions without triples fall back to capitalized-span entities, so
    every node has a chance to participate.
    """
    nodes = []
    for prop in prop_set.propositions:
        keys = node_keys_from_triples(triples_by_label.get(prop.label, []))
        if not keys:
            keys = [ek.key for ek in fallback_entity_spans(prop.text)]
        nodes.append(
            GraphNode(label=prop.label, keys=tuple(keys), tokens=text_tokens(prop.text))
        )

    gold_keys: list[str] = []
    for surface in (gold_answer, *gold_aliases):
        key = normalize_entity(surface).key
        if key and key not in gold_keys:
            gold_keys.append(key)

    question_keys: list[str] = []
    for entity in question_entities:
        if entity.key and entity.key not in question_keys:
            question_keys.append(entity.key)

    return PropositionGraph(
        nodes=tuple(nodes),
        gold_keys=tuple(gold_keys),
        question_keys=tuple(question_keys),
    )


def node_contains_key(node: GraphNode, key: str) -> bool:
    """Contact predicate: a key match or a literal run in the node's text."""
    return any(keys_match(key, k) for k in node.keys) or key_in_tokens(key, node.tokens)


def candidate_labels(graph: PropositionGraph) -> list[str]:
    """Gold-bearing propositions, ascending label order."""
    out = []
    for node in sorted(graph.nodes, key=lambda n: _label_num(n.label)):
        if any(node_contains_key(node, g) for g in graph.gold_keys):
            out.append(node.label)
    return out


class _Search:
    def __init__(
        self,
        graph: PropositionGraph,
        candidates: list[str],
        prefer_shortest: bool,
        budget: int,
    ):
        self.graph = graph
        self.nodes = {n.label: n for n in graph.nodes}
        self.candidates = candidates
        self.prefer_shortest = prefer_shortest
        self.work = budget

        candidate_set = set(candidates)
        self.context_labels = {
            lab for lab in self.nodes if lab not in candidate_set
        }
        # token -> context labels owning a key containing that token; any
        # true key match shares at least one token with the bridge, so the
        # union over bridge tokens over-approximates adjacency.
        self.token_index: dict[str, set[str]] = defaultdict(set)
        for lab in self.context_labels:
            for key in self.nodes[lab].keys:
                for tok in key.split():
                    self.token_index[tok].add(lab)

        self.trace: list[TraceStep] = []
        self.successes: list[tuple[str, ...]] = []
        self.best_len: int | None = None
        self.cycle = False
        self.extended = False
        self.exhausted = False

        self.path: list[str] = []
        self.on_path: set[str] = set()
        self.used: set[str] = set()

    def _spend(self, units: int = 1) -> bool:
        self.work -= units
        if self.work < 0:
            self.exhausted = True
        return not self.exhausted

    def _stop(self) -> bool:
        return self.exhausted or (bool(self.successes) and not self.prefer_shortest)

    def _contains_question(self, node: GraphNode) -> bool:
        return any(node_contains_key(node, q) for q in self.graph.question_keys)

    def _record_success(self) -> None:
        path = tuple(self.path)
        self.successes.append(path)
        if self.best_len is None or len(path) < self.best_len:
            self.best_len = len(path)

    def _expansions(self, node: GraphNode, bridges: list[str]) -> list[tuple[str, str]]:
        out: list[tuple[str, str]] = []
        for bridge in sorted(set(bridges)):
            if not self._spend():
                return out
            if any(keys_match(bridge, used_key) for used_key in self.used):
                self.cycle = True
                continue
            seen: set[str] = set()
            for tok in bridge.split():
                seen |= self.token_index.get(tok, set())
            for lab in sorted(seen, key=_label_num):
                if not self._spend():
                    return out
                if lab in self.on_path:
                    continue
                if any(keys_match(bridge, k) for k in self.nodes[lab].keys):
                    out.append((bridge, lab))
        return out

    def _run_from(self, start_label: str) -> None:
        node = self.nodes[start_label]
        gold_keys = self.graph.gold_keys
        via = next(g for g in gold_keys if node_contains_key(node, g))
        anchors = {
            k for k in node.keys if any(keys_match(g, k) for g in gold_keys)
        }

        self.trace.append(TraceStep(label=start_label, via_key=via))
        self.path = [start_label]
        self.on_path = {start_label}
        self.used = set(gold_keys) | anchors
        self._spend()

        if self._contains_question(node):
            self._record_success()
            return

        bridges = [
            k for k in node.keys if not any(keys_match(g, k) for g in gold_keys)
        ]
        # stack frames: [expansions, next index, keys added on arrival]
        stack: list[list] = [[self._expansions(node, bridges), 0, set()]]
        while stack:
            frame = stack[-1]
            expansions, idx, added = frame
            if self._stop() or idx >= len(expansions):
                stack.pop()
                if stack:  # the start frame owns no arrival state
                    self.used -= added
                    self.on_path.discard(self.path.pop())
                continue
            frame[1] += 1
            bridge, lab = expansions[idx]
            target = self.nodes[lab]
            if (
                self.prefer_shortest
                and self.best_len is not None
                and len(self.path) + 1 > self.best_len
            ):
                continue
            if not self._spend():
                continue

            self.trace.append(TraceStep(label=lab, via_key=bridge))
            self.extended = True
            anchor_keys = {k for k in target.keys if keys_match(bridge, k)}
            new_keys = ({bridge} | anchor_keys) - self.used
            self.used |= new_keys
            self.on_path.add(lab)
            self.path.append(lab)

            if self._contains_question(target):
                self._record_success()
                self.used -= new_keys
                self.on_path.discard(self.path.pop())
                continue

            next_bridges = [k for k in target.keys if not keys_match(bridge, k)]
            stack.append([self._expansions(target, next_bridges), 0, new_keys])

    def run(self) -> ChainResult:
        for label in self.candidates:
            if self._stop():
                break
            self._run_from(label)

        if self.successes:
            if self.prefer_shortest:
                best = min(
                    self.successes,
                    key=lambda p: (len(p), tuple(_label_num(l) for l in p)),
                )
            else:
                best = self.successes[0]
            status, path = ChainStatus.CONNECTED, best
        elif self.cycle:
            status, path = ChainStatus.CIRCULAR, ()
        elif self.extended:
            status, path = ChainStatus.BROKEN, ()
        else:
            status, path = ChainStatus.DEVIATED, ()

        return ChainResult(
            status=status,
            path=tuple(path),
            trace=tuple(self.trace),
            start_candidates=tuple(self.candidates),
            budget_exhausted=self.exhausted,
        )


def build_backward_chain(
    graph: PropositionGraph,
    prefer_shortest: bool = True,
    budget: int = DEFAULT_WORK_BUDGET,
) -> ChainResult:
    """Run the backward search and classify the outcome.

    prefer_shortest=False returns the first success in DFS order instead of
    the global shortest (cheaper, order-dependent); the verdict taxonomy is
    unaffected by the mode.
    """
    candidates = candidate_labels(graph)
    search = _Search(graph, candidates, prefer_shortest, budget)
    return search.run()


def minimal_sufficient_set(result: ChainResult) -> list[str]:
    """Labels of the minimal proposition set; empty unless Connected."""
    return list(result.path) if result.status is ChainStatus.CONNECTED else []
