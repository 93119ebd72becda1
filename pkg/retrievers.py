"""Desk-scale KG-RAG retrievers: relation-plan grounding (RoG), beam search (ToG), PCST subgraphs (G-Retriever)."""

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from config import default_max_hops, planner_prompt, scorer_prompt
from exceptions import ConfigError
from kg_store import Direction, Kg, KgView, Triple, neighbors
from llm_gateway import GenRequest, Generator
from path_engine import (
    DirectionMode, ReasoningPath, Step, ground_relation_path, shortest_paths_from_any, sorted_paths,
)
from pcst import PcstMode, PrizedGraph, assign_prizes, is_better, solve_pcst
from qa_datasets import Question

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r'[a-z0-9]+')
_JSON_LIST = re.compile(r'\[[^\[\]]*\]')
_NUMBER = re.compile(r'[-+]?(?:\d+\.\d*|\.\d+|\d+)')
_LIST_MARKER = re.compile(r'^\s*(?:\d+[.)]|[-*])\s+')


class RetrievalMethod(Enum):
    ROG = 'rog'
    TOG = 'tog'
    GRETRIEVER = 'gretriever'
    ORACLE = 'oracle'
    NONE = 'none'


@dataclass
class RetrievalResult:
    method: RetrievalMethod
    paths: tuple = ()
    subgraph: tuple = ()
    evidence_text: str = ''
    trace: list = field(default_factory=list)

    def holds_in(self, view: KgView) -> bool:
        return all(p.holds_in(view) for p in self.paths) and all(t.id in view for t in self.subgraph)

    def to_trace(self, kg: Kg) -> dict:
        return {
            'method': self.method.value,
            'paths': [p.to_text(kg) for p in self.paths],
            'subgraph': [list(kg.label_triple(t.id)) for t in self.subgraph],
            'trace': self.trace,
        }


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def textualize_subgraph(subgraph: Iterable[Triple], kg: Kg) -> str:
    """One `head --relation--> tail` line per triple, in triple-id order."""
    lines = []
    for t in sorted(subgraph, key=lambda t: t.id):
        head, relation, tail = kg.label_triple(t.id)
        lines.append(f'{head} --{relation}--> {tail}')
    return '\n'.join(lines)


def textualize_paths(paths: Iterable[ReasoningPath], kg: Kg) -> str:
    """Each path's triples in path order, original orientation; paths separated by a blank line."""
    blocks = []
    for path in paths:
        lines = []
        for triple_id in path.triple_ids():
            head, relation, tail = kg.label_triple(triple_id)
            lines.append(f'{head} --{relation}--> {tail}')
        if lines:
            blocks.append('\n'.join(lines))
    return '\n\n'.join(blocks)


def path_words(path: ReasoningPath, kg: Kg) -> str:
    words = [kg.entity_label(path.start)]
    for s in path.steps:
        words.append(kg.relation_label(s.relation))
        words.append(kg.entity_label(s.entity))
    return ' '.join(words)


def _path_result(method: RetrievalMethod, paths: Iterable[ReasoningPath], kg: Kg, trace: list) -> RetrievalResult:
    ordered = tuple(p for p in sorted_paths(set(paths)) if p.length > 0)
    return RetrievalResult(method, paths=ordered, evidence_text=textualize_paths(ordered, kg), trace=trace)


class Planner(Protocol):
    def plan(self, question: Question, kg: Kg) -> list[list[str]]:
        ...


class Scorer(Protocol):
    def score(self, question_text: str, candidate_text: str) -> float:
        ...


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray:
        ...


class StaticPlanner:
    def __init__(self, plans: Sequence[Sequence[str]]):
        self.plans = [list(p) for p in plans]

    def plan(self, question: Question, kg: Kg) -> list[list[str]]:
        return [list(p) for p in self.plans]


class OraclePlanner:
    """Relation sequences of the gold shortest paths on the intact KG.

    Stands in for a well-trained planner whose learned plans may stop grounding once
    the KG is ablated.
    """

    def __init__(self, max_hops: int = default_max_hops,
                 direction_mode: DirectionMode = DirectionMode.BIDIRECTIONAL):
        self.max_hops = max_hops
        self.direction_mode = direction_mode

    def plan(self, question: Question, kg: Kg) -> list[list[str]]:
        topics, answers = question.topic_ids(kg), question.answer_ids(kg)
        if not topics or not answers:
            return []
        paths = shortest_paths_from_any(kg.full_view(), topics, answers, self.max_hops, self.direction_mode)
        plans, seen = [], set()
        for path in sorted_paths(paths):
            relations = tuple(kg.relation_label(r) for r in path.relations())
            if relations and relations not in seen:
                seen.add(relations)
                plans.append(list(relations))
        return plans


def parse_relation_paths(text: str) -> list[list[str]]:
    """Well-formed JSON lists of relation names, in order of appearance; falls back to `a -> b` lines."""
    plans = []
    for m in _JSON_LIST.finditer(text):
        try:
            value = json.loads(m.group(0))
        except json.JSONDecodeError:
            continue
        if isinstance(value, list) and value and all(isinstance(x, str) and x.strip() for x in value):
            plans.append([x.strip() for x in value])
    if plans:
        return plans
    for line in text.splitlines():
        if '->' in line:
            parts = [p.strip(' \t"\'`') for p in _LIST_MARKER.sub('', line).split('->')]
            if all(parts):
                plans.append(parts)
    return plans


def parse_score(text: str) -> float:
    m = _NUMBER.search(text)
    if not m:
        return 0.0
    return min(1.0, max(0.0, float(m.group(0))))


class LlmPlanner:
    def __init__(self, generator: Generator, template: str = planner_prompt, k: int = 3, max_relations: int = 50):
        self.generator = generator
        self.template = template
        self.k = k
        self.max_relations = max_relations

    def plan(self, question: Question, kg: Kg) -> list[list[str]]:
        relations = []
        for t in question.topic_ids(kg):
            for nb in neighbors(kg.full_view(), t, Direction.BOTH):
                label = kg.relation_label(nb.relation)
                if label not in relations:
                    relations.append(label)
        user_text = self.template.format(
            question=question.text,
            topics=', '.join(question.topic_entities),
            relations=', '.join(relations[:self.max_relations]),
            k=self.k,
        )
        request = GenRequest('You plan relation paths over a knowledge graph.', user_text, question_id=question.id)
        return parse_relation_paths(self.generator.generate(request).output_text)


class LexicalScorer:
    """|shared lowercase tokens| / |question tokens|."""

    def score(self, question_text: str, candidate_text: str) -> float:
        q = set(tokenize(question_text))
        if not q:
            return 0.0
        return len(q & set(tokenize(candidate_text))) / len(q)


class ConstantScorer:
    def __init__(self, value: float = 0.5):
        self.value = value

    def score(self, question_text: str, candidate_text: str) -> float:
        return self.value


class LlmScorer:
    def __init__(self, generator: Generator, template: str = scorer_prompt):
        self.generator = generator
        self.template = template

    def score(self, question_text: str, candidate_text: str) -> float:
        user_text = self.template.format(question=question_text, candidate=candidate_text)
        request = GenRequest('You judge evidence for question answering.', user_text, max_tokens=8)
        return parse_score(self.generator.generate(request).output_text)


class HashingEmbedder:
    """Feature-hashed bag of tokens, L2-normalized; stable across runs and platforms."""

    def __init__(self, dim: int = 64):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text):
            digest = hashlib.sha256(token.encode('utf-8')).digest()
            index = int.from_bytes(digest[:4], 'big') % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[index] += sign
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _topics(view: KgView, question: Question, trace: list) -> list[int]:
    topics = list(dict.fromkeys(question.topic_ids(view.base)))
    if not topics:
        trace.append({'note': f'no topic entity of {list(question.topic_entities)} is in the KG'})
    return topics


def rog_retrieve(view: KgView, question: Question, planner: Planner, top_k_plans: int = 3,
                 direction_mode: DirectionMode = DirectionMode.BIDIRECTIONAL) -> RetrievalResult:
    """Ground the planner's top-k relation sequences from every topic entity; union the paths."""
    if not isinstance(top_k_plans, int) or top_k_plans < 1:
        raise ConfigError(f'top_k_plans must be a positive integer, got {top_k_plans!r}')
    kg = view.base
    trace: list = []
    topics = _topics(view, question, trace)
    if not topics:
        return RetrievalResult(RetrievalMethod.ROG, trace=trace)
    found: set = set()
    for plan in planner.plan(question, kg)[:top_k_plans]:
        relation_ids = [kg.find_relation(label) for label in plan]
        if any(r is None for r in relation_ids):
            trace.append({'plan': plan, 'grounded': 0, 'note': 'relation not in KG'})
            continue
        grounded = set()
        for t in topics:
            grounded.update(ground_relation_path(view, t, relation_ids, direction_mode))
        grounded = {p for p in grounded if p.length > 0}
        trace.append({'plan': plan, 'grounded': len(grounded)})
        found.update(grounded)
    result = _path_result(RetrievalMethod.ROG, found, kg, trace)
    logger.debug(f'RoG question {question.id}: {len(result.paths)} paths')
    return result


def tog_retrieve(view: KgView, question: Question, scorer: Scorer, beam_width: int = 3, max_depth: int = 3,
                 direction_mode: DirectionMode = DirectionMode.BIDIRECTIONAL,
                 stop_threshold: float = 0.9) -> RetrievalResult:
    """Iterative beam search from the topic entities; evidence is every path kept in a beam at any depth."""
    if not isinstance(beam_width, int) or beam_width < 1:
        raise ConfigError(f'beam_width must be a positive integer, got {beam_width!r}')
    if not isinstance(max_depth, int) or max_depth < 1:
        raise ConfigError(f'max_depth must be a positive integer, got {max_depth!r}')
    kg = view.base
    trace: list = []
    topics = _topics(view, question, trace)
    if not topics:
        return RetrievalResult(RetrievalMethod.TOG, trace=trace)
    direction = direction_mode.direction
    beams = [ReasoningPath(t) for t in topics]
    kept: list[ReasoningPath] = []
    for depth in range(1, max_depth + 1):
        candidates = []
        for path in beams:
            visited = set(path.entities())
            for nb in neighbors(view, path.end, direction):
                if nb.entity not in visited:
                    candidates.append(path.extend(Step(nb.relation, nb.direction, nb.entity, nb.triple_id)))
        if not candidates:
            trace.append({'depth': depth, 'candidates': 0, 'note': 'frontier exhausted'})
            break
        scored = [(scorer.score(question.text, path_words(p, kg)), p) for p in candidates]
        scored.sort(key=lambda sp: (-sp[0], sp[1].sort_key))
        pruned = scored[:beam_width]
        beams = [p for _, p in pruned]
        kept.extend(beams)
        trace.append({
            'depth': depth,
            'candidates': len(candidates),
            'kept': [{'path': p.to_text(kg), 'score': round(s, 6)} for s, p in pruned],
        })
        if any(scorer.score(question.text, kg.entity_label(p.end)) >= stop_threshold for p in beams):
            trace.append({'depth': depth, 'note': 'stop: evidence judged sufficient'})
            break
    result = _path_result(RetrievalMethod.TOG, kept, kg, trace)
    logger.debug(f'ToG question {question.id}: {len(result.paths)} paths over {len(trace)} steps')
    return result


def gretriever_retrieve(view: KgView, question: Question, embedder: Embedder, k_nodes: int = 5,
                        hop_radius: int = 2, edge_cost: float = 0.5,
                        pcst_mode: PcstMode = PcstMode.AUTO) -> RetrievalResult:
    """Rank the topic neighborhood by embedding similarity, prize the top k, keep the best rooted PCST."""
    if not isinstance(k_nodes, int) or k_nodes < 1:
        raise ConfigError(f'k_nodes must be a positive integer, got {k_nodes!r}')
    if hop_radius not in (1, 2):
        raise ConfigError(f'hop_radius must be 1 or 2, got {hop_radius!r}')
    if not edge_cost > 0:
        raise ConfigError(f'edge_cost must be positive, got {edge_cost!r}')
    kg = view.base
    trace: list = []
    topics = _topics(view, question, trace)
    if not topics:
        return RetrievalResult(RetrievalMethod.GRETRIEVER, trace=trace)

    seen = set(topics)
    candidates = list(topics)
    frontier = list(topics)
    for _ in range(hop_radius):
        layer = []
        for node in frontier:
            for nb in neighbors(view, node, Direction.BOTH):
                if nb.entity not in seen:
                    seen.add(nb.entity)
                    candidates.append(nb.entity)
                    layer.append(nb.entity)
        frontier = layer

    q_vec = embedder.embed(question.text)
    similarity = {e: cosine(q_vec, embedder.embed(kg.entity_label(e))) for e in candidates}
    ranked = sorted(candidates, key=lambda e: (-similarity[e], e))
    prizes = assign_prizes(ranked, k_nodes)
    edges = []
    for node in candidates:
        for nb in neighbors(view, node, Direction.FORWARD):
            if nb.entity in seen and nb.entity != node:
                edges.append((node, nb.entity, edge_cost, nb.triple_id))
    graph = PrizedGraph.build(prizes, edges)

    pcst_trace: list = []
    best = None
    for t in topics:
        tree = solve_pcst(graph, pcst_mode, root=t, trace=pcst_trace)
        if is_better(tree, best, rooted=True):
            best = tree
    subgraph = tuple(sorted((kg.triples[key] for key in best.keys()), key=lambda t: t.id))
    trace.append({
        'candidates': len(candidates),
        'prizes': [{'entity': kg.entity_label(e), 'prize': prizes[e]} for e in ranked[:k_nodes]],
        'tree': [kg.entity_label(e) for e in best.nodes],
        'objective': round(best.objective, 9),
    })
    if pcst_trace:
        trace.append({'pcst_events': pcst_trace})
    logger.debug(f'G-Retriever question {question.id}: {len(best.nodes)} nodes, {len(subgraph)} triples')
    return RetrievalResult(RetrievalMethod.GRETRIEVER, subgraph=subgraph,
                           evidence_text=textualize_subgraph(subgraph, kg), trace=trace)


def oracle_retrieve(view: KgView, question: Question, max_hops: int = default_max_hops,
                    direction_mode: DirectionMode = DirectionMode.BIDIRECTIONAL) -> RetrievalResult:
    """Shortest topic->answer paths on the queried view: an upper bound on path retrieval."""
    kg = view.base
    trace: list = []
    topics = _topics(view, question, trace)
    answers = question.answer_ids(kg)
    if not topics or not answers:
        if not answers:
            trace.append({'note': 'no answer entity is in the KG'})
        return RetrievalResult(RetrievalMethod.ORACLE, trace=trace)
    paths = shortest_paths_from_any(view, topics, answers, max_hops, direction_mode)
    trace.append({'shortest_paths': len(paths)})
    return _path_result(RetrievalMethod.ORACLE, paths, kg, trace)


def no_retrieval(question: Optional[Question] = None) -> RetrievalResult:
    return RetrievalResult(RetrievalMethod.NONE, trace=[{'note': 'retrieval disabled'}])
