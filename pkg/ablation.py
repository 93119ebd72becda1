"""Triple deletion strategies (random, reasoning-path disruption) and replayable manifests."""

import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from config import default_max_hops
from exceptions import ConfigError, ConsistencyError, InputError
from kg_store import Kg, KgView, apply_mask
from path_engine import DirectionMode, shortest_paths_from_any, sorted_paths
from qa_datasets import Question
from utils import checksum_json, derive_seed, round_half_up

logger = logging.getLogger(__name__)


class Strategy(Enum):
    NONE = 'none'
    RANDOM = 'random'
    PATH_DISRUPTION = 'path_disruption'
    NO_RETRIEVAL = 'no_retrieval'


class SkipReason(Enum):
    UNREACHABLE = 'unreachable'
    ENTITIES_MISSING = 'entities_missing'


@dataclass
class AblationManifest:
    strategy: Strategy
    seed: int = 0
    rate: Optional[float] = None
    removed: list = field(default_factory=list)
    per_question: dict = field(default_factory=dict)
    nested: bool = False
    isolated: bool = False
    kg_triples: int = 0

    def removed_ids(self) -> frozenset:
        return frozenset(entry['id'] for entry in self.removed)

    def to_dict(self) -> dict:
        data = {
            'strategy': self.strategy.value,
            'rate': self.rate,
            'seed': self.seed,
            'nested': self.nested,
            'isolated': self.isolated,
            'kg_triples': self.kg_triples,
            'removed': self.removed,
            'per_question': self.per_question,
        }
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + '\n'

    def checksum(self) -> str:
        return checksum_json(self.to_dict())

    def write(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(self.to_json())
        logger.info(f'Wrote manifest {path}: {len(self.removed)} triples removed ({self.strategy.value})')

    @classmethod
    def from_dict(cls, data: dict) -> 'AblationManifest':
        try:
            return cls(
                strategy=Strategy(data['strategy']),
                seed=int(data.get('seed', 0)),
                rate=data.get('rate'),
                removed=list(data.get('removed', [])),
                per_question=dict(data.get('per_question', {})),
                nested=bool(data.get('nested', False)),
                isolated=bool(data.get('isolated', False)),
                kg_triples=int(data.get('kg_triples', 0)),
            )
        except (KeyError, ValueError, TypeError) as e:
            raise InputError(f'malformed manifest: {e}')

    @classmethod
    def read(cls, path) -> 'AblationManifest':
        with open(path, 'r', encoding='utf-8') as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise InputError(f'invalid manifest JSON: {e.msg}', e.lineno, str(path))
        return cls.from_dict(data)


def _removed_entry(kg: Kg, triple_id: int) -> dict:
    head, relation, tail = kg.label_triple(triple_id)
    return {'id': triple_id, 'head': head, 'relation': relation, 'tail': tail}


def deletion_count(rate: float, total: int) -> int:
    """round_half_up(rate * total), computed in decimal so 5% of 100 is exactly 5."""
    return round_half_up(Decimal(repr(float(rate))) * total)


def _check_rate(rate):
    if rate is None or not isinstance(rate, (int, float)) or not 0 <= rate <= 1:
        raise ConfigError(f'deletion rate must lie in [0, 1], got {rate!r}')


def random_deletion(kg: Kg, rate: float, seed: int, nested: bool = False) -> AblationManifest:
    """Uniform sample without replacement of round_half_up(rate * |kg|) triples.

    Independent mode draws a fresh sample per rate; nested mode takes a prefix of one
    seeded permutation, so lower rates remove subsets of what higher rates remove.
    """
    _check_rate(rate)
    n = len(kg)
    k = deletion_count(rate, n)
    if nested:
        rng = np.random.default_rng(derive_seed(seed, 'random:nested'))
        chosen = rng.permutation(n)[:k]
    else:
        rng = np.random.default_rng(derive_seed(seed, f'random:{float(rate)!r}'))
        chosen = rng.choice(n, size=k, replace=False) if k else np.empty(0, dtype=np.int64)
    removed = [_removed_entry(kg, i) for i in sorted(int(x) for x in chosen)]
    logger.info(f'Random deletion at rate {rate}: {len(removed)} of {n} triples (seed {seed})')
    return AblationManifest(Strategy.RANDOM, seed=seed, rate=float(rate), removed=removed,
                            nested=nested, kg_triples=n)


def disrupt_paths(kg: Kg, questions: Sequence[Question], seed: int,
                  max_hops: int = default_max_hops,
                  direction_mode: DirectionMode = DirectionMode.BIDIRECTIONAL,
                  isolated: bool = False) -> AblationManifest:
    """Remove one triple from one uniformly chosen shortest topic->answer path per question.

    Cumulative mode (default) recomputes shortest paths on the view left by all earlier
    questions, in dataset order. Isolated mode works on the intact KG for every question.
    """
    removed_ids: set[int] = set()
    removed: list[dict] = []
    per_question: dict[str, dict] = {}
    base = kg.full_view()
    for q in questions:
        view = base if isolated else apply_mask(kg, removed_ids)
        topics, answers = q.topic_ids(kg), q.answer_ids(kg)
        if not topics or not answers:
            per_question[q.id] = {'skipped': SkipReason.ENTITIES_MISSING.value}
            logger.debug(f'Question {q.id}: entities missing, skipped')
            continue
        paths = shortest_paths_from_any(view, topics, answers, max_hops, direction_mode, nontrivial=True)
        paths = [p for p in sorted_paths(paths) if p.length > 0]
        if not paths:
            per_question[q.id] = {'skipped': SkipReason.UNREACHABLE.value}
            logger.debug(f'Question {q.id}: no path within {max_hops} hops, skipped')
            continue
        rng = np.random.default_rng(derive_seed(seed, q.id))
        path = paths[int(rng.integers(len(paths)))]
        triple_id = path.triple_ids()[int(rng.integers(path.length))]
        shared = triple_id in removed_ids
        if not shared:
            removed_ids.add(triple_id)
            removed.append(_removed_entry(kg, triple_id))
        per_question[q.id] = {
            'selected_path': path.to_text(kg),
            'removed_triple': _removed_entry(kg, triple_id),
            'shared': shared,
        }
    removed.sort(key=lambda e: e['id'])
    skipped = sum(1 for v in per_question.values() if 'skipped' in v)
    logger.info(f'Path disruption: {len(removed)} triples removed, {skipped} of {len(questions)} questions skipped')
    return AblationManifest(Strategy.PATH_DISRUPTION, seed=seed, removed=removed,
                            per_question=per_question, isolated=isolated, kg_triples=len(kg))


def identity_manifest(strategy: Strategy = Strategy.NONE, seed: int = 0, kg_triples: int = 0) -> AblationManifest:
    return AblationManifest(strategy, seed=seed, kg_triples=kg_triples)


def resolve_removed(kg: Kg, manifest: AblationManifest) -> frozenset:
    """Re-resolve the manifest's labelled triples against kg; any mismatch is a ConsistencyError."""
    ids = set()
    for entry in manifest.removed:
        try:
            triple_id = kg.triple_id(entry['head'], entry['relation'], entry['tail'])
        except KeyError as e:
            raise ConsistencyError(f'manifest entry lacks {e}')
        if triple_id is None:
            raise ConsistencyError(f'manifest triple not in KG: {entry}')
        if 'id' in entry and entry['id'] != triple_id:
            raise ConsistencyError(f'manifest triple id {entry["id"]} resolves to {triple_id} in this KG')
        ids.add(triple_id)
    return frozenset(ids)


def apply_manifest(kg: Kg, manifest: AblationManifest) -> KgView:
    return apply_mask(kg, resolve_removed(kg, manifest))


def question_view(kg: Kg, manifest: AblationManifest, question_id: str, shared_view: KgView) -> KgView:
    """The view a question is evaluated on: the shared ablated view, or its own removal in isolated mode."""
    if not manifest.isolated:
        return shared_view
    entry = manifest.per_question.get(question_id, {})
    triple = entry.get('removed_triple')
    if not triple:
        return kg.full_view()
    triple_id = kg.triple_id(triple['head'], triple['relation'], triple['tail'])
    if triple_id is None:
        raise ConsistencyError(f'manifest triple not in KG: {triple}')
    return apply_mask(kg, {triple_id})


def compose(first: AblationManifest, second: AblationManifest) -> AblationManifest:
    """Union of two manifests' removals; masks are disjoint-additive."""
    merged = {e['id']: e for e in first.removed}
    for e in second.removed:
        merged.setdefault(e['id'], e)
    return AblationManifest(
        first.strategy,
        seed=first.seed,
        rate=first.rate,
        removed=[merged[i] for i in sorted(merged)],
        per_question={**first.per_question, **second.per_question},
        kg_triples=first.kg_triples,
    )
