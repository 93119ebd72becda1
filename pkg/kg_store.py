"""Interned, immutable triple store with forward/backward adjacency and masked views."""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

from exceptions import ConsistencyError, InputError, KgLookupError

logger = logging.getLogger(__name__)


class Direction(Enum):
    FORWARD = 'forward'
    BACKWARD = 'backward'
    BOTH = 'both'

    @property
    def flag(self) -> str:
        return 'fwd' if self is Direction.FORWARD else 'bwd'


class Triple(NamedTuple):
    id: int
    head: int
    relation: int
    tail: int


class Neighbor(NamedTuple):
    relation: int
    entity: int
    direction: Direction
    triple_id: int


class Interner:
    """Text label <-> dense integer id, first-occurrence order."""

    def __init__(self):
        self._labels: list[str] = []
        self._ids: dict[str, int] = {}

    def intern(self, label: str) -> int:
        i = self._ids.get(label)
        if i is None:
            i = len(self._labels)
            self._labels.append(label)
            self._ids[label] = i
        return i

    def find(self, label: str) -> Optional[int]:
        return self._ids.get(label)

    def label(self, i: int) -> str:
        return self._labels[i]

    def __contains__(self, i) -> bool:
        return isinstance(i, int) and 0 <= i < len(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self) -> Iterator[str]:
        return iter(self._labels)


class Kg:
    """Directed multi-relational graph. Immutable once built by build_kg()."""

    def __init__(self, entities: Interner, relations: Interner, triples: Sequence[Triple]):
        self.entities = entities
        self.relations = relations
        self.triples: tuple[Triple, ...] = tuple(triples)
        self._index = {(t.head, t.relation, t.tail): t.id for t in self.triples}
        fwd: list[list[tuple[int, int, int]]] = [[] for _ in range(len(entities))]
        bwd: list[list[tuple[int, int, int]]] = [[] for _ in range(len(entities))]
        for t in self.triples:
            fwd[t.head].append((t.relation, t.tail, t.id))
            bwd[t.tail].append((t.relation, t.head, t.id))
        self.adjacency_fwd: tuple[tuple[tuple[int, int, int], ...], ...] = tuple(tuple(a) for a in fwd)
        self.adjacency_bwd: tuple[tuple[tuple[int, int, int], ...], ...] = tuple(tuple(a) for a in bwd)

    def __len__(self) -> int:
        return len(self.triples)

    def __repr__(self) -> str:
        return f'Kg(entities={len(self.entities)}, relations={len(self.relations)}, triples={len(self.triples)})'

    def find_entity(self, label: str) -> Optional[int]:
        return self.entities.find(label)

    def entity_id(self, label: str) -> int:
        i = self.entities.find(label)
        if i is None:
            raise KgLookupError('entity', label)
        return i

    def find_relation(self, label: str) -> Optional[int]:
        return self.relations.find(label)

    def relation_id(self, label: str) -> int:
        i = self.relations.find(label)
        if i is None:
            raise KgLookupError('relation', label)
        return i

    def entity_label(self, i: int) -> str:
        self.check_entity(i)
        return self.entities.label(i)

    def relation_label(self, i: int) -> str:
        self.check_relation(i)
        return self.relations.label(i)

    def check_entity(self, i: int):
        if i not in self.entities:
            raise KgLookupError('entity', i)

    def check_relation(self, i: int):
        if i not in self.relations:
            raise KgLookupError('relation', i)

    def triple(self, triple_id: int) -> Triple:
        if not isinstance(triple_id, int) or not 0 <= triple_id < len(self.triples):
            raise KgLookupError('triple', triple_id)
        return self.triples[triple_id]

    def triple_id(self, head: str, relation: str, tail: str) -> Optional[int]:
        h, r, t = self.find_entity(head), self.find_relation(relation), self.find_entity(tail)
        if h is None or r is None or t is None:
            return None
        return self._index.get((h, r, t))

    def label_triple(self, triple_id: int) -> tuple[str, str, str]:
        t = self.triple(triple_id)
        return self.entities.label(t.head), self.relations.label(t.relation), self.entities.label(t.tail)

    def full_view(self) -> 'KgView':
        return KgView(self, frozenset())


@dataclass(frozen=True)
class KgView:
    """A Kg with a set of triple ids masked out. Never copies the base graph."""

    base: Kg
    removed: frozenset

    def __len__(self) -> int:
        return len(self.base) - len(self.removed)

    def __contains__(self, triple_id) -> bool:
        return isinstance(triple_id, int) and 0 <= triple_id < len(self.base) and triple_id not in self.removed

    def triples(self) -> Iterator[Triple]:
        for t in self.base.triples:
            if t.id not in self.removed:
                yield t

    def surviving_ids(self) -> Iterator[int]:
        for t in self.triples():
            yield t.id


def _intern_rows(rows: Iterable[tuple[int, Sequence[str]]], source: Optional[str] = None) -> Kg:
    entities, relations = Interner(), Interner()
    seen: set[tuple[int, int, int]] = set()
    built: list[Triple] = []
    for line_number, triple in rows:
        if len(triple) != 3:
            raise InputError(f'expected 3 fields, got {len(triple)}', line_number, source)
        head, relation, tail = (str(x).strip() for x in triple)
        if not head or not relation or not tail:
            raise InputError('empty label', line_number, source)
        h, r, t = entities.intern(head), relations.intern(relation), entities.intern(tail)
        if (h, r, t) in seen:
            continue
        seen.add((h, r, t))
        built.append(Triple(len(built), h, r, t))
    return Kg(entities, relations, built)


def build_kg(triples: Iterable[Sequence[str]]) -> Kg:
    """Intern (head, relation, tail) label triples; duplicates collapse onto the first occurrence.

    Raises InputError naming the 1-based position of a triple with an empty label.
    """
    return _intern_rows(enumerate(triples, start=1))


def read_triples(path) -> Iterator[tuple[int, tuple[str, str, str]]]:
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip('\r\n')
            if not line.strip() or line.startswith('#'):
                continue
            fields = line.split('\t')
            if len(fields) != 3:
                raise InputError(f'expected 3 tab-separated fields, got {len(fields)}', line_number, str(path))
            yield line_number, (fields[0], fields[1], fields[2])


def load_kg(path) -> Kg:
    kg = _intern_rows(read_triples(path), str(path))
    logger.info(f'Loaded KG {path}: {len(kg.entities)} entities, {len(kg.relations)} relations, {len(kg)} triples')
    return kg


def dump_kg(kg: Kg) -> str:
    return ''.join('\t'.join(kg.label_triple(t.id)) + '\n' for t in kg.triples)


def write_kg(kg: Kg, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(dump_kg(kg))


def apply_mask(kg: Kg, removed: Iterable[int]) -> KgView:
    removed = frozenset(removed)
    foreign = [i for i in removed if not isinstance(i, int) or not 0 <= i < len(kg)]
    if foreign:
        raise ConsistencyError(f'triple ids not in KG: {sorted(foreign, key=repr)[:10]}')
    return KgView(kg, removed)


def neighbors(view: KgView, entity: int, direction: Direction = Direction.BOTH) -> list[Neighbor]:
    """Non-removed triples incident to entity, in triple-id order."""
    kg = view.base
    kg.check_entity(entity)
    removed = view.removed
    out: list[Neighbor] = []
    if direction in (Direction.FORWARD, Direction.BOTH):
        out.extend(Neighbor(r, t, Direction.FORWARD, i) for r, t, i in kg.adjacency_fwd[entity] if i not in removed)
    if direction in (Direction.BACKWARD, Direction.BOTH):
        out.extend(Neighbor(r, h, Direction.BACKWARD, i) for r, h, i in kg.adjacency_bwd[entity] if i not in removed)
    if direction is Direction.BOTH:
        out.sort(key=lambda n: (n.triple_id, n.direction is Direction.BACKWARD))
    return out
