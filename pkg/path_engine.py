"""Reasoning paths over a KgView: BFS shortest paths, bounded enumeration, relation-path grounding."""

import logging
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Sequence

from config import default_max_hops, enumerate_max_hops
from exceptions import ConfigError
from kg_store import Direction, Kg, KgView, neighbors

logger = logging.getLogger(__name__)


class DirectionMode(Enum):
    FORWARD_ONLY = 'forward_only'
    BIDIRECTIONAL = 'bidirectional'

    @property
    def direction(self) -> Direction:
        return Direction.FORWARD if self is DirectionMode.FORWARD_ONLY else Direction.BOTH


class Step(NamedTuple):
    relation: int
    direction: Direction
    entity: int
    triple_id: int


@dataclass(frozen=True)
class ReasoningPath:
    start: int
    steps: tuple = ()

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def end(self) -> int:
        return self.steps[-1].entity if self.steps else self.start

    def entities(self) -> tuple[int, ...]:
        return (self.start,) + tuple(s.entity for s in self.steps)

    def relations(self) -> tuple[int, ...]:
        return tuple(s.relation for s in self.steps)

    def triple_ids(self) -> tuple[int, ...]:
        return tuple(s.triple_id for s in self.steps)

    def extend(self, step: Step) -> 'ReasoningPath':
        return ReasoningPath(self.start, self.steps + (step,))

    @property
    def sort_key(self) -> tuple:
        return (
            self.length,
            self.start,
            self.triple_ids(),
            tuple(s.direction is Direction.BACKWARD for s in self.steps),
        )

    def to_text(self, kg: Kg) -> str:
        parts = [kg.entity_label(self.start)]
        for s in self.steps:
            rel = kg.relation_label(s.relation)
            if s.direction is Direction.FORWARD:
                parts.append(f'--[{rel}]--> {kg.entity_label(s.entity)}')
            else:
                parts.append(f'<--[{rel}]-- {kg.entity_label(s.entity)}')
        return ' '.join(parts)

    def holds_in(self, view: KgView) -> bool:
        """True iff every step is a surviving triple with matching orientation and no entity repeats."""
        kg = view.base
        if len(set(self.entities())) != len(self.entities()):
            return False
        prev = self.start
        for s in self.steps:
            if s.triple_id not in view:
                return False
            t = kg.triples[s.triple_id]
            if t.relation != s.relation:
                return False
            if s.direction is Direction.FORWARD and (t.head, t.tail) != (prev, s.entity):
                return False
            if s.direction is Direction.BACKWARD and (t.tail, t.head) != (prev, s.entity):
                return False
            prev = s.entity
        return True


def sorted_paths(paths: Iterable[ReasoningPath]) -> list[ReasoningPath]:
    return sorted(paths, key=lambda p: p.sort_key)


def _check_hops(max_hops: int, guard: int = None):
    if not isinstance(max_hops, int) or max_hops < 1:
        raise ConfigError(f'max_hops must be a positive integer, got {max_hops!r}')
    if guard is not None and max_hops > guard:
        raise ConfigError(f'max_hops {max_hops} exceeds the enumeration guard {guard}')


def shortest_paths(view: KgView, source: int, targets: Iterable[int],
                   max_hops: int = default_max_hops,
                   direction_mode: DirectionMode = DirectionMode.BIDIRECTIONAL) -> frozenset:
    """All paths of globally minimal length L* <= max_hops from source to any target.

    Layered BFS keeping every predecessor at the previous layer; a shortest path
    can never revisit an entity, so every returned path is simple.
    """
    kg = view.base
    kg.check_entity(source)
    targets = frozenset(targets)
    if not targets:
        raise ConfigError('targets must be non-empty')
    for t in targets:
        kg.check_entity(t)
    _check_hops(max_hops)

    if source in targets:
        return frozenset({ReasoningPath(source)})

    direction = direction_mode.direction
    dist = {source: 0}
    preds: dict[int, list[tuple[int, Step]]] = defaultdict(list)
    frontier = [source]
    for depth in range(1, max_hops + 1):
        layer: list[int] = []
        for node in frontier:
            for nb in neighbors(view, node, direction):
                d = dist.get(nb.entity)
                if d is None:
                    dist[nb.entity] = depth
                    layer.append(nb.entity)
                elif d != depth:
                    continue
                preds[nb.entity].append((node, Step(nb.relation, nb.direction, nb.entity, nb.triple_id)))
        hits = [e for e in layer if e in targets]
        if hits:
            paths = set()
            for target in hits:
                for steps in _unwind(source, target, preds):
                    paths.add(ReasoningPath(source, steps))
            return frozenset(paths)
        if not layer:
            break
        frontier = layer
    return frozenset()


def _unwind(source: int, node: int, preds) -> Iterator[tuple]:
    if node == source:
        yield ()
        return
    for prev, step in preds[node]:
        for prefix in _unwind(source, prev, preds):
            yield prefix + (step,)


def shortest_paths_from_any(view: KgView, sources: Iterable[int], targets: Iterable[int],
                            max_hops: int = default_max_hops,
                            direction_mode: DirectionMode = DirectionMode.BIDIRECTIONAL,
                            nontrivial: bool = False) -> frozenset:
    """Union of shortest_paths over several sources, keeping only the globally minimal length.

    With nontrivial=True a source never counts as reaching itself, so zero-length paths
    are never returned.
    """
    targets = frozenset(targets)
    best: set = set()
    best_len = None
    for source in sources:
        source_targets = targets - {source} if nontrivial else targets
        if not source_targets:
            continue
        found = shortest_paths(view, source, source_targets, max_hops, direction_mode)
        if not found:
            continue
        length = next(iter(found)).length
        if best_len is None or length < best_len:
            best, best_len = set(found), length
        elif length == best_len:
            best.update(found)
    return frozenset(best)


def enumerate_paths(view: KgView, source: int, max_hops: int,
                    direction_mode: DirectionMode = DirectionMode.BIDIRECTIONAL) -> Iterator[ReasoningPath]:
    """Every simple path of length 1..max_hops, breadth first, canonical order within a layer."""
    _check_hops(max_hops, enumerate_max_hops)
    view.base.check_entity(source)
    direction = direction_mode.direction
    layer = [ReasoningPath(source)]
    for _ in range(max_hops):
        nxt: list[ReasoningPath] = []
        for path in layer:
            visited = set(path.entities())
            for nb in neighbors(view, path.end, direction):
                if nb.entity in visited:
                    continue
                extended = path.extend(Step(nb.relation, nb.direction, nb.entity, nb.triple_id))
                nxt.append(extended)
                yield extended
        if not nxt:
            return
        layer = nxt


def ground_relation_path(view: KgView, source: int, relations: Sequence[int],
                         direction_mode: DirectionMode = DirectionMode.FORWARD_ONLY) -> frozenset:
    """Simple paths from source whose step relations equal `relations` in order.

    An unmatched plan yields an empty set.
    """
    kg = view.base
    kg.check_entity(source)
    for r in relations:
        kg.check_relation(r)
    direction = direction_mode.direction
    paths = [ReasoningPath(source)]
    for rel in relations:
        nxt = []
        for path in paths:
            visited = set(path.entities())
            for nb in neighbors(view, path.end, direction):
                if nb.relation == rel and nb.entity not in visited:
                    nxt.append(path.extend(Step(nb.relation, nb.direction, nb.entity, nb.triple_id)))
        if not nxt:
            return frozenset()
        paths = nxt
    return frozenset(paths)
