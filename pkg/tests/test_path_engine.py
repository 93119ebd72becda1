import numpy as np
import pytest

from conftest import random_kg
from exceptions import ConfigError
from kg_store import apply_mask, build_kg
from path_engine import (
    DirectionMode, enumerate_paths, ground_relation_path, shortest_paths, shortest_paths_from_any, sorted_paths,
)


def path_texts(kg, paths):
    return [p.to_text(kg) for p in sorted_paths(paths)]


def drop(kg, head, relation, tail):
    return apply_mask(kg, {kg.triple_id(head, relation, tail)})


def test_sibling_intact_and_disrupted(sibling_kg):
    kg = sibling_kg
    justin, jaxon = kg.entity_id('JustinBieber'), kg.entity_id('JaxonBieber')
    intact = shortest_paths(kg.full_view(), justin, {jaxon})
    assert path_texts(kg, intact) == ['JustinBieber --[has_brother]--> JaxonBieber']

    disrupted = shortest_paths(drop(kg, 'JustinBieber', 'has_brother', 'JaxonBieber'), justin, {jaxon})
    assert path_texts(kg, disrupted) == [
        'JustinBieber --[has_parent]--> JeremyBieber --[has_child]--> JaxonBieber'
    ]


def test_nigeria_alternative_via_administrative_division(nigeria_kg):
    kg = nigeria_kg
    view = drop(kg, 'Nigeria', 'time zones', 'West Africa Time Zone')
    paths = shortest_paths(view, kg.entity_id('Nigeria'), {kg.entity_id('West Africa Time Zone')})
    assert path_texts(kg, paths) == [
        'Nigeria --[administrative division]--> Bauchi --[time zones]--> West Africa Time Zone'
    ]


def test_oregon_alternative_via_campus(oregon_kg):
    kg = oregon_kg
    view = drop(kg, 'University of Oregon', 'contained by', 'Eugene')
    paths = shortest_paths(view, kg.entity_id('University of Oregon'), {kg.entity_id('Eugene')})
    assert path_texts(kg, paths) == [
        'University of Oregon --[has campus]--> Eugene Campus --[contained by]--> Eugene'
    ]


def test_bieber_two_alternatives(bieber_kg):
    kg = bieber_kg
    view = drop(kg, 'Justin Bieber', 'nationality', 'Canada')
    paths = shortest_paths(view, kg.entity_id('Justin Bieber'), {kg.entity_id('Canada')})
    assert path_texts(kg, paths) == [
        'Justin Bieber --[place of birth]--> London --[contained by]--> Canada',
        'Justin Bieber --[place lived]--> Stratford --[contained by]--> Canada',
    ]


def test_backward_steps_render_reversed_arrows(sibling_kg):
    kg = sibling_kg
    paths = shortest_paths(kg.full_view(), kg.entity_id('JaxonBieber'), {kg.entity_id('JeremyBieber')})
    assert path_texts(kg, paths) == ['JaxonBieber <--[has_child]-- JeremyBieber']
    forward_only = shortest_paths(kg.full_view(), kg.entity_id('JaxonBieber'), {kg.entity_id('JeremyBieber')},
                                  direction_mode=DirectionMode.FORWARD_ONLY)
    assert forward_only == frozenset()


def test_edge_cases(sibling_kg):
    kg = sibling_kg
    justin = kg.entity_id('JustinBieber')
    (zero,) = shortest_paths(kg.full_view(), justin, {justin})
    assert zero.length == 0 and zero.end == justin
    with pytest.raises(ConfigError):
        shortest_paths(kg.full_view(), justin, set())
    with pytest.raises(ConfigError):
        shortest_paths(kg.full_view(), justin, {1}, max_hops=0)
    with pytest.raises(ConfigError):
        list(enumerate_paths(kg.full_view(), justin, 7))
    empty = apply_mask(kg, {0, 1, 2})
    assert shortest_paths(empty, justin, {kg.entity_id('JaxonBieber')}) == frozenset()


def test_max_hops_bounds_search():
    kg = build_kg([('a', 'r', 'b'), ('b', 'r', 'c'), ('c', 'r', 'd')])
    view = kg.full_view()
    assert shortest_paths(view, kg.entity_id('a'), {kg.entity_id('d')}, max_hops=2) == frozenset()
    assert len(shortest_paths(view, kg.entity_id('a'), {kg.entity_id('d')}, max_hops=3)) == 1


def test_shortest_paths_from_any_keeps_global_minimum(bieber_kg):
    kg = bieber_kg
    sources = [kg.entity_id('London'), kg.entity_id('Justin Bieber')]
    paths = shortest_paths_from_any(kg.full_view(), sources, {kg.entity_id('Canada')})
    assert path_texts(kg, paths) == [
        'Justin Bieber --[nationality]--> Canada',
        'London --[contained by]--> Canada',
    ]


def test_ground_relation_path_sibling(sibling_kg):
    kg = sibling_kg
    view = kg.full_view()
    justin = kg.entity_id('JustinBieber')
    plan = [kg.relation_id('has_parent'), kg.relation_id('has_child')]
    assert path_texts(kg, ground_relation_path(view, justin, plan)) == [
        'JustinBieber --[has_parent]--> JeremyBieber --[has_child]--> JaxonBieber'
    ]
    assert ground_relation_path(view, justin, [kg.relation_id('has_child')]) == frozenset()


def test_enumerate_yields_breadth_first(sibling_kg):
    kg = sibling_kg
    lengths = [p.length for p in enumerate_paths(kg.full_view(), kg.entity_id('JustinBieber'), 3)]
    assert lengths == sorted(lengths)


@pytest.mark.parametrize('mode', list(DirectionMode))
def test_bfs_matches_enumeration_oracle(mode):
    rng = np.random.default_rng(7)
    for _ in range(100):
        kg = random_kg(rng, max_entities=8, max_triples=30)
        view = kg.full_view()
        n = len(kg.entities)
        max_hops = int(rng.integers(1, 5))
        source = int(rng.integers(0, n))
        others = [e for e in range(n) if e != source]
        if not others:
            continue
        targets = {int(x) for x in rng.choice(others, size=min(len(others), int(rng.integers(1, 4))), replace=False)}

        enumerated = list(enumerate_paths(view, source, max_hops, mode))
        assert all(p.holds_in(view) for p in enumerated)
        reaching = [p for p in enumerated if p.end in targets]
        expected = set()
        if reaching:
            best = min(p.length for p in reaching)
            expected = {p for p in reaching if p.length == best}
        assert shortest_paths(view, source, targets, max_hops, mode) == expected

        length = int(rng.integers(1, max_hops + 1))
        plan = [int(x) for x in rng.integers(0, len(kg.relations), size=length)]
        grounded = {p for p in enumerated if p.length == length and p.relations() == tuple(plan)}
        assert ground_relation_path(view, source, plan, mode) == grounded


def test_nontrivial_ignores_sources_that_are_targets(bieber_kg):
    kg = bieber_kg
    canada = kg.entity_id('Canada')
    sources = [canada, kg.entity_id('Justin Bieber')]
    assert {p.length for p in shortest_paths_from_any(kg.full_view(), sources, {canada})} == {0}
    paths = shortest_paths_from_any(kg.full_view(), sources, {canada}, nontrivial=True)
    assert path_texts(kg, paths) == ['Justin Bieber --[nationality]--> Canada']
    assert shortest_paths_from_any(kg.full_view(), [canada], {canada}, nontrivial=True) == frozenset()
