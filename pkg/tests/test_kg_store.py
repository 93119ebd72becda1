import pytest

from conftest import SIBLING_TRIPLES
from exceptions import ConsistencyError, InputError, KgLookupError
from kg_store import Direction, apply_mask, build_kg, dump_kg, load_kg, neighbors, write_kg


def labelled(kg, nbs):
    return [(kg.relation_label(n.relation), kg.entity_label(n.entity), n.direction.flag) for n in nbs]


def test_build_sibling(sibling_kg):
    assert len(sibling_kg.entities) == 4
    assert len(sibling_kg.relations) == 3
    assert len(sibling_kg) == 3
    assert list(sibling_kg.entities) == ['JustinBieber', 'JaxonBieber', 'JeremyBieber']


def test_build_empty_and_duplicates():
    empty = build_kg([])
    assert len(empty) == 0 and len(empty.entities) == 0
    kg = build_kg([('a', 'r', 'b'), ('a', 'r', 'b'), (' a ', 'r', 'b ')])
    assert len(kg) == 1
    assert kg.label_triple(0) == ('a', 'r', 'b')


def test_build_empty_label_names_position():
    with pytest.raises(InputError) as e:
        build_kg([('a', 'r', 'b'), ('a', '  ', 'c')])
    assert e.value.line_number == 2


def test_neighbors_sibling(sibling_kg):
    kg = sibling_kg
    justin = kg.entity_id('JustinBieber')
    assert labelled(kg, neighbors(kg.full_view(), justin, Direction.FORWARD)) == [
        ('has_brother', 'JaxonBieber', 'fwd'),
        ('has_parent', 'JeremyBieber', 'fwd'),
    ]
    assert neighbors(kg.full_view(), kg.entity_id('JaxonBieber'), Direction.FORWARD) == []

    view = apply_mask(kg, {kg.triple_id('JustinBieber', 'has_brother', 'JaxonBieber')})
    assert labelled(kg, neighbors(view, justin, Direction.FORWARD)) == [('has_parent', 'JeremyBieber', 'fwd')]


def test_neighbors_both_is_disjoint_union(sibling_kg):
    view = sibling_kg.full_view()
    for entity in range(len(sibling_kg.entities)):
        both = neighbors(view, entity, Direction.BOTH)
        fwd = neighbors(view, entity, Direction.FORWARD)
        bwd = neighbors(view, entity, Direction.BACKWARD)
        assert set(both) == set(fwd) | set(bwd)
        assert len(both) == len(fwd) + len(bwd)


def test_self_loop_listed_in_both_directions():
    kg = build_kg([('a', 'likes', 'a')])
    flags = [n.direction for n in neighbors(kg.full_view(), 0, Direction.BOTH)]
    assert flags == [Direction.FORWARD, Direction.BACKWARD]


def test_neighbors_unknown_entity(sibling_kg):
    with pytest.raises(KgLookupError):
        neighbors(sibling_kg.full_view(), 99)


def test_apply_mask_sizes(sibling_kg):
    kg = sibling_kg
    assert len(apply_mask(kg, set())) == 3
    assert len(apply_mask(kg, {0})) == 2
    assert len(apply_mask(kg, {0, 1, 2})) == 0
    with pytest.raises(ConsistencyError):
        apply_mask(kg, {3})


def test_views_coexist_without_mutating_base(sibling_kg):
    a = apply_mask(sibling_kg, {0})
    b = apply_mask(sibling_kg, {1, 2})
    assert 0 not in a and 0 in b
    assert list(sibling_kg.full_view().surviving_ids()) == [0, 1, 2]
    assert list(a.surviving_ids()) == [1, 2]
    assert list(b.surviving_ids()) == [0]


def test_file_round_trip(tmp_path, sibling_kg):
    path = tmp_path / 'kg.tsv'
    write_kg(sibling_kg, path)
    reloaded = load_kg(path)
    assert dump_kg(reloaded) == dump_kg(sibling_kg)
    assert [reloaded.label_triple(t.id) for t in reloaded.triples] == SIBLING_TRIPLES


def test_load_skips_comments_and_reports_bad_lines(tmp_path):
    path = tmp_path / 'kg.tsv'
    path.write_text('# header\n\na\tr\tb\nbroken line\n', encoding='utf-8')
    with pytest.raises(InputError) as e:
        load_kg(path)
    assert e.value.line_number == 4
    assert 'kg.tsv' in str(e.value)


def test_lookup_helpers(sibling_kg):
    kg = sibling_kg
    assert kg.find_entity('nobody') is None
    assert kg.triple_id('JustinBieber', 'has_child', 'JaxonBieber') is None
    with pytest.raises(KgLookupError):
        kg.entity_id('nobody')
    with pytest.raises(KgLookupError):
        kg.relation_id('nothing')
