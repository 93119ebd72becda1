import numpy as np
import pytest

from conftest import make_question, random_kg
from eval_metrics import score_question
from exceptions import ConfigError
from kg_store import apply_mask
from llm_gateway import GenResponse, MockOracleGenerator, build_prompt
from path_engine import enumerate_paths, sorted_paths
from pcst import PcstMode
from retrievers import (
    ConstantScorer, HashingEmbedder, LexicalScorer, LlmPlanner, LlmScorer, OraclePlanner, RetrievalMethod,
    StaticPlanner, gretriever_retrieve, no_retrieval, oracle_retrieve, parse_relation_paths, parse_score,
    rog_retrieve, textualize_subgraph, tog_retrieve,
)

SIBLING_PLANS = [['has_brother'], ['has_parent', 'has_child']]


class KeywordEmbedder:
    """Unit vector on axis 0 for texts containing the keyword (and for the question), axis 1 otherwise."""

    def __init__(self, keyword, question_text):
        self.keyword = keyword
        self.question_text = question_text

    def embed(self, text):
        if text == self.question_text or self.keyword in text:
            return np.array([1.0, 0.0])
        return np.array([0.0, 1.0])


class CannedGenerator:
    name = 'canned'

    def __init__(self, output):
        self.output = output
        self.requests = []

    def generate(self, request):
        self.requests.append(request)
        return GenResponse(self.output)


def without(kg, head, relation, tail):
    return apply_mask(kg, {kg.triple_id(head, relation, tail)})


def test_textualize_subgraph(sibling_kg):
    kg = sibling_kg
    assert textualize_subgraph([kg.triples[1]], kg) == 'JustinBieber --has_parent--> JeremyBieber'
    assert textualize_subgraph([], kg) == ''
    assert textualize_subgraph([kg.triples[2], kg.triples[0]], kg) == (
        'JustinBieber --has_brother--> JaxonBieber\nJeremyBieber --has_child--> JaxonBieber'
    )


def test_rog_grounds_both_plans(sibling_kg, sibling_question):
    kg = sibling_kg
    result = rog_retrieve(kg.full_view(), sibling_question, StaticPlanner(SIBLING_PLANS), top_k_plans=2)
    assert result.method is RetrievalMethod.ROG
    assert [p.to_text(kg) for p in result.paths] == [
        'JustinBieber --[has_brother]--> JaxonBieber',
        'JustinBieber --[has_parent]--> JeremyBieber --[has_child]--> JaxonBieber',
    ]
    assert result.evidence_text == (
        'JustinBieber --has_brother--> JaxonBieber\n'
        '\n'
        'JustinBieber --has_parent--> JeremyBieber\n'
        'JeremyBieber --has_child--> JaxonBieber'
    )


def test_rog_after_disruption(sibling_kg, sibling_question):
    kg = sibling_kg
    view = without(kg, 'JustinBieber', 'has_brother', 'JaxonBieber')
    result = rog_retrieve(view, sibling_question, StaticPlanner(SIBLING_PLANS), top_k_plans=2)
    assert [p.to_text(kg) for p in result.paths] == [
        'JustinBieber --[has_parent]--> JeremyBieber --[has_child]--> JaxonBieber'
    ]
    assert result.holds_in(view)
    assert rog_retrieve(kg.full_view(), sibling_question, StaticPlanner([['has_child']])).paths == ()


def test_rog_oracle_planner_is_fragile(sibling_kg, sibling_question):
    kg = sibling_kg
    planner = OraclePlanner()
    assert planner.plan(sibling_question, kg) == [['has_brother']]
    view = without(kg, 'JustinBieber', 'has_brother', 'JaxonBieber')
    assert rog_retrieve(view, sibling_question, planner).paths == ()


def test_rog_is_monotone_under_deletion(sibling_kg, sibling_question):
    kg = sibling_kg
    planner = StaticPlanner(SIBLING_PLANS)
    full = set(rog_retrieve(kg.full_view(), sibling_question, planner).paths)
    for removed in range(len(kg)):
        ablated = set(rog_retrieve(apply_mask(kg, {removed}), sibling_question, planner).paths)
        assert ablated <= full


def test_rog_edge_cases(sibling_kg):
    kg = sibling_kg
    stranger = make_question('q', 'Who?', ['Nobody'], ['JaxonBieber'])
    result = rog_retrieve(kg.full_view(), stranger, StaticPlanner(SIBLING_PLANS))
    assert result.paths == () and result.trace
    question = make_question('q2', 'Who?', ['JustinBieber'], ['JaxonBieber'])
    result = rog_retrieve(kg.full_view(), question, StaticPlanner([['unknown_relation'], []]))
    assert result.paths == ()
    assert result.trace[0]['note'] == 'relation not in KG'
    with pytest.raises(ConfigError):
        rog_retrieve(kg.full_view(), question, StaticPlanner(SIBLING_PLANS), top_k_plans=0)


def test_lexical_scorer_prefers_brother(sibling_kg, sibling_question):
    scorer = LexicalScorer()
    assert scorer.score(sibling_question.text, 'JustinBieber has_brother JaxonBieber') == pytest.approx(1 / 7)
    assert scorer.score(sibling_question.text, 'JustinBieber has_parent JeremyBieber') == 0
    result = tog_retrieve(sibling_kg.full_view(), sibling_question, scorer, beam_width=1, max_depth=1)
    assert [p.to_text(sibling_kg) for p in result.paths] == ['JustinBieber --[has_brother]--> JaxonBieber']


def test_tog_wide_beam_equals_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(50):
        kg = random_kg(rng, max_entities=7, max_triples=20)
        topic = kg.entities.label(int(rng.integers(0, len(kg.entities))))
        question = make_question('q', 'anything', [topic], [topic])
        depth = int(rng.integers(1, 4))
        result = tog_retrieve(kg.full_view(), question, ConstantScorer(0.5), beam_width=10 ** 6, max_depth=depth)
        expected = sorted_paths(enumerate_paths(kg.full_view(), kg.entity_id(topic), depth))
        assert list(result.paths) == expected


def test_tog_stops_when_evidence_is_sufficient(sibling_kg):
    question = make_question('q', 'JaxonBieber', ['JustinBieber'], ['JaxonBieber'])
    result = tog_retrieve(sibling_kg.full_view(), question, LexicalScorer(), beam_width=2, max_depth=3)
    assert all(p.length == 1 for p in result.paths)
    assert result.trace[-1]['note'].startswith('stop')


def test_tog_isolated_topic(sibling_kg, sibling_question):
    view = apply_mask(sibling_kg, {0, 1})
    assert tog_retrieve(view, sibling_question, LexicalScorer()).paths == ()
    with pytest.raises(ConfigError):
        tog_retrieve(view, sibling_question, LexicalScorer(), beam_width=0)


def test_gretriever_recovers_nigeria_route(nigeria_kg, nigeria_question):
    kg = nigeria_kg
    view = without(kg, 'Nigeria', 'time zones', 'West Africa Time Zone')
    embedder = KeywordEmbedder('Time Zone', nigeria_question.text)
    for mode in (PcstMode.EXACT, PcstMode.APPROX, PcstMode.AUTO):
        result = gretriever_retrieve(view, nigeria_question, embedder, k_nodes=1, edge_cost=0.5, pcst_mode=mode)
        assert result.evidence_text == (
            'Nigeria --administrative division--> Bauchi\n'
            'Bauchi --time zones--> West Africa Time Zone'
        )
        assert result.holds_in(view)


def test_gretriever_single_node_cases(nigeria_kg, nigeria_question):
    kg = nigeria_kg
    topic_first = KeywordEmbedder('Nigeria', nigeria_question.text)
    result = gretriever_retrieve(kg.full_view(), nigeria_question, topic_first, k_nodes=1, edge_cost=10.0)
    assert result.subgraph == () and result.evidence_text == ''
    assert result.trace[0]['tree'] == ['Nigeria']

    isolated = apply_mask(kg, {0, 1, 2})
    result = gretriever_retrieve(isolated, nigeria_question, HashingEmbedder(), k_nodes=3)
    assert result.subgraph == () and result.trace[0]['tree'] == ['Nigeria']
    with pytest.raises(ConfigError):
        gretriever_retrieve(isolated, nigeria_question, HashingEmbedder(), hop_radius=3)


def test_gretriever_output_is_a_tree(bieber_kg, bieber_question):
    kg = bieber_kg
    result = gretriever_retrieve(kg.full_view(), bieber_question, HashingEmbedder(), k_nodes=4, edge_cost=0.5)
    entities = {e for t in result.subgraph for e in (t.head, t.tail)}
    assert len(entities) == len(result.subgraph) + 1 or not result.subgraph
    assert 'Justin Bieber' in result.trace[0]['tree']


@pytest.mark.parametrize('fixture, gold', [
    ('nigeria', ('Nigeria', 'time zones', 'West Africa Time Zone')),
    ('oregon', ('University of Oregon', 'contained by', 'Eugene')),
    ('bieber', ('Justin Bieber', 'nationality', 'Canada')),
])
def test_oracle_retriever_and_mock_recover_answer(request, fixture, gold):
    kg = request.getfixturevalue(f'{fixture}_kg')
    question = request.getfixturevalue(f'{fixture}_question')
    view = without(kg, *gold)
    result = oracle_retrieve(view, question)
    assert result.paths and all(p.length == 2 for p in result.paths)
    output = MockOracleGenerator([question]).generate(build_prompt(question, result)).output_text
    assert score_question(output, question.answers).hit == 1


def test_no_retrieval_prompts_without_evidence(bieber_question):
    result = no_retrieval(bieber_question)
    assert result.method is RetrievalMethod.NONE
    request = build_prompt(bieber_question, result)
    assert MockOracleGenerator([bieber_question]).generate(request).output_text == 'unknown'


def test_hashing_embedder():
    embedder = HashingEmbedder()
    a = embedder.embed('West Africa Time Zone')
    assert a.shape == (64,)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert np.array_equal(a, HashingEmbedder().embed('west africa time zone'))
    assert not embedder.embed('!!!').any()


def test_parsers():
    assert parse_relation_paths('Plans:\n["has_parent", "has_child"]\n["has_brother"]') == [
        ['has_parent', 'has_child'], ['has_brother'],
    ]
    assert parse_relation_paths('1. has_parent -> has_child') == [['has_parent', 'has_child']]
    assert parse_relation_paths('no idea') == []
    assert parse_score('Score: 0.8') == 0.8
    assert parse_score('7') == 1.0
    assert parse_score('none') == 0.0


def test_llm_adapters_use_the_generator(sibling_kg, sibling_question):
    generator = CannedGenerator('["has_brother"]')
    plans = LlmPlanner(generator).plan(sibling_question, sibling_kg)
    assert plans == [['has_brother']]
    prompt = generator.requests[0].user_text
    assert 'has_brother' in prompt and 'has_parent' in prompt and sibling_question.text in prompt
    assert LlmScorer(CannedGenerator('0.25')).score('q', 'candidate') == 0.25
