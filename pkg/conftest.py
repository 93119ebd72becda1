import numpy as np
import pytest

from eval_metrics import Answer, AnswerSet
from kg_store import build_kg
from qa_datasets import Question

SIBLING_TRIPLES = [
    ('JustinBieber', 'has_brother', 'JaxonBieber'),
    ('JustinBieber', 'has_parent', 'JeremyBieber'),
    ('JeremyBieber', 'has_child', 'JaxonBieber'),
]

NIGERIA_TRIPLES = [
    ('Nigeria', 'time zones', 'West Africa Time Zone'),
    ('Nigeria', 'administrative division', 'Bauchi'),
    ('Bauchi', 'time zones', 'West Africa Time Zone'),
]

OREGON_TRIPLES = [
    ('University of Oregon', 'contained by', 'Eugene'),
    ('University of Oregon', 'has campus', 'Eugene Campus'),
    ('Eugene Campus', 'contained by', 'Eugene'),
]

BIEBER_TRIPLES = [
    ('Justin Bieber', 'nationality', 'Canada'),
    ('Justin Bieber', 'place of birth', 'London'),
    ('London', 'contained by', 'Canada'),
    ('Justin Bieber', 'place lived', 'Stratford'),
    ('Stratford', 'contained by', 'Canada'),
]


def make_question(qid, text, topics, answers):
    """answers: labels, or (label, aliases) pairs."""
    parsed = []
    for a in answers:
        if isinstance(a, str):
            parsed.append(Answer(a))
        else:
            parsed.append(Answer(a[0], tuple(a[1])))
    return Question(qid, text, tuple(topics), AnswerSet(parsed))


def random_kg(rng: np.random.Generator, max_entities: int = 10, max_triples: int = 50, relations: int = 3):
    n = int(rng.integers(2, max_entities + 1))
    m = int(rng.integers(1, max_triples + 1))
    triples = []
    for _ in range(m):
        h, t = (int(x) for x in rng.integers(0, n, size=2))
        r = int(rng.integers(0, relations))
        triples.append((f'e{h}', f'r{r}', f'e{t}'))
    return build_kg(triples)


@pytest.fixture
def sibling_kg():
    return build_kg(SIBLING_TRIPLES)


@pytest.fixture
def sibling_question():
    return make_question('sibling', 'Who is the brother of Justin Bieber?', ['JustinBieber'], ['JaxonBieber'])


@pytest.fixture
def nigeria_kg():
    return build_kg(NIGERIA_TRIPLES)


@pytest.fixture
def nigeria_question():
    return make_question('WebQTest-436', 'What is the Nigeria time?', ['Nigeria'], ['West Africa Time Zone'])


@pytest.fixture
def oregon_kg():
    return build_kg(OREGON_TRIPLES)


@pytest.fixture
def oregon_question():
    return make_question('WebQTest-1481', 'What city is the University of Oregon state in?',
                         ['University of Oregon'], ['Eugene'])


@pytest.fixture
def bieber_kg():
    return build_kg(BIEBER_TRIPLES)


@pytest.fixture
def bieber_question():
    return make_question('WebQTest-116', 'which country was Justin Bieber born in?', ['Justin Bieber'], ['Canada'])
