"""QA files (JSON lines), synthetic KGs with controlled path redundancy, RoG-format conversion."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from eval_metrics import Answer, AnswerSet
from exceptions import ConfigError, InputError, ParseError
from kg_store import Kg, build_kg, write_kg

logger = logging.getLogger(__name__)

SYNTH_MAX_TRIPLES = 10 ** 6

REL_DIRECT = 'rel_direct'
REL_P = 'rel_p'
REL_C = 'rel_c'
REL_NOISE = 'rel_noise'


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    topic_entities: tuple
    answers: AnswerSet

    def topic_ids(self, kg: Kg) -> list[int]:
        ids = (kg.find_entity(label) for label in self.topic_entities)
        return [i for i in ids if i is not None]

    def answer_ids(self, kg: Kg) -> list[int]:
        found = []
        for answer in self.answers:
            for form in answer.surface_forms():
                i = kg.find_entity(form)
                if i is not None:
                    found.append(i)
                    break
        return found

    def to_record(self) -> dict:
        return {
            'id': self.id,
            'question': self.text,
            'topic': list(self.topic_entities),
            'answers': [{'label': a.label, 'aliases': list(a.aliases)} for a in self.answers],
        }


def parse_question(record, line_number: Optional[int] = None, source: Optional[str] = None) -> Question:
    if not isinstance(record, dict):
        raise ParseError('record is not a JSON object', line_number, source)
    for key in ('id', 'question', 'topic', 'answers'):
        if key not in record:
            raise ParseError(f'missing field "{key}"', line_number, source)
    qid, text, topic, answers = record['id'], record['question'], record['topic'], record['answers']
    if not isinstance(qid, str) or not qid:
        raise ParseError('"id" must be a non-empty string', line_number, source)
    if not isinstance(text, str):
        raise ParseError('"question" must be a string', line_number, source)
    if not isinstance(topic, list) or not topic or not all(isinstance(t, str) and t.strip() for t in topic):
        raise ParseError('"topic" must be a non-empty list of labels', line_number, source)
    if not isinstance(answers, list) or not answers:
        raise ParseError('"answers" must be a non-empty list', line_number, source)
    parsed = []
    for a in answers:
        if not isinstance(a, dict) or not isinstance(a.get('label'), str):
            raise ParseError('answer needs a string "label"', line_number, source)
        aliases = a.get('aliases', [])
        if not isinstance(aliases, list) or not all(isinstance(x, str) for x in aliases):
            raise ParseError('"aliases" must be a list of strings', line_number, source)
        parsed.append(Answer(a['label'].strip(), tuple(aliases)))
    try:
        answer_set = AnswerSet(parsed)
    except InputError as e:
        raise ParseError(str(e), line_number, source)
    return Question(qid, text, tuple(t.strip() for t in topic), answer_set)


def load_questions(path) -> list[Question]:
    questions: list[Question] = []
    seen: set[str] = set()
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f'invalid JSON: {e.msg}', line_number, str(path))
            question = parse_question(record, line_number, str(path))
            if question.id in seen:
                raise ParseError(f'duplicate question id {question.id!r}', line_number, str(path))
            seen.add(question.id)
            questions.append(question)
    logger.info(f'Loaded {len(questions)} questions from {path}')
    return questions


def write_questions(questions: Iterable[Question], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for q in questions:
            f.write(json.dumps(q.to_record(), ensure_ascii=False) + '\n')


@dataclass(frozen=True)
class SynthSpec:
    num_questions: int
    redundancy: int = 1
    distractor_triples: int = 0
    seed: int = 0

    @property
    def triple_count(self) -> int:
        return self.num_questions * (1 + 2 * self.redundancy) + self.distractor_triples

    def validate(self):
        for name in ('num_questions', 'redundancy', 'distractor_triples', 'seed'):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ConfigError(f'{name} must be a non-negative integer, got {value!r}')
        if self.triple_count > SYNTH_MAX_TRIPLES:
            raise ConfigError(f'synthetic KG would hold {self.triple_count} triples, guard is {SYNTH_MAX_TRIPLES}')


@dataclass(frozen=True)
class SynthDataset:
    kg: Kg
    questions: list


def synth_triples(spec: SynthSpec) -> tuple[list[tuple[str, str, str]], list[Question]]:
    spec.validate()
    triples: list[tuple[str, str, str]] = []
    questions: list[Question] = []
    for i in range(spec.num_questions):
        topic, answer = f'T{i}', f'A{i}'
        triples.append((topic, REL_DIRECT, answer))
        for j in range(spec.redundancy):
            mid = f'M{i}_{j}'
            triples.append((topic, REL_P, mid))
            triples.append((mid, REL_C, answer))
        questions.append(Question(
            id=f'synth-{i}',
            text=f'Which entity is linked to {topic}?',
            topic_entities=(topic,),
            answers=AnswerSet([Answer(answer)]),
        ))

    # Noise lives on its own entities so it never shortcuts a question's paths
    if spec.distractor_triples:
        rng = np.random.default_rng(spec.seed)
        pool = max(2, spec.distractor_triples)
        chosen: set[tuple[int, int]] = set()
        while len(chosen) < spec.distractor_triples:
            u, v = (int(x) for x in rng.integers(0, pool, size=2))
            if u == v or (u, v) in chosen:
                continue
            chosen.add((u, v))
            triples.append((f'N{u}', REL_NOISE, f'N{v}'))
    return triples, questions


def synth_kg(spec: SynthSpec) -> SynthDataset:
    triples, questions = synth_triples(spec)
    kg = build_kg(triples)
    logger.info(f'Synthesized KG with {len(kg)} triples for {len(questions)} questions (r={spec.redundancy})')
    return SynthDataset(kg, questions)


def write_synth(dataset: SynthDataset, kg_path, qa_path) -> None:
    write_kg(dataset.kg, kg_path)
    write_questions(dataset.questions, qa_path)


def convert_rog_record(record: dict, line_number: Optional[int] = None,
                       source: Optional[str] = None) -> tuple[list[tuple[str, str, str]], Question]:
    """One WebQSP/CWQ record in the RoG JSON-lines layout: id, question, q_entity, a_entity, graph."""
    try:
        qid = str(record['id'])
        text = record['question']
        topics = [str(t) for t in record['q_entity']]
        answers = [str(a) for a in record['a_entity']]
        graph = record.get('graph', [])
    except (KeyError, TypeError) as e:
        raise ParseError(f'not a RoG record: {e}', line_number, source)
    triples = []
    for triple in graph:
        if not isinstance(triple, (list, tuple)) or len(triple) != 3:
            raise ParseError('graph entries must be [head, relation, tail]', line_number, source)
        triples.append(tuple(str(x) for x in triple))
    question = parse_question({
        'id': qid,
        'question': text,
        'topic': topics,
        'answers': [{'label': a, 'aliases': []} for a in answers],
    }, line_number, source)
    return triples, question


def convert_rog_jsonl(path) -> tuple[Kg, list[Question]]:
    """Merge the per-question subgraphs of a RoG-style dump into one KG plus its questions."""
    triples: list[tuple[str, str, str]] = []
    questions: list[Question] = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f'invalid JSON: {e.msg}', line_number, str(path))
            record_triples, question = convert_rog_record(record, line_number, str(path))
            triples.extend(record_triples)
            questions.append(question)
    kg = build_kg(triples)
    logger.info(f'Converted {len(questions)} records from {path} into {len(kg)} triples')
    return kg, questions


def questions_by_id(questions: Sequence[Question]) -> dict:
    return {q.id: q for q in questions}
