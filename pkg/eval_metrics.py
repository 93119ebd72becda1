"""Accuracy and Hits over contiguous token-subsequence answer matching, plus report formatting."""

import json
import logging
import string
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from config import answer_scan_tokens
from exceptions import ConfigError, InputError
from utils import round2

logger = logging.getLogger(__name__)

_PUNCT = string.punctuation + '“”‘’«»…'


def normalize_tokens(text: str, limit: Optional[int] = None) -> list[str]:
    """Lowercase, split on whitespace, strip leading/trailing punctuation per token."""
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(_PUNCT)
        if token:
            tokens.append(token)
            if limit is not None and len(tokens) >= limit:
                break
    return tokens


def contains_subsequence(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    first = needle[0]
    for i in range(len(haystack) - n + 1):
        if haystack[i] == first and list(haystack[i:i + n]) == list(needle):
            return True
    return False


@dataclass(frozen=True)
class Answer:
    label: str
    aliases: tuple = ()

    def surface_forms(self, use_aliases: bool = True) -> tuple[str, ...]:
        return (self.label,) + (tuple(self.aliases) if use_aliases else ())


class AnswerSet(tuple):
    """Non-empty tuple of Answer; |A(q)| counts entities, not surface forms."""

    def __new__(cls, answers: Iterable[Answer]):
        answers = tuple(answers)
        if not answers:
            raise InputError('answer set is empty')
        for a in answers:
            for form in a.surface_forms():
                if not normalize_tokens(form):
                    raise InputError(f'answer surface form {form!r} normalizes to no tokens')
        return super().__new__(cls, answers)

    def labels(self) -> list[str]:
        return [a.label for a in self]


@dataclass(frozen=True)
class QuestionScore:
    accuracy_contribution: float
    hit: int
    matched_answers: tuple = ()


def match_answer(output: str, answer: Answer, use_aliases: bool = True,
                 max_tokens: int = answer_scan_tokens) -> bool:
    tokens = normalize_tokens(output, max_tokens)
    return any(contains_subsequence(tokens, normalize_tokens(form)) for form in answer.surface_forms(use_aliases))


def score_question(output: str, answers: Sequence[Answer], use_aliases: bool = True,
                   max_tokens: int = answer_scan_tokens) -> QuestionScore:
    if not answers:
        raise InputError('answer set is empty')
    tokens = normalize_tokens(output, max_tokens)
    matched = tuple(
        a.label for a in answers
        if any(contains_subsequence(tokens, normalize_tokens(form)) for form in a.surface_forms(use_aliases))
    )
    return QuestionScore(len(matched) / len(answers), 1 if matched else 0, matched)


def aggregate(scores: Sequence[QuestionScore]) -> tuple[float, float]:
    """(Accuracy %, Hits %) rounded to 2 decimals."""
    if not scores:
        raise InputError('cannot aggregate an empty score list')
    accuracy = sum(s.accuracy_contribution for s in scores) / len(scores) * 100
    hits = sum(s.hit for s in scores) / len(scores) * 100
    return round2(accuracy), round2(hits)


def relative_drop(baseline_percent: float, value_percent: float) -> Optional[float]:
    """Positive = drop. None (n/a) when the baseline is zero."""
    if baseline_percent == 0:
        return None
    return round2((baseline_percent - value_percent) / baseline_percent * 100)


def format_cell(value: float, drop: Optional[float] = None, baseline: bool = False) -> str:
    if baseline:
        return f'{value:.2f}'
    if drop is None:
        return f'{value:.2f} (n/a)'
    sign = '-' if drop >= 0 else '+'
    return f'{value:.2f} ({sign}{abs(drop):.2f}%)'


@dataclass
class EvalReport:
    setting: str
    accuracy: float
    hits: float
    rel_drop_accuracy: Optional[float] = None
    rel_drop_hits: Optional[float] = None
    per_question: list = field(default_factory=list)
    generator: str = ''
    num_questions: int = 0
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def with_baseline(self, baseline: 'EvalReport') -> 'EvalReport':
        self.rel_drop_accuracy = relative_drop(baseline.accuracy, self.accuracy)
        self.rel_drop_hits = relative_drop(baseline.hits, self.hits)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + '\n'

    @classmethod
    def from_dict(cls, data: dict) -> 'EvalReport':
        try:
            return cls(**data)
        except TypeError as e:
            raise InputError(f'malformed report: {e}')

    @classmethod
    def read(cls, path) -> 'EvalReport':
        with open(path, 'r', encoding='utf-8') as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise InputError(f'invalid report JSON: {e.msg}', e.lineno, str(path))
        return cls.from_dict(data)


@dataclass(frozen=True)
class SweepSummary:
    setting: str
    seeds: tuple
    accuracy_mean: float
    accuracy_std: float
    hits_mean: float
    hits_std: float


def summarize(reports: Sequence[EvalReport], seeds: Sequence[int]) -> SweepSummary:
    """Mean and sample standard deviation over a multi-seed sweep of one setting."""
    if not reports:
        raise ConfigError('no reports to summarize')
    acc = np.array([r.accuracy for r in reports], dtype=float)
    hits = np.array([r.hits for r in reports], dtype=float)
    ddof = 1 if len(reports) > 1 else 0
    return SweepSummary(
        setting=reports[0].setting,
        seeds=tuple(seeds),
        accuracy_mean=round2(float(acc.mean())),
        accuracy_std=round2(float(acc.std(ddof=ddof))),
        hits_mean=round2(float(hits.mean())),
        hits_std=round2(float(hits.std(ddof=ddof))),
    )
