import numpy as np
import pytest

from eval_metrics import (
    Answer, AnswerSet, EvalReport, aggregate, format_cell, match_answer, normalize_tokens, relative_drop,
    score_question, summarize,
)
from exceptions import InputError


def test_normalize_tokens():
    assert normalize_tokens('  "Canada!",  he said. ') == ['canada', 'he', 'said']
    assert normalize_tokens('a b c d', limit=2) == ['a', 'b']
    assert normalize_tokens('!!! ...') == []


@pytest.mark.parametrize('output, answer, expected', [
    ('Justin Bieber was born in Canada', Answer('Canada'), True),
    ('Jaxon', Answer('Jaxon Bieber'), False),
    ('Canadian', Answer('Canada'), False),
    ('The answer is canada.', Answer('Canada'), True),
    ('He is from the USA', Answer('United States', ('USA',)), True),
])
def test_match_answer(output, answer, expected):
    assert match_answer(output, answer) is expected


def test_alias_switch():
    answer = Answer('United States', ('USA',))
    assert match_answer('USA', answer, use_aliases=False) is False


def test_score_question_partial():
    answers = AnswerSet([Answer('Jaxon Bieber'), Answer('Jazmyn Bieber')])
    score = score_question('Jaxon Bieber', answers)
    assert score.accuracy_contribution == 0.5
    assert score.hit == 1
    assert score.matched_answers == ('Jaxon Bieber',)
    assert score_question('unknown', answers).hit == 0


def test_answer_set_validation():
    with pytest.raises(InputError):
        AnswerSet([])
    with pytest.raises(InputError):
        AnswerSet([Answer('?!')])


def test_aggregate():
    answers = AnswerSet([Answer('Canada')])
    scores = [score_question('Canada', answers), score_question('no', answers), score_question('canada', answers)]
    assert aggregate(scores) == (66.67, 66.67)
    with pytest.raises(InputError):
        aggregate([])


@pytest.mark.parametrize('baseline, value, drop', [
    (76.75, 75.55, 1.56),
    (76.75, 50.46, 34.25),
    (57.49, 53.23, 7.41),
    (76.75, 76.75, 0.0),
])
def test_relative_drop_matches_published_cells(baseline, value, drop):
    assert relative_drop(baseline, value) == drop


def test_relative_drop_zero_baseline():
    assert relative_drop(0, 10) is None


def test_format_cell():
    assert format_cell(76.75, baseline=True) == '76.75'
    assert format_cell(75.55, relative_drop(76.75, 75.55)) == '75.55 (-1.56%)'
    assert format_cell(76.75, relative_drop(76.75, 76.75)) == '76.75 (-0.00%)'
    assert format_cell(80.0, relative_drop(76.75, 80.0)) == '80.00 (+4.23%)'
    assert format_cell(10.0, None) == '10.00 (n/a)'


def test_metric_properties_on_random_pairs():
    rng = np.random.default_rng(2024)
    vocabulary = ['canada', 'london', 'eugene', 'west', 'africa', 'time', 'zone', 'bauchi', 'the', 'is']
    scores = []
    for _ in range(1000):
        answers = []
        for i in range(int(rng.integers(1, 4))):
            label = ' '.join(rng.choice(vocabulary, size=int(rng.integers(1, 3))))
            aliases = tuple(' '.join(rng.choice(vocabulary, size=1)) for _ in range(int(rng.integers(0, 2))))
            answers.append(Answer(f'{label} {i}', aliases))
        answer_set = AnswerSet(answers)
        output = ' '.join(rng.choice(vocabulary + ['0', '1', '2'], size=int(rng.integers(0, 12))))

        score = score_question(output, answer_set)
        assert score.accuracy_contribution <= score.hit
        assert score.hit == (1 if score.accuracy_contribution > 0 else 0)

        strict = score_question(output, answer_set, use_aliases=False)
        assert strict.accuracy_contribution <= score.accuracy_contribution

        permuted = AnswerSet(answers[i] for i in rng.permutation(len(answers)))
        assert score_question(output, permuted).accuracy_contribution == pytest.approx(score.accuracy_contribution)
        scores.append(score)

    accuracy, hits = aggregate(scores)
    assert accuracy <= hits
    shuffled = [scores[i] for i in rng.permutation(len(scores))]
    assert aggregate(shuffled) == (accuracy, hits)


def test_report_json_round_trip(tmp_path):
    report = EvalReport('random 5%', 75.55, 80.0, generator='mock-oracle', num_questions=4)
    report.with_baseline(EvalReport('intact', 76.75, 80.0))
    assert report.rel_drop_accuracy == 1.56 and report.rel_drop_hits == 0.0
    path = tmp_path / 'report.json'
    path.write_text(report.to_json(), encoding='utf-8')
    assert EvalReport.read(path) == report


def test_summarize_sweep():
    reports = [EvalReport('random 10%', a, h) for a, h in [(70.0, 80.0), (72.0, 82.0), (74.0, 84.0)]]
    summary = summarize(reports, [1, 2, 3])
    assert summary.accuracy_mean == 72.0 and summary.hits_mean == 82.0
    assert summary.accuracy_std == 2.0 and summary.hits_std == 2.0
    assert summary.seeds == (1, 2, 3)
