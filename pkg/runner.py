"""Experiment orchestration: load, ablate, retrieve, generate, score, report."""

import json
import logging
import os
import threading
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from queue import Empty, Full, Queue
from typing import Callable, Optional, Sequence

import config as defaults
from ablation import (
    AblationManifest, Strategy, apply_manifest, disrupt_paths, identity_manifest, question_view, random_deletion,
)
from eval_metrics import (
    EvalReport, QuestionScore, SweepSummary, aggregate, format_cell, relative_drop, score_question, summarize,
)
from exceptions import ConfigError, ConsistencyError, DataError, InputError, KgabException, StageError, TransportError
from kg_store import Kg, KgView, dump_kg, load_kg
from llm_gateway import Generator, HttpChatGenerator, MockOracleGenerator, TranscriptLog, build_prompt
from path_engine import DirectionMode
from pcst import PcstMode
from qa_datasets import Question, load_questions, questions_by_id
from retrievers import (
    ConstantScorer, HashingEmbedder, LexicalScorer, LlmPlanner, LlmScorer, OraclePlanner, RetrievalMethod,
    RetrievalResult, gretriever_retrieve, no_retrieval, oracle_retrieve, rog_retrieve, tog_retrieve,
)
from utils import checksum_ids, checksum_text, get_file_sha256

logger = logging.getLogger(__name__)

REPORT_FILE = 'report.json'
MANIFEST_FILE = 'manifest.json'
TRACES_FILE = 'traces.jsonl'
OUTPUTS_FILE = 'outputs.jsonl'
TRANSCRIPT_FILE = 'transcript.jsonl'

GENERATORS = ('mock', 'http')
PLANNERS = ('oracle', 'llm')
SCORERS = ('lexical', 'constant', 'llm')

# Fields that only say where things are read from or written to; kept out of reports
IO_ONLY_FIELDS = ('kg_path', 'questions_path', 'output_dir', 'manifest_path', 'baseline_report',
                  'workers', 'cache_label', 'offline')


@dataclass
class ExperimentConfig:
    kg_path: str = ''
    questions_path: str = ''
    name: str = ''
    strategy: str = Strategy.NONE.value
    rate: Optional[float] = None
    seed: int = 0
    nested: bool = False
    isolated: bool = False
    retriever: str = RetrievalMethod.ORACLE.value
    generator: str = 'mock'
    planner: str = 'oracle'
    scorer: str = 'lexical'
    top_k_plans: int = 3
    beam_width: int = 3
    max_depth: int = 3
    stop_threshold: float = 0.9
    k_nodes: int = 5
    hop_radius: int = 2
    edge_cost: float = 0.5
    pcst_mode: str = PcstMode.AUTO.value
    max_hops: int = defaults.default_max_hops
    direction_mode: str = DirectionMode.BIDIRECTIONAL.value
    exact_label_only: bool = False
    answer_system_prompt: str = defaults.answer_system_prompt
    planner_prompt: str = defaults.planner_prompt
    scorer_prompt: str = defaults.scorer_prompt
    workers: int = defaults.max_workers
    output_dir: str = ''
    manifest_path: str = ''
    baseline_report: str = ''
    cache_label: str = ''
    offline: bool = False

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        unknown = sorted(set(data) - set(cls.field_names()))
        if unknown:
            raise ConfigError(f'unknown experiment keys: {", ".join(unknown)}')
        return cls(**data)

    @classmethod
    def from_toml(cls, path, **overrides) -> 'ExperimentConfig':
        """File values over dataclass defaults; non-None overrides (CLI flags) over the file."""
        try:
            with open(path, 'rb') as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f'invalid experiment file {path}: {e}')
        return cls.from_dict(data).with_overrides(**overrides)

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        unknown = sorted(set(overrides) - set(self.field_names()))
        if unknown:
            raise ConfigError(f'unknown experiment keys: {", ".join(unknown)}')
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def validate(self) -> 'ExperimentConfig':
        _choice('strategy', self.strategy, [s.value for s in Strategy])
        _choice('retriever', self.retriever, [m.value for m in RetrievalMethod if m is not RetrievalMethod.NONE])
        _choice('generator', self.generator, GENERATORS)
        _choice('planner', self.planner, PLANNERS)
        _choice('scorer', self.scorer, SCORERS)
        _choice('pcst_mode', self.pcst_mode, [m.value for m in PcstMode])
        _choice('direction_mode', self.direction_mode, [m.value for m in DirectionMode])
        if self.strategy == Strategy.RANDOM.value:
            if not isinstance(self.rate, (int, float)) or isinstance(self.rate, bool) or not 0 <= self.rate <= 1:
                raise ConfigError(f'strategy random needs a rate in [0, 1], got {self.rate!r}')
        elif self.rate is not None:
            raise ConfigError(f'rate only applies to strategy random, not {self.strategy}')
        if self.nested and self.strategy != Strategy.RANDOM.value:
            raise ConfigError('nested only applies to strategy random')
        if self.isolated and self.strategy != Strategy.PATH_DISRUPTION.value:
            raise ConfigError('isolated only applies to strategy path_disruption')
        for name in ('top_k_plans', 'beam_width', 'max_depth', 'k_nodes', 'max_hops', 'workers'):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f'{name} must be a positive integer, got {value!r}')
        if self.hop_radius not in (1, 2):
            raise ConfigError(f'hop_radius must be 1 or 2, got {self.hop_radius!r}')
        if not self.edge_cost > 0:
            raise ConfigError(f'edge_cost must be positive, got {self.edge_cost!r}')
        if not 0 <= self.stop_threshold <= 1:
            raise ConfigError(f'stop_threshold must lie in [0, 1], got {self.stop_threshold!r}')
        if self.offline and not self.cache_label:
            raise ConfigError('offline replay needs cache_label')
        return self

    @property
    def setting(self) -> str:
        if self.name:
            return self.name
        if self.strategy == Strategy.RANDOM.value:
            return f'random {self.rate * 100:g}%'
        return {
            Strategy.NONE.value: 'intact',
            Strategy.PATH_DISRUPTION.value: 'path disruption',
            Strategy.NO_RETRIEVAL.value: 'no retrieval',
        }[self.strategy]

    def report_config(self) -> dict:
        data = asdict(self)
        for name in IO_ONLY_FIELDS:
            data.pop(name)
        return data


def _choice(name: str, value, allowed: Sequence):
    if value not in allowed:
        raise ConfigError(f'{name} must be one of {", ".join(allowed)}, got {value!r}')


@dataclass
class QuestionOutcome:
    question_id: str
    output: str
    score: QuestionScore
    error: Optional[str] = None
    trace: dict = field(default_factory=dict)


@dataclass
class RunResult:
    report: EvalReport
    manifest: AblationManifest
    outcomes: list
    view_checksum: str


def _stage(name: str, fn: Callable, *args, **kwargs):
    """Run one pipeline stage, tagging any harness or I/O failure with the stage name."""
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except KgabException as e:
        logger.error(f'Stage {name} failed: {e}')
        raise StageError(name, e) from e
    except OSError as e:
        logger.error(f'Stage {name} failed: {e}')
        raise StageError(name, DataError(str(e))) from e


def build_manifest(config: ExperimentConfig, kg: Kg, questions: Sequence[Question]) -> AblationManifest:
    strategy = Strategy(config.strategy)
    if strategy is Strategy.RANDOM:
        return random_deletion(kg, config.rate, config.seed, nested=config.nested)
    if strategy is Strategy.PATH_DISRUPTION:
        return disrupt_paths(kg, questions, config.seed, config.max_hops,
                             DirectionMode(config.direction_mode), isolated=config.isolated)
    return identity_manifest(strategy, config.seed, len(kg))


def _check_manifest(config: ExperimentConfig, manifest: AblationManifest, kg: Kg):
    if manifest.strategy.value != config.strategy:
        raise ConfigError(f'manifest strategy {manifest.strategy.value} does not match config strategy {config.strategy}')
    if manifest.kg_triples and manifest.kg_triples != len(kg):
        raise ConsistencyError(f'manifest was built on {manifest.kg_triples} triples, KG has {len(kg)}')


def _llm_backend(config: ExperimentConfig, generator: Generator) -> Generator:
    if isinstance(generator, HttpChatGenerator):
        return generator
    return HttpChatGenerator.from_env(cache_label=config.cache_label or None, offline=config.offline)


def make_retriever(config: ExperimentConfig, generator: Generator, planner=None, scorer=None,
                   embedder=None) -> Callable[[KgView, Question], RetrievalResult]:
    """Bind the configured retriever and its planner, scorer or embedder into view, question -> result."""
    if config.strategy == Strategy.NO_RETRIEVAL.value:
        return lambda view, question: no_retrieval(question)
    method = RetrievalMethod(config.retriever)
    mode = DirectionMode(config.direction_mode)
    if method is RetrievalMethod.ROG:
        if planner is None:
            if config.planner == 'llm':
                planner = LlmPlanner(_llm_backend(config, generator), config.planner_prompt, k=config.top_k_plans)
            else:
                planner = OraclePlanner(config.max_hops, mode)
        return lambda view, question: rog_retrieve(view, question, planner, config.top_k_plans, mode)
    if method is RetrievalMethod.TOG:
        if scorer is None:
            if config.scorer == 'llm':
                scorer = LlmScorer(_llm_backend(config, generator), config.scorer_prompt)
            elif config.scorer == 'constant':
                scorer = ConstantScorer()
            else:
                scorer = LexicalScorer()
        return lambda view, question: tog_retrieve(view, question, scorer, config.beam_width, config.max_depth,
                                                   mode, config.stop_threshold)
    if method is RetrievalMethod.GRETRIEVER:
        embedder = embedder or HashingEmbedder()
        return lambda view, question: gretriever_retrieve(view, question, embedder, config.k_nodes,
                                                          config.hop_radius, config.edge_cost,
                                                          PcstMode(config.pcst_mode))
    return lambda view, question: oracle_retrieve(view, question, config.max_hops, mode)


def make_generator(config: ExperimentConfig, questions: Sequence[Question]) -> Generator:
    if config.generator == 'mock':
        return MockOracleGenerator(questions)
    transcript = TranscriptLog(os.path.join(config.output_dir, TRANSCRIPT_FILE)) if config.output_dir else None
    return HttpChatGenerator.from_env(transcript=transcript, cache_label=config.cache_label or None,
                                      offline=config.offline)


def evaluate_question(question: Question, view: KgView, retrieve: Callable, generator: Generator,
                      config: ExperimentConfig) -> QuestionOutcome:
    retrieval = retrieve(view, question)
    request = build_prompt(question, retrieval, config.answer_system_prompt)
    error = None
    try:
        output = generator.generate(request).output_text
    except TransportError as e:
        logger.warning(f'Generation failed for question {question.id}: {e}')
        output, error = '', str(e)
    score = score_question(output, question.answers, use_aliases=not config.exact_label_only)
    logger.debug(f'Question {question.id}: hit={score.hit} accuracy={score.accuracy_contribution:.3f}')
    trace = {'id': question.id, 'retrieval': retrieval.to_trace(view.base), 'evidence': retrieval.evidence_text}
    return QuestionOutcome(question.id, output, score, error, trace)


stop_event = threading.Event()


def _put(task_queue: Queue, item) -> bool:
    """Blocking put that gives up once a stop is requested."""
    while not stop_event.is_set():
        try:
            task_queue.put(item, timeout=1)
            return True
        except Full:
            continue
    return False


def producer(task_queue: Queue, questions: Sequence[Question], worker_count: int):
    for question in questions:
        if not _put(task_queue, question):
            logger.info('Stop requested, no more questions queued')
            return

    for _ in range(worker_count):
        if not _put(task_queue, None):
            return


def worker(task_queue: Queue, result_queue: Queue, evaluate: Callable[[Question], QuestionOutcome]):
    while True:
        if stop_event.is_set():
            result_queue.put(None)
            return

        try:
            question = task_queue.get(timeout=1)
        except Empty:
            continue
        if question is None:
            result_queue.put(None)
            return

        try:
            result_queue.put(('ok', question.id, evaluate(question)))
        except Exception as e:
            logger.error(f'Question {question.id} aborted the run: {e}')
            result_queue.put(('error', question.id, e))
            stop_event.set()


def collector(result_queue: Queue, outcomes: dict, errors: list, worker_count: int):
    finished_worker_count = 0
    while True:
        item = result_queue.get()
        if item is None:
            finished_worker_count += 1
            if finished_worker_count == worker_count:
                return
            continue

        kind, question_id, payload = item
        if kind == 'ok':
            outcomes[question_id] = payload
        else:
            errors.append((question_id, payload))


def evaluate_all(questions: Sequence[Question], evaluate: Callable[[Question], QuestionOutcome],
                 worker_count: int) -> list[QuestionOutcome]:
    """Fan questions out to a worker pool; results come back in dataset order."""
    stop_event.clear()
    task_queue = Queue(maxsize=100)
    result_queue = Queue()
    outcomes: dict = {}
    errors: list = []

    threads = [threading.Thread(target=producer, args=(task_queue, questions, worker_count))]
    for _ in range(worker_count):
        threads.append(threading.Thread(target=worker, args=(task_queue, result_queue, evaluate)))
    threads.append(threading.Thread(target=collector, args=(result_queue, outcomes, errors, worker_count)))
    for thread in threads:
        thread.start()

    try:
        for thread in threads:
            thread.join()
    except (KeyboardInterrupt, SystemExit):
        logger.info('Stop requested, waiting for workers')
        stop_event.set()
        for thread in threads:
            thread.join()
        raise

    if errors:
        question_id, e = errors[0]
        if isinstance(e, KgabException):
            raise StageError('retrieve', e) from e
        raise e
    if len(outcomes) != len(questions):
        raise StageError('evaluate', DataError(f'{len(questions) - len(outcomes)} questions were not evaluated'))
    return [outcomes[q.id] for q in questions]


def _write_jsonl(path, records):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + '\n')


def write_artifacts(result: RunResult, output_dir):
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / REPORT_FILE, 'w', encoding='utf-8', newline='\n') as f:
        f.write(result.report.to_json())
    result.manifest.write(out / MANIFEST_FILE)
    _write_jsonl(out / TRACES_FILE, (o.trace for o in result.outcomes))
    _write_jsonl(out / OUTPUTS_FILE, ({'id': o.question_id, 'output': o.output, 'error': o.error}
                                     for o in result.outcomes))
    logger.info(f'Wrote run artifacts to {out}')


def _checksum_of(path: str, fallback_text: Callable[[], str]) -> str:
    return get_file_sha256(path) if path else checksum_text(fallback_text())


def run_experiment(config: ExperimentConfig, kg: Optional[Kg] = None,
                   questions: Optional[Sequence[Question]] = None,
                   generator: Optional[Generator] = None,
                   manifest: Optional[AblationManifest] = None,
                   baseline: Optional[EvalReport] = None,
                   planner=None, scorer=None, embedder=None) -> RunResult:
    """Full pipeline for one setting. kg, questions, generator and manifest default to what config names."""
    _stage('config', config.validate)
    if kg is None:
        kg = _stage('load_kg', load_kg, config.kg_path)
    if questions is None:
        questions = _stage('load_questions', load_questions, config.questions_path)
    if not questions:
        raise StageError('load_questions', InputError('no questions to evaluate'))

    if manifest is None and config.manifest_path:
        manifest = _stage('load_manifest', AblationManifest.read, config.manifest_path)
        logger.info(f'Replaying manifest {config.manifest_path}')
    if manifest is None:
        manifest = _stage('ablate', build_manifest, config, kg, questions)
    _stage('ablate', _check_manifest, config, manifest, kg)
    shared_view = _stage('apply_manifest', apply_manifest, kg, manifest)
    view_checksum = checksum_ids(shared_view.surviving_ids())
    logger.info(f'Setting {config.setting}: {len(shared_view)} of {len(kg)} triples survive')

    if generator is None:
        generator = _stage('generator', make_generator, config, questions)
    retrieve = _stage('retriever', make_retriever, config, generator, planner, scorer, embedder)

    def evaluate(question: Question) -> QuestionOutcome:
        view = question_view(kg, manifest, question.id, shared_view)
        return evaluate_question(question, view, retrieve, generator, config)

    outcomes = evaluate_all(questions, evaluate, config.workers)
    accuracy, hits = _stage('aggregate', aggregate, [o.score for o in outcomes])

    report = EvalReport(
        setting=config.setting,
        accuracy=accuracy,
        hits=hits,
        per_question=[{
            'id': o.question_id,
            'accuracy': o.score.accuracy_contribution,
            'hit': o.score.hit,
            'matched': list(o.score.matched_answers),
            'error': o.error,
        } for o in outcomes],
        generator=getattr(generator, 'name', type(generator).__name__),
        num_questions=len(outcomes),
        config=config.report_config(),
        provenance={
            'kg_sha256': _checksum_of(config.kg_path, lambda: dump_kg(kg)),
            'questions_sha256': _checksum_of(
                config.questions_path,
                lambda: ''.join(json.dumps(q.to_record(), ensure_ascii=False) + '\n' for q in questions)),
            'manifest_sha256': manifest.checksum(),
            'view_sha256': view_checksum,
            'removed_triples': len(manifest.removed),
        },
    )
    if baseline is None and config.baseline_report:
        baseline = _stage('baseline', EvalReport.read, config.baseline_report)
    if baseline is not None:
        report.with_baseline(baseline)
    failed = sum(1 for o in outcomes if o.error)
    logger.info(f'Setting {config.setting}: Accuracy {accuracy:.2f}, Hits {hits:.2f}'
                 f' ({len(outcomes)} questions, {failed} generation failures)')

    result = RunResult(report, manifest, outcomes, view_checksum)
    if config.output_dir:
        _stage('write_artifacts', write_artifacts, result, config.output_dir)
    return result


def run_sweep(config: ExperimentConfig, seeds: Sequence[int], **kwargs) -> tuple[list[RunResult], SweepSummary]:
    """One run per seed, each in its own seed-<n> directory; summary is mean and sample stddev."""
    if not seeds:
        raise ConfigError('a sweep needs at least one seed')
    results = []
    for seed in seeds:
        output_dir = os.path.join(config.output_dir, f'seed-{seed}') if config.output_dir else ''
        results.append(run_experiment(replace(config, seed=seed, output_dir=output_dir), **kwargs))
    summary = summarize([r.report for r in results], seeds)
    logger.info(f'Sweep {summary.setting} over {len(seeds)} seeds: Accuracy {summary.accuracy_mean:.2f}'
                 f' ± {summary.accuracy_std:.2f}, Hits {summary.hits_mean:.2f} ± {summary.hits_std:.2f}')
    return results, summary


def retrieve_one(config: ExperimentConfig, question_id: str, kg: Optional[Kg] = None,
                 questions: Optional[Sequence[Question]] = None) -> dict:
    """Debug one question: the retrieval trace and the prompt it would produce."""
    config.validate()
    kg = kg if kg is not None else load_kg(config.kg_path)
    questions = questions if questions is not None else load_questions(config.questions_path)
    question = questions_by_id(questions).get(question_id)
    if question is None:
        raise ConfigError(f'no question with id {question_id!r}')
    manifest = AblationManifest.read(config.manifest_path) if config.manifest_path \
        else build_manifest(config, kg, questions)
    view = question_view(kg, manifest, question.id, apply_manifest(kg, manifest))
    generator = make_generator(config, questions)
    retrieval = make_retriever(config, generator)(view, question)
    request = build_prompt(question, retrieval, config.answer_system_prompt)
    return {**retrieval.to_trace(kg), 'evidence': retrieval.evidence_text, 'prompt': request.user_text}


def evaluate_outputs(outputs: dict, questions: Sequence[Question], setting: str = 'evaluated',
                     exact_label_only: bool = False) -> EvalReport:
    """Score externally produced answers; a question without an output counts as a non-match."""
    known = {q.id for q in questions}
    foreign = sorted(set(outputs) - known)
    if foreign:
        raise ConsistencyError(f'outputs for unknown questions: {", ".join(foreign[:10])}')
    scores = [score_question(outputs.get(q.id, ''), q.answers, use_aliases=not exact_label_only) for q in questions]
    accuracy, hits = aggregate(scores)
    return EvalReport(
        setting=setting,
        accuracy=accuracy,
        hits=hits,
        per_question=[{'id': q.id, 'accuracy': s.accuracy_contribution, 'hit': s.hit,
                       'matched': list(s.matched_answers), 'error': None} for q, s in zip(questions, scores)],
        num_questions=len(questions),
    )


def read_outputs(path) -> dict:
    outputs = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                outputs[str(record['id'])] = str(record.get('output') or '')
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise InputError(f'malformed output record: {e}', line_number, str(path))
    return outputs


def emit_report(runs: Sequence[EvalReport], baseline_name: str) -> tuple[str, str]:
    """Markdown table and JSON of Accuracy/Hits with relative drops against the named baseline."""
    baseline = next((r for r in runs if r.setting == baseline_name), None)
    if baseline is None:
        raise ConfigError(f'baseline {baseline_name!r} is not among the runs')
    lines = ['| Setting | Accuracy | Hits |', '|---|---|---|']
    rows = []
    for run in runs:
        if run is baseline:
            drop_acc = drop_hits = None
            cells = (format_cell(run.accuracy, baseline=True), format_cell(run.hits, baseline=True))
        else:
            drop_acc = relative_drop(baseline.accuracy, run.accuracy)
            drop_hits = relative_drop(baseline.hits, run.hits)
            cells = (format_cell(run.accuracy, drop_acc), format_cell(run.hits, drop_hits))
        lines.append(f'| {run.setting} | {cells[0]} | {cells[1]} |')
        rows.append({
            'setting': run.setting,
            'accuracy': run.accuracy,
            'hits': run.hits,
            'rel_drop_accuracy': drop_acc,
            'rel_drop_hits': drop_hits,
        })
    markdown = '\n'.join(lines) + '\n'
    data = json.dumps({'baseline': baseline_name, 'rows': rows}, indent=2, ensure_ascii=False) + '\n'
    return markdown, data
