"""Answer generation boundary: prompt building, a deterministic mock oracle, and an HTTP chat-completion client."""

import json
import logging
import os
import re
import threading
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Protocol, Sequence

import requests
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from cache_db import load_entry, open_db, write_entry
from config import (
    answer_system_prompt, llm_api_key_env, llm_backoff_base, llm_backoff_max, llm_base_url_env,
    llm_max_in_flight, llm_max_retries, llm_max_tokens, llm_model_env, llm_requests_per_minute,
    llm_timeout,
)
from exceptions import ConfigError, ProtocolError, TransportError
from utils import checksum_json

if TYPE_CHECKING:
    from qa_datasets import Question
    from retrievers import RetrievalResult

logger = logging.getLogger(__name__)

NO_EVIDENCE = 'No evidence.'
UNKNOWN = 'unknown'
QUESTION_PREFIX = 'Question: '

_EVIDENCE_LINE = re.compile(r'^(?P<head>.+?) --(?P<relation>.+?)--> (?P<tail>.+)$')


@dataclass(frozen=True)
class GenRequest:
    system_text: str
    user_text: str
    max_tokens: int = llm_max_tokens
    temperature: float = 0.0
    question_id: Optional[str] = None

    def checksum(self, model: str = '') -> str:
        return checksum_json({
            'model': model,
            'system': self.system_text,
            'user': self.user_text,
            'max_tokens': self.max_tokens,
            'temperature': self.temperature,
        })


@dataclass(frozen=True)
class GenResponse:
    output_text: str
    token_usage: dict = field(default_factory=dict)
    latency_ms: float = 0.0


class Generator(Protocol):
    name: str

    def generate(self, request: GenRequest) -> GenResponse:
        ...


def build_prompt(question: 'Question', retrieval: Optional['RetrievalResult'] = None,
                 system_text: str = answer_system_prompt, max_tokens: int = llm_max_tokens) -> GenRequest:
    evidence = retrieval.evidence_text if retrieval is not None else ''
    if not evidence.strip():
        evidence = NO_EVIDENCE
    user_text = f'{evidence}\n\n{QUESTION_PREFIX}{question.text}'
    return GenRequest(system_text, user_text, max_tokens=max_tokens, temperature=0.0, question_id=question.id)


def evidence_entities(user_text: str) -> set[str]:
    """Entity labels named by the evidence lines of a prompt built with build_prompt."""
    labels = set()
    for line in user_text.splitlines():
        if line.startswith(QUESTION_PREFIX):
            break
        m = _EVIDENCE_LINE.match(line.strip())
        if m:
            labels.add(m.group('head'))
            labels.add(m.group('tail'))
    return labels


def _validate(request: GenRequest):
    if not request.system_text.strip() or not request.user_text.strip():
        raise ConfigError('generation request texts must be non-empty')


class MockOracleGenerator:
    """Answers with every gold answer label that appears as an entity in the evidence, else 'unknown'.

    Needs the gold answers, so it only belongs in synthetic and test runs.
    """

    name = 'mock-oracle'

    def __init__(self, questions: Sequence['Question']):
        self._answers = {q.id: q.answers for q in questions}

    def generate(self, request: GenRequest) -> GenResponse:
        _validate(request)
        answers = self._answers.get(request.question_id)
        if answers is None:
            raise ConfigError(f'mock oracle has no gold answers for question {request.question_id!r}')
        present = evidence_entities(request.user_text)
        found = []
        for answer in answers:
            for form in answer.surface_forms():
                if form in present:
                    found.append(form)
                    break
        output = ', '.join(found) if found else UNKNOWN
        usage = {'prompt_tokens': len(request.user_text.split()), 'completion_tokens': len(output.split())}
        return GenResponse(output, usage, 0.0)


class TokenBucket:
    """Requests-per-minute budget shared by all threads; a non-positive rate disables it."""

    def __init__(self, requests_per_minute: float, capacity: Optional[float] = None,
                 clock=time.monotonic, sleep=time.sleep):
        self.rate = requests_per_minute / 60.0
        self.capacity = capacity if capacity is not None else max(1.0, min(float(requests_per_minute), float(llm_max_in_flight)))
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._updated = clock()
        self._lock = threading.Lock()

    def acquire(self):
        if self.rate <= 0:
            return
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


class TranscriptLog:
    """JSON lines of request, response and timestamps for audit."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, request: GenRequest, response: Optional[GenResponse], started_at: str,
               finished_at: str, error: Optional[str] = None, cached: bool = False):
        record = {
            'request': asdict(request),
            'response': asdict(response) if response is not None else None,
            'error': error,
            'cached': cached,
            'started_at': started_at,
            'finished_at': finished_at,
        }
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            with open(self.path, 'a', encoding='utf-8') as f:
                f.write(line + '\n')


class _RetryableStatus(Exception):
    def __init__(self, status: Optional[int], detail: str = ''):
        self.status = status
        super().__init__(detail or f'HTTP {status}')


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _log_retry(retry_state):
    e = retry_state.outcome.exception()
    logger.warning(f'LLM request failed ({e}), attempt {retry_state.attempt_number}, backing off')


class HttpChatGenerator:
    """Chat-completion endpoint client: bearer token, retry with exponential backoff, RPM budget."""

    name = 'http'

    def __init__(self, base_url: str, model: str, api_key: str,
                 requests_per_minute: float = llm_requests_per_minute,
                 max_in_flight: int = llm_max_in_flight,
                 max_retries: int = llm_max_retries,
                 backoff_base: float = llm_backoff_base,
                 backoff_max: float = llm_backoff_max,
                 timeout: float = llm_timeout,
                 transcript: Optional[TranscriptLog] = None,
                 cache_label: Optional[str] = None,
                 offline: bool = False,
                 session: Optional[requests.Session] = None):
        if not base_url or not model:
            raise ConfigError('HTTP generator needs a base URL and a model name')
        self.url = base_url.rstrip('/') + '/chat/completions'
        self.model = model
        self.max_retries = max_retries
        self.timeout = timeout
        self.transcript = transcript
        self.offline = offline
        self._api_key = api_key
        self._session = session or requests.Session()
        self._bucket = TokenBucket(requests_per_minute)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._retrying = Retrying(
            stop=stop_after_attempt(max_retries + 1),
            wait=wait_exponential(multiplier=backoff_base, max=backoff_max),
            retry=retry_if_exception_type(_RetryableStatus),
            before_sleep=_log_retry,
            reraise=True,
        )
        self._cache = open_db(cache_label, model) if cache_label else None
        self._cache_lock = threading.Lock()
        if offline and self._cache is None:
            raise ConfigError('offline replay needs a response cache label')

    @classmethod
    def from_env(cls, **kwargs) -> 'HttpChatGenerator':
        base_url = os.environ.get(llm_base_url_env, '')
        model = os.environ.get(llm_model_env, '')
        api_key = os.environ.get(llm_api_key_env, '')
        if not base_url or not model:
            raise ConfigError(f'set {llm_base_url_env} and {llm_model_env} to use the HTTP generator')
        return cls(base_url, model, api_key, **kwargs)

    def _post(self, payload: dict) -> requests.Response:
        self._bucket.acquire()
        headers = {'Content-Type': 'application/json'}
        if self._api_key:
            headers['Authorization'] = f'Bearer {self._api_key}'
        try:
            response = self._session.post(self.url, json=payload, headers=headers, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as e:
            raise _RetryableStatus(None, str(e))
        status = response.status_code
        if status == 429 or status >= 500:
            raise _RetryableStatus(status)
        if status >= 400:
            raise TransportError(f'LLM endpoint rejected the request: {response.text[:200]}', status)
        return response

    @staticmethod
    def _parse(response: requests.Response) -> tuple[str, dict]:
        try:
            data = response.json()
        except ValueError:
            raise ProtocolError('LLM reply is not JSON', response.status_code)
        try:
            content = data['choices'][0]['message']['content']
        except (KeyError, IndexError, TypeError):
            raise ProtocolError('LLM reply lacks choices[0].message.content', response.status_code)
        if not isinstance(content, str):
            raise ProtocolError('LLM reply content is not text', response.status_code)
        usage = data.get('usage') or {}
        return content, usage if isinstance(usage, dict) else {}

    def _cached(self, key: str) -> Optional[dict]:
        if self._cache is None:
            return None
        with self._cache_lock:
            return load_entry(self._cache, key)

    def generate(self, request: GenRequest) -> GenResponse:
        _validate(request)
        key = request.checksum(self.model)
        started_at = _now()
        hit = self._cached(key)
        if hit is not None:
            response = GenResponse(hit['output'], hit['usage'], 0.0)
            if self.transcript:
                self.transcript.append(request, response, started_at, _now(), cached=True)
            return response
        if self.offline:
            raise TransportError(f'no cached response for request {key[:12]} in offline replay')

        payload = {
            'model': self.model,
            'messages': [
                {'role': 'system', 'content': request.system_text},
                {'role': 'user', 'content': request.user_text},
            ],
            'max_tokens': request.max_tokens,
            'temperature': request.temperature,
        }
        begin = time.monotonic()
        try:
            with self._slots:
                try:
                    raw = self._retrying(self._post, payload)
                except _RetryableStatus as e:
                    raise TransportError(f'LLM request failed after {self.max_retries} retries: {e}', e.status)
            output, usage = self._parse(raw)
        except TransportError as e:
            if self.transcript:
                self.transcript.append(request, None, started_at, _now(), error=str(e))
            raise
        response = GenResponse(output, usage, round((time.monotonic() - begin) * 1000, 3))
        if self._cache is not None:
            with self._cache_lock:
                write_entry(self._cache, key, output, usage)
        if self.transcript:
            self.transcript.append(request, response, started_at, _now())
        return response

    def close(self):
        self._session.close()
        if self._cache is not None:
            self._cache.close()
