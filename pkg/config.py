import logging
import os

logging_level = logging.INFO

# Per-question worker pool
max_workers = 4

# LLM gateway
llm_base_url_env = 'KGAB_LLM_BASE_URL'
llm_model_env = 'KGAB_LLM_MODEL'
llm_api_key_env = 'KGAB_LLM_API_KEY'
llm_max_in_flight = 4
llm_requests_per_minute = 60
llm_max_retries = 5
llm_backoff_base = 1.0
llm_backoff_max = 30.0
llm_timeout = 60
llm_max_tokens = 256
llm_cache_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), '.kgab')

# Path search
default_max_hops = 4
enumerate_max_hops = 6

# PCST
pcst_exact_max_nodes = 20
pcst_auto_exact_nodes = 12

# Metrics
answer_scan_tokens = 512

# Prompt templates, overridable per experiment
answer_system_prompt = (
    'Answer the question using only the evidence provided. '
    'Reply with the answer entities only, separated by commas.'
)
planner_prompt = (
    'Question: {question}\n'
    'Topic entities: {topics}\n'
    'Known relations: {relations}\n'
    'List up to {k} relation paths that lead from the topic entities to the answer, '
    'one per line, as a JSON list of relation names.'
)
scorer_prompt = (
    'Question: {question}\n'
    'Candidate evidence: {candidate}\n'
    'Rate from 0 to 1 how useful the candidate is for answering the question. '
    'Reply with the number only.'
)
