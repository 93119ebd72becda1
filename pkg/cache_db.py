import json
import os
import sqlite3

from config import llm_cache_dir

DB_DIR = llm_cache_dir


def open_db(label, model):
    db_path = os.path.join(DB_DIR, label)
    os.makedirs(db_path, exist_ok=True)
    safe_model = model.replace('/', '_').replace(':', '_')
    conn = sqlite3.connect(os.path.join(db_path, f'{safe_model}.db'), check_same_thread=False)
    conn.execute("PRAGMA journal_mode=WAL")
    conn.execute("PRAGMA synchronous=NORMAL")
    conn.execute("""
        CREATE TABLE IF NOT EXISTS responses (
            request_key TEXT PRIMARY KEY,
            output      TEXT NOT NULL,
            usage       TEXT NOT NULL
        )
    """)
    return conn


def load_entry(conn, request_key):
    row = conn.execute(
        "SELECT output, usage FROM responses WHERE request_key = ?", (request_key,)
    ).fetchone()
    if row is None:
        return None
    return {'output': row[0], 'usage': json.loads(row[1])}


def write_entry(conn, request_key, output, usage):
    conn.execute(
        "INSERT OR REPLACE INTO responses (request_key, output, usage) VALUES (?, ?, ?)",
        (request_key, output, json.dumps(usage, sort_keys=True))
    )
    conn.commit()
