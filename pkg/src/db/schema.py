"""
SQLite run ledger: one row per CLI command, plus the scalar metrics it produced.

The ledger is bookkeeping only; nothing reads it back into a computation.
"""

import logging
import os
import sqlite3
from typing import Dict, List, Optional

from config.settings import DB_PATH

logger = logging.getLogger(__name__)

RUN_STATUSES = ("running", "ok", "failed")


def get_connection(db_path: str = DB_PATH) -> sqlite3.Connection:
    """Get a connection to the SQLite database."""
    directory = os.path.dirname(db_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    conn = sqlite3.connect(db_path)
    conn.row_factory = sqlite3.Row
    return conn


def init_db(db_path: str = DB_PATH):
    """Initialize the database with required tables."""
    conn = get_connection(db_path)
    cursor = conn.cursor()

    # Runs table - one invocation of gen / train / infer / eval
    cursor.execute("""
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            command TEXT NOT NULL,
            config_hash TEXT NOT NULL,
            seed INTEGER,
            out_path TEXT,
            stages TEXT,
            status TEXT DEFAULT 'running',
            started_at DATETIME DEFAULT CURRENT_TIMESTAMP,
            ended_at DATETIME
        )
    """)

    # Metrics table - named scalars a run reported (final loss, mAP, NDS, ...)
    cursor.execute("""
        CREATE TABLE IF NOT EXISTS run_metrics (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            run_id INTEGER NOT NULL,
            name TEXT NOT NULL,
            value REAL,
            FOREIGN KEY (run_id) REFERENCES runs(id)
        )
    """)

    cursor.execute("""
        CREATE INDEX IF NOT EXISTS idx_runs_hash
        ON runs(config_hash)
    """)
    cursor.execute("""
        CREATE INDEX IF NOT EXISTS idx_metrics_run
        ON run_metrics(run_id)
    """)

    conn.commit()
    conn.close()
    logger.debug(f"Run ledger ready at {db_path}")


def start_run(command: str, config_hash: str, seed: int = None, out_path: str = None,
              stages: str = None, db_path: str = DB_PATH) -> int:
    """Record a starting run. Returns run ID."""
    conn = get_connection(db_path)
    cursor = conn.cursor()

    cursor.execute("""
        INSERT INTO runs (command, config_hash, seed, out_path, stages)
        VALUES (?, ?, ?, ?, ?)
    """, (command, config_hash, seed, out_path, stages))

    run_id = cursor.lastrowid
    conn.commit()
    conn.close()

    return run_id


def finish_run(run_id: int, status: str = "ok", db_path: str = DB_PATH) -> bool:
    """Mark a run as ended with its final status."""
    if status not in RUN_STATUSES:
        raise ValueError(f"unknown run status '{status}'")
    conn = get_connection(db_path)
    cursor = conn.cursor()

    cursor.execute("""
        UPDATE runs
        SET ended_at = CURRENT_TIMESTAMP, status = ?
        WHERE id = ?
    """, (status, run_id))

    success = cursor.rowcount > 0
    conn.commit()
    conn.close()
    return success


def log_metric(run_id: int, name: str, value: float, db_path: str = DB_PATH) -> int:
    """Attach a scalar to a run. Returns metric ID."""
    conn = get_connection(db_path)
    cursor = conn.cursor()

    cursor.execute("""
        INSERT INTO run_metrics (run_id, name, value)
        VALUES (?, ?, ?)
    """, (run_id, name, float(value)))

    metric_id = cursor.lastrowid
    conn.commit()
    conn.close()
    return metric_id


def get_runs(command: str = None, config_hash: str = None, limit: int = 50,
             db_path: str = DB_PATH) -> List[dict]:
    """Most recent runs first, optionally filtered by command or config hash."""
    conn = get_connection(db_path)
    cursor = conn.cursor()

    clauses, args = [], []
    if command:
        clauses.append("command = ?")
        args.append(command)
    if config_hash:
        clauses.append("config_hash = ?")
        args.append(config_hash)
    where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
    cursor.execute(f"""
        SELECT * FROM runs
        {where}
        ORDER BY id DESC
        LIMIT ?
    """, (*args, limit))

    rows = cursor.fetchall()
    conn.close()
    return [dict(row) for row in rows]


def get_run_metrics(run_id: int, db_path: str = DB_PATH) -> Dict[str, float]:
    """Metrics of a run by name; a repeated name keeps its latest value."""
    conn = get_connection(db_path)
    cursor = conn.cursor()

    cursor.execute("""
        SELECT name, value FROM run_metrics
        WHERE run_id = ?
        ORDER BY id
    """, (run_id,))

    rows = cursor.fetchall()
    conn.close()
    return {row['name']: row['value'] for row in rows}


def get_run(run_id: int, db_path: str = DB_PATH) -> Optional[dict]:
    """Get a run by its ID."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    cursor.execute("SELECT * FROM runs WHERE id = ?", (run_id,))
    row = cursor.fetchone()
    conn.close()
    return dict(row) if row else None
