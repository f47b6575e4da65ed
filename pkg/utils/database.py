"""
Database Handler for EdgeForge
Persistent metrics log: runs, per-epoch metrics and OES sample summaries
"""

import sqlite3
import json
import os
from datetime import datetime

from utils.config import Config
from utils.errors import DatabaseError


class RunDatabase:
    """SQLite metrics log for training runs"""

    def __init__(self, db_path=None):
        self.db_path = db_path or Config.DATABASE_PATH
        self._ensure_database_exists()
        self._initialize_tables()

    def _ensure_database_exists(self):
        """Ensure the data directory exists"""
        directory = os.path.dirname(self.db_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

    def _get_connection(self):
        """Get database connection"""
        try:
            return sqlite3.connect(self.db_path)
        except sqlite3.Error as e:
            raise DatabaseError(f"cannot open {self.db_path}: {e}") from e

    def _initialize_tables(self):
        """Initialize database tables"""
        conn = self._get_connection()
        cursor = conn.cursor()

        # Runs table
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                run_id INTEGER PRIMARY KEY AUTOINCREMENT,
                variant TEXT,
                seed INTEGER,
                config TEXT,
                started_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                ended_at TIMESTAMP,
                status TEXT DEFAULT 'running',
                result TEXT
            )
        ''')

        # Per-epoch metrics
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS epochs (
                run_id INTEGER,
                epoch INTEGER,
                train_loss REAL,
                test_loss REAL,
                edges_used INTEGER,
                seconds REAL,
                PRIMARY KEY (run_id, epoch),
                FOREIGN KEY (run_id) REFERENCES runs(run_id)
            )
        ''')

        # OES sample summaries
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS oes_samples (
                run_id INTEGER,
                epoch INTEGER,
                threshold REAL,
                eligible INTEGER,
                dropped INTEGER,
                retained INTEGER,
                nominal_retained INTEGER,
                PRIMARY KEY (run_id, epoch),
                FOREIGN KEY (run_id) REFERENCES runs(run_id)
            )
        ''')

        conn.commit()
        conn.close()

    # ==================== RUNS ====================

    def start_run(self, variant, seed, config):
        """Register a run and return its id"""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute('''
            INSERT INTO runs (variant, seed, config, started_at)
            VALUES (?, ?, ?, ?)
        ''', (variant, seed, json.dumps(config, sort_keys=True), datetime.now().isoformat()))

        run_id = cursor.lastrowid
        conn.commit()
        conn.close()
        return run_id

    def end_run(self, run_id, result, status='finished'):
        """Mark a run finished and store its result summary"""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute('''
            UPDATE runs SET ended_at = ?, status = ?, result = ? WHERE run_id = ?
        ''', (datetime.now().isoformat(), status, json.dumps(result, sort_keys=True), run_id))

        conn.commit()
        conn.close()

    def get_run(self, run_id):
        """Get one run as a dict, or None"""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute('''
            SELECT run_id, variant, seed, config, status, result FROM runs WHERE run_id = ?
        ''', (run_id,))

        row = cursor.fetchone()
        conn.close()

        if not row:
            return None
        return {
            'run_id': row[0],
            'variant': row[1],
            'seed': row[2],
            'config': json.loads(row[3]) if row[3] else {},
            'status': row[4],
            'result': json.loads(row[5]) if row[5] else None
        }

    def list_runs(self, variant=None):
        """List runs, optionally filtered by variant"""
        conn = self._get_connection()
        cursor = conn.cursor()

        if variant:
            cursor.execute('''
                SELECT run_id, variant, seed, status FROM runs WHERE variant = ? ORDER BY run_id
            ''', (variant,))
        else:
            cursor.execute('SELECT run_id, variant, seed, status FROM runs ORDER BY run_id')

        rows = cursor.fetchall()
        conn.close()

        return [{'run_id': r[0], 'variant': r[1], 'seed': r[2], 'status': r[3]} for r in rows]

    # ==================== EPOCHS ====================

    def log_epoch(self, run_id, epoch, train_loss, test_loss, edges_used, seconds):
        """Append one epoch's metrics"""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute('''
            INSERT OR REPLACE INTO epochs (run_id, epoch, train_loss, test_loss, edges_used, seconds)
            VALUES (?, ?, ?, ?, ?, ?)
        ''', (run_id, epoch, float(train_loss), float(test_loss), int(edges_used), float(seconds)))

        conn.commit()
        conn.close()

    def get_run_epochs(self, run_id):
        """Get a run's epoch rows in epoch order"""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute('''
            SELECT epoch, train_loss, test_loss, edges_used, seconds
            FROM epochs WHERE run_id = ? ORDER BY epoch
        ''', (run_id,))

        rows = cursor.fetchall()
        conn.close()

        return [
            {'epoch': r[0], 'train_loss': r[1], 'test_loss': r[2], 'edges_used': r[3], 'seconds': r[4]}
            for r in rows
        ]

    # ==================== OES SAMPLES ====================

    def log_oes_sample(self, run_id, summary):
        """Append an OES SampleOutcome summary"""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute('''
            INSERT OR REPLACE INTO oes_samples
                (run_id, epoch, threshold, eligible, dropped, retained, nominal_retained)
            VALUES (?, ?, ?, ?, ?, ?, ?)
        ''', (
            run_id,
            summary['epoch'],
            summary['threshold'],
            summary['eligible'],
            summary['dropped'],
            summary['retained'],
            summary['nominal_retained']
        ))

        conn.commit()
        conn.close()

    def get_oes_samples(self, run_id):
        """Get a run's OES summaries in epoch order"""
        conn = self._get_connection()
        cursor = conn.cursor()

        cursor.execute('''
            SELECT epoch, threshold, eligible, dropped, retained, nominal_retained
            FROM oes_samples WHERE run_id = ? ORDER BY epoch
        ''', (run_id,))

        rows = cursor.fetchall()
        conn.close()

        return [
            {
                'epoch': r[0],
                'threshold': r[1],
                'eligible': r[2],
                'dropped': r[3],
                'retained': r[4],
                'nominal_retained': r[5]
            }
            for r in rows
        ]
