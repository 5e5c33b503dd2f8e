"""Run manifests and the sqlite run registry."""

import json
import logging
import sqlite3
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

from pydantic import BaseModel, Field

from src import __version__
from src.raster_io import file_checksum

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
SCENE_MANIFEST_NAME = "scene.json"


class RunManifest(BaseModel):
    """Everything needed to replay one command."""

    command: str
    parameters: dict = {}
    inputs: dict[str, str] = {}  # path -> sha256
    outputs: dict[str, str] = {}  # path -> sha256
    version: str = __version__
    started_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    duration_seconds: float = 0.0

    def add_input(self, path: str | Path):
        self.inputs[str(path)] = file_checksum(path)

    def add_output(self, path: str | Path):
        self.outputs[str(path)] = file_checksum(path)

    def finish(self, started: float):
        """Record the wall-clock duration since a ``time.perf_counter()`` reading."""
        self.duration_seconds = round(time.perf_counter() - started, 6)

    def write(self, path: str | Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2) + "\n")
        log.debug(f"Wrote manifest {path}")


class RunRegistry:
    """Sqlite log of the manifests of past runs."""

    def __init__(self, db_path: str):
        self.db_path = db_path
        if db_path != ":memory:":
            Path(db_path).parent.mkdir(parents=True, exist_ok=True)
            self._conn = None
        else:
            self._conn = sqlite3.connect(db_path)
            self._conn.row_factory = sqlite3.Row
        self.init_database()

    def _get_connection(self):
        if self._conn:
            return self._conn
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    @contextmanager
    def _transaction(self):
        """Commit on success; file connections are closed afterwards."""
        conn = self._get_connection()
        try:
            with conn:
                yield conn
        finally:
            if conn is not self._conn:
                conn.close()

    def init_database(self):
        """Initialize the database schema."""
        with self._transaction() as conn:
            conn.execute(
                """
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    command TEXT NOT NULL,
                    started_at TEXT NOT NULL,
                    duration_seconds REAL,
                    version TEXT,
                    manifest TEXT NOT NULL
                )
                """
            )
            conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_command ON runs (command)")

    def record(self, manifest: RunManifest) -> int:
        """Store a manifest and return its run id."""
        with self._transaction() as conn:
            cursor = conn.execute(
                """
                INSERT INTO runs (command, started_at, duration_seconds, version, manifest)
                VALUES (?, ?, ?, ?, ?)
                """,
                (
                    manifest.command,
                    manifest.started_at,
                    manifest.duration_seconds,
                    manifest.version,
                    manifest.model_dump_json(),
                ),
            )
            return cursor.lastrowid

    def list_runs(self, command: str | None = None, limit: int = 20) -> list[dict]:
        """Most recent runs first, optionally filtered by command."""
        query = "SELECT id, command, started_at, duration_seconds, version, manifest FROM runs"
        params: tuple = ()
        if command:
            query += " WHERE command = ?"
            params = (command,)
        query += " ORDER BY id DESC LIMIT ?"
        with self._transaction() as conn:
            rows = conn.execute(query, params + (limit,)).fetchall()
        return [
            {
                "id": row["id"],
                "command": row["command"],
                "started_at": row["started_at"],
                "duration_seconds": row["duration_seconds"],
                "version": row["version"],
                "outputs": sorted(json.loads(row["manifest"]).get("outputs", {})),
            }
            for row in rows
        ]

    def get_stats(self) -> dict:
        with self._transaction() as conn:
            rows = conn.execute("SELECT command, COUNT(*) FROM runs GROUP BY command").fetchall()
        return {row[0]: row[1] for row in rows}
