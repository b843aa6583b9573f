from __future__ import annotations

import json
import sqlite3
import threading
import time
from pathlib import Path
from typing import Any, Optional, Union

from app.db.models import Spectrum
from app.db.spectrum_io import read_spectrum, write_spectrum


class SpectrumStore:
    """Spectrum files on disk, indexed by an SQLite table next to them."""

    def __init__(self, root_dir: Union[str, Path]):
        self.root_dir = Path(root_dir)
        self.spectra_dir = self.root_dir / "spectra"
        self.spectra_dir.mkdir(parents=True, exist_ok=True)
        self.db_path = self.root_dir / "index.db"
        self._lock = threading.Lock()
        self._init_db()

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path, check_same_thread=False)
        conn.row_factory = sqlite3.Row
        return conn

    def _init_db(self) -> None:
        with self._connect() as conn:
            conn.executescript(
                """
                CREATE TABLE IF NOT EXISTS spectra (
                    cache_key TEXT PRIMARY KEY,
                    family_key TEXT NOT NULL,
                    shape TEXT NOT NULL,
                    bc TEXT NOT NULL,
                    lambda_max REAL NOT NULL,
                    source TEXT NOT NULL,
                    n_levels INTEGER NOT NULL,
                    path TEXT NOT NULL,
                    created_at INTEGER NOT NULL
                );

                CREATE INDEX IF NOT EXISTS spectra_family ON spectra(family_key, lambda_max);

                CREATE TABLE IF NOT EXISTS solver_windows (
                    family_key TEXT NOT NULL,
                    lambda_lo REAL NOT NULL,
                    lambda_hi REAL NOT NULL,
                    payload_json TEXT NOT NULL,
                    created_at INTEGER NOT NULL,
                    PRIMARY KEY(family_key, lambda_lo, lambda_hi)
                );
                """
            )
            conn.commit()

    def spectrum_path(self, cache_key: str) -> Path:
        return self.spectra_dir / f"{cache_key}.txt"

    def get_spectrum(self, cache_key: str) -> Optional[Spectrum]:
        with self._lock, self._connect() as conn:
            row = conn.execute(
                "SELECT path FROM spectra WHERE cache_key = ?", (cache_key,)
            ).fetchone()
        if not row or not Path(row["path"]).exists():
            return None
        return read_spectrum(row["path"])

    def find_covering(self, family_key: str, lambda_max: float) -> Optional[Spectrum]:
        """Smallest cached spectrum of the same family complete up to at least lambda_max."""
        with self._lock, self._connect() as conn:
            rows = conn.execute(
                """
                SELECT path FROM spectra
                WHERE family_key = ? AND lambda_max >= ?
                ORDER BY lambda_max ASC
                """,
                (family_key, lambda_max),
            ).fetchall()
        for row in rows:
            if Path(row["path"]).exists():
                return read_spectrum(row["path"])
        return None

    def put_spectrum(
        self, cache_key: str, family_key: str, shape: str, spectrum: Spectrum
    ) -> Path:
        path = write_spectrum(spectrum, self.spectrum_path(cache_key))
        now_ts = int(time.time())
        with self._lock, self._connect() as conn:
            conn.execute(
                """
                INSERT INTO spectra(
                    cache_key, family_key, shape, bc, lambda_max, source, n_levels, path,
                    created_at
                )
                VALUES(?, ?, ?, ?, ?, ?, ?, ?, ?)
                ON CONFLICT(cache_key) DO UPDATE SET
                    n_levels = excluded.n_levels,
                    path = excluded.path,
                    created_at = excluded.created_at
                """,
                (
                    cache_key,
                    family_key,
                    shape,
                    spectrum.bc.value,
                    spectrum.lambda_max,
                    spectrum.source.value,
                    spectrum.total,
                    str(path),
                    now_ts,
                ),
            )
            conn.commit()
        return path

    def list_spectra(self) -> list[dict[str, Any]]:
        with self._lock, self._connect() as conn:
            rows = conn.execute(
                """
                SELECT cache_key, shape, bc, lambda_max, source, n_levels, path, created_at
                FROM spectra ORDER BY created_at DESC, cache_key ASC
                """
            ).fetchall()
        return [
            {
                "cacheKey": row["cache_key"],
                "shape": row["shape"],
                "bc": row["bc"],
                "lambdaMax": float(row["lambda_max"]),
                "source": row["source"],
                "levels": int(row["n_levels"]),
                "path": row["path"],
                "createdAt": time.strftime(
                    "%Y-%m-%dT%H:%M:%SZ", time.gmtime(int(row["created_at"]))
                ),
            }
            for row in rows
        ]

    def get_window(
        self, family_key: str, lambda_lo: float, lambda_hi: float
    ) -> Optional[dict[str, Any]]:
        with self._lock, self._connect() as conn:
            row = conn.execute(
                """
                SELECT payload_json FROM solver_windows
                WHERE family_key = ? AND lambda_lo = ? AND lambda_hi = ?
                """,
                (family_key, lambda_lo, lambda_hi),
            ).fetchone()
        if not row:
            return None
        return json.loads(row["payload_json"])

    def put_window(
        self, family_key: str, lambda_lo: float, lambda_hi: float, payload: dict[str, Any]
    ) -> None:
        now_ts = int(time.time())
        with self._lock, self._connect() as conn:
            conn.execute(
                """
                INSERT INTO solver_windows(
                    family_key, lambda_lo, lambda_hi, payload_json, created_at
                )
                VALUES(?, ?, ?, ?, ?)
                ON CONFLICT(family_key, lambda_lo, lambda_hi) DO UPDATE SET
                    payload_json = excluded.payload_json,
                    created_at = excluded.created_at
                """,
                (family_key, lambda_lo, lambda_hi, json.dumps(payload), now_ts),
            )
            conn.commit()
