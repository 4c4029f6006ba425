"""Append-only run journal. Every CLI run is recorded as one JSON line."""

import hashlib
import logging
import os
from collections import deque
from datetime import datetime
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

logger = logging.getLogger(__name__)

# Default journal location
DEFAULT_LOG_PATH = Path.home() / ".ruin_pide" / "runs.jsonl"
LOG_PATH_ENV = "RUIN_PIDE_LOG_PATH"

RunStatus = Literal["ok", "fail", "error"]


class JournalEntry(BaseModel):
    """One recorded CLI run."""

    model_config = ConfigDict(frozen=True)

    ts: datetime = Field(default_factory=datetime.now)
    command: str
    status: RunStatus
    summary: str = ""
    config_digest: str | None = None
    seed: int | None = None
    error_msg: str | None = None

    @property
    def headline(self) -> str:
        """Summary line, falling back to the error for runs that did not complete."""
        return self.summary or self.error_msg or ""


def get_log_path() -> Path:
    """Get the journal path, respecting the RUIN_PIDE_LOG_PATH env var."""
    env_path = os.environ.get(LOG_PATH_ENV)
    if env_path:
        return Path(env_path)
    return DEFAULT_LOG_PATH


def config_digest(text: str) -> str:
    """Short SHA-256 digest of a config document."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def record_run(
    command: str,
    status: RunStatus,
    summary: str,
    config_digest: str | None = None,
    seed: int | None = None,
    error_msg: str | None = None,
    log_path: Path | None = None,
) -> JournalEntry:
    """
    Append a run entry to the journal.

    Args:
        command: CLI subcommand name
        status: "ok", "fail" (ran but a check failed) or "error" (did not run)
        summary: One-line result summary
        config_digest: Digest of the config file used, if any
        seed: Master seed, if any
        error_msg: Error message if status is "error"
        log_path: Optional custom journal path (for testing)

    Returns:
        The entry as written
    """
    path = log_path or get_log_path()
    entry = JournalEntry(
        command=command,
        status=status,
        summary=summary,
        config_digest=config_digest,
        seed=seed,
        error_msg=error_msg,
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(entry.model_dump_json(exclude_none=True) + "\n")
    return entry


def read_journal(
    log_path: Path | None = None,
    limit: int | None = None,
    command: str | None = None,
    status: RunStatus | None = None,
) -> list[JournalEntry]:
    """
    Read recorded runs, oldest first.

    Lines that do not parse (a run killed mid-write) are skipped with a warning.

    Args:
        log_path: Optional custom journal path
        limit: Keep only the most recent matching entries
        command: Only runs of this subcommand
        status: Only runs with this status

    Returns:
        Matching journal entries
    """
    path = log_path or get_log_path()
    if not path.exists():
        return []

    kept: deque[JournalEntry] = deque(maxlen=limit)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entry = JournalEntry.model_validate_json(line)
            except ValidationError:
                logger.warning("%s:%d: skipping unreadable journal line", path, lineno)
                continue
            if command is not None and entry.command != command:
                continue
            if status is not None and entry.status != status:
                continue
            kept.append(entry)
    return list(kept)
