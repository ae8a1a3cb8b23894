"""Per-run log sessions shared by the CLI process and its pool workers.

Every ``qpd`` invocation opens one session directory under
``$QPDSYNTH_HOME/logs``. The main process writes ``main.log`` and each pool
worker writes ``worker_<n>.log``, so solver traces from parallel grid points,
restarts and sampling batches never interleave.
"""

import logging
import os
import shutil
import uuid
from dataclasses import dataclass
from datetime import datetime
from logging.handlers import RotatingFileHandler
from multiprocessing import current_process
from pathlib import Path
from typing import Optional, Set

SESSION_PREFIX = "qpd_session_"
LOGGER_PREFIX = "qpdsynth"
DEFAULT_MAX_SESSIONS = 5
LOG_FORMAT = "%(asctime)s - %(processName)s - %(name)s - %(levelname)s - %(message)s"


def get_app_directory() -> Path:
    """Root directory for qpdsynth state; ``QPDSYNTH_HOME`` overrides ``~/.qpdsynth``."""
    override = os.environ.get("QPDSYNTH_HOME")
    return Path(override) if override else Path.home() / ".qpdsynth"


def _env_level() -> int:
    name = os.environ.get("QPDSYNTH_LOG_LEVEL", "DEBUG").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.DEBUG


def _max_sessions() -> int:
    try:
        return max(1, int(os.environ.get("QPDSYNTH_MAX_SESSIONS", DEFAULT_MAX_SESSIONS)))
    except ValueError:
        return DEFAULT_MAX_SESSIONS


@dataclass(frozen=True)
class LogSession:
    session_id: str
    logs_root: Path

    @classmethod
    def create(cls, logs_root: Path) -> "LogSession":
        stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        return cls(f"{SESSION_PREFIX}{stamp}_{uuid.uuid4().hex[:8]}", logs_root)

    @property
    def directory(self) -> Path:
        path = self.logs_root / self.session_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    def file_for(self, process_name: str) -> Path:
        if process_name == "MainProcess":
            return self.directory / "main.log"
        # Pool workers are named "ForkPoolWorker-3" / "SpawnPoolWorker-3"
        worker = process_name.rsplit("-", 1)[-1] if "-" in process_name else "0"
        return self.directory / f"worker_{worker}.log"


def prune_sessions(logs_root: Path, keep: int) -> None:
    """Delete the oldest session directories so that at most ``keep - 1`` remain."""
    try:
        sessions = sorted(
            (d for d in logs_root.iterdir() if d.is_dir() and d.name.startswith(SESSION_PREFIX)),
            key=lambda d: d.stat().st_ctime,
        )
    except OSError as e:
        logging.error(f"Could not list log sessions in {logs_root}: {e}")
        return
    for stale in sessions[: max(0, len(sessions) - keep + 1)]:
        try:
            shutil.rmtree(stale)
        except OSError as e:
            logging.error(f"Error deleting old session {stale}: {e}")


_SESSION: Optional[LogSession] = None
_NOTICES: Set[str] = set()


def init_session(session_id: Optional[str] = None) -> str:
    """Open (or join, when ``session_id`` is given) the log session of this run."""
    global _SESSION
    logs_root = get_app_directory() / "logs"
    if session_id is not None:
        if _SESSION is None or _SESSION.session_id != session_id:
            _SESSION = LogSession(session_id, logs_root)
    elif _SESSION is None:
        if logs_root.exists():
            prune_sessions(logs_root, _max_sessions())
        _SESSION = LogSession.create(logs_root)
    return _SESSION.session_id


def current_session() -> LogSession:
    init_session()
    assert _SESSION is not None
    return _SESSION


def get_log_directory() -> Path:
    return current_session().directory


def _file_logger(name: str, path: Path) -> logging.Logger:
    logger = logging.getLogger(name)
    logger.setLevel(_env_level())
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
        handler.close()
    try:
        handler = RotatingFileHandler(str(path), maxBytes=10 * 1024 * 1024, backupCount=5, encoding="utf-8", delay=True)
    except OSError as e:
        print(f"Error creating file handler: {e}")
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
        logger.addHandler(handler)
    logger.propagate = False
    return logger


def init_worker_logging(session_id: Optional[str] = None) -> None:
    """Pool initializer: join the parent's session and open this worker's log file."""
    init_session(session_id)
    name = current_process().name
    _file_logger(f"{LOGGER_PREFIX}.{name}", current_session().file_for(name)).debug(
        f"Worker {name} joined {current_session().session_id}"
    )


def get_process_logger() -> logging.Logger:
    """Logger writing to this process's file in the current session."""
    name = current_process().name
    logger_name = f"{LOGGER_PREFIX}.{name}"
    logger = logging.getLogger(logger_name)
    path = current_session().file_for(name)
    # rebuilt when the session changed since the handler was attached
    if not any(getattr(handler, "baseFilename", None) == str(path.absolute()) for handler in logger.handlers):
        logger = _file_logger(logger_name, path)
    return logger


def log_notice_once(key: str, message: str) -> None:
    """Log an INFO notice once per process (conventions, fallbacks, ignored options)."""
    if key not in _NOTICES:
        _NOTICES.add(key)
        get_process_logger().info(message)
