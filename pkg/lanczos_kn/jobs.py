"""Run manifest tracking the progress of a CLI study."""

import json
import logging
import os
import threading
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional

logger = logging.getLogger('kn.jobs')

RUN_FILE = "run.json"


class RunStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETE = "complete"
    ERROR = "error"


class RunManager:
    """
    Keeps the state of one study and persists it to <output_dir>/run.json
    after every change, so an interrupted run shows how far it got.
    """

    def __init__(self, output_dir: str, command: str, seed: int, record_timing: bool = False):
        self._path = os.path.join(output_dir, RUN_FILE)
        self._lock = threading.Lock()
        self._record_timing = record_timing
        self._run: Dict[str, Any] = {
            "command": command,
            "seed": seed,
            "status": RunStatus.PENDING.value,
            "checkpoints": [],
            "warnings": [],
            "outputs": [],
            "error": None,
        }
        self._touch("created_at")
        self._save()

    def _touch(self, key: str = "updated_at"):
        if self._record_timing:
            self._run[key] = datetime.now(timezone.utc).isoformat()

    def _save(self):
        """Save the manifest to disk."""
        try:
            os.makedirs(os.path.dirname(self._path) or ".", exist_ok=True)
            with open(self._path, 'w', encoding='utf-8') as f:
                json.dump(self._run, f, indent=2, sort_keys=True)
                f.write('\n')
        except OSError as e:
            logger.error(f"✗ failed to save run manifest: {type(e).__name__}: {e}")

    def update_status(self, status: RunStatus, error: Optional[str] = None):
        """Update run status and error text."""
        with self._lock:
            self._run["status"] = status.value
            if error is not None:
                self._run["error"] = error
            self._touch()
            self._save()

    def checkpoint_done(self, m: int):
        with self._lock:
            self._run["checkpoints"].append(m)
            self._touch()
            self._save()

    def add_warning(self, message: str):
        logger.warning(f"→ {message}")
        with self._lock:
            self._run["warnings"].append(message)
            self._save()

    def add_output(self, path: str):
        with self._lock:
            self._run["outputs"].append(os.path.basename(path))
            self._save()

    @property
    def status(self) -> RunStatus:
        return RunStatus(self._run["status"])

    @property
    def warnings(self) -> List[str]:
        return list(self._run["warnings"])
