"""Run manifest written alongside every command's outputs."""

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from .core import RNG_ALGORITHM
from .errors import FileOperationError

MANIFEST_NAME = "manifest.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    seed: Optional[int]
    tool_version: str
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    artifacts: List[str] = field(default_factory=list)
    rng_algorithm: str = RNG_ALGORITHM

    def add(self, path: str) -> None:
        name = os.path.basename(path)
        if name not in self.artifacts:
            self.artifacts.append(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "rng_algorithm": self.rng_algorithm,
            "tool_version": self.tool_version,
            "started": self.started,
            "finished": self.finished,
            "artifacts": sorted(self.artifacts),
        }

    def write(self, out_dir: str) -> str:
        """Stamp the finish time and write ``manifest.json`` into ``out_dir``."""
        self.finished = _now()
        path = os.path.join(out_dir, MANIFEST_NAME)
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(self.to_dict(), f, indent=2, sort_keys=True)
                f.write("\n")
        except OSError as e:
            raise FileOperationError(f"Failed to write manifest: {e}", file=path)
        return path
