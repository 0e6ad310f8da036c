"""Run manifests: provenance records tying outputs to their inputs.

Every output file is named ``<command>-<confighash>.<ext>`` and carries a
header reference to the manifest written next to it.  Reruns with equal
inputs produce bit-identical data files (the manifest itself records wall
time and is excluded from that guarantee).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

from . import __version__
from .params import PhysicalParams, serialize_config


def config_hash(p: PhysicalParams, command: str, options: dict) -> str:
    """Deterministic 12-hex digest of the resolved run inputs."""
    blob = serialize_config(p) + command + json.dumps(options, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class RunManifest:
    command: str
    confighash: str
    seed: int | None
    options: dict
    outputs: list = field(default_factory=list)
    version: str = __version__
    wall_time_s: float = 0.0
    _t0: float = field(default_factory=time.monotonic, repr=False)

    def add(self, path) -> str:
        self.outputs.append(str(path))
        return str(path)

    def write(self, directory) -> str:
        self.wall_time_s = time.monotonic() - self._t0
        path = f"{directory}/{self.command}-{self.confighash}.manifest.json"
        payload = {
            "command": self.command,
            "confighash": self.confighash,
            "seed": self.seed,
            "options": self.options,
            "outputs": self.outputs,
            "version": self.version,
            "wall_time_s": round(self.wall_time_s, 3),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path
