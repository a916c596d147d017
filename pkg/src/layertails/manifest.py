"""Run manifests: a JSON record of a command's resolved parameters and
the SHA-256 digests of every file it wrote. A manifest is self-contained
(the network description is embedded, not referenced), so `rerun` can
reproduce the outputs without the original config file and verify them
byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    command: str
    params: dict
    seed: int
    files: dict
    duration_s: float
    created: str = ""

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(**payload)


def build_manifest(command: str, params: dict, seed: int, file_paths: dict,
                   duration_s: float) -> RunManifest:
    """file_paths maps emitted file names to their on-disk paths."""
    files = {name: sha256_file(path) for name, path in sorted(file_paths.items())}
    return RunManifest(command=command, params=params, seed=int(seed),
                       files=files, duration_s=float(duration_s),
                       created=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
