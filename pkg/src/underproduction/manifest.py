"""Run manifests: what went into an output, hashed so outputs can point back at it."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    inputs: dict[str, str] = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    version: str = __version__
    input_hashes: dict[str, str] = field(default_factory=dict)

    def add_input(self, name: str, path) -> None:
        self.inputs[name] = str(path)
        self.input_hashes[name] = file_sha256(path)

    @property
    def hash(self) -> str:
        # timings vary run to run; leave them out so outputs stay deterministic
        payload = {"command": self.command, "settings": self.settings, "version": self.version,
                   "input_hashes": self.input_hashes}
        return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 4)

    def to_dict(self) -> dict:
        return {"manifest_hash": self.hash, "command": self.command, "version": self.version,
                "inputs": self.inputs, "input_hashes": self.input_hashes,
                "settings": self.settings, "timings": self.timings}

    def write(self, directory) -> Path:
        path = Path(directory) / f"manifest-{self.command}.json"
        path.write_text(json.dumps(self.to_dict(), indent=1, default=str))
        return path


def write_csv(path, header: list[str], rows, manifest_hash: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        if manifest_hash:
            f.write(f"# manifest: {manifest_hash}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def manifest_of(path) -> str | None:
    """The manifest hash recorded in an output file, if any."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text()).get("manifest")
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    return first.split(":", 1)[1].strip() if first.startswith("# manifest:") else None
