"""Domain data model and ingestion of bug event logs, install counts and NMU counts."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from types import MappingProxyType
from typing import IO, Iterable, Mapping

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0
MIN_DURATION_DAYS = 1e-3

EVENT_KINDS = ("opened", "severity", "closed", "forwarded", "merged", "reopened")
CLOSING_EVENTS = ("closed", "forwarded", "merged")


class InputError(ValueError):
    """Raised when an input file violates its format or a corpus invariant."""


class SeverityLevel(enum.IntEnum):
    MINOR = 1
    NORMAL = 2
    IMPORTANT = 3
    SERIOUS = 4
    GRAVE = 5
    CRITICAL = 6

    @property
    def release_critical(self) -> bool:
        return self >= SeverityLevel.SERIOUS

    @property
    def label(self) -> str:
        return self.name.lower()


WISHLIST = "wishlist"
_SEVERITY_ALIASES = {"not set": SeverityLevel.NORMAL, "fixed": SeverityLevel.NORMAL}


def parse_severity(raw: str) -> SeverityLevel | None:
    """Normalize a raw tracker severity label.

    Returns ``None`` for wishlist. Raises ``ValueError`` for unknown labels.
    """
    label = raw.strip().lower()
    if label == WISHLIST:
        return None
    if label in _SEVERITY_ALIASES:
        return _SEVERITY_ALIASES[label]
    try:
        return SeverityLevel[label.upper()]
    except KeyError:
        raise ValueError(f"unknown severity {raw!r}") from None


class Resolution(enum.Enum):
    CLOSED = "closed"
    FORWARDED = "forwarded"
    MERGED = "merged"
    OPEN = "open"


@dataclass(frozen=True)
class BugRecord:
    bug_id: int
    package_id: str
    opened_at: float
    resolved_at: float | None
    resolution: Resolution
    severity: SeverityLevel
    duration_days: float
    censored: bool

    def __post_init__(self):
        if self.censored != (self.resolution is Resolution.OPEN):
            raise InputError(f"bug {self.bug_id}: censored flag disagrees with resolution")
        if self.censored != (self.resolved_at is None):
            raise InputError(f"bug {self.bug_id}: censored bugs have no resolution time")
        if not self.duration_days > 0:
            raise InputError(f"bug {self.bug_id}: non-positive duration")

    @classmethod
    def resolved(cls, bug_id, package_id, opened_at, resolved_at, resolution, severity):
        if resolved_at < opened_at:
            raise InputError(f"bug {bug_id}: resolved before it was opened")
        duration = max((resolved_at - opened_at) / SECONDS_PER_DAY, MIN_DURATION_DAYS)
        return cls(bug_id, package_id, opened_at, resolved_at, resolution, severity, duration, False)

    @classmethod
    def open_at(cls, bug_id, package_id, opened_at, severity, snapshot_time):
        if opened_at > snapshot_time:
            raise InputError(f"bug {bug_id}: opened after the snapshot")
        duration = max((snapshot_time - opened_at) / SECONDS_PER_DAY, MIN_DURATION_DAYS)
        return cls(bug_id, package_id, opened_at, None, Resolution.OPEN, severity, duration, True)

    def to_dict(self) -> dict:
        return {
            "bug_id": self.bug_id,
            "package_id": self.package_id,
            "opened_at": self.opened_at,
            "resolved_at": self.resolved_at,
            "resolution": self.resolution.value,
            "severity": self.severity.label,
            "duration_days": self.duration_days,
            "censored": self.censored,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BugRecord":
        return cls(
            bug_id=int(d["bug_id"]),
            package_id=str(d["package_id"]),
            opened_at=float(d["opened_at"]),
            resolved_at=None if d["resolved_at"] is None else float(d["resolved_at"]),
            resolution=Resolution(d["resolution"]),
            severity=SeverityLevel[d["severity"].upper()],
            duration_days=float(d["duration_days"]),
            censored=bool(d["censored"]),
        )


@dataclass(frozen=True)
class PackageRecord:
    package_id: str
    installs: int = 0
    nmu_count: int = 0
    bug_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class Corpus:
    """Immutable analysis snapshot. Packages are kept sorted by ``package_id``."""

    snapshot_time: float
    packages: tuple[PackageRecord, ...]
    bugs: tuple[BugRecord, ...]
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [p.package_id for p in self.packages]
        if ids != sorted(ids):
            raise InputError("packages must be sorted by package_id")
        if len(set(ids)) != len(ids):
            raise InputError("duplicate package_id")
        bug_ids = [b.bug_id for b in self.bugs]
        if len(set(bug_ids)) != len(bug_ids):
            raise InputError("duplicate bug_id")
        index = {pid: i for i, pid in enumerate(ids)}
        members: dict[str, list[int]] = {pid: [] for pid in ids}
        for b in self.bugs:
            if b.package_id not in index:
                raise InputError(f"bug {b.bug_id} references unknown package {b.package_id!r}")
            members[b.package_id].append(b.bug_id)
        for p in self.packages:
            if sorted(p.bug_ids) != sorted(members[p.package_id]):
                raise InputError(f"package {p.package_id!r}: bug_ids do not match bugs")
        object.__setattr__(self, "_index", MappingProxyType(index))

    @property
    def package_ids(self) -> list[str]:
        return [p.package_id for p in self.packages]

    def package(self, package_id: str) -> PackageRecord:
        return self.packages[self._index[package_id]]

    def index_of(self, package_id: str) -> int:
        return self._index[package_id]

    def to_json(self) -> str:
        return json.dumps(
            {
                "snapshot_time": self.snapshot_time,
                "packages": [
                    {"package_id": p.package_id, "installs": p.installs,
                     "nmu_count": p.nmu_count, "bug_ids": list(p.bug_ids)}
                    for p in self.packages
                ],
                "bugs": [b.to_dict() for b in self.bugs],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "Corpus":
        d = json.loads(text)
        packages = tuple(
            PackageRecord(p["package_id"], int(p["installs"]), int(p["nmu_count"]), tuple(p["bug_ids"]))
            for p in d["packages"]
        )
        bugs = tuple(BugRecord.from_dict(b) for b in d["bugs"])
        return cls(float(d["snapshot_time"]), packages, bugs)


# ---------------------------------------------------------------------------
# Event log
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Event:
    bug: int
    ts: float
    event: str
    package: str | None = None
    severity: str | None = None


@dataclass
class EventSequence:
    events: list[Event]
    n_lines: int = 0
    rejects: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_parsed(self) -> int:
        return len(self.events)


def parse_timestamp(text: str) -> float:
    """ISO-8601 UTC (``Z`` suffix or explicit offset) to epoch seconds."""
    if not isinstance(text, str):
        raise ValueError("timestamp must be a string")
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(ts: float) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    if ts == int(ts):
        return dt.strftime("%Y-%m-%dT%H:%M:%SZ")
    return dt.isoformat(timespec="microseconds").replace("+00:00", "Z")


def _parse_line(line: str) -> Event:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    bug = obj.get("bug")
    if not isinstance(bug, int) or isinstance(bug, bool):
        raise ValueError("missing or non-integer 'bug'")
    kind = obj.get("event")
    if kind not in EVENT_KINDS:
        raise ValueError(f"unknown event {kind!r}")
    ts = parse_timestamp(obj.get("ts"))
    package = severity = None
    if kind == "opened":
        package = obj.get("package")
        if not isinstance(package, str) or not package:
            raise ValueError("'opened' event without package")
    if kind in ("opened", "severity"):
        severity = obj.get("severity")
        if not isinstance(severity, str):
            raise ValueError(f"'{kind}' event without severity")
        parse_severity(severity)
    return Event(bug, ts, kind, package, severity)


def parse_event_log(stream: Iterable[str]) -> EventSequence:
    """Parse a JSONL bug event log.

    Malformed lines are recorded in ``rejects`` as ``(line_number, reason)``
    and parsing continues. Events come back sorted by ``(bug, ts)``; equal
    timestamps keep their input order.
    """
    events = []
    rejects = []
    n = 0
    for n, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            events.append(_parse_line(line))
        except (ValueError, TypeError) as exc:
            rejects.append((n, str(exc)))
    events.sort(key=lambda e: (e.bug, e.ts))
    if rejects:
        log.warning("event log: %d lines rejected", len(rejects))
    return EventSequence(events, n, rejects)


def fold_events(events: EventSequence | Iterable[Event], snapshot_time: float) -> list[BugRecord]:
    """Fold a sorted event sequence into one ``BugRecord`` per opened bug.

    Resolution is the earliest closed/forwarded/merged event; later reopenings
    are ignored. Bugs whose effective severity is wishlist, or that were
    opened after the snapshot, are dropped.
    """
    if isinstance(events, EventSequence):
        events = events.events
    state: dict[int, dict] = {}
    order: list[int] = []
    n_rejected = 0
    for ev in events:
        if ev.event == "opened":
            if ev.bug in state:
                n_rejected += 1
                continue
            state[ev.bug] = {"opened": ev, "severity": ev.severity, "closing": None}
            order.append(ev.bug)
            continue
        st = state.get(ev.bug)
        if st is None:
            n_rejected += 1
            continue
        closing = st["closing"]
        if ev.ts > snapshot_time or (closing is not None and (ev.ts > closing.ts or ev.event != "severity")):
            continue
        if ev.event == "severity":
            st["severity"] = ev.severity
        elif ev.event in CLOSING_EVENTS:
            st["closing"] = ev
    if n_rejected:
        log.warning("fold: %d events rejected (unknown bug or duplicate open)", n_rejected)

    records = []
    for bug in order:
        st = state[bug]
        opened = st["opened"]
        if opened.ts > snapshot_time:
            continue
        severity = parse_severity(st["severity"])
        if severity is None:
            continue
        closing = st["closing"]
        if closing is None:
            records.append(BugRecord.open_at(bug, opened.package, opened.ts, severity, snapshot_time))
        else:
            records.append(BugRecord.resolved(
                bug, opened.package, opened.ts, closing.ts, Resolution(closing.event), severity))
    return records


def write_event_log(bugs: Iterable[BugRecord], stream: IO[str]) -> None:
    """Serialize bug records as the JSONL event format (fold-stable)."""
    for b in bugs:
        stream.write(json.dumps({"bug": b.bug_id, "ts": format_timestamp(b.opened_at), "event": "opened",
                                 "package": b.package_id, "severity": b.severity.label}) + "\n")
        if not b.censored:
            stream.write(json.dumps({"bug": b.bug_id, "ts": format_timestamp(b.resolved_at),
                                     "event": b.resolution.value}) + "\n")


# ---------------------------------------------------------------------------
# Installs and NMU tables
# ---------------------------------------------------------------------------


def _open_text(source) -> IO[str]:
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8")
    return source


def _read_rows(source, required: tuple[str, ...]) -> list[dict]:
    f = _open_text(source)
    try:
        reader = csv.DictReader(f)
        missing = set(required) - set(reader.fieldnames or ())
        if missing:
            raise InputError(f"missing columns: {sorted(missing)}")
        return list(reader)
    finally:
        if f is not source:
            f.close()


def _non_negative_int(value, what: str) -> int:
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise InputError(f"{what}: not an integer: {value!r}") from None
    if n < 0:
        raise InputError(f"{what}: negative value {n}")
    return n


def load_installs(source) -> dict[str, int]:
    """Aggregate binary install counts to source packages by taking the max.

    ``source`` is a path, a text stream with header
    ``binary_package,source_package,inst``, or an iterable of
    ``(binary, source, inst)`` tuples.
    """
    if isinstance(source, (str, Path, io.IOBase)):
        rows = [(r["binary_package"], r["source_package"], r["inst"])
                for r in _read_rows(source, ("binary_package", "source_package", "inst"))]
    else:
        rows = list(source)
    seen: dict[tuple[str, str], int] = {}
    for binary, src, inst in rows:
        n = _non_negative_int(inst, f"inst for {binary}/{src}")
        key = (binary, src)
        if key in seen:
            log.warning("duplicate install row for %s/%s; keeping max", binary, src)
            n = max(n, seen[key])
        seen[key] = n
    installs: dict[str, int] = {}
    for (_, src), n in seen.items():
        installs[src] = max(installs.get(src, 0), n)
    return installs


def load_nmu_counts(source) -> dict[str, int]:
    """Read ``source_package,nmu_count`` rows; duplicates are an input error."""
    if isinstance(source, (str, Path, io.IOBase)):
        rows = [(r["source_package"], r["nmu_count"])
                for r in _read_rows(source, ("source_package", "nmu_count"))]
    else:
        rows = list(source)
    counts: dict[str, int] = {}
    for src, n in rows:
        if src in counts:
            raise InputError(f"duplicate NMU row for {src}")
        counts[src] = _non_negative_int(n, f"nmu_count for {src}")
    return counts


def write_installs(installs: Mapping[str, int], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["binary_package", "source_package", "inst"])
    for src in sorted(installs):
        w.writerow([src, src, installs[src]])


def write_nmu_counts(counts: Mapping[str, int], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["source_package", "nmu_count"])
    for src in sorted(counts):
        w.writerow([src, counts[src]])


def build_corpus(
    bugs: Iterable[BugRecord],
    installs: Mapping[str, int],
    nmu_counts: Mapping[str, int],
    snapshot_time: float,
) -> Corpus:
    bugs = tuple(bugs)
    seen: set[int] = set()
    for b in bugs:
        if b.bug_id in seen:
            raise InputError(f"duplicate bug_id {b.bug_id}")
        seen.add(b.bug_id)
    members: dict[str, list[int]] = {}
    for b in bugs:
        members.setdefault(b.package_id, []).append(b.bug_id)
    universe = set(installs) | set(nmu_counts) | set(members)
    no_installs = sorted(set(members) - set(installs))
    if no_installs:
        log.warning("%d packages with bugs have no install rows; installs set to 0", len(no_installs))
    packages = tuple(
        PackageRecord(pid, int(installs.get(pid, 0)), int(nmu_counts.get(pid, 0)), tuple(members.get(pid, ())))
        for pid in sorted(universe)
    )
    return Corpus(float(snapshot_time), packages, bugs)


def write_corpus_inputs(corpus: Corpus, directory: Path) -> dict[str, Path]:
    """Write ``events.jsonl``, ``installs.csv`` and ``nmu.csv`` for a corpus."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {name: directory / name for name in ("events.jsonl", "installs.csv", "nmu.csv")}
    with open(paths["events.jsonl"], "w", encoding="utf-8") as f:
        write_event_log(corpus.bugs, f)
    with open(paths["installs.csv"], "w", encoding="utf-8", newline="") as f:
        write_installs({p.package_id: p.installs for p in corpus.packages}, f)
    with open(paths["nmu.csv"], "w", encoding="utf-8", newline="") as f:
        write_nmu_counts({p.package_id: p.nmu_count for p in corpus.packages}, f)
    return paths


def ingest(events_path, installs_path, nmu_path, snapshot_time: float) -> tuple[Corpus, EventSequence]:
    with open(events_path, encoding="utf-8") as f:
        seq = parse_event_log(f)
    bugs = fold_events(seq, snapshot_time)
    installs = load_installs(installs_path)
    nmu = load_nmu_counts(nmu_path) if nmu_path is not None else {}
    return build_corpus(bugs, installs, nmu, snapshot_time), seq
