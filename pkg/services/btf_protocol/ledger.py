"""
Transmission ledger: exact byte accounting per phase, channel and artifact,
plus wall-clock timings of party operations.
"""

import json
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from services.btf_protocol.messages import Artifact, Channel, Model


class Phase(str, Enum):
    KDP = "KDP"
    INP = "INP"
    RS = "RS"
    VS = "VS"


SETUP_PHASES = (Phase.KDP, Phase.INP)


@dataclass(frozen=True)
class LedgerEntry:
    phase: Phase
    channel: Channel
    artifact: Artifact
    nbytes: int


@dataclass(frozen=True)
class TimingEntry:
    phase: Phase
    party: str
    label: str
    seconds: float


@dataclass
class TransmissionLedger:
    """
    Append-only record of every send.

    Attributes:
        model (Model): Architecture the run used.
        params (str): Parameter set name.
        l_w (int): Feature length of the run.
        entries (list[LedgerEntry]): One entry per message, in send order.
        timings (list[TimingEntry]): Timed party operations.
    """
    model: Model
    params: str
    l_w: int = 0
    entries: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, phase: Phase, channel: Channel, artifact: Artifact, nbytes: int) -> LedgerEntry:
        entry = LedgerEntry(Phase(phase), Channel(channel), Artifact(artifact), int(nbytes))
        with self._lock:
            self.entries.append(entry)
        return entry

    @contextmanager
    def timed(self, phase: Phase, party: str, label: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            with self._lock:
                self.timings.append(TimingEntry(Phase(phase), party, label, elapsed))

    def select(self, phases=None, channel: Channel = None) -> list:
        phases = None if phases is None else {Phase(p) for p in phases}
        return [
            e for e in self.entries
            if (phases is None or e.phase in phases) and (channel is None or e.channel == channel)
        ]

    def total(self, channel: Channel = None, phases=None) -> int:
        return sum(e.nbytes for e in self.select(phases, channel))

    def by_channel(self, phases=None) -> dict:
        totals = {}
        for e in self.select(phases):
            totals[e.channel] = totals.get(e.channel, 0) + e.nbytes
        return totals

    def unit_size(self, artifact: Artifact) -> int:
        """Size of the first recorded transfer of an artifact (0 if never sent)."""
        for e in self.entries:
            if e.artifact == artifact:
                return e.nbytes
        return 0

    def seconds(self, label: str, phases=None) -> float:
        phases = None if phases is None else {Phase(p) for p in phases}
        return sum(t.seconds for t in self.timings if t.label == label and (phases is None or t.phase in phases))

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "params": self.params,
            "l_w": self.l_w,
            "entries": [
                {"phase": e.phase.value, "channel": e.channel.label, "artifact": e.artifact.label, "bytes": e.nbytes}
                for e in self.entries
            ],
            "timings": [
                {"phase": t.phase.value, "party": t.party, "label": t.label, "seconds": t.seconds}
                for t in self.timings
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransmissionLedger":
        channels = {c.label: c for c in Channel}
        artifacts = {a.label: a for a in Artifact}
        ledger = cls(Model(data["model"]), data["params"], int(data.get("l_w", 0)))
        for e in data.get("entries", []):
            ledger.record(e["phase"], channels[e["channel"]], artifacts[e["artifact"]], e["bytes"])
        for t in data.get("timings", []):
            ledger.timings.append(TimingEntry(Phase(t["phase"]), t["party"], t["label"], float(t["seconds"])))
        return ledger

    def save_json(self, path, summary: dict = None, include_timings: bool = True) -> Path:
        data = self.to_dict()
        if not include_timings:
            data.pop("timings")
        if summary is not None:
            data["summary"] = summary
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, ensure_ascii=False), encoding="utf-8")
        return path

    @classmethod
    def load_json(cls, path) -> "TransmissionLedger":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
