"""JSON file formats: experiment records, channel/protocol blocks and the
bundled 50-250 km dataset."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .statmodel import BASIS_PAIRS, INTENSITIES, ChannelParams, ProtocolParams, SessionParams, TallyTable

PUBLISHED_KEYS = ("C", "e_zz_1u", "E_ZZ", "s1_lower", "skr_bits_per_second")


class RecordError(ValueError):
    """Malformed or inconsistent input file."""


def tally_key(basis_pair: str, k: str) -> str:
    return f"{basis_pair}.{k}"


def tallies_to_dict(t: TallyTable) -> dict:
    def conv(v):
        v = float(v)
        return int(v) if v.is_integer() else v

    return {
        "n": {tally_key(b, k): conv(t.n[b, k]) for b in BASIS_PAIRS for k in INTENSITIES},
        "m": {tally_key(b, k): conv(t.m[b, k]) for b in BASIS_PAIRS for k in INTENSITIES},
    }


def tallies_from_dict(d: dict, *, integral: bool = False) -> TallyTable:
    try:
        n = {(b, k): d["n"][tally_key(b, k)] for b in BASIS_PAIRS for k in INTENSITIES}
        m = {(b, k): d["m"][tally_key(b, k)] for b in BASIS_PAIRS for k in INTENSITIES}
    except (KeyError, TypeError) as exc:
        raise RecordError(f"tallies missing entry {exc}") from exc
    extra = (set(d.get("n", {})) | set(d.get("m", {}))) - {tally_key(b, k) for b in BASIS_PAIRS for k in INTENSITIES}
    if extra:
        raise RecordError(f"unknown tally keys: {sorted(extra)}")
    for key, v in list(n.items()) + list(m.items()):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise RecordError(f"tally {key} is not a number: {v!r}")
        if integral and not float(v).is_integer():
            raise RecordError(f"tally {key} must be an integer count, got {v}")
    try:
        return TallyTable({k: float(v) for k, v in n.items()}, {k: float(v) for k, v in m.items()})
    except ValueError as exc:
        raise RecordError(str(exc)) from exc


def _build(cls, d, what):
    if not isinstance(d, dict):
        raise RecordError(f"{what} must be an object")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise RecordError(f"invalid {what}: {exc}") from exc


def protocol_from_dict(d: dict) -> ProtocolParams:
    return _build(ProtocolParams, d, "protocol")


def channel_from_dict(d: dict) -> ChannelParams:
    return _build(ChannelParams, d, "channel")


def channel_to_dict(ch: ChannelParams) -> dict:
    return {n: getattr(ch, n) for n in ("eta_d", "p_d", "e_d_z", "e_d_xy", "loss_db", "theta")}


def session_from_dict(d: dict) -> SessionParams:
    return _build(SessionParams, d, "session")


@dataclass
class ExperimentRecord:
    fiber_km: float | None
    loss_db: float
    protocol: ProtocolParams
    session: SessionParams
    tallies: TallyTable
    published: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "fiber_km": self.fiber_km,
            "loss_db": self.loss_db,
            "protocol": self.protocol.as_dict(),
            "session": {"n_tot": self.session.n_tot, "rep_rate_hz": self.session.rep_rate_hz},
            "tallies": tallies_to_dict(self.tallies),
        }
        if self.published:
            out["published"] = dict(self.published)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        if not isinstance(d, dict):
            raise RecordError("record must be a JSON object")
        for key in ("loss_db", "protocol", "session", "tallies"):
            if key not in d:
                raise RecordError(f"record missing field {key!r}")
        published = d.get("published") or {}
        unknown = set(published) - set(PUBLISHED_KEYS)
        if unknown:
            raise RecordError(f"unknown published fields: {sorted(unknown)}")
        for key, v in published.items():
            if not isinstance(v, (int, float)) or v <= 0:
                raise RecordError(f"published {key} must be a positive number, got {v!r}")
        loss = d["loss_db"]
        if not isinstance(loss, (int, float)) or loss < 0:
            raise RecordError(f"loss_db must be a non-negative number, got {loss!r}")
        return cls(
            fiber_km=d.get("fiber_km"),
            loss_db=float(loss),
            protocol=protocol_from_dict(d["protocol"]),
            session=session_from_dict(d["session"]),
            tallies=tallies_from_dict(d["tallies"], integral=True),
            published=dict(published),
        )


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise RecordError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RecordError(f"{path} is not valid JSON: {exc}") from exc


def write_json(path, data: dict) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def load_record(path) -> ExperimentRecord:
    return ExperimentRecord.from_dict(read_json(path))


def save_record(path, record: ExperimentRecord) -> None:
    write_json(path, record.to_dict())


def bundled_dataset_dir() -> Path:
    return Path(str(resources.files("rfiqkd") / "data" / "reference"))


def load_dataset(directory=None) -> list[ExperimentRecord]:
    """All ``*.json`` records in ``directory`` (default: bundled), ordered by loss."""
    directory = Path(directory) if directory is not None else bundled_dataset_dir()
    if not directory.is_dir():
        raise RecordError(f"dataset directory {directory} does not exist")
    files = sorted(directory.glob("*.json"))
    if not files:
        raise RecordError(f"no records found in {directory}")
    return sorted((load_record(p) for p in files), key=lambda r: r.loss_db)
