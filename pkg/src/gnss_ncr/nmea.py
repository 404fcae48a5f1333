"""NMEA-0183 ingestion: checksum validation, GSV decoding and epoch assembly."""

from __future__ import annotations

import enum
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional, Union

TALKERS = ("GP", "GL", "GA", "GB", "BD", "GQ", "GN")


class Constellation(str, enum.Enum):
    GPS = "GPS"
    GLONASS = "GLONASS"
    GALILEO = "Galileo"
    BEIDOU = "BeiDou"
    QZSS = "QZSS"


_TALKER_CONSTELLATION = {
    "GP": Constellation.GPS,
    "GL": Constellation.GLONASS,
    "GA": Constellation.GALILEO,
    "GB": Constellation.BEIDOU,
    "BD": Constellation.BEIDOU,
    "GQ": Constellation.QZSS,
}

# constellation -> GSV talker used when emitting
EMIT_TALKER = {
    Constellation.GPS: "GP",
    Constellation.GLONASS: "GL",
    Constellation.GALILEO: "GA",
    Constellation.BEIDOU: "GB",
    Constellation.QZSS: "GQ",
}


class SkipReason(str, enum.Enum):
    BAD_CHECKSUM = "bad-checksum"
    UNKNOWN_TALKER = "unknown-talker"
    MALFORMED = "malformed"


@dataclass(frozen=True)
class Skip:
    """Marker returned by :func:`parse_sentence` for lines that are dropped."""

    reason: SkipReason
    line: str = ""


@dataclass(frozen=True)
class RawSentence:
    talker: str
    type_code: str
    fields: tuple
    checksum_ok: bool = True


class GsvParseError(ValueError):
    """A GSV sentence whose field layout cannot be decoded."""


@dataclass(frozen=True)
class SatelliteObservation:
    constellation: Constellation
    prn: int
    elevation: Optional[float]
    azimuth: Optional[float]
    cn0: Optional[float]
    signal_id: Optional[str] = None

    @property
    def key(self):
        return (self.constellation, self.prn)

    @property
    def available(self) -> bool:
        return self.cn0 is not None


@dataclass(frozen=True)
class GsvGroup:
    msg_index: int
    msg_count: int
    sats_in_view: int
    observations: tuple
    signal_id: Optional[str] = None


@dataclass
class Epoch:
    timestamp: Optional[float]
    observations: list = field(default_factory=list)
    partial: bool = False

    @property
    def available(self) -> list:
        """Observations with a C/N0 reading (tracked satellites)."""
        return [o for o in self.observations if o.cn0 is not None]

    @property
    def num_available(self) -> int:
        return len(self.available)

    def to_json(self) -> str:
        obs = [
            {"const": o.constellation.value, "prn": o.prn, "el": o.elevation, "az": o.azimuth, "cn0": o.cn0}
            for o in self.observations
        ]
        return json.dumps({"timestamp": self.timestamp, "observations": obs})

    @classmethod
    def from_json(cls, line: str) -> "Epoch":
        d = json.loads(line)
        obs = [
            SatelliteObservation(Constellation(o["const"]), int(o["prn"]), o["el"], o["az"], o["cn0"])
            for o in d["observations"]
        ]
        return cls(d["timestamp"], obs)


def nmea_checksum(payload: str) -> int:
    """XOR of every character between '$' and '*'."""
    cs = 0
    for ch in payload.encode("latin-1", errors="replace"):
        cs ^= ch
    return cs


def validate_checksum(line: str) -> bool:
    line = line.strip()
    if not line.startswith("$") or "*" not in line:
        return False
    payload, _, tail = line[1:].rpartition("*")
    tail = tail.strip()
    if len(tail) != 2:
        return False
    try:
        expected = int(tail, 16)
    except ValueError:
        return False
    return nmea_checksum(payload) == expected


def build_sentence(payload: str) -> str:
    """Frame a payload (without '$') as a checksummed sentence."""
    return "$%s*%02X" % (payload, nmea_checksum(payload))


def parse_sentence(line: Union[str, bytes]) -> Union[RawSentence, Skip]:
    if isinstance(line, bytes):
        line = line.decode("latin-1")
    line = line.strip()
    if not line.startswith("$") or "*" not in line or not line.isascii():
        return Skip(SkipReason.MALFORMED, line)
    payload = line[1:].rpartition("*")[0]
    head = payload.split(",", 1)[0]
    if len(head) != 5 or not head.isalnum() or not head.isupper():
        return Skip(SkipReason.MALFORMED, line)
    if not validate_checksum(line):
        return Skip(SkipReason.BAD_CHECKSUM, line)
    talker, type_code = head[:2], head[2:]
    if talker not in TALKERS:
        return Skip(SkipReason.UNKNOWN_TALKER, line)
    fields = tuple(f if f != "" else None for f in payload.split(",")[1:])
    return RawSentence(talker, type_code, fields, True)


def _gn_constellation(prn: int) -> Constellation:
    # NMEA 4.x PRN numbering used by combined-talker receivers
    if 65 <= prn <= 96:
        return Constellation.GLONASS
    if 193 <= prn <= 200:
        return Constellation.QZSS
    if 201 <= prn <= 263 or 401 <= prn <= 437:
        return Constellation.BEIDOU
    if 301 <= prn <= 336:
        return Constellation.GALILEO
    return Constellation.GPS


def _num(value: Optional[str], what: str, sentence) -> Optional[float]:
    if value is None:
        return None
    try:
        x = float(value)
    except ValueError:
        x = math.nan
    if not math.isfinite(x):
        raise GsvParseError(f"non-numeric {what} {value!r} in {sentence}")
    return x


def parse_gsv(sentence: RawSentence) -> GsvGroup:
    if sentence.type_code != "GSV":
        raise GsvParseError(f"not a GSV sentence: {sentence.talker}{sentence.type_code}")
    fields = list(sentence.fields)
    ctx = f"{sentence.talker}GSV,{','.join(f or '' for f in fields)}"
    if len(fields) < 3:
        raise GsvParseError(f"GSV header truncated: {ctx}")
    extra = (len(fields) - 3) % 4
    signal_id = None
    if extra == 1:
        signal_id = fields.pop()
    elif extra != 0:
        raise GsvParseError(f"GSV field count {len(fields)} is not 3 + 4k: {ctx}")
    try:
        msg_count, msg_index, in_view = (int(fields[i]) if fields[i] is not None else 0 for i in range(3))
    except ValueError:
        raise GsvParseError(f"non-numeric GSV header: {ctx}") from None

    obs = []
    for k in range(3, len(fields), 4):
        prn_s, el_s, az_s, snr_s = fields[k:k + 4]
        if prn_s is None:
            # empty padding block
            if el_s is None and az_s is None and snr_s is None:
                continue
            raise GsvParseError(f"missing PRN: {ctx}")
        try:
            prn = int(prn_s)
        except ValueError:
            raise GsvParseError(f"non-numeric PRN {prn_s!r}: {ctx}") from None
        el = _num(el_s, "elevation", ctx)
        az = _num(az_s, "azimuth", ctx)
        cn0 = _num(snr_s, "SNR", ctx)
        if az is not None:
            az = az % 360.0
        if el is not None and not 0.0 <= el <= 90.0:
            el = min(max(el, 0.0), 90.0) if -90.0 <= el <= 90.0 else None
        if cn0 is not None and not 0.0 <= cn0 <= 99.0:
            cn0 = None
        const = (_gn_constellation(prn) if sentence.talker == "GN"
                 else _TALKER_CONSTELLATION[sentence.talker])
        obs.append(SatelliteObservation(const, prn, el, az, cn0, signal_id))
    return GsvGroup(msg_index, msg_count, in_view, tuple(obs), signal_id)


def parse_time_of_day(value: Optional[str]) -> Optional[float]:
    """hhmmss.ss -> seconds of day, rounded to centiseconds."""
    if not value or len(value) < 6:
        return None
    try:
        h, m, s = int(value[0:2]), int(value[2:4]), float(value[4:])
    except ValueError:
        return None
    return round(h * 3600 + m * 60 + s, 2)


def format_time_of_day(t: float) -> str:
    cs = int(round(t * 100)) % (86400 * 100)
    h, rem = divmod(cs, 360000)
    m, rem = divmod(rem, 6000)
    return "%02d%02d%05.2f" % (h, m, rem / 100.0)


def _merge(observations: dict, obs: SatelliteObservation) -> None:
    prev = observations.get(obs.key)
    if prev is None:
        observations[obs.key] = obs
        return
    # multi-signal duplicates: keep the strongest signal, fill geometry if missing
    if obs.cn0 is not None and (prev.cn0 is None or obs.cn0 > prev.cn0):
        keep, other = obs, prev
    else:
        keep, other = prev, obs
    if keep.azimuth is None or keep.elevation is None:
        keep = SatelliteObservation(
            keep.constellation, keep.prn,
            keep.elevation if keep.elevation is not None else other.elevation,
            keep.azimuth if keep.azimuth is not None else other.azimuth,
            keep.cn0, keep.signal_id)
    observations[obs.key] = keep


class EpochAssembler:
    """Groups GSV observations between successive RMC (or GGA) sentences.

    GGA only opens epochs while no RMC has been seen in the stream. GSV data
    arriving before the first delimiter has no timestamp and is dropped.
    """

    def __init__(self):
        self._seen_rmc = False
        self._open = False
        self._time: Optional[float] = None
        self._obs: dict = {}
        self.gsv_errors = 0

    def _close(self, partial=False) -> Epoch:
        ep = Epoch(self._time, list(self._obs.values()), partial)
        self._obs = {}
        return ep

    def push(self, sentence: RawSentence) -> Optional[Epoch]:
        """Feed one sentence; returns the epoch it closed, if any."""
        code = sentence.type_code
        if code == "RMC" or (code == "GGA" and not self._seen_rmc):
            t = parse_time_of_day(sentence.fields[0] if sentence.fields else None)
            if code == "RMC" and not self._seen_rmc:
                self._seen_rmc = True
                if self._open and t == self._time:
                    # GGA-opened cycle handing over to RMC delimiting
                    return None
            done = self._close() if self._open else None
            self._open = True
            self._time = t
            return done
        if code == "GSV" and self._open:
            try:
                group = parse_gsv(sentence)
            except GsvParseError:
                self.gsv_errors += 1
                return None
            for obs in group.observations:
                _merge(self._obs, obs)
        return None

    def finish(self) -> Optional[Epoch]:
        if not self._open:
            return None
        self._open = False
        return self._close(partial=True)


def assemble_epochs(sentences: Iterable[RawSentence]) -> Iterator[Epoch]:
    asm = EpochAssembler()
    for s in sentences:
        ep = asm.push(s)
        if ep is not None:
            yield ep
    last = asm.finish()
    if last is not None:
        yield last


def iter_lines(source: Union[str, bytes, IO]) -> Iterator[str]:
    """Lines from text, bytes or a (text or binary) file object."""
    if isinstance(source, bytes):
        source = source.decode("latin-1")
    if isinstance(source, str):
        source = io.StringIO(source)
    for line in source:
        if isinstance(line, bytes):
            line = line.decode("latin-1")
        yield line


def iter_sentences(source, stats: Optional[dict] = None) -> Iterator[RawSentence]:
    for line in iter_lines(source):
        if not line.strip():
            continue
        s = parse_sentence(line)
        if isinstance(s, Skip):
            if stats is not None:
                stats[s.reason.value] = stats.get(s.reason.value, 0) + 1
            continue
        if stats is not None:
            stats["ok"] = stats.get("ok", 0) + 1
        yield s


def read_epochs(source) -> list:
    """Parse a whole NMEA log (path, text, bytes or file object) into epochs."""
    if isinstance(source, os.PathLike) or (isinstance(source, str) and not _looks_like_nmea(source)):
        with open(source, "rb") as fh:
            return list(assemble_epochs(iter_sentences(fh)))
    return list(assemble_epochs(iter_sentences(source)))


def _looks_like_nmea(source: str) -> bool:
    return "\n" in source or source.lstrip().startswith("$")


def write_epochs_jsonl(epochs: Iterable[Epoch], fh) -> None:
    for ep in epochs:
        fh.write(ep.to_json() + "\n")
