"""Wire protocol and transports connecting vision, guidance, and the fleet.

Three message families travel between the subsystems: detection sets from
the vision simulator, rigid-body states from the motion-capture tracker, and
per-vehicle move commands.  Everything on the wire is newline-terminated
canonical JSON: UTF-8, sorted keys, compact separators, floats carried with
at most 9 significant digits.  Float fields are canonicalized when a message
is constructed, so encode/decode is an exact identity on message values and
the simulation behaves bit-identically whether modules exchange messages
in process or over loopback UDP datagrams.

Datagram semantics are at-most-once: subscribers tolerate loss, duplication,
and reordering.  Commands carry a per-vehicle sequence number and receivers
drop anything not newer than the last accepted one.
"""

from __future__ import annotations

import json
import os
import select
import socket
import time
from dataclasses import dataclass

import numpy as np

from .fleet import MoveCommand

SCHEMA_VERSION = 1

DEFAULT_HOST = "127.0.0.1"
DEFAULT_DETECTION_PORT = 47001
DEFAULT_TRACKER_PORT = 47002
DEFAULT_COMMAND_PORT_BASE = 48001

DETECTION_TOPIC = "detections"
TRACKER_TOPIC = "tracker"


def command_topic(chaser_id: str) -> str:
    return f"cmd/{chaser_id}"


class DecodeError(ValueError):
    """Malformed wire bytes; ``offset`` locates the first offending byte."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedVersion(ValueError):
    def __init__(self, version):
        super().__init__(f"unsupported schema_version {version!r}")
        self.version = version


def canon_float(x: float) -> float:
    """Round to 9 significant digits.

    The shortest repr of the rounded value never needs more digits than the
    9-digit literal that produced it, so JSON serialization of canonicalized
    values stays within the wire format's digit budget.
    """
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"non-finite value on the wire: {x!r}")
    return float(f"{x:.9g}")


def _canon_triple(p) -> tuple[float, float, float]:
    if len(p) != 3:
        raise ValueError(f"expected 3 components, got {len(p)}")
    return (canon_float(p[0]), canon_float(p[1]), canon_float(p[2]))


DETECTION_CLASSES = ("solar_panel", "body")


@dataclass(frozen=True)
class DetectionEntry:
    """One detected object: class label plus its 5 feature points (camera
    frame, meters)."""

    cls: str
    points: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if self.cls not in DETECTION_CLASSES:
            raise ValueError(f"unknown detection class {self.cls!r}")
        if len(self.points) != 5:
            raise ValueError(f"expected 5 points, got {len(self.points)}")
        object.__setattr__(self, "points", tuple(_canon_triple(p) for p in self.points))


@dataclass(frozen=True)
class DetectionMsg:
    timestamp_us: int
    detections: tuple[DetectionEntry, ...]
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        object.__setattr__(self, "timestamp_us", int(self.timestamp_us))


@dataclass(frozen=True)
class BodyState:
    """Tracker-reported rigid body: position (m) and velocity (m/s)."""

    id: str
    position: tuple[float, float, float]
    velocity: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "position", _canon_triple(self.position))
        object.__setattr__(self, "velocity", _canon_triple(self.velocity))


@dataclass(frozen=True)
class TrackerMsg:
    timestamp_us: int
    bodies: tuple[BodyState, ...]
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "timestamp_us", int(self.timestamp_us))
        ids = [b.id for b in self.bodies]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate body ids in tracker message")


LAND = "land"


@dataclass(frozen=True)
class CommandMsg:
    """Move (or land) order for one chaser; seq increases per chaser."""

    seq: int
    chaser_id: str
    move: MoveCommand | str

    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "seq", int(self.seq))
        if isinstance(self.move, str):
            if self.move != LAND:
                raise ValueError(f"string move must be {LAND!r}, got {self.move!r}")
        elif not isinstance(self.move, MoveCommand):
            raise ValueError("move must be a MoveCommand or 'land'")


Message = DetectionMsg | TrackerMsg | CommandMsg


def _payload(msg: Message) -> dict:
    if isinstance(msg, DetectionMsg):
        return {
            "type": "detection",
            "schema_version": msg.schema_version,
            "timestamp_us": msg.timestamp_us,
            "detections": [
                {"class": d.cls, "points": [list(p) for p in d.points]}
                for d in msg.detections
            ],
        }
    if isinstance(msg, TrackerMsg):
        return {
            "type": "tracker",
            "schema_version": msg.schema_version,
            "timestamp_us": msg.timestamp_us,
            "bodies": [
                {"id": b.id, "position": list(b.position), "velocity": list(b.velocity)}
                for b in msg.bodies
            ],
        }
    if isinstance(msg, CommandMsg):
        if isinstance(msg.move, str):
            move = LAND
        else:
            move = {
                "dx": msg.move.dx,
                "dy": msg.move.dy,
                "dz": msg.move.dz,
                "speed": msg.move.speed,
            }
        return {
            "type": "command",
            "schema_version": msg.schema_version,
            "seq": msg.seq,
            "chaser_id": msg.chaser_id,
            "move": move,
        }
    raise TypeError(f"not a wire message: {type(msg).__name__}")


def encode(msg: Message) -> bytes:
    """Canonical JSON line for one message."""
    text = json.dumps(_payload(msg), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return text.encode("utf-8") + b"\n"


def _reject_constant(token):
    raise ValueError(f"non-finite JSON constant {token!r}")


def decode(data: bytes) -> Message:
    """Parse one wire line back into a message.

    Raises DecodeError (with a byte offset) for anything malformed and
    UnsupportedVersion for schema versions this build does not speak.
    """
    if not data.endswith(b"\n"):
        raise DecodeError("payload not newline-terminated", offset=len(data))
    try:
        text = data[:-1].decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError("invalid UTF-8", offset=e.start) from e
    try:
        payload = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise DecodeError(f"invalid JSON: {e.msg}", offset=e.pos) from e
    except ValueError as e:
        raise DecodeError(str(e)) from e
    if not isinstance(payload, dict):
        raise DecodeError("top-level JSON value must be an object")
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UnsupportedVersion(version)
    try:
        kind = payload["type"]
        if kind == "detection":
            return DetectionMsg(
                timestamp_us=payload["timestamp_us"],
                detections=tuple(
                    DetectionEntry(cls=d["class"], points=tuple(tuple(p) for p in d["points"]))
                    for d in payload["detections"]
                ),
            )
        if kind == "tracker":
            return TrackerMsg(
                timestamp_us=payload["timestamp_us"],
                bodies=tuple(
                    BodyState(id=b["id"], position=tuple(b["position"]), velocity=tuple(b["velocity"]))
                    for b in payload["bodies"]
                ),
            )
        if kind == "command":
            raw = payload["move"]
            if isinstance(raw, str):
                move: MoveCommand | str = raw
            else:
                move = MoveCommand(
                    dx=int(raw["dx"]), dy=int(raw["dy"]), dz=int(raw["dz"]), speed=int(raw["speed"])
                )
            return CommandMsg(seq=payload["seq"], chaser_id=payload["chaser_id"], move=move)
        raise DecodeError(f"unknown message type {kind!r}")
    except DecodeError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise DecodeError(f"bad message body: {e}") from e


class CommandDeduper:
    """Per-chaser monotone sequence filter with a dropped-message counter."""

    def __init__(self):
        self._last: dict[str, int] = {}
        self.dropped = 0

    def accept(self, msg: CommandMsg) -> bool:
        last = self._last.get(msg.chaser_id)
        if last is not None and msg.seq <= last:
            self.dropped += 1
            return False
        self._last[msg.chaser_id] = msg.seq
        return True


class InProcessTransport:
    """Ideal in-memory transport: per-topic FIFO of encoded datagrams."""

    def __init__(self):
        self._queues: dict[str, list[bytes]] = {}

    def publish(self, topic: str, data: bytes) -> None:
        self._queues.setdefault(topic, []).append(bytes(data))

    def poll(self, topic: str) -> list[bytes]:
        out = self._queues.get(topic, [])
        self._queues[topic] = []
        return out

    def close(self) -> None:
        self._queues.clear()


class UdpTransport:
    """Loopback UDP transport with one bound socket per topic.

    Both endpoints of every topic live in this process: publish sends a real
    datagram to the topic's bound port, poll drains it back out.  Sent
    datagrams are counted per topic, and poll waits (bounded) until the
    kernel has delivered everything sent, so a zero-loss run reads exactly
    the published sequence without sleeps or background threads.
    """

    MAX_DATAGRAM = 65000

    def __init__(self, topics: dict[str, int], host: str = DEFAULT_HOST, wait: float = 1.0):
        self._wait = wait
        self._rx: dict[str, socket.socket] = {}
        self._addr: dict[str, tuple[str, int]] = {}
        self._sent: dict[str, int] = {}
        self._received: dict[str, int] = {}
        self._tx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            for topic, port in topics.items():
                sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 21)
                sock.bind((host, port))
                sock.setblocking(False)
                self._rx[topic] = sock
                self._addr[topic] = sock.getsockname()[:2]
                self._sent[topic] = 0
                self._received[topic] = 0
        except OSError:
            self.close()
            raise

    def endpoint(self, topic: str) -> tuple[str, int]:
        return self._addr[topic]

    def publish(self, topic: str, data: bytes) -> None:
        if len(data) > self.MAX_DATAGRAM:
            raise ValueError(f"datagram too large: {len(data)} bytes")
        self._tx.sendto(data, self._addr[topic])
        self._sent[topic] += 1

    def poll(self, topic: str) -> list[bytes]:
        sock = self._rx[topic]
        out: list[bytes] = []
        deadline = time.monotonic() + self._wait
        while True:
            try:
                data, _ = sock.recvfrom(self.MAX_DATAGRAM + 1)
                out.append(data)
                self._received[topic] += 1
                continue
            except BlockingIOError:
                pass
            if self._received[topic] >= self._sent[topic]:
                break
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            select.select([sock], [], [], min(remaining, 0.05))
        return out

    def close(self) -> None:
        for sock in self._rx.values():
            sock.close()
        self._rx.clear()
        self._tx.close()


class LossyTransport:
    """Wraps a transport and drops a seeded fraction of published datagrams
    before they reach the wire (at-most-once semantics made visible)."""

    def __init__(self, inner, loss_rate: float, rng: np.random.Generator):
        if not 0.0 <= loss_rate < 1.0:
            raise ValueError("loss_rate must be in [0, 1)")
        self._inner = inner
        self._loss = loss_rate
        self._rng = rng
        self.dropped = 0

    def publish(self, topic: str, data: bytes) -> None:
        if self._rng.random() < self._loss:
            self.dropped += 1
            return
        self._inner.publish(topic, data)

    def poll(self, topic: str) -> list[bytes]:
        return self._inner.poll(topic)

    def close(self) -> None:
        self._inner.close()


def default_topic_ports(chaser_ids: list[str]) -> dict[str, int]:
    """Topic->port map from the defaults, honoring environment overrides
    SWARMDOCK_DETECTION_PORT, SWARMDOCK_TRACKER_PORT and
    SWARMDOCK_COMMAND_PORT_BASE (0 = ephemeral)."""
    det = int(os.environ.get("SWARMDOCK_DETECTION_PORT", DEFAULT_DETECTION_PORT))
    trk = int(os.environ.get("SWARMDOCK_TRACKER_PORT", DEFAULT_TRACKER_PORT))
    base = int(os.environ.get("SWARMDOCK_COMMAND_PORT_BASE", DEFAULT_COMMAND_PORT_BASE))
    topics = {DETECTION_TOPIC: det, TRACKER_TOPIC: trk}
    for i, cid in enumerate(chaser_ids):
        topics[command_topic(cid)] = 0 if base == 0 else base + i
    return topics
