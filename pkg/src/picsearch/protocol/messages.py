"""Messages exchanged between entities and the PIC1 wire frame."""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Any

from ..errors import MalformedFileError

FRAME_MAGIC = b"PIC1"
FRAME_VERSION = 1
_FRAME = struct.Struct("<4sBB16sQ")
NO_QUERY = bytes(16)


class Kind(enum.IntEnum):
    REGISTER = 1
    KEY_SHARE = 2
    POLICY = 3
    INDEX = 4
    UPLOAD = 5
    UPLOAD_CONVERTED = 6
    ENVELOPE_UPLOAD = 7
    ATTRS = 8
    QUERY = 9
    QUERY_CONVERTED = 10
    DIST_BATCH = 11
    CLUSTER_REQUEST = 12
    ENVELOPE_REQUEST = 13
    ENVELOPES = 14
    RESULT = 15


@dataclass
class Message:
    sender: str
    receiver: str
    kind: Kind
    payload: dict[str, Any] = field(default_factory=dict)
    query_id: bytes | None = None

    def __repr__(self) -> str:
        qid = self.query_id.hex()[:8] if self.query_id else "-"
        return f"<{self.kind.name} {self.sender}->{self.receiver} q={qid}>"


def encode_frame(kind: Kind | int, payload: bytes, query_id: bytes | None = None) -> bytes:
    qid = query_id or NO_QUERY
    if len(qid) != 16:
        raise ValueError("query_id must be 16 bytes")
    return _FRAME.pack(FRAME_MAGIC, FRAME_VERSION, int(kind), qid, len(payload)) + payload


def decode_frame(data: bytes) -> tuple[Kind, bytes | None, bytes]:
    if len(data) < _FRAME.size:
        raise MalformedFileError("short frame header")
    magic, version, kind, qid, length = _FRAME.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise MalformedFileError(f"bad frame magic {magic!r}")
    if version != FRAME_VERSION:
        raise MalformedFileError(f"unsupported frame version {version}")
    body = data[_FRAME.size:]
    if len(body) != length:
        raise MalformedFileError(f"frame declares {length} payload bytes, got {len(body)}")
    try:
        k = Kind(kind)
    except ValueError:
        raise MalformedFileError(f"unknown message kind {kind}") from None
    return k, (None if qid == NO_QUERY else qid), body


FRAME_HEADER_SIZE = _FRAME.size
