"""Wire codec for 6LoWPAN fragmentation headers and a security extension.

Implements bit-exact encoding and decoding of the two fragmentation
header forms (first fragment and continuation fragment), an optional
trailing extension carrying a quantized trust byte, a nonce, and a
truncated keyed-hash signature, plus payload slicing into fragments.

Layout, big-endian throughout:

  Frag1 base (4 bytes):  11000 | size(11) | tag(16)
  FragN base (5 bytes):  11100 | size(11) | tag(16) | offset(8)

The extension appends trust(1) + nonce(4) + signature(8) = 13 bytes to
a Frag1 and trust(1) + signature(8) = 9 bytes to a FragN.  A decoder
unaware of the extension still parses the base header unchanged.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

MAX_FRAGMENT_PAYLOAD = 96
MAX_DATAGRAM_SIZE = 2047
MAX_FRAME_BYTES = 127

DISPATCH_FRAG1 = 0b11000
DISPATCH_FRAGN = 0b11100

FRAG1_BASE_LEN = 4
FRAGN_BASE_LEN = 5
FRAG1_EXT_LEN = 13
FRAGN_EXT_LEN = 9

NONCE_LEN = 4
SIGNATURE_LEN = 8

# Non-final fragments must carry a multiple of 8 payload bytes and the
# offset field counts 8-byte units, so 96 (= 12 units) is the largest
# legal slice under the 127-byte frame budget.
_OFFSET_UNIT = 8


class CodecError(ValueError):
    """Base class for wire-format violations."""


class PayloadTooLarge(CodecError):
    """Datagram payload exceeds the 11-bit size field."""


class InvalidHeader(CodecError):
    """Header field values violate an invariant."""


class Truncated(CodecError):
    """Byte sequence too short for the indicated header form."""


class NotAFragment(CodecError):
    """Dispatch bits do not name a fragmentation header."""


class FragmentKind(Enum):
    FRAG1 = "frag1"
    FRAGN = "fragn"


def quantize_trust(score: float) -> int:
    """Map a trust score in [0,1] to the 1-byte wire field."""
    return max(0, min(255, round(score * 255)))


def dequantize_trust(byte_value: int) -> float:
    return byte_value / 255.0


@dataclass(frozen=True)
class ExtensionFields:
    """Security extension: trust byte, nonce (Frag1 only), signature."""

    trust_byte: int = 0
    nonce: bytes = b""
    signature: bytes = bytes(SIGNATURE_LEN)


@dataclass(frozen=True)
class FragmentHeader:
    kind: FragmentKind
    datagram_size: int
    datagram_tag: int
    datagram_offset: int = 0  # FragN only, units of 8 bytes
    ext: ExtensionFields | None = None


@dataclass
class Fragment:
    """A fragment in flight: header plus payload plus receive metadata."""

    header: FragmentHeader
    payload: bytes
    source: int = -1
    arrival_time: float = 0.0


def _check_header(h: FragmentHeader) -> None:
    if not 0 <= h.datagram_size <= MAX_DATAGRAM_SIZE:
        raise InvalidHeader(f"datagram_size {h.datagram_size} outside [0, {MAX_DATAGRAM_SIZE}]")
    if not 0 <= h.datagram_tag <= 0xFFFF:
        raise InvalidHeader(f"datagram_tag {h.datagram_tag} outside [0, 65535]")
    if h.kind is FragmentKind.FRAG1:
        if h.datagram_offset != 0:
            raise InvalidHeader("Frag1 carries no offset field")
    else:
        if not 0 <= h.datagram_offset <= 0xFF:
            raise InvalidHeader(f"datagram_offset {h.datagram_offset} outside [0, 255]")
        if h.datagram_offset * _OFFSET_UNIT >= h.datagram_size:
            raise InvalidHeader(
                f"offset {h.datagram_offset} x {_OFFSET_UNIT} must fall inside "
                f"datagram_size {h.datagram_size}"
            )
    if h.ext is not None:
        if not 0 <= h.ext.trust_byte <= 0xFF:
            raise InvalidHeader(f"trust_byte {h.ext.trust_byte} outside [0, 255]")
        if len(h.ext.signature) != SIGNATURE_LEN:
            raise InvalidHeader(f"signature must be {SIGNATURE_LEN} bytes, got {len(h.ext.signature)}")
        if h.kind is FragmentKind.FRAG1:
            if len(h.ext.nonce) != NONCE_LEN:
                raise InvalidHeader(f"Frag1 nonce must be {NONCE_LEN} bytes, got {len(h.ext.nonce)}")
        elif h.ext.nonce:
            raise InvalidHeader("FragN extension carries no nonce")


def header_length(kind: FragmentKind, with_extension: bool) -> int:
    """Encoded header size in bytes for the given form."""
    if kind is FragmentKind.FRAG1:
        return FRAG1_BASE_LEN + (FRAG1_EXT_LEN if with_extension else 0)
    return FRAGN_BASE_LEN + (FRAGN_EXT_LEN if with_extension else 0)


def encode_header(h: FragmentHeader) -> bytes:
    """Serialize a header; raises InvalidHeader on violated invariants."""
    _check_header(h)
    if h.kind is FragmentKind.FRAG1:
        word0 = (DISPATCH_FRAG1 << 11) | h.datagram_size
        out = struct.pack(">HH", word0, h.datagram_tag)
        if h.ext is not None:
            out += bytes([h.ext.trust_byte]) + h.ext.nonce + h.ext.signature
    else:
        word0 = (DISPATCH_FRAGN << 11) | h.datagram_size
        out = struct.pack(">HHB", word0, h.datagram_tag, h.datagram_offset)
        if h.ext is not None:
            out += bytes([h.ext.trust_byte]) + h.ext.signature
    return out


def decode_base_header(data: bytes) -> FragmentHeader:
    """Parse only the base header, ignoring any trailing bytes.

    This is what a receiver without extension support does; it keeps the
    extension backward-compatible.
    """
    if len(data) < 2:
        raise Truncated(f"need at least 2 bytes for dispatch, got {len(data)}")
    word0 = struct.unpack(">H", data[:2])[0]
    dispatch = word0 >> 11
    size = word0 & 0x07FF
    if dispatch == DISPATCH_FRAG1:
        if len(data) < FRAG1_BASE_LEN:
            raise Truncated(f"Frag1 base header needs {FRAG1_BASE_LEN} bytes, got {len(data)}")
        tag = struct.unpack(">H", data[2:4])[0]
        return FragmentHeader(FragmentKind.FRAG1, size, tag)
    if dispatch == DISPATCH_FRAGN:
        if len(data) < FRAGN_BASE_LEN:
            raise Truncated(f"FragN base header needs {FRAGN_BASE_LEN} bytes, got {len(data)}")
        tag = struct.unpack(">H", data[2:4])[0]
        return FragmentHeader(FragmentKind.FRAGN, size, tag, data[4])
    raise NotAFragment(f"dispatch {dispatch:05b} is not a fragmentation header")


def decode_header(data: bytes) -> FragmentHeader:
    """Inverse of encode_header.

    The input must be exactly a base header or a base header plus the
    full extension; any other length is rejected.
    """
    base = decode_base_header(data)
    base_len = FRAG1_BASE_LEN if base.kind is FragmentKind.FRAG1 else FRAGN_BASE_LEN
    trailing = len(data) - base_len
    if trailing == 0:
        return base
    if base.kind is FragmentKind.FRAG1 and trailing == FRAG1_EXT_LEN:
        ext = ExtensionFields(
            trust_byte=data[base_len],
            nonce=data[base_len + 1 : base_len + 1 + NONCE_LEN],
            signature=data[base_len + 1 + NONCE_LEN :],
        )
    elif base.kind is FragmentKind.FRAGN and trailing == FRAGN_EXT_LEN:
        ext = ExtensionFields(trust_byte=data[base_len], signature=data[base_len + 1 :])
    else:
        raise InvalidHeader(f"{trailing} trailing bytes match no extension layout")
    return FragmentHeader(base.kind, base.datagram_size, base.datagram_tag, base.datagram_offset, ext)


def fragment_packet(payload: bytes, tag: int, with_extension: bool) -> list[Fragment]:
    """Slice a datagram payload into ordered fragments.

    The first fragment is a Frag1, the rest FragNs with offsets in
    8-byte units.  Extension fields, when requested, are zero-filled;
    the sender pipeline stamps trust, nonce and signature later.
    """
    if len(payload) == 0:
        raise CodecError("payload must be non-empty")
    if len(payload) > MAX_DATAGRAM_SIZE:
        raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_DATAGRAM_SIZE}")
    size = len(payload)
    frags: list[Fragment] = []
    pos = 0
    while pos < size:
        chunk = payload[pos : pos + MAX_FRAGMENT_PAYLOAD]
        if pos == 0:
            ext = ExtensionFields(nonce=bytes(NONCE_LEN)) if with_extension else None
            header = FragmentHeader(FragmentKind.FRAG1, size, tag, 0, ext)
        else:
            ext = ExtensionFields() if with_extension else None
            header = FragmentHeader(FragmentKind.FRAGN, size, tag, pos // _OFFSET_UNIT, ext)
        frags.append(Fragment(header, chunk))
        pos += len(chunk)
    return frags
