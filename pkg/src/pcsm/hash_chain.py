"""Chained keyed-hash generation and verification for fragment trains.

The first fragment of a datagram seeds a chain:

    H_0 = HMAC(key, payload_0 || nonce)

and every later fragment extends it:

    H_i = HMAC(key, H_{i-1} || payload_i)

Wire signatures are the leftmost 8 bytes of each digest.  Because each
link covers the previous digest, tampering with, reordering, dropping
or injecting any fragment breaks verification at or before the
affected position.  Verification advances the chain only on success,
so one bad fragment poisons the remainder of that datagram.
"""

from __future__ import annotations

import dataclasses
import hmac
from dataclasses import dataclass

from .frag_codec import ExtensionFields, Fragment, FragmentKind

TAG_LEN = 8
DEFAULT_ALGORITHM = "sha1"


class EmptyKey(ValueError):
    """The shared key must be non-empty."""


@dataclass(frozen=True)
class HashChainState:
    """Immutable chain position: advancing returns a new state."""

    key: bytes
    prev_hash: bytes
    nonce: bytes
    index: int = 0
    algorithm: str = DEFAULT_ALGORITHM


def _digest(key: bytes, data: bytes, algorithm: str) -> bytes:
    return hmac.new(key, data, algorithm).digest()


def seed_chain(
    key: bytes, payload_frag1: bytes, nonce: bytes, algorithm: str = DEFAULT_ALGORITHM
) -> HashChainState:
    """Start a chain from the first fragment's payload and a nonce."""
    if not key:
        raise EmptyKey("chain key must be non-empty")
    h0 = _digest(key, payload_frag1 + nonce, algorithm)
    return HashChainState(key, h0, nonce, 0, algorithm)


def chain_tag(state: HashChainState) -> bytes:
    """Truncated wire signature for the chain's current digest."""
    return state.prev_hash[:TAG_LEN]


def next_hash(state: HashChainState, payload: bytes) -> tuple[HashChainState, bytes]:
    """Advance the chain over one payload, returning the new wire tag."""
    digest = _digest(state.key, state.prev_hash + payload, state.algorithm)
    advanced = dataclasses.replace(state, prev_hash=digest, index=state.index + 1)
    return advanced, digest[:TAG_LEN]


def validate_fragment(
    state: HashChainState, payload: bytes, received_tag: bytes
) -> tuple[bool, HashChainState]:
    """Check one fragment against the chain.

    Returns (valid, state).  The state advances only when the tag
    matches; comparison is constant-time.
    """
    advanced, expected = next_hash(state, payload)
    if hmac.compare_digest(expected, received_tag):
        return True, advanced
    return False, state


def sign_fragments(
    key: bytes,
    fragments: list[Fragment],
    nonce: bytes,
    trust_byte: int = 255,
    algorithm: str = DEFAULT_ALGORITHM,
) -> list[Fragment]:
    """Stamp extension fields onto a fragment train, in place.

    The first fragment carries the nonce and the truncated seed digest;
    each later fragment carries its chained tag.  Fragments must be in
    offset order and carry zero-filled extensions from fragment_packet.
    """
    if not fragments or fragments[0].header.kind is not FragmentKind.FRAG1:
        raise ValueError("fragment train must start with a Frag1")
    state = seed_chain(key, fragments[0].payload, nonce, algorithm)
    first = fragments[0]
    first.header = dataclasses.replace(
        first.header, ext=ExtensionFields(trust_byte, nonce, chain_tag(state))
    )
    for frag in fragments[1:]:
        state, tag = next_hash(state, frag.payload)
        frag.header = dataclasses.replace(
            frag.header, ext=ExtensionFields(trust_byte, b"", tag)
        )
    return fragments


# Inputs for the published test vectors: a typical three-fragment
# train under the default group key, plus corner cases for key and
# payload lengths. Regenerated output must stay byte-stable.
_VECTOR_CASES = (
    (
        "three_fragment_chain",
        b"shared-group-key",
        (1).to_bytes(4, "big"),
        (bytes(range(96)), bytes(range(96, 192)), bytes(range(192, 200))),
    ),
    ("single_fragment", b"k", bytes.fromhex("deadbeef"), (b"hello world",)),
    (
        "empty_fragn_payload",
        b"another key 32 bytes long padded",
        bytes.fromhex("0a0b0c0d"),
        (b"first", b""),
    ),
    (
        "long_key_chain",
        b"x" * 100,
        b"\xff\xff\xff\xff",
        (b"alpha" * 8, b"beta" * 12, b"gamma" * 6, bytes(16)),
    ),
)


def reference_vectors() -> list[dict]:
    """Deterministic signature-chain test vectors as JSON-ready dicts."""
    out = []
    for name, key, nonce, payloads in _VECTOR_CASES:
        state = seed_chain(key, payloads[0], nonce)
        tags = [chain_tag(state).hex()]
        seed_digest = state.prev_hash.hex()
        for payload in payloads[1:]:
            state, tag = next_hash(state, payload)
            tags.append(tag.hex())
        out.append(
            {
                "name": name,
                "key": key.hex(),
                "nonce": nonce.hex(),
                "payloads": [p.hex() for p in payloads],
                "seed_digest": seed_digest,
                "wire_tags": tags,
            }
        )
    return out
