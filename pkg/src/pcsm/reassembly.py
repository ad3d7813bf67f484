"""Slot-based reassembly with the full security admission pipeline.

The buffer itself is plain mechanics: a fixed number of slots, one
in-progress datagram per slot, timeout eviction, and occupancy
statistics.  On top of it, PredictiveCsmStack wires the admission
order for first fragments:

  blocked source -> replay ledger -> behavioral screening -> slot

and for continuation fragments:

  open session -> chained-signature check -> store / deliver

Drops never raise; every fragment ends in exactly one disposition so
per-node accounting stays conserved (received = buffered + delivered +
dropped).  Continuation fragments validate strictly in sender order:
links here are FIFO and there is no retransmission, so a gap can never
fill and holding out-of-order fragments would only buy buffer bytes
for traffic that already failed the chain.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum

from .frag_codec import Fragment, FragmentKind, NONCE_LEN
from .hash_chain import HashChainState, seed_chain, validate_fragment
from .trust_engine import ObservationTracker, TrustEngine, TrustParams

# CPU milliseconds charged per keyed-hash operation (seed or verify).
HASH_CPU_MS = 0.5


class DropReason(str, Enum):
    UNTRUSTED = "untrusted"
    REPLAY = "replay"
    BAD_SIGNATURE = "bad_signature"
    DUPLICATE = "duplicate"
    BUFFER_FULL = "buffer_full"
    NO_SESSION = "no_session"
    TIMEOUT = "timeout"


# Reasons that mean "rejected by a security gate before buffering".
# Structural drops (duplicate collision, no session, full buffer,
# timeout) are not gates: a stack with no defenses still produces those.
GATE_REASONS = frozenset({DropReason.UNTRUSTED, DropReason.REPLAY, DropReason.BAD_SIGNATURE})


class AdmitStatus(Enum):
    STORED = "stored"
    DELIVERED = "delivered"
    DROPPED = "dropped"


@dataclass
class AdmitResult:
    status: AdmitStatus
    reason: DropReason | None = None
    payload: bytes | None = None
    cpu_ms: float = 0.0
    # fragments released by a delivery, for the caller's accounting
    fragments: list[Fragment] = field(default_factory=list)


def _dropped(reason: DropReason, cpu_ms: float = 0.0) -> AdmitResult:
    return AdmitResult(AdmitStatus.DROPPED, reason=reason, cpu_ms=cpu_ms)


class ReplayLedger:
    """Recently admitted (source, tag, nonce) triples with expiry.

    A hit refreshes the entry: a triple being replayed is exactly the
    one worth remembering.  Capacity eviction is FIFO by insertion.
    """

    def __init__(self, horizon: float = 60.0, capacity: int = 64):
        self.horizon = horizon
        self.capacity = capacity
        self.entries: OrderedDict[tuple[int, int, bytes], float] = OrderedDict()

    def _purge(self, now: float) -> None:
        dead = [k for k, expiry in self.entries.items() if expiry <= now]
        for k in dead:
            del self.entries[k]

    def seen(self, source: int, tag: int, nonce: bytes, now: float) -> bool:
        self._purge(now)
        key = (source, tag, nonce)
        if key in self.entries:
            self.entries[key] = now + self.horizon
            return True
        return False

    def record(self, source: int, tag: int, nonce: bytes, now: float) -> None:
        self._purge(now)
        self.entries[(source, tag, nonce)] = now + self.horizon
        while len(self.entries) > self.capacity:
            self.entries.popitem(last=False)


@dataclass
class ReassemblySession:
    source: int
    tag: int
    expected_size: int
    started_at: float
    nonce: bytes
    chain: HashChainState | None
    received: dict[int, bytes] = field(default_factory=dict)
    fragments: list[Fragment] = field(default_factory=list)
    received_bytes: int = 0

    def store(self, frag: Fragment) -> None:
        self.received[frag.header.datagram_offset] = frag.payload
        self.fragments.append(frag)
        self.received_bytes += len(frag.payload)

    @property
    def complete(self) -> bool:
        return self.received_bytes == self.expected_size

    def assemble(self) -> bytes:
        return b"".join(self.received[o] for o in sorted(self.received))


class ReassemblyBuffer:
    """Fixed-slot session store with timeout eviction and occupancy stats."""

    def __init__(self, slots: int = 2, timeout: float = 10.0):
        self.slots = slots
        self.timeout = timeout
        self.sessions: dict[tuple[int, int], ReassemblySession] = {}
        self.max_occupancy = 0
        self._busy_integral = 0.0
        self._stat_clock = 0.0

    def advance(self, now: float) -> None:
        """Accumulate occupancy-time up to `now` (call before mutating)."""
        dt = now - self._stat_clock
        if dt > 0:
            self._busy_integral += len(self.sessions) * dt
            self._stat_clock = now

    def availability(self) -> float:
        return (self.slots - len(self.sessions)) / self.slots

    def mean_availability(self) -> float:
        """Time-averaged fraction of free slots since the start."""
        if self._stat_clock <= 0:
            return 1.0
        return 1.0 - self._busy_integral / (self.slots * self._stat_clock)

    def find(self, source: int, tag: int) -> ReassemblySession | None:
        return self.sessions.get((source, tag))

    def has_free_slot(self) -> bool:
        return len(self.sessions) < self.slots

    def open(self, session: ReassemblySession) -> None:
        if not self.has_free_slot():
            raise RuntimeError("no free slot; callers must check first")
        self.sessions[(session.source, session.tag)] = session
        self.max_occupancy = max(self.max_occupancy, len(self.sessions))

    def close(self, session: ReassemblySession) -> None:
        self.sessions.pop((session.source, session.tag), None)

    def evict_expired(self, now: float) -> list[ReassemblySession]:
        expired = [
            s for s in self.sessions.values() if s.started_at + self.timeout < now and not s.complete
        ]
        for s in expired:
            self.close(s)
        return expired

    def purge_source(self, source: int) -> list[ReassemblySession]:
        purged = [s for s in self.sessions.values() if s.source == source]
        for s in purged:
            self.close(s)
        return purged

    def flush(self) -> list[ReassemblySession]:
        remaining = list(self.sessions.values())
        self.sessions.clear()
        return remaining


class PredictiveCsmStack:
    """Receiver pipeline combining trust gate, replay ledger and chain checks.

    Design notes, where behavior is not obvious from the structure:

    - The replay ledger is consulted before behavioral screening and a
      hit carries no trust penalty: replayed headers name a spoofed
      victim, and punishing the victim would let an attacker talk a
      legitimate neighbor onto the blacklist.
    - A behaviorally anomalous first fragment is refused admission even
      when the source still sits above the trust threshold.  The score
      drop is gradual by design; quarantining the anomalous arrival
      itself keeps the slot from being reserved by traffic the engine
      already considers suspicious.
    - First-fragment signatures are not checked at admission (there is
      no chain state yet to check against; the seed digest doubles as
      the stamp).  A single-fragment datagram therefore delivers on the
      strength of trust and replay checks alone.
    - Orphan continuation fragments are penalized: with FIFO links and
      no retransmission, a continuation with no session is either an
      injection or the tail of traffic that already failed.
    - When a source crosses onto the blacklist its open sessions are
      purged immediately (counted as timeouts, with no extra penalty).
    """

    def __init__(
        self,
        key: bytes,
        trust_params: TrustParams | None = None,
        slots: int = 2,
        timeout: float = 10.0,
        replay_horizon: float = 60.0,
        replay_capacity: int = 64,
        keep_trust_history: bool = False,
    ):
        self.key = key
        params = trust_params or TrustParams()
        self.engine = TrustEngine(params, keep_history=keep_trust_history)
        self.tracker = ObservationTracker(params.nominal_interval)
        self.ledger = ReplayLedger(replay_horizon, replay_capacity)
        self.buffer = ReassemblyBuffer(slots, timeout)
        # sessions evicted outside tick() (blacklist purges), drained by the caller
        self.evictions: list[ReassemblySession] = []

    def filter_frame(self, frag: Fragment, now: float) -> bool:
        """Radio-level filter: True when the source is blacklisted.

        Filtered frames never reach the stack proper (no RX or CPU cost
        for the receiver), but the contact still refreshes the block
        and the source's timing track.
        """
        src = frag.source
        if not self.engine.is_blocked(src, now):
            return False
        self.engine.note_blocked_contact(src, now)
        if frag.header.kind is FragmentKind.FRAG1:
            self.tracker.touch(src, now)
        return True

    def _purge_if_blocked(self, source: int, now: float) -> None:
        if self.engine.is_blocked(source, now):
            self.evictions.extend(self.buffer.purge_source(source))

    def admit(self, frag: Fragment, now: float) -> AdmitResult:
        self.buffer.advance(now)
        if self.filter_frame(frag, now):
            return _dropped(DropReason.UNTRUSTED)
        if frag.header.kind is FragmentKind.FRAG1:
            return self._admit_frag1(frag, now)
        return self._admit_fragn(frag, now)

    def _admit_frag1(self, frag: Fragment, now: float) -> AdmitResult:
        src = frag.source
        tag = frag.header.datagram_tag
        ext = frag.header.ext
        nonce = ext.nonce if ext is not None else bytes(NONCE_LEN)

        if self.ledger.seen(src, tag, nonce, now) or self.buffer.find(src, tag) is not None:
            return _dropped(DropReason.REPLAY)

        obs = self.tracker.observe_frag1(src, tag, now)
        accept, anomalous = self.engine.evaluate_frag1(src, obs, now)
        if not accept or anomalous:
            self._purge_if_blocked(src, now)
            return _dropped(DropReason.UNTRUSTED)
        if not self.buffer.has_free_slot():
            return _dropped(DropReason.BUFFER_FULL)

        self.ledger.record(src, tag, nonce, now)
        chain = seed_chain(self.key, frag.payload, nonce)
        size = frag.header.datagram_size
        session = ReassemblySession(src, tag, size, now, nonce, chain)
        session.store(frag)
        if session.complete:
            self.engine.reward(src, now)
            return AdmitResult(
                AdmitStatus.DELIVERED,
                payload=session.assemble(),
                cpu_ms=HASH_CPU_MS,
                fragments=session.fragments,
            )
        self.buffer.open(session)
        return AdmitResult(AdmitStatus.STORED, cpu_ms=HASH_CPU_MS)

    def _admit_fragn(self, frag: Fragment, now: float) -> AdmitResult:
        src = frag.source
        session = self.buffer.find(src, frag.header.datagram_tag)
        if session is None:
            self.engine.penalize(src, now)
            self._purge_if_blocked(src, now)
            return _dropped(DropReason.NO_SESSION)
        ext = frag.header.ext
        signature = ext.signature if ext is not None else b""
        ok, chain = validate_fragment(session.chain, frag.payload, signature)
        if not ok:
            self.engine.penalize(src, now)
            self.tracker.note_violation(src)
            self._purge_if_blocked(src, now)
            return _dropped(DropReason.BAD_SIGNATURE, cpu_ms=HASH_CPU_MS)
        session.chain = chain
        session.store(frag)
        if session.complete:
            self.buffer.close(session)
            self.engine.reward(src, now)
            return AdmitResult(
                AdmitStatus.DELIVERED,
                payload=session.assemble(),
                cpu_ms=HASH_CPU_MS,
                fragments=session.fragments,
            )
        return AdmitResult(AdmitStatus.STORED, cpu_ms=HASH_CPU_MS)

    def tick(self, now: float) -> list[ReassemblySession]:
        """Evict expired sessions, penalizing each source once."""
        self.buffer.advance(now)
        evicted = self.buffer.evict_expired(now)
        for session in evicted:
            self.engine.penalize(session.source, now)
            self._purge_if_blocked(session.source, now)
        evicted.extend(self.drain_evictions())
        return evicted

    def flush(self, now: float) -> list[ReassemblySession]:
        """End of run: evict everything still incomplete."""
        self.buffer.advance(now)
        remaining = self.buffer.flush()
        for session in remaining:
            self.engine.penalize(session.source, now)
        remaining.extend(self.drain_evictions())
        return remaining

    def drain_evictions(self) -> list[ReassemblySession]:
        drained = self.evictions
        self.evictions = []
        return drained
