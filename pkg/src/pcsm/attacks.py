"""Adversary traffic generators.

Five repertoires against the reassembly buffer, each produced as a
time-sorted list of AttackEmission records.  An emission is a wire
recipe, not a finished frame: the simulator materializes it with the
extension layout of whichever stack variant is under test, consuming
no extra randomness, so one seed yields an identical adversary
schedule against every stack.

Attacks that rely on the adversary's own radio identity (everything
except header replay) are preceded by a low-rate warmup phase of
innocuous single-fragment datagrams, which builds a normal-looking
behavioral record before the attack turns on.  The header replay
builder instead captures recent first-fragment headers it observed
arriving at the root and re-emits them byte-exactly with fresh bogus
payloads.
"""

from __future__ import annotations

from dataclasses import dataclass

from .frag_codec import MAX_FRAGMENT_PAYLOAD, FragmentKind

ATTACK_KINDS = (
    "early_frag1",
    "complete_flooding",
    "header_replay",
    "burst_injection",
    "late_phase",
)

# tag range reserved for forged traffic so it never collides with the
# attacker's own warmup datagrams
_FORGED_TAG_BASE = 0x8000


@dataclass(frozen=True)
class ScheduledSend:
    """One legitimate datagram transmission, known to an omniscient adversary."""

    time: float
    source: int
    tag: int
    nonce: bytes
    payload: bytes
    # per-fragment channel fate at the root, index 0 is the first fragment
    lost: tuple[bool, ...] = ()

    @property
    def fragment_count(self) -> int:
        return -(-len(self.payload) // MAX_FRAGMENT_PAYLOAD)


@dataclass(frozen=True)
class AttackEmission:
    """A single frame the adversary puts on the air."""

    time: float
    kind: FragmentKind
    claimed_source: int
    datagram_size: int
    tag: int
    offset: int = 0
    payload: bytes = b""
    nonce: bytes = b""
    sig: bytes = bytes(8)
    # set when replaying a captured header: the original first-fragment
    # payload, needed to reconstruct the signature the victim sent
    replayed_payload: bytes | None = None


@dataclass(frozen=True)
class AttackSpec:
    """Which attack runs, when, and with what intensity."""

    kind: str
    attacker: int = 9
    start: float = 900.0
    forged_size: int = 200
    warmup_interval: float = 90.0
    warmup_start: float = 50.0
    warmup_bytes: int = 64
    # early_frag1: salvo of forged reservations just before each victim send
    early_lead: float = 0.005
    salvo_size: int = 12
    salvo_spacing: float = 0.0004
    # complete_flooding: well-formed garbage trains
    flood_interval: float = 1.5
    flood_bytes: int = 960
    flood_pacing: float = 0.1
    # header_replay: captured first-fragment headers, round-robin
    replay_interval: float = 3.0
    replay_pool: int = 4
    # burst_injection: sustained forged reservations
    burst_rate: float = 6.0
    # late_phase: orphan continuation fragments trailing each victim send
    late_lag: float = 0.05
    late_orphans: int = 16
    late_spacing: float = 0.1


class _TagCounter:
    def __init__(self, base: int = _FORGED_TAG_BASE):
        self.next_tag = base

    def take(self) -> int:
        tag = self.next_tag
        self.next_tag = (self.next_tag + 1) % 0x10000 or _FORGED_TAG_BASE
        return tag


def _warmup_emissions(spec: AttackSpec, rng, tags: _TagCounter) -> list[AttackEmission]:
    out = []
    t = spec.warmup_start
    while t < spec.start:
        payload = rng.randbytes(spec.warmup_bytes)
        out.append(
            AttackEmission(
                time=t,
                kind=FragmentKind.FRAG1,
                claimed_source=spec.attacker,
                datagram_size=len(payload),
                tag=tags.take(),
                payload=payload,
                nonce=rng.randbytes(4),
                sig=rng.randbytes(8),
            )
        )
        t += spec.warmup_interval
    return out


def _forged_frag1(spec: AttackSpec, rng, tags: _TagCounter, when: float) -> AttackEmission:
    return AttackEmission(
        time=when,
        kind=FragmentKind.FRAG1,
        claimed_source=spec.attacker,
        datagram_size=spec.forged_size,
        tag=tags.take(),
        payload=rng.randbytes(MAX_FRAGMENT_PAYLOAD),
        nonce=rng.randbytes(4),
        sig=rng.randbytes(8),
    )


def build_early_frag1(spec, legit_sends, duration, rng):
    """Salvo of forged buffer reservations just ahead of each victim transmission."""
    tags = _TagCounter()
    out = _warmup_emissions(spec, rng, tags)
    for send in legit_sends:
        if send.time < spec.start or send.time >= duration:
            continue
        t0 = send.time - spec.early_lead
        for k in range(spec.salvo_size):
            out.append(_forged_frag1(spec, rng, tags, t0 + k * spec.salvo_spacing))
    out.sort(key=lambda e: e.time)
    return out


def build_complete_flooding(spec, legit_sends, duration, rng):
    """Full well-formed fragment trains with garbage payloads and signatures."""
    tags = _TagCounter()
    out = _warmup_emissions(spec, rng, tags)
    t = spec.start
    while t < duration:
        tag = tags.take()
        nonce = rng.randbytes(4)
        body = rng.randbytes(spec.flood_bytes)
        for j in range(0, len(body), MAX_FRAGMENT_PAYLOAD):
            chunk = body[j : j + MAX_FRAGMENT_PAYLOAD]
            out.append(
                AttackEmission(
                    time=t + (j // MAX_FRAGMENT_PAYLOAD) * spec.flood_pacing,
                    kind=FragmentKind.FRAG1 if j == 0 else FragmentKind.FRAGN,
                    claimed_source=spec.attacker,
                    datagram_size=len(body),
                    tag=tag,
                    offset=j // 8,
                    payload=chunk,
                    nonce=nonce if j == 0 else b"",
                    sig=rng.randbytes(8),
                )
            )
        t += spec.flood_interval
    out.sort(key=lambda e: e.time)
    return out


def build_header_replay(spec, legit_sends, duration, rng):
    """Byte-exact re-emission of recently observed first-fragment headers.

    The adversary sniffs next to the root, so only headers whose first
    fragment actually arrived there enter the capture pool.  Each
    replay pairs the stolen header with a fresh bogus payload.
    """
    observed = [
        s for s in legit_sends
        if not (s.lost and s.lost[0])
    ]
    out = []
    t = spec.start
    n = 0
    while t < duration:
        pool = [s for s in observed if s.time < t][-spec.replay_pool:]
        if pool:
            victim = pool[n % len(pool)]
            out.append(
                AttackEmission(
                    time=t,
                    kind=FragmentKind.FRAG1,
                    claimed_source=victim.source,
                    datagram_size=len(victim.payload),
                    tag=victim.tag,
                    payload=rng.randbytes(
                        min(MAX_FRAGMENT_PAYLOAD, len(victim.payload))
                    ),
                    nonce=victim.nonce,
                    replayed_payload=victim.payload[:MAX_FRAGMENT_PAYLOAD],
                )
            )
            n += 1
        t += spec.replay_interval
    return out


def build_burst_injection(spec, legit_sends, duration, rng):
    """Sustained stream of forged reservations at a fixed rate."""
    tags = _TagCounter()
    out = _warmup_emissions(spec, rng, tags)
    n = 0
    while True:
        t = spec.start + n / spec.burst_rate
        if t >= duration:
            break
        out.append(_forged_frag1(spec, rng, tags, t))
        n += 1
    return out


def build_late_phase(spec, legit_sends, duration, rng):
    """Bursts of orphan continuation fragments trailing each victim send."""
    tags = _TagCounter()
    out = _warmup_emissions(spec, rng, tags)
    for send in legit_sends:
        if send.time < spec.start or send.time >= duration:
            continue
        for j in range(spec.late_orphans):
            out.append(
                AttackEmission(
                    time=send.time + spec.late_lag + j * spec.late_spacing,
                    kind=FragmentKind.FRAGN,
                    claimed_source=spec.attacker,
                    datagram_size=spec.forged_size,
                    tag=tags.take(),
                    offset=MAX_FRAGMENT_PAYLOAD // 8,
                    payload=rng.randbytes(MAX_FRAGMENT_PAYLOAD),
                    sig=rng.randbytes(8),
                )
            )
    out.sort(key=lambda e: e.time)
    return out


BUILDERS = {
    "early_frag1": build_early_frag1,
    "complete_flooding": build_complete_flooding,
    "header_replay": build_header_replay,
    "burst_injection": build_burst_injection,
    "late_phase": build_late_phase,
}


def build_attack(spec: AttackSpec, legit_sends, duration: float, rng) -> list[AttackEmission]:
    """Dispatch to the builder for spec.kind."""
    try:
        builder = BUILDERS[spec.kind]
    except KeyError:
        raise ValueError(f"unknown attack kind: {spec.kind!r}") from None
    ems = builder(spec, legit_sends, duration, rng)
    return [e for e in ems if e.time < duration]
