"""Closed-form companions to the simulator.

Small exact models of the trust recursion and of reassembly-buffer
contention, used to cross-check simulated trajectories and to predict
when a misbehaving neighbor crosses the blacklist threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

from .trust_engine import update_score


class ThetaNotBelowT0(ValueError):
    """The threshold must sit strictly below the starting score."""


def trust_closed_form(t0: float, lam: float, outcome: int, k: int) -> float:
    """Score after k identical outcomes: outcome + (t0 - outcome) * lam**k."""
    return outcome + (t0 - outcome) * lam**k


def trust_trajectory(t0: float, lam: float, outcomes) -> list[float]:
    """Iterate the trust recursion; element 0 is the starting score.

    Uses the engine's own update step so the sequence is bit-identical
    to what a running node would compute.
    """
    scores = [t0]
    for outcome in outcomes:
        scores.append(update_score(scores[-1], lam, outcome))
    return scores


def steps_to_blacklist(t0: float, lam: float, theta: float) -> int:
    """Consecutive failures needed to push the score below the threshold.

    Counts iterations of the recursion rather than inverting the
    logarithm, so the answer agrees exactly with trust_trajectory even
    at floating-point boundaries.
    """
    if not theta < t0:
        raise ThetaNotBelowT0(f"threshold {theta} must lie below starting score {t0}")
    score = t0
    steps = 0
    while score >= theta:
        score = update_score(score, lam, 0)
        steps += 1
    return steps


@dataclass(frozen=True)
class BufferModelParams:
    """Inputs to the buffer contention model.

    legit_rate and attack_rate are fragment arrivals per second, slots
    the number of concurrent reassembly sessions, timeout the eviction
    age in seconds.
    """

    legit_rate: float
    attack_rate: float
    slots: int
    timeout: float

    def __post_init__(self):
        if self.legit_rate < 0 or self.attack_rate < 0:
            raise ValueError("arrival rates must be nonnegative")
        if self.slots < 1:
            raise ValueError("slots must be at least 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


def buffer_availability_model(p: BufferModelParams) -> tuple[float, float]:
    """Contention ratio and availability, primary form.

    rho = min(1, (legit + attack) / (slots * timeout)) and
    availability = 1 - rho.  Dividing the arrival rate by the
    slot-timeout product treats a long eviction age as extra capacity;
    see occupancy_standard for the conventional offered-load form.
    """
    rho = min(1.0, (p.legit_rate + p.attack_rate) / (p.slots * p.timeout))
    return rho, 1.0 - rho


def occupancy_standard(p: BufferModelParams) -> float:
    """Offered load per slot: min(1, (legit + attack) * timeout / slots).

    The conventional form, with arrivals held for the full eviction
    age.  Legitimate trains release their slot as soon as they
    complete, far sooner than the timeout, so this bound saturates
    under realistic parameters.
    """
    return min(1.0, (p.legit_rate + p.attack_rate) * p.timeout / p.slots)
