"""Fragment-layer security toolkit for 6LoWPAN-style networks.

Provides a wire codec for fragmentation headers with a security
extension, a behavioral trust engine, chained-hash fragment
validation, a slot-based reassembly buffer, four protocol stack
variants, adversary traffic generators, and a deterministic
event-driven simulator with metrics and closed-form models.
"""

__version__ = "0.1.0"
