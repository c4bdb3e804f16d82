"""Reliability estimate and the tolerance matrix for a set of quorums."""

from __future__ import annotations

from dataclasses import dataclass


def k_tolerance(p_error: float, k: int) -> float:
    """Probability that at least one of ``k`` independently sourced ICs is sound."""
    if not 0.0 <= p_error <= 1.0:
        raise ValueError(f"p_error must be a probability, got {p_error}")
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    return 1.0 - p_error ** int(k)


@dataclass(frozen=True)
class Tolerance:
    leakage: int
    denial_of_service: int
    ic_failures: int


def tolerance(t: int, k: int, quorums: int = 1) -> Tolerance:
    """How many malicious or faulty ICs a deployment survives, per failure kind.

    ``t`` is the quorum size, ``k`` the secret-sharing threshold and ``quorums``
    the number of identical quorums holding the same key.  ``t == 1`` is the
    single-IC baseline.
    """
    if t < 1 or quorums < 1 or not 1 <= k <= t:
        raise ValueError("need 1 <= k <= t and at least one quorum")
    if k == t:
        return Tolerance(t - 1, 0, quorums - 1)
    return Tolerance(k - 1, t - k, (t - k) * quorums)
