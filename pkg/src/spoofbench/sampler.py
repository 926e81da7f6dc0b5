"""Domain-proportional mini-batch construction.

Guarantees every domain contributes at least one record to every batch, so
the two-pass ascent direction is never computed from a subset of domains.
Per-domain counts start from floor(len_d / total * batch_size); the floor
can underfill the batch, so leftover slots go to the largest domains, and
the minimum-one clamp can overfill it, in which case slots are removed from
the largest domains (never below one).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .seeds import rng_for

__all__ = ["DomainPlan", "batch_counts", "make_batches"]


@dataclass(frozen=True)
class DomainPlan:
    """Samples per batch for each domain tag; counts sum to batch_size."""

    counts: dict[str, int]
    batch_size: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.batch_size:
            raise ValueError("plan counts must sum to batch_size")
        if any(c < 1 for c in self.counts.values()):
            raise ValueError("every planned domain needs count >= 1")


def batch_counts(domain_sizes: Mapping[str, int], batch_size: int) -> DomainPlan:
    """Proportional per-domain batch counts.

    Floors of the proportional share, clamped to >= 1 per domain; any
    remaining slots are handed to domains in descending size order (cycling),
    and any overshoot from clamping is taken back from the largest domains.
    """
    if not domain_sizes:
        raise ValueError("at least one domain required")
    if any(n < 1 for n in domain_sizes.values()):
        raise ValueError("all domain sizes must be >= 1")
    if batch_size < len(domain_sizes):
        raise ValueError(
            f"batch_size {batch_size} < number of domains {len(domain_sizes)}"
        )
    total = sum(domain_sizes.values())
    # descending size, tag as tie-break, so slot assignment is deterministic
    order = sorted(domain_sizes, key=lambda d: (-domain_sizes[d], d))
    counts = {d: max(1, domain_sizes[d] * batch_size // total) for d in order}

    i = 0
    while sum(counts.values()) < batch_size:
        counts[order[i % len(order)]] += 1
        i += 1
    i = 0
    while sum(counts.values()) > batch_size:
        d = order[i % len(order)]
        if counts[d] > 1:
            counts[d] -= 1
        i += 1
    return DomainPlan(counts=counts, batch_size=batch_size)


def make_batches(
    domains: Sequence[str], plan: DomainPlan, seed: int, epoch: int
) -> list[list[int]]:
    """Index batches over records with the given domain tags.

    Each domain's records are shuffled by a stream keyed (seed, domain,
    epoch), then consumed plan[d] per batch; exhausted domains wrap around
    their own shuffled order. Epoch length = max_d ceil(len_d / plan[d]),
    so every record of every domain appears at least once per epoch.
    """
    by_domain: dict[str, list[int]] = {}
    for i, d in enumerate(domains):
        by_domain.setdefault(d, []).append(i)
    missing = [d for d in plan.counts if d not in by_domain]
    if missing:
        raise ValueError(f"plan domains not present in records: {missing}")

    orders = {}
    for d, idx in by_domain.items():
        if d not in plan.counts:
            raise ValueError(f"records carry domain {d!r} absent from the plan")
        perm = rng_for(seed, f"batch/{d}/{epoch}").permutation(len(idx))
        orders[d] = [idx[j] for j in perm]

    n_batches = max(
        -(-len(by_domain[d]) // take) for d, take in plan.counts.items()
    )
    tags = sorted(plan.counts, key=lambda d: (-len(by_domain[d]), d))
    batches = []
    cursor = {d: 0 for d in tags}
    for _ in range(n_batches):
        batch = []
        for d in tags:
            order, n = orders[d], len(orders[d])
            at = cursor[d]
            batch.extend(order[(at + k) % n] for k in range(plan.counts[d]))
            cursor[d] = at + plan.counts[d]
        batches.append(batch)
    return batches
