"""Similarity-training pair generation.

A positive pair is two builds of the same source function (same repository,
defining file, and qualified name) differing in at least one requested
configuration axis; a negative pair is two functions with different source
identity. Singleton functions (no sibling under any other configuration)
can still serve as negative-pair members when include_singletons is set.
Streams are deterministic for a given (seed, arguments, dataset).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

from binforge_client.reader import ClientError, DatasetReader, FunctionProfile

VARY_AXES = ("compiler", "version", "opt", "arch")


class InfeasiblePairRequestError(ClientError):
    """The dataset cannot satisfy the request; carries the relevant counts."""

    def __init__(self, message: str, **counts: int):
        super().__init__(f"{message} ({', '.join(f'{k}={v}' for k, v in counts.items())})")
        self.counts = counts


@dataclass(frozen=True)
class Pair:
    anchor: int  # function_id
    other: int
    kind: str  # "positive" | "negative"


@dataclass(frozen=True)
class Triplet:
    anchor: int
    positive: int
    negative: int


def _axis_values(profile: FunctionProfile) -> dict[str, str]:
    return {
        "compiler": profile.compiler,
        "version": profile.version,
        "opt": profile.opt,
        "arch": profile.arch,
    }


def differs_on(a: FunctionProfile, b: FunctionProfile, vary_on: Sequence[str]) -> bool:
    av, bv = _axis_values(a), _axis_values(b)
    return any(av[axis] != bv[axis] for axis in vary_on)


def is_positive(a: FunctionProfile, b: FunctionProfile, vary_on: Sequence[str]) -> bool:
    return a.identity == b.identity and differs_on(a, b, vary_on)


def _validate_vary_on(vary_on: Sequence[str]) -> tuple[str, ...]:
    axes = tuple(vary_on)
    unknown = [axis for axis in axes if axis not in VARY_AXES]
    if unknown:
        raise ClientError(f"unknown vary_on axes {unknown}; valid: {VARY_AXES}")
    if not axes:
        raise ClientError("vary_on must name at least one axis")
    return axes


def enumerate_positive_pairs(
    profiles: Sequence[FunctionProfile], vary_on: Sequence[str]
) -> list[tuple[int, int]]:
    """All (function_id, function_id) positives, id-ordered within each pair,
    sorted; grouping by identity keeps this far below n^2 in practice."""
    axes = _validate_vary_on(vary_on)
    groups: dict[tuple, list[FunctionProfile]] = {}
    for profile in profiles:
        groups.setdefault(profile.identity, []).append(profile)
    pairs = []
    for members in groups.values():
        if len(members) < 2:
            continue
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                if differs_on(members[i], members[j], axes):
                    a, b = members[i].function_id, members[j].function_id
                    pairs.append((min(a, b), max(a, b)))
    pairs.sort()
    return pairs


def make_pairs(
    reader: DatasetReader,
    mode: str,
    vary_on: Sequence[str] = ("opt",),
    seed: int = 0,
    count: Optional[int] = None,
    include_singletons: bool = True,
) -> Iterator[Union[Pair, Triplet]]:
    """Yield pairs (or triplets) for similarity training.

    mode "positive": all positives when count is None, else a deterministic
    shuffle truncated to count. mode "negative": count sampled pairs with
    distinct source identity (count defaults to the positive-universe size).
    mode "triplet": anchors from shuffled positives plus a sampled negative
    counterpart for the anchor.
    """
    if mode not in ("positive", "negative", "triplet"):
        raise ClientError(f"unknown mode {mode!r}")
    axes = _validate_vary_on(vary_on)
    if reader.function_count() < 2:
        raise InfeasiblePairRequestError(
            "dataset has fewer than two functions", functions=reader.function_count()
        )
    profiles = reader.function_profiles()
    by_id = {p.function_id: p for p in profiles}
    rng = random.Random(seed)

    groups: dict[tuple, list[FunctionProfile]] = {}
    for profile in profiles:
        groups.setdefault(profile.identity, []).append(profile)
    sibling_counts = {identity: len(members) for identity, members in groups.items()}

    if mode in ("positive", "triplet"):
        positives = enumerate_positive_pairs(profiles, axes)
        if not positives:
            raise InfeasiblePairRequestError(
                "no positive pair satisfies the vary_on request",
                functions=len(profiles),
                identity_groups=len(groups),
                eligible_positives=0,
            )
        rng.shuffle(positives)

    negative_pool = [
        p for p in profiles if include_singletons or sibling_counts[p.identity] > 1
    ]
    distinct_identities = {p.identity for p in negative_pool}

    def sample_negative(anchor: Optional[FunctionProfile] = None) -> tuple[int, int]:
        for _ in range(10_000):
            a = anchor or rng.choice(negative_pool)
            b = rng.choice(negative_pool)
            if a.identity != b.identity:
                return a.function_id, b.function_id
        raise InfeasiblePairRequestError(
            "cannot sample a negative pair",
            pool=len(negative_pool),
            identities=len(distinct_identities),
        )

    if mode == "positive":
        selected = positives if count is None else positives[:count]
        for a, b in selected:
            yield Pair(a, b, "positive")
        return

    if mode == "negative":
        if len(distinct_identities) < 2:
            raise InfeasiblePairRequestError(
                "negatives need at least two source identities",
                identities=len(distinct_identities),
                pool=len(negative_pool),
            )
        total = count if count is not None else len(profiles)
        for _ in range(total):
            a, b = sample_negative()
            yield Pair(a, b, "negative")
        return

    # triplets
    if len(distinct_identities) < 2:
        raise InfeasiblePairRequestError(
            "triplets need at least two source identities",
            identities=len(distinct_identities),
        )
    total = count if count is not None else len(positives)
    for i in range(total):
        anchor_id, positive_id = positives[i % len(positives)]
        _, negative_id = sample_negative(by_id[anchor_id])
        yield Triplet(anchor_id, positive_id, negative_id)
