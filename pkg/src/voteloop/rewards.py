"""Majority-vote pseudo-labels, indicator rewards, and reward transforms.

Candidates for a prompt are grouped into answer-equivalence classes (so
"0.5" and "\\frac{1}{2}" vote together); the class with the most votes is
the pseudo-label, and each candidate earns reward 1 iff its answer belongs
to that class. Ties are broken by a seeded uniform draw over the tied
classes; the recommended stream is keyed on (round, prompt, answer
multiset) rather than candidate order, so permuting candidates can never
change the outcome.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .answers import equivalent
from .util import substream

__all__ = [
    "CandidateSet",
    "RewardTransform",
    "identity_transform",
    "exponential_transform",
    "baseline_shifted_transform",
    "apply_transform",
    "log_transform",
    "equivalence_classes",
    "class_key",
    "majority_vote",
    "score_candidates",
    "tie_break_stream",
]

EquivFn = Callable[[str, str], bool]

_KINDS = ("identity", "exponential", "baseline_shifted")


@dataclass(frozen=True)
class RewardTransform:
    """Increasing map applied to 0/1 rewards before the weighted-MLE step.

    kinds: identity (weight = reward), exponential (exp(reward / beta)),
    baseline_shifted (exp((reward - baseline) / beta), where the baseline is
    the previous round's reward and 0 in the first round).
    """

    kind: str
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "identity":
            if self.beta is not None:
                raise ValueError("identity transform takes no beta")
        elif self.beta is None or not (self.beta > 0):
            raise ValueError(f"{self.kind} transform requires beta > 0")


def identity_transform() -> RewardTransform:
    return RewardTransform("identity")


def exponential_transform(beta: float) -> RewardTransform:
    return RewardTransform("exponential", beta)


def baseline_shifted_transform(beta: float) -> RewardTransform:
    return RewardTransform("baseline_shifted", beta)


def _baseline(prev_reward: float | None, round_index: int) -> float:
    # The baseline is the reward under the policy of the previous round;
    # no previous round exists at round 1, so the baseline starts at 0.
    if round_index < 1:
        raise ValueError("round_index starts at 1")
    if round_index >= 2:
        if prev_reward is None:
            raise ValueError(
                "baseline_shifted transform needs prev_reward from round 2 on"
            )
        return float(prev_reward)
    return 0.0


def log_transform(
    transform: RewardTransform,
    reward: float,
    prev_reward: float | None = None,
    round_index: int = 1,
) -> float:
    """log of the transformed reward; -inf encodes an exact zero weight."""
    if transform.kind == "identity":
        return math.log(reward) if reward > 0 else -math.inf
    if transform.kind == "exponential":
        return reward / transform.beta
    base = _baseline(prev_reward, round_index)
    return (reward - base) / transform.beta


def apply_transform(
    transform: RewardTransform,
    reward: float,
    prev_reward: float | None = None,
    round_index: int = 1,
) -> float:
    """Transformed reward as a linear-space weight (see log_transform)."""
    if transform.kind == "identity":
        return float(reward)
    return math.exp(log_transform(transform, reward, prev_reward, round_index))


def equivalence_classes(answers: Sequence[str], equiv: EquivFn = equivalent) -> list[list[int]]:
    """Group positions of `answers` by pairwise equivalence (union-find).

    Identical strings are pooled up front, so the quadratic pairwise pass
    runs over distinct strings only; large candidate lists with few distinct
    answers stay cheap.
    """
    distinct: dict[str, list[int]] = {}
    for i, a in enumerate(answers):
        distinct.setdefault(a, []).append(i)
    keys = list(distinct)
    parent = list(range(len(keys)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            ri, rj = find(i), find(j)
            if ri != rj and equiv(keys[i], keys[j]):
                parent[rj] = ri
    groups: dict[int, list[int]] = {}
    for i, key in enumerate(keys):
        groups.setdefault(find(i), []).extend(distinct[key])
    return [sorted(members) for members in groups.values()]


def class_key(answers: Sequence[str], members: Sequence[int]) -> str:
    """Canonical representative of a class: its lexicographically least member."""
    return min(answers[i] for i in members)


def majority_vote(
    answers: Sequence[str],
    rng: np.random.Generator,
    equiv: EquivFn = equivalent,
) -> str:
    """Representative of the most frequent answer-equivalence class.

    A tie draws uniformly (via rng) over the tied classes sorted by their
    canonical keys, so the winner depends on the answer multiset and the
    stream state only, never on input order.
    """
    if len(answers) == 0:
        raise ValueError("majority_vote needs at least one answer")
    classes = equivalence_classes(answers, equiv)
    counted = sorted((class_key(answers, m), len(m)) for m in classes)
    best = max(count for _, count in counted)
    tied = [key for key, count in counted if count == best]
    if len(tied) == 1:
        return tied[0]
    return tied[int(rng.integers(len(tied)))]


def tie_break_stream(
    seed: int,
    round_index: int,
    prompt: str,
    answers: Sequence[str],
    equiv: EquivFn = equivalent,
    scope: str = "tie",
) -> np.random.Generator:
    """Tie-break stream keyed on (round, prompt, sorted answer-class multiset).

    Keying on the class multiset instead of candidate order makes the drawn
    winner invariant under permutation of the candidates. `scope` separates
    training ties from evaluation ties under one seed.
    """
    classes = equivalence_classes(answers, equiv)
    multiset = sorted((class_key(answers, m), len(m)) for m in classes)
    tags = [f"{key}#{count}" for key, count in multiset]
    return substream(seed, scope, round_index, prompt, *tags)


@dataclass(frozen=True)
class CandidateSet:
    """k scored candidates for one prompt."""

    prompt: str
    candidates: tuple[tuple[str, str], ...]  # (chain-id, answer)
    majority: str
    rewards: tuple[int, ...]

    def __post_init__(self):
        if len(self.candidates) == 0:
            raise ValueError("CandidateSet needs at least one candidate")
        if len(self.rewards) != len(self.candidates):
            raise ValueError("rewards and candidates length mismatch")

    @property
    def k(self) -> int:
        return len(self.candidates)


def score_candidates(
    candidates: Sequence[tuple[str, str]],
    rng: np.random.Generator,
    equiv: EquivFn = equivalent,
    prompt: str = "",
) -> CandidateSet:
    """Vote over the candidates' answers and attach indicator rewards."""
    if len(candidates) == 0:
        raise ValueError("score_candidates needs at least one candidate")
    answers = [answer for _, answer in candidates]
    majority = majority_vote(answers, rng, equiv)
    verdict = {a: (1 if equiv(a, majority) else 0) for a in set(answers)}
    rewards = tuple(verdict[answer] for answer in answers)
    return CandidateSet(
        prompt=prompt,
        candidates=tuple((chain, answer) for chain, answer in candidates),
        majority=majority,
        rewards=rewards,
    )
