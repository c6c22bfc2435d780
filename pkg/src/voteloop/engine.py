"""Round loop: generate candidates, score votes, update offline, early-stop.

Each round samples k candidates per prompt from the current policy, votes,
attaches transformed-reward weights, and solves the weighted-MLE update:
exactly (closed form) for the tabular backend, by gradient ascent on logits
for the softmax backend. Generation and training are strictly separated;
rounds are sequential, prompts within a round are independent.

Early stopping watches train maj@k accuracy from the eval hook -- the one
place ground-truth labels are consulted; the update path itself is fully
label-free.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .answers import equivalent
from .metrics import RoundReport
from .optim import (
    GradientConfig,
    WeightedSample,
    solve_gradient,
    tilt_distribution,
)
from .policy import PromptSpace, SoftmaxPolicy, TabularPolicy, save_policy
from .rewards import (
    RewardTransform,
    log_transform,
    score_candidates,
    tie_break_stream,
)
from .util import pmap, substream

__all__ = [
    "RunConfig",
    "PromptRecord",
    "OfflineDataset",
    "RunResult",
    "generate_round",
    "run",
]

EquivFn = Callable[[str, str], bool]

LABEL_NOTE = (
    "early stopping and best-round selection read train accuracy from the "
    "eval hook (which holds the labels); the generation/update path is "
    "label-free"
)


@dataclass(frozen=True)
class RunConfig:
    """Knobs for one training run; defaults give the standard recipe."""

    k: int = 10
    rounds: int = 15
    patience: int = 5
    epochs: int = 3
    transform: str = "identity"
    beta: float = 0.1
    seed: int = 0
    backend: str = "tabular"
    warm_start: bool = True
    eval_k: int | None = None
    eval_samples: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.k < 1 or self.rounds < 1 or self.patience < 1 or self.epochs < 1:
            raise ValueError("k, rounds, patience, and epochs must all be >= 1")
        if self.backend not in ("tabular", "softmax"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.transform not in ("identity", "exponential", "baseline_shifted"):
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.transform != "identity" and not (self.beta > 0):
            raise ValueError("beta must be positive for exponential transforms")

    def reward_transform(self) -> RewardTransform:
        if self.transform == "identity":
            return RewardTransform("identity")
        return RewardTransform(self.transform, self.beta)


@dataclass(frozen=True)
class PromptRecord:
    candidates: tuple[tuple[str, str], ...]  # (chain-id, answer)
    rewards: tuple[int, ...]
    log_weights: tuple[float, ...]
    majority: str


@dataclass
class OfflineDataset:
    """One round's generation output. round_index names the generating
    policy (0 for the base policy)."""

    round_index: int
    records: dict[str, PromptRecord]

    def weighted_samples(self, prompt_order) -> list[WeightedSample]:
        samples = []
        for prompt in prompt_order:
            rec = self.records[prompt]
            for (chain, _), lw in zip(rec.candidates, rec.log_weights):
                samples.append(WeightedSample(prompt, chain, lw))
        return samples

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for prompt, rec in self.records.items():
                for idx, ((chain, answer), reward, lw) in enumerate(
                    zip(rec.candidates, rec.rewards, rec.log_weights)
                ):
                    fh.write(
                        json.dumps(
                            {
                                "round": self.round_index,
                                "prompt": prompt,
                                "candidate": idx,
                                "chain": chain,
                                "answer": answer,
                                "reward": reward,
                                "log_weight": None if lw == -math.inf else lw,
                            }
                        )
                        + "\n"
                    )

    @classmethod
    def load(cls, path, equiv: EquivFn = equivalent) -> "OfflineDataset":
        rows: dict[str, list[tuple[int, str, str, int, float]]] = {}
        round_index = 0
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                round_index = int(rec["round"])
                lw = rec["log_weight"]
                rows.setdefault(rec["prompt"], []).append(
                    (
                        int(rec["candidate"]),
                        rec["chain"],
                        rec["answer"],
                        int(rec["reward"]),
                        -math.inf if lw is None else float(lw),
                    )
                )
        records = {}
        for prompt, entries in rows.items():
            entries.sort()
            candidates = tuple((chain, answer) for _, chain, answer, _, _ in entries)
            rewards = tuple(r for *_, r, _ in entries)
            majority = next(
                answer for _, _, answer, r, _ in entries if r == 1
            )
            records[prompt] = PromptRecord(
                candidates=candidates,
                rewards=rewards,
                log_weights=tuple(lw for *_, lw in entries),
                majority=majority,
            )
        return cls(round_index=round_index, records=records)


def generate_round(
    policy,
    prompts: PromptSpace,
    k: int,
    seed: int,
    equiv: EquivFn = equivalent,
    *,
    transform: RewardTransform = RewardTransform("identity"),
    round_index: int = 1,
    prev_majority: dict[str, str] | None = None,
    workers: int = 1,
) -> OfflineDataset:
    """Sample k candidates per prompt, vote, and attach transform log-weights.

    Deterministic given the seed: every prompt draws from its own
    (seed, round, prompt) substream, and tie-breaks hash the answer multiset.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if transform.kind == "baseline_shifted" and round_index >= 2 and prev_majority is None:
        raise ValueError("baseline_shifted needs prev_majority from round 2 on")

    def one(prompt: str) -> tuple[str, PromptRecord]:
        rng = substream(seed, "gen", round_index, prompt)
        chains = policy.sample(prompt, k, rng)
        answers = [prompts.answer_of(prompt, c) for c in chains]
        tie_rng = tie_break_stream(seed, round_index, prompt, answers, equiv)
        scored = score_candidates(list(zip(chains, answers)), tie_rng, equiv, prompt=prompt)
        log_weights = []
        for (_, answer), reward in zip(scored.candidates, scored.rewards):
            prev_reward = None
            if transform.kind == "baseline_shifted" and round_index >= 2:
                prev_reward = 1 if equiv(answer, prev_majority[prompt]) else 0
            log_weights.append(log_transform(transform, reward, prev_reward, round_index))
        record = PromptRecord(
            candidates=scored.candidates,
            rewards=scored.rewards,
            log_weights=tuple(log_weights),
            majority=scored.majority,
        )
        return prompt, record

    pairs = pmap(one, prompts.prompts, workers)
    return OfflineDataset(round_index=round_index - 1, records=dict(pairs))


@dataclass
class RunResult:
    reports: list[RoundReport]
    policies: list  # policy snapshot per round, index 0 = base
    best_round: int
    stopped_early: bool
    degenerate_events: list[tuple[int, str]] = field(default_factory=list)
    weight_history: list[dict[str, np.ndarray]] = field(default_factory=list)
    datasets: list[OfflineDataset] = field(default_factory=list)
    note: str = LABEL_NOTE

    @property
    def best_policy(self):
        return self.policies[self.best_round]

    @property
    def final_policy(self):
        return self.policies[-1]


def _chain_log_weights(
    space: PromptSpace,
    dataset: OfflineDataset,
    transform: RewardTransform,
    round_index: int,
    prev_majority: dict[str, str] | None,
    equiv: EquivFn,
) -> dict[str, np.ndarray]:
    """Exact per-chain log-weights implied by the sampled majority labels.

    The vote fixes the pseudo-label; the reward of *any* chain is then its
    answer's indicator against that label, so the tabular update can weight
    the full distribution, not just the drawn candidates.
    """
    out: dict[str, np.ndarray] = {}
    for prompt in space.prompts:
        majority = dataset.records[prompt].majority
        row = np.empty(len(space.chains(prompt)))
        for i, chain in enumerate(space.chains(prompt)):
            answer = space.answer_of(prompt, chain)
            reward = 1 if equiv(answer, majority) else 0
            prev_reward = None
            if transform.kind == "baseline_shifted" and round_index >= 2:
                prev_reward = 1 if equiv(answer, prev_majority[prompt]) else 0
            row[i] = log_transform(transform, reward, prev_reward, round_index)
        out[prompt] = row
    return out


def _update_tabular(
    policy: TabularPolicy,
    log_weights: dict[str, np.ndarray],
) -> tuple[TabularPolicy, list[str], float]:
    """Closed-form update with per-prompt degenerate freeze.

    A prompt whose weighted mass vanishes keeps its previous distribution
    (the update objective is undefined there); the prompt is reported, never
    silently dropped. Also returns the realized objective
    sum_c prev_p(c) * w(c) * log new_p(c).
    """
    table: dict[str, np.ndarray] = {}
    frozen: list[str] = []
    objective = 0.0
    for prompt in policy.space.prompts:
        prev = policy.distribution(prompt)
        try:
            new = tilt_distribution(prev, log_weights[prompt], log=True)
        except ValueError:
            table[prompt] = prev
            frozen.append(prompt)
            continue
        table[prompt] = new
        w = np.exp(log_weights[prompt])
        mask = (prev > 0) & (w > 0)
        objective += float(np.sum(prev[mask] * w[mask] * np.log(new[mask])))
    return TabularPolicy(policy.space, table), frozen, objective


def run(
    config: RunConfig,
    prompts: PromptSpace,
    pi0,
    eval_hook,
    *,
    equiv: EquivFn = equivalent,
    out_dir=None,
) -> RunResult:
    """Execute the full loop and return per-round reports plus checkpoints.

    Stops at config.rounds, or earlier once train maj@k accuracy has not
    strictly improved for config.patience consecutive rounds (counted from
    the first trained round). The best round maximizes train maj@k accuracy
    over all snapshots including the base policy; ties go to the earliest.
    """
    transform = config.reward_transform()
    if config.backend == "softmax" and not isinstance(pi0, SoftmaxPolicy):
        raise TypeError("softmax backend needs a SoftmaxPolicy start point")
    if config.backend == "tabular" and not isinstance(pi0, TabularPolicy):
        raise TypeError("tabular backend needs a TabularPolicy start point")

    checkpoints_dir = datasets_dir = None
    if out_dir is not None:
        checkpoints_dir = os.path.join(out_dir, "checkpoints")
        datasets_dir = os.path.join(out_dir, "datasets")
        os.makedirs(checkpoints_dir, exist_ok=True)
        os.makedirs(datasets_dir, exist_ok=True)

    def checkpoint(round_index: int, policy, dataset: OfflineDataset | None) -> None:
        if checkpoints_dir is not None:
            save_policy(policy, os.path.join(checkpoints_dir, f"round_{round_index:03d}.policy"))
        if datasets_dir is not None and dataset is not None:
            dataset.save(os.path.join(datasets_dir, f"round_{round_index:03d}.jsonl"))

    policy = pi0
    result = RunResult(reports=[], policies=[pi0], best_round=0, stopped_early=False)
    result.reports.append(eval_hook(0, pi0))
    checkpoint(0, pi0, None)

    best_trained_acc = -1.0
    stagnation = 0
    prev_majority: dict[str, str] | None = None

    for m in range(1, config.rounds + 1):
        dataset = generate_round(
            policy,
            prompts,
            config.k,
            config.seed,
            equiv,
            transform=transform,
            round_index=m,
            prev_majority=prev_majority,
            workers=config.workers,
        )
        result.datasets.append(dataset)

        degenerate: list[str] = []
        if config.backend == "tabular":
            log_w = _chain_log_weights(prompts, dataset, transform, m, prev_majority, equiv)
            result.weight_history.append(log_w)
            policy, degenerate, objective = _update_tabular(policy, log_w)
        else:
            samples = dataset.weighted_samples(prompts.prompts)
            start = policy if config.warm_start else pi0
            solver_config = GradientConfig(epochs=config.epochs)
            policy, solve_report = solve_gradient(start, samples, solver_config)
            objective = solve_report.objective_value

        for prompt in degenerate:
            result.degenerate_events.append((m, prompt))

        result.policies.append(policy)
        report = eval_hook(m, policy, objective, len(degenerate))
        result.reports.append(report)
        checkpoint(m, policy, dataset)
        prev_majority = {x: rec.majority for x, rec in dataset.records.items()}

        train_acc = report.majk_acc.get("train", 0.0)
        if train_acc > best_trained_acc:
            best_trained_acc = train_acc
            stagnation = 0
        else:
            stagnation += 1
        if stagnation >= config.patience:
            result.stopped_early = True
            break

    best = 0
    best_acc = result.reports[0].majk_acc.get("train", -1.0)
    for report in result.reports[1:]:
        acc = report.majk_acc.get("train", -1.0)
        if acc > best_acc:
            best, best_acc = report.round_index, acc
    result.best_round = best
    return result
