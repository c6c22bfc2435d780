"""Accuracy/entropy measurement and per-round metric emission.

maj@k accuracy: sample k candidates per prompt, take the majority answer
(same vote rules as training), score 1 iff it is equivalent to the truth.
k=1 is plain sampled accuracy. Evaluation draws from dedicated substreams
("eval"/"eval-tie" scopes), so measuring never consumes training
randomness.

Metrics serialize to a flat CSV (round,split,metric,value) plus a JSON
summary naming the best round; floats are written with repr and re-read
exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .answers import equivalent
from .rewards import majority_vote, tie_break_stream
from .util import pmap, substream

__all__ = [
    "RoundReport",
    "maj_at_k",
    "make_eval_hook",
    "emit_metrics",
    "read_metrics",
    "best_round_of",
]

EquivFn = Callable[[str, str], bool]

CSV_HEADER = "round,split,metric,value"


@dataclass
class RoundReport:
    round_index: int
    maj1_acc: dict[str, float] = field(default_factory=dict)
    majk_acc: dict[str, float] = field(default_factory=dict)
    mean_entropy: dict[str, float] = field(default_factory=dict)
    objective: float = 0.0
    degenerate_prompts: int = 0


def maj_at_k(
    policy,
    prompts: Sequence[str],
    k: int,
    truth: Mapping[str, str],
    seed: int,
    equiv: EquivFn = equivalent,
    *,
    eval_samples: int = 1,
    round_index: int = 0,
    workers: int = 1,
) -> float:
    """Mean over prompts of 1[majority of k samples is the true answer].

    eval_samples repeats the k-draw and averages, trading eval cost for a
    tighter estimate; every (round, repeat, prompt) triple has its own
    substream.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if eval_samples < 1:
        raise ValueError("eval_samples must be >= 1")
    space = policy.space

    def score(prompt: str) -> float:
        hits = 0
        for rep in range(eval_samples):
            rng = substream(seed, "eval", round_index, rep, prompt)
            chains = policy.sample(prompt, k, rng)
            answers = [space.answer_of(prompt, c) for c in chains]
            tie_rng = tie_break_stream(
                seed, round_index, prompt, answers, equiv, scope=f"eval-tie:{rep}"
            )
            majority = majority_vote(answers, tie_rng, equiv)
            hits += 1 if equiv(majority, truth[prompt]) else 0
        return hits / eval_samples

    scores = pmap(score, prompts, workers)
    return float(sum(scores) / len(scores))


def make_eval_hook(
    splits: Mapping[str, Sequence[str]],
    truth: Mapping[str, str],
    k: int,
    seed: int,
    equiv: EquivFn = equivalent,
    *,
    eval_samples: int = 1,
    workers: int = 1,
):
    """Build the per-round measurement callback used by the training loop.

    The hook is the only place ground-truth labels enter a run; the update
    path never sees them.
    """

    def hook(round_index: int, policy, objective: float = 0.0, degenerate: int = 0) -> RoundReport:
        report = RoundReport(
            round_index=round_index, objective=objective, degenerate_prompts=degenerate
        )
        for split, prompts in splits.items():
            report.maj1_acc[split] = maj_at_k(
                policy, prompts, 1, truth, seed, equiv,
                eval_samples=eval_samples, round_index=round_index, workers=workers,
            )
            report.majk_acc[split] = maj_at_k(
                policy, prompts, k, truth, seed, equiv,
                eval_samples=eval_samples, round_index=round_index, workers=workers,
            )
            report.mean_entropy[split] = policy.mean_entropy(prompts)
        return report

    return hook


def _rows(report: RoundReport) -> list[tuple[int, str, str, float]]:
    rows = []
    for split in report.maj1_acc:
        rows.append((report.round_index, split, "maj1_acc", report.maj1_acc[split]))
        rows.append((report.round_index, split, "majk_acc", report.majk_acc[split]))
        rows.append((report.round_index, split, "mean_entropy", report.mean_entropy[split]))
    rows.append((report.round_index, "run", "objective", report.objective))
    rows.append((report.round_index, "run", "degenerate_prompts", float(report.degenerate_prompts)))
    return rows


def best_round_of(reports: Sequence[RoundReport], split: str = "train") -> int:
    """Round with the highest maj@k accuracy on the split; ties go earliest."""
    if not reports:
        raise ValueError("no reports")
    best = reports[0]
    for report in reports[1:]:
        if report.majk_acc.get(split, -1.0) > best.majk_acc.get(split, -1.0):
            best = report
    return best.round_index


def emit_metrics(reports: Sequence[RoundReport], csv_path, summary_path=None) -> None:
    """Write the metrics CSV (and JSON summary) for a finished run."""
    if not reports:
        raise ValueError("no reports to emit")
    lines = [CSV_HEADER]
    for report in reports:
        for round_index, split, metric, value in _rows(report):
            if "," in split or "," in metric:
                raise ValueError("split/metric names must not contain commas")
            lines.append(f"{round_index},{split},{metric},{value!r}")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    if summary_path is not None:
        best = best_round_of(reports)
        by_round = {r.round_index: r for r in reports}
        chosen = by_round[best]
        summary = {
            "best_round": best,
            "rounds": max(r.round_index for r in reports),
            "metrics": {
                split: {
                    "maj1_acc": chosen.maj1_acc[split],
                    "majk_acc": chosen.majk_acc[split],
                    "mean_entropy": chosen.mean_entropy[split],
                }
                for split in chosen.maj1_acc
            },
        }
        with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def read_metrics(csv_path) -> dict[int, dict[str, dict[str, float]]]:
    """Parse a metrics CSV back into {round: {split: {metric: value}}}."""
    with open(csv_path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{csv_path}: not a metrics CSV")
    out: dict[int, dict[str, dict[str, float]]] = {}
    for ln in lines[1:]:
        round_str, split, metric, value = ln.split(",", 3)
        out.setdefault(int(round_str), {}).setdefault(split, {})[metric] = float(value)
    return out
