"""Weighted maximum-likelihood solvers for policies.

The offline update at each round maximizes

    sum_over_samples  weight * log pi(chain | prompt)

per prompt. For tabular policies this has the closed form

    new_p(c)  proportional to  weight(c) * prev_p(c),

and iterating it for m rounds telescopes into the product form

    p_m(c)  proportional to  (prod_j weight_j(c)) * p_0(c),

which product_form_oracle evaluates directly as an independent check on
the iterated path. For softmax policies the same objective is ascended by
full-batch gradient steps with a monotone (backtracking) line search.

All products and normalizations run in log space with the usual max-shift,
so per-round exponential weights as sharp as exp(100) compose over many
rounds without overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .policy import SoftmaxPolicy, TabularPolicy
from .util import TINY_PROB

__all__ = [
    "DegeneratePromptError",
    "WeightedSample",
    "SolveReport",
    "GradientConfig",
    "tilt_distribution",
    "closed_form_update",
    "product_form_oracle",
    "weighted_mle_objective",
    "objective_gradient",
    "solve_gradient",
]


class DegeneratePromptError(ValueError):
    """No chain has both positive weight and positive prior mass."""

    def __init__(self, prompt: str):
        super().__init__(f"prompt {prompt!r}: weighted update has zero effective mass")
        self.prompt = prompt


@dataclass(frozen=True)
class WeightedSample:
    """One drawn (prompt, chain) with the log of its transformed reward.

    log_weight = -inf encodes an exactly-zero weight (identity transform on
    reward 0); such samples contribute exactly 0 to objectives/gradients.
    """

    prompt: str
    chain: str
    log_weight: float

    def __post_init__(self):
        if math.isnan(self.log_weight) or self.log_weight == math.inf:
            raise ValueError("log_weight must be finite or -inf")


@dataclass
class SolveReport:
    objective_value: float
    grad_norm: float
    iterations: int
    converged: bool
    note: str = ""
    objective_trace: list[float] = field(default_factory=list)


def _as_log(weights: np.ndarray, log: bool) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if log:
        if np.any(np.isnan(w)) or np.any(w == np.inf):
            raise ValueError("log-weights must be finite or -inf")
        return w
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    with np.errstate(divide="ignore"):
        return np.log(w)


def tilt_distribution(prev: np.ndarray, weights: np.ndarray, *, log: bool = False) -> np.ndarray:
    """normalize(weights * prev) for one prompt, computed in log space.

    Raises DegeneratePromptError-compatible ValueError when no entry has
    both positive weight and positive prior; callers decide the policy.
    """
    prev = np.asarray(prev, dtype=float)
    lw = _as_log(weights, log)
    if lw.shape != prev.shape:
        raise ValueError("weights and distribution shapes differ")
    with np.errstate(divide="ignore"):
        logp = np.where(prev > 0, np.log(prev), -np.inf)
    combined = lw + logp
    shift = combined.max()
    if shift == -np.inf:
        raise ValueError("zero effective mass")
    out = np.exp(combined - shift)
    out /= out.sum()
    small = (out < TINY_PROB) & (out > 0)
    if small.any():
        out[small] = 0.0
        out /= out.sum()
    return out


def closed_form_update(
    prev: TabularPolicy,
    weights: Mapping[str, Sequence[float]],
    *,
    log: bool = False,
) -> TabularPolicy:
    """Exact solution of the weighted-MLE step: new_p proportional to w * prev_p.

    `weights` maps prompt -> per-chain nonnegative weights (log-weights when
    log=True); prompts absent from the mapping carry their distribution over
    unchanged. A prompt whose weighted mass vanishes raises
    DegeneratePromptError.
    """
    table: dict[str, np.ndarray] = {}
    for prompt in prev.space.prompts:
        dist = prev.distribution(prompt)
        if prompt not in weights:
            table[prompt] = dist
            continue
        try:
            table[prompt] = tilt_distribution(dist, weights[prompt], log=log)
        except ValueError as exc:
            if "zero effective mass" in str(exc):
                raise DegeneratePromptError(prompt) from None
            raise
    return TabularPolicy(prev.space, table)


def product_form_oracle(
    pi0: TabularPolicy,
    weight_history: Sequence[Mapping[str, Sequence[float]]],
    *,
    log: bool = False,
) -> TabularPolicy:
    """Policy after all rounds, from the telescoped product of round weights.

    Computes normalize((prod_j w_j) * pi0) per prompt without iterating the
    per-round updates, which makes it an independent oracle for them.
    """
    if len(weight_history) == 0:
        raise ValueError("weight_history must be nonempty")
    table: dict[str, np.ndarray] = {}
    for prompt in pi0.space.prompts:
        n = len(pi0.space.chains(prompt))
        acc = np.zeros(n)
        touched = False
        for round_weights in weight_history:
            if prompt in round_weights:
                acc = acc + _as_log(np.asarray(round_weights[prompt], dtype=float), log)
                touched = True
        if not touched:
            table[prompt] = pi0.distribution(prompt)
            continue
        try:
            table[prompt] = tilt_distribution(pi0.distribution(prompt), acc, log=True)
        except ValueError as exc:
            if "zero effective mass" in str(exc):
                raise DegeneratePromptError(prompt) from None
            raise
    return TabularPolicy(pi0.space, table)


def weighted_mle_objective(policy: SoftmaxPolicy, samples: Sequence[WeightedSample]) -> float:
    """sum of weight * log pi(chain|prompt) over samples.

    Zero-weight samples contribute exactly 0 even where log pi = -inf; a
    positive weight on a zero-probability chain makes the objective -inf
    (reported, never raised).
    """
    total = 0.0
    for s in samples:
        if s.log_weight == -math.inf:
            continue
        p = policy.prob(s.prompt, s.chain)
        if p == 0.0:
            return -math.inf
        total += math.exp(s.log_weight) * math.log(p)
    return total


def _group_counts(
    policy: SoftmaxPolicy, samples: Sequence[WeightedSample]
) -> dict[str, np.ndarray]:
    """Per prompt, total sample weight landing on each chain."""
    counts: dict[str, np.ndarray] = {}
    for s in samples:
        i = policy.space.chain_index(s.prompt, s.chain)
        if s.prompt not in counts:
            counts[s.prompt] = np.zeros(len(policy.space.chains(s.prompt)))
        if s.log_weight != -math.inf:
            counts[s.prompt][i] += math.exp(s.log_weight)
    return counts


def objective_gradient(
    policy: SoftmaxPolicy, samples: Sequence[WeightedSample]
) -> dict[str, np.ndarray]:
    """Analytic gradient of weighted_mle_objective w.r.t. each prompt's logits.

    Per prompt: (counts - total_weight * softmax(logits/T)) / T, where
    counts[c] is the summed weight of samples hitting chain c.
    """
    grads: dict[str, np.ndarray] = {}
    for prompt, cnt in _group_counts(policy, samples).items():
        p = policy.distribution(prompt)
        grads[prompt] = (cnt - cnt.sum() * p) / policy.temperature
    return grads


@dataclass(frozen=True)
class GradientConfig:
    learning_rate: float = 0.1
    max_iters: int = 10_000
    grad_tolerance: float = 1e-8
    # Passes over the sample list; meaningful for mini-batching, recorded
    # for provenance in the default full-batch mode.
    epochs: int = 3

    def __post_init__(self):
        if not (self.learning_rate > 0):
            raise ValueError("learning_rate must be positive")


def _solve_prompt(
    logits: np.ndarray,
    cnt: np.ndarray,
    temperature: float,
    config: GradientConfig,
) -> tuple[np.ndarray, float, int, bool, list[float], str]:
    """Ascend one prompt's objective; returns (logits, grad_norm, iters,
    converged, objective trace, note)."""

    def softmax(z: np.ndarray) -> np.ndarray:
        q = z / temperature
        q = q - q.max()
        e = np.exp(q)
        return e / e.sum()

    def objective(z: np.ndarray) -> float:
        p = softmax(z)
        mask = cnt > 0
        if np.any(p[mask] == 0.0):
            return -math.inf
        return float(np.dot(cnt[mask], np.log(p[mask])))

    total = cnt.sum()
    z = logits.astype(float).copy()
    obj = objective(z)
    trace = [obj]
    if total <= 0:
        return z, 0.0, 0, True, trace, ""
    # Step sizes act on the weight-normalized gradient so the scale is
    # independent of the total sample weight; backtracking keeps the
    # objective nondecreasing, doubling on clean successes.
    step = config.learning_rate
    iterations = 0
    note = ""
    while iterations < config.max_iters:
        p = softmax(z)
        grad = (cnt - total * p) / temperature
        if not np.all(np.isfinite(grad)):
            return z, math.inf, iterations, False, trace, "non-finite gradient"
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= config.grad_tolerance:
            return z, grad_norm, iterations, True, trace, ""
        direction = grad / total
        accepted = False
        for _ in range(80):
            cand = z + step * direction
            cand_obj = objective(cand)
            if cand_obj > obj:
                z, obj = cand, cand_obj
                trace.append(obj)
                accepted = True
                step = min(step * 2.0, 1e6)
                break
            step *= 0.5
        iterations += 1
        if not accepted:
            note = "line search stalled at float resolution"
            break
    p = softmax(z)
    grad = (cnt - total * p) / temperature
    grad_norm = float(np.max(np.abs(grad)))
    return z, grad_norm, iterations, grad_norm <= config.grad_tolerance, trace, note


def solve_gradient(
    policy: SoftmaxPolicy,
    samples: Sequence[WeightedSample],
    config: GradientConfig = GradientConfig(),
) -> tuple[SoftmaxPolicy, SolveReport]:
    """Maximize the weighted log-likelihood over softmax logits.

    Per-prompt subproblems are independent and solved separately; the report
    aggregates the worst gradient norm and iteration count. The per-prompt
    objective trace is concatenated in prompt order and is nondecreasing
    within each prompt by construction.
    """
    counts = _group_counts(policy, samples)
    new_logits: dict[str, np.ndarray] = {}
    worst_grad = 0.0
    worst_iters = 0
    all_converged = True
    notes: list[str] = []
    trace_all: list[float] = []
    for prompt in policy.space.prompts:
        if prompt not in counts:
            continue
        z, gnorm, iters, converged, trace, note = _solve_prompt(
            policy.logits(prompt), counts[prompt], policy.temperature, config
        )
        new_logits[prompt] = z
        worst_grad = max(worst_grad, gnorm)
        worst_iters = max(worst_iters, iters)
        all_converged = all_converged and converged
        trace_all.extend(trace)
        if note:
            notes.append(f"{prompt}: {note}")
    solved = policy.with_logits(new_logits) if new_logits else policy
    report = SolveReport(
        objective_value=weighted_mle_objective(solved, samples),
        grad_norm=worst_grad,
        iterations=worst_iters,
        converged=all_converged,
        note="; ".join(notes),
        objective_trace=trace_all,
    )
    return solved, report
