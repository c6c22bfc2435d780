"""Conditional distributions over (chain, answer) pairs for finite prompt sets.

A PromptSpace fixes, per prompt, an ordered chain alphabet and the answer
string each chain deterministically yields. Policies assign each prompt a
distribution over its chains, either as an explicit probability table
(TabularPolicy) or as logits through a temperature softmax (SoftmaxPolicy).

Policies are immutable snapshots: every update constructs a new object, so
concurrent reads are safe and sampling with per-prompt substreams is
deterministic under any scheduling.
"""

from __future__ import annotations

from typing import Iterator, Mapping, Sequence

import numpy as np

from .util import entropy_nats, normalize_simplex

__all__ = [
    "PromptSpace",
    "TabularPolicy",
    "SoftmaxPolicy",
    "save_policy",
    "load_policy",
]

TABULAR_SUM_TOL = 1e-12
SOFTMAX_SUM_TOL = 1e-9


def _check_id(kind: str, value: str) -> str:
    if not isinstance(value, str) or not value:
        raise ValueError(f"{kind} identifier must be a nonempty string, got {value!r}")
    if any(c in value for c in "\t\n\r"):
        raise ValueError(f"{kind} identifier {value!r} contains tab/newline")
    return value


class PromptSpace:
    """Finite universe of prompts, per-prompt chain alphabets, and answers.

    Parameters
    ----------
    chains:
        Mapping prompt-id -> ordered sequence of chain-ids (order defines the
        index layout of every policy vector).
    answers:
        Mapping prompt-id -> {chain-id: answer string}; must be total on the
        chain alphabet of each prompt.
    """

    def __init__(
        self,
        chains: Mapping[str, Sequence[str]],
        answers: Mapping[str, Mapping[str, str]],
    ):
        if len(chains) == 0:
            raise ValueError("a PromptSpace needs at least one prompt")
        self._chains: dict[str, tuple[str, ...]] = {}
        self._answers: dict[str, dict[str, str]] = {}
        self._index: dict[str, dict[str, int]] = {}
        for prompt, chain_ids in chains.items():
            _check_id("prompt", prompt)
            chain_ids = tuple(_check_id("chain", c) for c in chain_ids)
            if not chain_ids:
                raise ValueError(f"prompt {prompt!r} has no chains")
            if len(set(chain_ids)) != len(chain_ids):
                raise ValueError(f"prompt {prompt!r} has duplicate chain ids")
            amap = answers.get(prompt)
            if amap is None:
                raise KeyError(f"no answers given for prompt {prompt!r}")
            missing = [c for c in chain_ids if c not in amap]
            if missing:
                raise KeyError(f"prompt {prompt!r}: answers missing for chains {missing}")
            self._chains[prompt] = chain_ids
            self._answers[prompt] = {c: str(amap[c]) for c in chain_ids}
            self._index[prompt] = {c: i for i, c in enumerate(chain_ids)}
        self.prompts: tuple[str, ...] = tuple(self._chains)

    def __contains__(self, prompt: str) -> bool:
        return prompt in self._chains

    def __iter__(self) -> Iterator[str]:
        return iter(self.prompts)

    def chains(self, prompt: str) -> tuple[str, ...]:
        self._require(prompt)
        return self._chains[prompt]

    def answer_of(self, prompt: str, chain: str) -> str:
        self._require(prompt)
        try:
            return self._answers[prompt][chain]
        except KeyError:
            raise KeyError(f"unknown chain {chain!r} for prompt {prompt!r}") from None

    def answers(self, prompt: str) -> tuple[str, ...]:
        """Answer strings in chain order."""
        self._require(prompt)
        chains = self._chains[prompt]
        amap = self._answers[prompt]
        return tuple(amap[c] for c in chains)

    def chain_index(self, prompt: str, chain: str) -> int:
        self._require(prompt)
        try:
            return self._index[prompt][chain]
        except KeyError:
            raise KeyError(f"unknown chain {chain!r} for prompt {prompt!r}") from None

    def _require(self, prompt: str) -> None:
        if prompt not in self._chains:
            raise KeyError(f"unknown prompt {prompt!r}")


class _PolicyBase:
    """Shared read-side operations; subclasses provide distribution()."""

    space: PromptSpace

    def distribution(self, prompt: str) -> np.ndarray:
        raise NotImplementedError

    def prob(self, prompt: str, chain: str) -> float:
        i = self.space.chain_index(prompt, chain)
        return float(self.distribution(prompt)[i])

    def sample(self, prompt: str, count: int, rng: np.random.Generator) -> list[str]:
        """Draw `count` chain-ids i.i.d. from this prompt's distribution."""
        if count < 1:
            raise ValueError("count must be >= 1")
        p = self.distribution(prompt)
        chains = self.space.chains(prompt)
        idx = rng.choice(len(chains), size=count, p=p)
        return [chains[i] for i in idx]

    def entropy(self, prompt: str) -> float:
        """Shannon entropy of the chain distribution, in nats."""
        return entropy_nats(self.distribution(prompt))

    def mean_entropy(self, prompts: Sequence[str] | None = None) -> float:
        prompts = self.space.prompts if prompts is None else prompts
        return float(np.mean([self.entropy(x) for x in prompts]))

    def answer_marginal(self, prompt: str) -> dict[str, float]:
        """Total probability per answer string (chains grouped by answer)."""
        p = self.distribution(prompt)
        out: dict[str, float] = {}
        for answer, mass in zip(self.space.answers(prompt), p):
            out[answer] = out.get(answer, 0.0) + float(mass)
        return out


class TabularPolicy(_PolicyBase):
    """Explicit per-prompt probability table over chains.

    Input vectors are normalized on construction (sub-1e-300 entries flushed
    to zero); the stored arrays are read-only.
    """

    kind = "tabular"

    def __init__(self, space: PromptSpace, probs: Mapping[str, Sequence[float]]):
        self.space = space
        table: dict[str, np.ndarray] = {}
        for prompt in space.prompts:
            if prompt not in probs:
                raise KeyError(f"no probabilities for prompt {prompt!r}")
            vec = np.asarray(probs[prompt], dtype=float)
            if vec.shape != (len(space.chains(prompt)),):
                raise ValueError(
                    f"prompt {prompt!r}: expected {len(space.chains(prompt))} "
                    f"probabilities, got shape {vec.shape}"
                )
            vec = normalize_simplex(vec, tol=TABULAR_SUM_TOL)
            vec.flags.writeable = False
            table[prompt] = vec
        self._table = table

    @classmethod
    def uniform(cls, space: PromptSpace) -> "TabularPolicy":
        return cls(space, {x: np.ones(len(space.chains(x))) for x in space.prompts})

    def distribution(self, prompt: str) -> np.ndarray:
        self.space._require(prompt)
        return self._table[prompt]

    def replace(self, prompt: str, probs: Sequence[float]) -> "TabularPolicy":
        """New policy with one prompt's distribution swapped out."""
        table = {x: self._table[x] for x in self.space.prompts}
        table[prompt] = np.asarray(probs, dtype=float)
        return TabularPolicy(self.space, table)


class SoftmaxPolicy(_PolicyBase):
    """Per-prompt logit table; distribution = softmax(logits / temperature)."""

    kind = "softmax"

    def __init__(
        self,
        space: PromptSpace,
        logits: Mapping[str, Sequence[float]],
        temperature: float = 1.0,
    ):
        if not (temperature > 0):
            raise ValueError("temperature must be positive")
        self.space = space
        self.temperature = float(temperature)
        self._logits: dict[str, np.ndarray] = {}
        self._table: dict[str, np.ndarray] = {}
        for prompt in space.prompts:
            if prompt not in logits:
                raise KeyError(f"no logits for prompt {prompt!r}")
            vec = np.asarray(logits[prompt], dtype=float)
            if vec.shape != (len(space.chains(prompt)),):
                raise ValueError(f"prompt {prompt!r}: logit shape {vec.shape} mismatch")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"prompt {prompt!r}: logits must be finite")
            vec = vec.copy()
            vec.flags.writeable = False
            self._logits[prompt] = vec
            z = vec / self.temperature
            z = z - z.max()
            p = np.exp(z)
            p /= p.sum()
            p.flags.writeable = False
            self._table[prompt] = p
        for prompt, p in self._table.items():
            if abs(p.sum() - 1.0) > SOFTMAX_SUM_TOL:
                raise ValueError(f"prompt {prompt!r}: softmax normalization failed")

    @classmethod
    def zeros(cls, space: PromptSpace, temperature: float = 1.0) -> "SoftmaxPolicy":
        return cls(space, {x: np.zeros(len(space.chains(x))) for x in space.prompts}, temperature)

    def logits(self, prompt: str) -> np.ndarray:
        self.space._require(prompt)
        return self._logits[prompt]

    def distribution(self, prompt: str) -> np.ndarray:
        self.space._require(prompt)
        return self._table[prompt]

    def with_logits(self, logits: Mapping[str, Sequence[float]]) -> "SoftmaxPolicy":
        """New policy with some prompts' logits replaced."""
        merged = {x: self._logits[x] for x in self.space.prompts}
        merged.update({x: np.asarray(v, dtype=float) for x, v in logits.items()})
        return SoftmaxPolicy(self.space, merged, self.temperature)


Policy = TabularPolicy | SoftmaxPolicy

_HEADER = "# voteloop policy v1"


def save_policy(policy: Policy, path) -> None:
    """Checkpoint a policy as flat text, one (prompt, chain, value) per line.

    Values are written as hexadecimal floats, so load_policy restores them
    bit-for-bit.
    """
    lines = [_HEADER]
    if isinstance(policy, SoftmaxPolicy):
        lines.append(f"# kind softmax temperature {policy.temperature.hex()}")
        value_of = policy.logits
    else:
        lines.append("# kind tabular")
        value_of = policy.distribution
    for prompt in policy.space.prompts:
        for chain, value in zip(policy.space.chains(prompt), value_of(prompt)):
            lines.append(f"{prompt}\t{chain}\t{float(value).hex()}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_policy(path, space: PromptSpace) -> Policy:
    """Inverse of save_policy; the PromptSpace supplies the chain layout."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != _HEADER:
        raise ValueError(f"{path}: not a voteloop policy checkpoint")
    meta = lines[1].split()
    if len(meta) < 3 or meta[1] != "kind":
        raise ValueError(f"{path}: missing kind header")
    kind = meta[2]
    values: dict[str, dict[str, float]] = {}
    for ln in lines[2:]:
        parts = ln.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}: malformed record {ln!r}")
        prompt, chain, hexval = parts
        values.setdefault(prompt, {})[chain] = float.fromhex(hexval)
    table = {}
    for prompt in space.prompts:
        chains = space.chains(prompt)
        rec = values.get(prompt)
        if rec is None or set(rec) != set(chains):
            raise ValueError(f"{path}: records do not cover prompt {prompt!r}")
        table[prompt] = np.array([rec[c] for c in chains], dtype=float)
    if kind == "tabular":
        return TabularPolicy(space, table)
    if kind == "softmax":
        temperature = float.fromhex(meta[4])
        return SoftmaxPolicy(space, table, temperature)
    raise ValueError(f"{path}: unknown policy kind {kind!r}")
