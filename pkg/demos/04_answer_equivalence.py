"""Extracting final answers and deciding when two of them agree.

Votes are only as good as the equality test behind them: "0.5" and
"\\frac{1}{2}" must land in the same ballot box or the majority
fragments across surface forms. The answer kit extracts the first
\\boxed{...} group from solution text and compares answers as exact
rationals, falling back to plain string equality outside that fragment.
The last section shows a vote that flips depending on which equality is
used.
"""

import numpy as np

from voteloop import extract_boxed, equivalent, majority_vote, parse_answer

solutions = [
    "First simplify, then conclude. The answer is \\boxed{\\frac{1}{2}}.",
    "Working through the algebra gives \\boxed{0.5} as claimed.",
    "We compute \\boxed{2^{-1}} and stop. Also note \\boxed{999} later.",
    "No boxed answer in this one, sadly.",
]
print("extraction (first balanced \\boxed{...} group only):")
for text in solutions:
    got = extract_boxed(text)
    print(f"  {text[:46]:<48} -> found={got.found} raw={got.raw!r}")

print("\nparsing to exact rationals (no floats anywhere):")
for raw in ["\\frac{1}{2}", "0.5", "2^{-1}", "2+3\\cdot 4", "x+1", "\\sqrt{2}"]:
    expr = parse_answer(raw)
    kind = f"rational {expr.value}" if expr.is_numeric else "opaque string"
    print(f"  {raw:<14} -> {kind}")

pairs = [
    ("0.5", "\\frac{1}{2}"),
    ("\\frac{2}{4}", "0.5"),
    ("6/4", "3/2"),
    ("x+1", "1+x"),
    ("1/3", "0.333"),
]
print("\nequivalence verdicts:")
for a, b in pairs:
    print(f"  {a!r} vs {b!r}: {equivalent(a, b)}")

# The vote that goes wrong under exact-string equality: "0.5" appears in
# two surface forms that together outnumber the distractor.
ballots = ["0.5", "\\frac{1}{2}", "0.5", "3", "3"]
strings = {a: ballots.count(a) for a in sorted(set(ballots))}
winner = majority_vote(ballots, np.random.default_rng(0))
print(f"\nballots: {ballots}")
print(f"exact-string counts: {strings} (a string vote ties '0.5' and '3' at 2)")
print(f"equivalence-aware majority: {winner!r} (the 1/2 class holds 3 of 5 votes)")
