"""A full self-improvement run on a synthetic corpus, no labels used.

The corpus generator plants a hidden true answer per task and gives the
base policy a controllable amount of mass on it. Training only ever sees
the policy's own majority votes; ground truth enters through the eval hook
alone. The run prints a per-round training curve: watch maj@1 climb toward
the corpus ceiling (the fraction of tasks whose population majority is
actually correct) while the entropy collapses, and note that the trained
maj@1 overtakes the *base* policy's maj@11, so the loop is doing more than
distilling one round of voting.

The same tasks where the majority is wrong show the known failure mode:
the loop happily locks onto the wrong answer, which is why the ceiling is
the right yardstick.
"""

from voteloop import CorpusSpec, RunConfig, make_corpus, make_eval_hook, run

corpus = make_corpus(CorpusSpec(n_train=120, n_test=40, seed=7))
print(
    f"corpus: {len(corpus.splits['train'])} train / {len(corpus.splits['test'])} test tasks; "
    f"ceiling train={corpus.ceiling('train'):.3f} test={corpus.ceiling('test'):.3f} "
    f"(wrong-majority fraction train={corpus.wrong_majority_fraction('train'):.3f})"
)

hook = make_eval_hook(corpus.splits, corpus.truth, k=11, seed=99, eval_samples=3)
config = RunConfig(k=501, rounds=15, patience=5, transform="identity", seed=7)
result = run(config, corpus.space, corpus.base, hook)

print(f"\n{'round':>5} {'train maj1':>11} {'train maj11':>12} {'test maj1':>10} {'entropy':>9}")
for report in result.reports:
    marker = " <- best" if report.round_index == result.best_round else ""
    print(
        f"{report.round_index:>5} {report.maj1_acc['train']:>11.4f} "
        f"{report.majk_acc['train']:>12.4f} {report.maj1_acc['test']:>10.4f} "
        f"{report.mean_entropy['train']:>9.5f}{marker}"
    )

base, best = result.reports[0], result.reports[result.best_round]
print(
    f"\ntrain maj1: {base.maj1_acc['train']:.4f} -> {best.maj1_acc['train']:.4f} "
    f"(ceiling {corpus.ceiling('train'):.4f})"
)
print(
    f"beyond vote distillation: trained maj1 {best.maj1_acc['train']:.4f} vs "
    f"base maj11 {base.majk_acc['train']:.4f}"
)
print(f"stopped early: {result.stopped_early} ({len(result.reports) - 1} trained rounds)")
