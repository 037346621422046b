"""
Scoring three-bullet summaries
==============================

Token-level ROUGE-1/2/L, the no-duplicate sentence alignment that explains
*which* reference sentence each output sentence matched, and the per-position
breakdown tables.
"""

from b3sum.metrics import (
    DocumentScores,
    breakdown_report,
    format_breakdown_pretty,
    pairwise_align,
    rouge_l,
    rouge_n,
    score_summary_positions,
)

sys_summary = [
    "the council approved the harbor expansion on friday".split(),
    "construction begins in early spring".split(),
    "the council also plans a transit study".split(),
]
ref_summary = [
    "the city council approved the harbor expansion".split(),
    "officials expect construction to begin in spring".split(),
    "a transit study is planned as well".split(),
]

flat_sys = [t for s in sys_summary for t in s]
flat_ref = [t for s in ref_summary for t in s]
for name, score in [
    ("ROUGE-1", rouge_n(flat_sys, flat_ref, 1)),
    ("ROUGE-2", rouge_n(flat_sys, flat_ref, 2)),
    ("ROUGE-L", rouge_l(flat_sys, flat_ref)),
]:
    print(f"{name}: P {score.precision:.3f}  R {score.recall:.3f}  F1 {score.f1:.3f}")

# Alignment: try all six assignments of system sentences to reference
# sentences and keep the one with the best mean ROUGE-L.
align = pairwise_align(sys_summary, ref_summary)
print(f"\nalignment pattern {align.pattern} (mean ROUGE-L F1 {align.mean_f1:.3f})")
for k, slot in enumerate(align.slot_scores):
    print(f"  system sentence {k + 1} -> reference {align.perm[k] + 1}  F1 {slot.f1:.3f}")

# Swapping two output sentences shows up directly in the pattern.
swapped = [sys_summary[1], sys_summary[0], sys_summary[2]]
print("after swapping bullets 1 and 2:", pairwise_align(swapped, ref_summary).pattern)

# Position-wise scores feed the report tables.
docs = [
    DocumentScores(
        doc_id="demo",
        per_position=score_summary_positions(sys_summary, ref_summary),
        gold_class="parallel",
        pattern=align.pattern,
    )
]
print()
print(format_breakdown_pretty(breakdown_report(docs)))
