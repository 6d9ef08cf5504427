"""
What the router actually needs: input-configuration matrix
==========================================================

Re-runs stage-1 retrieval with four fused-vector configurations
(metadata only, metadata + flattened features, metadata + pooled features
under L2 and under cosine) and reports top-1 cohort accuracy for each.
On synthetic cohorts the pooled variants dominate; metadata alone is
only as good as the metadata is cohort-specific.
"""

import cohortagent as ca

SEED = 11

specs = ca.reference_cohort_specs()
dataset = ca.generate(specs, seed=SEED)
database, holdout = ca.split(dataset.records, ca.SplitSpec(0.30, SEED))
stats = ca.fit_encoding(database, dataset.schema)

rows = ca.retrieval_configuration_rows(
    database, holdout, stats, k=15, feature_weight=0.1
)

print(f"{'input':<22} {'aggregation':<12} {'metric':<8} {'top-1 accuracy':>14}")
for row in rows:
    aggregation = row["aggregation"] or "-"
    print(
        f"{row['input']:<22} {aggregation:<12} {row['metric']:<8} "
        f"{row['accuracy']:>14.4f}"
    )
print(f"\n(n = {rows[0]['n']} held-out patients, k = 15)")
