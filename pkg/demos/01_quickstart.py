"""
Quickstart: route patients to models and score them
====================================================

Builds a small two-cohort world end to end: synthesize records, fit the
metadata encoding, index the fused vectors, then run the two-stage agent
(stage 1 assigns a cohort by k-NN majority vote, stage 2 picks the model
with the best historical AUC for that cohort) on a few held-out patients.
"""

import cohortagent as ca

# 1. two synthetic cohorts whose pooled centroids sit 8 pooled-noise sd apart,
#    each with its own best model (m_a wins on alpha, m_b wins on beta)
specs = ca.separability_specs(
    8.0,
    n_per_cohort=120,
    profiles={
        "alpha": {"m_a": 0.90, "m_b": 0.65},
        "beta": {"m_a": 0.65, "m_b": 0.90},
    },
)
dataset = ca.generate(specs, seed=7)
registry = ca.stub_registry(specs, seed=7)
print(f"patients: {len(dataset.records)}, models: {len(registry)}")

# 2. split off a holdout; encoding statistics are fitted on the database only
database, holdout = ca.split(dataset.records, ca.SplitSpec(0.25, seed=7))
stats = ca.fit_encoding(database, dataset.schema)

# 3. fuse metadata with 0.1-weighted pooled features and build the exact index
config = ca.FusionConfig()
index = ca.VectorIndex.build(
    [(ca.fuse(r, stats, config), r.cohort, r.patient_id) for r in database],
    "l2",
)
print(f"index: {index.size} vectors, dimension {index.dimension}, {index.metric}")

# 4. assemble the runtime and run the agent for a few held-out patients
runtime = ca.AgentRuntime(
    stats=stats,
    fusion_config=config,
    index=index,
    registry=registry,
    table=dataset.table,
    backend=ca.RuleBackend(),
    k=15,
)
print()
for record in holdout[:5]:
    result = ca.predict_record(runtime, record)
    votes = ", ".join(f"{c}:{n}" for c, n in sorted(result.assignment.vote_counts.items()))
    flag = " (tie broken)" if result.assignment.tie_broken else ""
    print(
        f"{record.patient_id}: true {record.cohort}, "
        f"assigned {result.assignment.cohort} [{votes}]{flag} -> "
        f"{result.decision.model}, risk {result.risk.probability:.3f}"
    )
