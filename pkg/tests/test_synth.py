"""Synthetic data generator: determinism, planted structure, reference suite."""

import math

import numpy as np
import pytest

from oracles import brute_force_auc

from cohortagent import (
    REFERENCE_COHORTS,
    REFERENCE_MODEL_AUCS,
    REFERENCE_SIZES,
    CohortSpec,
    generate,
    predict,
    reference_cohort_specs,
    separability_specs,
    stub_registry,
)
from cohortagent.synth import reference_registry


def small_specs(n=30):
    rng = np.random.default_rng(0)
    return [
        CohortSpec(
            name=name,
            n_patients=n,
            prevalence=0.5,
            feature_centroid=np.tile(rng.normal(size=128), (5, 1)),
            numeric_fields={"age": (60.0, 5.0)},
            categorical_fields={"gender": {"male": 0.5, "female": 0.5}},
            model_auc_profile={"m": 0.8},
            timepoint_probs={1: 0.5, 2: 0.5},
        )
        for name in ("A", "B")
    ]


class TestGenerate:
    def test_same_seed_reproduces_byte_for_byte(self):
        a = generate(small_specs(), seed=123)
        b = generate(small_specs(), seed=123)
        assert len(a.records) == len(b.records) == 60
        for ra, rb in zip(a.records, b.records):
            assert ra.patient_id == rb.patient_id
            assert ra.metadata == rb.metadata
            assert ra.label == rb.label
            assert ra.timepoints == rb.timepoints
            assert ra.features.tobytes() == rb.features.tobytes()
        assert sorted(a.table.rows()) == sorted(b.table.rows())

    def test_different_seed_changes_the_draw(self):
        a = generate(small_specs(), seed=1)
        b = generate(small_specs(), seed=2)
        assert any(
            ra.features.tobytes() != rb.features.tobytes()
            for ra, rb in zip(a.records, b.records)
        )

    def test_records_follow_the_spec(self):
        ds = generate(small_specs(), seed=5)
        by_cohort = {}
        for rec in ds.records:
            by_cohort.setdefault(rec.cohort, []).append(rec)
            assert rec.features.shape == (5, 128)
            assert rec.label in (0, 1)
            assert rec.timepoints in (1, 2)
            assert isinstance(rec.metadata["age"], float)
            assert rec.metadata["gender"] in ("male", "female")
        assert {len(v) for v in by_cohort.values()} == {30}

    def test_prevalence_is_approximately_honored(self):
        specs = small_specs(n=500)
        ds = generate(specs, seed=9)
        for cohort in ("A", "B"):
            labels = [r.label for r in ds.records if r.cohort == cohort]
            # binomial sd at n=500, p=0.5 is ~0.022
            assert abs(np.mean(labels) - 0.5) < 0.09

    def test_table_marks_exactly_the_profiled_models(self):
        ds = generate(small_specs(), seed=3)
        assert ds.table.applicable_models("A") == ["m"]
        assert ds.table.auc("A", "m") == 0.8

    def test_duplicate_cohort_names_rejected(self):
        specs = small_specs()
        specs[1] = CohortSpec(
            name="A",
            n_patients=10,
            prevalence=0.5,
            feature_centroid=np.zeros((5, 128)),
            model_auc_profile={"m": 0.7},
        )
        with pytest.raises(ValueError, match="duplicate cohort names"):
            generate(specs)

    def test_empty_specs_rejected(self):
        with pytest.raises(ValueError, match="no cohort specs"):
            generate([])


class TestPlantedAuc:
    def test_stub_registry_recovers_each_planted_auc(self):
        specs = reference_cohort_specs()
        ds = generate(specs, seed=77)
        registry = stub_registry(specs, seed=77)
        by_cohort = {}
        for rec in ds.records:
            by_cohort.setdefault(rec.cohort, []).append(rec)
        for cohort, profile in REFERENCE_MODEL_AUCS.items():
            group = by_cohort[cohort]
            labels = [r.label for r in group]
            n_pos = sum(labels)
            n_neg = len(labels) - n_pos
            for model, target in profile.items():
                scores = [predict(registry.get(model), r).probability for r in group]
                measured = brute_force_auc(scores, labels)
                # Hanley-McNeil standard error at the planted value
                q1 = target / (2.0 - target)
                q2 = 2.0 * target**2 / (1.0 + target)
                se = math.sqrt(
                    (
                        target * (1.0 - target)
                        + (n_pos - 1) * (q1 - target**2)
                        + (n_neg - 1) * (q2 - target**2)
                    )
                    / (n_pos * n_neg)
                )
                tol = max(0.04, 3.5 * se)
                assert abs(measured - target) < tol, (cohort, model, measured, target)


class TestReferenceSuite:
    def test_nine_cohorts_with_published_sizes(self):
        specs = reference_cohort_specs()
        assert [s.name for s in specs] == list(REFERENCE_COHORTS)
        assert {s.name: s.n_patients for s in specs} == REFERENCE_SIZES
        assert sum(REFERENCE_SIZES.values()) == 3750

    def test_profiles_carry_the_historical_auc_columns(self):
        specs = reference_cohort_specs()
        for spec in specs:
            assert spec.model_auc_profile == REFERENCE_MODEL_AUCS[spec.name]

    def test_layout_is_deterministic(self):
        a = reference_cohort_specs()
        b = reference_cohort_specs()
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.feature_centroid, sb.feature_centroid)

    def test_registry_covers_every_profiled_model(self):
        registry = reference_registry()
        for profile in REFERENCE_MODEL_AUCS.values():
            for model in profile:
                assert model in registry

    def test_metadata_fields_are_shared_across_cohorts(self):
        ds = generate(reference_cohort_specs(), seed=1)
        assert set(ds.schema.field_names()) == {"age", "bmi", "gender", "smoking_status"}


class TestSeparabilitySpecs:
    def test_zero_separation_means_identical_centroids(self):
        alpha, beta = separability_specs(0.0)
        assert np.array_equal(alpha.feature_centroid, beta.feature_centroid)

    def test_separation_is_measured_in_pooled_noise_units(self):
        alpha, beta = separability_specs(10.0, noise_sd=1.0)
        pooled_gap = np.linalg.norm(
            alpha.feature_centroid.mean(axis=0) - beta.feature_centroid.mean(axis=0)
        )
        pooled_sd = 1.0 / math.sqrt(5)
        assert pooled_gap == pytest.approx(10.0 * pooled_sd, rel=1e-9)

    def test_site_field_adds_one_constant_category_per_cohort(self):
        alpha, beta = separability_specs(5.0, site_field=True)
        assert alpha.categorical_fields == {"site": {"site_alpha": 1.0}}
        assert beta.categorical_fields == {"site": {"site_beta": 1.0}}
        plain, _ = separability_specs(5.0)
        assert plain.categorical_fields == {}

    def test_negative_separation_rejected(self):
        with pytest.raises(ValueError, match="separation"):
            separability_specs(-1.0)

    def test_profiles_override_the_default_stub(self):
        alpha, beta = separability_specs(
            5.0, profiles={"alpha": {"m_a": 0.9}, "beta": {"m_b": 0.9}}
        )
        assert alpha.model_auc_profile == {"m_a": 0.9}
        assert beta.model_auc_profile == {"m_b": 0.9}
