"""Model pool: logistic scores, binormal stubs, requirements, registry, serialization."""

import math
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_record
from oracles import brute_force_auc

from cohortagent import (
    ModelNotApplicableError,
    ModelRegistry,
    ModelSpec,
    Requirements,
    binormal_mu,
    binormal_scores,
    builtin_logistic_specs,
    load_specs,
    logistic_risk,
    predict,
    requirement_problems,
    save_specs,
    sigmoid,
)
from cohortagent.models import spec_from_dict, spec_to_dict
from cohortagent.synth import reference_registry


class TestSigmoidAndLogistic:
    def test_sigmoid_fixed_points(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(-1.0) == pytest.approx(0.2689414213699951, abs=1e-15)
        assert sigmoid(math.log(9.0)) == pytest.approx(0.9, abs=1e-12)

    def test_sigmoid_is_stable_at_extremes(self):
        assert sigmoid(800.0) == 1.0
        assert sigmoid(-800.0) == 0.0
        assert 0.0 <= sigmoid(-800.0) <= sigmoid(800.0) <= 1.0

    def test_intercept_only_risk(self):
        assert logistic_risk(-6.8272, {}, {}) == pytest.approx(
            0.001082715218396839, abs=1e-15
        )

    def test_worked_example_with_covariates(self):
        risk = logistic_risk(
            -6.8272,
            {
                "age": 0.0391,
                "smoking_history": 0.7917,
                "extrathoracic_cancer_history": 1.3388,
                "nodule_diameter_mm": 0.1274,
                "spiculation": 1.0407,
                "upper_lobe": 0.7838,
            },
            {
                "age": 65,
                "smoking_history": 1,
                "extrathoracic_cancer_history": 0,
                "nodule_diameter_mm": 12,
                "spiculation": True,
                "upper_lobe": 1,
            },
        )
        assert risk == pytest.approx(0.464882913814988, abs=1e-12)

    def test_missing_covariate_is_named(self):
        with pytest.raises(ValueError, match="missing covariate.*age"):
            logistic_risk(0.0, {"age": 0.1}, {"age": None})

    def test_non_numeric_covariate_rejected(self):
        with pytest.raises(ValueError, match="not numeric"):
            logistic_risk(0.0, {"age": 0.1}, {"age": "old"})

    @given(t=st.floats(-30, 30))
    @settings(max_examples=100, deadline=None)
    def test_sigmoid_complement_symmetry(self, t):
        assert abs(sigmoid(t) + sigmoid(-t) - 1.0) < 1e-12


class TestBinormal:
    def test_mu_of_half_is_zero(self):
        assert binormal_mu(0.5) == 0.0

    def test_mu_against_stdlib_normal(self):
        # independent inverse-CDF route through statistics.NormalDist
        expected = math.sqrt(2.0) * NormalDist().inv_cdf(0.843)
        assert binormal_mu(0.843) == pytest.approx(expected, abs=1e-12)
        assert binormal_mu(0.843) == pytest.approx(1.4239211185458753, abs=1e-12)

    def test_mu_outside_unit_interval_rejected(self):
        for bad in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(ValueError, match="outside"):
                binormal_mu(bad)

    def test_scores_land_near_target_auc(self):
        labels = np.array([0, 1] * 2000)
        scores = binormal_scores(0.843, labels, seed=99)
        assert brute_force_auc(scores, labels) == pytest.approx(0.843, abs=0.03)

    def test_scores_are_probabilities_and_deterministic(self):
        labels = [0, 1, 1, 0, 1]
        a = binormal_scores(0.7, labels, seed=5)
        b = binormal_scores(0.7, labels, seed=5)
        assert np.array_equal(a, b)
        assert ((a > 0.0) & (a < 1.0)).all()

    def test_bad_labels_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            binormal_scores(0.7, [0, 2], seed=1)


class TestStubPrediction:
    def spec(self, **kw):
        defaults = dict(
            id="stub",
            kind="binormal_stub",
            target_auc_by_cohort={"X": 0.9},
            seed=7,
            cost_per_patient=0.25,
        )
        defaults.update(kw)
        return ModelSpec(**defaults)

    def test_same_patient_same_score(self):
        rec = make_record(patient_id="p1", cohort="X", label=1)
        a = predict(self.spec(), rec)
        b = predict(self.spec(), rec)
        assert a.probability == b.probability
        assert 0.0 < a.probability < 1.0

    def test_score_depends_on_patient_identity(self):
        a = predict(self.spec(), make_record(patient_id="p1", cohort="X"))
        b = predict(self.spec(), make_record(patient_id="p2", cohort="X"))
        assert a.probability != b.probability

    def test_score_depends_on_model_identity(self):
        rec = make_record(patient_id="p1", cohort="X")
        a = predict(self.spec(), rec)
        b = predict(self.spec(id="stub2"), rec)
        assert a.probability != b.probability

    def test_unknown_cohort_without_default_is_an_error(self):
        rec = make_record(patient_id="p1", cohort="elsewhere")
        with pytest.raises(ValueError, match="no target AUC"):
            predict(self.spec(), rec)

    def test_unknown_cohort_falls_back_to_default_target(self):
        rec = make_record(patient_id="p1", cohort="elsewhere")
        out = predict(self.spec(default_target_auc=0.7), rec)
        assert 0.0 < out.probability < 1.0

    def test_configured_cost_reported_as_wall_time(self):
        out = predict(self.spec(), make_record(cohort="X"))
        assert out.wall_time == 0.25

    def test_measured_wall_time_when_cost_unset(self):
        out = predict(self.spec(cost_per_patient=None), make_record(cohort="X"))
        assert 0.0 <= out.wall_time < 1.0

    def test_positive_labels_score_higher_on_average(self):
        spec = self.spec()
        pos = [
            predict(spec, make_record(patient_id=f"p{i}", cohort="X", label=1)).probability
            for i in range(300)
        ]
        neg = [
            predict(spec, make_record(patient_id=f"n{i}", cohort="X", label=0)).probability
            for i in range(300)
        ]
        assert np.mean(pos) > np.mean(neg) + 0.1


class TestRequirements:
    def test_min_timepoints_enforced(self):
        spec = ModelSpec(
            id="m",
            kind="binormal_stub",
            requirements=Requirements(min_timepoints=2),
            default_target_auc=0.7,
        )
        rec = make_record(timepoints=1, cohort="X")
        problems = requirement_problems(spec, rec)
        assert problems == ["needs >= 2 timepoints, record has 1"]
        with pytest.raises(ModelNotApplicableError, match="needs >= 2 timepoints"):
            predict(spec, rec)
        assert requirement_problems(spec, make_record(timepoints=2)) == []

    def test_required_fields_enforced(self):
        spec = ModelSpec(
            id="m",
            kind="binormal_stub",
            requirements=Requirements(required_fields=("age",)),
            default_target_auc=0.7,
        )
        assert requirement_problems(spec, make_record(metadata={})) == [
            "required metadata field 'age' is missing"
        ]
        assert requirement_problems(spec, make_record(metadata={"age": 50.0})) == []

    def test_invalid_requirements_rejected(self):
        with pytest.raises(ValueError, match="min_timepoints"):
            Requirements(min_timepoints=0)


class TestRegistry:
    def test_duplicate_id_rejected(self):
        spec = ModelSpec(id="m", kind="binormal_stub", default_target_auc=0.6)
        registry = ModelRegistry([spec])
        with pytest.raises(ValueError, match="duplicate model id"):
            registry.register(spec)

    def test_unknown_id_rejected(self):
        with pytest.raises(ValueError, match="unknown model 'nope'"):
            ModelRegistry().get("nope")

    def test_membership_and_iteration(self):
        specs = [
            ModelSpec(id="a", kind="binormal_stub", default_target_auc=0.6),
            ModelSpec(id="b", kind="binormal_stub", default_target_auc=0.7),
        ]
        registry = ModelRegistry(specs)
        assert len(registry) == 2
        assert "a" in registry and "c" not in registry
        assert registry.ids() == ("a", "b")
        assert list(registry) == specs

    def test_reference_pool_has_eight_models(self):
        registry = reference_registry()
        assert len(registry) == 8
        assert set(registry.ids()) == {
            "Mayo", "Brock", "DLI", "DLS", "Sybil", "Liao", "TD-ViT", "DLSTM",
        }
        # temporally-aware deep models insist on longitudinal input
        assert registry.get("DLSTM").requirements.min_timepoints == 2
        assert registry.get("TD-ViT").requirements.min_timepoints == 2


class TestSerialization:
    def test_roundtrip_every_kind(self, tmp_path):
        specs = [
            ModelSpec(
                id="log",
                kind="logistic",
                intercept=-1.5,
                coefficients={"age": 0.04},
                requirements=Requirements(required_fields=("age",)),
                cost_per_patient=0.001,
            ),
            ModelSpec(
                id="stub",
                kind="binormal_stub",
                target_auc_by_cohort={"A": 0.8},
                default_target_auc=0.7,
                seed=11,
            ),
            ModelSpec(id="ext", kind="adapter", endpoint="http://localhost:1", retries=0),
        ]
        path = str(tmp_path / "models.json")
        save_specs(path, specs)
        assert load_specs(path) == specs

    def test_dict_roundtrip_is_identity(self):
        spec = ModelSpec(
            id="stub",
            kind="binormal_stub",
            target_auc_by_cohort={"A": 0.8},
            seed=3,
            cost_per_patient=1.0,
        )
        assert spec_from_dict(spec_to_dict(spec)) == spec

    def test_non_list_config_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{}")
        with pytest.raises(ValueError, match="JSON list"):
            load_specs(str(path))

    def test_builtin_logistic_specs_load_from_package_data(self):
        mayo, brock = builtin_logistic_specs()
        assert mayo.id == "Mayo" and brock.id == "Brock"
        assert mayo.intercept == -6.8272
        assert brock.intercept == -6.7892
        assert "age" in mayo.requirements.required_fields
        assert len(brock.coefficients) == 10


class TestSpecValidation:
    def test_bad_target_auc_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            ModelSpec(id="m", kind="binormal_stub", target_auc_by_cohort={"A": 1.2})

    def test_adapter_requires_endpoint(self):
        with pytest.raises(ValueError, match="endpoint"):
            ModelSpec(id="m", kind="adapter")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown kind"):
            ModelSpec(id="m", kind="forest")

    def test_negative_cost_rejected(self):
        with pytest.raises(ValueError, match="negative cost"):
            ModelSpec(id="m", kind="binormal_stub", default_target_auc=0.6, cost_per_patient=-1)
