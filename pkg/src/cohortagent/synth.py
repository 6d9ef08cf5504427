"""Synthetic cohort generator for desk-scale routing experiments.

Feature maps are drawn as cohort centroid + isotropic Gaussian noise, so
labels never shift the fused vectors; outcome signal exists only in the model
score stubs. The bundled nine-cohort reference suite anchors cohort sizes to
the published holdout counts (divided by the 0.30 holdout fraction) and reuses
the historical per-cohort AUC profiles for its stub targets, with feature
geometry tiered so that some cohorts are mutually confusable and others are
cleanly separable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    DEFAULT_SEED,
    FEATURE_COLS,
    FEATURE_ROWS,
    REFERENCE_MODEL_AUCS,
    CATEGORICAL,
    NUMERIC,
    FieldSpec,
    MetadataSchema,
    PatientRecord,
)
from .models import BINORMAL_STUB, ModelRegistry, ModelSpec, Requirements
from .policy import PerformanceTable


@dataclass(frozen=True)
class CohortSpec:
    """Recipe for one synthetic cohort."""

    name: str
    n_patients: int
    prevalence: float
    feature_centroid: np.ndarray
    feature_noise_sd: float = 1.0
    numeric_fields: dict[str, tuple[float, float]] = field(default_factory=dict)
    categorical_fields: dict[str, dict[str, float]] = field(default_factory=dict)
    model_auc_profile: dict[str, float] = field(default_factory=dict)
    timepoint_probs: dict[int, float] = field(default_factory=lambda: {1: 1.0})

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("cohort name must be non-empty")
        if self.n_patients < 4:
            raise ValueError(f"cohort {self.name!r}: n_patients must be >= 4")
        if not 0.0 < self.prevalence < 1.0:
            raise ValueError(f"cohort {self.name!r}: prevalence outside (0, 1)")
        centroid = np.asarray(self.feature_centroid, dtype=np.float64)
        if centroid.shape != (FEATURE_ROWS, FEATURE_COLS):
            raise ValueError(
                f"cohort {self.name!r}: centroid shape {centroid.shape} != "
                f"({FEATURE_ROWS}, {FEATURE_COLS})"
            )
        centroid.setflags(write=False)
        object.__setattr__(self, "feature_centroid", centroid)
        if not self.feature_noise_sd > 0:
            raise ValueError(f"cohort {self.name!r}: feature_noise_sd must be > 0")
        if not self.model_auc_profile:
            raise ValueError(f"cohort {self.name!r}: empty model_auc_profile")
        for model, target in self.model_auc_profile.items():
            if not 0.0 < target < 1.0:
                raise ValueError(
                    f"cohort {self.name!r}: AUC {target} for {model!r} outside (0, 1)"
                )
        for _, (mean, sd) in self.numeric_fields.items():
            if not (math.isfinite(mean) and math.isfinite(sd) and sd >= 0):
                raise ValueError(f"cohort {self.name!r}: bad numeric field parameters")
        for name, dist in self.categorical_fields.items():
            total = sum(dist.values())
            if not dist or abs(total - 1.0) > 1e-9 or any(p < 0 for p in dist.values()):
                raise ValueError(
                    f"cohort {self.name!r}: field {name!r} probabilities must sum to 1"
                )
        if not self.timepoint_probs:
            raise ValueError(f"cohort {self.name!r}: empty timepoint distribution")
        total = sum(self.timepoint_probs.values())
        if abs(total - 1.0) > 1e-9 or any(
            t < 1 or p < 0 for t, p in self.timepoint_probs.items()
        ):
            raise ValueError(f"cohort {self.name!r}: bad timepoint distribution")


@dataclass(frozen=True)
class SyntheticDataset:
    records: tuple[PatientRecord, ...]
    table: PerformanceTable
    schema: MetadataSchema
    seed: int


def _schema_from_specs(specs: Sequence[CohortSpec]) -> MetadataSchema:
    fields: dict[str, FieldSpec] = {}
    for spec in specs:
        for name in spec.numeric_fields:
            existing = fields.get(name)
            if existing is not None and existing.kind != NUMERIC:
                raise ValueError(f"field {name!r} declared with conflicting kinds")
            fields.setdefault(name, FieldSpec(name=name, kind=NUMERIC))
        for name, dist in spec.categorical_fields.items():
            cats = tuple(dist)
            existing = fields.get(name)
            if existing is None:
                fields[name] = FieldSpec(name=name, kind=CATEGORICAL, categories=cats)
            elif existing.kind != CATEGORICAL:
                raise ValueError(f"field {name!r} declared with conflicting kinds")
            else:
                merged = existing.categories + tuple(
                    c for c in cats if c not in existing.categories
                )
                fields[name] = FieldSpec(name=name, kind=CATEGORICAL, categories=merged)
    return MetadataSchema(fields=tuple(fields.values()))


def generate(
    specs: Sequence[CohortSpec], seed: int = DEFAULT_SEED
) -> SyntheticDataset:
    """Draw a full dataset plus its performance table, deterministically.

    One RNG stream seeds everything, so a fixed seed reproduces the dataset
    byte for byte. The performance table marks exactly the profiled models
    applicable for each cohort.
    """
    if not specs:
        raise ValueError("no cohort specs")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("duplicate cohort names")
    schema = _schema_from_specs(specs)
    rng = np.random.default_rng(seed)
    records: list[PatientRecord] = []
    for spec in specs:
        for i in range(spec.n_patients):
            metadata: dict = {}
            for f in schema.fields:
                if f.kind == NUMERIC:
                    params = spec.numeric_fields.get(f.name)
                    metadata[f.name] = (
                        None
                        if params is None
                        else float(rng.normal(params[0], params[1]))
                    )
                else:
                    dist = spec.categorical_fields.get(f.name)
                    if dist is None:
                        metadata[f.name] = None
                    else:
                        cats = list(dist)
                        probs = np.asarray([dist[c] for c in cats], dtype=np.float64)
                        metadata[f.name] = str(
                            rng.choice(cats, p=probs / probs.sum())
                        )
            features = spec.feature_centroid + rng.normal(
                0.0, spec.feature_noise_sd, size=(FEATURE_ROWS, FEATURE_COLS)
            )
            label = int(rng.random() < spec.prevalence)
            tps = sorted(spec.timepoint_probs)
            tp_probs = np.asarray([spec.timepoint_probs[t] for t in tps])
            timepoints = int(rng.choice(tps, p=tp_probs / tp_probs.sum()))
            records.append(
                PatientRecord(
                    patient_id=f"{spec.name}-{i:05d}",
                    cohort=spec.name,
                    metadata=metadata,
                    features=features,
                    label=label,
                    timepoints=timepoints,
                )
            )
    rows = []
    for spec in specs:
        for model, target in spec.model_auc_profile.items():
            rows.append((spec.name, model, target, True))
    table = PerformanceTable.from_rows(rows)
    return SyntheticDataset(
        records=tuple(records), table=table, schema=schema, seed=seed
    )


# Simulated per-patient inference cost in seconds: the two lightweight
# longitudinal models versus one heavyweight image model, orders apart.
DEFAULT_STUB_COSTS = {"DLI": 0.005, "DLS": 0.005, "Sybil": 12.0}


def stub_registry(
    specs: Sequence[CohortSpec],
    seed: int = DEFAULT_SEED,
    costs: dict[str, float] | None = None,
) -> ModelRegistry:
    """Binormal stubs whose per-cohort targets mirror the specs' AUC profiles."""
    targets: dict[str, dict[str, float]] = {}
    for spec in specs:
        for model, target in spec.model_auc_profile.items():
            targets.setdefault(model, {})[spec.name] = target
    costs = dict(DEFAULT_STUB_COSTS if costs is None else costs)
    registry = ModelRegistry()
    for model, by_cohort in targets.items():
        registry.register(
            ModelSpec(
                id=model,
                kind=BINORMAL_STUB,
                target_auc_by_cohort=by_cohort,
                # queries outside any known cohort fall back to the mean target
                default_target_auc=sum(by_cohort.values()) / len(by_cohort),
                seed=seed,
                cost_per_patient=costs.get(model, 0.01),
            )
        )
    return registry


# Default targets and simulated costs for the deep models that have no
# published per-cohort AUC column; structural placeholders, editable.
_EXTRA_MODEL_DEFAULTS = {
    "Liao": (0.70, 8.0, 1),
    "TD-ViT": (0.72, 6.0, 2),
    "DLSTM": (0.74, 4.0, 2),
}


def reference_registry(seed: int = DEFAULT_SEED) -> ModelRegistry:
    """The full eight-model pool behind the nine-cohort reference suite.

    Two clinical logistic scores from bundled config files, three stubs
    carrying the historical per-cohort AUC columns, and three stubs for the
    deep models the table never breaks out (temporally-aware ones require at
    least two timepoints).
    """
    from .models import builtin_logistic_specs

    registry = ModelRegistry(builtin_logistic_specs())
    by_model: dict[str, dict[str, float]] = {}
    for cohort, profile in REFERENCE_MODEL_AUCS.items():
        for model, target in profile.items():
            by_model.setdefault(model, {})[cohort] = target
    for model, by_cohort in by_model.items():
        registry.register(
            ModelSpec(
                id=model,
                kind=BINORMAL_STUB,
                target_auc_by_cohort=by_cohort,
                default_target_auc=sum(by_cohort.values()) / len(by_cohort),
                seed=seed,
                cost_per_patient=DEFAULT_STUB_COSTS.get(model, 0.01),
            )
        )
    for model, (target, cost, min_tp) in _EXTRA_MODEL_DEFAULTS.items():
        registry.register(
            ModelSpec(
                id=model,
                kind=BINORMAL_STUB,
                requirements=Requirements(min_timepoints=min_tp),
                default_target_auc=target,
                seed=seed,
                cost_per_patient=cost,
            )
        )
    return registry


# Cohort sizes anchored to the published holdout counts divided by the 0.30
# holdout fraction, clamped to [104, 868] and nudged to sum to 3750.
REFERENCE_SIZES = {
    "BRONCH": 364,
    "MCL_VUMC": 273,
    "MCL_UPMC": 104,
    "MCL_DECAMP": 120,
    "MCL_UCD": 107,
    "VLSP": 860,
    "LI-VUMC": 203,
    "NLST_test_nodule": 851,
    "NLST_test": 868,
}

_REFERENCE_PREVALENCE = {
    "BRONCH": 0.55,
    "MCL_VUMC": 0.45,
    "MCL_UPMC": 0.50,
    "MCL_DECAMP": 0.50,
    "MCL_UCD": 0.50,
    "VLSP": 0.45,
    "LI-VUMC": 0.50,
    "NLST_test_nodule": 0.40,
    "NLST_test": 0.40,
}

# Metadata profiles shared by every member of a separability group.
_GROUP_METADATA = {
    "bronch": {
        "numeric": {"age": (66.0, 6.0), "bmi": (26.0, 4.0)},
        "categorical": {
            "gender": {"female": 0.42, "male": 0.58},
            "smoking_status": {"never": 0.12, "former": 0.48, "current": 0.40},
        },
    },
    "mcl": {
        "numeric": {"age": (63.0, 7.0), "bmi": (27.0, 4.5)},
        "categorical": {
            "gender": {"female": 0.47, "male": 0.53},
            "smoking_status": {"never": 0.20, "former": 0.45, "current": 0.35},
        },
    },
    "vlsp": {
        "numeric": {"age": (57.0, 5.0), "bmi": (28.0, 4.0)},
        "categorical": {
            "gender": {"female": 0.35, "male": 0.65},
            "smoking_status": {"never": 0.05, "former": 0.40, "current": 0.55},
        },
    },
    "li": {
        "numeric": {"age": (61.0, 6.0), "bmi": (27.0, 4.0)},
        "categorical": {
            "gender": {"female": 0.45, "male": 0.55},
            "smoking_status": {"never": 0.18, "former": 0.47, "current": 0.35},
        },
    },
    "nlst": {
        "numeric": {"age": (62.0, 5.0), "bmi": (27.5, 4.2)},
        "categorical": {
            "gender": {"female": 0.41, "male": 0.59},
            "smoking_status": {"never": 0.02, "former": 0.52, "current": 0.46},
        },
    },
}

_COHORT_GROUP = {
    "BRONCH": "bronch",
    "MCL_VUMC": "mcl",
    "MCL_UPMC": "mcl",
    "MCL_DECAMP": "mcl",
    "MCL_UCD": "mcl",
    "VLSP": "vlsp",
    "LI-VUMC": "li",
    "NLST_test_nodule": "nlst",
    "NLST_test": "nlst",
}

# Pooled-space feature geometry (raw units, weighted by 0.1 at fusion time).
# Group centers sit far apart. Within a group, the UPMC/UCD pair and the two
# NLST cohorts sit close enough that the shared metadata profile confuses
# them, while VUMC, DECAMP and the LI cohort stay mostly separable; strays
# are rare. Calibrated empirically against the routing experiment.
_GROUP_RADIUS = 50.0
_MCL_PAIR_ALONG = 13.0
_MCL_PAIR_PERP = 1.5
_MCL_DECAMP_OFFSET = 16.0
_NLST_PAIR_OFFSET = 4.0
_LI_OFFSET = 20.0
_ROW_JITTER_SD = 0.15
_LAYOUT_SEED = 20240601
_TIMEPOINT_PROBS = {1: 0.55, 2: 0.25, 3: 0.20}


def _unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(FEATURE_COLS)
    return v / np.linalg.norm(v)


def _centroid_matrix(pooled: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    jitter = rng.normal(0.0, _ROW_JITTER_SD, size=(FEATURE_ROWS, FEATURE_COLS))
    return np.tile(pooled, (FEATURE_ROWS, 1)) + jitter


def reference_cohort_specs() -> list[CohortSpec]:
    """The nine-cohort suite mirroring the historical routing experiment.

    3750 patients total; AUC profiles come straight from the historical
    per-cohort table, so strategy comparisons on this suite reproduce the
    routed-vs-single-model structure at desk scale.
    """
    rng = np.random.default_rng(_LAYOUT_SEED)
    group_centers = {
        g: _GROUP_RADIUS * _unit(rng) for g in ("bronch", "mcl", "vlsp", "nlst")
    }
    group_centers["li"] = group_centers["nlst"] + _LI_OFFSET * _unit(rng)
    # random 128-d unit vectors are close to orthogonal, so these offsets
    # compose into the intended within-group distances
    mcl_along, mcl_perp, decamp_dir, nodule_dir = (_unit(rng) for _ in range(4))
    mcl_pair = group_centers["mcl"] + _MCL_PAIR_ALONG * mcl_along
    pooled_centers = {
        "BRONCH": group_centers["bronch"],
        "MCL_VUMC": group_centers["mcl"],
        "MCL_UPMC": mcl_pair + _MCL_PAIR_PERP * mcl_perp,
        "MCL_UCD": mcl_pair - _MCL_PAIR_PERP * mcl_perp,
        "MCL_DECAMP": group_centers["mcl"] + _MCL_DECAMP_OFFSET * decamp_dir,
        "VLSP": group_centers["vlsp"],
        "LI-VUMC": group_centers["li"],
        "NLST_test": group_centers["nlst"],
        "NLST_test_nodule": group_centers["nlst"] + _NLST_PAIR_OFFSET * nodule_dir,
    }
    specs = []
    for cohort, size in REFERENCE_SIZES.items():
        meta = _GROUP_METADATA[_COHORT_GROUP[cohort]]
        specs.append(
            CohortSpec(
                name=cohort,
                n_patients=size,
                prevalence=_REFERENCE_PREVALENCE[cohort],
                feature_centroid=_centroid_matrix(pooled_centers[cohort], rng),
                feature_noise_sd=1.0,
                numeric_fields=dict(meta["numeric"]),
                categorical_fields={k: dict(v) for k, v in meta["categorical"].items()},
                model_auc_profile=dict(REFERENCE_MODEL_AUCS[cohort]),
                timepoint_probs=dict(_TIMEPOINT_PROBS),
            )
        )
    return specs


def separability_specs(
    separation: float,
    n_per_cohort: int = 200,
    noise_sd: float = 1.0,
    prevalence: float = 0.5,
    profiles: dict[str, dict[str, float]] | None = None,
    site_field: bool = False,
) -> list[CohortSpec]:
    """Two cohorts whose pooled feature centroids sit `separation`
    pooled-noise standard deviations apart.

    Metadata-free by default, so the fused vector is just the weighted pooled
    features and the separation parameter directly controls the Bayes error of
    retrieval; at separation 0 the cohorts are identical. With site_field each
    cohort additionally carries its own constant site category, making the
    cohorts deterministically separable in the one-hot block regardless of
    feature noise (used to construct datasets where retrieval is provably
    perfect).
    """
    if separation < 0:
        raise ValueError("separation must be >= 0")
    rng = np.random.default_rng(_LAYOUT_SEED + 1)
    base_dir = _unit(rng)
    offset_dir = _unit(rng)
    pooled_sd = noise_sd / math.sqrt(FEATURE_ROWS)
    base = 3.0 * base_dir
    centers = {
        "alpha": base,
        "beta": base + separation * pooled_sd * offset_dir,
    }
    if profiles is None:
        profiles = {name: {"stub": 0.8} for name in centers}
    return [
        CohortSpec(
            name=name,
            n_patients=n_per_cohort,
            prevalence=prevalence,
            feature_centroid=np.tile(centers[name], (FEATURE_ROWS, 1)),
            feature_noise_sd=noise_sd,
            categorical_fields=(
                {"site": {f"site_{name}": 1.0}} if site_field else {}
            ),
            model_auc_profile=dict(profiles[name]),
        )
        for name in centers
    ]
