"""Risk model pool: logistic scores, synthetic binormal stubs, HTTP adapters.

Binormal stubs stand in for heavyweight imaging models: for a target AUC they
draw negatives from N(0, 1) and positives from N(mu, 1) with
mu = sqrt(2) * Phi^-1(target), then map scores through the logistic function
(monotone, so the AUC is preserved). Per-patient draws are seeded from
SHA-256(seed, model id, patient id) so they are reproducible regardless of
evaluation order. Wall time is the configured per-patient cost when one is
set, else measured.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterable, Mapping

import numpy as np
from scipy.stats import norm

from .core import (
    AdapterUnavailableError,
    ModelNotApplicableError,
    PatientRecord,
)

LOGISTIC = "logistic"
ADAPTER = "adapter"
BINORMAL_STUB = "binormal_stub"
KINDS = (LOGISTIC, ADAPTER, BINORMAL_STUB)


@dataclass(frozen=True)
class Requirements:
    """Inputs a model insists on before it can score a record."""

    min_timepoints: int = 1
    required_fields: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.min_timepoints < 1:
            raise ValueError("min_timepoints must be >= 1")
        object.__setattr__(self, "required_fields", tuple(self.required_fields))


@dataclass(frozen=True)
class ModelSpec:
    """Configuration for one registered model; fields beyond `kind` vary by kind."""

    id: str
    kind: str
    requirements: Requirements = Requirements()
    cost_per_patient: float | None = None
    # logistic
    intercept: float = 0.0
    coefficients: dict[str, float] = field(default_factory=dict)
    # binormal_stub
    target_auc_by_cohort: dict[str, float] = field(default_factory=dict)
    default_target_auc: float | None = None
    seed: int = 0
    # adapter
    endpoint: str | None = None
    timeout_s: float = 5.0
    retries: int = 2
    source: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("model id must be non-empty")
        if self.kind not in KINDS:
            raise ValueError(f"model {self.id!r}: unknown kind {self.kind!r}")
        if self.cost_per_patient is not None and self.cost_per_patient < 0:
            raise ValueError(f"model {self.id!r}: negative cost_per_patient")
        if self.kind == ADAPTER and not self.endpoint:
            raise ValueError(f"adapter model {self.id!r} needs an endpoint")
        targets = dict(self.target_auc_by_cohort)
        if self.default_target_auc is not None:
            targets["*"] = self.default_target_auc
        for cohort, target in targets.items():
            if not 0.0 < target < 1.0:
                raise ValueError(
                    f"model {self.id!r}: target AUC {target} for {cohort!r} outside (0, 1)"
                )


@dataclass(frozen=True)
class PredictionOutput:
    probability: float
    wall_time: float


def sigmoid(t: float) -> float:
    """Numerically stable logistic function."""
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def logistic_risk(
    intercept: float, coefficients: Mapping[str, float], covariates: Mapping[str, Any]
) -> float:
    """sigma(b0 + sum_j b_j * v_j) in 64-bit arithmetic."""
    missing = [name for name in coefficients if covariates.get(name) is None]
    if missing:
        raise ValueError(f"missing covariate(s): {', '.join(sorted(missing))}")
    lin = float(intercept)
    for name, beta in coefficients.items():
        value = covariates[name]
        if isinstance(value, bool):
            value = int(value)
        if not isinstance(value, (int, float)):
            raise ValueError(f"covariate {name!r} is not numeric: {value!r}")
        lin += float(beta) * float(value)
    if not math.isfinite(lin):
        raise ValueError("non-finite linear predictor")
    return sigmoid(lin)


def binormal_mu(target_auc: float) -> float:
    """Positive-class mean separation that plants the target AUC."""
    if not 0.0 < target_auc < 1.0:
        raise ValueError(f"target AUC {target_auc} outside (0, 1)")
    return math.sqrt(2.0) * float(norm.ppf(target_auc))


def binormal_scores(target_auc: float, labels: Iterable[int], seed: int) -> np.ndarray:
    """Draw one batch of class-conditional scores mapped to (0, 1)."""
    mu = binormal_mu(target_auc)
    y = np.asarray(list(labels), dtype=np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal(y.size) + mu * y
    return 1.0 / (1.0 + np.exp(-raw))


def requirement_problems(spec: ModelSpec, record: PatientRecord) -> list[str]:
    """Explain every unmet requirement (empty list means applicable)."""
    problems = []
    if record.timepoints < spec.requirements.min_timepoints:
        problems.append(
            f"needs >= {spec.requirements.min_timepoints} timepoints, "
            f"record has {record.timepoints}"
        )
    for name in spec.requirements.required_fields:
        if record.metadata.get(name) is None:
            problems.append(f"required metadata field {name!r} is missing")
    return problems


def _post_json(url: str, payload: dict, timeout_s: float) -> dict:
    """POST a JSON document and decode the JSON reply. Patched in tests."""
    body = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    with urllib.request.urlopen(req, timeout=timeout_s) as resp:
        return json.loads(resp.read().decode("utf-8"))


def _stub_probability(spec: ModelSpec, record: PatientRecord) -> float:
    target = spec.target_auc_by_cohort.get(record.cohort, spec.default_target_auc)
    if target is None:
        raise ValueError(
            f"stub {spec.id!r} has no target AUC for cohort {record.cohort!r}"
        )
    digest = hashlib.sha256(
        f"{spec.seed}|{spec.id}|{record.patient_id}".encode("utf-8")
    ).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    raw = rng.standard_normal() + binormal_mu(target) * record.label
    return sigmoid(raw)


def _adapter_probability(spec: ModelSpec, record: PatientRecord) -> float:
    payload = {
        "patient_id": record.patient_id,
        "metadata": record.metadata,
        "timepoints": record.timepoints,
        "features": record.features.tolist(),
    }
    last: Exception | None = None
    for _ in range(spec.retries + 1):
        try:
            reply = _post_json(spec.endpoint, payload, spec.timeout_s)
            prob = float(reply["probability"])
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"adapter probability {prob} outside [0, 1]")
            return prob
        except (urllib.error.URLError, OSError, KeyError, TypeError, ValueError) as exc:
            last = exc
    raise AdapterUnavailableError(
        f"adapter {spec.id!r} at {spec.endpoint} failed after "
        f"{spec.retries + 1} attempts: {last}"
    )


def predict(spec: ModelSpec, record: PatientRecord) -> PredictionOutput:
    """Score one record with one model, enforcing the model's requirements."""
    problems = requirement_problems(spec, record)
    if problems:
        raise ModelNotApplicableError(
            f"model {spec.id!r} not applicable to {record.patient_id!r}: "
            + "; ".join(problems)
        )
    t0 = time.perf_counter()
    if spec.kind == LOGISTIC:
        covariates = {name: record.metadata.get(name) for name in spec.coefficients}
        prob = logistic_risk(spec.intercept, spec.coefficients, covariates)
    elif spec.kind == BINORMAL_STUB:
        prob = _stub_probability(spec, record)
    else:
        prob = _adapter_probability(spec, record)
    wall = spec.cost_per_patient
    if wall is None:
        wall = time.perf_counter() - t0
    return PredictionOutput(probability=prob, wall_time=wall)


class ModelRegistry:
    """Unique-id registry for the model pool."""

    def __init__(self, specs: Iterable[ModelSpec] = ()):
        self._specs: dict[str, ModelSpec] = {}
        for spec in specs:
            self.register(spec)

    def register(self, spec: ModelSpec) -> None:
        if spec.id in self._specs:
            raise ValueError(f"duplicate model id {spec.id!r}")
        self._specs[spec.id] = spec

    def get(self, model_id: str) -> ModelSpec:
        try:
            return self._specs[model_id]
        except KeyError:
            raise ValueError(f"unknown model {model_id!r}") from None

    def ids(self) -> tuple[str, ...]:
        return tuple(self._specs)

    def __len__(self) -> int:
        return len(self._specs)

    def __contains__(self, model_id: str) -> bool:
        return model_id in self._specs

    def __iter__(self):
        return iter(self._specs.values())


def spec_to_dict(spec: ModelSpec) -> dict[str, Any]:
    out: dict[str, Any] = {"id": spec.id, "kind": spec.kind}
    req = spec.requirements
    if req.min_timepoints != 1 or req.required_fields:
        out["requirements"] = {
            "min_timepoints": req.min_timepoints,
            "required_fields": list(req.required_fields),
        }
    if spec.cost_per_patient is not None:
        out["cost_per_patient"] = spec.cost_per_patient
    if spec.kind == LOGISTIC:
        out["intercept"] = spec.intercept
        out["coefficients"] = dict(spec.coefficients)
    elif spec.kind == BINORMAL_STUB:
        out["target_auc_by_cohort"] = dict(spec.target_auc_by_cohort)
        if spec.default_target_auc is not None:
            out["default_target_auc"] = spec.default_target_auc
        out["seed"] = spec.seed
    else:
        out["endpoint"] = spec.endpoint
        out["timeout_s"] = spec.timeout_s
        out["retries"] = spec.retries
    if spec.source:
        out["source"] = spec.source
    return out


def spec_from_dict(data: dict[str, Any]) -> ModelSpec:
    req = data.get("requirements", {})
    return ModelSpec(
        id=data["id"],
        kind=data["kind"],
        requirements=Requirements(
            min_timepoints=req.get("min_timepoints", 1),
            required_fields=tuple(req.get("required_fields", ())),
        ),
        cost_per_patient=data.get("cost_per_patient"),
        intercept=data.get("intercept", 0.0),
        coefficients=dict(data.get("coefficients", {})),
        target_auc_by_cohort=dict(data.get("target_auc_by_cohort", {})),
        default_target_auc=data.get("default_target_auc"),
        seed=data.get("seed", 0),
        endpoint=data.get("endpoint"),
        timeout_s=data.get("timeout_s", 5.0),
        retries=data.get("retries", 2),
        source=data.get("source"),
    )


def save_specs(path: str, specs: Iterable[ModelSpec]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([spec_to_dict(s) for s in specs], fh, indent=2)
        fh.write("\n")


def load_specs(path: str) -> list[ModelSpec]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError("model config must be a JSON list of spec objects")
    return [spec_from_dict(entry) for entry in data]


def builtin_logistic_specs() -> list[ModelSpec]:
    """The two clinical logistic models shipped as editable config files."""
    specs = []
    for name in ("mayo.json", "brock.json"):
        text = (resources.files("cohortagent") / "configs" / name).read_text("utf-8")
        specs.append(spec_from_dict(json.loads(text)))
    return specs
