"""Command-line interface.

Subcommands: generate, ingest, build-index, retrieve, predict, evaluate,
serve. Every flag can also be supplied via a JSON run-config file (--config);
explicit flags win. Exit codes: 0 success, 1 failure with a diagnostic on
stderr, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Any

from . import dataio, models, synth
from .agent import runtime_from_paths, predict_record
from .core import (
    DEFAULT_FEATURE_WEIGHT,
    DEFAULT_HOLDOUT_FRACTION,
    DEFAULT_K,
    DEFAULT_SEED,
    CohortAgentError,
    validate_record,
)
from .evaluation import (
    SplitSpec,
    Strategy,
    StrategyReport,
    bootstrap_delta_auc,
    overall_auc_ci,
    parse_strategy,
    retrieval_configuration_rows,
    run_strategy,
    split,
)
from .fusion import FusionConfig, fit_encoding, fuse
from .policy import LlmBackend, PerformanceTable, RuleBackend
from .retrieval import majority_vote
from .service import ServiceState, serve_forever
from .vindex import COSINE, L2, VectorIndex, load as load_index

_PRESETS = ("reference", "pair")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cohortagent",
        description="Cohort-aware model routing for individualized risk prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run-config file; explicit flags override")
        return p

    p = add("generate", "write a synthetic dataset in the ingestion format")
    p.add_argument("--out-dir")
    p.add_argument("--preset", choices=_PRESETS)
    p.add_argument("--separation", type=float, help="pair preset: centroid separation")
    p.add_argument("--n-per-cohort", type=int, help="pair preset: patients per cohort")
    p.add_argument("--seed", type=int)

    p = add("ingest", "validate a dataset and report what it contains")
    p.add_argument("--records")
    p.add_argument("--features")
    p.add_argument("--schema")
    p.add_argument("--lenient", action="store_true", default=None,
                   help="ignore unknown record fields")

    p = add("build-index", "fuse records and build a searchable index")
    p.add_argument("--records")
    p.add_argument("--features")
    p.add_argument("--schema")
    p.add_argument("--out")
    p.add_argument("--stats-out")
    p.add_argument("--metric", choices=(L2, COSINE))
    p.add_argument("--alpha", type=float)
    p.add_argument("--aggregation", choices=("pooled", "flattened"))

    p = add("retrieve", "assign cohorts to query patients by majority vote")
    p.add_argument("--records")
    p.add_argument("--features")
    p.add_argument("--index")
    p.add_argument("--stats")
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--aggregation", choices=("pooled", "flattened"))

    p = add("predict", "run the full two-stage agent for one patient")
    p.add_argument("--patient-id")
    p.add_argument("--records")
    p.add_argument("--features")
    p.add_argument("--index")
    p.add_argument("--stats")
    p.add_argument("--models")
    p.add_argument("--table")
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--aggregation", choices=("pooled", "flattened"))
    p.add_argument("--backend", choices=("rule", "llm"))
    p.add_argument("--llm-endpoint")
    p.add_argument("--llm-model")

    p = add("evaluate", "compare routing strategies on a holdout split")
    p.add_argument("--records")
    p.add_argument("--features")
    p.add_argument("--schema")
    p.add_argument("--models")
    p.add_argument("--table")
    p.add_argument("--strategy", action="append",
                   help="retrieval | per_cohort_best | single:MODEL (repeatable)")
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--metric", choices=(L2, COSINE))
    p.add_argument("--aggregation", choices=("pooled", "flattened"))
    p.add_argument("--seed", type=int)
    p.add_argument("--resamples", type=int)
    p.add_argument("--holdout-fraction", type=float)
    p.add_argument("--backend", choices=("rule", "llm"))
    p.add_argument("--llm-endpoint")
    p.add_argument("--llm-model")
    p.add_argument("--out-dir", help="also write per-strategy report files here")
    p.add_argument("--configuration-matrix", action="store_true", default=None,
                   help="also run the four-configuration retrieval accuracy matrix")

    p = add("serve", "expose the agent over HTTP")
    p.add_argument("--records")
    p.add_argument("--features")
    p.add_argument("--index")
    p.add_argument("--stats")
    p.add_argument("--models")
    p.add_argument("--table")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--aggregation", choices=("pooled", "flattened"))
    p.add_argument("--backend", choices=("rule", "llm"))
    p.add_argument("--llm-endpoint")
    p.add_argument("--llm-model")
    p.add_argument("--max-body-bytes", type=int)

    return parser


class _Options:
    """Flag values merged over a run-config file, flags winning."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        self._config: dict[str, Any] = {}
        path = self._args.get("config")
        if path:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
            if not isinstance(doc, dict):
                raise ValueError("run-config file must hold a JSON object")
            self._config = {str(k).replace("-", "_"): v for k, v in doc.items()}

    def get(self, name: str, default: Any = None) -> Any:
        value = self._args.get(name)
        if value is not None:
            return value
        if name in self._config:
            return self._config[name]
        return default

    def require(self, name: str) -> Any:
        value = self.get(name)
        if value is None:
            raise ValueError(f"missing required option --{name.replace('_', '-')}")
        return value


def _fusion_config(opt: _Options) -> FusionConfig:
    return FusionConfig(
        aggregation=opt.get("aggregation", "pooled"),
        feature_weight=float(opt.get("alpha", DEFAULT_FEATURE_WEIGHT)),
    )


def _backend(opt: _Options):
    kind = opt.get("backend", "rule")
    if kind == "rule":
        return RuleBackend()
    return LlmBackend(url=opt.require("llm_endpoint"), model=opt.get("llm_model", ""))


def _cmd_generate(opt: _Options) -> int:
    out_dir = opt.require("out_dir")
    preset = opt.get("preset", "reference")
    seed = int(opt.get("seed", DEFAULT_SEED))
    if preset == "reference":
        specs = synth.reference_cohort_specs()
    elif preset == "pair":
        specs = synth.separability_specs(
            separation=float(opt.get("separation", 10.0)),
            n_per_cohort=int(opt.get("n_per_cohort", 200)),
        )
    else:
        raise ValueError(f"unknown preset {preset!r}")
    dataset = synth.generate(specs, seed=seed)
    registry = synth.stub_registry(specs, seed=seed)
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "records": os.path.join(out_dir, "records.jsonl"),
        "features": os.path.join(out_dir, "features.cafv"),
        "schema": os.path.join(out_dir, "schema.json"),
        "table": os.path.join(out_dir, "performance.csv"),
        "models": os.path.join(out_dir, "models.json"),
    }
    dataio.write_dataset(paths["records"], paths["features"], dataset.records)
    dataio.save_schema(paths["schema"], dataset.schema)
    dataset.table.to_csv(paths["table"])
    models.save_specs(paths["models"], list(registry))
    print(
        json.dumps(
            {
                "preset": preset,
                "seed": seed,
                "patients": len(dataset.records),
                "cohorts": len(specs),
                "files": paths,
            }
        )
    )
    return 0


def _cmd_ingest(opt: _Options) -> int:
    records = dataio.read_records(
        opt.require("records"),
        opt.require("features"),
        lenient=bool(opt.get("lenient", False)),
    )
    cohorts = sorted({r.cohort for r in records})
    invalid = 0
    schema_path = opt.get("schema")
    if schema_path:
        schema = dataio.load_schema(schema_path)
        for rec in records:
            try:
                validate_record(rec, schema, cohorts=tuple(cohorts))
            except CohortAgentError as exc:
                invalid += 1
                if invalid <= 10:
                    print(str(exc), file=sys.stderr)
    print(
        json.dumps(
            {
                "records": len(records),
                "cohorts": len(cohorts),
                "invalid": invalid,
            }
        )
    )
    return 1 if invalid else 0


def _cmd_build_index(opt: _Options) -> int:
    records = dataio.read_records(opt.require("records"), opt.require("features"))
    schema = dataio.load_schema(opt.require("schema"))
    config = _fusion_config(opt)
    metric = opt.get("metric", COSINE)
    stats = fit_encoding(records, schema)
    index = VectorIndex.build(
        [(fuse(r, stats, config), r.cohort, r.patient_id) for r in records], metric
    )
    index.save(opt.require("out"))
    dataio.save_encoding_stats(opt.require("stats_out"), stats)
    print(
        json.dumps(
            {
                "indexed": index.size,
                "dimension": index.dimension,
                "metric": metric,
                "aggregation": config.aggregation,
                "alpha": config.feature_weight,
            }
        )
    )
    return 0


def _cmd_retrieve(opt: _Options) -> int:
    records = dataio.read_records(opt.require("records"), opt.require("features"))
    index = load_index(opt.require("index"))
    stats = dataio.load_encoding_stats(opt.require("stats"))
    config = _fusion_config(opt)
    k = int(opt.get("k", DEFAULT_K))
    for rec in records:
        assignment = majority_vote(index.search(fuse(rec, stats, config), k))
        print(
            f"{rec.patient_id}\t{rec.cohort}\t{assignment.cohort}\t"
            + json.dumps(assignment.vote_counts)
        )
    return 0


def _cmd_predict(opt: _Options) -> int:
    runtime, records = runtime_from_paths(
        records_path=opt.require("records"),
        features_path=opt.require("features"),
        index_path=opt.require("index"),
        stats_path=opt.require("stats"),
        models_path=opt.require("models"),
        table_path=opt.require("table"),
        fusion_config=_fusion_config(opt),
        backend=_backend(opt),
        k=int(opt.get("k", DEFAULT_K)),
    )
    patient_id = opt.require("patient_id")
    matches = [r for r in records if r.patient_id == patient_id]
    if not matches:
        raise ValueError(f"patient {patient_id!r} not found in the record file")
    result = predict_record(runtime, matches[0])
    print(
        json.dumps(
            {
                "patient_id": patient_id,
                "risk": result.risk.probability,
                "model": result.risk.model,
                "cohort": result.risk.cohort,
                "neighbor_ids": list(result.risk.neighbor_ids),
                "votes": result.assignment.vote_counts,
                "backend": result.decision.backend,
                "fell_back": result.decision.fell_back,
            }
        )
    )
    return 0


def _format_report(report: StrategyReport, ci: tuple[float, float]) -> str:
    lines = [
        f"strategy: {report.strategy}",
        f"  overall AUC {report.overall_auc:.4f}  "
        f"CI[{ci[0]:.4f}, {ci[1]:.4f}]  time {report.overall_time:.2f}s  "
        f"fallbacks {report.fallback_count}",
    ]
    width = max(len(c) for c in report.per_cohort)
    for cohort, res in report.per_cohort.items():
        shown = "nan" if math.isnan(res.auc) else f"{res.auc:.4f}"
        lines.append(
            f"  {cohort:<{width}}  AUC {shown:>6}  n {res.n:>4}  "
            f"pos {res.n_pos:>4}  time {res.wall_time:.2f}s"
        )
    return "\n".join(lines)


def _report_rows(report: StrategyReport, ci: tuple[float, float]) -> list[dict]:
    rows: list[dict] = []
    for cohort, res in report.per_cohort.items():
        rows.append(
            {
                "cohort": cohort,
                "auc": None if math.isnan(res.auc) else res.auc,
                "n": res.n,
                "n_pos": res.n_pos,
                "wall_time": res.wall_time,
            }
        )
    rows.append(
        {
            "strategy": report.strategy,
            "overall_auc": report.overall_auc,
            "ci": [ci[0], ci[1]],
            "overall_time": report.overall_time,
            "fallbacks": report.fallback_count,
            "config": report.config,
        }
    )
    return rows


def _cmd_evaluate(opt: _Options) -> int:
    records = dataio.read_records(opt.require("records"), opt.require("features"))
    schema = dataio.load_schema(opt.require("schema"))
    registry = models.ModelRegistry(models.load_specs(opt.require("models")))
    table = PerformanceTable.from_csv(opt.require("table"))
    seed = int(opt.get("seed", DEFAULT_SEED))
    resamples = int(opt.get("resamples", 1000))
    k = int(opt.get("k", DEFAULT_K))
    metric = opt.get("metric", COSINE)
    config = _fusion_config(opt)
    backend = _backend(opt)
    holdout_fraction = float(opt.get("holdout_fraction", DEFAULT_HOLDOUT_FRACTION))

    strategy_texts = opt.get("strategy")
    if not strategy_texts:
        strategy_texts = ["retrieval", "per_cohort_best"] + [
            f"single:{m}" for m in table.models()
        ]
    strategies = [parse_strategy(s) for s in strategy_texts]

    database, holdout = split(records, SplitSpec(holdout_fraction, seed))
    stats = fit_encoding(database, schema)
    print(
        json.dumps(
            {
                "seed": seed,
                "database": len(database),
                "holdout": len(holdout),
                "k": k,
                "metric": metric,
                "aggregation": config.aggregation,
                "alpha": config.feature_weight,
                "resamples": resamples,
            }
        )
    )

    out_dir = opt.get("out_dir")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    reports: dict[str, StrategyReport] = {}
    for strategy in strategies:
        report = run_strategy(
            strategy,
            database,
            holdout,
            registry,
            table,
            stats=stats,
            fusion_config=config,
            k=k,
            metric=metric,
            backend=backend,
        )
        ci = overall_auc_ci(report, n_resamples=resamples, seed=seed)
        reports[strategy.label] = report
        print(_format_report(report, ci))
        if report.confusion is not None:
            print("retrieval confusion (rows = true cohort):")
            print(report.confusion.format())
        if out_dir:
            path = os.path.join(out_dir, f"report_{strategy.label}.jsonl")
            with open(path, "w", encoding="utf-8") as fh:
                for row in _report_rows(report, ci):
                    fh.write(json.dumps(row))
                    fh.write("\n")

    if "retrieval" in reports and "per_cohort_best" in reports:
        delta = bootstrap_delta_auc(
            reports["retrieval"],
            reports["per_cohort_best"],
            n_resamples=resamples,
            seed=seed,
        )
        line = (
            f"delta AUC (retrieval - per_cohort_best): {delta.mean_delta:+.4f}  "
            f"{delta.level:.0%} CI [{delta.low:+.4f}, {delta.high:+.4f}]  "
            f"({delta.n_resamples} resamples)"
        )
        print(line)
        if out_dir:
            with open(os.path.join(out_dir, "delta_auc.json"), "w", encoding="utf-8") as fh:
                json.dump(
                    {
                        "mean_delta": delta.mean_delta,
                        "low": delta.low,
                        "high": delta.high,
                        "level": delta.level,
                        "n_resamples": delta.n_resamples,
                    },
                    fh,
                    indent=2,
                )
                fh.write("\n")

    if opt.get("configuration_matrix", False):
        rows = retrieval_configuration_rows(
            database, holdout, stats, k=k, feature_weight=config.feature_weight
        )
        print("retrieval configuration matrix:")
        for row in rows:
            agg = row["aggregation"] or "-"
            print(
                f"  {row['input']:<20} {agg:<10} {row['metric']:<7} "
                f"accuracy {row['accuracy']:.4f} (n={row['n']})"
            )
        if out_dir:
            with open(
                os.path.join(out_dir, "configuration_matrix.jsonl"), "w", encoding="utf-8"
            ) as fh:
                for row in rows:
                    fh.write(json.dumps(row))
                    fh.write("\n")
    return 0


def _cmd_serve(opt: _Options) -> int:
    runtime, records = runtime_from_paths(
        records_path=opt.require("records"),
        features_path=opt.require("features"),
        index_path=opt.require("index"),
        stats_path=opt.require("stats"),
        models_path=opt.require("models"),
        table_path=opt.require("table"),
        fusion_config=_fusion_config(opt),
        backend=_backend(opt),
        k=int(opt.get("k", DEFAULT_K)),
    )
    state = ServiceState(
        runtime=runtime,
        records=records,
        max_body_bytes=int(opt.get("max_body_bytes", 1 << 20)),
    )
    host = opt.get("host", "127.0.0.1")
    port = int(opt.get("port", 8000))
    print(json.dumps({"listening": f"http://{host}:{port}", "index_size": runtime.index.size}))
    sys.stdout.flush()
    serve_forever(state, host, port)
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "ingest": _cmd_ingest,
    "build-index": _cmd_build_index,
    "retrieve": _cmd_retrieve,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        opt = _Options(args)
        return _COMMANDS[args.command](opt)
    except (CohortAgentError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
