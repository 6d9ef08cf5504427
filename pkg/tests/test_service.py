"""HTTP service handlers, exercised as pure functions and over a live socket."""

import json
import math
import threading
import urllib.error
import urllib.request

import pytest

from cohortagent.agent import AgentRuntime, predict_record
from cohortagent.core import LlmUnavailableError
from cohortagent.fusion import FusionConfig, fit_encoding, fuse
from cohortagent.models import ModelRegistry, ModelSpec, Requirements
from cohortagent.policy import LlmBackend, PerformanceTable, RuleBackend
from cohortagent.service import (
    ServiceState,
    health_response,
    make_server,
    predict_response,
)
from cohortagent import synth
from cohortagent.vindex import VectorIndex


@pytest.fixture(scope="module")
def world():
    specs = synth.separability_specs(separation=10.0, n_per_cohort=30)
    dataset = synth.generate(specs, seed=3)
    registry = synth.stub_registry(specs, seed=3)
    config = FusionConfig()
    stats = fit_encoding(dataset.records, dataset.schema)
    index = VectorIndex.build(
        [(fuse(r, stats, config), r.cohort, r.patient_id) for r in dataset.records],
        "l2",
    )
    runtime = AgentRuntime(
        stats=stats,
        fusion_config=config,
        index=index,
        registry=registry,
        table=dataset.table,
        backend=RuleBackend(),
    )
    return runtime, dataset


@pytest.fixture(scope="module")
def state(world):
    runtime, dataset = world
    return ServiceState(runtime=runtime, records=list(dataset.records))


def post(state, payload) -> tuple[int, dict]:
    body = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
    return predict_response(state, body)


class TestHealth:
    def test_unloaded_service_reports_unavailable(self):
        assert health_response(ServiceState()) == (503, {"error": "no index loaded"})

    def test_loaded_service_summarizes_the_runtime(self, world, state):
        runtime, _ = world
        status, doc = health_response(state)
        assert status == 200
        assert doc == {
            "status": "ok",
            "index_size": 60,
            "dimension": runtime.index.dimension,
            "metric": "l2",
            "models": 1,
            "backend": "rule",
        }


class TestPredictInline:
    def test_success_reply_shape(self, world, state):
        _, dataset = world
        rec = dataset.records[0]
        status, doc = post(state, {"features": rec.features.tolist()})
        assert status == 200
        assert set(doc) == {"risk", "model", "cohort", "neighbor_ids", "votes", "timing_ms"}
        assert doc["model"] == "stub"
        assert doc["cohort"] == "alpha"
        assert 0.0 < doc["risk"] < 1.0
        assert len(doc["neighbor_ids"]) == 15
        # the query duplicates a stored vector, so that patient comes back first
        assert doc["neighbor_ids"][0] == rec.patient_id
        assert sum(doc["votes"].values()) == 15
        assert doc["timing_ms"] == pytest.approx(10.0)

    def test_identical_requests_get_identical_replies(self, world, state):
        _, dataset = world
        payload = {"features": dataset.records[5].features.tolist(), "metadata": {}}
        assert post(state, payload) == post(state, payload)

    def test_k_override_changes_the_neighborhood(self, world, state):
        _, dataset = world
        payload = {"features": dataset.records[2].features.tolist(), "k": 3}
        status, doc = post(state, payload)
        assert status == 200
        assert len(doc["neighbor_ids"]) == 3
        assert sum(doc["votes"].values()) == 3


class TestPredictByReference:
    def test_matches_the_in_process_agent(self, world, state):
        runtime, dataset = world
        status, doc = post(state, {"feature_ref": 7})
        assert status == 200
        direct = predict_record(runtime, dataset.records[7])
        assert doc["risk"] == direct.risk.probability
        assert doc["model"] == direct.risk.model
        assert doc["cohort"] == direct.risk.cohort
        assert doc["neighbor_ids"] == list(direct.risk.neighbor_ids)
        assert doc["votes"] == direct.assignment.vote_counts

    def test_metadata_override_is_accepted(self, state):
        status, doc = post(state, {"feature_ref": 31, "metadata": {"note": "x"}})
        assert status == 200
        assert doc["cohort"] == "beta"

    def test_without_a_record_store(self, world):
        runtime, _ = world
        bare = ServiceState(runtime=runtime, records=None)
        status, doc = post(bare, {"feature_ref": 0})
        assert status == 400
        assert "no record store" in doc["error"]


FIVE_BY_128 = [[0.0] * 128 for _ in range(5)]


class TestPredictRejections:
    @pytest.mark.parametrize(
        "payload, fragment",
        [
            ({}, "exactly one of features or feature_ref"),
            ({"features": FIVE_BY_128, "feature_ref": 0}, "exactly one of"),
            ({"feature_ref": "0"}, "feature_ref must be an integer"),
            ({"feature_ref": True}, "feature_ref must be an integer"),
            ({"feature_ref": -1}, "out of range (store holds 60)"),
            ({"feature_ref": 60}, "out of range (store holds 60)"),
            ({"features": [[1.0, 2.0]]}, "features must be 5x128"),
            ({"features": [[math.inf] * 128] * 5}, "non-finite feature value"),
            ({"features": FIVE_BY_128, "metadata": 3}, "metadata must be an object"),
            ({"feature_ref": 0, "metadata": [1]}, "metadata must be an object"),
            ({"features": FIVE_BY_128, "extra": 1}, "unknown field(s) ['extra']"),
            ({"feature_ref": 0, "k": 0}, "k must be an integer >= 1"),
            ({"feature_ref": 0, "k": True}, "k must be an integer >= 1"),
            ({"feature_ref": 0, "k": "5"}, "k must be an integer >= 1"),
        ],
    )
    def test_bad_payloads_are_400(self, state, payload, fragment):
        status, doc = post(state, payload)
        assert status == 400
        assert fragment in doc["error"]

    def test_unparseable_body_is_400(self, state):
        status, doc = post(state, b"{oops")
        assert status == 400
        assert "malformed JSON body" in doc["error"]

    def test_non_object_body_is_400(self, state):
        status, doc = post(state, b"[1, 2]")
        assert status == 400
        assert doc["error"] == "request body must be a JSON object"

    def test_no_runtime_is_503(self):
        status, doc = post(ServiceState(), {"feature_ref": 0})
        assert status == 503
        assert doc["error"] == "no index loaded"


class TestBackendFailures:
    def test_unsatisfiable_cohort_is_422(self, world):
        runtime, dataset = world
        picky = ModelRegistry(
            [
                ModelSpec(
                    id="picky",
                    kind="binormal_stub",
                    requirements=Requirements(min_timepoints=2),
                    target_auc_by_cohort={"alpha": 0.8, "beta": 0.8},
                    default_target_auc=0.8,
                    seed=1,
                    cost_per_patient=0.01,
                )
            ]
        )
        table = PerformanceTable.from_rows(
            [("alpha", "picky", 0.8, True), ("beta", "picky", 0.8, True)]
        )
        strict = ServiceState(
            runtime=AgentRuntime(
                stats=runtime.stats,
                fusion_config=runtime.fusion_config,
                index=runtime.index,
                registry=picky,
                table=table,
                backend=RuleBackend(),
            ),
            records=list(dataset.records),
        )
        # inline queries carry a single timepoint, below picky's minimum
        status, doc = post(strict, {"features": dataset.records[0].features.tolist()})
        assert status == 422
        assert "no applicable model" in doc["error"]

    def test_unreachable_llm_without_fallback_is_503(self, world):
        runtime, dataset = world

        def boom(prompt: str) -> str:
            raise LlmUnavailableError("llm down")

        state = ServiceState(
            runtime=AgentRuntime(
                stats=runtime.stats,
                fusion_config=runtime.fusion_config,
                index=runtime.index,
                registry=runtime.registry,
                table=runtime.table,
                backend=LlmBackend(
                    url="http://127.0.0.1:9", fallback=False, completion_fn=boom
                ),
            ),
            records=list(dataset.records),
        )
        status, doc = post(state, {"feature_ref": 0})
        assert status == 503
        assert "error" in doc


@pytest.fixture(scope="module")
def server_url(world):
    runtime, dataset = world
    state = ServiceState(
        runtime=runtime, records=list(dataset.records), max_body_bytes=2048
    )
    server = make_server(state, "127.0.0.1", 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def http(url, data=None):
    request = urllib.request.Request(
        url, data=data, headers={"Content-Type": "application/json"} if data else {}
    )
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            return response.status, json.loads(response.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


class TestLiveServer:
    def test_health_over_the_wire(self, server_url):
        status, doc = http(f"{server_url}/v1/health")
        assert status == 200
        assert doc["status"] == "ok"
        assert doc["index_size"] == 60

    def test_predict_over_the_wire(self, world, server_url):
        runtime, dataset = world
        status, doc = http(
            f"{server_url}/v1/predict", json.dumps({"feature_ref": 3}).encode()
        )
        assert status == 200
        direct = predict_record(runtime, dataset.records[3])
        assert doc["risk"] == direct.risk.probability
        assert doc["cohort"] == direct.risk.cohort

    def test_unknown_path_is_404(self, server_url):
        status, doc = http(f"{server_url}/v1/nope")
        assert status == 404
        assert "no such path /v1/nope" in doc["error"]
        status, doc = http(f"{server_url}/v1/nope", b"{}")
        assert status == 404

    def test_oversized_body_is_413(self, server_url):
        body = json.dumps({"feature_ref": 0, "metadata": {"pad": "x" * 3000}}).encode()
        status, doc = http(f"{server_url}/v1/predict", body)
        assert status == 413
        assert doc["error"] == "body exceeds 2048 bytes"

    def test_wire_level_garbage_is_400(self, server_url):
        status, doc = http(f"{server_url}/v1/predict", b"not json at all")
        assert status == 400
        assert "malformed JSON body" in doc["error"]

    def test_concurrent_requests_agree_with_sequential_replies(self, server_url):
        url = f"{server_url}/v1/predict"
        expected = [http(url, json.dumps({"feature_ref": i}).encode()) for i in range(8)]
        results = [None] * 8

        def hit(i):
            results[i] = http(url, json.dumps({"feature_ref": i}).encode())

        threads = [threading.Thread(target=hit, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == expected
