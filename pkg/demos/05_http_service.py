"""
Serving predictions over HTTP
=============================

Stands the prediction service up on an ephemeral port, checks its health
endpoint, posts one stored-patient request (feature_ref) and one anonymous
inline-features request, then shuts the server down. The same state bundle
serves every thread, so identical requests always get identical replies.
"""

import json
import threading
import urllib.request

import cohortagent as ca
from cohortagent.service import ServiceState, make_server

# 1. a small world and its runtime, all in memory
specs = ca.separability_specs(8.0, n_per_cohort=60)
dataset = ca.generate(specs, seed=5)
registry = ca.stub_registry(specs, seed=5)
stats = ca.fit_encoding(dataset.records, dataset.schema)
config = ca.FusionConfig()
index = ca.VectorIndex.build(
    [(ca.fuse(r, stats, config), r.cohort, r.patient_id) for r in dataset.records],
    "l2",
)
runtime = ca.AgentRuntime(
    stats=stats,
    fusion_config=config,
    index=index,
    registry=registry,
    table=dataset.table,
    backend=ca.RuleBackend(),
)

# 2. serve on port 0 = whatever the OS hands out
state = ServiceState(runtime=runtime, records=list(dataset.records))
server = make_server(state, "127.0.0.1", 0)
base = f"http://127.0.0.1:{server.server_address[1]}"
threading.Thread(target=server.serve_forever, daemon=True).start()
print(f"serving on {base}")


def call(path, payload=None):
    data = None if payload is None else json.dumps(payload).encode()
    headers = {"Content-Type": "application/json"} if data else {}
    with urllib.request.urlopen(
        urllib.request.Request(base + path, data=data, headers=headers), timeout=10
    ) as response:
        return json.loads(response.read())


# 3. health, then a stored patient by position, then an anonymous query
print("health:", call("/v1/health"))

reply = call("/v1/predict", {"feature_ref": 3})
print(
    f"feature_ref 3 ({dataset.records[3].patient_id}): "
    f"cohort {reply['cohort']}, model {reply['model']}, risk {reply['risk']:.3f}"
)

inline = call(
    "/v1/predict",
    {"features": dataset.records[90].features.tolist(), "k": 7},
)
print(
    f"inline features: cohort {inline['cohort']}, model {inline['model']}, "
    f"risk {inline['risk']:.3f}, votes {inline['votes']}"
)

server.shutdown()
server.server_close()
print("server stopped")
