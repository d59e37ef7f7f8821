"""Drive the human-in-the-loop annotation service with a scripted annotator.

Starts the HTTP service in-process, then plays the role of the human:
poll for the next pair, decide which side is more severe (here: from the
ground truth, where a person would look at the two samples), submit, and
watch the loop retrain and re-queue until it finishes.

Against a live server the same traffic flows over
  GET  /runs/{id}/next-pair
  POST /runs/{id}/labels   {"pair_id": ..., "label": 0 | 0.5 | 1}
  GET  /runs/{id}/status
  GET  /runs/{id}/scores
which is exactly what the browser UI in frontend/ speaks.
"""

import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

from activerank import LoopConfig, SimulatedOracle, SynthConfig, TrainConfig
from activerank import init_network, split_groupwise, synth_generate
from activerank.service import AnnotationServer, create_app

dataset = synth_generate(SynthConfig(n=400, seed=3, noise_scale=0.3))
split = split_groupwise(dataset, seed=3)

server = AnnotationServer(
    run_id="demo",
    split=split,
    loop_config=LoopConfig(r_percent=20, s_percent=5, rounds=2, draws=10,
                           sampler="ubs", seed=3),
    train_config=TrainConfig(batch_size=16, epochs_per_round=5,
                             learning_rate=1e-2, seed=1),
    params=init_network([dataset.feature_dim, 16, 1], seed=0,
                        dropout_rate=0.2, weight_decay=1e-4),
    out_dir=Path(tempfile.mkdtemp()) / "demo-run",
)
client = TestClient(create_app(server))
server.start()

answered = 0
while True:
    status = client.get("/runs/demo/status").json()
    if status["phase"] == "done":
        break
    if status["phase"] == "training":
        time.sleep(0.05)
        continue
    pair = client.get("/runs/demo/next-pair")
    if pair.status_code != 200:
        time.sleep(0.05)
        continue
    payload = pair.json()
    left = split.train[payload["left"]["id"]].ordinal_label
    right = split.train[payload["right"]["id"]].ordinal_label
    label = 1.0 if left > right else (0.5 if left == right else 0.0)
    client.post("/runs/demo/labels",
                json={"pair_id": payload["pair_id"], "label": label})
    answered += 1
    if answered % 25 == 0:
        print(f"  labeled {answered} pairs (round {payload['round']})")

server.join(timeout=60)
status = client.get("/runs/demo/status").json()
print(f"\nloop finished: {status['labeled_count']} pairs labeled over "
      f"{status['total_rounds']} selection rounds "
      f"({100 * status['labeling_ratio']:.0f}% labeling ratio)")
scores = client.get("/runs/demo/scores").text.splitlines()
print(f"score dump has {len(scores) - 1} rows, e.g. {scores[1]}")
print(f"run artifacts in {server.out_dir}")
