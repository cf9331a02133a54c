#!/usr/bin/env python3
"""The full blinded rating protocol, driven by two scripted raters.

Composes the 18-experiment study, serves it in-process, walks two
raters through every 6x6 grid over the HTTP API, and scores false/true
recognition rates plus inter-observer agreement.
"""

import tempfile

import numpy as np

from fastapi.testclient import TestClient

from noduleforge.dataset import ImagePatch
from noduleforge.service import StudyStore, create_app
from noduleforge.study import compose_study, composition

rng = np.random.default_rng(3)


def pool(n, label, provenance):
    return [ImagePatch(np.clip(rng.normal(0, 0.3, (56, 56)), -1, 1),
                       provenance, f"{provenance[:1]}{label or 'x'}{i:03d}",
                       label=label)
            for i in range(n)]


real = pool(150, "benign", "real") + pool(150, "malignant", "real")
generated = {"benign": pool(120, "benign", "generated"),
             "malignant": pool(120, "malignant", "generated"),
             "mixed": pool(120, None, "generated")}

plan, patches = compose_study(real, generated, seed=99)
print("experiment compositions:")
for g in plan.experiments:
    print(f"  E{g.experiment_index:02d}: {composition(g.experiment_index):13s}")

store = StudyStore.initialize(tempfile.mkdtemp() + "/study", "demo", plan,
                              patches, owner_token="tok")
client = TestClient(create_app(store))

# rater A guesses by position; rater B answers from the hidden truth
truth = {g.experiment_index: {c.cell_id: c for c in g.cells}
         for g in plan.experiments}

for rater in ("rater-a", "rater-b"):
    sid = client.post("/studies/demo/sessions",
                      json={"rater_id": rater}).json()["session_id"]
    for index in range(1, 19):
        grid = client.get(f"/sessions/{sid}/grids/{index}").json()
        answers = []
        for i, cell in enumerate(grid["cells"]):
            if rater == "rater-a":
                realness = "real" if i % 2 else "generated"
                call = "benign" if i % 3 else "malignant"
            else:
                hidden = truth[index][cell["cell_id"]]
                realness = hidden.truth_provenance
                call = hidden.truth_label or "benign"
            r = {"cell_id": cell["cell_id"], "realness": realness}
            if grid["class_call_required"]:
                r["class_call"] = call
            answers.append(r)
        client.post(f"/sessions/{sid}/grids/{index}/responses",
                    json={"responses": answers})
    client.post(f"/sessions/{sid}/lock")

report = client.post("/studies/demo/score",
                     headers={"X-Owner-Token": "tok"}).json()
print("\nscore report:")
for rater, scores in report["raters"].items():
    print(f"  {rater}: mean FRR {scores['mean_frr']}  "
          f"mean TRR {scores['mean_trr']}")
print(f"  agreement on realness:        {report['agreement']['realness']}%")
print(f"  agreement on benign/malignant: {report['agreement']['class_call']}%")
print("\n(the truthful rater scores 100/100; FRR is undefined on the six"
      "\nall-real grids and absent from their entries)")
