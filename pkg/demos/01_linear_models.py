"""
LIN1 models: hand-checkable classifiers
=======================================

Every model served by the gateway is a LIN1 document: a JSON file holding
the weights, bias and labels of a linear classifier. Predictions are plain
dot products followed by an argmax, so you can verify any served output
with pencil and paper.
"""

import json

import numpy as np

from ensemblegate import InputShape, SampleBatch, linear_predict, parse_model_file

# A two-class model on 2-dimensional inputs. Identity weights mean the
# prediction is just "which component is larger?".
document = {
    "format": "lin1",
    "id": "demo",
    "input_shape": [2],
    "labels": ["absent", "present"],
    "weights": [[1.0, 0.0], [0.0, 1.0]],
    "bias": [0.0, 0.0],
}
model = parse_model_file(json.dumps(document).encode())
print(f"loaded model {model.id!r}: K={model.num_classes} classes, "
      f"D={model.input_shape.flat_size} inputs, {model.parameter_bytes} bytes")

# Predict a small batch. Sample [0.2, 0.9]: the second component wins, so the
# model answers index 1 = "present". Sample [0.5, 0.5] is a tie, and ties
# always go to the lowest index.
batch = SampleBatch(InputShape((2,)), np.array([[0.2, 0.9], [0.5, 0.5]], dtype=np.float32))
indices = linear_predict(model, batch)
print("predicted indices:", indices)
print("predicted labels: ", [model.labels[k] for k in indices])

# The same result by hand, in double precision:
for row in batch.data:
    logits = [sum(float(w) * float(x) for w, x in zip(weight_row, row)) + float(b)
              for weight_row, b in zip(model.weights, model.bias)]
    print(f"sample {row.tolist()} -> logits {logits}")

# Malformed documents are rejected outright rather than served half-parsed.
broken = dict(document, weights=[[1.0, 0.0, 99.0], [0.0, 1.0]])
try:
    parse_model_file(json.dumps(broken).encode())
except Exception as exc:
    print(f"malformed document rejected: {exc}")
