"""JSON model files.

Layout::

    {"blocks":  [{"id": 0, "kind": "constant", "params": {"value": 1.0}, "label": "src"}, ...],
     "wires":   [{"src": [0, 0], "dst": [1, 0]}, ...],
     "inputs":  [[1, 0], ...],
     "outputs": [[1, 0], ...],
     "output_names": ["y", ...]}

``label`` and ``output_names`` are optional.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import InvalidBlock
from .blocks import Block, make_kind
from .model import Model, validate_and_order


def model_to_dict(model: Model) -> dict:
    doc = {
        "blocks": [
            {"id": b.id, "kind": b.kind.name, "params": b.kind.params(),
             **({"label": b.label} if b.label else {})}
            for b in model.blocks
        ],
        "wires": [{"src": list(w.src), "dst": list(w.dst)} for w in model.wires],
        "inputs": [list(p) for p in model.inputs],
        "outputs": [list(p) for p in model.outputs],
    }
    if model.output_names:
        doc["output_names"] = list(model.output_names)
    return doc


def model_from_dict(doc: dict) -> Model:
    try:
        blocks = sorted(
            (Block(int(b["id"]), make_kind(b["kind"], b.get("params")), b.get("label", ""))
             for b in doc["blocks"]),
            key=lambda b: b.id,
        )
        wires = [(w["src"], w["dst"]) for w in doc.get("wires", [])]
    except (KeyError, TypeError) as exc:
        raise InvalidBlock(f"malformed model document: {exc!r}") from None
    return validate_and_order(blocks, wires, doc.get("inputs", []), doc.get("outputs", []),
                              doc.get("output_names", []))


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path: str | Path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))
