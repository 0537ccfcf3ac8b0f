"""Text matrix format and model snapshots.

A matrix file looks like::

    srnmat 1
    2 3
    1 0 0
    0 2.5 -1

Values are written with 17 significant digits, which round-trips float64.
A model snapshot is a directory holding ``layer<i>_W.srnmat``,
``layer<i>_b.srnmat`` (a 1 x n matrix) and a ``meta`` file listing the
activations on one line.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import ParseError
from .nn import Layer, MlpModel

HEADER = "srnmat 1"


def format_matrix(W) -> str:
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    lines = [HEADER, f"{W.shape[0]} {W.shape[1]}"]
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in W)
    return "\n".join(lines) + "\n"


def write_matrix(path, W) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_matrix(W))


def parse_matrix(text: str) -> np.ndarray:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != HEADER:
        raise ParseError(f"expected header {HEADER!r}", line=1)
    if len(lines) < 2:
        raise ParseError("missing dimension line", line=2)
    dims = lines[1].split()
    if len(dims) != 2:
        raise ParseError("dimension line must hold '<rows> <cols>'", line=2)
    try:
        rows, cols = int(dims[0]), int(dims[1])
    except ValueError:
        raise ParseError("dimensions must be integers", line=2) from None
    if rows < 1 or cols < 1:
        raise ParseError("dimensions must be positive", line=2)
    body = lines[2:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != rows:
        raise ParseError(f"expected {rows} data rows, found {len(body)}", line=2 + min(len(body), rows) + 1)
    W = np.empty((rows, cols))
    for i, line in enumerate(body):
        lineno = i + 3
        tokens = line.split()
        if len(tokens) != cols:
            raise ParseError(f"expected {cols} values, found {len(tokens)}", line=lineno)
        for j, tok in enumerate(tokens):
            try:
                val = float(tok)
            except ValueError:
                raise ParseError(f"not a number: {tok!r}", line=lineno, column=j + 1) from None
            if not np.isfinite(val):
                raise ParseError(f"non-finite value {tok!r}", line=lineno, column=j + 1)
            W[i, j] = val
    return W


def read_matrix(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return parse_matrix(fh.read())


def save_model(model: MlpModel, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, layer in enumerate(model.layers):
        write_matrix(d / f"layer{i}_W.srnmat", layer.W)
        write_matrix(d / f"layer{i}_b.srnmat", layer.b[None, :])
    (d / "meta").write_text(" ".join(l.activation for l in model.layers) + "\n", encoding="utf-8")


def load_model(directory) -> MlpModel:
    d = Path(directory)
    meta = d / "meta"
    if not meta.is_file():
        raise FileNotFoundError(f"no model snapshot at {os.fspath(d)} (missing meta)")
    activations = meta.read_text(encoding="utf-8").split()
    layers = []
    for i, act in enumerate(activations):
        W = read_matrix(d / f"layer{i}_W.srnmat")
        b = read_matrix(d / f"layer{i}_b.srnmat").reshape(-1)
        layers.append(Layer(W, b, act))
    return MlpModel(layers)
