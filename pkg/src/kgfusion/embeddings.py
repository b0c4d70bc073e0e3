"""Label -> vector tables and their word2vec-style text format.

File layout::

    <count> <dim>
    <label> <f1> ... <fdim>

Values are written with 6 significant digits. Spaces inside multi-word
labels are written as ``_`` and restored on load, so every row splits into
exactly ``dim + 1`` fields.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class EmbeddingFormatError(ValueError):
    pass


class EmbeddingTable:
    """Immutable mapping from labels to rows of a dense float64 matrix."""

    def __init__(self, labels, vectors):
        labels = list(labels)
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(labels):
            raise ValueError(
                f"need one row per label: {len(labels)} labels, matrix shape {vectors.shape}"
            )
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors must be finite")
        self.labels = labels
        self.vectors = vectors
        self.vectors.setflags(write=False)
        self._index = {label: i for i, label in enumerate(labels)}
        if len(self._index) != len(labels):
            raise ValueError("duplicate labels in embedding table")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self._index

    def __getitem__(self, label) -> np.ndarray:
        return self.vectors[self._index[label]]

    def get(self, label, default=None):
        i = self._index.get(label)
        return default if i is None else self.vectors[i]

    def items(self):
        for label, row in zip(self.labels, self.vectors):
            yield label, row

    def __eq__(self, other):
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.vectors, other.vectors)

    def __repr__(self):
        return f"EmbeddingTable(n={len(self)}, dim={self.dim})"


def save_embeddings(table: EmbeddingTable, path) -> None:
    if len(table) == 0:
        raise ValueError("refusing to save an empty embedding table")
    lines = [f"{len(table)} {table.dim}"]
    for label, row in table.items():
        name = label.replace(" ", "_")
        lines.append(name + " " + " ".join(f"{x:.6g}" for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embeddings(path) -> EmbeddingTable:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingFormatError(f"{path}:1: header must be '<count> <dim>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise EmbeddingFormatError(f"{path}:1: non-integer header") from None
        labels, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != dim + 1:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {dim} components, got {len(fields) - 1}"
                )
            try:
                rows.append([float(x) for x in fields[1:]])
            except ValueError:
                raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric component") from None
            labels.append(fields[0].replace("_", " "))
    if len(labels) != count:
        raise EmbeddingFormatError(f"{path}: header declares {count} rows, found {len(labels)}")
    return EmbeddingTable(labels, np.array(rows, dtype=np.float64).reshape(count, dim))
