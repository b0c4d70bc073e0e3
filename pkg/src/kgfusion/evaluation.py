"""Ranking metrics over TREC-style runs and graded qrels.

A run maps query ids to ranked doc-id lists; qrels map query ids to
``{doc_id: grade}``. Every metric is averaged over the queries in the qrels;
queries missing from the run score 0 (recall skips queries with no relevant
documents).
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_CUTOFFS = {"p": 10, "ndcg": 10, "recall": 1000}


class QrelsFormatError(ValueError):
    pass


def _check_overlap(run, qrels):
    if not qrels:
        raise ValueError("qrels are empty")
    if run and not (set(run) & set(qrels)):
        raise ValueError("run and qrels share no query ids")


def _mean(values):
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def reciprocal_rank(ranking, judged) -> float:
    for rank, doc_id in enumerate(ranking, start=1):
        if judged.get(doc_id, 0) > 0:
            return 1.0 / rank
    return 0.0


def precision(ranking, judged, k) -> float:
    return sum(1 for d in ranking[:k] if judged.get(d, 0) > 0) / k


def dcg(grades, gain="linear") -> float:
    if gain == "exponential":
        return sum((2.0 ** g - 1.0) / math.log2(i + 2) for i, g in enumerate(grades))
    return sum(g / math.log2(i + 2) for i, g in enumerate(grades))


def ndcg(ranking, judged, k, gain="linear") -> float:
    ideal = dcg(sorted(judged.values(), reverse=True)[:k], gain)
    if ideal <= 0:
        return 0.0
    return dcg([judged.get(d, 0) for d in ranking[:k]], gain) / ideal


def recall(ranking, judged, k):
    relevant = {d for d, g in judged.items() if g > 0}
    if not relevant:
        return None
    return len(relevant.intersection(ranking[:k])) / len(relevant)


def _per_query(run, qrels, fn):
    _check_overlap(run, qrels)
    return {qid: fn(list(run.get(qid, ())), judged) for qid, judged in qrels.items()}


def mrr(run, qrels) -> float:
    return _mean(_per_query(run, qrels, reciprocal_rank).values())


def precision_at_k(run, qrels, k=10) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return _mean(_per_query(run, qrels, lambda r, j: precision(r, j, k)).values())


def ndcg_at_k(run, qrels, k=10, gain="linear") -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return _mean(_per_query(run, qrels, lambda r, j: ndcg(r, j, k, gain)).values())


def recall_at_k(run, qrels, k=1000) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    vals = _per_query(run, qrels, lambda r, j: recall(r, j, k))
    return _mean(v for v in vals.values() if v is not None)


@dataclass
class MetricsReport:
    cutoffs: dict
    per_query: dict = field(default_factory=dict)  # metric name -> {qid: value}
    means: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        lines = []
        for metric, values in self.per_query.items():
            for qid, v in values.items():
                lines.append(json.dumps({"metric": metric, "query_id": qid, "value": v}))
            lines.append(json.dumps({"metric": metric, "query_id": "all", "value": self.means[metric]}))
        return "\n".join(lines) + "\n"

    def table(self, name="run", width=None) -> str:
        """Header plus one row; pass a shared ``width`` to stack several reports."""
        cols = list(self.means)
        width = max(len(name), 6, width or 0)
        header = f"{'Method':<{width}}  " + "  ".join(f"{c:>8}" for c in cols)
        row = f"{name:<{width}}  " + "  ".join(f"{self.means[c]:>8.3f}" for c in cols)
        return header + "\n" + row + "\n"


def evaluate(run, qrels, p_k=10, ndcg_k=10, recall_k=1000, gain="linear") -> MetricsReport:
    """Compute MRR, P@k, nDCG@k and R@k with per-query breakdowns."""
    _check_overlap(run, qrels)
    rep = MetricsReport(cutoffs={"p": p_k, "ndcg": ndcg_k, "recall": recall_k})
    names = {
        "MRR": reciprocal_rank,
        f"P@{p_k}": lambda r, j: precision(r, j, p_k),
        f"nDCG@{ndcg_k}": lambda r, j: ndcg(r, j, ndcg_k, gain),
        f"R@{recall_k}": lambda r, j: recall(r, j, recall_k),
    }
    for name, fn in names.items():
        vals = {q: v for q, v in _per_query(run, qrels, fn).items() if v is not None}
        rep.per_query[name] = vals
        rep.means[name] = _mean(vals.values())
    return rep


def load_qrels(path) -> dict[str, dict[str, int]]:
    """Read ``query-id<TAB>corpus-id<TAB>score`` lines; an optional header is skipped."""
    qrels: dict[str, dict[str, int]] = defaultdict(dict)
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.rstrip("\r\n").split("\t")
            if len(fields) == 1:
                fields = line.split()
            if lineno == 1 and fields[0].strip().lower() in ("query-id", "query_id", "qid"):
                continue
            if len(fields) != 3:
                raise QrelsFormatError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
            qid, did, grade = (f.strip() for f in fields)
            try:
                g = int(grade)
            except ValueError:
                raise QrelsFormatError(f"{path}:{lineno}: non-integer grade {grade!r}") from None
            if g < 0:
                raise QrelsFormatError(f"{path}:{lineno}: negative grade")
            if did in qrels[qid]:
                raise QrelsFormatError(f"{path}:{lineno}: duplicate judgment ({qid}, {did})")
            qrels[qid][did] = g
    return dict(qrels)


def write_trec_run(run, fh, tag="kgfusion") -> None:
    """Write ``{qid: [ScoredDoc | (doc_id, score), ...]}`` as TREC lines."""
    for qid, docs in run.items():
        for rank, item in enumerate(docs, start=1):
            if isinstance(item, tuple):
                doc_id, score = item
            else:
                doc_id, score = item.doc_id, item.fused
            fh.write(f"{qid} Q0 {doc_id} {rank} {score:.6f} {tag}\n")


def read_trec_run(path) -> dict[str, list[str]]:
    """Ranked doc ids per query, ordered by the rank column."""
    rows = defaultdict(list)
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 6:
                raise ValueError(f"{path}:{lineno}: TREC run lines need 6 fields")
            qid, _, doc_id, rank, score, _ = fields
            rows[qid].append((int(rank), -float(score), doc_id))
    return {qid: [d for _, _, d in sorted(items)] for qid, items in rows.items()}
