"""Command-line entry point: ``kgfusion {embed-kg,index,search,eval}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, EngineConfig
from .embeddings import load_embeddings, save_embeddings
from .evaluation import evaluate, load_qrels, read_trec_run, write_trec_run
from .keywords import load_contextual_embeddings
from .kg import load_kg
from .node2vec import Node2VecEmbedder
from .oov import load_charlstm, save_charlstm, train_charlstm
from .bm25 import read_corpus
from .retriever import EmptyQueryError, FusionRanker

logger = logging.getLogger("kgfusion")


def read_queries(path):
    """BEIR ``queries.jsonl`` (``_id``/``text``) or ``qid<TAB>text`` lines."""
    path = Path(path)
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if path.suffix == ".jsonl":
                obj = json.loads(line)
                out.append((str(obj["_id"]), obj["text"]))
            else:
                qid, sep, text = line.rstrip("\r\n").partition("\t")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: expected 'qid<TAB>text'")
                out.append((qid, text))
    return out


def _load_config(args) -> EngineConfig:
    cfg = EngineConfig.from_file(args.config) if args.config else EngineConfig()
    for assignment in args.set or ():
        cfg.override(assignment)
    if args.seed is not None:
        cfg.set("engine", "seed", args.seed)
    for key in ("kg", "corpus", "queries", "qrels", "embeddings", "model",
                "contextual_embeddings", "index_dir"):
        val = getattr(args, key, None)
        if val is not None:
            cfg.values["paths"][key] = str(Path(val).resolve())
    if getattr(args, "k", None) is not None:
        cfg.set("keywords", "k", args.k)
    if getattr(args, "oov_strategy", None) is not None:
        cfg.set("oov", "strategy", args.oov_strategy)
    if getattr(args, "depth", None) is not None:
        cfg.set("retriever", "run_depth", args.depth)
    # surface invalid values before any work starts
    try:
        cfg.walk_config(), cfg.train_config(), cfg.oov_train_config(), cfg.bm25_params()
        FusionRanker(**cfg.ranker_params())
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["oov"]["strategy"] not in ("prefix", "charlstm", None):
        raise ConfigError("oov.strategy must be prefix, charlstm or none")
    if cfg["evalx"]["gain"] not in ("linear", "exponential"):
        raise ConfigError("evalx.gain must be linear or exponential")
    return cfg


def _oov_model(cfg):
    if cfg["oov"]["strategy"] == "charlstm":
        return load_charlstm(cfg.path("model", must_exist=True))
    return None


def cmd_embed_kg(cfg: EngineConfig, args, out=None) -> int:
    out = out or sys.stdout
    kg_path = cfg.path("kg", must_exist=True)
    emb_path = Path(args.output) if args.output else cfg.path("embeddings", must_exist=False)
    if emb_path is None:
        raise ConfigError("no output path: pass --output or set paths.embeddings")
    charlstm = cfg["oov"]["strategy"] == "charlstm"
    if charlstm and cfg.path("model") is None:
        raise ConfigError("oov.strategy=charlstm needs paths.model for the trained model")

    graph = load_kg(kg_path)
    print(f"graph: {len(graph)} concepts, {len(graph.edges)} edges "
          f"({graph.n_self_loops} self-loops, {graph.n_duplicates} duplicates dropped)", file=out)
    walk, train = cfg.walk_config(), cfg.train_config()
    emb = Node2VecEmbedder(
        dim=train.dim, walks_per_node=walk.walks_per_node, walk_length=walk.walk_length,
        p=walk.return_param_p, q=walk.inout_param_q, window=train.window,
        negatives=train.negatives, learning_rate=train.learning_rate,
        min_learning_rate=train.min_learning_rate, epochs=train.epochs,
        walk_seed=walk.seed, train_seed=train.seed,
    ).fit(graph)
    for epoch, loss in enumerate(emb.loss_trace_, start=1):
        print(f"skip-gram epoch {epoch}: loss {loss:.6f}", file=out)
    save_embeddings(emb.embeddings_, emb_path)
    print(f"wrote {len(emb.embeddings_)} embeddings (dim {train.dim}) to {emb_path}", file=out)

    if charlstm:
        model, losses = train_charlstm(emb.embeddings_, cfg.oov_train_config())
        for epoch, loss in enumerate(losses, start=1):
            print(f"charlstm epoch {epoch}: loss {loss:.6g}", file=out)
        save_charlstm(model, cfg.path("model"))
        print(f"wrote CharLSTM model to {cfg.path('model')}", file=out)
    return 0


def _resources(cfg):
    graph = load_kg(cfg.path("kg", must_exist=True))
    table = load_embeddings(cfg.path("embeddings", must_exist=True))
    return graph, table, _oov_model(cfg)


def cmd_index(cfg: EngineConfig, args, out=None) -> int:
    out = out or sys.stdout
    corpus_path = cfg.path("corpus", must_exist=True)
    cfg.path("kg", must_exist=True)
    cfg.path("embeddings", must_exist=True)
    index_dir = cfg.path("index_dir", must_exist=False)
    if index_dir is None:
        raise ConfigError("paths.index_dir is not set")
    ctx_path = cfg.path("contextual_embeddings", must_exist=False)
    if ctx_path is not None and not ctx_path.exists():
        raise ConfigError(f"paths.contextual_embeddings does not exist: {ctx_path}")

    graph, table, model = _resources(cfg)
    contextual = load_contextual_embeddings(ctx_path) if ctx_path else None
    ranker = FusionRanker(**cfg.ranker_params()).fit(
        list(read_corpus(corpus_path)), graph=graph, table=table, oov_model=model,
        contextual=contextual,
    )
    ranker.save(index_dir)
    n_docs = len(ranker.keyword_sets_)
    print(f"indexed {n_docs} documents, {len(ranker.index_.postings)} terms -> {index_dir}", file=out)
    for doc_id in ranker.unembedded_docs_:
        print(f"warning: doc {doc_id} has no embeddable keywords (BM25 only)", file=out)
    return 0


def _load_ranker(cfg):
    index_dir = cfg.path("index_dir", must_exist=True)
    graph, table, model = _resources(cfg)
    return FusionRanker.load(index_dir, graph=graph, table=table, oov_model=model,
                             **{k: v for k, v in cfg.ranker_params().items()
                                if k in ("run_depth", "normalize_scores", "use_bm25")})


def cmd_search(cfg: EngineConfig, args, out=None) -> int:
    out = out or sys.stdout
    if args.query is None and cfg.path("queries") is None:
        raise ConfigError("pass --query TEXT or a queries file")
    if args.query is None:
        cfg.path("queries", must_exist=True)
    ranker = _load_ranker(cfg)
    tag = cfg["engine"]["tag"]
    output = Path(args.output) if args.output else None

    if args.query is not None:
        results = ranker.search(args.query, "q")
        run = {"q": results}
        print(f"query: {args.query}", file=out)
        for rank, sd in enumerate(results[:10], start=1):
            bm = "-" if sd.bm25_score is None else f"{sd.bm25_score:.4f}"
            print(f"{rank:>3}. {sd.doc_id}  fused={sd.fused:.4f}  kg={sd.kg_score:.4f}  bm25={bm}",
                  file=out)
            for term, kw, sim in ranker.explain(args.query, sd.doc_id):
                if kw is not None:
                    print(f"       {term} -> {kw} ({sim:.4f})", file=out)
            kws = ranker.keyword_sets_[sd.doc_id].tokens
            print(f"       keywords: {' '.join(kws)}", file=out)
    else:
        run = {}
        for qid, text in read_queries(cfg.path("queries")):
            try:
                run[qid] = ranker.search(text, qid)
            except EmptyQueryError as exc:
                logger.warning("%s", exc)
                run[qid] = []

    if output is not None:
        with output.open("w", encoding="utf-8") as fh:
            write_trec_run(run, fh, tag)
        print(f"wrote run for {len(run)} queries to {output}", file=out)
    elif args.query is None:
        write_trec_run(run, out, tag)
    return 0


def cmd_eval(cfg: EngineConfig, args, out=None) -> int:
    out = out or sys.stdout
    run_path = Path(args.run) if args.run else cfg.path("run", must_exist=True)
    if not run_path.exists():
        raise ConfigError(f"run file does not exist: {run_path}")
    qrels = load_qrels(cfg.path("qrels", must_exist=True))
    run = read_trec_run(run_path)
    e = cfg["evalx"]
    report = evaluate(run, qrels, e["p_k"], e["ndcg_k"], e["recall_k"], e["gain"])
    print(report.table(args.name or run_path.stem), end="", file=out)
    if args.jsonl:
        Path(args.jsonl).write_text(report.to_jsonl(), encoding="utf-8")
    return 0


COMMANDS = {
    "embed-kg": cmd_embed_kg,
    "index": cmd_index,
    "search": cmd_search,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="engine config file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("--seed", type=int, help="top-level random seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kgfusion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed-kg", parents=[common], help="train concept embeddings")
    p.add_argument("--kg")
    p.add_argument("-o", "--output", help="embedding file (default paths.embeddings)")
    p.add_argument("--oov-strategy", choices=["prefix", "charlstm", "none"])
    p.add_argument("--model")

    p = sub.add_parser("index", parents=[common], help="build BM25 and keyword artifacts")
    for name in ("kg", "corpus", "embeddings", "model", "contextual-embeddings", "index-dir"):
        p.add_argument(f"--{name}")
    p.add_argument("-k", type=int, help="keywords per document")
    p.add_argument("--oov-strategy", choices=["prefix", "charlstm", "none"])

    p = sub.add_parser("search", parents=[common], help="rank documents for queries")
    for name in ("kg", "embeddings", "model", "index-dir", "queries"):
        p.add_argument(f"--{name}")
    p.add_argument("-q", "--query", help="single query text (prints top 10 with provenance)")
    p.add_argument("-o", "--output", help="TREC run file")
    p.add_argument("--depth", type=int, help="run depth")
    p.add_argument("--oov-strategy", choices=["prefix", "charlstm", "none"])

    p = sub.add_parser("eval", parents=[common], help="score a TREC run against qrels")
    p.add_argument("--run")
    p.add_argument("--qrels")
    p.add_argument("--jsonl", help="write per-query metrics as JSON lines")
    p.add_argument("--name", help="row label in the report")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"kgfusion: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.debug("failure", exc_info=True)
        print(f"kgfusion: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
