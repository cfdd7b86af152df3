"""Command-line pipeline: index, encode, graph, retrieve, train, rerank,
eval, ablate, gradcheck, synth.

Every subcommand is deterministic given its flags (all randomness is seeded
explicitly). Progress goes to stderr, data to files or stdout; exit status
is 0 on success and 1 on any error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import ablation, gradcheck, synth
from .corpus import (
    RunFile,
    load_collection,
    load_qrels,
    load_queries,
    read_run,
    tokenize,
    write_run,
)
from .embeddings import EmbeddingStore, load_embeddings, pseudo_encode, save_embeddings
from .gnn import (
    LAYER_KINDS,
    ModelConfig,
    RerankModel,
    load_checkpoint,
    rerank_rows,
    save_checkpoint,
)
from .graph import build_corpus_graph, load_graph, save_graph
from .lexical import build_index, load_index, retrieve_topk, save_index
from .metrics import evaluate_run
from .pipeline import build_instances_from_run
from .training import TrainConfig, train


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_index(args) -> int:
    collection = load_collection(args.collection)
    index = build_index(collection, k1=args.k1, b=args.b)
    save_index(index, args.out)
    print(f"n_docs={index.n_docs} avg_dl={index.avg_doc_length:.4f}")
    return 0


def cmd_encode(args) -> int:
    if args.import_path is not None:
        store = load_embeddings(args.import_path)
        if args.dim is not None and store.dim != args.dim:
            raise ValueError(
                f"imported embeddings have dim {store.dim}, expected {args.dim}"
            )
        save_embeddings(store, args.out)
        print(f"imported={len(store)} dim={store.dim}")
        return 0
    if args.collection is None or args.dim is None:
        raise ValueError("encode needs either --import or both --collection and --dim")
    collection = load_collection(args.collection)
    matrix = np.empty((len(collection), args.dim), dtype=np.float32)
    for i, (doc_id, text) in enumerate(collection.docs):
        tokens = tokenize(text)
        if not tokens:
            raise ValueError(f"document {doc_id!r} has no tokens to encode")
        matrix[i] = pseudo_encode(tokens, args.dim, seed=args.seed).astype(np.float32)
    store = EmbeddingStore(
        dim=args.dim, ids=collection.doc_ids(), matrix=matrix, normalized=True
    )
    save_embeddings(store, args.out)
    print(f"encoded={len(store)} dim={store.dim}")
    return 0


def cmd_graph(args) -> int:
    store = load_embeddings(args.embeddings)
    threads = args.threads if args.threads else (os.cpu_count() or 1)
    _progress(f"building graph over {len(store)} nodes with {threads} thread(s)")
    graph = build_corpus_graph(store, store.ids, c=args.c, threads=threads)
    save_graph(graph, args.out)
    print(f"nodes={graph.n_nodes} c={graph.c} out_degree={graph.neighbors.shape[1]}")
    return 0


def cmd_retrieve(args) -> int:
    index = load_index(args.index)
    queries = load_queries(args.queries)
    rows = []
    empty = 0
    for query_id, text in queries.queries:
        scored = retrieve_topk(index, tokenize(text), args.k)
        if not scored:
            empty += 1
            continue
        for rank, (doc_id, score) in enumerate(scored, start=1):
            rows.append((query_id, doc_id, rank, score, args.tag))
    write_run(RunFile(rows=rows), args.out)
    _progress(
        f"retrieved for {len(queries) - empty}/{len(queries)} queries (k={args.k})"
    )
    return 0


def _load_query_store(path) -> EmbeddingStore | None:
    return load_embeddings(path) if path else None


def cmd_train(args) -> int:
    run = read_run(args.run)
    graph = load_graph(args.graph)
    store = load_embeddings(args.embeddings)
    train_queries = load_queries(args.queries)
    val_queries = load_queries(args.val_queries)
    train_qrels = load_qrels(args.qrels)
    val_qrels = load_qrels(args.val_qrels)
    query_store = _load_query_store(args.query_embeddings)

    config = ModelConfig(
        kind=args.layer,
        feature_dim=store.dim,
        layers=args.L,
        hidden_dim=args.hidden,
        individual=args.individual,
        scorer_hidden=args.scorer_hidden,
        seed=args.seed,
        neg_samples=args.neg_samples,
    )
    model = RerankModel(config)

    _progress("assembling training instances")
    train_instances = build_instances_from_run(
        run,
        train_queries,
        graph,
        store,
        qrels=train_qrels,
        model=model,
        query_store=query_store,
        encode_seed=args.encode_seed,
        restrict_to=train_queries.query_ids(),
    )
    _progress("assembling validation instances")
    val_instances = build_instances_from_run(
        run,
        val_queries,
        graph,
        store,
        qrels=val_qrels,
        model=model,
        query_store=query_store,
        encode_seed=args.encode_seed,
        restrict_to=val_queries.query_ids(),
    )
    _progress(
        f"training {args.layer} (L={args.L}, hidden={args.hidden}) on "
        f"{len(train_instances)} queries, validating on {len(val_instances)}"
    )
    train_config = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
        sigma=args.sigma,
    )
    model, report = train(model, train_instances, val_instances, train_config)
    save_checkpoint(model, args.out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as handle:
            handle.write(report.to_csv())
    _progress(
        f"stopped: {report.stop_reason}; best epoch {report.best_epoch} "
        f"(val nDCG@{report.ndcg_k} {report.best_val_ndcg:.4f})"
    )
    return 0


def cmd_rerank(args) -> int:
    model = load_checkpoint(args.checkpoint)
    run = read_run(args.run)
    graph = load_graph(args.graph)
    store = load_embeddings(args.embeddings)
    queries = load_queries(args.queries)
    query_store = _load_query_store(args.query_embeddings)
    known = set(queries.query_ids())
    covered = [qid for qid in run.query_ids() if qid in known]
    skipped = len(run.query_ids()) - len(covered)
    if skipped:
        _progress(f"skipping {skipped} run queries absent from --queries")
    if not covered:
        raise ValueError("no run queries appear in --queries")
    instances = build_instances_from_run(
        run,
        queries,
        graph,
        store,
        model=model,
        query_store=query_store,
        encode_seed=args.encode_seed,
        restrict_to=covered,
    )
    rows = []
    for instance in instances:
        state = model.score(instance.x, instance.x_aug, instance.ctx)
        rows.extend(rerank_rows(instance.query_id, instance.doc_ids, state.scores, args.tag))
    write_run(RunFile(rows=rows), args.out)
    _progress(f"reranked {len(instances)} queries")
    return 0


def _parse_ks(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"--ks expects 'P,N' (precision k, ndcg k), got {text!r}")
    return int(parts[0]), int(parts[1])


def cmd_eval(args) -> int:
    run = read_run(args.run)
    qrels = load_qrels(args.qrels)
    p_k, ndcg_k = _parse_ks(args.ks)
    report = evaluate_run(run, qrels, p_k=p_k, ndcg_k=ndcg_k)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(report.as_csv())
    if args.csv:
        sys.stdout.write(report.as_csv())
    else:
        sys.stdout.write(report.as_table())
    return 0


def cmd_ablate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    run = read_run(args.run)
    graph = load_graph(args.graph)
    store = load_embeddings(args.embeddings)
    queries = load_queries(args.queries)
    qrels = load_qrels(args.qrels)
    query_store = _load_query_store(args.query_embeddings)
    modes = [mode.strip() for mode in args.mode.split(",") if mode.strip()]
    if not modes:
        raise ValueError("--mode lists no corruption modes")
    known = set(queries.query_ids())
    covered = [qid for qid in run.query_ids() if qid in known]
    if not covered:
        raise ValueError("no run queries appear in --queries")
    instances = build_instances_from_run(
        run,
        queries,
        graph,
        store,
        qrels=qrels,
        model=model,
        query_store=query_store,
        encode_seed=args.encode_seed,
        restrict_to=covered,
    )
    p_k, ndcg_k = _parse_ks(args.ks)
    report = ablation.ablation_report(
        model,
        instances,
        qrels,
        modes,
        noise_sigma=args.noise_sigma,
        seed=args.noise_seed,
        p_k=p_k,
        ndcg_k=ndcg_k,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(report.as_csv())
    sys.stdout.write(report.as_csv())
    return 0


def cmd_gradcheck(args) -> int:
    kinds = list(LAYER_KINDS) if args.layer == "all" else [args.layer]
    rng = np.random.default_rng(args.seed)
    failed = False
    for kind in kinds:
        # The mlp individual branch rides along on one kind so its blocks are
        # finite-difference checked too; scorer blocks appear in every trial.
        for individual in ("identity", "mlp") if kind == kinds[0] else ("identity",):
            worst: dict[str, float] = {}
            for _ in range(args.trials):
                report = gradcheck.run_trial(kind, rng, individual=individual)
                for block in report.blocks:
                    worst[block.label] = max(worst.get(block.label, 0.0), block.error)
            label = kind if individual == "identity" else f"{kind}+mlp"
            for block_label, error in worst.items():
                print(f"[{label}] {block_label} max_rel_err {error:.3e}")
            peak = max(worst.values())
            verdict = "PASS" if peak < args.tolerance else "FAIL"
            if verdict == "FAIL":
                failed = True
            print(f"[{label}] {verdict} (max {peak:.3e}, tolerance {args.tolerance:.0e})")
    return 1 if failed else 0


def cmd_synth(args) -> int:
    spec = synth.SynthSpec(
        n_docs=args.docs,
        n_queries=args.queries,
        dim=args.dim,
        homophily=args.homophily,
        seed=args.seed,
        n_topics=args.topics,
    )
    data = synth.generate(spec)
    splits = None
    if args.splits:
        parts = [int(part) for part in args.splits.split(",")]
        if len(parts) != 3:
            raise ValueError(f"--splits expects 'train,val,test', got {args.splits!r}")
        splits = (parts[0], parts[1], parts[2])
    written = synth.write_dataset(data, args.out_dir, splits=splits)
    for name, path in written.items():
        _progress(f"wrote {name}: {path}")
    print(
        f"docs={spec.n_docs} queries={spec.n_queries} topics={spec.topics} "
        f"judgments={len(data.judgments)}"
    )
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnrr",
        description="Lexical retrieval plus graph-based neural re-ranking, end to end.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and save a BM25 inverted index")
    p.add_argument("--collection", required=True, help="TSV of doc_id<TAB>text")
    p.add_argument("--out", required=True)
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("encode", help="produce embeddings (hash encoder or import)")
    p.add_argument("--collection", help="TSV to pseudo-encode")
    p.add_argument("--dim", type=int, help="embedding width")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--import", dest="import_path", help="existing embedding file to re-save")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("graph", help="build the nearest-neighbour corpus graph")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--c", type=int, default=8, help="out-degree per node")
    p.add_argument("--threads", type=int, default=0, help="0 = all available cores")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("retrieve", help="first-stage BM25 retrieval to a run file")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--tag", default="bm25")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("train", help="train a re-ranking model on run candidates")
    p.add_argument("--run", required=True, help="first-stage run with candidates")
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True, help="document embeddings")
    p.add_argument("--queries", required=True, help="training query TSV")
    p.add_argument("--qrels", required=True)
    p.add_argument("--val-queries", required=True)
    p.add_argument("--val-qrels", required=True)
    p.add_argument("--layer", choices=LAYER_KINDS, default="gcn")
    p.add_argument("--L", type=int, default=2, help="graph-branch depth")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--individual", choices=("identity", "mlp"), default="identity")
    p.add_argument("--scorer-hidden", type=int, default=32)
    p.add_argument("--neg-samples", type=int, default=8, help="signed layers only")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--query-embeddings", help="query embedding file (else texts are encoded)")
    p.add_argument("--encode-seed", type=int, default=0, help="seed for on-the-fly query encoding")
    p.add_argument("--report", help="write per-epoch CSV here")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rerank", help="re-score a run with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--query-embeddings")
    p.add_argument("--encode-seed", type=int, default=0)
    p.add_argument("--tag", default="reranked")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--ks", default="3,10", help="precision k, ndcg k")
    p.add_argument("--csv", action="store_true", help="CSV to stdout instead of a table")
    p.add_argument("--out", help="also write CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="corrupt the graph branch and measure the drop")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--mode", default="zero", help="comma list of zero,shuffle_rows,gaussian")
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--ks", default="3,10")
    p.add_argument("--query-embeddings")
    p.add_argument("--encode-seed", type=int, default=0)
    p.add_argument("--out", help="write the CSV here as well")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of backward passes")
    p.add_argument("--layer", choices=LAYER_KINDS + ("all",), default="all")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=gradcheck.DEFAULT_TOLERANCE)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a synthetic clustered benchmark")
    p.add_argument("--docs", type=int, required=True)
    p.add_argument("--queries", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--homophily", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--topics", type=int, help="default: one per ~100 docs")
    p.add_argument("--splits", help="train,val,test query counts; writes split files")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as error:
        print(f"error: {error}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
