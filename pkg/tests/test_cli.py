import numpy as np
import pytest

from gnrr.cli import main
from gnrr.corpus import load_qrels, read_run
from gnrr.embeddings import load_embeddings
from gnrr.gnn import load_checkpoint
from gnrr.graph import load_graph
from gnrr.lexical import load_index


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small but complete pipeline: synth -> index -> graph -> train."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert (
        main(
            [
                "synth",
                "--docs", "120",
                "--queries", "12",
                "--dim", "16",
                "--homophily", "0.9",
                "--seed", "7",
                "--topics", "1",
                "--splits", "8,2,2",
                "--out-dir", str(data),
            ]
        )
        == 0
    )
    paths = {
        "collection": data / "collection.tsv",
        "queries": data / "queries.tsv",
        "qrels": data / "qrels.txt",
        "embeddings": data / "embeddings.bin",
        "query_embeddings": data / "query_embeddings.bin",
        "queries_train": data / "queries_train.tsv",
        "qrels_train": data / "qrels_train.txt",
        "queries_val": data / "queries_val.tsv",
        "qrels_val": data / "qrels_val.txt",
        "queries_test": data / "queries_test.tsv",
        "qrels_test": data / "qrels_test.txt",
        "index": root / "bm25.idx",
        "graph": root / "corpus.graph",
        "run": root / "bm25.run",
        "checkpoint": root / "model.ckpt",
        "report": root / "train.csv",
    }
    assert (
        main(["index", "--collection", str(paths["collection"]), "--out", str(paths["index"])])
        == 0
    )
    assert (
        main(
            [
                "graph",
                "--embeddings", str(paths["embeddings"]),
                "--c", "4",
                "--threads", "2",
                "--out", str(paths["graph"]),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "retrieve",
                "--index", str(paths["index"]),
                "--queries", str(paths["queries"]),
                "--k", "40",
                "--out", str(paths["run"]),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "train",
                "--run", str(paths["run"]),
                "--graph", str(paths["graph"]),
                "--embeddings", str(paths["embeddings"]),
                "--queries", str(paths["queries_train"]),
                "--qrels", str(paths["qrels_train"]),
                "--val-queries", str(paths["queries_val"]),
                "--val-qrels", str(paths["qrels_val"]),
                "--query-embeddings", str(paths["query_embeddings"]),
                "--layer", "gcn",
                "--L", "2",
                "--hidden", "8",
                "--scorer-hidden", "8",
                "--epochs", "2",
                "--patience", "2",
                "--lr", "0.005",
                "--seed", "0",
                "--report", str(paths["report"]),
                "--out", str(paths["checkpoint"]),
            ]
        )
        == 0
    )
    return paths


class TestSynthAndIndex:
    def test_synth_wrote_split_files(self, workspace):
        for name in ("queries_train", "qrels_train", "queries_test", "qrels_test"):
            assert workspace[name].exists()

    def test_bad_splits_flag_fails_cleanly(self, tmp_path, capsys):
        code = main(
            [
                "synth",
                "--docs", "20",
                "--queries", "4",
                "--dim", "4",
                "--homophily", "0.5",
                "--splits", "1,2",
                "--out-dir", str(tmp_path / "x"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_index_artifact_loads(self, workspace):
        index = load_index(workspace["index"])
        assert index.n_docs == 120
        assert index.k1 == pytest.approx(0.9)
        assert index.b == pytest.approx(0.4)

    def test_index_stdout_summary(self, workspace, capsys, tmp_path):
        main(["index", "--collection", str(workspace["collection"]), "--out", str(tmp_path / "i")])
        assert "n_docs=120" in capsys.readouterr().out


class TestEncode:
    def test_encode_collection(self, workspace, tmp_path, capsys):
        out = tmp_path / "enc.bin"
        code = main(
            [
                "encode",
                "--collection", str(workspace["collection"]),
                "--dim", "8",
                "--seed", "3",
                "--out", str(out),
            ]
        )
        assert code == 0
        store = load_embeddings(out)
        assert store.dim == 8
        assert len(store) == 120
        norms = np.linalg.norm(store.matrix.astype(np.float64), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)

    def test_import_round_trip(self, workspace, tmp_path):
        out = tmp_path / "copy.bin"
        code = main(
            ["encode", "--import", str(workspace["embeddings"]), "--out", str(out)]
        )
        assert code == 0
        assert load_embeddings(out).ids == load_embeddings(workspace["embeddings"]).ids

    def test_import_dim_mismatch_fails(self, workspace, tmp_path, capsys):
        code = main(
            [
                "encode",
                "--import", str(workspace["embeddings"]),
                "--dim", "99",
                "--out", str(tmp_path / "bad.bin"),
            ]
        )
        assert code == 1
        assert "dim" in capsys.readouterr().err

    def test_encode_without_inputs_fails(self, tmp_path, capsys):
        assert main(["encode", "--out", str(tmp_path / "x.bin")]) == 1
        assert "encode needs" in capsys.readouterr().err


class TestGraphAndRetrieve:
    def test_graph_artifact(self, workspace):
        graph = load_graph(workspace["graph"])
        assert graph.n_nodes == 120
        assert graph.c == 4
        assert graph.neighbors.shape == (120, 4)

    def test_run_file_is_valid_and_bounded(self, workspace):
        run = read_run(workspace["run"])
        assert len(run.query_ids()) == 12
        for query_id in run.query_ids():
            rows = run.rows_for(query_id)
            assert len(rows) <= 40
            assert [r[2] for r in sorted(rows, key=lambda r: r[2])] == list(
                range(1, len(rows) + 1)
            )

    def test_missing_index_file_fails(self, workspace, tmp_path, capsys):
        code = main(
            [
                "retrieve",
                "--index", str(tmp_path / "nope.idx"),
                "--queries", str(workspace["queries"]),
                "--out", str(tmp_path / "out.run"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestTrain:
    def test_checkpoint_loads_with_requested_shape(self, workspace):
        model = load_checkpoint(workspace["checkpoint"])
        assert model.config.kind == "gcn"
        assert model.config.layers == 2
        assert model.config.hidden_dim == 8
        assert model.config.feature_dim == 16

    def test_report_csv_has_epoch_rows(self, workspace):
        lines = workspace["report"].read_text().strip().split("\n")
        assert lines[0] == "epoch,loss,val_ndcg10"
        assert len(lines) in (2, 3)  # early stopping may trim epoch 2

    def test_unjudged_train_queries_still_train(self, workspace, tmp_path):
        # Queries whose qrels are empty yield zero gradients but must not
        # crash; reuse the val split as a tiny training set.
        code = main(
            [
                "train",
                "--run", str(workspace["run"]),
                "--graph", str(workspace["graph"]),
                "--embeddings", str(workspace["embeddings"]),
                "--queries", str(workspace["queries_val"]),
                "--qrels", str(workspace["qrels_val"]),
                "--val-queries", str(workspace["queries_val"]),
                "--val-qrels", str(workspace["qrels_val"]),
                "--epochs", "1",
                "--hidden", "4",
                "--scorer-hidden", "4",
                "--out", str(tmp_path / "tiny.ckpt"),
            ]
        )
        assert code == 0


class TestRerank:
    def test_rerank_writes_tagged_run(self, workspace, tmp_path):
        out = tmp_path / "reranked.run"
        code = main(
            [
                "rerank",
                "--checkpoint", str(workspace["checkpoint"]),
                "--run", str(workspace["run"]),
                "--graph", str(workspace["graph"]),
                "--embeddings", str(workspace["embeddings"]),
                "--queries", str(workspace["queries"]),
                "--query-embeddings", str(workspace["query_embeddings"]),
                "--tag", "gcn",
                "--out", str(out),
            ]
        )
        assert code == 0
        run = read_run(out)
        assert set(run.query_ids()) == set(read_run(workspace["run"]).query_ids())
        assert all(row[4] == "gcn" for row in run.rows)

    def test_rerank_restricts_to_known_queries(self, workspace, tmp_path, capsys):
        out = tmp_path / "test_only.run"
        code = main(
            [
                "rerank",
                "--checkpoint", str(workspace["checkpoint"]),
                "--run", str(workspace["run"]),
                "--graph", str(workspace["graph"]),
                "--embeddings", str(workspace["embeddings"]),
                "--queries", str(workspace["queries_test"]),
                "--query-embeddings", str(workspace["query_embeddings"]),
                "--out", str(out),
            ]
        )
        captured = capsys.readouterr()
        assert code == 0
        assert "skipping 10 run queries" in captured.err
        assert len(read_run(out).query_ids()) == 2

    def test_disjoint_queries_fail(self, workspace, tmp_path, capsys):
        foreign = tmp_path / "foreign.tsv"
        foreign.write_text("zz1\tnothing here\n")
        code = main(
            [
                "rerank",
                "--checkpoint", str(workspace["checkpoint"]),
                "--run", str(workspace["run"]),
                "--graph", str(workspace["graph"]),
                "--embeddings", str(workspace["embeddings"]),
                "--queries", str(foreign),
                "--out", str(tmp_path / "x.run"),
            ]
        )
        assert code == 1
        assert "no run queries" in capsys.readouterr().err


class TestEvalAndAblate:
    def test_eval_table_output(self, workspace, capsys):
        code = main(
            ["eval", "--run", str(workspace["run"]), "--qrels", str(workspace["qrels"])]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "queries evaluated: 12" in out
        assert "ndcg@10" in out

    def test_eval_csv_and_file_output(self, workspace, tmp_path, capsys):
        out_file = tmp_path / "metrics.csv"
        code = main(
            [
                "eval",
                "--run", str(workspace["run"]),
                "--qrels", str(workspace["qrels"]),
                "--ks", "5,20",
                "--csv",
                "--out", str(out_file),
            ]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert stdout.startswith("metric,query_id,value")
        assert "p@5,ALL," in stdout
        assert out_file.read_text() == stdout

    def test_eval_bad_ks_fails(self, workspace, capsys):
        code = main(
            [
                "eval",
                "--run", str(workspace["run"]),
                "--qrels", str(workspace["qrels"]),
                "--ks", "3",
            ]
        )
        assert code == 1
        assert "--ks expects" in capsys.readouterr().err

    def test_ablate_reports_all_modes(self, workspace, tmp_path, capsys):
        out_file = tmp_path / "ablation.csv"
        code = main(
            [
                "ablate",
                "--checkpoint", str(workspace["checkpoint"]),
                "--run", str(workspace["run"]),
                "--graph", str(workspace["graph"]),
                "--embeddings", str(workspace["embeddings"]),
                "--queries", str(workspace["queries"]),
                "--qrels", str(workspace["qrels"]),
                "--query-embeddings", str(workspace["query_embeddings"]),
                "--mode", "zero,shuffle_rows,gaussian",
                "--out", str(out_file),
            ]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        lines = stdout.strip().split("\n")
        assert lines[0] == "mode,metric,with_gnn,without_gnn,drop"
        assert len(lines) == 1 + 3 * 4
        assert out_file.read_text() == stdout

    def test_ablate_unknown_mode_fails(self, workspace, tmp_path, capsys):
        code = main(
            [
                "ablate",
                "--checkpoint", str(workspace["checkpoint"]),
                "--run", str(workspace["run"]),
                "--graph", str(workspace["graph"]),
                "--embeddings", str(workspace["embeddings"]),
                "--queries", str(workspace["queries"]),
                "--qrels", str(workspace["qrels"]),
                "--mode", "explode",
            ]
        )
        assert code == 1
        assert "unknown corruption mode" in capsys.readouterr().err


class TestGradcheckCommand:
    def test_single_layer_passes(self, capsys):
        code = main(["gradcheck", "--layer", "gcn", "--trials", "2", "--seed", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "[gcn] PASS" in out
        assert "[gcn+mlp] PASS" in out
        assert "max_rel_err" in out

    def test_impossible_tolerance_fails(self, capsys):
        code = main(
            [
                "gradcheck",
                "--layer", "sage",
                "--trials", "1",
                "--seed", "1",
                "--tolerance", "1e-18",
            ]
        )
        assert code == 1
        assert "FAIL" in capsys.readouterr().out
