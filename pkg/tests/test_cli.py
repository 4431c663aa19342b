import subprocess
import sys

import numpy as np
import pytest

from coupledmf import cli
from coupledmf.coupling import NeighborGraph
from coupledmf.errors import TrainingFailure
from coupledmf.evaluation import EvalReport, emit_comparison, write_reports_csv
from coupledmf.factorization import TrainTrace
from coupledmf.ingest import AttributeTable, write_prepared
from coupledmf.synthetic import make_synthetic
from coupledmf.toy import ITEM_ROWS, toy_items, toy_ratings, toy_users

from dumps import movielens_dump
from oracles import brute_coupled_matrix


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def toy_dir(tmp_path):
    path = tmp_path / "toy"
    write_prepared(path, toy_ratings(), toy_users(), toy_items())
    return path


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("synth")
    ds, users, items = make_synthetic(n_users=30, n_items=25, density=0.4, seed=2)
    write_prepared(path, ds, users, items)
    return path


def _files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


class TestPrepare:
    def test_summary_and_files(self, tmp_path, capsys):
        movielens_dump(tmp_path / "raw")
        assert run("prepare", "--dataset", "movielens", "--input", tmp_path / "raw", "--out", tmp_path / "a") == 0
        assert "users=4 items=4 ratings=7" in capsys.readouterr().out
        assert set(_files(tmp_path / "a")) == {"dataset.tsv", "ratings.tsv", "users.tsv", "items.tsv"}
        assert (tmp_path / "a" / "ratings.tsv").read_text().splitlines()[:2] == ["user_id\titem_id\trating",
                                                                                   "1\t1193\t5.0"]

    def test_rerun_is_byte_identical(self, tmp_path):
        movielens_dump(tmp_path / "raw")
        run("prepare", "--dataset", "movielens", "--input", tmp_path / "raw", "--out", tmp_path / "a")
        run("prepare", "--dataset", "movielens", "--input", tmp_path / "raw", "--out", tmp_path / "b")
        assert _files(tmp_path / "a") == _files(tmp_path / "b")

    def test_empty_ratings(self, tmp_path, capsys):
        movielens_dump(tmp_path / "raw", ratings=[])
        assert run("prepare", "--dataset", "movielens", "--input", tmp_path / "raw", "--out", tmp_path / "a") != 0
        assert "no usable ratings" in capsys.readouterr().err

    def test_parse_error_names_file_and_line(self, tmp_path, capsys):
        movielens_dump(tmp_path / "raw", ratings=["1::1::5::0", "bad line"])
        assert run("prepare", "--dataset", "movielens", "--input", tmp_path / "raw", "--out", tmp_path / "a") == 1
        err = capsys.readouterr().err
        assert "ratings.dat" in err and ":2" in err

    def test_output_directory_from_environment(self, tmp_path, monkeypatch):
        movielens_dump(tmp_path / "raw")
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        assert run("prepare", "--dataset", "movielens", "--input", tmp_path / "raw") == 0
        assert (tmp_path / "env" / "ratings.tsv").exists()
        assert run("prepare", "--dataset", "movielens", "--input", tmp_path / "raw", "--out", tmp_path / "flag") == 0
        assert (tmp_path / "flag" / "ratings.tsv").exists()


class TestCouple:
    def test_toy_items_match_oracle(self, toy_dir, tmp_path):
        out = tmp_path / "items.tsv"
        assert run("couple", "--data", toy_dir, "--entities", "items", "--kind", "coupled", "--k", 3, "--out", out) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 4
        exact = brute_coupled_matrix([list(r) for r in ITEM_ROWS])
        graph = NeighborGraph.read(out)
        for e, (idx, w) in enumerate(graph.neighbors):
            positive = {j: float(exact[e][j]) for j in range(4) if j != e and exact[e][j] > 0}
            total = sum(positive.values())
            assert dict(zip(idx.tolist(), w.tolist())) == pytest.approx({j: v / total for j, v in positive.items()},
                                                                         abs=1e-11)

    def test_k_one(self, synth_dir, tmp_path):
        out = tmp_path / "u.tsv"
        assert run("couple", "--data", synth_dir, "--entities", "users", "--k", 1, "--out", out) == 0
        assert all(len(line.split("\t")[1].split(",")) <= 1 for line in out.read_text().splitlines())

    def test_jaccard_identical_rows(self, tmp_path):
        ds = toy_ratings()
        same = AttributeTable.from_rows(("a", "b"), [("x", "y")] * 4, ds.item_ids)
        write_prepared(tmp_path / "d", ds, toy_users(), same)
        out = tmp_path / "j.tsv"
        assert run("couple", "--data", tmp_path / "d", "--entities", "items", "--kind", "jaccard", "--k", 5,
                   "--out", out) == 0
        for idx, w in NeighborGraph.read(out).neighbors:
            assert len(idx) == 3
            np.testing.assert_allclose(w, 1 / 3)

    def test_k_zero_rejected(self, toy_dir, tmp_path, capsys):
        assert run("couple", "--data", toy_dir, "--entities", "items", "--k", 0, "--out", tmp_path / "x") == 1
        assert "--k" in capsys.readouterr().err


def _config(path, **values):
    path.write_text("# run settings\n" + "".join(f"{k} = {v}\n" for k, v in values.items()))
    return path


class TestTrain:
    def test_writes_model_and_trace(self, synth_dir, tmp_path):
        cfg = _config(tmp_path / "run.cfg", data=synth_dir, d=3, alpha=1.0, beta=0.2, max_epochs=25, k=5)
        out = tmp_path / "m1.tsv"
        assert run("train", "--config", cfg, "--method", "CMF", "--out", out) == 0
        trace = out.with_suffix(".trace.tsv")
        assert out.exists() and trace.exists()
        assert run("train", "--config", cfg, "--method", "CMF", "--out", tmp_path / "m2.tsv") == 0
        assert out.read_bytes() == (tmp_path / "m2.tsv").read_bytes()
        assert trace.read_bytes() == (tmp_path / "m2.trace.tsv").read_bytes()

    def test_precomputed_graphs(self, synth_dir, tmp_path):
        ug, ig = tmp_path / "u.tsv", tmp_path / "i.tsv"
        run("couple", "--data", synth_dir, "--entities", "users", "--k", 5, "--out", ug)
        run("couple", "--data", synth_dir, "--entities", "items", "--k", 5, "--out", ig)
        cfg = _config(tmp_path / "run.cfg", data=synth_dir, d=2, alpha=0.5, beta=0.5, max_epochs=10)
        assert run("train", "--config", cfg, "--user-graph", ug, "--item-graph", ig, "--out", tmp_path / "m.tsv") == 0

    def test_failure_exit_code_and_trace(self, synth_dir, tmp_path, monkeypatch, capsys):
        def diverge(*args, **kwargs):
            raise TrainingFailure("objective diverged at epoch 3", TrainTrace(initial_objective=1.0))

        monkeypatch.setattr(cli, "train", diverge)
        out = tmp_path / "m.tsv"
        assert run("train", "--data", synth_dir, "--method", "PMF", "--out", out) == 2
        assert str(out.with_suffix(".trace.tsv")) in capsys.readouterr().err
        assert out.with_suffix(".trace.tsv").exists()

    def test_unknown_config_key(self, synth_dir, tmp_path, capsys):
        cfg = _config(tmp_path / "bad.cfg", data=synth_dir, momentum=0.9)
        assert run("train", "--config", cfg) == 1
        assert "momentum" in capsys.readouterr().err

    def test_config_bounds_enforced(self, synth_dir, tmp_path):
        assert run("train", "--config", _config(tmp_path / "a.cfg", data=synth_dir, alpha=-1)) == 1
        assert run("train", "--config", _config(tmp_path / "b.cfg", data=synth_dir, learning_rate=0)) == 1


class TestEvaluate:
    def test_two_methods_five_folds(self, synth_dir, tmp_path):
        cfg = _config(tmp_path / "run.cfg", data=synth_dir, d=10, alpha=1.0, beta=0.2, max_epochs=20, k=5)
        assert run("evaluate", "--config", cfg, "--methods", "PMF,CMF", "--out", tmp_path / "out") == 0
        rows = (tmp_path / "out" / "results.csv").read_text().splitlines()
        assert rows[0] == "dataset,method,d,fold,mae,rmse"
        assert len(rows) == 11
        assert {r.split(",")[1] for r in rows[1:]} == {"PMF", "CMF"}
        assert (tmp_path / "out" / "summary.txt").exists()

    def test_idempotent(self, synth_dir, tmp_path):
        cfg = _config(tmp_path / "run.cfg", data=synth_dir, d=2, max_epochs=10, k=5, methods="PMF,UBCF")
        run("evaluate", "--config", cfg, "--out", tmp_path / "a")
        run("evaluate", "--config", cfg, "--out", tmp_path / "b")
        assert _files(tmp_path / "a") == _files(tmp_path / "b")

    def test_config_alone_drives_run(self, synth_dir, tmp_path):
        cfg = _config(tmp_path / "run.cfg", data=synth_dir, output=tmp_path / "o", dims="2,3",
                      methods="RSVD,IBCF", max_epochs=5, k=5, n_folds=3)
        assert run("evaluate", "--config", cfg) == 0
        rows = (tmp_path / "o" / "results.csv").read_text().splitlines()[1:]
        # RSVD at two dimensions plus one dimension-free IBCF run, three folds each
        assert len(rows) == 9

    def test_unknown_method(self, synth_dir, tmp_path):
        assert run("evaluate", "--data", synth_dir, "--methods", "PMF,SVDPP", "--out", tmp_path) == 1


class TestCompare:
    def test_matches_library_table(self, tmp_path, capsys):
        reports = [EvalReport("ml", "PMF", 10, [1.1787], [1.4]), EvalReport("ml", "CMF", 10, [0.8978], [1.1])]
        write_reports_csv(reports[:1], tmp_path / "a.csv")
        write_reports_csv(reports[1:], tmp_path / "b.csv")
        assert run("compare", "--reports", tmp_path / "a.csv", tmp_path / "b.csv", "--baselines", "PMF",
                   "--out-csv", tmp_path / "c.csv") == 0
        expected = emit_comparison(reports, ["PMF"], "CMF")
        assert capsys.readouterr().out == expected.text
        assert (tmp_path / "c.csv").read_text() == expected.csv
        assert "31.29%" in expected.text

    def test_missing_baseline(self, tmp_path):
        write_reports_csv([EvalReport("ml", "CMF", 10, [0.9], [1.0])], tmp_path / "a.csv")
        assert run("compare", "--reports", tmp_path / "a.csv", "--baselines", "PMF") == 1


def test_console_entry_point(tmp_path):
    result = subprocess.run([sys.executable, "-m", "coupledmf.cli", "--help"], capture_output=True, text=True)
    assert result.returncode == 0
    assert "prepare" in result.stdout and "evaluate" in result.stdout
