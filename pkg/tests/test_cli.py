import itertools
import json

import numpy as np
import pytest

from adascore.cli import EXIT_GENERATION, EXIT_INPUT, EXIT_OK, RunManifest, build_parser, main
from adascore.graphs import Dag
from adascore.io import write_csv
from adascore.simulate import MechanismKind, hidden_roles, make_scm, sample_scm


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def chain_csv(tmp_path):
    g = Dag.from_edges(3, [(0, 1), (1, 2)])
    data = sample_scm(make_scm(g, MechanismKind.NONLINEAR_MLP, 3), 300)
    path = tmp_path / "chain.csv"
    write_csv(path, data.values, data.column_names)
    return path


def edge_lines(path):
    return [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]


class TestDiscover:
    def test_dag_mode(self, capsys, tmp_path, chain_csv):
        code, out, _ = run(capsys, "discover", chain_csv, "--mode", "dag", "--out-dir", tmp_path / "o")
        assert code == EXIT_OK
        lines = edge_lines(tmp_path / "o" / "graph.txt")
        assert all(" -> " in ln for ln in lines)
        g = json.loads((tmp_path / "o" / "graph.json").read_text())
        names = g["nodes"]
        dag = Dag.from_edges(len(names), [(e["a"], e["b"]) if e["mark_b"] == "arrow" else (e["b"], e["a"])
                                          for e in g["edges"]])
        assert len(dag.edges()) == len(lines)  # from_edges rejects cycles
        assert (tmp_path / "o" / "manifest.json").exists()

    def test_non_numeric_cell(self, capsys, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n1,2,3\n4,oops,6\n")
        code, _, err = run(capsys, "discover", p, "--out-dir", tmp_path / "o")
        assert code == EXIT_INPUT
        assert "oops" in err and "row 3" in err and "column 2" in err

    def test_single_column(self, capsys, tmp_path):
        p = tmp_path / "one.csv"
        p.write_text("a\n1\n2\n3\n")
        assert run(capsys, "discover", p, "--out-dir", tmp_path / "o")[0] == EXIT_INPUT

    def test_pag_notation(self, capsys, tmp_path, chain_csv):
        code, _, _ = run(capsys, "discover", chain_csv, "--mode", "pag", "--out-dir", tmp_path / "o")
        assert code == EXIT_OK
        for ln in edge_lines(tmp_path / "o" / "graph.txt"):
            assert " o-o " in ln or " o-> " in ln or " <-o " in ln

    def test_trace_written(self, capsys, tmp_path, chain_csv):
        run(capsys, "discover", chain_csv, "--trace", "--out-dir", tmp_path / "o")
        lines = (tmp_path / "o" / "trace.jsonl").read_text().splitlines()
        assert json.loads(lines[-1])["event"] == "summary"

    def test_score_dump(self, capsys, tmp_path, chain_csv):
        run(capsys, "discover", chain_csv, "--dump-scores", "--out-dir", tmp_path / "o")
        rows = (tmp_path / "o" / "scores.csv").read_text().splitlines()
        assert len(rows) == 301 and len(rows[0].split(",")) == 6
        assert "scores.csv" in RunManifest.read(tmp_path / "o" / "manifest.json").outputs

    def test_bad_flag_value(self, capsys, tmp_path, chain_csv):
        assert run(capsys, "discover", chain_csv, "--alpha", "2", "--out-dir", tmp_path)[0] == EXIT_INPUT

    def test_replay(self, capsys, tmp_path, chain_csv):
        run(capsys, "discover", chain_csv, "--out-dir", tmp_path / "a")
        code, out, _ = run(capsys, "replay", tmp_path / "a" / "manifest.json", "--out-dir", tmp_path / "b")
        assert code == EXIT_OK and "identical" in out
        a = RunManifest.read(tmp_path / "a" / "manifest.json")
        b = RunManifest.read(tmp_path / "b" / "manifest.json")
        assert a.outputs == b.outputs

    def test_replay_missing_manifest(self, capsys, tmp_path):
        assert run(capsys, "replay", tmp_path / "nope.json", "--out-dir", tmp_path / "b")[0] == EXIT_INPUT


class TestSimulate:
    ARGS = ("simulate", "--nodes", 5, "--edge-prob", 0.3, "--mechanism", "linear",
            "--samples", 1000, "--hidden", 0, "--seed", 7)

    def test_bundle(self, capsys, tmp_path):
        assert run(capsys, *self.ARGS, "--out-dir", tmp_path)[0] == EXIT_OK
        header = (tmp_path / "data.csv").read_text().splitlines()
        assert len(header[0].split(",")) == 5 and len(header) == 1001
        assert {"truth.json", "meta.json", "manifest.json"} <= {p.name for p in tmp_path.iterdir()}

    def test_byte_identical(self, capsys, tmp_path):
        run(capsys, *self.ARGS, "--out-dir", tmp_path / "a")
        run(capsys, *self.ARGS, "--out-dir", tmp_path / "b")
        for name in ("data.csv", "truth.json", "meta.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_csv_round_trip_is_exact(self, capsys, tmp_path):
        from adascore.io import read_csv
        from adascore.simulate import make_instance

        run(capsys, *self.ARGS, "--out-dir", tmp_path)
        values, _ = read_csv(tmp_path / "data.csv")
        inst = make_instance(5, 0.3, "linear", 1000, 0, 7)
        assert np.array_equal(values, inst.data.values)

    def test_no_valid_hiding(self, capsys, tmp_path):
        # with no edges, no pair of hidden nodes is a confounder or mediator
        empty = Dag.from_edges(3, [])
        assert not any(any(hidden_roles(empty, set(c))) for c in itertools.combinations(range(3), 2))
        code, _, err = run(capsys, "simulate", "--nodes", 3, "--edge-prob", 0, "--mechanism", "mlp",
                           "--hidden", 2, "--out-dir", tmp_path)
        assert code == EXIT_GENERATION and err

    def test_invalid_flags(self, capsys, tmp_path):
        code, _, _ = run(capsys, "simulate", "--nodes", 3, "--edge-prob", 1.5, "--mechanism", "mlp",
                         "--out-dir", tmp_path)
        assert code == EXIT_INPUT
        assert main(["simulate", "--nodes", "3"]) == EXIT_INPUT


class TestEvaluate:
    def write(self, path, text):
        path.write_text(text)
        return path

    def test_identical(self, capsys, tmp_path):
        g = self.write(tmp_path / "g.txt", "# nodes: a b c\na -> b\nb -> c\n")
        code, out, _ = run(capsys, "evaluate", g, g)
        assert code == EXIT_OK
        assert json.loads(out) == {"shd": 0, "f1_any": 1.0, "f1_directed": 1.0, "f1_unidentifiable": 1.0}

    def test_empty_prediction(self, capsys, tmp_path):
        t = self.write(tmp_path / "t.txt", "# nodes: a b c\na -> b\nb -> c\na -> c\n")
        p = self.write(tmp_path / "p.txt", "# nodes: a b c\n")
        assert json.loads(run(capsys, "evaluate", p, t)[1])["shd"] == 3

    def test_reversed_edge(self, capsys, tmp_path):
        t = self.write(tmp_path / "t.txt", "# nodes: a b\na -> b\n")
        p = self.write(tmp_path / "p.txt", "# nodes: a b\nb -> a\n")
        m = json.loads(run(capsys, "evaluate", p, t)[1])
        assert m["shd"] == 1 and m["f1_any"] == 1.0 and m["f1_directed"] == 0.0

    def test_mismatch(self, capsys, tmp_path):
        t = self.write(tmp_path / "t.txt", "# nodes: a b\na -> b\n")
        p = self.write(tmp_path / "p.txt", "# nodes: a b c\n")
        assert run(capsys, "evaluate", p, t)[0] == EXIT_INPUT


class TestBenchmark:
    ARGS = ("benchmark", "--nodes", 3, "--edge-probs", 0.5, "--mechanisms", "mlp",
            "--seeds", "0-1", "--samples", 150)

    def test_rows_and_resume(self, capsys, tmp_path):
        assert run(capsys, *self.ARGS, "--out-dir", tmp_path)[0] == EXIT_OK
        rows = (tmp_path / "rows.csv").read_text().splitlines()
        assert len(rows) == 1 + 4
        assert sorted(r.split(",")[8] for r in rows[1:]) == ["adascore", "adascore", "random", "random"]
        runs = {p.name: p.read_bytes() for p in (tmp_path / "runs").iterdir()}
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert {s["method"] for s in summary} == {"adascore", "random"}

        for p in (tmp_path / "runs").iterdir():
            p.touch()  # mtime changes must not trigger a rerun
        code, _, err = run(capsys, *self.ARGS, "--out-dir", tmp_path)
        assert code == EXIT_OK and "2 of 2" in err
        assert {p.name: p.read_bytes() for p in (tmp_path / "runs").iterdir()} == runs

    def test_failed_rows_give_nonzero_exit(self, capsys, tmp_path):
        code, _, _ = run(capsys, "benchmark", "--nodes", 3, "--edge-probs", 0, "--mechanisms", "mlp",
                         "--hidden", 2, "--seeds", 0, "--samples", 100, "--out-dir", tmp_path)
        assert code == 1
        assert "generation" in (tmp_path / "rows.csv").read_text()

    def test_bad_sweep(self, capsys, tmp_path):
        assert run(capsys, "benchmark", "--mechanisms", "quadratic", "--out-dir", tmp_path)[0] == EXIT_INPUT


def test_help_documents_exit_codes():
    text = build_parser()._subparsers._group_actions[0].choices["discover"].format_help()
    for code in ("0", "2", "3", "4"):
        assert code in text
