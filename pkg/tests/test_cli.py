"""CLI contract tests: exit-code taxonomy, flag conflicts, full-pipeline
determinism, and every subcommand's happy path."""

import json

import pytest

import synthdata
from iohelpers import write_workspace
from ierl.cli import run
from ierl.trainer import ModelStore


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliws")
    insts, store, table, _ = synthdata.make_cluster_task(8, 4, seed=31)
    dataset, llm, kg = write_workspace(root, insts, store, table)
    return {"root": root, "dataset": str(dataset), "llm": str(llm), "kg": str(kg)}


def base_train_args(ws, out, *extra):
    return ["train", "--dataset", ws["dataset"], "--task", "similarity",
            "--llm-emb", ws["llm"], "--kg-emb", ws["kg"],
            "--seed", "7", "--out", out, *extra]


class TestTrainCommand:
    def test_happy_path_writes_store(self, ws, capsys):
        out = str(ws["root"] / "m.jsonl")
        assert run(base_train_args(ws, out, "--agg", "moments", "--max-power", "3")) == 0
        store = ModelStore.load(out)
        assert len(store) == 16
        assert "trained 16 models" in capsys.readouterr().err

    def test_missing_dataset_flag_is_usage_error(self, ws):
        assert run(["train", "--task", "similarity", "--llm-emb", ws["llm"],
                    "--kg-emb", ws["kg"], "--out", "x"]) == 1

    def test_mean_with_max_power_conflicts(self, ws):
        out = str(ws["root"] / "never.jsonl")
        assert run(base_train_args(ws, out, "--agg", "mean", "--max-power", "3")) == 1

    def test_missing_input_file_is_data_error(self, ws):
        args = base_train_args(ws, str(ws["root"] / "never.jsonl"))
        args[2] = str(ws["root"] / "no-such.tsv")
        assert run(args) == 2

    def test_unknown_flag_is_usage_error(self, ws):
        assert run(base_train_args(ws, "x", "--bogus")) == 1

    def test_no_subcommand_is_usage_error(self):
        assert run([]) == 1

    def test_byte_identical_reruns(self, ws):
        out1 = ws["root"] / "d1.jsonl"
        out2 = ws["root"] / "d2.jsonl"
        assert run(base_train_args(ws, str(out1))) == 0
        assert run(base_train_args(ws, str(out2))) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_invalid_threads_env(self, ws, monkeypatch):
        monkeypatch.setenv("IERL_THREADS", "abc")
        assert run(base_train_args(ws, str(ws["root"] / "never2.jsonl"))) == 2

    def test_explicit_threads_env(self, ws, monkeypatch):
        out_a = ws["root"] / "t1.jsonl"
        out_b = ws["root"] / "t4.jsonl"
        monkeypatch.setenv("IERL_THREADS", "1")
        assert run(base_train_args(ws, str(out_a))) == 0
        monkeypatch.setenv("IERL_THREADS", "4")
        assert run(base_train_args(ws, str(out_b))) == 0
        assert out_a.read_bytes() == out_b.read_bytes()


class TestHelp:
    @pytest.mark.parametrize("sub", ["train", "eval", "infer", "batch-variance",
                                     "grid-search"])
    def test_help_exits_zero(self, sub, capsys):
        assert run([sub, "--help"]) == 0
        assert "--out" in capsys.readouterr().out

    def test_train_help_lists_defaults(self, capsys):
        run(["train", "--help"])
        text = capsys.readouterr().out
        for flag, default in [("--agg", "moments"), ("--max-power", "3"),
                              ("--lr", "0.1"), ("--l1-weight", "1.0"),
                              ("--tol", "1e-8"), ("--max-iters", "10000"),
                              ("--seed", "0")]:
            assert flag in text and default in text

    def test_batch_variance_help_lists_defaults(self, capsys):
        run(["batch-variance", "--help"])
        text = capsys.readouterr().out
        assert "--batch-fraction" in text and "0.8" in text
        assert "--num-batches" in text


class TestEvalCommand:
    def test_happy_path(self, ws):
        models = str(ws["root"] / "em.jsonl")
        assert run(base_train_args(ws, models)) == 0
        out = ws["root"] / "eval.json"
        assert run(["eval", "--dataset", ws["dataset"], "--task", "similarity",
                    "--llm-emb", ws["llm"], "--kg-emb", ws["kg"],
                    "--models", models, "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert 0.0 <= report["accuracy"] <= 1.0
        assert report["tp"] + report["tn"] + report["fp"] + report["fn"] == 8
        assert report["config"]["models"] == models

    def test_missing_models_file(self, ws):
        assert run(["eval", "--dataset", ws["dataset"], "--task", "similarity",
                    "--llm-emb", ws["llm"], "--kg-emb", ws["kg"],
                    "--models", str(ws["root"] / "ghost.jsonl"),
                    "--out", str(ws["root"] / "never3.json")]) == 2


class TestInferCommand:
    def test_happy_path(self, ws):
        models = str(ws["root"] / "im.jsonl")
        assert run(base_train_args(ws, models)) == 0
        out = ws["root"] / "infer.json"
        assert run(["infer", "--dataset", ws["dataset"],
                    "--llm-emb", ws["llm"], "--kg-emb", ws["kg"],
                    "--models", models, "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert set(report) == {"pairs", "llm_dominant", "kg_dominant", "green", "pink"}
        assert len(report["pairs"]) == 8
        assert report["green"] + report["pink"] == 8
        assert report["llm_dominant"] + report["kg_dominant"] == 8


class TestBatchVarianceCommand:
    def test_happy_path_and_determinism(self, ws):
        out1 = ws["root"] / "bv1.json"
        out2 = ws["root"] / "bv2.json"
        args = ["batch-variance", "--dataset", ws["dataset"], "--task", "similarity",
                "--llm-emb", ws["llm"], "--kg-emb", ws["kg"],
                "--num-batches", "3", "--seed", "11"]
        assert run(args + ["--out", str(out1)]) == 0
        assert run(args + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        report = json.loads(out1.read_text())
        assert len(report["per_batch_steps"]) == 3
        assert report["min_steps"] == min(report["per_batch_steps"])
        assert report["max_steps"] == max(report["per_batch_steps"])


class TestGridSearchCommand:
    def test_happy_path(self, ws):
        grid = ws["root"] / "grid.json"
        grid.write_text('{"learning_rates": [0.1, 0.2], "l1_weights": [0.5]}')
        # dev split = first three dataset rows (gold labels preserved)
        rows = open(ws["dataset"], encoding="utf-8").read().splitlines()[:4]
        dev = ws["root"] / "dev.tsv"
        dev.write_text("\n".join(rows) + "\n", encoding="utf-8")
        out = ws["root"] / "gs.json"
        assert run(["grid-search", "--dataset", ws["dataset"], "--task", "similarity",
                    "--llm-emb", ws["llm"], "--kg-emb", ws["kg"],
                    "--dev", str(dev), "--grid", str(grid), "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["best"]["l1_weight"] == 0.5
        assert len(report["cells"]) == 2
