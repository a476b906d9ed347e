import json
import os

import pytest

from gcnx.cli import main


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("train")
    code = main(
        [
            "train",
            "--data", "synth:NO:60",
            "--epochs", "10",
            "--layers", "8,16",
            "--seed", "3",
            "--out-dir", str(out_dir),
        ]
    )
    assert code == 0
    return out_dir


def read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]


class TestTrain:
    def test_checkpoint_and_log_written(self, trained, capsys):
        assert (trained / "checkpoint.json").exists()
        log = json.loads((trained / "train_log.json").read_text())
        assert "test_metrics" in log
        assert "accuracy" in log["test_metrics"]
        assert log["header"]["tool_version"]
        assert log["header"]["seed"] == 3

    def test_rerun_identical_checkpoint_bytes(self, trained, tmp_path):
        code = main(
            [
                "train",
                "--data", "synth:NO:60",
                "--epochs", "10",
                "--layers", "8,16",
                "--seed", "3",
                "--out-dir", str(tmp_path),
            ]
        )
        assert code == 0
        assert (tmp_path / "checkpoint.json").read_bytes() == (
            trained / "checkpoint.json"
        ).read_bytes()

    def test_missing_input_exit_2(self, tmp_path, capsys):
        code = main(
            [
                "train",
                "--data", str(tmp_path / "absent.csv"),
                "--out-dir", str(tmp_path),
            ]
        )
        assert code == 2
        assert "absent.csv" in capsys.readouterr().err


class TestExplain:
    def test_record_count_one_molecule(self, trained, tmp_path):
        data = tmp_path / "one.csv"
        data.write_text("smiles,label\nCCO,1\n", encoding="utf-8")
        out = tmp_path / "out"
        code = main(
            [
                "explain",
                "--data", str(data),
                "--checkpoint", str(trained / "checkpoint.json"),
                "--methods", "gradient,cam",
                "--seed", "3",
                "--out-dir", str(out),
            ]
        )
        assert code == 0
        lines = read_jsonl(out / "heatmaps.jsonl")
        records = lines[1:]  # first line is the artifact header
        assert len(records) == 4  # 1 molecule x 2 methods x 2 classes
        assert {r["method"] for r in records} == {"gradient", "cam"}
        assert {r["class"] for r in records} == {0, 1}

    def test_cam_equals_final_grad_cam_records(self, trained, tmp_path):
        out = tmp_path / "out"
        code = main(
            [
                "explain",
                "--data", "synth:NO:8",
                "--checkpoint", str(trained / "checkpoint.json"),
                "--methods", "cam,grad_cam",
                "--seed", "3",
                "--out-dir", str(out),
            ]
        )
        assert code == 0
        records = read_jsonl(out / "heatmaps.jsonl")[1:]
        by_key = {}
        for r in records:
            by_key[(r["molecule_id"], r["method"], r["class"])] = r["values"]
        for (mol_id, method, class_id), values in by_key.items():
            if method == "cam":
                assert values == by_key[(mol_id, "grad_cam", class_id)]

    def test_render_emits_svg_and_dot(self, trained, tmp_path):
        out = tmp_path / "out"
        code = main(
            [
                "explain",
                "--data", "synth:NO:4",
                "--checkpoint", str(trained / "checkpoint.json"),
                "--methods", "grad_cam,eb",
                "--seed", "3",
                "--out-dir", str(out),
                "--render",
            ]
        )
        assert code == 0
        rendered = sorted(os.listdir(out / "render"))
        svgs = [f for f in rendered if f.endswith(".svg")]
        dots = [f for f in rendered if f.endswith(".dot")]
        assert len(svgs) == 4 * 2  # one per molecule per method
        assert len(dots) == len(svgs)
        sample = (out / "render" / svgs[0]).read_text()
        assert "<svg" in sample and "circle" in sample


class TestMetrics:
    def test_table_shape(self, trained, tmp_path):
        out = tmp_path / "out"
        code = main(
            [
                "metrics",
                "--data", "synth:NO:16",
                "--checkpoint", str(trained / "checkpoint.json"),
                "--seed", "3",
                "--out-dir", str(out),
            ]
        )
        assert code == 0
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert lines[0].startswith("# gcnx")
        assert lines[1] == "method,fidelity,contrastivity,sparsity"
        assert len(lines) == 2 + 5  # header comment, column row, 5 methods
        payload = json.loads((out / "metrics.json").read_text())
        assert len(payload["reports"]) == 5

    def test_null_explainer_zero_fidelity(self, trained, tmp_path):
        out = tmp_path / "out"
        code = main(
            [
                "metrics",
                "--data", "synth:NO:12",
                "--checkpoint", str(trained / "checkpoint.json"),
                "--methods", "null",
                "--seed", "3",
                "--out-dir", str(out),
            ]
        )
        assert code == 0
        payload = json.loads((out / "metrics.json").read_text())
        assert payload["reports"][0]["fidelity"] == 0.0

    def test_same_seed_identical_reports(self, trained, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = main(
                [
                    "metrics",
                    "--data", "synth:NO:12",
                    "--checkpoint", str(trained / "checkpoint.json"),
                    "--seed", "5",
                    "--out-dir", str(out),
                ]
            )
            assert code == 0
            outs.append((out / "metrics.csv").read_bytes())
        assert outs[0] == outs[1]


class TestMine:
    def test_report_columns_and_footer(self, trained, tmp_path):
        out = tmp_path / "out"
        code = main(
            [
                "mine",
                "--data", "synth:NO:120",
                "--checkpoint", str(trained / "checkpoint.json"),
                "--min-occurrence", "5",
                "--seed", "3",
                "--out-dir", str(out),
            ]
        )
        assert code == 0
        lines = (out / "mining.csv").read_text().strip().splitlines()
        assert (
            lines[1]
            == "rank,substructure,canonical_key,n_explained,n_pos,n_neg,r_e,r_p"
        )
        assert "average_r_p" in lines[-1]
        payload = json.loads((out / "mining.json").read_text())
        assert payload["base_method"] == "grad_cam"
        assert payload["records"]
        for record in payload["records"]:
            assert set(record) >= {"substructure", "n_explained", "n_pos", "n_neg", "r_e", "r_p"}

    def test_min_occurrence_above_corpus_max_empty_report(self, trained, tmp_path):
        out = tmp_path / "out"
        code = main(
            [
                "mine",
                "--data", "synth:NO:60",
                "--checkpoint", str(trained / "checkpoint.json"),
                "--min-occurrence", "100000",
                "--seed", "3",
                "--out-dir", str(out),
            ]
        )
        assert code == 0
        payload = json.loads((out / "mining.json").read_text())
        assert payload["records"] == []
        assert payload["average_r_p"] is None


class TestParsing:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0

    def test_unknown_command_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["conjure"])
        assert exc.value.code == 2

    def test_runtime_failure_exits_1(self, tmp_path, capsys):
        data = tmp_path / "one_class.csv"
        rows = "\n".join(f"m{i},CCO,1" for i in range(12))
        data.write_text("id,smiles,label\n" + rows + "\n", encoding="utf-8")
        code = main(
            [
                "train",
                "--data", str(data),
                "--id-column", "id",
                "--out-dir", str(tmp_path / "out"),
            ]
        )
        assert code == 1
        assert "classes" in capsys.readouterr().err


class TestWorkerEnv:
    def test_thread_count_does_not_change_records(self, trained, tmp_path, monkeypatch):
        payloads = []
        for workers in ("1", "4"):
            monkeypatch.setenv("GCNX_THREADS", workers)
            out = tmp_path / f"w{workers}"
            code = main(
                [
                    "explain",
                    "--data", "synth:NO:8",
                    "--checkpoint", str(trained / "checkpoint.json"),
                    "--seed", "3",
                    "--out-dir", str(out),
                ]
            )
            assert code == 0
            payloads.append((out / "heatmaps.jsonl").read_bytes())
        assert payloads[0] == payloads[1]
