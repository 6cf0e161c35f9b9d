import json

import pytest

from app.main import EXIT_BAD_INPUT, EXIT_MODULE_ERROR, main


@pytest.fixture
def config_file(tmp_path, run_config_doc):
    def write(**overrides):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(run_config_doc(**overrides)))
        return path

    return write


def test_run_writes_outputs(tmp_path, config_file, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config_file()), "--seed", "5", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["best_x"] == [0, 0]
    assert (out / "trace.jsonl").exists()
    assert json.loads((out / "summary.json").read_text())["best_g"] == 0.0


def test_run_is_byte_reproducible(tmp_path, config_file):
    path = config_file()
    for name in ("a", "b"):
        assert main(["run", "--config", str(path), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "trace.jsonl").read_bytes() == (
        tmp_path / "b" / "trace.jsonl"
    ).read_bytes()


def test_oracle_prints_exact_values(config_file, capsys):
    assert main(["oracle", "--config", str(config_file())]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["best_x"] == [0, 0]
    assert doc["expected_g"] == pytest.approx(1.0)
    assert doc["canonical_marginals"][0][0] == pytest.approx(0.731059, abs=1e-6)


def test_invalid_config_exits_2(tmp_path, config_file):
    assert main(["run", "--config", str(config_file(algorithm="simplex"))]) == EXIT_BAD_INPUT
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_BAD_INPUT


def test_module_error_exits_1(tmp_path, config_file):
    path = config_file(problem={"generator": "knapsack"})
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_MODULE_ERROR


def test_bench_rejects_unknown_suite():
    with pytest.raises(SystemExit):
        main(["bench", "--suite", "nope"])
