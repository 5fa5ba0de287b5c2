import json

import pandas as pd
import pytest

from funcbayes.cli import build_parser, main

FAST = ["--iter", "120", "--warmup", "60", "--chains", "2", "--k", "6", "--seed", "3"]


@pytest.fixture(autouse=True)
def _isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def _last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_simulate_writes_datasets(tmp_path, capsys):
    code = main(["simulate", "--model", "cox", "--n", "30", "--replications", "2", "--seed", "1", "--out", "sim"])
    assert code == 0
    assert sorted(p.name for p in (tmp_path / "sim").iterdir()) == ["cox_n30_rep000.csv", "cox_n30_rep001.csv"]
    assert _last_json(capsys)["replications"] == 2


def test_fit_and_summarize(tmp_path, capsys):
    main(["simulate", "--model", "cox", "--n", "40", "--seed", "2", "--out", "sim"])
    capsys.readouterr()
    code = main(["fit", "--model", "cox", "--data", "sim/cox_n40_rep000.csv", "--hazard-df", "4", "--out", "run"] + FAST)
    assert code == 0
    run = tmp_path / "run"
    for name in ("draws.bin", "manifest.json", "beta.csv", "scalars.json", "survival.csv", "diagnostics.json"):
        assert (run / name).exists(), name
    table = pd.read_csv(run / "beta.csv")
    assert list(table.columns) == ["t", "mean", "pw_lo", "pw_hi", "cma_lo", "cma_hi"]
    assert len(table) == 50
    scalars = json.loads((run / "scalars.json").read_text())
    assert scalars[0]["parameter"] == "eta0"
    assert {"estimate", "q2.5", "q97.5"} <= set(scalars[0])
    diag = json.loads((run / "diagnostics.json").read_text())
    assert {"divergences", "chains", "max_rhat", "min_ess"} <= set(diag)
    capsys.readouterr()

    before = table.copy()
    assert main(["summarize", "--out", "run"]) == 0
    pd.testing.assert_frame_equal(pd.read_csv(run / "beta.csv"), before)


def test_fit_without_censor_column_reports_error(tmp_path, capsys):
    main(["simulate", "--model", "sofr-gaussian", "--n", "20", "--out", "sim"])
    capsys.readouterr()
    code = main(["fit", "--model", "cox", "--data", "sim/sofr-gaussian_n20_rep000.csv", "--out", "run"] + FAST)
    assert code == 2
    record = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert record["error"] == "IngestError"
    assert record["column"] == "censor"


def test_missing_file_exits_one(capsys):
    code = main(["fit", "--model", "sofr-gaussian", "--data", "nope.csv", "--out", "run"] + FAST)
    assert code == 1
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["error"] == "FileNotFoundError"


def test_parser_flags():
    args = build_parser().parse_args(
        ["reproduce-table", "--model", "joint-cox", "--n", "200", "--tau", "2", "--noise-sd", "10", "--bs", "cyclic"]
    )
    assert args.command == "reproduce-table"
    assert args.noise_sd == 10.0 and args.bs == "cyclic"
    with pytest.raises(SystemExit):
        build_parser().parse_args(["fit", "--model", "cox"])
