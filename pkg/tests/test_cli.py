import json

import pytest

from sheetstream.cli import main


def run_cli(*args) -> int:
    return main([str(a) for a in args])


def test_check_vwap_fixture_passes(vwap_model_path):
    assert run_cli("check", vwap_model_path) == 0


def test_check_mixed_partition_keys_fails_naming_streams(tmp_path, capsys):
    doc = {
        "streams": [
            {"name": "trades", "attrs": [{"name": "sym", "type": "text"}], "partition_by": "sym"},
            {"name": "quotes", "attrs": [{"name": "geography", "type": "number"}],
             "partition_by": "geography"},
        ]
    }
    p = tmp_path / "bad.sheet.json"
    p.write_text(json.dumps(doc))
    assert run_cli("check", p) == 1
    out = capsys.readouterr().out
    assert "trades" in out and "quotes" in out


def test_check_cycle_fails(tmp_path, capsys):
    p = tmp_path / "cycle.sheet.json"
    p.write_text(json.dumps({"cells": [{"addr": "G3", "formula": "=G7"},
                                       {"addr": "G7", "formula": "=G3"}]}))
    assert run_cli("check", p) == 1
    assert "cycle" in capsys.readouterr().out


def test_check_nonexistent_path_exits_2(tmp_path):
    assert run_cli("check", tmp_path / "missing.sheet.json") == 2


def test_run_reproduces_golden_bytes(tmp_path, vwap_model_path, vwap_inputs, fixtures_dir, capsys):
    out = tmp_path / "out.csv"
    code = run_cli(
        "run", vwap_model_path,
        "--input", f"trades={vwap_inputs['trades']}",
        "--input", f"quotes={vwap_inputs['quotes']}",
        "--output", out,
    )
    assert code == 0
    assert out.read_bytes() == (fixtures_dir / "vwap_golden.csv").read_bytes()
    stderr = capsys.readouterr().err
    assert "tuples_in=220" in stderr and "outputs_emitted=20" in stderr


def test_run_twice_is_byte_identical(tmp_path, vwap_model_path, vwap_inputs):
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        assert run_cli(
            "run", vwap_model_path,
            "--input", f"trades={vwap_inputs['trades']}",
            "--input", f"quotes={vwap_inputs['quotes']}",
            "--output", out,
        ) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_run_jsonl_matches_golden(tmp_path, vwap_model_path, vwap_inputs, fixtures_dir):
    out = tmp_path / "out.jsonl"
    assert run_cli(
        "run", vwap_model_path,
        "--input", f"trades={vwap_inputs['trades']}",
        "--input", f"quotes={vwap_inputs['quotes']}",
        "--output", out, "--format", "jsonl",
    ) == 0
    assert out.read_bytes() == (fixtures_dir / "vwap_golden.jsonl").read_bytes()


def test_run_partition_cap_exceeded_exits_1(tmp_path, fixtures_dir, capsys):
    trades = tmp_path / "trades.csv"
    trades.write_text("sym,price,vol,pv,ts\nA,1,1,1,0\nB,2,1,2,1\n")
    quotes = tmp_path / "quotes.csv"
    quotes.write_text("sym,price,ts\n")
    code = run_cli(
        "run", fixtures_dir / "vwap_partition.sheet.json",
        "--input", f"trades={trades}", "--input", f"quotes={quotes}",
        "--output", tmp_path / "out.csv", "--max-partitions", "1",
    )
    assert code == 1
    assert "partition limit" in capsys.readouterr().err


def test_run_missing_input_file_exits_1(tmp_path, vwap_model_path, capsys):
    code = run_cli(
        "run", vwap_model_path,
        "--input", f"trades={tmp_path / 'nope.csv'}",
        "--input", f"quotes={tmp_path / 'nope2.csv'}",
        "--output", tmp_path / "out.csv",
    )
    assert code == 1


def test_run_writes_stdout_by_default(tmp_path, capsys):
    doc = {
        "streams": [{"name": "t", "attrs": [{"name": "p", "type": "number"}]}],
        "bindings": [{"stream": "t", "kind": "latest", "region": "A1:A1", "projection": ["p"]}],
        "exports": [{"addr": "A1", "name": "p"}],
    }
    model = tmp_path / "m.sheet.json"
    model.write_text(json.dumps(doc))
    data = tmp_path / "t.csv"
    data.write_text("p\n4\n5\n")
    assert run_cli("run", model, "--input", f"t={data}") == 0
    out = capsys.readouterr().out
    assert out == "__seq,p\n0,4\n1,5\n"


def test_invalid_model_diagnostics_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.sheet.json"
    p.write_text("{broken")
    assert run_cli("check", p) == 1
    assert (
        run_cli("run", p, "--output", tmp_path / "o.csv") == 1
    )


def test_bad_input_flag_exits_2(tmp_path, vwap_model_path):
    with pytest.raises(SystemExit):
        run_cli("run", vwap_model_path, "--input", "malformed")
