import csv
from pathlib import Path

import numpy as np
import pytest

from dvpp.cli import main
from dvpp.records import read_rows, read_trace_csv

SAMPLES = Path(__file__).resolve().parents[1] / "samples"


def test_simulate_writes_outputs(tmp_path, capsys):
    out = tmp_path / "sim"
    code = main(["simulate", "--scenario", "TypeI", "--events", str(SAMPLES / "events_trip.toml"),
                 "--duration", "30", "--sample-period", "0.1", "--out", str(out)])
    assert code == 0
    for name in ("trace.csv", "metrics.csv", "dispatch.csv", "controllers.csv", "events.csv",
                 "effective_config.json"):
        assert (out / name).exists(), name
    tr = read_trace_csv(out / "trace.csv", out / "events.csv")
    assert tr.events and tr.events[0][0] == 10.0
    assert tr.delta_f_hz[-1] == pytest.approx(-0.238, abs=0.005)
    assert "nadir" in capsys.readouterr().out


def test_trace_round_trip_is_lossless(tmp_path):
    out = tmp_path / "a"
    main(["simulate", "--scenario", "TypeI", "--events", str(SAMPLES / "events_trip.toml"),
          "--duration", "12", "--out", str(out)])
    tr = read_trace_csv(out / "trace.csv")
    with (out / "trace.csv").open() as fh:
        first = next(csv.reader(fh))
    assert list(tr.columns) == first
    assert np.isfinite(tr.delta_f_hz).all()


def test_missing_scenario_exit_2(tmp_path, capsys):
    path = tmp_path / "missing.toml"
    assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path)]) == 2
    assert str(path) in capsys.readouterr().err


def test_bad_event_kind_exit_3(tmp_path, capsys):
    code = main(["simulate", "--scenario", "TypeI", "--events", str(SAMPLES / "events_bad.toml"),
                 "--out", str(tmp_path)])
    assert code == 3
    assert "meteor_strike" in capsys.readouterr().err


@pytest.mark.parametrize("strategy", ["os1", "os2"])
def test_step_experiment_grid(tmp_path, strategy):
    assert main(["step-experiment", "--strategy", strategy, "--duration", "5", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / f"step_{strategy}.csv")
    groups = {(r["v_mps"], r["dp_ref"]) for r in rows}
    assert len(groups) == 18
    summary = read_rows(tmp_path / f"step_summary_{strategy}.csv")
    assert len(summary) == 18


def test_unknown_strategy_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["step-experiment", "--strategy", "os3", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_offer_worked_example(tmp_path, capsys):
    assert main(["offer", "--market", str(SAMPLES / "market_2period.toml"), "--out", str(tmp_path)]) == 0
    assert "worst-case revenue 100.00 EUR" in capsys.readouterr().out
    rows = read_rows(tmp_path / "offer.csv")
    assert [float(r["offer_mw"]) for r in rows] == pytest.approx([5.0, 5.0])


def test_redispatch_single_unit(tmp_path, capsys):
    scen = tmp_path / "one.toml"
    scen.write_text("""\
[meta]
slack_bus = 1
[[buses]]
id = 1
load_mw = 7.0
[[buses]]
id = 2
[[lines]]
from_bus = 1
to_bus = 2
reactance_pu = 0.1
limit_mw = 50.0
[[units]]
id = "H"
tech = "HYD"
bus = 2
rating_mw = 20.0
cost_per_mwh = 12.0
[redispatch]
reserve_mw = 0.0
""")
    assert main(["redispatch", "--scenario", str(scen), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "H: 7.000 MW" in out and "cost 84.00" in out


def test_redispatch_infeasible_names_constraint(tmp_path, capsys):
    assert main(["redispatch", "--scenario", "TypeI", "--target", "500", "--out", str(tmp_path)]) == 1
    assert "power balance" in capsys.readouterr().err


def test_validate(capsys):
    assert main(["validate", "--scenario", "TypeIII"]) == 0
    assert "11 buses" in capsys.readouterr().out
