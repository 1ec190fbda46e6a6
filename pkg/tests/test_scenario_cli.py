import json
from dataclasses import replace

import pytest

from _helpers import small_scenario
from loadshed.cli import main
from loadshed.model import LoadGroup, Variability
from loadshed.records import read_run_csv
from loadshed.report import (
    GROUPINGS,
    IncompatibleRunsError,
    compare_runs,
    group_power_series,
)
from loadshed.scenario import (
    default_scenario,
    load_scenario,
    save_scenario,
    scenario_from_json,
    scenario_to_json,
    validate_scenario,
)
from loadshed.sim import run_lockstep
from loadshed import report


class TestScenarioConfig:
    def test_default_scenario_is_valid(self):
        assert validate_scenario(default_scenario()).ok

    def test_json_round_trip(self):
        sc = default_scenario()
        again = scenario_from_json(json.loads(json.dumps(scenario_to_json(sc))))
        assert again == sc

    def test_save_and_load(self, tmp_path):
        sc = small_scenario()
        path = tmp_path / "scenario.json"
        save_scenario(sc, path)
        assert load_scenario(path) == sc

    def test_unknown_format_rejected(self):
        with pytest.raises(Exception):
            scenario_from_json({"format": "something-else"})

    def test_profile_domain_violation_flagged(self):
        sc = small_scenario()
        bad_fleet = tuple(
            replace(s, variability=Variability.binary()) if s.id == 7 else s
            for s in sc.fleet
        )
        report_ = validate_scenario(replace(sc, fleet=bad_fleet))
        assert any(i.code == "profile-domain" for i in report_)

    def test_missing_profile_flagged(self):
        sc = small_scenario()
        profiles = {k: v for k, v in sc.profiles.items() if k != 3}
        report_ = validate_scenario(replace(sc, profiles=profiles))
        assert any(i.code == "missing-profile" for i in report_)

    def test_event_outside_window_flagged(self):
        sc = small_scenario()
        from loadshed.plant import GeneratorTrip

        report_ = validate_scenario(replace(sc, events=(GeneratorTrip(99.0, 2),)))
        assert any(i.code == "event-window" for i in report_)


@pytest.fixture(scope="module")
def small_runs(tmp_path_factory):
    base_dir = tmp_path_factory.mktemp("runs")
    sc = small_scenario()
    paths = {}
    for algorithm in ("baseline", "advanced"):
        result = run_lockstep(sc, algorithm=algorithm, seed=0)
        out = base_dir / algorithm
        report.write_run_artifacts(result, out)
        paths[algorithm] = out
    return paths


class TestReport:
    def test_artifacts_exist(self, small_runs):
        out = small_runs["advanced"]
        assert (out / "run.csv").exists()
        assert (out / "timing.csv").exists()
        assert (out / "summary.txt").exists()
        for grouping in GROUPINGS:
            assert (out / "groups" / f"{grouping}.csv").exists()

    def test_summary_mentions_solve_stats(self, small_runs):
        text = (small_runs["advanced"] / "summary.txt").read_text()
        assert "max" in text and "p99" in text
        assert "integral operability (commanded)" in text

    def test_group_partition_sums_to_total(self, small_runs):
        meta, rows = read_run_csv(small_runs["advanced"] / "run.csv")
        total = group_power_series(meta, rows, "TOTAL")
        by_group = [
            group_power_series(meta, rows, g.value)
            for g in LoadGroup
            if any(grp == g.value for _, grp, _ in meta.fleet)
        ]
        for k, (t, demand, served) in enumerate(total):
            assert demand == pytest.approx(sum(series[k][1] for series in by_group))
            assert served == pytest.approx(sum(series[k][2] for series in by_group))

    def test_unknown_grouping_rejected(self, small_runs):
        meta, rows = read_run_csv(small_runs["advanced"] / "run.csv")
        with pytest.raises(ValueError):
            group_power_series(meta, rows, "REACTOR")

    def test_bundled_pmm_series_shows_shortfall_reduction(self, advanced_run):
        series = group_power_series(advanced_run.meta, advanced_run.rows, "PMM")
        in_window = [(d, s) for t, d, s in series if 312.0 <= t <= 394.0]
        assert all(s < d - 1e6 for d, s in in_window), "PMM not visibly reduced"
        # pre-trip the series tracks demand, modulo one tick of command
        # latency plus actuator lag around each ramp step
        before = [(d, s) for t, d, s in series if 100.0 <= t <= 300.0]
        assert all(abs(s - d) < 0.08 * max(d, 1.0) for d, s in before)

    def test_bundled_ipnc_series_tracks_demand_in_both_runs(self, advanced_run,
                                                            baseline_run):
        # IPNC demand is constant from t=0, so measured power sits on demand
        # in the advanced run; the baseline cuts IPNC during its semi-vital
        # stage, so equality holds only until the trip there
        for result, horizon in ((advanced_run, 600.0), (baseline_run, 310.0)):
            series = group_power_series(result.meta, result.rows, "IPNC")
            for t, demand, served in series:
                if t <= horizon:
                    assert served == pytest.approx(demand, rel=1e-9)

    def test_compare_orders_algorithms(self, small_runs):
        table = compare_runs(small_runs["baseline"] / "run.csv",
                             small_runs["advanced"] / "run.csv")
        assert "baseline" in table and "advanced" in table
        assert "integral operability" in table

    def test_compare_run_with_itself_is_identical_columns(self, small_runs):
        table = compare_runs(small_runs["advanced"] / "run.csv",
                             small_runs["advanced"] / "run.csv")
        for line in table.splitlines()[2:]:
            cells = line.split()
            assert cells[-1] == cells[-2]

    def test_compare_mismatched_fleets_errors(self, small_runs, tmp_path):
        sc = small_scenario()
        shrunk = replace(
            sc,
            fleet=sc.fleet[:6],
            profiles={k: v for k, v in sc.profiles.items() if k <= 6},
            weight_sets=(replace(
                sc.weight_sets[0],
                weights={k: v for k, v in sc.weight_sets[0].weights.items() if k <= 6},
            ),),
        )
        result = run_lockstep(shrunk, algorithm="advanced", seed=0)
        out = tmp_path / "shrunk"
        report.write_run_artifacts(result, out)
        with pytest.raises(IncompatibleRunsError):
            compare_runs(small_runs["advanced"] / "run.csv", out / "run.csv")


class TestRunScenario:
    def test_library_entry_point(self, tmp_path):
        from loadshed.report import run_scenario

        sc_path = tmp_path / "scenario.json"
        save_scenario(small_scenario(), sc_path)
        out = run_scenario(sc_path, tmp_path / "out", seed=7, algorithm="advanced")
        assert (out / "run.csv").exists() and (out / "summary.txt").exists()

    def test_invalid_scenario_raises_with_report(self, tmp_path):
        from loadshed.report import ScenarioValidationError, run_scenario

        sc = small_scenario()
        bad = replace(sc, profiles={k: v for k, v in sc.profiles.items() if k != 3})
        sc_path = tmp_path / "bad.json"
        save_scenario(bad, sc_path)
        with pytest.raises(ScenarioValidationError) as exc:
            run_scenario(sc_path, tmp_path / "out")
        assert not exc.value.report.ok

    def test_unknown_mode_rejected(self, tmp_path):
        from loadshed.report import run_scenario

        with pytest.raises(ValueError):
            run_scenario(None, tmp_path / "out", mode="telepathy")


class TestCli:
    def test_validate_default_scenario(self, capsys):
        assert main(["validate"]) == 0
        assert "ok" in capsys.readouterr().out

    def test_validate_bad_scenario_exits_one(self, tmp_path, capsys):
        sc = small_scenario()
        bad = replace(sc, profiles={k: v for k, v in sc.profiles.items() if k != 3})
        path = tmp_path / "bad.json"
        save_scenario(bad, path)
        assert main(["validate", "--scenario", str(path)]) == 1

    def test_run_compare_plot_data_flow(self, tmp_path, capsys):
        sc_path = tmp_path / "scenario.json"
        save_scenario(small_scenario(), sc_path)
        out_a = tmp_path / "base"
        out_b = tmp_path / "adv"
        assert main(["run", "--scenario", str(sc_path), "--algorithm", "baseline",
                     "--seed", "0", "--out", str(out_a)]) == 0
        assert main(["run", "--scenario", str(sc_path), "--algorithm", "advanced",
                     "--seed", "0", "--out", str(out_b), "--tau", "0.05"]) == 0
        assert (out_a / "run.csv").exists() and (out_b / "run.csv").exists()
        assert main(["compare", str(out_a / "run.csv"), str(out_b / "run.csv")]) == 0
        table = capsys.readouterr().out
        assert "integral operability" in table
        plot_dir = tmp_path / "plots"
        assert main(["plot-data", str(out_b / "run.csv"), "--group", "PMM",
                     "--out", str(plot_dir)]) == 0
        header = (plot_dir / "PMM.csv").read_text().splitlines()
        assert header[1] == "time_s,demand_w,served_w"

    def test_plot_data_rejects_unknown_group(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["plot-data", "whatever.csv", "--group", "REACTOR", "--out",
                  str(tmp_path)])
        assert exc.value.code == 2

    def test_run_rejects_invalid_scenario_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{}")
        assert main(["run", "--scenario", str(path), "--out",
                     str(tmp_path / "out")]) == 1

    def test_networked_cli_run(self, tmp_path):
        sc_path = tmp_path / "scenario.json"
        save_scenario(small_scenario(), sc_path)
        out = tmp_path / "net"
        assert main(["run", "--scenario", str(sc_path), "--mode", "networked",
                     "--seed", "0", "--out", str(out)]) == 0
        meta, rows = read_run_csv(out / "run.csv")
        assert meta.mode == "networked" and len(rows) == 300
