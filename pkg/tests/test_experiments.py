import csv
import io
import json
import math
import os

import numpy as np
import pytest

from convact.errors import ConfigError
from convact.experiments import (
    DEFAULT_GRIDS,
    ExperimentConfig,
    ExperimentFailure,
    ExperimentKind,
    ExperimentRow,
    build_problem,
    emit_plot_data,
    load_config,
    make_grid,
    parse_config,
    plot_data_csv,
    resolve_threads,
    run,
)
from convact.signals import Constant, Sinusoid, Tabulated
from convact.solver import certify_stationarity, solve_bar, solve_sdof

# identity rows whose defect is pure round-off on every grid
ROUND_OFF_ROWS = {"commutativity", "bilinearity", "titchmarsh_probe_failures", "half_ibp_gl"}


@pytest.fixture(scope="module")
def identities_report():
    return run(ExperimentConfig(ExperimentKind.IDENTITIES, DEFAULT_GRIDS[ExperimentKind.IDENTITIES]), out_dir=None)


@pytest.fixture(scope="module")
def sdof_report():
    return run(ExperimentConfig(ExperimentKind.SDOF, ((64,), (128,), (256,))), out_dir=None)


def _rows(csv_text):
    return list(csv.reader(io.StringIO(csv_text)))


class TestParseConfig:
    def test_minimal(self):
        cfg = parse_config('{"kind": "sdof"}')
        assert cfg.grids == DEFAULT_GRIDS[ExperimentKind.SDOF]
        assert cfg.output == "sdof" and cfg.name == "sdof"
        assert cfg.problem["k"] == 1.0 and cfg.problem["preset"] == "cos"

    def test_overrides_and_bar_grids(self):
        cfg = parse_config(
            '{"kind": "bar_viscoelastic", "grids": [[4, 8], [8, 16]], "problem": {"gamma": 0.2}, "output": "vb"}'
        )
        assert cfg.grids == ((4, 8), (8, 16))
        assert cfg.problem["gamma"] == 0.2
        assert cfg.output == "vb"

    def test_invalid_json_reports_position(self):
        with pytest.raises(ConfigError, match=r"line 3, column \d+"):
            parse_config('{\n "kind": "sdof",\n "grids": [64,,]\n}')

    def test_unknown_field_has_line(self):
        with pytest.raises(ConfigError, match=r"line 3: field 'grid'"):
            parse_config('{\n  "kind": "sdof",\n  "grid": [64]\n}')

    @pytest.mark.parametrize(
        "text, field",
        [
            ('{"kind": "sdof", "grids": []}', "grids"),
            ('{"kind": "sdof", "grids": [64, 64]}', "grids"),
            ('{"kind": "sdof", "grids": [128, 64]}', "grids"),
            ('{"kind": "sdof", "grids": [[8, 8]]}', "grids"),
            ('{"kind": "bar", "grids": [8]}', "grids"),
            ('{"kind": "sdof", "grids": [1]}', "grids"),
            ('{"kind": "sdof", "grids": ["a"]}', "grids"),
            ('{"kind": "sdof", "t_final": -1}', "t_final"),
            ('{"kind": "sdof", "seed": 1.5}', "seed"),
            ('{"kind": "sdof", "max_free_nodes": 0}', "max_free_nodes"),
            ('{"kind": "spring"}', "kind"),
            ('{"kind": "sdof", "problem": {"c": 1.0}}', "c"),
            ('{"kind": "sdof_damped", "problem": {"c": 0.0}}', "c"),
            ('{"kind": "bar", "problem": {"gamma": 0.1}}', "gamma"),
            ('{"kind": "bar_viscoelastic", "problem": {"gamma": 0}}', "gamma"),
            ('{"kind": "sdof", "problem": {"rho": 1.0}}', "rho"),
            ('{"kind": "sdof", "problem": {"m": "heavy"}}', "m"),
            ('{"kind": "sdof", "problem": {"preset": "nope"}}', "preset"),
            ('{"kind": "sdof", "problem": {"preset": "standing_wave"}}', "preset"),
            ('{"kind": "identities", "problem": {"m": 1}}', "problem"),
            ('{"kind": "sdof", "problem": {"m": -1}}', "problem"),
            ('{"kind": "bar", "problem": {"f": [1, 2]}}', "f"),
            ('{"kind": "sdof", "problem": {"f": {"preset": "sinusoid", "amplitude": 1}}}', "f"),
            ('{"kind": "sdof", "problem": {"f": {"preset": "square"}}}', "f"),
        ],
    )
    def test_field_diagnostics(self, text, field):
        with pytest.raises(ConfigError, match=f"field '{field}'"):
            parse_config(text)

    def test_missing_kind(self):
        with pytest.raises(ConfigError, match="field 'kind'"):
            parse_config("{}")

    def test_not_an_object(self):
        with pytest.raises(ConfigError):
            parse_config("[1, 2]")

    def test_load_prefixes_path(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"kind": "sdof", "grids": [8, 4]}')
        with pytest.raises(ConfigError, match="bad.json: line 1: field 'grids'"):
            load_config(path)

    def test_direct_construction_validates(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(ExperimentKind.SDOF, ((64,), (32,)))
        with pytest.raises(ConfigError):
            ExperimentConfig(ExperimentKind.SDOF, ((64,),), t_final=0.0)


class TestForcingPresets:
    @pytest.mark.parametrize(
        "spec, kind",
        [
            (2.0, Constant),
            ({"preset": "constant", "value": 2.0}, Constant),
            ({"preset": "sinusoid", "amplitude": 1.0, "frequency": 3.0}, Sinusoid),
            ([0.0, 1.0, 0.5], Tabulated),
            ({"samples": [0.0, 1.0, 0.5]}, Tabulated),
        ],
    )
    def test_forms(self, spec, kind):
        cfg = parse_config(json.dumps({"kind": "sdof", "grids": [16], "problem": {"f": spec}}))
        p = build_problem(cfg, make_grid(cfg, (16,)))
        assert isinstance(p.f, kind)

    def test_tabulated_spans_the_interval(self):
        cfg = parse_config('{"kind": "sdof", "t_final": 2.0, "grids": [16], "problem": {"f": [0, 4]}}')
        p = build_problem(cfg, make_grid(cfg, (16,)))
        assert p.f(np.array([1.0]))[0] == pytest.approx(2.0)
        # natural impulse uses the interpolated forcing
        assert p.f0 == 0.0

    def test_tabulated_run(self):
        cfg = parse_config(
            '{"kind": "sdof", "grids": [64, 128, 256], "problem": {"f": [0, 0.5, 1.0, 0.5, 0.0]}}'
        )
        rep = run(cfg, out_dir=None)
        err = rep.series("sdof", "oracle_error_sup")
        assert np.all(np.diff(err) < 0)

    def test_explicit_impulse_is_kept(self):
        cfg = parse_config('{"kind": "sdof", "grids": [16], "problem": {"f0": 0.5}}')
        assert build_problem(cfg, make_grid(cfg, (16,))).f0 == 0.5

    def test_bar_preset(self):
        cfg = parse_config('{"kind": "bar_viscoelastic", "grids": [[4, 8]]}')
        p = build_problem(cfg, make_grid(cfg, (4, 8)))
        assert p.gamma == 0.05 and p.p_hat0 == 0.0


class TestRun:
    def test_identities_decrease(self, identities_report):
        rep = identities_report
        assert len(rep.experiments()) == 15
        for name in rep.experiments():
            series = rep.series(name, "residual_sup")
            if name in ROUND_OFF_ROWS:
                assert np.all(series <= 1e-12), name
            else:
                assert np.all(np.diff(series) < 0), (name, series)

    def test_identity_orders(self, identities_report):
        assert all(o >= 1.95 for o in identities_report.order("conv_ibp", "residual_sup"))
        assert all(o >= 1.4 for o in identities_report.order("half_ibp_direct", "residual_sup"))

    def test_sdof_order_two(self, sdof_report):
        orders = sdof_report.order("sdof", "oracle_error_sup")
        assert len(orders) == 2
        assert all(o == pytest.approx(2.0, abs=0.1) for o in orders)

    def test_sdof_natural_condition_decreases(self, sdof_report):
        assert np.all(np.diff(sdof_report.series("sdof", "natural_condition_error")) < 0)

    def test_damped(self):
        rep = run(parse_config('{"kind": "sdof_damped", "grids": [64, 128]}'), out_dir=None)
        assert rep.series("sdof_damped", "oracle_error_sup")[-1] < 5e-3

    def test_contrast(self):
        rep = run(parse_config('{"kind": "classical_contrast", "grids": [16, 32]}'), out_dir=None)
        for row in rep.rows:
            n = row.resolution[0]
            assert row.extra["classical_rows"] == n - 1 and row.extra["classical_unknowns"] == n
            assert row.extra["classical_rank_deficiency"] == 1
            assert row.extra["classical_with_end_rank_deficiency"] == 0
            assert row.extra["convolved_rows"] == row.extra["convolved_unknowns"] == n
            assert row.extra["convolved_rank_deficiency"] == 0

    def test_bar(self):
        rep = run(parse_config('{"kind": "bar", "grids": [[4, 8], [8, 16]]}'), out_dir=None)
        assert np.all(np.diff(rep.series("bar", "oracle_error_sup")) < 0)
        assert np.all(np.diff(rep.series("bar", "natural_condition_error")) < 0)

    def test_viscoelastic(self):
        rep = run(parse_config('{"kind": "bar_viscoelastic", "grids": [[4, 12], [8, 24]]}'), out_dir=None)
        assert np.all(np.diff(rep.series("bar_viscoelastic", "oracle_error_sup")) < 0)
        assert np.all(np.diff(rep.series("bar_viscoelastic", "initial_traction_error")) < 0)

    def test_cap_is_enforced(self):
        from convact.errors import SystemTooLargeError

        with pytest.raises(SystemTooLargeError):
            run(parse_config('{"kind": "bar", "grids": [[8, 16]], "max_free_nodes": 10}'), out_dir=None)
        with pytest.raises(SystemTooLargeError):
            run(parse_config('{"kind": "bar", "grids": [[8, 16]]}'), out_dir=None, max_free_nodes=10)

    def test_singular_system_gets_context(self, monkeypatch):
        from convact import experiments
        from convact.errors import SingularSystemError

        def broken(p, grid):
            raise SingularSystemError("matrix is singular", 1e17)

        monkeypatch.setattr(experiments, "solve_sdof", broken)
        with pytest.raises(ExperimentFailure, match=r"sdof at grid \[16\].*condition estimate 1e\+17"):
            run(parse_config('{"kind": "sdof", "grids": [16]}'), out_dir=None)


@pytest.mark.parametrize(
    "text",
    [
        '{"kind": "sdof", "grids": [16, 32]}',
        '{"kind": "sdof_damped", "grids": [16, 32], "problem": {"f": {"preset": "sinusoid", "amplitude": 1, "frequency": 2}}}',
        '{"kind": "bar", "grids": [[4, 8], [6, 12]], "problem": {"p": 0.3, "f": 1.0}}',
        '{"kind": "bar_viscoelastic", "grids": [[4, 8], [6, 12]]}',
    ],
)
def test_residual_matches_certify(text):
    cfg = parse_config(text)
    rep = run(cfg, out_dir=None)
    for row in rep.rows:
        grid = make_grid(cfg, row.resolution)
        p = build_problem(cfg, grid)
        u = (solve_bar(p, grid) if cfg.is_bar else solve_sdof(p, grid)).solution
        assert row.residual_sup == certify_stationarity(p, u)


class TestPlotData:
    def test_header_only(self, sdof_report, tmp_path):
        path = tmp_path / "empty.csv"
        emit_plot_data(sdof_report, path, metrics=())
        assert path.read_text() == "experiment,resolution,metric,value\n"

    def test_twelve_rows(self, sdof_report, tmp_path):
        path = tmp_path / "sdof.csv"
        metrics = ("residual_sup", "oracle_error_sup", "natural_condition_error", "runtime_ms")
        emit_plot_data(sdof_report, path, metrics=metrics)
        rows = _rows(path.read_text())
        assert len(rows) == 1 + 12
        assert rows[1][:3] == ["sdof", "64", "residual_sup"]

    def test_identity_rows(self, identities_report):
        rows = _rows(plot_data_csv(identities_report))[1:]
        assert len(rows) == len(identities_report.experiments()) * 3
        assert len({(r[0], r[1]) for r in rows}) == len(rows)

    def test_bar_resolution_label(self):
        rep = run(parse_config('{"kind": "bar", "grids": [[4, 8]]}'), out_dir=None)
        assert _rows(plot_data_csv(rep))[1][1] == "4x8"

    def test_values_round_trip(self, sdof_report):
        rows = _rows(plot_data_csv(sdof_report))[1:]
        first = [r for r in rows if r[2] == "oracle_error_sup"][0]
        assert float(first[3]) == sdof_report.rows[0].oracle_error_sup

    def test_empty_report_rejected(self, sdof_report, tmp_path):
        from dataclasses import replace

        with pytest.raises(ValueError):
            emit_plot_data(replace(sdof_report, rows=()), tmp_path / "x.csv")

    def test_io_error_surfaces(self, sdof_report, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            emit_plot_data(sdof_report, blocker / "sub" / "x.csv")


class TestArtifacts:
    def test_files(self, tmp_path):
        cfg = parse_config('{"kind": "sdof", "grids": [16, 32], "output": "osc"}')
        rep = run(cfg, out_dir=tmp_path)
        data = json.loads((tmp_path / "osc_report.json").read_text())
        assert data["config"]["kind"] == "sdof"
        assert len(data["rows"]) == 2 and len(data["orders"]) == len(rep.orders)
        assert (tmp_path / "osc_data.csv").read_text() == plot_data_csv(rep)
        # no temporary files are left behind
        assert sorted(os.listdir(tmp_path)) == ["osc_data.csv", "osc_report.json"]

    def test_runtime_not_in_default_csv(self, sdof_report):
        assert "runtime_ms" not in plot_data_csv(sdof_report)

    @pytest.mark.parametrize(
        "text",
        [
            '{"kind": "identities", "grids": [32, 64, 128]}',
            '{"kind": "sdof_damped", "grids": [16, 32, 64]}',
            '{"kind": "bar_viscoelastic", "grids": [[4, 8], [6, 12], [8, 16]]}',
            '{"kind": "classical_contrast", "grids": [8, 16, 32]}',
        ],
    )
    def test_byte_identical_across_runs_and_threads(self, text, tmp_path):
        cfg = parse_config(text)
        outputs = []
        for i, threads in enumerate((1, 1, 3)):
            run(cfg, out_dir=tmp_path / str(i), threads=threads)
            outputs.append((tmp_path / str(i) / f"{cfg.output}_data.csv").read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]


class TestThreads:
    def test_explicit(self, monkeypatch):
        monkeypatch.setenv("CONVACT_THREADS", "4")
        assert resolve_threads(2) == 2

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("CONVACT_THREADS", "4")
        assert resolve_threads(None) == 4
        monkeypatch.delenv("CONVACT_THREADS")
        assert resolve_threads(None) == 1

    @pytest.mark.parametrize("value", ["zero", "0", "-2"])
    def test_bad_env(self, monkeypatch, value):
        monkeypatch.setenv("CONVACT_THREADS", value)
        with pytest.raises(ConfigError):
            resolve_threads(None)


def test_rows_must_be_finite():
    with pytest.raises(ExperimentFailure):
        ExperimentRow("x", (8,), math.nan, 0.0, 0.0, 1.0)
    with pytest.raises(ExperimentFailure):
        ExperimentRow("x", (8,), 0.0, 0.0, 0.0, 1.0, {"condition_estimate": math.inf})
