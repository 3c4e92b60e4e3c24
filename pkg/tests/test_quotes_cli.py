"""Tests for quote-file ingestion, run configs, and the command line."""
import datetime as dt
import json
import math

import numpy as np
import pytest

from randvol.cli import main
from randvol.errors import QuoteFormatError
from randvol.pricing import OptionType
from randvol.quotes import MarketConfig, load_quotes, parse_config, year_fraction

MARKET = MarketConfig(spot=5522.3, rate=0.053, trade_date=dt.date(2024, 7, 31))

QUOTE_HEADER = "expiry_date,strike,type,iv,open_interest\n"


def write_quotes(path, rows):
    path.write_text(QUOTE_HEADER + "".join(rows), encoding="utf-8")
    return path


class TestLoadQuotes:
    def test_four_expiry_file(self, tmp_path):
        # expiry ladder shaped like a short-dated index option chain
        rows = []
        for date, days in (
            ("2024-08-16", 16),
            ("2024-09-20", 51),
            ("2024-10-18", 79),
            ("2024-11-15", 107),
        ):
            for strike in (5000, 5500, 6000):
                rows.append(f"{date},{strike},C,0.25,10\n")
        quotes = load_quotes(write_quotes(tmp_path / "q.csv", rows), MARKET)
        expiries = quotes.expiries()
        assert len(expiries) == 4
        np.testing.assert_allclose(expiries, [16 / 365, 51 / 365, 79 / 365, 107 / 365], rtol=1e-12)

    def test_zero_iv_rejected_with_line(self, tmp_path):
        rows = ["2024-08-16,5000,C,0.25,10\n", "2024-08-16,5500,C,0.0,10\n"]
        with pytest.raises(QuoteFormatError, match="line 3"):
            load_quotes(write_quotes(tmp_path / "q.csv", rows), MARKET)

    def test_percent_iv_rejected(self, tmp_path):
        rows = ["2024-08-16,5000,C,25.0,10\n"]
        with pytest.raises(QuoteFormatError, match="fraction"):
            load_quotes(write_quotes(tmp_path / "q.csv", rows), MARKET)

    def test_duplicate_pair_resolved_by_liquidity(self, tmp_path):
        rows = ["2024-08-16,5000,C,0.25,10\n", "2024-08-16,5000,P,0.26,90\n"]
        quotes = load_quotes(write_quotes(tmp_path / "q.csv", rows), MARKET)
        assert len(quotes) == 1
        assert quotes.quotes[0].kind is OptionType.PUT

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "q.csv"
        path.write_text(QUOTE_HEADER, encoding="utf-8")
        with pytest.raises(QuoteFormatError, match="no data rows"):
            load_quotes(path, MARKET)

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "q.csv"
        path.write_text("expiry_date,strike,iv\n2024-08-16,5000,0.2\n", encoding="utf-8")
        with pytest.raises(QuoteFormatError, match="missing columns"):
            load_quotes(path, MARKET)

    def test_expiry_before_trade_date_rejected(self, tmp_path):
        rows = ["2024-07-30,5000,C,0.25,10\n"]
        with pytest.raises(QuoteFormatError, match="after the trade date"):
            load_quotes(write_quotes(tmp_path / "q.csv", rows), MARKET)

    def test_act_365(self):
        assert year_fraction(dt.date(2024, 7, 31), dt.date(2024, 8, 16)) == pytest.approx(16 / 365)


class TestRunConfig:
    def test_parse_full_config(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# synthetic market\n"
            "spot = 100.0\n"
            "rate = 0.02\n"
            "trade_date = 2024-07-31\n"
            "model = sabr\n"
            "randomizer = gamma-gamma\n"
            "n_q = 2\n"
            "beta = 0.9\n"
            "multistart = 4\n",
            encoding="utf-8",
        )
        cfg = parse_config(path)
        assert cfg.market.spot == 100.0
        assert cfg.fit.randomizer == "gamma-gamma"
        assert cfg.fit.fixed == {"beta": 0.9}
        assert cfg.fit.multistart == 4

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("spot = 1\nrate = 0\ntrade_date = 2024-07-31\nsmile = yes\n")
        with pytest.raises(ValueError, match="unknown key"):
            parse_config(path)

    def test_missing_market_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("spot = 1\nrate = 0\n")
        with pytest.raises(ValueError, match="trade_date"):
            parse_config(path)


@pytest.fixture
def sigma_params_file(tmp_path):
    params = {
        "type": "flat",
        "sigma": 0.2,
        "randomizer": {
            "target": "sigma",
            "dist": {"family": "lognormal", "mu": math.log(0.2) - 0.02, "nu": 0.2},
            "n_q": 4,
        },
    }
    path = tmp_path / "params.json"
    path.write_text(json.dumps(params), encoding="utf-8")
    return path


class TestCli:
    def test_iv_engines_agree(self, tmp_path, sigma_params_file, capsys):
        fwd = 100.0 * math.exp(0.02 * 2.0)
        strikes = ",".join(f"{fwd * math.exp(-m):.6f}" for m in np.linspace(-0.3, 0.3, 21))
        common = [
            "--spot", "100", "--rate", "0.02",
            "--params", str(sigma_params_file),
            "--expiry", "2.0", "--strikes", strikes,
        ]
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        assert main(["iv", *common, "--engine", "expansion:6", "--out", str(out_a)]) == 0
        assert main(["iv", *common, "--engine", "brent", "--out", str(out_b)]) == 0
        iv_a = np.array([float(r.split(",")[2]) for r in out_a.read_text().splitlines()[1:]])
        iv_b = np.array([float(r.split(",")[2]) for r in out_b.read_text().splitlines()[1:]])
        assert np.max(np.abs(iv_a - iv_b)) < 1e-3

    def test_points_file_input(self, tmp_path, sigma_params_file, capsys):
        points = tmp_path / "pts.csv"
        points.write_text("expiry,strike\n0.5,95\n0.5,105\n1.0,100\n", encoding="utf-8")
        rc = main([
            "iv", "--spot", "100", "--rate", "0.02",
            "--params", str(sigma_params_file), "--points", str(points),
            "--engine", "brent",
        ])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "expiry,strike,iv"
        assert len(lines) == 4
        assert {line.split(",")[0] for line in lines[1:]} == {"0.5", "1"}

    def test_price_single_point(self, sigma_params_file, capsys):
        rc = main([
            "price", "--spot", "100", "--rate", "0",
            "--params", str(sigma_params_file),
            "--expiry", "1.0", "--strikes", "100",
        ])
        assert rc == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "expiry,strike,price"
        assert float(out[1].split(",")[2]) > 0

    def test_density_diagnostics_on_stderr(self, tmp_path, sigma_params_file, capsys):
        out = tmp_path / "d.csv"
        rc = main([
            "density", "--spot", "100", "--rate", "0.02",
            "--params", str(sigma_params_file),
            "--expiry", "1.0", "--n-strikes", "501", "--out", str(out),
        ])
        assert rc == 0
        err = capsys.readouterr().err
        assert "mass=" in err and "mean=" in err
        assert out.read_text().splitlines()[0] == "strike,density"

    def test_check_arb_clean_exit_zero(self, sigma_params_file, capsys):
        rc = main([
            "check-arb", "--spot", "100", "--rate", "0.02",
            "--params", str(sigma_params_file), "--expiry", "1.0",
        ])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["passed"] is True

    def test_check_arb_calendar_violation_exit_one(self, tmp_path, capsys):
        slices = {
            "slices": [
                {"expiry": 0.5, "params": {"type": "flat", "sigma": 0.3}},
                {"expiry": 1.0, "params": {"type": "flat", "sigma": 0.1}},
            ]
        }
        path = tmp_path / "slices.json"
        path.write_text(json.dumps(slices), encoding="utf-8")
        rc = main(["check-arb", "--spot", "100", "--rate", "0", "--params", str(path)])
        assert rc == 1
        report = json.loads(capsys.readouterr().out)
        assert report["calendar_violations"]

    def test_interp_flat_slices(self, tmp_path, capsys):
        slices = {
            "slices": [
                {"expiry": 1.0, "params": {"type": "flat", "sigma": 0.2}},
                {"expiry": 2.0, "params": {"type": "flat", "sigma": 0.25}},
            ]
        }
        path = tmp_path / "slices.json"
        path.write_text(json.dumps(slices), encoding="utf-8")
        rc = main([
            "interp", "--spot", "100", "--rate", "0",
            "--params", str(path), "--expiry", "1.5", "--strike", "100",
        ])
        assert rc == 0
        assert float(capsys.readouterr().out) == pytest.approx(math.sqrt(0.055), rel=1e-9)

    def test_fit_writes_outputs(self, tmp_path, capsys):
        rows = [
            f"2024-10-29,{k},C,0.2,5\n" for k in np.linspace(80, 120, 9)
        ]
        quotes = write_quotes(tmp_path / "q.csv", rows)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "spot = 100\nrate = 0.0\ntrade_date = 2024-07-31\n"
            "model = flat\nrandomizer = none\nmultistart = 4\n",
            encoding="utf-8",
        )
        out_dir = tmp_path / "fits"
        rc = main(["fit", "--quotes", str(quotes), "--config", str(cfg), "--out-dir", str(out_dir)])
        assert rc == 0
        fit_files = list(out_dir.glob("fit_T*.json"))
        res_files = list(out_dir.glob("residuals_T*.csv"))
        assert len(fit_files) == 1 and len(res_files) == 1
        blob = json.loads(fit_files[0].read_text())
        assert blob["params"]["sigma"] == pytest.approx(0.2, abs=1e-6)
        assert blob["sse"] < 1e-10
        assert res_files[0].read_text().splitlines()[0] == "expiry,strike,residual"

    def test_fit_roundtrip_through_iv(self, tmp_path, capsys):
        # fitted params re-priced on the quote grid reproduce the residuals
        rows = [f"2024-10-29,{k},C,0.25,5\n" for k in np.linspace(85, 115, 7)]
        quotes = write_quotes(tmp_path / "q.csv", rows)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "spot = 100\nrate = 0.0\ntrade_date = 2024-07-31\n"
            "model = flat\nrandomizer = none\nmultistart = 4\n",
            encoding="utf-8",
        )
        out_dir = tmp_path / "fits"
        assert main(["fit", "--quotes", str(quotes), "--config", str(cfg), "--out-dir", str(out_dir)]) == 0
        capsys.readouterr()
        fit_file = next(out_dir.glob("fit_T*.json"))
        blob = json.loads(fit_file.read_text())
        params_file = tmp_path / "fitted.json"
        params_file.write_text(json.dumps(blob["params"]), encoding="utf-8")
        expiry = blob["expiry"]
        strikes = ",".join(f"{k:.10g}" for k in np.linspace(85, 115, 7))
        assert main([
            "iv", "--spot", "100", "--rate", "0",
            "--params", str(params_file), "--expiry", f"{expiry:.10g}",
            "--strikes", strikes, "--engine", "brent",
        ]) == 0
        lines = capsys.readouterr().out.splitlines()[1:]
        residuals = [float(line.split(",")[2]) - 0.25 for line in lines]
        res_file = next(out_dir.glob("residuals_T*.csv"))
        recorded = [float(line.split(",")[2]) for line in res_file.read_text().splitlines()[1:]]
        np.testing.assert_allclose(residuals, recorded, atol=1e-12)

    def test_check_arb_on_fitted_surface_exit_zero(self, tmp_path, capsys):
        rows = [f"2024-10-29,{k},C,0.22,5\n" for k in np.linspace(80, 120, 9)]
        quotes = write_quotes(tmp_path / "q.csv", rows)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "spot = 100\nrate = 0.0\ntrade_date = 2024-07-31\n"
            "model = flat\nrandomizer = none\nmultistart = 4\n",
            encoding="utf-8",
        )
        out_dir = tmp_path / "fits"
        assert main(["fit", "--quotes", str(quotes), "--config", str(cfg), "--out-dir", str(out_dir)]) == 0
        capsys.readouterr()
        blob = json.loads(next(out_dir.glob("fit_T*.json")).read_text())
        params_file = tmp_path / "fitted.json"
        params_file.write_text(json.dumps(blob["params"]), encoding="utf-8")
        rc = main([
            "check-arb", "--spot", "100", "--rate", "0",
            "--params", str(params_file), "--expiry", f"{blob['expiry']:.10g}",
        ])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["passed"] is True

    def test_bench_row_shape(self, tmp_path):
        out = tmp_path / "bench.csv"
        rc = main(["bench", "--counts", "200,400", "--orders", "2,4,6", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "method,count,seconds"
        assert len(lines) == 1 + 2 * 4  # (brent + 3 orders) x 2 counts
        methods = {line.split(",")[0] for line in lines[1:]}
        assert methods == {"brent", "expansion:2", "expansion:4", "expansion:6"}

    def test_missing_file_reports_error(self, capsys):
        rc = main(["iv", "--spot", "100", "--params", "/nonexistent.json", "--expiry", "1", "--strikes", "100"])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestBenchTrend:
    def test_brent_to_expansion_ratio_grows_with_count(self):
        # the root finder scales linearly while the expansion is dominated
        # by per-expiry setup, so the speedup widens as counts grow
        from randvol import bench as bench_mod

        rs = bench_mod.reference_slice()

        def ratio(count):
            brent = bench_mod.time_brent(rs, count)
            expansion = min(bench_mod.time_expansion(rs, count, 4) for _ in range(5))
            return brent / expansion

        small, large = ratio(1_000), ratio(10_000)
        if large <= small:  # wall-clock check: allow one retry under noise
            small, large = ratio(1_000), ratio(10_000)
        assert large > small
