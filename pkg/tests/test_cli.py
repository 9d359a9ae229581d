import math

import numpy as np
import pytest

from homesale.cli import ScenarioConfig, config_hash, load_config, main


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# homesale config_hash=")
    body = [line for line in lines if not line.startswith("#")]
    header = body[0].split(",")
    rows = [line.split(",") for line in body[1:]]
    return lines[0], header, rows


class TestConfig:
    def test_defaults_match_reference_tables(self):
        cfg = ScenarioConfig()
        assert cfg.arrival_intensity == 5.0
        assert cfg.withdrawal_intensity == 5.0
        assert cfg.interest_rate == 0.1
        assert cfg.reservation_price == 140.0
        assert cfg.list_price == 180.0
        assert cfg.waiting_averseness == 0.1
        assert (cfg.p_min, cfg.p_max) == (100.0, 200.0)
        assert cfg.sim_withdrawal_intensity == 10.0
        assert (cfg.occupation_min, cfg.occupation_max) == (4.0, 6.0)
        assert cfg.crisis_mean == 10.0
        assert cfg.initial_reservation_price == 140.0
        assert cfg.initial_list_price == 200.0
        assert cfg.sim_waiting_averseness == 0.8
        assert cfg.interest_rate_threshold == 0.06
        assert (cfg.k1, cfg.k2) == (0.5, 1000.0)
        assert (cfg.theta, cfg.sigma, cfg.kappa, cfg.r0) == (0.1, 0.08, 0.25, 0.09)

    def test_file_overrides_and_comments(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("# scenario\nwaiting_averseness = 0.0\nseed = 7\n")
        cfg = load_config(str(f))
        assert cfg.waiting_averseness == 0.0
        assert cfg.seed == 7

    def test_unknown_key_is_an_error(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("arival_intensity = 5\n")
        rc = main(["owt", "--config", str(f), "--out", str(tmp_path)])
        assert rc == 2

    def test_hash_tracks_content(self):
        a = ScenarioConfig()
        b = ScenarioConfig(seed=99)
        assert config_hash(a) != config_hash(b)

    def test_inconsistent_policy_is_config_error(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("reservation_price = 190\nlist_price = 150\n")
        rc = main(["owt", "--config", str(f), "--out", str(tmp_path)])
        assert rc == 2

    def test_unwritable_output_path(self, tmp_path):
        blocker = tmp_path / "blocked"
        blocker.write_text("")  # a file where a directory is needed
        rc = main(["owt", "--out", str(blocker / "sub"), "--t-steps", "3"])
        assert rc == 2


class TestOwtCommand:
    def test_no_list_curve_rises_then_falls(self, tmp_path):
        rc = main(["owt", "--mode", "no-list", "--out", str(tmp_path),
                   "--t-steps", "120"])
        assert rc == 0
        _, header, rows = read_csv(tmp_path / "owt_curve.csv")
        assert header == ["T", "payoff", "payoff_exact", "utility"]
        payoff = np.array([float(r[1]) for r in rows])
        peak = int(np.argmax(payoff))
        assert 0 < peak < payoff.size - 1
        assert np.all(np.diff(payoff[peak:]) <= 1e-9)
        assert payoff[0] < payoff[peak]

    def test_listed_curve_without_impatience_is_monotone(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("waiting_averseness = 0\n")
        rc = main(["owt", "--config", str(f), "--out", str(tmp_path),
                   "--t-steps", "100"])
        assert rc == 0
        _, _, rows = read_csv(tmp_path / "owt_curve.csv")
        utility = np.array([float(r[3]) for r in rows])
        assert np.all(np.diff(utility) >= -1e-9)

    def test_empty_grid_writes_header_only(self, tmp_path):
        rc = main(["owt", "--out", str(tmp_path), "--t-steps", "0"])
        assert rc == 0
        _, header, rows = read_csv(tmp_path / "owt_curve.csv")
        assert header == ["T", "payoff", "payoff_exact", "utility"]
        assert rows == []

    def test_summary_line_embedded(self, tmp_path):
        rc = main(["owt", "--out", str(tmp_path), "--t-steps", "10"])
        assert rc == 0
        lines = (tmp_path / "owt_curve.csv").read_text().splitlines()
        assert lines[1].startswith("# t_star=")


class TestSweepCommand:
    def test_small_grid_row_count(self, tmp_path):
        rc = main(["sweep", "--out", str(tmp_path),
                   "--x", "lam:2:8:2", "--y", "r:0.05:0.2:2"])
        assert rc == 0
        _, header, rows = read_csv(tmp_path / "sweep.csv")
        assert header == ["lam", "r", "t_star"]
        assert len(rows) == 4

    def test_identical_invocations_byte_identical(self, tmp_path):
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        for d in (a_dir, b_dir):
            rc = main(["sweep", "--out", str(d),
                       "--x", "lam:1:9:3", "--y", "r:0.05:0.25:3"])
            assert rc == 0
        assert (a_dir / "sweep.csv").read_bytes() == (b_dir / "sweep.csv").read_bytes()

    def test_rate_monotonicity_on_output(self, tmp_path):
        rc = main(["sweep", "--out", str(tmp_path),
                   "--x", "lam:1:10:4", "--y", "r:0.02:0.3:5"])
        assert rc == 0
        _, _, rows = read_csv(tmp_path / "sweep.csv")
        surf = {}
        for x, y, t in rows:
            surf.setdefault(float(x), []).append((float(y), float(t)))
        for lam, col in surf.items():
            col.sort()
            t_vals = [t for _, t in col]
            assert all(b <= a + 1e-3 for a, b in zip(t_vals, t_vals[1:])), (lam, t_vals)

    def test_bad_axis_spec_is_usage_error(self, tmp_path):
        rc = main(["sweep", "--out", str(tmp_path), "--x", "lam:1:10", "--y", "r:0:1:2"])
        assert rc == 2


class TestEvolveCommand:
    def test_zero_horizon_empty_log(self, tmp_path):
        rc = main(["evolve", "--out", str(tmp_path), "--horizon", "0"])
        assert rc == 0
        _, header, rows = read_csv(tmp_path / "evolution.csv")
        assert rows == []
        stream_lines = (tmp_path / "events.txt").read_text().splitlines()
        assert len(stream_lines) == 1 and stream_lines[0].startswith("#")

    def test_golden_reproducibility(self, tmp_path):
        for d in ("a", "b"):
            rc = main(["evolve", "--out", str(tmp_path / d), "--horizon", "50"])
            assert rc == 0
        assert (tmp_path / "a" / "events.txt").read_bytes() == \
            (tmp_path / "b" / "events.txt").read_bytes()

    def test_rate_path_serialized_alongside(self, tmp_path):
        rc = main(["evolve", "--out", str(tmp_path), "--horizon", "5"])
        assert rc == 0
        _, header, rows = read_csv(tmp_path / "rates.csv")
        assert header == ["t", "r"]
        assert float(rows[0][0]) == 0.0 and float(rows[0][1]) == 0.09
        assert all(float(r[1]) >= 0.0 for r in rows)

    def test_crisis_dominant_config(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("crisis_mean = 0.5\n")
        rc = main(["evolve", "--config", str(f), "--out", str(tmp_path),
                   "--horizon", "40"])
        assert rc == 0
        _, _, rows = read_csv(tmp_path / "evolution.csv")
        causes = [r[1] for r in rows if r[1] in ("CrisisShock", "ProfitOpportunity")]
        assert causes
        assert all(c == "CrisisShock" for c in causes)


class TestExpectedPriceCommand:
    def test_one_query_one_row(self, tmp_path):
        rc = main(["expected-price", "--out", str(tmp_path), "--times", "2.0",
                   "--n-reps", "30"])
        assert rc == 0
        _, header, rows = read_csv(tmp_path / "expected_price.csv")
        assert header == ["time", "t_star", "mean_price", "stderr",
                          "n_sales", "no_sale_fraction"]
        assert len(rows) == 1

    def test_single_rep_missing_stderr(self, tmp_path):
        rc = main(["expected-price", "--out", str(tmp_path), "--times", "1",
                   "--n-reps", "1"])
        assert rc == 0
        _, _, rows = read_csv(tmp_path / "expected_price.csv")
        assert rows[0][3] == ""  # stderr column empty


class TestPayoffPathCommand:
    def test_zero_vol_single_path_stderr_zero(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("sigma = 0\n")
        rc = main(["payoff-path", "--config", str(f), "--out", str(tmp_path),
                   "--mode", "none", "--t-steps", "3", "--n-paths", "1"])
        assert rc == 0
        _, header, rows = read_csv(tmp_path / "payoff_path.csv")
        assert header == ["t", "payoff", "stderr"]
        assert all(float(r[2]) == 0.0 for r in rows)

    def test_constant_equals_changing_with_zero_decay(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("sigma = 0\nzeta = 0\n")
        outs = {}
        for mode in ("constant", "changing"):
            d = tmp_path / mode
            rc = main(["payoff-path", "--config", str(f), "--out", str(d),
                       "--mode", mode, "--t-steps", "3", "--n-paths", "1"])
            assert rc == 0
            _, _, rows = read_csv(d / "payoff_path.csv")
            outs[mode] = [float(r[1]) for r in rows]
        assert outs["constant"] == pytest.approx(outs["changing"], rel=1e-10)

    def test_mc_mode_populates_stderr(self, tmp_path):
        rc = main(["payoff-path", "--out", str(tmp_path), "--mode", "none",
                   "--t-steps", "2", "--n-paths", "24"])
        assert rc == 0
        _, _, rows = read_csv(tmp_path / "payoff_path.csv")
        assert all(float(r[2]) > 0.0 for r in rows)


class TestValidateCommand:
    def test_quick_run_passes_and_writes_csv(self, tmp_path, monkeypatch):
        import homesale.oracle as oracle_mod

        original = oracle_mod.validate_all

        def quick(**kw):
            kw.update(t_values=(1.0,), lam_values=(5.0,), include_paths=False)
            return original(**kw)

        monkeypatch.setattr("homesale.cli.oracle.validate_all", quick)
        rc = main(["validate", "--out", str(tmp_path), "--n", "20000"])
        assert rc == 0
        _, header, rows = read_csv(tmp_path / "validation.csv")
        assert header == ["check_name", "analytic", "mc_mean", "mc_stderr",
                          "z", "verdict"]
        assert rows


class TestFloatFormat:
    def test_seventeen_digit_round_trip(self, tmp_path):
        rc = main(["owt", "--out", str(tmp_path), "--t-steps", "5"])
        assert rc == 0
        _, _, rows = read_csv(tmp_path / "owt_curve.csv")
        from homesale.closed_form import listed_payoff, MarketParams
        m = MarketParams(5, 5, 0.1, 100, 200)
        for r in rows:
            T = float(r[0])
            assert float(r[1]) == listed_payoff(T, m, 140.0, 180.0)
