import csv
import io

import numpy as np
import pytest

from anchorsync import cli
from anchorsync import experiments as ex
from anchorsync.errors import ConfigError
from anchorsync.evaluation import METRICS


def small(kind=ex.SWEEP_SIGMA2, **kw):
    base = {"n": (12,), "trials": 3, "seed": 7}
    base.update(kw)
    return ex.make_config(overrides=base, kind=kind)


class TestHash:
    @pytest.mark.parametrize(
        "text,value",
        [("", 0xCBF29CE484222325), ("a", 0xAF63DC4C8601EC8C), ("foobar", 0x85944171F73967E8)],
    )
    def test_reference_vectors(self, text, value):
        assert ex.fnv1a_64(text) == value

    def test_trial_seed_format(self):
        assert ex.trial_seed(3, 1, 4) == ex.fnv1a_64("3:1:4")


class TestConfig:
    def test_parse_with_comments(self):
        text = "# header\nkind = sweep-sigma1  # inline\nsigma1 = 0.25, 0.5\n\nn=20\nmethods=ase,naive\n"
        values = ex.parse_config_text(text)
        cfg = ex.make_config(values)
        assert cfg.kind == ex.SWEEP_SIGMA1
        assert cfg.sigma1 == (0.25, 0.5) and cfg.n == (20,) and cfg.methods == ("ase", "naive")

    def test_overrides_win(self):
        cfg = ex.make_config({"n": "20", "trials": "4"}, {"trials": 2})
        assert cfg.trials == 2 and cfg.n == (20,)

    def test_sweep_kind_inferred(self):
        assert ex.make_config({"sigma1": "0.1,0.2"}).kind == ex.SWEEP_SIGMA1
        assert ex.make_config({"sigma2": "0.1,0.2"}).kind == ex.SWEEP_SIGMA2

    @pytest.mark.parametrize(
        "values",
        [{"trials": "0"}, {"methods": "ase,magic"}, {"sigma2": ""}, {"n": "1"}, {"sigma1": "-1"},
         {"kind": "sweep-sigma2", "sigma1": "0.1,0.2"}, {"threads": "0"}, {"trials": "x"}],
    )
    def test_invalid(self, values):
        with pytest.raises(ConfigError):
            ex.make_config(values)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ex.parse_config_text("colour = red\n")
        with pytest.raises(ConfigError):
            ex.parse_config_text("no equals sign\n")

    def test_experiment_id_ignores_output_settings(self):
        a = small(out="a.csv", threads=1)
        b = small(out="b.csv", threads=4)
        assert a.experiment_id == b.experiment_id
        assert small(seed=8).experiment_id != a.experiment_id


class TestSweep:
    def test_row_counts(self):
        cfg = small(sigma2=(0.25, 0.5), methods=("ase", "two-stage"))
        result = ex.run_sweep(cfg)
        assert len(result.rows) == 2 * 3 * 2
        assert len(result.summaries) == 2 * 2
        rows = list(csv.reader(io.StringIO(result.to_csv())))
        assert tuple(rows[0]) == ex.DATA_COLUMNS
        assert all(r[0] == "summary" and len(r) == len(ex.SUMMARY_COLUMNS) for r in rows[-4:])

    def test_noiseless_single_trial(self):
        result = ex.run_sweep(small(sigma1=(0.0,), sigma2=(0.0,), trials=1, methods=("ase", "two-stage", "naive")))
        assert len(result.rows) == 3
        for row in result.rows:
            assert row["max_se_error"] < 1e-8

    def test_rows_are_replayable(self):
        result = ex.run_sweep(small())
        row = result.rows[4]
        cfg = small()
        value_idx = cfg.sigma2.index(row["sigma2"])
        assert row["seed"] == ex.trial_seed(cfg.seed, value_idx, row["trial"])
        for key in ("experiment_id", "seed", "method", "n", "d", "sigma1", "sigma2"):
            assert row[key] is not None

    def test_deterministic_across_thread_counts(self):
        a = ex.run_sweep(small(threads=1)).to_csv()
        b = ex.run_sweep(small(threads=4)).to_csv()
        assert a == b

    def test_adding_trials_keeps_earlier_rows(self):
        few = ex.run_sweep(small(trials=2)).rows
        more = ex.run_sweep(small(trials=3)).rows
        key = lambda r: (r["sigma2"], r["trial"], r["method"])
        lookup = {key(r): r for r in more}
        for r in few:
            assert lookup[key(r)]["max_se_error"] == r["max_se_error"]

    def test_summary_quartiles(self):
        result = ex.run_sweep(small(sigma2=(0.5,), methods=("ase",), trials=5))
        summary = result.summaries[0]
        errors = result.values("ase", "max_se_error")
        q1, med, q3 = summary[9:12]
        assert (q1, med, q3) == tuple(np.percentile(errors, [25, 50, 75]))

    def test_timing_column(self):
        plain = ex.run_sweep(small(trials=1))
        assert all(r["wall_ms"] is None for r in plain.rows)
        timed = ex.run_sweep(small(trials=1, timing=True))
        assert all(r["wall_ms"] >= 0 for r in timed.rows)

    def test_wrong_kind(self):
        with pytest.raises(ConfigError):
            ex.run_sweep(small(kind=ex.SCALE_N, n=(10, 20)))

    def test_unwritable_output(self, tmp_path):
        with pytest.raises(ConfigError):
            ex.run_sweep(small(trials=1, out=str(tmp_path / "missing" / "x.csv")))


class TestScaling:
    def test_slope_row(self):
        result = ex.run_scaling(small(kind=ex.SCALE_N, n=(10, 20, 40), sigma1=(0.3,), sigma2=(0.3,)))
        slope = ex.slope_from(result, "ase")
        assert slope is not None and slope < 0
        medians = [np.median(result.values("ase", "max_se_error", n=n)) for n in (10, 20, 40)]
        assert slope == pytest.approx(ex.loglog_slope((10, 20, 40), medians))

    def test_single_size_has_no_slope(self):
        result = ex.run_scaling(small(kind=ex.SCALE_N, n=(15,), sigma1=(0.3,), sigma2=(0.3,)))
        assert ex.slope_from(result) is None
        assert result.to_csv().rstrip().endswith("loglog_slope,")

    def test_loglog_slope_exact(self):
        ns = np.array([10, 40, 160])
        assert ex.loglog_slope(ns, 3.0 * ns**-0.5) == pytest.approx(-0.5)


class TestSelftest:
    def test_clean(self):
        report = ex.run_selftest()
        assert report.ok
        assert "checks passed" in report.table()
        names = {c.quantity for c in report.checks}
        assert {"omega_null_space", "h_decomposition", "translation_oracle", "norm_T_star"} <= names

    def test_fault_injection(self):
        report = ex.run_selftest(ex.corrupted_omega)
        assert not report.ok
        failed = {c.quantity for c in report.checks if not c.satisfied}
        assert "omega_null_space" in failed


class TestDiagnosticsRun:
    def test_report(self, tmp_path):
        out = tmp_path / "diag.csv"
        checks = ex.run_diagnostics(small(kind=ex.DIAGNOSTICS, n=(20,), out=str(out)))
        assert all(c.satisfied is not False for c in checks)
        assert out.read_text().startswith("quantity,value,bound,ratio\n")


class TestRegistrationRun:
    def test_rows(self):
        result = ex.run_registration(ex.make_config(overrides={"trials": 2, "seed": 1}, kind=ex.REGISTER))
        assert len(result.rows) == 4
        assert {r["method"] for r in result.rows} == {"ase", "naive"}
        assert all(r["sigma1"] == 8.0 and r["sigma2"] == 0.8 for r in result.rows)


class TestCli:
    def test_sweep_to_stdout(self, capsys):
        assert cli.main(["sweep", "--n", "10", "--trials", "1", "--sigma2", "0.5"]) == 0
        out = capsys.readouterr().out
        assert out.startswith(",".join(ex.DATA_COLUMNS))

    def test_config_file_and_flags(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("kind = sweep-sigma1\nsigma1 = 0.1, 0.2\nsigma2 = 0.5\nn = 10\ntrials = 3\n")
        out = tmp_path / "out.csv"
        assert cli.main(["sweep", "--config", str(conf), "--trials", "1", "--out", str(out)]) == 0
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        data = [r for r in rows if r["experiment_id"] != "summary"]
        assert len(data) == 2 * 2
        assert {r["sigma1"] for r in data} == {"0.1", "0.2"}

    def test_byte_identical_reruns(self, tmp_path):
        conf = tmp_path / "c.conf"
        conf.write_text("n = 10\nsigma2 = 0.25,0.5\ntrials = 2\nmethods = ase,two-stage,naive\n")
        outs = []
        for k, threads in enumerate(("1", "3")):
            path = tmp_path / f"r{k}.csv"
            cli.main(["sweep", "--config", str(conf), "--seed", "99", "--threads", threads, "--out", str(path)])
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_selftest_exit_codes(self, capsys):
        assert cli.main(["selftest"]) == 0
        assert cli.main(["selftest", "--inject-fault"]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_kind_conflict(self, capsys):
        assert cli.main(["scale", "--kind", "sweep-sigma1"]) == 2
        assert "does not match" in capsys.readouterr().err

    def test_bad_config_path(self, capsys):
        assert cli.main(["sweep", "--config", "/nonexistent/file.conf"]) == 2

    def test_diagnose(self, capsys):
        assert cli.main(["diagnose", "--n", "15"]) == 0
        assert "norm_T_star" in capsys.readouterr().out

    def test_register(self, tmp_path):
        out = tmp_path / "reg.csv"
        assert cli.main(["register", "--trials", "1", "--points", "120", "--out", str(out)]) == 0
        assert out.read_text().count("\n") == 1 + 2 + 2
