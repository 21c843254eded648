"""Command line runner: exit codes, output schemas, determinism."""

import csv
import json

import numpy as np
import pytest

from algotune import __version__
from algotune.bounds import pdim_piecewise
from algotune.cli import cli_main
from algotune.instances import gen_clustering, load_instance, save_instance
from algotune.tune import GridSpec, TuneConfig, erm_tune


def read_csv(path):
    """Header comment lines, then DictReader rows."""
    comments, rows = [], []
    with open(path) as fh:
        lines = [l for l in fh]
    body = []
    for l in lines:
        (comments if l.startswith("#") else body).append(l)
    rows = list(csv.DictReader(body))
    return comments, rows


def write_cfg(tmp_path, name, cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


class TestBoundsCommand:
    def test_family_h1_tuple_and_value(self, tmp_path, capsys):
        out = tmp_path / "b.json"
        rc = cli_main(["bounds", "--family", "H1", "--n", "3", "--L", "1",
                       "--out", str(out)])
        assert rc == 0
        data = json.loads(out.read_text())
        assert data["tuple"] == [4, 6561, 27, 2, 1, 2]
        assert data["pdim_bound"] == pdim_piecewise(2, 27, 2, 1, 4, 6561)
        hdr = data["_header"]
        assert hdr["tool"] == "algotune" and hdr["version"] == __version__
        assert len(hdr["config_hash"]) == 12
        # stdout carries the same JSON
        assert json.loads(capsys.readouterr().out)["tuple"][1] == 6561

    def test_formula_route(self, capsys):
        rc = cli_main(["bounds", "--formula", "pfaffian_gj", "--d", "1",
                       "--q", "0", "--M", "0", "--delta", "1", "--K", "2"])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["pdim_bound"] == 18.0

    def test_missing_formula_arg_names_field(self, capsys):
        rc = cli_main(["bounds", "--formula", "pfaffian_gj", "--d", "1",
                       "--q", "0", "--M", "0", "--delta", "1"])
        assert rc == 2
        assert "K" in capsys.readouterr().err

    def test_neither_route(self, capsys):
        assert cli_main(["bounds"]) == 2
        assert "family" in capsys.readouterr().err


class TestGenCommand:
    def test_clustering_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        argv = ["gen", "--task", "clustering", "--n", "6", "--L", "2",
                "--seed", "7"]
        assert cli_main(argv + ["--out", str(a)]) == 0
        assert cli_main(argv + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        inst = load_instance(str(a))
        assert inst.n == 6 and inst.L == 2

    def test_ssl_and_logreg_round_trip(self, tmp_path):
        s = tmp_path / "s.json"
        assert cli_main(["gen", "--task", "ssl", "--n-labeled", "4",
                         "--n-unlabeled", "9", "--seed", "1",
                         "--out", str(s)]) == 0
        ins = load_instance(str(s))
        assert len(ins.labeled) == 4 and len(ins.unlabeled) == 9
        r = tmp_path / "r.json"
        assert cli_main(["gen", "--task", "logreg", "--m", "20", "--p", "3",
                         "--m-val", "10", "--seed", "1", "--out", str(r)]) == 0
        ins = load_instance(str(r))
        assert ins.X.shape == (20, 3) and ins.X_val.shape == (10, 3)

    def test_missing_required_flag_exits_2(self, capsys):
        rc = cli_main(["gen", "--task", "clustering", "--n", "6", "--seed", "1"])
        assert rc == 2
        assert "--out" in capsys.readouterr().err

    def test_missing_task_specific_field_exits_2(self, tmp_path, capsys):
        rc = cli_main(["gen", "--task", "ssl", "--seed", "1",
                       "--out", str(tmp_path / "x.json")])
        assert rc == 2
        assert "n-labeled" in capsys.readouterr().err

    def test_out_dir_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ALGOTUNE_OUT_DIR", str(tmp_path / "sub"))
        assert cli_main(["gen", "--task", "clustering", "--n", "5",
                         "--seed", "0", "--out", "inst.json"]) == 0
        assert (tmp_path / "sub" / "inst.json").exists()


class TestTuneBatchCommand:
    CFG = {"task": "clustering-M1", "seed": 3,
           "grid": {"alpha": {"lo": 0.5, "hi": 4.0, "num": 10}},
           "generate": {"count": 6, "n": 6, "L": 1, "k": 2}}

    def test_csv_matches_library_run(self, tmp_path):
        cfgp = write_cfg(tmp_path, "c.json", self.CFG)
        out = tmp_path / "res.csv"
        assert cli_main(["tune-batch", "--config", cfgp, "--out", str(out)]) == 0
        comments, rows = read_csv(str(out))
        assert comments[0].startswith(f"# algotune {__version__} seed=3 config=")
        assert len(rows) == 10
        assert sum(int(r["is_best"]) for r in rows) == 1
        assert all(r["n_instances"] == "6" for r in rows)

        rng = np.random.default_rng([3, 0x67656E])
        instances = [gen_clustering(seed=int(s), n=6, L=1, k=2)
                     for s in rng.integers(0, 2**63 - 1, size=6)]
        tc = TuneConfig(task="clustering-M1",
                        grid={"alpha": GridSpec(0.5, 4.0, 10)}, seed=3)
        res = erm_tune(instances, tc)
        by_alpha = {float(r["alpha"]): float(r["mean_utility"]) for r in rows}
        for param, mean, _ in res.utility_table:
            assert by_alpha[param.alpha] == mean

    def test_instance_files_not_mutated(self, tmp_path):
        paths = []
        for i in range(3):
            p = tmp_path / f"i{i}.json"
            save_instance(gen_clustering(seed=i, n=5, L=1, k=2), str(p))
            paths.append(str(p))
        before = [open(p, "rb").read() for p in paths]
        cfg = {"task": "clustering-M1", "seed": 0,
               "grid": {"alpha": [1.0, 2.0]}, "instances": paths}
        out = tmp_path / "r.csv"
        assert cli_main(["tune-batch", "--config",
                         write_cfg(tmp_path, "c.json", cfg),
                         "--out", str(out)]) == 0
        assert [open(p, "rb").read() for p in paths] == before
        _, rows = read_csv(str(out))
        assert all(r["n_instances"] == "3" for r in rows)

    def test_bad_configs_exit_2(self, tmp_path, capsys):
        bad = dict(self.CFG, grid={"alpha": [1.0], "sigma": [1.0]})
        assert cli_main(["tune-batch", "--config",
                         write_cfg(tmp_path, "b1.json", bad),
                         "--out", str(tmp_path / "o.csv")]) == 2
        no_task = {k: v for k, v in self.CFG.items() if k != "task"}
        assert cli_main(["tune-batch", "--config",
                         write_cfg(tmp_path, "b2.json", no_task),
                         "--out", str(tmp_path / "o.csv")]) == 2
        assert "task" in capsys.readouterr().err
        notjson = tmp_path / "b3.json"
        notjson.write_text("{nope")
        assert cli_main(["tune-batch", "--config", str(notjson),
                         "--out", str(tmp_path / "o.csv")]) == 2

    def test_missing_config_file_exits_2(self, tmp_path):
        assert cli_main(["tune-batch", "--config", str(tmp_path / "none.json"),
                         "--out", str(tmp_path / "o.csv")]) == 2


class TestTuneOnlineCommand:
    def test_hedge_trace_schema(self, tmp_path):
        cfg = {"mode": "hedge", "task": "clustering-M1", "T": 40, "seed": 1,
               "grid": {"lo": 0.5, "hi": 4.0, "num": 15},
               "generate": {"n": 6, "L": 1, "k": 2}}
        out = tmp_path / "tr.csv"
        assert cli_main(["tune-online", "--config",
                         write_cfg(tmp_path, "c.json", cfg),
                         "--out", str(out)]) == 0
        comments, rows = read_csv(str(out))
        assert len(rows) == 40
        assert [r["t"] for r in rows] == [str(t) for t in range(1, 41)]
        for r in rows:
            gap = float(r["cum_best"]) - float(r["cum_utility"])
            assert gap == pytest.approx(float(r["regret"]), abs=1e-12)

    def test_logreg_path_audit_in_header(self, tmp_path):
        cfg = {"mode": "logreg-path", "T": 16, "seed": 2,
               "lam_min": 0.1, "lam_max": 1.1,
               "generate": {"m": 25, "p": 3, "m_val": 15}}
        out = tmp_path / "tr.csv"
        assert cli_main(["tune-online", "--config",
                         write_cfg(tmp_path, "c.json", cfg),
                         "--out", str(out)]) == 0
        comments, rows = read_csv(str(out))
        assert len(rows) == 16
        audit_lines = [c for c in comments if c.startswith("# audit=")]
        assert len(audit_lines) == 1
        audit = json.loads(audit_lines[0][len("# audit="):])
        assert audit["gap_within_quadratic"] is True

    def test_unknown_mode_exits_2(self, tmp_path, capsys):
        cfg = {"mode": "bandit", "T": 10}
        assert cli_main(["tune-online", "--config",
                         write_cfg(tmp_path, "c.json", cfg),
                         "--out", str(tmp_path / "o.csv")]) == 2
        assert "mode" in capsys.readouterr().err


class TestStudyCommands:
    def test_dispersion_rows(self, tmp_path):
        cfg = {"task": "clustering-M1", "T": 25, "seed": 5,
               "eps_list": [0.01, 0.02, 0.04], "lo": 0.5, "hi": 4.0,
               "generate": {"n": 6, "L": 1, "k": 2}}
        out = tmp_path / "d.csv"
        assert cli_main(["dispersion", "--config",
                         write_cfg(tmp_path, "c.json", cfg),
                         "--out", str(out)]) == 0
        _, rows = read_csv(str(out))
        assert [float(r["eps"]) for r in rows] == [0.01, 0.02, 0.04]
        for r in rows:
            expect = int(r["max_count"]) / (float(r["eps"]) * 25)
            assert float(r["ratio"]) == pytest.approx(expect, rel=1e-12)

    def test_dispersion_rejects_vector_task(self, tmp_path, capsys):
        cfg = {"task": "clustering-M3", "T": 5, "eps_list": [0.01],
               "generate": {"n": 5, "L": 2, "k": 2}}
        assert cli_main(["dispersion", "--config",
                         write_cfg(tmp_path, "c.json", cfg),
                         "--out", str(tmp_path / "d.csv")]) == 2
        assert "task" in capsys.readouterr().err

    def test_convergence_rows(self, tmp_path):
        cfg = {"task": "clustering-M1", "seed": 4, "N_list": [20, 80],
               "fresh_M": 60, "grid": {"lo": 0.5, "hi": 4.0, "num": 20},
               "generate": {"n": 6, "L": 1, "k": 2}}
        out = tmp_path / "c.csv"
        assert cli_main(["convergence", "--config",
                         write_cfg(tmp_path, "cfg.json", cfg),
                         "--out", str(out)]) == 0
        _, rows = read_csv(str(out))
        assert [r["N"] for r in rows] == ["20", "80"]
        assert all(float(r["theory_gap"]) > 0 for r in rows)
        # theory gap scales as 1/sqrt(N)
        assert float(rows[0]["theory_gap"]) / float(rows[1]["theory_gap"]) \
            == pytest.approx(2.0, rel=1e-12)

    def test_path_study_rows(self, tmp_path):
        cfg = {"seed": 0, "generate": {"m": 30, "p": 3, "m_val": 15,
                                       "signal": 4.0},
               "scale": 6.0, "penalties": ["l2"], "eps_list": [0.2, 0.1]}
        out = tmp_path / "p.csv"
        assert cli_main(["path-study", "--config",
                         write_cfg(tmp_path, "c.json", cfg),
                         "--out", str(out)]) == 0
        _, rows = read_csv(str(out))
        assert len(rows) == 2
        assert float(rows[0]["max_error"]) > float(rows[1]["max_error"]) > 0
        assert 1.0 < float(rows[0]["slope"]) < 2.5


class TestAcceptanceCommand:
    def test_subset_pass_and_report(self, tmp_path, capsys):
        out = tmp_path / "acc.csv"
        rc = cli_main(["acceptance", "--criteria", "3,10", "--out", str(out)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "PASS  linkage-power-mean-limits" in text
        assert "2/2 criteria passed" in text
        _, rows = read_csv(str(out))
        assert [r["name"] for r in rows] == ["linkage-power-mean-limits",
                                             "bound-formulas-exact"]
        assert all(r["passed"] == "1" for r in rows)
        assert all(float(r["seconds"]) >= 0 for r in rows)

    def test_mis_anchored_path_fails_and_exits_1(self, capsys):
        rc = cli_main(["acceptance", "--criteria", "path-accuracy-quadratic",
                       "--mis-anchor-path"])
        assert rc == 1
        assert "FAIL  path-accuracy-quadratic" in capsys.readouterr().out

    def test_unknown_criterion_exits_2(self, capsys):
        assert cli_main(["acceptance", "--criteria", "nonsense"]) == 2
        assert "criteria" in capsys.readouterr().err


def test_unknown_subcommand_exits_2():
    assert cli_main(["frobnicate"]) == 2


def test_help_exits_0(capsys):
    assert cli_main(["--help"]) == 0
    assert "tune-batch" in capsys.readouterr().out
