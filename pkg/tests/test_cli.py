import json

import pytest

from frailty_vb import approx
from frailty_vb.cli import main
from frailty_vb.io import write_dataset_csv
from frailty_vb.simulate import ScenarioSpec, generate_dataset

TOY = "cluster,time,event,x1\na,2.0,1,0.5\na,3.5,0,1.0\nb,1.1,1,0.2\nb,4.0,1,0.9\nc,0.7,1,0.1\nc,2.2,0,0.4\n"


class TestFit:
    def test_toy(self, tmp_path, capsys):
        src = tmp_path / "toy.csv"
        src.write_text(TOY)
        out = tmp_path / "r.json"
        assert main(["fit", str(src), "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["K"] == 3 and rep["converged"]
        assert "icc" in capsys.readouterr().out

    def test_invalid_event(self, tmp_path, capsys):
        src = tmp_path / "bad.csv"
        src.write_text("cluster,time,event,x1\na,2.0,1,0.5\na,3.5,2,1.0\n")
        assert main(["fit", str(src), "--out", str(tmp_path / "r.json")]) == 1
        assert "invalid event flag at line 3" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["fit", str(tmp_path / "nope.csv")]) == 1

    def test_max_iter_exit(self, tmp_path):
        src = tmp_path / "toy.csv"
        src.write_text(TOY)
        assert main(["fit", str(src), "--max-iter", "1", "--out", str(tmp_path / "r.json")]) == 2

    def test_generated_dataset_icc(self, tmp_path):
        src = tmp_path / "sim.csv"
        write_dataset_csv(generate_dataset(ScenarioSpec(K=30, n=5, seed=1), 0), src)
        out = tmp_path / "r.json"
        assert main(["fit", str(src), "--out", str(out)]) in (0, 2)
        rep = json.loads(out.read_text())
        assert 0.0 < rep["icc"] < 1.0

    def test_prior_flags_echoed(self, tmp_path):
        src = tmp_path / "toy.csv"
        src.write_text(TOY)
        out = tmp_path / "r.json"
        main(["fit", str(src), "--out", str(out), "--v0", "0.5", "--mu0", "1,2", "--eta0", "4"])
        cfg = json.loads(out.read_text())["config"]
        assert cfg["v0"] == 0.5 and cfg["mu0"] == [1.0, 2.0] and cfg["eta0"] == 4.0

    def test_bad_mu0_length(self, tmp_path):
        src = tmp_path / "toy.csv"
        src.write_text(TOY)
        assert main(["fit", str(src), "--mu0", "1,2,3"]) == 1

    @pytest.mark.parametrize("argv", [["fit", "x.csv", "--bogus"], ["fit", "x.csv", "--delta", "-1"], []])
    def test_usage_errors(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1
        assert "usage:" in capsys.readouterr().err


class TestSimulate:
    def test_rows(self, tmp_path, capsys):
        assert main(["simulate", "--K", "15", "--n", "5", "--N", "25", "--seed", "1", "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert len(lines) == 5
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["config"]["options"]["N"] == 25

    def test_repeatable_bytes(self, tmp_path):
        argv = ["simulate", "--K", "10", "--n", "4", "--N", "6", "--seed", "3"]
        main(argv + ["--out", str(tmp_path / "a")])
        main(argv + ["--out", str(tmp_path / "b")])
        for name in ("metrics.csv", "report.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_timing_file(self, tmp_path):
        t = tmp_path / "t.csv"
        main(["simulate", "--K", "5", "--n", "2", "--N", "2", "--out", str(tmp_path), "--timing", str(t)])
        assert t.read_text().startswith("K,n,Kn")

    def test_grid(self, tmp_path):
        assert main(["simulate", "--grid", "--N", "2", "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert len(lines) == 1 + 16 * 4

    def test_bad_truth(self, tmp_path):
        assert main(["simulate", "--K", "3", "--n", "2", "--N", "2", "--sigma2-true", "-1",
                     "--out", str(tmp_path)]) == 1


class TestVerify:
    def test_default_all_pass(self, capsys):
        assert main(["verify"]) == 0
        out = capsys.readouterr().out
        for name in ("quadrature", "approx-error-scan", "monotonicity", "tiny-posterior"):
            assert f"{name}" in out
        assert "FAIL" not in out

    def test_filter(self, capsys):
        assert main(["verify", "--checks", "quadrature"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 1 and out[0].startswith("quadrature") and "PASS" in out[0]

    def test_unknown_check(self):
        assert main(["verify", "--checks", "nonsense"]) == 1

    def test_corrupted_table_fails(self, monkeypatch, capsys):
        monkeypatch.setattr(approx, "QUAD_ZETA", approx.QUAD_ZETA * 1.5)
        assert main(["verify", "--checks", "approx-error-scan"]) == 1
        captured = capsys.readouterr()
        assert "approx-error-scan  FAIL" in captured.out
        assert "approx-error-scan" in captured.err
