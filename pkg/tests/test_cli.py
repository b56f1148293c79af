"""End-to-end tests for the command-line interface."""

import csv
import json

import numpy as np
import pytest

from icf_bvsr.cli import main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_design(path, x):
    with open(path, "w") as fh:
        for row in np.atleast_2d(x):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_vector(path, v):
    with open(path, "w") as fh:
        for value in v:
            fh.write(repr(float(value)) + "\n")


class TestSolve:
    def test_scalar_hand_value(self, tmp_path):
        design = tmp_path / "m.txt"
        rhs = tmp_path / "z.txt"
        design.write_text("2\n")
        rhs.write_text("3\n")
        out = tmp_path / "out"
        code = main(
            [
                "solve", str(design), str(rhs),
                "--sigma", "2", "--out-dir", str(out),
            ]
        )
        assert code == 0
        rows = read_csv(out / "solution.csv")
        assert rows[0] == ["index", "beta"]
        # (2*2 + 2*2) beta = 3
        assert float(rows[1][1]) == pytest.approx(0.375, abs=1e-12)
        assert (out / "manifest.json").exists()

    def test_methods_agree(self, tmp_path):
        rng = np.random.default_rng(3)
        design = tmp_path / "m.txt"
        rhs = tmp_path / "z.txt"
        write_design(design, rng.standard_normal((30, 5)))
        write_vector(rhs, rng.standard_normal(5))
        betas = {}
        for method in ("icf", "direct"):
            out = tmp_path / method
            code = main(
                [
                    "solve", str(design), str(rhs),
                    "--sigma", "1.5", "--method", method,
                    "--out-dir", str(out),
                ]
            )
            assert code == 0
            betas[method] = np.array(
                [float(r[1]) for r in read_csv(out / "solution.csv")[1:]]
            )
        np.testing.assert_allclose(betas["icf"], betas["direct"], atol=1e-6)

    def test_parse_error_exit_1(self, tmp_path, capsys):
        design = tmp_path / "m.txt"
        design.write_text("1 2\n3 oops\n")
        rhs = tmp_path / "z.txt"
        rhs.write_text("1\n1\n")
        code = main(["solve", str(design), str(rhs), "--out-dir", str(tmp_path)])
        assert code == 1
        assert "line 2" in capsys.readouterr().err

    def test_dimension_mismatch_exit_1(self, tmp_path, capsys):
        design = tmp_path / "m.txt"
        rhs = tmp_path / "z.txt"
        write_design(design, np.eye(3))
        write_vector(rhs, [1.0, 2.0])
        code = main(["solve", str(design), str(rhs), "--out-dir", str(tmp_path)])
        assert code == 1
        assert "3" in capsys.readouterr().err

    def test_nonconvergence_exit_2(self, tmp_path):
        rng = np.random.default_rng(5)
        design = tmp_path / "m.txt"
        rhs = tmp_path / "z.txt"
        write_design(design, rng.standard_normal((30, 5)))
        write_vector(rhs, rng.standard_normal(5))
        code = main(
            [
                "solve", str(design), str(rhs),
                "--max-iter", "1", "--tolerance", "1e-14",
                "--out-dir", str(tmp_path / "o"),
            ]
        )
        assert code == 2

    def test_null_z_deterministic(self, tmp_path):
        rng = np.random.default_rng(7)
        design = tmp_path / "m.txt"
        write_design(design, rng.standard_normal((20, 4)))
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = main(
                [
                    "solve", str(design), "--null-z", "--seed", "9",
                    "--out-dir", str(out),
                ]
            )
            assert code == 0
            outs.append((out / "solution.csv").read_bytes())
        assert outs[0] == outs[1]


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    code = main(
        [
            "simulate", "--n", "80", "--p", "12", "--n-causal", "3",
            "--h", "0.5", "--seed", "4", "--out-dir", str(d),
        ]
    )
    assert code == 0
    return d


@pytest.fixture(scope="module")
def fit_dir(sim_dir, tmp_path_factory):
    d = tmp_path_factory.mktemp("fit")
    code = main(
        [
            "fit", str(sim_dir / "geno.txt"), str(sim_dir / "pheno.txt"),
            "--burn-in", "100", "--steps", "200", "--rb-interval", "50",
            "--seed", "1", "--out-dir", str(d),
        ]
    )
    assert code == 0
    return d


class TestSimulateFitCalibrate:
    def test_simulate_outputs(self, sim_dir):
        geno = (sim_dir / "geno.txt").read_text().strip().splitlines()
        assert geno[0].startswith("#")
        assert len(geno) == 81
        pheno = (sim_dir / "pheno.txt").read_text().strip().splitlines()
        assert len(pheno) == 80
        truth = read_csv(sim_dir / "truth.csv")
        assert truth[0] == ["index", "beta_true", "causal"]
        assert len(truth) == 13
        causal = [int(r[2]) for r in truth[1:]]
        assert sum(causal) == 3
        manifest = json.loads((sim_dir / "manifest.json").read_text())
        assert manifest["command"] == "simulate"

    def test_fit_outputs(self, fit_dir):
        pip = read_csv(fit_dir / "pip.csv")
        assert pip[0] == ["index", "raw_pip", "rb_pip"]
        assert len(pip) == 13
        for row in pip[1:]:
            assert 0.0 <= float(row[1]) <= 1.0
            assert 0.0 <= float(row[2]) <= 1.0
        hyper = read_csv(fit_dir / "hyper.csv")
        assert hyper[0] == ["chain", "h", "size", "pi", "tau"]
        assert len(hyper) == 201
        manifest = json.loads((fit_dir / "manifest.json").read_text())
        assert "geno" in str(manifest["input_digests"])

    def test_fit_two_chains(self, sim_dir, tmp_path):
        code = main(
            [
                "fit", str(sim_dir / "geno.txt"), str(sim_dir / "pheno.txt"),
                "--burn-in", "60", "--steps", "120", "--rb-interval", "40",
                "--seed", "2", "--chains", "2", "--out-dir", str(tmp_path),
            ]
        )
        assert code == 0
        hyper = read_csv(tmp_path / "hyper.csv")
        chains = {row[0] for row in hyper[1:]}
        assert chains == {"0", "1"}
        assert len(hyper) == 241
        summary = read_csv(tmp_path / "summary.csv")
        assert summary[0][0] == "metric"
        assert summary[0][-1] == "combined"
        assert "chain_1" in summary[0]

    def test_calibrate(self, sim_dir, fit_dir, tmp_path):
        code = main(
            [
                "calibrate", "--pip", str(fit_dir / "pip.csv"),
                "--truth", str(sim_dir / "truth.csv"),
                "--out-dir", str(tmp_path),
            ]
        )
        assert code == 0
        rows = read_csv(tmp_path / "calibration.csv")
        assert rows[0] == ["bin_lo", "bin_hi", "count", "mean_pip", "tp_fraction", "se"]
        assert len(rows) == 21
        assert sum(int(r[2]) for r in rows[1:]) == 12


class TestBench:
    def test_tiny_grid(self, tmp_path):
        code = main(
            [
                "bench", "--mode", "ind", "--p-grid", "15,25",
                "--trials", "2", "--n", "80", "--master-columns", "120",
                "--seed", "3", "--out-dir", str(tmp_path),
            ]
        )
        assert code == 0
        rows = read_csv(tmp_path / "bench_results.csv")
        assert len(rows) == 2 * 2 * 6 + 1
        assert (tmp_path / "error_dist.csv").exists()
        assert (tmp_path / "manifest.json").exists()

    def test_bad_p_grid_exit_1(self, tmp_path, capsys):
        code = main(
            [
                "bench", "--p-grid", "15,oops", "--trials", "1",
                "--out-dir", str(tmp_path),
            ]
        )
        assert code == 1
        assert capsys.readouterr().err
