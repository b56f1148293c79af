"""Tests for text ingestion, digests, and run manifests."""

import json

import numpy as np
import pytest

from icf_bvsr.ioutil import (
    ParseError,
    RunManifest,
    read_genotypes,
    read_phenotypes,
    sha256_digest,
    write_manifest,
)


class TestReadGenotypes:
    def test_plain_matrix(self, tmp_path):
        path = tmp_path / "geno.txt"
        path.write_text("0 1 2\n2 1 0\n1 1 1\n")
        x, names, imputed = read_genotypes(path)
        np.testing.assert_array_equal(
            x, [[0.0, 1.0, 2.0], [2.0, 1.0, 0.0], [1.0, 1.0, 1.0]]
        )
        assert names is None
        assert imputed == 0

    def test_header_names(self, tmp_path):
        path = tmp_path / "geno.txt"
        path.write_text("# rs1 rs2\n0 1\n1 2\n")
        x, names, _ = read_genotypes(path)
        assert names == ["rs1", "rs2"]
        assert x.shape == (2, 2)

    def test_na_imputed_to_column_mean(self, tmp_path):
        path = tmp_path / "geno.txt"
        path.write_text("0 2\nNA 2\n2 NA\n")
        x, _, imputed = read_genotypes(path)
        assert imputed == 2
        assert x[1, 0] == pytest.approx(1.0)  # mean of 0 and 2
        assert x[2, 1] == pytest.approx(2.0)

    def test_bad_token_names_line(self, tmp_path):
        path = tmp_path / "geno.txt"
        path.write_text("0 1\n0 oops\n")
        with pytest.raises(ParseError, match="line 2"):
            read_genotypes(path)

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "geno.txt"
        path.write_text("0 1 2\n0 1\n")
        with pytest.raises(ParseError, match="line 2"):
            read_genotypes(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "geno.txt"
        path.write_text("\n\n")
        with pytest.raises(ParseError):
            read_genotypes(path)

    def test_all_missing_column_rejected(self, tmp_path):
        path = tmp_path / "geno.txt"
        path.write_text("NA 1\nNA 2\n")
        with pytest.raises(ParseError, match="column 1"):
            read_genotypes(path)


class TestReadPhenotypes:
    def test_one_value_per_line(self, tmp_path):
        path = tmp_path / "pheno.txt"
        path.write_text("1.5\n-2.0\n0.25\n")
        np.testing.assert_array_equal(read_phenotypes(path), [1.5, -2.0, 0.25])

    def test_bad_value_names_line(self, tmp_path):
        path = tmp_path / "pheno.txt"
        path.write_text("1.0\nxyz\n")
        with pytest.raises(ParseError, match="line 2"):
            read_phenotypes(path)


class TestManifest:
    def test_digest_is_stable(self, tmp_path):
        path = tmp_path / "f.txt"
        path.write_text("hello\n")
        d1 = sha256_digest(path)
        d2 = sha256_digest(path)
        assert d1 == d2
        assert len(d1) == 64
        path.write_text("changed\n")
        assert sha256_digest(path) != d1

    def test_manifest_round_trip(self, tmp_path):
        manifest = RunManifest(
            command="fit",
            flags={"burn_in": 10, "steps": 20},
            seed=7,
            input_digests={"geno": "ab" * 32},
            extras={"imputed": 3},
        )
        out = tmp_path / "manifest.json"
        write_manifest(manifest, out)
        loaded = json.loads(out.read_text())
        assert loaded["command"] == "fit"
        assert loaded["flags"]["steps"] == 20
        assert loaded["seed"] == 7
        assert loaded["version"]
        assert loaded["extras"]["imputed"] == 3
