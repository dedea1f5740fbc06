import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from ellipchain import cli
from ellipchain.chain import ModelParams
from oracles import circulant_energies

import cases


def run(argv, tmp_path, name="out.json"):
    out = tmp_path / name
    code = cli.main(list(argv) + ["--out", str(out)])
    doc = json.loads(out.read_text()) if out.exists() else None
    return code, doc


class TestConfig:
    def test_l_range(self):
        assert cli.parse_l_range(None) is None
        assert cli.parse_l_range("full") is None
        assert cli.parse_l_range("custom:0,2,5..7") == (0, 2, 5, 6, 7)
        assert cli.parse_l_range("custom:3,1,1") == (1, 3)
        for bad in ("0,1", "custom:", "custom:a", "custom:1..x"):
            with pytest.raises(cli.ConfigError):
                cli.parse_l_range(bad)

    def test_alpha_grid(self):
        assert cli.parse_alpha_grid("8,4,0.5") == (8.0, 4.0, 0.5)
        with pytest.raises(cli.ConfigError):
            cli.parse_alpha_grid("8,x")

    @pytest.mark.parametrize("argv", [
        ["verify", "--alpha", "1e9"],
        ["spectrum", "--n", "2"],
        ["spectrum", "--n", "40"],
        ["spectrum", "--m", "9", "--n", "6"],
        ["bethe", "--m", "4", "--n", "6"],
        ["bethe", "--j", "0"],
        ["scan", "--alpha-grid", "8,-1"],
        ["bethe", "--l-range", "0..3"],
        ["bethe", "--alpha", "nan"],
    ])
    def test_invalid_config_exits_2(self, argv):
        with pytest.raises(SystemExit) as info:
            cli.main(argv)
        assert info.value.code == 2

    def test_echo_is_command_specific(self):
        cfg = cli.RunConfig("scan", alpha_grid=(2.0, 1.0))
        assert "alpha_grid" in cfg.echo("scan")
        assert "alpha_grid" not in cfg.echo("bethe")


class TestSpectrum:
    def test_one_magnon(self, tmp_path):
        code, doc = run(["spectrum", "--n", "6", "--m", "1", "--alpha", "1"], tmp_path)
        assert code == 0
        s = doc["spectra"][0]
        assert sorted(s["momentum_labels"]) == list(range(6))
        ref = circulant_energies(ModelParams(6, 1.0).exchange(), 6)
        assert np.max(np.abs(np.array(s["eigenvalues"]) - ref)) < 1e-10

    def test_vacuum(self, tmp_path):
        code, doc = run(["spectrum", "--n", "4", "--m", "0"], tmp_path)
        assert code == 0 and doc["spectra"][0]["eigenvalues"] == [0.0]

    def test_descendants(self, tmp_path):
        _, d2 = run(["spectrum", "--n", "8", "--m", "2", "--alpha", "2"], tmp_path, "a.json")
        _, d1 = run(["spectrum", "--n", "8", "--m", "1", "--alpha", "2"], tmp_path, "b.json")
        e2 = np.array(d2["spectra"][0]["eigenvalues"])
        assert len(e2) == 28
        for e in d1["spectra"][0]["eigenvalues"]:
            assert np.min(np.abs(e2 - e)) < 1e-9

    def test_table_printed(self, tmp_path, capsys):
        run(["spectrum", "--n", "4", "--m", "1"], tmp_path)
        out = capsys.readouterr().out
        assert len(out.strip().splitlines()) == 5


class TestBethe:
    def test_verify_two_magnons(self, tmp_path):
        code, doc = run(["bethe", "--n", "6", "--m", "2", "--alpha", "1", "--verify"], tmp_path)
        assert code == 0
        rep = doc["match_report"]
        assert rep["hw_reached"] == 9 and rep["hw_levels"] == 9
        assert rep["union"]["complete"] and rep["union"]["levels"] == 15

    def test_one_magnon_roots(self, tmp_path):
        code, doc = run(["bethe", "--n", "6", "--m", "1", "--alpha", "1"], tmp_path)
        assert code == 0
        # the vacuum stands in for the uniform magnon, so N states in total
        assert len(doc["roots"]) == 6
        assert sorted(r["momentum"] for r in doc["roots"]) == list(range(6))

    def test_l_range_respected(self, tmp_path):
        code, doc = run(["bethe", "--n", "6", "--m", "2", "--l-range", "custom:1,4"], tmp_path)
        assert code == 0
        for r in doc["roots"]:
            assert set(r["quantum_numbers"]) <= {1, 4}

    def test_deterministic(self, tmp_path):
        argv = ["bethe", "--n", "6", "--m", "2", "--alpha", "0.7", "--verify"]
        cli.main(argv + ["--out", str(tmp_path / "a.json")])
        cli.main(argv + ["--out", str(tmp_path / "b.json")])
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestDocuments:
    def test_root_round_trip(self, tmp_path):
        r = cases.roots(8, 1.0, 3)[0]
        d = cli.root_to_dict(r, 8)
        path = tmp_path / "r.json"
        cli.write_document({"schema_version": cli.SCHEMA_VERSION, "roots": [d]}, str(path))
        back = cli.root_from_dict(cli.read_document(str(path))["roots"][0])
        for name in ("p", "t", "q", "q_tilde", "f", "eps"):
            assert np.array_equal(getattr(back, name), getattr(r, name))
        assert back.E == r.E and back.calE == r.calE and back.E_sf == r.E_sf
        assert back.quantum_numbers == tuple(r.quantum_numbers)
        assert back.lattice_residual == r.lattice_residual

    def test_document_round_trip(self, tmp_path):
        _, doc = run(["bethe", "--n", "6", "--m", "2", "--verify"], tmp_path)
        path = tmp_path / "again.json"
        cli.write_document(doc, str(path))
        assert cli.read_document(str(path)) == doc
        assert (tmp_path / "out.json").read_text() == path.read_text()

    def test_schema_checked(self, tmp_path):
        path = tmp_path / "old.json"
        path.write_text(json.dumps({"schema_version": "0.1"}))
        with pytest.raises(ValueError):
            cli.read_document(str(path))

    def test_atomic_write_keeps_old_file(self, tmp_path, monkeypatch):
        path = tmp_path / "doc.json"
        cli.write_document({"schema_version": cli.SCHEMA_VERSION, "x": 1}, str(path))
        before = path.read_text()

        def boom(src, dst):
            raise OSError("disk full")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError):
            cli.write_document({"schema_version": cli.SCHEMA_VERSION, "x": 2}, str(path))
        assert path.read_text() == before
        assert sorted(p.name for p in tmp_path.iterdir()) == ["doc.json"]

    def test_non_finite_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            cli.write_document({"x": math.nan}, str(tmp_path / "n.json"))
        assert not list(tmp_path.iterdir())


class TestVerify:
    def test_default_passes(self, tmp_path):
        code, doc = run(["verify"], tmp_path)
        assert code == 0
        assert len(doc["checks"]) == 8 and all(c["pass"] for c in doc["checks"])

    def test_injected_fault_fails(self, tmp_path):
        code, doc = run(["verify", "--inject-fault"], tmp_path)
        assert code == 1
        failed = {c["name"] for c in doc["checks"] if not c["pass"]}
        assert "two-magnon union vs ED" in failed


class TestScan:
    def test_single_point_is_bethe(self, tmp_path):
        _, scan = run(["scan", "--n", "6", "--m", "2", "--alpha", "0.8", "--alpha-grid", "0.8"], tmp_path, "s.json")
        _, single = run(["bethe", "--n", "6", "--m", "2", "--alpha", "0.8", "--verify"], tmp_path, "b.json")
        assert scan["points"][0] == single

    def test_trajectories_continuous(self, tmp_path):
        code, doc = run(["scan", "--n", "6", "--m", "2", "--alpha-grid", "8,4,2,1,0.5"], tmp_path)
        assert code == 0
        s = doc["summary"]
        assert s["continuous"]
        assert all(t["max_jump_ratio"] <= 10 for t in s["trajectories"])
        assert len(doc["points"]) == 5
        for p in doc["points"]:
            assert p["match_report"]["union"]["complete"]
        assert "trigonometric_limit" in s


def test_module_entry_point_exit_codes(tmp_path):
    ok = subprocess.run([sys.executable, "-m", "ellipchain", "spectrum", "--n", "4", "--m", "0"],
                        capture_output=True, text=True)
    assert ok.returncode == 0
    bad = subprocess.run([sys.executable, "-m", "ellipchain", "verify", "--alpha", "1e9"],
                         capture_output=True, text=True)
    assert bad.returncode == 2 and "alpha" in bad.stderr
    # a directory as output path is an infrastructure failure
    fail = subprocess.run([sys.executable, "-m", "ellipchain", "spectrum", "--n", "4", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert fail.returncode == 1
