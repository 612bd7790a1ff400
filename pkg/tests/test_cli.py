"""CLI workflows: parsing, artifacts, reproducibility, exit codes."""

import json
import math

import numpy as np
import pytest

from pwcheat import ConductivityProfile, TransferDataset, ValidationError
from pwcheat.cli import dumps_canonical, main, parse_flux, parse_grid
from pwcheat.piecewise import profile_from_json, profile_to_json


@pytest.fixture
def profiles(tmp_path):
    paths = {}
    for name, prof in {
        "const1": ConductivityProfile.constant(1.0),
        "two_piece": ConductivityProfile([0, 0.4, 1], [1.0, 3.0]),
        "q_two": ConductivityProfile([0, 0.5, 1], [4.0, 1.0]),
    }.items():
        p = tmp_path / f"{name}.json"
        p.write_text(profile_to_json(prof))
        paths[name] = str(p)
    return paths


class TestMiniLanguages:
    def test_log_grid(self):
        grid = parse_grid("log:0.01:100:16")
        assert grid.size == 16
        assert abs(grid[0] - 0.01) < 1e-15 and abs(grid[-1] - 100.0) < 1e-12

    def test_lin_grid(self):
        grid = parse_grid("lin:1:2:5")
        assert np.allclose(grid, [1.0, 1.25, 1.5, 1.75, 2.0])

    def test_bad_grids(self):
        for text in ("geo:1:2:3", "log:1:2", "log:0:2:3", "log:2:1:3", "log:1:2:x"):
            with pytest.raises(ValidationError):
                parse_grid(text)

    def test_flux_specs(self):
        pulse = parse_flux("pulse:2:0:1.5")
        assert pulse.kind == "pulse" and pulse.amplitude == 2.0
        const = parse_flux("const:0.5")
        assert const.kind == "constant"
        for text in ("pulse:1", "const:", "steady:1", "pulse:a:0:1"):
            with pytest.raises(ValidationError):
                parse_flux(text)


class TestTransfer:
    def test_prints_unit_anchor(self, profiles, capsys):
        assert main(["transfer", "--profile", profiles["const1"], "--lambda", "1"]) == 0
        out = capsys.readouterr().out.strip()
        assert abs(float(out) - math.tanh(1.0)) < 1e-15
        assert out == "0.76159415595576485"

    def test_grid_csv(self, profiles, tmp_path, capsys):
        out = tmp_path / "h.csv"
        assert (
            main(
                ["transfer", "--profile", profiles["two_piece"],
                 "--lambdas", "log:0.1:10:5", "--out", str(out)]
            )
            == 0
        )
        lines = out.read_text().splitlines()
        header = [ln for ln in lines if not ln.startswith("#")][0]
        assert header == "lambda,H"
        assert sum(1 for ln in lines if not ln.startswith("#")) == 6

    def test_requires_exactly_one_lambda_mode(self, profiles, capsys):
        assert main(["transfer", "--profile", profiles["const1"]]) == 1
        err = json.loads(capsys.readouterr().err)
        assert err["exit_code"] == 1


class TestSynthReconstructRoundTrip:
    def test_end_to_end_recovery(self, profiles, tmp_path, capsys):
        data = tmp_path / "d.csv"
        result = tmp_path / "r.json"
        assert (
            main(
                ["synth", "--profile", profiles["two_piece"],
                 "--lambdas", "log:0.01:100:16", "--noise", "0",
                 "--out", str(data)]
            )
            == 0
        )
        loaded = TransferDataset.from_csv(data)
        assert len(loaded) == 16
        assert (
            main(
                ["reconstruct", "--data", str(data), "--n", "2",
                 "--threads", "1", "--out", str(result)]
            )
            == 0
        )
        payload = json.loads(result.read_text())
        prof = payload["result"]["profile"]
        assert abs(prof["breakpoints"][1] - 0.4) < 1e-3
        assert np.max(np.abs(np.array(prof["values"]) - [1.0, 3.0])) < 1e-3
        assert payload["result"]["converged"] is True
        assert payload["best_n"] == 2
        assert len(payload["input_digest"]) == 64
        assert payload["meta"]["version"]

    def test_select_subcommand(self, profiles, tmp_path):
        data = tmp_path / "d.csv"
        main(["synth", "--profile", profiles["two_piece"],
              "--lambdas", "log:0.01:100:12", "--out", str(data)])
        out = tmp_path / "s.json"
        assert (
            main(["select", "--data", str(data), "--n-max", "3",
                  "--restarts", "3", "--threads", "1", "--out", str(out)])
            == 0
        )
        assert json.loads(out.read_text())["best_n"] == 2

    def test_reconstruct_accepts_n_max(self, profiles, tmp_path):
        data = tmp_path / "d.csv"
        main(["synth", "--profile", profiles["const1"],
              "--lambdas", "log:0.01:100:8", "--out", str(data)])
        out = tmp_path / "r.json"
        assert (
            main(["reconstruct", "--data", str(data), "--n-max", "2",
                  "--restarts", "2", "--threads", "1", "--out", str(out)])
            == 0
        )
        assert json.loads(out.read_text())["best_n"] == 1


class TestVerify:
    def test_report_written_and_passing(self, profiles, tmp_path):
        out = tmp_path / "v.json"
        assert (
            main(["verify", "--q1", profiles["const1"], "--q2", profiles["q_two"],
                  "--pieces", "4", "--threads", "1", "--out", str(out)])
            == 0
        )
        report = json.loads(out.read_text())
        assert all(inv["pass"] for inv in report["invariants"])
        assert report["moment_certificate"]["min_sv"] > 0.0
        assert len(report["moment_certificate"]["k_grid"]) == 12


class TestReproducibility:
    def test_synth_byte_identical(self, profiles, tmp_path):
        args = ["synth", "--profile", profiles["two_piece"],
                "--lambdas", "log:0.01:100:16", "--noise", "0.01", "--seed", "7"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(args + ["--out", str(a)])
        main(args + ["--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_reconstruct_byte_identical_and_thread_invariant(self, profiles, tmp_path):
        data = tmp_path / "d.csv"
        main(["synth", "--profile", profiles["two_piece"],
              "--lambdas", "log:0.01:100:16", "--noise", "0.01", "--seed", "3",
              "--out", str(data)])
        outs = []
        for name, threads in (("r1.json", "1"), ("r2.json", "1"), ("r4.json", "4")):
            out = tmp_path / name
            main(["reconstruct", "--data", str(data), "--n", "2", "--seed", "5",
                  "--restarts", "4", "--threads", threads, "--out", str(out)])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        # Thread count must not change the numbers, only the metadata digest.
        r1 = json.loads(outs[0])
        r4 = json.loads(outs[2])
        assert r1["result"] == r4["result"]

    def test_profile_json_load_save_byte_identical(self, profiles):
        text = open(profiles["two_piece"]).read()
        assert profile_to_json(profile_from_json(text)) == text


class TestErrorChannel:
    def test_missing_file_is_io_error(self, tmp_path, capsys):
        assert main(["transfer", "--profile", str(tmp_path / "nope.json"),
                     "--lambda", "1"]) == 3
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "FileNotFoundError" and err["exit_code"] == 3

    def test_invalid_profile_is_validation_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        assert main(["transfer", "--profile", str(bad), "--lambda", "1"]) == 1
        assert json.loads(capsys.readouterr().err)["exit_code"] == 1

    def test_underdetermined_reconstruct(self, profiles, tmp_path, capsys):
        data = tmp_path / "d.csv"
        main(["synth", "--profile", profiles["const1"],
              "--lambdas", "log:0.1:10:6", "--out", str(data)])
        assert main(["reconstruct", "--data", str(data), "--n", "5"]) == 1
        assert json.loads(capsys.readouterr().err)["error"] == "UnderdeterminedError"


class TestCanonicalJson:
    def test_deterministic_and_17_digits(self):
        payload = {"b": 0.1, "a": [1, 2.5, True, None], "c": {"x": float("inf")}}
        text = dumps_canonical(payload)
        assert text == dumps_canonical(payload)
        assert "0.10000000000000001" in text
        assert json.loads(text) == {
            "a": [1, 2.5, True, None],
            "b": 0.1,
            "c": {"x": None},
        }
