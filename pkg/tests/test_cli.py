import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ksgrain import cli
from ksgrain.cli import ExperimentConfig, main, run


def files(d):
    return sorted(p.name for p in d.iterdir())


def test_entropy_end_to_end(tmp_path, capsys):
    argv = ["entropy", "--map", "baker", "--grid", "32x32", "--depth", "8", "--samples", "1000000",
            "--seed", "7", "--output-dir", str(tmp_path), "--label", "run"]
    assert main(argv) == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("h_KS=0.6") and "\n" not in out
    assert files(tmp_path) == ["run-plot.csv", "run.csv", "run.json"]
    payload = json.loads((tmp_path / "run.json").read_text())
    assert payload["config"]["map_spec"] == "baker" and payload["config"]["seed"] == 7
    assert abs(payload["result"]["estimate"]["h_ks"] - math.log(2)) < 0.05 * math.log(2)
    text = (tmp_path / "run.csv").read_bytes()
    assert text.startswith(b"n,H,bound,increment\n") and b"\r" not in text


def test_timestamped_names(tmp_path):
    assert main(["lyapunov", "--map", "cat", "--steps", "2000", "--output-dir", str(tmp_path)]) == 0
    names = files(tmp_path)
    assert len(names) == 2 and all(n.startswith("lyapunov-") for n in names)


def test_byte_identical_reruns(tmp_path):
    base = ["correlation", "--map", "cat", "--grid", "8x8", "--samples", "20000", "--t-max", "5",
            "--seed", "3", "--output-dir", str(tmp_path)]
    assert main(base + ["--label", "a"]) == 0
    assert main(base + ["--label", "b"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_config_file_equivalent_to_flags(tmp_path):
    flags = ["factorization", "--map", "baker", "--grid", "4x4", "--samples", "20000", "--t-max", "3",
             "--set", "bottom", "--set", "left", "--output-dir", str(tmp_path), "--label", "flags"]
    assert main(flags) == 0
    cfg = json.loads((tmp_path / "flags.json").read_text())["config"]
    assert cfg["sets"] == ["bottom", "left"]
    cfg["label"] = "file"
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["--config", str(tmp_path / "cfg.json")]) == 0
    assert (tmp_path / "flags.csv").read_bytes() == (tmp_path / "file.csv").read_bytes()
    # flags override the file
    assert main(["factorization", "--config", str(tmp_path / "cfg.json"), "--label", "over", "--seed", "5"]) == 0
    assert json.loads((tmp_path / "over.json").read_text())["config"]["seed"] == 5


def test_artifact_json_replays_run(tmp_path):
    base = ["correlation", "--map", "baker", "--grid", "8x8", "--samples", "20000", "--t-max", "4",
            "--seed", "2", "--output-dir", str(tmp_path)]
    assert main(base + ["--label", "orig"]) == 0
    assert main(["correlation", "--config", str(tmp_path / "orig.json"), "--label", "again"]) == 0
    assert (tmp_path / "orig.csv").read_bytes() == (tmp_path / "again.csv").read_bytes()


def test_rotation_bound_is_non_chaotic(tmp_path, capsys):
    argv = ["bound", "--map", "rotation:alpha=0.618", "--grid", "32x32", "--depth", "96",
            "--samples", "1000000", "--output-dir", str(tmp_path), "--label", "rot"]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "satisfied=true" in out and "tau_log=inf" in out and "non_chaotic=true" in out
    rep = json.loads((tmp_path / "rot.json").read_text())["result"]["report"]
    assert rep["non_chaotic"] is True and rep["log_timescale"] is None


def test_baker_bound_summary(tmp_path, capsys):
    argv = ["bound", "--map", "baker", "--grid", "32x32", "--depth", "8", "--samples", "200000",
            "--output-dir", str(tmp_path), "--label", "b"]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "bound=6.93 satisfied=true tau_log=10" in out


def test_wigner_check(tmp_path, capsys):
    assert main(["wigner-check", "--dim", "31", "--ensemble", "20", "--seed", "1",
                 "--output-dir", str(tmp_path), "--label", "w"]) == 0
    res = json.loads((tmp_path / "w.json").read_text())["result"]
    assert res["passed"] and res["stationarity_max"] < 1e-10 and res["invariance_max"] < 1e-10
    assert len((tmp_path / "w.csv").read_text().splitlines()) == 21
    assert "passed=true" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["invariant-density", "--map", "doubling", "--grid", "16x1", "--scheme", "lattice"],
        ["quantum-mixing", "--dim", "31", "--t-max", "20"],
        ["entropy", "--map", "cat", "--grid", "8x8", "--depth", "6", "--samples", "20000", "--series", "spreading"],
    ],
)
def test_other_commands(tmp_path, argv):
    assert main(argv + ["--output-dir", str(tmp_path), "--label", "x"]) == 0
    assert json.loads((tmp_path / "x.json").read_text())["config"]["command"] == argv[0]


@pytest.mark.parametrize(
    "argv",
    [
        ["entropy", "--map", "tent"],
        ["entropy", "--map", "baker", "--grid", "0x4"],
        ["entropy", "--map", "baker", "--depth", "0"],
        ["entropy", "--map", "baker", "--samples", "-5"],
        ["entropy"],
        ["bogus"],
        [],
        ["wigner-check", "--dim", "30"],
        ["entropy", "--map", "baker", "--unknown-flag"],
        ["factorization", "--map", "baker", "--set", "left"],
        ["correlation", "--map", "cat", "--grid", "3x3", "--set-a", "left"],
    ],
)
def test_validation_errors_exit_1(tmp_path, argv, capsys):
    assert main(argv + ["--output-dir", str(tmp_path)] if argv and argv[0] != "bogus" else argv) == 1
    assert "error" in capsys.readouterr().err
    assert files(tmp_path) == []


def test_bad_config_file(tmp_path):
    (tmp_path / "c.json").write_text('{"command": "entropy", "nonsense": 1}')
    assert main(["--config", str(tmp_path / "c.json")]) == 1
    (tmp_path / "d.json").write_text("[1, 2]")
    assert main(["--config", str(tmp_path / "d.json")]) == 1
    assert main(["--config", str(tmp_path / "missing.json")]) == 1


def test_numerical_failure_exit_2_removes_partial_output(tmp_path, monkeypatch):
    def fake(cfg):
        def write(path):
            path.write_text("partial\n")
            from ksgrain.errors import NonConvergenceError
            raise NonConvergenceError("boom", 1.0)

        return write, {}, ""

    monkeypatch.setitem(cli.HANDLERS, "lyapunov", fake)
    assert main(["lyapunov", "--map", "cat", "--output-dir", str(tmp_path), "--label", "p"]) == 2
    assert files(tmp_path) == []


def test_window_too_short_is_a_validation_error(tmp_path):
    # depth 1 leaves fewer than three depths to fit
    assert main(["entropy", "--map", "cat", "--grid", "4x4", "--depth", "1", "--samples", "1000",
                 "--output-dir", str(tmp_path)]) == 1
    assert files(tmp_path) == []


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["lyapunov", "--map", "cat", "--output-dir", str(blocker / "sub")]) == 1


@settings(max_examples=50, deadline=None)
@given(
    st.sampled_from(cli.COMMANDS),
    st.integers(1, 100),
    st.integers(1, 4),
    st.integers(1, 10**7),
    st.integers(0, 2**31),
    st.floats(1e-14, 1e-2),
    st.lists(st.sampled_from(["left", "right", "bottom", "top", "all"]), min_size=2, max_size=4),
)
def test_config_json_roundtrip(command, depth, stride, samples, seed, tol, sets):
    cfg = ExperimentConfig(command, "cat", "16x8", depth, stride, samples, seed, tolerance=tol, sets=sets)
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg
    cfg.validate()
