import csv
import math

import pytest

from blowuplab import cli
from blowuplab import presets as P
from blowuplab.config import HELP, Config, load_config, parse_config, with_overrides
from blowuplab.errors import ConfigurationError


def manifest_files(run_dir):
    with (run_dir / "manifest.csv").open(newline="") as fh:
        return {row[1] for row in csv.reader(fh) if row[0] == "file"}


def disk_files(run_dir):
    return {p.name for p in run_dir.iterdir()}


# configuration


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("")
    assert load_config(p) == Config()


def test_partial_override(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# only the dimension\ndimension = 2\n")
    cfg = load_config(p)
    assert cfg.dimension == 2
    assert cfg.nodes == Config().nodes


def test_level_syntax_and_booleans():
    cfg = parse_config("truncation_levels = e^2, e^4, 100\ndisable_diffusion = yes\n")
    assert cfg.truncation_levels == (math.exp(2), math.exp(4), 100.0)
    assert cfg.disable_diffusion is True


@pytest.mark.parametrize("text,needle", [
    ("dimension = 2.5", "line 1|:1:"),
    ("\n\nbogus = 1", "bogus"),
    ("nodes = 8", "nodes"),
    ("dimension = 3\ndimension = 4", "duplicate"),
    ("no equals sign", "key = value"),
    ("truncation_levels = 5, 4", "truncation_levels"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigurationError, match=needle):
        parse_config(text)


def test_error_names_key_and_line():
    with pytest.raises(ConfigurationError) as info:
        parse_config("radius = 1\ndimension = 2.5\n", "run.cfg")
    msg = str(info.value)
    assert "dimension" in msg and "run.cfg:2" in msg


def test_missing_file():
    with pytest.raises(ConfigurationError):
        load_config("/nonexistent/blowuplab.cfg")


def test_digest_tracks_values():
    a = Config()
    assert a.digest() == Config().digest()
    assert a.digest() != with_overrides(a, seed=1).digest()


def test_every_key_has_help():
    from dataclasses import fields
    assert {f.name for f in fields(Config)} == set(HELP)


# command line


def test_bad_dimension_exits_two(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("dimension = 2.5\n")
    code = cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "dimension" in err and ":1:" in err


def test_unknown_key_exits_two(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("nodes = 64\nspeed = 3\n")
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "speed" in capsys.readouterr().err


def test_preset_writes_manifest_listing_exactly_the_files(tmp_path):
    assert cli.main(["preset", "ode-oracle", "--out", str(tmp_path), "--emit-gnuplot"]) == 0
    run = tmp_path / "ode-oracle"
    assert manifest_files(run) == disk_files(run)
    assert "ode_oracle.gp" in disk_files(run)
    # a rerun without plot scripts leaves no stale files behind
    assert cli.main(["preset", "ode-oracle", "--out", str(tmp_path)]) == 0
    assert manifest_files(run) == disk_files(run)
    assert "ode_oracle.gp" not in disk_files(run)


def test_out_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("BLOWUPLAB_OUT", str(tmp_path / "env"))
    assert cli.main(["preset", "ode-oracle"]) == 0
    assert (tmp_path / "env" / "ode-oracle" / "manifest.csv").is_file()


def small_config(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text("nodes = 64\ngrading_ratio = 10\namplitude = 4\ntrials = 3\n")
    return p


@pytest.mark.parametrize("command", ["simulate", "harness-sturm"])
def test_identical_runs_are_bit_identical(tmp_path, command):
    cfg = small_config(tmp_path)
    for k in ("a", "b"):
        assert cli.main([command, "--config", str(cfg), "--seed", "5", "--out", str(tmp_path / k)]) == 0
    a, b = tmp_path / "a" / command, tmp_path / "b" / command
    names = disk_files(a) - {"manifest.csv"}
    assert names == disk_files(b) - {"manifest.csv"} and names
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    assert manifest_files(a) == disk_files(a)


def test_continue_and_profile_tools(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("nodes = 64\ngrading_ratio = 100\ninitial = log_singular\namplitude = 0.8\n"
                   "truncation_levels = e^6, e^8\nhorizon = 1e-3\n")
    out = tmp_path / "o"
    assert cli.main(["continue", "--config", str(cfg), "--out", str(out), "--outputs", "4"]) == 0
    assert manifest_files(out / "continue") == disk_files(out / "continue")
    assert cli.main(["shoot", "--family", "steady", "--center", "0", "--rho-max", "5", "--out", str(out)]) == 0
    assert cli.main(["map-alpha", "--range", "0", "2", "3", "--out", str(out)]) == 0


def test_failed_check_exits_one(tmp_path, monkeypatch):
    def failing(cfg):
        res = P.PresetResult("ode-oracle", 1)
        res.check("always fails", False, 1.0, "never")
        return res

    monkeypatch.setitem(P.PRESETS, "ode-oracle", failing)
    assert cli.main(["preset", "ode-oracle", "--out", str(tmp_path)]) == 1
    with (tmp_path / "ode-oracle" / "manifest.csv").open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r[0] == "check"]
    assert rows == [["check", "always fails", "fail", "1"]]


def test_domain_error_exits_two(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("dimension = 2\n")
    assert cli.main(["bracket-csharp", "--config", str(p), "--out", str(tmp_path)]) == 2
