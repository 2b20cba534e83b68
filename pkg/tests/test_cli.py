import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from codedmem.cli import main, parse_bands, parse_config, parse_ratios
from codedmem.codes import build_scheme_i, build_scheme_ii, build_scheme_iii, build_uncoded, rate
from codedmem.errors import ConfigError
from codedmem.trace import band_histogram, detect_bands, parse_trace, two_band_spec

GOLDEN = Path(__file__).parent / "golden"

TRACE3 = "0,0,R,0x0\n0,1,R,0x400\n1,2,W,0x8\n"

SMALL_CFG = """\
scheme = I
alpha = 0.25
L = 64
W = 4

[engine]
access_ratio = 2
"""


def _read_csv(path):
    return list(csv.DictReader(io.StringIO(Path(path).read_text())))


@pytest.fixture
def files(tmp_path):
    (tmp_path / "t.csv").write_text(TRACE3)
    (tmp_path / "sim.cfg").write_text(SMALL_CFG)
    return tmp_path


def test_run_three_line_trace(files):
    out = files / "out"
    rc = main(["run", "--config", str(files / "sim.cfg"), "--trace", str(files / "t.csv"),
               "--out", str(out), "--events", str(files / "ev.log")])
    assert rc == 0
    rows = _read_csv(out / "metrics.csv")
    assert len(rows) == 1 and rows[0]["scheme"] == "I"
    meta = json.loads((out / "metrics.json").read_text())
    assert meta["metrics"]["reads_served"] == 2 and meta["config"]["L"] == 64
    assert (files / "ev.log").read_text().startswith("0 R served=")


def test_run_bad_alpha_exits_2(files, capsys):
    (files / "bad.cfg").write_text("alpha = 1.5\n")
    rc = main(["run", "--config", str(files / "bad.cfg"), "--trace", str(files / "t.csv"),
               "--out", str(files)])
    assert rc == 2
    assert "alpha" in capsys.readouterr().err


def test_run_bad_trace_exits_2(files, capsys):
    (files / "bad.csv").write_text("0,0,Q,0x0\n")
    rc = main(["run", "--trace", str(files / "bad.csv"), "--out", str(files)])
    assert rc == 2 and "line 1" in capsys.readouterr().err


def test_missing_files_exit_2(files):
    assert main(["run", "--trace", str(files / "nope.csv"), "--out", str(files)]) == 2
    assert main(["run", "--config", str(files / "nope.cfg"), "--trace",
                 str(files / "t.csv"), "--out", str(files)]) == 2


def test_compare_baseline_golden(files):
    # scripted scenario: a short dense two-band trace on a small memory
    out = files / "cmp"
    assert main(["gen", "--cores", "4", "--duration", "200", "--gap", "2", "--seed", "11",
                 "--space", str(8 * 64 * 4 * 8), "--out", str(files / "g.csv")]) == 0
    rc = main(["run", "--config", str(files / "sim.cfg"), "--trace", str(files / "g.csv"),
               "--compare-baseline", "--out", str(out)])
    assert rc == 0
    text = (out / "metrics.csv").read_text()
    header = text.splitlines()[0].split(",")
    for m in ("critical_read_latency_ns", "write_latency_ns"):
        assert f"baseline_{m}" in header and f"improvement_{m}_pct" in header
    assert text == (GOLDEN / "compare_baseline.csv").read_text()


def test_gen_deterministic_and_in_band(tmp_path):
    args = ["gen", "--cores", "8", "--duration", "20000", "--gap", "1.5", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    tr = parse_trace(a.decode())
    assert len(tr) >= 100_000
    bands = two_band_spec()
    inside = sum(1 for r in tr if any(b.base <= r.addr < b.base + b.width for b in bands))
    assert abs(inside / len(tr) - 0.95) <= 0.02


def test_gen_split_gives_four_bands(tmp_path):
    hist = tmp_path / "h.csv"
    assert main(["gen", "--duration", "3000", "--seed", "1", "--split", "2",
                 "--histogram", str(hist), "--regions", "64",
                 "--out", str(tmp_path / "s.csv")]) == 0
    tr = parse_trace((tmp_path / "s.csv").read_text())
    assert len(detect_bands(tr)) == 4
    rows = _read_csv(hist)
    assert [int(r["count"]) for r in rows] == band_histogram(tr, 64)


def test_gen_custom_bands_and_ramp(tmp_path, capsys):
    assert main(["gen", "--bands", "0.1:0.05:0.5,0x80000:4096:0.4", "--duration", "50",
                 "--seed", "3", "--ramp", "8"]) == 0
    tr = parse_trace(capsys.readouterr().out)
    assert len(tr) > 0


def test_gen_seed_from_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CODEDMEM_SEED", "5")
    main(["gen", "--duration", "30"])
    a = capsys.readouterr().out
    main(["gen", "--duration", "30", "--seed", "5"])
    assert a == capsys.readouterr().out
    monkeypatch.setenv("CODEDMEM_SEED", "6")
    main(["gen", "--duration", "30"])
    assert a != capsys.readouterr().out
    monkeypatch.setenv("CODEDMEM_SEED", "x")
    assert main(["gen", "--duration", "30"]) == 2


def test_gen_bad_band_spec():
    assert main(["gen", "--bands", "1:2"]) == 2


@pytest.fixture(scope="module")
def default_sweep(tmp_path_factory):
    a = tmp_path_factory.mktemp("sw_a")
    b = tmp_path_factory.mktemp("sw_b")
    assert main(["sweep", "--ratios", "1..10", "--schemes", "I,II,III,uncoded",
                 "--out", str(a)]) == 0
    assert main(["sweep", "--ratios", "1..10", "--schemes", "I,II,III,uncoded",
                 "--jobs", "2", "--out", str(b)]) == 0
    return a, b


def test_sweep_forty_rows(default_sweep):
    rows = _read_csv(default_sweep[0] / "sweep.csv")
    assert len(rows) == 40
    assert {r["scheme"] for r in rows} == {"I", "II", "III", "uncoded"}
    assert all(r["mismatches"] == "0" for r in rows)


def test_sweep_rate_column(default_sweep):
    want = {
        "I": rate(build_scheme_i(1024, 16, 0.1)),
        "II": rate(build_scheme_ii(1024, 16, 0.1)),
        "III": rate(build_scheme_iii(1024, 16, 0.1, 8)),  # 8 data banks by default
        "uncoded": rate(build_uncoded(8, 1024, 16)),
    }
    for r in _read_csv(default_sweep[0] / "sweep.csv"):
        assert float(r["rate"]) == pytest.approx(float(want[r["scheme"]]), abs=1e-6)


def test_sweep_byte_identical(default_sweep):
    a, b = default_sweep
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    assert (a / "sweep.json").read_bytes() == (b / "sweep.json").read_bytes()


def test_sweep_empty_grid(tmp_path):
    assert main(["sweep", "--ratios", "", "--out", str(tmp_path)]) == 2


def test_parse_config_sections():
    c = parse_config("scheme = II\nalpha = 0.2\n[engine]\nwrite_cap = 2\n[dynamic]\nenabled = yes\nT = 50\n")
    assert (c.scheme, c.alpha, c.write_cap, c.dynamic, c.T) == ("II", 0.2, 2, True, 50)
    with pytest.raises(ConfigError) as e:
        parse_config("bogus = 1\n")
    assert e.value.field == "bogus"
    with pytest.raises(ConfigError):
        parse_config("[other]\nx = 1\n")
    with pytest.raises(ConfigError) as e:
        parse_config("L = many\n")
    assert e.value.field == "L"


def test_parse_helpers():
    assert parse_ratios("2..5") == [2, 3, 4, 5]
    assert parse_ratios("1,4") == [1, 4]
    b = parse_bands("0.5:0.25:0.9:2", 1024)
    assert (b[0].base, b[0].width, b[0].weight, b[0].slope) == (512, 256, 0.9, 2.0)


def test_module_entry_point(files):
    proc = subprocess.run(
        [sys.executable, "-m", "codedmem", "run", "--config", str(files / "sim.cfg"),
         "--trace", str(files / "t.csv"), "--out", str(files / "m")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (files / "m" / "metrics.csv").exists()
