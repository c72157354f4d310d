import subprocess
import sys

import numpy as np
import pytest

from refab.bitstream import PartialBitstream, from_header, write_container
from refab.cli import main
from refab.config import ConfigError, apply_overrides, load_settings
from refab.power import WasterConfig

from .conftest import flip_bit

FAST_CAL = "[sweep]\nn_t = 200\nn_points = 7\n"


def usage_exit(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code


@pytest.fixture
def workdir(tmp_path):
    rng = np.random.default_rng(8)
    for name, n in (("blinkall", 40524), ("blinkline", 6000), ("mac", 4096)):
        write_container(tmp_path / f"{name}.rfb", PartialBitstream(name, rng.bytes(n)))
    return tmp_path


def scenario(workdir, mode, attack=True, extra=""):
    text = (f"mode {mode}\nseed 3\n{extra}"
            f"bitstream blinkall.rfb prr=0 victim=blinkall attack={'on' if attack else 'off'} "
            f"n_instances=50000\n"
            "bitstream blinkline.rfb prr=1 victim=blinkline\n"
            "bitstream mac.rfb prr=2 victim=mac\n")
    path = workdir / f"{mode}.scn"
    path.write_text(text)
    return str(path)


class TestConvert:
    def test_blinkall_size(self, tmp_path, capsys):
        raw = tmp_path / "blinkall.bin"
        raw.write_bytes(bytes(40524))
        assert main(["convert", "--in", str(raw), "--out", str(tmp_path / "b.rfb")]) == 0
        out = capsys.readouterr().out
        assert "m=2533" in out and "size=40524" in out and "crc=on" in out
        assert from_header((tmp_path / "b.rfb").read_bytes()).name == "blinkall"

    def test_crc_off_flag(self, tmp_path):
        raw = tmp_path / "x.bin"
        raw.write_bytes(b"abc")
        main(["convert", "--in", str(raw), "--out", str(tmp_path / "x.rfb"), "--crc", "off"])
        data = (tmp_path / "x.rfb").read_bytes()
        assert data[4 + 2 + 1 + 4] & 1 == 0

    def test_c_header(self, tmp_path):
        raw = tmp_path / "x.bin"
        raw.write_bytes(b"abc")
        main(["convert", "--in", str(raw), "--out", str(tmp_path / "x.rfb"),
              "--c-header", str(tmp_path / "x.h")])
        assert "0x61, 0x62, 0x63" in (tmp_path / "x.h").read_text()

    def test_missing_in(self, tmp_path):
        assert usage_exit(["convert", "--out", str(tmp_path / "x.rfb")]) == 64

    def test_unreadable(self, tmp_path, capsys):
        assert main(["convert", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2
        assert "cannot read" in capsys.readouterr().err


def test_unknown_verb():
    assert usage_exit(["explode"]) == 64
    assert usage_exit([]) == 64


class TestRun:
    def test_clean_crc(self, workdir, capsys):
        assert main(["run", "--scenario", scenario(workdir, "crc", attack=False)]) == 0
        log = capsys.readouterr().out.splitlines()
        assert sum(line.split()[1] == "configure" and line.endswith(" 0") for line in log) == 3

    def test_attacked_crc(self, workdir, capsys):
        assert main(["run", "--scenario", scenario(workdir, "crc")]) == 3
        log = capsys.readouterr().out
        assert "Error while loading blinkall. corq_return: 2" in log
        assert "configure mac 4" in log and "configure blinkline 4" in log

    def test_attacked_ascon_repairs(self, workdir, capsys):
        errs = workdir / "errs"
        rc = main(["run", "--scenario", scenario(workdir, "ascon"), "--errors-dir", str(errs)])
        assert rc == 3
        log = capsys.readouterr().out
        assert "preload blinkall 3" in log
        assert "repair blinkall 0" in log
        for name in ("blinkall", "blinkline", "mac"):
            assert f"configure {name} 0" in log
        assert "glitched_frames=0/16" in log
        assert (errs / "mac_errors.csv").read_text().startswith("iteration,v1,v2,expected,computed,error")

    def test_mode_override_and_seed(self, workdir, capsys):
        path = scenario(workdir, "crc")
        main(["run", "--scenario", path, "--mode", "none", "--seed", "5"])
        a = capsys.readouterr().out
        main(["run", "--scenario", path, "--mode", "none", "--seed", "5"])
        assert capsys.readouterr().out == a
        assert "corq_return" not in a

    def test_malformed(self, workdir, capsys):
        path = workdir / "bad.scn"
        path.write_text("mode crc\n\nbitstream mac.rfb prr=zero\n")
        assert main(["run", "--scenario", str(path)]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_missing_prr(self, workdir, capsys):
        path = workdir / "bad.scn"
        path.write_text("bitstream mac.rfb\n")
        assert main(["run", "--scenario", str(path)]) == 2
        assert "line 1" in capsys.readouterr().err

    def test_missing_file(self, workdir, capsys):
        path = workdir / "bad.scn"
        path.write_text("mode ascon\nbitstream ghost.rfb prr=0\n")
        assert main(["run", "--scenario", str(path)]) == 2
        assert "line 2" in capsys.readouterr().err


class TestCalibrate:
    def test_two_decimals_and_determinism(self, tmp_path, capsys):
        cfg = tmp_path / "c.ini"
        cfg.write_text(FAST_CAL)
        args = ["calibrate", "--config", str(cfg), "--seed", "4"]
        assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
        out = capsys.readouterr().out
        assert out.startswith("F_s=") and out.split("%")[0].split(".")[1].isdigit()
        assert len(out.split("%")[0].split(".")[1]) == 2
        main(args + ["--out", str(tmp_path / "b.csv")])
        a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
        assert a == b
        assert b"N_t,200" in a

    def test_nt_zero(self, tmp_path, capsys):
        assert main(["calibrate", "--nt", "0", "--out", str(tmp_path / "x.csv")]) == 2
        assert "N_t" in capsys.readouterr().err

    def test_report(self, tmp_path, capsys):
        cfg = tmp_path / "c.ini"
        cfg.write_text(FAST_CAL)
        main(["calibrate", "--config", str(cfg), "--out", str(tmp_path / "a.csv")])
        capsys.readouterr()
        assert main(["report", "--in", str(tmp_path / "a.csv"), "--ranges", "1,1000,1000000"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "N_t,200"
        if out[1] != "N_c,0":
            assert out[3].startswith("F_t[1-1000),")


class TestHashVerifyRepair:
    def test_round_trip(self, tmp_path, capsys):
        bs = PartialBitstream("mac", np.random.default_rng(0).bytes(1000))
        good = tmp_path / "mac.rfb"
        write_container(good, bs)
        manifest = tmp_path / "golden.txt"
        assert main(["hash", "--in", str(good), "--manifest", str(manifest)]) == 0
        assert main(["verify", "--in", str(good), "--manifest", str(manifest)]) == 0
        assert "flt_status=false" in capsys.readouterr().out

        bad = tmp_path / "bad.rfb"
        write_container(bad, bs.with_payload(flip_bit(bs.payload, 130 * 8)))
        assert main(["verify", "--in", str(bad), "--manifest", str(manifest)]) == 3
        assert "faulty=8..8" in capsys.readouterr().out

        fixed = tmp_path / "fixed.rfb"
        assert main(["repair", "--in", str(bad), "--manifest", str(manifest),
                     "--golden", str(good), "--out", str(fixed)]) == 0
        assert from_header(fixed.read_bytes()) == bs

    def test_unknown_name(self, tmp_path, capsys):
        a = tmp_path / "a.rfb"
        b = tmp_path / "b.rfb"
        write_container(a, PartialBitstream("a", b"123"))
        write_container(b, PartialBitstream("b", b"123"))
        main(["hash", "--in", str(a), "--manifest", str(tmp_path / "m.txt")])
        assert main(["verify", "--in", str(b), "--manifest", str(tmp_path / "m.txt")]) == 2

    def test_not_a_container(self, tmp_path):
        junk = tmp_path / "junk"
        junk.write_bytes(b"hello world")
        assert main(["hash", "--in", str(junk)]) == 2


class TestOneShot:
    def test_preload_attack(self, workdir, capsys):
        rc = main(["preload", "--in", str(workdir / "blinkall.rfb"), "--attack",
                   "--waster", "n_instances=50000", "--seed", "1"])
        out = capsys.readouterr().out
        assert rc == 3 and "corq_return: 2" in out

    def test_configure_clean(self, workdir, capsys):
        assert main(["configure", "--in", str(workdir / "mac.rfb"), "--prr", "1"]) == 0
        assert "configure mac 0" in capsys.readouterr().out

    def test_bad_waster_override(self, workdir, capsys):
        rc = main(["preload", "--in", str(workdir / "mac.rfb"), "--attack", "--waster", "bogus=1"])
        assert rc == 2

    def test_attack_trace(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        assert main(["attack", "--duration", "1e-5", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "utilization=30.08%" in text and "sensor=none" in text
        assert out.read_text().startswith("time,voltage\n")

    def test_attack_sustained_alarms(self, capsys):
        main(["attack", "--duration", "1e-2", "--waster", "f_toggle=1", "--waster", "ro_act=1"])
        assert "alarm@" in capsys.readouterr().out


class TestConfig:
    def test_env_var(self, tmp_path, monkeypatch):
        cfg = tmp_path / "env.ini"
        cfg.write_text("[pdn]\nR = 0.2\n[sensor]\nk_consecutive = 5\n")
        monkeypatch.setenv("REFAB_CONFIG", str(cfg))
        s = load_settings()
        assert s.pdn.R == 0.2 and s.sensor.k_consecutive == 5
        assert s.pdn.L == 5e-10

    def test_explicit_path_wins(self, tmp_path, monkeypatch):
        a = tmp_path / "a.ini"
        a.write_text("[pdn]\nR = 0.2\n")
        b = tmp_path / "b.ini"
        b.write_text("[pdn]\nR = 0.3\n")
        monkeypatch.setenv("REFAB_CONFIG", str(a))
        assert load_settings(b).pdn.R == 0.3

    def test_errors(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[nope]\nx = 1\n")
        with pytest.raises(ConfigError):
            load_settings(bad)
        bad.write_text("[pdn]\nR = -1\n")
        with pytest.raises(ConfigError):
            load_settings(bad)
        with pytest.raises(ConfigError):
            load_settings(tmp_path / "missing.ini")

    def test_overrides(self):
        w = apply_overrides(WasterConfig(), {"ro_mask": "cc", "kind": "self-clocked", "ro_ena": "off"},
                            "waster")
        assert w.ro_mask == 0xCC and w.kind.value == "self-clocked" and not w.ro_ena

    def test_cli_bad_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[pdn]\nR = abc\n")
        assert main(["attack", "--config", str(bad)]) == 2
        assert "pdn.R" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "refab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "calibrate" in res.stdout
