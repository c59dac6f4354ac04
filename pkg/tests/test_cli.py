import gzip
import os
import subprocess
import sys

import pytest

from fqzkit.cli import build_parser, default_threads, run
from fqzkit.errors import UsageError

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")
REF = os.path.join(GOLDEN, "ref.fa")
READS = os.path.join(GOLDEN, "reads.fq")
UPDATE = os.environ.get("FQZKIT_UPDATE_GOLDEN") == "1"


@pytest.mark.parametrize("command", [None, "index", "compress", "decompress", "info"])
def test_help_snapshot(command, capsys, monkeypatch):
    monkeypatch.setenv("COLUMNS", "80")
    argv = ([command] if command else []) + ["--help"]
    assert run(argv) == 0
    text = capsys.readouterr().out
    path = os.path.join(GOLDEN, f"help_{command or 'main'}.txt")
    if UPDATE:
        with open(path, "w") as fh:
            fh.write(text)
    with open(path) as fh:
        assert text == fh.read()


def test_version(capsys):
    assert run(["--version"]) == 0
    assert capsys.readouterr().out.startswith("fqzkit ")


@pytest.mark.parametrize("argv", [[], ["compress", READS], ["bogus"], ["index", REF, "-o", "x", "-k", "40"],
                                  ["compress", READS, READS, "--ref", REF, "-o", "x"],
                                  ["compress", READS, "--ref", REF, "-o", "x", "--threads", "0"],
                                  ["compress", READS, "--ref", REF, "-o", "x", "--codec", "seq.zz=RLE"],
                                  ["compress", READS, "--ref", REF, "-o", "x", "--codec", "names=LZMA"]])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(argv) == 1


def test_missing_input_exit_2(tmp_path):
    assert run(["compress", str(tmp_path / "nope.fq"), "--ref", REF, "-o", str(tmp_path / "a")]) == 2
    assert run(["info", str(tmp_path / "nope.fqz")]) == 2


@pytest.fixture(scope="module")
def archive(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    idx = d / "ref.idx"
    assert run(["index", REF, "-o", str(idx), "-k", "12"]) == 0
    arc = d / "reads.fqz"
    assert run(["compress", READS, "--ref", REF, "--index", str(idx), "-o", str(arc),
                "--threads", "1", "--reads-per-chunk", "300", "--report", "none"]) == 0
    return d, arc


def test_roundtrip(archive, tmp_path):
    _, arc = archive
    out = tmp_path / "back.fq"
    assert run(["decompress", str(arc), "--ref", REF, "-o", str(out), "--threads", "2"]) == 0
    with open(READS, "rb") as fh:
        assert out.read_bytes() == fh.read()
    assert run(["decompress", str(arc), "--ref", REF, "-o", str(tmp_path / "b.fq.gz"),
                "--gzip", "yes"]) == 0
    with gzip.open(tmp_path / "b.fq.gz", "rb") as fh, open(READS, "rb") as ref:
        assert fh.read() == ref.read()


def test_info(archive, capsys):
    _, arc = archive
    assert run(["info", str(arc)]) == 0
    out = capsys.readouterr().out
    assert "seed_k             12" in out
    assert "chunks             4" in out
    assert "qual.huffman" in out


def test_report_formats(archive, tmp_path, capsys):
    d, _ = archive
    for fmt, needle in (("kv", "archive_bytes="), ("text", "ratio")):
        assert run(["compress", READS, "--ref", REF, "--index", str(d / "ref.idx"), "-o",
                    str(tmp_path / "a.fqz"), "--threads", "1", "--report", fmt]) == 0
        assert needle in capsys.readouterr().err


def test_corruption_exit_3(archive, tmp_path):
    _, arc = archive
    data = bytearray(arc.read_bytes())
    data[0] ^= 1
    bad = tmp_path / "bad.fqz"
    bad.write_bytes(bytes(data))
    assert run(["decompress", str(bad), "--ref", REF, "-o", str(tmp_path / "o.fq")]) == 3
    bad.write_bytes(bytes(arc.read_bytes()[:-3]))
    assert run(["info", str(bad)]) == 3


def test_wrong_reference_exit_4(archive, tmp_path):
    _, arc = archive
    other = tmp_path / "other.fa"
    with open(REF, "rb") as fh:
        text = fh.read()
    other.write_bytes(text.replace(b"ACGT", b"ACGA", 1))
    out = tmp_path / "o.fq"
    assert run(["decompress", str(arc), "--ref", str(other), "-o", str(out)]) == 4
    assert not out.exists()
    d, _ = archive
    assert run(["compress", READS, "--ref", str(other), "--index", str(d / "ref.idx"),
                "-o", str(tmp_path / "x.fqz")]) == 4


def test_paired(tmp_path):
    with open(READS, "rb") as fh:
        lines = fh.read().split(b"\n")
    recs = [b"\n".join(lines[i:i + 4]) + b"\n" for i in range(0, len(lines) - 1, 4)]
    r1, r2 = tmp_path / "r1.fq", tmp_path / "r2.fq"
    r1.write_bytes(b"".join(recs[:500]))
    r2.write_bytes(b"".join(recs[500:]))
    arc = tmp_path / "p.fqz"
    assert run(["compress", str(r1), str(r2), "--pair", "--ref", REF, "-k", "12", "-o", str(arc),
                "--threads", "2", "--report", "none", "--drop-names", "--bins", "4"]) == 0
    assert run(["decompress", str(arc), "--ref", REF, "-o", str(tmp_path / "o.fq")]) == 1
    o1, o2 = tmp_path / "o1.fq", tmp_path / "o2.fq"
    assert run(["decompress", str(arc), "--ref", REF, "-o", str(o1), str(o2)]) == 0
    got1 = o1.read_bytes().split(b"\n")
    want1 = r1.read_bytes().split(b"\n")
    assert got1[1::4] == want1[1::4]
    assert got1[0::4][:3] == [b"@1", b"@2", b"@3"]
    assert len(set(b"".join(got1[3::4]))) <= 4


def test_default_threads(monkeypatch):
    monkeypatch.setenv("FQZKIT_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("FQZKIT_THREADS", "zero")
    with pytest.raises(UsageError):
        default_threads()
    monkeypatch.delenv("FQZKIT_THREADS")
    assert 1 <= default_threads() <= 16


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fqzkit.cli", "info", str(tmp_path / "none")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.startswith("fqzkit: error:")


def test_parser_builds():
    assert build_parser().prog == "fqzkit"
