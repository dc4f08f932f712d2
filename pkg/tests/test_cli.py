import io
import json
import subprocess
import sys

import pytest

from phonojsd import __version__
from phonojsd.cli import cli_main

from synth import synthetic_lexicon_lines, word_sentences, write_lines, write_manifest_file


@pytest.fixture
def files(tmp_path):
    lines, words = synthetic_lexicon_lines(200, seed=0)
    lex = write_lines(tmp_path / "dict.txt", lines)
    speech = word_sentences(words, 300, seed=1)
    text = word_sentences(words, 300, seed=2)
    return {
        "dir": tmp_path,
        "lex": str(lex),
        "manifest": str(write_manifest_file(tmp_path / "m.tsv", speech)),
        "speech_txt": str(write_lines(tmp_path / "s.txt", speech)),
        "text": str(write_lines(tmp_path / "t.txt", text)),
    }


def run(argv, stdin=""):
    return subprocess.run(
        [sys.executable, "-m", "phonojsd", *argv], input=stdin, capture_output=True, text=True, check=False
    )


def with_stdin(monkeypatch, text):
    monkeypatch.setattr(sys, "stdin", io.StringIO(text))


def test_analyze_happy_path(files):
    r = run(["analyze", "--speech", files["manifest"], "--text", files["text"], "--lexicon", files["lex"],
             "--profile", "clean_speech"])
    assert r.returncode == 0, r.stderr
    rep = json.loads(r.stdout)
    assert rep["verdict"]["profile"] == "clean_speech"
    assert set(rep["jsd"]) == {"1", "2", "3", "4"}


def test_unknown_flag_is_usage_error(files):
    r = run(["analyze", "--bogus"])
    assert r.returncode == 1
    assert "usage:" in r.stderr and r.stdout == ""


def test_missing_lexicon_is_data_error(files):
    missing = str(files["dir"] / "nope.txt")
    r = run(["analyze", "--speech", files["manifest"], "--text", files["text"], "--lexicon", missing])
    assert r.returncode == 2
    assert missing in r.stderr


def test_no_ngrams_is_computation_error(tmp_path):
    lex = write_lines(tmp_path / "dict.txt", ["A AH0", "B B IY1"])
    m = write_manifest_file(tmp_path / "m.tsv", ["a b"])
    t = write_lines(tmp_path / "t.txt", ["b a"])
    assert cli_main(["analyze", "--speech", str(m), "--text", str(t), "--lexicon", str(lex)]) == 3


def test_unknown_profile(files):
    argv = ["analyze", "--speech", files["manifest"], "--text", files["text"], "--lexicon", files["lex"],
            "--profile", "studio"]
    assert cli_main(argv) == 1


def test_version_and_help(capsys):
    assert cli_main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
    assert cli_main(["classify", "--help"]) == 0


@pytest.mark.parametrize("include_sil", [False, True])
def test_composition_matches_analyze(files, monkeypatch, include_sil):
    d = files["dir"]
    sil_flag = ["--include-sil"] if include_sil else []
    common = ["--lexicon", files["lex"], "--seed", "7", "--sil-rate", "0.5"]
    for side, src in (("speech", files["speech_txt"]), ("text", files["text"])):
        with_stdin(monkeypatch, open(src).read())
        assert cli_main(["phonemize", *common, "--out", str(d / f"{side}.ph")]) == 0
        with_stdin(monkeypatch, open(d / f"{side}.ph").read())
        assert cli_main(["ngrams", "--lexicon", files["lex"], *sil_flag, "--out", str(d / f"{side}.bin")]) == 0
    assert cli_main(["jsd", "--speech", str(d / "speech.bin"), "--text", str(d / "text.bin"),
                     "--out", str(d / "prof.json")]) == 0
    manual = json.loads((d / "prof.json").read_text())["jsd"]

    from phonojsd.report import AnalyzeParams, analyze_pair

    rep = analyze_pair(files["manifest"], files["text"], files["lex"], AnalyzeParams(seed=7, sil_rate=0.5, include_sil=include_sil))
    for n in range(1, 5):
        assert abs(manual[str(n)] - rep.jsd[n]) < 1e-12


def test_phonemize_output(files, monkeypatch, tmp_path):
    lex = write_lines(tmp_path / "tiny.txt", ["THE DH AH0", "CAT K AE1 T"])
    with_stdin(monkeypatch, "the cat\nthe dog\n")
    out = tmp_path / "o.txt"
    assert cli_main(["phonemize", "--lexicon", str(lex), "--sil-rate", "0", "--out", str(out)]) == 0
    assert out.read_text() == "SIL DH AH K AE T SIL\n"
    with_stdin(monkeypatch, "the dog\n")
    assert cli_main(["phonemize", "--lexicon", str(lex), "--oov", "unk", "--sil-rate", "1", "--out", str(out)]) == 0
    assert out.read_text() == "SIL DH AH SIL UNK SIL\n"


def test_ngrams_rejects_unknown_label(files, monkeypatch):
    with_stdin(monkeypatch, "SIL QQ SIL\n")
    assert cli_main(["ngrams", "--lexicon", files["lex"], "--out", str(files["dir"] / "x.bin")]) == 2


def test_classify(tmp_path):
    out = tmp_path / "v.json"
    assert cli_main(["classify", "--jsd4", "0.2513", "--profile", "robust_features_noisy_speech",
                     "--speech-hours", "300", "--out", str(out)]) == 0
    v = json.loads(out.read_text())
    assert v["label"] == "borderline" and v["margin"] == -0.0013 and v["caveats"] == []
    assert cli_main(["classify", "--jsd4", "-1"]) == 1


def test_subsample_modes(files, monkeypatch):
    d = files["dir"]
    with_stdin(monkeypatch, "".join(f"s{i}\n" for i in range(100)))
    assert cli_main(["subsample", "sentences", "--k", "10", "--seed", "3", "--out", str(d / "k.txt")]) == 0
    assert len((d / "k.txt").read_text().splitlines()) == 10

    argv = ["subsample", "hours", "--manifest", files["manifest"], "--target", "0.1", "--seed", "4",
            "--out", str(d / "sel.json"), "--manifest-out", str(d / "sel.tsv"), "--matched-out", str(d / "mat.txt"), "--unmatched-out", str(d / "un.txt")]
    assert cli_main(argv) == 0
    sel = json.loads((d / "sel.json").read_text())
    matched = (d / "mat.txt").read_text().splitlines()
    unmatched = (d / "un.txt").read_text().splitlines()
    assert len(sel["ids"]) == len(matched) == 90
    assert len(matched) + len(unmatched) == 300
    assert [line.split("\t")[2] for line in (d / "sel.tsv").read_text().splitlines()] == matched

    argv = ["subsample", "split", "--manifest", files["manifest"], "--valid-ratio", "0.2", "--out", str(d / "sp.json")]
    assert cli_main(argv) == 0
    sp = json.loads((d / "sp.json").read_text())
    assert (len(sp["train"]["ids"]), len(sp["valid"]["ids"])) == (240, 60)


def test_scatter(files):
    d = files["dir"]
    argv = ["analyze", "--speech", files["manifest"], "--text", files["text"], "--lexicon", files["lex"],
            "--speech-id", "libri960", "--text-id", "librilm", "--out", str(d / "r.json")]
    assert cli_main(argv) == 0
    (d / "ann.tsv").write_text("libri960-librilm\t20.25\tclean\n")
    assert cli_main(["scatter", "--reports", str(d / "r.json"), "--annotations", str(d / "ann.tsv"),
                     "--out", str(d / "s.csv")]) == 0
    rows = (d / "s.csv").read_text().splitlines()
    assert rows[0] == "pair,order,jsd,per,condition"
    assert len(rows) == 5
    assert all(r.startswith("libri960-librilm,") and r.endswith(",20.25,clean") for r in rows[1:])
