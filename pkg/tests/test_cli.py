import json

import pytest

from sssrdist.cli import main
from sssrdist.synthetic import write_nisqa_fixture, write_voicebank_fixture


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return write_voicebank_fixture(root / "vb", n_pairs=10, seed=0)


def _run(*argv):
    return main([str(a) for a in argv])


def test_pipeline_spectrogram_only(tmp_path, corpus):
    m = tmp_path / "manifest.csv"
    assert _run("manifest", "--root", corpus, "--layout", "voicebank", "--split", "test", "--out", m) == 0
    assert len(m.read_text().splitlines()) == 11
    d = tmp_path / "dist.csv"
    assert _run("distances", "--manifest", m, "--out", d) == 0
    rows = d.read_text().splitlines()
    assert len(rows) == 11 and rows[0].startswith("utterance_id,d_sg,")
    meta = json.loads((tmp_path / "dist.csv.meta.json").read_text())
    assert meta["records"] == 10 and meta["config_hash"] and "pesq" in meta["metric_adapters"]

    e = tmp_path / "eval.csv"
    assert _run("evaluate", "--manifest", m, "--metrics-list", "pesq,stoi,si_sdr", "--out", e) == 0
    r = tmp_path / "report.csv"
    assert _run("correlate", "--distances", d, "--metrics", e, "--scatter", "--out", r) == 0
    header = r.read_text().splitlines()[0]
    assert header.startswith("distance,pesq_spearman,pesq_pearson")
    assert (tmp_path / "report_n.csv").exists()
    assert (tmp_path / "report_scatter_d_sg_vs_pesq.png").exists()

    # idempotent outputs
    first = d.read_bytes()
    assert _run("distances", "--manifest", m, "--out", d) == 0
    assert d.read_bytes() == first


def test_distances_with_backend(tmp_path, corpus):
    m = tmp_path / "m.csv"
    _run("manifest", "--root", corpus, "--out", m)
    d = tmp_path / "d.csv"
    code = _run("distances", "--manifest", m, "--backends", "hubert",
                "--set", "backends.hubert_checkpoint=random-small:0", "--layers", "FE", "--out", d)
    assert code == 0
    line = d.read_text().splitlines()[1].split(",")
    assert line[1] and line[2] and not line[3]


def test_train_enhance_visualize(tmp_path, corpus):
    m = tmp_path / "m.csv"
    _run("manifest", "--root", corpus, "--out", m)
    out = tmp_path / "train"
    assert _run("train", "--train-manifest", m, "--epochs", 2, "--out", out) == 0
    assert (out / "epoch_001.pt").exists() and (out / "epoch_002.pt").exists()
    assert len((out / "training_log.csv").read_text().splitlines()) == 3
    enh = tmp_path / "enh"
    assert _run("enhance", "--checkpoint", out, "--manifest", m, "--out", enh) == 0
    assert len(list(enh.glob("*.wav"))) == 10
    e = tmp_path / "eval_enh.csv"
    assert _run("evaluate", "--manifest", m, "--enhanced", enh, "--metrics-list", "si_sdr", "--out", e) == 0
    png = tmp_path / "fig.png"
    assert _run("visualize", "--manifest", m, "--out", png) == 0
    assert png.exists()


def test_nisqa_manifest_cli(tmp_path):
    root = write_nisqa_fixture(tmp_path / "nisqa", n_pairs=3)
    m = tmp_path / "n.csv"
    assert _run("manifest", "--root", root, "--layout", "nisqa", "--out", m) == 0
    assert all(line.split(",")[-1] for line in m.read_text().splitlines()[1:])


def test_exit_codes(tmp_path, corpus):
    assert _run("distances", "--manifest", tmp_path / "missing.csv", "--out", tmp_path / "x.csv") == 3
    assert _run("distances", "--manifest", tmp_path / "missing.csv", "--set", "nope.key=1", "--out", "x") == 2
    (tmp_path / "bad.ini").write_text("[training]\nwat = 1\n")
    assert _run("manifest", "--root", corpus, "--config", tmp_path / "bad.ini", "--out", tmp_path / "m.csv") == 2
    assert _run("frobnicate") == 2
    (tmp_path / "empty").mkdir()
    assert _run("manifest", "--root", tmp_path / "empty", "--out", tmp_path / "m.csv") == 1
    m = tmp_path / "m.csv"
    _run("manifest", "--root", corpus, "--out", m)
    assert _run("train", "--train-manifest", m, "--loss", "l1", "--out", tmp_path / "t") == 2
