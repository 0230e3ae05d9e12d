from dpdpseg import io as dio
from dpdpseg.cli import main


def test_generate_pipeline_eval(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["gen-speechlike", "--n", "8", "--word-len", "2", "2", "--out", str(data)]) == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"features_dir {data / 'features'}\nalignments {data / 'words.txt'}\n"
                   "K 20\naernn_preset phonemic\naernn_steps 5\nbatch_size 4\n")
    out = tmp_path / "out"
    assert main(["pipeline", "--config", str(cfg), "--output-dir", str(out), "--tolerance-s", "0.01"]) == 0
    manifest = dio.read_kv(out / "manifest.txt")
    assert manifest["config.K"] == "20" and len(manifest["config_sha256"]) == 64
    capsys.readouterr()
    assert main(["eval", "--hyp", str(out / "words.txt"), "--ref", str(data / "words.txt"),
                 "--tol", "0.01", "--per-type", "3"]) == 0
    text = capsys.readouterr().out
    assert "R-val." in text and "token_f1" in text


def test_stage_commands(tmp_path, capsys):
    data = tmp_path / "data"
    main(["gen-speechlike", "--n", "4", "--out", str(data)])
    feats = str(data / "features")
    assert main(["kmeans", "--features", feats, "--K", "10", "--seed", "1", "--out", str(tmp_path / "cb")]) == 0
    assert main(["encode", "--features", feats, "--codebook", str(tmp_path / "cb"), "--out",
                 str(tmp_path / "u.txt")]) == 0
    assert main(["merge", "--features", feats, "--codebook", str(tmp_path / "cb"), "--out",
                 str(tmp_path / "m.txt")]) == 0
    assert main(["train-aernn", "--units", str(tmp_path / "u.txt"), "--alphabet-size", "10",
                 "--preset", "phonemic", "--steps", "3", "--out", str(tmp_path / "model")]) == 0
    assert main(["segment-words", "--units", str(tmp_path / "u.txt"), "--scorer", str(tmp_path / "model"),
                 "--out", str(tmp_path / "w.txt")]) == 0
    assert len(dio.read_units(tmp_path / "u.txt")) == 4


def test_symbolic_commands(tmp_path):
    assert main(["gen-symbolic", "--n", "20", "--out", str(tmp_path)]) == 0
    assert main(["train-aernn", "--corpus", str(tmp_path / "corpus.txt"), "--preset", "phonemic",
                 "--steps", "3", "--out", str(tmp_path / "model")]) == 0
    assert main(["segment-words", "--corpus", str(tmp_path / "corpus.txt"), "--scorer", str(tmp_path / "model"),
                 "--variant", "hsmm", "--out", str(tmp_path / "seg.txt")]) == 0
    assert len((tmp_path / "seg.txt").read_text().splitlines()) == 20


def test_oracle_check(capsys):
    assert main(["oracle-check", "--n", "20"]) == 0
    assert "optimality PASS" in capsys.readouterr().out


def test_failure_is_stage_tagged(tmp_path, capsys):
    code = main(["pipeline", "--features-dir", str(tmp_path / "missing"), "--output-dir", str(tmp_path / "o")])
    assert code != 0
    assert "stage config" in capsys.readouterr().err
    code = main(["kmeans", "--features", str(tmp_path / "missing"), "--seed", "0", "--out", str(tmp_path / "c")])
    assert code != 0
    assert "stage kmeans" in capsys.readouterr().err
