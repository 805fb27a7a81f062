import json

import numpy as np
import pytest

from oracles import mann_whitney_auc
from weightanomaly.cli import main
from weightanomaly.detector import load_detector, read_scores_csv, score_network
from weightanomaly.weightstore import make_record, read_container, write_container

FAST = {"train": {"epochs": 10}}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(FAST))
    code = main(["gen-corpus", "--clean", "6", "--backdoored", "4", "--seed", "5", "--config", str(cfg),
                 "--out", str(root / "corpus")])
    assert code == 0
    code = main(["fit", "--corpus", str(root / "corpus"), "--fit-count", "4", "--interp", "forward",
                 "--out", str(root / "det")])
    assert code == 0
    return root


def test_gen_corpus_outputs(workdir):
    files = sorted(p.name for p in (workdir / "corpus").iterdir())
    assert "manifest.json" in files and len(files) == 11
    manifest = json.loads((workdir / "corpus" / "manifest.json").read_text())
    assert manifest["train_config"]["epochs"] == 10  # taken from --config
    assert [r["label"] for r in manifest["runs"]].count("backdoored") == 4


def test_gen_corpus_deterministic(workdir, tmp_path):
    cfg = workdir / "cfg.json"
    assert main(["gen-corpus", "--clean", "6", "--backdoored", "4", "--seed", "5", "--config", str(cfg),
                 "--out", str(tmp_path)]) == 0
    for p in (workdir / "corpus").iterdir():
        assert (tmp_path / p.name).read_bytes() == p.read_bytes(), p.name


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"clean": 1}))
    assert main(["gen-corpus", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    cfg.write_text(json.dumps({"clean": 1, "backdoored": 0, "train": {"epochs": 1}}))
    assert main(["gen-corpus", "--config", str(cfg), "--clean", "2", "--out", str(tmp_path / "o")]) == 0
    assert len(json.loads((tmp_path / "o" / "manifest.json").read_text())["runs"]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["gen-corpus", "--clean", "1", "--out", "x"],
        ["fit", "--corpus", "c", "--retain", "1.5", "--out", "x"],
        ["fit", "--out", "x"],
        ["gen-corpus"],
        ["score", "--detector", "d.json", "--out", "x"],
        ["calibrate", "--detector", "d.json", "--frr", "1.0", "--out", "x"],
        ["fit", "--interp", "sideways", "--out", "x"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(main(argv))
    assert exc.value.code == 2


def test_runtime_failure_exit_1(tmp_path):
    assert main(["fit", "--corpus", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 1


def test_fit_outputs(workdir):
    det = load_detector(workdir / "det" / "detector-forward.json")
    rows = (workdir / "det" / "sweep-forward.csv").read_text().strip().splitlines()
    assert rows[0] == "n_components,aic"
    table = [(int(n), float(a)) for n, a in (r.split(",") for r in rows[1:])]
    assert min(table, key=lambda t: (t[1], t[0]))[0] == det.gmm.n_components
    assert det.fit_manifest.network_ids == tuple(f"clean-{i:03d}" for i in range(4))


def test_score_rows_and_in_sample_note(workdir, capsys):
    corpus = workdir / "corpus"
    out = workdir / "rep"
    det = workdir / "det" / "detector-forward.json"
    assert main(["score", "--detector", str(det), "--corpus", str(corpus), "--records",
                 str(corpus / "clean-000.wsc"), "--out", str(out), "--name", "s.csv"]) == 0
    assert "clean-000 is in-sample" in capsys.readouterr().err
    rows = read_scores_csv((out / "s.csv").read_text())
    manifest = json.loads((corpus / "manifest.json").read_text())
    n_held = sum(1 for r in manifest["runs"] if r["valid"]) - 4
    assert len(rows) == n_held + 1
    model = load_detector(det)
    first = next(r for r in rows if r.network_id == "clean-004")
    assert first.log_score == score_network(model, read_container(corpus / "clean-004.wsc")).log_score


def test_score_missing_layer(workdir, tmp_path, capsys):
    bad = tmp_path / "bad.wsc"
    write_container(bad, make_record("bad", "clean", {"fc1": np.ones((2, 2))}))
    det = workdir / "det" / "detector-forward.json"
    assert main(["score", "--detector", str(det), "--records", str(bad), "--out", str(tmp_path)]) == 1
    good = workdir / "corpus" / "clean-005.wsc"
    assert main(["score", "--detector", str(det), "--records", str(bad), str(good), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "scores-forward.csv").read_text()
    assert "bad,,,,error" in text and "clean-005" in text


def test_eval_from_detector_and_split(workdir, capsys):
    det = workdir / "det" / "detector-forward.json"
    for split in ("all", "triggers", "locations"):
        assert main(["eval", "--detector", str(det), "--corpus", str(workdir / "corpus"), "--split", split,
                     "--out", str(workdir / "rep")]) == 0
        line = capsys.readouterr().out.strip().splitlines()[-1]
        assert line.startswith("auc,")
        roc_lines = (workdir / "rep" / f"roc-forward-{split}.csv").read_text().strip().splitlines()
        assert roc_lines[0] == "fpr,tpr" and roc_lines[-1] == line


def test_eval_scores_file_matches_pairwise(tmp_path, capsys, rng):
    clean = rng.integers(0, 8, 15).astype(float)
    bd = rng.integers(0, 8, 11).astype(float) - 1
    lines = ["network_id,label,log_score,n_vectors,verdict"]
    lines += [f"c{i},clean,{float(s)!r},4," for i, s in enumerate(clean)]
    lines += [f"b{i},backdoored,{float(s)!r},4," for i, s in enumerate(bd)]
    (tmp_path / "s.csv").write_text("\n".join(lines) + "\n")
    assert main(["eval", "--scores", str(tmp_path / "s.csv"), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.strip()
    assert out == f"auc,{mann_whitney_auc(clean, bd):.6f}"


def test_eval_split_with_scores_needs_corpus(tmp_path):
    (tmp_path / "s.csv").write_text("network_id,label,log_score,n_vectors,verdict\n")
    assert main(["eval", "--scores", str(tmp_path / "s.csv"), "--split", "triggers", "--out", str(tmp_path)]) == 2


def test_calibrate(workdir, capsys):
    det = workdir / "det" / "detector-forward.json"
    out = workdir / "cal"
    assert main(["calibrate", "--detector", str(det), "--corpus", str(workdir / "corpus"), "--frr", "0",
                 "--out", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    cal = load_detector(out / "detector-forward.json")
    held = [read_container(workdir / "corpus" / f"clean-{i:03d}.wsc") for i in (4, 5)]
    scores = [score_network(cal, r).log_score for r in held]
    assert cal.threshold == min(scores)
    assert lines[1] == "realized_frr,0.000000"
    assert all(score_network(cal, r).verdict == "clean" for r in held)


def test_calibrate_rejects_backdoored(workdir, tmp_path):
    det = workdir / "det" / "detector-forward.json"
    bd = next((workdir / "corpus").glob("bd-*.wsc"))
    assert main(["calibrate", "--detector", str(det), "--clean-records", str(bd), "--frr", "0.1",
                 "--out", str(tmp_path)]) == 1


def test_outputs_only_under_out(workdir, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    before = set(tmp_path.iterdir())
    det = workdir / "det" / "detector-forward.json"
    out = tmp_path / "only"
    assert main(["eval", "--detector", str(det), "--corpus", str(workdir / "corpus"), "--out", str(out)]) == 0
    assert set(tmp_path.iterdir()) - before == {out}
