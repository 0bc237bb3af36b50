import json
import os

import numpy as np
import pytest

from drumaware import cli, pipeline
from drumaware.ensemble import bagging_fuse
from drumaware.evaluation import EvalReport, METRICS
from drumaware.io import read_activations, read_beats
from drumaware.sequences import ActivationMatrix

TINY = {
    "feature": {"window_sizes": [512, 1024], "bands_per_octave": [2, 3]},
    "tracker_hidden": [3], "separator_hidden": [3], "fuser_hidden": [2],
    "epochs": 2, "val_fraction": 0.34,
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth", "--out", str(root / "corpus"), "--pieces", "3",
                     "--duration", "1.5", "--drumless", "0.34", "--seed", "7"]) == 0
    with open(root / "tiny.json", "w") as f:
        json.dump(TINY, f)
    return root


@pytest.fixture(scope="module")
def trained(workdir):
    code = cli.main(["train", "--config", str(workdir / "tiny.json"), "--variant", "da2",
                     "--corpus", str(workdir / "corpus"), "--out", str(workdir / "models"),
                     "--runs", "2", "--seed", "42"])
    assert code == 0
    return workdir / "models"


def test_synth_outputs(workdir):
    files = sorted(os.listdir(workdir / "corpus"))
    assert "manifest.tsv" in files
    assert len([f for f in files if f.endswith(".beats")]) == 3


def test_synth_repeatable(workdir, tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path / "c"), "--pieces", "3",
                     "--duration", "1.5", "--drumless", "0.34", "--seed", "7"]) == 0
    for name in os.listdir(workdir / "corpus"):
        assert (tmp_path / "c" / name).read_bytes() == (workdir / "corpus" / name).read_bytes()


def test_usage_errors(capsys):
    assert cli.main(["synth", "--pieces", "3"]) == cli.EXIT_USAGE
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["nonsense"]) == cli.EXIT_USAGE
    assert cli.main(["train", "--variant", "da2"]) == cli.EXIT_USAGE


def test_train_outputs(trained):
    runs = sorted(os.listdir(trained))
    assert runs == ["run0", "run1", "run_config.json"]
    cfg = pipeline.RunConfig.load(trained / "run1" / pipeline.RUN_CONFIG)
    assert cfg.seed == 43 and cfg.variant == "da2" and cfg.tracker_hidden == (3,)
    hist = pipeline.read_history(trained / "run0" / pipeline.TRAIN_LOG)
    assert len(hist) == 2 and "fuser.lr" in hist[0] and "separator.train" in hist[0]
    a = (trained / "run0" / "tracker_mix.bin").read_bytes()
    b = (trained / "run1" / "tracker_mix.bin").read_bytes()
    assert a != b


def test_train_missing_stems(workdir, tmp_path):
    corpus = tmp_path / "nostems"
    corpus.mkdir()
    for name in os.listdir(workdir / "corpus"):
        if not name.endswith(".nodrum.wav"):
            (corpus / name).write_bytes((workdir / "corpus" / name).read_bytes())
    code = cli.main(["train", "--config", str(workdir / "tiny.json"), "--variant", "da1",
                     "--corpus", str(corpus), "--out", str(tmp_path / "m")])
    assert code == cli.EXIT_DATA
    assert not (tmp_path / "m" / "run0").exists()


def test_track_and_eval(workdir, trained, tmp_path):
    est = tmp_path / "est"
    assert cli.main(["track", "--model", str(trained / "run0"), "--head", "fuser",
                     "--audio", str(workdir / "corpus"), "--out", str(est),
                     "--dump-activations"]) == 0
    beats = sorted(f for f in os.listdir(est) if f.endswith(".beats"))
    assert beats == ["piece0000.beats", "piece0001.beats", "piece0002.beats"]
    acts = {f for f in os.listdir(est) if f.endswith(".act.csv")}
    assert "piece0000.fuser.act.csv" in acts and "piece0000.drum.act.csv" in acts
    assert cli.main(["eval", "--est", str(est), "--ref", str(workdir / "corpus"),
                     "--out", str(tmp_path / "r.tsv")]) == 0
    rep = EvalReport.from_tsv(tmp_path / "r.tsv")
    assert sorted(rep.rows) == ["piece0000", "piece0001", "piece0002"]


def test_bagging_matches_dumped(workdir, trained, tmp_path):
    out = tmp_path / "bag"
    assert cli.main(["track", "--model", str(trained / "run0"), "--head", "bagging",
                     "--audio", str(workdir / "corpus" / "piece0001.wav"), "--out", str(out),
                     "--dump-activations"]) == 0
    parts = [ActivationMatrix(*read_activations(out / f"piece0001.{h}.act.csv"))
             for h in ("mix", "drum", "nodrum")]
    model = pipeline.Model.load(trained / "run0")
    expected = pipeline.Decoder(model.hmm)(bagging_fuse(*parts))
    got = read_beats(out / "piece0001.beats")
    assert np.allclose(got[:, 0], expected.times, atol=1e-6)


def test_track_head_absent(workdir, tmp_path):
    models = tmp_path / "base"
    assert cli.main(["train", "--config", str(workdir / "tiny.json"), "--variant", "baseline",
                     "--corpus", str(workdir / "corpus"), "--out", str(models),
                     "--epochs", "1"]) == 0
    assert os.listdir(models / "run0").count("tracker_mix.bin") == 1
    assert not (models / "run0" / "fuser.bin").exists()
    code = cli.main(["track", "--model", str(models / "run0"), "--head", "drum",
                     "--audio", str(workdir / "corpus" / "piece0000.wav"),
                     "--out", str(tmp_path / "x")])
    assert code == cli.EXIT_USAGE


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_eval_identical(workdir, tmp_path):
    rep = pipeline.evaluate_dirs(workdir / "corpus", workdir / "corpus")
    assert all(v == 1.0 for r in rep.rows.values() for k, v in r.items() if k.endswith("f1"))
    assert all(v == 1.0 for r in rep.rows.values() for k, v in r.items()
               if k == "beat_cmlt")
    mean = rep.mean()
    for m in METRICS:
        assert np.isclose(mean[m], np.nanmean([r[m] for r in rep.rows.values()]),
                          equal_nan=True)


def test_eval_id_mismatch(workdir, tmp_path):
    est = tmp_path / "est"
    est.mkdir()
    (est / "piece0000.beats").write_text((workdir / "corpus" / "piece0000.beats").read_text())
    (est / "other.beats").write_text("0.5\t1\n")
    with pytest.warns(UserWarning, match="unmatched"):
        rep = pipeline.evaluate_dirs(est, workdir / "corpus")
    assert list(rep.rows) == ["piece0000"]


@pytest.mark.filterwarnings("ignore:.*test skipped")
def test_stats(workdir, trained, tmp_path):
    dirs = []
    for i, head in enumerate(("mix", "fuser")):
        d = tmp_path / head
        assert cli.main(["track", "--model", str(trained / "run0"), "--head", head,
                         "--audio", str(workdir / "corpus"), "--out", str(d)]) == 0
        dirs.append(str(d))
    assert cli.main(["stats", "--base", dirs[0], "--other", dirs[1], "--ref",
                     str(workdir / "corpus"), "--out", str(tmp_path / "s.tsv")]) == 0
    lines = (tmp_path / "s.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["set", "metric", "n", "mean_base", "mean_other", "t", "p"]
    sets = {line.split("\t")[0] for line in lines[1:]}
    assert "all" in sets
    assert len([l for l in lines[1:] if l.startswith("all\t")]) == len(METRICS)


def test_profile(workdir, trained, tmp_path):
    est = tmp_path / "est"
    assert cli.main(["track", "--model", str(trained / "run0"), "--audio",
                     str(workdir / "corpus"), "--out", str(est), "--dump-activations"]) == 0
    assert cli.main(["profile", "--act", str(est), "--ref", str(workdir / "corpus"),
                     "--out", str(tmp_path / "prof")]) == 0
    lines = (tmp_path / "prof.tsv").read_text().splitlines()
    header = lines[0].split("\t")
    assert len(lines) == 22 and header[0] == "offset"
    assert len(header) - 1 == 4 * 2   # heads x event kinds
    assert (tmp_path / "prof.svg").read_text().lstrip().startswith("<?xml")
    assert cli.main(["profile", "--act", str(tmp_path), "--ref", str(workdir / "corpus"),
                     "--out", str(tmp_path / "none")]) == cli.EXIT_DATA


def test_profile_constant(tmp_path, workdir):
    from drumaware.io import write_activations
    act_dir = tmp_path / "acts"
    act_dir.mkdir()
    for sid in ("piece0000", "piece0001"):
        write_activations(act_dir / f"{sid}.mix.act.csv", np.full((3, 150), 0.2), 100.0)
    profs = pipeline.profiles(act_dir, workdir / "corpus")
    assert all(np.allclose(p, 0.2) for p in profs.values())


def test_tune_hmm(workdir, trained, tmp_path):
    code = cli.main(["tune-hmm", "--model", str(trained / "run0"), "--corpus",
                     str(workdir / "corpus"), "--transition-lambdas", "10,100",
                     "--observation-lambdas", "16", "--out", str(tmp_path / "t.tsv")])
    assert code == 0
    assert len((tmp_path / "t.tsv").read_text().splitlines()) == 3


def test_run_config_round_trip(tmp_path):
    cfg = pipeline.RunConfig(variant="da1", tracker_hidden=(4, 4), runs=5, seed=42)
    cfg.save(tmp_path / "c.json")
    back = pipeline.RunConfig.load(tmp_path / "c.json")
    assert back.to_dict() == cfg.to_dict()
    assert pipeline.run_seeds(back) == [42, 43, 44, 45, 46]
    over = back.with_overrides(lr=1e-3, hmm={"transition_lambda": 30.0})
    assert over.lr == 1e-3 and over.hmm.transition_lambda == 30.0 and over.runs == 5
    with pytest.raises(Exception):
        pipeline.RunConfig.from_dict({"variant": "da2", "bogus": 1})
