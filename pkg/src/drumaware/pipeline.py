"""
End-to-end plumbing: run configuration, training runs, tracking,
evaluation, significance tests and activation profiles on disk.

"""

import glob
import json
import logging
import os
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from . import ensemble as E
from . import evaluation as ev
from .data import load_corpus
from .errors import ConfigError, DataError
from .features import FeatureConfig, extract_features
from .hmm import Decoder, HmmConfig, tune
from .io import load_wav, read_activations, read_beats, write_activations, write_beats
from .separation import reference_stem_features, stem_paths
from .sequences import ActivationMatrix, BeatSequence

log = logging.getLogger(__name__)

TRAIN_LOG = "train_log.tsv"
RUN_CONFIG = "run_config.json"
ACT_SUFFIX = ".act.csv"


@dataclass
class RunConfig:
    """
    Everything needed to reproduce a training run from a corpus.

    Nested feature and decoder settings are kept as :class:`FeatureConfig`
    and :class:`HmmConfig` instances.

    """

    variant: str = "da2"
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    hmm: HmmConfig = field(default_factory=HmmConfig)
    tracker_hidden: tuple = (25, 25, 25)
    separator_hidden: tuple = (64, 64, 64)
    fuser_hidden: tuple = None
    lr: float = 1e-2
    lookahead_k: int = 5
    lookahead_alpha: float = 0.5
    patience: int = 20
    lr_factor: float = 5.0
    epochs: int = 100
    keep_best: bool = True
    seed: int = 0
    runs: int = 1
    corpus: str = None
    val_corpus: str = None
    val_fraction: float = 0.15
    out: str = None

    def __post_init__(self):
        if self.variant not in E.VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if isinstance(self.feature, dict):
            self.feature = FeatureConfig.from_dict(self.feature)
        if isinstance(self.hmm, dict):
            self.hmm = HmmConfig.from_dict(self.hmm)
        self.tracker_hidden = tuple(int(h) for h in self.tracker_hidden)
        self.separator_hidden = tuple(int(h) for h in self.separator_hidden)
        if self.fuser_hidden is not None:
            self.fuser_hidden = tuple(int(h) for h in self.fuser_hidden)
        if self.epochs < 1 or self.runs < 1:
            raise ConfigError("epochs and runs must be positive")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")

    def optimizer_kwargs(self):
        return {"lr": self.lr, "k": self.lookahead_k, "alpha": self.lookahead_alpha,
                "patience": self.patience, "factor": self.lr_factor}

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["feature"] = self.feature.to_dict()
        d["hmm"] = self.hmm.to_dict()
        for k in ("tracker_hidden", "separator_hidden", "fuser_hidden"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                return cls.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read run config {path}: {e}") from e

    def with_overrides(self, **overrides):
        """Copy with the given (non-None) fields replaced."""
        d = self.to_dict()
        for k, v in overrides.items():
            if v is None:
                continue
            if k in ("feature", "hmm") and isinstance(v, dict):
                d[k] = {**d[k], **v}
            else:
                d[k] = v
        return RunConfig.from_dict(d)


# training ---------------------------------------------------------------------

def needs_stems(variant):
    return variant != "baseline"


def split_train_val(items, val_fraction):
    """Deterministic split: the last ``ceil(fraction * n)`` items validate."""
    n_val = max(1, int(np.ceil(val_fraction * len(items))))
    if n_val >= len(items):
        raise DataError("corpus too small for a train / validation split")
    return items[:-n_val], items[-n_val:]


def load_training_data(config):
    if config.corpus is None:
        raise ConfigError("no training corpus given")
    stems = needs_stems(config.variant)
    items = load_corpus(config.corpus, config.feature, require_stems=stems)
    if config.val_corpus:
        return items, load_corpus(config.val_corpus, config.feature, require_stems=stems)
    return split_train_val(items, config.val_fraction)


def bundle_extra(config):
    return {"feature_config": config.feature.to_dict(), "hmm_config": config.hmm.to_dict()}


def train_model(config, train_items, val_items, seed, on_epoch=None):
    """Initialise and fit one model; returns ``(params, history)``."""
    input_dim = train_items[0].mix.dim
    params = E.make_ensemble(config.variant, input_dim, config.tracker_hidden,
                             config.separator_hidden, config.fuser_hidden, seed)
    history = E.fit(params, train_items, val_items, config.epochs, seed=seed,
                    optimizer_kwargs=config.optimizer_kwargs(),
                    keep_best=config.keep_best, on_epoch=on_epoch)
    return params, history


def write_history(history, path):
    keys = list(history[0]) if history else ["epoch"]
    with open(path, "w") as f:
        f.write("\t".join(keys) + "\n")
        for row in history:
            f.write("\t".join(str(row[k]) if k == "epoch" else repr(float(row[k]))
                              for k in keys) + "\n")


def read_history(path):
    with open(path) as f:
        keys = f.readline().rstrip("\n").split("\t")
        return [{k: (int(v) if k == "epoch" else float(v))
                 for k, v in zip(keys, line.rstrip("\n").split("\t"))} for line in f]


def run_seeds(config):
    return [config.seed + i for i in range(config.runs)]


def train(config, train_items=None, val_items=None):
    """
    Train ``config.runs`` models with seeds ``seed, seed + 1, ...`` and
    write bundle, training log and run config to ``<out>/run<i>``.

    Returns the list of run directories.

    """
    if config.out is None:
        raise ConfigError("no output directory given")
    if train_items is None:
        train_items, val_items = load_training_data(config)
    if needs_stems(config.variant):
        missing = [it.id for it in list(train_items) + list(val_items) if it.stems is None]
        if missing:
            raise DataError(f"variant {config.variant} needs stems; missing for "
                            + ", ".join(missing[:5]))
    dirs = []
    for i, seed in enumerate(run_seeds(config)):
        run_dir = os.path.join(config.out, f"run{i}")
        log.info("training %s run %d (seed %d)", config.variant, i, seed)
        params, history = train_model(config, train_items, val_items, seed)
        E.save_bundle(params, run_dir, bundle_extra(config))
        write_history(history, os.path.join(run_dir, TRAIN_LOG))
        config.with_overrides(seed=seed, runs=1).save(os.path.join(run_dir, RUN_CONFIG))
        dirs.append(run_dir)
    return dirs


# tracking -----------------------------------------------------------------------

@dataclass
class Model:
    """A loaded bundle with its feature and decoder settings."""

    params: E.EnsembleParams
    feature: FeatureConfig
    hmm: HmmConfig

    @classmethod
    def load(cls, path):
        params, meta = E.load_bundle(path)
        feature = FeatureConfig.from_dict(json.loads(meta["feature_config"])) \
            if "feature_config" in meta else FeatureConfig()
        hmm = HmmConfig.from_dict(json.loads(meta["hmm_config"])) \
            if "hmm_config" in meta else HmmConfig()
        return cls(params, feature, hmm)


def song_activations(model, mix_feat, stems=None):
    """``{head: ActivationMatrix}`` for every head of the model's variant."""
    out = E.ensemble_forward(mix_feat, model.params, stems)
    return {h: E.head_activation(out, h, model.params.variant) for h in model.params.heads()}


def audio_features(model, audio_path):
    """Mixture feature plus external stem features where the variant needs them."""
    mix_audio = load_wav(audio_path, model.feature.sample_rate)
    mix = extract_features(mix_audio, model.feature)
    stems = None
    if E.uses_external_stems(model.params.variant):
        d_path, n_path = stem_paths(audio_path)
        for p in (d_path, n_path):
            if not os.path.exists(p):
                raise DataError(f"variant {model.params.variant} needs stem file {p}")
        stems = reference_stem_features(load_wav(d_path, model.feature.sample_rate),
                                        load_wav(n_path, model.feature.sample_rate),
                                        model.feature, len(mix_audio))
    return mix, stems


def check_head(model, head):
    if head not in model.params.heads():
        raise ConfigError(f"head {head!r} not available for variant {model.params.variant}")


def track_file(model, audio_path, head="fuser", out_dir=None, dump_activations=False,
               decoder=None):
    """
    Track one audio file and write ``<id>.beats`` (plus activation CSVs).

    Returns the decoded :class:`BeatSequence`.

    """
    check_head(model, head)
    decoder = decoder or Decoder(model.hmm)
    mix, stems = audio_features(model, audio_path)
    acts = song_activations(model, mix, stems)
    beats = decoder(acts[head])
    song = os.path.splitext(os.path.basename(audio_path))[0]
    out_dir = out_dir or os.path.dirname(os.path.abspath(audio_path))
    os.makedirs(out_dir, exist_ok=True)
    write_beats(os.path.join(out_dir, song + ".beats"), beats)
    if dump_activations:
        for h, act in acts.items():
            if h != "bagging":
                write_activations(os.path.join(out_dir, f"{song}.{h}{ACT_SUFFIX}"),
                                  act.data, act.frame_rate)
    return beats


def track_items(params, items, head="fuser", hmm_config=None):
    """Decode in-memory items; returns ``{id: BeatSequence}``."""
    decoder = Decoder(hmm_config)
    out = {}
    for it in items:
        stems = it.stems if E.uses_external_stems(params.variant) else None
        res = E.ensemble_forward(it.mix, params, stems)
        out[it.id] = decoder(E.head_activation(res, head, params.variant))
    return out


def mixture_files(paths):
    """Expand directories to their mixture ``.wav`` files (stems excluded)."""
    out = []
    for p in paths:
        if os.path.isdir(p):
            out += [f for f in sorted(glob.glob(os.path.join(p, "*.wav")))
                    if not f.endswith((".drum.wav", ".nodrum.wav"))]
        else:
            out.append(p)
    return out


# evaluation ---------------------------------------------------------------------

def beat_files(directory):
    paths = sorted(glob.glob(os.path.join(directory, "*.beats")))
    return {os.path.basename(p)[:-len(".beats")]: p for p in paths}


def matched_ids(est, ref, what="estimates"):
    ids = sorted(set(est) & set(ref))
    extra = sorted(set(est) ^ set(ref))
    if extra:
        warnings.warn(f"skipping {len(extra)} unmatched {what}: {', '.join(extra[:5])}")
        log.warning("unmatched ids skipped: %s", ", ".join(extra))
    return ids


def evaluate_dirs(est_dir, ref_dir):
    """Per-song report of the ``.beats`` files in `est_dir` against `ref_dir`."""
    est, ref = beat_files(est_dir), beat_files(ref_dir)
    ids = matched_ids(est, ref)
    if not ids:
        raise DataError(f"no common song ids between {est_dir} and {ref_dir}")
    report = ev.EvalReport()
    for sid in ids:
        report.add(sid, ev.evaluate_song(BeatSequence.from_array(read_beats(est[sid])),
                                         BeatSequence.from_array(read_beats(ref[sid]))))
    return report


def evaluate_items(beats, items):
    report = ev.EvalReport()
    for it in items:
        report.add(it.id, ev.evaluate_song(beats[it.id], it.beats))
    return report


def song_subsets(ids, manifest=None):
    """``{set name: ids}``: all songs plus drum-less / drummed splits if known."""
    sets = {"all": list(ids)}
    if manifest:
        flags = {r["id"]: r.get("drumless") == "1" for r in manifest}
        sets["drumless"] = [i for i in ids if flags.get(i) is True]
        sets["drummed"] = [i for i in ids if flags.get(i) is False]
    return {k: v for k, v in sets.items() if v}


def significance(base_reports, other_reports, manifest=None):
    """
    Paired one-tailed t-tests (other better than base) on per-song scores
    averaged over runs, for every metric and song subset.

    Returns a list of dicts with set, metric, means, t and p.

    """
    base = ev.average_reports(base_reports)
    other = ev.average_reports(other_reports)
    ids = matched_ids(base.rows, other.rows, "songs")
    rows = []
    for name, subset in song_subsets(ids, manifest).items():
        b = ev.EvalReport({i: base.rows[i] for i in subset})
        o = ev.EvalReport({i: other.rows[i] for i in subset})
        if len(subset) < 2:
            continue
        mb, mo = b.mean(), o.mean()
        for metric, t, p in ev.compare_reports(b, o):
            rows.append({"set": name, "metric": metric, "n": len(subset),
                         "mean_base": mb[metric], "mean_other": mo[metric], "t": t, "p": p})
    return rows


def write_significance(rows, path):
    cols = ("set", "metric", "n", "mean_base", "mean_other", "t", "p")
    with open(path, "w") as f:
        f.write("\t".join(cols) + "\n")
        for r in rows:
            f.write("\t".join(str(r[c]) if c in ("set", "metric", "n") else f"{r[c]:.6f}"
                              for c in cols) + "\n")


# profiles -------------------------------------------------------------------------

def activation_files(directory):
    """``{head: {song id: path}}`` from dumped activation CSVs."""
    out = {}
    for p in sorted(glob.glob(os.path.join(directory, "*" + ACT_SUFFIX))):
        song, head = os.path.basename(p)[:-len(ACT_SUFFIX)].rsplit(".", 1)
        out.setdefault(head, {})[song] = p
    return out


def profiles(act_dir, ref_dir, radius=10, heads=None):
    """
    Averaged activation profiles per head and event kind.

    Returns ``{(head, kind): 3 x (2 radius + 1) array}``.

    """
    files = activation_files(act_dir)
    if heads is not None:
        files = {h: files[h] for h in heads if h in files}
    refs = beat_files(ref_dir)
    out = {}
    for head, songs in files.items():
        ids = sorted(set(songs) & set(refs))
        if not ids:
            continue
        acts = []
        for sid in ids:
            data, rate = read_activations(songs[sid])
            acts.append(ActivationMatrix(data, rate))
        anns = [BeatSequence.from_array(read_beats(refs[sid])) for sid in ids]
        for kind in ("beat", "downbeat"):
            out[(head, kind)] = ev.activation_profile(acts, anns, radius, kind)
    if not out:
        raise DataError(f"no activations in {act_dir} match annotations in {ref_dir}")
    return out


def profile_columns(profs):
    """Column name -> 2r+1 values; the beat (downbeat) row for beat (downbeat) events."""
    cols = {}
    for (head, kind), p in sorted(profs.items()):
        row = 0 if kind == "beat" else 1
        cols[f"{head}_{kind}"] = p[row]
    return cols


def write_profiles(profs, tsv_path, svg_path=None):
    cols = profile_columns(profs)
    length = len(next(iter(cols.values())))
    radius = length // 2
    with open(tsv_path, "w") as f:
        f.write("offset\t" + "\t".join(cols) + "\n")
        for i in range(length):
            f.write(f"{i - radius}\t" + "\t".join(f"{v[i]:.6f}" for v in cols.values()) + "\n")
    if svg_path:
        plot_profiles(cols, svg_path)


def plot_profiles(cols, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    length = len(next(iter(cols.values())))
    offsets = np.arange(length) - length // 2
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2), sharey=True)
    for ax, kind in zip(axes, ("beat", "downbeat")):
        for name, values in cols.items():
            if name.endswith("_" + kind):
                ax.plot(offsets, values, label=name[:-len(kind) - 1])
        ax.set_title(f"{kind} events")
        ax.set_xlabel("frame offset")
        ax.axvline(0, color="0.7", lw=0.8)
    axes[0].set_ylabel("activation")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    # fixed metadata keeps the rendered file reproducible
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# decoder tuning --------------------------------------------------------------------

def tune_decoder(model, items, transition_lambdas, observation_lambdas, head="fuser"):
    """Grid search of the decoder lambdas on validation items."""
    check_head(model, head)
    acts, refs = [], []
    for it in items:
        stems = it.stems if E.uses_external_stems(model.params.variant) else None
        acts.append(song_activations(model, it.mix, stems)[head])
        refs.append(it.beats)
    return tune(acts, refs, model.hmm, transition_lambdas, observation_lambdas)
