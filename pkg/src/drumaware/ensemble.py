"""
Drum-aware ensemble: separator -> three trackers -> fuser.

Variants
--------
baseline
    A single tracker on the mixture feature.
da1 / da2
    Trainable feature separator, mixture/drum/non-drum trackers and a BLSTM
    fuser. The da1 fuser sees the three activation matrices (9 rows); the
    da2 fuser additionally sees the last-layer hidden states of the three
    trackers (ordered mix, drum, nodrum).
sda1 / sda2
    As da1 / da2 but with stem features computed from external stem audio
    instead of the separator.

Every module is trained with its own loss: gradients never cross module
boundaries (separated features and tracker outputs are treated as
constants downstream).

"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import as_float64
from .errors import ConfigError, DataError, NumericError
from .optim import LookaheadAdam
from .separation import (StemFeatures, make_separator, separate_features,
                         separator_backward, separation_loss)
from .sequences import ActivationMatrix

log = logging.getLogger(__name__)

VARIANTS = ("baseline", "da1", "da2", "sda1", "sda2")
TRACKERS = ("mix", "drum", "nodrum")
HEADS = ("fuser", "mix", "drum", "nodrum", "bagging")
BUNDLE_VERSION = 1
HIDDEN_ORDER = "mix,drum,nodrum"

DA1_FUSER_UNITS = 10
DA2_FUSER_UNITS = 25


def uses_separator(variant):
    return variant in ("da1", "da2")


def uses_external_stems(variant):
    return variant in ("sda1", "sda2")


def fuser_stage(variant):
    """1 for activation-only fusion, 2 for two-stage fusion, None without a fuser."""
    return {"da1": 1, "sda1": 1, "da2": 2, "sda2": 2}.get(variant)


def fuser_input_dim(variant, tracker_hidden):
    stage = fuser_stage(variant)
    if stage is None:
        raise ConfigError(f"variant {variant!r} has no fuser")
    return 9 if stage == 1 else 9 + 3 * 2 * int(tracker_hidden)


@dataclass
class EnsembleParams:
    """All learnable modules of one model."""

    variant: str
    trackers: dict
    separator: nn.BlstmStack = None
    fuser: nn.BlstmStack = None
    seed: int = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")

    def modules(self):
        """Ordered ``{module name: stack}`` of the present modules."""
        out = {}
        if self.separator is not None:
            out["separator"] = self.separator
        for name in TRACKERS:
            if name in self.trackers:
                out[f"tracker_{name}"] = self.trackers[name]
        if self.fuser is not None:
            out["fuser"] = self.fuser
        return out

    def heads(self):
        if self.variant == "baseline":
            return ("mix",)
        return HEADS

    def copy(self):
        return EnsembleParams(
            self.variant, {k: v.copy() for k, v in self.trackers.items()},
            None if self.separator is None else self.separator.copy(),
            None if self.fuser is None else self.fuser.copy(), self.seed)


def make_ensemble(variant, input_dim, tracker_hidden=(25, 25, 25),
                  separator_hidden=(64, 64, 64), fuser_hidden=None, seed=0):
    """
    Freshly initialised parameters for `variant`.

    `fuser_hidden` defaults to three layers of 10 units (stage-1 fusion) or
    25 units (stage-2 fusion). Module seeds are derived from `seed`.

    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(5)]
    tracker_hidden = list(tracker_hidden)
    names = ("mix",) if variant == "baseline" else TRACKERS
    trackers = {n: nn.BlstmStack(input_dim, tracker_hidden, 3, "softmax", seeds[1 + i])
                for i, n in enumerate(names)}
    separator = fuser = None
    if uses_separator(variant):
        separator = make_separator(input_dim, separator_hidden, seeds[0])
    stage = fuser_stage(variant)
    if stage is not None:
        if fuser_hidden is None:
            units = DA1_FUSER_UNITS if stage == 1 else DA2_FUSER_UNITS
            fuser_hidden = [units] * 3
        fuser = nn.BlstmStack(fuser_input_dim(variant, tracker_hidden[-1]),
                              list(fuser_hidden), 3, "softmax", seeds[4])
    return EnsembleParams(variant, trackers, separator, fuser, seed)


@dataclass
class EnsembleOutput:
    """Activations (3 x T) per head and last-layer hidden states (2H x T)."""

    acts: dict
    last_hiddens: dict
    frame_rate: float
    stems: StemFeatures = None
    forwards: dict = field(default_factory=dict, repr=False)
    fuser_in: np.ndarray = field(default=None, repr=False)

    @property
    def mix_act(self):
        return self.acts.get("mix")

    @property
    def drum_act(self):
        return self.acts.get("drum")

    @property
    def nodrum_act(self):
        return self.acts.get("nodrum")

    @property
    def fused_act(self):
        return self.acts.get("fuser")


def bagging_fuse(mix_act, drum_act, nodrum_act):
    """Element-wise mean of three activation matrices."""
    mats = [a.data if isinstance(a, ActivationMatrix) else np.asarray(a, float)
            for a in (mix_act, drum_act, nodrum_act)]
    if not mats[0].shape == mats[1].shape == mats[2].shape:
        raise ConfigError("activation shapes differ")
    rate = getattr(mix_act, "frame_rate", 100.0)
    return ActivationMatrix((mats[0] + mats[1] + mats[2]) / 3.0, rate)


def fuser_input(output, variant):
    """
    K x T fuser input: the three activation matrices (mix, drum, nodrum),
    followed for stage-2 fusion by the three last-hidden blocks in the same
    order.

    """
    rows = [output.acts[n].data for n in TRACKERS]
    if fuser_stage(variant) == 2:
        rows += [output.last_hiddens[n] for n in TRACKERS]
    return np.vstack(rows)


def ensemble_forward(mix_feat, params, stems=None):
    """
    Forward pass of the whole ensemble over one song.

    Parameters
    ----------
    mix_feat : SpectralFeature
    params : EnsembleParams
    stems : StemFeatures, optional
        Required for SDA variants, ignored otherwise.

    Returns
    -------
    EnsembleOutput

    """
    variant = params.variant
    mix = as_float64(mix_feat)
    forwards = {}
    if uses_external_stems(variant):
        if stems is None:
            raise ConfigError(f"variant {variant} requires external stem features")
        stems = StemFeatures(as_float64(stems.drum), as_float64(stems.nodrum))
    elif params.separator is not None:
        forwards["separator"] = params.separator.forward(mix.data)
        stems = separate_features(mix, params.separator, forwards["separator"])
    else:
        stems = None
    inputs = {"mix": mix}
    if stems is not None:
        inputs.update(drum=stems.drum, nodrum=stems.nodrum)
    acts, hiddens = {}, {}
    for name, tracker in params.trackers.items():
        fwd = tracker.forward(inputs[name].data)
        forwards[f"tracker_{name}"] = fwd
        acts[name] = ActivationMatrix(fwd.output.T, mix.frame_rate)
        hiddens[name] = fwd.last_hidden.T
    out = EnsembleOutput(acts, hiddens, mix.frame_rate, stems, forwards)
    if params.fuser is not None:
        out.fuser_in = fuser_input(out, variant)
        fwd = params.fuser.forward(out.fuser_in.T)
        forwards["fuser"] = fwd
        acts["fuser"] = ActivationMatrix(fwd.output.T, mix.frame_rate)
    return out


def head_activation(output, head, variant):
    """Activation matrix of one head (``fuser``, a tracker name or ``bagging``)."""
    if head not in HEADS:
        raise ConfigError(f"unknown head {head!r}")
    if head == "bagging":
        if not all(n in output.acts for n in TRACKERS):
            raise ConfigError(f"variant {variant} has no bagging head")
        return bagging_fuse(*(output.acts[n] for n in TRACKERS))
    if head not in output.acts:
        raise ConfigError(f"variant {variant} has no {head} head")
    return output.acts[head]


# training -------------------------------------------------------------------

def _ref_stems(item):
    if item.stems is None:
        raise DataError(f"{item.id}: reference stems missing")
    return StemFeatures(as_float64(item.stems.drum), as_float64(item.stems.nodrum))


def module_losses_and_grads(params, item, frozen=(), weights=nn.CLASS_WEIGHTS):
    """
    Per-module losses and detached gradients for one item.

    All gradients are computed from one shared forward pass; modules listed
    in `frozen` get no gradient entry.

    Returns
    -------
    losses : dict
    grads : dict
    output : EnsembleOutput

    """
    variant = params.variant
    needs_ref = uses_separator(variant) or uses_external_stems(variant)
    ref = _ref_stems(item) if needs_ref else None
    out = ensemble_forward(item.mix, params, ref if uses_external_stems(variant) else None)
    losses, grads = {}, {}
    if params.separator is not None:
        mix = as_float64(item.mix)
        loss, g, _ = separator_backward(mix, params.separator, ref, out.forwards["separator"])
        losses["separator"] = loss
        if "separator" not in frozen:
            grads["separator"] = g
    for name, tracker in params.trackers.items():
        key = f"tracker_{name}"
        fwd = out.forwards[key]
        losses[key] = nn.weighted_cross_entropy(fwd.output.T, item.labels, weights)
        if key not in frozen:
            d = nn.cross_entropy_grad(fwd.output, item.labels, weights)
            grads[key] = tracker.backward(fwd, d)
    if params.fuser is not None:
        fwd = out.forwards["fuser"]
        losses["fuser"] = nn.weighted_cross_entropy(fwd.output.T, item.labels, weights)
        if "fuser" not in frozen:
            d = nn.cross_entropy_grad(fwd.output, item.labels, weights)
            grads["fuser"] = params.fuser.backward(fwd, d)
    for name, value in losses.items():
        if not np.isfinite(value):
            raise NumericError(f"{item.id}: non-finite {name} loss")
    return losses, grads, out


def make_optimizers(params, **kwargs):
    """One :class:`LookaheadAdam` per module."""
    return {name: LookaheadAdam(stack.params, **kwargs)
            for name, stack in params.modules().items()}


def train_epoch(params, dataset, optimizers, rng, frozen=()):
    """
    One pass over `dataset` in a random order, one song per update.

    Returns the mean training loss of every module.

    """
    if not dataset:
        raise DataError("empty training set")
    totals = {}
    for idx in rng.permutation(len(dataset)):
        item = dataset[int(idx)]
        try:
            losses, grads, _ = module_losses_and_grads(params, item, frozen)
        except NumericError as e:
            raise NumericError(f"aborting epoch: {e}") from e
        # update order: separator, trackers, fuser
        for name in params.modules():
            if name in grads:
                optimizers[name].step(grads[name])
        for k, v in losses.items():
            totals[k] = totals.get(k, 0.0) + v
    return {k: v / len(dataset) for k, v in totals.items()}


def validate(params, dataset):
    """Mean per-module loss over `dataset` without any parameter update."""
    if not dataset:
        raise DataError("empty validation set")
    totals = {}
    for item in dataset:
        variant = params.variant
        needs_ref = uses_separator(variant) or uses_external_stems(variant)
        ref = _ref_stems(item) if needs_ref else None
        out = ensemble_forward(item.mix, params,
                               ref if uses_external_stems(variant) else None)
        if params.separator is not None:
            totals["separator"] = totals.get("separator", 0.0) + separation_loss(out.stems, ref)
        for name in params.trackers:
            key = f"tracker_{name}"
            totals[key] = totals.get(key, 0.0) + nn.weighted_cross_entropy(
                out.acts[name], item.labels)
        if params.fuser is not None:
            totals["fuser"] = totals.get("fuser", 0.0) + nn.weighted_cross_entropy(
                out.acts["fuser"], item.labels)
    return {k: v / len(dataset) for k, v in totals.items()}


def fit(params, train_set, val_set, epochs, seed=0, optimizer_kwargs=None,
        keep_best=True, on_epoch=None):
    """
    Train all modules concurrently for `epochs` epochs.

    Each module's learning rate follows its own validation loss. With
    `keep_best` every module ends with the parameters of its best validation
    epoch.

    Returns
    -------
    history : list of dict
        Per epoch: training and validation loss and lr of every module.

    """
    rng = np.random.default_rng(seed)
    optimizers = make_optimizers(params, **(optimizer_kwargs or {}))
    modules = params.modules()
    best = {name: (np.inf, None) for name in modules}
    history = []
    for epoch in range(epochs):
        train_losses = train_epoch(params, train_set, optimizers, rng)
        val_losses = validate(params, val_set)
        row = {"epoch": epoch}
        for name in modules:
            row[f"{name}.train"] = train_losses[name]
            row[f"{name}.val"] = val_losses[name]
            row[f"{name}.lr"] = optimizers[name].lr_on_plateau(val_losses[name])
            if keep_best and val_losses[name] < best[name][0]:
                best[name] = (val_losses[name],
                              {k: v.copy() for k, v in modules[name].params.items()})
        history.append(row)
        log.info("epoch %d %s", epoch, " ".join(
            f"{n}={val_losses[n]:.4f}" for n in modules))
        if on_epoch is not None:
            on_epoch(row)
    if keep_best:
        for name, (_, snapshot) in best.items():
            if snapshot is not None:
                for k, v in snapshot.items():
                    modules[name].params[k][...] = v
    return history


# bundles --------------------------------------------------------------------

def save_bundle(params, path, extra=None):
    """
    Write a model bundle directory: ``bundle.manifest`` plus one
    ``<module>.manifest`` / ``<module>.bin`` pair per module.

    `extra` holds additional key/value strings for the top-level manifest
    (e.g. serialized feature and decoder configurations).

    """
    import json

    os.makedirs(path, exist_ok=True)
    modules = params.modules()
    lines = [f"format_version={BUNDLE_VERSION}", f"variant={params.variant}",
             f"modules={','.join(modules)}", f"hidden_order={HIDDEN_ORDER}",
             f"seed={'' if params.seed is None else params.seed}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v if isinstance(v, str) else json.dumps(v, sort_keys=True)}")
    with open(os.path.join(path, "bundle.manifest"), "w") as f:
        f.write("\n".join(lines) + "\n")
    for name, stack in modules.items():
        nn.save_stack(stack, os.path.join(path, name), name)


def load_bundle(path):
    """Inverse of :func:`save_bundle`; returns ``(params, manifest dict)``."""
    manifest_path = os.path.join(path, "bundle.manifest")
    if not os.path.exists(manifest_path):
        raise DataError(f"{path} is not a model bundle")
    meta = nn.read_manifest(manifest_path)
    if int(meta.get("format_version", -1)) != BUNDLE_VERSION:
        raise DataError(f"{path}: unsupported bundle version")
    if meta.get("hidden_order", HIDDEN_ORDER) != HIDDEN_ORDER:
        raise DataError(f"{path}: unexpected hidden-state ordering")
    stacks = {name: nn.load_stack(os.path.join(path, name))
              for name in meta["modules"].split(",") if name}
    trackers = {n: stacks[f"tracker_{n}"] for n in TRACKERS if f"tracker_{n}" in stacks}
    seed = int(meta["seed"]) if meta.get("seed") else None
    params = EnsembleParams(meta["variant"], trackers, stacks.get("separator"),
                            stacks.get("fuser"), seed)
    return params, meta


def save_optimizer_state(optimizers, path):
    """Checkpoint optimizer states as manifest + little-endian float64 payload."""
    os.makedirs(path, exist_ok=True)
    for name, opt in optimizers.items():
        state = opt.state_dict()
        keys = list(state)
        with open(os.path.join(path, f"optim_{name}.manifest"), "w") as f:
            f.write(f"format_version={BUNDLE_VERSION}\n")
            f.write("tensors=" + ",".join(
                f"{k}:{'x'.join(map(str, np.shape(state[k])))}" for k in keys) + "\n")
        np.concatenate([np.ravel(state[k]) for k in keys]).astype("<f8").tofile(
            os.path.join(path, f"optim_{name}.bin"))


def load_optimizer_state(optimizers, path):
    for name, opt in optimizers.items():
        meta = nn.read_manifest(os.path.join(path, f"optim_{name}.manifest"))
        flat = np.fromfile(os.path.join(path, f"optim_{name}.bin"), dtype="<f8")
        state, offset = {}, 0
        for spec in meta["tensors"].split(","):
            key, _, shape = spec.rpartition(":")
            shape = tuple(int(s) for s in shape.split("x") if s)
            size = int(np.prod(shape)) if shape else 1
            state[key] = flat[offset:offset + size].reshape(shape)
            offset += size
        opt.load_state_dict(state)
