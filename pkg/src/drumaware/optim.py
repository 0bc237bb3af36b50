"""
Lookahead-wrapped Adam with reduce-on-plateau learning-rate decay.

One :class:`LookaheadAdam` instance drives one module; parameters are held
as a dict of arrays which are updated in place (these are the "fast"
weights).

"""

import logging

import numpy as np

from .errors import ConfigError, NumericError

log = logging.getLogger(__name__)


class LookaheadAdam:
    """
    Adam inner optimizer wrapped by Lookahead.

    Parameters
    ----------
    params : dict of numpy arrays
        Fast weights, updated in place by :meth:`step`.
    lr : float
        Initial learning rate.
    betas : tuple
        Adam moment decay rates.
    eps : float
        Adam denominator offset.
    k : int
        Lookahead synchronisation period (inner steps).
    alpha : float
        Lookahead interpolation factor.
    patience : int
        Epochs without validation improvement before decaying the lr.
    factor : float
        Learning-rate divisor applied on plateau.
    threshold : float
        Minimum decrease of the validation loss that counts as improvement.

    """

    def __init__(self, params, lr=1e-2, betas=(0.9, 0.999), eps=1e-8, k=5,
                 alpha=0.5, patience=20, factor=5.0, threshold=1e-6):
        # lr == 0 is accepted and freezes the module
        if lr < 0 or not 0 <= alpha <= 1 or k < 1:
            raise ConfigError("need lr >= 0, 0 <= alpha <= 1 and k >= 1")
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2 = (float(b) for b in betas)
        self.eps = float(eps)
        self.k = int(k)
        self.alpha = float(alpha)
        self.patience = int(patience)
        self.factor = float(factor)
        self.threshold = float(threshold)
        self.m = {n: np.zeros_like(p) for n, p in params.items()}
        self.v = {n: np.zeros_like(p) for n, p in params.items()}
        self.slow = {n: p.copy() for n, p in params.items()}
        self.t = 0
        self.bad_epochs = 0
        self.best = np.inf

    def adam_step(self, grads):
        """One bias-corrected Adam update of the fast weights."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {name}; step rejected")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            self.params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def lookahead_sync(self):
        """``slow += alpha * (fast - slow)``; fast weights reset to slow."""
        for name, p in self.params.items():
            slow = self.slow[name]
            if self.alpha == 1.0:
                # exact copy keeps k=1, alpha=1 bit-identical to plain Adam
                slow[...] = p
            else:
                slow += self.alpha * (p - slow)
            p[...] = slow

    def step(self, grads):
        """Adam step followed by a Lookahead sync every `k` steps."""
        self.adam_step(grads)
        if self.t % self.k == 0:
            self.lookahead_sync()

    def lr_on_plateau(self, val_loss):
        """Record one epoch's validation loss; returns the (possibly new) lr."""
        if val_loss < self.best - self.threshold:
            self.best = float(val_loss)
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr /= self.factor
                self.bad_epochs = 0
                log.info("reducing learning rate to %g", self.lr)
        return self.lr

    # checkpointing --------------------------------------------------------

    def state_dict(self):
        out = {"scalars": np.array([self.lr, self.t, self.bad_epochs, self.best])}
        for name in self.params:
            out[f"m/{name}"] = self.m[name]
            out[f"v/{name}"] = self.v[name]
            out[f"slow/{name}"] = self.slow[name]
        return out

    def load_state_dict(self, state):
        lr, t, bad, best = np.asarray(state["scalars"], dtype=np.float64)
        self.lr, self.t, self.bad_epochs, self.best = float(lr), int(t), int(bad), float(best)
        for name in self.params:
            self.m[name][...] = state[f"m/{name}"]
            self.v[name][...] = state[f"v/{name}"]
            self.slow[name][...] = state[f"slow/{name}"]


# functional aliases matching the operation names used in the docs

def adam_step(state, grads):
    state.adam_step(grads)
    return state.params


def lookahead_sync(state):
    state.lookahead_sync()
    return state.slow, state.params


def lr_on_plateau(state, val_loss):
    return state.lr_on_plateau(val_loss)
