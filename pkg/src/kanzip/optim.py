"""AdamW with parameter groups, cosine LR decay, and early stopping."""
import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError


@dataclass
class ParamGroup:
    names: list
    lr: float
    weight_decay: float = 0.0
    cosine_epochs: int = 0  # anneal lr to 0.1x over this many epochs; 0 = constant


class AdamW:
    """Decoupled weight decay; beta1=0.9, beta2=0.999, eps=1e-8."""

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, params, groups):
        self.params = params
        self.groups = groups
        self.t = 0
        self.epoch = 0
        self.m = {n: np.zeros_like(params[n]) for g in groups for n in g.names}
        self.v = {n: np.zeros_like(params[n]) for g in groups for n in g.names}

    def set_epoch(self, epoch):
        self.epoch = epoch

    def _lr(self, group):
        if group.cosine_epochs <= 0:
            return group.lr
        frac = min(self.epoch / group.cosine_epochs, 1.0)
        return group.lr * (0.1 + 0.9 * 0.5 * (1.0 + math.cos(math.pi * frac)))

    def step(self, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for g in self.groups:
            lr = self._lr(g)
            for name in g.names:
                grad = grads[name]
                if not np.all(np.isfinite(grad)):
                    raise NumericError(f"non-finite gradient for parameter {name!r}")
                p = self.params[name]
                m = self.m[name]
                v = self.v[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad * grad
                m_hat = m / bc1
                v_hat = v / bc2
                p -= lr * (m_hat / (np.sqrt(v_hat) + self.eps) + g.weight_decay * p)


@dataclass
class EarlyStopping:
    """Keeps the best-metric snapshot; stops when patience is exceeded.

    A tie with the current best counts as non-improvement.
    """

    patience: int
    best_metric: float = -math.inf
    best_params: dict = field(default=None, repr=False)
    epochs_since_improve: int = 0

    def check(self, metric, params):
        """Returns True to continue, False to stop."""
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_params = copy.deepcopy(params)
            self.epochs_since_improve = 0
            return True
        self.epochs_since_improve += 1
        return self.epochs_since_improve <= self.patience

    def restore(self, params):
        if self.best_params is not None:
            for k, v in self.best_params.items():
                params[k] = v.copy()
