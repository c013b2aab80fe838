"""Two-layer LSTM forecaster trained by truncated BPTT with Adam.

Each window feeds ``lookback`` rows of ``[y, x...]`` through two stacked
LSTM layers; a linear head on the last top-layer hidden state predicts the
next ``y``.  Gate rows in each weight matrix are ordered input, forget,
cell candidate, output.  Gradients are derived by hand (no autodiff).
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DivergedLoss, InsufficientData
from ..timeseries import RegionSeries
from .base import Forecaster, clip01


@dataclass(frozen=True)
class LstmConfig:
    hidden: int = 32
    layers: int = 2
    lookback: int = 24
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    forget_bias: float = 1.0
    seed: int = 0


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def init_params(n_in: int, config: LstmConfig) -> dict[str, np.ndarray]:
    """Uniform Xavier weights, zero biases except the forget gate."""
    rng = np.random.default_rng(config.seed)
    H = config.hidden
    params = {}
    fan_in = n_in
    for l in range(config.layers):
        cols = fan_in + H
        bound = np.sqrt(6.0 / (cols + 4 * H))
        params[f"W{l}"] = rng.uniform(-bound, bound, size=(4 * H, cols))
        b = np.zeros(4 * H)
        b[H:2 * H] = config.forget_bias
        params[f"b{l}"] = b
        fan_in = H
    bound = np.sqrt(6.0 / (H + 1))
    params["w_out"] = rng.uniform(-bound, bound, size=H)
    params["b_out"] = np.zeros(1)
    return params


def forward(params: dict, Z: np.ndarray, layers: int, keep: bool = False):
    """Run windows ``Z`` of shape (B, T, n_in); return predictions (B,) and a cache."""
    B, T, _ = Z.shape
    H = params["W0"].shape[0] // 4
    h = [np.zeros((B, H)) for _ in range(layers)]
    c = [np.zeros((B, H)) for _ in range(layers)]
    cache = []
    for t in range(T):
        inp = Z[:, t, :]
        step = []
        for l in range(layers):
            cat = np.concatenate([inp, h[l]], axis=1)
            a = cat @ params[f"W{l}"].T + params[f"b{l}"]
            i = _sigmoid(a[:, :H])
            f = _sigmoid(a[:, H:2 * H])
            g = np.tanh(a[:, 2 * H:3 * H])
            o = _sigmoid(a[:, 3 * H:])
            c_prev = c[l]
            c[l] = f * c_prev + i * g
            tc = np.tanh(c[l])
            h[l] = o * tc
            if keep:
                step.append((cat, i, f, g, o, c_prev, tc))
            inp = h[l]
        if keep:
            cache.append(step)
    pred = h[-1] @ params["w_out"] + params["b_out"][0]
    return pred, (cache, h[-1])


def loss_and_grads(params: dict, Z: np.ndarray, target: np.ndarray, layers: int):
    """Mean squared error and its exact gradient by backpropagation through time."""
    B, T, n_in = Z.shape
    H = params["W0"].shape[0] // 4
    pred, (cache, h_top) = forward(params, Z, layers, keep=True)
    err = pred - target
    loss = float(np.mean(err ** 2))
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    d_pred = 2.0 * err / B
    grads["w_out"] = h_top.T @ d_pred
    grads["b_out"] = np.array([d_pred.sum()])

    dh_next = [np.zeros((B, H)) for _ in range(layers)]
    dc_next = [np.zeros((B, H)) for _ in range(layers)]
    dh_next[-1] = dh_next[-1] + np.outer(d_pred, params["w_out"])
    for t in range(T - 1, -1, -1):
        d_from_above = None
        for l in range(layers - 1, -1, -1):
            cat, i, f, g, o, c_prev, tc = cache[t][l]
            dh = dh_next[l] if d_from_above is None else dh_next[l] + d_from_above
            dc = dc_next[l] + dh * o * (1.0 - tc ** 2)
            da = np.concatenate([dc * g * i * (1.0 - i),
                                 dc * c_prev * f * (1.0 - f),
                                 dc * i * (1.0 - g ** 2),
                                 dh * tc * o * (1.0 - o)], axis=1)
            W = params[f"W{l}"]
            grads[f"W{l}"] += da.T @ cat
            grads[f"b{l}"] += da.sum(axis=0)
            d_cat = da @ W
            n_inp = cat.shape[1] - H
            d_from_above = d_cat[:, :n_inp]
            dh_next[l] = d_cat[:, n_inp:]
            dc_next[l] = dc * f
    return loss, grads


class Adam:
    """Adam optimiser state over a dict of parameter arrays."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count = 0

    def step(self, params: dict, grads: dict) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.step_count
        corr2 = 1.0 - b2 ** self.step_count
        for k in params:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            m_hat = self.m[k] / corr1
            v_hat = self.v[k] / corr2
            params[k] = params[k] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_windows(y: np.ndarray, x: np.ndarray, lookback: int) -> tuple[np.ndarray, np.ndarray]:
    """Windows of ``[y, x]`` rows ending at each origin, targets one hour later."""
    Z = np.column_stack([y, x])
    n = len(y) - lookback
    idx = np.arange(lookback)[None, :] + np.arange(n)[:, None]
    return Z[idx], y[lookback:]


class LstmModel(Forecaster):
    kind = "lstm"

    def __init__(self, config: LstmConfig = LstmConfig(), params=None, adam: Adam | None = None,
                 epochs_trained: int = 0, loss_history=()):
        self.config = config
        self.params = params
        self.adam = adam
        self.epochs_trained = epochs_trained
        self.loss_history = list(loss_history)

    @property
    def lookback(self) -> int:
        return self.config.lookback

    def fit(self, train: RegionSeries) -> "LstmModel":
        fitted = fit_lstm(train, self.config)
        self.__dict__.update(fitted.__dict__)
        return self

    def predict_windows(self, Z: np.ndarray) -> np.ndarray:
        pred, _ = forward(self.params, Z, self.config.layers)
        return pred

    def predict_one_step(self, y_hist, x_hist) -> float:
        T = self.config.lookback
        Z = np.column_stack([y_hist[-T:], x_hist[-T:]])[None]
        pred, _ = forward(self.params, Z, self.config.layers)
        return clip01(pred[0])

    def to_dict(self) -> dict:
        adam = self.adam
        return {
            "config": asdict(self.config),
            "params": {k: v.tolist() for k, v in self.params.items()},
            "adam": None if adam is None else {
                "step_count": adam.step_count,
                "m": {k: v.tolist() for k, v in adam.m.items()},
                "v": {k: v.tolist() for k, v in adam.v.items()},
            },
            "epochs_trained": self.epochs_trained,
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_dict(cls, d) -> "LstmModel":
        config = LstmConfig(**d["config"])
        params = {k: np.asarray(v, dtype=float) for k, v in d["params"].items()}
        adam = None
        if d.get("adam") is not None:
            adam = Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
            adam.step_count = d["adam"]["step_count"]
            adam.m = {k: np.asarray(v, dtype=float) for k, v in d["adam"]["m"].items()}
            adam.v = {k: np.asarray(v, dtype=float) for k, v in d["adam"]["v"].items()}
        return cls(config, params, adam, d["epochs_trained"], d["loss_history"])


def _train_epochs(model: LstmModel, Z: np.ndarray, target: np.ndarray, epochs: int) -> None:
    cfg = model.config
    # shuffling stream depends on how many epochs the model has seen, so a
    # warm-started run continues rather than repeats the original order
    rng = np.random.default_rng([cfg.seed, 1, model.epochs_trained])
    for _ in range(epochs):
        order = rng.permutation(len(target))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(model.params, Z[b], target[b], cfg.layers)
            if not np.isfinite(loss):
                raise DivergedLoss(f"LSTM loss became {loss} at epoch {model.epochs_trained}")
            model.adam.step(model.params, grads)
            total += loss * len(b)
        model.epochs_trained += 1
        model.loss_history.append(total / len(target))


def fit_lstm(train: RegionSeries, config: LstmConfig = LstmConfig()) -> LstmModel:
    if len(train) <= config.lookback + 1:
        raise InsufficientData(f"LSTM needs more than {config.lookback + 1} samples, "
                               f"got {len(train)}")
    Z, target = make_windows(train.y, train.x, config.lookback)
    params = init_params(Z.shape[2], config)
    adam = Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    model = LstmModel(config, params, adam)
    _train_epochs(model, Z, target, config.epochs)
    return model


def fine_tune_lstm(model: LstmModel, train: RegionSeries, epochs: int = 5) -> LstmModel:
    """Copy ``model`` and continue training it on ``train`` for ``epochs`` epochs."""
    if len(train) <= model.config.lookback + 1:
        raise InsufficientData("fine-tune slice shorter than the LSTM lookback")
    tuned = copy.deepcopy(model)
    if tuned.adam is None:
        c = tuned.config
        tuned.adam = Adam(tuned.params, c.learning_rate, c.beta1, c.beta2, c.adam_eps)
    Z, target = make_windows(train.y, train.x, tuned.config.lookback)
    _train_epochs(tuned, Z, target, epochs)
    return tuned
