"""Shallow feed-forward and recurrent meta models, trained with Adam.

Both networks implement their forward and backward passes by hand so the
analytic gradients can be checked against finite differences.  Training is
mini-batch stochastic gradient descent (Adam steps) with early stopping on
the validation loss.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .base import ModelSpec, TrainedModel, spec_metadata


def _bce_with_logits(raw: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def _loss_and_draw(task: str, raw: np.ndarray, y: np.ndarray):
    n = len(y)
    if task == "classification":
        return _bce_with_logits(raw, y), (expit(raw) - y) / n
    diff = raw - y
    return float(np.mean(diff**2)), 2.0 * diff / n


class _Adam:
    def __init__(self, params: dict, lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for key, grad in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * grad**2
            m_hat = self.m[key] / correction1
            v_hat = self.v[key] / correction2
            params[key] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _FeedForwardCore:
    """One rectifier hidden layer with a scalar output head."""

    def __init__(self, params: dict, task: str):
        self.params = params
        self.task = task

    @staticmethod
    def init_params(n_features: int, hidden: int, rng: np.random.Generator) -> dict:
        return {
            "w1": rng.standard_normal((n_features, hidden)) * np.sqrt(2.0 / n_features),
            "b1": np.zeros(hidden),
            "w2": rng.standard_normal(hidden) * np.sqrt(1.0 / hidden),
            "b2": np.zeros(1),
        }

    def raw_scores(self, X: np.ndarray, mask=None) -> np.ndarray:
        pre = X @ self.params["w1"] + self.params["b1"]
        return np.maximum(pre, 0.0) @ self.params["w2"] + self.params["b2"][0]

    def loss(self, X, y, mask=None) -> float:
        loss, _ = _loss_and_draw(self.task, self.raw_scores(X), y)
        return loss

    def loss_and_grad(self, X, y, mask=None):
        pre = X @ self.params["w1"] + self.params["b1"]
        act = np.maximum(pre, 0.0)
        raw = act @ self.params["w2"] + self.params["b2"][0]
        loss, draw = _loss_and_draw(self.task, raw, y)
        d_act = np.outer(draw, self.params["w2"])
        d_pre = d_act * (pre > 0)
        grads = {
            "w1": X.T @ d_pre,
            "b1": d_pre.sum(axis=0),
            "w2": act.T @ draw,
            "b2": np.array([draw.sum()]),
        }
        return loss, grads


class _RecurrentCore:
    """Single LSTM layer unrolled oldest-first with a scalar output head.

    Steps with mask 0 are skipped: hidden and cell state pass through
    unchanged, and no gate gradients accrue for them.
    """

    def __init__(self, params: dict, task: str, hidden: int):
        self.params = params
        self.task = task
        self.hidden = hidden

    @staticmethod
    def init_params(n_features: int, hidden: int, rng: np.random.Generator) -> dict:
        params = {
            "wx": rng.standard_normal((n_features, 4 * hidden))
            * np.sqrt(1.0 / n_features),
            "wh": rng.standard_normal((hidden, 4 * hidden)) * np.sqrt(1.0 / hidden),
            "b": np.zeros(4 * hidden),
            "w_out": rng.standard_normal(hidden) * np.sqrt(1.0 / hidden),
            "b_out": np.zeros(1),
        }
        params["b"][hidden : 2 * hidden] = 1.0  # forget gate bias
        return params

    def _forward(self, X: np.ndarray, mask: np.ndarray):
        n, steps, _ = X.shape
        h = np.zeros((n, self.hidden))
        c = np.zeros((n, self.hidden))
        caches = []
        for s in range(steps):
            x_s = X[:, s, :]
            m = mask[:, s][:, None]
            z = x_s @ self.params["wx"] + h @ self.params["wh"] + self.params["b"]
            i = expit(z[:, : self.hidden])
            f = expit(z[:, self.hidden : 2 * self.hidden])
            g = np.tanh(z[:, 2 * self.hidden : 3 * self.hidden])
            o = expit(z[:, 3 * self.hidden :])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            caches.append((x_s, h, c, i, f, g, o, tanh_c, m))
            c = m * c_new + (1.0 - m) * c
            h = m * h_new + (1.0 - m) * h
        raw = h @ self.params["w_out"] + self.params["b_out"][0]
        return raw, h, caches

    def raw_scores(self, X: np.ndarray, mask: np.ndarray) -> np.ndarray:
        raw, _, _ = self._forward(X, mask)
        return raw

    def loss(self, X, y, mask) -> float:
        loss, _ = _loss_and_draw(self.task, self.raw_scores(X, mask), y)
        return loss

    def loss_and_grad(self, X, y, mask):
        raw, h_final, caches = self._forward(X, mask)
        loss, draw = _loss_and_draw(self.task, raw, y)
        grads = {key: np.zeros_like(val) for key, val in self.params.items()}
        grads["w_out"] = h_final.T @ draw
        grads["b_out"] = np.array([draw.sum()])
        dh = np.outer(draw, self.params["w_out"])
        dc = np.zeros_like(dh)
        for x_s, h_prev, c_prev, i, f, g, o, tanh_c, m in reversed(caches):
            dh_new = dh * m
            dc_new = dc * m + dh_new * o * (1.0 - tanh_c**2)
            do = dh_new * tanh_c
            df = dc_new * c_prev
            di = dc_new * g
            dg = dc_new * i
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            grads["wx"] += x_s.T @ dz
            grads["wh"] += h_prev.T @ dz
            grads["b"] += dz.sum(axis=0)
            dh = dz @ self.params["wh"].T + dh * (1.0 - m)
            dc = dc_new * f + dc * (1.0 - m)
        return loss, grads


def _train_loop(
    core, train_inputs, y, val_inputs, y_val, spec: ModelSpec, rng: np.random.Generator
) -> dict:
    """Mini-batch Adam with best-validation early stopping; returns metadata."""
    n = len(y)
    optimizer = _Adam(core.params, spec.learning_rate)
    best_params = {k: v.copy() for k, v in core.params.items()}
    best_loss = core.loss(val_inputs[0], y_val, *val_inputs[1:])
    best_epoch = 0
    since_best = 0
    epoch = 0
    for epoch in range(1, spec.max_epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            idx = perm[start : start + spec.batch_size]
            batch = [inp[idx] for inp in train_inputs]
            loss, grads = core.loss_and_grad(batch[0], y[idx], *batch[1:])
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss {loss} at epoch {epoch} "
                    f"(family with {len(core.params)} parameter tensors)"
                )
            optimizer.step(core.params, grads)
        val_loss = core.loss(val_inputs[0], y_val, *val_inputs[1:])
        if not np.isfinite(val_loss):
            raise RuntimeError(f"non-finite validation loss at epoch {epoch}")
        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in core.params.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= spec.patience:
                break
    core.params.update(best_params)
    return {
        "epochs_trained": epoch,
        "best_epoch": best_epoch,
        "val_loss": best_loss,
    }


class ShallowNetModel(TrainedModel):
    family = "shallow_nn"

    def __init__(self, task, params, metadata):
        super().__init__(task, metadata)
        self.core = _FeedForwardCore(params, task)

    @property
    def params(self):
        return self.core.params

    def predict(self, features, mask=None) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        self._check_features(features, (self.params["w1"].shape[0],))
        return self._finalize(self.core.raw_scores(features))

    def params_dict(self) -> dict:
        return {k: v.tolist() for k, v in self.params.items()}


class RecurrentNetModel(TrainedModel):
    family = "shallow_lstm"

    def __init__(self, task, params, hidden, metadata):
        super().__init__(task, metadata)
        self.hidden = hidden
        self.core = _RecurrentCore(params, task, hidden)

    @property
    def params(self):
        return self.core.params

    def predict(self, features, mask=None) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 3:
            raise ValueError("recurrent model expects (n, steps, features) input")
        self._check_features(
            features, (features.shape[1], self.params["wx"].shape[0])
        )
        if mask is None:
            mask = np.ones(features.shape[:2])
        return self._finalize(self.core.raw_scores(features, np.asarray(mask, float)))

    def params_dict(self) -> dict:
        return {
            "hidden": self.hidden,
            **{k: v.tolist() for k, v in self.params.items()},
        }


def train_nn(train, val, spec: ModelSpec, initial_params: dict | None = None):
    X, y = train
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    X_val, y_val = val
    rng = np.random.default_rng(spec.seed)
    params = initial_params or _FeedForwardCore.init_params(
        X.shape[1], spec.hidden_units, rng
    )
    core = _FeedForwardCore(params, spec.task)
    meta = _train_loop(
        core,
        (X,),
        y,
        (np.asarray(X_val, dtype=np.float64),),
        np.asarray(y_val, dtype=np.float64),
        spec,
        rng,
    )
    return ShallowNetModel(spec.task, core.params, spec_metadata(spec, meta))


def train_lstm(train, val, spec: ModelSpec, initial_params: dict | None = None):
    X, mask, y = train
    X = np.asarray(X, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    X_val, mask_val, y_val = val
    rng = np.random.default_rng(spec.seed)
    params = initial_params or _RecurrentCore.init_params(
        X.shape[2], spec.hidden_units, rng
    )
    core = _RecurrentCore(params, spec.task, spec.hidden_units)
    meta = _train_loop(
        core,
        (X, mask),
        y,
        (np.asarray(X_val, dtype=np.float64), np.asarray(mask_val, dtype=np.float64)),
        np.asarray(y_val, dtype=np.float64),
        spec,
        rng,
    )
    return RecurrentNetModel(
        spec.task, core.params, spec.hidden_units, spec_metadata(spec, meta)
    )


def load_nn(doc: dict) -> ShallowNetModel:
    params = {k: np.asarray(v, dtype=np.float64) for k, v in doc["parameters"].items()}
    return ShallowNetModel(doc["task"], params, doc["metadata"])


def load_lstm(doc: dict) -> RecurrentNetModel:
    raw = dict(doc["parameters"])
    hidden = int(raw.pop("hidden"))
    params = {k: np.asarray(v, dtype=np.float64) for k, v in raw.items()}
    return RecurrentNetModel(doc["task"], params, hidden, doc["metadata"])
