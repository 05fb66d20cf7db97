"""Recurrent next-location classifier trained with backpropagation through time.

The default cell is a plain tanh (Elman) recurrence::

    h_t = tanh(W_xh[:, x_t] + W_hh h_{t-1} + b_h)
    p   = softmax(W_hy h_W + b_y)

where ``x_t`` is a location id used as a one-hot column index.  An LSTM cell
with the same interface is available via ``cell="lstm"``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptySet
from .windows import WindowedSet

CELLS = ("elman", "lstm")
CLIP_NORM = 5.0
INIT_SCALE = 0.1


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _param_shapes(cell: str, hidden: int, n_classes: int) -> dict[str, tuple[int, ...]]:
    g = 4 * hidden if cell == "lstm" else hidden
    return {
        "W_xh": (g, n_classes),
        "W_hh": (g, hidden),
        "b_h": (g,),
        "W_hy": (n_classes, hidden),
        "b_y": (n_classes,),
    }


@dataclass
class RnnModel:
    hidden: int
    n_classes: int
    params: dict[str, np.ndarray]
    cell: str = "elman"
    loss_trace: list[float] = field(default_factory=list)

    kind = "rnn"

    @classmethod
    def initialize(cls, hidden: int, n_classes: int, seed: int = 0, cell: str = "elman") -> "RnnModel":
        if cell not in CELLS:
            raise ValueError(f"cell must be one of {CELLS}")
        rng = np.random.default_rng(seed)
        params = {
            name: rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
            for name, shape in _param_shapes(cell, hidden, n_classes).items()
        }
        return cls(hidden, n_classes, params, cell)

    # -- forward -------------------------------------------------------------

    def _run(self, x: np.ndarray):
        """Unroll over the window; returns final hidden state and the tape."""
        x = np.asarray(x, dtype=np.int64)
        if x.ndim == 1:
            x = x[None, :]
        p = self.params
        b, steps = x.shape
        H = self.hidden
        h = np.zeros((b, H))
        c = np.zeros((b, H))
        tape = []
        for t in range(steps):
            z = p["W_xh"][:, x[:, t]].T + h @ p["W_hh"].T + p["b_h"]
            if self.cell == "elman":
                h_new = np.tanh(z)
                tape.append((h, h_new))
            else:
                i = _sigmoid(z[:, :H])
                f = _sigmoid(z[:, H : 2 * H])
                o = _sigmoid(z[:, 2 * H : 3 * H])
                g = np.tanh(z[:, 3 * H :])
                c_new = f * c + i * g
                tc = np.tanh(c_new)
                h_new = o * tc
                tape.append((h, c, i, f, o, g, tc))
                c = c_new
            h = h_new
        return x, h, tape

    def logits(self, x: np.ndarray) -> np.ndarray:
        _, h, _ = self._run(x)
        return h @ self.params["W_hy"].T + self.params["b_y"]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    # -- backward ------------------------------------------------------------

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Mean cross-entropy over the batch and its exact gradients."""
        x, h, tape = self._run(x)
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        p = self.params
        b = len(y)
        z = h @ p["W_hy"].T + p["b_y"]
        z = z - z.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        loss = float(np.mean(logsum - z[np.arange(b), y]))

        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dz = softmax(z)
        dz[np.arange(b), y] -= 1.0
        dz /= b
        grads["W_hy"] = dz.T @ h
        grads["b_y"] = dz.sum(axis=0)
        dh = dz @ p["W_hy"]
        dc = np.zeros_like(dh)
        for t in range(x.shape[1] - 1, -1, -1):
            if self.cell == "elman":
                h_prev, h_t = tape[t]
                da = dh * (1.0 - h_t * h_t)
            else:
                h_prev, c_prev, i, f, o, g, tc = tape[t]
                dc = dc + dh * o * (1.0 - tc * tc)
                da = np.concatenate(
                    [
                        dc * g * i * (1.0 - i),
                        dc * c_prev * f * (1.0 - f),
                        dh * tc * o * (1.0 - o),
                        dc * i * (1.0 - g * g),
                    ],
                    axis=1,
                )
                dc = dc * f
            np.add.at(grads["W_xh"].T, x[:, t], da)
            grads["W_hh"] += da.T @ h_prev
            grads["b_h"] += da.sum(axis=0)
            dh = da @ p["W_hh"]
        return loss, grads

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        z = self.logits(x)
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        z = z - z.max(axis=1, keepdims=True)
        return float(np.mean(np.log(np.exp(z).sum(axis=1)) - z[np.arange(len(y)), y]))

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "kind": "rnn",
            "cell": self.cell,
            "hidden": self.hidden,
            "n_classes": self.n_classes,
            "params": {k: v.tolist() for k, v in sorted(self.params.items())},
            "loss_trace": self.loss_trace,
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RnnModel":
        doc = json.loads(text)
        params = {k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()}
        return cls(doc["hidden"], doc["n_classes"], params, doc["cell"], doc["loss_trace"])


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float = CLIP_NORM) -> float:
    """Scale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train_rnn(
    ws: WindowedSet,
    hidden: int = 32,
    epochs: int = 15,
    lr: float = 0.5,
    seed: int = 0,
    batch_size: int = 32,
    cell: str = "elman",
) -> RnnModel:
    """Mini-batch gradient descent on cross-entropy with norm clipping at 5.

    The returned model carries the mean training loss of every epoch in
    ``loss_trace``.
    """
    if len(ws) == 0:
        raise EmptySet("no training windows")
    model = RnnModel.initialize(hidden, ws.n_classes, seed=seed, cell=cell)
    rng = np.random.default_rng(seed + 1)
    x, y = ws.inputs, ws.labels
    for _ in range(epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for s in range(0, len(y), batch_size):
            idx = order[s : s + batch_size]
            loss, grads = model.loss_and_grads(x[idx], y[idx])
            total += loss * len(idx)
            clip_gradients(grads)
            if lr:
                for k, g in grads.items():
                    model.params[k] -= lr * g
        model.loss_trace.append(total / len(y))
    return model


def rnn_gradient_check(
    model: RnnModel,
    example: tuple,
    epsilon: float = 1e-4,
    n_checks: int = 20,
    seed: int = 0,
) -> float:
    """Largest relative gap between BPTT and central-difference gradients.

    ``example`` is ``(window, label)``.  ``n_checks`` parameter entries are
    sampled uniformly over all parameter arrays.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-6, 1e-3]")
    window, label = example
    x = np.asarray(window, dtype=np.int64)[None, :]
    y = np.asarray([label])
    _, grads = model.loss_and_grads(x, y)
    names = sorted(model.params)
    sizes = np.array([model.params[n].size for n in names])
    rng = np.random.default_rng(seed)
    flat = rng.choice(sizes.sum(), size=min(n_checks, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for f in np.sort(flat):
        j = int(np.searchsorted(offsets, f, side="right") - 1)
        name, pos = names[j], int(f - offsets[j])
        flat_view = model.params[name].flat
        saved = float(flat_view[pos])
        flat_view[pos] = saved + epsilon
        up = model.loss(x, y)
        flat_view[pos] = saved - epsilon
        down = model.loss(x, y)
        flat_view[pos] = saved
        numeric = (up - down) / (2 * epsilon)
        analytic = float(grads[name].reshape(-1)[pos])
        denom = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst
