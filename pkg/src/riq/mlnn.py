"""Multi-level neural classifier.

A single hidden layer of logistic units feeds one output neuron whose
activation is a staircase of shifted sigmoids: on the window
``((lam-1)*c, lam*c]`` it returns ``f(x) + (lam-1)*f(c)``.  Category ``lam``
is encoded as the output at the centre of its window and decoded by nearest
centre.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    DimensionMismatch,
    EmptyCategory,
    EmptyTestSet,
    FormatError,
    NonFiniteLoss,
)
from .features import Normalizer, apply_normalizer, fit_normalizer

CATEGORIES = ("Sky", "Building", "Sand/Rock", "Grass", "Water")
MODEL_MAGIC = "RIQMLNN 1"


@dataclass(frozen=True)
class MlafParams:
    beta: float = 0.5
    c: float = 1.0
    n: int = len(CATEGORIES)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if not self.c > 0:
            raise ValueError("c must be > 0")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n must be an integer >= 2")

    @property
    def upper(self) -> float:
        return self.n * self.c


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 10000
    hidden: int = 32
    rng_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")


@dataclass(frozen=True, eq=False)
class LabeledRegion:
    features: np.ndarray
    category: int  # 1-based


@dataclass(eq=False)
class MlnnModel:
    w_hidden: np.ndarray  # (hidden, inputs)
    b_hidden: np.ndarray  # (hidden,)
    w_out: np.ndarray  # (hidden,)
    b_out: float
    params: MlafParams
    normalizer: Normalizer
    categories: tuple[str, ...] = CATEGORIES
    rng_seed: int = 0
    loss_trace: list[float] = field(default_factory=list)

    @property
    def layer_sizes(self) -> tuple[int, int, int]:
        return (self.w_hidden.shape[1], self.w_hidden.shape[0], 1)

    def copy(self) -> "MlnnModel":
        return MlnnModel(self.w_hidden.copy(), self.b_hidden.copy(), self.w_out.copy(),
                         float(self.b_out), self.params, self.normalizer, self.categories,
                         self.rng_seed, list(self.loss_trace))


# -- activation ------------------------------------------------------------------

def sigmoid(x, beta: float = 1.0):
    return expit(beta * np.asarray(x, dtype=np.float64))


def window_index(x, p: MlafParams):
    """1-based window; window boundaries belong to the lower window."""
    lam = np.ceil(np.asarray(x, dtype=np.float64) / p.c)
    return np.clip(lam, 1, p.n).astype(np.int64)


def mlaf(x, p: MlafParams):
    x = np.asarray(x, dtype=np.float64)
    lam = window_index(x, p)
    return sigmoid(x, p.beta) + (lam - 1) * sigmoid(p.c, p.beta)


def mlaf_grad(x, p: MlafParams):
    # the per-window offset is constant, so only the sigmoid term contributes
    f = sigmoid(x, p.beta)
    return p.beta * f * (1.0 - f)


def level_centers(p: MlafParams) -> np.ndarray:
    lam = np.arange(1, p.n + 1)
    return sigmoid(p.c * (lam - 0.5), p.beta) + (lam - 1) * sigmoid(p.c, p.beta)


# -- network -------------------------------------------------------------------

def _check_inputs(model: MlnnModel, v) -> np.ndarray:
    x = np.asarray(v, dtype=np.float64)
    if x.shape[-1] != model.w_hidden.shape[1]:
        raise DimensionMismatch(f"model expects {model.w_hidden.shape[1]} inputs, got {x.shape[-1]}")
    return x


def _pre_activation(model: MlnnModel, x: np.ndarray):
    hidden = sigmoid(x @ model.w_hidden.T + model.b_hidden)
    u = hidden @ model.w_out + model.b_out
    return hidden, u


def forward(model: MlnnModel, v):
    """Return (output, hidden activations) for one normalised vector or a batch."""
    x = _check_inputs(model, v)
    hidden, u = _pre_activation(model, x)
    return mlaf(np.clip(u, 0.0, model.params.upper), model.params), hidden


def loss_and_gradients(model: MlnnModel, x, targets, straight_through: bool = False):
    """Mean squared error and its gradient with respect to every parameter.

    The clamp on the output pre-activation passes gradient only inside
    ``[0, n*c]``; the jumps between windows are ignored.  With
    ``straight_through`` the clamp is treated as the identity when
    differentiating, so samples pushed outside the range are pulled back.
    """
    x = _check_inputs(model, x)
    targets = np.asarray(targets, dtype=np.float64)
    n = len(x)
    hidden, u = _pre_activation(model, x)
    uc = np.clip(u, 0.0, model.params.upper)
    out = mlaf(uc, model.params)
    err = out - targets
    loss = float(np.mean(err ** 2))

    inside = True if straight_through else (u >= 0.0) & (u <= model.params.upper)
    g_u = (2.0 / n) * err * mlaf_grad(uc, model.params) * inside
    g_w_out = hidden.T @ g_u
    g_b_out = float(g_u.sum())
    g_z = np.outer(g_u, model.w_out) * hidden * (1.0 - hidden)
    g_w_hidden = g_z.T @ x
    g_b_hidden = g_z.sum(axis=0)
    grads = {"w_hidden": g_w_hidden, "b_hidden": g_b_hidden, "w_out": g_w_out, "b_out": g_b_out}
    return loss, grads


def init_model(n_inputs: int, cfg: TrainConfig, p: MlafParams, normalizer: Normalizer,
               categories=CATEGORIES) -> MlnnModel:
    """Uniform(+-1/sqrt(fan_in)) weights and hidden biases.

    The output bias starts at the middle of the clamp range: a pre-activation
    below zero has no gradient, and a small random bias leaves every sample
    there.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    lim_h = 1.0 / math.sqrt(n_inputs)
    lim_o = 1.0 / math.sqrt(cfg.hidden)
    w_hidden = rng.uniform(-lim_h, lim_h, size=(cfg.hidden, n_inputs))
    b_hidden = rng.uniform(-lim_h, lim_h, size=cfg.hidden)
    w_out = rng.uniform(-lim_o, lim_o, size=cfg.hidden)
    b_out = p.upper / 2.0
    return MlnnModel(w_hidden, b_hidden, w_out, b_out, p, normalizer, tuple(categories), cfg.rng_seed)


def train(data, cfg: TrainConfig | None = None, p: MlafParams | None = None,
          normalizer_mode: str = "unit", categories=CATEGORIES) -> MlnnModel:
    """Full-batch gradient descent on raw (unnormalised) labelled feature vectors."""
    cfg = cfg or TrainConfig()
    p = p or MlafParams()
    if len(categories) != p.n:
        raise ValueError(f"{len(categories)} category names for n={p.n}")
    data = list(data)
    labels = np.array([d.category for d in data], dtype=np.int64)
    for lam in range(1, p.n + 1):
        if not np.any(labels == lam):
            raise EmptyCategory(f"no training samples for category {lam} ({categories[lam - 1]})")
    if np.any((labels < 1) | (labels > p.n)):
        raise ValueError("category index out of range")

    raw = np.stack([np.asarray(d.features, dtype=np.float64) for d in data])
    nz = fit_normalizer(raw, normalizer_mode)
    x = apply_normalizer(nz, raw)
    targets = level_centers(p)[labels - 1]

    model = init_model(x.shape[1], cfg, p, nz, categories)
    lr = cfg.learning_rate
    trace = []
    for epoch in range(cfg.epochs):
        loss, g = loss_and_gradients(model, x, targets, straight_through=True)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}; lower the learning rate")
        trace.append(loss)
        model.w_hidden -= lr * g["w_hidden"]
        model.b_hidden -= lr * g["b_hidden"]
        model.w_out -= lr * g["w_out"]
        model.b_out -= lr * g["b_out"]
    final, _ = loss_and_gradients(model, x, targets)
    if not np.isfinite(final):
        raise NonFiniteLoss(f"loss became {final} after the last update")
    trace.append(final)
    model.loss_trace = trace
    return model


def decode(output, p: MlafParams):
    """Nearest level centre, 1-based; ties go to the smaller index."""
    centers = level_centers(p)
    out = np.asarray(output, dtype=np.float64)
    return np.argmin(np.abs(out[..., None] - centers), axis=-1) + 1


def predict_category(model: MlnnModel, v):
    out, _ = forward(model, v)
    lam = decode(out, model.params)
    return int(lam) if np.ndim(lam) == 0 else lam


def normalize(model: MlnnModel, raw):
    return apply_normalizer(model.normalizer, raw)


def classify_raw(model: MlnnModel, raw):
    """Normalise raw feature vectors then return (category indices, decoded outputs)."""
    out, _ = forward(model, normalize(model, raw))
    return decode(out, model.params), out


# -- evaluation ------------------------------------------------------------------

@dataclass
class Evaluation:
    categories: tuple[str, ...]
    precision: list[float | None]
    average: float | None
    confusion: np.ndarray  # rows: true, cols: predicted
    accuracy: float

    def report(self) -> str:
        lines = [f"{'Category':<12}Precision"]
        for name, prec in zip(self.categories, self.precision):
            lines.append(f"{name:<12}{'n/a' if prec is None else f'{100 * prec:.1f}%'}")
        avg = "n/a" if self.average is None else f"{100 * self.average:.1f}%"
        lines.append(f"{'Average':<12}{avg}")
        return "\n".join(lines)


def precision_report(true, pred, categories=CATEGORIES) -> Evaluation:
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.size == 0:
        raise EmptyTestSet("no test samples")
    n = len(categories)
    conf = np.zeros((n, n), dtype=np.int64)
    np.add.at(conf, (true - 1, pred - 1), 1)
    precision: list[float | None] = []
    for k in range(n):
        col = conf[:, k].sum()
        precision.append(None if col == 0 else conf[k, k] / col)
    defined = [q for q in precision if q is not None]
    average = float(np.mean(defined)) if defined else None
    return Evaluation(tuple(categories), precision, average, conf, float(np.mean(true == pred)))


def evaluate(model: MlnnModel, test) -> Evaluation:
    """Per-category precision on raw labelled vectors; unpredicted categories are skipped."""
    test = list(test)
    if not test:
        raise EmptyTestSet("no test samples")
    raw = np.stack([np.asarray(t.features, dtype=np.float64) for t in test])
    pred, _ = classify_raw(model, raw)
    return precision_report([t.category for t in test], pred, model.categories)


# -- model file ------------------------------------------------------------------

def _fmt(values) -> str:
    return " ".join("%.17g" % v for v in np.ravel(values))


def dumps_model(model: MlnnModel) -> str:
    n_in, n_hidden, _ = model.layer_sizes
    p = model.params
    buf = io.StringIO()
    buf.write(MODEL_MAGIC + "\n")
    buf.write(f"layers {n_in} {n_hidden} 1\n")
    buf.write(f"mlaf beta={'%.17g' % p.beta} c={'%.17g' % p.c} n={p.n}\n")
    buf.write("categories " + " ".join(model.categories) + "\n")
    buf.write(f"normalizer {model.normalizer.mode}\n")
    buf.write(_fmt(model.normalizer.mean) + "\n")
    buf.write(_fmt(model.normalizer.std) + "\n")
    buf.write("Wh\n")
    for row in model.w_hidden:
        buf.write(_fmt(row) + "\n")
    buf.write("bh\n" + _fmt(model.b_hidden) + "\n")
    buf.write("Wo\n" + _fmt(model.w_out) + "\n")
    buf.write("bo\n" + _fmt([model.b_out]) + "\n")
    return buf.getvalue()


def save_model(model: MlnnModel, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps_model(model))


class _Lines:
    def __init__(self, text: str):
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.pos = 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.lines):
            raise FormatError(f"unexpected end of model file, expected {what}")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect(self, literal: str) -> None:
        line = self.next(repr(literal))
        if line != literal:
            raise FormatError(f"line {self.pos}: expected {literal!r}, got {line[:40]!r}")

    def floats(self, count: int, what: str) -> np.ndarray:
        line = self.next(what)
        try:
            vals = np.array([float(t) for t in line.split()], dtype=np.float64)
        except ValueError:
            raise FormatError(f"line {self.pos}: non-numeric value in {what}") from None
        if len(vals) != count:
            raise FormatError(f"line {self.pos}: {what} has {len(vals)} values, expected {count}")
        return vals


def _keyvals(line: str, lineno: int) -> dict[str, str]:
    out = {}
    for tok in line.split()[1:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise FormatError(f"line {lineno}: malformed field {tok!r}")
        out[key] = val
    return out


def loads_model(text: str) -> MlnnModel:
    src = _Lines(text)
    src.expect(MODEL_MAGIC)
    parts = src.next("layers").split()
    if len(parts) != 4 or parts[0] != "layers" or parts[3] != "1":
        raise FormatError("line 2: expected 'layers <in> <hidden> 1'")
    try:
        n_in, n_hidden = int(parts[1]), int(parts[2])
    except ValueError:
        raise FormatError("line 2: layer sizes must be integers") from None
    if n_in < 1 or n_hidden < 1:
        raise FormatError("line 2: layer sizes must be positive")

    line = src.next("mlaf")
    if not line.startswith("mlaf "):
        raise FormatError("line 3: expected mlaf parameters")
    kv = _keyvals(line, 3)
    try:
        params = MlafParams(float(kv["beta"]), float(kv["c"]), int(kv["n"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"line 3: bad mlaf parameters ({exc})") from None

    line = src.next("categories")
    if not line.startswith("categories "):
        raise FormatError("line 4: expected categories")
    categories = tuple(line.split()[1:])
    if len(categories) != params.n:
        raise FormatError(f"line 4: {len(categories)} categories but n={params.n}")

    line = src.next("normalizer")
    mode = line.split()[1] if line.startswith("normalizer ") and len(line.split()) == 2 else None
    if mode not in ("unit", "zscore"):
        raise FormatError("line 5: expected 'normalizer unit|zscore'")
    mean = src.floats(n_in, "normaliser mean")
    std = src.floats(n_in, "normaliser std")

    src.expect("Wh")
    w_hidden = np.stack([src.floats(n_in, "Wh row") for _ in range(n_hidden)])
    src.expect("bh")
    b_hidden = src.floats(n_hidden, "bh")
    src.expect("Wo")
    w_out = src.floats(n_hidden, "Wo")
    src.expect("bo")
    b_out = float(src.floats(1, "bo")[0])
    if src.pos != len(src.lines):
        raise FormatError(f"trailing content after line {src.pos}")
    return MlnnModel(w_hidden, b_hidden, w_out, b_out, params,
                     Normalizer(mean, std, mode), categories)


def load_model(path) -> MlnnModel:
    try:
        with open(path, "r", encoding="ascii", newline="") as fh:
            text = fh.read()
    except UnicodeDecodeError:
        raise FormatError(f"{path}: not a text model file") from None
    if "\r" in text:
        raise FormatError(f"{path}: unexpected carriage return")
    return loads_model(text)


