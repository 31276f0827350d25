"""A small dense-network engine tailored to covariance fingerprints.

Hidden layers apply affine -> batch normalization -> rectified linear ->
inverted dropout (training mode only); evaluation mode uses the running
batch-norm statistics and no dropout, so it is a pure function of (model,
input). Training runs mini-batch adaptive-moment updates with early
stopping on validation loss and keeps the best-validation-epoch weights.

All training math is 64-bit. Two output heads exist: ``regression``
(2K normalized angle slots per batch row) and ``classifier`` (softmax
over source counts 1..5). Regression slots are (elevation/pi,
azimuth/(2*pi)) per source in elevation-sorted order; losses de-normalize
internally.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import binio
from .features import FEATURE_LAYOUT_VERSION, FeatureStats, standardize

MODEL_MAGIC = b"VSNN"
MODEL_FORMAT_VERSION = 1
HEADS = ("regression", "classifier")
REGRESSION_LOSSES = ("chordal", "mse_angles")
N_CLASSES = 5


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainOptions:
    max_epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    dropout_rate: float = 0.1
    patience: int = 10
    loss: str = "chordal"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.loss not in REGRESSION_LOSSES:
            raise ValueError(f"loss must be one of {REGRESSION_LOSSES}")

    def to_dict(self) -> dict:
        return dataclass_to_dict(self)


def dataclass_to_dict(obj) -> dict:
    return {k: getattr(obj, k) for k in obj.__dataclass_fields__}


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0


class EarlyStopper:
    """Stop once validation loss has not improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self._stale = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self._stale = 0
            return False
        self._stale += 1
        return self._stale >= self.patience


class Mlp:
    """Feed-forward network over 42-wide fingerprints.

    Carries its own feature standardization constants and, for regression
    heads, the source count, so a saved model predicts self-contained.
    """

    def __init__(
        self,
        input_dim: int,
        hidden_dims,
        output_dim: int,
        head: str,
        seed: int = 0,
        dropout_rate: float = 0.1,
        bn_eps: float = 1e-5,
        bn_momentum: float = 0.9,
    ):
        if head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {head!r}")
        if head == "regression" and (output_dim % 2 != 0 or output_dim < 2):
            raise ValueError("regression output width must be 2K")
        if head == "classifier" and output_dim != N_CLASSES:
            raise ValueError(f"classifier output width must be {N_CLASSES}")
        self.input_dim = int(input_dim)
        self.hidden_dims = tuple(int(d) for d in hidden_dims)
        self.output_dim = int(output_dim)
        self.head = head
        self.dropout_rate = float(dropout_rate)
        self.bn_eps = float(bn_eps)
        self.bn_momentum = float(bn_momentum)
        self.feature_stats: FeatureStats | None = None
        self.train_config: dict | None = None

        rng = np.random.default_rng(seed)
        self.hidden = []
        fan_in = self.input_dim
        for width in self.hidden_dims:
            self.hidden.append(
                {
                    "w": rng.standard_normal((fan_in, width)) * np.sqrt(2.0 / fan_in),
                    "b": np.zeros(width),
                    "gamma": np.ones(width),
                    "beta": np.zeros(width),
                    "run_mean": np.zeros(width),
                    "run_var": np.ones(width),
                }
            )
            fan_in = width
        self.out_w = rng.standard_normal((fan_in, self.output_dim)) * np.sqrt(1.0 / fan_in)
        self.out_b = np.zeros(self.output_dim)
        if head == "regression":
            # Start all angle slots tightly at mid-range (0.5, 0.5). The
            # chordal loss is periodic, and a wide initial spread lets
            # samples settle on different equivalent branches, which the
            # network then has to separate with sharp transitions; a
            # centered start keeps every sample on one canonical branch.
            self.out_w *= 0.1
            self.out_b += 0.5

    @property
    def n_sources(self) -> int:
        if self.head != "regression":
            raise ValueError("n_sources is defined for regression heads only")
        return self.output_dim // 2

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order (running stats excluded)."""
        params = []
        for layer in self.hidden:
            params += [layer["w"], layer["b"], layer["gamma"], layer["beta"]]
        params += [self.out_w, self.out_b]
        return params

    def state_arrays(self) -> list[np.ndarray]:
        arrays = []
        for layer in self.hidden:
            arrays += [layer[k] for k in ("w", "b", "gamma", "beta", "run_mean", "run_var")]
        arrays += [self.out_w, self.out_b]
        return arrays

    def snapshot_state(self) -> list[np.ndarray]:
        return [a.copy() for a in self.state_arrays()]

    def restore_state(self, snapshot) -> None:
        for target, source in zip(self.state_arrays(), snapshot):
            np.copyto(target, source)

    def forward(self, x, mode: str = "eval", rng: np.random.Generator | None = None):
        """Network outputs for a (batch, input_dim) matrix."""
        out, _, _ = self._forward(x, train=(mode == "train"), rng=rng)
        return out

    def _forward(self, x, train: bool, rng=None, update_running: bool = True):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"expected (batch, {self.input_dim}) input, got {x.shape}")
        if train and self.dropout_rate > 0.0 and rng is None:
            raise ValueError("training-mode forward with dropout needs a random stream")
        caches = []
        h = x
        for layer in self.hidden:
            z = h @ layer["w"] + layer["b"]
            if train:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                if update_running:
                    m = self.bn_momentum
                    layer["run_mean"] = m * layer["run_mean"] + (1.0 - m) * mu
                    layer["run_var"] = m * layer["run_var"] + (1.0 - m) * var
            else:
                mu = layer["run_mean"]
                var = layer["run_var"]
            inv = 1.0 / np.sqrt(var + self.bn_eps)
            xhat = (z - mu) * inv
            act_in = layer["gamma"] * xhat + layer["beta"]
            r = np.maximum(act_in, 0.0)
            mask = None
            if train and self.dropout_rate > 0.0:
                mask = (rng.random(r.shape) >= self.dropout_rate) / (1.0 - self.dropout_rate)
                r = r * mask
            if train:
                caches.append({"h": h, "inv": inv, "xhat": xhat, "act_in": act_in, "mask": mask})
            h = r
        y = h @ self.out_w + self.out_b
        return y, caches, h

    def _backward(self, caches, last_hidden, grad_out):
        """Parameter gradients matching :meth:`parameters` order."""
        grads = [None] * (4 * len(self.hidden) + 2)
        grads[-2] = last_hidden.T @ grad_out
        grads[-1] = grad_out.sum(axis=0)
        gh = grad_out @ self.out_w.T
        for li in range(len(self.hidden) - 1, -1, -1):
            layer, cache = self.hidden[li], caches[li]
            if cache["mask"] is not None:
                gh = gh * cache["mask"]
            ga = gh * (cache["act_in"] > 0.0)
            xhat = cache["xhat"]
            grads[4 * li + 2] = (ga * xhat).sum(axis=0)  # gamma
            grads[4 * li + 3] = ga.sum(axis=0)  # beta
            gxhat = ga * layer["gamma"]
            m = xhat.shape[0]
            gz = (cache["inv"] / m) * (
                m * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0)
            )
            grads[4 * li + 0] = cache["h"].T @ gz  # w
            grads[4 * li + 1] = gz.sum(axis=0)  # b
            gh = gz @ layer["w"].T
        return grads

    def predict_standardized(self, features_raw: np.ndarray) -> np.ndarray:
        """Standardize raw fingerprints with the embedded stats, then forward."""
        if self.feature_stats is None:
            raise ValueError("model has no embedded feature statistics")
        return self.forward(standardize(np.atleast_2d(features_raw), self.feature_stats))


def mse_loss(outputs, labels):
    """Mean squared error over normalized angle slots; the naive baseline.

    A 359-degree estimate of a 1-degree truth scores a huge loss here even
    though the physical error is 2 degrees; that wrap blindness is why the
    chordal loss is the default.
    """
    outputs = np.asarray(outputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if outputs.shape != labels.shape:
        raise ValueError(f"shape mismatch {outputs.shape} vs {labels.shape}")
    diff = outputs - labels
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def chordal_loss(outputs, labels):
    """Mean squared unit-sphere chord between predicted and true directions.

    Inputs are normalized (elevation/pi, azimuth/(2*pi)) slot pairs; they
    are de-normalized to radians internally. Full azimuth turns cost
    nothing because the azimuth only enters through a cosine.
    """
    outputs = np.asarray(outputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if outputs.shape != labels.shape or outputs.shape[1] % 2 != 0:
        raise ValueError(f"bad widths: {outputs.shape} vs {labels.shape}")
    te = outputs[:, 0::2] * np.pi
    pe = outputs[:, 1::2] * 2.0 * np.pi
    tt = labels[:, 0::2] * np.pi
    pt = labels[:, 1::2] * 2.0 * np.pi
    st, ct = np.sin(te), np.cos(te)
    stt, ctt = np.sin(tt), np.cos(tt)
    cd, sd = np.cos(pe - pt), np.sin(pe - pt)
    d = 2.0 * (1.0 - st * stt * cd - ct * ctt)
    loss = float(np.mean(np.maximum(d, 0.0)))
    scale = 1.0 / d.size
    grad = np.empty_like(outputs)
    grad[:, 0::2] = 2.0 * (-ct * stt * cd + st * ctt) * np.pi * scale
    grad[:, 1::2] = 2.0 * (st * stt * sd) * 2.0 * np.pi * scale
    return loss, grad


def cross_entropy_loss(logits, class_labels):
    """Softmax cross-entropy over source counts 1..5."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(class_labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[1] != N_CLASSES:
        raise ValueError(f"expected (batch, {N_CLASSES}) logits, got {logits.shape}")
    if labels.min() < 1 or labels.max() > N_CLASSES:
        raise ValueError(f"class labels must lie in 1..{N_CLASSES}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    probs = expv / expv.sum(axis=1, keepdims=True)
    rows = np.arange(len(labels))
    loss = float(np.mean(-shifted[rows, labels - 1] + np.log(expv.sum(axis=1))))
    grad = probs.copy()
    grad[rows, labels - 1] -= 1.0
    return loss, grad / len(labels)


def resolve_loss(model: Mlp, opts: TrainOptions):
    if model.head == "classifier":
        return cross_entropy_loss
    return chordal_loss if opts.loss == "chordal" else mse_loss


class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def train(model: Mlp, train_data, val_data, opts: TrainOptions):
    """Fit ``model`` in place; returns (model, history).

    Stops once validation loss has not improved for ``opts.patience``
    epochs or ``opts.max_epochs`` is reached, then restores the weights
    (and running statistics) of the best validation epoch.
    """
    x_tr, y_tr = (np.asarray(a) for a in train_data)
    x_val, y_val = (np.asarray(a) for a in val_data)
    if len(x_tr) == 0 or len(x_val) == 0:
        raise ValueError("training and validation sets must be nonempty")
    model.dropout_rate = opts.dropout_rate
    loss_fn = resolve_loss(model, opts)
    rng = np.random.default_rng(opts.seed)
    adam = _Adam(model.parameters(), opts.learning_rate, opts.beta1, opts.beta2)
    stopper = EarlyStopper(opts.patience)
    history = TrainHistory()
    best_state = model.snapshot_state()
    n = len(x_tr)
    batch = min(opts.batch_size, n)
    for epoch in range(1, opts.max_epochs + 1):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            out, caches, last_hidden = model._forward(x_tr[idx], train=True, rng=rng)
            loss, grad_out = loss_fn(out, y_tr[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {start // batch}")
            adam.step(model._backward(caches, last_hidden, grad_out))
            epoch_losses.append(loss)
        history.train_loss.append(float(np.mean(epoch_losses)))
        val_loss, _ = loss_fn(model.forward(x_val), y_val)
        history.val_loss.append(float(val_loss))
        if val_loss < stopper.best:
            best_state = model.snapshot_state()
        history.stopped_epoch = epoch
        if stopper.update(epoch, float(val_loss)):
            break
    history.best_epoch = stopper.best_epoch
    model.restore_state(best_state)
    return model, history


def gradient_check(
    model: Mlp,
    x,
    y,
    loss_kind: str = "chordal",
    n_probes: int = 60,
    step: float = 1e-5,
    seed: int = 0,
    inject_relative_error: float = 0.0,
    atol: float = 1e-6,
) -> float:
    """Worst relative deviation between analytic and central-difference gradients.

    Dropout is disabled for the check (the analytic path differentiates
    through training-mode batch normalization, which is deterministic).
    Gradients with both sides below ``atol`` count as matching zeros:
    a dense bias feeding batch normalization has an exactly-zero gradient,
    and central differences only resolve zeros down to roundoff / step.
    ``inject_relative_error`` perturbs one analytic gradient entry, as a
    way to confirm the check actually detects broken gradients.
    """
    losses = {"chordal": chordal_loss, "mse_angles": mse_loss, "cross_entropy": cross_entropy_loss}
    loss_fn = losses[loss_kind]
    saved_rate = model.dropout_rate
    model.dropout_rate = 0.0
    try:
        x = np.asarray(x, dtype=np.float64)
        out, caches, last_hidden = model._forward(x, train=True, update_running=False)
        _, grad_out = loss_fn(out, y)
        grads = model._backward(caches, last_hidden, grad_out)
        params = model.parameters()

        rng = np.random.default_rng(seed)
        flat_sizes = [p.size for p in params]
        total = sum(flat_sizes)
        probes = rng.choice(total, size=min(n_probes, total), replace=False)
        if inject_relative_error:
            pi, offset = _locate(flat_sizes, int(probes[0]))
            grads[pi].flat[offset] = grads[pi].flat[offset] * (1.0 + inject_relative_error) + 1e-6

        worst = 0.0
        for flat_index in probes:
            pi, offset = _locate(flat_sizes, int(flat_index))
            p = params[pi]
            original = p.flat[offset]
            p.flat[offset] = original + step
            up, _, _ = model._forward(x, train=True, update_running=False)
            loss_hi, _ = loss_fn(up, y)
            p.flat[offset] = original - step
            down, _, _ = model._forward(x, train=True, update_running=False)
            loss_lo, _ = loss_fn(down, y)
            p.flat[offset] = original
            numeric = (loss_hi - loss_lo) / (2.0 * step)
            analytic = grads[pi].flat[offset]
            denom = max(abs(analytic), abs(numeric), atol)
            worst = max(worst, abs(analytic - numeric) / denom)
        return worst
    finally:
        model.dropout_rate = saved_rate


def _locate(sizes, flat_index):
    for pi, size in enumerate(sizes):
        if flat_index < size:
            return pi, flat_index
        flat_index -= size
    raise IndexError(flat_index)


def save_model(model: Mlp, path, dtype: str = "float32") -> None:
    """Serialize to the versioned binary container; see :mod:`vsdoa.binio`.

    32-bit weights are inference-grade; pass ``dtype='float64'`` for a
    bit-exact archival copy.
    """
    if dtype not in ("float32", "float64"):
        raise ValueError("dtype must be 'float32' or 'float64'")
    np_dtype = "<f4" if dtype == "float32" else "<f8"
    header = {
        "architecture": {
            "input_dim": model.input_dim,
            "hidden_dims": list(model.hidden_dims),
            "output_dim": model.output_dim,
        },
        "head": model.head,
        "dropout_rate": model.dropout_rate,
        "bn_eps": model.bn_eps,
        "bn_momentum": model.bn_momentum,
        "label_norm": {"kind": "doa_pairs", "elevation_scale_deg": 180.0, "azimuth_scale_deg": 360.0}
        if model.head == "regression"
        else {"kind": "classes", "classes": N_CLASSES},
        "feature_stats": model.feature_stats.to_dict() if model.feature_stats else None,
        "train_config": model.train_config,
        "dtype": dtype,
        "feature_layout_version": FEATURE_LAYOUT_VERSION,
        "checksum": binio.CHECKSUM_ALGORITHM,
    }
    blobs = [np.ascontiguousarray(a, dtype=np_dtype).tobytes() for a in model.state_arrays()]
    binio.write_artifact(path, MODEL_MAGIC, MODEL_FORMAT_VERSION, header, blobs)


def load_model(path) -> Mlp:
    header, payload = binio.read_artifact(path, MODEL_MAGIC, MODEL_FORMAT_VERSION)
    if header.get("feature_layout_version") != FEATURE_LAYOUT_VERSION:
        raise binio.VersionError(
            f"{path}: feature layout version {header.get('feature_layout_version')}, "
            f"reader supports {FEATURE_LAYOUT_VERSION}"
        )
    arch = header["architecture"]
    model = Mlp(
        arch["input_dim"],
        arch["hidden_dims"],
        arch["output_dim"],
        head=header["head"],
        dropout_rate=header["dropout_rate"],
        bn_eps=header["bn_eps"],
        bn_momentum=header["bn_momentum"],
    )
    np_dtype = "<f4" if header["dtype"] == "float32" else "<f8"
    itemsize = 4 if header["dtype"] == "float32" else 8
    offset = 0
    for target in model.state_arrays():
        count = target.size
        if offset + count * itemsize > len(payload):
            raise binio.TruncatedError(f"{path}: weight payload shorter than architecture requires")
        values = np.frombuffer(payload, dtype=np_dtype, count=count, offset=offset)
        np.copyto(target, values.astype(np.float64).reshape(target.shape))
        offset += count * itemsize
    if offset != len(payload):
        raise binio.TruncatedError(f"{path}: {len(payload) - offset} trailing payload bytes")
    if header["feature_stats"]:
        model.feature_stats = FeatureStats.from_dict(header["feature_stats"])
    model.train_config = header.get("train_config")
    return model
