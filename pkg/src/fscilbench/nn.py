"""Small feed-forward extractor with running-statistics normalization,
label-smoothed cross-entropy, Nesterov SGD with per-group freeze masks, and
a milestone learning-rate schedule.

The extractor is a stack of blocks, each Linear -> FeatureNorm -> ReLU
(FeatureNorm optional per configuration), so features are nonnegative like
the post-activation embeddings the classifier rows are matched against.
Classifiers are bias-free row matrices; logits are computed block-by-block
so a frozen prefix of classifier rows yields bit-identical logit columns no
matter how many rows are appended after it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError
from .numcore import Rng, Tensor2D, as_tensor2d, l2_normalize_rows

STATS_MOMENTUM = 0.1
NORM_EPS = 1e-5
RUNNING_VAR_FLOOR = 1e-5

PARAM_GROUP_NAMES = ("f", "h0", "h_prev", "h_cur")


@dataclass
class TrainConfig:
    """Base-session optimization settings."""

    epochs: int
    batch_size: int
    lr: float
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 0.0
    milestones: tuple[int, ...] = ()
    gamma: float = 0.1
    label_smoothing: float = 0.0

    def __post_init__(self):
        self.milestones = tuple(int(m) for m in self.milestones)
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch_size must be at least 1")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise InputError("milestones must be strictly increasing")
        if any(m >= self.epochs for m in self.milestones):
            raise InputError("milestones must be below the epoch count")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise InputError("label_smoothing must lie in [0, 1)")


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate at an epoch: lr * gamma^(milestones passed)."""
    passed = sum(1 for m in cfg.milestones if m <= epoch)
    return cfg.lr * cfg.gamma**passed


class Linear:
    """Affine map x -> x @ w.T + b with w of shape (out, in)."""

    def __init__(self, weight: Tensor2D, bias: np.ndarray):
        self.weight = as_tensor2d(weight)
        self.bias = np.ascontiguousarray(bias, dtype=np.float64)
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError("bias length must equal the output width")

    @classmethod
    def init(cls, fan_in: int, fan_out: int, rng: Rng) -> "Linear":
        # He-style scale for the ReLU blocks downstream.
        scale = np.sqrt(2.0 / fan_in)
        return cls(rng.normal(fan_out, fan_in, scale), np.zeros(fan_out))

    def clone(self) -> "Linear":
        return Linear(self.weight.copy(), self.bias.copy())


class FeatureNorm:
    """Per-feature batch normalization with EMA running statistics.

    Train mode normalizes by batch statistics and exposes EMA updates for
    the caller to apply; inference mode normalizes by the stored running
    statistics and never changes them. The running variance is floored at
    RUNNING_VAR_FLOOR after every update.
    """

    def __init__(self, dim: int, momentum: float = STATS_MOMENTUM):
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum

    def clone(self) -> "FeatureNorm":
        out = FeatureNorm(self.gamma.size, self.momentum)
        out.gamma = self.gamma.copy()
        out.beta = self.beta.copy()
        out.running_mean = self.running_mean.copy()
        out.running_var = self.running_var.copy()
        return out

    def forward(self, x: Tensor2D, training: bool):
        """Returns (y, cache); cache carries what backward and EMA need."""
        if training:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
        else:
            mu = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + NORM_EPS)
        xhat = (x - mu) * inv_std
        y = self.gamma * xhat + self.beta
        cache = {
            "training": training,
            "xhat": xhat,
            "inv_std": inv_std,
            "x_centered": x - mu,
            "batch_mean": mu if training else None,
            "batch_var": var if training else None,
        }
        return y, cache

    def backward(self, dy: Tensor2D, cache: dict):
        """Returns (dx, dgamma, dbeta) for either mode."""
        xhat = cache["xhat"]
        inv_std = cache["inv_std"]
        dgamma = np.sum(dy * xhat, axis=0)
        dbeta = np.sum(dy, axis=0)
        dxhat = dy * self.gamma
        if not cache["training"]:
            return dxhat * inv_std, dgamma, dbeta
        # Batch statistics depend on x, so fold their contributions back in.
        n = dy.shape[0]
        xc = cache["x_centered"]
        dvar = np.sum(dxhat * xc * -0.5 * inv_std**3, axis=0)
        dmu = np.sum(-dxhat * inv_std, axis=0) + dvar * np.mean(-2.0 * xc, axis=0)
        dx = dxhat * inv_std + dvar * 2.0 * xc / n + dmu / n
        return dx, dgamma, dbeta

    def apply_stat_update(self, batch_mean: np.ndarray, batch_var: np.ndarray):
        m = self.momentum
        self.running_mean = (1.0 - m) * self.running_mean + m * batch_mean
        self.running_var = np.maximum(
            (1.0 - m) * self.running_var + m * batch_var, RUNNING_VAR_FLOOR
        )


@dataclass
class ExtractorArch:
    """Shape of the extractor: input -> hidden dims -> feature_dim.

    feature_dim defaults to 128: cosine prototype classifiers need room, and
    narrower embeddings crowd unseen classes into the positive cone.
    """

    input_dim: int
    hidden_dims: tuple[int, ...] = (64,)
    feature_dim: int = 128
    with_norm: bool = True

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        dims = (self.input_dim, *self.hidden_dims, self.feature_dim)
        if any(d < 1 for d in dims):
            raise InputError("all extractor dimensions must be positive")


class Extractor:
    """MLP feature extractor; every block is Linear -> (FeatureNorm) -> ReLU."""

    def __init__(self, arch: ExtractorArch, rng: Rng | None = None):
        self.arch = arch
        dims = [arch.input_dim, *arch.hidden_dims, arch.feature_dim]
        self.linears: list[Linear] = []
        self.norms: list[FeatureNorm | None] = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            if rng is None:
                lin = Linear(np.zeros((fan_out, fan_in)), np.zeros(fan_out))
            else:
                lin = Linear.init(fan_in, fan_out, rng.split(i + 1))
            self.linears.append(lin)
            self.norms.append(FeatureNorm(fan_out) if arch.with_norm else None)

    @property
    def input_dim(self) -> int:
        return self.arch.input_dim

    @property
    def feature_dim(self) -> int:
        return self.arch.feature_dim

    def clone(self) -> "Extractor":
        out = Extractor(self.arch, rng=None)
        out.linears = [lin.clone() for lin in self.linears]
        out.norms = [None if nm is None else nm.clone() for nm in self.norms]
        return out

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list in a fixed order: per block W, b, gamma, beta."""
        params: list[np.ndarray] = []
        for lin, nm in zip(self.linears, self.norms):
            params.extend((lin.weight, lin.bias))
            if nm is not None:
                params.extend((nm.gamma, nm.beta))
        return params

    def set_parameters(self, values: list[np.ndarray]):
        own = self.parameters()
        if len(values) != len(own):
            raise ShapeError("parameter list length mismatch")
        for dst, src in zip(own, values):
            dst[...] = src

    def running_stats(self) -> list[np.ndarray]:
        stats: list[np.ndarray] = []
        for nm in self.norms:
            if nm is not None:
                stats.extend((nm.running_mean, nm.running_var))
        return stats

    def forward_cached(self, x: Tensor2D, training: bool):
        """Full forward pass keeping per-block caches for backprop.

        Returns (features, caches, stat_updates) where stat_updates is a
        list of (norm, batch_mean, batch_var) the caller may apply; nothing
        is mutated here.
        """
        x = as_tensor2d(x)
        if x.shape[1] != self.input_dim:
            raise ShapeError(
                f"input width {x.shape[1]} != extractor input_dim {self.input_dim}"
            )
        caches = []
        stat_updates = []
        a = x
        for lin, nm in zip(self.linears, self.norms):
            z = a @ lin.weight.T + lin.bias
            if nm is not None:
                y, ncache = nm.forward(z, training)
                if training:
                    stat_updates.append((nm, ncache["batch_mean"], ncache["batch_var"]))
            else:
                y, ncache = z, None
            out = np.maximum(y, 0.0)
            caches.append({"a_in": a, "pre_relu": y, "norm_cache": ncache})
            a = out
        return a, caches, stat_updates

    def backward(self, d_features: Tensor2D, caches: list[dict]) -> list[np.ndarray]:
        """Gradients w.r.t. parameters(), given d(loss)/d(features)."""
        grads_rev: list[np.ndarray] = []
        da = d_features
        for lin, nm, cache in zip(
            reversed(self.linears), reversed(self.norms), reversed(caches)
        ):
            dy = da * (cache["pre_relu"] > 0.0)
            if nm is not None:
                dz, dgamma, dbeta = nm.backward(dy, cache["norm_cache"])
                grads_rev.extend((dbeta, dgamma))
            else:
                dz = dy
            grads_rev.append(dz.sum(axis=0))          # bias
            grads_rev.append(dz.T @ cache["a_in"])    # weight
            da = dz @ lin.weight
        grads_rev.reverse()
        return grads_rev

    def apply_stat_updates(self, stat_updates):
        for nm, mean, var in stat_updates:
            nm.apply_stat_update(mean, var)


def forward(ext: Extractor, x_batch: Tensor2D, mode: str = "inference") -> Tensor2D:
    """Feature batch for x_batch; train mode also updates running statistics."""
    if mode not in ("train", "inference"):
        raise InputError(f"unknown forward mode {mode!r}")
    training = mode == "train"
    features, _, stat_updates = ext.forward_cached(x_batch, training)
    if training:
        ext.apply_stat_updates(stat_updates)
    return features


ORIGIN_SGD = "sgd-trained"
ORIGIN_PROTOTYPE = "prototype"
ORIGIN_NORMALIZED = "normalized-prototype"
ORIGIN_RANDOM = "random-init"


class Classifier:
    """Bias-free weight matrix in R^{C x d} with per-row origin tags."""

    def __init__(self, weight: Tensor2D, origins: list[str] | None = None):
        self.weight = as_tensor2d(weight)
        rows = self.weight.shape[0]
        self.origins = list(origins) if origins is not None else [ORIGIN_RANDOM] * rows
        if len(self.origins) != rows:
            raise ShapeError("one origin tag per classifier row required")

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def random_init(cls, num_classes: int, dim: int, rng: Rng, scale: float) -> "Classifier":
        return cls(rng.normal(num_classes, dim, scale), [ORIGIN_RANDOM] * num_classes)

    @classmethod
    def from_prototypes(cls, prototypes: Tensor2D, normalize: bool) -> "Classifier":
        prototypes = as_tensor2d(prototypes)
        if normalize:
            return cls(l2_normalize_rows(prototypes), [ORIGIN_NORMALIZED] * prototypes.shape[0])
        return cls(prototypes.copy(), [ORIGIN_PROTOTYPE] * prototypes.shape[0])

    def mark_sgd_trained(self):
        self.origins = [ORIGIN_SGD] * self.num_classes

    def clone(self) -> "Classifier":
        return Classifier(self.weight.copy(), list(self.origins))


def logits(blocks: list[Classifier], features: Tensor2D) -> Tensor2D:
    """Concatenated logits, one column group per classifier block.

    Computing each block's product separately keeps a frozen prefix of rows
    bit-identical across sessions regardless of appended blocks.
    """
    features = as_tensor2d(features)
    for b in blocks:
        if b.weight.shape[1] != features.shape[1]:
            raise ShapeError(
                f"classifier dim {b.weight.shape[1]} != feature dim {features.shape[1]}"
            )
    return np.concatenate([features @ b.weight.T for b in blocks], axis=1)


def smoothed_cross_entropy(logit_batch: Tensor2D, labels, eps: float):
    """Label-smoothed cross-entropy and its gradient w.r.t. the logits.

    Targets are (1-eps) * onehot + eps/C uniform; the loss is the batch mean
    of -sum_c t_c log p_c and the gradient is (p - t) / batch.
    """
    logit_batch = as_tensor2d(logit_batch)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logit_batch.shape
    if labels.shape != (n,):
        raise ShapeError("labels must be a vector matching the batch size")
    if not 0.0 <= eps < 1.0:
        raise InputError("label smoothing must lie in [0, 1)")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise InputError("label index out of range for the logit width")

    shifted = logit_batch - logit_batch.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_p = shifted - log_z
    targets = np.full((n, c), eps / c)
    targets[np.arange(n), labels] += 1.0 - eps
    loss = float(-np.sum(targets * log_p) / n)
    grad = (np.exp(log_p) - targets) / n
    return loss, grad


@dataclass
class GroupState:
    """One named parameter group: tensors, freeze flag, momentum buffers."""

    params: list[np.ndarray] = field(default_factory=list)
    frozen: bool = True
    velocity: list[np.ndarray] | None = None


class ParamGroups:
    """The four decomposed groups: extractor, base rows, past rows, current rows."""

    def __init__(self, groups: dict[str, GroupState]):
        unknown = set(groups) - set(PARAM_GROUP_NAMES)
        if unknown:
            raise InputError(f"unknown parameter groups: {sorted(unknown)}")
        self.groups = {name: groups.get(name, GroupState()) for name in PARAM_GROUP_NAMES}

    def __getitem__(self, name: str) -> GroupState:
        return self.groups[name]

    def items(self):
        return self.groups.items()

    def trainable_names(self) -> tuple[str, ...]:
        return tuple(n for n, g in self.groups.items() if not g.frozen)


def sgd_step(groups: ParamGroups, grads: dict[str, list[np.ndarray]], cfg, lr: float | None = None):
    """One SGD step with momentum, optional Nesterov lookahead, weight decay.

    For each unfrozen group, per tensor: d = g + wd*p; v = mu*v + d;
    p -= lr * (d + mu*v) under Nesterov, else p -= lr * v. Frozen groups are
    skipped entirely so their parameters and buffers stay bit-identical.
    """
    step_lr = cfg.lr if lr is None else lr
    mu = cfg.momentum
    wd = cfg.weight_decay
    nesterov = getattr(cfg, "nesterov", False)
    for name, group in groups.items():
        if group.frozen or not group.params:
            continue
        grad_list = grads[name]
        if len(grad_list) != len(group.params):
            raise ShapeError(f"gradient list for group {name!r} has wrong length")
        if group.velocity is None:
            group.velocity = [np.zeros_like(p) for p in group.params]
        for p, g, v in zip(group.params, grad_list, group.velocity):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            d = g + wd * p
            v *= mu
            v += d
            p -= step_lr * ((d + mu * v) if nesterov else v)
