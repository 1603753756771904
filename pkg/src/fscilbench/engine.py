"""Session engine: base-session training, novel-session updates under the
parameter-decomposition modes M1-M5, the no-training normalized-prototype
path (NONPC), and the prototype-normalization ablation variants.

Parameter groups follow the four-way decomposition: f (extractor), h0 (base
classifier rows), h_prev (novel classifiers from earlier sessions), h_cur
(the classifier appended this session). Whenever f is frozen the feature
normalization layers run in inference mode, so their running statistics
stay fixed too.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import Dataset, FullData, SessionPlan, eval_split, session_stream
from .errors import ConfigError, InputError, TrainingError
from .evaluation import EvalReport, evaluate_model
from .numcore import Rng, l2_normalize_rows

NOVEL_INIT_SCALE = 0.01

# Rng stream layout for a run seed: 1 = model init, 2 = base batch order,
# 3 = diagnostics, 16 + i = initialization of session i's classifier.
STREAM_MODEL_INIT = 1
STREAM_BASE_BATCHES = 2
STREAM_DIAGNOSTICS = 3
STREAM_SESSION_BASE = 16


class UpdateMode(enum.Enum):
    """Which parameter groups a novel session trains, and how the new
    classifier rows are initialized."""

    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    M4 = "M4"
    M5 = "M5"
    NONPC = "NONPC"
    ABL_P = "ABL_P"
    ABL_NP_NOVEL_ONLY = "ABL_NP_NOVEL_ONLY"

    @classmethod
    def from_string(cls, name: str) -> "UpdateMode":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ConfigError(f"unknown update mode {name!r}") from None


# Groups trained during a novel session, per mode.
TRAINABLE_GROUPS = {
    UpdateMode.M1: frozenset(),
    UpdateMode.M2: frozenset({"h_cur"}),
    UpdateMode.M3: frozenset({"h_prev", "h_cur"}),
    UpdateMode.M4: frozenset({"h0", "h_prev", "h_cur"}),
    UpdateMode.M5: frozenset({"f", "h0", "h_prev", "h_cur"}),
    UpdateMode.NONPC: frozenset(),
    UpdateMode.ABL_P: frozenset(),
    UpdateMode.ABL_NP_NOVEL_ONLY: frozenset(),
}

# How the appended classifier is built: random init or prototypes.
NOVEL_INIT_STYLE = {
    UpdateMode.M1: "random",
    UpdateMode.M2: "random",
    UpdateMode.M3: "random",
    UpdateMode.M4: "random",
    UpdateMode.M5: "random",
    UpdateMode.NONPC: "normalized-prototype",
    UpdateMode.ABL_P: "prototype",
    UpdateMode.ABL_NP_NOVEL_ONLY: "normalized-prototype",
}

# Only NONPC swaps the SGD base classifier for normalized prototypes.
REPLACES_BASE = {UpdateMode.NONPC}


@dataclass
class NovelTrainConfig:
    """Novel-session fine-tuning settings (full-batch SGD)."""

    steps: int = 100
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError("steps must be at least 1")


class ModelState:
    """Extractor plus the ordered classifier stack [h0, h1, ..., hi]."""

    def __init__(self, extractor: nn.Extractor, base: nn.Classifier,
                 novels: list[nn.Classifier] | None = None):
        self.extractor = extractor
        self.base = base
        self.novels: list[nn.Classifier] = list(novels) if novels else []
        d = extractor.feature_dim
        for block in self.blocks:
            if block.weight.shape[1] != d:
                raise ConfigError("classifier width must equal the feature dim")

    @property
    def blocks(self) -> list[nn.Classifier]:
        return [self.base, *self.novels]

    @property
    def session_index(self) -> int:
        return len(self.novels)

    @property
    def num_base_classes(self) -> int:
        return self.base.num_classes

    @property
    def num_novel_classes(self) -> int:
        return sum(c.num_classes for c in self.novels)

    @property
    def logit_width(self) -> int:
        return self.num_base_classes + self.num_novel_classes

    def features(self, inputs) -> np.ndarray:
        return nn.forward(self.extractor, inputs, "inference")

    def logits_for(self, inputs) -> np.ndarray:
        return nn.logits(self.blocks, self.features(inputs))

    def predict(self, inputs) -> np.ndarray:
        # np.argmax takes the first maximum, i.e. ties go to the lowest class.
        return np.argmax(self.logits_for(inputs), axis=1)

    def clone(self) -> "ModelState":
        return ModelState(
            self.extractor.clone(),
            self.base.clone(),
            [c.clone() for c in self.novels],
        )


def init_model(plan: SessionPlan, arch: nn.ExtractorArch, rng: Rng) -> ModelState:
    """Fresh extractor and randomly initialized base classifier."""
    extractor = nn.Extractor(arch, rng.split(1))
    scale = 1.0 / math.sqrt(arch.feature_dim)
    base = nn.Classifier.random_init(plan.K, arch.feature_dim, rng.split(2), scale)
    return ModelState(extractor, base)


def make_groups(model: ModelState, trainable: frozenset[str]) -> nn.ParamGroups:
    """Assemble the four named groups with freeze flags set from `trainable`."""
    groups = {
        "f": nn.GroupState(model.extractor.parameters(), frozen="f" not in trainable),
        "h0": nn.GroupState([model.base.weight], frozen="h0" not in trainable),
        "h_prev": nn.GroupState(
            [c.weight for c in model.novels[:-1]], frozen="h_prev" not in trainable
        ),
        "h_cur": nn.GroupState(
            [model.novels[-1].weight] if model.novels else [],
            frozen="h_cur" not in trainable,
        ),
    }
    return nn.ParamGroups(groups)


def _loss_and_grads(model: ModelState, x, labels, eps: float, train_f: bool):
    """Loss, prediction hits, per-group grads, and pending stat updates.

    train_f=True runs the feature normalization on batch statistics and
    backpropagates into the extractor; otherwise features are treated as
    constants of the frozen extractor.
    """
    features, caches, stat_updates = model.extractor.forward_cached(x, train_f)
    blocks = model.blocks
    logit_batch = nn.logits(blocks, features)
    loss, dlogits = nn.smoothed_cross_entropy(logit_batch, labels, eps)
    hits = int(np.sum(np.argmax(logit_batch, axis=1) == labels))

    block_grads = []
    col = 0
    dfeatures = np.zeros_like(features)
    for block in blocks:
        rows = block.num_classes
        sl = dlogits[:, col:col + rows]
        block_grads.append(sl.T @ features)
        dfeatures += sl @ block.weight
        col += rows
    grads = {
        "h0": [block_grads[0]],
        "h_prev": block_grads[1:-1] if len(blocks) > 1 else [],
        "h_cur": [block_grads[-1]] if len(blocks) > 1 else [],
        "f": model.extractor.backward(dfeatures, caches) if train_f else [],
    }
    return loss, hits, grads, stat_updates


@dataclass
class EpochLog:
    epoch: int
    lr: float
    loss: float
    accuracy: float


def train_base(model: ModelState, base_data: Dataset, cfg: nn.TrainConfig,
               rng: Rng) -> tuple[ModelState, list[EpochLog]]:
    """Minibatch SGD on f and h0 with label-smoothed cross-entropy.

    Batches are a fresh shuffle without replacement each epoch; the last
    partial batch is kept. Returns the per-epoch loss/accuracy log; raises
    TrainingError naming the epoch if the loss leaves the reals.
    """
    if model.session_index != 0:
        raise InputError("base training requires a model with no novel sessions")
    k = model.num_base_classes
    if base_data.labels.min() < 0 or base_data.labels.max() >= k:
        raise InputError("base data labels must lie in [0, K)")
    groups = make_groups(model, frozenset({"f", "h0"}))
    n = len(base_data)
    log: list[EpochLog] = []
    for epoch in range(cfg.epochs):
        lr = nn.lr_at(cfg, epoch)
        order = rng.split(epoch + 1).permutation(n)
        total_loss = 0.0
        total_hits = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x = base_data.inputs[idx]
            y = base_data.labels[idx]
            loss, hits, grads, stat_updates = _loss_and_grads(
                model, x, y, cfg.label_smoothing, train_f=True
            )
            if not math.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch}")
            model.extractor.apply_stat_updates(stat_updates)
            nn.sgd_step(groups, grads, cfg, lr=lr)
            total_loss += loss * len(idx)
            total_hits += hits
        log.append(EpochLog(epoch, lr, total_loss / n, total_hits / n))
    model.base.mark_sgd_trained()
    return model, log


def class_feature_means(model: ModelState, dataset: Dataset, classes) -> np.ndarray:
    """Per-class mean of inference-mode features, rows ordered like `classes`."""
    features = model.features(dataset.inputs)
    rows = []
    for cls in classes:
        mask = dataset.labels == cls
        if not mask.any():
            raise InputError(f"no samples available for class {cls}")
        rows.append(features[mask].mean(axis=0))
    return np.vstack(rows)


def snapshot_base_as_prototypes(model: ModelState, base_data: Dataset) -> ModelState:
    """Replace h0 rows with L2-normalized per-class feature means."""
    protos = class_feature_means(model, base_data, range(model.num_base_classes))
    model.base = nn.Classifier(l2_normalize_rows(protos),
                               [nn.ORIGIN_NORMALIZED] * model.num_base_classes)
    return model


def novel_prototypes(model: ModelState, session_data: Dataset, normalize: bool,
                     expected_classes=None) -> nn.Classifier:
    """Prototype classifier: per-class mean feature over the k shots.

    With normalize=True each row is divided by its L2 norm.
    """
    classes = (sorted(set(int(v) for v in session_data.labels))
               if expected_classes is None else list(expected_classes))
    for cls in classes:
        if not np.any(session_data.labels == cls):
            raise InputError(f"session data is missing class {cls}")
    protos = class_feature_means(model, session_data, classes)
    return nn.Classifier.from_prototypes(protos, normalize)


def _check_session_data(model: ModelState, plan_n: int | None, data: Dataset):
    """Validate contiguity and shot counts; returns (classes, shots)."""
    classes = sorted(set(int(v) for v in data.labels))
    start = model.logit_width
    n = len(classes)
    if plan_n is not None and n != plan_n:
        raise ConfigError(f"expected {plan_n} novel classes, got {n}")
    if classes != list(range(start, start + n)):
        raise ConfigError(
            f"session labels must cover [{start}, {start + n}), got {classes}"
        )
    counts = {cls: int(np.sum(data.labels == cls)) for cls in classes}
    shots = counts[classes[0]]
    if any(c != shots for c in counts.values()):
        raise ConfigError("every novel class must contribute the same shot count")
    return classes, shots


def run_novel_session(model: ModelState, session_data: Dataset, mode: UpdateMode,
                      ncfg: NovelTrainConfig, rng: Rng,
                      plan_n: int | None = None) -> ModelState:
    """Append this session's classifier and apply the mode's update rule.

    M1-M5 append a Gaussian(0, 0.01) classifier and train the mode's group
    set with full-batch SGD over all seen classes; the prototype modes build
    the classifier from feature means and never touch the optimizer.
    """
    classes, _ = _check_session_data(model, plan_n, session_data)
    style = NOVEL_INIT_STYLE[mode]
    if style == "random":
        new = nn.Classifier.random_init(
            len(classes), model.extractor.feature_dim, rng.split(1), NOVEL_INIT_SCALE
        )
    else:
        new = novel_prototypes(
            model, session_data, normalize=style == "normalized-prototype",
            expected_classes=classes,
        )
    model.novels.append(new)

    trainable = TRAINABLE_GROUPS[mode]
    if not trainable:
        return model

    train_f = "f" in trainable
    groups = make_groups(model, trainable)
    x = session_data.inputs
    y = session_data.labels
    for step in range(ncfg.steps):
        loss, _, grads, stat_updates = _loss_and_grads(model, x, y, 0.0, train_f)
        if not math.isfinite(loss):
            raise TrainingError(f"novel-session loss became non-finite at step {step}")
        if train_f:
            model.extractor.apply_stat_updates(stat_updates)
        nn.sgd_step(groups, grads, ncfg)
    for name in ("h0", "h_prev", "h_cur"):
        if name not in trainable:
            continue
        if name == "h0":
            model.base.mark_sgd_trained()
        elif name == "h_prev":
            for c in model.novels[:-1]:
                c.mark_sgd_trained()
        else:
            model.novels[-1].mark_sgd_trained()
    return model


DEFAULT_ARCH_HIDDEN = (64,)
DEFAULT_FEATURE_DIM = 128


def default_arch(input_dim: int) -> nn.ExtractorArch:
    return nn.ExtractorArch(input_dim, DEFAULT_ARCH_HIDDEN, DEFAULT_FEATURE_DIM)


def train_base_for_seed(plan: SessionPlan, full: FullData, base_cfg: nn.TrainConfig,
                        seed: int, arch: nn.ExtractorArch | None = None):
    """Base checkpoint for one seed: fresh init, then base-session training."""
    arch = arch or default_arch(full.input_dim)
    rng = Rng(seed)
    model = init_model(plan, arch, rng.split(STREAM_MODEL_INIT))
    base_data = session_stream(full, plan, 0)
    model, log = train_base(model, base_data, base_cfg, rng.split(STREAM_BASE_BATCHES))
    return model, log


def run_sessions(model: ModelState, plan: SessionPlan, full: FullData,
                 novel_cfg: NovelTrainConfig, mode: UpdateMode, seed: int) -> EvalReport:
    """Novel sessions 1..S from an already-prepared session-0 model,
    evaluating after every session including session 0."""
    rng = Rng(seed)
    report = EvalReport(plan=plan, seed=seed)
    row, profile = evaluate_model(model, *eval_split(full, plan, 0))
    report.rows.append(row)
    report.profiles.append(profile)
    for i in range(1, plan.S + 1):
        sdata = session_stream(full, plan, i)
        model = run_novel_session(
            model, sdata, mode, novel_cfg, rng.split(STREAM_SESSION_BASE + i), plan.n
        )
        row, profile = evaluate_model(model, *eval_split(full, plan, i))
        report.rows.append(row)
        report.profiles.append(profile)
    return report


def prepare_session0(model: ModelState, full: FullData, plan: SessionPlan,
                     mode: UpdateMode) -> ModelState:
    """Apply the mode's base-classifier treatment after base training."""
    if mode in REPLACES_BASE:
        snapshot_base_as_prototypes(model, session_stream(full, plan, 0))
    return model


def run_single(plan: SessionPlan, full: FullData, base_cfg: nn.TrainConfig,
               novel_cfg: NovelTrainConfig, mode: UpdateMode, seed: int,
               arch: nn.ExtractorArch | None = None) -> EvalReport:
    """One full protocol run for one seed."""
    model, _ = train_base_for_seed(plan, full, base_cfg, seed, arch)
    model = prepare_session0(model, full, plan, mode)
    return run_sessions(model, plan, full, novel_cfg, mode, seed)


def run_protocol(plan: SessionPlan, full: FullData, base_cfg: nn.TrainConfig,
                 novel_cfg: NovelTrainConfig, mode: UpdateMode, seeds,
                 arch: nn.ExtractorArch | None = None) -> list[EvalReport]:
    """The protocol across seeds; one EvalReport per seed, in seed order."""
    if not seeds:
        raise ConfigError("need at least one seed")
    return [
        run_single(plan, full, base_cfg, novel_cfg, mode, seed, arch)
        for seed in seeds
    ]
