"""Desk-scale training harness: synthetic paired data with planted shared structure,
linear encoders trained with the dual-domain objective, Precision@1 evaluation and
the orthogonal-perturbation ablation."""

import logging
import math
import multiprocessing as mp
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, ClassVar, Dict, List, Optional, Tuple

import numpy as np

from .core import FeatureMatrix, RngState, gaussian_matrix, random_orthogonal
from .enhance import DeltaSpec, ScheduleState, build_delta, enhance
from .errors import (
    ConfigurationError,
    DegeneracyError,
    DimensionError,
    RangeError,
    TrainingError,
)
from .gradcheck import grad_hellinger, grad_infonce, grad_subspace
from .losses import DEFAULT_TEMPERATURE, LOSS_MODES, LossReport, default_k, similarity_matrix, total_loss
from .spectral import SUBSPACES, SpectralDecomposition, SubspacePartition, partition, svd

logger = logging.getLogger(__name__)

WORKERS_ENV = "SDE_ABLATE_WORKERS"
SVD_GRAD_MODES = ("straight_through", "full")
LR_SCHEDULES = ("constant", "linear")
RESULT_COLUMNS = ("mode", "seed", "clean_p1", "perturbed_p1", "final_feat", "final_spec")

# Stream tags for independent branches of one seed.
INIT_STREAM = 0x1A17_0000_0000_0001
BATCH_STREAM = 0x1A17_0000_0000_0002
ENHANCE_STREAM = 0x1A17_0000_0000_0003
PERTURB_STREAM = 0x1A17_0000_0000_0004

# Hellinger and subspace shares of each mode's spectral term.
_SPECTRAL_SHARES = {
    "sde": (0.5, 0.5),
    "feat_plus_hellinger": (1.0, 0.0),
    "feat_plus_subspace": (0.0, 1.0),
    "infonce_only": (0.0, 0.0),
}

VARIANTS: Dict[str, Dict[str, Any]] = {
    "sde": {"mode": "sde"},
    "infonce_only": {"mode": "infonce_only"},
    "feat_plus_hellinger": {"mode": "feat_plus_hellinger"},
    "feat_plus_subspace": {"mode": "feat_plus_subspace"},
    "strong_only": {"mode": "sde", "enhance_subspaces": ("strong",)},
    "weak_only": {"mode": "sde", "enhance_subspaces": ("weak",)},
    "noise_only": {"mode": "sde", "enhance_subspaces": ("noise",)},
}

_INT = (int,)
_REAL = (int, float)
_OPT_INT = (int, type(None))
_OPT_REAL = (int, float, type(None))


def _type_name(accepted: tuple) -> str:
    names = {int: "an integer", float: "a number", str: "a string", list: "a list"}
    labels = [names.get(t, "null") for t in accepted]
    return " or ".join(dict.fromkeys(labels))


def _load_section(cls, section: str, data: Any):
    """Build config ``cls`` from a JSON object, naming any offending key."""
    if not isinstance(data, dict):
        raise ConfigurationError(f"config section '{section}' must be an object", context={"key": section})
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = f"{section}.{key}"
        if key not in known:
            raise ConfigurationError(f"unknown config key: {name}", context={"key": name})
        accepted = cls.FIELD_TYPES[key]
        # bool is an int subclass; never accept it for numeric keys
        if isinstance(value, bool) or not isinstance(value, accepted):
            raise ConfigurationError(
                f"config key {name} must be {_type_name(accepted)}", context={"key": name, "value": value}
            )
        if isinstance(value, list):
            if not all(isinstance(item, cls.LIST_ITEM_TYPES[key]) and not isinstance(item, bool) for item in value):
                raise ConfigurationError(f"config key {name} has invalid entries", context={"key": name})
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def _require(condition: bool, key: str, message: str, value: Any) -> None:
    if not condition:
        raise ConfigurationError(f"config key {key} {message}", context={"key": key, "value": value})


@dataclass(frozen=True)
class TaskConfig:
    latent_dim: int = 4
    nuisance_dim: int = 4
    ambient_dim: int = 32
    pairs: int = 512
    noise_scale: float = 0.5
    test_fraction: float = 0.25
    seed: int = 0

    FIELD_TYPES: ClassVar[Dict[str, tuple]] = {
        "latent_dim": _INT,
        "nuisance_dim": _INT,
        "ambient_dim": _INT,
        "pairs": _INT,
        "noise_scale": _REAL,
        "test_fraction": _REAL,
        "seed": _INT,
    }
    LIST_ITEM_TYPES: ClassVar[Dict[str, tuple]] = {}

    def __post_init__(self):
        _require(self.latent_dim >= 0, "task.latent_dim", "must be nonnegative", self.latent_dim)
        _require(self.nuisance_dim >= 0, "task.nuisance_dim", "must be nonnegative", self.nuisance_dim)
        _require(self.ambient_dim >= 1, "task.ambient_dim", "must be at least 1", self.ambient_dim)
        _require(
            self.ambient_dim >= self.latent_dim + self.nuisance_dim,
            "task.ambient_dim",
            "must be at least latent_dim + nuisance_dim",
            self.ambient_dim,
        )
        _require(self.noise_scale >= 0, "task.noise_scale", "must be nonnegative", self.noise_scale)
        _require(0 < self.test_fraction < 1, "task.test_fraction", "must lie in (0, 1)", self.test_fraction)
        _require(0 <= self.seed < 2**64, "task.seed", "must be an unsigned 64-bit integer", self.seed)

    @classmethod
    def from_dict(cls, data: dict) -> "TaskConfig":
        return _load_section(cls, "task", data)


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 500
    batch_size: int = 32
    temperature: float = DEFAULT_TEMPERATURE
    k: Optional[int] = None
    learning_rate: float = 0.05
    mode: str = "sde"
    svd_grad: str = "straight_through"
    seed: int = 0
    embed_dim: int = 32
    enhance_subspaces: Tuple[str, ...] = SUBSPACES
    alpha_override: Optional[float] = None
    lambda_override: Optional[float] = None
    lr_schedule: str = "constant"
    warmup_steps: int = 0
    perturb_fraction: float = 0.05

    FIELD_TYPES: ClassVar[Dict[str, tuple]] = {
        "total_steps": _INT,
        "batch_size": _INT,
        "temperature": _REAL,
        "k": _OPT_INT,
        "learning_rate": _REAL,
        "mode": (str,),
        "svd_grad": (str,),
        "seed": _INT,
        "embed_dim": _INT,
        "enhance_subspaces": (list,),
        "alpha_override": _OPT_REAL,
        "lambda_override": _OPT_REAL,
        "lr_schedule": (str,),
        "warmup_steps": _INT,
        "perturb_fraction": _REAL,
    }
    LIST_ITEM_TYPES: ClassVar[Dict[str, tuple]] = {"enhance_subspaces": (str,)}

    def __post_init__(self):
        _require(self.total_steps >= 1, "train.total_steps", "must be at least 1", self.total_steps)
        _require(self.batch_size >= 2, "train.batch_size", "must be at least 2", self.batch_size)
        _require(self.temperature > 0, "train.temperature", "must be positive", self.temperature)
        _require(self.k is None or self.k >= 1, "train.k", "must be at least 1", self.k)
        _require(self.learning_rate > 0, "train.learning_rate", "must be positive", self.learning_rate)
        _require(self.mode in LOSS_MODES, "train.mode", f"must be one of {list(LOSS_MODES)}", self.mode)
        _require(
            self.svd_grad in SVD_GRAD_MODES, "train.svd_grad", f"must be one of {list(SVD_GRAD_MODES)}", self.svd_grad
        )
        _require(0 <= self.seed < 2**64, "train.seed", "must be an unsigned 64-bit integer", self.seed)
        _require(self.embed_dim >= 1, "train.embed_dim", "must be at least 1", self.embed_dim)
        _require(
            set(self.enhance_subspaces) <= set(SUBSPACES),
            "train.enhance_subspaces",
            f"must be drawn from {list(SUBSPACES)}",
            list(self.enhance_subspaces),
        )
        for key in ("alpha_override", "lambda_override"):
            value = getattr(self, key)
            _require(value is None or value >= 0, f"train.{key}", "must be nonnegative", value)
        _require(
            self.lr_schedule in LR_SCHEDULES, "train.lr_schedule", f"must be one of {list(LR_SCHEDULES)}", self.lr_schedule
        )
        _require(
            0 <= self.warmup_steps < self.total_steps,
            "train.warmup_steps",
            "must lie in [0, total_steps)",
            self.warmup_steps,
        )
        _require(0 <= self.perturb_fraction <= 1, "train.perturb_fraction", "must lie in [0, 1]", self.perturb_fraction)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return _load_section(cls, "train", data)


@dataclass(frozen=True)
class AblationGrid:
    variants: Tuple[str, ...] = tuple(VARIANTS)
    seeds: Tuple[int, ...] = (0,)

    FIELD_TYPES: ClassVar[Dict[str, tuple]] = {"variants": (list,), "seeds": (list,)}
    LIST_ITEM_TYPES: ClassVar[Dict[str, tuple]] = {"variants": (str,), "seeds": (int,)}

    def __post_init__(self):
        unknown = [v for v in self.variants if v not in VARIANTS]
        _require(not unknown, "ablation.variants", f"has unknown entries, choose from {list(VARIANTS)}", unknown)
        _require(len(self.variants) >= 1, "ablation.variants", "must not be empty", list(self.variants))
        _require(len(self.seeds) >= 1, "ablation.seeds", "must not be empty", list(self.seeds))
        _require(all(0 <= s < 2**64 for s in self.seeds), "ablation.seeds", "must be unsigned 64-bit", list(self.seeds))

    @classmethod
    def from_dict(cls, data: dict) -> "AblationGrid":
        return _load_section(cls, "ablation", data)


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablation: AblationGrid = field(default_factory=AblationGrid)

    @classmethod
    def from_dict(cls, data: Any) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config root must be an object", context={"key": "<root>"})
        sections = {"task": TaskConfig, "train": TrainConfig, "ablation": AblationGrid}
        for key in data:
            if key not in sections:
                raise ConfigurationError(f"unknown config key: {key}", context={"key": key})
        return cls(**{key: sections[key].from_dict(value) for key, value in data.items()})

    def to_dict(self) -> dict:
        return {
            "task": asdict(self.task),
            "train": {**asdict(self.train), "enhance_subspaces": list(self.train.enhance_subspaces)},
            "ablation": {"variants": list(self.ablation.variants), "seeds": list(self.ablation.seeds)},
        }


def workers_from_env() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer", context={"key": WORKERS_ENV, "value": raw})
    if workers < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be at least 1", context={"key": WORKERS_ENV, "value": raw})
    return workers


@dataclass(frozen=True, eq=False)
class SyntheticTask:
    """Pairs ``x = A_x z + B_x u_x + eta_x`` and ``y = A_y z + B_y u_y + eta_y``
    sharing the latent ``z``."""

    config: TaskConfig
    ax: FeatureMatrix
    bx: FeatureMatrix
    ay: FeatureMatrix
    by: FeatureMatrix
    x: FeatureMatrix
    y: FeatureMatrix
    train_index: np.ndarray
    test_index: np.ndarray

    @property
    def train_pairs(self) -> Tuple[FeatureMatrix, FeatureMatrix]:
        return self.x[self.train_index], self.y[self.train_index]

    @property
    def test_pairs(self) -> Tuple[FeatureMatrix, FeatureMatrix]:
        return self.x[self.test_index], self.y[self.test_index]


def _draw(rng: RngState, m: int, n: int) -> Tuple[FeatureMatrix, RngState]:
    if n == 0:
        return np.zeros((m, 0)), rng
    return gaussian_matrix(rng, m, n)


def generate_task(cfg: TaskConfig, batch_size: int = 32) -> SyntheticTask:
    """Deterministic paired dataset from ``cfg.seed`` with a disjoint train/test split."""
    if cfg.pairs < 4 * batch_size:
        raise ConfigurationError(
            "config key task.pairs must be at least 4 * batch_size",
            context={"key": "task.pairs", "pairs": cfg.pairs, "batch_size": batch_size},
        )
    test_count = int(round(cfg.pairs * cfg.test_fraction))
    if test_count < 2 or cfg.pairs - test_count < batch_size:
        raise ConfigurationError(
            "config key task.test_fraction leaves too few train or test pairs",
            context={"key": "task.test_fraction", "test_pairs": test_count, "pairs": cfg.pairs},
        )

    rng = RngState(cfg.seed)
    n, p = cfg.ambient_dim, cfg.pairs
    ax, rng = _draw(rng, n, cfg.latent_dim)
    bx, rng = _draw(rng, n, cfg.nuisance_dim)
    ay, rng = _draw(rng, n, cfg.latent_dim)
    by, rng = _draw(rng, n, cfg.nuisance_dim)
    z, rng = _draw(rng, p, cfg.latent_dim)
    ux, rng = _draw(rng, p, cfg.nuisance_dim)
    uy, rng = _draw(rng, p, cfg.nuisance_dim)
    ex, rng = gaussian_matrix(rng, p, n, cfg.noise_scale)
    ey, rng = gaussian_matrix(rng, p, n, cfg.noise_scale)

    x = z @ ax.T + ux @ bx.T + ex
    y = z @ ay.T + uy @ by.T + ey
    order = rng.generator().permutation(p)
    test_index = np.sort(order[:test_count])
    train_index = np.sort(order[test_count:])
    logger.debug(f"synthetic task seed={cfg.seed}: {p - test_count} train / {test_count} test pairs")
    return SyntheticTask(
        config=cfg, ax=ax, bx=bx, ay=ay, by=by, x=x, y=y, train_index=train_index, test_index=test_index
    )


@dataclass(frozen=True, eq=False)
class EncoderParams:
    """Linear encoders ``X = X_raw W_x`` and ``Y = Y_raw W_y``."""

    wx: FeatureMatrix
    wy: FeatureMatrix

    @property
    def embed_dim(self) -> int:
        return int(self.wx.shape[1])

    def encode_x(self, xr: FeatureMatrix) -> FeatureMatrix:
        return xr @ self.wx

    def encode_y(self, yr: FeatureMatrix) -> FeatureMatrix:
        return yr @ self.wy

    def step(self, lr: float, grad_wx: FeatureMatrix, grad_wy: FeatureMatrix) -> "EncoderParams":
        return EncoderParams(wx=self.wx - lr * grad_wx, wy=self.wy - lr * grad_wy)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.wx)) and np.all(np.isfinite(self.wy)))


def init_params(rng: RngState, ambient_dim: int, embed_dim: int) -> Tuple[EncoderParams, RngState]:
    scale = 1.0 / math.sqrt(ambient_dim)
    wx, rng = gaussian_matrix(rng, ambient_dim, embed_dim, scale)
    wy, rng = gaussian_matrix(rng, ambient_dim, embed_dim, scale)
    return EncoderParams(wx=wx, wy=wy), rng


def oracle_encoder(task: SyntheticTask) -> EncoderParams:
    """Least-squares maps recovering the shared latent exactly when noise is zero."""
    cfg = task.config
    if cfg.latent_dim == 0:
        raise ConfigurationError("oracle encoder needs task.latent_dim >= 1", context={"key": "task.latent_dim"})
    wx = np.linalg.pinv(np.hstack([task.ax, task.bx]))[: cfg.latent_dim].T
    wy = np.linalg.pinv(np.hstack([task.ay, task.by]))[: cfg.latent_dim].T
    return EncoderParams(wx=wx, wy=wy)


def learning_rate_at(step: int, cfg: TrainConfig) -> float:
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    if step < cfg.warmup_steps:
        return cfg.learning_rate * (step + 1) / cfg.warmup_steps
    remaining = cfg.total_steps - step
    return cfg.learning_rate * remaining / (cfg.total_steps - cfg.warmup_steps)


@dataclass(frozen=True)
class StepRecord:
    """One log line: schedule, losses, the strong/weak/noise counts of both
    un-enhanced embedding batches, and the deltas that enhanced the batch."""

    schedule: ScheduleState
    report: LossReport
    learning_rate: float
    spectral_grad: str
    components: Tuple[Dict[str, int], Dict[str, int]]
    deltas: Optional[Tuple[DeltaSpec, DeltaSpec]] = None

    def proportions(self, side: int) -> Dict[str, float]:
        counts = self.components[side]
        rank = sum(counts.values())
        return {name: count / rank for name, count in counts.items()}

    def to_dict(self) -> dict:
        return {
            "step": self.schedule.step,
            "schedule": self.schedule.to_dict(),
            "loss": self.report.to_dict(),
            "learning_rate": self.learning_rate,
            "spectral_grad": self.spectral_grad,
            "components": {"x": dict(self.components[0]), "y": dict(self.components[1])},
            "deltas": None if self.deltas is None else [d.to_dict() for d in self.deltas],
        }


@dataclass(frozen=True, eq=False)
class StepResult:
    record: StepRecord
    grad_wx: FeatureMatrix
    grad_wy: FeatureMatrix
    rng: RngState


def _enhance_side(
    f: FeatureMatrix,
    dec: SpectralDecomposition,
    part: SubspacePartition,
    alpha: float,
    rng: RngState,
    subspaces,
    recorded: Optional[DeltaSpec],
) -> Tuple[FeatureMatrix, DeltaSpec, RngState]:
    if recorded is None:
        recorded, rng = build_delta(dec, part, alpha, rng, subspaces)
    return enhance(f, recorded, dec), recorded, rng


def _spectral_gradients(
    xe: FeatureMatrix,
    ye: FeatureMatrix,
    k: int,
    cfg: TrainConfig,
    decs: Tuple[SpectralDecomposition, SpectralDecomposition],
) -> Optional[Tuple[FeatureMatrix, FeatureMatrix]]:
    """Gradient of the mode's spectral term, or None when nothing flows.

    In straight-through mode the factors are constants, so only the singular-value
    (Hellinger) path contributes.
    """
    h_share, s_share = _SPECTRAL_SHARES[cfg.mode]
    if cfg.svd_grad == "straight_through":
        s_share = 0.0
    if h_share == 0 and s_share == 0:
        return None
    gx, gy = np.zeros_like(xe), np.zeros_like(ye)
    if h_share:
        hx, hy = grad_hellinger(xe, ye, decompositions=decs)
        gx, gy = gx + h_share * hx, gy + h_share * hy
    if s_share:
        sx, sy = grad_subspace(xe, ye, k, decompositions=decs)
        gx, gy = gx + s_share * sx, gy + s_share * sy
    return gx, gy


def sde_step(
    params: EncoderParams,
    xr: FeatureMatrix,
    yr: FeatureMatrix,
    schedule: ScheduleState,
    cfg: TrainConfig,
    rng: RngState,
    deltas: Optional[Tuple[DeltaSpec, DeltaSpec]] = None,
) -> StepResult:
    """Encode, enhance, score and differentiate one batch.

    Passing the ``deltas`` recorded in an earlier StepRecord replays that step
    exactly instead of drawing new perturbations.
    """
    if xr.shape != yr.shape:
        raise DimensionError("raw batches must share shape", context={"X": list(xr.shape), "Y": list(yr.shape)})
    x = params.encode_x(xr)
    y = params.encode_y(yr)

    m, n = x.shape
    raw = (svd(x), svd(y))
    parts = (partition(raw[0], m, n), partition(raw[1], m, n))

    used = None
    if deltas is not None or (cfg.mode != "infonce_only" and schedule.alpha > 0):
        dx, dy = deltas if deltas is not None else (None, None)
        xe, dx, rng = _enhance_side(x, raw[0], parts[0], schedule.alpha, rng, cfg.enhance_subspaces, dx)
        ye, dy, rng = _enhance_side(y, raw[1], parts[1], schedule.alpha, rng, cfg.enhance_subspaces, dy)
        used = (dx, dy)
        decs = (svd(xe), svd(ye))
        scored = None
    else:
        xe, ye = x, y
        decs, scored = raw, parts

    k = cfg.k
    if k is None:
        if scored is None:
            scored = (partition(decs[0], m, n), partition(decs[1], m, n))
        k = default_k(*scored)
    report = total_loss(xe, ye, schedule, k=k, tau=cfg.temperature, mode=cfg.mode, decompositions=decs)
    if not math.isfinite(report.total):
        raise TrainingError("loss diverged", context={"step": schedule.step, "total": report.total})

    # Enhancement is treated as identity in the backward pass.
    gx, gy = grad_infonce(xe, ye, cfg.temperature)
    status = "off"
    if schedule.lam != 0:
        try:
            spectral = _spectral_gradients(xe, ye, k, cfg, decs)
        except DegeneracyError as e:
            logger.warning(f"step {schedule.step}: skipping spectral gradient ({e.message})")
            status = "skipped"
        else:
            if spectral is not None:
                gx = gx + schedule.lam * spectral[0]
                gy = gy + schedule.lam * spectral[1]
                status = "applied"

    grad_wx = xr.T @ gx
    grad_wy = yr.T @ gy
    if not (np.all(np.isfinite(grad_wx)) and np.all(np.isfinite(grad_wy))):
        raise TrainingError("non-finite gradient", context={"step": schedule.step})

    record = StepRecord(
        schedule=schedule,
        report=report,
        learning_rate=learning_rate_at(schedule.step, cfg),
        spectral_grad=status,
        components=(parts[0].counts, parts[1].counts),
        deltas=used,
    )
    return StepResult(record=record, grad_wx=grad_wx, grad_wy=grad_wy, rng=rng)


def step_schedule(step: int, cfg: TrainConfig) -> ScheduleState:
    schedule = ScheduleState.at(step, cfg.total_steps, cfg.batch_size)
    return schedule.with_overrides(alpha=cfg.alpha_override, lam=cfg.lambda_override)


def train(task: SyntheticTask, cfg: TrainConfig) -> Tuple[EncoderParams, List[StepRecord]]:
    """Plain gradient descent on the dual-domain objective.

    InfoNCE is summed over the batch, so each step uses ``learning_rate / batch_size``.
    """
    xt, yt = task.train_pairs
    if xt.shape[0] < cfg.batch_size:
        raise ConfigurationError(
            "config key train.batch_size exceeds the number of training pairs",
            context={"key": "train.batch_size", "train_pairs": int(xt.shape[0])},
        )
    root = RngState(cfg.seed)
    params, _ = init_params(root.fork(INIT_STREAM), task.config.ambient_dim, cfg.embed_dim)
    batch_rng = root.fork(BATCH_STREAM)
    enhance_rng = root.fork(ENHANCE_STREAM)

    log: List[StepRecord] = []
    for t in range(cfg.total_steps):
        batch = batch_rng.generator().choice(xt.shape[0], size=cfg.batch_size, replace=False)
        batch_rng = batch_rng.advance()
        result = sde_step(params, xt[batch], yt[batch], step_schedule(t, cfg), cfg, enhance_rng)
        enhance_rng = result.rng
        lr = result.record.learning_rate / cfg.batch_size
        params = params.step(lr, result.grad_wx, result.grad_wy)
        if not params.is_finite():
            raise TrainingError("parameters diverged", context={"step": t})
        log.append(result.record)
        report = result.record.report
        logger.debug(f"step {t}: feat={report.feat:.4f} spec={report.spec:.4f} total={report.total:.4f}")

    logger.info(f"trained {cfg.mode} for {cfg.total_steps} steps (seed {cfg.seed})")
    return params, log


def retrieval_precision(queries: FeatureMatrix, targets: FeatureMatrix) -> float:
    """Fraction of queries whose own target has the highest cosine; ties go to the
    lowest candidate index."""
    if queries.shape[0] < 2:
        raise DimensionError("precision needs at least two pairs", context={"pairs": int(queries.shape[0])})
    sims = similarity_matrix(queries, targets)
    best = np.argmax(sims, axis=1)
    return float(np.mean(best == np.arange(queries.shape[0])))


def precision_at_1(params: EncoderParams, xr: FeatureMatrix, yr: FeatureMatrix) -> float:
    return retrieval_precision(params.encode_x(xr), params.encode_y(yr))


def perturbed_eval(
    params: EncoderParams, xr: FeatureMatrix, yr: FeatureMatrix, fraction: float, rng: RngState
) -> Tuple[float, RngState]:
    """Precision@1 after mapping a random ``fraction`` of target embeddings through
    independent random orthogonal matrices."""
    if not 0 <= fraction <= 1:
        raise RangeError("fraction must lie in [0, 1]", context={"fraction": fraction})
    queries = params.encode_x(xr)
    targets = params.encode_y(yr)
    count = int(math.floor(fraction * targets.shape[0] + 0.5))
    if count:
        chosen = np.sort(rng.generator().choice(targets.shape[0], size=count, replace=False))
        rng = rng.advance()
        targets = targets.copy()
        for i in chosen:
            q, rng = random_orthogonal(rng, targets.shape[1])
            targets[i] = q @ targets[i]
    return retrieval_precision(queries, targets), rng


@dataclass(frozen=True)
class ExperimentResult:
    mode: str
    seed: int
    clean_p1: float
    perturbed_p1: float
    final_feat: float
    final_spec: float
    initial_feat: float

    @property
    def drop(self) -> float:
        return self.clean_p1 - self.perturbed_p1

    def row(self) -> list:
        return [self.mode, self.seed, self.clean_p1, self.perturbed_p1, self.final_feat, self.final_spec]

    def to_dict(self) -> dict:
        return {**dict(zip(RESULT_COLUMNS, self.row())), "initial_feat": self.initial_feat}


@dataclass(frozen=True, eq=False)
class ExperimentRun:
    result: ExperimentResult
    params: EncoderParams
    log: List[StepRecord]


def run_experiment(task_cfg: TaskConfig, train_cfg: TrainConfig, label: Optional[str] = None) -> ExperimentRun:
    """Generate the task, train, then evaluate clean and perturbed Precision@1."""
    task = generate_task(task_cfg, train_cfg.batch_size)
    params, log = train(task, train_cfg)
    xs, ys = task.test_pairs
    clean = precision_at_1(params, xs, ys)
    perturbed, _ = perturbed_eval(params, xs, ys, train_cfg.perturb_fraction, RngState(train_cfg.seed).fork(PERTURB_STREAM))
    result = ExperimentResult(
        mode=label or train_cfg.mode,
        seed=train_cfg.seed,
        clean_p1=clean,
        perturbed_p1=perturbed,
        final_feat=log[-1].report.feat,
        final_spec=log[-1].report.spec,
        initial_feat=log[0].report.feat,
    )
    logger.info(f"{result.mode} seed={result.seed}: clean P@1 {clean:.4f}, perturbed {perturbed:.4f}")
    return ExperimentRun(result=result, params=params, log=log)


def variant_configs(
    task_cfg: TaskConfig, train_cfg: TrainConfig, variant: str, seed: int
) -> Tuple[TaskConfig, TrainConfig]:
    return replace(task_cfg, seed=seed), replace(train_cfg, seed=seed, **VARIANTS[variant])


def _run_job(job: Tuple[str, TaskConfig, TrainConfig]) -> ExperimentResult:
    variant, task_cfg, train_cfg = job
    return run_experiment(task_cfg, train_cfg, label=variant).result


def ablation_suite(
    task_cfg: TaskConfig, train_cfg: TrainConfig, grid: AblationGrid, workers: int = 1
) -> List[ExperimentResult]:
    """Every variant on every seed, returned in grid order (variant-major)."""
    jobs = [
        (variant, *variant_configs(task_cfg, train_cfg, variant, seed))
        for variant in grid.variants
        for seed in grid.seeds
    ]
    logger.info(f"ablation: {len(jobs)} runs on {workers} worker(s)")
    if workers <= 1 or len(jobs) == 1:
        return [_run_job(job) for job in jobs]
    with mp.Pool(min(workers, len(jobs))) as pool:
        return pool.map(_run_job, jobs)
