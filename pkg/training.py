"""
Training loop, optimizer, gradient checking and validation metrics for the
surrogate models.
"""

import logging
import math
from dataclasses import dataclass, fields
from typing import Dict, List, Mapping, Optional

import numpy as np
import pandas as pd
from sklearn.metrics import mean_absolute_error, r2_score

from config import TRAIN_SETTINGS
from corpus import Corpus
from surrogate import Grads, SurrogateModel, mse_loss

logger = logging.getLogger(__name__)

EVAL_BATCH = 256


class TrainingError(RuntimeError):
    """Training cannot proceed (empty data or a diverged loss)"""

    def __init__(self, message: str, epoch: Optional[int] = None):
        self.epoch = epoch
        where = f"epoch {epoch}: " if epoch is not None else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = TRAIN_SETTINGS["max_epochs"]
    patience: Optional[int] = TRAIN_SETTINGS["patience"]  # None disables early stopping
    batch_size: int = TRAIN_SETTINGS["batch_size"]
    learning_rate: float = TRAIN_SETTINGS["learning_rate"]
    beta1: float = TRAIN_SETTINGS["beta1"]
    beta2: float = TRAIN_SETTINGS["beta2"]
    epsilon: float = TRAIN_SETTINGS["epsilon"]
    validation_fraction: float = TRAIN_SETTINGS["validation_fraction"]
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.patience is not None and not 0 < self.patience < self.max_epochs:
            raise ValueError("patience must be positive and below max_epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be strictly between 0 and 1")

    @classmethod
    def from_dict(cls, settings: Mapping = None, **overrides) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in dict(settings or TRAIN_SETTINGS).items() if k in known}
        values.update(overrides)
        return cls(**values)


class Adam:
    """Adaptive-moment optimizer with one moment pair per named tensor"""

    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.epsilon = beta1, beta2, epsilon
        self._state: Dict[str, dict] = {}

    def step(self, model: SurrogateModel, grads: Grads) -> None:
        for layer in model.layers:
            for key, param in layer.params.items():
                name = f"{layer.name}.{key}"
                grad = grads[name]
                st = self._state.setdefault(name, {"t": 0, "m": np.zeros_like(param), "v": np.zeros_like(param)})
                st["t"] += 1
                st["m"] = self.beta1 * st["m"] + (1 - self.beta1) * grad
                st["v"] = self.beta2 * st["v"] + (1 - self.beta2) * (grad * grad)
                m_hat = st["m"] / (1 - self.beta1 ** st["t"])
                v_hat = st["v"] / (1 - self.beta2 ** st["t"])
                layer.params[key] = (param - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
                                     ).astype(param.dtype)


class EarlyStopping:
    """Stop when validation loss has not improved for `patience` epochs"""

    def __init__(self, patience: Optional[int]):
        self.patience = patience
        self.counter = 0
        self.best_loss = math.inf

    def __call__(self, val_loss: float) -> bool:
        """Record an epoch; True when training should stop"""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.counter = 0
            return False
        self.counter += 1
        return self.patience is not None and self.counter >= self.patience


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass(frozen=True)
class Metrics:
    mae_t: float
    mae_s: float
    r2_t: float
    r2_s: float

    def to_frame(self, model: str = "") -> pd.DataFrame:
        row = {"MAE_t": self.mae_t, "MAE_s": self.mae_s, "R2_t": self.r2_t, "R2_s": self.r2_s}
        return pd.DataFrame([row], index=[model] if model else None)


@dataclass
class TrainResult:
    model: SurrogateModel
    metrics: Metrics
    log: List[EpochRecord]
    best_epoch: int

    def log_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.log], columns=["epoch", "train_loss", "val_loss"])


def _r2(targets: np.ndarray, predictions: np.ndarray, label: str) -> float:
    if np.var(targets) == 0:
        logger.warning("R2 for %s is undefined: targets have zero variance", label)
        return math.nan
    return float(r2_score(targets, predictions))


def metrics(predictions: np.ndarray, targets: np.ndarray) -> Metrics:
    """MAE and R2 per output; both arrays are (N,2) in [score, duration] order"""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or predictions.ndim != 2 or predictions.shape[1] != 2:
        raise ValueError(f"predictions {predictions.shape} and targets {targets.shape} must both be (N, 2)")
    if len(targets) < 2:
        raise ValueError("metrics need at least 2 samples")
    return Metrics(
        mae_t=float(mean_absolute_error(targets[:, 1], predictions[:, 1])),
        mae_s=float(mean_absolute_error(targets[:, 0], predictions[:, 0])),
        r2_t=_r2(targets[:, 1], predictions[:, 1], "duration"),
        r2_s=_r2(targets[:, 0], predictions[:, 0], "score"),
    )


def predict_corpus(model: SurrogateModel, data: Corpus, batch_size: int = EVAL_BATCH) -> np.ndarray:
    outputs = [model(data.channels[i:i + batch_size], data.params[i:i + batch_size])
               for i in range(0, len(data), batch_size)]
    return np.concatenate(outputs, axis=0)


def evaluate_loss(model: SurrogateModel, data: Corpus, batch_size: int = EVAL_BATCH) -> float:
    return mse_loss(predict_corpus(model, data, batch_size), data.targets)[0]


def train(model: SurrogateModel, train_set: Corpus, val_set: Corpus,
          cfg: TrainConfig = None) -> TrainResult:
    """Mini-batch Adam on the summed MSE, with early stopping and restore-best"""
    cfg = cfg or TrainConfig()
    if len(train_set) == 0 or len(val_set) == 0:
        raise TrainingError("training and validation sets must be non-empty")

    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    stopper = EarlyStopping(cfg.patience)
    targets = train_set.targets
    best_state, best_epoch = model.state_dict(), 0
    log: List[EpochRecord] = []

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = model.loss_and_gradients(train_set.channels[batch], train_set.params[batch],
                                                   targets[batch])
            if not math.isfinite(loss):
                raise TrainingError("training loss is not finite", epoch)
            optimizer.step(model, grads)
            total += loss * len(batch)

        train_loss = total / len(order)
        val_loss = evaluate_loss(model, val_set)
        if not math.isfinite(val_loss):
            raise TrainingError("validation loss is not finite", epoch)
        log.append(EpochRecord(epoch, train_loss, val_loss))
        logger.debug("epoch %d: train %.5f, validation %.5f", epoch, train_loss, val_loss)

        stop = stopper(val_loss)
        if stopper.counter == 0:
            best_state, best_epoch = model.state_dict(), epoch
        if stop:
            logger.info("early stopping at epoch %d (best %d)", epoch, best_epoch)
            break

    model.load_state_dict(best_state)
    result_metrics = metrics(predict_corpus(model, val_set), val_set.targets)
    return TrainResult(model, result_metrics, log, best_epoch)


# -------------------------
# GRADIENT CHECK
# -------------------------

def gradient_check(model: SurrogateModel, channels: np.ndarray, params: np.ndarray, targets: np.ndarray,
                   epsilon: float = 1e-5, samples_per_tensor: Optional[int] = 25, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs on a float64 copy of the model. Each tensor contributes a random subset
    of samples_per_tensor entries, or every entry when samples_per_tensor is None.
    Relative error is |a - n| / max(|a|, |n|, 1e-6).
    """
    wide = model.astype(np.float64)
    channels = np.asarray(channels, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    _, analytic = wide.loss_and_gradients(channels, params, targets)
    rng = np.random.default_rng(seed)

    def loss() -> float:
        return mse_loss(wide(channels, params), targets)[0]

    worst = 0.0
    for layer in wide.layers:
        for key, tensor in layer.params.items():
            grad = analytic[f"{layer.name}.{key}"].reshape(-1)
            flat = tensor.reshape(-1)
            if samples_per_tensor is None or samples_per_tensor >= flat.size:
                entries = np.arange(flat.size)
            else:
                entries = rng.choice(flat.size, size=samples_per_tensor, replace=False)
            for i in entries:
                original = flat[i]
                flat[i] = original + epsilon
                plus = loss()
                flat[i] = original - epsilon
                minus = loss()
                flat[i] = original
                numeric = (plus - minus) / (2 * epsilon)
                error = abs(grad[i] - numeric) / max(abs(grad[i]), abs(numeric), 1e-6)
                worst = max(worst, error)
    return worst

