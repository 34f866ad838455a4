"""Minibatch SGD training and center-clip evaluation of a ToyNet."""

import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional

import numpy as np

from . import ops
from .config import TrainConfig
from .dataset import ClipDataset
from .errors import DataError, NumericError
from .metrics import TrainingMetrics
from .optim import SGD
from .tensor import no_grad
from .toynet import ToyNet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochRecord:
    """One history row; ``epoch`` counts from 1 and ``lr`` is the rate used in it."""

    epoch: int
    lr: float
    loss: float
    top1: float
    val_top1: Optional[float] = None

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class EvalResult:
    top1: float
    top5: float
    clips: int

    def to_dict(self) -> Dict:
        return asdict(self)


def _topk_hits(logits: np.ndarray, labels: np.ndarray, k: int) -> int:
    # stable sort keeps the lowest class index first among ties
    ranked = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return int((ranked == labels[:, None]).any(axis=1).sum())


def train(
    net: ToyNet,
    data: ClipDataset,
    cfg: TrainConfig,
    val_data: Optional[ClipDataset] = None,
    metrics: Optional[TrainingMetrics] = None,
) -> List[EpochRecord]:
    """Train ``net`` in place and return the per-epoch history.

    Batch order and frame sampling come from one generator seeded with
    ``cfg.seed``, so equal seeds give bit-identical histories and weights.
    """
    if len(data) == 0:
        raise DataError("training split is empty")
    schedule = cfg.schedule()
    backbone, temporal = net.parameter_groups()
    optimizer = SGD(backbone, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    if temporal:
        optimizer.add_group(temporal, cfg.gate_lr_mult)
    rng = np.random.default_rng(cfg.seed)
    metrics = metrics or TrainingMetrics()
    history: List[EpochRecord] = []

    for epoch in range(cfg.epochs):
        lr = schedule.lr_at(epoch)
        net.train()
        loss_sum, correct, seen = 0.0, 0, 0
        for clips, labels in data.batches(cfg.segments, cfg.batch_size, mode="random", rng=rng, shuffle=True):
            started = time.perf_counter()
            logits = net(clips)
            loss = ops.softmax_xent(logits, labels)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(
                    f"non-finite loss {value} at epoch {epoch + 1} (lr={lr:g}, batch of {len(labels)}); "
                    "lower the learning rate or check the input data"
                )
            loss.backward()
            optimizer.step(lr)
            loss_sum += value * len(labels)
            correct += int((logits.data.argmax(axis=1) == labels).sum())
            seen += len(labels)
            metrics.record_batch((time.perf_counter() - started) * 1000.0, len(labels))

        val_top1 = evaluate(net, val_data, cfg.segments).top1 if val_data is not None else None
        record = EpochRecord(epoch + 1, lr, loss_sum / seen, 100.0 * correct / seen, val_top1)
        history.append(record)
        logger.info(
            "[Trainer] epoch %d/%d lr=%.4g loss=%.4f top1=%.1f%s",
            record.epoch, cfg.epochs, lr, record.loss, record.top1,
            "" if val_top1 is None else f" val_top1={val_top1:.1f}",
        )
    net.eval()
    return history


def predict(net: ToyNet, data: ClipDataset, segments: int, batch_size: int = 32) -> np.ndarray:
    """Consensus logits for every video, center-sampled, in eval mode."""
    if len(data) == 0:
        raise DataError(f"{data.split} split is empty")
    was_training = net.training
    net.eval()
    try:
        with no_grad():
            chunks = [net(clips).data for clips, _ in data.batches(segments, batch_size, mode="center")]
    finally:
        net.training = was_training
    return np.concatenate(chunks, axis=0)


def evaluate(net: ToyNet, data: ClipDataset, segments: int, batch_size: int = 32) -> EvalResult:
    if data is None or len(data) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    logits = predict(net, data, segments, batch_size)
    labels = data.labels
    k = min(5, logits.shape[1])
    return EvalResult(
        top1=100.0 * _topk_hits(logits, labels, 1) / len(labels),
        top5=100.0 * _topk_hits(logits, labels, k) / len(labels),
        clips=len(labels),
    )
