"""Finite-difference verification of every differentiable op and excitation path."""

import logging
from concurrent import futures
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import ops
from .config import thread_cap
from .errors import DataError, NumericError, ShapeError
from .excitation import (
    ActionWeights,
    CeWeights,
    MeWeights,
    SteWeights,
    action_forward,
    ce_forward,
    me_forward,
    segment_consensus,
    ste_forward,
    temporal_shift,
)
from .tensor import Parameter, Tensor, no_grad

logger = logging.getLogger(__name__)

ABS_FLOOR = 1e-8
SUITE_TOLERANCE = 1e-4

ScalarFn = Callable[..., Tensor]
CaseBuilder = Callable[[np.random.Generator], Tuple[ScalarFn, List[Tensor]]]


def _finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"non-finite value encountered in {what}")


def _reset_grad(t: Tensor) -> None:
    if isinstance(t, Parameter):
        t.zero_grad()
    else:
        t.grad = None


def grad_check(fn: ScalarFn, inputs: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Largest relative error between analytic and central-difference gradients.

    The error of one element is |a - n| / max(|a|, |n|, 1e-8), where ``a`` is
    the backward-pass gradient and ``n`` is (f(x + eps) - f(x - eps)) / (2 eps).
    The result is the maximum over every element of every input.
    """
    inputs = list(inputs)
    for t in inputs:
        if t.dtype != np.float64:
            raise DataError(f"grad_check needs double precision inputs, got {t.dtype}")
        t.requires_grad = True
        _reset_grad(t)

    out = fn(*inputs)
    if out.size != 1:
        raise ShapeError(f"grad_check needs a scalar function, got output shape {out.shape}")
    _finite(out.data, "function value")
    out.backward()

    worst = 0.0
    for index, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        _finite(analytic, f"analytic gradient of input {index}")
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + eps
                plus = fn(*inputs).item()
                flat[i] = original - eps
                minus = fn(*inputs).item()
                flat[i] = original
                numeric.flat[i] = (plus - minus) / (2.0 * eps)
        _finite(numeric, f"numeric gradient of input {index}")
        scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ABS_FLOOR)
        worst = max(worst, float((np.abs(analytic - numeric) / scale).max()))
    return worst


@dataclass(frozen=True)
class GradCheckRecord:
    op: str
    shape: str
    max_rel_error: float
    passed: bool

    def to_dict(self) -> Dict:
        return asdict(self)


# -- suite cases ------------------------------------------------------------


def _leaf(rng: np.random.Generator, shape: Sequence[int], away_from_zero: bool = False) -> Tensor:
    values = rng.standard_normal(tuple(shape))
    if away_from_zero:
        values = np.sign(values) * (0.1 + np.abs(values))
    return Tensor(values, requires_grad=True, dtype=np.float64)


def _projected(rng: np.random.Generator, forward: Callable[..., Tensor], inputs: List[Tensor]) -> ScalarFn:
    """Random linear functional of ``forward``'s output, so every output element matters."""
    with no_grad():
        shape = forward(*inputs).shape
    weights = rng.standard_normal(shape)
    return lambda *args: ops.sum_all(ops.multiply(forward(*args), weights))


def _case(forward: Callable[..., Tensor], *shapes, away_from_zero: bool = False) -> CaseBuilder:
    def build(rng: np.random.Generator):
        inputs = [_leaf(rng, s, away_from_zero) for s in shapes]
        return _projected(rng, forward, inputs), inputs

    return build


def _conv_case(rank: int, batch: int, c_in: int, c_out: int, size: int, k: int, stride: int, pad: int, groups: int) -> CaseBuilder:
    x_shape = (batch, c_in) + (size,) * rank
    k_shape = (c_out, c_in // groups) + (k,) * rank
    forward = lambda x, w, b: ops.convolve(x, w, b, spatial_rank=rank, stride=stride, zero_pad=pad, groups=groups)
    return _case(forward, x_shape, k_shape, (c_out,))


def _path_case(path: str, shape: Tuple[int, int, int, int, int]) -> CaseBuilder:
    forwards = {"ste": ste_forward, "ce": ce_forward, "me": me_forward, "action": action_forward}

    def build(rng: np.random.Generator):
        channels = shape[2]
        if path == "ste":
            weights = SteWeights.create(rng, zero_gates=False)
        elif path == "ce":
            weights = CeWeights.create(channels, rng, zero_gates=False)
        elif path == "me":
            weights = MeWeights.create(channels, rng, zero_gates=False)
        else:
            weights = ActionWeights.create(channels, rng, zero_gates=False)
        x = _leaf(rng, shape)
        inputs = [x] + [param for _, param in weights.named_parameters()]
        return _projected(rng, lambda x_, *_: forwards[path](x_, weights), inputs), inputs

    return build


def _bn_forward(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    channels = x.shape[1]
    return ops.batch_norm(x, gamma, beta, np.zeros(channels), np.ones(channels), training=True)


def _xent_case(batch: int, classes: int) -> CaseBuilder:
    def build(rng: np.random.Generator):
        labels = rng.integers(0, classes, size=batch)
        logits = _leaf(rng, (batch, classes))
        return (lambda z: ops.softmax_xent(z, labels)), [logits]

    return build


_PATH_SHAPES = [(1, 2, 2, 3, 3), (2, 3, 4, 2, 2), (1, 4, 16, 2, 2), (1, 3, 32, 2, 3), (2, 1, 3, 3, 2)]


def suite_cases() -> List[Tuple[str, str, CaseBuilder]]:
    """(op, shape description, case builder) for every checked configuration."""
    cases: List[Tuple[str, str, CaseBuilder]] = []

    for new_shape, order, src in [
        ((3, 2), (1, 0), (2, 3)),
        ((2, 3, 1), (0, 2, 1), (1, 2, 3)),
        ((4, 6), (1, 0), (2, 3, 4)),
        ((3, 4), (1, 0), (4, 1, 3)),
        ((2, 2, 4), (2, 0, 1), (2, 2, 2, 2)),
    ]:
        forward = lambda x, n=new_shape, o=order: ops.reshape_permute(x, n, o)
        cases.append(("reshape_permute", f"{src}->{new_shape}/{order}", _case(forward, src)))

    for shape, axis in [((3,), 0), ((2, 3), 1), ((1, 2, 4, 2, 2), 2), ((2, 3, 4, 5), (2, 3)), ((2, 2, 3), (0, 2))]:
        forward = lambda x, a=axis: ops.mean_axis(x, a, keep=True)
        cases.append(("mean_axis", f"{shape} axis={axis}", _case(forward, shape)))

    for shape in [(4,), (2, 3), (2, 3, 4), (1, 2, 3, 2, 2), (5, 1)]:
        cases.append(("sigmoid_map", str(shape), _case(ops.sigmoid_map, shape)))
        cases.append(("relu", str(shape), _case(ops.relu, shape, away_from_zero=True)))

    conv_configs = [
        (1, 2, 3, 2, 5, 3, 1, 1, 1),
        (1, 1, 4, 4, 6, 3, 2, 1, 2),
        (1, 2, 2, 3, 4, 1, 1, 0, 1),
        (2, 2, 3, 4, 5, 3, 1, 1, 1),
        (2, 1, 4, 4, 5, 3, 1, 1, 4),
        (2, 2, 4, 2, 6, 3, 2, 1, 2),
        (2, 1, 2, 3, 4, 1, 1, 0, 1),
        (3, 1, 1, 1, 3, 3, 1, 1, 1),
        (3, 2, 2, 2, 4, 3, 1, 1, 2),
        (3, 1, 2, 3, 3, 2, 1, 0, 1),
    ]
    for config in conv_configs:
        rank, batch, c_in, c_out, size, k, stride, pad, groups = config
        label = f"x=({batch},{c_in},{size}^{rank}) k={k} s={stride} p={pad} g={groups}"
        cases.append((f"convolve{rank}d", label, _conv_case(*config)))

    for batch_shape, out in [((3,), 2), ((2, 4), 3), ((2, 3, 5), 4), ((1, 1), 1), ((4, 2), 6)]:
        forward = lambda x, w, b: ops.linear_map(x, w, b)
        cases.append(("linear_map", f"{batch_shape}->{out}", _case(forward, batch_shape, (out, batch_shape[-1]), (out,))))

    for x_shape, m_shape in [
        ((1, 2, 4, 2, 2), (1, 2, 1, 2, 2)),
        ((2, 3, 5, 1, 1), (2, 3, 5, 1, 1)),
        ((1, 2, 3, 2, 2), (1, 2, 3, 1, 1)),
        ((2, 2, 2, 3, 3), (2, 2, 1, 3, 3)),
        ((3, 4), (3, 1)),
    ]:
        cases.append(("broadcast_mul_add", f"{x_shape}*{m_shape}", _case(ops.broadcast_mul_add, x_shape, m_shape)))

    for shape in [(4, 2), (3, 3, 2), (2, 4, 3, 3), (5, 1, 2), (2, 2, 2, 2, 2)]:
        cases.append(("batch_norm", str(shape), _case(_bn_forward, shape, (shape[1],), (shape[1],))))

    for batch, classes in [(1, 2), (3, 4), (5, 3), (2, 7), (4, 1)]:
        cases.append(("softmax_xent", f"({batch},{classes})", _xent_case(batch, classes)))

    for shape, axis, start, stop in [((4,), 0, 1, 3), ((2, 5), 1, 0, 4), ((3, 4, 2), 1, 1, 4), ((2, 3, 2, 2), 0, 1, 2), ((1, 6), 1, 5, 6)]:
        forward = lambda x, a=axis, s=start, e=stop: ops.pad_axis(ops.slice_axis(x, a, s, e), a, 1, 2)
        cases.append(("slice_pad_axis", f"{shape} axis={axis} [{start}:{stop})", _case(forward, shape)))

    for shape in [(1, 2, 8, 2, 2), (2, 3, 16, 1, 1), (1, 1, 8, 2, 2), (1, 4, 9, 1, 2), (2, 2, 4, 2, 1)]:
        cases.append(("temporal_shift", str(shape), _case(temporal_shift, shape)))

    for shape in [(1, 1, 3), (2, 4, 3), (3, 2, 5), (1, 8, 2), (2, 3, 1)]:
        cases.append(("segment_consensus", str(shape), _case(segment_consensus, shape)))

    for path in ("ste", "ce", "me", "action"):
        for shape in _PATH_SHAPES:
            cases.append((f"{path}_forward", str(shape), _path_case(path, shape)))
    return cases


def run_gradcheck_suite(
    seed: int = 0,
    tolerance: float = SUITE_TOLERANCE,
    max_workers: Optional[int] = None,
    only: Optional[Sequence[str]] = None,
) -> List[GradCheckRecord]:
    """Grad-check every case; one record per (op, shape) in a fixed order."""
    cases = [case for case in suite_cases() if not only or case[0] in only]

    def run(index: int) -> GradCheckRecord:
        op, label, build = cases[index]
        rng = np.random.default_rng([seed, index])
        fn, inputs = build(rng)
        error = grad_check(fn, inputs)
        return GradCheckRecord(op, label, error, error < tolerance)

    workers = thread_cap(max_workers)
    with futures.ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(run, range(len(cases))))

    failed = [r for r in records if not r.passed]
    logger.info("[GradCheck] %d cases, %d failed, worst %.3e", len(records), len(failed), max(r.max_rel_error for r in records))
    for record in failed:
        logger.warning("[GradCheck] %s %s rel error %.3e", record.op, record.shape, record.max_rel_error)
    return records


def worst_by_op(records: Sequence[GradCheckRecord]) -> Dict[str, float]:
    worst: Dict[str, float] = {}
    for record in records:
        worst[record.op] = max(worst.get(record.op, 0.0), record.max_rel_error)
    return worst
