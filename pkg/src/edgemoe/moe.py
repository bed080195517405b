"""Simulated gating, top-k routing with proportional token splitting, and
aggregation of the per-expert partial results."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DeviceProfile, RngStream, TaskRequest


@dataclass(frozen=True)
class GatingAssignment:
    task_id: int
    experts: tuple[int, ...]
    weights: tuple[float, ...]
    token_split: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.experts)


@dataclass(frozen=True)
class Partial:
    """What one selected expert reports back for a task."""

    expert: int
    tokens: int
    cot_steps: int
    verified: bool
    finish_time: float


@dataclass(frozen=True)
class TaskResult:
    task_id: int
    latency: float
    failed: bool
    weights: tuple[float, ...]
    tokens: int


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def gating_scores(
    task: TaskRequest,
    devices: Sequence[DeviceProfile],
    rng: RngStream,
    noise_std: float = 0.5,
    n_bands: int = 4,
) -> np.ndarray:
    """Soft assignment over all experts: softmax of band affinity plus noise."""
    band = task.band(n_bands)
    logits = np.array([d.expert.affinity[band] for d in devices], dtype=float)
    noise = rng.gen.standard_normal(len(devices))
    if noise_std > 0:
        logits = logits + noise_std * noise
    return softmax(logits)


def split_tokens(length: int, weights: Sequence[float]) -> list[int]:
    """Round each quota half-to-even, then repair the total by largest remainder.

    The result sums exactly to ``length`` and minimizes the summed absolute
    rounding error over all nonnegative integer splits.
    """
    # snap to 1e-9 so renormalization noise cannot break an exact .5 tie
    quotas = [round(length * w, 9) for w in weights]
    split = [int(round(q)) for q in quotas]
    diff = length - sum(split)
    if diff:
        resid = [q - s for q, s in zip(quotas, split)]
        step = 1 if diff > 0 else -1
        # most-underserved first when adding, most-overserved first when removing
        order = sorted(range(len(split)), key=lambda i: (-step * resid[i], i))
        for i in order[: abs(diff)]:
            split[i] += step
    return split


def top_k_route(weights: Sequence[float], k: int, task: TaskRequest) -> GatingAssignment:
    w = np.asarray(weights, dtype=float)
    if not 1 <= k <= len(w):
        raise ValueError(f"k={k} outside 1..{len(w)}")
    chosen = np.argsort(-w, kind="stable")[:k]
    sel = w[chosen]
    renorm = sel / sel.sum()
    split = split_tokens(task.length, renorm.tolist())
    return GatingAssignment(
        task_id=task.id,
        experts=tuple(int(i) for i in chosen),
        weights=tuple(float(x) for x in renorm),
        token_split=tuple(split),
    )


def aggregate(partials: Sequence[Partial], assignment: GatingAssignment) -> TaskResult:
    """Combine branch reports; the task ends when its slowest branch verifies."""
    by_expert = {p.expert: p for p in partials}
    if set(by_expert) != set(assignment.experts):
        raise ValueError("need exactly one partial per selected expert")
    failed = not all(p.verified for p in partials)
    latency = max((p.finish_time for p in partials), default=0.0)
    return TaskResult(
        task_id=assignment.task_id,
        latency=latency,
        failed=failed,
        weights=assignment.weights,
        tokens=sum(p.tokens for p in partials),
    )
