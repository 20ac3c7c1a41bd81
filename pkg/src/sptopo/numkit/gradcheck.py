"""Finite-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Var


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    checked: int
    worst: tuple[str, tuple] | None = None
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(
    loss_fn: Callable[[dict[str, Var]], Var],
    params: dict[str, np.ndarray],
    tolerance: float = 1e-4,
    samples: int = 20,
    seed: int = 0,
    rel_step: float = 1e-5,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare tape gradients with central differences on sampled coordinates.

    The step for coordinate x is ``rel_step * max(1, |x|)``. Relative error is
    ``|tape - fd| / max(|tape|, |fd|, floor)``; the floor keeps coordinates with
    a vanishing gradient from turning round-off into a large ratio.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def evaluate(p):
        return float(loss_fn({k: Var(v, name=k) for k, v in p.items()}).value)

    leaves = {k: Var(v, name=k) for k, v in params.items()}
    out = loss_fn(leaves)
    out.backward()
    tape = {k: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)) for k, leaf in leaves.items()}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(0.0, tolerance, 0)
    for name, value in params.items():
        if value.size == 0:
            continue
        picks = rng.choice(value.size, size=min(samples, value.size), replace=False)
        worst_here = 0.0
        for flat in picks:
            idx = np.unravel_index(flat, value.shape)
            orig = value[idx]
            h = rel_step * max(1.0, abs(orig))
            value[idx] = orig + h
            up = evaluate(params)
            value[idx] = orig - h
            down = evaluate(params)
            value[idx] = orig
            fd = (up - down) / (2 * h)
            an = float(tape[name][idx])
            err = abs(an - fd) / max(abs(an), abs(fd), floor)
            report.checked += 1
            worst_here = max(worst_here, err)
            if err > report.max_rel_error:
                report.max_rel_error = err
                report.worst = (name, tuple(int(i) for i in idx))
        report.per_param[name] = worst_here
    return report
