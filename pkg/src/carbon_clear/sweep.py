"""Parameter sweeps over one consumer's carbon cost."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .clearing import SolveOptions, solve_clearing
from .model import SystemCase
from .reports import SolveRecord


@dataclass(frozen=True)
class SweepSpec:
    consumer: str
    start: float
    stop: float
    step: float
    parameter: str = "carbon_cost"

    def __post_init__(self) -> None:
        if self.parameter != "carbon_cost":
            raise ValueError(f"only carbon_cost sweeps are supported, got {self.parameter!r}")
        if not self.step > 0:
            raise ValueError("sweep step must be positive")
        if not self.start <= self.stop:
            raise ValueError("sweep start must not exceed stop")

    def values(self) -> np.ndarray:
        count = math.floor((self.stop - self.start) / self.step + 1e-9) + 1
        return self.start + self.step * np.arange(count)

    @classmethod
    def parse(cls, consumer: str, text: str) -> "SweepSpec":
        """From ``start:stop:step``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected start:stop:step, got {text!r}")
        return cls(consumer, *(float(p) for p in parts))


def run_sweep(case: SystemCase, spec: SweepSpec, opts: SolveOptions | None = None, workers: int = 1) -> list[SolveRecord]:
    """Solve once per parameter value; rows come back in parameter order."""
    pos = case.consumer_position(spec.consumer)  # raises UnknownConsumer

    def one(x: float) -> SolveRecord:
        costs = case.carbon_cost.copy()
        costs[pos] = x
        variant = case.with_carbon_costs(costs)
        sol, duals = solve_clearing(variant, opts)
        return SolveRecord(variant, sol, duals, label=float(x))

    values = [float(x) for x in spec.values()]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, values))
    return [one(x) for x in values]
