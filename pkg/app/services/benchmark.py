"""
Paired benchmark: every instance of a seeded unitbox suite is solved with and
without General Triangle cuts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from app.services.bnb import BnbConfig, GlobalResult, solve
from app.services.qcqp import QcqpInstance, gen_unitbox

logger = logging.getLogger(__name__)


@dataclass
class PairedRow:
    name: str
    n: int
    m: int
    root_gap_on: float
    root_gap_off: float
    root_bound_on: float
    root_bound_off: float
    nodes_on: int
    nodes_off: int
    time_on: float
    time_off: float
    status_on: str
    status_off: str

    @classmethod
    def from_results(cls, inst: QcqpInstance, on: GlobalResult, off: GlobalResult) -> "PairedRow":
        return cls(
            name=inst.name,
            n=inst.n,
            m=inst.m,
            root_gap_on=on.root_gap,
            root_gap_off=off.root_gap,
            root_bound_on=on.root_bound,
            root_bound_off=off.root_bound,
            nodes_on=on.nodes,
            nodes_off=off.nodes,
            time_on=on.elapsed,
            time_off=off.elapsed,
            status_on=on.status.value,
            status_off=off.status.value,
        )


@dataclass
class SuiteReport:
    seed: int
    rows: list[PairedRow] = field(default_factory=list)

    @property
    def node_share(self) -> float:
        """Share of instances with nodes_on <= nodes_off."""
        if not self.rows:
            return 0.0
        return sum(r.nodes_on <= r.nodes_off for r in self.rows) / len(self.rows)

    @property
    def node_ratio(self) -> float:
        """Geometric mean of nodes_on / nodes_off."""
        if not self.rows:
            return 1.0
        logs = [math.log(max(r.nodes_on, 1) / max(r.nodes_off, 1)) for r in self.rows]
        return math.exp(sum(logs) / len(logs))

    @property
    def bound_share(self) -> float:
        """Share of instances whose root bound with triangles is at least the one without."""
        if not self.rows:
            return 0.0
        return sum(r.root_bound_on >= r.root_bound_off - 1e-9 for r in self.rows) / len(self.rows)

    @property
    def strict_share(self) -> float:
        if not self.rows:
            return 0.0
        return sum(r.root_bound_on > r.root_bound_off + 1e-6 for r in self.rows) / len(self.rows)

    @property
    def mean_gap_on(self) -> float:
        return _finite_mean([r.root_gap_on for r in self.rows])

    @property
    def mean_gap_off(self) -> float:
        return _finite_mean([r.root_gap_off for r in self.rows])


def _finite_mean(values: list[float]) -> float:
    finite = [v for v in values if np.isfinite(v)]
    return float(np.mean(finite)) if finite else float("nan")


def suite_instances(seed: int, count: int, n_range: tuple[int, int] = (8, 20),
                    m_ratio: float = 1.0, density: float = 0.25) -> list[QcqpInstance]:
    """Seeded unitbox instances; instance k uses seed + k."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for k in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        m = max(1, int(round(m_ratio * n)))
        out.append(gen_unitbox(n, m, density, seed + k))
    return out


def run_suite(
    seed: int = 0,
    count: int = 50,
    n_range: tuple[int, int] = (8, 20),
    m_ratio: float = 1.0,
    density: float = 0.25,
    config_for: Optional[Callable[[int], BnbConfig]] = None,
) -> SuiteReport:
    """
    Solve every suite instance twice (triangles on, then off) with otherwise equal settings.

    `config_for` maps an instance's n to its run configuration, so a fractional
    working-set cap is resolved per instance. Defaults to the settings.
    """
    config_for = config_for or (lambda n: BnbConfig.from_settings())
    report = SuiteReport(seed=seed)
    for inst in suite_instances(seed, count, n_range, m_ratio, density):
        base = config_for(inst.n)
        on = solve(inst, replace(base, use_triangles=True))
        off = solve(inst, replace(base, use_triangles=False))
        row = PairedRow.from_results(inst, on, off)
        report.rows.append(row)
        logger.info(f"{row.name}: nodes {row.nodes_on}/{row.nodes_off}, "
                    f"root gap {row.root_gap_on:.3e}/{row.root_gap_off:.3e}, "
                    f"time {row.time_on:.2f}s/{row.time_off:.2f}s")
    logger.info(f"Suite {seed}: nodes_on <= nodes_off on {report.node_share:.0%}, "
                f"geometric node ratio {report.node_ratio:.3f}")
    return report
