"""Network and bid data: domain types, validation, fixtures and synthetic cases."""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import CarbonClearError, InvalidDimension, UnknownConsumer

# Emission factors (tCO2/MWh) for renewable, gas, oil and coal units.
EMISSION_CLASSES = (0.0, 0.6042, 0.7434, 0.9606)
MAX_GEN_COST = 74.64
ZERO_CARBON_SHARE = 0.25


@dataclass(frozen=True)
class Bus:
    id: str
    is_reference: bool = False


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    susceptance: float
    limit: float | None = None  # MW, same in both directions; None = unconstrained


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    cost: float  # $/MWh
    emission: float  # tCO2/MWh
    p_min: float
    p_max: float


@dataclass(frozen=True)
class Consumer:
    id: str
    bus: str
    utility: float  # $/MWh
    carbon_cost: float  # $/tCO2
    p_min: float
    p_max: float


@dataclass(frozen=True)
class SystemCase:
    """Immutable single-period market case.

    Collections are stored as tuples so a case can be hashed, compared and
    shared between concurrent solves. Array views used by the solvers are
    computed lazily and cached on the instance.
    """

    name: str
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...] = ()
    generators: tuple[Generator, ...] = ()
    consumers: tuple[Consumer, ...] = ()

    def __post_init__(self) -> None:
        for attr in ("buses", "lines", "generators", "consumers"):
            value = getattr(self, attr)
            if not isinstance(value, tuple):
                object.__setattr__(self, attr, tuple(value))

    # -- index helpers -----------------------------------------------------
    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def reference_index(self) -> int:
        refs = [i for i, b in enumerate(self.buses) if b.is_reference]
        if len(refs) != 1:
            raise CarbonClearError(f"case {self.name!r} needs exactly one reference bus")
        return refs[0]

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_load(self) -> int:
        return len(self.consumers)

    @cached_property
    def gen_bus(self) -> np.ndarray:
        return np.array([self.bus_index[g.bus] for g in self.generators], dtype=int)

    @cached_property
    def load_bus(self) -> np.ndarray:
        return np.array([self.bus_index[d.bus] for d in self.consumers], dtype=int)

    @cached_property
    def gen_cost(self) -> np.ndarray:
        return np.array([g.cost for g in self.generators], dtype=float)

    @cached_property
    def emission(self) -> np.ndarray:
        return np.array([g.emission for g in self.generators], dtype=float)

    @cached_property
    def gen_min(self) -> np.ndarray:
        return np.array([g.p_min for g in self.generators], dtype=float)

    @cached_property
    def gen_max(self) -> np.ndarray:
        return np.array([g.p_max for g in self.generators], dtype=float)

    @cached_property
    def utility(self) -> np.ndarray:
        return np.array([d.utility for d in self.consumers], dtype=float)

    @cached_property
    def carbon_cost(self) -> np.ndarray:
        return np.array([d.carbon_cost for d in self.consumers], dtype=float)

    @cached_property
    def load_min(self) -> np.ndarray:
        return np.array([d.p_min for d in self.consumers], dtype=float)

    @cached_property
    def load_max(self) -> np.ndarray:
        return np.array([d.p_max for d in self.consumers], dtype=float)

    @cached_property
    def line_from(self) -> np.ndarray:
        return np.array([self.bus_index[l.from_bus] for l in self.lines], dtype=int)

    @cached_property
    def line_to(self) -> np.ndarray:
        return np.array([self.bus_index[l.to_bus] for l in self.lines], dtype=int)

    @cached_property
    def susceptance(self) -> np.ndarray:
        return np.array([l.susceptance for l in self.lines], dtype=float)

    @cached_property
    def line_limit(self) -> np.ndarray:
        """Line limits with ``inf`` for unconstrained lines."""
        return np.array([math.inf if l.limit is None else l.limit for l in self.lines], dtype=float)

    @cached_property
    def limited_lines(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.line_limit))

    @cached_property
    def flow_matrix(self) -> np.ndarray:
        """(lines x buses) matrix mapping angles to flows, f = beta * (theta_from - theta_to)."""
        m = np.zeros((len(self.lines), self.n_bus))
        rows = np.arange(len(self.lines))
        m[rows, self.line_from] += self.susceptance
        m[rows, self.line_to] -= self.susceptance
        return m

    @cached_property
    def incidence(self) -> np.ndarray:
        """(buses x lines) matrix, +1 where a line leaves the bus and -1 where it enters."""
        a = np.zeros((self.n_bus, len(self.lines)))
        cols = np.arange(len(self.lines))
        a[self.line_from, cols] += 1.0
        a[self.line_to, cols] -= 1.0
        return a

    def consumer_position(self, consumer_id: str) -> int:
        for k, d in enumerate(self.consumers):
            if d.id == consumer_id:
                return k
        raise UnknownConsumer(f"no consumer with id {consumer_id!r}")

    def with_carbon_costs(self, carbon_costs: Iterable[float]) -> "SystemCase":
        costs = list(carbon_costs)
        if len(costs) != self.n_load:
            raise CarbonClearError(f"expected {self.n_load} carbon costs, got {len(costs)}")
        consumers = tuple(replace(d, carbon_cost=float(c)) for d, c in zip(self.consumers, costs))
        return replace(self, consumers=consumers)

    def with_uniform_carbon_cost(self, value: float) -> "SystemCase":
        return self.with_carbon_costs([value] * self.n_load)


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind}({self.subject}): {self.message}"


class CaseValidationError(CarbonClearError, ValueError):
    kind = "ValidationError"

    def __init__(self, issues: Sequence[ValidationIssue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def case_issues(case: SystemCase) -> list[ValidationIssue]:
    """Every violated case invariant, in a stable order."""
    issues: list[ValidationIssue] = []

    def add(kind: str, subject: str, message: str) -> None:
        issues.append(ValidationIssue(kind, subject, message))

    for label, items in (("bus", case.buses), ("generator", case.generators), ("consumer", case.consumers)):
        for ident, count in Counter(x.id for x in items).items():
            if count > 1:
                add("DuplicateId", ident, f"{label} id appears {count} times")

    refs = [b.id for b in case.buses if b.is_reference]
    if not refs:
        add("NoReferenceBus", case.name, "no bus is flagged as reference")
    elif len(refs) > 1:
        add("MultipleReferenceBuses", ",".join(refs), "more than one reference bus")

    bus_ids = {b.id for b in case.buses}
    for k, line in enumerate(case.lines):
        subject = f"line[{k}]:{line.from_bus}-{line.to_bus}"
        for end in (line.from_bus, line.to_bus):
            if end not in bus_ids:
                add("UnknownBus", subject, f"bus {end!r} does not exist")
        if line.from_bus == line.to_bus:
            add("SelfLoop", subject, "line starts and ends at the same bus")
        if not _finite(line.susceptance) or line.susceptance <= 0:
            add("InvalidSusceptance", subject, f"susceptance must be positive, got {line.susceptance}")
        if line.limit is not None and (not _finite(line.limit) or line.limit < 0):
            add("NegativeBound", subject, f"limit must be finite and >= 0, got {line.limit}")

    for agent in (*case.generators, *case.consumers):
        if agent.bus not in bus_ids:
            add("UnknownBus", agent.id, f"bus {agent.bus!r} does not exist")
        if not (_finite(agent.p_min) and _finite(agent.p_max)):
            add("NonFiniteValue", agent.id, "power bounds must be finite")
            continue
        if agent.p_min < 0:
            add("NegativeBound", agent.id, f"p_min = {agent.p_min} < 0")
        if agent.p_min > agent.p_max:
            add("InvertedBounds", agent.id, f"p_min = {agent.p_min} > p_max = {agent.p_max}")

    for g in case.generators:
        if not _finite(g.cost):
            add("NonFiniteValue", g.id, "generation cost must be finite")
        if not _finite(g.emission) or g.emission < 0:
            add("NegativeBound", g.id, f"emission factor must be >= 0, got {g.emission}")
    for d in case.consumers:
        if not _finite(d.utility):
            add("NonFiniteValue", d.id, "utility must be finite")
        if not _finite(d.carbon_cost) or d.carbon_cost < 0:
            add("NegativeBound", d.id, f"carbon cost must be >= 0, got {d.carbon_cost}")

    if not any(i.kind in ("NonFiniteValue",) for i in issues):
        load_min = sum(d.p_min for d in case.consumers)
        load_max = sum(d.p_max for d in case.consumers)
        gen_min = sum(g.p_min for g in case.generators)
        gen_max = sum(g.p_max for g in case.generators)
        if load_min > gen_max + 1e-9 or gen_min > load_max + 1e-9:
            add(
                "InfeasibleAggregateBounds",
                case.name,
                f"load range [{load_min}, {load_max}] does not meet generation range [{gen_min}, {gen_max}]",
            )

    if case.buses and not any(i.kind in ("UnknownBus", "DuplicateId") for i in issues):
        unreached = _unreached_buses(case)
        if unreached:
            add("DisconnectedNetwork", ",".join(unreached), "buses not connected to the reference network")
    return issues


def _unreached_buses(case: SystemCase) -> list[str]:
    adjacency: dict[str, list[str]] = {b.id: [] for b in case.buses}
    for line in case.lines:
        adjacency[line.from_bus].append(line.to_bus)
        adjacency[line.to_bus].append(line.from_bus)
    start = case.buses[0].id
    seen = {start}
    queue = deque([start])
    while queue:
        for nxt in adjacency[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return [b.id for b in case.buses if b.id not in seen]


def validate_case(case: SystemCase) -> SystemCase:
    """Return ``case`` unchanged if it is well formed, else raise CaseValidationError."""
    issues = case_issues(case)
    if issues:
        raise CaseValidationError(issues)
    return case


def fixture_t1(carbon_costs: Sequence[float] = (0.0, 0.0, 0.0)) -> SystemCase:
    """Three-bus illustration system: one generator and one consumer per bus.

    Lines form an unconstrained triangle with unit susceptance, so nodal
    prices are uniform and the topology never affects the optimum.
    """
    if len(carbon_costs) != 3:
        raise InvalidDimension("fixture_t1 takes exactly three consumer carbon costs")
    buses = tuple(Bus(str(i), is_reference=(i == 1)) for i in (1, 2, 3))
    lines = (Line("1", "2", 1.0), Line("1", "3", 1.0), Line("2", "3", 1.0))
    gen_data = ((20.0, 8.0, 0.6), (10.0, 10.0, 0.2), (25.0, 6.0, 1.0))
    generators = tuple(
        Generator(f"g{i}", str(i), cost=c, emission=e, p_min=0.0, p_max=p)
        for i, (p, c, e) in enumerate(gen_data, start=1)
    )
    consumers = tuple(
        Consumer(f"d{i}", str(i), utility=18.0, carbon_cost=float(cd), p_min=0.0, p_max=15.0)
        for i, cd in enumerate(carbon_costs, start=1)
    )
    return SystemCase("t1", buses, lines, generators, consumers)


def _reference_flows(case: SystemCase, injection: np.ndarray) -> np.ndarray:
    """DC flows for a balanced injection vector, with the reference angle pinned to 0."""
    a = case.incidence
    laplacian = a @ np.diag(case.susceptance) @ a.T
    keep = [i for i in range(case.n_bus) if i != case.reference_index]
    theta = np.zeros(case.n_bus)
    if keep:
        theta[keep] = np.linalg.solve(laplacian[np.ix_(keep, keep)], injection[keep])
    return case.flow_matrix @ theta


def random_case(
    num_buses: int,
    num_gens: int,
    num_loads: int,
    seed: int,
    *,
    zero_lower_bounds: bool = False,
    unlimited_share: float = 0.25,
) -> SystemCase:
    """Seeded synthetic market on a connected random network.

    Topology is a random spanning tree plus roughly ``num_buses // 2`` extra
    lines. Emission factors are drawn from :data:`EMISSION_CLASSES`,
    renewables bid at zero cost, utilities are uniform on [20, 80] $/MWh and
    carbon costs uniform on [10, 30] $/tCO2 with a quarter of the consumers
    reset to zero. Consumer bounds are 0.8x/1.2x a baseline load, or 0/1.2x
    with ``zero_lower_bounds``.

    Line limits are drawn around the flows of a feasible reference dispatch,
    so the returned case is always feasible while many lines can still bind.
    """
    if num_buses < 1 or num_gens < 1 or num_loads < 1:
        raise InvalidDimension(
            f"need at least one bus, generator and consumer (got {num_buses}, {num_gens}, {num_loads})"
        )
    rng = np.random.default_rng(int(seed) & (2**64 - 1))

    bus_ids = [f"b{i + 1}" for i in range(num_buses)]
    buses = tuple(Bus(b, is_reference=(k == 0)) for k, b in enumerate(bus_ids))

    order = rng.permutation(num_buses)
    pairs: list[tuple[int, int]] = []
    for k in range(1, num_buses):
        pairs.append((int(order[rng.integers(0, k)]), int(order[k])))
    existing = {frozenset(p) for p in pairs}
    if num_buses > 2:
        for _ in range(num_buses // 2):
            i, j = (int(x) for x in rng.choice(num_buses, size=2, replace=False))
            if frozenset((i, j)) not in existing:
                existing.add(frozenset((i, j)))
                pairs.append((i, j))
    susceptances = rng.uniform(5.0, 20.0, size=len(pairs))

    gen_bus = rng.integers(0, num_buses, size=num_gens)
    emission = rng.choice(EMISSION_CLASSES, size=num_gens)
    cost = np.where(emission > 0, rng.uniform(5.0, MAX_GEN_COST, size=num_gens), 0.0)
    gen_max = rng.uniform(20.0, 150.0, size=num_gens)

    load_bus = rng.integers(0, num_buses, size=num_loads)
    utility = rng.uniform(20.0, 80.0, size=num_loads)
    carbon = rng.uniform(10.0, 30.0, size=num_loads)
    n_zero = int(math.floor(ZERO_CARBON_SHARE * num_loads + 0.5))
    carbon[rng.choice(num_loads, size=n_zero, replace=False)] = 0.0
    baseline = rng.uniform(10.0, 100.0, size=num_loads)
    load_max = 1.2 * baseline
    load_min = np.zeros(num_loads) if zero_lower_bounds else 0.8 * baseline

    # keep ample aggregate capacity so the network, not the fleet, decides congestion
    capacity_ratio = gen_max.sum() / load_max.sum()
    if capacity_ratio < 1.5:
        gen_max *= 1.5 / capacity_ratio

    generators = tuple(
        Generator(f"g{k + 1}", bus_ids[gen_bus[k]], float(cost[k]), float(emission[k]), 0.0, float(gen_max[k]))
        for k in range(num_gens)
    )
    consumers = tuple(
        Consumer(
            f"d{k + 1}", bus_ids[load_bus[k]], float(utility[k]), float(carbon[k]), float(load_min[k]), float(load_max[k])
        )
        for k in range(num_loads)
    )
    draft = SystemCase(
        f"random-{num_buses}-{num_gens}-{num_loads}-s{seed}",
        buses,
        tuple(Line(bus_ids[i], bus_ids[j], float(b)) for (i, j), b in zip(pairs, susceptances)),
        generators,
        consumers,
    )
    if not pairs:
        return draft

    share = load_min.sum() / gen_max.sum()
    injection = np.zeros(num_buses)
    np.add.at(injection, gen_bus, share * gen_max)
    np.add.at(injection, load_bus, -load_min)
    base_flow = np.abs(_reference_flows(draft, injection))
    typical = load_max.sum() / max(1.0, math.sqrt(num_buses))
    lines = []
    for line, flow in zip(draft.lines, base_flow):
        if rng.random() < unlimited_share:
            lines.append(line)
            continue
        limit = flow * 1.02 + rng.uniform(0.02, 0.6) * typical
        lines.append(replace(line, limit=float(round(limit, 6))))
    return replace(draft, lines=tuple(lines))
