"""Market-property audits: settlement, individual rationality, special-case equivalences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clearing import (
    ClearingSolution,
    DualSolution,
    SolveOptions,
    effective_case,
    solve_clearing,
    solve_standard,
    solve_with_tax,
)
from .model import SystemCase
from .pricing import congestion_rent, gen_prices, load_prices


def _value_scale(case: SystemCase, sol: ClearingSolution) -> float:
    price = [1.0, *np.abs(case.gen_cost), *np.abs(case.utility)]
    if case.n_gen and case.n_load:
        price.append(float(case.carbon_cost.max() * case.emission.max()))
    return max(1.0, float(sol.p_g.sum())) * max(price)


@dataclass(frozen=True)
class SettlementReport:
    consumer_payments: float
    generator_revenues: float
    congestion_rent: float
    carbon_revenue: float
    surplus: float
    generator_surplus: np.ndarray
    consumer_surplus: np.ndarray
    tol: float

    @property
    def revenue_adequate(self) -> bool:
        return self.surplus >= -self.tol

    @property
    def budget_balanced(self) -> bool:
        return abs(self.surplus - self.carbon_revenue) <= self.tol


def settle(case: SystemCase, sol: ClearingSolution, duals: DualSolution, tol: float = 1e-6) -> SettlementReport:
    """Money flows at carbon-adjusted prices.

    The ISO collects consumer payments, pays generators and the transmission
    owner, and keeps the rest. At an optimum the remainder equals the carbon
    revenue ``c_D . E_D`` that funds the carbon manager. ``tol`` is relative
    to the dispatch volume times the largest price in the case.
    """
    eff = effective_case(case, sol.model, sol.tax)
    gp, lp = gen_prices(duals, eff), load_prices(duals, eff)
    payments = float(lp @ sol.p_d)
    revenues = float(gp @ sol.p_g)
    rent = congestion_rent(duals, eff, sol)
    return SettlementReport(
        consumer_payments=payments,
        generator_revenues=revenues,
        congestion_rent=rent,
        carbon_revenue=float(eff.carbon_cost @ sol.e_d),
        surplus=payments - revenues - rent,
        generator_surplus=(gp - eff.gen_cost) * sol.p_g,
        consumer_surplus=(eff.utility - lp) * sol.p_d,
        tol=tol * _value_scale(eff, sol),
    )


@dataclass(frozen=True)
class RationalityReport:
    generator_surplus: np.ndarray
    consumer_surplus: np.ndarray
    guaranteed: bool  # False when some lower bound is positive; the report is then informational
    tol: float

    @property
    def min_surplus(self) -> float:
        return float(np.concatenate([self.generator_surplus, self.consumer_surplus, [np.inf]]).min())

    @property
    def passed(self) -> bool:
        return self.min_surplus >= -self.tol


def individual_rationality(case: SystemCase, sol: ClearingSolution, duals: DualSolution, tol: float = 1e-6) -> RationalityReport:
    """Per-agent surplus at carbon-adjusted prices.

    Non-negative surplus is only guaranteed when every lower bound is zero;
    otherwise ``guaranteed`` is False and ``passed`` should be read as
    information rather than as a failed property.
    """
    rep = settle(case, sol, duals, tol)
    guaranteed = bool(np.all(case.gen_min == 0) and np.all(case.load_min == 0))
    return RationalityReport(rep.generator_surplus, rep.consumer_surplus, guaranteed, rep.tol)


@dataclass(frozen=True)
class EquivalenceReport:
    reference_objective: float  # carbon-aware clearing of the transformed case
    special_objective: float  # standard or taxed clearing
    reference_emissions: float
    special_emissions: float
    reference_gen_cost: float
    special_gen_cost: float
    price_gap: float  # max |carbon-adjusted price difference|, informational
    tol: float

    @property
    def objective_gap(self) -> float:
        return abs(self.reference_objective - self.special_objective) / max(1.0, abs(self.reference_objective))

    @property
    def passed(self) -> bool:
        return self.objective_gap <= self.tol


def _price_gap(case_a, duals_a, case_b, duals_b) -> float:
    gaps = np.concatenate(
        [gen_prices(duals_a, case_a) - gen_prices(duals_b, case_b), load_prices(duals_a, case_a) - load_prices(duals_b, case_b), [0.0]]
    )
    return float(np.abs(gaps).max())


def equivalence_standard(case: SystemCase, tol: float = 1e-6, opts: SolveOptions | None = None) -> EquivalenceReport:
    """With every carbon cost at zero the carbon-aware clearing is the standard DC-OPF."""
    zeroed = case.with_uniform_carbon_cost(0.0)
    ref, ref_duals = solve_clearing(zeroed, opts)
    std, std_duals = solve_standard(case, opts)
    return EquivalenceReport(
        ref.objective,
        std.objective,
        ref.total_emissions,
        std.total_emissions,
        ref.gen_cost_total,
        std.gen_cost_total,
        _price_gap(zeroed, ref_duals, zeroed, std_duals),
        tol,
    )


def equivalence_tax(case: SystemCase, tax: float, tol: float = 1e-6, opts: SolveOptions | None = None) -> EquivalenceReport:
    """A uniform consumer carbon cost equals a carbon tax on generators.

    Both objectives equal ``u . P_D - (c_G + tax e_G) . P_G`` at their optima,
    since all emissions are allocated. Prices are compared in the taxed
    frame: a generator's carbon-adjusted price equals the taxed nodal price
    minus ``tax * e_G``.
    """
    if not tax >= 0:
        raise ValueError(f"tax must be non-negative, got {tax}")
    uniform = case.with_uniform_carbon_cost(tax)
    ref, ref_duals = solve_clearing(uniform, opts)
    taxed, tax_duals = solve_with_tax(case, tax, opts)
    ref_gen = gen_prices(ref_duals, uniform)
    tax_gen = tax_duals.lambda_p[case.gen_bus] - tax * case.emission
    ref_load = load_prices(ref_duals, uniform)
    tax_load = tax_duals.lambda_p[case.load_bus]
    gap = float(np.abs(np.concatenate([ref_gen - tax_gen, ref_load - tax_load, [0.0]])).max())
    return EquivalenceReport(
        ref.objective,
        taxed.objective,
        ref.total_emissions,
        taxed.total_emissions,
        ref.gen_cost_total,
        taxed.gen_cost_total,
        gap,
        tol,
    )
