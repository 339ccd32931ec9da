"""Carbon-aware electricity market clearing with consumer carbon costs.

The market operator clears a DC power flow market whose objective charges
each consumer for the emissions allocated to it. Allocation duals turn into
carbon adjustments of the nodal prices, so clean generators earn more and
carbon-averse consumers pay more.
"""

from .allocation import AllocationDuals, AllocationMatrix, allocate_greedy, allocate_lp, allocation_cost, emissions_of
from .caseio import dump_case, parse_case, parse_case_csv, write_case_csv
from .clearing import (
    ClearingSolution,
    DualSolution,
    SolveOptions,
    canonicalize_idle,
    effective_case,
    objective_breakdown,
    solve_clearing,
    solve_standard,
    solve_with_tax,
)
from .equilibrium import (
    best_response_consumer,
    best_response_generator,
    carbon_manager_check,
    kkt_residuals,
    price_setter_residual,
    transmission_owner_check,
    verify_equilibrium,
)
from .errors import *  # noqa: F401,F403
from .model import (
    Bus,
    CaseValidationError,
    Consumer,
    Generator,
    Line,
    SystemCase,
    ValidationIssue,
    case_issues,
    fixture_t1,
    random_case,
    validate_case,
)
from .pricing import (
    PriceReport,
    adjustment_gaps,
    carbon_adjusted_prices,
    check_ordering,
    congestion_rent,
    gen_prices,
    load_prices,
    normalize_gauge,
)
from .properties import equivalence_standard, equivalence_tax, individual_rationality, settle
from .reports import SolveRecord, emit_report, load_solution, read_report_csv
from .sweep import SweepSpec, run_sweep

__version__ = "0.1.0"
