"""Mixed binary linear programming.

A bounded-variable primal simplex solves relaxations from scratch; a
best-first branch and bound over the binary variables calls an optional lazy
callback whenever it meets an integral point and re-solves the node if the
callback returns cuts. Cuts are appended to the model and stay valid in every
node.
"""

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import DomainError, UnboundedError

logger = logging.getLogger("ccb")
logger.setLevel(logging.CRITICAL)  # Start with logging disabled

BINARY = "binary"
CONTINUOUS = "continuous"

LE = "<="
GE = ">="
EQ = "="
SENSES = (LE, GE, EQ)

BUDGET = "budget"
OUTER_APPROX = "outer_approx"
BOUND_LINK = "bound_link"
ORIGINS = (BUDGET, OUTER_APPROX, BOUND_LINK)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"

FEAS_TOL = 1e-7
INT_TOL = 1e-8
RC_TOL = 1e-9
PIVOT_TOL = 1e-11
MIP_GAP = 1e-5
BLAND_AFTER = 2000
MAX_PIVOTS = 100000
NODE_LIMIT = 200000


@dataclass
class Variable:
    """A decision variable.

    Attributes:
        name (str): Unique name, used in rows and assignments.
        kind (str): BINARY or CONTINUOUS.
        lower (float): Finite lower bound.
        upper (float): Upper bound, possibly inf for continuous variables.
    """

    name: str
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf


@dataclass
class LinearCut:
    """A linear row  sum_j row[j] x_j  (sense)  rhs.

    Attributes:
        row (Dict[str, float]): Sparse coefficients by variable name.
        sense (str): LE, GE or EQ.
        rhs (float): Right-hand side.
        origin (str): BUDGET, OUTER_APPROX or BOUND_LINK.
    """

    row: Dict[str, float]
    sense: str
    rhs: float
    origin: str = BUDGET


@dataclass
class MilpModel:
    """Maximise objective . x over the variables subject to the constraints.

    Note: Operations on MilpModel objects should be performed using functions,
    not methods. This class is intended to be used as a data holder only.
    """

    variables: List[Variable] = field(default_factory=list)
    objective: Dict[str, float] = field(default_factory=dict)
    constraints: List[LinearCut] = field(default_factory=list)


@dataclass
class MilpSolution:
    """Result of lp_solve or bnb_solve.

    Attributes:
        status (str): OPTIMAL, INFEASIBLE or ITERATION_LIMIT.
        assignment (Dict[str, float]): Value of every variable; empty when
            no feasible point is known.
        objective_value (float): Objective at the assignment (-inf if none).
        nodes_explored (int): Branch-and-bound nodes solved (1 for an LP).
        cuts_added (int): Rows appended by the lazy callback.
        pivots (int): Simplex iterations, summed over nodes.
        reduced_costs (Dict[str, float]): For an LP optimum, the reduced cost
            of every non-fixed variable in the model's own sign convention.
    """

    status: str
    assignment: Dict[str, float]
    objective_value: float
    nodes_explored: int = 0
    cuts_added: int = 0
    pivots: int = 0
    reduced_costs: Dict[str, float] = field(default_factory=dict)


LazyCallback = Callable[[Dict[str, float]], Sequence[LinearCut]]


################################################################################
# Model building
################################################################################


def add_variable(model: MilpModel, name: str, kind: str = CONTINUOUS, lower: float = 0.0, upper: Optional[float] = None) -> Variable:
    """Declare a variable; binaries always get bounds [0, 1].

    Raises:
        DomainError: If the name is taken, the kind is unknown or the lower
            bound is not finite.
    """
    if any(v.name == name for v in model.variables):
        raise DomainError(f"variable {name!r} already declared")
    if kind not in (BINARY, CONTINUOUS):
        raise DomainError(f"unknown variable kind {kind!r}")
    if kind == BINARY:
        lower, upper = 0.0, 1.0
    if not math.isfinite(lower):
        raise DomainError(f"variable {name!r} needs a finite lower bound")
    variable = Variable(name, kind, float(lower), math.inf if upper is None else float(upper))
    model.variables.append(variable)
    return variable


def validate_cut(model: MilpModel, cut: LinearCut) -> LinearCut:
    """Check a row against the model's declared variables.

    Raises:
        DomainError: On an empty row, an unknown variable, a non-finite
            coefficient or an unknown sense/origin.
    """
    if not cut.row:
        raise DomainError("a constraint row must not be empty")
    if cut.sense not in SENSES:
        raise DomainError(f"unknown sense {cut.sense!r}")
    if cut.origin not in ORIGINS:
        raise DomainError(f"unknown cut origin {cut.origin!r}")
    names = {v.name for v in model.variables}
    unknown = set(cut.row) - names
    if unknown:
        raise DomainError(f"row references undeclared variables {sorted(unknown)}")
    if not all(math.isfinite(a) for a in cut.row.values()) or not math.isfinite(cut.rhs):
        raise DomainError("row coefficients and rhs must be finite")
    return cut


def add_constraint(model: MilpModel, cut: LinearCut) -> LinearCut:
    model.constraints.append(validate_cut(model, cut))
    return cut


def cut_slack(cut: LinearCut, assignment: Dict[str, float]) -> float:
    """Signed slack of a row at an assignment; >= 0 means satisfied."""
    lhs = sum(a * assignment.get(name, 0.0) for name, a in cut.row.items())
    if cut.sense == LE:
        return cut.rhs - lhs
    if cut.sense == GE:
        return lhs - cut.rhs
    return -abs(lhs - cut.rhs)


################################################################################
# Bounded-variable primal simplex
################################################################################

# Tableau form with every nonbasic variable at 0. A variable sitting at its
# upper bound U is replaced by its complement U - x, which flips the sign of
# its column and its reduced cost.


@dataclass
class _LpResult:
    status: str
    x: Optional[np.ndarray]
    objective: float
    reduced_costs: Optional[np.ndarray]
    pivots: int


class _Tableau:
    def __init__(self, T: np.ndarray, beta: np.ndarray, basis: np.ndarray, upper: np.ndarray):
        self.T = T
        self.beta = beta
        self.basis = basis
        self.upper = upper
        self.flipped = np.zeros(T.shape[1], dtype=bool)
        self.d = np.zeros(T.shape[1])
        self.z = 0.0
        self.pivots = 0

    def price(self, cost: np.ndarray, constant: float = 0.0) -> None:
        """Rebuild the reduced costs for a cost vector on the original columns."""
        finite = np.isfinite(self.upper)
        eff = np.where(self.flipped, -cost, cost)
        constant += float(np.sum(cost[self.flipped & finite] * self.upper[self.flipped & finite]))
        cb = eff[self.basis]
        self.d = eff - cb @ self.T
        self.z = constant + float(cb @ self.beta)

    def pivot(self, r: int, j: int) -> None:
        # scale row r so the pivot becomes 1, then eliminate column j elsewhere
        T = self.T
        p = T[r, j]
        T[r] /= p
        self.beta[r] /= p
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.beta -= col * self.beta[r]
        dj = self.d[j]
        self.d -= dj * T[r]
        self.z += dj * self.beta[r]
        self.basis[r] = j
        self.pivots += 1

    def complement_nonbasic(self, j: int) -> None:
        U = self.upper[j]
        col = self.T[:, j]
        self.beta -= U * col
        self.T[:, j] = -col
        self.z += self.d[j] * U
        self.d[j] = -self.d[j]
        self.flipped[j] = ~self.flipped[j]

    def complement_basic(self, r: int) -> None:
        j = self.basis[r]
        self.T[r] = -self.T[r]
        self.T[r, j] = 1.0
        self.beta[r] = self.upper[j] - self.beta[r]
        self.flipped[j] = ~self.flipped[j]

    def values(self) -> np.ndarray:
        v = np.zeros(self.T.shape[1])
        v[self.basis] = self.beta
        finite = np.isfinite(self.upper)
        flip = self.flipped & finite
        v[flip] = self.upper[flip] - v[flip]
        return v


def _optimize(tab: _Tableau, allowed: np.ndarray) -> str:
    """Primal simplex on the current reduced costs; returns a status."""
    degenerate = 0
    while True:
        candidates = np.flatnonzero(allowed & (tab.d > RC_TOL))
        if candidates.size == 0:
            return OPTIMAL
        if tab.pivots > MAX_PIVOTS:
            return ITERATION_LIMIT
        bland = degenerate >= BLAND_AFTER
        j = int(candidates[0]) if bland else int(candidates[np.argmax(tab.d[candidates])])

        col = tab.T[:, j]
        theta = tab.upper[j]
        leave = -1
        to_upper = False

        beta = np.maximum(tab.beta, 0.0)
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size:
            ratios = beta[rows] / col[rows]
            best = ratios.min()
            if best < theta:
                ties = rows[ratios <= best + 1e-12]
                leave = int(ties[np.argmin(tab.basis[ties])])
                theta = best
        ub = tab.upper[tab.basis]
        rows = np.flatnonzero((col < -PIVOT_TOL) & np.isfinite(ub))
        if rows.size:
            ratios = np.maximum(ub[rows] - tab.beta[rows], 0.0) / -col[rows]
            best = ratios.min()
            if best < theta:
                ties = rows[ratios <= best + 1e-12]
                leave = int(ties[np.argmin(tab.basis[ties])])
                theta = best
                to_upper = True

        if math.isinf(theta):
            return "unbounded"
        if leave < 0:
            tab.complement_nonbasic(j)
        else:
            if to_upper:
                tab.complement_basic(leave)
            tab.pivot(leave, j)
        degenerate = degenerate + 1 if theta <= 1e-12 else 0
        if degenerate == BLAND_AFTER:
            logger.debug(f"{BLAND_AFTER} degenerate pivots in a row; switching to Bland's rule")


def _simplex(c: np.ndarray, A: np.ndarray, senses: np.ndarray, rhs: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> _LpResult:
    """Maximise c.x s.t. A x (senses) rhs, lower <= x <= upper.

    senses holds +1 for <=, -1 for >= and 0 for =.
    """
    span = upper - lower
    if np.any(span < -FEAS_TOL):
        return _LpResult(INFEASIBLE, None, -math.inf, None, 0)
    cols = np.flatnonzero(span > 0)
    m = A.shape[0]
    b = rhs - A @ lower
    A_act = A[:, cols]
    n_act = cols.size

    # slack +1 for <=, -1 for >=, none for =; then make every rhs non-negative
    sign = np.where(b < 0, -1.0, 1.0)
    slack_rows = np.flatnonzero(senses != 0)
    S = np.zeros((m, slack_rows.size))
    S[slack_rows, np.arange(slack_rows.size)] = senses[slack_rows]
    A_norm = A_act * sign[:, None]
    S *= sign[:, None]
    b_norm = b * sign

    basis = np.full(m, -1, dtype=int)
    for k, r in enumerate(slack_rows):
        if S[r, k] > 0:
            basis[r] = n_act + k
    art_rows = np.flatnonzero(basis < 0)
    n_slack = slack_rows.size
    Art = np.zeros((m, art_rows.size))
    Art[art_rows, np.arange(art_rows.size)] = 1.0
    basis[art_rows] = n_act + n_slack + np.arange(art_rows.size)

    T = np.hstack([A_norm, S, Art])
    ntot = T.shape[1]
    U = np.concatenate([span[cols], np.full(n_slack + art_rows.size, math.inf)])
    tab = _Tableau(T, b_norm.astype(float).copy(), basis, U)
    allowed = np.ones(ntot, dtype=bool)
    artificial = np.zeros(ntot, dtype=bool)
    artificial[n_act + n_slack :] = True

    if art_rows.size:
        cost1 = np.where(artificial, -1.0, 0.0)
        tab.price(cost1)
        status = _optimize(tab, allowed)
        if status != OPTIMAL or tab.z < -FEAS_TOL * max(1.0, float(np.max(np.abs(b_norm)))):
            logger.debug(f"Phase 1 ended with infeasibility {-tab.z:.3g}")
            return _LpResult(INFEASIBLE, None, -math.inf, None, tab.pivots)
        # drive the remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if not artificial[tab.basis[r]]:
                continue
            row = np.abs(tab.T[r]) * ~artificial
            row[tab.basis] = 0.0
            j = int(np.argmax(row))
            if row[j] > PIVOT_TOL:
                tab.pivot(r, j)
            else:
                keep[r] = False
        if not keep.all():
            tab.T = tab.T[keep]
            tab.beta = tab.beta[keep]
            tab.basis = tab.basis[keep]
        allowed = ~artificial

    cost = np.concatenate([c[cols], np.zeros(ntot - n_act)])
    tab.price(cost)
    status = _optimize(tab, allowed)
    if status == "unbounded":
        raise UnboundedError("the linear relaxation is unbounded")
    if status != OPTIMAL:
        return _LpResult(ITERATION_LIMIT, None, -math.inf, None, tab.pivots)

    values = tab.values()
    x = lower.astype(float).copy()
    x[cols] += values[:n_act]
    rc = np.zeros(c.size)
    nonbasic = np.ones(ntot, dtype=bool)
    nonbasic[tab.basis] = False
    d_orig = np.where(tab.flipped, -tab.d, tab.d) * nonbasic
    rc[cols] = d_orig[:n_act]
    return _LpResult(OPTIMAL, x, float(c @ x), rc, tab.pivots)


################################################################################
# Compilation of a model into arrays
################################################################################


class _Compiled:
    def __init__(self, model: MilpModel):
        self.names = [v.name for v in model.variables]
        self.index = {name: k for k, name in enumerate(self.names)}
        n = len(self.names)
        self.c = np.zeros(n)
        for name, coef in model.objective.items():
            if name not in self.index:
                raise DomainError(f"objective references undeclared variable {name!r}")
            self.c[self.index[name]] = coef
        self.lower = np.array([v.lower for v in model.variables], dtype=float)
        self.upper = np.array([v.upper for v in model.variables], dtype=float)
        self.binaries = np.array(
            [k for k, v in enumerate(model.variables) if v.kind == BINARY], dtype=int
        )
        self.rows: List[np.ndarray] = []
        self.senses: List[float] = []
        self.rhs: List[float] = []
        for cut in model.constraints:
            self.add(cut)

    def add(self, cut: LinearCut) -> None:
        row = np.zeros(len(self.names))
        for name, coef in cut.row.items():
            row[self.index[name]] += coef
        self.rows.append(row)
        self.senses.append({LE: 1.0, GE: -1.0, EQ: 0.0}[cut.sense])
        self.rhs.append(cut.rhs)

    def arrays(self):
        if self.rows:
            A = np.vstack(self.rows)
        else:
            A = np.zeros((0, len(self.names)))
        return A, np.array(self.senses), np.array(self.rhs, dtype=float)

    def assignment(self, x: np.ndarray) -> Dict[str, float]:
        return {name: float(x[k]) for k, name in enumerate(self.names)}


def lp_solve(model: MilpModel) -> MilpSolution:
    """Solve the linear relaxation (binaries relaxed to [0, 1]).

    Returns:
        MilpSolution: OPTIMAL with a basic optimal point and reduced costs,
        or INFEASIBLE.

    Raises:
        UnboundedError: If the relaxation is unbounded.
    """
    for cut in model.constraints:
        validate_cut(model, cut)
    comp = _Compiled(model)
    A, senses, rhs = comp.arrays()
    result = _simplex(comp.c, A, senses, rhs, comp.lower, comp.upper)
    logger.debug(f"LP relaxation: {result.status} after {result.pivots} pivots")
    if result.status != OPTIMAL:
        return MilpSolution(result.status, {}, -math.inf, 1, 0, result.pivots)
    fixed = comp.upper - comp.lower <= 0
    reduced = {
        name: float(result.reduced_costs[k]) for k, name in enumerate(comp.names) if not fixed[k]
    }
    return MilpSolution(
        OPTIMAL, comp.assignment(result.x), result.objective, 1, 0, result.pivots, reduced
    )


################################################################################
# Branch and bound
################################################################################


def _most_fractional(x: np.ndarray, binaries: np.ndarray) -> Optional[int]:
    if binaries.size == 0:
        return None
    values = x[binaries]
    frac = values - np.floor(values)
    distance = np.minimum(frac, 1.0 - frac)
    best = int(np.argmax(distance))
    if distance[best] <= INT_TOL:
        return None
    return int(binaries[best])


def _integral_objective(comp: _Compiled) -> bool:
    continuous = np.ones(comp.c.size, dtype=bool)
    continuous[comp.binaries] = False
    coefs = comp.c[comp.binaries]
    return bool(np.all(comp.c[continuous] == 0) and np.all(coefs == np.round(coefs)))


def bnb_solve(
    model: MilpModel,
    lazy_cb: Optional[LazyCallback] = None,
    mip_gap: float = MIP_GAP,
    node_limit: int = NODE_LIMIT,
    time_limit: Optional[float] = None,
) -> MilpSolution:
    """Best-first branch and bound with lazy constraints.

    Args:
        model (MilpModel): The model; cuts returned by lazy_cb are appended
            to model.constraints.
        lazy_cb (Optional[LazyCallback]): Called with the assignment of each
            integral relaxation optimum. An empty answer accepts the point.
        mip_gap (float): Relative gap under which a node is pruned.
        node_limit (int): Maximum number of nodes to solve.
        time_limit (Optional[float]): Wall-clock seconds.

    Returns:
        MilpSolution: OPTIMAL, INFEASIBLE or ITERATION_LIMIT (with the best
        incumbent, if any).

    Raises:
        UnboundedError: If a relaxation is unbounded.
    """
    for cut in model.constraints:
        validate_cut(model, cut)
    comp = _Compiled(model)
    A, senses, rhs = comp.arrays()
    integral = _integral_objective(comp)
    start = time.perf_counter()

    incumbent_value = -math.inf
    incumbent_x: Optional[np.ndarray] = None

    def prunable(bound: float) -> bool:
        if incumbent_x is None:
            return False
        if integral:
            return math.floor(bound + 1e-6) <= incumbent_value
        return bound - incumbent_value <= mip_gap * max(1.0, abs(incumbent_value))

    counter = itertools.count()
    heap = [(-math.inf, next(counter), comp.lower.copy(), comp.upper.copy())]
    nodes = cuts_added = pivots = 0
    status = OPTIMAL
    while heap:
        if nodes >= node_limit or (time_limit is not None and time.perf_counter() - start > time_limit):
            status = ITERATION_LIMIT
            logger.debug(f"Branch and bound stopped after {nodes} nodes")
            break
        neg_bound, _, lo, hi = heapq.heappop(heap)
        if prunable(-neg_bound):
            continue
        nodes += 1
        while True:
            lp = _simplex(comp.c, A, senses, rhs, lo, hi)
            pivots += lp.pivots
            if lp.status == INFEASIBLE or prunable(lp.objective):
                break
            if lp.status == ITERATION_LIMIT:
                status = ITERATION_LIMIT
                break
            j = _most_fractional(lp.x, comp.binaries)
            if j is not None:
                down_hi = hi.copy()
                down_hi[j] = 0.0
                up_lo = lo.copy()
                up_lo[j] = 1.0
                heapq.heappush(heap, (-lp.objective, next(counter), lo, down_hi))
                heapq.heappush(heap, (-lp.objective, next(counter), up_lo, hi))
                break
            x = lp.x.copy()
            x[comp.binaries] = np.round(x[comp.binaries])
            if lazy_cb is not None:
                cuts = list(lazy_cb(comp.assignment(x)))
                if cuts:
                    for cut in cuts:
                        add_constraint(model, cut)
                        comp.add(cut)
                    cuts_added += len(cuts)
                    A, senses, rhs = comp.arrays()
                    continue
            value = float(comp.c @ x)
            if value > incumbent_value:
                incumbent_value, incumbent_x = value, x
                logger.debug(f"New incumbent {value:.10g} at node {nodes}")
            break

    logger.debug(
        f"Branch and bound: {nodes} nodes, {cuts_added} lazy cuts, {pivots} pivots, "
        f"best {incumbent_value:.10g}"
    )
    if incumbent_x is None:
        if status == OPTIMAL:
            status = INFEASIBLE
        return MilpSolution(status, {}, -math.inf, nodes, cuts_added, pivots)
    return MilpSolution(
        status, comp.assignment(incumbent_x), incumbent_value, nodes, cuts_added, pivots
    )


################################################################################
# Text dump
################################################################################


def _format_row(row: Dict[str, float]) -> str:
    parts = []
    for name, coef in row.items():
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {abs(coef):.17g} {name}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def dump_lp(model: MilpModel) -> str:
    """Render a model in the plain LP-style grammar of docs/lp-format.txt."""
    lines = ["maximize", f"  obj: {_format_row(model.objective) or '0'}", "subject to"]
    for k, cut in enumerate(model.constraints, start=1):
        lines.append(f"  c{k} [{cut.origin}]: {_format_row(cut.row)} {cut.sense} {cut.rhs:.17g}")
    lines.append("bounds")
    for v in model.variables:
        if v.kind == BINARY:
            continue
        upper = "inf" if math.isinf(v.upper) else f"{v.upper:.17g}"
        lines.append(f"  {v.lower:.17g} <= {v.name} <= {upper}")
    binaries = [v.name for v in model.variables if v.kind == BINARY]
    if binaries:
        lines.append("binary")
        lines.append("  " + " ".join(binaries))
    lines.append("end")
    return "\n".join(lines) + "\n"
