"""Building one measure with prescribed marginals.

Two routes are provided and kept deliberately independent of each other:

* the constructive engine: an inclusion-exclusion common extension for
  consistent signed families, a norm-controlled right inverse of the
  projection operator onto a target family, and a coordinate-by-coordinate
  extension driver that keeps every partial measure consistent with the
  prescriptions and approximately independent;
* a brute-force linear-feasibility oracle that decides the same question on
  small windows without sharing any code with the engine.

Analytic constants are never trusted for control flow. The engine measures
operator norms, positivity margins, and independence defects per step and
fails loudly when a budget is violated.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse
from scipy.optimize import linprog

from .errors import (
    AnchorError,
    CapacityError,
    ConsistencyError,
    DomainError,
    IndependenceError,
    MargexError,
    PositivityError,
    SingularityError,
)
from .measures import (
    CELL_CAP,
    DEFAULT_TOL,
    EMPTY,
    Alphabet,
    DenseMeasure,
    IndexLike,
    IndexSet,
    MarginalFamily,
    consistency_gap,
    delta_independence,
    product_measure,
    project,
    relative_product,
    sup_distance,
    tensor,
)

ORACLE_CELL_CAP = 2**16


class SolverError(MargexError, RuntimeError):
    """The external LP solver neither solved nor proved infeasibility."""


def thresholds(alpha: float, n_cap: int, c_prime: float) -> tuple[float, float]:
    """Closed-form independence budgets for a family with overlap bound ``n_cap``.

    Returns ``(beta, delta)`` with ``beta = alpha^N / 2N`` and
    ``delta = beta * alpha^N / (4 * C' * N)``. These are existence-grade
    values; the engine treats them as budgets, not guarantees.
    """
    if not (0.0 < alpha <= 0.5):
        raise DomainError(f"alpha must lie in (0, 1/2], got {alpha}")
    if n_cap < 1:
        raise DomainError(f"N must be >= 1, got {n_cap}")
    if c_prime < 1.0:
        raise DomainError(f"C' must be >= 1, got {c_prime}")
    beta = alpha**n_cap / (2.0 * n_cap)
    delta = beta * alpha**n_cap / (4.0 * c_prime * n_cap)
    return beta, delta


# -- inclusion-exclusion common extension ---------------------------------------

def inclusion_exclusion_extension(
    parts: list[DenseMeasure],
    q: DenseMeasure | None = None,
    tol: float = DEFAULT_TOL,
) -> DenseMeasure:
    """Common extension of a consistent family of signed measures.

    For each nonempty subset ``J`` of the parts, form the shared projection
    onto the intersection of their supports, tensored with the reference
    measure ``q`` on the remaining coordinates, and combine the terms with
    alternating signs. The result projects back onto every part exactly.

    ``q`` defaults to the uniform probability measure on the union support
    and must be strictly positive.
    """
    if not parts:
        raise DomainError("need at least one part")
    alphabet = parts[0].alphabet
    union = EMPTY
    for mu in parts:
        if mu.alphabet != alphabet:
            raise DomainError("parts must share one alphabet")
        union = union.union(mu.support)
    if q is None:
        q = DenseMeasure.uniform(alphabet, union)
    if q.support != union or q.kind != "probability":
        raise DomainError("reference measure must be a probability measure on the union support")
    if q.min_entry() <= 0.0:
        raise DomainError("reference measure must be strictly positive")
    for i, j in combinations(range(len(parts)), 2):
        gap = consistency_gap(parts[i], parts[j])
        if gap > tol:
            raise ConsistencyError(f"parts {i} and {j} disagree by {gap} on their overlap")

    # order the parts deterministically so the "shared projection" choice is stable
    ordered = sorted(range(len(parts)), key=lambda i: parts[i].support.indices)
    total = np.zeros(q.table.size)
    for r in range(1, len(parts) + 1):
        sign = 1.0 if r % 2 == 1 else -1.0
        for subset in combinations(ordered, r):
            inter = parts[subset[0]].support
            for i in subset[1:]:
                inter = inter.intersection(parts[i].support)
            shared = project(parts[subset[0]], inter)
            term = tensor(shared, project(q, union.difference(inter)))
            total += sign * term.table
    return DenseMeasure(alphabet, union, total, "signed")


# -- projection operators and right inverses ------------------------------------

def _cell_codes(size: int, support: IndexSet, target: IndexSet) -> np.ndarray:
    """Lexicographic cell index in ``A^target`` of each cell of ``A^support``."""
    n_cells = size ** len(support)
    codes = np.zeros(n_cells, dtype=np.int64)
    cells = np.arange(n_cells)
    for tpos, idx in enumerate(target):
        spos = support.position(idx)
        digit = (cells // size ** (len(support) - 1 - spos)) % size
        codes += digit * size ** (len(target) - 1 - tpos)
    return codes


@dataclass(frozen=True)
class ProjectionOperator:
    """The linear map sending a measure on ``A^domain`` to its projections.

    ``targets`` is the family of coordinate sets to project onto; the image of
    a measure is always a consistent family over those targets.
    """

    alphabet: Alphabet
    domain: IndexSet
    targets: tuple[IndexSet, ...]

    def __post_init__(self):
        if not self.targets:
            raise DomainError("operator needs at least one target")
        seen = set()
        for t in self.targets:
            if not t.issubset(self.domain):
                raise DomainError(f"target {tuple(t)} is not inside {tuple(self.domain)}")
            if t.indices in seen:
                raise DomainError(f"duplicate target {tuple(t)}")
            seen.add(t.indices)

    @property
    def domain_cells(self) -> int:
        return self.alphabet.size ** len(self.domain)

    @property
    def target_cells(self) -> list[int]:
        return [self.alphabet.size ** len(t) for t in self.targets]

    def matrix(self) -> np.ndarray:
        rows = []
        for t in self.targets:
            codes = _cell_codes(self.alphabet.size, self.domain, t)
            block = np.zeros((self.alphabet.size ** len(t), self.domain_cells))
            block[codes, np.arange(self.domain_cells)] = 1.0
            rows.append(block)
        return np.vstack(rows)

    def apply(self, m: DenseMeasure) -> "ConsistentFamily":
        if m.support != self.domain:
            raise DomainError("measure support does not match the operator domain")
        return ConsistentFamily(self, tuple(project(m, t) for t in self.targets))

    def family(self, measures: list[DenseMeasure]) -> "ConsistentFamily":
        if len(measures) != len(self.targets):
            raise DomainError("one measure per target required")
        for t, mu in zip(self.targets, measures):
            if mu.support != t:
                raise DomainError(f"measure on {tuple(mu.support)} does not match target {tuple(t)}")
        return ConsistentFamily(self, tuple(measures))


@dataclass(frozen=True, eq=False)
class ConsistentFamily:
    """A tuple of signed measures aligned with an operator's targets."""

    operator: ProjectionOperator
    measures: tuple[DenseMeasure, ...]

    def vector(self) -> np.ndarray:
        return np.concatenate([mu.table for mu in self.measures])

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.vector())))

    def max_pairwise_gap(self) -> float:
        gap = 0.0
        for m1, m2 in combinations(self.measures, 2):
            gap = max(gap, consistency_gap(m1, m2))
        return gap


@dataclass(frozen=True, eq=False)
class RightInverse:
    """A right inverse ``B`` of a projection operator, anchored at one pair.

    ``B`` maps consistent families back to measures on the operator domain,
    satisfies ``pi(B(u)) = u`` on the consistent subspace, and sends the
    anchor family to the anchor measure. The minimum-norm inverse supplies the
    linear part; a rank-one correction along the anchor fixes the anchor pair.
    """

    operator: ProjectionOperator
    anchor_v: DenseMeasure
    anchor_w: ConsistentFamily
    _pinv: np.ndarray
    _corr: np.ndarray
    _w_vec: np.ndarray
    _w_norm2: float
    measured_norm: float

    def evaluate(self, family: ConsistentFamily | np.ndarray) -> DenseMeasure:
        u = family.vector() if isinstance(family, ConsistentFamily) else np.asarray(family)
        x = self._pinv @ u + self._corr * (self._w_vec @ u) / self._w_norm2
        return DenseMeasure(self.operator.alphabet, self.operator.domain, x, "signed")


def bounded_right_inverse(
    op: ProjectionOperator,
    v: DenseMeasure,
    w: ConsistentFamily,
    tol: float = DEFAULT_TOL,
) -> RightInverse:
    """Right inverse of ``op`` with ``B(w) = v``, plus its measured sup-norm.

    Requires ``op(v) = w`` within ``tol`` and ``w != 0``.
    """
    if v.support != op.domain:
        raise DomainError("anchor measure must live on the operator domain")
    if w.operator is not op and w.operator != op:
        raise DomainError("anchor family must belong to the operator")
    w_vec = w.vector()
    w_norm = float(np.max(np.abs(w_vec))) if w_vec.size else 0.0
    if w_norm == 0.0:
        raise DomainError("anchor family is zero; no anchored right inverse exists")
    gap = float(np.max(np.abs(op.apply(v).vector() - w_vec)))
    if gap > tol:
        raise AnchorError(f"operator applied to the anchor measure misses w by {gap}")

    mat = op.matrix()
    pinv = np.linalg.pinv(mat)
    corr = v.table - pinv @ w_vec
    w_norm2 = float(w_vec @ w_vec)

    # measure the sup-operator norm on an orthonormal basis of the image
    u_svd, s, _ = np.linalg.svd(mat, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-12)) if s.size else 0
    measured = 0.0
    for col in range(rank):
        u = u_svd[:, col]
        x = pinv @ u + corr * (w_vec @ u) / w_norm2
        measured = max(measured, float(np.max(np.abs(x)) / np.max(np.abs(u))))
    return RightInverse(op, v, w, pinv, corr, w_vec, w_norm2, measured)


# -- one-coordinate extension step -----------------------------------------------

@dataclass(frozen=True, eq=False)
class ExtensionStep:
    """Audit record of one coordinate extension."""

    index: int
    s_bar: IndexSet
    r_bar: IndexSet
    sigma: DenseMeasure
    positivity_margin: float
    beta_defect: float
    b_norm: float
    trivial: bool
    clipped: float = 0.0
    restriction_gap: float = 0.0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "s_bar": list(self.s_bar),
            "r_bar": list(self.r_bar),
            "positivity_margin": self.positivity_margin,
            "beta_defect": self.beta_defect,
            "b_norm": self.b_norm,
            "trivial": self.trivial,
            "clipped": self.clipped,
        }


@dataclass(frozen=True, eq=False)
class ExtensionTrace:
    steps: tuple[ExtensionStep, ...]
    final: DenseMeasure

    def max_beta_defect(self) -> float:
        return max((s.beta_defect for s in self.steps), default=0.0)

    def to_dict(self) -> dict:
        return {
            "steps": [s.to_dict() for s in self.steps],
            "max_beta_defect": self.max_beta_defect(),
        }


def _fix_last_coordinate(m: DenseMeasure, n: int, symbol: int) -> DenseMeasure:
    """Slice of ``m`` at coordinate ``n = symbol`` as a signed measure."""
    pos = m.support.position(n)
    idx: list[object] = [slice(None)] * len(m.support)
    idx[pos] = symbol
    sub = m.as_array()[tuple(idx)]
    return DenseMeasure(m.alphabet, m.support.difference((n,)), sub.reshape(-1), "signed")


def _sigma_step(family, prior_support, n, marginal_of, tol, pos_tol=None):
    """Construct the prospective marginal on the reach of coordinate ``n``.

    ``marginal_of(J)`` must return the current partial measure's projection
    onto ``J``. Returns ``(sigma, ExtensionStep)`` where ``sigma`` lives on
    the union of the clipped member supports through ``n``. Negative cells
    beyond ``pos_tol`` (default ``tol``) are a hard error; smaller ones are
    clipped, renormalized, and recorded on the step.
    """
    alphabet = family.alphabet
    members_n = sorted(family.members_containing(n), key=lambda mu: mu.support.indices)
    extended = prior_support.union((n,))

    slice_sources: dict[tuple[int, ...], DenseMeasure] = {}
    for mu in members_n:
        s_set = mu.support.intersection(extended)
        restricted = project(mu, s_set)
        stored = slice_sources.get(s_set.indices)
        if stored is None:
            slice_sources[s_set.indices] = restricted
        else:
            gap = sup_distance(stored, restricted)
            if gap > max(tol, 1e-9):
                raise ConsistencyError(
                    f"two members prescribe different laws on {s_set.indices} (gap {gap})"
                )

    targets = sorted(
        {IndexSet.of(set(s) - {n}).indices for s in slice_sources},
    )
    target_sets = tuple(IndexSet(t) for t in targets)
    r_bar = EMPTY
    for t in target_sets:
        r_bar = r_bar.union(t)
    s_bar = r_bar.union((n,))

    nu_list = [
        project(slice_sources[t.union((n,)).indices], t) for t in target_sets
    ]
    op = ProjectionOperator(alphabet, r_bar, target_sets)
    v = marginal_of(r_bar)
    # anchor at the prior measure's own projections, which match the members'
    # marginals exactly in exact arithmetic; any quantization drift between
    # the two is measured and absorbed into the identity tolerances below
    w = op.apply(v)
    drift = max(
        (sup_distance(a, b) for a, b in zip(w.measures, nu_list)), default=0.0
    )
    if pos_tol is None:
        pos_tol = tol
    if drift > max(tol, 4 * pos_tol * v.table.size):
        raise AnchorError(
            f"prior measure and prescriptions disagree on the overlap by {drift}"
        )
    binv = bounded_right_inverse(op, v, w, tol=tol)

    n_pos = s_bar.position(n)
    slices = []
    for a in range(alphabet.size):
        fam_a = op.family(
            [
                _fix_last_coordinate(slice_sources[t.union((n,)).indices], n, a)
                for t in target_sets
            ]
        )
        slices.append(binv.evaluate(fam_a).as_array())
    sigma_arr = np.stack(slices, axis=n_pos)
    margin = float(sigma_arr.min())
    if margin < -pos_tol:
        raise PositivityError(
            f"prospective marginal for coordinate {n} has a negative cell ({margin})",
            margin=margin,
            cell=int(np.argmin(sigma_arr)),
        )
    clipped = 0.0
    if margin < 0.0:
        clipped = -margin
        sigma_arr = np.clip(sigma_arr, 0.0, None)
        sigma_arr *= v.total_mass() / sigma_arr.sum()
    sigma = DenseMeasure(alphabet, s_bar, sigma_arr.reshape(-1), "probability", tol=1e-6)

    # the two projection identities the construction promises
    check_tol = max(
        tol,
        10 * tol * binv.measured_norm,
        4 * clipped * sigma_arr.size,
        4 * drift * max(binv.measured_norm, 1.0),
    )
    back = sup_distance(project(sigma, r_bar), v)
    if back > check_tol:
        raise ConsistencyError(
            f"sigma does not restrict to the prior measure on {tuple(r_bar)} (gap {back})"
        )
    for s_idx, mu_s in slice_sources.items():
        gap = sup_distance(project(sigma, IndexSet(s_idx)), mu_s)
        if gap > check_tol:
            raise ConsistencyError(
                f"sigma misses the prescription on {s_idx} by {gap}"
            )

    # defect of the fresh coordinate against the atoms of A^{r_bar}
    arr = np.moveaxis(sigma_arr, n_pos, -1).reshape(-1, alphabet.size)
    row_mass = arr.sum(axis=1)
    n_marg = project(sigma, (n,)).table
    good = row_mass > 0.0
    if not np.any(good):
        raise SingularityError("all atoms of the overlap have zero mass")
    cond = arr[good] / row_mass[good, None]
    beta_defect = float(np.max(np.abs(cond - n_marg[None, :])))

    step = ExtensionStep(
        index=n,
        s_bar=s_bar,
        r_bar=r_bar,
        sigma=sigma,
        positivity_margin=margin,
        beta_defect=beta_defect,
        b_norm=binv.measured_norm,
        trivial=False,
        clipped=clipped,
        restriction_gap=back,
    )
    return sigma, step


def extend_one_index(
    family: MarginalFamily,
    lam: DenseMeasure,
    n: int,
    beta: float,
    tol: float = DEFAULT_TOL,
) -> tuple[DenseMeasure, ExtensionStep]:
    """Extend a partial measure by one fresh coordinate.

    ``lam`` must be a probability measure consistent with every family member
    and approximately independent; the output extends ``lam``, stays
    consistent with every member, and makes the new coordinate ``beta``
    independent of the existing ones. When no member mentions ``n`` the
    coordinate is appended as an independent uniform symbol.
    """
    if n in lam.support:
        raise DomainError(f"coordinate {n} already belongs to the partial measure")
    if lam.kind != "probability":
        raise DomainError("partial measure must be a probability measure")

    if not family.members_containing(n):
        lam_next = tensor(lam, DenseMeasure.uniform(family.alphabet, (n,)))
        step = ExtensionStep(
            index=n,
            s_bar=IndexSet.of((n,)),
            r_bar=EMPTY,
            sigma=DenseMeasure.uniform(family.alphabet, (n,)),
            positivity_margin=1.0 / family.alphabet.size,
            beta_defect=0.0,
            b_norm=1.0,
            trivial=True,
        )
        return lam_next, step

    sigma, step = _sigma_step(
        family, lam.support, n, lambda J: project(lam, J), tol
    )
    if step.beta_defect > beta + tol:
        raise IndependenceError(
            f"coordinate {n} is only {step.beta_defect}-independent of the prior block "
            f"(budget {beta})",
            defect=step.beta_defect,
            budget=beta,
            index=n,
        )
    lam_next = relative_product(lam, sigma, tol=max(tol, 1e-7))
    return lam_next, step


def extend_family(
    family: MarginalFamily,
    window: IndexLike,
    beta: float,
    tol: float = DEFAULT_TOL,
) -> tuple[DenseMeasure, ExtensionTrace]:
    """Extend the family to one measure on the whole window, low index first.

    Starts from the trivial measure on no coordinates and applies
    :func:`extend_one_index` for each window coordinate in ascending order.
    Raises with the failing coordinate attached if a step loses positivity or
    exceeds the independence budget.
    """
    window = IndexSet.of(window)
    if not family.union_support().issubset(window):
        raise DomainError("window must contain every member support")
    if family.alphabet.size ** len(window) > CELL_CAP:
        raise CapacityError(f"window of {len(window)} coordinates exceeds the dense cap")
    lam = DenseMeasure.unit(family.alphabet)
    steps = []
    for n in window:
        try:
            lam, step = extend_one_index(family, lam, n, beta, tol=tol)
        except (PositivityError, IndependenceError, ConsistencyError, SingularityError) as err:
            raise type(err)(f"extension failed at coordinate {n}: {err}") from err
        steps.append(step)
    return lam, ExtensionTrace(tuple(steps), lam)


# -- streaming extension with bounded memory -------------------------------------

@dataclass(frozen=True, eq=False)
class ChainKernel:
    """Conditional law of one coordinate given a bounded window of the past."""

    index: int
    r_bar: IndexSet
    sigma: DenseMeasure

    def conditional_table(self) -> np.ndarray:
        """Rows: lexicographic cells of ``A^r_bar``; columns: symbol law."""
        size = self.sigma.alphabet.size
        pos = self.sigma.support.position(self.index)
        arr = np.moveaxis(self.sigma.as_array(), pos, -1).reshape(-1, size)
        mass = arr.sum(axis=1)
        if np.any(mass <= 0.0):
            raise SingularityError(
                f"kernel at coordinate {self.index} conditions on a zero-mass cell"
            )
        return arr / mass[:, None]


@dataclass(frozen=True, eq=False)
class ChainExtension:
    """A window measure represented by per-coordinate kernels.

    Equivalent to the dense extension but never materializes more than the
    trailing ``span`` coordinates, so it scales to windows whose full table
    would be astronomically large.
    """

    family: MarginalFamily
    window: IndexSet
    span: int
    kernels: tuple[ChainKernel, ...]
    steps: tuple[ExtensionStep, ...]

    def marginal(self, target: IndexLike) -> DenseMeasure:
        """Projection onto ``target`` by forward filtering along the window."""
        target = IndexSet.of(target)
        if not target.issubset(self.window):
            raise DomainError("target must lie inside the window")
        state = DenseMeasure.unit(self.family.alphabet)
        done_upto = None
        for kernel in self.kernels:
            n = kernel.index
            state = relative_product(state, kernel.sigma, tol=1e-6)
            keep = {
                i
                for i in state.support
                if i in target or i > n - self.span
            }
            state = project(state, IndexSet.of(keep))
            done_upto = n
            if target and n >= max(target):
                break
        if target and (done_upto is None or done_upto < max(target)):
            raise DomainError("window does not cover the requested target")
        return project(state, target)

    def dense(self) -> DenseMeasure:
        return self.marginal(self.window)

    def max_beta_defect(self) -> float:
        return max((s.beta_defect for s in self.steps), default=0.0)


def extend_family_chain(
    family: MarginalFamily,
    window: IndexLike,
    beta: float | None = None,
    tol: float = DEFAULT_TOL,
    pos_tol: float | None = None,
) -> ChainExtension:
    """Window extension in kernel form with bounded-memory forward state.

    The conditional law of each fresh coordinate depends only on coordinates
    within the widest member span, so the driver keeps just that trailing
    marginal. With ``beta=None`` the per-step defect is recorded but not
    enforced. ``pos_tol`` bounds the per-step negativity that is clipped
    rather than fatal.
    """
    window = IndexSet.of(window)
    if not family.union_support().issubset(window):
        raise DomainError("window must contain every member support")
    span = 1
    for mu in family.members:
        if len(mu.support) >= 2:
            span = max(span, max(mu.support) - min(mu.support))
    if family.alphabet.size ** (span + 1) > CELL_CAP:
        raise CapacityError("member span exceeds the streaming state cap")

    state = DenseMeasure.unit(family.alphabet)
    kernels: list[ChainKernel] = []
    steps: list[ExtensionStep] = []
    seen: list[int] = []
    for n in window:
        prior = IndexSet.of(seen)
        if family.members_containing(n):
            sigma, step = _sigma_step(
                family, prior, n, lambda J: project(state, J), tol, pos_tol
            )
        else:
            sigma = DenseMeasure.uniform(family.alphabet, (n,))
            step = ExtensionStep(
                index=n,
                s_bar=IndexSet.of((n,)),
                r_bar=EMPTY,
                sigma=sigma,
                positivity_margin=1.0 / family.alphabet.size,
                beta_defect=0.0,
                b_norm=1.0,
                trivial=True,
            )
        if beta is not None and step.beta_defect > beta + tol:
            raise IndependenceError(
                f"coordinate {n}: defect {step.beta_defect} over budget {beta}",
                defect=step.beta_defect,
                budget=beta,
                index=n,
            )
        kernels.append(ChainKernel(n, step.r_bar, sigma))
        steps.append(step)
        glue_tol = max(tol, 1e-7, 2.0 * step.restriction_gap)
        state = relative_product(state, sigma, tol=glue_tol)
        keep = IndexSet.of({i for i in state.support if i > n - span})
        state = project(state, keep)
        seen.append(n)
    return ChainExtension(family, window, span, tuple(kernels), tuple(steps))


# -- linear-feasibility oracle ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class OracleResult:
    feasible: bool
    witness: DenseMeasure | None
    max_residual: float

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "max_residual": self.max_residual,
            "witness": self.witness.to_dict() if self.witness is not None else None,
        }


def brute_force_extension_exists(
    family: MarginalFamily,
    window: IndexLike,
    tol: float = 1e-7,
) -> OracleResult:
    """Decide by linear feasibility whether a common extension exists.

    Solves ``x >= 0``, ``sum x = 1``, and one marginal equation per cell of
    each member, over the dense table on the window. Completely independent
    of the constructive engine.
    """
    window = IndexSet.of(window)
    if not family.union_support().issubset(window):
        raise DomainError("window must contain every member support")
    size = family.alphabet.size
    n_cells = size ** len(window)
    if n_cells > ORACLE_CELL_CAP:
        raise CapacityError(f"oracle capped at {ORACLE_CELL_CAP} cells, window needs {n_cells}")

    rows_data: list[scipy.sparse.csr_matrix] = []
    rhs = [1.0]
    ones = scipy.sparse.csr_matrix(np.ones((1, n_cells)))
    rows_data.append(ones)
    for mu in family.members:
        codes = _cell_codes(size, window, mu.support)
        block = scipy.sparse.csr_matrix(
            (np.ones(n_cells), (codes, np.arange(n_cells))),
            shape=(size ** len(mu.support), n_cells),
        )
        rows_data.append(block)
        rhs.extend(float(x) for x in mu.table)
    a_eq = scipy.sparse.vstack(rows_data)
    b_eq = np.asarray(rhs)

    res = linprog(
        c=np.zeros(n_cells),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0.0, None),
        method="highs",
    )
    if res.status == 2:
        return OracleResult(False, None, float("inf"))
    if res.status != 0:
        raise SolverError(f"linear solver failed with status {res.status}: {res.message}")
    x = np.clip(res.x, 0.0, None)
    x = x / x.sum()
    residual = float(np.max(np.abs(a_eq @ x - b_eq)))
    if residual > tol:
        raise SolverError(f"solver residual {residual} exceeds tolerance {tol}")
    witness = DenseMeasure(family.alphabet, window, x, "probability", tol=1e-6)
    return OracleResult(True, witness, residual)


# -- hypothesis report --------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    check: str
    location: str
    magnitude: float
    limit: float

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "location": self.location,
            "magnitude": self.magnitude,
            "limit": self.limit,
        }


@dataclass(frozen=True, eq=False)
class HypothesisReport:
    ok: bool
    violations: tuple[Violation, ...]
    stats: dict

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [v.to_dict() for v in self.violations],
            "stats": self.stats,
        }


def verify_hypotheses(
    family: MarginalFamily,
    delta: float,
    tol: float = DEFAULT_TOL,
) -> HypothesisReport:
    """Report-style check of the extension hypotheses.

    Checks, without raising: the per-coordinate overlap bound against the
    family's ``n_cap``; pairwise consistency at ``tol``; the ``alpha`` floor
    on one-dimensional marginal atoms; and the ``delta`` independence of each
    member (natural ordering, improved by a full ordering scan on small
    supports). Every violation carries its location and magnitude.
    """
    violations: list[Violation] = []

    union = family.union_support()
    worst_reach = 0
    for n in union:
        reach = len(family.reach_of(n))
        worst_reach = max(worst_reach, reach)
        if reach > family.n_cap:
            violations.append(
                Violation("overlap_bound", f"coordinate {n}", float(reach), float(family.n_cap))
            )

    worst_gap = 0.0
    for i, j in combinations(range(len(family.members)), 2):
        gap = consistency_gap(family.members[i], family.members[j])
        worst_gap = max(worst_gap, gap)
        if gap > tol:
            violations.append(
                Violation("consistency", f"members {i},{j}", gap, tol)
            )

    min_atom = 1.0
    for i, mu in enumerate(family.members):
        for coord in mu.support:
            atoms = project(mu, (coord,)).table
            low = float(atoms.min())
            min_atom = min(min_atom, low)
            if low < family.alpha - tol:
                violations.append(
                    Violation(
                        "marginal_floor",
                        f"member {i}, coordinate {coord}, atom {int(np.argmin(atoms))}",
                        low,
                        family.alpha,
                    )
                )

    max_defect = 0.0
    defects = []
    for i, mu in enumerate(family.members):
        defect = delta_independence(mu, "ascending")
        if defect > delta and len(mu.support) <= 8:
            defect = min(defect, delta_independence(mu, "scan_all"))
        defects.append(defect)
        max_defect = max(max_defect, defect)
        if defect > delta + tol:
            violations.append(
                Violation("independence", f"member {i}", defect, delta)
            )

    stats = {
        "worst_overlap": worst_reach,
        "worst_consistency_gap": worst_gap,
        "min_marginal_atom": min_atom,
        "member_defects": defects,
        "max_defect": max_defect,
        "delta": delta,
    }
    return HypothesisReport(not violations, tuple(violations), stats)
