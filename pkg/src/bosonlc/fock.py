"""Truncated bosonic Fock spaces, ladder operators, and Hamiltonian assembly.

Conventions fixed here and used everywhere else:

* units: hbar = 1 and hopping amplitudes normalized to |J| <= 1;
* truncation: raising transitions that would exceed the per-site cap or the
  total cap are dropped (projector-truncated Hamiltonian P H P), which keeps
  every assembled operator exactly Hermitian and number conserving;
* basis order: occupation vectors are enumerated lexicographically, with
  site 0 the most significant digit.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lattice import Graph, distance

DEFAULT_STATE_BUDGET = 5_000_000


class CapacityError(MemoryError):
    """Basis enumeration would exceed the configured state budget."""

    def __init__(self, requested: int, budget: int, hint: str = ""):
        self.requested = requested
        self.budget = budget
        msg = f"basis would hold {requested} states, budget is {budget}"
        if hint:
            msg += f" ({hint})"
        super().__init__(msg)


def count_states(num_sites: int, per_site_cap: int, total_cap: int | None) -> int:
    """Number of occupation vectors allowed by the caps (exact, no allocation)."""
    if total_cap is None:
        return (per_site_cap + 1) ** num_sites
    # ways[k] = number of vectors so far with sum k
    ways = [0] * (total_cap + 1)
    ways[0] = 1
    for _ in range(num_sites):
        new = [0] * (total_cap + 1)
        for k, w in enumerate(ways):
            if w == 0:
                continue
            for n in range(min(per_site_cap, total_cap - k) + 1):
                new[k + n] += w
        ways = new
    return sum(ways)


class FockBasis:
    """Exhaustive, duplicate-free enumeration of capped occupation vectors.

    ``states`` is a read-only (dim, num_sites) uint8 array in lexicographic
    order; ``index`` maps an occupation vector back to its row.  Lookups
    during operator assembly go through a byte-packed key array so they can
    be vectorized with searchsorted.
    """

    def __init__(self, num_sites: int, per_site_cap: int, total_cap: int | None = None,
                 state_budget: int = DEFAULT_STATE_BUDGET):
        if num_sites < 1:
            raise ValueError("num_sites must be >= 1")
        if per_site_cap < 1:
            raise ValueError("per_site_cap must be >= 1")
        if per_site_cap > 255:
            raise ValueError("per_site_cap above 255 not representable (byte-packed index)")
        if total_cap is not None and total_cap < 0:
            raise ValueError("total_cap must be >= 0 when given")
        size = count_states(num_sites, per_site_cap, total_cap)
        if size > state_budget:
            raise CapacityError(size, state_budget,
                                hint=f"{num_sites} sites, cap {per_site_cap}, total {total_cap}")
        self.num_sites = num_sites
        self.per_site_cap = per_site_cap
        self.total_cap = total_cap
        self.states = self._enumerate(num_sites, per_site_cap, total_cap)
        self.states.setflags(write=False)
        self.dim = self.states.shape[0]
        assert self.dim == size
        self.totals = self.states.sum(axis=1, dtype=np.int64)
        self._keys = np.ascontiguousarray(self.states).view(f"S{num_sites}").ravel()
        # raw-bytes map (S-dtype views strip trailing nulls, so key separately)
        self._index = {self.states[i].tobytes(): i for i in range(self.dim)}

    @staticmethod
    def _enumerate(num_sites: int, cap: int, total_cap: int | None) -> np.ndarray:
        digits = np.arange(cap + 1, dtype=np.uint8)
        rows = np.zeros((1, 0), dtype=np.uint8)
        sums = np.zeros(1, dtype=np.int64)
        for _ in range(num_sites):
            rep = np.repeat(rows, cap + 1, axis=0)
            col = np.tile(digits, rows.shape[0])[:, None]
            rows = np.concatenate([rep, col], axis=1)
            sums = np.repeat(sums, cap + 1) + col.ravel()
            if total_cap is not None:
                keep = sums <= total_cap
                rows = rows[keep]
                sums = sums[keep]
        return np.ascontiguousarray(rows)

    # -- lookups ---------------------------------------------------------

    def index(self, occupations) -> int:
        """Row of one occupation vector; KeyError if outside the caps."""
        key = np.asarray(occupations, dtype=np.uint8).tobytes()
        return self._index[key]

    def lookup_rows(self, occ: np.ndarray) -> np.ndarray:
        """Vectorized index lookup; -1 marks vectors outside the basis."""
        keys = np.ascontiguousarray(occ.astype(np.uint8)).view(f"S{self.num_sites}").ravel()
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, self.dim - 1)
        hit = self._keys[pos] == keys
        return np.where(hit, pos, -1)

    def shifted_rows(self, rows: np.ndarray, site: int, to: np.ndarray | int) -> np.ndarray:
        """Indices of the given states with site occupancy replaced by ``to``."""
        occ = self.states[rows].copy()
        occ[:, site] = to
        return self.lookup_rows(occ)

    def __repr__(self) -> str:  # pragma: no cover
        return (f"FockBasis(sites={self.num_sites}, cap={self.per_site_cap}, "
                f"total={self.total_cap}, dim={self.dim})")


# ---------------------------------------------------------------------------
# schedules and model specification


@dataclass(frozen=True)
class PiecewiseConstant:
    """Piecewise-constant time profile: values[i] on [breakpoints[i-1], breakpoints[i])."""

    breakpoints: tuple[float, ...]
    values: tuple[complex, ...]

    def __post_init__(self):
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more value than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, value) -> "PiecewiseConstant":
        return cls((), (value,))

    def at(self, t: float):
        return self.values[bisect_right(self.breakpoints, t)]

    def max_abs(self) -> float:
        return max(abs(v) for v in self.values)

    @property
    def is_constant(self) -> bool:
        return len(self.values) == 1


@dataclass(frozen=True)
class Interaction:
    """Density polynomial on a support set, optionally rescaled in time.

    ``monomials`` is a tuple of (coefficient, powers) with powers a tuple of
    (site, exponent) pairs; the polynomial is sum_i c_i * prod_v n_v**p_v.
    Coefficients are real so the term is Hermitian.
    """

    support: tuple[int, ...]
    monomials: tuple[tuple[float, tuple[tuple[int, int], ...]], ...]
    schedule: PiecewiseConstant = field(default_factory=lambda: PiecewiseConstant.constant(1.0))

    def __post_init__(self):
        for coeff, powers in self.monomials:
            if abs(complex(coeff).imag) > 0:
                raise ValueError("interaction coefficients must be real")
            for site, _ in powers:
                if site not in self.support:
                    raise ValueError(f"monomial touches site {site} outside support {self.support}")

    def evaluate(self, occ_columns: dict[int, np.ndarray]) -> np.ndarray:
        """Diagonal values over basis states, given per-site occupancy columns."""
        first = next(iter(occ_columns.values()))
        out = np.zeros(first.shape[0], dtype=np.float64)
        for coeff, powers in self.monomials:
            term = np.full(first.shape[0], float(coeff))
            for site, p in powers:
                term *= occ_columns[site].astype(np.float64) ** p
            out += term
        return out


def onsite_density_interaction(site: int, strength: float) -> Interaction:
    """strength * n (n - 1) on one site, the canonical two-body repulsion."""
    return Interaction(support=(site,),
                       monomials=((strength, ((site, 2),)), (-strength, ((site, 1),))))


@dataclass(frozen=True)
class ModelSpec:
    """Hopping schedule plus density interactions on a bounded-degree graph.

    Hermiticity convention: ``hopping[(x, y)]`` with x < y stores J_xy(t); the
    reverse orientation uses the complex conjugate.  |J| <= 1 is enforced.
    """

    graph: Graph
    hopping: dict[tuple[int, int], PiecewiseConstant]
    interactions: tuple[Interaction, ...]
    interaction_range: int

    def __post_init__(self):
        edge_set = set(self.graph.edges)
        for (x, y), sched in self.hopping.items():
            if (min(x, y), max(x, y)) not in edge_set:
                raise ValueError(f"hopping on non-edge ({x},{y})")
            if sched.max_abs() > 1.0 + 1e-12:
                raise ValueError(f"|J| > 1 on edge ({x},{y}) breaks the normalization")
        for term in self.interactions:
            for u in term.support:
                for v in term.support:
                    if distance(self.graph, u, v) > self.interaction_range:
                        raise ValueError(
                            f"interaction support {term.support} has diameter "
                            f"> range {self.interaction_range}")

    # -- time structure ---------------------------------------------------

    def breakpoints(self) -> tuple[float, ...]:
        pts: set[float] = set()
        for sched in self.hopping.values():
            pts.update(sched.breakpoints)
        for term in self.interactions:
            pts.update(term.schedule.breakpoints)
        return tuple(sorted(pts))

    @property
    def is_time_independent(self) -> bool:
        return not self.breakpoints()

    def hopping_matrix(self, t: float) -> np.ndarray:
        """Hermitian single-particle hopping matrix h with h[x, y] = J_xy(t)."""
        n = self.graph.num_vertices
        h = np.zeros((n, n), dtype=np.complex128)
        for (x, y), sched in self.hopping.items():
            val = complex(sched.at(t))
            h[x, y] += val
            h[y, x] += val.conjugate()
        return h


def bose_hubbard(graph: Graph, j: complex = 1.0, u0: float = 1.0) -> ModelSpec:
    """Uniform hopping J plus U0 n(n-1) on every site."""
    sched = PiecewiseConstant.constant(j)
    hopping = {e: sched for e in graph.edges}
    terms = tuple(onsite_density_interaction(v, u0) for v in graph.vertices()) if u0 != 0 else ()
    return ModelSpec(graph=graph, hopping=hopping, interactions=terms, interaction_range=0)


def random_model_spec(rng: np.random.Generator, graph: Graph | None = None,
                      interaction_range: int = 1) -> ModelSpec:
    """Seeded random model inside the allowed class, for structural fuzzing."""
    if graph is None:
        length = int(rng.integers(3, 7))
        graph = Graph(length, [(i, i + 1) for i in range(length - 1)])
    hopping = {}
    for e in graph.edges:
        mag = rng.uniform(0.1, 1.0)
        phase = rng.uniform(0, 2 * math.pi)
        if rng.random() < 0.5:
            sched = PiecewiseConstant.constant(mag * complex(math.cos(phase), math.sin(phase)))
        else:
            t1 = rng.uniform(0.2, 0.8)
            v2 = rng.uniform(0.1, 1.0) * complex(math.cos(phase + 1), math.sin(phase + 1))
            sched = PiecewiseConstant((t1,), (mag * complex(math.cos(phase), math.sin(phase)), v2))
        hopping[e] = sched
    terms = []
    for v in graph.vertices():
        if rng.random() < 0.7:
            terms.append(onsite_density_interaction(v, float(rng.uniform(-2, 2))))
    if interaction_range >= 1:
        for u, v in graph.edges:
            if rng.random() < 0.4:
                terms.append(Interaction(
                    support=(u, v),
                    monomials=((float(rng.uniform(-1, 1)), ((u, 1), (v, 1))),)))
    return ModelSpec(graph=graph, hopping=hopping, interactions=tuple(terms),
                     interaction_range=interaction_range)


# ---------------------------------------------------------------------------
# operators over a basis (SparseOp = scipy CSR, complex128)


def ladder_op(basis: FockBasis, site: int, kind: str) -> sp.csr_matrix:
    """Matrix of b_site (annihilate), b_site^dagger (create), or n_site (number).

    Raising transitions leaving the truncated basis are dropped, matching the
    projector-truncated Hamiltonian convention.
    """
    if not (0 <= site < basis.num_sites):
        raise ValueError(f"site {site} out of range")
    occ = basis.states[:, site].astype(np.int64)
    if kind == "number":
        return sp.csr_matrix(
            (occ.astype(np.complex128), (np.arange(basis.dim), np.arange(basis.dim))),
            shape=(basis.dim, basis.dim))
    if kind == "annihilate":
        cols = np.where(occ >= 1)[0]
        rows = basis.shifted_rows(cols, site, basis.states[cols, site] - 1)
        amp = np.sqrt(occ[cols].astype(np.float64))
    elif kind == "create":
        cols = np.where(occ < basis.per_site_cap)[0]
        if basis.total_cap is not None:
            cols = cols[basis.totals[cols] < basis.total_cap]
        rows = basis.shifted_rows(cols, site, basis.states[cols, site] + 1)
        amp = np.sqrt(occ[cols].astype(np.float64) + 1.0)
    else:
        raise ValueError(f"unknown ladder kind {kind!r}")
    good = rows >= 0
    return sp.csr_matrix(
        (amp[good].astype(np.complex128), (rows[good], cols[good])),
        shape=(basis.dim, basis.dim))


def total_number_op(basis: FockBasis) -> sp.csr_matrix:
    idx = np.arange(basis.dim)
    return sp.csr_matrix((basis.totals.astype(np.complex128), (idx, idx)),
                         shape=(basis.dim, basis.dim))


def build_hamiltonian(model: ModelSpec, basis: FockBasis, t: float = 0.0) -> sp.csr_matrix:
    """Assemble H(t) = sum_edges J_xy(t) b+_x b_y + h.c. + sum_S U_S(n, t).

    The forward and reverse hopping entries are emitted from the same float
    amplitude, so the matrix is Hermitian to the bit.
    """
    if basis.num_sites != model.graph.num_vertices:
        raise ValueError("basis sites must match graph vertices")
    dim = basis.dim
    rows_acc: list[np.ndarray] = []
    cols_acc: list[np.ndarray] = []
    data_acc: list[np.ndarray] = []

    diag = np.zeros(dim, dtype=np.float64)
    occ_cols = {v: basis.states[:, v] for v in model.graph.vertices()}
    for term in model.interactions:
        scale = float(complex(term.schedule.at(t)).real)
        if scale != 0.0:
            diag += scale * term.evaluate(occ_cols)
    if np.any(diag != 0.0):
        idx = np.arange(dim)
        rows_acc.append(idx)
        cols_acc.append(idx)
        data_acc.append(diag.astype(np.complex128))

    cap = basis.per_site_cap
    for (x, y), sched in model.hopping.items():
        j = complex(sched.at(t))
        if j == 0:
            continue
        # term j * b+_x b_y maps |n> -> sqrt(n_y (n_x + 1)) |n - e_y + e_x>
        nx = basis.states[:, x].astype(np.int64)
        ny = basis.states[:, y].astype(np.int64)
        cols = np.where((ny >= 1) & (nx < cap))[0]
        if cols.size == 0:
            continue
        occ = basis.states[cols].copy()
        occ[:, y] -= 1
        occ[:, x] += 1
        rows = basis.lookup_rows(occ)
        good = rows >= 0
        cols = cols[good]
        rows = rows[good]
        amp = np.sqrt(ny[cols].astype(np.float64) * (nx[cols] + 1.0))
        rows_acc.extend((rows, cols))
        cols_acc.extend((cols, rows))
        data_acc.extend((j * amp, np.conj(j) * amp))

    if not rows_acc:
        return sp.csr_matrix((dim, dim), dtype=np.complex128)
    mat = sp.coo_matrix(
        (np.concatenate(data_acc),
         (np.concatenate(rows_acc), np.concatenate(cols_acc))),
        shape=(dim, dim), dtype=np.complex128).tocsr()
    mat.sum_duplicates()
    return mat


def check_number_conservation(h: sp.spmatrix, n_op: sp.spmatrix) -> bool:
    """True iff H N - N H vanishes identically.

    Because N is diagonal with integer entries, the commutator entry at
    (m, n) is H_mn (N_n - N_m): it is exactly zero precisely when every
    stored hopping entry connects states of equal total occupation, so the
    check is structural rather than a float comparison.
    """
    if h.shape != n_op.shape:
        raise ValueError("operator shapes differ")
    diag = n_op.diagonal()
    coo = sp.coo_matrix(h)
    if coo.nnz == 0:
        return True
    active = coo.data != 0
    return not np.any(diag[coo.row[active]] != diag[coo.col[active]])


def dump_sparse(op: sp.spmatrix, path) -> None:
    """Debug dump: one ``row col re im`` line per stored entry, row-major."""
    coo = sp.coo_matrix(op)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} "
                     f"{float(coo.data[i].real)!r} {float(coo.data[i].imag)!r}\n")
