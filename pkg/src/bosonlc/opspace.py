"""Weighted operator inner products, identity projectors, and growth functionals.

Operators live as matrices over a :class:`~bosonlc.fock.FockBasis`; the
grand-canonical weights ``w_m = prod_v (1 - e^-mu) e^(-mu n_v)`` are applied
inside the inner product

    (A|B) = sum_{m,n} conj(A_mn) B_mn sqrt(w_m w_n),

which is the trace form tr(sqrt(rho) A^dag sqrt(rho) B) written over the
occupation basis.  On a capped basis the single-site identity vector is
renormalized to unit length, so the sitewise projectors below are exactly
idempotent and self-adjoint; they converge to the uncapped ones with the
documented geometric tail.

Sitewise projector machinery requires a basis without a total cap (product
structure across sites); inner products work on any basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fock import FockBasis


class MuWeights:
    """Chemical-potential weights over a basis, with square roots precomputed."""

    def __init__(self, mu: float, basis: FockBasis):
        if not mu > 0:
            raise ValueError("mu must be positive")
        self.mu = float(mu)
        self.basis = basis
        self.q = math.exp(-mu)
        prefactor = (1.0 - self.q) ** basis.num_sites
        self.w = prefactor * self.q ** basis.totals.astype(np.float64)
        self.sqrt_w = np.sqrt(self.w)
        # per-site partition of a capped site; 1 - q^(cap+1)
        self.site_partition = 1.0 - self.q ** (basis.per_site_cap + 1)

    @property
    def nbar(self) -> float:
        """Mean occupancy of an uncapped site, 1/(e^mu - 1)."""
        return self.q / (1.0 - self.q)

    def total_weight(self) -> float:
        """Sum of state weights; 1 minus the truncation tail."""
        return float(self.w.sum())

    def tail_estimate(self) -> float:
        """Documented heuristic for weight lost to the caps: L (1-q) q^cap."""
        return self.basis.num_sites * (1.0 - self.q) * self.q ** self.basis.per_site_cap

    def require_product_basis(self):
        if self.basis.total_cap is not None:
            raise ValueError("sitewise projectors need a basis without total cap")


@dataclass
class OperatorMatrix:
    """A matrix over a Fock basis, with optional (best-effort) support metadata."""

    mat: sp.csr_matrix
    basis: FockBasis
    support: frozenset[int] | None = None

    def __post_init__(self):
        if not sp.issparse(self.mat):
            self.mat = sp.csr_matrix(np.asarray(self.mat, dtype=np.complex128))
        else:
            self.mat = self.mat.tocsr().astype(np.complex128)
        if self.mat.shape != (self.basis.dim, self.basis.dim):
            raise ValueError("matrix dimension does not match basis size")

    @classmethod
    def identity(cls, basis: FockBasis) -> "OperatorMatrix":
        return cls(sp.identity(basis.dim, dtype=np.complex128, format="csr"), basis,
                   support=frozenset())

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.mat.conjugate().transpose().tocsr(), self.basis, self.support)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.mat + other.mat, self.basis, None)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.mat - other.mat, self.basis, None)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.mat @ other.mat, self.basis, None)


@dataclass(frozen=True)
class MonomialOp:
    """Normal-ordered ladder monomial prod_x (b+_x)^eta_x (b_x)^zeta_x."""

    eta: tuple[tuple[int, int], ...] = ()
    zeta: tuple[tuple[int, int], ...] = ()

    @classmethod
    def from_dicts(cls, eta: dict[int, int] | None = None,
                   zeta: dict[int, int] | None = None) -> "MonomialOp":
        e = tuple(sorted((eta or {}).items()))
        z = tuple(sorted((zeta or {}).items()))
        return cls(e, z)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(s for s, _ in self.eta) | frozenset(s for s, _ in self.zeta)

    @property
    def beta(self) -> int:
        """Total ladder degree, sum of all exponents."""
        return sum(p for _, p in self.eta) + sum(p for _, p in self.zeta)

    @property
    def gamma(self) -> int:
        """Net particle number raised by the monomial."""
        return sum(p for _, p in self.eta) - sum(p for _, p in self.zeta)

    def translate(self, offset: int) -> "MonomialOp":
        return MonomialOp(tuple((s + offset, p) for s, p in self.eta),
                          tuple((s + offset, p) for s, p in self.zeta))

    def to_matrix(self, basis: FockBasis) -> OperatorMatrix:
        from .fock import ladder_op
        mat = sp.identity(basis.dim, dtype=np.complex128, format="csr")
        # per-site creations act left of annihilations; sites commute
        for site, p in self.zeta:
            op = ladder_op(basis, site, "annihilate")
            for _ in range(p):
                mat = op @ mat
        for site, p in self.eta:
            op = ladder_op(basis, site, "create")
            for _ in range(p):
                mat = op @ mat
        return OperatorMatrix(mat, basis, support=self.support)


# ---------------------------------------------------------------------------
# inner products


def weighted_inner(a: OperatorMatrix, b: OperatorMatrix, w: MuWeights) -> complex:
    """(A|B) = sum conj(A_mn) B_mn sqrt(w_m w_n); conjugate symmetric, positive."""
    if a.basis.dim != b.basis.dim:
        raise ValueError("operators live over different bases")
    prod = sp.coo_matrix(a.mat.conjugate().multiply(b.mat))
    if prod.nnz == 0:
        return 0.0 + 0.0j
    return complex(np.sum(prod.data * w.sqrt_w[prod.row] * w.sqrt_w[prod.col]))


def weighted_norm_sq(a: OperatorMatrix, w: MuWeights) -> float:
    coo = sp.coo_matrix(a.mat)
    if coo.nnz == 0:
        return 0.0
    return float(np.sum(np.abs(coo.data) ** 2 * w.sqrt_w[coo.row] * w.sqrt_w[coo.col]))


def thermal_expectation(a: OperatorMatrix, b: OperatorMatrix, w: MuWeights) -> complex:
    """tr(rho A^dag B) over the capped basis (column-weighted entry sum)."""
    prod = sp.coo_matrix(a.mat.conjugate().multiply(b.mat))
    if prod.nnz == 0:
        return 0.0 + 0.0j
    return complex(np.sum(prod.data * w.w[prod.col]))


def check_thermal_relation(a: OperatorMatrix, b: OperatorMatrix, k: int, k_prime: int,
                           w: MuWeights) -> float:
    """Residual of (A|B) = delta_{k',0} e^{mu k/2} tr(rho A^dag B).

    Assumes [A, N] = (k + k') A and [B, N] = k B structurally; the identity
    then holds term by term even on a capped basis, so the residual is float
    noise plus truncation tail.
    """
    lhs = weighted_inner(a, b, w)
    rhs = 0.0 + 0.0j
    if k_prime == 0:
        rhs = math.exp(w.mu * k / 2.0) * thermal_expectation(a, b, w)
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# sitewise projectors


def _site_average(a: OperatorMatrix, site: int, w: MuWeights):
    """Bucket data for the identity component on one site.

    Returns (uniq_row, uniq_col, T, sel_entries) where T[k] is the value of
    the averaged operator for bucket k: the weight-averaged diagonal block

        T = (1-q)/Z * sum_k q^k A[(.., k at site), (.., k at site)]

    keyed by the state pair with the site occupancy stripped to zero.
    """
    w.require_product_basis()
    basis = a.basis
    coo = sp.coo_matrix(a.mat)
    occ_r = basis.states[coo.row, site].astype(np.int64)
    occ_c = basis.states[coo.col, site].astype(np.int64)
    sel = occ_r == occ_c
    rows = coo.row[sel]
    cols = coo.col[sel]
    vals = coo.data[sel]
    ks = occ_r[sel]
    if rows.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0, dtype=np.complex128), (rows, cols, vals, ks, empty)
    rs = basis.shifted_rows(rows, site, 0)
    cs = basis.shifted_rows(cols, site, 0)
    key = rs.astype(np.int64) * basis.dim + cs
    uniq, inv = np.unique(key, return_inverse=True)
    geom = ((1.0 - w.q) / w.site_partition) * w.q ** ks.astype(np.float64)
    t_vals = np.zeros(uniq.size, dtype=np.complex128)
    np.add.at(t_vals, inv, geom * vals)
    return uniq // basis.dim, uniq % basis.dim, t_vals, (rows, cols, vals, ks, inv)


def _one_minus_p_site(a: OperatorMatrix, site: int, w: MuWeights) -> OperatorMatrix:
    """(1 - P_site) A: replace the site dependence by its identity component."""
    basis = a.basis
    urow, ucol, t_vals, _ = _site_average(a, site, w)
    if urow.size == 0:
        return OperatorMatrix(sp.csr_matrix((basis.dim, basis.dim), dtype=np.complex128), basis)
    cap = basis.per_site_cap
    out_rows = []
    out_cols = []
    out_vals = []
    for j in range(cap + 1):
        out_rows.append(basis.shifted_rows(urow, site, j))
        out_cols.append(basis.shifted_rows(ucol, site, j))
        out_vals.append(t_vals)
    mat = sp.coo_matrix(
        (np.concatenate(out_vals),
         (np.concatenate(out_rows), np.concatenate(out_cols))),
        shape=(basis.dim, basis.dim)).tocsr()
    return OperatorMatrix(mat, basis, a.support)


def project_nonidentity(a: OperatorMatrix, sites, w: MuWeights) -> OperatorMatrix:
    """Remove the component acting as the identity on every site of ``sites``.

    Composition 1 - prod_v (1 - P_v); idempotent and self-adjoint in the
    weighted inner product.
    """
    w.require_product_basis()
    rest = a
    for v in sorted(set(sites)):
        rest = _one_minus_p_site(rest, v, w)
    return OperatorMatrix(a.mat - rest.mat, a.basis, a.support)


def project_strictly_inside(a: OperatorMatrix, x: int, w: MuWeights,
                            center: int | None = None) -> OperatorMatrix:
    """Component acting nontrivially on {x, -x} but trivially beyond, on a chain.

    Positions are measured from ``center`` (defaults to the middle site of an
    odd chain).  Summing over x = 0..L plus the global identity component
    reconstructs the operator.
    """
    basis = a.basis
    if center is None:
        if basis.num_sites % 2 == 0:
            raise ValueError("chain must have odd length for the symmetric labeling")
        center = (basis.num_sites - 1) // 2
    if x < 0 or center + x >= basis.num_sites or center - x < 0:
        raise ValueError(f"position {x} outside the chain")
    out = a
    for site in range(basis.num_sites):
        if abs(site - center) > x:
            out = _one_minus_p_site(out, site, w)
    pair = {center + x, center - x}
    interior = out
    for site in pair:
        interior = _one_minus_p_site(interior, site, w)
    return OperatorMatrix(out.mat - interior.mat, basis, a.support)


# ---------------------------------------------------------------------------
# growth functionals


def _entry_arrays(a: OperatorMatrix):
    coo = sp.coo_matrix(a.mat)
    return coo.row, coo.col, coo.data


def f_beta_expectation(a: OperatorMatrix, site: int, beta: int, w: MuWeights,
                       projected: bool = True) -> float:
    """Quadratic form weighting site occupancies, (A| F_site^beta |A).

    Each matrix element picks up (max(n_site, n'_site) + beta)^beta.  With
    ``projected`` the sitewise identity component is removed first (the
    functional used in the growth bounds); without it the raw form is
    returned (the seed values entering the envelope initial conditions).
    """
    if beta < 1:
        raise ValueError("beta must be a positive integer")
    basis = a.basis
    rows, cols, vals = _entry_arrays(a)
    if rows.size == 0:
        return 0.0
    occ_r = basis.states[rows, site].astype(np.float64)
    occ_c = basis.states[cols, site].astype(np.float64)
    weight = (np.maximum(occ_r, occ_c) + beta) ** beta
    sww = w.sqrt_w[rows] * w.sqrt_w[cols]
    raw = float(np.sum(np.abs(vals) ** 2 * sww * weight))
    if not projected:
        return raw

    w.require_product_basis()
    urow, ucol, t_vals, (srows, scols, svals, sks, inv) = _site_average(a, site, w)
    if urow.size == 0:
        return raw
    # cross term: entries of A with equal site occupancy against the average
    sww_sel = w.sqrt_w[srows] * w.sqrt_w[scols]
    f_sel = (sks.astype(np.float64) + beta) ** beta
    cross = np.sum(np.conj(svals) * t_vals[inv] * sww_sel * f_sel)
    # averaged part against itself: site sum is geometric with F weights
    cap = basis.per_site_cap
    js = np.arange(cap + 1, dtype=np.float64)
    s_f = float(np.sum((1.0 - w.q) * w.q ** js * (js + beta) ** beta))
    strip_sww = w.sqrt_w[urow] * w.sqrt_w[ucol] / (1.0 - w.q)  # site factor at occupancy 0 removed
    avg_sq = float(np.sum(np.abs(t_vals) ** 2 * strip_sww) * s_f)
    value = raw - 2.0 * float(np.real(cross)) + avg_sq
    return max(value, 0.0)


def identity_f_beta(mu: float, beta: int, cap: int | None = None) -> float:
    """(I|F^beta|I) for a single uncapped site (or truncated at ``cap``)."""
    q = math.exp(-mu)
    if cap is None:
        # series sum (1-q) sum (n+beta)^beta q^n, summed until it converges
        total = 0.0
        n = 0
        while True:
            term = (1.0 - q) * (n + beta) ** beta * q ** n
            total += term
            if term < 1e-18 * max(total, 1.0) and n > 8 * beta:
                return total
            n += 1
    js = np.arange(cap + 1, dtype=np.float64)
    z = 1.0 - q ** (cap + 1)
    return float(np.sum((1.0 - q) * q ** js * (js + beta) ** beta) / z)


def commutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    return OperatorMatrix(a.mat @ b.mat - b.mat @ a.mat, a.basis, None)


def commutator_weighted_norm(a: OperatorMatrix, b: OperatorMatrix, w: MuWeights) -> float:
    """([A,B] | [A,B]) under the weighted inner product."""
    if a.basis.dim != b.basis.dim:
        raise ValueError("operators live over different bases")
    return weighted_norm_sq(commutator(a, b), w)


def apply_liouvillian(h: sp.spmatrix, a: OperatorMatrix) -> OperatorMatrix:
    """i [H, A], the generator of Heisenberg evolution."""
    return OperatorMatrix(1j * (h @ a.mat - a.mat @ h), a.basis, None)


def monomial_commutator_bound(o: OperatorMatrix, probe: MonomialOp, w: MuWeights,
                              region: frozenset[int] | None = None) -> tuple[float, float]:
    """Both sides of the monomial-probe commutator inequality.

    lhs is the exact weighted norm of [O, probe]; rhs is

        8 beta^beta cosh(mu gamma / 2) (1 + beta (beta/(1-q))^beta)
            * sum_{x in region} (O| projected F_x^beta |O)

    with region defaulting to the probe support.  Tests assert lhs <= rhs.
    """
    region = frozenset(region) if region is not None else probe.support
    beta, gamma = probe.beta, probe.gamma
    lhs = commutator_weighted_norm(o, probe.to_matrix(o.basis), w)
    q = w.q
    prefactor = (8.0 * beta ** beta * math.cosh(w.mu * gamma / 2.0)
                 * (1.0 + beta * (beta / (1.0 - q)) ** beta))
    seed_sum = sum(f_beta_expectation(o, x, beta, w, projected=True) for x in region)
    return lhs, prefactor * seed_sum
