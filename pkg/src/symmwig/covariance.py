"""Exact finite-size covariances of trace statistics, and their limits.

The covariance of two power traces expands into a sum over pairs of cyclic
index walks; grouping the walk pairs by which entries coincide reduces the
leading order to one term per dihedral group element.  This module
evaluates the finite-size formula exactly (integer sign bookkeeping, one
float rounding at the end), provides the closed-form limits, and carries
two independent brute-force oracles used to cross-check everything:
a configuration oracle for finite-support entry laws and a moment oracle
that factorizes entry products over equivalence classes.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np

from .chebyshev import cheb_coefficients
from .ensemble import (
    EntryModel,
    IndexPair,
    SymmetryClass,
    build_equivalence_classes,
    class_of,
    class_tables,
)
from .patterns import BudgetError, DihedralElement, dihedral_group, pair_partition

__all__ = [
    "BudgetError",
    "MultiIndex",
    "InducedPartition",
    "PerGContribution",
    "CovReport",
    "enumerate_consistent_multiindices",
    "induced_partition",
    "good_multiindices",
    "V_n_exact",
    "V_asymptotic",
    "cov_traces_config_oracle",
    "cov_traces_moment_oracle",
    "cov_cheb_moment_oracle",
    "cov_report",
]

PARTITION_MODES = ("equality", "compatible")


@dataclass(frozen=True)
class MultiIndex:
    """Two cyclically consistent rows of index pairs.

    Row i is ((p_1,p_2), (p_2,p_3), ..., (p_{k_i},p_1)): the second
    coordinate of each pair feeds the first coordinate of the next, so a
    row is determined by its p-sequence.
    """

    k1: int
    k2: int
    rows: tuple[tuple[IndexPair, ...], tuple[IndexPair, ...]]

    def __post_init__(self) -> None:
        if (self.k1, self.k2) != (len(self.rows[0]), len(self.rows[1])):
            raise ValueError("row lengths disagree with k1, k2")
        for row in self.rows:
            k = len(row)
            for l in range(k):
                if row[l][1] != row[(l + 1) % k][0]:
                    raise ValueError(f"row {row} is not cyclically consistent")

    @classmethod
    def from_p_sequences(cls, p1: tuple[int, ...], p2: tuple[int, ...]) -> "MultiIndex":
        row1 = tuple((p1[l], p1[(l + 1) % len(p1)]) for l in range(len(p1)))
        row2 = tuple((p2[l], p2[(l + 1) % len(p2)]) for l in range(len(p2)))
        return cls(len(p1), len(p2), (row1, row2))


@dataclass(frozen=True)
class InducedPartition:
    """Partition of the row-slot labels (i, l) by entry equivalence."""

    blocks: frozenset[frozenset[tuple[int, int]]]

    def refines_into(self, other: frozenset[frozenset[tuple[int, int]]]) -> bool:
        """Whether every block of ``other`` sits inside one block of self."""
        where = {}
        for b in self.blocks:
            for lab in b:
                where[lab] = b
        return all(len({where[lab] for lab in blk}) == 1 for blk in other)


def enumerate_consistent_multiindices(
    dim: int, k1: int, k2: int, budget: int = 10**8
) -> Iterator[MultiIndex]:
    """All dim^k1 * dim^k2 consistent row pairs on indices 1..dim."""
    if k1 < 1 or k2 < 1:
        raise ValueError("row lengths must be positive")
    count = dim ** (k1 + k2)
    if count > budget:
        raise BudgetError(f"{count} multi-indices exceed budget {budget}")
    rng = range(1, dim + 1)
    for p1 in itertools.product(rng, repeat=k1):
        for p2 in itertools.product(rng, repeat=k2):
            yield MultiIndex.from_p_sequences(p1, p2)


def induced_partition(
    P: MultiIndex, symmetry_class: SymmetryClass, n: int
) -> InducedPartition:
    """Group the slots (i, l) whose index pairs share an entry class.

    Raises ValueError if any slot meets a forced zero entry (those
    multi-indices contribute nothing and have no induced partition).
    """
    by_class: dict[int, set[tuple[int, int]]] = defaultdict(set)
    for i, row in enumerate(P.rows, start=1):
        for l, pair in enumerate(row, start=1):
            hit = class_of(symmetry_class, n, pair)
            if hit is None:
                raise ValueError(f"slot ({i},{l}) meets a forced zero entry {pair}")
            by_class[hit[0]].add((i, l))
    return InducedPartition(frozenset(frozenset(v) for v in by_class.values()))


def good_multiindices(
    g: DihedralElement,
    symmetry_class: SymmetryClass,
    n: int,
    m: int,
    partition_mode: str = "equality",
    budget: int = 10**8,
) -> list[MultiIndex]:
    """Consistent multi-indices whose induced partition matches pi_g.

    Reference enumeration (one MultiIndex at a time); the exact-variance
    path below recomputes the same set with vectorized bookkeeping.  In
    "equality" mode the induced partition must equal pi_g exactly; in
    "compatible" mode it may merge additional slots on top of pi_g.
    """
    if partition_mode not in PARTITION_MODES:
        raise ValueError(f"partition_mode must be one of {PARTITION_MODES}")
    if g.m != m:
        raise ValueError("group element length disagrees with m")
    target = frozenset(
        frozenset({(1, l), (2, g(l))}) for l in range(1, m + 1)
    )
    out = []
    for P in enumerate_consistent_multiindices(2 * n, m, m, budget=budget):
        try:
            ind = induced_partition(P, symmetry_class, n)
        except ValueError:
            continue
        if partition_mode == "equality":
            if ind.blocks == target:
                out.append(P)
        elif ind.refines_into(target):
            out.append(P)
    return out


# -- vectorized good-set sign sums --------------------------------------------

def _member_tables(symmetry_class: SymmetryClass, n: int):
    """Per-class lookup keyed by first index: a class has at most one
    member in each row of the matrix, so (class, p) determines (q, sign)."""
    classes = build_equivalence_classes(symmetry_class, n)
    dim = 2 * n
    C = len(classes)
    q_by_p = np.zeros((C, dim), dtype=np.int32)
    s_by_p = np.zeros((C, dim), dtype=np.int8)
    ok_by_p = np.zeros((C, dim), dtype=bool)
    member_p = np.full((C, 4), -1, dtype=np.int32)
    for c in classes:
        for k, ((p, q), s) in enumerate(zip(c.members, c.signs)):
            q_by_p[c.index, p - 1] = q - 1
            s_by_p[c.index, p - 1] = s
            ok_by_p[c.index, p - 1] = True
            member_p[c.index, k] = p - 1
    return q_by_p, s_by_p, ok_by_p, member_p


def _good_sign_sum(
    symmetry_class: SymmetryClass,
    n: int,
    m: int,
    g: DihedralElement,
    partition_mode: str = "equality",
) -> int:
    """Integer sum over S^good(pi_g) of the product of all member signs.

    Enumerates the first row's index walks in bulk; the second row is then
    chased deterministically from each of the (at most four) admissible
    starting indices of its first slot's class.
    """
    dim = 2 * n
    cls_id, sign = class_tables(symmetry_class, n)
    q_by_p, s_by_p, ok_by_p, member_p = _member_tables(symmetry_class, n)
    g0 = [x - 1 for x in g.perm]  # 0-based images
    ginv = [0] * m
    for l in range(m):
        ginv[g0[l]] = l
    total = 0
    n_walks = dim ** (m - 1)
    for p0 in range(dim):
        rem = np.arange(n_walks)
        cols = [np.full(n_walks, p0, dtype=np.int32)]
        for _ in range(m - 1):
            cols.append((rem % dim).astype(np.int32))
            rem //= dim
        c = [cls_id[cols[l], cols[(l + 1) % m]] for l in range(m)]
        valid = np.ones(n_walks, dtype=bool)
        for l in range(m):
            valid &= c[l] >= 0
        if partition_mode == "equality":
            for l in range(m):
                for l2 in range(l + 1, m):
                    valid &= c[l] != c[l2]
        if not valid.any():
            continue
        w = np.nonzero(valid)[0]
        cw = [arr[w] for arr in c]
        s1 = np.ones(len(w), dtype=np.int64)
        for l in range(m):
            s1 *= sign[cols[l][w], cols[(l + 1) % m][w]]
        # slot j of row two carries the class of row-one slot g^{-1}(j)
        d = [cw[ginv[j]] for j in range(m)]
        chased = np.zeros(len(w), dtype=np.int64)
        for k in range(4):
            start = member_p[d[0], k]
            alive = start >= 0
            v = np.where(alive, start, 0).astype(np.int32)
            v0 = v.copy()
            s2 = np.ones(len(w), dtype=np.int8)
            for j in range(m):
                flat = d[j].astype(np.int64) * dim + v
                alive &= ok_by_p.ravel()[flat]
                s2 = s2 * s_by_p.ravel()[flat]
                v = q_by_p.ravel()[flat]
            alive &= v == v0  # cyclic closure of row two
            chased += np.where(alive, s2.astype(np.int64), 0)
        total += int(np.sum(s1 * chased))
    return total


# -- exact finite-size variance ------------------------------------------------

def _pair_moment_unit(symmetry_class: SymmetryClass) -> int:
    # E a(P) a(Q) within one class is (sign product) * unit * E g^2;
    # the DIII representative entry is i*g, so the unit is i^2 = -1.
    return -1 if symmetry_class is SymmetryClass.DIII else 1


def V_n_exact(
    symmetry_class: SymmetryClass,
    n: int,
    m: int,
    model: EntryModel,
    partition_mode: str = "equality",
    budget: int = 10**8,
) -> float:
    """Finite-size variance coefficient of the degree-m Chebyshev trace.

    m=1 sums diagonal second moments directly, m=2 sums fourth-moment
    covariances over equivalent off-diagonal pairs, and m>=3 evaluates the
    dihedral good-set formula with integer sign arithmetic, rounding to
    float once at the end.
    """
    if partition_mode not in PARTITION_MODES:
        raise ValueError(f"partition_mode must be one of {PARTITION_MODES}")
    if m < 1:
        raise ValueError("m must be positive")
    dim = 2 * n
    if m == 1:
        unit = _pair_moment_unit(symmetry_class)
        acc = 0
        for p in range(1, dim + 1):
            hp = class_of(symmetry_class, n, (p, p))
            if hp is None:
                continue
            for q in range(1, dim + 1):
                hq = class_of(symmetry_class, n, (q, q))
                if hq is not None and hq[0] == hp[0]:
                    acc += hp[1] * hq[1] * unit
        return float(acc) * model.sigma2 / dim
    if m == 2:
        var4 = model.moment(4) - model.sigma2**2
        ksum = sum(
            sum(1 for (p, q) in c.members if p != q) ** 2
            for c in build_equivalence_classes(symmetry_class, n)
        )
        return float(Fraction(ksum, dim**2)) * var4
    if dim**m > budget:
        raise BudgetError(f"{dim}^{m} first-row walks exceed budget {budget}")
    total = sum(
        _good_sign_sum(symmetry_class, n, m, g, partition_mode)
        for g in dihedral_group(m)
    )
    unit = _pair_moment_unit(symmetry_class)
    return float(Fraction(total * unit**m, dim**m)) * model.sigma2**m


def V_asymptotic(
    symmetry_class: SymmetryClass,
    m: int,
    sigma: float = 1.0,
    model: Optional[EntryModel] = None,
) -> tuple[float, str]:
    """Limiting variance of the degree-m Chebyshev trace, with provenance.

    Returns (value, flag).  flag is "theorem" for the closed-form cases
    (0 for m=1 and odd m, 4m sigma^(2m) for even m >= 4) and "derived" for
    m=2, whose limit is model dependent: 4 Var(g^2), validated against the
    finite-size values and the oracles, not quoted from anywhere.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if m == 2:
        if model is None:
            raise ValueError("the m=2 limit depends on the entry model")
        if abs(model.sigma2 - sigma**2) > 1e-12 * max(1.0, sigma**2):
            raise ValueError("sigma disagrees with the model's second moment")
        return 4.0 * (model.moment(4) - model.sigma2**2), "derived"
    if m % 2 == 1:
        return 0.0, "theorem"
    return 4.0 * m * float(sigma) ** (2 * m), "theorem"


# -- configuration oracle ------------------------------------------------------

def _cheb_trace_pair(X: np.ndarray, sigma: float, m: int, mu: int):
    """Traces of the degree-m and degree-mu polynomials of each matrix in
    the batch, by the full three-term matrix recurrence (no shortcuts:
    this is the ground-truth path)."""
    B, d, _ = X.shape
    eye = np.broadcast_to(np.eye(d, dtype=X.dtype), X.shape)
    want = {m: None, mu: None}
    prev = 2.0 * eye.copy()  # degree 0
    cur = X  # degree 1
    if 0 in want:
        raise ValueError("degrees must be >= 1")
    for deg in range(1, max(m, mu) + 1):
        if deg >= 2:
            prev, cur = cur, X @ cur - sigma**2 * prev
        if deg in want:
            tr = np.einsum("bii->b", cur)
            want[deg] = tr.real if np.iscomplexobj(tr) else tr
    return want[m], want[mu]


def cov_traces_config_oracle(
    symmetry_class: SymmetryClass,
    n: int,
    m: int,
    mu: int,
    model: EntryModel,
    sigma: Optional[float] = None,
    budget: int = 10**7,
    chunk: int = 8192,
) -> float:
    """Exact Cov(Tr T_m, Tr T_mu) for finite-support entry laws.

    Enumerates every joint assignment of the class variables, weights each
    configuration by its product probability, and evaluates both traces by
    the literal matrix recurrence.
    """
    atoms = model.finite_support
    if atoms is None:
        raise ValueError("configuration oracle needs a finite-support model")
    if m < 1 or mu < 1:
        raise ValueError("degrees must be >= 1")
    if sigma is None:
        sigma = model.sigma
    classes = build_equivalence_classes(symmetry_class, n)
    nc = len(classes)
    A = len(atoms)
    n_cfg = A**nc
    if n_cfg > budget:
        raise BudgetError(f"{A}^{nc} configurations exceed budget {budget}")

    dim = 2 * n
    cls_id, sign = class_tables(symmetry_class, n)
    mask = (cls_id >= 0).ravel()
    flat_pos = np.nonzero(mask)[0]
    cid_flat = cls_id.ravel()[flat_pos]
    sign_flat = sign.ravel()[flat_pos].astype(np.float64)
    values = np.array([v for v, _ in atoms])
    probs = np.array([p for _, p in atoms])
    unit = 1j if symmetry_class is SymmetryClass.DIII else 1.0
    scale = 1.0 / math.sqrt(dim)

    sx, sy, sxy = [], [], []
    for lo in range(0, n_cfg, chunk):
        idx = np.arange(lo, min(lo + chunk, n_cfg), dtype=np.int64)
        digits = np.empty((len(idx), nc), dtype=np.int64)
        rem = idx.copy()
        for c in range(nc):
            digits[:, c] = rem % A
            rem //= A
        w = probs[digits].prod(axis=1)
        draws = values[digits]  # (B, nc)
        W = np.zeros((len(idx), dim * dim))
        W[:, flat_pos] = sign_flat * draws[:, cid_flat]
        X = (unit * scale) * W.reshape(len(idx), dim, dim)
        tx, ty = _cheb_trace_pair(X, sigma, m, mu)
        sx.append(float(np.dot(w, tx)))
        sy.append(float(np.dot(w, ty)))
        sxy.append(float(np.dot(w, tx * ty)))
    ex, ey, exy = math.fsum(sx), math.fsum(sy), math.fsum(sxy)
    return exy - ex * ey


# -- moment oracle ---------------------------------------------------------------

def _power_trace_monomials(
    symmetry_class: SymmetryClass, n: int, k: int, budget: int
) -> dict[tuple[int, ...], int]:
    """Tr(X_raw^k) as a signed sum of class-variable monomials.

    X_raw carries unnormalized entries with the DIII unit i stripped (the
    caller reinstates i^k).  Keys are sorted class-id tuples (one id per
    walk step), values are integer coefficients.
    """
    dim = 2 * n
    if dim**k > budget:
        raise BudgetError(f"{dim}^{k} walks exceed budget {budget}")
    cls_id, sign = class_tables(symmetry_class, n)
    grids = np.meshgrid(*([np.arange(dim)] * k), indexing="ij")
    walk = np.stack([gr.ravel() for gr in grids], axis=1).astype(np.int32)
    c = np.empty_like(walk)
    s = np.ones(walk.shape[0], dtype=np.int64)
    valid = np.ones(walk.shape[0], dtype=bool)
    for l in range(k):
        pl, ql = walk[:, l], walk[:, (l + 1) % k]
        c[:, l] = cls_id[pl, ql]
        valid &= c[:, l] >= 0
        s *= sign[pl, ql]
    c = np.sort(c[valid], axis=1)
    s = s[valid]
    out: dict[tuple[int, ...], int] = {}
    if len(c):
        uniq, inv = np.unique(c, axis=0, return_inverse=True)
        sums = np.zeros(len(uniq), dtype=np.int64)
        np.add.at(sums, inv, s)
        for row, coef in zip(uniq, sums):
            if coef:
                out[tuple(int(x) for x in row)] = int(coef)
    return out


def _mono_exponents(mono: tuple[int, ...]) -> dict[int, int]:
    e: dict[int, int] = defaultdict(int)
    for cid in mono:
        e[cid] += 1
    return dict(e)


def cov_traces_moment_oracle(
    symmetry_class: SymmetryClass,
    n: int,
    k1: int,
    k2: int,
    model: EntryModel,
    budget: int = 10**8,
) -> float:
    """Exact Cov(Tr X^k1, Tr X^k2) by factorizing entry products.

    Expands each power trace over cyclic walks, collects the walks into
    class-variable monomials with integer coefficients, and evaluates all
    expectations from the model's exact moments.  Entry laws with vanishing
    odd moments allow cross terms to be pruned by odd-exponent signature.
    """
    if k1 < 1 or k2 < 1:
        raise ValueError("powers must be >= 1")
    if (k1 + k2) % 2 == 1:
        # one trace is an odd polynomial of an ensemble symmetric under
        # X -> -X conjugation, hence identically zero
        return 0.0
    P1 = _power_trace_monomials(symmetry_class, n, k1, budget)
    P2 = _power_trace_monomials(symmetry_class, n, k2, budget)
    mom = model.moment

    def expect(P: dict[tuple[int, ...], int]) -> float:
        vals = []
        for mono, coef in P.items():
            e = _mono_exponents(mono)
            if any(v % 2 for v in e.values()) and model.odd_moments_vanish(
                max(e.values())
            ):
                continue
            vals.append(coef * math.prod(mom(v) for v in e.values()))
        return math.fsum(vals)

    prune = model.odd_moments_vanish(k1 + k2)

    def grouped(P):
        g = defaultdict(list)
        for mono, coef in P.items():
            e = _mono_exponents(mono)
            sig = frozenset(c for c, v in e.items() if v % 2) if prune else None
            g[sig].append((coef, e))
        return g

    g1, g2 = grouped(P1), grouped(P2)
    cross = []
    for sig, lst1 in g1.items():
        lst2 = g2.get(sig)
        if not lst2:
            continue
        for c1, e1 in lst1:
            for c2, e2 in lst2:
                merged = dict(e1)
                for cid, v in e2.items():
                    merged[cid] = merged.get(cid, 0) + v
                cross.append(c1 * c2 * math.prod(mom(v) for v in merged.values()))
    exy = math.fsum(cross)
    ex, ey = expect(P1), expect(P2)
    if symmetry_class is SymmetryClass.DIII:
        unit = (-1.0) ** ((k1 + k2) // 2)
    else:
        unit = 1.0
    norm = float(2 * n) ** (-(k1 + k2) // 2)
    return unit * norm * (exy - ex * ey)


def cov_cheb_moment_oracle(
    symmetry_class: SymmetryClass,
    n: int,
    m: int,
    mu: int,
    model: EntryModel,
    sigma: Optional[float] = None,
    cache: Optional[dict] = None,
    budget: int = 10**8,
) -> float:
    """Cov(Tr T_m, Tr T_mu) assembled bilinearly from power covariances."""
    if sigma is None:
        sigma = model.sigma
    if cache is None:
        cache = {}
    cm = cheb_coefficients(m, sigma).coeffs
    cmu = cheb_coefficients(mu, sigma).coeffs
    terms = []
    for j in range(1, m + 1):
        if cm[j] == 0:
            continue
        for k in range(1, mu + 1):
            if cmu[k] == 0:
                continue
            key = (min(j, k), max(j, k))
            if key not in cache:
                cache[key] = cov_traces_moment_oracle(
                    symmetry_class, n, key[0], key[1], model, budget=budget
                )
            terms.append(cm[j] * cmu[k] * sigma ** (m - j + mu - k) * cache[key])
    return math.fsum(terms)


# -- reporting -------------------------------------------------------------------

@dataclass(frozen=True)
class PerGContribution:
    label: str
    kind: str
    nu: int
    sign_sum: int  # integer good-set sign sum for this element
    value: float   # sign_sum scaled to its share of V_n


@dataclass(frozen=True)
class CovReport:
    symmetry_class: SymmetryClass
    n: int
    m: int
    v_n: float
    v_asymptotic: float
    flag: str
    gap: float
    per_g: tuple[PerGContribution, ...]


def cov_report(
    symmetry_class: SymmetryClass,
    n: int,
    m: int,
    model: EntryModel,
    partition_mode: str = "equality",
    budget: int = 10**8,
) -> CovReport:
    """Exact value, limit, gap, and (for m >= 3) the per-element split."""
    v_n = V_n_exact(symmetry_class, n, m, model, partition_mode, budget)
    v_inf, flag = V_asymptotic(symmetry_class, m, model.sigma, model)
    per_g: list[PerGContribution] = []
    if m >= 3:
        dim = 2 * n
        unit = _pair_moment_unit(symmetry_class)
        for g in dihedral_group(m):
            ssum = _good_sign_sum(symmetry_class, n, m, g, partition_mode)
            val = float(Fraction(ssum * unit**m, dim**m)) * model.sigma2**m
            per_g.append(PerGContribution(str(g), g.kind, g.nu, ssum, val))
        # integer-level consistency with the reported total
        total = sum(t.sign_sum for t in per_g)
        assert (
            float(Fraction(total * unit**m, dim**m)) * model.sigma2**m == v_n
        )
    return CovReport(
        symmetry_class=symmetry_class,
        n=n,
        m=m,
        v_n=v_n,
        v_asymptotic=v_inf,
        flag=flag,
        gap=abs(v_n - v_inf),
        per_g=tuple(per_g),
    )
