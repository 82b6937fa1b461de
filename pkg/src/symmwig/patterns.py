"""Pattern calculus for paired index rows.

A pattern encodes how a pair of cyclic index walks can line up entry by
entry: each position carries a 2x2 binary "block digit" (which half of the
index range each of the four indices lives in) together with a scalar-slot
rule that says whether the second row reuses the first row's scalars in
order (aligned) or swapped (reversed).  Counting and signing these patterns
is what turns the covariance of two trace statistics into a sum over a
dihedral group.

Only eight block digits are admissible (entry sum even); they split into
"step" digits (the two columns differ) and "plateau" digits (columns equal).
Consecutive digits must chain according to one of two domino rules, and the
leading-order weight of a dihedral element depends only on that chaining.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .ensemble import SymmetryClass


class BudgetError(Exception):
    """An exact enumeration would exceed its configured size budget."""


class DeltaMatrix(NamedTuple):
    """2x2 binary matrix (alpha, beta / gamma, delta), read row-major."""

    alpha: int
    beta: int
    gamma: int
    delta: int

    @classmethod
    def from_string(cls, text: str) -> "DeltaMatrix":
        """Parse compact "ab/cd" notation, e.g. "01/10"."""
        parts = text.strip().split("/")
        if len(parts) != 2 or any(len(p) != 2 for p in parts):
            raise ValueError(f"expected 'ab/cd' with binary digits, got {text!r}")
        bits = tuple(int(ch) for ch in parts[0] + parts[1])
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"expected 'ab/cd' with binary digits, got {text!r}")
        return cls(*bits)

    def __str__(self) -> str:
        return f"{self.alpha}{self.beta}/{self.gamma}{self.delta}"

    @property
    def rows(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return (self.alpha, self.beta), (self.gamma, self.delta)

    @property
    def columns(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return (self.alpha, self.gamma), (self.beta, self.delta)

    @property
    def entry_sum(self) -> int:
        return self.alpha + self.beta + self.gamma + self.delta


#: The eight admissible block digits: entry sum even.  Steps first.
DELTA_ALPHABET: tuple[DeltaMatrix, ...] = tuple(
    DeltaMatrix(*bits)
    for bits in itertools.product((0, 1), repeat=4)
    if sum(bits) % 2 == 0
)

_STEPS = frozenset(d for d in DELTA_ALPHABET if d.columns[0] != d.columns[1])
_PLATEAUS = frozenset(d for d in DELTA_ALPHABET if d.columns[0] == d.columns[1])


def delta_alphabet() -> tuple[DeltaMatrix, ...]:
    """All eight admissible block digits (even entry sum)."""
    return DELTA_ALPHABET


def classify_delta(delta: DeltaMatrix) -> str:
    """Return "step" or "plateau" by comparing the two columns.

    Raises ValueError for a matrix outside the admissible alphabet.
    """
    if delta not in DELTA_ALPHABET:
        raise ValueError(f"{delta} has odd entry sum, not an admissible digit")
    return "step" if delta in _STEPS else "plateau"


class LambdaKind(Enum):
    """Scalar-slot rule for the second row of a pattern position."""

    A = "aligned"   # second row reuses (a, b) in order
    R = "reversed"  # second row uses (b, a)


@dataclass(frozen=True)
class Pattern:
    """A cyclic sequence of (block digit, scalar rule) positions."""

    deltas: tuple[DeltaMatrix, ...]
    lambdas: tuple[LambdaKind, ...]

    def __post_init__(self) -> None:
        if len(self.deltas) != len(self.lambdas):
            raise ValueError("deltas and lambdas must have equal length")
        if not self.deltas:
            raise ValueError("pattern must have at least one position")
        for d in self.deltas:
            if d not in DELTA_ALPHABET:
                raise ValueError(f"{d} is not an admissible digit")

    @property
    def m(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class Instance:
    """A pattern realized with concrete scalars in [1, n].

    ``realized[l]`` is the pair of 1-based index pairs produced at position
    l: row one is (n*alpha + a, n*beta + b) and row two reuses the scalars
    according to the position's LambdaKind.
    """

    pattern: Pattern
    n: int
    scalars: tuple[tuple[int, int], ...]
    realized: tuple[tuple[tuple[int, int], tuple[int, int]], ...]


def make_instance(pattern: Pattern, n: int,
                  scalars: Sequence[tuple[int, int]]) -> Instance:
    """Realize ``pattern`` with the given per-position scalar pairs."""
    if len(scalars) != pattern.m:
        raise ValueError("one scalar pair required per pattern position")
    realized = []
    for (d, lam, (a, b)) in zip(pattern.deltas, pattern.lambdas, scalars):
        if not (1 <= a <= n and 1 <= b <= n):
            raise ValueError(f"scalars must lie in [1, {n}], got {(a, b)}")
        if a == b:
            raise ValueError("scalar pairs must have distinct entries")
        row1 = (n * d.alpha + a, n * d.beta + b)
        u, v = (a, b) if lam is LambdaKind.A else (b, a)
        row2 = (n * d.gamma + u, n * d.delta + v)
        realized.append((row1, row2))
    return Instance(pattern, n, tuple(tuple(s) for s in scalars),
                    tuple(realized))


def instance_consistent(inst: Instance) -> bool:
    """Whether both realized rows chain cyclically (q of l == p of l+1)."""
    m = inst.pattern.m
    for l in range(m):
        nxt = (l + 1) % m
        for row in (0, 1):
            if inst.realized[l][row][1] != inst.realized[nxt][row][0]:
                return False
    return True


# -- dihedral group ----------------------------------------------------------

@dataclass(frozen=True)
class DihedralElement:
    """One of the 2m symmetries of a cyclic alignment of length m.

    perm is the 1-based image tuple: perm[l-1] = g(l).  Shifts rotate the
    second row against the first; reflections reverse it first.
    """

    m: int
    kind: str  # "shift" | "reflection"
    nu: int
    perm: tuple[int, ...]

    def __call__(self, l: int) -> int:
        return self.perm[l - 1]

    def inverse_perm(self) -> tuple[int, ...]:
        inv = [0] * self.m
        for l, img in enumerate(self.perm, start=1):
            inv[img - 1] = l
        return tuple(inv)

    def __str__(self) -> str:
        tag = "shift" if self.kind == "shift" else "refl"
        return f"{tag}({self.nu})"


def _shift_perm(m: int, nu: int) -> tuple[int, ...]:
    return tuple(1 + (l - 1 + nu) % m for l in range(1, m + 1))


def _reflection_perm(m: int, nu: int) -> tuple[int, ...]:
    # tau(l) = m + 1 - l composed after the shift by nu
    return tuple(m - (l - 1 + nu) % m for l in range(1, m + 1))


def dihedral_group(m: int) -> list[DihedralElement]:
    """All 2m elements: m shifts then m reflections, by offset.

    Requires m >= 3; smaller m degenerates (the group is no longer faithful
    on alignments and the leading-term bookkeeping below does not apply).
    """
    if m < 3:
        raise ValueError(f"dihedral calculus needs m >= 3, got {m}")
    group = [DihedralElement(m, "shift", nu, _shift_perm(m, nu))
             for nu in range(m)]
    group += [DihedralElement(m, "reflection", nu, _reflection_perm(m, nu))
              for nu in range(m)]
    return group


@dataclass(frozen=True)
class PairPartition:
    """Perfect matching of row slots {(1, l)} with {(2, j)} induced by g."""

    m: int
    blocks: frozenset[frozenset[tuple[int, int]]]


def pair_partition(g: DihedralElement) -> PairPartition:
    blocks = frozenset(
        frozenset({(1, l), (2, g(l))}) for l in range(1, g.m + 1)
    )
    return PairPartition(g.m, blocks)


# -- domino chaining ---------------------------------------------------------

_FORWARD = "forward"
_REVERSE = "reverse"


def _domino_ok(prev: DeltaMatrix, cur: DeltaMatrix, mode: str) -> bool:
    if mode == _FORWARD:
        # second column feeds the next first column
        return (prev.beta, prev.delta) == (cur.alpha, cur.gamma)
    if mode == _REVERSE:
        # top row chains forward, bottom row chains backward
        return cur.alpha == prev.beta and cur.delta == prev.gamma
    raise ValueError(f"unknown domino mode {mode!r}")


def check_domino(deltas: Sequence[DeltaMatrix], mode: str) -> bool:
    """Whether the digit sequence chains cyclically under the given mode."""
    m = len(deltas)
    if m == 0:
        raise ValueError("empty digit sequence")
    return all(_domino_ok(deltas[l], deltas[(l + 1) % m], mode)
               for l in range(m))


def is_substantial(pattern: Pattern) -> bool:
    """Whether the pattern can contribute at leading order.

    True iff the digits chain forward with every scalar rule aligned, or
    chain in reverse with every rule reversed.  A pattern whose digits chain
    under neither rule is outside the supported regime entirely and raises
    ValueError rather than returning False.
    """
    fwd = check_domino(pattern.deltas, _FORWARD)
    rev = check_domino(pattern.deltas, _REVERSE)
    if not (fwd or rev):
        raise ValueError("digit sequence chains under neither domino rule; "
                         "lemma inapplicable")
    all_a = all(k is LambdaKind.A for k in pattern.lambdas)
    all_r = all(k is LambdaKind.R for k in pattern.lambdas)
    return (fwd and all_a) or (rev and all_r)


def count_consistent_instances(pattern: Pattern, n: int) -> int:
    """Exact number of scalar assignments whose instance rows both chain.

    Organized as a transfer-matrix product over the n(n-1) ordered scalar
    pairs, which is the same count as brute-force enumeration.  Intended for
    small sizes (guideline n <= 8, m <= 6); raises BudgetError when the
    state space would be unreasonable.
    """
    if n < 2:
        raise ValueError("need n >= 2 for distinct scalar pairs")
    m = pattern.m
    states = [(a, b) for a in range(1, n + 1) for b in range(1, n + 1)
              if a != b]
    s = len(states)
    if s * s * m > 10**8:
        raise BudgetError(f"transfer product size {s}x{s}x{m} exceeds budget")

    # Bit conditions between consecutive digits are scalar independent.
    for l in range(m):
        d, dn = pattern.deltas[l], pattern.deltas[(l + 1) % m]
        if d.beta != dn.alpha:
            return 0

    av = np.array([a for a, _ in states])
    bv = np.array([b for _, b in states])

    def rowslot(lam: LambdaKind, first: bool) -> np.ndarray:
        # which scalar occupies row two's first/second slot
        if lam is LambdaKind.A:
            return av if first else bv
        return bv if first else av

    total = np.eye(s, dtype=np.int64)
    for l in range(m):
        d, dn = pattern.deltas[l], pattern.deltas[(l + 1) % m]
        lam, lamn = pattern.lambdas[l], pattern.lambdas[(l + 1) % m]
        cond = bv[:, None] == av[None, :]  # row one: q == next p
        if d.delta != dn.gamma:
            return 0
        cond &= rowslot(lam, False)[:, None] == rowslot(lamn, True)[None, :]
        total = total @ cond.astype(np.int64)
    return int(np.trace(total))


# -- digit sequence enumeration ----------------------------------------------

_FILTERS = ("all", "identical-rows", "identical-rows-alpha1", "tau-realizable")


def _passes_filter(seq: tuple[DeltaMatrix, ...], name: str) -> bool:
    if name == "all":
        return True
    if name == "identical-rows":
        return all(d.rows[0] == d.rows[1] for d in seq)
    if name == "identical-rows-alpha1":
        return (seq[0].alpha == 1
                and all(d.rows[0] == d.rows[1] for d in seq))
    if name == "tau-realizable":
        bits = [seq[0].alpha, seq[0].beta] + [d.beta for d in seq[1:-1]]
        rebuilt = complete_reflection_sequence(seq[0], tuple(bits[2:]),
                                               len(seq))
        return rebuilt == seq
    raise ValueError(f"unknown filter {name!r}; expected one of {_FILTERS}")


def enumerate_delta_sequences(
    m: int,
    condition: str,
    filter_name: Optional[str] = None,
    first_delta: Optional[DeltaMatrix] = None,
) -> tuple[list[tuple[DeltaMatrix, ...]], int]:
    """All cyclic digit sequences of length m chaining under ``condition``.

    condition is "forward" or "reverse".  filter_name optionally restricts
    to named families (identical rows, identical rows with leading alpha=1,
    or reflection realizability); first_delta pins the first digit.  Returns
    (sequences, count).
    """
    if m < 1:
        raise ValueError("sequence length must be positive")
    if m > 16:
        raise BudgetError(f"2^(m+1) sequences at m={m} exceeds budget")
    if condition not in (_FORWARD, _REVERSE):
        raise ValueError(f"condition must be forward or reverse, "
                         f"got {condition!r}")
    name = filter_name or "all"
    if name == "tau-realizable" and condition != _REVERSE:
        raise ValueError("tau-realizable only applies to reverse chains")

    starts = [first_delta] if first_delta is not None else list(DELTA_ALPHABET)
    out: list[tuple[DeltaMatrix, ...]] = []
    for head in starts:
        if head not in DELTA_ALPHABET:
            raise ValueError(f"{head} is not an admissible digit")
        stack = [(head,)]
        while stack:
            seq = stack.pop()
            if len(seq) == m:
                if _domino_ok(seq[-1], seq[0], condition):
                    out.append(seq)
                continue
            for nxt in DELTA_ALPHABET:
                if _domino_ok(seq[-1], nxt, condition):
                    stack.append(seq + (nxt,))
    out = [seq for seq in out if _passes_filter(seq, name)]
    out.sort()
    return out, len(out)


def complete_reflection_sequence(
    delta1: DeltaMatrix,
    upper_bits: Sequence[int],
    m: int,
) -> tuple[DeltaMatrix, ...]:
    """The unique reverse-chaining completion of delta1 by free top-row bits.

    The top rows of a reverse chain trace a single cyclic bit walk s, and the
    bottom rows trace a second walk t read through the reversal l -> m+1-l.
    delta1 pins s_1, s_2, t_m, t_1; the m-2 entries of ``upper_bits`` supply
    s_3..s_m; each remaining t bit is then forced right to left by the even
    entry-sum requirement, and the final evenness constraint holds
    automatically by parity.  The recombined walk matrices
    (s_l, s_{l+1} / t_l, t_{l+1}) always chain forward, though they need not
    themselves have even sum.
    """
    if m < 3:
        raise ValueError(f"reflection completion needs m >= 3, got {m}")
    if delta1 not in DELTA_ALPHABET:
        raise ValueError(f"{delta1} is not an admissible digit")
    if len(upper_bits) != m - 2:
        raise ValueError(f"need exactly {m - 2} free bits, got "
                         f"{len(upper_bits)}")
    if any(b not in (0, 1) for b in upper_bits):
        raise ValueError("free bits must be 0 or 1")

    s = [delta1.alpha, delta1.beta] + list(upper_bits)  # s[i] = s_{i+1}
    t = [None] * m
    t[0] = delta1.delta
    t[m - 1] = delta1.gamma
    for j in range(m - 1, 1, -1):  # fill t_j for j = m-1 .. 2
        l = m + 1 - j
        t[j - 1] = (s[l - 1] + s[l % m] + t[j % m]) % 2

    # closing evenness constraint is implied by the others
    assert (s[m - 1] + s[0] + t[0] + t[1]) % 2 == 0

    seq = []
    for l in range(1, m + 1):
        tau_l = m + 1 - l
        d = DeltaMatrix(s[l - 1], s[l % m],
                        t[tau_l - 1], t[tau_l % m])
        seq.append(d)
    result = tuple(seq)
    assert all(d in DELTA_ALPHABET for d in result)
    assert check_domino(result, _REVERSE)
    return result


# -- leading-order signs ------------------------------------------------------

# Digits whose sign differs from the rest: the mixed plateaus.
_MIXED_PLATEAUS = frozenset({DeltaMatrix(0, 0, 1, 1), DeltaMatrix(1, 1, 0, 0)})

_SIGN_MODES = ("forward-A", "reverse-R")


def delta_sign(symmetry_class: SymmetryClass, mode: str,
               delta: DeltaMatrix) -> int:
    """Leading-order sign contributed by one digit of a substantial pattern.

    For the imaginary-entry class the aligned and reversed modes have
    opposite tables; for the real-entry class conjugation plays no role and
    the two modes agree.
    """
    if mode not in _SIGN_MODES:
        raise ValueError(f"mode must be one of {_SIGN_MODES}, got {mode!r}")
    if delta not in DELTA_ALPHABET:
        raise ValueError(f"{delta} is not an admissible digit")
    mixed = delta in _MIXED_PLATEAUS
    if symmetry_class is SymmetryClass.DIII and mode == "forward-A":
        return 1 if mixed else -1
    # DIII reverse-R is the negation, which coincides with both CI tables.
    return -1 if mixed else 1


def per_g_leading_term(symmetry_class: SymmetryClass, g: DihedralElement,
                       sigma: float = 1.0) -> float:
    """Leading-order weight of one dihedral element, by direct enumeration.

    Sums the digit-sign products over every admissible cyclic chain for the
    element's mode (shifts chain forward with aligned slots, reflections in
    reverse with reversed slots) and scales by sigma^(2m).  The enumeration
    is asserted against the closed form: zero for odd m and 2^(m+1) sigma^(2m)
    for even m, identically in the symmetry class and the element.
    """
    m = g.m
    if m < 3:
        raise ValueError(f"leading term defined for m >= 3, got {m}")
    if g.kind == "shift":
        condition, mode = _FORWARD, "forward-A"
    else:
        condition, mode = _REVERSE, "reverse-R"
    seqs, _ = enumerate_delta_sequences(m, condition)
    total = 0
    for seq in seqs:
        prod = 1
        for d in seq:
            prod *= delta_sign(symmetry_class, mode, d)
        total += prod
    expected = 0 if m % 2 else 2 ** (m + 1)
    assert total == expected, (total, expected, g)
    return float(total) * float(sigma) ** (2 * m)
