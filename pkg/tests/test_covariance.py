import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symmwig.covariance import (
    BudgetError,
    MultiIndex,
    V_asymptotic,
    V_n_exact,
    _good_sign_sum,
    cov_cheb_moment_oracle,
    cov_report,
    cov_traces_config_oracle,
    cov_traces_moment_oracle,
    enumerate_consistent_multiindices,
    good_multiindices,
    induced_partition,
)
from symmwig.ensemble import EntryModel, SymmetryClass, class_of
from symmwig.patterns import dihedral_group

DIII, CI = SymmetryClass.DIII, SymmetryClass.CI
GAUSS = EntryModel.gaussian()
RADEM = EntryModel.rademacher()


# -- multi-index layer ---------------------------------------------------------


def test_multiindex_roundtrip():
    P = MultiIndex.from_p_sequences((1, 2, 3), (2, 4))
    assert P.k1 == 3 and P.k2 == 2
    assert P.rows[0] == ((1, 2), (2, 3), (3, 1))
    assert P.rows[1] == ((2, 4), (4, 2))


def test_multiindex_validates_chaining():
    with pytest.raises(ValueError):
        MultiIndex(2, 2, (((1, 2), (3, 1)), ((1, 1), (1, 1))))


def test_enumeration_count_and_budget():
    found = list(enumerate_consistent_multiindices(2, 2, 2))
    assert len(found) == 2**2 * 2**2
    with pytest.raises(BudgetError):
        list(enumerate_consistent_multiindices(10, 4, 4, budget=10))


def test_induced_partition_examples():
    # both slots land in C1(1,2) of DIII at n=2
    P = MultiIndex.from_p_sequences((1, 2), (2, 1))
    part = induced_partition(P, DIII, 2)
    assert frozenset({(1, 1), (1, 2), (2, 1), (2, 2)}) in part.blocks or len(part.blocks) <= 2
    same = induced_partition(MultiIndex.from_p_sequences((1, 2), (1, 2)), DIII, 2)
    assert len(same.blocks) == 1
    # (1,2) and (3,2) lie in different classes
    mixed = MultiIndex(2, 2, (((1, 2), (2, 1)), ((3, 2), (2, 3))))
    assert len(induced_partition(mixed, DIII, 2).blocks) == 2


def test_induced_partition_forced_zero():
    P = MultiIndex.from_p_sequences((1, 1), (1, 2))  # (1,1) is zero for DIII
    with pytest.raises(ValueError):
        induced_partition(P, DIII, 2)
    induced_partition(P, CI, 2)  # fine for CI


def test_good_multiindices_small_space_is_empty():
    """At n=2 a DIII m=3 pairing needs three distinct classes but only
    two exist, so the good set is empty in both modes."""
    for g in dihedral_group(3):
        for mode in ("equality", "compatible"):
            assert good_multiindices(g, DIII, 2, 3, partition_mode=mode) == []


def test_good_multiindices_content_n3():
    gamma = next(g for g in dihedral_group(3) if g.kind == "shift" and g.nu == 1)
    target = frozenset(
        frozenset({(1, l), (2, gamma(l))}) for l in range(1, 4)
    )
    good = good_multiindices(gamma, DIII, 3, 3)
    assert len(good) == 96
    for P in good:
        part = induced_partition(P, DIII, 3)
        assert part.blocks == target
        for row in P.rows:
            for pair in row:
                assert class_of(DIII, 3, pair) is not None  # no skew diagonals


def test_good_multiindices_involution_row_swap():
    tau = next(g for g in dihedral_group(3) if g.kind == "reflection" and g.nu == 0)
    good = good_multiindices(tau, CI, 2, 3)
    keys = {P.rows for P in good}
    assert keys, "good set unexpectedly empty"
    for rows in keys:
        assert (rows[1], rows[0]) in keys


def test_equality_mode_subsets_compatible():
    g = dihedral_group(3)[1]
    eq = {P.rows for P in good_multiindices(g, CI, 2, 3)}
    comp = {P.rows for P in good_multiindices(g, CI, 2, 3, partition_mode="compatible")}
    assert eq <= comp


@pytest.mark.parametrize("cls", (DIII, CI))
def test_chase_agrees_with_reference_enumeration(cls):
    """The vectorized sign sum equals the literal per-multiindex sum."""
    n, m = 3, 3
    group = dihedral_group(m)
    for g in (group[1], group[m]):  # one shift, one reflection
        brute = 0
        for P in good_multiindices(g, cls, n, m):
            prod = 1
            for row in P.rows:
                for pair in row:
                    prod *= class_of(cls, n, pair)[1]
            brute += prod
        assert _good_sign_sum(cls, n, m, g, "equality") == brute


# -- exact finite-n variance ---------------------------------------------------


@pytest.mark.parametrize("cls", (DIII, CI))
@pytest.mark.parametrize("n", range(2, 7))
def test_v1_is_zero(cls, n):
    assert V_n_exact(cls, n, 1, GAUSS) == 0.0


@pytest.mark.parametrize("n", range(2, 13))
def test_v2_closed_forms(n):
    assert V_n_exact(DIII, n, 2, GAUSS) == float(Fraction(8 * (n - 1), n))
    assert V_n_exact(CI, n, 2, GAUSS) == float(Fraction(2 * (4 * n - 3), n))
    # fourth moment equals sigma^4 for Rademacher entries: no m=2 noise
    assert V_n_exact(DIII, n, 2, RADEM) == 0.0


@pytest.mark.parametrize("cls", (DIII, CI))
@pytest.mark.parametrize("m", (3, 5))
@pytest.mark.parametrize("n", (2, 3, 4))
def test_odd_m_vanishes_exactly(cls, m, n):
    assert V_n_exact(cls, n, m, GAUSS) == 0.0
    assert V_n_exact(cls, n, m, RADEM) == 0.0


@pytest.mark.parametrize("n", range(2, 8))
def test_diii_v4_closed_form(n):
    want = float(Fraction(16 * n * (n - 1) * (n - 2) ** 2, n**4))
    assert V_n_exact(DIII, n, 4, GAUSS) == want
    # m >= 3 values use second moments only, so any sigma=1 family agrees
    assert V_n_exact(DIII, n, 4, RADEM) == want


def test_ci_v4_gap_shrinks_monotonically():
    gaps = []
    for n in (4, 6, 8, 10, 12):
        v = V_n_exact(CI, n, 4, GAUSS)
        gaps.append(abs(v - 16.0))
    assert gaps[0] == pytest.approx(16.0 - 11.25, abs=1e-12)
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_v_asymptotic_cases():
    assert V_asymptotic(DIII, 1) == (0.0, "theorem")
    assert V_asymptotic(CI, 5) == (0.0, "theorem")
    assert V_asymptotic(DIII, 4) == (16.0, "theorem")
    value, flag = V_asymptotic(CI, 6, sigma=0.5)
    assert flag == "theorem" and value == pytest.approx(24 * 0.5**12, rel=1e-15)
    assert V_asymptotic(DIII, 2, 1.0, GAUSS) == (8.0, "derived")
    assert V_asymptotic(CI, 2, 1.0, RADEM) == (0.0, "derived")
    with pytest.raises(ValueError):
        V_asymptotic(DIII, 2)  # model required
    with pytest.raises(ValueError):
        V_asymptotic(DIII, 2, 2.0, GAUSS)  # sigma disagrees with model


def test_v_n_budget():
    with pytest.raises(BudgetError):
        V_n_exact(DIII, 6, 4, GAUSS, budget=10)


def test_partition_mode_validated():
    with pytest.raises(ValueError):
        V_n_exact(DIII, 3, 3, GAUSS, partition_mode="nonsense")


# -- oracle cross-validation ---------------------------------------------------


@pytest.mark.parametrize("cls", (DIII, CI))
@pytest.mark.parametrize("m,mu", [(2, 2), (2, 4), (3, 3), (4, 4)])
def test_config_vs_moment_oracle(cls, m, mu):
    a = cov_traces_config_oracle(cls, 2, m, mu, RADEM)
    b = cov_cheb_moment_oracle(cls, 2, m, mu, RADEM)
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("m,mu", [(2, 2), (2, 3), (2, 4)])
def test_oracles_agree_with_skewed_atoms(m, mu):
    """A centered but asymmetric entry law exercises the odd-moment path."""
    skew = EntryModel.from_atoms([(-1.0, 2 / 3), (2.0, 1 / 3)])
    a = cov_traces_config_oracle(DIII, 2, m, mu, skew)
    b = cov_cheb_moment_oracle(DIII, 2, m, mu, skew)
    assert a == pytest.approx(b, abs=1e-10)


def test_oracle_matches_v2():
    """The m=2 formula sums off-diagonal pairs only.  For DIII that IS the
    variance (diagonals vanish); for CI the true variance carries an extra
    Var(g^2)/n from the diagonal classes, gone in the limit."""
    for n in (2, 3, 4):
        got = cov_cheb_moment_oracle(DIII, n, 2, 2, GAUSS)
        assert got == pytest.approx(V_n_exact(DIII, n, 2, GAUSS), rel=1e-12)
        got = cov_cheb_moment_oracle(CI, n, 2, 2, GAUSS)
        want = V_n_exact(CI, n, 2, GAUSS) + 2.0 / n
        assert got == pytest.approx(want, rel=1e-12)
        # Rademacher kills Var(g^2): both classes agree with the formula
        assert cov_cheb_moment_oracle(CI, n, 2, 2, RADEM) == pytest.approx(
            V_n_exact(CI, n, 2, RADEM), abs=1e-12
        )


def test_oracle_odd_degrees_vanish():
    # odd Chebyshev traces are identically zero on these ensembles
    assert cov_cheb_moment_oracle(DIII, 2, 3, 3, GAUSS) == pytest.approx(0.0, abs=1e-12)
    assert cov_cheb_moment_oracle(CI, 2, 3, 4, GAUSS) == pytest.approx(0.0, abs=1e-12)
    assert cov_traces_config_oracle(CI, 2, 1, 2, RADEM) == pytest.approx(0.0, abs=1e-12)


def test_power_trace_oracle_odd_total_degree():
    assert cov_traces_moment_oracle(DIII, 2, 2, 3, GAUSS) == 0.0


def test_config_oracle_needs_finite_support():
    with pytest.raises(ValueError):
        cov_traces_config_oracle(DIII, 2, 2, 2, GAUSS)


def test_ci_t2_t4_covariance_is_zero():
    # CI cross covariance (2,4) cancels exactly at every size
    for n in (2, 3, 4):
        assert cov_cheb_moment_oracle(CI, n, 2, 4, GAUSS) == pytest.approx(0.0, abs=1e-12)


def test_formula_approaches_oracle():
    """Prop-formula error against the true covariance shrinks with n."""
    gaps = []
    for n in (2, 3, 4):
        oracle = cov_cheb_moment_oracle(CI, n, 4, 4, RADEM)
        gaps.append(abs(oracle - V_n_exact(CI, n, 4, RADEM)))
    assert gaps[0] == pytest.approx(4.0, abs=1e-9)
    assert gaps[0] > gaps[1] > gaps[2]


# -- report --------------------------------------------------------------------


def test_cov_report_m4():
    rep = cov_report(DIII, 3, 4, GAUSS)
    assert rep.v_n == V_n_exact(DIII, 3, 4, GAUSS)
    assert rep.v_asymptotic == 16.0 and rep.flag == "theorem"
    assert rep.gap == abs(rep.v_n - 16.0)
    assert len(rep.per_g) == 8
    assert math.fsum(t.value for t in rep.per_g) == pytest.approx(rep.v_n, abs=1e-12)
    kinds = {t.kind for t in rep.per_g}
    assert kinds == {"shift", "reflection"}


def test_cov_report_m2_flag():
    rep = cov_report(CI, 4, 2, GAUSS)
    assert rep.flag == "derived"
    assert rep.per_g == ()


# -- properties ----------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(
    cls=st.sampled_from((DIII, CI)),
    n=st.integers(min_value=2, max_value=4),
    m=st.integers(min_value=3, max_value=4),
    sigma=st.floats(min_value=0.4, max_value=1.6),
)
def test_sigma_scaling_property(cls, n, m, sigma):
    base = V_n_exact(cls, n, m, EntryModel.gaussian(1.0))
    scaled = V_n_exact(cls, n, m, EntryModel.gaussian(sigma * sigma))
    assert scaled == pytest.approx(sigma ** (2 * m) * base, rel=1e-11, abs=1e-13)
