"""Parallel, reproducible sampling of trace-fluctuation vectors.

A run draws N independent matrices, evaluates the vector
(Tr T_1, ..., Tr T_M) on each, and accumulates raw power and cross sums
in fixed blocks.  Blocks are the unit of everything: each owns an
independent seed stream derived from the run seed and its index, workers
may compute them in any order, and the reduction always merges them in
index order, so the result is bit-identical at any parallelism level.
The blocks double as jackknife resamples for the standard errors.

Traces are computed from the half recurrence in Y = X^2: both symmetry
classes are conjugation-odd (J X J^{-1} = -X), so odd-degree traces vanish
sample-wise and are emitted as exact zeros, while even degrees satisfy
T_{2j+2} = (Y - 2 sigma^2) T_{2j} - sigma^4 T_{2j-2} with only real
arithmetic in either class.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - dependency is declared
    threadpool_limits = None

from .covariance import V_asymptotic
from .ensemble import (
    EntryModel,
    SymmetryClass,
    class_tables,
    derive_rng,
)

__all__ = [
    "SimulationConfig",
    "MomentAccumulator",
    "SimulationResult",
    "CumulantEstimates",
    "CLTRow",
    "CLTReport",
    "run_simulation",
    "merge",
    "estimate_cumulants",
    "clt_report",
]

N_BLOCKS = 100  # fixed work/seed/jackknife unit


@dataclass(frozen=True)
class SimulationConfig:
    symmetry_class: SymmetryClass
    n: int
    sigma: float = 1.0
    M: int = 6
    samples: int = 10_000
    seed: int = 0
    family: str = "gaussian"
    parallelism: int = 1

    def __post_init__(self) -> None:
        if isinstance(self.symmetry_class, str):
            object.__setattr__(
                self, "symmetry_class", SymmetryClass.parse(self.symmetry_class)
            )
        if self.samples < 2:
            raise ValueError("need at least 2 samples")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @property
    def model(self) -> EntryModel:
        return EntryModel(family=self.family, sigma2=self.sigma**2)

    @property
    def dim(self) -> int:
        return 2 * self.n


@dataclass
class MomentAccumulator:
    """Mergeable raw sums of an M-vector stream, through fourth order."""

    M: int
    count: int = 0
    s1: np.ndarray = field(default=None)  # type: ignore[assignment]
    s2: np.ndarray = field(default=None)  # type: ignore[assignment]
    s3: np.ndarray = field(default=None)  # type: ignore[assignment]
    s4: np.ndarray = field(default=None)  # type: ignore[assignment]
    cross: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        for name in ("s1", "s2", "s3", "s4"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.M))
        if self.cross is None:
            self.cross = np.zeros((self.M, self.M))

    def add_batch(self, t: np.ndarray) -> None:
        """Accumulate a (batch, M) matrix of sample vectors."""
        if t.ndim != 2 or t.shape[1] != self.M:
            raise ValueError("batch shape disagrees with accumulator")
        self.count += t.shape[0]
        self.s1 += t.sum(axis=0)
        t2 = t * t
        self.s2 += t2.sum(axis=0)
        self.s3 += (t2 * t).sum(axis=0)
        self.s4 += (t2 * t2).sum(axis=0)
        self.cross += t.T @ t

    def copy(self) -> "MomentAccumulator":
        return MomentAccumulator(
            self.M, self.count, self.s1.copy(), self.s2.copy(),
            self.s3.copy(), self.s4.copy(), self.cross.copy(),
        )


def merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    """Combine two accumulators; equals accumulating both streams."""
    if a.M != b.M:
        raise ValueError("accumulator shapes disagree")
    return MomentAccumulator(
        a.M, a.count + b.count, a.s1 + b.s1, a.s2 + b.s2,
        a.s3 + b.s3, a.s4 + b.s4, a.cross + b.cross,
    )


@dataclass(frozen=True)
class CumulantEstimates:
    count: int
    mean: np.ndarray
    cov: np.ndarray
    cov_se: Optional[np.ndarray]
    k3: np.ndarray
    k3_se: Optional[np.ndarray]
    k4: np.ndarray
    k4_se: Optional[np.ndarray]


@dataclass(frozen=True)
class SimulationResult:
    config: SimulationConfig
    estimates: CumulantEstimates
    blocks: tuple[MomentAccumulator, ...] = field(repr=False)
    wall_time: float = 0.0

    @property
    def mean(self) -> np.ndarray:
        return self.estimates.mean

    @property
    def cov(self) -> np.ndarray:
        return self.estimates.cov


# -- trace evaluation ----------------------------------------------------------


def _scatter_layout(symmetry_class: SymmetryClass, n: int):
    cls_id, sign = class_tables(symmetry_class, n)
    mask = (cls_id >= 0).ravel()
    flat_pos = np.nonzero(mask)[0]
    cid_flat = cls_id.ravel()[flat_pos]
    n_classes = int(cid_flat.max()) + 1
    return flat_pos, cid_flat, sign.ravel()[flat_pos].astype(float), n_classes


def _trace_vectors(
    symmetry_class: SymmetryClass,
    draws: np.ndarray,
    n: int,
    sigma: float,
    M: int,
    layout,
) -> np.ndarray:
    """(batch, M) traces of T_1..T_M at each scattered sample."""
    flat_pos, cid_flat, sign_flat, _ = layout
    dim = 2 * n
    B = draws.shape[0]
    W = np.zeros((B, dim * dim))
    W[:, flat_pos] = sign_flat * draws[:, cid_flat]
    W = W.reshape(B, dim, dim)
    WW = np.matmul(W, W)
    # X = i W / sqrt(dim) or W / sqrt(dim); either way Y = X^2 is real
    Y = (-WW if symmetry_class is SymmetryClass.DIII else WW) / dim
    out = np.zeros((B, M))
    if M < 2:
        return out
    s2 = sigma * sigma
    eye = np.eye(dim)
    A = Y - 2.0 * s2 * eye  # degree-2 polynomial of X
    prev = None  # matrix T_0 = 2I handled implicitly on first step
    cur = A
    out[:, 1] = np.einsum("bii->b", cur)
    for deg in range(4, M + 1, 2):
        nxt = np.matmul(A, cur)
        if prev is None:
            nxt -= (s2 * s2 * 2.0) * eye  # sigma^4 * T_0
        else:
            nxt -= (s2 * s2) * prev
        prev, cur = cur, nxt
        out[:, deg - 1] = np.einsum("bii->b", cur)
    return out


def _run_block(config: SimulationConfig, block: int, bounds: tuple[int, int],
               layout) -> MomentAccumulator:
    lo, hi = bounds
    acc = MomentAccumulator(config.M)
    if hi <= lo:
        return acc
    rng = derive_rng(config.seed, (block,))
    draws = config.model.draw(rng, (hi - lo, layout[3]))
    t = _trace_vectors(
        config.symmetry_class, draws, config.n, config.sigma, config.M, layout
    )
    acc.add_batch(t)
    return acc


def run_simulation(config: SimulationConfig) -> SimulationResult:
    """Sample N trace vectors; deterministic given (config, seed).

    Work is split into N_BLOCKS fixed blocks regardless of parallelism;
    block b draws from the seed stream (seed, b) and the reduction merges
    blocks in index order, so thread scheduling cannot affect the output.
    """
    t0 = time.monotonic()
    layout = _scatter_layout(config.symmetry_class, config.n)
    N = config.samples
    B = min(N_BLOCKS, N)
    base, extra = divmod(N, B)
    bounds = []
    lo = 0
    for b in range(B):
        hi = lo + base + (1 if b < extra else 0)
        bounds.append((lo, hi))
        lo = hi

    def work(b: int) -> MomentAccumulator:
        return _run_block(config, b, bounds[b], layout)

    # Pin the BLAS pool once for the whole run: keeps gemm reduction
    # order fixed so results cannot depend on machine-level threading.
    pin = threadpool_limits(limits=1) if threadpool_limits else nullcontext()
    with pin:
        if config.parallelism == 1:
            blocks = [work(b) for b in range(B)]
        else:
            with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                blocks = list(pool.map(work, range(B)))
    estimates = estimate_cumulants(blocks)
    return SimulationResult(
        config=config,
        estimates=estimates,
        blocks=tuple(blocks),
        wall_time=time.monotonic() - t0,
    )


# -- estimation ------------------------------------------------------------------


def _point_estimates(acc: MomentAccumulator):
    N = acc.count
    mean = acc.s1 / N
    cov = (acc.cross - N * np.outer(mean, mean)) / (N - 1)
    m2 = acc.s2 / N - mean**2
    m3 = acc.s3 / N - 3 * mean * acc.s2 / N + 2 * mean**3
    m4 = (
        acc.s4 / N
        - 4 * mean * acc.s3 / N
        + 6 * mean**2 * acc.s2 / N
        - 3 * mean**4
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        k3 = np.where(m2 > 0, m3 / np.maximum(m2, 1e-300) ** 1.5, np.nan)
        k4 = np.where(m2 > 0, m4 / np.maximum(m2, 1e-300) ** 2 - 3.0, np.nan)
    return mean, cov, k3, k4


def estimate_cumulants(
    accs: Union[MomentAccumulator, Sequence[MomentAccumulator]],
) -> CumulantEstimates:
    """Mean, unbiased covariance, standardized k3/k4, jackknife SEs.

    Passing the per-block accumulators enables leave-one-block-out
    standard errors; a single merged accumulator yields point estimates
    with SEs reported as None.  Constant coordinates get exact-zero
    covariance rows and not-applicable (NaN) higher cumulants.
    """
    if isinstance(accs, MomentAccumulator):
        total = accs
        blocks: list[MomentAccumulator] = []
    else:
        blocks = [a for a in accs if a.count > 0]
        if not blocks:
            raise ValueError("no samples accumulated")
        total = blocks[0]
        for b in blocks[1:]:
            total = merge(total, b)
    if total.count < 2:
        raise ValueError("need at least 2 samples to estimate")
    mean, cov, k3, k4 = _point_estimates(total)

    cov_se = k3_se = k4_se = None
    if len(blocks) >= 2:
        B = len(blocks)
        covs = np.empty((B,) + cov.shape)
        k3s = np.empty((B, total.M))
        k4s = np.empty((B, total.M))
        for i, blk in enumerate(blocks):
            rest = MomentAccumulator(
                total.M,
                total.count - blk.count,
                total.s1 - blk.s1,
                total.s2 - blk.s2,
                total.s3 - blk.s3,
                total.s4 - blk.s4,
                total.cross - blk.cross,
            )
            _, covs[i], k3s[i], k4s[i] = _point_estimates(rest)
        fac = (B - 1) / B

        def jse(samples, center):
            dev = samples - center
            return np.sqrt(fac * np.nansum(dev * dev, axis=0))

        def nan_center(samples):
            # column-wise mean ignoring NaN, 0 where a column is all NaN
            # (those columns are re-masked to NaN below anyway)
            filled = np.where(np.isnan(samples), 0.0, samples)
            counts = np.maximum((~np.isnan(samples)).sum(axis=0), 1)
            return filled.sum(axis=0) / counts

        cov_se = jse(covs, covs.mean(axis=0))
        k3_se = jse(k3s, nan_center(k3s))
        k4_se = jse(k4s, nan_center(k4s))
        # keep NaN marking for degenerate coordinates
        k3_se = np.where(np.isnan(k3), np.nan, k3_se)
        k4_se = np.where(np.isnan(k4), np.nan, k4_se)
    return CumulantEstimates(
        count=total.count, mean=mean, cov=cov, cov_se=cov_se,
        k3=k3, k3_se=k3_se, k4=k4, k4_se=k4_se,
    )


# -- grading ---------------------------------------------------------------------


@dataclass(frozen=True)
class CLTRow:
    degree: int
    var_est: float
    var_se: float
    theory: float
    flag: str
    z: float
    k3: float
    k3_se: float
    k4: float
    k4_se: float
    passed: bool
    note: str


@dataclass(frozen=True)
class CLTReport:
    rows: tuple[CLTRow, ...]
    offdiag: tuple[tuple[int, int, float], ...]
    max_offdiag_z: float
    passed: bool
    z_max: float
    odd_ceiling: float
    rel_window: float


def _zscore(est: float, target: float, se: float) -> float:
    if se == 0.0 or math.isnan(se):
        return 0.0 if est == target else math.inf
    return (est - target) / se


def clt_report(
    result: SimulationResult,
    theory: Sequence[tuple[float, str]],
    z_max: float = 3.0,
    odd_ceiling: float = 0.5,
    rel_window: float = 0.10,
) -> CLTReport:
    """Grade a simulation against the limiting covariance, degree by degree.

    theory[m-1] is (value, flag) for degree m, as produced by V_asymptotic.
    Degree 1 must be exactly zero; odd degrees >= 3 are graded by an
    absolute ceiling on the variance (their limit is a point mass, so a
    relative error against 0 means nothing). Even degrees pass when
    |var - theory| <= rel_window * theory + z_max * se: the variance
    estimator is consistent for the finite-n variance, not for the limit,
    so the pass band must absorb the finite-size gap as well as sampling
    noise. The raw z-score against the limit is reported regardless.
    Off-diagonal entries target 0, which is not a limit statement, so they
    are graded by |z| <= z_max alone.
    """
    est = result.estimates
    M = result.config.M
    if len(theory) != M:
        raise ValueError("need one theory value per degree")
    rows = []
    all_pass = True
    for m in range(1, M + 1):
        var = float(est.cov[m - 1, m - 1])
        se = float(est.cov_se[m - 1, m - 1]) if est.cov_se is not None else math.nan
        tval, flag = theory[m - 1]
        k3 = float(est.k3[m - 1])
        k3se = float(est.k3_se[m - 1]) if est.k3_se is not None else math.nan
        k4 = float(est.k4[m - 1])
        k4se = float(est.k4_se[m - 1]) if est.k4_se is not None else math.nan
        if m == 1:
            ok = var == 0.0
            z = _zscore(var, 0.0, 0.0)
            note = "identically zero"
        elif m % 2 == 1:
            ok = var <= odd_ceiling
            z = math.nan
            note = f"absolute ceiling {odd_ceiling}"
        else:
            z = _zscore(var, tval, se)
            band = rel_window * abs(tval) + z_max * (0.0 if math.isnan(se) else se)
            ok = abs(var - tval) <= band
            note = "derived target" if flag == "derived" else "theorem target"
        rows.append(CLTRow(m, var, se, tval, flag, z, k3, k3se, k4, k4se, ok, note))
        all_pass &= ok
    offdiag = []
    worst = 0.0
    for m in range(1, M + 1):
        for mu in range(m + 1, M + 1):
            c = float(est.cov[m - 1, mu - 1])
            se = (
                float(est.cov_se[m - 1, mu - 1])
                if est.cov_se is not None
                else math.nan
            )
            z = _zscore(c, 0.0, se)
            offdiag.append((m, mu, z))
            worst = max(worst, abs(z))
            all_pass &= abs(z) <= z_max
    return CLTReport(
        rows=tuple(rows),
        offdiag=tuple(offdiag),
        max_offdiag_z=worst,
        passed=all_pass,
        z_max=z_max,
        odd_ceiling=odd_ceiling,
        rel_window=rel_window,
    )


def theory_vector(
    symmetry_class: SymmetryClass, M: int, sigma: float, model: EntryModel
) -> list[tuple[float, str]]:
    """(value, flag) per degree 1..M, from the asymptotic formulas."""
    return [
        V_asymptotic(symmetry_class, m, sigma, model if m == 2 else None)
        for m in range(1, M + 1)
    ]
