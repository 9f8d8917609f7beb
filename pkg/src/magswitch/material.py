"""Soft-magnetic material representation.

Covers the analytical permeability fit mu_r(B) used for single-valued
reluctance elements, the construction of the tabulated hysteresis kernel
(limiting-branch values and slopes on a shared H grid) from measured
major-loop data, and the Tellinen slope rule that reconstructs minor
loops from the present polarization J and the drive direction.

Conventions: H in A/m, J (polarization) and B (flux density) in T, with
B = J + mu0*H. Falling branch = upper limiting curve (J_minus), rising
branch = lower limiting curve (J_plus).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import least_squares

from magswitch.errors import DataFormatError, FitError

MU0 = 4.0e-7 * math.pi  # vacuum permeability [H/m]

# Tolerances of the hysteresis kernel
J_CLAMP_EPS = 1e-6      # admissible overshoot of J beyond a limiting branch [T]
BRANCH_COLLAPSE = 1e-9  # branch separation below which the loop is single-valued [T]

_GRID_RATIO = 1.6       # growth factor of grid spacing away from the slope maxima

CURVE_KINDS = ("initial", "falling_branch", "rising_branch")


@dataclass(frozen=True)
class BHCurve:
    """Sampled magnetization branch, stored with ascending H.

    `kind` records the semantics of the branch; falling branches are
    re-sorted to ascending H for storage.
    """

    h: np.ndarray
    j: np.ndarray
    kind: str = "initial"
    j_sat_bound: float = 2.5

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        j = np.asarray(self.j, dtype=float)
        if h.ndim != 1 or h.shape != j.shape:
            raise ValueError("H and J must be 1-d arrays of equal length")
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if h.size == 0:
            raise ValueError("curve is empty")
        if h.size > 1:
            dh = np.diff(h)
            if np.any(dh <= 0.0):
                raise ValueError("H must be strictly increasing within a branch")
        if np.any(np.abs(j) > self.j_sat_bound):
            raise ValueError(
                f"|J| exceeds the physical sanity bound {self.j_sat_bound} T"
            )
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "j", j)

    def __len__(self):
        return self.h.size

    def b(self) -> np.ndarray:
        """Flux density B = J + mu0*H at the sample points."""
        return self.j + MU0 * self.h


@dataclass(frozen=True)
class PermeabilityFit:
    """Five-parameter analytical permeability curve.

    mu_hat(B) = 1 + (mu_i - 1 + c_a*B_N) / (1 + c_b*B_N + B_N**n)
    with B_N = |B / b_mu_max|. Even in B and >= 1 everywhere.
    """

    mu_i: float
    b_mu_max: float
    c_a: float
    c_b: float
    n: float

    def __post_init__(self):
        if not self.mu_i >= 1.0:
            raise ValueError("mu_i must be >= 1")
        if not self.b_mu_max > 0.0:
            raise ValueError("b_mu_max must be positive")
        if self.c_a < 0.0 or self.c_b < 0.0:
            raise ValueError("c_a and c_b must be non-negative")
        if not self.n > 0.0:
            raise ValueError("exponent n must be positive")

    def mu_r(self, b):
        return eval_mu_hat(self, b)

    def field_strength(self, b):
        """H(B) = B / (mu0 * mu_hat(B)), odd in B."""
        if isinstance(b, float):
            return b / (MU0 * self._mu_scalar(abs(b)))
        return np.asarray(b) / (MU0 * eval_mu_hat(self, b))

    def dh_db(self, b):
        """Derivative dH/dB of the single-valued magnetization law."""
        if isinstance(b, float):
            b_abs = abs(b)
            mu = self._mu_scalar(b_abs)
            dmu = math.copysign(self._dmu_scalar(b_abs), b)
            return (mu - b * dmu) / (MU0 * mu * mu)
        mu = eval_mu_hat(self, b)
        dmu = eval_mu_hat_derivative(self, b)
        return (mu - np.asarray(b) * dmu) / (MU0 * mu * mu)

    def _mu_scalar(self, b_abs: float) -> float:
        b_n = b_abs / self.b_mu_max
        return 1.0 + (self.mu_i - 1.0 + self.c_a * b_n) / (
            1.0 + self.c_b * b_n + b_n ** self.n
        )

    def _dmu_scalar(self, b_abs: float) -> float:
        b_n = b_abs / self.b_mu_max
        num = self.mu_i - 1.0 + self.c_a * b_n
        den = 1.0 + self.c_b * b_n + b_n ** self.n
        dden = self.c_b + (self.n * b_n ** (self.n - 1.0) if b_n > 0.0 else 0.0)
        return (self.c_a * den - num * dden) / (den * den) / self.b_mu_max

    @cached_property
    def _energy_table(self):
        b_grid = np.linspace(0.0, 4.0, 8001)
        h_grid = self.field_strength(b_grid)
        w = np.concatenate(
            ([0.0], np.cumsum(0.5 * (h_grid[1:] + h_grid[:-1]) * np.diff(b_grid)))
        )
        return b_grid, w

    def energy_density(self, b):
        """Stored field energy density w(B) = integral of H dB from 0 [J/m^3]."""
        b_grid, w = self._energy_table
        return np.interp(np.abs(b), b_grid, w)

    def coenergy_density(self, b):
        """Co-energy density B*H - w(B) [J/m^3]."""
        return np.abs(b) * np.abs(self.field_strength(b)) - self.energy_density(b)


#: Fit parameters for X6CrMoS17 (1.4105) ferritic stainless steel.
X6CRMOS17_FIT = PermeabilityFit(mu_i=246.0, b_mu_max=0.995, c_a=13400.0, c_b=5.0, n=12.8)


@dataclass(frozen=True)
class Resistivity:
    """Electrical resistivity [ohm*m]."""

    rho: float

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ValueError("resistivity must be positive")


#: Four-terminal measurement on the X6CrMoS17 permeameter sample.
X6CRMOS17_RESISTIVITY = Resistivity(rho=0.774e-6)


def eval_mu_hat(fit: PermeabilityFit, b):
    """Relative permeability of the analytical fit at flux density `b` [T].

    Total function, even in b, always >= 1. Accepts scalars or arrays.
    """
    b_n = np.abs(np.asarray(b, dtype=float)) / fit.b_mu_max
    num = fit.mu_i - 1.0 + fit.c_a * b_n
    den = 1.0 + fit.c_b * b_n + b_n ** fit.n
    out = 1.0 + num / den
    if np.ndim(b) == 0:
        return float(out)
    return out


def eval_mu_hat_derivative(fit: PermeabilityFit, b):
    """d mu_hat / dB, odd in b (sided value at b = 0)."""
    b_arr = np.asarray(b, dtype=float)
    b_n = np.abs(b_arr) / fit.b_mu_max
    num = fit.mu_i - 1.0 + fit.c_a * b_n
    den = 1.0 + fit.c_b * b_n + b_n ** fit.n
    dden = fit.c_b + np.where(b_n > 0.0, fit.n * b_n ** (fit.n - 1.0), 0.0)
    dmu_dbn = (fit.c_a * den - num * dden) / (den * den)
    out = np.sign(b_arr) * dmu_dbn / fit.b_mu_max
    if np.ndim(b) == 0:
        return float(out)
    return out


@dataclass
class FitResult:
    fit: PermeabilityFit
    rms_relative_residual: float
    points_used: int
    points_excluded: int


def fit_permeability(
    curve: BHCurve,
    exclude_above_mu: float = 1000.0,
    b_mu_max_hint: float | None = None,
) -> FitResult:
    """Least-squares fit of the analytical permeability curve to measured data.

    Measured relative permeability is formed as mu = B/(mu0*H) from the
    initial-curve samples with H > 0; points with mu above
    `exclude_above_mu` are removed before fitting (magnetic voltage
    dividers are insensitive to very high permeability values). Runs a
    bounded trust-region fit from several starting exponents because the
    exponent makes the problem stiff.

    Raises FitError when fewer than 5 points survive the exclusion.
    """
    if not exclude_above_mu > 1.0:
        raise ValueError("exclusion threshold must exceed 1")
    mask = curve.h > 0.0
    b_data = curve.b()[mask]
    h_data = curve.h[mask]
    positive = b_data > 0.0
    b_data, h_data = b_data[positive], h_data[positive]
    mu_data = b_data / (MU0 * h_data)
    keep = mu_data <= exclude_above_mu
    excluded = int(np.size(keep) - np.count_nonzero(keep))
    b_fit, mu_fit = b_data[keep], mu_data[keep]
    if b_fit.size < 5:
        raise FitError(
            f"only {b_fit.size} points survive the mu <= {exclude_above_mu} exclusion; "
            "need at least 5 for the five-parameter fit"
        )

    def residual(p):
        trial = PermeabilityFit(*np.maximum(p, [1.0, 1e-6, 0.0, 0.0, 0.1]))
        return eval_mu_hat(trial, b_fit) / mu_fit - 1.0

    mu_i0 = float(np.clip(mu_fit[np.argmin(b_fit)], 1.0, None))
    b_peak = b_mu_max_hint if b_mu_max_hint is not None else float(b_fit[np.argmax(mu_fit)])
    b_peak = float(np.clip(b_peak, 1e-3, 10.0))
    c_b0 = 5.0
    c_a0 = max(float(np.max(mu_fit)) * (2.0 + c_b0), 1.0)
    lower = [1.0, 1e-3, 0.0, 0.0, 2.0]
    upper = [1e7, 10.0, 1e8, 1e4, 30.0]

    best = None
    for n0 in (2.0, 4.0, 6.0, 9.0, 13.0, 18.0, 24.0, 30.0):
        x0 = np.clip([mu_i0, b_peak, c_a0, c_b0, n0], lower, upper)
        try:
            sol = least_squares(residual, x0, bounds=(lower, upper), method="trf")
        except ValueError:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise FitError("permeability fit failed to converge from any start")

    fit = PermeabilityFit(*best.x)
    rms = float(np.sqrt(np.mean(residual(best.x) ** 2)))
    return FitResult(
        fit=fit,
        rms_relative_residual=rms,
        points_used=int(b_fit.size),
        points_excluded=excluded,
    )


def symmetrize_loop(falling: BHCurve, rising: BHCurve, n_points: int | None = None):
    """Symmetrize a measured major loop about the origin.

    Both branches are resampled onto a shared symmetric H grid and each
    is replaced by the average of itself and the point-reflected other
    branch, so that J_fall(H) = -J_rise(-H) holds exactly afterwards.
    A common measurement offset cancels in the averaging. Idempotent.
    """
    h_sym = min(falling.h[-1], rising.h[-1], -falling.h[0], -rising.h[0])
    if not h_sym > 0.0:
        raise ValueError(
            "branches must share a common H range containing 0 to symmetrize"
        )
    if n_points is None:
        n_points = max(len(falling), len(rising))
    if n_points % 2 == 0:
        n_points += 1  # keep H = 0 on the grid
    h = np.linspace(-h_sym, h_sym, n_points)
    j_fall = np.interp(h, falling.h, falling.j)
    j_rise = np.interp(h, rising.h, rising.j)
    j_fall_sym = 0.5 * (j_fall - j_rise[::-1])
    j_rise_sym = -j_fall_sym[::-1]
    bound = max(falling.j_sat_bound, rising.j_sat_bound)
    return (
        BHCurve(h, j_fall_sym, kind="falling_branch", j_sat_bound=bound),
        BHCurve(h, j_rise_sym, kind="rising_branch", j_sat_bound=bound),
    )


@dataclass(frozen=True)
class SlopedBranch:
    """A branch together with its sampled slope dJ/dH [T/(A/m)]."""

    h: np.ndarray
    j: np.ndarray
    djdh: np.ndarray
    kind: str


def differentiate_loop(branch: BHCurve) -> SlopedBranch:
    """Numerical slope of a branch: central differences inside, one-sided
    at the ends, clipped at zero from below (limiting branches are
    monotone nondecreasing)."""
    if len(branch) < 3:
        raise ValueError("need at least 3 samples to differentiate a branch")
    if np.any(np.diff(branch.h) == 0.0):
        raise ValueError("duplicate H values in branch")
    slope = np.gradient(branch.j, branch.h)
    slope = np.clip(slope, 0.0, None)
    return SlopedBranch(h=branch.h, j=branch.j, djdh=slope, kind=branch.kind)


def _geometric_offsets(span: float, n_interior: int, ratio: float = _GRID_RATIO):
    """Cumulative offsets from 0 with geometrically growing increments.

    Returns n_interior + 1 offsets; the last lands exactly on `span`.
    """
    k = np.arange(1, n_interior + 2, dtype=float)
    return span * (ratio ** k - 1.0) / (ratio ** (n_interior + 1) - 1.0)


@dataclass(frozen=True)
class TellinenTable:
    """Limiting-branch values and slopes on a shared ascending H grid.

    j_plus/dj_plus belong to the rising (lower) branch, j_minus/dj_minus
    to the falling (upper) branch. The table is the complete hysteresis
    kernel: together with the present J it determines dJ/dH.
    """

    grid: np.ndarray
    j_plus: np.ndarray
    j_minus: np.ndarray
    dj_plus: np.ndarray
    dj_minus: np.ndarray
    symmetry_tol: float = 1e-6

    def __post_init__(self):
        arrays = {}
        for name in ("grid", "j_plus", "j_minus", "dj_plus", "dj_minus"):
            arrays[name] = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arrays[name])
        n = arrays["grid"].size
        if any(a.size != n for a in arrays.values()):
            raise ValueError("all table columns must share the grid length")
        if np.any(np.diff(arrays["grid"]) <= 0.0):
            raise ValueError("H grid must be strictly ascending")
        if np.any(arrays["j_minus"] - arrays["j_plus"] < -J_CLAMP_EPS):
            raise ValueError("falling branch must lie above the rising branch")
        if np.any(arrays["dj_plus"] < 0.0) or np.any(arrays["dj_minus"] < 0.0):
            raise ValueError("branch slopes must be non-negative")
        asym = arrays["j_plus"] + np.interp(
            -arrays["grid"][::-1], arrays["grid"], arrays["j_minus"]
        )[::-1]
        if np.max(np.abs(asym)) > self.symmetry_tol:
            raise ValueError(
                "table violates point symmetry j_plus(H) = -j_minus(-H) "
                f"by {np.max(np.abs(asym)):.2e} T"
            )

    def __len__(self):
        return self.grid.size

    @cached_property
    def _columns(self):
        # plain tuples: bisect + float math beats numpy at this size
        return (
            tuple(self.grid.tolist()),
            tuple(self.j_plus.tolist()),
            tuple(self.j_minus.tolist()),
            tuple(self.dj_plus.tolist()),
            tuple(self.dj_minus.tolist()),
        )

    def lookup(self, h: float):
        """Linear interpolation of (j_plus, j_minus, dj_plus, dj_minus) at h.

        Outside the grid the endpoint values are held (flat extrapolation);
        callers track that through a Diagnostics object if they care.
        """
        grid, jp, jm, djp, djm = self._columns
        if h <= grid[0]:
            return jp[0], jm[0], djp[0], djm[0]
        if h >= grid[-1]:
            return jp[-1], jm[-1], djp[-1], djm[-1]
        k = bisect.bisect_right(grid, h) - 1
        t = (h - grid[k]) / (grid[k + 1] - grid[k])
        return (
            jp[k] + t * (jp[k + 1] - jp[k]),
            jm[k] + t * (jm[k + 1] - jm[k]),
            djp[k] + t * (djp[k + 1] - djp[k]),
            djm[k] + t * (djm[k + 1] - djm[k]),
        )

    def in_range(self, h: float) -> bool:
        return self.grid[0] <= h <= self.grid[-1]

    def clamp_polarization(self, h: float, j: float) -> float:
        jp, jm, _, _ = self.lookup(h)
        return min(max(j, jp - J_CLAMP_EPS), jm + J_CLAMP_EPS)


@dataclass
class Diagnostics:
    """Counters for numerically notable but non-fatal events."""

    extrapolations: int = 0
    branch_sign_freezes: int = 0


def select_grid(
    falling: SlopedBranch,
    rising: SlopedBranch,
    count: int = 61,
) -> TellinenTable:
    """Build the hysteresis table on a grid concentrated near the slope maxima.

    The grid always contains the H locations of the two branch slope
    maxima and the shared data-range endpoints; the remaining points are
    placed at geometrically increasing distances from the nearer maximum
    (both toward the origin and toward the range ends) so that the
    farthest point lands exactly on the range end. Requires an odd count
    so the grid stays symmetric around H = 0.
    """
    if count < 7:
        raise ValueError("grid needs at least 7 points")
    if count % 2 == 0:
        raise ValueError("grid count must be odd to keep the grid symmetric")
    n_avail = min(falling.h.size, rising.h.size)
    if count > n_avail:
        raise ValueError(
            f"requested {count} grid points but only {n_avail} samples are available"
        )
    h_end = min(falling.h[-1], rising.h[-1], -falling.h[0], -rising.h[0])
    if not h_end > 0.0:
        raise ValueError("branches must cover a symmetric H range around 0")

    h_fall_peak = float(falling.h[np.argmax(falling.djdh)])
    h_rise_peak = float(rising.h[np.argmax(rising.djdh)])
    h_peak = 0.5 * (abs(h_fall_peak) + abs(h_rise_peak))

    points = [0.0]
    if h_peak <= 0.0 or h_peak >= h_end:
        n_side = (count - 3) // 2
        outer = _geometric_offsets(h_end, n_side - 1)
        points.extend(outer)
        points.extend(-outer)
    else:
        n_side = (count - 5) // 2
        n_inner = n_side // 2
        n_outer = n_side - n_inner
        inner = h_peak - _geometric_offsets(h_peak, n_inner)[:-1]
        outer = h_peak + _geometric_offsets(h_end - h_peak, n_outer)
        side = np.concatenate(([h_peak], inner, outer))
        points.extend(side)
        points.extend(-side)
    grid = np.unique(np.asarray(points))
    if grid.size != count:
        raise ValueError("degenerate grid: maxima or endpoints coincide")

    j_plus = np.interp(grid, rising.h, rising.j)
    j_minus = np.interp(grid, falling.h, falling.j)
    dj_plus = np.interp(grid, rising.h, rising.djdh)
    dj_minus = np.interp(grid, falling.h, falling.djdh)
    return TellinenTable(grid, j_plus, j_minus, dj_plus, dj_minus)


def tellinen_slope(
    table: TellinenTable,
    h: float,
    j: float,
    dh_sign: int,
    diag: Diagnostics | None = None,
) -> float:
    """Minor-loop slope dJ/dH at state (h, j) for drive direction dh_sign.

    Rising drive weights the rising-branch slope by the remaining headroom
    (J_minus - J)/(J_minus - J_plus); falling drive mirrors this. Zero
    drive gives zero slope. When the branches collapse (deep saturation)
    the branch slope is returned directly. H outside the grid uses the
    endpoint data and is counted in `diag`.
    """
    if dh_sign == 0:
        return 0.0
    if diag is not None and not table.in_range(h):
        diag.extrapolations += 1
    jp, jm, djp, djm = table.lookup(h)
    gap = jm - jp
    if gap < BRANCH_COLLAPSE:
        return djp if dh_sign > 0 else djm
    j_c = min(max(j, jp - J_CLAMP_EPS), jm + J_CLAMP_EPS)
    if dh_sign > 0:
        weight = (jm - j_c) / gap
    else:
        weight = (j_c - jp) / gap
    weight = min(max(weight, 0.0), 1.0)
    return weight * (djp if dh_sign > 0 else djm)


def advance_polarization(
    table: TellinenTable,
    h0: float,
    j0: float,
    h1: float,
    h_ref: float = 25.0,
    max_substeps: int = 64,
    sign_override: int | None = None,
    diag: Diagnostics | None = None,
) -> float:
    """Integrate dJ/dH from (h0, j0) to h1 along the Tellinen flow.

    Midpoint-rule substeps (at most one per `h_ref` of drive change) keep
    J accurately inside the limiting branches even for large H excursions
    within one solver step. `sign_override` pins the branch selection when
    a Newton iteration oscillates around dH = 0.
    """
    dh = h1 - h0
    if dh == 0.0:
        return table.clamp_polarization(h1, j0)
    sign = sign_override if sign_override is not None else (1 if dh > 0.0 else -1)
    n = min(max(int(math.ceil(abs(dh) / h_ref)), 1), max_substeps)
    step = dh / n
    h, j = h0, j0
    for _ in range(n):
        k1 = tellinen_slope(table, h, j, sign, diag)
        j_mid = j + 0.5 * step * k1
        k2 = tellinen_slope(table, h + 0.5 * step, j_mid, sign, diag)
        h += step
        j = table.clamp_polarization(h, j + step * k2)
    return j


def reconstruct_initial_curve(
    table: TellinenTable, h_max: float, steps: int = 200
) -> BHCurve:
    """Trace the initial magnetization curve implied by the hysteresis table.

    Starts from the demagnetized state J = (j_plus(0)+j_minus(0))/2 (zero
    for a symmetrized table) and integrates upward with rising drive.
    """
    if h_max < 0.0 or not table.in_range(h_max):
        raise ValueError("h_max must lie within the table grid range")
    jp0, jm0, _, _ = table.lookup(0.0)
    j_start = 0.5 * (jp0 + jm0)
    if h_max == 0.0:
        return BHCurve(np.array([0.0]), np.array([j_start]), kind="initial")
    if steps < 10:
        raise ValueError("need at least 10 integration steps")
    h = np.linspace(0.0, h_max, steps + 1)
    j = np.empty_like(h)
    j[0] = j_start
    for k in range(steps):
        j[k + 1] = advance_polarization(table, h[k], j[k], h[k + 1])
    return BHCurve(h, j, kind="initial")


# ---------------------------------------------------------------------------
# Plain-text material data files. Whitespace-separated columns, '#' comments.
# ---------------------------------------------------------------------------


def _read_columns(path, min_cols):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                values = [float(p) for p in parts]
            except ValueError:
                raise DataFormatError(
                    f"non-numeric value in {parts!r}", path=str(path), line=lineno
                ) from None
            if len(values) < min_cols:
                raise DataFormatError(
                    f"expected at least {min_cols} columns, found {len(values)}",
                    path=str(path),
                    line=lineno,
                )
            rows.append(values)
    if not rows:
        raise DataFormatError("file contains no data rows", path=str(path))
    width = min(len(r) for r in rows)
    return np.asarray([r[:width] for r in rows], dtype=float)


def load_curve_file(path, kind="initial") -> BHCurve:
    """Read a 2-column (H, J) curve file."""
    data = _read_columns(path, 2)
    order = np.argsort(data[:, 0])
    h, j = data[order, 0], data[order, 1]
    if np.any(np.diff(h) == 0.0):
        raise DataFormatError("duplicate H values in curve file", path=str(path))
    return BHCurve(h, j, kind=kind)


def load_loop_file(path):
    """Read a major-loop file and return (falling, rising) branches.

    Accepts 4 columns (H_fall, J_fall, H_rise, J_rise) or a 2-column
    (H, J) trace of the full loop, which is split at the H extremes.
    """
    data = _read_columns(path, 2)
    if data.shape[1] >= 4:
        falling = _branch_from_samples(data[:, 0], data[:, 1], "falling_branch", path)
        rising = _branch_from_samples(data[:, 2], data[:, 3], "rising_branch", path)
        return falling, rising
    h, j = data[:, 0], data[:, 1]
    i_max = int(np.argmax(h))
    i_min = int(np.argmin(h))
    lo, hi = sorted((i_min, i_max))
    seg_a = (h[lo : hi + 1], j[lo : hi + 1])
    seg_b = (np.concatenate((h[hi:], h[: lo + 1])), np.concatenate((j[hi:], j[: lo + 1])))
    branches = []
    for seg_h, seg_j in (seg_a, seg_b):
        if seg_h.size < 3:
            raise DataFormatError(
                "2-column loop trace does not contain two sweeps", path=str(path)
            )
        descending = seg_h[0] > seg_h[-1]
        branches.append(
            _branch_from_samples(
                seg_h, seg_j, "falling_branch" if descending else "rising_branch", path
            )
        )
    falling = next((b for b in branches if b.kind == "falling_branch"), None)
    rising = next((b for b in branches if b.kind == "rising_branch"), None)
    if falling is None or rising is None:
        raise DataFormatError(
            "loop trace must contain one rising and one falling sweep", path=str(path)
        )
    return falling, rising


def _branch_from_samples(h, j, kind, path):
    order = np.argsort(h)
    h, j = np.asarray(h)[order], np.asarray(j)[order]
    keep = np.concatenate(([True], np.diff(h) > 0.0))
    h, j = h[keep], j[keep]
    if h.size < 3:
        raise DataFormatError(f"{kind} has fewer than 3 usable samples", path=str(path))
    return BHCurve(h, j, kind=kind)


def save_table_file(table: TellinenTable, path, header=""):
    """Write a hysteresis table file.

    Columns: H_fall, dJ_fall, H_rise, dJ_rise, J_fall, J_rise. The first
    four mirror the derivative-table layout used by circuit simulators;
    the shared grid is emitted for both branches.
    """
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        fh.write("# H_fall[A/m] dJ_fall[T.m/A] H_rise[A/m] dJ_rise[T.m/A]"
                 " J_fall[T] J_rise[T]\n")
        for k in range(len(table)):
            fh.write(
                f"{table.grid[k]:.10g} {table.dj_minus[k]:.10g} "
                f"{table.grid[k]:.10g} {table.dj_plus[k]:.10g} "
                f"{table.j_minus[k]:.10g} {table.j_plus[k]:.10g}\n"
            )


def load_table_file(path) -> TellinenTable:
    """Read a hysteresis table file (6-column or legacy 4-column layout).

    A 4-column file carries only the branch slopes; branch values are
    recovered by integrating the slopes and anchoring the constants with
    the point-symmetry requirement and branch merging at the grid ends.
    """
    data = _read_columns(path, 4)
    h_fall, dj_fall = data[:, 0], data[:, 1]
    h_rise, dj_rise = data[:, 2], data[:, 3]
    if np.max(np.abs(h_fall - h_rise)) > 1e-9 * max(1.0, np.max(np.abs(h_fall))):
        raise DataFormatError(
            "falling and rising grids differ; resample the table first",
            path=str(path),
        )
    grid = h_fall
    if np.any(np.diff(grid) <= 0.0):
        raise DataFormatError("table grid must be strictly ascending", path=str(path))
    dj_fall = np.clip(dj_fall, 0.0, None)
    dj_rise = np.clip(dj_rise, 0.0, None)
    if data.shape[1] >= 6:
        j_fall, j_rise = data[:, 4], data[:, 5]
    else:
        j_fall = _cumulative(grid, dj_fall)
        j_rise = _cumulative(grid, dj_rise)
        # Branches merge at the grid ends: fixes the offset difference.
        shift = 0.5 * ((j_fall[-1] - j_rise[-1]) + (j_fall[0] - j_rise[0]))
        j_rise = j_rise + shift
        # Point symmetry fixes the remaining common offset.
        center = 0.5 * float(
            np.mean(j_fall + np.interp(-grid[::-1], grid, j_rise)[::-1])
        )
        j_fall = j_fall - center
        j_rise = j_rise - center
    return TellinenTable(grid, j_rise, j_fall, dj_rise, dj_fall)


def _cumulative(x, y):
    out = np.concatenate(([0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))))
    return out
