"""Dirichlet spectra of the quarter-stadium family by the method of particular solutions.

Basis functions solve the Helmholtz equation exactly and vanish on the two symmetry
walls (x = 0 and y = 0). Eigenvalues are the k where some combination of them also
vanishes on the remaining boundary (the straight top wall and the arc) without vanishing
inside: the smallest singular value of the boundary block of an orthonormal basis of
the collocation space (the subspace-angle tension) drops to zero there.

A single expansion about the origin cannot reach the far end of the cap: stadium
eigenfunctions are singular where the top wall meets the arc. The stadium basis pairs
the origin expansion with Bessel waves about the cap centre.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from scipy import special
from scipy.linalg import svd
from scipy.optimize import minimize_scalar

from app.db.database import SpectrumStore
from app.db.models import (
    BilliardShape,
    BoundaryCondition,
    CompletenessReport,
    FoundLevel,
    ShapeKind,
    SolverConfig,
    Spectrum,
    SpectrumSource,
    SpectrumWindow,
    SuspectInterval,
    WeylData,
)
from app.errors import CertificationError, ConfigurationError, SolverWindowError
from app.services.billiards import area, mean_level_spacing, merge_levels, weyl_count, weyl_data

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-12
J01 = 2.404825557695773
WINDOW_OVERLAP = 0.1
# scan steps added on both sides of a window so edge levels are interior minima
SCAN_PAD = 2
# at least ppw / POINTS_PER_COLUMN_PPW boundary points per basis column (2 at ppw = 10)
POINTS_PER_COLUMN_PPW = 5.0
CERTIFY_WIDTH = 4.0
CERTIFY_GRID = 20


def _geometry(shape: BilliardShape) -> tuple[float, float]:
    """(r, l) of a quarter stadium; the quarter circle is l = 0."""
    if shape.kind == ShapeKind.QUARTER_CIRCLE:
        return float(shape.radius), 0.0
    if shape.kind == ShapeKind.STADIUM:
        return float(shape.radius), float(shape.length)
    raise ConfigurationError(f"the boundary solver handles stadium shapes, not {shape.label}")


def _bessel_waves(k: float, dx: np.ndarray, y: np.ndarray, orders: np.ndarray) -> np.ndarray:
    rho = np.hypot(dx, y)
    phi = np.arctan2(y, dx)
    return special.jv(orders[None, :], k * rho[:, None]) * np.sin(np.outer(phi, orders))


class TensionProblem:
    """Collocation matrices of one window, sized for its upper wavenumber."""

    def __init__(self, shape: BilliardShape, k_ref: float, cfg: SolverConfig):
        self.radius, self.length = _geometry(shape)
        self.cfg = cfg
        basis = cfg.basis
        if basis == "auto":
            basis = "fourier_bessel" if self.length == 0 else "two_centre"
        self.basis = basis

        perimeter = (2.0 + math.pi / 2.0) * self.radius + 2.0 * self.length
        self.n_basis = max(
            cfg.min_basis, math.ceil(cfg.basis_factor * perimeter * k_ref / (2 * math.pi))
        )
        self.n_columns = 2 * self.n_basis if basis == "two_centre" else self.n_basis

        boundary_length = self.length + math.pi * self.radius / 2.0
        ppw = cfg.points_per_wavelength
        n_boundary = max(
            math.ceil(ppw * boundary_length * k_ref / (2 * math.pi)),
            math.ceil(ppw / POINTS_PER_COLUMN_PPW * self.n_columns),
        )
        n_top = int(round(n_boundary * self.length / boundary_length))
        n_arc = n_boundary - n_top
        x_top = (np.arange(n_top) + 0.5) * self.length / max(n_top, 1)
        phi = (np.arange(n_arc) + 0.5) * (math.pi / 2.0) / n_arc
        self.boundary = np.column_stack(
            [
                np.concatenate([x_top, self.length + self.radius * np.cos(phi)]),
                np.concatenate([np.full(n_top, self.radius), self.radius * np.sin(phi)]),
            ]
        )
        self.interior = self._interior_points(max(int(cfg.interior_factor * self.n_columns), 20))
        self.points = np.vstack([self.boundary, self.interior])
        self.n_boundary = self.boundary.shape[0]

    def _interior_points(self, count: int) -> np.ndarray:
        rng = np.random.default_rng(self.cfg.seed)
        width = self.length + self.radius
        accepted: list[np.ndarray] = []
        total = 0
        while total < count:
            candidates = rng.uniform(0.0, 1.0, size=(4 * count, 2)) * [width, self.radius]
            x, y = candidates[:, 0], candidates[:, 1]
            inside = (x <= self.length) | ((x - self.length) ** 2 + y**2 < self.radius**2)
            accepted.append(candidates[inside])
            total += int(inside.sum())
        return np.vstack(accepted)[:count]

    def basis_values(self, k: float, points: np.ndarray) -> np.ndarray:
        """Basis functions at `points`, one column each."""
        x, y = points[:, 0], points[:, 1]
        if self.basis == "plane_waves":
            theta = (np.arange(self.n_basis) + 0.5) * (math.pi / 2.0) / self.n_basis
            return np.sin(k * np.outer(x, np.cos(theta))) * np.sin(k * np.outer(y, np.sin(theta)))
        origin = _bessel_waves(k, x, y, 2.0 * np.arange(1, self.n_basis + 1))
        if self.basis == "fourier_bessel":
            return origin
        # waves about (l, 0) minus their mirror image about (-l, 0): odd in x and in y
        orders = np.arange(1, self.n_basis + 1, dtype=float)
        cap = _bessel_waves(k, x - self.length, y, orders) - _bessel_waves(
            k, -x - self.length, y, orders
        )
        return np.hstack([origin, cap])

    def matrix(self, k: float) -> np.ndarray:
        return self.basis_values(k, self.points)

    def tensions(self, k: float) -> tuple[float, float, int]:
        """(sigma_1, sigma_2, rank): two smallest singular values of the boundary block."""
        a = self.matrix(k)
        norms = np.linalg.norm(a, axis=0)
        norms[norms == 0] = 1.0
        u, s, _ = svd(a / norms, full_matrices=False, check_finite=False)
        rank = int(np.sum(s > RANK_RTOL * s[0]))
        sigma = svd(u[: self.n_boundary, :rank], compute_uv=False, check_finite=False)
        smallest = float(sigma[-1])
        second = float(sigma[-2]) if sigma.size > 1 else 1.0
        return smallest, second, rank


def _refine(
    problem: TensionProblem, lo: float, hi: float, cfg: SolverConfig
) -> tuple[float, float]:
    result = minimize_scalar(
        lambda k: problem.tensions(k)[0],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-2 * cfg.target_accuracy * lo},
    )
    return float(result.x), float(result.fun)


def _local_minima(values: np.ndarray) -> np.ndarray:
    inner = (values[1:-1] <= values[:-2]) & (values[1:-1] <= values[2:])
    return np.nonzero(inner)[0] + 1


def _dedupe(found: list[FoundLevel], rel_tol: float, abs_tol: float = 0.0) -> list[FoundLevel]:
    found = sorted(found, key=lambda level: level.lam)
    merged: list[FoundLevel] = []
    for level in found:
        if merged and level.lam - merged[-1].lam <= max(rel_tol * level.lam, abs_tol):
            if level.residual < merged[-1].residual:
                merged[-1] = level.model_copy(
                    update={"multiplicity": max(level.multiplicity, merged[-1].multiplicity)}
                )
            continue
        merged.append(level)
    return merged


def solve_window(
    shape: BilliardShape, window: tuple[float, float], cfg: Optional[SolverConfig] = None
) -> SpectrumWindow:
    """Every Dirichlet eigenvalue in [lo, hi] with its boundary tension."""
    cfg = cfg or SolverConfig()
    lo, hi = float(window[0]), float(window[1])
    if not 0 < lo < hi:
        raise SolverWindowError(f"invalid window [{lo}, {hi}]", window=(lo, hi))
    weyl = weyl_data(shape)
    problem = TensionProblem(shape, hi, cfg)

    step = mean_level_spacing(weyl, hi) / cfg.scan_resolution
    start = max(lo - SCAN_PAD * step, 0.5 * lo)
    stop = hi + SCAN_PAD * step
    grid = np.linspace(start, stop, max(3, int(math.ceil((stop - start) / step)) + 1))
    scan = [problem.tensions(k) for k in grid]
    sigma1 = np.array([t[0] for t in scan])
    if scan[0][2] < 0.5 * scan[-1][2]:
        raise SolverWindowError(
            f"basis rank collapses from {scan[-1][2]} to {scan[0][2]} across "
            f"[{lo:.6g}, {hi:.6g}]; use a narrower window_width",
            window=(lo, hi),
        )
    logger.debug(
        "window [%.6g, %.6g]: %d scan points, %d basis columns",
        lo,
        hi,
        grid.size,
        problem.n_columns,
    )

    singles: list[FoundLevel] = []
    pairs: list[FoundLevel] = []
    for i in _local_minima(sigma1):
        k_star, tension = _refine(problem, grid[i - 1], grid[i + 1], cfg)
        if tension > cfg.tension_threshold:
            continue
        second = problem.tensions(k_star)[1]
        if second <= cfg.tension_threshold:
            pairs.extend(_split_pair(problem, grid[i - 1], grid[i + 1], cfg))
        else:
            singles.append(FoundLevel(lam=k_star, residual=tension))

    # two scan minima refined onto the same k are one level; close pairs were split above
    dedupe_tol = 10.0 * cfg.target_accuracy
    singles = _dedupe(singles, dedupe_tol, abs_tol=0.25 * step)
    singles = [s for s in singles if all(abs(s.lam - p.lam) > 0.25 * step for p in pairs)]
    found = [level for level in _dedupe(singles + pairs, dedupe_tol) if lo <= level.lam <= hi]
    expected = float(weyl_count(weyl, hi * hi) - weyl_count(weyl, lo * lo))
    return SpectrumWindow(lambda_lo=lo, lambda_hi=hi, found=found, weyl_expected=expected)


def _split_pair(
    problem: TensionProblem, lo: float, hi: float, cfg: SolverConfig
) -> list[FoundLevel]:
    """Rescan a bracket holding two small tensions; unresolved pairs are degenerate."""
    fine = np.linspace(lo, hi, 4 * cfg.scan_resolution + 1)
    sigma1 = np.array([problem.tensions(k)[0] for k in fine])
    levels: list[FoundLevel] = []
    for i in _local_minima(sigma1):
        k_star, tension = _refine(problem, fine[i - 1], fine[i + 1], cfg)
        if tension <= cfg.tension_threshold:
            levels.append(FoundLevel(lam=k_star, residual=tension))
    levels = _dedupe(levels, 10.0 * cfg.target_accuracy)
    if len(levels) == 1:
        k_star = levels[0].lam
        _, second, _ = problem.tensions(k_star)
        if second <= cfg.tension_threshold:
            levels = [levels[0].model_copy(update={"multiplicity": 2})]
    return levels


def window_edges(
    shape: BilliardShape, lambda_max: float, cfg: SolverConfig
) -> list[tuple[float, float]]:
    """Overlapping windows from below the Faber-Krahn bound up to lambda_max."""
    start = 0.9 * J01 * math.sqrt(math.pi / area(shape))
    edges: list[tuple[float, float]] = []
    lo = start
    while lo < lambda_max:
        hi = lo + cfg.window_width
        edges.append((lo, hi))
        lo = hi - WINDOW_OVERLAP * cfg.window_width
    return edges


def family_key(shape: BilliardShape, cfg: SolverConfig) -> str:
    payload = {
        "shape": shape.model_dump(mode="json"),
        "solver": cfg.model_dump(mode="json", exclude={"workers"}),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def _solve_cached(
    shape: BilliardShape,
    edge: tuple[float, float],
    cfg: SolverConfig,
    store: Optional[SpectrumStore],
    key: str,
) -> SpectrumWindow:
    if store is not None:
        cached = store.get_window(key, edge[0], edge[1])
        if cached is not None:
            return SpectrumWindow.model_validate(cached)
    window = solve_window(shape, edge, cfg)
    if store is not None:
        store.put_window(key, edge[0], edge[1], window.model_dump(mode="json"))
    return window


def _owned_levels(windows: list[SpectrumWindow]) -> list[FoundLevel]:
    """Levels of overlapping windows, each window keeping the part between the midpoints
    of its overlaps with its neighbours."""
    cuts = [(prev.lambda_hi + nxt.lambda_lo) / 2.0 for prev, nxt in zip(windows, windows[1:])]
    lower = [-math.inf, *cuts]
    upper = [*cuts, math.inf]
    return [
        level
        for window, lo, hi in zip(windows, lower, upper)
        for level in window.found
        if lo <= level.lam < hi
    ]


def solve_up_to(
    shape: BilliardShape,
    lambda_max: float,
    cfg: Optional[SolverConfig] = None,
    store: Optional[SpectrumStore] = None,
) -> Spectrum:
    """Certified Dirichlet spectrum complete up to lambda_max.

    Windows are solved two smoothing widths past lambda_max so that the completeness
    certificate covers the whole returned range.
    """
    cfg = cfg or SolverConfig()
    weyl = weyl_data(shape)
    margin = CERTIFY_WIDTH / math.sqrt(weyl.area)
    solve_max = lambda_max + 2.0 * margin
    edges = window_edges(shape, solve_max, cfg)
    key = family_key(shape, cfg)
    logger.info("solving %s up to %.6g in %d windows", shape.label, solve_max, len(edges))

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
            windows = list(executor.map(lambda e: _solve_cached(shape, e, cfg, store, key), edges))
    else:
        windows = [_solve_cached(shape, e, cfg, store, key) for e in edges]

    levels = _dedupe(_owned_levels(windows), 10.0 * cfg.target_accuracy)
    values, mult = merge_levels(
        np.array([level.lam for level in levels]),
        np.array([level.multiplicity for level in levels]),
        tol=10.0 * cfg.target_accuracy,
    )
    full = Spectrum(
        levels=values,
        multiplicities=mult,
        bc=BoundaryCondition.DIRICHLET,
        lambda_max=solve_max,
        source=SpectrumSource.NUMERIC_SOLVER,
    )
    report = certify_completeness(full, weyl)
    if not report.ok:
        suspects = [s.model_dump() for s in report.suspects]
        bad = [
            (w.lambda_lo, w.lambda_hi)
            for w in windows
            if any(
                w.lambda_hi >= s.lambda_lo and w.lambda_lo <= s.lambda_hi for s in report.suspects
            )
        ]
        raise CertificationError(
            f"{shape.label}: {len(report.suspects)} suspect interval(s) in the solver spectrum",
            suspects=suspects,
            windows=bad,
        )
    logger.info("%s: %d levels certified up to %.6g", shape.label, full.total, lambda_max)
    return full.truncated(lambda_max)


def certify_completeness(spectrum: Spectrum, weyl: WeylData) -> CompletenessReport:
    """Compare the staircase with the smooth Weyl count.

    The deviation N - N_weyl is smoothed with a Gaussian of width 4/sqrt(A), which damps
    the periodic-orbit oscillations, and rounded at centres one width apart. A missed
    level shifts every later rounded offset by -1; each change of offset is reported.
    """
    width = CERTIFY_WIDTH / math.sqrt(weyl.area)
    lam_max = spectrum.lambda_max
    grid = np.linspace(0.0, lam_max, int(math.ceil(lam_max / width * CERTIFY_GRID)) + 1)
    deviation = spectrum.counting_function(grid) - weyl_count(weyl, grid * grid)

    first = spectrum.first if len(spectrum) else lam_max
    centres = np.arange(first + width, lam_max - width + 1e-12, width)
    smoothed = np.empty(centres.size)
    for j, centre in enumerate(centres):
        w = np.exp(-0.5 * ((grid - centre) / width) ** 2)
        smoothed[j] = float(np.sum(w * deviation) / np.sum(w))
    offsets = np.rint(smoothed).astype(int)

    suspects: list[SuspectInterval] = []
    previous = 0
    for j, offset in enumerate(offsets):
        if offset != previous:
            lo = centres[j - 1] - width if j > 0 else 0.0
            suspects.append(
                SuspectInterval(
                    lambda_lo=float(max(lo, 0.0)),
                    lambda_hi=float(centres[j] + width),
                    offset=int(offset - previous),
                    kind="deficit" if offset < previous else "surplus",
                )
            )
            previous = int(offset)
    for suspect in suspects:
        logger.warning(
            "completeness: %s of %d near [%.6g, %.6g]",
            suspect.kind,
            abs(suspect.offset),
            suspect.lambda_lo,
            suspect.lambda_hi,
        )
    return CompletenessReport(
        ok=not suspects,
        lambda_max=lam_max,
        block_width=width,
        block_offsets=[float(v) for v in smoothed],
        max_abs_block_mean=float(np.max(np.abs(smoothed))) if smoothed.size else 0.0,
        suspects=suspects,
    )
