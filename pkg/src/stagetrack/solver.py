"""Weighted nonlinear least-squares multilateration.

Solves tag position from anchor ranges with a damped Gauss-Newton iteration
(Levenberg-style diagonal scaling) started from either a caller prior or a
closed-form linearization, and reports a covariance from the final weighted
normal matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import DegenerateGeometry, InsufficientAnchors, NoConvergence
from .geometry import Vec3

SolveMode = Literal["planar", "full3d"]

_COND_LIMIT = 1e12

# (anchor position, measured distance, 1-sigma uncertainty)
RangeObs = tuple[Vec3, float, float]


@dataclass(frozen=True)
class SolveOptions:
    mode: SolveMode = "planar"
    fixed_height: float = 0.2
    max_iterations: int = 25
    convergence_step: float = 1e-6
    damping_init: float = 1e-3

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_step > 0:
            raise ValueError("convergence_step must be > 0")


@dataclass(frozen=True)
class PositionFix:
    """Solver output: position with covariance and solve diagnostics."""

    position: Vec3
    covariance: np.ndarray  # 3x3, m^2; planar solves carry a zero z block
    residual_rms: float
    n_anchors: int
    timestamp_ms: int = 0
    mode: SolveMode = "planar"

    def __post_init__(self):
        if self.n_anchors < 3:
            raise ValueError("a position fix needs at least 3 anchors")
        if self.residual_rms < 0:
            raise ValueError("residual_rms must be >= 0")


def residuals(position: Vec3, ranges: Sequence[RangeObs]) -> list[float]:
    """Per-anchor range residuals: measured distance minus geometric distance."""
    if not ranges:
        raise ValueError("ranges must be non-empty")
    return [dist - position.distance_to(anchor) for anchor, dist, _ in ranges]


def _closed_form_init(anchors: np.ndarray, dists: np.ndarray, mode: SolveMode, fixed_height: float) -> np.ndarray:
    """Linearize by subtracting the first range equation from the rest and
    solve the resulting linear system by least squares."""
    a0 = anchors[0]
    d0 = dists[0]
    rows = 2.0 * (anchors[1:] - a0)
    rhs = (
        d0 * d0
        - dists[1:] ** 2
        + np.sum(anchors[1:] ** 2, axis=1)
        - np.sum(a0 * a0)
    )
    if mode == "planar":
        rhs = rhs - rows[:, 2] * fixed_height
        rows = rows[:, :2]
    sol, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    if not np.all(np.isfinite(sol)):
        sol = np.mean(anchors, axis=0)[: rows.shape[1]]
    if mode == "planar":
        return np.array([sol[0], sol[1], fixed_height])
    return sol


def _unpack(p: np.ndarray, mode: SolveMode, fixed_height: float) -> np.ndarray:
    if mode == "planar":
        return np.array([p[0], p[1], fixed_height])
    return p


def _weighted_system(p3: np.ndarray, anchors: np.ndarray, dists: np.ndarray, sigmas: np.ndarray, mode: SolveMode):
    """Weighted residual vector and Jacobian at position p3."""
    diffs = p3 - anchors
    geo = np.linalg.norm(diffs, axis=1)
    geo = np.maximum(geo, 1e-12)
    r = (dists - geo) / sigmas
    jac = -diffs / (geo * sigmas)[:, None]
    if mode == "planar":
        jac = jac[:, :2]
    return r, jac


def multilaterate(
    ranges: Sequence[RangeObs],
    opts: SolveOptions = SolveOptions(),
    prior: Vec3 | None = None,
    timestamp_ms: int = 0,
) -> PositionFix:
    """Solve a position from anchor ranges.

    Planar mode fixes z at ``opts.fixed_height`` and solves (x, y); full3d
    needs at least four anchors. The iteration is damped Gauss-Newton on the
    sigma-weighted residuals: the normal-matrix diagonal is scaled by (1 + λ),
    λ grows tenfold on a failed step and shrinks tenfold on success.

    Raises InsufficientAnchors / DegenerateGeometry, and NoConvergence (with
    the best iterate attached) when the step never drops below the threshold.
    """
    n_min = 3 if opts.mode == "planar" else 4
    if len(ranges) < n_min:
        raise InsufficientAnchors(f"{opts.mode} solve needs >= {n_min} ranges, got {len(ranges)}")
    for _, dist, sigma in ranges:
        if not sigma > 0:
            raise ValueError(f"all sigmas must be > 0, got {sigma}")

    anchors = np.array([a.as_array() for a, _, _ in ranges])
    dists = np.array([d for _, d, _ in ranges], dtype=float)
    sigmas = np.array([s for _, _, s in ranges], dtype=float)
    n_dim = 2 if opts.mode == "planar" else 3

    if prior is not None:
        p3 = prior.as_array()
        if opts.mode == "planar":
            p3[2] = opts.fixed_height
    else:
        p3 = _closed_form_init(anchors, dists, opts.mode, opts.fixed_height)
    p = p3[:n_dim] if opts.mode == "planar" else p3

    lam = opts.damping_init
    converged = False
    r, jac = _weighted_system(_unpack(p, opts.mode, opts.fixed_height), anchors, dists, sigmas, opts.mode)
    cost = float(r @ r)
    for _ in range(opts.max_iterations):
        normal = jac.T @ jac
        grad = jac.T @ r
        step = None
        while lam < 1e10:
            damped = normal + lam * np.diag(np.diag(normal))
            try:
                cond = np.linalg.cond(damped)
            except np.linalg.LinAlgError:
                cond = np.inf
            if not np.isfinite(cond) or cond > _COND_LIMIT:
                if lam <= opts.damping_init:
                    raise DegenerateGeometry("singular normal matrix: anchors do not constrain the solve")
                lam *= 10.0
                continue
            delta = -np.linalg.solve(damped, grad)
            trial = p + delta
            r_trial, jac_trial = _weighted_system(
                _unpack(trial, opts.mode, opts.fixed_height), anchors, dists, sigmas, opts.mode
            )
            cost_trial = float(r_trial @ r_trial)
            if cost_trial <= cost:
                p, r, jac, cost = trial, r_trial, jac_trial, cost_trial
                lam = max(lam * 0.1, 1e-12)
                step = delta
                break
            lam *= 10.0
        if step is None:
            # No downhill step found at any damping: numerically at an optimum.
            converged = True
            break
        if float(np.linalg.norm(step)) < opts.convergence_step:
            converged = True
            break

    p3_final = _unpack(p, opts.mode, opts.fixed_height)
    normal = jac.T @ jac
    try:
        cond = np.linalg.cond(normal)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise DegenerateGeometry("singular normal matrix at solution")
    q = np.linalg.inv(normal)
    n_dof = len(ranges) - n_dim
    scale = max(1.0, cost / n_dof) if n_dof > 0 else 1.0
    cov = np.zeros((3, 3))
    cov[:n_dim, :n_dim] = q * scale
    cov = 0.5 * (cov + cov.T)

    raw = dists - np.maximum(np.linalg.norm(p3_final - anchors, axis=1), 1e-12)
    fix = PositionFix(
        position=Vec3.from_array(p3_final),
        covariance=cov,
        residual_rms=float(np.sqrt(np.mean(raw * raw))),
        n_anchors=len(ranges),
        timestamp_ms=timestamp_ms,
        mode=opts.mode,
    )
    if not converged:
        raise NoConvergence(
            f"step norm never fell below {opts.convergence_step} in {opts.max_iterations} iterations",
            fix=fix,
        )
    return fix
