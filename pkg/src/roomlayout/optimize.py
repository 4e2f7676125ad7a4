"""Refinement of wall planes so their projected intersections meet detected lines.

For every triplet (wall i, line j, wall k) the cost is

    || (n_i/d_i - n_k/d_k)^T K^-1 - t_j^T ||
        + alpha ||n_i - n~_i|| + beta |d_i - d~_i|
        + alpha ||n_k - n~_k|| + beta |d_k - d~_k||

summed over triplets, with each plane a free 4-vector (n, d). ``residual``
picks the first term:

* "literal": the difference of line vectors exactly as written above;
* "normalized": the predicted vector is first scaled to unit normal form like ``t_j``;
* "endpoint" (default): the pixel distances from the detected segment's two end
  points to the predicted line, so angle and position errors share one unit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import OffsetNearZero
from .types import CameraIntrinsics, Line2D, Plane3D

logger = logging.getLogger(__name__)

KINK = 1e-12
LITERAL = "literal"
NORMALIZED = "normalized"
ENDPOINT = "endpoint"
RESIDUALS = (LITERAL, NORMALIZED, ENDPOINT)


@dataclass(frozen=True)
class Triplet:
    i: int
    k: int
    j: int
    t: np.ndarray    # [cos(theta), sin(theta), -b]
    # homogeneous end points of the detected segment (2 x 3), for the endpoint residual
    ends: Optional[np.ndarray] = None

    @classmethod
    def from_line(cls, i: int, k: int, j: int, line: Line2D) -> "Triplet":
        ys = np.array([line.y_min, line.y_max], dtype=float)
        ends = np.stack([line.x_at(ys), ys, np.ones(2)], axis=1)
        return cls(i, k, j, line.homogeneous, ends)


@dataclass(frozen=True)
class RefineConfig:
    alpha: float = 1.0
    beta: float = 0.01
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8
    step_tolerance: float = 1e-12
    residual: str = ENDPOINT

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not (self.gradient_tolerance > 0 and self.step_tolerance > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.residual not in RESIDUALS:
            raise ValueError(f"unknown residual form {self.residual!r}")


@dataclass
class RefineReport:
    initial_objective: float
    final_objective: float
    iterations: int
    evaluations: int
    reason: str
    line_search_failed: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def planes_to_params(planes: Sequence[Plane3D]) -> np.ndarray:
    return np.array([[*p.normal, p.offset] for p in planes], dtype=float).reshape(-1, 4)


def params_to_planes(params: np.ndarray, like: Sequence[Plane3D]) -> list[Plane3D]:
    """Re-unitise normals, rescaling offsets so that n/d is preserved."""
    out = []
    for row, ref in zip(np.asarray(params).reshape(-1, 4), like):
        norm = float(np.linalg.norm(row[:3]))
        out.append(Plane3D(row[:3] / norm, row[3] / norm, ref.category).canonical())
    return out


class _Problem:
    """Vectorised objective over all triplets."""

    def __init__(self, triplets: Sequence[Triplet], initial: np.ndarray,
                 camera: CameraIntrinsics, config: RefineConfig):
        self.config = config
        self.initial = np.asarray(initial, dtype=float).reshape(-1, 4)
        self.K_inv = camera.K_inv
        self.i = np.array([t.i for t in triplets], dtype=int)
        self.k = np.array([t.k for t in triplets], dtype=int)
        self.t = np.array([t.t for t in triplets], dtype=float).reshape(-1, 3)
        if config.residual == ENDPOINT:
            if any(t.ends is None for t in triplets):
                raise ValueError("the endpoint residual needs triplets built with Triplet.from_line")
            self.ends = np.array([t.ends for t in triplets], dtype=float).reshape(-1, 2, 3)

    def line(self, params: np.ndarray) -> np.ndarray:
        """Predicted image line of every triplet, ``(n_i/d_i - n_k/d_k)^T K^-1``."""
        n, d = params[:, :3], params[:, 3]
        if np.any(np.abs(d[np.r_[self.i, self.k]]) < 1e-6):
            raise OffsetNearZero("a triplet plane offset is within 1e-6 of zero")
        dm = n[self.i] / d[self.i, None] - n[self.k] / d[self.k, None]
        return dm @ self.K_inv

    def residual(self, l: np.ndarray):
        """Residual rows and the scale ``rho`` used to unitise ``l`` (None for literal)."""
        mode = self.config.residual
        if mode == LITERAL:
            return l - self.t, None
        rho = np.hypot(l[:, 0], l[:, 1])
        u = l / rho[:, None]
        if mode == NORMALIZED:
            return u - self.t, rho
        return np.einsum("nj,naj->na", u, self.ends), rho

    def align_signs(self, params: np.ndarray) -> None:
        """Flip each target so it agrees in sign with the initial prediction."""
        l = self.line(params)
        u = l / np.hypot(l[:, 0], l[:, 1])[:, None] if self.config.residual != LITERAL else l
        plus = np.linalg.norm(u - self.t, axis=1)
        minus = np.linalg.norm(u + self.t, axis=1)
        self.t = np.where((minus < plus)[:, None], -self.t, self.t)

    def value(self, params: np.ndarray) -> float:
        return self.value_and_grad(params, need_grad=False)[0]

    def value_and_grad(self, params: np.ndarray, need_grad: bool = True):
        params = np.asarray(params, dtype=float).reshape(-1, 4)
        cfg = self.config
        l = self.line(params)
        r, rho = self.residual(l)
        rn = np.linalg.norm(r, axis=1)
        total = float(np.sum(rn))
        regs = []
        for idx in (self.i, self.k):
            dn = params[idx, :3] - self.initial[idx, :3]
            dd = params[idx, 3] - self.initial[idx, 3]
            nn = np.linalg.norm(dn, axis=1)
            total += float(cfg.alpha * np.sum(nn) + cfg.beta * np.sum(np.abs(dd)))
            regs.append((idx, dn, nn, dd))
        if not need_grad:
            return total, None

        grad = np.zeros_like(params)
        g_r = _unit_rows(r, rn)
        if rho is None:
            g_l = g_r
        else:
            g_u = g_r if cfg.residual == NORMALIZED else np.einsum("na,naj->nj", g_r, self.ends)
            pl = l.copy()
            pl[:, 2] = 0.0
            g_l = g_u / rho[:, None] - (np.sum(g_u * l, axis=1) / rho ** 3)[:, None] * pl
        g_dm = g_l @ self.K_inv.T
        n, d = params[:, :3], params[:, 3]
        di, dk = d[self.i], d[self.k]
        np.add.at(grad[:, :3], self.i, g_dm / di[:, None])
        np.add.at(grad[:, 3], self.i, -np.sum(g_dm * n[self.i], axis=1) / di ** 2)
        np.add.at(grad[:, :3], self.k, -g_dm / dk[:, None])
        np.add.at(grad[:, 3], self.k, np.sum(g_dm * n[self.k], axis=1) / dk ** 2)
        for idx, dn, nn, dd in regs:
            np.add.at(grad[:, :3], idx, cfg.alpha * _unit_rows(dn, nn))
            np.add.at(grad[:, 3], idx, cfg.beta * np.sign(dd))
        return total, grad


def _unit_rows(v: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Rows of ``v`` divided by their norms; (numerically) zero rows give the zero subgradient."""
    live = norms > KINK
    safe = np.where(live, norms, 1.0)
    return np.where(live[:, None], v / safe[:, None], 0.0)


def objective(params, triplets: Sequence[Triplet], initial_params, camera: CameraIntrinsics,
              config: RefineConfig = RefineConfig()) -> float:
    """Alignment cost of ``params`` (P x 4 rows of n, d); targets used as given."""
    return _Problem(triplets, initial_params, camera, config).value(params)


def objective_gradient(params, triplets: Sequence[Triplet], initial_params, camera: CameraIntrinsics,
                       config: RefineConfig = RefineConfig()) -> np.ndarray:
    return _Problem(triplets, initial_params, camera, config).value_and_grad(params)[1]


# --------------------------------------------------------------------------- minimiser

@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    reason: str
    line_search_failed: bool


def lbfgs_minimize(fun: Callable, x0, max_iterations: int = 200, gtol: float = 1e-8,
                   step_tol: float = 1e-12, memory: int = 10, c1: float = 1e-4,
                   max_backtracks: int = 60) -> MinimizeResult:
    """Limited-memory BFGS with a backtracking Armijo line search.

    ``fun(x)`` returns ``(value, gradient)``. Accepted iterates never increase
    the objective; on a failed line search the best point so far is returned.
    """
    x = np.array(x0, dtype=float).ravel()
    f, g = fun(x)
    nfev = 1
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    reason = "max_iterations"
    failed = False
    it = 0
    for it in range(1, max_iterations + 1):
        if np.max(np.abs(g), initial=0.0) <= gtol:
            reason, it = "gradient", it - 1
            break
        p = _two_loop(g, s_hist, y_hist)
        slope = float(g @ p)
        if not slope < 0:
            s_hist.clear()
            y_hist.clear()
            p = -g
            slope = float(g @ p)
        step = 1.0 if s_hist else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + step * p
            f_new, g_new = fun(x_new)
            nfev += 1
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if s_hist:
                # retry once from steepest descent before giving up
                s_hist.clear()
                y_hist.clear()
                continue
            failed = True
            reason = "line_search"
            it -= 1
            break
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            s_hist.append(s)
            y_hist.append(yv)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        small_step = np.max(np.abs(s)) <= step_tol * (1.0 + np.max(np.abs(x)))
        x, f, g = x_new, f_new, g_new
        if small_step:
            reason = "step"
            break
    return MinimizeResult(x, float(f), it, nfev, reason, failed)


def _two_loop(g: np.ndarray, s_hist, y_hist) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        alphas.append((rho, a))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def refine_planes(planes: Sequence[Plane3D], triplets: Sequence[Triplet], camera: CameraIntrinsics,
                  config: RefineConfig = RefineConfig()):
    """Minimise the alignment cost starting from ``planes``.

    Returns ``(refined_planes, report)``. Planes outside every triplet come
    back unchanged.
    """
    planes = list(planes)
    initial = planes_to_params(planes)
    if not triplets:
        return planes, RefineReport(0.0, 0.0, 0, 0, "no_triplets")
    problem = _Problem(triplets, initial, camera, config)
    problem.align_signs(initial)
    f0 = problem.value(initial)
    shape = initial.shape

    def fun(x):
        try:
            return _flat(problem.value_and_grad(x.reshape(shape)))
        except OffsetNearZero:
            return math.inf, None       # infeasible trial point; the line search backs off

    result = lbfgs_minimize(fun, initial.ravel(), config.max_iterations, config.gradient_tolerance,
                            config.step_tolerance)
    if result.line_search_failed:
        logger.info("line search failed after %d iterations; keeping best iterate", result.iterations)
    touched = set(problem.i.tolist()) | set(problem.k.tolist())
    refined = params_to_planes(result.x.reshape(shape), planes)
    refined = [refined[p] if p in touched else planes[p] for p in range(len(planes))]
    report = RefineReport(f0, result.fun, result.iterations, result.evaluations, result.reason,
                          result.line_search_failed)
    return refined, report


def _flat(fg):
    return fg[0], fg[1].ravel()


def projected_line_error(plane_i: Plane3D, plane_k: Plane3D, line: Line2D,
                         camera: CameraIntrinsics) -> tuple[float, float]:
    """(|delta b| in pixels, |delta theta| in radians) between a pair's projected line and ``line``."""
    from .geometry import plane_pair_image_line
    from .types import angle_difference

    pred = plane_pair_image_line(plane_i, plane_k, camera)
    dtheta = angle_difference(pred.theta, line.theta)
    if dtheta > math.pi / 2:
        return abs(pred.b + line.b), math.pi - dtheta
    return abs(pred.b - line.b), dtheta
