"""Barycentric spanners and the regret-optimal allocation problem.

The allocation problem: minimise ``sum_x alpha_x gap_x`` over nonnegative
weights subject to ``||x||^2_{H(alpha)^{-1}} <= gap_x^2 / 2`` for every
suboptimal arm, with ``H(alpha) = sum_x alpha_x x x^T``.  Its value is the
asymptotic lower-bound constant c(A, theta).  The optimal arm costs nothing,
so its weight is pushed to a large cap instead of infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleNumerics, NonUniqueOptimum, RankDeficient, Singular
from .instances import TIE_TOL, ActionSet, GapInfo, Instance, compute_gaps, gaps_from_means
from .linalg import psd_solve

FEAS_TOL = 1e-6
VALUE_RTOL = 1e-3
CAP_FACTOR = 1e6
CAP_CHECK_FACTOR = 1e7
QUOTA_RTOL = 1e-6
_DET_RTOL = 1e-12


# --- barycentric spanner -----------------------------------------------------


@dataclass(frozen=True)
class Spanner:
    indices: tuple[int, ...]
    C: float = 1.0


def _abs_det(arms: np.ndarray, idx) -> float:
    return abs(float(np.linalg.det(arms[list(idx)])))


def barycentric_spanner(actions: ActionSet, C: float = 1.0) -> Spanner:
    """C-approximate barycentric spanner by determinant swapping.

    Start from a greedy basis (repeatedly take the arm with the largest
    component orthogonal to the arms already chosen), then replace a basis
    element by any arm that multiplies |det| by more than C, until no swap
    applies.  Every arm then has coordinates in [-C, C] w.r.t. the basis.
    """
    if C < 1:
        raise ValueError(f"C must be >= 1, got {C}")
    arms = actions.arms
    k, d = arms.shape
    chosen: list[int] = []
    residual = arms.copy()
    scale = max(1.0, float(np.abs(arms).max()))
    for _ in range(d):
        norms = np.linalg.norm(residual, axis=1)
        norms[chosen] = -1.0
        j = int(np.argmax(norms))
        if norms[j] <= 1e-10 * scale:
            raise RankDeficient(f"arms span only {len(chosen)} of {d} dimensions")
        chosen.append(j)
        u = residual[j] / norms[j]
        residual = residual - np.outer(residual @ u, u)

    basis = list(chosen)
    det = _abs_det(arms, basis)
    improved = True
    while improved:
        improved = False
        for i in range(d):
            for j in range(k):
                if j in basis:
                    continue
                trial = basis.copy()
                trial[i] = j
                tdet = _abs_det(arms, trial)
                if tdet > C * det * (1.0 + _DET_RTOL):
                    basis, det, improved = trial, tdet, True
    return Spanner(tuple(basis), float(C))


def spanner_coefficients(x, sp: Spanner, actions: ActionSet) -> np.ndarray:
    """Coordinates of x in the spanner basis (x = sum_i c_i * arms[indices[i]])."""
    B = actions.arms[list(sp.indices)]
    try:
        return np.linalg.solve(B.T, np.asarray(x, dtype=float))
    except np.linalg.LinAlgError:
        raise RankDeficient("spanner arms are linearly dependent") from None


# --- allocation --------------------------------------------------------------


@dataclass(frozen=True)
class Allocation:
    weights: np.ndarray
    value: float
    optimal_arm_unbounded: bool
    optimal_index: int
    cap: float
    residuals: np.ndarray
    gaps: np.ndarray

    @property
    def suboptimal_weights(self) -> np.ndarray:
        w = self.weights.copy()
        w[self.optimal_index] = 0.0
        return w


def _design_inverse(X: np.ndarray, a: np.ndarray, xstar: np.ndarray, cap: float) -> np.ndarray:
    """Inverse of ``X^T diag(a) X + cap * xstar xstar^T``.

    Worked out in a rotated basis whose first axis is xstar, using the block
    inverse, so a huge cap does not wreck the orthogonal block.  ``cap=inf``
    gives the limit.
    """
    d = X.shape[1]
    norm = float(np.linalg.norm(xstar))
    # orthonormal basis with first column along xstar
    Q, _ = np.linalg.qr(np.column_stack([xstar / norm, np.eye(d)]))
    if Q[:, 0] @ xstar < 0:
        Q[:, 0] = -Q[:, 0]
    Y = X @ Q
    Hr = (Y * a[:, None]).T @ Y
    if d == 1:
        top = Hr[0, 0] + cap * norm**2
        return np.array([[0.0 if math.isinf(top) else 1.0 / top]])
    c = Hr[1:, 0]
    B = Hr[1:, 1:]
    Mr = np.zeros((d, d))
    if math.isinf(cap):
        Mr[1:, 1:] = np.linalg.inv(B)
    else:
        top = Hr[0, 0] + cap * norm**2
        S = B - np.outer(c, c) / top
        Sinv = np.linalg.inv(S)
        v = Sinv @ c / top
        Mr[0, 0] = 1.0 / top + c @ v / top
        Mr[0, 1:] = -v
        Mr[1:, 0] = -v
        Mr[1:, 1:] = Sinv
    M = Q @ Mr @ Q.T
    return 0.5 * (M + M.T)


class _Problem:
    """The allocation program restricted to the suboptimal arms."""

    def __init__(self, arms, gaps, opt, cap):
        self.sub = np.flatnonzero(np.arange(len(gaps)) != opt)
        self.X = arms[self.sub]
        self.D = gaps[self.sub]
        self.b = self.D**2 / 2.0
        self.xstar = arms[opt]
        self.cap = cap

    def cross(self, a):
        """A[x, y] = x^T H(a)^{-1} y over suboptimal arms."""
        M = _design_inverse(self.X, a, self.xstar, self.cap)
        return self.X @ M @ self.X.T

    def slack(self, a):
        return self.b - np.diag(self.cross(a))

    def barrier(self, a, t):
        if np.any(a <= 0):
            return math.inf
        s = self.slack(a)
        if np.any(s <= 0):
            return math.inf
        return t * float(self.D @ a) - float(np.log(s).sum()) - float(np.log(a).sum())

    def derivatives(self, a, t):
        A = self.cross(a)
        s = self.b - np.diag(A)
        Jg = -(A**2)  # Jg[x, y] = d g_x / d a_y
        grad = t * self.D + Jg.T @ (1.0 / s) - 1.0 / a
        hess = np.diag(1.0 / a**2)
        for x in range(len(s)):
            Hx = 2.0 * np.outer(A[x], A[x]) * A
            hess += Hx / s[x] + np.outer(Jg[x], Jg[x]) / s[x] ** 2
        return grad, 0.5 * (hess + hess.T)


def _newton_center(prob: _Problem, a, t, max_iter=200):
    for _ in range(max_iter):
        g, Hs = prob.derivatives(a, t)
        scale = 1.0 / np.sqrt(np.diag(Hs))
        Hn = Hs * scale[:, None] * scale[None, :]
        try:
            step = -scale * np.linalg.solve(Hn, g * scale)
        except np.linalg.LinAlgError:
            step = -scale * np.linalg.lstsq(Hn, g * scale, rcond=None)[0]
        dec = -float(g @ step)
        if dec / 2.0 <= 1e-9:
            break
        f0 = prob.barrier(a, t)
        s = 1.0
        while s > 1e-12:
            cand = a + s * step
            fc = prob.barrier(cand, t)
            if fc <= f0 - 0.25 * s * dec:
                break
            s *= 0.5
        else:
            # rounding noise dominates the decrement; the point is centred
            break
        a = cand
    return a


def _spanner_start(actions: ActionSet, gaps: np.ndarray, opt: int) -> np.ndarray:
    """Feasible weights: 4 C^2 d^2 / gap_min^2 on the suboptimal spanner arms."""
    sp = barycentric_spanner(actions)
    d = actions.d
    pos = gaps[gaps > 0]
    w = 4.0 * sp.C**2 * d**2 / pos.min() ** 2
    a = np.full(actions.k, w * 1e-3)
    a[list(sp.indices)] = w
    a[opt] = 0.0
    return a


def _solve_with_cap(actions, gaps, opt, cap_factor, a_full, gap_rtol):
    sub = np.flatnonzero(np.arange(actions.k) != opt)
    a = a_full[sub].astype(float)
    # the optimal arm leaks ~1/cap into every constraint, so the cap also has
    # to dominate 2/gap_min^2 or small-gap constraints are distorted
    scale = max(1.0, 2.0 / gaps[sub].min() ** 2)
    cap = cap_factor * (1.0 + a.sum()) * scale if math.isfinite(cap_factor) else math.inf
    for _ in range(2):
        prob = _Problem(actions.arms, gaps, opt, cap)
        while np.any(prob.slack(a) <= 0):
            a = 2.0 * a
        # shrink towards the boundary: constraints scale roughly like 1/a
        for _ in range(60):
            ratio = float(np.max((prob.b - prob.slack(a)) / prob.b))
            if ratio > 0.5:
                break
            trial = a * max(ratio / 0.5, 1e-3)
            if np.any(prob.slack(trial) <= 0):
                break
            a = trial
        m = 2 * len(sub)
        t = m / max(float(prob.D @ a), 1e-300)
        while True:
            a = _newton_center(prob, a, t)
            if m / t <= gap_rtol * float(prob.D @ a):
                break
            t *= 10.0
        if not math.isfinite(cap_factor):
            break
        new_cap = cap_factor * (1.0 + a.sum()) * scale
        if abs(new_cap - cap) <= 1e-3 * cap:
            break
        cap = new_cap
    out = np.zeros(actions.k)
    out[sub] = a
    return out, cap, prob


def solve_allocation(
    actions: ActionSet,
    gaps: GapInfo,
    tol: float = FEAS_TOL,
    *,
    cap_factor: float = CAP_FACTOR,
    check_factor: float | None = CAP_CHECK_FACTOR,
) -> Allocation:
    """Minimum-regret weights subject to the identifiability constraints.

    Log-barrier interior point with exact Newton steps, warm-started from a
    spanner allocation.  The optimal arm's weight is ``cap_factor * (1 +
    sum of suboptimal weights)``; when ``check_factor`` is given the problem
    is re-solved at that cap and the two values must agree to 1e-3.
    ``cap_factor=inf`` solves the exact limit problem.
    """
    if not gaps.unique_optimum:
        raise NonUniqueOptimum(f"arms {list(gaps.optimal_indices)} are all optimal")
    g = np.asarray(gaps.gaps, dtype=float)
    opt = gaps.optimal_indices[0]
    start = _spanner_start(actions, g, opt)
    a, cap, prob = _solve_with_cap(actions, g, opt, cap_factor, start, 1e-7)
    value = float(g @ a)
    if check_factor is not None and math.isfinite(cap_factor):
        a2, _, _ = _solve_with_cap(actions, g, opt, check_factor, a, 1e-7)
        value2 = float(g @ a2)
        if abs(value2 - value) > VALUE_RTOL * max(value, 1e-300):
            raise InfeasibleNumerics(
                f"allocation value moved from {value:.6g} to {value2:.6g} when the optimal-arm cap grew"
            )
    residuals = np.zeros(actions.k)
    residuals[prob.sub] = -prob.slack(a[prob.sub])
    if residuals.max() > tol:
        raise InfeasibleNumerics(f"constraint residual {residuals.max():.3g} exceeds {tol:g}")
    weights = a.copy()
    weights[opt] = cap
    return Allocation(
        weights=weights,
        value=value,
        optimal_arm_unbounded=True,
        optimal_index=opt,
        cap=cap,
        residuals=residuals,
        gaps=g,
    )


def lower_bound_constant(inst: Instance) -> float:
    return solve_allocation(inst.actions, compute_gaps(inst)).value


def constraint_gradient(alpha, actions: ActionSet, x) -> np.ndarray:
    """Gradient of ``||x||^2_{H(alpha)^{-1}}`` w.r.t. alpha: ``-(x^T H^{-1} y)^2``."""
    arms = actions.arms
    alpha = np.asarray(alpha, dtype=float)
    H = (arms * alpha[:, None]).T @ arms
    v = psd_solve(H, np.asarray(x, dtype=float))
    return -((arms @ v) ** 2)


def constraint_value(alpha, actions: ActionSet, x) -> float:
    arms = actions.arms
    H = (arms * np.asarray(alpha, dtype=float)[:, None]).T @ arms
    x = np.asarray(x, dtype=float)
    return float(x @ psd_solve(H, x))


# --- pull plans --------------------------------------------------------------


@dataclass(frozen=True)
class PullPlan:
    counts: np.ndarray  # inf marks the unbounded (empirically best) arm
    n: int
    f_n: float
    best_index: int
    allocation: Allocation

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.counts)

    def quotas(self) -> np.ndarray:
        """Integer quotas: finite counts rounded up once, -1 for the unbounded arm.

        Counts within the solver's relative accuracy of an integer round to it.
        """
        q = np.full(self.counts.shape, -1, dtype=np.int64)
        fin = self.finite
        q[fin] = np.ceil(self.counts[fin] * (1.0 - QUOTA_RTOL)).astype(np.int64)
        return q


def pull_plan(gaps_hat, actions: ActionSet, n: int, f_n: float) -> PullPlan:
    """Pull counts solving the finite-horizon version of the allocation problem.

    The constraint ``||x||^2_{H_T^+} <= gap^2 / f_n`` is the allocation
    constraint rescaled, so ``T = (f_n / 2) * alpha*`` for the suboptimal arms
    and the zero-gap arm is unbounded.
    """
    if n < 2:
        raise ValueError("pull_plan needs n >= 2")
    gaps_hat = np.asarray(gaps_hat, dtype=float)
    zero = np.flatnonzero(gaps_hat <= TIE_TOL)
    if zero.size != 1:
        raise NonUniqueOptimum(f"estimated gaps have {zero.size} zero entries, need exactly one")
    if np.any(gaps_hat < -TIE_TOL):
        raise ValueError("estimated gaps must be nonnegative")
    info = gaps_from_means(-np.maximum(gaps_hat, 0.0))
    alloc = solve_allocation(actions, info)
    counts = 0.5 * f_n * alloc.suboptimal_weights
    counts[alloc.optimal_index] = math.inf
    return PullPlan(counts=counts, n=int(n), f_n=float(f_n), best_index=alloc.optimal_index, allocation=alloc)


def truncated_plan(plan: PullPlan, m: int) -> np.ndarray:
    """Entrywise ``min(m * f_n, T)``; unbounded entries become ``m * f_n``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return np.minimum(plan.counts, m * plan.f_n)


def naive_bound(gaps: GapInfo, d: int, f_n: float) -> float:
    """Upper bound ``2 d^3 f_n gap_max / gap_min^3`` on total suboptimal plan counts."""
    if gaps.gap_min <= 0:
        raise ValueError("naive bound needs a positive minimum gap")
    return 2.0 * d**3 * f_n * gaps.gap_max / gaps.gap_min**3
