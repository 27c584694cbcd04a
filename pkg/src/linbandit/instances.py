"""Bandit instances: action sets, true parameters, gaps and the named catalog."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InstanceError

TIE_TOL = 1e-12
NORM_TOL = 1e-12


@dataclass(frozen=True)
class ActionSet:
    """k arms in R^d stored as a (k, d) array."""

    arms: np.ndarray

    def __post_init__(self):
        arms = np.array(self.arms, dtype=float)
        if arms.ndim != 2 or arms.shape[0] < 1 or arms.shape[1] < 1:
            raise InstanceError(f"arms must be a non-empty (k, d) array, got shape {arms.shape}")
        if not np.all(np.isfinite(arms)):
            raise InstanceError("arms contain non-finite entries")
        arms.setflags(write=False)
        object.__setattr__(self, "arms", arms)

    @property
    def k(self) -> int:
        return self.arms.shape[0]

    @property
    def d(self) -> int:
        return self.arms.shape[1]

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.arms))

    def without(self, index: int) -> "ActionSet":
        return ActionSet(np.delete(self.arms, index, axis=0))


@dataclass(frozen=True)
class Instance:
    actions: ActionSet
    theta: np.ndarray
    name: str | None = None

    def __post_init__(self):
        if not isinstance(self.actions, ActionSet):
            object.__setattr__(self, "actions", ActionSet(self.actions))
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 1 or theta.shape[0] != self.actions.d:
            raise InstanceError(
                f"theta has shape {theta.shape}, expected ({self.actions.d},) to match the arms"
            )
        if not np.all(np.isfinite(theta)):
            raise InstanceError("theta contains non-finite entries")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def arms(self) -> np.ndarray:
        return self.actions.arms

    @property
    def k(self) -> int:
        return self.actions.k

    @property
    def d(self) -> int:
        return self.actions.d

    def means(self) -> np.ndarray:
        return self.arms @ self.theta

    def to_dict(self) -> dict:
        out = {"arms": self.arms.tolist(), "theta": self.theta.tolist()}
        if self.name is not None:
            out["name"] = self.name
        return out


@dataclass(frozen=True)
class GapInfo:
    means: np.ndarray
    best_mean: float
    gaps: np.ndarray
    gap_min: float
    gap_max: float
    optimal_indices: tuple[int, ...]

    @property
    def unique_optimum(self) -> bool:
        return len(self.optimal_indices) == 1

    @property
    def suboptimal(self) -> np.ndarray:
        return self.gaps > 0


def gaps_from_means(means) -> GapInfo:
    means = np.asarray(means, dtype=float)
    best = float(np.max(means))
    gaps = best - means
    optimal = np.flatnonzero(gaps <= TIE_TOL)
    gaps[optimal] = 0.0
    positive = gaps[gaps > 0]
    gap_min = float(positive.min()) if positive.size else 0.0
    return GapInfo(
        means=means,
        best_mean=best,
        gaps=gaps,
        gap_min=gap_min,
        gap_max=float(gaps.max()),
        optimal_indices=tuple(int(i) for i in optimal),
    )


def compute_gaps(inst: Instance) -> GapInfo:
    return gaps_from_means(inst.means())


# --- catalog -----------------------------------------------------------------


def finite_armed(theta) -> Instance:
    theta = np.asarray(theta, dtype=float)
    return Instance(ActionSet(np.eye(theta.shape[0])), theta, name="finite_armed")


def example2(alpha: float, eps: float) -> Instance:
    arms = [[1.0, 0.0], [0.0, 1.0], [1.0 - eps, alpha * eps]]
    return Instance(ActionSet(arms), [1.0, 0.0], name="example2")


def counterexample(alpha: float, eps: float) -> Instance:
    arms = [[1.0, 0.0], [0.0, 1.0], [1.0 - eps, 8.0 * alpha * eps]]
    return Instance(ActionSet(arms), [1.0, 0.0], name="counterexample")


def catalog(name: str, params: dict | None = None) -> Instance:
    """Build a named instance.

    ``finite_armed`` takes ``theta`` (and optionally ``d`` as a consistency
    check); ``example2`` and ``counterexample`` take ``alpha`` and ``eps``.
    ``example2`` also accepts ``drop_x2=True`` to remove the arm (0, 1).
    """
    params = dict(params or {})
    try:
        if name == "finite_armed":
            theta = np.asarray(params["theta"], dtype=float)
            if "d" in params and int(params["d"]) != theta.shape[0]:
                raise InstanceError(f"finite_armed: d={params['d']} but theta has {theta.shape[0]} entries")
            inst = finite_armed(theta)
        elif name in ("example2", "counterexample"):
            alpha, eps = float(params["alpha"]), float(params["eps"])
            if not (eps > 0 and eps < 1):
                raise InstanceError(f"{name}: eps must lie in (0, 1), got {eps}")
            inst = example2(alpha, eps) if name == "example2" else counterexample(alpha, eps)
            if name == "example2" and params.get("drop_x2"):
                inst = Instance(inst.actions.without(1), inst.theta, name="example2_without_x2")
        else:
            raise InstanceError(f"unknown instance name {name!r}")
    except KeyError as exc:
        raise InstanceError(f"{name}: missing parameter {exc.args[0]!r}") from None
    report = validate(inst)
    if report.errors:
        raise InstanceError(f"{name}: " + "; ".join(report.errors))
    return inst


# --- validation --------------------------------------------------------------


@dataclass
class ValidationReport:
    rank: int
    d: int
    k: int
    max_norm: float
    duplicates: list[tuple[int, int]]
    unique_optimum: bool
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors and not self.warnings


def validate(inst: Instance) -> ValidationReport:
    """Check the action-set assumptions without raising.

    Rank deficiency, k < 2 and duplicate arms are errors.  Arms outside the
    unit ball and tied optima are warnings: the catalog's counter-example
    leaves the ball for large alpha*eps and ties are legal data that only
    the allocation solver and the optimal policy refuse.
    """
    arms = inst.arms
    norms = np.linalg.norm(arms, axis=1)
    dups = [
        (i, j)
        for i in range(inst.k)
        for j in range(i + 1, inst.k)
        if np.allclose(arms[i], arms[j], rtol=0.0, atol=TIE_TOL)
    ]
    gaps = compute_gaps(inst)
    rep = ValidationReport(
        rank=inst.actions.rank,
        d=inst.d,
        k=inst.k,
        max_norm=float(norms.max()),
        duplicates=dups,
        unique_optimum=gaps.unique_optimum,
    )
    if rep.rank < inst.d:
        rep.errors.append(f"arms span a rank-{rep.rank} subspace of R^{inst.d}")
    if inst.k < 2:
        rep.errors.append("need at least two arms")
    if dups:
        rep.errors.append("duplicate arms " + ", ".join(f"{i}={j}" for i, j in dups))
    if rep.max_norm > 1.0 + NORM_TOL:
        worst = int(np.argmax(norms))
        rep.warnings.append(f"arm {worst} has norm {rep.max_norm:.6g} > 1")
    if not rep.unique_optimum:
        rep.warnings.append(f"optimal arm is not unique: arms {list(gaps.optimal_indices)} tie")
    return rep


# --- file format -------------------------------------------------------------


def instance_from_dict(data, source: str = "<instance>") -> Instance:
    if not isinstance(data, dict):
        raise InstanceError(f"{source}: expected a JSON object with 'arms' and 'theta'")
    if "catalog" in data:
        return catalog(data["catalog"], data.get("params", {}))
    for key in ("arms", "theta"):
        if key not in data:
            raise InstanceError(f"{source}: missing field {key!r}")
    arms = data["arms"]
    if not isinstance(arms, list) or not arms:
        raise InstanceError(f"{source}: field 'arms' must be a non-empty list of rows")
    width = None
    for r, row in enumerate(arms):
        if not isinstance(row, list) or not row:
            raise InstanceError(f"{source}: arms row {r} must be a non-empty list of numbers")
        for c, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InstanceError(f"{source}: arms row {r} column {c}: {v!r} is not a finite number")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise InstanceError(f"{source}: arms row {r} has {len(row)} entries, row 0 has {width}")
    theta = data["theta"]
    if not isinstance(theta, list):
        raise InstanceError(f"{source}: field 'theta' must be a list of numbers")
    for c, v in enumerate(theta):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise InstanceError(f"{source}: theta entry {c}: {v!r} is not a finite number")
    if len(theta) != width:
        raise InstanceError(f"{source}: theta has {len(theta)} entries but arms have {width} columns")
    name = data.get("name")
    if name is not None and not isinstance(name, str):
        raise InstanceError(f"{source}: field 'name' must be a string")
    return Instance(ActionSet(arms), theta, name=name)


def load_instance(path) -> Instance:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InstanceError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return instance_from_dict(data, str(path))


def dump_instance(inst: Instance, path) -> None:
    Path(path).write_text(json.dumps(inst.to_dict(), indent=2) + "\n")
