"""Bandit policies behind a common choose/update interface.

Four policies: structure-free UCB, ellipsoid optimism, linear Thompson
sampling and the three-phase (warm-up / success / recovery) optimal policy.
Policies see the arm vectors, the horizon and rewards; never theta.

``policy_run`` plays a whole horizon.  By default it uses the compiled
chunk loops in :mod:`linbandit.kernels`; ``stepwise=True`` drives the
per-round ``choose``/``update`` objects instead, which is slow but is the
reference the fast path is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .conc import DEFAULT_C_UNIV, Thresholds
from .design import PullPlan, Spanner, barycentric_spanner, pull_plan
from .env import LinearBanditEnv
from .errors import ConfigError
from .instances import ActionSet

POLICY_NAMES = ("ucb", "oful", "lints", "optimal")
CHUNK = 1 << 18


@dataclass(frozen=True)
class PolicyConfig:
    name: str
    alpha_conf: float = 1.0
    c_univ: float = DEFAULT_C_UNIV
    label: str | None = None

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {self.name!r}; expected one of {', '.join(POLICY_NAMES)}")
        if not (self.alpha_conf >= 0 and math.isfinite(self.alpha_conf)):
            raise ConfigError(f"alpha_conf must be a nonnegative number, got {self.alpha_conf}")
        if not (self.c_univ > 0):
            raise ConfigError(f"c_univ must be positive, got {self.c_univ}")

    @property
    def display(self) -> str:
        return self.label or self.name

    @classmethod
    def from_dict(cls, data, where: str = "policy") -> "PolicyConfig":
        if isinstance(data, str):
            data = {"name": data}
        if not isinstance(data, dict) or "name" not in data:
            raise ConfigError(f"{where}: expected an object with a 'name' field")
        unknown = set(data) - {"name", "alpha_conf", "c_univ", "label"}
        if unknown:
            raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
        try:
            return cls(
                name=data["name"],
                alpha_conf=float(data.get("alpha_conf", 1.0)),
                c_univ=float(data.get("c_univ", DEFAULT_C_UNIV)),
                label=data.get("label"),
            )
        except (TypeError, ValueError, ConfigError) as exc:
            raise ConfigError(f"{where}: {exc}") from None


# OptimisticConfig in the design notes is just the alpha_conf knob.
OptimisticConfig = PolicyConfig


# --- least-squares estimator ---------------------------------------------------


class EstimatorState:
    """Running Gram matrix, least-squares estimate and per-arm statistics."""

    def __init__(self, arms):
        self.arms = np.ascontiguousarray(arms, dtype=float)
        k, d = self.arms.shape
        self.G = np.zeros((d, d))
        self.s = np.zeros(d)
        self.pulls = np.zeros(k, dtype=np.int64)
        self.sums = np.zeros(k)
        self.t = 0
        self.ready = False
        self.theta_hat = np.full(d, np.nan)
        self.mu_hat = np.full(k, np.nan)
        self.q = np.full(k, np.nan)  # ||x||^2_{G^{-1}}
        self._L = np.zeros((d, d))

    @property
    def gaps_hat(self) -> np.ndarray:
        return self.mu_hat.max() - self.mu_hat

    @property
    def sample_means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.pulls > 0, self.sums / np.maximum(self.pulls, 1), np.nan)

    def update(self, arm: int, reward: float) -> "EstimatorState":
        x = self.arms[arm]
        self.G += np.outer(x, x)
        self.s += x * reward
        self.pulls[arm] += 1
        self.sums[arm] += reward
        self.t += 1
        if not self.ready:
            self.ready = bool(kernels.cholesky_into(self.G, self._L))
        if self.ready:
            work = np.zeros(self.arms.shape[1])
            kernels.estimate(self.G, self.s, self.arms, self._L, self.theta_hat, self.mu_hat, self.q, work)
        return self

    def cholesky(self) -> np.ndarray:
        return self._L


def estimator_update(st: EstimatorState, arm: int, reward: float) -> EstimatorState:
    return st.update(arm, reward)


# --- per-round choice rules ----------------------------------------------------


def ucb_choose(st: EstimatorState, t: int, k: int | None = None) -> int:
    """Finite-armed UCB ignoring the arm geometry; ``t`` is the 1-based round."""
    return int(kernels.ucb_pick(t, st.pulls, st.sums))


def _warm_arm(st: EstimatorState) -> int:
    return st.t % st.arms.shape[0]


def optimism_choose(st: EstimatorState, cfg: PolicyConfig, n: int) -> int:
    """argmax_x <x, theta_hat> + sqrt(alpha log n) ||x||_{G^{-1}}.

    This is the closed form of maximising <x, theta~> over the ellipsoid
    ``||theta~ - theta_hat||^2_G <= alpha log n``.
    """
    if not st.ready:
        return _warm_arm(st)
    sb = math.sqrt(cfg.alpha_conf * math.log(n))
    best, best_val = 0, -math.inf
    for x in range(len(st.mu_hat)):
        v = st.mu_hat[x] + sb * math.sqrt(st.q[x])
        if v > best_val:
            best, best_val = x, v
    return best


def thompson_sample(st: EstimatorState, alpha_conf: float, z: np.ndarray) -> np.ndarray:
    """theta_hat + sqrt(alpha) L^{-T} z, where G = L L^T; covariance alpha G^{-1}."""
    w = np.zeros_like(z)
    kernels.backward_solve(st.cholesky(), np.ascontiguousarray(z, dtype=float), w)
    return st.theta_hat + math.sqrt(alpha_conf) * w


def thompson_choose(st: EstimatorState, cfg: PolicyConfig, rng: np.random.Generator) -> int:
    # d normals are drawn every round, warm-start included, so the policy's
    # random stream stays aligned with the round index
    z = rng.standard_normal(st.arms.shape[1])
    if not st.ready:
        return _warm_arm(st)
    w = np.zeros_like(z)
    kernels.backward_solve(st.cholesky(), z, w)
    sb = math.sqrt(cfg.alpha_conf)
    # same summation order as the compiled loop so both paths agree bitwise
    best, best_val = 0, -math.inf
    for x, arm in enumerate(st.arms):
        v = 0.0
        for j in range(len(z)):
            v += arm[j] * (st.theta_hat[j] + sb * w[j])
        if v > best_val:
            best, best_val = x, v
    return best


# --- three-phase optimal policy ------------------------------------------------

WARMUP, SUCCESS, RECOVERY = "warmup", "success", "recovery"


def warmup_pulls_per_arm(n: int) -> int:
    return math.ceil(math.sqrt(math.log(n)))


@dataclass
class OptimalAlgState:
    arms: np.ndarray
    n: int
    c_univ: float = DEFAULT_C_UNIV
    phase: str = WARMUP
    spanner: Spanner | None = None
    warmup_count_per_arm: int = 0
    warm_rounds: int = 0
    eps_n: float = math.nan
    mu_snapshot: np.ndarray | None = None
    gaps_snapshot: np.ndarray | None = None
    plan: PullPlan | None = None
    quotas: np.ndarray | None = None
    ucb_counts: np.ndarray | None = None
    ucb_sums: np.ndarray | None = None
    phase_log: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self):
        self.arms = np.asarray(self.arms, dtype=float)
        if self.n < 3:
            raise ConfigError("the optimal policy needs n >= 3")
        self.spanner = barycentric_spanner(ActionSet(self.arms))
        self.warmup_count_per_arm = warmup_pulls_per_arm(self.n)
        self.phase_log.append((WARMUP, 1))

    @property
    def warmup_length(self) -> int:
        return self.arms.shape[1] * self.warmup_count_per_arm

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.n, self.arms.shape[1], self.c_univ)

    def warmup_arm(self) -> int:
        return self.spanner.indices[self.warm_rounds % len(self.spanner.indices)]

    def begin_success(self, st: EstimatorState) -> None:
        """Freeze the warm-up estimates and compute the pull plan."""
        th = self.thresholds
        self.eps_n = float(np.sqrt(st.q.max() * th.g_n))
        self.mu_snapshot = st.mu_hat.copy()
        self.gaps_snapshot = st.gaps_hat
        self.plan = pull_plan(self.gaps_snapshot, ActionSet(self.arms), self.n, th.f_n)
        self.quotas = self.plan.quotas()
        self.phase = SUCCESS
        self.phase_log.append((SUCCESS, st.t + 1))

    def begin_recovery(self, t: int) -> None:
        k = self.arms.shape[0]
        self.ucb_counts = np.zeros(k, dtype=np.int64)
        self.ucb_sums = np.zeros(k)
        self.phase = RECOVERY
        self.phase_log.append((RECOVERY, t))

    def anomaly(self, st: EstimatorState) -> bool:
        return float(np.max(np.abs(st.mu_hat - self.mu_snapshot))) > 2.0 * self.eps_n

    def quota_arm(self, st: EstimatorState) -> int:
        best = self.plan.best_index
        arm, deficit = best, 0
        for x in range(len(self.quotas)):
            if x != best and self.quotas[x] - st.pulls[x] > deficit:
                arm, deficit = x, self.quotas[x] - st.pulls[x]
        return arm


def optimal_alg_choose(st: EstimatorState, oa: OptimalAlgState, n: int) -> int:
    t = st.t + 1
    if oa.phase == WARMUP:
        if oa.warm_rounds < oa.warmup_length:
            return oa.warmup_arm()
        oa.begin_success(st)
    if oa.phase == SUCCESS:
        if not oa.anomaly(st):
            return oa.quota_arm(st)
        oa.begin_recovery(t)
    return int(kernels.ucb_pick(t, oa.ucb_counts, oa.ucb_sums))


# --- stepwise policy objects ---------------------------------------------------


class Policy:
    def __init__(self, cfg: PolicyConfig, arms, n: int, rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.n = int(n)
        self.rng = rng
        self.st = EstimatorState(arms)

    def choose(self) -> int:
        raise NotImplementedError

    def update(self, arm: int, reward: float) -> None:
        self.st.update(arm, reward)


class UCBPolicy(Policy):
    def choose(self):
        return ucb_choose(self.st, self.st.t + 1)


class OptimismPolicy(Policy):
    def choose(self):
        return optimism_choose(self.st, self.cfg, self.n)


class ThompsonPolicy(Policy):
    def choose(self):
        return thompson_choose(self.st, self.cfg, self.rng)


class OptimalPolicy(Policy):
    def __init__(self, cfg, arms, n, rng=None):
        super().__init__(cfg, arms, n, rng)
        self.oa = OptimalAlgState(self.st.arms, self.n, cfg.c_univ)

    def choose(self):
        return optimal_alg_choose(self.st, self.oa, self.n)

    def update(self, arm, reward):
        if self.oa.phase == WARMUP:
            self.oa.warm_rounds += 1
        elif self.oa.phase == RECOVERY:
            self.oa.ucb_counts[arm] += 1
            self.oa.ucb_sums[arm] += reward
        super().update(arm, reward)


_POLICY_CLASSES = {"ucb": UCBPolicy, "oful": OptimismPolicy, "lints": ThompsonPolicy, "optimal": OptimalPolicy}


def make_policy(cfg: PolicyConfig, arms, n: int, rng=None) -> Policy:
    return _POLICY_CLASSES[cfg.name](cfg, arms, n, rng)


# --- running a policy ----------------------------------------------------------


def checkpoint_grid(n: int) -> np.ndarray:
    """Rounds 1, 2, 4, ... below n, plus n itself."""
    if n < 1:
        return np.zeros(0, dtype=np.int64)
    pts = [1 << j for j in range(n.bit_length()) if (1 << j) <= n]
    if pts[-1] != n:
        pts.append(n)
    return np.array(pts, dtype=np.int64)


@dataclass
class RegretTrace:
    policy: str
    n: int
    rounds: np.ndarray  # 1-based round numbers recorded
    arms: np.ndarray
    instant_regret: np.ndarray
    cum_regret: np.ndarray
    final_regret: float
    pull_counts: np.ndarray
    gram: np.ndarray
    rep_id: int = 0
    phase_log: list[tuple[str, int]] = field(default_factory=list)

    def accounted_regret(self, gaps) -> float:
        """Regret recomputed from pull counts: sum_x T_x(n) gap_x."""
        return float(np.asarray(gaps) @ self.pull_counts)


class _Recorder:
    """Turns per-chunk arm blocks into a checkpointed (or full) regret trace."""

    def __init__(self, gaps, n, full):
        self.gaps = np.asarray(gaps, dtype=float)
        self.full = full
        self.grid = np.arange(1, n + 1) if full else checkpoint_grid(n)
        self.rounds, self.arms, self.inst, self.cum = [], [], [], []
        self.t = 0
        self.total = 0.0

    def add(self, arms):
        arms = np.asarray(arms, dtype=np.int64)
        if arms.size == 0:
            return
        inst = self.gaps[arms]
        cum = np.cumsum(inst)
        cum += self.total
        lo, hi = self.t, self.t + arms.size
        sel = self.grid[(self.grid > lo) & (self.grid <= hi)] - lo - 1
        self.rounds.append(sel + lo + 1)
        self.arms.append(arms[sel])
        self.inst.append(inst[sel])
        self.cum.append(cum[sel])
        self.total = float(cum[-1])
        self.t = hi

    def trace(self, name, n, counts, gram, phase_log=()):
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
        return RegretTrace(
            policy=name,
            n=n,
            rounds=cat(self.rounds, np.int64),
            arms=cat(self.arms, np.int64),
            instant_regret=cat(self.inst, float),
            cum_regret=cat(self.cum, float),
            final_regret=self.total,
            pull_counts=np.asarray(counts, dtype=np.int64).copy(),
            gram=np.asarray(gram, dtype=float).copy(),
            phase_log=list(phase_log),
        )


def _gram(arms, counts):
    return (arms * np.asarray(counts, dtype=float)[:, None]).T @ arms


def _run_stepwise(cfg, env: LinearBanditEnv, full: bool) -> RegretTrace:
    arms = env.instance.arms
    pol = make_policy(cfg, arms, env.horizon, env.policy_rng)
    rec = _Recorder(env.gaps, env.horizon, full)
    chosen = np.empty(env.remaining, dtype=np.int64)
    for i in range(chosen.size):
        a = pol.choose()
        obs = env.pull(a)
        pol.update(a, obs.reward)
        chosen[i] = a
    rec.add(chosen)
    log = pol.oa.phase_log if isinstance(pol, OptimalPolicy) else []
    return rec.trace(cfg.display, env.horizon, env.pull_counts, _gram(arms, env.pull_counts), log)


def _blocks(env: LinearBanditEnv, chunk: int):
    while env.remaining > 0:
        m = min(chunk, env.remaining)
        yield env.noise_block(m)


def _run_fast(cfg, env: LinearBanditEnv, full: bool, chunk: int) -> RegretTrace:
    inst = env.instance
    arms = np.ascontiguousarray(inst.arms)
    means = np.ascontiguousarray(env.means)
    k, d = arms.shape
    n = env.horizon
    rec = _Recorder(env.gaps, n, full)
    log = []

    if cfg.name == "ucb":
        counts = np.zeros(k, dtype=np.int64)
        sums = np.zeros(k)
        for noise in _blocks(env, chunk):
            out = np.empty(noise.size, dtype=np.int64)
            kernels.ucb_chunk(env.t, noise, means, counts, sums, out)
            env.commit_block(out)
            rec.add(out)

    elif cfg.name in ("oful", "lints"):
        kind = 0 if cfg.name == "oful" else 1
        beta = cfg.alpha_conf * math.log(n) if kind == 0 else cfg.alpha_conf
        G = np.zeros((d, d))
        b = np.zeros(d)
        counts = np.zeros(k, dtype=np.int64)
        state = np.zeros(2, dtype=np.int64)
        for noise in _blocks(env, chunk):
            z = env.policy_rng.standard_normal((noise.size, d)) if kind == 1 else np.zeros((noise.size, d))
            out = np.empty(noise.size, dtype=np.int64)
            kernels.linear_chunk(kind, noise, z, arms, means, beta, G, b, counts, state, out)
            env.commit_block(out)
            rec.add(out)

    else:
        oa = OptimalAlgState(arms, n, cfg.c_univ)
        st = EstimatorState(arms)
        w = min(oa.warmup_length, n)
        if w:
            noise = env.noise_block(w)
            out = np.empty(w, dtype=np.int64)
            for i in range(w):
                out[i] = oa.warmup_arm()
                st.update(out[i], means[out[i]] + noise[i])
                oa.warm_rounds += 1
            env.commit_block(out)
            rec.add(out)
        if env.remaining > 0:
            oa.begin_success(st)
            quotas = oa.quotas.copy()
            quotas[oa.plan.best_index] = 0
            G, b = st.G.copy(), st.s.copy()
            counts = st.pulls.copy()
            for noise in _blocks(env, chunk):
                out = np.empty(noise.size, dtype=np.int64)
                done = 0
                if oa.phase == SUCCESS:
                    done = kernels.success_chunk(
                        noise, arms, means, G, b, counts, quotas, oa.plan.best_index,
                        oa.mu_snapshot, 2.0 * oa.eps_n, out,
                    )
                    if done < noise.size:
                        oa.begin_recovery(env.t + done + 1)
                if done < noise.size:
                    kernels.ucb_chunk(env.t + done, noise[done:], means, oa.ucb_counts, oa.ucb_sums, out[done:])
                env.commit_block(out)
                rec.add(out)
        log = oa.phase_log

    return rec.trace(cfg.display, n, env.pull_counts, _gram(arms, env.pull_counts), log)


def policy_run(cfg: PolicyConfig, env: LinearBanditEnv, *, full_trace: bool = False,
               stepwise: bool = False, chunk: int = CHUNK) -> RegretTrace:
    """Play the remaining horizon of ``env`` with the configured policy."""
    if isinstance(cfg, (dict, str)):
        cfg = PolicyConfig.from_dict(cfg)
    if stepwise:
        return _run_stepwise(cfg, env, full_trace)
    return _run_fast(cfg, env, full_trace, chunk)
