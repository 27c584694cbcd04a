"""Linear bandit environment with reproducible Gaussian noise.

Noise is drawn from numpy's PCG64 bit generator (ziggurat standard normals).
One standard normal is consumed per round whatever arm is pulled, so the
noise sequence depends only on the seed and the round, not on the actions.
That is what lets the batched simulation kernels share the stream with the
one-pull-at-a-time interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadArmIndex, HorizonExceeded
from .instances import Instance, compute_gaps


def replication_seed(base_seed: int, rep_index: int, policy_index: int = 0) -> np.random.SeedSequence:
    """Seed material for one replication: ``SeedSequence((base_seed, rep, policy))``."""
    return np.random.SeedSequence((int(base_seed), int(rep_index), int(policy_index)))


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def make_streams(seed) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (environment noise, policy randomness) generators for a seed."""
    env_ss, pol_ss = _seed_sequence(seed).spawn(2)
    return np.random.Generator(np.random.PCG64(env_ss)), np.random.Generator(np.random.PCG64(pol_ss))


@dataclass(frozen=True)
class Observation:
    arm_index: int
    reward: float
    instant_regret: float


class LinearBanditEnv:
    """Rewards ``<x, theta> + N(0, 1)`` for ``horizon`` rounds.

    ``gaps`` are exposed for regret accounting; policies only ever receive
    rewards.
    """

    def __init__(self, instance: Instance, horizon: int, seed=0, noiseless: bool = False):
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        self.instance = instance
        self.horizon = int(horizon)
        self.seed = seed
        self.noiseless = noiseless
        self._rng, self.policy_rng = make_streams(seed)
        self.means = instance.means()
        info = compute_gaps(instance)
        self.gaps = info.gaps
        self.optimal_indices = info.optimal_indices
        self.t = 0
        self.pull_counts = np.zeros(instance.k, dtype=np.int64)

    @property
    def optimal_pulls(self) -> int:
        return int(self.pull_counts[list(self.optimal_indices)].sum())

    @property
    def remaining(self) -> int:
        return self.horizon - self.t

    def _check_arm(self, arm: int) -> int:
        if isinstance(arm, (bool, np.bool_)) or not isinstance(arm, (int, np.integer)):
            raise BadArmIndex(f"arm index must be an integer, got {arm!r}")
        if not 0 <= arm < self.instance.k:
            raise BadArmIndex(f"arm index {arm} out of range for {self.instance.k} arms")
        return int(arm)

    def pull(self, arm: int) -> Observation:
        arm = self._check_arm(arm)
        if self.t >= self.horizon:
            raise HorizonExceeded(f"horizon {self.horizon} reached")
        eta = self._rng.standard_normal()
        if self.noiseless:
            eta = 0.0
        self.t += 1
        self.pull_counts[arm] += 1
        return Observation(arm, float(self.means[arm] + eta), float(self.gaps[arm]))

    # batched access for the compiled simulation loops

    def noise_block(self, m: int) -> np.ndarray:
        """The next ``m`` noise values, exactly as ``m`` calls to ``pull`` would see them."""
        if m > self.remaining:
            raise HorizonExceeded(f"requested {m} rounds with {self.remaining} left")
        eta = self._rng.standard_normal(m)
        if self.noiseless:
            eta[:] = 0.0
        return eta

    def commit_block(self, arms: np.ndarray) -> None:
        """Account for rounds played against a prior ``noise_block``."""
        arms = np.asarray(arms)
        if arms.size and (arms.min() < 0 or arms.max() >= self.instance.k):
            raise BadArmIndex("arm index out of range in block")
        if arms.size > self.remaining:
            raise HorizonExceeded(f"block of {arms.size} rounds exceeds the horizon")
        self.t += int(arms.size)
        self.pull_counts += np.bincount(arms, minlength=self.instance.k)


def reset(inst: Instance, n: int, seed) -> LinearBanditEnv:
    return LinearBanditEnv(inst, n, seed)


def noiseless_mode(env: LinearBanditEnv) -> LinearBanditEnv:
    env.noiseless = True
    return env
