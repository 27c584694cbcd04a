"""Self-normalised confidence thresholds and their Monte Carlo check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import LinearBanditEnv, replication_seed
from .errors import ConfigError, Singular
from .instances import Instance
from .linalg import gram_from_counts, is_invertible

DEFAULT_C_UNIV = 1.0


def f_delta(n: int, delta: float, d: int, c_univ: float = DEFAULT_C_UNIV) -> float:
    """Confidence threshold ``2(1 + 1/log n) log(1/delta) + c d log(d log n)``.

    Defined for n >= 3 (so that log n > 1) and delta in [1/n, 1).
    """
    if n < 3:
        raise ConfigError(f"threshold needs n >= 3, got n={n}")
    if not (1.0 / n - 1e-15 <= delta < 1.0):
        raise ConfigError(f"delta={delta} outside [1/n, 1) for n={n}")
    if d < 1:
        raise ConfigError(f"d must be >= 1, got {d}")
    if c_univ <= 0:
        raise ConfigError(f"c_univ must be positive, got {c_univ}")
    log_n = math.log(n)
    return 2.0 * (1.0 + 1.0 / log_n) * math.log(1.0 / delta) + c_univ * d * math.log(d * log_n)


@dataclass(frozen=True)
class Thresholds:
    n: int
    d: int
    c_univ: float = DEFAULT_C_UNIV

    def f_delta(self, delta: float) -> float:
        return f_delta(self.n, delta, self.d, self.c_univ)

    @property
    def f_n(self) -> float:
        return self.f_delta(1.0 / self.n)

    @property
    def g_n(self) -> float:
        return self.f_delta(1.0 / math.log(self.n))


def _schedule_indices(inst: Instance, schedule, n: int) -> np.ndarray:
    if isinstance(schedule, str):
        if schedule == "spanner":
            from .design import barycentric_spanner

            cycle = np.asarray(barycentric_spanner(inst.actions).indices)
        elif schedule == "all":
            cycle = np.arange(inst.k)
        else:
            raise ConfigError(f"unknown sampling schedule {schedule!r} (use 'spanner', 'all' or a list)")
    else:
        cycle = np.asarray(schedule, dtype=np.int64)
        if cycle.ndim != 1 or cycle.size == 0 or cycle.min() < 0 or cycle.max() >= inst.k:
            raise ConfigError("explicit schedule must be a non-empty list of valid arm indices")
    return np.resize(cycle, n)


def empirical_violation_rate(
    inst: Instance,
    sampling_schedule="spanner",
    n: int = 1000,
    delta: float = 0.1,
    reps: int = 2000,
    seed: int = 0,
    *,
    c_univ: float = DEFAULT_C_UNIV,
    threshold_scale: float = 1.0,
    noiseless: bool = False,
    batch: int = 250,
) -> float:
    """Fraction of replications where some arm leaves its confidence band.

    The arms are pulled by a fixed (non-adaptive) schedule cycled to length
    n.  A replication violates when, for some round t >= t0 and arm x,
    ``|mu_hat_x(t) - mu_x| >= sqrt(||x||^2_{G_t^{-1}} f_{n,delta})``, where t0
    is the first round with an invertible Gram matrix.  ``threshold_scale``
    multiplies f_{n,delta} (used to check that the detector can fire).
    """
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    f = f_delta(n, delta, inst.d, c_univ) * threshold_scale
    arms = inst.arms
    seq = _schedule_indices(inst, sampling_schedule, n)
    counts = np.zeros((n, inst.k))
    counts[np.arange(n), seq] = 1.0
    counts = np.cumsum(counts, axis=0)

    t0 = next((t for t in range(n) if is_invertible(gram_from_counts(arms, counts[t]))), None)
    if t0 is None:
        raise Singular("schedule never makes the Gram matrix invertible")
    G = np.einsum("tk,ki,kj->tij", counts[t0:], arms, arms)
    Ginv = np.linalg.inv(G)
    q = np.einsum("ki,tij,kj->tk", arms, Ginv, arms)
    width = np.sqrt(q * f)
    mu = inst.means()
    played = arms[seq]

    violations = 0
    for start in range(0, reps, batch):
        stop = min(reps, start + batch)
        eta = np.empty((stop - start, n))
        for i, r in enumerate(range(start, stop)):
            env = LinearBanditEnv(inst, n, replication_seed(seed, r), noiseless=noiseless)
            eta[i] = env.noise_block(n)
        # only the noise part matters: mu_hat - mu = x^T G^{-1} sum_s A_s eta_s
        S = np.cumsum(eta[:, :, None] * played[None, :, :], axis=1)[:, t0:, :]
        err = np.einsum("tij,rtj->rti", Ginv, S) @ arms.T
        violations += int(np.any(np.abs(err) >= width[None], axis=(1, 2)).sum())
    return violations / reps
