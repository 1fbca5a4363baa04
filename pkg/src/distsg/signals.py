"""Regressor and observation-noise generators.

Every random stream is drawn from its own PCG64 generator seeded by
``SeedSequence(master_seed, spawn_key=(run, sensor, kind_tag))``. Regressor
excitation and observation noise use different ``kind_tag`` values, so the two
streams are statistically independent and can be re-created in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import HorizonOverflowError, ValidationError

OVERFLOW_LIMIT = 1e150
_BLOCK = 256

KIND_XI = 1  # state-space excitation xi
KIND_EPS = 2  # observation noise
KIND_PHI = 3  # i.i.d. Gaussian regressors


def sensor_rng(seed, run, sensor, kind):
    """Generator for one (run, sensor, stream kind); sensor is 1-based."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(run), int(sensor), int(kind)))
    return np.random.Generator(np.random.PCG64(ss))


class _NormalBlocks:
    """Per-sensor standard normals, drawn in fixed-size blocks."""

    def __init__(self, seed, run, n, kind, width=1):
        self._rngs = [sensor_rng(seed, run, i + 1, kind) for i in range(n)]
        self._width = width
        self._buf = None
        self._pos = _BLOCK

    def next(self):
        if self._pos == _BLOCK:
            self._buf = np.stack(
                [g.standard_normal((_BLOCK, self._width)) for g in self._rngs], axis=1
            )
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out  # shape (n, width)


# -- regressor models ---------------------------------------------------------


@dataclass(frozen=True)
class StateSpaceRegressorModel:
    """``u_k = A u_{k-1} + B xi_k``, ``phi_k = C u_k`` for one sensor, ``u_0 = 0``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    xi_std: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(-1)
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        m = A.shape[0]
        if A.shape != (m, m) or B.shape != (m,) or C.shape != (m, m):
            raise ValidationError(
                f"inconsistent state-space shapes A{A.shape} B{B.shape} C{C.shape}"
            )
        if not self.xi_std >= 0:
            raise ValidationError(f"xi_std must be >= 0, got {self.xi_std}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def m(self):
        return self.A.shape[0]


def direction_index(i, m):
    """1-based excitation direction of 1-based sensor i: ``((i - 1) mod m) + 1``."""
    return (i - 1) % m + 1


def example1_model(n, m, growth=1.2, xi_std=0.3):
    """Single-direction state-space regressors, one model per sensor.

    Sensor i drives coordinate j = direction_index(i, m) only: ``A = growth*I``,
    ``B = e_j`` and ``C = e_j e_j^T``.
    """
    if n < 1 or m < 1:
        raise ValidationError("n and m must be >= 1")
    models = []
    for i in range(1, n + 1):
        j = direction_index(i, m) - 1
        e = np.zeros(m)
        e[j] = 1.0
        models.append(StateSpaceRegressorModel(growth * np.eye(m), e, np.outer(e, e), xi_std))
    return models


def state_space_growth_bound(models, steps, sigmas=10.0):
    """log10 of a bound on ``max |phi|`` over ``steps`` steps when ``|xi| <= sigmas*xi_std``."""
    worst = -np.inf
    for mod in models:
        g = np.linalg.norm(mod.A, 2)
        scale = sigmas * mod.xi_std * np.linalg.norm(mod.B) * np.linalg.norm(mod.C, 2)
        if scale == 0:
            continue
        if g == 1.0:
            log_sum = np.log10(steps)
        elif g < 1.0:
            log_sum = np.log10((1 - g**steps) / (1 - g))
        else:
            # (g^k - 1)/(g - 1) <= g^k/(g - 1)
            log_sum = steps * np.log10(g) - np.log10(g - 1)
        worst = max(worst, np.log10(scale) + log_sum)
    return worst


# -- streams --------------------------------------------------------------------


class RegressorStream:
    """Produces ``phi_k`` of shape (n, m) for k = 1, 2, ... in order."""

    n: int
    m: int

    def __init__(self):
        self.k = 0
        self.draws = 0

    def step(self, k):
        if k != self.k + 1:
            raise ValidationError(
                f"regressor stream is at step {self.k}; next call must be k={self.k + 1}, got {k}"
            )
        phi = self._next(k)
        bad = np.abs(phi) > OVERFLOW_LIMIT
        if np.any(bad) or not np.all(np.isfinite(phi)):
            idx = np.argwhere(bad | ~np.isfinite(phi))[0]
            raise HorizonOverflowError(int(idx[0]) + 1, k, float(np.abs(phi[tuple(idx)])))
        self.k = k
        return phi

    def _next(self, k):
        raise NotImplementedError


class StateSpaceStream(RegressorStream):
    def __init__(self, models, seed=0, run=0):
        super().__init__()
        self.models = list(models)
        self.n = len(self.models)
        self.m = self.models[0].m
        if any(mod.m != self.m for mod in self.models):
            raise ValidationError("all sensors must share the regressor dimension")
        self._A = np.stack([mod.A for mod in self.models])
        self._B = np.stack([mod.B for mod in self.models])
        self._C = np.stack([mod.C for mod in self.models])
        self._std = np.array([mod.xi_std for mod in self.models])
        self._xi = _NormalBlocks(seed, run, self.n, KIND_XI)
        self.u = np.zeros((self.n, self.m))
        self.last_xi = None

    def _next(self, k):
        xi = self._xi.next()[:, 0] * self._std
        self.draws += self.n
        self.last_xi = xi
        self.u = np.einsum("nij,nj->ni", self._A, self.u) + self._B * xi[:, None]
        return np.einsum("nij,nj->ni", self._C, self.u)


class ScriptedStateSpaceStream(StateSpaceStream):
    """State-space stream driven by a given xi sequence of shape (steps, n)."""

    def __init__(self, models, xi):
        super().__init__(models)
        self._script = np.asarray(xi, dtype=float)

    def _next(self, k):
        xi = self._script[k - 1]
        self.draws += self.n
        self.last_xi = xi
        self.u = np.einsum("nij,nj->ni", self._A, self.u) + self._B * xi[:, None]
        return np.einsum("nij,nj->ni", self._C, self.u)


class GaussianStream(RegressorStream):
    """i.i.d. ``N(mean, std^2)`` regressor entries; std may be per sensor."""

    def __init__(self, n, m, std=1.0, mean=0.0, seed=0, run=0):
        super().__init__()
        self.n, self.m = n, m
        self.std = np.broadcast_to(np.asarray(std, dtype=float), (n,))[:, None]
        self.mean = mean
        self._z = _NormalBlocks(seed, run, n, KIND_PHI, width=m)

    def _next(self, k):
        self.draws += self.n
        return self.mean + self.std * self._z.next()


class ConstantStream(RegressorStream):
    def __init__(self, phi):
        super().__init__()
        self.phi = np.atleast_2d(np.asarray(phi, dtype=float))
        self.n, self.m = self.phi.shape

    def _next(self, k):
        return self.phi.copy()


class ReplayStream(RegressorStream):
    """Replays the regressors stored in a TrajectoryRecord."""

    def __init__(self, trajectory):
        super().__init__()
        self.trajectory = trajectory
        self.n, self.m = trajectory.n, trajectory.m

    def _next(self, k):
        if k > self.trajectory.steps:
            raise ValidationError(f"replay exhausted: trajectory has {self.trajectory.steps} steps")
        return self.trajectory.phi[k - 1].copy()


def step_regressors(stream, k):
    return stream.step(k)


# -- noise ------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise. ``epsilon_exponent`` documents the conditional-variance growth bound."""

    kind: str = "gaussian_iid"
    std: float = 1.0
    epsilon_exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian_iid", "zero"):
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        if not self.std >= 0:
            raise ValidationError(f"noise std must be >= 0, got {self.std}")
        if not 0 <= self.epsilon_exponent < 1:
            raise ValidationError("epsilon_exponent must lie in [0, 1)")


class NoiseSource:
    """Stateful per-run noise stream for a NoiseModel."""

    def __init__(self, model, n, seed=0, run=0):
        self.model = model
        self.n = n
        self.k = 0
        self.draws = 0
        self._z = None
        if model.kind == "gaussian_iid" and model.std > 0:
            self._z = _NormalBlocks(seed, run, n, KIND_EPS)

    def sample(self, k):
        if k != self.k + 1:
            raise ValidationError(f"noise source is at step {self.k}; expected k={self.k + 1}, got {k}")
        self.k = k
        self.draws += self.n
        if self._z is None:
            return np.zeros(self.n)
        return self.model.std * self._z.next()[:, 0]


def sample_noise(source, k):
    return source.sample(k)
