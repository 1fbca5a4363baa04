"""Distributed SG estimation: per-node recursion, stacked matrix form, baseline.

Time convention: the state starts at k = 0 with the initial estimates. The
k-th call of :func:`network_step` consumes the regressors ``phi_k`` (k >= 1)
together with the observations ``y = phi_k^T theta + eps`` they generate,
updates ``r_k = 1 + sum_{j<=k} |phi_j|^2`` first, and returns the estimates
indexed k.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import OracleCapacityError, ValidationError
from .graph import connectivity_and_diameter, kron_laplacian

ORACLE_CAP = 400


@dataclass(frozen=True)
class AlgorithmParams:
    """Step sizes and diffusion depth.

    ``mu`` must lie in (0, 1), ``nu`` in [0, 1) and ``mu * (1 + 4 nu) <= 1``.
    The boundary case ``mu * (1 + 4 nu) == 1`` is accepted but flagged by
    :attr:`strict`, since convergence needs the strict inequality.
    """

    mu: float
    nu: float
    Q: int = 1

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ValidationError(f"mu must lie in (0, 1), got {self.mu}")
        if not 0 <= self.nu < 1:
            raise ValidationError(f"nu must lie in [0, 1), got {self.nu}")
        if int(self.Q) != self.Q or self.Q < 1:
            raise ValidationError(f"diffusion depth Q must be an integer >= 1, got {self.Q}")
        if self.mu * (1 + 4 * self.nu) > 1:
            raise ValidationError(
                f"step sizes violate mu*(1+4*nu) <= 1 (got {self.mu * (1 + 4 * self.nu):.6g}); "
                "this bound is what keeps 0 <= mu*G_k <= I"
            )
        object.__setattr__(self, "Q", int(self.Q))

    @property
    def strict(self):
        return self.mu * (1 + 4 * self.nu) < 1

    def check_graph(self, topology):
        """Require Q >= diameter of a connected topology."""
        connected, diameter = connectivity_and_diameter(topology)
        if not connected:
            raise ValidationError("the sensor graph must be connected")
        if self.Q < diameter:
            raise ValidationError(
                f"diffusion depth Q={self.Q} is below the graph diameter {diameter}; "
                "the diffusion step requires Q >= diameter"
            )
        if not self.strict:
            warnings.warn(
                "mu*(1+4*nu) == 1: the contraction bound holds but convergence needs strict <",
                stacklevel=2,
            )


def default_q(topology):
    _, diameter = connectivity_and_diameter(topology)
    return max(1, diameter or 0)


@dataclass
class NetworkState:
    k: int
    theta_hat: np.ndarray  # (n, m)
    r: np.ndarray  # (n,)
    x: np.ndarray  # (n,) diffused energies x_k(Q) of the last step

    @property
    def n(self):
        return self.theta_hat.shape[0]

    @property
    def m(self):
        return self.theta_hat.shape[1]

    def stacked(self):
        return self.theta_hat.reshape(-1).copy()


def init_network(n, m, theta_hat_0=None):
    """State at k = 0: ``r = 1`` and the given (default zero) estimates.

    ``theta_hat_0`` may be a single m-vector shared by all sensors or an
    (n, m) array.
    """
    if n < 1 or m < 1:
        raise ValidationError("n and m must be >= 1")
    if theta_hat_0 is None:
        th = np.zeros((n, m))
    else:
        th = np.asarray(theta_hat_0, dtype=float)
        if th.shape == (m,):
            th = np.tile(th, (n, 1))
        elif th.shape != (n, m):
            raise ValidationError(f"theta_hat_0 must have shape ({m},) or ({n}, {m}), got {th.shape}")
        th = th.copy()
    return NetworkState(0, th, np.ones(n), np.zeros(n))


def diffuse_energy(w, x0, Q):
    """``Q`` rounds of neighbourhood averaging ``x(q+1) = A x(q)``."""
    if Q < 1:
        raise ValidationError("Q must be >= 1")
    x = np.asarray(x0, dtype=float)
    for _ in range(Q):
        x = w.sparse @ x
    return x


def _check_inputs(phi, y, n, m):
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if phi.shape != (n, m) or y.shape != (n,):
        raise ValidationError(f"expected phi ({n}, {m}) and y ({n},), got {phi.shape} and {y.shape}")
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite regressor or observation")
    return phi, y


def network_step(state, w, params, phi, y):
    """One synchronous step of the distributed SG recursion.

    Every sensor i forms ``z_i = x_i(Q) * sum_l a_li (th_i - th_l)`` and moves
    ``th_i += mu phi_i / r_i (y_i - phi_i^T th_i) - mu nu sum_j a_ij (z_i - z_j)``,
    all from the frozen step-k estimates. Returns a new state.
    """
    phi, y = _check_inputs(phi, y, state.n, state.m)
    th = state.theta_hat
    energy = np.einsum("ij,ij->i", phi, phi)
    r = state.r + energy
    xq = diffuse_energy(w, energy / r, params.Q)

    # sum_l a_li (th_i - th_l) = (sum_l a_li) th_i - (A^T th)_i
    disagreement = w.col_sums[:, None] * th - w.sparse_t @ th
    z = xq[:, None] * disagreement
    consensus = w.row_sums[:, None] * z - w.sparse @ z

    innovation = y - np.einsum("ij,ij->i", phi, th)
    new = th + params.mu * (phi / r[:, None]) * innovation[:, None] - params.mu * params.nu * consensus
    return NetworkState(state.k + 1, new, r, xq)


def standard_sg_step(theta_hat, r, phi, y, mu):
    """Single-sensor SG: ``r' = r + |phi|^2``, ``th' = th + mu phi/r' (y - phi^T th)``."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if r < 1:
        raise ValidationError(f"r must be >= 1, got {r}")
    if not (np.all(np.isfinite(theta_hat)) and np.all(np.isfinite(phi)) and np.isfinite(y) and np.isfinite(r)):
        raise ValidationError("non-finite input to standard_sg_step")
    r_new = r + float(phi @ phi)
    return theta_hat + mu * (phi / r_new) * (y - phi @ theta_hat), r_new


def standard_sg_network_step(state, mu, phi, y):
    """Non-cooperative baseline: every sensor runs standard SG on its own data."""
    phi, y = _check_inputs(phi, y, state.n, state.m)
    th = state.theta_hat
    r = state.r + np.einsum("ij,ij->i", phi, phi)
    innovation = y - np.einsum("ij,ij->i", phi, th)
    new = th + mu * (phi / r[:, None]) * innovation[:, None]
    return NetworkState(state.k + 1, new, r, np.zeros(state.n))


# -- stacked operators (oracle path) --------------------------------------------


@dataclass
class StackedOperators:
    """Dense block forms for one step; mn x mn, desk-scale only."""

    Phi: np.ndarray  # (mn, n) block diagonal of phi_i
    R: np.ndarray  # (n, n) diag of r_i
    A: np.ndarray  # Phi R^-1 Phi^T
    X: np.ndarray  # (n, n) diag of x_i(Q)
    G: np.ndarray  # A + nu L (X (x) I) L
    lap: np.ndarray = field(repr=False)  # L (x) I_m

    @property
    def mn(self):
        return self.A.shape[0]


def block_diag_regressors(phi):
    phi = np.asarray(phi, dtype=float)
    n, m = phi.shape
    Phi = np.zeros((n * m, n))
    for i in range(n):
        Phi[i * m:(i + 1) * m, i] = phi[i]
    return Phi


def build_stacked_operators(w, params, phi, r, xq=None, cap=ORACLE_CAP):
    """Assemble ``Phi, R, A, X, G`` for one step.

    If ``xq`` is omitted it is computed as ``A^Q x(0)`` with a dense matrix
    power, independently of :func:`diffuse_energy`.
    """
    phi = np.asarray(phi, dtype=float)
    r = np.asarray(r, dtype=float)
    n, m = phi.shape
    if n * m > cap:
        raise OracleCapacityError(f"mn = {n * m} exceeds the dense-operator cap {cap}")
    if r.shape != (n,) or w.n != n:
        raise ValidationError("inconsistent dimensions for stacked operators")
    Phi = block_diag_regressors(phi)
    R = np.diag(r)
    A = Phi @ np.diag(1.0 / r) @ Phi.T
    if xq is None:
        x0 = np.einsum("ij,ij->i", phi, phi) / r
        xq = np.linalg.matrix_power(w.a, params.Q) @ x0
    X = np.diag(np.asarray(xq, dtype=float))
    lap = kron_laplacian(w, m)
    G = A + params.nu * lap @ np.kron(X, np.eye(m)) @ lap
    return StackedOperators(Phi, R, A, X, G, lap)


def matrix_form_step(theta_err, ops, params, noise):
    """Stacked error recursion ``T' = (I - mu G) T - mu Phi R^-1 Xi^T``."""
    theta_err = np.asarray(theta_err, dtype=float)
    noise = np.asarray(noise, dtype=float).reshape(-1)
    if theta_err.shape != (ops.mn,) or noise.shape != (ops.R.shape[0],):
        raise ValidationError("dimension mismatch in matrix_form_step")
    return theta_err - params.mu * ops.G @ theta_err - params.mu * ops.Phi @ (noise / np.diag(ops.R))


# -- trajectories -------------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    """Per-step log of one run. Row k-1 of each array holds step k."""

    phi: np.ndarray  # (K, n, m)
    y: np.ndarray  # (K, n)
    eps: np.ndarray  # (K, n)
    r: np.ndarray  # (K, n)
    xq: np.ndarray  # (K, n)
    theta_hat: np.ndarray  # (K, n, m) estimates after step k
    theta_hat_0: np.ndarray = None  # (n, m)
    meta: dict = field(default_factory=dict)

    @property
    def steps(self):
        return self.phi.shape[0]

    @property
    def n(self):
        return self.phi.shape[1]

    @property
    def m(self):
        return self.phi.shape[2]

    def errors(self, theta):
        """Per-node error norms ``|theta - theta_hat_i|``, shape (K, n)."""
        return np.linalg.norm(np.asarray(theta)[None, None, :] - self.theta_hat, axis=2)

    def to_csv(self, path):
        path = Path(path)
        n, m = self.n, self.m
        header = (["k", "i"] + [f"phi_{j}" for j in range(1, m + 1)]
                  + ["y", "eps", "r", "xQ"] + [f"theta_hat_{j}" for j in range(1, m + 1)])
        with path.open("w", newline="") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key} = {self.meta[key]}\n")
            if self.theta_hat_0 is not None:
                fh.write("# theta_hat_0 = " + ",".join(repr(float(v)) for v in self.theta_hat_0.reshape(-1)) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for k in range(self.steps):
                for i in range(n):
                    writer.writerow(
                        [k + 1, i + 1]
                        + [repr(float(v)) for v in self.phi[k, i]]
                        + [repr(float(self.y[k, i])), repr(float(self.eps[k, i])),
                           repr(float(self.r[k, i])), repr(float(self.xq[k, i]))]
                        + [repr(float(v)) for v in self.theta_hat[k, i]]
                    )

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        meta = {}
        rows = []
        header = None
        if not path.is_file():
            raise ValidationError(f"trajectory file {path} does not exist")
        with path.open(newline="") as fh:
            for line in fh:
                if line.startswith("#"):
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = value.strip()
                    continue
                if header is None:
                    header = next(csv.reader([line]))
                    continue
                if line.strip():
                    rows.append(line)
        if header is None:
            raise ValidationError(f"{path}: missing CSV header")
        m = sum(1 for h in header if h.startswith("phi_"))
        expected = ["k", "i"] + [f"phi_{j}" for j in range(1, m + 1)] + ["y", "eps", "r", "xQ"] + [
            f"theta_hat_{j}" for j in range(1, m + 1)]
        if header != expected:
            raise ValidationError(f"{path}: unexpected trajectory header {header}")
        data = np.array([[float(v) for v in rec] for rec in csv.reader(rows)])
        if data.size == 0:
            raise ValidationError(f"{path}: trajectory has no rows")
        ks = data[:, 0].astype(int)
        idx = data[:, 1].astype(int)
        K, n = ks.max(), idx.max()
        if data.shape[0] != K * n or not np.array_equal(ks, np.repeat(np.arange(1, K + 1), n)):
            raise ValidationError(f"{path}: step indices must be contiguous from 1 with {n} sensors each")
        data = data.reshape(K, n, -1)
        th0 = meta.pop("theta_hat_0", None)
        if th0 is not None:
            th0 = np.array([float(v) for v in th0.split(",")]).reshape(n, m)
        return cls(
            phi=data[:, :, 2:2 + m],
            y=data[:, :, 2 + m],
            eps=data[:, :, 3 + m],
            r=data[:, :, 4 + m],
            xq=data[:, :, 5 + m],
            theta_hat=data[:, :, 6 + m:6 + 2 * m],
            theta_hat_0=th0,
            meta=meta,
        )


class TrajectoryRecorder:
    """Accumulates per-step arrays into a TrajectoryRecord."""

    def __init__(self, theta_hat_0, meta=None):
        self.theta_hat_0 = np.array(theta_hat_0, dtype=float)
        self.meta = dict(meta or {})
        self._rows = {"phi": [], "y": [], "eps": [], "r": [], "xq": [], "theta_hat": []}

    def append(self, phi, y, eps, state):
        self._rows["phi"].append(np.array(phi, dtype=float))
        self._rows["y"].append(np.array(y, dtype=float))
        self._rows["eps"].append(np.array(eps, dtype=float))
        self._rows["r"].append(state.r.copy())
        self._rows["xq"].append(state.x.copy())
        self._rows["theta_hat"].append(state.theta_hat.copy())

    def record(self):
        return TrajectoryRecord(**{k: np.array(v) for k, v in self._rows.items()},
                                theta_hat_0=self.theta_hat_0, meta=self.meta)


def run_network(w, params, stream, noise, theta, steps, theta_hat_0=None, cooperative=True, meta=None):
    """Drive one run for ``steps`` steps and return its TrajectoryRecord."""
    theta = np.asarray(theta, dtype=float)
    state = init_network(stream.n, stream.m, theta_hat_0)
    rec = TrajectoryRecorder(state.theta_hat, meta)
    for k in range(1, steps + 1):
        phi = stream.step(k)
        eps = noise.sample(k)
        y = phi @ theta + eps
        if cooperative:
            state = network_step(state, w, params, phi, y)
        else:
            state = standard_sg_network_step(state, params.mu, phi, y)
        rec.append(phi, y, eps, state)
    return rec.record()
