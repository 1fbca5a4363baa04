"""Diagnostics over recorded runs and stacked-operator chains.

All checks return the raw quantities; callers compare them against their
tolerances. Dense operators are built per step, so everything here is
desk-scale (mn up to a few hundred).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimator import AlgorithmParams, build_stacked_operators
from .exceptions import ValidationError
from .graph import build_metropolis, connectivity_and_diameter, laplacian_spectrum, random_connected_graph

DIVERGENCE_FACTOR = 2.0
SINGULAR_RTOL = 1e-12


def _bounded(series):
    """Finite-horizon boundedness test for a nonnegative series.

    Bounded means every value is finite and the maximum over the last quarter
    is at most ``DIVERGENCE_FACTOR`` times the maximum over the first half.
    """
    series = np.asarray(series, dtype=float)
    if series.size == 0 or not np.all(np.isfinite(series)):
        return False
    if series.size < 4:
        return True
    head = series[: series.size // 2].max()
    tail = series[-max(1, series.size // 4):].max()
    return bool(tail <= DIVERGENCE_FACTOR * head)


def _ratio(lmax, lmin):
    """Eigenvalue ratio, infinite when the matrix is numerically singular."""
    lmax = np.asarray(lmax, dtype=float)
    lmin = np.asarray(lmin, dtype=float)
    singular = lmin <= SINGULAR_RTOL * np.maximum(lmax, np.finfo(float).tiny)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(singular, np.inf, lmax / np.where(singular, 1.0, lmin))
    # an all-zero Gram has no excitation at all
    out = np.where((lmax <= 0) & singular, np.inf, out)
    return out


# -- excitation ------------------------------------------------------------------


@dataclass
class ExcitationReport:
    steps: np.ndarray  # sampled k values
    lambda_max: np.ndarray
    lambda_min: np.ndarray
    ratio: np.ndarray
    log_norm_R: np.ndarray
    bound: np.ndarray
    N: float  # N used for the bound (user supplied or fitted)
    N_fitted: float
    K0: int | None
    sensor_pe_ratio: np.ndarray  # (len(steps), n), no identity offset
    sensor_excitation_ratio: np.ndarray  # pe ratio / (log r_i)^(1/3), nan before log r_i >= 1
    condition_number: np.ndarray  # max_i r_i / min_i r_i at the sampled steps
    r_star: np.ndarray  # per sensor max_k r_k / r_{k-1}
    network_holds: bool
    sensor_pe_holds: np.ndarray
    sensor_excitation_holds: np.ndarray

    def to_csv(self, path=None):
        n = self.sensor_pe_ratio.shape[1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["k", "lambda_max", "lambda_min", "ratio", "log_norm_R", "bound", "condition_number"]
            + [f"pe_ratio_{i}" for i in range(1, n + 1)]
            + [f"excitation_ratio_{i}" for i in range(1, n + 1)]
        )
        for t, k in enumerate(self.steps):
            writer.writerow(
                [int(k)]
                + [repr(float(v)) for v in (self.lambda_max[t], self.lambda_min[t], self.ratio[t],
                                            self.log_norm_R[t], self.bound[t], self.condition_number[t])]
                + [repr(float(v)) for v in self.sensor_pe_ratio[t]]
                + [repr(float(v)) for v in self.sensor_excitation_ratio[t]]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self):
        n = len(self.sensor_pe_holds)
        verdict = lambda ok: "PASS" if ok else "FAIL"  # noqa: E731
        lines = [
            f"cooperative excitation: {verdict(self.network_holds)} "
            f"(N = {self.N:.6g}, fitted N = {self.N_fitted:.6g}, K0 = {self.K0})",
            f"final ratio lambda_max/lambda_min = {self.ratio[-1]:.6g}",
            f"max condition number of R_k = {np.max(self.condition_number):.6g}",
            f"max r_k/r_(k-1) over sensors = {np.max(self.r_star):.6g}",
            f"per-sensor PE: {int(np.sum(self.sensor_pe_holds))}/{n} PASS",
            f"per-sensor log-rate excitation: {int(np.sum(self.sensor_excitation_holds))}/{n} PASS",
        ]
        for i in range(n):
            lines.append(
                f"  sensor {i + 1}: PE {verdict(self.sensor_pe_holds[i])}, "
                f"excitation {verdict(self.sensor_excitation_holds[i])}, "
                f"final PE ratio {self.sensor_pe_ratio[-1, i]:.6g}"
            )
        return "\n".join(lines)


def _sample_steps(K, stride, full):
    if full or stride <= 1:
        return np.arange(1, K + 1)
    ks = list(range(stride, K + 1, stride))
    if not ks or ks[-1] != K:
        ks.append(K)
    if ks[0] != 1:
        ks.insert(0, 1)
    return np.array(ks)


def excitation_report(trajectory, N_user=None, stride=10, full=False):
    """Network and per-sensor excitation diagnostics for a recorded run.

    The network Gram is ``(n/m) I + sum_i sum_{j<=k} phi_ij phi_ij^T``; the
    per-sensor Grams carry no offset. Without ``N_user`` the smallest N with
    ``ratio_k <= N (log |R_k|)^(1/3)`` for all sampled k >= K0 is reported,
    K0 being the first step with ``log |R_k| >= 1``.
    """
    phi = trajectory.phi
    K, n, m = phi.shape
    if K == 0:
        raise ValidationError("empty trajectory")
    per_sensor = np.cumsum(np.einsum("kni,knj->knij", phi, phi), axis=0)
    network = (n / m) * np.eye(m) + per_sensor.sum(axis=1)

    ks = _sample_steps(K, stride, full)
    idx = ks - 1
    ev = np.linalg.eigvalsh(network[idx])
    lmin, lmax = ev[:, 0], ev[:, -1]
    ratio = lmax / lmin

    sev = np.linalg.eigvalsh(per_sensor[idx])
    pe_ratio = _ratio(sev[..., -1], sev[..., 0])

    r = trajectory.r
    norm_R = r.max(axis=1)
    log_norm_R = np.log(norm_R[idx])
    log_r = np.log(r[idx])
    with np.errstate(invalid="ignore", divide="ignore"):
        exc_ratio = np.where(log_r >= 1, pe_ratio / np.cbrt(np.maximum(log_r, 1.0)), np.nan)

    above = np.flatnonzero(np.log(norm_R) >= 1)
    K0 = int(above[0]) + 1 if above.size else None
    window = ks >= K0 if K0 is not None else np.zeros(ks.size, dtype=bool)
    normalised = ratio[window] / np.cbrt(log_norm_R[window])
    N_fitted = float(normalised.max()) if normalised.size else float("nan")
    N = float(N_user) if N_user is not None else N_fitted
    with np.errstate(invalid="ignore"):
        bound = N * np.cbrt(np.maximum(log_norm_R, 0.0))

    if N_user is not None:
        network_holds = bool(window.any() and np.all(ratio[window] <= bound[window]))
    else:
        network_holds = bool(window.any() and _bounded(normalised))

    pe_holds = np.array([_bounded(pe_ratio[:, i]) for i in range(n)])
    exc_holds = np.array([
        _bounded(exc_ratio[~np.isnan(exc_ratio[:, i]), i]) for i in range(n)
    ])

    cond = r.max(axis=1) / r.min(axis=1)
    if K > 1:
        r_star = (r[1:] / r[:-1]).max(axis=0)
    else:
        r_star = r[0].copy()
    return ExcitationReport(
        steps=ks, lambda_max=lmax, lambda_min=lmin, ratio=ratio, log_norm_R=log_norm_R,
        bound=bound, N=N, N_fitted=N_fitted, K0=K0, sensor_pe_ratio=pe_ratio,
        sensor_excitation_ratio=exc_ratio, condition_number=cond[idx], r_star=r_star,
        network_holds=network_holds, sensor_pe_holds=pe_holds, sensor_excitation_holds=exc_holds,
    )


# -- transition matrices -----------------------------------------------------------


def sqrt_psd(M):
    """Symmetric PSD square root via eigendecomposition; tiny negative eigenvalues clipped."""
    vals, vecs = np.linalg.eigh((M + M.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


@dataclass
class TransitionProbe:
    j: int
    k: int
    psi: np.ndarray
    B: list = field(repr=False)  # B_p for p = j..k-1, B_p^2 = mu G_p


def operators_for_trajectory(trajectory, w, params, steps=None):
    """Stacked operators of each recorded step (rebuilt from phi and r)."""
    K = trajectory.steps if steps is None else min(steps, trajectory.steps)
    return [build_stacked_operators(w, params, trajectory.phi[k], trajectory.r[k], trajectory.xq[k])
            for k in range(K)]


def transition_matrix(operators, params, j, k):
    """``Psi(k, j) = (I - mu G_{k-1}) ... (I - mu G_j)``; ``operators[p]`` holds G_p."""
    if not 0 <= j <= k <= len(operators):
        raise ValidationError(f"need 0 <= j <= k <= {len(operators)}, got j={j}, k={k}")
    mn = operators[0].mn
    psi = np.eye(mn)
    B = []
    for p in range(j, k):
        G = operators[p].G
        psi = psi - params.mu * G @ psi
        B.append(sqrt_psd(params.mu * G))
    return TransitionProbe(j, k, psi, B)


def transition_norms(operators, params):
    """``|Psi(k, 0)|`` for k = 0..len(operators)."""
    mn = operators[0].mn
    psi = np.eye(mn)
    norms = [1.0]
    for ops in operators:
        psi = psi - params.mu * ops.G @ psi
        norms.append(np.linalg.norm(psi, 2))
    return np.array(norms)


def lemma4_check(operators, params, k=None):
    """``sum_{j<k} |Psi(k, j+1) B_j|^2``, accumulated backwards from Psi(k, k) = I."""
    k = len(operators) if k is None else k
    if k == 0:
        return 0.0
    mn = operators[0].mn
    right = np.eye(mn)  # Psi(k, j+1)
    total = 0.0
    for j in range(k - 1, -1, -1):
        muG = params.mu * operators[j].G
        total += np.linalg.norm(right @ sqrt_psd(muG), 2) ** 2
        right = right - right @ muG
    return total


def lemma6_check(operators, spectrum, w, params):
    """Both sides of ``lambda_min(sum G_k) >= sigma lambda_min(sum_k sum_i A^i_k)``.

    ``sigma = l^2 a nu / (2n + l^2 a nu n)`` with l the second-smallest
    Laplacian eigenvalue and a the smallest entry of ``A^Q``.
    """
    n = w.n
    a = w.power_min_entry(params.Q)
    if a <= 0:
        raise ValidationError(
            f"min entry of A^Q is {a:.3g} <= 0; the graph must be connected and Q >= diameter"
        )
    l2 = spectrum.l2
    sigma = l2**2 * a * params.nu / (2 * n + l2**2 * a * params.nu * n)
    if not operators:
        return 0.0, 0.0
    mn = operators[0].mn
    m = mn // n
    sum_G = np.zeros((mn, mn))
    sum_Ai = np.zeros((m, m))
    for ops in operators:
        sum_G += ops.G
        for i in range(n):
            sum_Ai += ops.A[i * m:(i + 1) * m, i * m:(i + 1) * m]
    lhs = float(np.linalg.eigvalsh(sum_G)[0])
    rhs = float(sigma * np.linalg.eigvalsh(sum_Ai)[0])
    return lhs, rhs


@dataclass
class DeterminantContractionReport:
    det_lhs: np.ndarray  # det(I - mu G_k)
    det_rhs: np.ndarray  # det(I - A_k)^(mn)
    psi_norm_max: np.ndarray  # max_{j<=k} |Psi(k, j)| for k = 0..K

    def det_ok(self, slack=1e-12):
        return bool(np.all(self.det_lhs >= self.det_rhs - slack))

    def psi_ok(self, slack=1e-12):
        return bool(np.all(self.psi_norm_max <= 1 + slack))


def lemma8_lemma9_checks(operators, params):
    """Determinant comparison with exponent mn, and ``|Psi(k, j)|`` for all j <= k."""
    K = len(operators)
    mn = operators[0].mn
    eye = np.eye(mn)
    lhs = np.empty(K)
    rhs = np.empty(K)
    for p, ops in enumerate(operators):
        lhs[p] = np.prod(np.linalg.eigvalsh(eye - params.mu * ops.G))
        rhs[p] = np.prod(np.linalg.eigvalsh(eye - ops.A)) ** mn
    psi_max = np.ones(K + 1)
    for j in range(K):
        psi = eye
        for k in range(j, K):
            psi = psi - params.mu * operators[k].G @ psi
            psi_max[k + 1] = max(psi_max[k + 1], np.linalg.norm(psi, 2))
    return DeterminantContractionReport(lhs, rhs, psi_max)


# -- noise ----------------------------------------------------------------------


@dataclass
class NoiseTrace:
    S: np.ndarray  # (K, mn) partial sums
    norms: np.ndarray  # |S_k|
    tail: np.ndarray  # max_{k' >= k} |S_k' - S_k|


def noise_accumulation_trace(trajectory):
    """Partial sums ``S_k = sum_{j<=k} Phi_j R_j^-1 Xi_(j+1)^T`` of the noise drive."""
    K, n, m = trajectory.phi.shape
    terms = trajectory.phi * (trajectory.eps / trajectory.r)[:, :, None]
    S = np.cumsum(terms.reshape(K, n * m), axis=0)
    tail = np.empty(K)
    for k in range(K):
        tail[k] = np.linalg.norm(S[k:] - S[k], axis=1).max()
    return NoiseTrace(S, np.linalg.norm(S, axis=1), tail)


# -- convergence rate -------------------------------------------------------------


@dataclass
class RateFit:
    k: np.ndarray
    log_norm_R: np.ndarray
    error: np.ndarray
    d1_hat: float
    intercept: float
    residual: float  # rms residual of the log-log fit
    window: tuple


def fit_log_rate(log_norm_R, error, k=None):
    """Least-squares slope of ``log error`` on ``log log |R_k|``; returns (d1_hat, intercept, rms)."""
    log_norm_R = np.asarray(log_norm_R, dtype=float)
    error = np.asarray(error, dtype=float)
    if np.any(log_norm_R <= 1) or np.any(error <= 0) or not np.all(np.isfinite(error)):
        raise ValidationError("rate fit needs log|R_k| > 1 and positive finite errors in the window")
    x = np.log(log_norm_R)
    yv = np.log(error)
    if x.size < 2 or np.ptp(x) == 0:
        raise ValidationError("rate fit needs at least two distinct log|R_k| values")
    slope, intercept = np.polyfit(x, yv, 1)
    resid = yv - (slope * x + intercept)
    return float(-slope), float(intercept), float(np.sqrt(np.mean(resid**2)))


def rate_fit(trajectory, theta, burn_in=None, window=None):
    """Fit ``max_i |theta - theta_hat_i| ~ (log |R_k|)^(-d1)``.

    The default window starts after a burn-in of one fifth of the horizon and
    after the first step with ``log |R_k| > 1``, and ends at the last step.
    """
    errors = trajectory.errors(theta).max(axis=1)
    log_norm_R = np.log(trajectory.r.max(axis=1))
    K = trajectory.steps
    if window is None:
        burn_in = K // 5 if burn_in is None else burn_in
        above = np.flatnonzero(log_norm_R > 1)
        if above.size == 0:
            raise ValidationError("log|R_k| never exceeds 1; cannot fit a log-rate")
        start = max(burn_in, int(above[0]))
        window = (start + 1, K)
    lo, hi = window
    sl = slice(lo - 1, hi)
    d1, c, res = fit_log_rate(log_norm_R[sl], errors[sl])
    return RateFit(np.arange(lo, hi + 1), log_norm_R[sl], errors[sl], d1, c, res, (lo, hi))


# -- random instances for property sweeps -------------------------------------------


@dataclass
class RandomChain:
    topology: object
    w: object
    params: AlgorithmParams
    phi: np.ndarray  # (K, n, m)
    r: np.ndarray  # (K, n)
    operators: list


def random_chain(rng, n, m, steps, mu=None, nu=None, Q=None, boundary=False):
    """Random connected graph, step sizes and heterogeneous regressors.

    Regressor scales vary over six orders of magnitude per sensor and step,
    and about 10% of the regressors are exactly zero. With ``boundary`` the
    step sizes satisfy ``mu (1 + 4 nu) == 1``.
    """
    topo = random_connected_graph(n, rng, extra_edge_prob=rng.uniform(0.0, 0.6))
    w = build_metropolis(topo)
    _, diameter = connectivity_and_diameter(topo)
    if Q is None:
        Q = max(1, diameter) + int(rng.integers(0, 3))
    if nu is None:
        nu = float(rng.uniform(0.0, 0.99))
    if mu is None:
        cap = 1.0 / (1 + 4 * nu)
        mu = cap if boundary else float(rng.uniform(0.01, 1.0)) * cap
        mu = min(mu, np.nextafter(1.0, 0.0))
    params = AlgorithmParams(mu, nu, Q)
    scale = 10.0 ** rng.uniform(-3, 3, size=(steps, n, 1))
    phi = scale * rng.standard_normal((steps, n, m))
    phi[rng.random((steps, n)) < 0.1] = 0.0
    r = 1.0 + np.cumsum(np.einsum("kij,kij->ki", phi, phi), axis=0)
    ops = [build_stacked_operators(w, params, phi[k], r[k]) for k in range(steps)]
    return RandomChain(topo, w, params, phi, r, ops)


def lemma3_extremes(ops, params):
    """Smallest and largest eigenvalue of ``mu G``."""
    ev = np.linalg.eigvalsh(params.mu * ops.G)
    return float(ev[0]), float(ev[-1])


@dataclass
class SweepResult:
    name: str
    passed: bool
    worst: float
    detail: str


def lemma_sweep(n, m, mu=None, nu=None, instances=100, steps=30, seed=0):
    """Property sweeps over random chains; returns one SweepResult per check."""
    rng = np.random.default_rng(seed)
    worst3 = worst4 = worst6 = worst8 = worst9 = -np.inf
    for t in range(instances):
        nn = int(rng.integers(1, n + 1)) if n > 1 else 1
        mm = int(rng.integers(1, m + 1)) if m > 1 else 1
        chain = random_chain(rng, nn, mm, steps, mu=mu, nu=nu, boundary=(t % 10 == 0 and mu is None))
        p = chain.params
        for ops in chain.operators:
            lo, hi = lemma3_extremes(ops, p)
            worst3 = max(worst3, -lo - 1e-12, hi - 1 - 1e-12)
        worst4 = max(worst4, lemma4_check(chain.operators, p) - nn * mm - 1e-8)
        spec = laplacian_spectrum(chain.w, chain.topology)
        lhs, rhs = lemma6_check(chain.operators, spec, chain.w, p)
        worst6 = max(worst6, rhs - lhs - 1e-10)
        if p.strict:
            rep = lemma8_lemma9_checks(chain.operators, p)
            worst8 = max(worst8, float(np.max(rep.det_rhs - rep.det_lhs)) - 1e-12)
            worst9 = max(worst9, float(rep.psi_norm_max.max()) - 1 - 1e-12)
    out = []
    for name, worst in (
        ("0 <= mu*G_k <= I", worst3),
        ("sum |Psi(k,j+1) B_j|^2 <= mn", worst4),
        ("lambda_min(sum G) >= sigma*lambda_min(sum A^i)", worst6),
        ("det(I - mu G) >= det(I - A)^mn", worst8),
        ("|Psi(k,j)| <= 1", worst9),
    ):
        out.append(SweepResult(name, bool(worst <= 0), float(worst),
                               f"max violation margin {worst:.3e} over {instances} instances"))
    return out
