import numpy as np
import pytest

from distsg.graph import build_metropolis, random_connected_graph


def literal_step(theta_hat, r, a, phi, y, mu, nu, Q):
    """Scalar-loop transcription of the per-sensor update, neighbour sets include i."""
    n, m = theta_hat.shape
    nbrs = [[j for j in range(n) if a[i][j] > 0 or i == j] for i in range(n)]
    r_new = [r[i] + sum(phi[i][c] ** 2 for c in range(m)) for i in range(n)]
    x = [sum(phi[i][c] ** 2 for c in range(m)) / r_new[i] for i in range(n)]
    for _ in range(Q):
        x = [sum(a[i][j] * x[j] for j in nbrs[i]) for i in range(n)]
    z = []
    for i in range(n):
        zi = [0.0] * m
        for l in nbrs[i]:
            for c in range(m):
                zi[c] += a[l][i] * (theta_hat[i][c] - theta_hat[l][c])
        z.append([x[i] * v for v in zi])
    new = np.zeros((n, m))
    for i in range(n):
        pred = sum(phi[i][c] * theta_hat[i][c] for c in range(m))
        for c in range(m):
            cons = sum(a[i][j] * (z[i][c] - z[j][c]) for j in nbrs[i])
            new[i][c] = theta_hat[i][c] + mu * phi[i][c] / r_new[i] * (y[i] - pred) - mu * nu * cons
    return new, np.array(r_new), np.array(x)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_network(rng):
    topo = random_connected_graph(4, rng, 0.4)
    return topo, build_metropolis(topo)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for idx in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[idx])
