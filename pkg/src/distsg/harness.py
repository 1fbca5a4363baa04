"""Monte Carlo experiments comparing cooperative and non-cooperative SG.

Config files are flat ``key = value`` text; ``#`` starts a comment and arrays
are comma separated. Unknown keys are rejected. Relative paths are resolved
against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import excitation_report, rate_fit
from .estimator import (
    AlgorithmParams,
    TrajectoryRecorder,
    default_q,
    init_network,
    network_step,
    standard_sg_network_step,
)
from .exceptions import HorizonOverflowError, ValidationError
from .graph import (
    PRESETS,
    build_metropolis,
    complete_graph,
    load_edgelist,
    path_graph,
    preset,
    ring_graph,
)
from .signals import (
    ConstantStream,
    GaussianStream,
    NoiseModel,
    NoiseSource,
    StateSpaceStream,
    example1_model,
    state_space_growth_bound,
)

log = logging.getLogger(__name__)

_GENERIC_TOPOLOGIES = {"path": path_graph, "ring": ring_graph, "complete": complete_graph}


@dataclass
class ExperimentConfig:
    """Experiment settings; the defaults reproduce the 28-sensor example."""

    n: int = 28
    m: int = 10
    theta: tuple = tuple(float(v) for v in range(1, 11))
    topology: str = "ring28plus"
    topology_file: str | None = None
    mu: float = 0.25
    nu: float = 0.7
    Q: int | None = None
    regressor: str = "example1"
    growth: float = 1.2
    xi_std: float = 0.3
    regressor_std: float = 1.0
    noise: str = "gaussian_iid"
    noise_std: float = 1.2
    theta_hat_0: tuple | None = None
    steps: int = 600
    runs: int = 500
    seed: int = 20210101
    outputs: str = "out"
    keep_trajectories: int = 1
    workers: int = 1
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.n < 1 or self.m < 1:
            raise ValidationError("n and m must be >= 1")
        if len(self.theta) != self.m:
            raise ValidationError(f"theta has {len(self.theta)} entries, expected m = {self.m}")
        if self.theta_hat_0 is not None and len(self.theta_hat_0) != self.m:
            raise ValidationError(f"theta_hat_0 has {len(self.theta_hat_0)} entries, expected m = {self.m}")
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")
        if self.keep_trajectories < 0 or self.workers < 1:
            raise ValidationError("keep_trajectories must be >= 0 and workers >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.regressor not in ("example1", "gaussian", "constant"):
            raise ValidationError(f"unknown regressor kind {self.regressor!r}")
        AlgorithmParams(self.mu, self.nu, self.Q or 1)
        NoiseModel(self.noise, self.noise_std)
        if self.regressor == "example1":
            bound = state_space_growth_bound(self.regressor_models(), self.steps)
            if bound > 150:
                raise ValidationError(
                    f"horizon of {self.steps} steps can push regressors to ~1e{bound:.0f}, "
                    "beyond the 1e150 overflow guard; shorten steps"
                )

    # -- resolution -------------------------------------------------------------

    def resolve_topology(self):
        if self.topology_file:
            path = Path(self.topology_file)
            if not path.is_absolute():
                path = Path(self.base_dir) / path
            topo = load_edgelist(path, n=None)
        elif self.topology in PRESETS:
            topo = preset(self.topology)
        elif self.topology in _GENERIC_TOPOLOGIES:
            topo = _GENERIC_TOPOLOGIES[self.topology](self.n)
        else:
            raise ValidationError(
                f"unknown topology {self.topology!r}; use a preset {sorted(PRESETS)}, "
                f"one of {sorted(_GENERIC_TOPOLOGIES)}, or topology_file"
            )
        if topo.n != self.n:
            raise ValidationError(f"topology has {topo.n} nodes but n = {self.n}")
        return topo

    def resolve(self):
        """(weights, params) after checking Q against the graph diameter."""
        topo = self.resolve_topology()
        w = build_metropolis(topo)
        params = AlgorithmParams(self.mu, self.nu, self.Q if self.Q is not None else default_q(topo))
        params.check_graph(topo)
        return w, params

    def regressor_models(self):
        return example1_model(self.n, self.m, self.growth, self.xi_std)

    def make_streams(self, run):
        if self.regressor == "example1":
            reg = StateSpaceStream(self.regressor_models(), seed=self.seed, run=run)
        elif self.regressor == "gaussian":
            reg = GaussianStream(self.n, self.m, std=self.regressor_std, seed=self.seed, run=run)
        else:
            reg = ConstantStream(np.full((self.n, self.m), self.regressor_std))
        noise = NoiseSource(NoiseModel(self.noise, self.noise_std), self.n, seed=self.seed, run=run)
        return reg, noise

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            if f.name == "base_dir":
                continue
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, (tuple, list)):
                value = ", ".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_INT_KEYS = {"n", "m", "Q", "steps", "runs", "seed", "keep_trajectories", "workers"}
_FLOAT_KEYS = {"mu", "nu", "growth", "xi_std", "regressor_std", "noise_std"}
_ARRAY_KEYS = {"theta", "theta_hat_0"}
_STR_KEYS = {"topology", "topology_file", "regressor", "noise", "outputs"}


def parse_config_text(text, base_dir=".", overrides=None):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        values[key] = value
    values.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})

    kwargs = {}
    for key, value in values.items():
        if key not in _INT_KEYS | _FLOAT_KEYS | _ARRAY_KEYS | _STR_KEYS:
            raise ValidationError(f"unknown config key {key!r}")
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key in _ARRAY_KEYS:
                kwargs[key] = tuple(float(v) for v in value.split(",") if v.strip())
            else:
                kwargs[key] = value
        except ValueError:
            raise ValidationError(f"bad value for {key!r}: {value!r}") from None
    if "theta" not in kwargs and "m" in kwargs:
        kwargs["theta"] = tuple(float(v) for v in range(1, kwargs["m"] + 1))
    return ExperimentConfig(base_dir=str(base_dir), **kwargs)


def load_config(path, overrides=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base_dir=path.parent, overrides=overrides)


# -- experiments ------------------------------------------------------------------


@dataclass
class MseSeries:
    """Per-node MSE over runs for steps k = 1..K."""

    k: np.ndarray
    coop: np.ndarray  # (K, n)
    nonco: np.ndarray  # (K, n)

    @property
    def max_coop(self):
        return self.coop.max(axis=1)

    @property
    def min_coop(self):
        return self.coop.min(axis=1)

    @property
    def max_nonco(self):
        return self.nonco.max(axis=1)

    @property
    def min_nonco(self):
        return self.nonco.min(axis=1)


@dataclass
class RunOutput:
    run: int
    sq_coop: np.ndarray
    sq_nonco: np.ndarray
    trajectory: object
    draws: dict


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    series: MseSeries
    trajectories: list
    draws: list


def _single_run(config, run, keep):
    w, params = config.resolve()
    theta = np.asarray(config.theta, dtype=float)
    reg, noise = config.make_streams(run)
    coop = init_network(config.n, config.m, config.theta_hat_0)
    nonco = init_network(config.n, config.m, config.theta_hat_0)
    recorder = TrajectoryRecorder(coop.theta_hat, {"seed": config.seed, "run": run}) if keep else None
    K = config.steps
    sq_coop = np.empty((K, config.n))
    sq_nonco = np.empty((K, config.n))
    fed = {"coop": 0, "nonco": 0}
    for k in range(1, K + 1):
        try:
            phi = reg.step(k)
        except HorizonOverflowError as exc:
            raise HorizonOverflowError(exc.sensor, exc.step, exc.value, run=run) from None
        eps = noise.sample(k)
        y = phi @ theta + eps
        # both recursions consume the same draw
        coop = network_step(coop, w, params, phi, y)
        fed["coop"] += 1
        nonco = standard_sg_network_step(nonco, params.mu, phi, y)
        fed["nonco"] += 1
        sq_coop[k - 1] = ((coop.theta_hat - theta) ** 2).sum(axis=1)
        sq_nonco[k - 1] = ((nonco.theta_hat - theta) ** 2).sum(axis=1)
        if recorder is not None:
            recorder.append(phi, y, eps, coop)
    draws = {"regressor": reg.draws, "noise": noise.draws, **fed}
    return RunOutput(run, sq_coop, sq_nonco, recorder.record() if recorder else None, draws)


def _run_star(args):
    return _single_run(*args)


def run_experiment(config, workers=None):
    """Monte Carlo comparison on paired draws; MSE averaged in run order."""
    config.resolve()  # fail fast on topology / Q problems
    workers = workers or config.workers
    jobs = [(config, run, run < config.keep_trajectories) for run in range(config.runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_star, jobs))
    else:
        outputs = [_single_run(*job) for job in jobs]
    sum_coop = np.zeros((config.steps, config.n))
    sum_nonco = np.zeros((config.steps, config.n))
    for out in sorted(outputs, key=lambda o: o.run):
        sum_coop += out.sq_coop
        sum_nonco += out.sq_nonco
    series = MseSeries(np.arange(1, config.steps + 1), sum_coop / config.runs, sum_nonco / config.runs)
    trajectories = [o.trajectory for o in outputs if o.trajectory is not None]
    log.info("finished %d runs of %d steps", config.runs, config.steps)
    return ExperimentResult(config, series, trajectories, [o.draws for o in outputs])


# -- outputs ------------------------------------------------------------------------


def write_mse_csv(series, path):
    n = series.coop.shape[1]
    header = (["k"] + [f"mse_coop_{i}" for i in range(1, n + 1)]
              + [f"mse_nonco_{i}" for i in range(1, n + 1)]
              + ["max_coop", "min_coop", "max_nonco", "min_nonco"])
    lines = [",".join(header)]
    extra = np.column_stack([series.max_coop, series.min_coop, series.max_nonco, series.min_nonco])
    for t, k in enumerate(series.k):
        vals = np.concatenate([series.coop[t], series.nonco[t], extra[t]])
        lines.append(",".join([str(int(k))] + [repr(float(v)) for v in vals]))
    Path(path).write_text("\n".join(lines) + "\n")


def plot_mse(series, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "distsg", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        ax.semilogy(series.k, series.max_coop, color="C0", label="cooperative max MSE")
        ax.semilogy(series.k, series.min_coop, color="C0", ls="--", label="cooperative min MSE")
        ax.semilogy(series.k, series.max_nonco, color="C3", label="non-cooperative max MSE")
        ax.semilogy(series.k, series.min_nonco, color="C3", ls="--", label="non-cooperative min MSE")
        ax.set_xlim(series.k[0], series.k[-1])
        ax.set_xlabel("k")
        ax.set_ylabel("MSE")
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def summarize(result):
    cfg, s = result.config, result.series
    lines = [
        f"runs = {cfg.runs}, steps = {cfg.steps}, seed = {cfg.seed}",
        f"final max MSE cooperative     = {s.max_coop[-1]!r}",
        f"final min MSE cooperative     = {s.min_coop[-1]!r}",
        f"final max MSE non-cooperative = {s.max_nonco[-1]!r}",
        f"final min MSE non-cooperative = {s.min_nonco[-1]!r}",
        f"max MSE ratio final/first cooperative     = {s.max_coop[-1] / s.max_coop[0]!r}",
        f"min MSE ratio final/first non-cooperative = {s.min_nonco[-1] / s.min_nonco[0]!r}",
    ]
    if result.trajectories:
        traj = result.trajectories[0]
        rep = excitation_report(traj)
        lines.append(f"fitted excitation constant N (run 0) = {rep.N_fitted!r}")
        lines.append(f"cooperative excitation verdict (run 0) = {'PASS' if rep.network_holds else 'FAIL'}")
        lines.append(
            f"per-sensor excitation PASS count (run 0) = {int(rep.sensor_excitation_holds.sum())}/{cfg.n}"
        )
        try:
            fit = rate_fit(traj, cfg.theta)
            lines.append(f"fitted rate exponent d1_hat (run 0) = {fit.d1_hat!r} over k in {fit.window}")
        except ValidationError as exc:
            lines.append(f"rate fit unavailable: {exc}")
    return "\n".join(lines) + "\n"


def emit_outputs(result, out_dir):
    """Write mse.csv, summary.txt, mse.svg, config.txt and kept trajectories."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_mse_csv(result.series, out / "mse.csv")
        (out / "summary.txt").write_text(summarize(result))
        (out / "config.txt").write_text(result.config.to_text())
        plot_mse(result.series, out / "mse.svg")
        for traj in result.trajectories:
            traj.to_csv(out / f"trajectory_run{traj.meta.get('run', 0)}.csv")
    except OSError as exc:
        raise OSError(f"failed writing outputs to {out}: {exc}") from exc
    return sorted(p.name for p in out.iterdir())
