"""Truth simulation, contaminated measurements, and paired-seed Monte-Carlo RMSE runs."""

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .adaptive import AdaptiveConfig, SlidingWindow, ackf_step, cmrackf_step
from .ckf import Gaussian, ckf_step
from .models import NoiseSpec, TargetScenario, target_measure, target_model, target_process, wrap_angle
from .numerics import LengthMismatch

VARIANTS = ("ckf", "ackf", "cmrackf")
OUTLIER_MODES = ("additive_spike", "variance_inflation")
POSITION = (0, 2)


@dataclass(frozen=True)
class OutlierModel:
    probability: float = 0.05
    magnitude: float = 10.0
    mode: str = "additive_spike"

    def __post_init__(self):
        if not 0.0 <= self.probability < 1.0:
            raise ValueError("outlier probability must be in [0, 1)")
        if not self.magnitude >= 1.0:
            raise ValueError("outlier magnitude must be >= 1")
        if self.mode not in OUTLIER_MODES:
            raise ValueError(f"outlier mode must be one of {OUTLIER_MODES}")


def default_filter_noise():
    return NoiseSpec(Q=0.01 * np.eye(4), R=np.diag([5.0**2, np.deg2rad(0.5) ** 2]))


def default_truth_noise():
    # the simulated target maneuvers harder and the sensor is sharper than the
    # filters' hand-tuned nominal values assume
    return NoiseSpec(Q=0.1 * np.eye(4), R=np.diag([1.0, np.deg2rad(0.1) ** 2]))


@dataclass(frozen=True)
class Setup:
    """Everything one Monte-Carlo run needs besides its seed."""

    scenario: TargetScenario = field(default_factory=TargetScenario)
    truth_noise: NoiseSpec = field(default_factory=default_truth_noise)
    filter_noise: NoiseSpec = field(default_factory=default_filter_noise)
    outliers: OutlierModel = field(default_factory=OutlierModel)
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    P0_diag: Tuple[float, ...] = (100.0, 100.0, 10.0, 10.0)

    def initial_belief(self):
        P0 = np.diag(self.P0_diag)
        mean = np.asarray(self.scenario.x0) + np.sqrt(np.asarray(self.P0_diag))
        return Gaussian(mean, P0)


@dataclass
class Trajectory:
    states: np.ndarray  # (steps + 1, 4)
    timestamps: np.ndarray

    def __len__(self):
        return len(self.states)


@dataclass
class RunResult:
    label: str
    seed: int
    truth: np.ndarray
    estimates: np.ndarray  # (k + 1, n), row 0 is the initial belief
    innovations: np.ndarray
    R_diag: np.ndarray
    weights: List[Optional[np.ndarray]]
    diverged: bool = False
    error: str = ""

    @property
    def steps(self):
        return len(self.estimates) - 1

    @property
    def position_error(self):
        n = len(self.estimates)
        d = self.estimates[:, POSITION] - self.truth[:n, POSITION]
        return np.sqrt((d**2).sum(axis=1))


@dataclass
class RmseTable:
    variants: List[str]
    per_run: List[dict]
    mean: dict
    diverged: dict
    runs: int

    def values(self, variant):
        return np.array([r["rmse_m"] for r in self.per_run if r["filter"] == variant])


def _noise(rng, cov, size):
    """Zero-mean Gaussian draws through a symmetric square root (tolerates singular ``cov``)."""
    cov = np.atleast_2d(cov)
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    root = v * np.sqrt(np.clip(w, 0.0, None))
    return rng.standard_normal((size, cov.shape[0])) @ root.T


def simulate_truth(scenario: TargetScenario, Q, seed) -> Trajectory:
    rng = np.random.default_rng(seed)
    w = _noise(rng, Q, scenario.steps)
    states = np.empty((scenario.steps + 1, 4))
    states[0] = scenario.x0
    for k in range(scenario.steps):
        states[k + 1] = target_process(states[k], scenario) + w[k]
    return Trajectory(states, scenario.Ts * np.arange(scenario.steps + 1))


def simulate_measurements(traj: Trajectory, scenario, R, outliers: OutlierModel, seed, return_flags=False):
    """One noisy range/bearing measurement per step after the initial state."""
    rng = np.random.default_rng(seed)
    R = np.atleast_2d(R)
    k = len(traj) - 1
    clean = target_measure(traj.states[1:], scenario).reshape(k, 2)
    v = _noise(rng, R, k)
    hit = rng.random(k) < outliers.probability
    signs = rng.choice([-1.0, 1.0], size=(k, 2))
    if outliers.mode == "additive_spike":
        v[hit] += outliers.magnitude * np.sqrt(np.diag(R)) * signs[hit]
    else:
        v[hit] *= outliers.magnitude
    z = clean + v
    z[:, 1] = wrap_angle(z[:, 1])
    return (z, hit) if return_flags else z


def run_filter(variant, scenario, measurements, init: Gaussian, noise: NoiseSpec, config=None, truth=None, seed=0):
    """Run one filter over ``measurements`` from ``init``.

    A step that raises or produces a non-finite state ends the run early and
    marks it diverged; the steps completed so far are kept.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    config = config or AdaptiveConfig()
    model = target_model(scenario) if isinstance(scenario, TargetScenario) else scenario
    window = SlidingWindow(config.window_size)
    Q, R = noise.Q, noise.R
    u = model.zero_input()
    belief = init
    estimates = [init.mean]
    innovations, R_diag, weights = [], [], []
    diverged, error = False, ""
    for z in np.atleast_2d(measurements) if len(measurements) else []:
        try:
            if variant == "ckf":
                belief, out = ckf_step(model, belief, z, u, Q, R, joseph=config.joseph)
                R_used, w = R, None
            else:
                if variant == "ackf":
                    belief, out = ackf_step(model, belief, z, u, Q, R, window, config)
                else:
                    belief, out = cmrackf_step(
                        model, belief, z, u, Q, R, window, config, nominal_Q=noise.Q
                    )
                R_used, w, Q = out.R, out.weights, out.Q_next
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            diverged, error = True, f"{type(exc).__name__}: {exc}"
            break
        if not (np.all(np.isfinite(belief.mean)) and np.all(np.isfinite(belief.cov))):
            diverged, error = True, "non-finite state"
            break
        estimates.append(belief.mean)
        innovations.append(out.innovation)
        R_diag.append(np.diag(R_used).copy())
        weights.append(w)
    m = model.m
    return RunResult(
        label=variant,
        seed=seed,
        truth=np.empty((0, model.n)) if truth is None else truth.states,
        estimates=np.array(estimates),
        innovations=np.array(innovations).reshape(-1, m),
        R_diag=np.array(R_diag).reshape(-1, m),
        weights=weights,
        diverged=diverged,
        error=error,
    )


def position_rmse(result: RunResult, truth: Trajectory):
    """Position RMSE (m) over the filtered steps 1..N, using components (x1, x3)."""
    if len(result.estimates) != len(truth.states):
        raise LengthMismatch(
            f"{len(result.estimates)} estimates vs {len(truth.states)} truth states"
        )
    d = result.estimates[1:, POSITION] - truth.states[1:, POSITION]
    if len(d) == 0:
        return 0.0
    return float(np.sqrt(np.mean((d**2).sum(axis=1))))


def run_seed(base_seed, run):
    return int(np.random.SeedSequence([base_seed, run]).generate_state(1)[0])


def realization(setup: Setup, seed):
    """Truth trajectory and measurements shared by every variant of one run."""
    truth = simulate_truth(setup.scenario, setup.truth_noise.Q, np.random.SeedSequence([seed, 0]))
    z = simulate_measurements(
        truth, setup.scenario, setup.truth_noise.R, setup.outliers, np.random.SeedSequence([seed, 1])
    )
    return truth, z


def measurement_digest(z):
    return hashlib.sha256(np.ascontiguousarray(z, dtype=np.float64).tobytes()).hexdigest()


def _one_run(args):
    setup, variants, base_seed, run = args
    seed = run_seed(base_seed, run)
    truth, z = realization(setup, seed)
    digest = measurement_digest(z)
    rows = []
    for v in variants:
        res = run_filter(v, setup.scenario, z, setup.initial_belief(), setup.filter_noise, setup.adaptive, truth, seed)
        rmse = float("nan") if res.diverged else position_rmse(res, truth)
        rows.append({"run": run, "seed": seed, "filter": v, "rmse_m": rmse, "diverged": res.diverged, "digest": digest})
    return rows


def monte_carlo(variants: Sequence[str], setup: Setup, runs=50, base_seed=0, workers=1) -> RmseTable:
    """Paired-seed Monte-Carlo: each run index shares one realization across variants.

    Serial and parallel execution give identical tables because every run
    derives its own generators from ``(base_seed, run)``.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    variants = list(variants)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    jobs = [(setup, variants, base_seed, r) for r in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_one_run, jobs))
    else:
        chunks = [_one_run(j) for j in jobs]
    per_run = [row for chunk in chunks for row in chunk]
    mean, diverged = {}, {}
    for v in variants:
        ok = [r["rmse_m"] for r in per_run if r["filter"] == v and not r["diverged"]]
        mean[v] = float(np.mean(ok)) if ok else float("nan")
        diverged[v] = sum(1 for r in per_run if r["filter"] == v and r["diverged"])
    return RmseTable(variants, per_run, mean, diverged, runs)
