"""Experiment harness: config files, Monte Carlo sweeps, regret reports.

Experiments are described by a flat ``key=value`` config file (``#`` starts
a comment). Keys are exactly the fields of :class:`ExperimentConfig`:

===============  ==========================================================
``M``            number of arms
``T``            horizon (rounds per run)
``runs``         independent runs
``seed``         base seed; run r uses the spawned child stream (seed, r)
``gamma``        positive float, or ``auto`` = sqrt(complexity budget)
``model``        ``fixed`` or ``switching:<alpha>``
``env``          ``piecewise`` or ``csv:<path>``
``env_seed``     seed of the piecewise noise stream
``noise_width``  width of the uniform noise band (piecewise)
``segments``     ``<len>@<m1|m2|...>;<len>@...`` per-segment arm means
``affine``       optional ``a,b``: play against a*loss+b instead
``competition``  regret oracle: ``fixed`` or ``switching:<k>`` (k switches)
``output``       optional path prefix for ``<prefix>_runs.csv`` and
                 ``<prefix>_summary.csv``
===============  ==========================================================

All runs are advanced in lockstep as one vectorized batch; each run keeps
its own counter-based random stream, so every run selects exactly the arms
it would select if played alone (the test suite checks this equivalence).

CSV conventions match the scripted-stream format: 0-based round column
``t``, 1-based ``arm``. The ``eta`` column reports ``inf`` while the
adaptive rate is still degenerate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from . import environments, reference
from .competitions import CompetitionModel, complexity, default_gamma, parse_model
from .core import mixture_coefficient
from .environments import LossStream
from .rng import run_generator

RUNS_HEADER = "run,t,arm,loss,cum_loss,comp_arm,comp_loss,regret,eta,epsilon,psi"
SUMMARY_HEADER = "t,mean_regret,stderr_regret,bound"


class ConfigError(ValueError):
    """Bad experiment configuration; the message names the offending key."""


@dataclass
class ExperimentConfig:
    M: int = 2
    T: int = 1
    runs: int = 1
    seed: int = 0
    gamma: str | float = "auto"
    model: str = "fixed"
    env: str = "piecewise"
    env_seed: int = 0
    noise_width: float = 0.0
    segments: str | None = None
    affine: str | None = None
    competition: str = "fixed"
    output: str | None = None


_CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    if key in ("M", "T", "runs", "seed", "env_seed"):
        return int(raw)
    if key == "noise_width":
        return float(raw)
    if key == "gamma":
        if raw == "auto":
            return raw
        value = float(raw)
        if not value > 0:
            raise ValueError("must be positive")
        return value
    return raw


def apply_overrides(cfg: ExperimentConfig, pairs: list[str]) -> ExperimentConfig:
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            updates[key] = _convert(key, raw.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for key {key!r}: {exc}") from None
    return replace(cfg, **updates)


def parse_config(path) -> ExperimentConfig:
    pairs = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {line!r}")
            pairs.append(line)
    cfg = apply_overrides(ExperimentConfig(), pairs)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.M < 2:
        raise ConfigError(f"key 'M': need at least 2 arms, got {cfg.M}")
    if cfg.T < 1:
        raise ConfigError(f"key 'T': horizon must be >= 1, got {cfg.T}")
    if cfg.runs < 1:
        raise ConfigError(f"key 'runs': must be >= 1, got {cfg.runs}")


def parse_segments(spec: str, n_arms: int) -> list[tuple[int, list[float]]]:
    segments = []
    for part in spec.split(";"):
        part = part.strip()
        if "@" not in part:
            raise ConfigError(f"key 'segments': segment {part!r} is not <len>@<means>")
        length, means_raw = part.split("@", 1)
        try:
            means = [float(x) for x in means_raw.split("|")]
            segments.append((int(length), means))
        except ValueError as exc:
            raise ConfigError(f"key 'segments': bad segment {part!r}: {exc}") from None
        if len(means) != n_arms:
            raise ConfigError(
                f"key 'segments': segment {part!r} has {len(means)} means, expected {n_arms}"
            )
    return segments


def build_stream(cfg: ExperimentConfig) -> LossStream:
    if cfg.env == "piecewise":
        if cfg.segments is None:
            raise ConfigError("key 'segments': required for the piecewise environment")
        segs = parse_segments(cfg.segments, cfg.M)
        try:
            stream = environments.piecewise_stationary(
                cfg.M, cfg.T, segs, cfg.noise_width, cfg.env_seed
            )
        except ValueError as exc:
            raise ConfigError(f"key 'segments': {exc}") from None
    elif cfg.env.startswith("csv:"):
        stream = environments.load_csv(cfg.env[4:])
        if stream.n_arms != cfg.M or stream.horizon != cfg.T:
            raise ConfigError(
                f"key 'env': stream is {stream.horizon}x{stream.n_arms}, "
                f"config wants {cfg.T}x{cfg.M}"
            )
    else:
        raise ConfigError(f"key 'env': unknown environment {cfg.env!r}")
    if cfg.affine is not None:
        try:
            a_raw, b_raw = cfg.affine.split(",")
            stream = environments.affine(stream, float(a_raw), float(b_raw))
        except ValueError as exc:
            raise ConfigError(f"key 'affine': expected 'a,b' with a > 0: {exc}") from None
    return stream


def competition_path(cfg: ExperimentConfig, stream: LossStream) -> tuple[np.ndarray, int]:
    """Oracle arm path for the configured competition, plus its switch budget."""
    if cfg.competition == "fixed":
        arm, _ = reference.best_fixed_arm(stream)
        return np.full(stream.horizon, arm, dtype=np.intp), 0
    if cfg.competition.startswith("switching:"):
        raw = cfg.competition.split(":", 1)[1]
        try:
            k = int(raw)
        except ValueError:
            raise ConfigError(f"key 'competition': bad switch count {raw!r}") from None
        if k < 0:
            raise ConfigError(f"key 'competition': switch count must be >= 0, got {k}")
        path, _ = reference.best_switching_sequence(stream, k)
        return path, k
    raise ConfigError(f"key 'competition': unknown oracle {cfg.competition!r}")


# ---------------------------------------------------------------------------
# vectorized multi-run engine
# ---------------------------------------------------------------------------

@dataclass
class SimulationRecord:
    """Per-round, per-run trajectories of a Monte Carlo sweep."""

    arms: np.ndarray       # (runs, T) selected arm per round
    losses: np.ndarray     # (runs, T) incurred loss
    eta: np.ndarray        # (runs, T) realized rate, inf while degenerate
    psi: np.ndarray        # (runs, T) running minimum after the round
    eps: np.ndarray        # (T,) exploration floor (shared across runs)
    final_probs: np.ndarray  # (runs, M) arm probabilities after round T


def _row_logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return m[:, 0] + np.log(np.exp(a - m).sum(axis=1))


def simulate_runs(model: CompetitionModel, gamma: float, stream: LossStream,
                  base_seed: int, runs: int) -> SimulationRecord:
    """Play `runs` independent learners over the stream in lockstep.

    Run r draws its arms from the spawned stream (base_seed, r). Each row
    reproduces a sequential :class:`~scalefree_bandit.core.ScaleFreeBandit`
    with the same stream: identical arm selections and running minima, with
    probabilities and rates agreeing to within a few ulp (scalar vs
    vectorized transcendentals round differently). Only models whose
    classes coincide with arms are supported here (both shipped models);
    use :func:`simulate_runs_sequential` for richer models.
    """
    n = model.n_classes
    n_arms = model.n_arms
    if n != n_arms or not np.array_equal(model.arm_of, np.arange(n)):
        raise ValueError("vectorized engine requires one class per arm")
    if model.kind not in ("identity", "fixed_share"):
        raise ValueError(f"vectorized engine does not support kind {model.kind!r}")
    matrix = stream.matrix
    horizon = stream.horizon
    uniforms = np.empty((runs, horizon))
    for r in range(runs):
        uniforms[r] = run_generator(base_seed, r).random(horizon)

    log_w = np.tile(model.log_prior, (runs, 1))
    e = np.exp(log_w - log_w.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    min_loss = np.full(runs, np.inf)
    second = np.zeros(runs)
    spread = np.zeros(runs)
    rate_prev = np.full(runs, np.nan)
    rows = np.arange(runs)

    if model.kind == "fixed_share":
        stay_excess = 1.0 - model.alpha - model.alpha / (n - 1)
        if stay_excess < 0:
            raise ValueError("vectorized engine requires alpha <= (M-1)/M")
        log_stay = math.log(stay_excess) if stay_excess > 0 else -math.inf
        log_spread = math.log(model.alpha / (n - 1))

    arms = np.empty((runs, horizon), dtype=np.int16)
    losses = np.empty((runs, horizon))
    eta = np.empty((runs, horizon))
    psi = np.empty((runs, horizon))
    eps_hist = np.empty(horizon)

    for t in range(horizon):
        eps = mixture_coefficient(t + 1, n_arms)
        q = (1.0 - eps) * p + eps / n_arms
        cdf = np.cumsum(q, axis=1)
        u = uniforms[:, t]
        arm = np.argmax(u[:, None] < cdf, axis=1)
        overflow = u >= cdf[:, -1]
        if overflow.any():
            arm[overflow] = n_arms - 1
        loss = matrix[t, arm]
        np.minimum(min_loss, loss, out=min_loss)
        excess = (loss - min_loss) / q[rows, arm]
        second += p[rows, arm] * excess * excess
        np.maximum(spread, excess, out=spread)
        denom = second + spread * spread
        positive = denom > 0
        rate = np.full(runs, np.nan)
        rate[positive] = gamma / np.sqrt(denom[positive])
        degenerate = np.isnan(rate_prev)
        exponent_rate = np.where(degenerate, rate, rate_prev)
        with np.errstate(invalid="ignore"):
            exponent = np.where(excess == 0.0, 0.0, exponent_rate * excess)
            power = np.where(degenerate, 1.0, rate / rate_prev)
        log_w[rows, arm] -= exponent

        powered = power[:, None] * log_w
        if model.kind == "identity":
            log_next = powered
        else:
            total_in = _row_logsumexp(powered)
            log_next = np.logaddexp(log_stay + powered, (log_spread + total_in)[:, None])
        log_w = log_next - _row_logsumexp(log_next)[:, None]
        e = np.exp(log_w - log_w.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)
        rate_prev = rate

        arms[:, t] = arm
        losses[:, t] = loss
        eta[:, t] = np.where(np.isnan(rate), np.inf, rate)
        psi[:, t] = min_loss
        eps_hist[t] = eps

    return SimulationRecord(arms, losses, eta, psi, eps_hist, p)


def simulate_runs_sequential(model: CompetitionModel, gamma: float, stream: LossStream,
                             base_seed: int, runs: int) -> SimulationRecord:
    """Reference path: one ScaleFreeBandit per run, played to the horizon."""
    from .core import ScaleFreeBandit

    horizon, n_arms = stream.horizon, stream.n_arms
    arms = np.empty((runs, horizon), dtype=np.int16)
    losses = np.empty((runs, horizon))
    eta = np.empty((runs, horizon))
    psi = np.empty((runs, horizon))
    eps_hist = np.empty(horizon)
    final_probs = np.empty((runs, n_arms))
    for r in range(runs):
        state = ScaleFreeBandit(model, gamma, rng=run_generator(base_seed, r))
        for t in range(horizon):
            arm, _ = state.select()
            loss = stream.loss(t, arm)
            state.update(loss)
            arms[r, t] = arm
            losses[r, t] = loss
            rate = state.stats.rate_prev
            eta[r, t] = np.inf if rate is None else rate
            psi[r, t] = state.stats.min_loss
            if r == 0:
                eps_hist[t] = mixture_coefficient(t + 1, n_arms)
        final_probs[r] = state.probabilities
    return SimulationRecord(arms, losses, eta, psi, eps_hist, final_probs)


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------

@dataclass
class RegretReport:
    """Aggregated outcome of a Monte Carlo experiment.

    ``mean_regret[t]`` is the mean over runs of the cumulative regret after
    t+1 rounds against the fixed competition path; the bound column is the
    theoretical envelope D * sqrt(M*t) * (5 + 4*sqrt(W)) at every prefix.
    """

    gamma: float
    comp_path: np.ndarray
    comp_loss: float
    path_complexity: float
    range_width: float
    mean_regret: np.ndarray
    stderr_regret: np.ndarray
    bound_curve: np.ndarray
    final_regrets: np.ndarray
    record: SimulationRecord

    @property
    def mean_final(self) -> float:
        return float(self.mean_regret[-1])

    @property
    def stderr_final(self) -> float:
        return float(self.stderr_regret[-1])

    @property
    def bound(self) -> float:
        return float(self.bound_curve[-1])

    @property
    def bound_satisfied(self) -> bool:
        return self.mean_final + 2.0 * self.stderr_final <= self.bound


def run_experiment(cfg: ExperimentConfig, engine=simulate_runs) -> RegretReport:
    validate_config(cfg)
    try:
        model = parse_model(cfg.model, cfg.M)
    except ValueError as exc:
        raise ConfigError(f"key 'model': {exc}") from None
    stream = build_stream(cfg)
    comp_path, k = competition_path(cfg, stream)
    comp_losses = stream.matrix[np.arange(stream.horizon), comp_path]
    path_w = complexity(model, comp_path)
    if cfg.gamma == "auto":
        gamma = default_gamma(model, cfg.T, k)
    else:
        gamma = float(cfg.gamma)

    record = engine(model, gamma, stream, cfg.seed, cfg.runs)

    cum_losses = np.cumsum(record.losses, axis=1)
    comp_cum = np.cumsum(comp_losses)
    regret = cum_losses - comp_cum
    mean_regret = regret.mean(axis=0)
    if cfg.runs > 1:
        stderr = regret.std(axis=0, ddof=1) / math.sqrt(cfg.runs)
    else:
        stderr = np.zeros(stream.horizon)
    width = stream.range_width()
    rounds = np.arange(1, stream.horizon + 1, dtype=np.float64)
    bound_curve = width * np.sqrt(cfg.M * rounds) * (5.0 + 4.0 * math.sqrt(path_w))

    report = RegretReport(
        gamma=gamma,
        comp_path=comp_path,
        comp_loss=float(comp_cum[-1]),
        path_complexity=path_w,
        range_width=width,
        mean_regret=mean_regret,
        stderr_regret=stderr,
        bound_curve=bound_curve,
        final_regrets=regret[:, -1].copy(),
        record=record,
    )
    if cfg.output is not None:
        write_runs_csv(f"{cfg.output}_runs.csv", record, comp_path, comp_losses)
        write_summary_csv(f"{cfg.output}_summary.csv", report)
    return report


def write_runs_csv(path, record: SimulationRecord, comp_path: np.ndarray,
                   comp_losses: np.ndarray) -> None:
    runs, horizon = record.arms.shape
    cum_losses = np.cumsum(record.losses, axis=1)
    comp_cum = np.cumsum(comp_losses)
    with open(path, "w", newline="") as fh:
        fh.write(RUNS_HEADER + "\n")
        writer = csv.writer(fh)
        for r in range(runs):
            arm_row = record.arms[r]
            loss_row = record.losses[r]
            cum_row = cum_losses[r]
            eta_row = record.eta[r]
            psi_row = record.psi[r]
            writer.writerows(
                (
                    r,
                    t,
                    int(arm_row[t]) + 1,
                    repr(float(loss_row[t])),
                    repr(float(cum_row[t])),
                    int(comp_path[t]) + 1,
                    repr(float(comp_losses[t])),
                    repr(float(cum_row[t] - comp_cum[t])),
                    repr(float(eta_row[t])),
                    repr(float(record.eps[t])),
                    repr(float(psi_row[t])),
                )
                for t in range(horizon)
            )


def write_summary_csv(path, report: RegretReport) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        writer = csv.writer(fh)
        writer.writerow([0, repr(0.0), repr(0.0), repr(0.0)])
        for t in range(report.mean_regret.shape[0]):
            writer.writerow(
                [
                    t + 1,
                    repr(float(report.mean_regret[t])),
                    repr(float(report.stderr_regret[t])),
                    repr(float(report.bound_curve[t])),
                ]
            )
