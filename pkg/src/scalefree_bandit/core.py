"""Adversarial bandit state machine with affine-invariant selection behavior.

The algorithm keeps one log-domain weight per competition-model class,
turns them into arm probabilities, explores with a decaying uniform
mixture, and learns from an importance-weighted excess loss: the incurred
loss minus the smallest loss seen so far, divided by the probability of
the selected arm. Translating or positively rescaling every loss leaves
the selection behavior unchanged because the excess rescales while the
self-tuned learning rate rescales inversely.

One round, in order:

1. mix exploration into the current arm probabilities and sample an arm;
2. observe the selected arm's loss, update the running minimum, and form
   the excess estimate (zero for every unselected arm);
3. accumulate the second-moment sum and the running maximum spread that
   drive the adaptive learning rate;
4. multiply the selected arm's class weights by exp(-rate * excess) using
   the previous round's rate, raise everything to the ratio of consecutive
   rates, and push the result through the model's probability-sharing
   transitions to obtain the next round's weights.

Rounds where no excess has ever been observed have an undefined adaptive
rate; that degenerate case is resolved by substituting the current rate
(making the power ratio one) and, when the current rate is undefined too,
by an identity update.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .competitions import CompetitionModel, parse_model
from .rng import generator_state, make_generator, restore_generator

SNAPSHOT_FORMAT = "scalefree-bandit-snapshot"
SNAPSHOT_VERSION = 1


class ProtocolError(RuntimeError):
    """select/update called out of order."""


class NumericalDegeneracyError(ArithmeticError):
    """Every class weight collapsed to zero; no distribution can be formed."""


@dataclass(frozen=True)
class AdaptiveState:
    """Scalar bookkeeping that drives exploration and the learning rate.

    ``rate_prev`` is the learning rate realized in the previous round, or
    None while it is still degenerate (no excess observed yet).
    """

    round: int
    min_loss: float
    second_moment: float
    spread_max: float
    rate_prev: float | None
    gamma: float | None
    n_arms: int


@dataclass(frozen=True)
class PerformanceMeasure:
    """Importance-weighted excess loss of the selected arm.

    Unselected arms implicitly measure zero, so a single scalar suffices.
    """

    value: float
    arm: int
    selection_prob: float


def _logsumexp(a: np.ndarray) -> float:
    m = a.max()
    if m == -np.inf:
        return -math.inf
    return float(m + math.log(np.exp(a - m).sum()))


def _softmax_from_log(log_w: np.ndarray) -> np.ndarray:
    m = log_w.max()
    if m == -np.inf:
        raise NumericalDegeneracyError("all class weights are zero")
    e = np.exp(log_w - m)
    return e / e.sum()


def mixture_coefficient(t: int, n_arms: int) -> float:
    """Exploration floor for round t: min(1/2, sqrt(n_arms / t))."""
    if n_arms < 2:
        raise ValueError(f"need at least 2 arms, got {n_arms}")
    if t < 1:
        raise ValueError(f"rounds are numbered from 1, got {t}")
    return min(0.5, math.sqrt(n_arms / t))


def selection_probabilities(p: np.ndarray, eps: float) -> np.ndarray:
    """Mix the arm probabilities with a uniform floor of eps."""
    if not 0.0 < eps <= 0.5:
        raise ValueError(f"mixture coefficient must be in (0, 1/2], got {eps}")
    return (1.0 - eps) * p + eps / p.shape[0]


def arm_marginals(log_weights: np.ndarray, model: CompetitionModel) -> np.ndarray:
    """Normalized per-arm probabilities from class log-weights.

    Sums the weights of the classes mapped to each arm in log domain with
    max subtraction, so any uniform shift of the log-weights leaves the
    result unchanged.
    """
    n = model.n_classes
    if n == model.n_arms and np.array_equal(model.arm_of, np.arange(n)):
        return _softmax_from_log(log_weights)
    arm_max = np.full(model.n_arms, -np.inf)
    np.maximum.at(arm_max, model.arm_of, log_weights)
    if not (arm_max > -np.inf).any():
        raise NumericalDegeneracyError("all class weights are zero")
    with np.errstate(invalid="ignore"):
        shifted = np.where(log_weights == -np.inf, 0.0, np.exp(log_weights - arm_max[model.arm_of]))
    sums = np.zeros(model.n_arms)
    np.add.at(sums, model.arm_of, shifted)
    with np.errstate(divide="ignore"):
        log_arm = np.where(arm_max > -np.inf, arm_max + np.log(np.maximum(sums, 1e-300)), -np.inf)
    return _softmax_from_log(log_arm)


def sample_arm(q: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw over arms in ascending index order (one uniform)."""
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(q), u, side="right"))
    return min(idx, q.shape[0] - 1)


def performance_measure(
    loss: float, arm: int, q_selected: float, min_loss_prev: float
) -> tuple[PerformanceMeasure, float]:
    """Excess of the incurred loss over the updated running minimum,
    importance-weighted by the selection probability. Never negative."""
    if not 0.0 < q_selected <= 1.0:
        raise ValueError(f"selection probability must be in (0, 1], got {q_selected}")
    new_min = loss if loss < min_loss_prev else min_loss_prev
    return PerformanceMeasure((loss - new_min) / q_selected, arm, q_selected), new_min


def update_statistics(
    stats: AdaptiveState, pm: PerformanceMeasure, p_selected: float
) -> AdaptiveState:
    """Fold one round's excess into the second-moment sum and max spread."""
    v = p_selected * pm.value * pm.value
    spread = pm.value if pm.value > stats.spread_max else stats.spread_max
    return replace(stats, second_moment=stats.second_moment + v, spread_max=spread)


def learning_rate(stats: AdaptiveState) -> float | None:
    """gamma / sqrt(second-moment sum + max spread squared); None while zero."""
    denom = stats.second_moment + stats.spread_max * stats.spread_max
    if denom <= 0.0:
        return None
    return stats.gamma / math.sqrt(denom)


def exponential_update(
    log_weights: np.ndarray, model: CompetitionModel, arm: int, excess: float, rate: float
) -> np.ndarray:
    """Multiply the selected arm's classes by exp(-rate * excess) (log domain).

    Classes of unselected arms are untouched: their excess is zero.
    """
    log_z = log_weights.copy()
    log_z[model.arm_of == arm] -= rate * excess
    return log_z


def weight_share(
    log_z: np.ndarray, model: CompetitionModel, power: float
) -> tuple[np.ndarray, float, float]:
    """Raise intermediate weights to `power` and push them through the
    model's transitions.

    Returns (next log-weights, log total mass in, log total mass out);
    the two totals agree up to floating-point error because transition
    rows are stochastic, which is the conservation diagnostic.
    """
    if not 0.0 < power <= 1.0:
        raise ValueError(f"power must be in (0, 1], got {power}")
    powered = power * log_z
    if model.kind == "identity":
        total = _logsumexp(powered)
        return powered, total, total
    if model.kind == "fixed_share":
        n = model.n_classes
        alpha = model.alpha
        stay_excess = 1.0 - alpha - alpha / (n - 1)
        if stay_excess >= 0.0:
            total_in = _logsumexp(powered)
            log_stay = math.log(stay_excess) if stay_excess > 0.0 else -math.inf
            log_spread = math.log(alpha / (n - 1))
            out = np.logaddexp(log_stay + powered, log_spread + total_in)
            return out, total_in, _logsumexp(out)
        # alpha so large that leaving is likelier than staying: dense fallback
    log_t = model.log_transition_matrix()
    terms = log_t + powered[:, None]
    col_max = terms.max(axis=0)
    with np.errstate(invalid="ignore"):
        safe = np.where(terms == -np.inf, 0.0, np.exp(terms - col_max))
    out = np.where(col_max > -np.inf, col_max + np.log(np.maximum(safe.sum(axis=0), 1e-300)), -np.inf)
    return out, _logsumexp(powered), _logsumexp(out)


class ScaleFreeBandit:
    """One bandit learner; strict two-phase select/reveal/update rounds.

    Parameters
    ----------
    model:
        Competition model supplying the class space and transitions.
    gamma:
        Positive tuning constant of the adaptive learning rate. A good
        default is the square root of the model's complexity budget
        (:func:`scalefree_bandit.competitions.default_gamma`).
    seed:
        Seed for the private Philox stream used only to sample arms.
    fixed_rate:
        Testing hook: freeze the learning rate at this value (may be 0)
        instead of adapting it, with power ratio pinned to 1.
    """

    def __init__(
        self,
        model: CompetitionModel,
        gamma: float | None,
        seed: int = 0,
        rng: np.random.Generator | None = None,
        fixed_rate: float | None = None,
    ):
        if fixed_rate is None:
            if gamma is None or not math.isfinite(gamma) or gamma <= 0.0:
                raise ValueError(f"gamma must be positive and finite, got {gamma}")
        elif fixed_rate < 0.0 or not math.isfinite(fixed_rate):
            raise ValueError(f"fixed_rate must be finite and >= 0, got {fixed_rate}")
        if model.n_classes < 1:
            raise ValueError("model has an empty class space")
        self._model = model
        self._n_arms = model.n_arms
        self._fixed_rate = fixed_rate
        self._identity_classes = model.n_classes == model.n_arms and np.array_equal(
            model.arm_of, np.arange(model.n_classes)
        )
        self._log_w = model.log_prior.copy()
        self._p = arm_marginals(self._log_w, model)
        self._stats = AdaptiveState(
            round=1,
            min_loss=math.inf,
            second_moment=0.0,
            spread_max=0.0,
            rate_prev=None,
            gamma=None if gamma is None else float(gamma),
            n_arms=self._n_arms,
        )
        self._rng = rng if rng is not None else make_generator(seed)
        self._phase = "select"
        self._pending: tuple[int, float, float] | None = None
        self._conservation: tuple[float, float] | None = None

    # -- read-only views ---------------------------------------------------

    @property
    def model(self) -> CompetitionModel:
        return self._model

    @property
    def n_arms(self) -> int:
        return self._n_arms

    @property
    def round(self) -> int:
        return self._stats.round

    @property
    def stats(self) -> AdaptiveState:
        return self._stats

    @property
    def probabilities(self) -> np.ndarray:
        """Current algorithmic arm probabilities (before exploration mixing)."""
        return self._p.copy()

    @property
    def log_weights(self) -> np.ndarray:
        return self._log_w.copy()

    @property
    def last_conservation(self) -> tuple[float, float] | None:
        """(log mass entering, log mass leaving) of the latest weight share."""
        return self._conservation

    # -- the round protocol ------------------------------------------------

    def select(self, force_arm: int | None = None) -> tuple[int, np.ndarray]:
        """Phase one: commit to an arm; returns (arm, selection probabilities).

        ``force_arm`` bypasses sampling (and leaves the random stream
        untouched) so oracles can replay scripted choices.
        """
        if self._phase != "select":
            raise ProtocolError("select() called twice without update()")
        eps = mixture_coefficient(self._stats.round, self._n_arms)
        q = selection_probabilities(self._p, eps)
        if force_arm is None:
            arm = sample_arm(q, self._rng)
        else:
            arm = int(force_arm)
            if not 0 <= arm < self._n_arms:
                raise ValueError(f"forced arm {arm} out of range")
        self._pending = (arm, float(q[arm]), eps)
        self._phase = "update"
        return arm, q

    def update(self, loss: float) -> None:
        """Phase two: reveal the selected arm's loss and advance one round."""
        if self._phase != "update":
            raise ProtocolError("update() called without a pending select()")
        loss = float(loss)
        if not math.isfinite(loss):
            raise ValueError(f"losses must be finite, got {loss}")
        arm, q_sel, _ = self._pending
        old = self._stats
        pm, new_min = performance_measure(loss, arm, q_sel, old.min_loss)
        v = float(self._p[arm]) * pm.value * pm.value
        second = old.second_moment + v
        spread = pm.value if pm.value > old.spread_max else old.spread_max

        if self._fixed_rate is not None:
            rate = self._fixed_rate
            exponent_rate = rate
            power = 1.0
        else:
            denom = second + spread * spread
            rate = None if denom <= 0.0 else old.gamma / math.sqrt(denom)
            prev = old.rate_prev
            if prev is None:
                exponent_rate = rate  # degenerate: borrow the current rate
                power = 1.0
            else:
                exponent_rate = prev
                power = rate / prev

        if pm.value != 0.0 and exponent_rate:
            if self._identity_classes:
                log_z = self._log_w.copy()
                log_z[arm] -= exponent_rate * pm.value
            else:
                log_z = exponential_update(self._log_w, self._model, arm, pm.value, exponent_rate)
        else:
            log_z = self._log_w
        log_next, log_in, log_out = weight_share(log_z, self._model, power)
        if not math.isfinite(log_out):
            raise NumericalDegeneracyError("weight mass vanished during sharing")
        self._conservation = (log_in, log_out)
        self._log_w = log_next - log_out
        if self._identity_classes:
            self._p = _softmax_from_log(self._log_w)
        else:
            self._p = arm_marginals(self._log_w, self._model)
        self._stats = AdaptiveState(
            round=old.round + 1,
            min_loss=new_min,
            second_moment=second,
            spread_max=spread,
            rate_prev=rate,
            gamma=old.gamma,
            n_arms=old.n_arms,
        )
        self._pending = None
        self._phase = "select"

    def play_round(self, loss_of_arm: Callable[[int], float]) -> tuple[int, float]:
        """Full round: select, look up the chosen arm's loss, update."""
        arm, _ = self.select()
        loss = float(loss_of_arm(arm))
        self.update(loss)
        return arm, loss

    # -- checkpointing -------------------------------------------------------

    def snapshot(self) -> dict:
        """Exact state between rounds; restore() resumes bit-for-bit."""
        if self._phase != "select":
            raise ProtocolError("cannot snapshot mid-round (pending update)")
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "model": {"spec": self._model.spec, "n_arms": self._n_arms},
            "gamma": self._stats.gamma,
            "fixed_rate": self._fixed_rate,
            "round": self._stats.round,
            "min_loss": self._stats.min_loss,
            "second_moment": self._stats.second_moment,
            "spread_max": self._stats.spread_max,
            "rate_prev": self._stats.rate_prev,
            "log_weights": [float(x) for x in self._log_w],
            "rng": generator_state(self._rng),
        }

    @classmethod
    def restore(cls, snap: dict) -> "ScaleFreeBandit":
        if snap.get("format") != SNAPSHOT_FORMAT:
            raise ValueError("not a bandit snapshot")
        if snap.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {snap.get('version')!r}")
        model = parse_model(snap["model"]["spec"], snap["model"]["n_arms"])
        state = cls(
            model,
            snap["gamma"],
            rng=restore_generator(snap["rng"]),
            fixed_rate=snap["fixed_rate"],
        )
        state._log_w = np.array(snap["log_weights"], dtype=np.float64)
        state._p = arm_marginals(state._log_w, model)
        state._stats = AdaptiveState(
            round=int(snap["round"]),
            min_loss=float(snap["min_loss"]),
            second_moment=float(snap["second_moment"]),
            spread_max=float(snap["spread_max"]),
            rate_prev=None if snap["rate_prev"] is None else float(snap["rate_prev"]),
            gamma=None if snap["gamma"] is None else float(snap["gamma"]),
            n_arms=model.n_arms,
        )
        return state

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.snapshot(), fh)

    @classmethod
    def load(cls, path) -> "ScaleFreeBandit":
        with open(path) as fh:
            return cls.restore(json.load(fh))
