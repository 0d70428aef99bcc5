"""Verification oracles and a baseline learner.

Everything here exists to cross-check the optimized core by an independent
route:

* :class:`DenseReference` -- the bandit recursion transcribed with plain
  nested loops in linear-domain arithmetic, no log-space tricks.
* :func:`sequence_mixture_oracle` -- for a constant learning rate, the
  class recursion collapses to an explicit weighting over every arm
  sequence; this enumerates them all.
* :func:`best_fixed_arm` / :func:`best_switching_sequence` -- hindsight
  competition oracles (brute force column sums, and a switch-budgeted
  dynamic program).
* :class:`Exp3Baseline` -- classic exponential-weighting bandit that
  *requires* a declared loss range, the assumption the scale-free learner
  removes.

Oracles take scripted arm choices instead of sampling so that comparisons
against the core are free of RNG effects.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .competitions import CompetitionModel
from .core import ScaleFreeBandit, mixture_coefficient, sample_arm
from .environments import LossStream
from .rng import make_generator


def path_loss(stream: LossStream, arms) -> float:
    """Canonical cumulative loss of an arm sequence (prefix-order sum)."""
    arms = np.asarray(arms, dtype=np.intp)
    return float(stream.matrix[np.arange(stream.horizon), arms].sum())


# ---------------------------------------------------------------------------
# dense linear-domain transcription
# ---------------------------------------------------------------------------

class DenseReference:
    """Line-by-line transcription of the bandit round in linear weights.

    Same degenerate-rate convention as the core: while the adaptive rate is
    undefined, the current round's rate is substituted (power ratio 1), and
    if that is undefined too the exponential step is the identity. Weights
    are renormalized to sum 1 after each round, which leaves every arm
    probability unchanged.
    """

    def __init__(self, model: CompetitionModel, gamma: float | None,
                 fixed_rate: float | None = None):
        self.model = model
        self.n_arms = model.n_arms
        self.n_classes = model.n_classes
        self.gamma = gamma
        self.fixed_rate = fixed_rate
        self.transition = [
            [float(x) for x in row] for row in model.transition_matrix()
        ]
        self.arm_of = [int(a) for a in model.arm_of]
        self.weights = [math.exp(lp) for lp in model.log_prior]
        self.t = 1
        self.min_loss = math.inf
        self.second_moment = 0.0
        self.spread_max = 0.0
        self.rate_prev: float | None = None
        self.last_conservation: tuple[float, float] | None = None

    def probabilities(self) -> list[float]:
        arm_w = [0.0] * self.n_arms
        for c, w in enumerate(self.weights):
            arm_w[self.arm_of[c]] += w
        total = sum(arm_w)
        return [w / total for w in arm_w]

    def step(self, arm: int, loss: float) -> dict:
        """One scripted round; returns the round's observable quantities."""
        p = self.probabilities()
        eps = mixture_coefficient(self.t, self.n_arms)
        q = [(1.0 - eps) * pm + eps / self.n_arms for pm in p]
        self.min_loss = min(self.min_loss, loss)
        excess = (loss - self.min_loss) / q[arm]
        self.second_moment += p[arm] * excess * excess
        self.spread_max = max(self.spread_max, excess)

        if self.fixed_rate is not None:
            rate: float | None = self.fixed_rate
            exponent_rate: float | None = self.fixed_rate
            power = 1.0
        else:
            denom = self.second_moment + self.spread_max * self.spread_max
            rate = None if denom <= 0.0 else self.gamma / math.sqrt(denom)
            if self.rate_prev is None:
                exponent_rate = rate
                power = 1.0
            else:
                exponent_rate = self.rate_prev
                power = rate / self.rate_prev

        z = []
        for c, w in enumerate(self.weights):
            if self.arm_of[c] == arm and excess != 0.0 and exponent_rate:
                z.append(w * math.exp(-exponent_rate * excess))
            else:
                z.append(w)

        mass_in = 0.0
        z_pow = []
        for zc in z:
            zp = zc ** power
            z_pow.append(zp)
            mass_in += zp
        w_next = [0.0] * self.n_classes
        for c_next in range(self.n_classes):
            acc = 0.0
            for c_prev in range(self.n_classes):
                acc += self.transition[c_prev][c_next] * z_pow[c_prev]
            w_next[c_next] = acc
        mass_out = sum(w_next)
        self.last_conservation = (mass_in, mass_out)
        self.weights = [w / mass_out for w in w_next]
        if self.fixed_rate is None:
            self.rate_prev = rate
        self.t += 1
        return {
            "p": p,
            "q": q,
            "eps": eps,
            "excess": excess,
            "min_loss": self.min_loss,
            "rate": rate,
            "power": power,
            "conservation": self.last_conservation,
        }


def run_dense(model: CompetitionModel, gamma: float | None, losses: np.ndarray,
              arms, fixed_rate: float | None = None) -> dict:
    """Run the dense transcription over scripted arms; stacked trajectories."""
    arms = np.asarray(arms, dtype=np.intp)
    ref = DenseReference(model, gamma, fixed_rate=fixed_rate)
    horizon = arms.shape[0]
    p_hist = np.empty((horizon, model.n_arms))
    conservation = np.empty((horizon, 2))
    for t in range(horizon):
        out = ref.step(int(arms[t]), float(losses[t, arms[t]]))
        p_hist[t] = out["p"]
        conservation[t] = out["conservation"]
    return {"p": p_hist, "conservation": conservation, "final": ref}


def replay_core(model: CompetitionModel, gamma: float | None, losses: np.ndarray,
                arms=None, seed: int = 0, fixed_rate: float | None = None) -> dict:
    """Run the optimized core over a loss matrix, recording each round.

    With `arms` given the choices are forced (no RNG use); otherwise the
    core samples from its own stream seeded by `seed`.
    """
    losses = np.asarray(losses, dtype=np.float64)
    horizon, n_arms = losses.shape
    state = ScaleFreeBandit(model, gamma, seed=seed, fixed_rate=fixed_rate)
    p_hist = np.empty((horizon, n_arms))
    q_hist = np.empty((horizon, n_arms))
    arm_hist = np.empty(horizon, dtype=np.intp)
    conservation = np.empty((horizon, 2))
    stats_hist = np.empty((horizon, 4))  # min_loss, second_moment, spread, rate
    for t in range(horizon):
        p_hist[t] = state.probabilities
        forced = None if arms is None else int(arms[t])
        arm, q = state.select(force_arm=forced)
        q_hist[t] = q
        arm_hist[t] = arm
        state.update(float(losses[t, arm]))
        conservation[t] = state.last_conservation
        st = state.stats
        stats_hist[t] = (st.min_loss, st.second_moment, st.spread_max,
                         np.nan if st.rate_prev is None else st.rate_prev)
    return {
        "p": p_hist,
        "q": q_hist,
        "arms": arm_hist,
        "conservation": conservation,
        "stats": stats_hist,
        "final": state,
    }


# ---------------------------------------------------------------------------
# exhaustive sequence-mixture oracle (constant learning rate)
# ---------------------------------------------------------------------------

def sequence_mixture_oracle(model: CompetitionModel, losses: np.ndarray,
                            arms, rate: float) -> np.ndarray:
    """Arm probabilities from the explicit mixture over all class paths.

    With the learning rate held constant the recursive class update equals
    a direct weighting of every possible path: prior times transitions
    times exp(-rate * accumulated excess along the path), where the excess
    is nonzero only on the scripted selected arm of each past round. The
    returned row t is the distribution in force *before* round t's update.
    """
    arms = np.asarray(arms, dtype=np.intp)
    horizon = arms.shape[0]
    n = model.n_classes
    if n ** horizon > 2 ** 20:
        raise ValueError(f"{n}^{horizon} paths is too many to enumerate")
    log_t = model.log_transition_matrix()
    prior = np.exp(model.log_prior)
    trans = np.exp(log_t)
    arm_of = model.arm_of

    p_hist = np.empty((horizon, model.n_arms))
    excess = np.zeros(horizon)
    min_loss = math.inf
    for t in range(horizon):
        arm_w = np.zeros(model.n_arms)
        for path in itertools.product(range(n), repeat=t + 1):
            weight = prior[path[0]]
            for i in range(1, t + 1):
                weight *= trans[path[i - 1], path[i]]
            penalty = 0.0
            for i in range(t):
                if arm_of[path[i]] == arms[i]:
                    penalty += excess[i]
            arm_w[arm_of[path[-1]]] += weight * math.exp(-rate * penalty)
        p = arm_w / arm_w.sum()
        p_hist[t] = p
        eps = mixture_coefficient(t + 1, model.n_arms)
        q_sel = (1.0 - eps) * p[arms[t]] + eps / model.n_arms
        loss = float(losses[t, arms[t]])
        min_loss = min(min_loss, loss)
        excess[t] = (loss - min_loss) / q_sel
    return p_hist


# ---------------------------------------------------------------------------
# hindsight competition oracles
# ---------------------------------------------------------------------------

def best_fixed_arm(stream: LossStream) -> tuple[int, float]:
    """Arm with the smallest cumulative loss; ties go to the lowest index."""
    sums = stream.matrix.sum(axis=0)
    arm = int(np.argmin(sums))
    return arm, path_loss(stream, np.full(stream.horizon, arm, dtype=np.intp))


def best_switching_sequence(stream: LossStream, max_switches: int) -> tuple[np.ndarray, float]:
    """Minimum-loss arm sequence using at most `max_switches` changes.

    Suffix dynamic program over (round, arm, switches left), O(T*M*k) via
    the smallest/second-smallest trick, then a forward greedy walk that
    yields the lexicographically smallest minimizing path.
    """
    if max_switches < 0:
        raise ValueError("switch budget must be >= 0")
    matrix = stream.matrix
    horizon, n_arms = matrix.shape
    k = min(max_switches, horizon - 1)
    # suffix[t, m, j]: best loss of rounds t.. given arm m at t and j switches left
    suffix = np.zeros((horizon + 1, n_arms, k + 1))
    for t in range(horizon - 1, -1, -1):
        nxt = suffix[t + 1]
        for j in range(k + 1):
            best = nxt[:, j].copy()
            if j > 0:
                col = nxt[:, j - 1]
                order = np.argsort(col, kind="stable")
                lead, runner = order[0], order[1] if n_arms > 1 else order[0]
                other = np.full(n_arms, col[lead])
                other[lead] = col[runner]
                np.minimum(best, other, out=best)
            suffix[t, :, j] = matrix[t] + best
    path = np.empty(horizon, dtype=np.intp)
    j = k
    path[0] = int(np.argmin(suffix[0, :, k]))
    for t in range(horizon - 1):
        m = path[t]
        stay = suffix[t + 1, m, j]
        if j > 0:
            col = suffix[t + 1, :, j - 1]
            best = min(stay, col.min())
        else:
            best = stay
        # smallest next arm attaining the optimum; staying costs no switch
        chosen = None
        for m2 in range(n_arms):
            value = stay if m2 == m else (suffix[t + 1, m2, j - 1] if j > 0 else None)
            if value is not None and value == best:
                chosen = m2
                break
        path[t + 1] = chosen
        if chosen != m:
            j -= 1
    return path, path_loss(stream, path)


def enumerate_best_sequence(stream: LossStream, max_switches: int) -> tuple[np.ndarray, float]:
    """Brute force over all arm sequences with at most `max_switches`
    changes; independent check for the dynamic program (tiny instances)."""
    matrix = stream.matrix
    horizon, n_arms = matrix.shape
    if n_arms ** horizon > 2 ** 20:
        raise ValueError("instance too large to enumerate")
    best_path = None
    best = math.inf
    for path in itertools.product(range(n_arms), repeat=horizon):
        switches = sum(1 for a, b in zip(path, path[1:]) if a != b)
        if switches > max_switches:
            continue
        loss = path_loss(stream, np.array(path, dtype=np.intp))
        if loss < best:
            best = loss
            best_path = path
    return np.array(best_path, dtype=np.intp), best


# ---------------------------------------------------------------------------
# Exp3 baseline
# ---------------------------------------------------------------------------

class Exp3Baseline:
    """Exponential weighting over importance-weighted losses.

    Needs its loss range declared up front; observations outside the range
    are rejected, which is precisely the scale sensitivity the adaptive
    learner avoids. Default rate schedule: sqrt(log(M) / (M * t)).
    """

    def __init__(self, n_arms: int, rng: np.random.Generator,
                 rate_schedule=None, loss_range: tuple[float, float] = (0.0, 1.0)):
        lo, hi = loss_range
        if not hi > lo:
            raise ValueError("declared loss range must be non-degenerate")
        self.n_arms = n_arms
        self.rng = rng
        self.loss_range = (float(lo), float(hi))
        self.rate_schedule = rate_schedule or (
            lambda t: math.sqrt(math.log(n_arms) / (n_arms * t))
        )
        self.cum_estimate = np.zeros(n_arms)
        self.t = 1
        self._pending: tuple[int, float] | None = None

    def probabilities(self) -> np.ndarray:
        scores = -self.rate_schedule(self.t) * self.cum_estimate
        scores -= scores.max()
        e = np.exp(scores)
        return e / e.sum()

    def select(self) -> int:
        p = self.probabilities()
        arm = sample_arm(p, self.rng)
        self._pending = (arm, float(p[arm]))
        return arm

    def update(self, loss: float) -> None:
        if self._pending is None:
            raise RuntimeError("update() without a pending select()")
        arm, prob = self._pending
        lo, hi = self.loss_range
        if not lo <= loss <= hi:
            raise ValueError(
                f"loss {loss} outside declared range [{lo}, {hi}]"
            )
        self.cum_estimate[arm] += (loss - lo) / (hi - lo) / prob
        self._pending = None
        self.t += 1


def run_exp3(stream: LossStream, seed: int = 0, rate_schedule=None,
             loss_range: tuple[float, float] = (0.0, 1.0)) -> dict:
    """Play the Exp3 baseline against a stream; selection trajectory."""
    learner = Exp3Baseline(stream.n_arms, make_generator(seed),
                           rate_schedule=rate_schedule, loss_range=loss_range)
    arms = np.empty(stream.horizon, dtype=np.intp)
    losses = np.empty(stream.horizon)
    for t in range(stream.horizon):
        arm = learner.select()
        learner.update(stream.loss(t, arm))
        arms[t] = arm
        losses[t] = stream.loss(t, arm)
    return {"arms": arms, "losses": losses, "final_probs": learner.probabilities()}
