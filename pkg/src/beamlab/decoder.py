"""Greedy decoding and fixed-width beam search, with score instrumentation.

Beam scores are accumulated log-probabilities computed as ``logit - soft_value``
(never the log of a rounded probability). Selection is fully deterministic:
every ranking breaks ties by higher score first, then lexicographically smaller
token sequence, so identical inputs reproduce identical traces on any platform.

The score of any terminal hypothesis decomposes as

    sum_t log pi(a_t | s_t) = [sum_{t<T} (Q(s_t, a_t) - V(s_{t+1}))] + Q(s_T, a_T) - V(s_0)

an algebraic rearrangement that holds for every model; the bracketed one-step
residuals additionally vanish for the exact soft-optimal table, which is what
makes inflated interior values visible on trained models.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import CapExceededError, InvalidTrajectoryError
from .mdp import (
    DEFAULT_ENUMERATION_CAP,
    Context,
    TokenMdp,
    Trajectory,
    rollout,
    terminal_reward,
    validate_trajectory,
)
from .model import LogitModel, softmax
from .oracle import SoftQTable, soft_q_backward


@dataclass(frozen=True)
class BeamHypothesis:
    """A partial or finished sequence with its accumulated log-probability."""

    ctx: Context
    score: float
    finished: bool


@dataclass
class DecodeTrace:
    """Per-step beam contents (rank order), the final pool, and the chosen trajectory."""

    steps: list[list[BeamHypothesis]] = field(default_factory=list)
    pool: list[BeamHypothesis] = field(default_factory=list)
    chosen: Trajectory | None = None

    def to_doc(self) -> dict[str, Any]:
        def hyp(h: BeamHypothesis, rank: int) -> dict[str, Any]:
            return {"rank": rank, "tokens": list(h.ctx.tokens), "score": h.score, "finished": h.finished}

        assert self.chosen is not None
        return {
            "steps": [[hyp(h, i) for i, h in enumerate(beam)] for beam in self.steps],
            "pool": [hyp(h, i) for i, h in enumerate(self.pool)],
            "chosen": {
                "tokens": list(self.chosen.final.tokens),
                "actions": list(self.chosen.actions),
                "reward": self.chosen.reward,
            },
        }


def _rank_key(h: BeamHypothesis) -> tuple[float, tuple[int, ...]]:
    return (-h.score, h.ctx.tokens)


def greedy_decode(model: LogitModel, mdp: TokenMdp, prompt: Context) -> Trajectory:
    """Follow the argmax logit at every step (ties toward the smallest token id)."""
    ctx = prompt
    actions: list[int] = []
    while not mdp.is_terminal(ctx):
        actions.append(int(np.argmax(model.logits(ctx))))
        ctx = Context(ctx.tokens + (actions[-1],), ctx.prompt_len)
    return rollout(mdp, prompt, tuple(actions))


def beam_search(
    model: LogitModel,
    mdp: TokenMdp,
    prompt: Context,
    k: int,
    expand: str = "global",
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> tuple[Trajectory, DecodeTrace]:
    """Fixed-width beam search returning the best-scoring terminal sequence.

    Each step expands every active hypothesis over the whole vocabulary and
    keeps the top-k candidates of the joint pool; candidates that reach a
    terminal context retire to a finished pool and stop consuming beam slots.

    ``expand="per-parent"`` is the alternative reading of width-k expansion:
    every active hypothesis keeps its own top-k tokens and there is no joint
    cut, so the active set can grow k-fold per step (capped by ``cap``). Its
    candidate pool is a superset of the joint-cut variant's at equal k.
    """
    if k < 1:
        raise ValueError(f"beam width must be >= 1, got {k}")
    if expand not in ("global", "per-parent"):
        raise ValueError(f"expand must be 'global' or 'per-parent', got {expand!r}")

    trace = DecodeTrace()
    if mdp.is_terminal(prompt):
        chosen = Trajectory((prompt,), (), terminal_reward(mdp, prompt))
        trace.pool = [BeamHypothesis(prompt, 0.0, True)]
        trace.chosen = chosen
        return chosen, trace

    active = [BeamHypothesis(prompt, 0.0, False)]
    finished: list[BeamHypothesis] = []
    while active:
        candidates: list[BeamHypothesis] = []
        for hyp in active:
            logp = model.log_policy(hyp.ctx)
            tokens = range(mdp.vocab.size)
            if expand == "per-parent":
                tokens = sorted(tokens, key=lambda a: (-logp[a], a))[:k]
            for a in tokens:
                child = Context(hyp.ctx.tokens + (a,), hyp.ctx.prompt_len)
                candidates.append(
                    BeamHypothesis(child, hyp.score + float(logp[a]), mdp.is_terminal(child))
                )
        if expand == "per-parent":
            selected = sorted(candidates, key=_rank_key)
            if len(selected) > cap:
                raise CapExceededError(
                    f"per-parent expansion grew past the cap of {cap} hypotheses"
                )
        else:
            selected = sorted(candidates, key=_rank_key)[:k]
        trace.steps.append(selected)
        active = [h for h in selected if not h.finished]
        finished.extend(h for h in selected if h.finished)

    trace.pool = sorted(finished, key=_rank_key)
    best = trace.pool[0]
    chosen = rollout(mdp, prompt, best.ctx.tokens[len(prompt.tokens) :])
    trace.chosen = chosen
    return chosen, trace


@dataclass(frozen=True)
class ScoreDecomposition:
    """The accumulated log-probability split into terminal Q, initial V, and residuals."""

    sum_logpi: float
    q_terminal: float
    v_initial: float
    residuals: tuple[float, ...]

    @property
    def identity_gap(self) -> float:
        return self.sum_logpi - (self.q_terminal - self.v_initial + sum(self.residuals))


def score_decomposition(model: LogitModel, traj: Trajectory) -> ScoreDecomposition:
    validate_trajectory(model.mdp, traj)
    if not traj.actions:
        raise InvalidTrajectoryError("cannot decompose a trajectory with no actions")
    n = len(traj.actions)
    sum_logpi = 0.0
    residuals = []
    for t, a in enumerate(traj.actions):
        sum_logpi += float(model.log_policy(traj.contexts[t])[a])
        if t < n - 1:
            q_t = float(model.logits(traj.contexts[t])[a])
            residuals.append(q_t - model.soft_value(traj.contexts[t + 1]))
    q_terminal = float(model.logits(traj.contexts[n - 1])[traj.actions[n - 1]])
    v_initial = model.soft_value(traj.contexts[0])
    return ScoreDecomposition(sum_logpi, q_terminal, v_initial, tuple(residuals))


def dump_decomposition_csv(model: LogitModel, traj: Trajectory, path) -> ScoreDecomposition:
    """Write per-step rows (step, q, v_next, residual) for a trajectory's score.

    The terminal step uses the v(terminal) = 0 convention, so the residual
    column sums to ``sum_logpi + v_initial`` across all rows.
    """
    dec = score_decomposition(model, traj)
    n = len(traj.actions)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "q", "v_next", "residual"])
        for t in range(n):
            q_t = float(model.logits(traj.contexts[t])[traj.actions[t]])
            v_next = 0.0 if t == n - 1 else model.soft_value(traj.contexts[t + 1])
            writer.writerow([t, repr(q_t), repr(v_next), repr(q_t - v_next)])
    return dec


@dataclass(frozen=True)
class OverOptimismReport:
    """Beam-vs-greedy outcome plus oracle diagnostics along the beam winner."""

    beam_reward: int
    greedy_reward: int
    beam_score: float
    flagged: bool
    winner: ScoreDecomposition
    winner_estimation_l1: tuple[float, ...]
    pool_rewards: tuple[int, ...]


def over_optimism_report(
    model: LogitModel,
    mdp: TokenMdp,
    prompt: Context,
    k: int,
    table: SoftQTable | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> OverOptimismReport:
    """Flags beam runs where an unrewarded winner outscored a rewarded pool member."""
    if table is None:
        table = soft_q_backward(mdp, cap)
    beam_traj, trace = beam_search(model, mdp, prompt, k)
    greedy_traj = greedy_decode(model, mdp, prompt)
    pool_rewards = tuple(terminal_reward(mdp, h.ctx) for h in trace.pool)
    flagged = beam_traj.reward == 0 and any(pool_rewards)
    decomposition = score_decomposition(model, beam_traj)
    l1 = []
    for t in range(len(beam_traj.actions)):
        ctx = beam_traj.contexts[t]
        gap = model.policy(ctx) - softmax(table.q[ctx.tokens])
        l1.append(float(np.abs(gap).sum()))
    return OverOptimismReport(
        beam_reward=beam_traj.reward,
        greedy_reward=greedy_traj.reward,
        beam_score=trace.pool[0].score,
        flagged=flagged,
        winner=decomposition,
        winner_estimation_l1=tuple(l1),
        pool_rewards=pool_rewards,
    )
