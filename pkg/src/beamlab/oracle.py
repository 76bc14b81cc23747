"""Exact ground truth on small MDPs by backward induction.

The optimal table satisfies, at every non-terminal state,

    q(s, a) = r(s') + v(s')        (s' the deterministic successor, v(terminal) = 0)
    v(s)    = logsumexp_a q(s, a)

with the reward attributed to the transition that produces the terminal
context. The softmax of ``q(s, .)`` is the optimal stochastic policy, and
wrapping ``q`` as a logit table turns the oracle into a model whose soft value
reproduces ``v`` exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CoverageError
from .mdp import (
    DEFAULT_ENUMERATION_CAP,
    Context,
    DemoSet,
    TokenMdp,
    Trajectory,
    check_enumeration_cap,
    enumerate_trajectories,
    terminal_reward,
)
from .model import Key, LogitModel, init_model, softmax


@dataclass(frozen=True)
class SoftQTable:
    """Optimal soft action values and state values; terminal states have v = 0."""

    q: dict[Key, np.ndarray]
    v: dict[Key, float]


def soft_q_backward(mdp: TokenMdp, cap: int = DEFAULT_ENUMERATION_CAP) -> SoftQTable:
    """Exact backward induction over the finite token tree."""
    check_enumeration_cap(mdp, cap)
    q: dict[Key, np.ndarray] = {}
    v: dict[Key, float] = {}

    def value(ctx: Context) -> float:
        key = ctx.tokens
        if key in v:
            return v[key]
        if mdp.is_terminal(ctx):
            v[key] = 0.0
            return 0.0
        row = np.empty(mdp.vocab.size)
        for a in range(mdp.vocab.size):
            child = Context(key + (a,), ctx.prompt_len)
            r = float(terminal_reward(mdp, child)) if mdp.is_terminal(child) else 0.0
            row[a] = r + value(child)
        q[key] = row
        shifted = row - row.max()
        v[key] = float(row.max() + np.log(np.exp(shifted).sum()))
        return v[key]

    for prompt in mdp.prompts:
        value(prompt)
    return SoftQTable(q, v)


def optimal_policy(table: SoftQTable, mdp: TokenMdp) -> LogitModel:
    """A model whose logits are exactly q*, hence whose policy is the optimal one."""
    for prompt in mdp.prompts:
        if not mdp.is_terminal(prompt) and prompt.tokens not in table.q:
            raise CoverageError(f"oracle table does not cover prompt {prompt.tokens}")
    return init_model(mdp, "from_table", table={k: row.copy() for k, row in table.q.items()})


@dataclass(frozen=True)
class EstimationErrorReport:
    """Per-state L1 policy gap against the oracle, split by supervision."""

    per_state: dict[Key, float]
    supervised: frozenset[Key]

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.per_state.values())))

    @property
    def max(self) -> float:
        return float(np.max(list(self.per_state.values())))

    def _mean_over(self, keys) -> float:
        vals = [self.per_state[k] for k in keys]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def mean_supervised(self) -> float:
        return self._mean_over([k for k in self.per_state if k in self.supervised])

    @property
    def mean_unsupervised(self) -> float:
        return self._mean_over([k for k in self.per_state if k not in self.supervised])


def estimation_error(
    model: LogitModel,
    table: SoftQTable,
    mdp: TokenMdp,
    demos: DemoSet | None = None,
) -> EstimationErrorReport:
    """L1 distance between the model policy and the optimal policy at every covered state."""
    if model.mdp.vocab.size != mdp.vocab.size:
        raise CoverageError("model vocabulary does not match the MDP")
    per_state: dict[Key, float] = {}
    for key, q_row in table.q.items():
        ctx = Context(key, _prompt_len_for(mdp, key))
        gap = model.policy(ctx) - softmax(q_row)
        per_state[key] = float(np.abs(gap).sum())
    supervised = demos.supervised_keys if demos is not None else frozenset()
    return EstimationErrorReport(per_state, frozenset(supervised))


def _prompt_len_for(mdp: TokenMdp, key: Key) -> int:
    for p in mdp.prompts:
        if key[: len(p.tokens)] == p.tokens:
            return p.prompt_len
    raise CoverageError(f"state {key} is not reachable from any prompt")


def trajectory_log_prob(model: LogitModel, traj: Trajectory) -> float:
    """Accumulated log-probability of a trajectory's actions under the model."""
    return sum(float(model.log_policy(traj.contexts[t])[a]) for t, a in enumerate(traj.actions))


def brute_force_best_sequence(
    model: LogitModel, mdp: TokenMdp, prompt: Context, cap: int = DEFAULT_ENUMERATION_CAP
) -> Trajectory:
    """Exhaustive argmax of the accumulated log-probability; ties break toward
    the lexicographically smallest token sequence."""
    best: Trajectory | None = None
    best_key: tuple[float, tuple[int, ...]] | None = None
    for traj in enumerate_trajectories(mdp, prompt, cap):
        key = (-trajectory_log_prob(model, traj), traj.final.tokens)
        if best_key is None or key < best_key:
            best, best_key = traj, key
    assert best is not None  # a prompt always reaches at least one terminal
    return best


def policy_expected_reward(
    model: LogitModel, mdp: TokenMdp, prompt: Context, cap: int = DEFAULT_ENUMERATION_CAP
) -> float:
    """Exact expected terminal reward of the policy, by enumeration."""
    total = 0.0
    for traj in enumerate_trajectories(mdp, prompt, cap):
        if traj.reward:
            total += float(np.exp(trajectory_log_prob(model, traj)))
    return total


def dump_oracle_csv(table: SoftQTable, path: str | Path) -> None:
    """CSV rows (context, action, q_star, v_star, pi_star) for every non-terminal state."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["context", "action", "q_star", "v_star", "pi_star"])
        for key in sorted(table.q):
            row = table.q[key]
            pi = softmax(row)
            for a in range(len(row)):
                writer.writerow(
                    [" ".join(map(str, key)), a, repr(float(row[a])), repr(table.v[key]), repr(float(pi[a]))]
                )
