"""Token-level MDPs with deterministic concatenation dynamics and sparse terminal reward.

States are token prefixes (prompt followed by generated tokens), actions are
vocabulary tokens, and a transition appends one token. An episode ends when the
end-of-sequence token is generated or the generated length reaches ``max_len``;
the only nonzero reward is a 0/1 check of the full terminal sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from .errors import (
    CapExceededError,
    InvalidTrajectoryError,
    NonTerminalContextError,
    TerminalContextError,
)

DEFAULT_ENUMERATION_CAP = 10**6


@dataclass(frozen=True)
class Vocabulary:
    """Action space: ``size`` token ids, one of which is the end-of-sequence token."""

    size: int
    eos: int

    def __post_init__(self) -> None:
        if self.size < 2:
            raise ValueError(f"vocabulary size must be >= 2, got {self.size}")
        if not 0 <= self.eos < self.size:
            raise ValueError(f"eos id {self.eos} out of range for size {self.size}")


@dataclass(frozen=True)
class Context:
    """A decoding state: prompt tokens followed by generated tokens."""

    tokens: tuple[int, ...]
    prompt_len: int

    def __post_init__(self) -> None:
        if not 0 <= self.prompt_len <= len(self.tokens):
            raise ValueError(
                f"prompt_len {self.prompt_len} out of range for {len(self.tokens)} tokens"
            )

    @property
    def generated(self) -> tuple[int, ...]:
        return self.tokens[self.prompt_len :]

    @property
    def generated_len(self) -> int:
        return len(self.tokens) - self.prompt_len


@dataclass(frozen=True)
class RewardTable:
    """Declarative sparse reward: 1 for an explicit set of terminal sequences, else 0."""

    rewarded: frozenset[tuple[int, ...]]

    def __call__(self, tokens: tuple[int, ...]) -> int:
        return 1 if tuple(tokens) in self.rewarded else 0


@dataclass(frozen=True)
class TokenMdp:
    """Finite-horizon token MDP. The discount is 1 throughout and is not stored."""

    vocab: Vocabulary
    max_len: int
    prompts: tuple[Context, ...]
    reward_spec: RewardTable

    def __post_init__(self) -> None:
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if not self.prompts:
            raise ValueError("an MDP needs at least one prompt")
        for p in self.prompts:
            if p.prompt_len != len(p.tokens) or p.prompt_len < 1:
                raise ValueError(f"prompt {p.tokens} must be all-prompt with prompt_len >= 1")
            self.validate_context(p)

    def validate_context(self, ctx: Context) -> None:
        eos = self.vocab.eos
        for t in ctx.tokens:
            if not 0 <= t < self.vocab.size:
                raise ValueError(f"token {t} out of range for vocabulary size {self.vocab.size}")
        if eos in ctx.tokens[:-1]:
            raise ValueError("eos may only appear as the final token of a context")
        if ctx.generated_len > self.max_len:
            raise ValueError(f"generated length {ctx.generated_len} exceeds max_len {self.max_len}")

    def is_terminal(self, ctx: Context) -> bool:
        if ctx.tokens and ctx.tokens[-1] == self.vocab.eos:
            return True
        return ctx.generated_len >= self.max_len


@dataclass(frozen=True)
class Trajectory:
    """A full rollout: contexts[t+1] extends contexts[t] by actions[t]."""

    contexts: tuple[Context, ...]
    actions: tuple[int, ...]
    reward: int

    def __post_init__(self) -> None:
        if len(self.contexts) != len(self.actions) + 1:
            raise ValueError("a trajectory needs exactly one more context than actions")
        if self.reward not in (0, 1):
            raise ValueError(f"reward must be 0 or 1, got {self.reward}")

    @property
    def final(self) -> Context:
        return self.contexts[-1]


@dataclass(frozen=True)
class DemoSet:
    """Rewarded expert trajectories plus their derived (context, action) supervision pairs.

    Every prefix of every trajectory contributes one pair, including the
    prompt-only state; a context repeated across trajectories is repeated
    in the pair multiset.
    """

    trajectories: tuple[Trajectory, ...]

    def __post_init__(self) -> None:
        for traj in self.trajectories:
            if traj.reward != 1:
                raise ValueError("demo trajectories must all carry reward 1")

    @cached_property
    def pairs(self) -> tuple[tuple[Context, int], ...]:
        out: list[tuple[Context, int]] = []
        for traj in self.trajectories:
            for t, action in enumerate(traj.actions):
                out.append((traj.contexts[t], action))
        return tuple(out)

    @cached_property
    def supervised_keys(self) -> frozenset[tuple[int, ...]]:
        return frozenset(ctx.tokens for ctx, _ in self.pairs)

    def __len__(self) -> int:
        return len(self.trajectories)


def step(mdp: TokenMdp, ctx: Context, action: int) -> Context:
    """Append ``action`` to a non-terminal context."""
    if mdp.is_terminal(ctx):
        raise TerminalContextError(f"cannot step from terminal context {ctx.tokens}")
    if not 0 <= action < mdp.vocab.size:
        raise ValueError(f"action {action} out of range for vocabulary size {mdp.vocab.size}")
    return Context(ctx.tokens + (action,), ctx.prompt_len)


def terminal_reward(mdp: TokenMdp, ctx: Context) -> int:
    """Evaluate the sparse reward of a terminal context."""
    if not mdp.is_terminal(ctx):
        raise NonTerminalContextError(f"context {ctx.tokens} is not terminal")
    return mdp.reward_spec(ctx.tokens)


def rollout(mdp: TokenMdp, prompt: Context, actions: tuple[int, ...] | list[int]) -> Trajectory:
    """Replay a full action sequence from a prompt; the result must be terminal."""
    contexts = [prompt]
    for a in actions:
        contexts.append(step(mdp, contexts[-1], a))
    final = contexts[-1]
    if not mdp.is_terminal(final):
        raise InvalidTrajectoryError(f"action sequence {tuple(actions)} does not reach a terminal context")
    return Trajectory(tuple(contexts), tuple(actions), terminal_reward(mdp, final))


def validate_trajectory(mdp: TokenMdp, traj: Trajectory) -> None:
    """Raise InvalidTrajectoryError unless ``traj`` is a faithful rollout of ``mdp``."""
    replayed = rollout(mdp, traj.contexts[0], traj.actions)
    if replayed.contexts != traj.contexts or replayed.reward != traj.reward:
        raise InvalidTrajectoryError("trajectory does not replay to itself under the MDP dynamics")


def check_enumeration_cap(mdp: TokenMdp, cap: int = DEFAULT_ENUMERATION_CAP) -> None:
    bound = mdp.vocab.size**mdp.max_len
    if bound > cap:
        raise CapExceededError(
            f"vocab_size^max_len = {bound} exceeds the enumeration cap of {cap}"
        )


def enumerate_trajectories(
    mdp: TokenMdp, prompt: Context, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[Trajectory]:
    """Every terminal trajectory reachable from ``prompt``, in lexicographic action order."""
    check_enumeration_cap(mdp, cap)
    out: list[Trajectory] = []

    def expand(ctx: Context, prefix: list[Context], actions: list[int]) -> None:
        if mdp.is_terminal(ctx):
            out.append(Trajectory(tuple(prefix), tuple(actions), terminal_reward(mdp, ctx)))
            return
        for a in range(mdp.vocab.size):
            child = Context(ctx.tokens + (a,), ctx.prompt_len)
            expand(child, prefix + [child], actions + [a])

    expand(prompt, [prompt], [])
    return out


def enumerate_nonterminal_contexts(
    mdp: TokenMdp, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[Context]:
    """Every non-terminal context reachable from any prompt, depth-first order."""
    check_enumeration_cap(mdp, cap)
    out: list[Context] = []

    def expand(ctx: Context) -> None:
        if mdp.is_terminal(ctx):
            return
        out.append(ctx)
        for a in range(mdp.vocab.size):
            expand(Context(ctx.tokens + (a,), ctx.prompt_len))

    for prompt in mdp.prompts:
        expand(prompt)
    return out
