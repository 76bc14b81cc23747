"""Synthetic task families and lossless task/demo serialization.

Three seeded generators:

* ``single-path``   — exactly one rewarded terminal sequence, which is also the
  sole demonstration.
* ``branchy-trap``  — one demonstrated expert path inside a full token tree
  whose off-path states receive no supervision; the family used to elicit
  search over-optimism. The tree always contains every decoy branch (the
  action set is total), so the ``branches`` parameter designates decoy stems
  recorded with the task rather than extra structure.
* ``random-dag``    — several rewarded terminal sequences, a configurable
  subset of which is demonstrated.

Generators are pure functions of (family, seed, params); demonstrations are
eos-terminated throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .mdp import Context, DemoSet, RewardTable, TokenMdp, Trajectory, Vocabulary, rollout

FAMILIES = ("single-path", "branchy-trap", "random-dag")

# Entropy tags keep the task-generation stream separate from model-init streams.
_TASK_STREAM = 0x7A51

_EOS = 0  # generated tasks place eos at token id 0


@dataclass(frozen=True)
class TaskSpec:
    """The (family, seed, params) record that reproduces a generated task."""

    family: str
    seed: int
    params: dict[str, Any]


def _rng(seed: int, family_code: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((_TASK_STREAM, family_code, seed)))


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def _prompt(rng: np.random.Generator, vocab_size: int) -> Context:
    token = int(rng.integers(1, vocab_size))
    return Context((token,), 1)


def _expert_actions(rng: np.random.Generator, depth: int, vocab_size: int) -> tuple[int, ...]:
    body = [int(t) for t in rng.integers(1, vocab_size, size=depth - 1)]
    return tuple(body) + (_EOS,)


def _single_path(seed: int, params: dict[str, Any]) -> tuple[TokenMdp, DemoSet]:
    depth = int(params.get("depth", 3))
    vocab_size = int(params.get("vocab_size", 2))
    _require(depth >= 1, f"single-path depth must be >= 1, got {depth}")
    _require(vocab_size >= 2, f"vocab_size must be >= 2, got {vocab_size}")

    rng = _rng(seed, 0)
    prompt = _prompt(rng, vocab_size)
    expert = _expert_actions(rng, depth, vocab_size)
    rewarded = frozenset({prompt.tokens + expert})
    mdp = TokenMdp(Vocabulary(vocab_size, _EOS), depth, (prompt,), RewardTable(rewarded))
    demo = rollout(mdp, prompt, expert)
    return mdp, DemoSet((demo,))


def _branchy_trap(seed: int, params: dict[str, Any]) -> tuple[TokenMdp, DemoSet]:
    depth = int(params.get("depth", 5))
    branches = int(params.get("branches", 2))
    vocab_size = int(params.get("vocab_size", 4))
    branch_depth = int(params.get("branch_depth", depth))
    _require(depth >= 1, f"branchy-trap depth must be >= 1, got {depth}")
    _require(branches >= 1, f"branches must be >= 1, got {branches}")
    _require(vocab_size >= 3, "branchy-trap needs vocab_size >= 3 so a non-eos decoy exists")
    _require(branch_depth >= 1, f"branch_depth must be >= 1, got {branch_depth}")

    # The action set is total, so every non-expert token already opens an
    # unsupervised branch; `branches` asks for that many distinct non-eos decoy
    # stems along the expert path and is validated against tree capacity.
    _require(
        branches <= depth * (vocab_size - 2),
        f"at most depth*(vocab_size-2) = {depth * (vocab_size - 2)} decoy stems exist, asked for {branches}",
    )

    rng = _rng(seed, 1)
    prompt = _prompt(rng, vocab_size)
    expert = _expert_actions(rng, depth, vocab_size)
    rewarded = frozenset({prompt.tokens + expert})
    max_len = max(depth, branch_depth)
    mdp = TokenMdp(Vocabulary(vocab_size, _EOS), max_len, (prompt,), RewardTable(rewarded))
    demo = rollout(mdp, prompt, expert)
    return mdp, DemoSet((demo,))


def dag_capacity(depth: int, vocab_size: int) -> int:
    """Number of distinct eos-terminated action sequences of length <= depth."""
    if vocab_size == 2:
        return depth
    return ((vocab_size - 1) ** depth - 1) // (vocab_size - 2)


def _random_dag(seed: int, params: dict[str, Any]) -> tuple[TokenMdp, DemoSet]:
    depth = int(params.get("depth", 4))
    vocab_size = int(params.get("vocab_size", 3))
    n_rewarded = int(params.get("n_rewarded", 3))
    n_demos = int(params.get("n_demos", 1))
    _require(depth >= 1, f"random-dag depth must be >= 1, got {depth}")
    _require(vocab_size >= 2, f"vocab_size must be >= 2, got {vocab_size}")
    _require(n_rewarded >= 1, f"n_rewarded must be >= 1, got {n_rewarded}")
    _require(
        n_rewarded <= dag_capacity(depth, vocab_size),
        f"only {dag_capacity(depth, vocab_size)} distinct terminal sequences exist, "
        f"asked for {n_rewarded}",
    )
    _require(1 <= n_demos <= n_rewarded, f"n_demos must be in [1, {n_rewarded}], got {n_demos}")

    rng = _rng(seed, 2)
    prompt = _prompt(rng, vocab_size)
    sequences: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    attempts = 0
    while len(sequences) < n_rewarded:
        attempts += 1
        _require(attempts <= 1000 * n_rewarded, "task family too small for the requested n_rewarded")
        length = int(rng.integers(1, depth + 1))
        actions = _expert_actions(rng, length, vocab_size)
        if actions not in seen:
            seen.add(actions)
            sequences.append(actions)
    rewarded = frozenset(prompt.tokens + actions for actions in sequences)
    mdp = TokenMdp(Vocabulary(vocab_size, _EOS), depth, (prompt,), RewardTable(rewarded))
    demos = tuple(rollout(mdp, prompt, actions) for actions in sequences[:n_demos])
    return mdp, DemoSet(demos)


_GENERATORS = {
    "single-path": _single_path,
    "branchy-trap": _branchy_trap,
    "random-dag": _random_dag,
}


def generate_task(
    family: str, seed: int, params: dict[str, Any] | None = None
) -> tuple[TokenMdp, DemoSet]:
    """Build a deterministic (MDP, demonstrations) pair for one task family."""
    if family not in _GENERATORS:
        raise ValueError(f"unknown task family {family!r}, expected one of {FAMILIES}")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return _GENERATORS[family](seed, dict(params or {}))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def task_to_doc(
    mdp: TokenMdp, demos: DemoSet, spec: TaskSpec | None = None
) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "vocab_size": mdp.vocab.size,
        "eos": mdp.vocab.eos,
        "max_len": mdp.max_len,
        "prompts": [list(p.tokens) for p in mdp.prompts],
        "reward": {"rewarded": sorted(list(seq) for seq in mdp.reward_spec.rewarded)},
        "demos": [list(t.final.tokens) for t in demos.trajectories],
    }
    if spec is not None:
        doc["generator"] = {"family": spec.family, "seed": spec.seed, "params": spec.params}
    return doc


def _match_prompt(mdp: TokenMdp, full: tuple[int, ...]) -> Context:
    matches = [p for p in mdp.prompts if full[: len(p.tokens)] == p.tokens]
    if len(matches) != 1:
        raise ValueError(f"demo {full} matches {len(matches)} prompts; expected exactly one")
    return matches[0]


def task_from_doc(doc: dict[str, Any]) -> tuple[TokenMdp, DemoSet]:
    vocab = Vocabulary(int(doc["vocab_size"]), int(doc["eos"]))
    prompts = tuple(Context(tuple(int(t) for t in p), len(p)) for p in doc["prompts"])
    rewarded = frozenset(tuple(int(t) for t in seq) for seq in doc["reward"]["rewarded"])
    mdp = TokenMdp(vocab, int(doc["max_len"]), prompts, RewardTable(rewarded))
    trajectories: list[Trajectory] = []
    for seq in doc["demos"]:
        full = tuple(int(t) for t in seq)
        prompt = _match_prompt(mdp, full)
        trajectories.append(rollout(mdp, prompt, full[len(prompt.tokens) :]))
    return mdp, DemoSet(tuple(trajectories))


def save_task(path: str | Path, mdp: TokenMdp, demos: DemoSet, spec: TaskSpec | None = None) -> None:
    Path(path).write_text(json.dumps(task_to_doc(mdp, demos, spec), indent=2) + "\n")


def load_task(path: str | Path) -> tuple[TokenMdp, DemoSet]:
    return task_from_doc(json.loads(Path(path).read_text()))
