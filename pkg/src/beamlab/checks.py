"""Seeded invariant batteries, shared by the `check` CLI command and the test suite.

Each battery draws deterministic random instances, verifies one family of
identities at its stated tolerance, and reports the worst deviation it saw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .decoder import beam_search, greedy_decode, score_decomposition
from .mdp import DemoSet, TokenMdp, enumerate_trajectories, rollout
from .model import InitSpec, LogitModel
from .objectives import (
    GradientTable,
    direct_v_update,
    finite_diff_grad,
    reinforce_grad,
    sft_grad,
    v_grad,
)
from .oracle import (
    brute_force_best_sequence,
    optimal_policy,
    soft_q_backward,
    trajectory_log_prob,
)
from .tasks import dag_capacity, generate_task

_CHECK_STREAM = 0xC4EC


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        detail = ", ".join(f"{k}={v}" for k, v in self.details.items())
        return f"{self.name}: {status}" + (f" ({detail})" if detail else "")


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((_CHECK_STREAM, tag, seed)))


def random_instance(
    rng: np.random.Generator,
    max_vocab: int = 4,
    max_depth: int = 4,
    allow_zero_init: bool = False,
) -> tuple[TokenMdp, DemoSet, LogitModel]:
    """A random small task plus a random tabular model over it."""
    family = ("single-path", "branchy-trap", "random-dag")[int(rng.integers(3))]
    vocab_size = int(rng.integers(3 if family == "branchy-trap" else 2, max_vocab + 1))
    depth = int(rng.integers(2, max_depth + 1))
    params: dict[str, Any] = {"depth": depth, "vocab_size": vocab_size}
    if family == "branchy-trap":
        params["branches"] = 1
    if family == "random-dag":
        n_rewarded = int(rng.integers(1, min(3, dag_capacity(depth, vocab_size)) + 1))
        params["n_rewarded"] = n_rewarded
        params["n_demos"] = int(rng.integers(1, n_rewarded + 1))
    mdp, demos = generate_task(family, int(rng.integers(2**31)), params)
    if allow_zero_init and rng.random() < 0.2:
        init = InitSpec("zeros")
    else:
        sigma = float(rng.choice((0.5, 1.0, 2.0)))
        init = InitSpec("gaussian", sigma, int(rng.integers(2**31)))
    return mdp, demos, LogitModel(mdp, init)


def grad_entry_errors(
    analytic: GradientTable, numeric: GradientTable, abs_tol: float
) -> tuple[float, float]:
    """(worst relative error above the absolute floor, worst absolute error below it)."""
    keys = set(analytic.rows) | set(numeric.rows)
    worst_rel = 0.0
    worst_abs = 0.0
    for key in keys:
        a_row = analytic.row(key)
        n_row = numeric.row(key)
        for x, y in zip(a_row, n_row):
            diff = abs(x - y)
            scale = max(abs(x), abs(y))
            if scale <= abs_tol:
                worst_abs = max(worst_abs, diff)
            else:
                worst_rel = max(worst_rel, diff / scale)
    return worst_rel, worst_abs


def grad_norm_error(analytic: GradientTable, numeric: GradientTable) -> tuple[float, float]:
    """(L2-relative error, absolute L2 difference) between two gradient tables.

    The relative form is the usual gradient-check ratio ||a - n|| / ||n||;
    central differences at eps=1e-6 carry an O(1e-9) absolute noise floor in
    float64, so per-entry relative comparisons are meaningless for entries
    below that floor while the norm ratio stays well-conditioned.
    """
    keys = set(analytic.rows) | set(numeric.rows)
    diff_sq = 0.0
    ref_sq = 0.0
    for key in keys:
        d = analytic.row(key) - numeric.row(key)
        diff_sq += float(d @ d)
        n = numeric.row(key)
        ref_sq += float(n @ n)
    diff = diff_sq**0.5
    ref = ref_sq**0.5
    return (diff / ref if ref > 0 else 0.0, diff)


def check_gradients(
    n_instances: int = 200,
    eps: float = 1e-6,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-10,
    seed: int = 0,
) -> CheckResult:
    """Analytic sft/v/reinforce gradients vs central finite differences."""
    rng = _rng(seed, 1)
    worst_rel = 0.0
    worst_abs = 0.0
    analytic_fns = {"sft": sft_grad, "v": v_grad, "reinforce": reinforce_grad}
    for _ in range(n_instances):
        mdp, demos, model = random_instance(rng, max_vocab=4, max_depth=3)
        for name, fn in analytic_fns.items():
            rel, diff = grad_norm_error(fn(model, demos), finite_diff_grad(name, model, demos, eps))
            if diff > abs_tol:
                worst_rel = max(worst_rel, rel)
            else:
                worst_abs = max(worst_abs, diff)
    passed = worst_rel <= rel_tol
    return CheckResult(
        "gradients",
        passed,
        {"instances": n_instances, "worst_rel": f"{worst_rel:.3e}", "worst_abs_floor": f"{worst_abs:.3e}"},
    )


def check_telescoping(n_mdps: int = 100, tol: float = 1e-8, seed: int = 0) -> CheckResult:
    """Score telescoping for oracle models; decomposition identity for arbitrary ones."""
    rng = _rng(seed, 2)
    worst_oracle = 0.0
    worst_residual = 0.0
    worst_identity = 0.0
    trajectories = 0
    for _ in range(n_mdps):
        mdp, _, model = random_instance(rng, max_vocab=4, max_depth=5, allow_zero_init=True)
        table = soft_q_backward(mdp)
        oracle_model = optimal_policy(table, mdp)
        for prompt in mdp.prompts:
            for traj in enumerate_trajectories(mdp, prompt):
                trajectories += 1
                dec = score_decomposition(oracle_model, traj)
                telescoped = table.q[traj.contexts[-2].tokens][traj.actions[-1]] - table.v[prompt.tokens]
                worst_oracle = max(worst_oracle, abs(dec.sum_logpi - telescoped))
                if dec.residuals:
                    worst_residual = max(worst_residual, max(abs(r) for r in dec.residuals))
                worst_identity = max(worst_identity, abs(score_decomposition(model, traj).identity_gap))
    passed = max(worst_oracle, worst_residual, worst_identity) <= tol
    return CheckResult(
        "telescoping",
        passed,
        {
            "mdps": n_mdps,
            "trajectories": trajectories,
            "worst_oracle_gap": f"{worst_oracle:.3e}",
            "worst_residual": f"{worst_residual:.3e}",
            "worst_identity_gap": f"{worst_identity:.3e}",
        },
    )


def check_contraction(n_pairs: int = 100_000, seed: int = 0) -> CheckResult:
    """Gap contraction of the direct value update under its sufficient condition.

    Pairs violating ``alpha/(v1*v2) <= 2`` are exercised too: their expansions
    are counted rather than failed, and at least one must occur so the
    documented counterexample region is actually covered.
    """
    rng = _rng(seed, 3)
    v1 = np.exp(rng.uniform(np.log(0.05), np.log(20.0), n_pairs))
    v2 = np.exp(rng.uniform(np.log(0.05), np.log(20.0), n_pairs))
    alpha = rng.uniform(0.0, 1.0, n_pairs)
    inside = alpha / (v1 * v2) <= 2.0

    gap_before = np.abs(v1 - v2)
    gap_after = np.empty(n_pairs)
    for i in range(n_pairs):
        updated = direct_v_update(np.array([v1[i], v2[i]]), float(alpha[i]))
        gap_after[i] = abs(updated[0] - updated[1])

    slack = 1e-9 * np.maximum(1.0, gap_before)
    contracted = gap_after <= gap_before + slack
    violations_inside = int(np.sum(inside & ~contracted))
    expansions_outside = int(np.sum(~inside & ~contracted))
    passed = violations_inside == 0 and expansions_outside > 0
    return CheckResult(
        "contraction",
        passed,
        {
            "pairs": n_pairs,
            "inside_condition": int(inside.sum()),
            "violations_inside": violations_inside,
            "expansions_outside_condition": expansions_outside,
        },
    )


def check_beam(
    n_width1: int = 1000,
    n_exhaustive: int = 100,
    n_monotone: int = 100,
    seed: int = 0,
    score_tol: float = 1e-10,
) -> CheckResult:
    """Width-1/greedy equality, exhaustive-beam/brute-force equality, score
    integrity of every pooled hypothesis, and width monotonicity of the best
    final score over the sampled instances."""
    rng = _rng(seed, 4)
    width1_mismatch = 0
    for _ in range(n_width1):
        mdp, _, model = random_instance(rng, max_vocab=4, max_depth=4, allow_zero_init=True)
        prompt = mdp.prompts[0]
        traj, _ = beam_search(model, mdp, prompt, 1)
        if traj.final.tokens != greedy_decode(model, mdp, prompt).final.tokens:
            width1_mismatch += 1

    exhaustive_mismatch = 0
    worst_score_gap = 0.0
    for _ in range(n_exhaustive):
        mdp, _, model = random_instance(rng, max_vocab=3, max_depth=5, allow_zero_init=True)
        prompt = mdp.prompts[0]
        k = mdp.vocab.size**mdp.max_len
        traj, trace = beam_search(model, mdp, prompt, k)
        if traj.final.tokens != brute_force_best_sequence(model, mdp, prompt).final.tokens:
            exhaustive_mismatch += 1
        # Score integrity: every pooled hypothesis recomputes to its own score.
        for hyp in trace.pool:
            replay = rollout(mdp, prompt, hyp.ctx.tokens[len(prompt.tokens) :])
            worst_score_gap = max(
                worst_score_gap, abs(hyp.score - trajectory_log_prob(model, replay))
            )

    monotone_violations = 0
    for _ in range(n_monotone):
        mdp, _, model = random_instance(rng, max_vocab=4, max_depth=4)
        prompt = mdp.prompts[0]
        best = -np.inf
        for k in range(1, 9):
            _, trace = beam_search(model, mdp, prompt, k)
            score = trace.pool[0].score
            if score < best - 1e-9:
                monotone_violations += 1
            best = max(best, score)

    passed = (
        width1_mismatch == 0
        and exhaustive_mismatch == 0
        and monotone_violations == 0
        and worst_score_gap <= score_tol
    )
    return CheckResult(
        "beam",
        passed,
        {
            "width1_mismatch": width1_mismatch,
            "exhaustive_mismatch": exhaustive_mismatch,
            "monotone_violations": monotone_violations,
            "worst_score_gap": f"{worst_score_gap:.3e}",
        },
    )


CHECKS = {
    "gradients": check_gradients,
    "telescoping": check_telescoping,
    "contraction": check_contraction,
    "beam": check_beam,
}
