"""Training objectives over demonstration pairs and their exact tabular gradients.

With one logit per (context, action), the parameter gradient of each loss has a
closed row form at every supervised context ``s`` (``w`` is the mean weight
``1/len(pairs)``, accumulated once per pair):

* cross-entropy imitation:   ``w * (policy(s) - onehot(demo action))``
* value loss ``-logsumexp``: ``-w * policy(s)``
* rewarded policy gradient:  ``w * (onehot(demo action) - policy(s))``

All rows vanish on contexts outside the demonstration set. A central
finite-difference checker over every materialized parameter serves as the
independent oracle for the analytic forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import DemoSet
from .model import InitSpec, Key, LogitModel


@dataclass
class GradientTable:
    """Sparse per-(context, action) partials; absent rows are zero."""

    size: int
    rows: dict[Key, np.ndarray] = field(default_factory=dict)

    def acc(self, key: Key) -> np.ndarray:
        row = self.rows.get(key)
        if row is None:
            row = self.rows[key] = np.zeros(self.size)
        return row

    def row(self, key: Key) -> np.ndarray:
        row = self.rows.get(key)
        return row.copy() if row is not None else np.zeros(self.size)

    def entry(self, key: Key, action: int) -> float:
        row = self.rows.get(key)
        return float(row[action]) if row is not None else 0.0

    def scaled_sum(self, other: "GradientTable", weight: float) -> "GradientTable":
        out = GradientTable(self.size, {k: v.copy() for k, v in self.rows.items()})
        for key, row in other.rows.items():
            acc = out.acc(key)
            acc += weight * row
        return out


@dataclass(frozen=True)
class TrainConfig:
    """Full-batch gradient descent settings for the combined objective."""

    v_weight: float = 0.2
    lr: float = 0.5
    epochs: int = 100
    init: InitSpec = InitSpec("gaussian", 2.0, 0)

    def __post_init__(self) -> None:
        if self.v_weight < 0:
            raise ValueError(f"v_weight must be >= 0, got {self.v_weight}")
        if not 0 < self.lr <= 1:
            raise ValueError(f"lr must be in (0, 1], got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True)
class LossReport:
    sft: float
    v: float
    overall: float


def _pairs(demos: DemoSet):
    pairs = demos.pairs
    if not pairs:
        raise ValueError("demo set is empty")
    return pairs


def sft_loss(model: LogitModel, demos: DemoSet) -> float:
    """Mean negative log-likelihood of the demonstrated actions.

    Evaluated through the identity ``-log pi(a|s) = soft_value(s) - logit(s, a)``
    so sharply wrong logits never produce ``log(0)``.
    """
    pairs = _pairs(demos)
    total = 0.0
    for ctx, action in pairs:
        total += model.soft_value(ctx) - float(model.logits(ctx)[action])
    return total / len(pairs)


def sft_grad(model: LogitModel, demos: DemoSet) -> GradientTable:
    pairs = _pairs(demos)
    w = 1.0 / len(pairs)
    g = GradientTable(model.mdp.vocab.size)
    for ctx, action in pairs:
        row = g.acc(ctx.tokens)
        row += w * model.policy(ctx)
        row[action] -= w
    return g


def v_loss(model: LogitModel, demos: DemoSet) -> float:
    """Mean negative soft value over supervised contexts, one term per pair."""
    pairs = _pairs(demos)
    return -sum(model.soft_value(ctx) for ctx, _ in pairs) / len(pairs)


def v_grad(model: LogitModel, demos: DemoSet) -> GradientTable:
    pairs = _pairs(demos)
    w = 1.0 / len(pairs)
    g = GradientTable(model.mdp.vocab.size)
    for ctx, _ in pairs:
        row = g.acc(ctx.tokens)
        row -= w * model.policy(ctx)
    return g


def reinforce_grad(model: LogitModel, demos: DemoSet) -> GradientTable:
    """Ascent gradient of the mean demonstrated log-likelihood.

    On rewarded demonstrations this is entrywise the negative of ``sft_grad``:
    imitating a one-hot target and reinforcing a reward-1 trajectory are the
    same update with opposite sign conventions.
    """
    pairs = _pairs(demos)
    if any(traj.reward != 1 for traj in demos.trajectories):
        raise ValueError("reinforce_grad requires every demo trajectory to carry reward 1")
    w = 1.0 / len(pairs)
    g = GradientTable(model.mdp.vocab.size)
    for ctx, action in pairs:
        row = g.acc(ctx.tokens)
        row -= w * model.policy(ctx)
        row[action] += w
    return g


def overall_loss(model: LogitModel, demos: DemoSet, v_weight: float) -> LossReport:
    s = sft_loss(model, demos)
    v = v_loss(model, demos)
    return LossReport(s, v, s + v_weight * v)


def train_step(model: LogitModel, demos: DemoSet, cfg: TrainConfig) -> LogitModel:
    """One full-batch descent step on ``sft + v_weight * v``; returns a new model.

    Touched contexts are materialized from their defaults before the update, so
    repeated steps keep acting on the same stored rows.
    """
    grad = sft_grad(model, demos)
    if cfg.v_weight != 0.0:
        grad = grad.scaled_sum(v_grad(model, demos), cfg.v_weight)
    new_rows: dict[Key, np.ndarray] = {}
    for key, row in grad.rows.items():
        current = model.table.get(key)
        if current is None:
            current = model.default_logits(key)
        new_rows[key] = current - cfg.lr * row
    return model.with_updated_rows(new_rows)


_LOSS_SELECTORS = ("sft", "v", "overall", "reinforce")


def _selected_loss(loss: str, v_weight: float):
    if loss == "sft":
        return sft_loss
    if loss == "v":
        return v_loss
    if loss == "overall":
        return lambda m, d: sft_loss(m, d) + v_weight * v_loss(m, d)
    if loss == "reinforce":
        # The return objective, not a loss: its finite differences are the
        # ascent gradient and compare directly against reinforce_grad.
        return lambda m, d: sum(float(m.log_policy(c)[a]) for c, a in d.pairs) / len(d.pairs)
    raise ValueError(f"unknown loss selector {loss!r}, expected one of {_LOSS_SELECTORS}")


def finite_diff_grad(
    loss: str,
    model: LogitModel,
    demos: DemoSet,
    eps: float = 1e-6,
    v_weight: float = 0.0,
) -> GradientTable:
    """Central differences of the selected objective over every materialized parameter."""
    if not 0 < eps <= 1e-2:
        raise ValueError(f"eps must be in (0, 1e-2], got {eps}")
    fn = _selected_loss(loss, v_weight)
    work = model.snapshot()
    work.materialize(demos.supervised_keys)
    g = GradientTable(model.mdp.vocab.size)
    for key in sorted(work.table):
        row = work.table[key]
        out = g.acc(key)
        for a in range(model.mdp.vocab.size):
            orig = row[a]
            row[a] = orig + eps
            up = fn(work, demos)
            row[a] = orig - eps
            down = fn(work, demos)
            row[a] = orig
            out[a] = (up - down) / (2.0 * eps)
    return g


def direct_v_update(values: np.ndarray, alpha: float) -> np.ndarray:
    """One descent step on ``-log V`` for a directly parameterized positive value vector.

    The update is ``V + alpha / V``; the gap between two entries contracts
    exactly when ``alpha / (V_i * V_j) <= 2``, which positivity alone does not
    guarantee (see the shipped counterexample in the tests).
    """
    v = np.asarray(values, dtype=np.float64)
    if not np.all(v > 0):
        raise ValueError("direct_v_update requires strictly positive values")
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return v + alpha / v
