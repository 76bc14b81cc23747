"""Tabular logit models over token contexts.

A model maps each non-terminal context to one real logit per vocabulary token.
The softmax of a context's logits is the policy, and the logsumexp is the
state's soft value, so log-probabilities are always computed as
``logit - soft_value`` rather than ``log(softmax)``.

Contexts absent from the table fall back to a default vector that is a pure,
seeded function of the context's tokens, which models states the training data
never touched without materializing the full exponential table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import TerminalContextError
from .mdp import Context, TokenMdp

Key = tuple[int, ...]

_CONTEXT_STREAM = 0x10D3

INIT_SCHEMES = ("zeros", "gaussian", "from_table")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-shifted softmax; safe for logit magnitudes far beyond exp overflow."""
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def logsumexp(logits: np.ndarray) -> float:
    z = np.asarray(logits, dtype=np.float64)
    m = float(z.max())
    return m + float(np.log(np.exp(z - m).sum()))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    return z - logsumexp(z)


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy with the 0*log(0) = 0 convention."""
    p = np.asarray(probs, dtype=np.float64)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


@dataclass(frozen=True)
class InitSpec:
    """How default logits (and any preloaded entries) were produced."""

    scheme: str
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.scheme not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {self.scheme!r}, expected one of {INIT_SCHEMES}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


class LogitModel:
    """Context -> logit-vector table with seeded defaults for absent contexts."""

    def __init__(
        self,
        mdp: TokenMdp,
        init_spec: InitSpec,
        table: dict[Key, np.ndarray] | None = None,
    ):
        self.mdp = mdp
        self.init_spec = init_spec
        self.table: dict[Key, np.ndarray] = dict(table or {})
        for key, row in self.table.items():
            if row.shape != (mdp.vocab.size,):
                raise ValueError(f"logit row for {key} has shape {row.shape}, expected ({mdp.vocab.size},)")
            if not np.all(np.isfinite(row)):
                raise ValueError(f"logit row for {key} contains non-finite entries")

    def default_logits(self, key: Key) -> np.ndarray:
        spec = self.init_spec
        n = self.mdp.vocab.size
        if spec.scheme == "gaussian" and spec.sigma > 0:
            rng = np.random.default_rng(np.random.SeedSequence((_CONTEXT_STREAM, spec.seed, *key)))
            return rng.normal(0.0, spec.sigma, n)
        return np.zeros(n)

    def _row(self, ctx: Context) -> np.ndarray:
        if self.mdp.is_terminal(ctx):
            raise TerminalContextError(f"no logits at terminal context {ctx.tokens}")
        row = self.table.get(ctx.tokens)
        return row if row is not None else self.default_logits(ctx.tokens)

    def logits(self, ctx: Context) -> np.ndarray:
        return self._row(ctx).copy()

    def policy(self, ctx: Context) -> np.ndarray:
        return softmax(self._row(ctx))

    def soft_value(self, ctx: Context) -> float:
        return logsumexp(self._row(ctx))

    def log_policy(self, ctx: Context) -> np.ndarray:
        return log_softmax(self._row(ctx))

    def materialize(self, keys: Iterable[Key]) -> None:
        """Store default rows for the given contexts so updates can touch them."""
        for key in keys:
            if key not in self.table:
                self.table[key] = self.default_logits(key)

    def with_updated_rows(self, rows: dict[Key, np.ndarray]) -> "LogitModel":
        """A new model sharing this one's untouched rows. Rows are never mutated in place."""
        table = dict(self.table)
        table.update(rows)
        return LogitModel(self.mdp, self.init_spec, table)

    def snapshot(self) -> "LogitModel":
        return LogitModel(self.mdp, self.init_spec, {k: v.copy() for k, v in self.table.items()})


def init_model(
    mdp: TokenMdp,
    scheme: str = "zeros",
    seed: int = 0,
    sigma: float = 0.0,
    table: dict[Key, np.ndarray] | None = None,
) -> LogitModel:
    """Fresh model; ``zeros`` yields the uniform policy everywhere, ``gaussian``
    draws each context's default vector i.i.d. N(0, sigma^2) from a per-context
    seeded stream, and ``from_table`` wraps an explicit logit table."""
    if scheme == "from_table":
        if table is None:
            raise ValueError("from_table init requires a table")
        return LogitModel(mdp, InitSpec("from_table", 0.0, seed), table)
    if table is not None:
        raise ValueError(f"init scheme {scheme!r} does not accept a table")
    return LogitModel(mdp, InitSpec(scheme, sigma, seed))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def model_to_doc(model: LogitModel) -> dict[str, Any]:
    spec = model.init_spec
    return {
        "vocab_size": model.mdp.vocab.size,
        "init_spec": {"scheme": spec.scheme, "sigma": spec.sigma, "seed": spec.seed},
        "entries": [
            {"context": list(key), "logits": [float(x) for x in model.table[key]]}
            for key in sorted(model.table)
        ],
    }


def model_from_doc(doc: dict[str, Any], mdp: TokenMdp) -> LogitModel:
    if int(doc["vocab_size"]) != mdp.vocab.size:
        raise ValueError(
            f"model vocab_size {doc['vocab_size']} does not match task vocabulary {mdp.vocab.size}"
        )
    spec = doc["init_spec"]
    init = InitSpec(spec["scheme"], float(spec.get("sigma", 0.0)), int(spec.get("seed", 0)))
    table = {
        tuple(int(t) for t in e["context"]): np.asarray(e["logits"], dtype=np.float64)
        for e in doc["entries"]
    }
    return LogitModel(mdp, init, table)


def save_model(path: str | Path, model: LogitModel) -> None:
    Path(path).write_text(json.dumps(model_to_doc(model), indent=2) + "\n")


def load_model(path: str | Path, mdp: TokenMdp) -> LogitModel:
    return model_from_doc(json.loads(Path(path).read_text()), mdp)
