"""Fold assignments for cross-validated stacking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .rng import Stream


@dataclass(frozen=True)
class FoldAssignment:
    n: int
    k: int
    seed: int
    fold_of: tuple

    def indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.fold_of) == fold)

    def complement(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.fold_of) != fold)

    def sizes(self) -> list:
        return np.bincount(np.asarray(self.fold_of), minlength=self.k).tolist()


def split_folds(n: int, k: int = 10, seed: int = 0, *, stratify=None) -> FoldAssignment:
    """Shuffle rows with a seeded stream and cut them into ``k`` blocks.

    Block sizes differ by at most one; the first ``n % k`` folds get the
    extra row.  With ``stratify`` (a 0/1 outcome vector) rows are ordered by
    class after shuffling and dealt round-robin, so each class is spread
    across folds within one row.
    """
    if k < 2:
        raise DomainError(f"need at least 2 folds, got {k}")
    if n < k:
        raise DomainError(f"cannot split {n} rows into {k} folds")
    order = Stream(seed, "folds").permutation(n)
    fold_of = np.empty(n, dtype=int)
    if stratify is None:
        base, extra = divmod(n, k)
        sizes = [base + (1 if f < extra else 0) for f in range(k)]
        bounds = np.cumsum([0] + sizes)
        for f in range(k):
            fold_of[order[bounds[f] : bounds[f + 1]]] = f
    else:
        y = np.asarray(stratify)
        if y.shape != (n,):
            raise DomainError("stratify vector must have one entry per row")
        ordered = order[np.argsort(y[order], kind="stable")]
        fold_of[ordered] = np.arange(n) % k
    return FoldAssignment(n=n, k=k, seed=int(seed), fold_of=tuple(fold_of.tolist()))
