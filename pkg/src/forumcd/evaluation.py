"""Hold-out benchmarking of the factor model against naive baselines.

The protocol samples principal submatrices of the similarity matrix, masks
a fixed fraction of each row as held-out test cells, trains on the rest,
and scores held-out predictions by RMSE and exact Poisson negative
log-likelihood.  Two baselines frame the comparison: predicting the
training mean everywhere (Pred-Avg) and predicting zero everywhere
(Pred-0).  A zero rate has no finite Poisson log-likelihood, so Pred-0's
NLL is reported as undefined rather than as a number.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .data import SimilarityMatrix, _freeze
from .errors import DataValidationError
from .model import FitResult, Hyperparameters, derive_seed, fit


@dataclass(frozen=True)
class HoldoutSplit:
    """A similarity matrix with some cells masked out for testing.

    train_mask is 1 on observed cells and 0 exactly on test_indices.
    """

    x: SimilarityMatrix
    train_mask: np.ndarray
    test_indices: tuple[tuple[int, int], ...]

    def __post_init__(self):
        mask = np.asarray(self.train_mask, dtype=np.float64)
        n = self.x.n
        if mask.shape != (n, n):
            raise DataValidationError(f"mask shape {mask.shape} != ({n}, {n})")
        if not np.isin(mask, (0.0, 1.0)).all():
            raise DataValidationError("mask entries must be 0 or 1")
        held = {(int(i), int(j)) for i, j in zip(*np.nonzero(mask == 0.0))}
        if held != {(int(i), int(j)) for i, j in self.test_indices}:
            raise DataValidationError(
                "test_indices must list exactly the zero cells of the mask")
        object.__setattr__(self, "train_mask", _freeze(mask))
        object.__setattr__(
            self, "test_indices",
            tuple((int(i), int(j)) for i, j in self.test_indices))


def subsample(x: SimilarityMatrix, size: int, seed: int) -> SimilarityMatrix:
    """Principal submatrix on a uniformly sampled index set."""
    if size < 1:
        raise DataValidationError("size must be at least 1")
    if size > x.n:
        raise DataValidationError(f"size {size} exceeds matrix order {x.n}")
    rng = np.random.default_rng(seed % (1 << 128))
    idx = rng.choice(x.n, size=size, replace=False)
    entries = x.entries[np.ix_(idx, idx)]
    ids = tuple(x.learner_ids[i] for i in idx)
    return SimilarityMatrix(entries, ids)


def holdout_split(x: SimilarityMatrix, fraction: float, seed: int,
                  symmetric: bool = False) -> HoldoutSplit:
    """Mask floor(fraction * N) uniformly chosen cells per row (at least 1).

    Masking is per-entry by default; with symmetric=True the mirror cell
    (j, i) is masked alongside every chosen (i, j).
    """
    if not 0.0 < fraction < 1.0:
        raise DataValidationError("fraction must lie strictly between 0 and 1")
    n = x.n
    if n < 2:
        raise DataValidationError("need at least 2 learners to hold out data")
    per_row = max(1, math.floor(fraction * n))
    per_row = min(per_row, n - 1)  # keep at least one training cell per row

    rng = np.random.default_rng(seed % (1 << 128))
    mask = np.ones((n, n))
    for i in range(n):
        cols = rng.choice(n, size=per_row, replace=False)
        mask[i, cols] = 0.0
    if symmetric:
        mask = np.minimum(mask, mask.T)
        if (mask.sum(axis=1) == 0).any():
            raise DataValidationError(
                "symmetric masking left a row with no training entries")
    test = tuple((int(i), int(j)) for i, j in zip(*np.nonzero(mask == 0.0)))
    return HoldoutSplit(x=x, train_mask=mask, test_indices=test)


def masked_fit(split: HoldoutSplit, hp: Hyperparameters, seed: int) -> FitResult:
    """Fit on the observed cells only.

    The mask enters the likelihood ratios and denominators, so held-out
    cells of x never influence the factors, the energy trace, or the
    reported data NLL (which covers observed cells only).
    """
    return fit(split.x, hp, seed, mask=split.train_mask)


def evaluate_heldout(split: HoldoutSplit, predictions) -> tuple[float, float | None]:
    """Score predictions on the held-out cells.

    Returns (rmse, nll); nll is the summed exact Poisson negative
    log-likelihood of the held-out counts at the predicted rates, and is
    None whenever any predicted rate is exactly zero (no finite value
    exists).
    """
    pred = np.asarray(predictions, dtype=np.float64)
    n = split.x.n
    if pred.shape != (n, n):
        raise DataValidationError(f"predictions shape {pred.shape} != ({n}, {n})")
    if pred.min() < 0:
        raise DataValidationError("predictions must be nonnegative")
    if not split.test_indices:
        raise DataValidationError("split has no held-out cells")
    rows = np.array([i for i, _ in split.test_indices])
    cols = np.array([j for _, j in split.test_indices])
    truth = split.x.entries[rows, cols].astype(np.float64)
    rates = pred[rows, cols]
    rmse = float(np.sqrt(np.mean((truth - rates) ** 2)))
    if (rates == 0.0).any():
        return rmse, None
    nll = float((rates - truth * np.log(rates) + gammaln(truth + 1)).sum())
    return rmse, nll


def pred_avg(split: HoldoutSplit) -> np.ndarray:
    """Predict the arithmetic mean of the observed cells everywhere."""
    observed = split.train_mask.sum()
    mean = float((split.x.entries * split.train_mask).sum() / observed)
    return np.full((split.x.n, split.x.n), mean)


def pred_zero(split: HoldoutSplit) -> np.ndarray:
    """Predict zero everywhere."""
    return np.zeros((split.x.n, split.x.n))


@dataclass(frozen=True)
class ModelScore:
    model_name: str
    rmse: float
    nll: float | None


@dataclass(frozen=True)
class EvalReport:
    """Mean held-out scores per model across all subsets.

    subset_scores keeps the per-subset values behind the means; an
    undefined NLL anywhere makes the mean NLL undefined.
    """

    rows: tuple[ModelScore, ...]
    n_subsets: int
    subset_size: int
    subset_scores: tuple[tuple[ModelScore, ...], ...]

    def to_dict(self) -> dict:
        def row(s: ModelScore) -> dict:
            return {"model_name": s.model_name, "rmse": s.rmse, "nll": s.nll}

        return {
            "n_subsets": self.n_subsets,
            "subset_size": self.subset_size,
            "rows": [row(s) for s in self.rows],
            "subset_scores": [[row(s) for s in subset]
                              for subset in self.subset_scores],
        }

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)

    def format_table(self) -> str:
        """Aligned table with models as columns and RMSE/NLL as rows;
        undefined NLL renders as a dash."""
        names = [s.model_name for s in self.rows]
        rmse = [f"{s.rmse:.4f}" for s in self.rows]
        nll = ["-" if s.nll is None else f"{s.nll:.2f}" for s in self.rows]
        widths = [max(len(a), len(b), len(c))
                  for a, b, c in zip(names, rmse, nll)]
        head = len("RMSE")
        lines = []
        for label, cells in (("", names), ("RMSE", rmse), ("NLL", nll)):
            row = [label.ljust(head)]
            row += [c.rjust(w) for c, w in zip(cells, widths)]
            lines.append("  ".join(row).rstrip())
        return "\n".join(lines) + "\n"


def benchmark(x: SimilarityMatrix, n_subsets: int, subset_size: int,
              fraction: float, hp: Hyperparameters, seed: int,
              symmetric_mask: bool = False) -> EvalReport:
    """Run the full subset/hold-out protocol and average the scores.

    Each subset gets its own derived seeds for sampling, splitting and
    fitting, so the whole report is reproducible from (x, config, seed).
    """
    if n_subsets < 1:
        raise DataValidationError("n_subsets must be at least 1")
    per_subset: list[tuple[ModelScore, ...]] = []
    for s in range(n_subsets):
        sub_seed = derive_seed(seed, s)
        sub = subsample(x, subset_size, derive_seed(sub_seed, 0))
        split = holdout_split(sub, fraction, derive_seed(sub_seed, 1),
                              symmetric=symmetric_mask)
        result = masked_fit(split, hp, derive_seed(sub_seed, 2))
        scores = []
        for name, pred in (("BNMF", result.model.rates()),
                           ("Pred-Avg", pred_avg(split)),
                           ("Pred-0", pred_zero(split))):
            rmse, nll = evaluate_heldout(split, pred)
            scores.append(ModelScore(model_name=name, rmse=rmse, nll=nll))
        per_subset.append(tuple(scores))

    rows = []
    for m, name in enumerate(("BNMF", "Pred-Avg", "Pred-0")):
        rmses = [subset[m].rmse for subset in per_subset]
        nlls = [subset[m].nll for subset in per_subset]
        mean_nll = None if any(v is None for v in nlls) \
            else float(np.mean(nlls))
        rows.append(ModelScore(model_name=name, rmse=float(np.mean(rmses)),
                               nll=mean_nll))
    return EvalReport(rows=tuple(rows), n_subsets=n_subsets,
                      subset_size=subset_size,
                      subset_scores=tuple(per_subset))
