"""Poisson factor model with column-wise shrinkage and its MAP loop.

The similarity counts x_ij are modelled as Poisson with rate (WH)_ij.
Columns of W and matching rows of H carry half-normal priors whose
precisions beta_k follow a Gamma hyperprior; large precisions shrink a
component toward zero, so the surviving column count emerges during
inference rather than being fixed up front.  The posterior is maximised by
cycling multiplicative fixed-point updates of H, W and beta that keep every
factor nonnegative, then dropping columns whose entries all fall below a
pruning threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .data import SimilarityMatrix, _freeze
from .errors import DataValidationError, NumericalError

# Per-step slack allowed in the descent check, relative to |U_0|.
MONOTONE_TOL = 1e-8


@dataclass(frozen=True)
class Hyperparameters:
    """Knobs of the model and its fitting loop.

    a, b are the Gamma shape/rate on the precisions.  k0 is the initial
    component count (None resolves to min(N, 100) at fit time; shrinkage
    prunes the excess).  eps floors every denominator and every rate inside
    a log.  prune_tol is the column-max threshold below which a component
    counts as dead.
    """

    a: float = 5.0
    b: float = 2.0
    k0: int | None = None
    n_iter: int = 2000
    rel_tol: float = 1e-9
    eps: float = 1e-12
    prune_tol: float = 1e-6

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise DataValidationError("a and b must be positive")
        if self.k0 is not None and self.k0 < 1:
            raise DataValidationError("k0 must be at least 1")
        if self.n_iter < 1:
            raise DataValidationError("n_iter must be at least 1")
        if self.rel_tol < 0:
            raise DataValidationError("rel_tol must be nonnegative")
        if not self.eps > 0:
            raise DataValidationError("eps must be positive")
        if not self.prune_tol > 0:
            raise DataValidationError("prune_tol must be positive")

    def resolve_k0(self, n: int) -> int:
        return min(n, 100) if self.k0 is None else self.k0


@dataclass(frozen=True)
class FactorModel:
    """Nonnegative factors W (N x K), H (K x N) and precisions beta (K).

    K may be zero (the empty model left after pruning kills every column);
    downstream assignment rejects that case explicitly.
    """

    w: np.ndarray
    h: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        h = np.asarray(self.h, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        if w.ndim != 2 or h.ndim != 2 or beta.ndim != 1:
            raise DataValidationError("w, h must be 2-d and beta 1-d")
        if w.shape[1] != h.shape[0] or w.shape[1] != beta.shape[0]:
            raise DataValidationError(
                f"inconsistent component count: w has {w.shape[1]} columns, "
                f"h has {h.shape[0]} rows, beta has {beta.shape[0]} entries")
        if w.shape[0] != h.shape[1]:
            raise DataValidationError(
                f"w has {w.shape[0]} rows but h has {h.shape[1]} columns")
        if w.size and w.min() < 0:
            raise DataValidationError("w must be nonnegative")
        if h.size and h.min() < 0:
            raise DataValidationError("h must be nonnegative")
        if beta.size and beta.min() <= 0:
            raise DataValidationError("beta must be positive")
        object.__setattr__(self, "w", _freeze(w))
        object.__setattr__(self, "h", _freeze(h))
        object.__setattr__(self, "beta", _freeze(beta))

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def k(self) -> int:
        return self.w.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.k == 0

    def rates(self) -> np.ndarray:
        """Poisson rate matrix WH (the all-zero matrix when K = 0)."""
        if self.is_empty:
            return np.zeros((self.n, self.n))
        return self.w @ self.h


@dataclass(frozen=True)
class FitResult:
    """Outcome of one seeded fitting run.

    energy_trace holds the objective value at initialization and after each
    sweep; it is non-increasing within MONOTONE_TOL * |U_0| per step.
    final_data_nll is the exact Poisson negative log-likelihood of the data
    under the pruned factors (observed entries only for masked fits).
    """

    model: FactorModel
    k_star: int
    energy_trace: tuple[float, ...]
    final_data_nll: float
    iterations_run: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "k_star": self.k_star,
            "seed": self.seed,
            "iterations_run": self.iterations_run,
            "final_data_nll": self.final_data_nll,
            "energy_trace": list(self.energy_trace),
            "w": [[float(v) for v in row] for row in self.model.w],
            "h": [[float(v) for v in row] for row in self.model.h],
            "beta": [float(v) for v in self.model.beta],
        }

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)


def derive_seed(seed: int, index: int) -> int:
    """Deterministic child seed for restart/subset number ``index``."""
    ss = np.random.SeedSequence((_normalize_seed(seed), index))
    return int(ss.generate_state(1, np.uint64)[0])


def _normalize_seed(seed: int) -> int:
    # default_rng wants a nonnegative int; fold negatives deterministically
    return int(seed) % (1 << 128)


def _as_float_matrix(x) -> np.ndarray:
    if isinstance(x, SimilarityMatrix):
        return x.entries.astype(np.float64)
    return np.asarray(x, dtype=np.float64)


def _check_mask(mask: np.ndarray, n: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (n, n):
        raise DataValidationError(f"mask shape {mask.shape} != ({n}, {n})")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise DataValidationError("mask entries must be 0 or 1")
    return mask


# --- energy components -------------------------------------------------

def poisson_nll(x, model: FactorModel, eps: float = 1e-12) -> float:
    """Exact Poisson negative log-likelihood of x under rates WH.

    Rates are floored at eps so zero rates stay finite; the log-factorial
    term uses log-gamma, which keeps x = 0 well defined.
    """
    xa = _as_float_matrix(x)
    if model.n != xa.shape[0] or xa.shape[0] != xa.shape[1]:
        raise DataValidationError(
            f"data is {xa.shape} but model expects ({model.n}, {model.n})")
    rates = np.maximum(model.rates(), eps)
    return float((rates - xa * np.log(rates)).sum() + gammaln(xa + 1).sum())


def neg_log_prior(w: np.ndarray, h: np.ndarray, beta: np.ndarray) -> float:
    """Half-normal column/row priors on W and H, additive constants dropped:
    sum_ik beta_k w_ik^2 / 2 - (N/2) sum_k log beta_k, plus the H mirror."""
    w = np.asarray(w, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if beta.size and beta.min() <= 0:
        raise DataValidationError("beta must be positive")
    if w.shape[1] != beta.shape[0] or h.shape[0] != beta.shape[0]:
        raise DataValidationError("beta length must match the factor rank")
    if not beta.size:
        return 0.0
    quad = 0.5 * (float(((w * w) @ beta).sum()) + float((beta @ (h * h)).sum()))
    log_term = 0.5 * (w.shape[0] + h.shape[1]) * float(np.log(beta).sum())
    return quad - log_term


def neg_log_hyperprior(beta: np.ndarray, hp: Hyperparameters) -> float:
    """Gamma hyperprior on the precisions, constants dropped:
    sum_k [beta_k b - (a - 1) log beta_k]."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.size and beta.min() <= 0:
        raise DataValidationError("beta must be positive")
    return float((beta * hp.b - (hp.a - 1.0) * np.log(beta)).sum())


def energy(x, model: FactorModel, hp: Hyperparameters) -> float:
    """Negative log posterior up to constants: likelihood + priors + hyperprior."""
    return (poisson_nll(x, model, hp.eps)
            + neg_log_prior(model.w, model.h, model.beta)
            + neg_log_hyperprior(model.beta, hp))


# --- multiplicative updates --------------------------------------------
#
# The cores take the (possibly masked) data, the current factors and a
# precomputed rate matrix; the public wrappers and the fit loop both call
# them, so a loop sweep and the standalone operations agree bit for bit.

def _update_h_core(xm, w, h, beta, eps, wh, mask=None):
    ratio = xm / np.maximum(wh, eps)
    if mask is None:
        denom = w.sum(axis=0)[:, None] + beta[:, None] * h
    else:
        denom = w.T @ mask + beta[:, None] * h
    return h * (w.T @ ratio) / np.maximum(denom, eps)


def _update_w_core(xm, w, h, beta, eps, wh, mask=None):
    ratio = xm / np.maximum(wh, eps)
    if mask is None:
        denom = h.sum(axis=1)[None, :] + w * beta[None, :]
    else:
        denom = mask @ h.T + w * beta[None, :]
    return w * (ratio @ h.T) / np.maximum(denom, eps)


def _update_beta_core(w, h, a, b):
    n = w.shape[0]
    scale = 0.5 * ((w * w).sum(axis=0) + (h * h).sum(axis=1)) + b
    return (n + a - 1.0) / scale


def _masked_data(x, mask):
    xa = _as_float_matrix(x)
    if mask is None:
        return xa, None
    mask = _check_mask(mask, xa.shape[0])
    if mask.all():
        return xa, None
    return xa * mask, mask


def update_h(x, model: FactorModel, hp: Hyperparameters, mask=None) -> np.ndarray:
    """One multiplicative H step:
    H <- (H / (W^T 1 + diag(beta) H)) * [W^T (X / (WH))]."""
    xm, m = _masked_data(x, mask)
    return _update_h_core(xm, model.w, model.h, model.beta, hp.eps,
                          model.rates(), m)


def update_w(x, model: FactorModel, hp: Hyperparameters, mask=None) -> np.ndarray:
    """One multiplicative W step:
    W <- (W / (1 H^T + W diag(beta))) * [(X / (WH)) H^T]."""
    xm, m = _masked_data(x, mask)
    return _update_w_core(xm, model.w, model.h, model.beta, hp.eps,
                          model.rates(), m)


def update_beta(model: FactorModel, hp: Hyperparameters) -> np.ndarray:
    """Closed-form precision update
    beta_k <- (N + a - 1) / ((sum_i w_ik^2 + sum_j h_kj^2)/2 + b),
    the exact minimiser of the energy in beta_k with W, H held fixed."""
    return _update_beta_core(model.w, model.h, hp.a, hp.b)


def prune(model: FactorModel, prune_tol: float) -> FactorModel:
    """Drop every component whose W column max and H row max both fall
    below prune_tol, preserving survivor order."""
    if model.is_empty:
        return model
    w_max = model.w.max(axis=0)
    h_max = model.h.max(axis=1)
    keep = (w_max >= prune_tol) | (h_max >= prune_tol)
    if keep.all():
        return model
    return FactorModel(model.w[:, keep], model.h[keep, :], model.beta[keep])


# --- fitting loop -------------------------------------------------------

def fit(x, hp: Hyperparameters, seed: int, mask=None) -> FitResult:
    """Run the fixed-point loop from a seeded random start.

    Cycles H, W, beta updates until the relative energy change drops below
    hp.rel_tol or hp.n_iter sweeps have run, then prunes dead components.
    With a mask, only entries where mask is 1 enter the likelihood (both in
    the updates and in the reported objective), so masked cells of x never
    influence the result.  Bit-reproducible given (x, hp, seed, mask).
    """
    xa = _as_float_matrix(x)
    if xa.ndim != 2 or xa.shape[0] != xa.shape[1]:
        raise DataValidationError("x must be a square matrix")
    n = xa.shape[0]
    k0 = hp.resolve_k0(n)
    if k0 < 1:
        raise DataValidationError("k0 must be at least 1")
    if mask is not None:
        mask = _check_mask(mask, n)
        if (mask.sum(axis=1) == 0).any():
            raise DataValidationError(
                "every row needs at least one observed entry")
        if mask.all():
            mask = None  # nothing held out: take the unmasked path exactly
    if mask is not None:
        xm = xa * mask
        n_obs = mask.sum()
    else:
        xm = xa
        n_obs = float(n * n)

    rng = np.random.default_rng(_normalize_seed(seed))
    # factors start on the data's scale: uniform (0, 1] times sqrt(mean/k0)
    scale = np.sqrt(xm.sum() / n_obs / k0)
    w = (1.0 - rng.random((n, k0))) * scale
    h = (1.0 - rng.random((k0, n))) * scale
    beta = np.ones(k0)

    # log-factorial part of the likelihood never changes; masked cells of xm
    # are zero, so they contribute gammaln(1) = 0
    log_fact = float(gammaln(xm + 1).sum())

    def objective(wh):
        rates = np.maximum(wh, hp.eps)
        if mask is None:
            nll = float(rates.sum() - (xm * np.log(rates)).sum())
        else:
            nll = float((mask * rates).sum() - (xm * np.log(rates)).sum())
        quad = 0.5 * float(((w * w) @ beta).sum() + (beta @ (h * h)).sum())
        log_beta = float(np.log(beta).sum())
        prior = quad - n * log_beta
        hyper = float((beta * hp.b - (hp.a - 1.0) * np.log(beta)).sum())
        return nll + log_fact + prior + hyper

    wh = w @ h
    trace = [objective(wh)]
    iterations = 0
    for _ in range(hp.n_iter):
        h = _update_h_core(xm, w, h, beta, hp.eps, wh, mask)
        wh = w @ h
        w = _update_w_core(xm, w, h, beta, hp.eps, wh, mask)
        wh = w @ h
        beta = _update_beta_core(w, h, hp.a, hp.b)
        assert w.min() >= 0 and h.min() >= 0 and beta.min() > 0
        u = objective(wh)
        if not np.isfinite(u):
            raise NumericalError(f"energy became non-finite ({u})")
        trace.append(u)
        iterations += 1
        if abs(trace[-2] - u) < hp.rel_tol * abs(trace[-2]):
            break

    slack = MONOTONE_TOL * abs(trace[0])
    worst = float(np.max(np.diff(trace))) if len(trace) > 1 else 0.0
    if worst > slack:
        raise NumericalError(
            f"energy increased by {worst:.3e} (> {slack:.3e}) during fitting")

    model = prune(FactorModel(w, h, beta), hp.prune_tol)
    rates = np.maximum(model.rates(), hp.eps)
    if mask is None:
        final_nll = float(rates.sum() - (xm * np.log(rates)).sum()) + log_fact
    else:
        final_nll = (float((mask * rates).sum() - (xm * np.log(rates)).sum())
                     + log_fact)
    return FitResult(model=model, k_star=model.k,
                     energy_trace=tuple(trace), final_data_nll=final_nll,
                     iterations_run=iterations, seed=int(seed))
