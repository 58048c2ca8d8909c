"""Turning fitted factors into community assignments and group statistics.

Each learner's raw W row measures its degree of participation in every
component; normalising the row gives a soft membership distribution, and
its argmax the hard community label.  Because different random starts can
land in different optima, assignment runs many restarts and keeps the
factors with the best data likelihood.  Communities that end up with a
single member are excluded from group-level analysis.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaincc
from scipy.stats import rankdata

from .data import SimilarityMatrix, _freeze
from .errors import DataValidationError, NumericalError
from .model import FactorModel, FitResult, Hyperparameters, derive_seed, fit


@dataclass(frozen=True)
class MembershipProfile:
    """Soft and hard community membership for one learner.

    distribution is the learner's W row normalised to sum 1; hard_label is
    its argmax (first index on exact ties).  A learner whose raw row is all
    zero is unassigned: hard_label is None and the distribution stays zero.
    """

    learner_id: str
    distribution: np.ndarray
    hard_label: int | None
    degree_of_participation: np.ndarray

    def __post_init__(self):
        dist = np.asarray(self.distribution, dtype=np.float64)
        raw = np.asarray(self.degree_of_participation, dtype=np.float64)
        object.__setattr__(self, "distribution", _freeze(dist))
        object.__setattr__(self, "degree_of_participation", _freeze(raw))
        if dist.min(initial=0.0) < 0:
            raise DataValidationError("distribution entries must be >= 0")
        if self.hard_label is None:
            if dist.any():
                raise DataValidationError(
                    "unassigned profile must carry a zero distribution")
        else:
            if abs(dist.sum() - 1.0) > 1e-9:
                raise DataValidationError("distribution must sum to 1")
            if self.hard_label != int(np.argmax(dist)):
                raise DataValidationError("hard_label must be the argmax")

    @property
    def unassigned(self) -> bool:
        return self.hard_label is None


@dataclass(frozen=True)
class CommunityReport:
    """Assignments for every learner plus restart provenance.

    community_sizes counts hard labels over assigned learners, so it sums
    to N minus the unassigned count.  filtered_singletons lists learners
    whose community has a single member; group-level analysis skips them.
    """

    assignments: tuple[MembershipProfile, ...]
    community_sizes: tuple[int, ...]
    filtered_singletons: tuple[str, ...]
    restarts_used: int
    best_seed: int

    @property
    def k_star(self) -> int:
        return len(self.community_sizes)

    def to_dict(self) -> dict:
        return {
            "restarts_used": self.restarts_used,
            "best_seed": self.best_seed,
            "k_star": self.k_star,
            "community_sizes": list(self.community_sizes),
            "filtered_singletons": list(self.filtered_singletons),
            "assignments": [
                {
                    "learner_id": p.learner_id,
                    "hard_label": p.hard_label,
                    "unassigned": p.unassigned,
                    "distribution": [float(v) for v in p.distribution],
                    "degree_of_participation": [
                        float(v) for v in p.degree_of_participation],
                }
                for p in self.assignments
            ],
        }

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self, dest) -> None:
        """Flat CSV: learner_id, hard_label, unassigned, p0..p{K-1}."""
        own = not hasattr(dest, "write")
        handle = open(dest, "w", newline="", encoding="utf-8") if own else dest
        try:
            writer = csv.writer(handle)
            writer.writerow(["learner_id", "hard_label", "unassigned"]
                            + [f"p{k}" for k in range(self.k_star)])
            for p in self.assignments:
                label = "" if p.unassigned else p.hard_label
                writer.writerow([p.learner_id, label, int(p.unassigned)]
                                + [repr(float(v)) for v in p.distribution])
        finally:
            if own:
                handle.close()


def soft_membership(model: FactorModel, learner_ids=None) -> list[MembershipProfile]:
    """Normalise each W row into a membership distribution.

    Rows that are exactly zero are flagged unassigned instead of being
    normalised.  learner_ids defaults to the row index as a string.
    """
    if model.is_empty:
        raise DataValidationError(
            "cannot assign memberships from an empty model")
    if learner_ids is None:
        learner_ids = tuple(str(i) for i in range(model.n))
    if len(learner_ids) != model.n:
        raise DataValidationError(
            f"{len(learner_ids)} learner ids for {model.n} rows")
    profiles = []
    for lid, row in zip(learner_ids, model.w):
        total = row.sum()
        if total == 0.0:
            profiles.append(MembershipProfile(
                learner_id=lid, distribution=np.zeros_like(row),
                hard_label=None, degree_of_participation=row))
        else:
            dist = row / total
            profiles.append(MembershipProfile(
                learner_id=lid, distribution=dist,
                hard_label=int(np.argmax(dist)),
                degree_of_participation=row))
    return profiles


def report_from_fit(best: FitResult, learner_ids=None,
                    restarts_used: int = 1) -> CommunityReport:
    """Assemble a community report from an already-selected fit."""
    profiles = soft_membership(best.model, learner_ids)
    k = best.model.k
    labels = [p.hard_label for p in profiles if not p.unassigned]
    sizes = np.bincount(labels, minlength=k) if labels else np.zeros(k, int)
    singles = tuple(p.learner_id for p in profiles
                    if not p.unassigned and sizes[p.hard_label] == 1)
    return CommunityReport(assignments=tuple(profiles),
                           community_sizes=tuple(int(s) for s in sizes),
                           filtered_singletons=singles,
                           restarts_used=restarts_used, best_seed=best.seed)


def best_of_restarts(x: SimilarityMatrix, hp: Hyperparameters,
                     n_restarts: int, seed: int) -> CommunityReport:
    """Fit n_restarts times with derived seeds and keep the restart whose
    exact data negative log-likelihood is lowest (ties go to the earliest
    restart), then assign memberships from it."""
    if n_restarts < 1:
        raise DataValidationError("n_restarts must be at least 1")
    best = None
    for i in range(n_restarts):
        result = fit(x, hp, derive_seed(seed, i))
        if result.model.is_empty:
            continue
        if best is None or result.final_data_nll < best.final_data_nll:
            best = result
    if best is None:
        raise NumericalError(
            f"all {n_restarts} restarts produced empty models")
    return report_from_fit(best, x.learner_ids, restarts_used=n_restarts)


# --- group statistics ----------------------------------------------------

def kruskal_wallis(groups) -> tuple[float, float]:
    """Rank-based one-way analysis of variance across groups.

    Ranks use midranks for ties, the H statistic carries the standard tie
    correction, and the p-value is the chi-square survival function with
    len(groups) - 1 degrees of freedom, computed from the regularised upper
    incomplete gamma function.  All-identical data gives H = 0, p = 1.
    """
    samples = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(samples) < 2:
        raise DataValidationError("need at least 2 groups")
    if any(s.ndim != 1 or s.size == 0 for s in samples):
        raise DataValidationError("every group must be a non-empty 1-d sample")
    pooled = np.concatenate(samples)
    n = pooled.size
    if n < 3:
        raise DataValidationError("need at least 3 observations in total")
    df = len(samples) - 1
    if np.ptp(pooled) == 0.0:
        return 0.0, 1.0

    ranks = rankdata(pooled)
    h = 0.0
    start = 0
    for s in samples:
        r = ranks[start:start + s.size]
        h += r.sum() ** 2 / s.size
        start += s.size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)

    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float((counts ** 3 - counts).sum())
    correction = 1.0 - tie_term / (n ** 3 - n)
    h = h / correction
    p = float(gammaincc(df / 2.0, h / 2.0))
    return float(h), p


@dataclass(frozen=True)
class AttributeSummary:
    """Per-community statistics for one attribute column.

    Real-valued attributes report per-community means and a Kruskal-Wallis
    p-value across communities; categorical ones report value proportions.
    """

    name: str
    kind: str  # "real" or "categorical"
    per_community: dict
    kruskal_h: float | None
    kruskal_p: float | None
    n_values: int


@dataclass(frozen=True)
class CrosstabReport:
    communities: tuple[int, ...]
    attributes: tuple[AttributeSummary, ...]
    skipped_count: int

    def to_dict(self) -> dict:
        return {
            "communities": list(self.communities),
            "skipped_count": self.skipped_count,
            "attributes": [
                {
                    "name": a.name,
                    "kind": a.kind,
                    "per_community": {str(c): v for c, v in
                                      sorted(a.per_community.items())},
                    "kruskal_h": a.kruskal_h,
                    "kruskal_p": a.kruskal_p,
                    "n_values": a.n_values,
                }
                for a in self.attributes
            ],
        }

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)


def load_attribute_table(source) -> dict[str, dict[str, str]]:
    """Read a CSV keyed by learner_id into {learner_id: {attribute: value}}."""
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataValidationError("line 1: empty input") from None
    if not header or header[0].strip() != "learner_id":
        raise DataValidationError(
            "line 1: first column header must be 'learner_id'")
    names = [c.strip() for c in header[1:]]
    table: dict[str, dict[str, str]] = {}
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(header):
            raise DataValidationError(
                f"line {line}: expected {len(header)} fields, found {len(row)}")
        lid = row[0].strip()
        if lid in table:
            raise DataValidationError(f"line {line}: duplicate learner id {lid!r}")
        table[lid] = {name: cell.strip() for name, cell in zip(names, row[1:])}
    return table


def _is_real(values) -> bool:
    try:
        for v in values:
            float(v)
    except (TypeError, ValueError):
        return False
    return True


def group_crosstab(report: CommunityReport, attributes) -> CrosstabReport:
    """Summarise learner attributes per analysed community.

    attributes maps learner_id to {attribute name: value}.  Learners that
    are unassigned, in singleton communities, or absent from the attribute
    table are excluded; attribute rows for unknown learners count toward
    skipped_count.  Communities with fewer than two members are never
    analysed.
    """
    known = {p.learner_id for p in report.assignments}
    skipped = sum(1 for lid in attributes if lid not in known)

    singles = set(report.filtered_singletons)
    members: dict[int, list[str]] = {}
    for p in report.assignments:
        if p.unassigned or p.learner_id in singles:
            continue
        if p.learner_id not in attributes:
            continue
        members.setdefault(p.hard_label, []).append(p.learner_id)
    if not members:
        raise DataValidationError(
            "no overlap between assignments and the attribute table")
    communities = tuple(sorted(members))

    names: list[str] = []
    for lid in attributes:
        for name in attributes[lid]:
            if name not in names:
                names.append(name)

    summaries = []
    for name in names:
        values: dict[int, list[str]] = {}
        for c in communities:
            vals = [attributes[lid][name] for lid in members[c]
                    if name in attributes[lid] and attributes[lid][name] != ""]
            if vals:
                values[c] = vals
        pooled = [v for vs in values.values() for v in vs]
        if not pooled:
            continue
        if _is_real(pooled):
            per = {c: {"n": len(vs),
                       "mean": float(np.mean([float(v) for v in vs]))}
                   for c, vs in values.items()}
            h = p = None
            if len(values) >= 2 and len(pooled) >= 3:
                h, p = kruskal_wallis(
                    [[float(v) for v in vs] for vs in values.values()])
            summaries.append(AttributeSummary(
                name=name, kind="real", per_community=per,
                kruskal_h=h, kruskal_p=p, n_values=len(pooled)))
        else:
            per = {}
            for c, vs in values.items():
                counts: dict[str, int] = {}
                for v in vs:
                    counts[v] = counts.get(v, 0) + 1
                per[c] = {"n": len(vs),
                          "proportions": {k: counts[k] / len(vs)
                                          for k in sorted(counts)}}
            summaries.append(AttributeSummary(
                name=name, kind="categorical", per_community=per,
                kruskal_h=None, kruskal_p=None, n_values=len(pooled)))
    return CrosstabReport(communities=communities,
                          attributes=tuple(summaries),
                          skipped_count=skipped)
