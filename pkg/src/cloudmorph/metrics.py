"""Attack-potential metrics over face-recognition comparison scores.

A score table holds one row per (morph, probe attempt, recognition system)
with the similarity scores of every subject who contributed to the morph.
A morph defeats a system on an attempt when every contributing subject's
score strictly exceeds that system's threshold. The metric family
aggregates these successes:

- per system, averaged over morphs and attempts (the "single system" value),
- across systems, taking the worst case per (morph, attempt) cell before
  averaging, optionally discounted by failure-to-acquire rates,
- across morph generation types, averaging the per-type results.

Thresholds are set empirically from non-mated score distributions at a
chosen false-match rate.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyScoresError,
    MissingThresholdError,
    RaggedDataError,
    UnsupportedArityError,
)

QUADRANTS = ("I", "II", "III", "IV")


@dataclass(frozen=True)
class ScoreRecord:
    """Scores of one morph probed in one attempt against one system.

    subject_scores holds one similarity score per contributing subject
    (two for a standard morph); morph_type labels the generation method.
    """

    morph_id: str
    frs_id: str
    attempt_index: int
    subject_scores: tuple[float, ...]
    morph_type: str = "default"

    def __post_init__(self) -> None:
        scores = tuple(float(s) for s in self.subject_scores)
        if len(scores) < 2:
            raise ValueError("a morph needs at least two subject scores")
        if not all(np.isfinite(scores)):
            raise ValueError("subject scores must be finite")
        if self.attempt_index < 1:
            raise ValueError("attempt_index must be >= 1")
        object.__setattr__(self, "subject_scores", scores)


@dataclass(frozen=True)
class FrsThreshold:
    """Decision threshold of one recognition system at a target false-match
    rate. ``saturated`` flags that no observed score achieved the target."""

    frs_id: str
    tau: float
    fmr_target: float
    saturated: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.fmr_target < 1.0:
            raise ValueError("fmr_target must lie in (0, 1)")


@dataclass(frozen=True)
class FtarTable:
    """Failure-to-acquire rates keyed by (attempt_index, frs_id).

    Missing entries count as zero, so an empty table means perfect
    acquisition.
    """

    rates: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean = {}
        for (attempt, frs_id), value in dict(self.rates).items():
            value = float(value)
            if not 0.0 <= value <= 1.0:
                raise ValueError(
                    f"FTAR for attempt {attempt}, frs {frs_id!r} must lie in [0, 1]"
                )
            clean[(int(attempt), str(frs_id))] = value
        object.__setattr__(self, "rates", clean)

    def get(self, attempt_index: int, frs_id: str) -> float:
        return self.rates.get((attempt_index, frs_id), 0.0)


@dataclass(frozen=True)
class GmapReport:
    """Per-system percentages, the cross-system worst case, and quadrant
    tallies."""

    per_frs: dict
    cross_frs: float
    quadrant_counts: dict
    n_morphs: int
    n_attempts: int


def threshold_at_fmr(nonmated_scores, fmr_target: float, frs_id: str = "") -> FrsThreshold:
    """Smallest observed score whose exceedance rate is at most fmr_target.

    The threshold tau satisfies count(scores >= tau) / total <= fmr_target;
    downstream comparisons are strict (score > tau), so the achieved
    false-match rate never exceeds the target. When even the maximum score
    fails the target (too many ties, too few scores), the maximum is
    returned with ``saturated`` set.
    """
    scores = np.asarray(list(nonmated_scores), dtype=np.float64)
    if scores.size == 0:
        raise EmptyScoresError("cannot compute a threshold from an empty score set")
    if not 0.0 < fmr_target < 1.0:
        raise ValueError("fmr_target must lie in (0, 1)")
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-mated scores must be finite")
    n = scores.size
    if n < 1.0 / fmr_target:
        warnings.warn(
            f"only {n} non-mated scores for an FMR target of {fmr_target}; "
            f"at least {int(np.ceil(1.0 / fmr_target))} are recommended",
            stacklevel=2,
        )
    ordered = np.sort(scores)
    uniq = np.unique(ordered)
    at_or_above = n - np.searchsorted(ordered, uniq, side="left")
    admissible = at_or_above / n <= fmr_target
    if admissible.any():
        tau = float(uniq[int(np.argmax(admissible))])
        return FrsThreshold(frs_id, tau, fmr_target, saturated=False)
    return FrsThreshold(frs_id, float(uniq[-1]), fmr_target, saturated=True)


def quadrant_classify(record: ScoreRecord, threshold: FrsThreshold) -> str:
    """Quadrant of (subject-1 score, subject-2 score) against the threshold.

    "I" means both scores are above (a successful attack), "II" only the
    second, "IV" only the first, "III" neither. Comparisons are strict, so
    a score equal to the threshold does not count as above it.
    """
    if len(record.subject_scores) != 2:
        raise UnsupportedArityError(
            f"quadrants are defined for 2 subjects, record has {len(record.subject_scores)}"
        )
    s1, s2 = record.subject_scores
    above1 = s1 > threshold.tau
    above2 = s2 > threshold.tau
    if above1 and above2:
        return "I"
    if above2:
        return "II"
    if above1:
        return "IV"
    return "III"


def _cell_table(records):
    """Index records by (type, morph, attempt, system); reject duplicates."""
    cells = {}
    for rec in records:
        key = (rec.morph_type, rec.morph_id, rec.attempt_index, rec.frs_id)
        if key in cells:
            raise RaggedDataError(
                f"duplicate cell: type={key[0]!r} morph={key[1]!r} "
                f"attempt={key[2]} frs={key[3]!r}"
            )
        cells[key] = rec
    return cells


def gmap(records, thresholds, ftar: FtarTable | None = None) -> float:
    """Generalized attack-potential percentage over the full score table.

    Every (attempt, morph) cell is scored with the worst case across
    recognition systems of success * (1 - failure-to-acquire); cell scores
    are averaged per generation type, and the per-type averages are
    averaged. Requires a rectangular table: every morph must be scored for
    every attempt under every system, otherwise RaggedDataError is raised.
    """
    records = list(records)
    if not records:
        raise EmptyScoresError("no score records")
    ftar = ftar if ftar is not None else FtarTable()
    tau = {t.frs_id: t.tau for t in thresholds}
    frs_ids = sorted({r.frs_id for r in records})
    for frs_id in frs_ids:
        if frs_id not in tau:
            raise MissingThresholdError(f"no threshold for frs_id {frs_id!r}")
    attempts = sorted({r.attempt_index for r in records})
    cells = _cell_table(records)
    attempt_pos = {a: i for i, a in enumerate(attempts)}
    frs_pos = {f: i for i, f in enumerate(frs_ids)}

    type_means = []
    for morph_type in sorted({r.morph_type for r in records}):
        morphs = sorted({r.morph_id for r in records if r.morph_type == morph_type})
        values = np.full((len(morphs), len(attempts), len(frs_ids)), np.nan)
        for j, morph_id in enumerate(morphs):
            for attempt in attempts:
                for frs_id in frs_ids:
                    rec = cells.get((morph_type, morph_id, attempt, frs_id))
                    if rec is None:
                        raise RaggedDataError(
                            f"missing cell: type={morph_type!r} morph={morph_id!r} "
                            f"attempt={attempt} frs={frs_id!r}"
                        )
                    hit = all(s > tau[frs_id] for s in rec.subject_scores)
                    values[j, attempt_pos[attempt], frs_pos[frs_id]] = (
                        float(hit) * (1.0 - ftar.get(attempt, frs_id))
                    )
        type_means.append(float(values.min(axis=2).mean()))
    return 100.0 * float(np.mean(type_means))


def gmap_ma(records, threshold: FrsThreshold) -> float:
    """Single-system attack potential with failure-to-acquire ignored.

    Expects records from one system and one generation type; equals the
    general metric restricted accordingly.
    """
    records = list(records)
    if not records:
        raise EmptyScoresError("no score records")
    types = {r.morph_type for r in records}
    if len(types) > 1:
        raise ValueError(f"expected a single morph type, got {sorted(types)}")
    return gmap(records, [threshold], FtarTable())


def gmap_mamf(records, thresholds, ftar: FtarTable | None = None) -> float:
    """Worst-case-across-systems attack potential for one generation type.

    Each (attempt, morph) cell takes the minimum over systems of
    success * (1 - failure-to-acquire) before averaging.
    """
    records = list(records)
    if not records:
        raise EmptyScoresError("no score records")
    frs_present = {r.frs_id for r in records}
    if len(frs_present) < 2:
        raise ValueError("the cross-system metric needs at least two systems")
    types = {r.morph_type for r in records}
    if len(types) > 1:
        raise ValueError(f"expected a single morph type, got {sorted(types)}")
    return gmap(records, thresholds, ftar)


def build_report(records, thresholds, ftar: FtarTable | None = None) -> GmapReport:
    """Assemble per-system values, the cross-system value, and quadrant
    counts (for two-subject records) into one report.

    Per-system values ignore failure-to-acquire by definition; the
    cross-system value honours the supplied table.
    """
    records = list(records)
    if not records:
        raise EmptyScoresError("no score records")
    threshold_map = {t.frs_id: t for t in thresholds}
    frs_ids = sorted({r.frs_id for r in records})
    for frs_id in frs_ids:
        if frs_id not in threshold_map:
            raise MissingThresholdError(f"no threshold for frs_id {frs_id!r}")
    per_frs = {}
    quadrant_counts = {}
    for frs_id in frs_ids:
        subset = [r for r in records if r.frs_id == frs_id]
        per_frs[frs_id] = gmap(subset, [threshold_map[frs_id]], FtarTable())
        counts = {q: 0 for q in QUADRANTS}
        for rec in subset:
            counts[quadrant_classify(rec, threshold_map[frs_id])] += 1
        quadrant_counts[frs_id] = counts
    cross = gmap(records, thresholds, ftar)
    return GmapReport(
        per_frs=per_frs,
        cross_frs=cross,
        quadrant_counts=quadrant_counts,
        n_morphs=len({r.morph_id for r in records}),
        n_attempts=len({r.attempt_index for r in records}),
    )


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

SCORES_COLUMNS = ("morph_id", "morph_type", "frs_id", "attempt", "score_s1", "score_s2")
NONMATED_COLUMNS = ("frs_id", "score")
FTAR_COLUMNS = ("frs_id", "attempt", "ftar")


def _check_columns(reader: csv.DictReader, required, path) -> None:
    have = reader.fieldnames or []
    missing = [c for c in required if c not in have]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}; found {have}")


def read_scores_csv(path) -> list[ScoreRecord]:
    """Read `morph_id,morph_type,frs_id,attempt,score_s1,score_s2` rows."""
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        _check_columns(reader, SCORES_COLUMNS, path)
        for row_num, row in enumerate(reader, start=2):
            try:
                records.append(
                    ScoreRecord(
                        morph_id=row["morph_id"],
                        morph_type=row["morph_type"],
                        frs_id=row["frs_id"],
                        attempt_index=int(row["attempt"]),
                        subject_scores=(float(row["score_s1"]), float(row["score_s2"])),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: row {row_num}: {exc}") from exc
    if not records:
        raise EmptyScoresError(f"{path}: no score rows")
    return records


def read_nonmated_csv(path) -> dict:
    """Read `frs_id,score` rows into per-system score lists."""
    path = Path(path)
    scores: dict[str, list[float]] = {}
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        _check_columns(reader, NONMATED_COLUMNS, path)
        for row_num, row in enumerate(reader, start=2):
            try:
                scores.setdefault(row["frs_id"], []).append(float(row["score"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: row {row_num}: {exc}") from exc
    if not scores:
        raise EmptyScoresError(f"{path}: no non-mated rows")
    return scores


def read_ftar_csv(path) -> FtarTable:
    """Read `frs_id,attempt,ftar` rows into a failure-to-acquire table."""
    path = Path(path)
    rates = {}
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        _check_columns(reader, FTAR_COLUMNS, path)
        for row_num, row in enumerate(reader, start=2):
            try:
                rates[(int(row["attempt"]), row["frs_id"])] = float(row["ftar"])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: row {row_num}: {exc}") from exc
    return FtarTable(rates)


def write_report_csv(report: GmapReport, path) -> None:
    """Write `frs_id,gmap_ma,quad1,quad2,quad3,quad4` rows plus a final
    `MAMF,<value>` row with the cross-system result."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["frs_id", "gmap_ma", "quad1", "quad2", "quad3", "quad4"])
        for frs_id in sorted(report.per_frs):
            counts = report.quadrant_counts[frs_id]
            writer.writerow(
                [frs_id, f"{report.per_frs[frs_id]:.6f}"]
                + [counts[q] for q in QUADRANTS]
            )
        writer.writerow(["MAMF", f"{report.cross_frs:.6f}"])


def write_scatter_csv(records, thresholds, path) -> None:
    """Write plot-ready `morph_id,frs_id,attempt,score_s1,score_s2,quadrant`
    rows, one per record, in input order."""
    threshold_map = {t.frs_id: t for t in thresholds}
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["morph_id", "frs_id", "attempt", "score_s1", "score_s2", "quadrant"])
        for rec in records:
            threshold = threshold_map.get(rec.frs_id)
            if threshold is None:
                raise MissingThresholdError(f"no threshold for frs_id {rec.frs_id!r}")
            quad = quadrant_classify(rec, threshold)
            s1, s2 = rec.subject_scores
            writer.writerow(
                [rec.morph_id, rec.frs_id, rec.attempt_index, repr(s1), repr(s2), quad]
            )
