"""Origin prevalence among inventors by group and year.

The prevalence of origin ``k`` in group ``j`` and year ``t`` is the mean
predicted probability of ``k`` over every inventor record in that cell.
Each patent-inventor record counts once; no deduplication across patents.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .dataset import DEFAULT_TAXONOMY, OriginTaxonomy
from .errors import InputFormatError, MissingHomeSet, MissingMapping, ParseError, UnknownOrigin

GROUP_BY = ("country", "tech_field", "region", "global")
INVENTOR_COLUMNS = ("inventor_id", "name", "country", "tech_field", "priority_year")


@dataclass
class InventorRecord:
    inventor_id: str
    name: str
    country: str
    tech_field: str
    priority_year: int
    prediction: np.ndarray | None = None


@dataclass
class PrevalenceSeries:
    group: str
    year: int
    values: np.ndarray
    n: int


def _group_key(record: InventorRecord, group_by: str, regions: Mapping[str, str] | None):
    if group_by == "country":
        return record.country
    if group_by == "tech_field":
        return record.tech_field
    if group_by == "global":
        return "global"
    if group_by == "region":
        if regions is None:
            raise ValueError("group_by='region' needs a country -> region mapping")
        if record.country not in regions:
            raise MissingMapping(f"no region for country {record.country!r}")
        return regions[record.country]
    raise ValueError(f"group_by must be one of {GROUP_BY}, got {group_by!r}")


def prevalence(records: Iterable[InventorRecord], group_by: str = "country",
               taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY, regions=None) -> dict:
    """Map ``(group, year)`` to a :class:`PrevalenceSeries`, sorted by key."""
    sums: dict = defaultdict(lambda: np.zeros(len(taxonomy)))
    counts: dict = defaultdict(int)
    for rec in records:
        if rec.prediction is None:
            raise ValueError(f"record {rec.inventor_id} has no prediction")
        key = (_group_key(rec, group_by, regions), int(rec.priority_year))
        sums[key] += rec.prediction
        counts[key] += 1
    return {key: PrevalenceSeries(key[0], key[1], sums[key] / counts[key], counts[key])
            for key in sorted(sums)}


def aggregate_subset(series: Mapping, origins: Iterable[str],
                     taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY) -> dict:
    """Summed prevalence of ``origins`` per ``(group, year)``."""
    try:
        idx = taxonomy.indices(origins)
    except KeyError as exc:
        raise UnknownOrigin(f"unknown origin {exc.args[0]!r}") from None
    return {key: float(s.values[idx].sum()) for key, s in series.items()}


def dominant_series(series: Mapping, mapping: Mapping[str, str],
                    taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY, groups=None) -> dict:
    """Prevalence of each group's mapped origin; ``groups`` defaults to all in ``series``."""
    groups = sorted({key[0] for key in series}) if groups is None else list(groups)
    missing = [g for g in groups if g not in mapping]
    if missing:
        raise MissingMapping(f"no dominant origin given for {missing}")
    out = {}
    for key, s in series.items():
        if key[0] in groups:
            try:
                out[key] = float(s.values[taxonomy.index(mapping[key[0]])])
            except KeyError:
                raise UnknownOrigin(f"unknown origin {mapping[key[0]]!r}") from None
    return out


@dataclass
class LocationCounts:
    domestic: int = 0
    abroad: int = 0

    @property
    def total(self):
        return self.domestic + self.abroad

    @property
    def domestic_share(self):
        return self.domestic / self.total if self.total else 0.0

    @property
    def abroad_share(self):
        return self.abroad / self.total if self.total else 0.0


def location_split(records: Iterable[InventorRecord], home_countries: Mapping[str, Iterable[str]],
                   origins=None, taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY) -> dict:
    """Domestic/abroad counts per origin and year, by each inventor's top predicted origin."""
    origins = list(home_countries) if origins is None else list(origins)
    missing = [o for o in origins if o not in home_countries]
    if missing:
        raise MissingHomeSet(f"no home countries given for {missing}")
    try:
        wanted = {taxonomy.index(o): o for o in origins}
    except KeyError as exc:
        raise UnknownOrigin(f"unknown origin {exc.args[0]!r}") from None
    homes = {o: set(home_countries[o]) for o in origins}
    out: dict = {o: defaultdict(LocationCounts) for o in origins}
    for rec in records:
        top = int(np.argmax(rec.prediction))
        if top not in wanted:
            continue
        origin = wanted[top]
        cell = out[origin][int(rec.priority_year)]
        if rec.country in homes[origin]:
            cell.domestic += 1
        else:
            cell.abroad += 1
    return {o: dict(sorted(years.items())) for o, years in out.items()}


def load_inventor_csv(path, taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY) -> list[InventorRecord]:
    """Read inventor rows; probability columns ``p_1..p_K`` are optional."""
    K = len(taxonomy)
    prob_cols = [f"p_{k}" for k in range(1, K + 1)]
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputFormatError(f"{path} is empty")
        header = [h.strip() for h in header]
        if tuple(header[:5]) != INVENTOR_COLUMNS or header[5:] not in ([], prob_cols):
            raise ParseError("header must be " + ",".join(INVENTOR_COLUMNS) + f"[,p_1..p_{K}]", line=1)
        has_probs = len(header) > 5
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
            if not row[2].strip():
                raise ParseError("empty country code", line=line)
            try:
                year = int(row[4])
                pred = np.array([float(v) for v in row[5:]]) if has_probs else None
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            if pred is not None and ((pred < 0).any() or abs(pred.sum() - 1.0) > 1e-6):
                raise ParseError("probabilities must be nonnegative and sum to 1", line=line)
            records.append(InventorRecord(row[0], row[1], row[2].strip(), row[3], year, pred))
    return records


def write_inventor_csv(path, records: Iterable[InventorRecord], taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY):
    records = list(records)
    with_probs = bool(records) and all(r.prediction is not None for r in records)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        prob_cols = [f"p_{k}" for k in range(1, len(taxonomy) + 1)] if with_probs else []
        writer.writerow(list(INVENTOR_COLUMNS) + prob_cols)
        for r in records:
            probs = [repr(float(v)) for v in r.prediction] if with_probs else []
            writer.writerow([r.inventor_id, r.name, r.country, r.tech_field, r.priority_year] + probs)


def write_series_csv(path, series: Mapping, taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY):
    """Tidy ``group,year,origin,value,n`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group", "year", "origin", "value", "n"])
        for (group, year), s in series.items():
            for origin, value in zip(taxonomy.names, s.values):
                writer.writerow([group, year, origin, repr(float(value)), s.n])


def write_scalar_csv(path, values: Mapping, label: str, series: Mapping):
    """Rows ``group,year,origin,value,n`` for one derived scalar per cell."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group", "year", "origin", "value", "n"])
        for (group, year), value in values.items():
            writer.writerow([group, year, label, repr(float(value)), series[(group, year)].n])
