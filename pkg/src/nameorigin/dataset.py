"""Origin taxonomy, labeled-name corpora, splitting and sampling."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .codec import normalize
from .errors import (
    EmptyAfterNormalization,
    EmptyFile,
    InvalidConfig,
    ParseError,
    TooFewSamples,
    UnknownLabel,
)

ORIGINS = (
    "Anglo-Saxon",
    "Arabic",
    "Balkans",
    "Chinese",
    "East-Europe",
    "French",
    "German",
    "Hispanic-Iberian",
    "India",
    "Italian",
    "Japanese",
    "Korean",
    "Persian",
    "Scandinavian",
    "Slavic-Russian",
    "South-East Asia",
    "Turkish",
)

NON_WESTERN = ("Arabic", "Chinese", "India", "Persian", "Slavic-Russian", "South-East Asia", "Turkish")

# national teams used to label athletes
NATIONAL_TEAMS = {
    "Anglo-Saxon": ("Great Britain", "Ireland"),
    "Chinese": ("China",),
    "French": ("France",),
    "German": ("Germany",),
    "Hispanic-Iberian": ("Spain", "Portugal", "Mexico"),
    "India": ("India",),
    "Italian": ("Italy",),
    "Japanese": ("Japan",),
    "Korean": ("Korea",),
    "Arabic": ("Egypt", "Syria", "Saudi Arabia", "Jordan", "UAE", "Tunisia", "Algeria", "Morocco"),
    "Persian": ("Iran",),
    "Slavic-Russian": ("Russia", "Ukraine", "Belarus"),
    "East-Europe": ("Poland", "Czechoslovakia", "Hungary"),
    "Balkans": ("Serbia", "Croatia", "Yugoslavia"),
    "Scandinavian": ("Sweden", "Norway", "Finland", "Denmark", "Iceland"),
    "South-East Asia": ("Vietnam", "Thailand", "Malaysia", "Indonesia", "Laos", "Cambodia"),
    "Turkish": ("Turkey",),
}

# class counts of the reference 95,202-name training corpus
TRAINING_DISTRIBUTION = {
    "Anglo-Saxon": 7933,
    "Arabic": 3795,
    "Balkans": 2320,
    "Chinese": 6567,
    "East-Europe": 6820,
    "French": 7737,
    "German": 6311,
    "Hispanic-Iberian": 6383,
    "India": 4205,
    "Italian": 6171,
    "Japanese": 8835,
    "Korean": 5917,
    "Persian": 1614,
    "Scandinavian": 6938,
    "Slavic-Russian": 6357,
    "South-East Asia": 2895,
    "Turkish": 4404,
}

SOURCES = ("athletes", "pseudo_labeled", "synthetic")


@dataclass(frozen=True)
class OriginTaxonomy:
    """Ordered origin classes; the position of a name is its class index."""

    names: tuple[str, ...] = ORIGINS
    non_western: tuple[str, ...] = NON_WESTERN
    countries: dict = field(default_factory=lambda: dict(NATIONAL_TEAMS), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "non_western", tuple(self.non_western))
        if len(set(self.names)) != len(self.names):
            raise InvalidConfig("taxonomy class names must be unique")
        missing = set(self.non_western) - set(self.names)
        if missing:
            raise InvalidConfig(f"non-western origins not in taxonomy: {sorted(missing)}")

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def indices(self, names: Iterable[str]) -> list[int]:
        return [self.index(n) for n in names]

    @classmethod
    def from_names(cls, names: Sequence[str], non_western: Sequence[str] | None = None):
        if non_western is None:
            non_western = [n for n in NON_WESTERN if n in names]
        return cls(tuple(names), tuple(non_western), {})

    @classmethod
    def from_file(cls, path):
        """Read one class name per line; a trailing ``*`` marks a non-western class."""
        names, nw = [], []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.endswith("*"):
                line = line[:-1].strip()
                nw.append(line)
            names.append(line)
        return cls(tuple(names), tuple(nw), {})


DEFAULT_TAXONOMY = OriginTaxonomy()


@dataclass(frozen=True)
class LabeledName:
    name: str
    label: int
    source: str = "athletes"


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.10
    validation_fraction: float = 0.15
    seed: int = 42

    def __post_init__(self):
        for f in (self.test_fraction, self.validation_fraction):
            if not 0.0 <= f < 1.0:
                raise InvalidConfig("split fractions must lie in [0, 1)")
        if self.test_fraction + (1 - self.test_fraction) * self.validation_fraction >= 1.0:
            raise InvalidConfig("test and validation fractions leave no training data")


def load_labeled_csv(path, taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY) -> list[LabeledName]:
    """Read a ``name,label[,source]`` CSV. Duplicate rows are kept."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} is empty")
        header = [h.strip() for h in header]
        if header[:2] != ["name", "label"] or len(header) > 3 or (len(header) == 3 and header[2] != "source"):
            raise ParseError(f"expected header name,label[,source], got {','.join(header)}", line=1)
        has_source = len(header) == 3
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
            name, label = row[0], row[1].strip()
            try:
                idx = taxonomy.index(label)
            except KeyError:
                raise UnknownLabel(f"unknown label {label!r}", line=line) from None
            try:
                normalize(name)
            except EmptyAfterNormalization:
                raise ParseError(f"name {name!r} has no letters", line=line) from None
            source = row[2].strip() if has_source else "athletes"
            if source not in SOURCES:
                raise ParseError(f"unknown source {source!r}", line=line)
            records.append(LabeledName(name, idx, source))
    if not records:
        raise EmptyFile(f"{path} has no data rows")
    return records


def write_labeled_csv(path, records: Iterable[LabeledName], taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "label", "source"])
        for r in records:
            writer.writerow([r.name, taxonomy.names[r.label], r.source])


def split_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    """``(train, validation, test)`` sizes; both cuts round up."""
    # exact decimal arithmetic: 0.1 * 30 must give 3, not 3.0000000000000004
    n_test = math.ceil(Fraction(str(spec.test_fraction)) * n)
    n_val = math.ceil(Fraction(str(spec.validation_fraction)) * (n - n_test))
    return n - n_test - n_val, n_val, n_test


def split(data: Sequence, spec: SplitSpec = SplitSpec()):
    """Shuffle with ``spec.seed`` and cut into ``(train, validation, test)``."""
    n = len(data)
    if n < 3:
        raise TooFewSamples(f"need at least 3 samples to split, got {n}")
    n_train, n_val, n_test = split_sizes(n, spec)
    order = np.random.default_rng(spec.seed).permutation(n)
    test = [data[i] for i in order[:n_test]]
    val = [data[i] for i in order[n_test:n_test + n_val]]
    train = [data[i] for i in order[n_test + n_val:]]
    return train, val, test


def stratified_sample(data: Sequence[LabeledName], per_class_target: int, seed: int = 42):
    """Draw ``min(per_class_target, class size)`` records per class without replacement."""
    if per_class_target < 1:
        raise ValueError("per_class_target must be >= 1")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = {}
    for i, rec in enumerate(data):
        by_class.setdefault(rec.label, []).append(i)
    picked = []
    for label in sorted(by_class):
        idx = np.asarray(by_class[label])
        k = min(per_class_target, len(idx))
        picked.extend(sorted(rng.choice(idx, size=k, replace=False).tolist()))
    return [data[i] for i in picked]


@dataclass
class ClassDistribution:
    counts: dict[str, int]
    fractions: dict[str, float]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def class_distribution(data: Iterable, taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY) -> ClassDistribution:
    """Per-class counts and fractions; accepts records or bare class indices."""
    labels = [r.label if isinstance(r, LabeledName) else int(r) for r in data]
    counter = Counter(labels)
    total = sum(counter.values())
    if total == 0:
        return ClassDistribution({}, {})
    counts = {taxonomy.names[k]: counter[k] for k in sorted(counter)}
    fractions = {name: c / total for name, c in counts.items()}
    return ClassDistribution(counts, fractions)


def filter_rows(rows: Iterable[dict], rules: Iterable[dict]) -> list[dict]:
    """Drop rows matching any rule ``{"column": ..., "values": [...], "after_year": y}``.

    A rule matches when ``row[column]`` is in ``values`` and ``row["year"]``
    is greater than ``after_year`` (when given). Expresses ingestion
    policies such as excluding recent athletes of immigration countries.
    """
    rules = list(rules)
    kept = []
    for row in rows:
        drop = False
        for rule in rules:
            if row.get(rule["column"]) not in rule["values"]:
                continue
            after = rule.get("after_year")
            if after is None or int(row["year"]) > int(after):
                drop = True
                break
        if not drop:
            kept.append(row)
    return kept
