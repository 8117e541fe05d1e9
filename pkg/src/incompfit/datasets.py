"""Canonical datasets and the deletion / imputation transforms.

Two datasets ship with the package:

* ``growth-complete``: orthodontic growth distances (mm) for 11 girls and
  16 boys at ages 8, 10, 12 and 14 (Potthoff and Roy, 1964).
* ``growth-trimmed``: the same data with nine age-10 values removed, the
  Little and Rubin (2002) deletion set (see :data:`DELETION_SET`).
* ``spo``: the incomplete independence-by-attendance table from the
  Slovenian Public Opinion Survey.

Subjects are numbered 1-27, girls 1-11 then boys 12-27, in source order.

Index convention for the survey table: ``j`` is the independence answer,
``k`` the attendance answer, and position 0 means "yes".
"""
from __future__ import annotations

import csv
import dataclasses
import io
import itertools
from importlib import resources
from pathlib import Path

import numpy as np

AGES = (8, 10, 12, 14)
SEXES = ("girl", "boy")
N_GIRLS, N_BOYS = 11, 16

# Subjects whose age-10 value is absent in the trimmed data.  Girls are the
# four lowest age-8 values (unique); the five boys are the only 5-subset
# satisfying the published trimmed-data checksums (see recover_deletion_set).
DELETION_SET = frozenset({3, 6, 9, 10, 13, 16, 23, 24, 27})

# Boys' summary statistics the trimmed data must reproduce (to +/- 0.005).
CHECKSUMS = {
    "boys_age8_mean": 22.88,
    "boys_age10_observed_mean": 24.14,
    "cc_boys_age8_mean": 24.00,
    "locf_boys_age10_mean": 22.97,
    "complete_boys_age10_mean": 23.81,
}
CHECKSUM_TOL = 0.005


class DataError(ValueError):
    """Raised for malformed input files or failed data checksums."""


@dataclasses.dataclass(frozen=True)
class GrowthSubject:
    id: int
    sex: str
    y: tuple  # four floats or None

    def __post_init__(self):
        if self.sex not in SEXES:
            raise DataError(f"subject {self.id}: unknown sex {self.sex!r}")
        if len(self.y) != len(AGES):
            raise DataError(f"subject {self.id}: expected {len(AGES)} measurements")
        for v in self.y:
            if v is not None and not v > 0:
                raise DataError(f"subject {self.id}: measurements must be positive")
        if all(v is None for v in self.y):
            raise DataError(f"subject {self.id}: no observed measurements")

    @property
    def complete(self):
        return all(v is not None for v in self.y)


@dataclasses.dataclass(frozen=True)
class GrowthDataset:
    subjects: tuple
    variant: str = "complete"
    ages: tuple = AGES

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))

    def __len__(self):
        return len(self.subjects)

    @property
    def ids(self):
        return np.array([s.id for s in self.subjects])

    @property
    def sex(self):
        return np.array([s.sex for s in self.subjects])

    @property
    def Y(self):
        """``(n, 4)`` array with NaN at absent cells."""
        return np.array([[np.nan if v is None else v for v in s.y] for s in self.subjects], dtype=float)

    @property
    def mask(self):
        return ~np.isnan(self.Y)

    @property
    def incomplete_ids(self):
        return frozenset(s.id for s in self.subjects if not s.complete)

    def subset(self, sex=None, ids=None, exclude=None):
        """Subjects filtered by sex and/or id; order is preserved."""
        subs = self.subjects
        if sex is not None:
            subs = [s for s in subs if s.sex == sex]
        if ids is not None:
            ids = set(ids)
            subs = [s for s in subs if s.id in ids]
        if exclude:
            exclude = set(exclude)
            subs = [s for s in subs if s.id not in exclude]
        return dataclasses.replace(self, subjects=tuple(subs))

    def cell_means(self):
        """Available-case means per (sex, age), as ``{sex: array(4)}``."""
        Y, sex = self.Y, self.sex
        return {g: np.nanmean(Y[sex == g], axis=0) for g in SEXES if np.any(sex == g)}


@dataclasses.dataclass(frozen=True)
class IncompleteTable:
    """Observable margins of an incomplete 2x2 table.

    ``z11[j, k]`` both answered, ``z10[j]`` second answer missing,
    ``z01[k]`` first answer missing, ``z00`` both missing.
    """

    z11: np.ndarray
    z10: np.ndarray
    z01: np.ndarray
    z00: float

    def __post_init__(self):
        z11 = np.asarray(self.z11, dtype=float).reshape(2, 2)
        z10 = np.asarray(self.z10, dtype=float).reshape(2)
        z01 = np.asarray(self.z01, dtype=float).reshape(2)
        z00 = float(self.z00)
        if (z11 < 0).any() or (z10 < 0).any() or (z01 < 0).any() or z00 < 0:
            raise DataError("counts must be nonnegative")
        object.__setattr__(self, "z11", z11)
        object.__setattr__(self, "z10", z10)
        object.__setattr__(self, "z01", z01)
        object.__setattr__(self, "z00", z00)

    @property
    def n(self):
        return float(self.observed_vector().sum())

    def observed_vector(self):
        """The nine counts in the order z11 (row-major), z10, z01, z00."""
        return np.r_[self.z11.ravel(), self.z10, self.z01, self.z00]

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:4].reshape(2, 2), v[4:6], v[6:8], v[8])


# -- growth data -------------------------------------------------------------

def _parse_value(tok, row_no):
    tok = tok.strip()
    if tok == "NA":
        return None
    try:
        return float(tok)
    except ValueError:
        raise DataError(f"row {row_no}: cannot parse measurement {tok!r}") from None


def read_growth_csv(text):
    """Parse growth CSV text (``id,sex,y8,y10,y12,y14``, ``NA`` = absent)."""
    reader = csv.DictReader(io.StringIO(text))
    expected = ["id", "sex", "y8", "y10", "y12", "y14"]
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
        raise DataError(f"expected header {','.join(expected)}")
    subjects = []
    for row_no, row in enumerate(reader, start=2):
        if None in row or any(v is None for v in row.values()):
            raise DataError(f"row {row_no}: wrong number of fields")
        try:
            sid = int(row["id"])
        except ValueError:
            raise DataError(f"row {row_no}: bad id {row['id']!r}") from None
        y = tuple(_parse_value(row[c], row_no) for c in expected[2:])
        subjects.append(GrowthSubject(sid, row["sex"].strip(), y))
    return subjects


def _validate_canonical(subjects):
    if len(subjects) != N_GIRLS + N_BOYS:
        raise DataError(f"wrong subject count: {len(subjects)} (expected {N_GIRLS + N_BOYS})")
    sexes = [s.sex for s in subjects]
    if sexes != ["girl"] * N_GIRLS + ["boy"] * N_BOYS:
        raise DataError("expected 11 girls followed by 16 boys")
    if [s.id for s in subjects] != list(range(1, 28)):
        raise DataError("subject ids must run 1..27 in order")


def load_growth(source=None):
    """Load the complete growth data from the embedded file or ``source``.

    Any file is held to the same subject count and checksums as the
    embedded copy, so a transcription error fails loudly.
    """
    if source is None:
        text = resources.files("incompfit").joinpath("data/growth.csv").read_text()
    else:
        text = Path(source).read_text()
    subjects = read_growth_csv(text)
    _validate_canonical(subjects)
    ds = GrowthDataset(tuple(subjects), "complete")
    if ds.incomplete_ids:
        raise DataError("the complete growth data may not contain NA cells")
    means = ds.cell_means()["boy"]
    _check("boys_age8_mean", means[0])
    _check("complete_boys_age10_mean", means[1])
    return ds


def _check(name, value):
    if abs(value - CHECKSUMS[name]) > CHECKSUM_TOL:
        raise DataError(f"checksum {name} failed: {value:.4f} vs {CHECKSUMS[name]}")


def trim_growth(ds, deletion_set=DELETION_SET):
    """Remove the age-10 value of every subject in ``deletion_set``."""
    if ds.variant != "complete" or ds.incomplete_ids:
        raise DataError("trim_growth expects the complete dataset")
    subs = tuple(
        dataclasses.replace(s, y=(s.y[0], None) + tuple(s.y[2:])) if s.id in deletion_set else s
        for s in ds.subjects
    )
    out = GrowthDataset(subs, "trimmed")
    verify_trimmed(out)
    return out


def verify_trimmed(ds):
    """Check the trimmed-data checksums; raises :class:`DataError`."""
    Y, sex = ds.Y, ds.sex
    boys = Y[sex == "boy"]
    observed10 = ~np.isnan(boys[:, 1])
    _check("boys_age8_mean", boys[:, 0].mean())
    _check("boys_age10_observed_mean", boys[observed10, 1].mean())
    _check("cc_boys_age8_mean", boys[observed10, 0].mean())
    _check("locf_boys_age10_mean", np.where(observed10, boys[:, 1], boys[:, 0]).mean())
    girls_obs = int((~np.isnan(Y[sex == "girl", 1])).sum())
    if (girls_obs, int(observed10.sum())) != (7, 11):
        raise DataError("expected 7 girls and 11 boys observed at age 10")


def recover_deletion_set(ds):
    """Exhaustive search for deletion sets consistent with the checksums.

    Boys: every 5-subset of the 16 boys is tested against the four
    boys' statistics.  Girls carry no published checksum, so the girls'
    set is the four lowest age-8 values, which must be unique.  Returns
    the list of all consistent sets (expected: exactly one).
    """
    Y, sex, ids = ds.Y, ds.sex, ds.ids
    boys_y, boys_id = Y[sex == "boy"], ids[sex == "boy"]
    girls_y, girls_id = Y[sex == "girl"], ids[sex == "girl"]
    order = np.argsort(girls_y[:, 0], kind="stable")
    if girls_y[order[3], 0] == girls_y[order[4], 0]:
        raise DataError("girls' deletion set is not unique under the age-8 rule")
    girls = {int(i) for i in girls_id[order[:4]]}
    found = []
    for S in itertools.combinations(range(len(boys_id)), 5):
        keep = np.ones(len(boys_id), bool)
        keep[list(S)] = False
        stats = {
            "cc_boys_age8_mean": boys_y[keep, 0].mean(),
            "boys_age10_observed_mean": boys_y[keep, 1].mean(),
            "locf_boys_age10_mean": np.where(keep, boys_y[:, 1], boys_y[:, 0]).mean(),
        }
        if all(abs(v - CHECKSUMS[k]) <= CHECKSUM_TOL for k, v in stats.items()):
            found.append(frozenset(girls | {int(boys_id[s]) for s in S}))
    return found


def apply_cc(ds):
    """Keep only fully observed subjects."""
    return GrowthDataset(tuple(s for s in ds.subjects if s.complete), "cc", ds.ages)


def apply_locf(ds):
    """Carry the last observed value forward into every absent cell."""
    subs = []
    for s in ds.subjects:
        if s.y[0] is None:
            raise DataError(f"subject {s.id}: first measurement absent, nothing to carry forward")
        y, last = [], None
        for v in s.y:
            last = v if v is not None else last
            y.append(last)
        subs.append(dataclasses.replace(s, y=tuple(y)))
    return GrowthDataset(tuple(subs), "locf", ds.ages)


def growth_to_csv(ds):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "sex", "y8", "y10", "y12", "y14"])
    for s in ds.subjects:
        w.writerow([s.id, s.sex] + ["NA" if v is None else f"{v:g}" for v in s.y])
    return buf.getvalue()


# -- survey table ------------------------------------------------------------

_SPO_HEADER = ["pattern", "j", "k", "count"]


def load_spo(source=None):
    """Load an incomplete 2x2 table from the embedded SPO file or ``source``.

    The file lists one row per observable cell:
    ``pattern,j,k,count`` with pattern in {11, 10, 01, 00}, and the
    unobserved index left empty.
    """
    if source is None:
        text = resources.files("incompfit").joinpath("data/spo.csv").read_text()
    else:
        text = Path(source).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != _SPO_HEADER:
        raise DataError(f"expected header {','.join(_SPO_HEADER)}")
    z11, z10, z01, z00 = np.zeros((2, 2)), np.zeros(2), np.zeros(2), 0.0
    seen = set()
    lvl = {"yes": 0, "no": 1}
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise DataError(f"row {row_no}: expected 4 fields")
        pat, j, k, cnt = (t.strip() for t in row)
        try:
            cnt = float(cnt)
        except ValueError:
            raise DataError(f"row {row_no}: bad count {cnt!r}") from None
        if cnt < 0:
            raise DataError(f"row {row_no}: negative count")
        key = (pat, j, k)
        if key in seen:
            raise DataError(f"row {row_no}: duplicate cell")
        seen.add(key)
        try:
            if pat == "11":
                z11[lvl[j], lvl[k]] = cnt
            elif pat == "10" and k == "":
                z10[lvl[j]] = cnt
            elif pat == "01" and j == "":
                z01[lvl[k]] = cnt
            elif pat == "00" and j == "" and k == "":
                z00 = cnt
            else:
                raise KeyError(pat)
        except KeyError:
            raise DataError(f"row {row_no}: invalid cell {pat},{j},{k}") from None
    if len(seen) != 9:
        raise DataError(f"expected 9 observable cells, found {len(seen)}")
    return IncompleteTable(z11, z10, z01, z00)


def table_to_csv(t):
    lv = ("yes", "no")
    rows = [_SPO_HEADER]
    rows += [["11", lv[j], lv[k], f"{t.z11[j, k]:g}"] for j in range(2) for k in range(2)]
    rows += [["10", lv[j], "", f"{t.z10[j]:g}"] for j in range(2)]
    rows += [["01", "", lv[k], f"{t.z01[k]:g}"] for k in range(2)]
    rows += [["00", "", "", f"{t.z00:g}"]]
    return "".join(",".join(r) + "\n" for r in rows)


EMBEDDED = ("growth-complete", "growth-trimmed", "spo")


def load_embedded(name):
    """Return an embedded dataset by name."""
    if name == "growth-complete":
        return load_growth()
    if name == "growth-trimmed":
        return trim_growth(load_growth())
    if name == "spo":
        return load_spo()
    raise KeyError(f"unknown embedded dataset {name!r}; choose from {EMBEDDED}")
