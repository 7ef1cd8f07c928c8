"""Loading and normalising experience-sampling symptom data."""

import csv
import enum
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

MISSING = {"", "NA"}

# canonical lower_snake_case identifiers of the 22 experience-sampling items
SYMPTOMS = (
    "felt_energetic", "felt_enthusiastic", "felt_content", "felt_irritable",
    "felt_restless", "felt_worried", "felt_worthless_or_guilty",
    "felt_frightened_or_afraid", "loss_of_interest_or_pleasure", "felt_angry",
    "procrastinated", "felt_hopeless", "felt_down_or_depressed",
    "felt_positive_overall", "felt_fatigued_or_low_energy",
    "experienced_muscle_tension", "had_difficulty_concentrating",
    "felt_accepted_or_supported", "felt_threatened_judged_or_intimidated",
    "dwelled_on_the_past", "avoided_activities", "avoided_people",
)


class DataError(ValueError):
    """Malformed or unusable input data."""


class Diagnosis(str, enum.Enum):
    GAD = "GAD"
    MDD = "MDD"
    COMORBID = "COMORBID"

    @classmethod
    def parse(cls, label):
        key = str(label).strip().upper()
        try:
            return cls(key)
        except ValueError:
            raise DataError(f"unknown diagnosis label {label!r}") from None


def snake_case(name):
    return re.sub(r"[^0-9a-z]+", "_", str(name).strip().lower()).strip("_")


class TimeSeries:
    """T x N matrix of finite values with unique variable names."""

    def __init__(self, values, var_names, time_index=None):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValueError("values must be a T x N matrix")
        var_names = [str(v) for v in var_names]
        if values.shape[1] != len(var_names) or not var_names:
            raise ValueError("need one name per column and at least one column")
        if len(set(var_names)) != len(var_names):
            raise ValueError("variable names must be unique")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        if time_index is None:
            time_index = np.arange(values.shape[0])
        time_index = np.asarray(time_index, dtype=int)
        if len(time_index) != values.shape[0] or np.any(np.diff(time_index) <= 0):
            raise ValueError("time_index must be strictly increasing with one entry per row")
        values.setflags(write=False)
        time_index.setflags(write=False)
        self.values = values
        self.var_names = var_names
        self.time_index = time_index

    @property
    def T(self):
        return self.values.shape[0]

    @property
    def N(self):
        return self.values.shape[1]

    def column(self, name):
        return self.values[:, self.var_names.index(name)]

    def __eq__(self, other):
        return (isinstance(other, TimeSeries) and self.var_names == other.var_names
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.time_index, other.time_index))

    def __repr__(self):
        return f"TimeSeries(T={self.T}, N={self.N})"

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.var_names)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise DataError("no header")
        header = rows[0]
        try:
            values = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise DataError(f"non-numeric value in {path}: {exc}") from None
        return cls(values.reshape(-1, len(header)), header)


@dataclass(frozen=True)
class Individual:
    id: str
    diagnosis: Diagnosis
    series: TimeSeries


@dataclass(frozen=True)
class Dataset:
    individuals: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "individuals", tuple(self.individuals))
        ids = [ind.id for ind in self.individuals]
        if len(set(ids)) != len(ids):
            raise DataError("individual ids must be unique")

    @property
    def var_names(self):
        return self.individuals[0].series.var_names if self.individuals else []

    @property
    def n_rows(self):
        return sum(ind.series.T for ind in self.individuals)

    def by_diagnosis(self, diagnosis):
        diagnosis = Diagnosis.parse(diagnosis)
        return [ind for ind in self.individuals if ind.diagnosis is diagnosis]

    def __len__(self):
        return len(self.individuals)

    def __iter__(self):
        return iter(self.individuals)


def load_dataset(path, schema=None):
    """Read a long-format CSV with one row per survey response.

    ``schema`` maps roles to source headers: ``{"id": ..., "diagnosis": ...,
    "symptoms": [...] or {source: canonical}}``. Unspecified symptoms default
    to every other column. Rows with a missing symptom value (empty or
    ``NA``) are dropped; the remaining rows keep file order per individual.
    """
    schema = dict(schema or {})
    id_col = schema.get("id", "id")
    dx_col = schema.get("diagnosis", "diagnosis")
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or not any(h.strip() for h in header):
            raise DataError("no header")
        header = [h.strip() for h in header]
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise DataError(f"duplicate header names: {dupes}")
    for col in (id_col, dx_col):
        if col not in header:
            raise DataError(f"missing header column {col!r}")
    symptoms = schema.get("symptoms")
    if symptoms is None:
        symptoms = {h: h for h in header if h not in (id_col, dx_col)}
    elif not isinstance(symptoms, dict):
        symptoms = {h: h for h in symptoms}
    missing = [h for h in symptoms if h not in header]
    if missing:
        raise DataError(f"missing symptom columns: {missing}")
    if not symptoms:
        raise DataError("no symptom columns")
    sources = list(symptoms)
    names = [symptoms[h] for h in sources]
    cols = [header.index(h) for h in sources]
    i_id, i_dx = header.index(id_col), header.index(dx_col)

    grouped = {}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        pid = row[i_id].strip()
        dx = Diagnosis.parse(row[i_dx])
        entry = grouped.setdefault(pid, {"dx": dx, "rows": []})
        if entry["dx"] is not dx:
            raise DataError(f"individual {pid!r} has more than one diagnosis")
        cells = [row[c].strip() for c in cols]
        if any(c in MISSING for c in cells):
            continue
        try:
            entry["rows"].append([float(c) for c in cells])
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric symptom value") from None

    individuals = []
    for pid, entry in grouped.items():
        values = np.array(entry["rows"], dtype=float).reshape(-1, len(names))
        individuals.append(Individual(pid, entry["dx"], TimeSeries(values, names)))
    return Dataset(tuple(individuals))


def zscore_normalize(ts):
    """Column-wise z-score with the n-1 standard deviation.

    Constant columns are rejected, naming the column, rather than producing
    NaNs; drop them explicitly if that is acceptable.
    """
    values = ts.values
    if values.shape[0] < 2:
        raise DataError("need at least two rows to normalise")
    mean = values.mean(axis=0)
    centered = values - mean
    sd = np.sqrt(np.sum(centered ** 2, axis=0) / (values.shape[0] - 1))
    flat = [name for name, s in zip(ts.var_names, sd) if not s > 0]
    if flat:
        raise DataError(f"constant column: {', '.join(flat)}")
    out = centered / sd
    # remove round-off so repeated normalisation is a fixed point
    out -= out.mean(axis=0)
    return TimeSeries(out, ts.var_names, ts.time_index)


def normalize_dataset(dataset, scope="individual"):
    """Apply z-scoring per individual or pooled across all individuals."""
    if scope == "individual":
        inds = [Individual(ind.id, ind.diagnosis, zscore_normalize(ind.series)) for ind in dataset]
        return Dataset(tuple(inds))
    if scope != "pooled":
        raise ValueError("scope must be 'individual' or 'pooled'")
    stacked = TimeSeries(np.vstack([ind.series.values for ind in dataset]), dataset.var_names)
    pooled = zscore_normalize(stacked).values
    inds, start = [], 0
    for ind in dataset:
        stop = start + ind.series.T
        inds.append(Individual(ind.id, ind.diagnosis,
                               TimeSeries(pooled[start:stop], ind.series.var_names, ind.series.time_index)))
        start = stop
    return Dataset(tuple(inds))


class ZScoreScaler(TransformerMixin, BaseEstimator):
    """Column-wise z-scoring (ddof=1) with the same constant-column check."""

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0, ddof=1)
        flat = np.flatnonzero(~(self.scale_ > 0))
        if flat.size:
            raise DataError(f"constant column: {', '.join(map(str, flat))}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return (X - self.mean_) / self.scale_
