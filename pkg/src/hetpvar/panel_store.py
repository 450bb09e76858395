"""Unbalanced country-year panel: data model, CSV loading and validation.

The canonical on-disk layout is a long-format UTF-8 CSV::

    country,year,<var1>,<var2>,...

with an empty field marking a missing value. Missing values may only appear
as leading or trailing runs within each country and variable; an interior gap
is a validation error rather than something to interpolate over.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ParseError, UnknownCountryError, ValidationError

logger = logging.getLogger(__name__)

UNITS = ("percent", "percent-of-income", "fraction", "ratio", "index")


@dataclass(frozen=True)
class VariableSpec:
    name: str
    units: str = "percent"
    bounded: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.units not in UNITS:
            raise ValidationError(f"variable {self.name!r}: unknown units {self.units!r}")
        if self.bounded is not None:
            low, high = self.bounded
            if not low <= high:
                raise ValidationError(f"variable {self.name!r}: empty bound interval {self.bounded}")


# Units and bounds assumed for the recognised column names when no schema is given.
DEFAULT_SPECS = {
    "tax_rate": ("fraction", (0.0, 1.0)),
    "long_yield": ("percent", None),
    "short_rate": ("percent", None),
    "deflator_growth": ("percent", None),
    "gdp_growth": ("percent", None),
    "capital_share": ("percent-of-income", (0.0, 100.0)),
    "capital_output": ("ratio", None),
    "top1_share": ("percent-of-income", (0.0, 100.0)),
    "savings_rate": ("percent-of-income", (0.0, 100.0)),
    "spread": ("percent", None),
}


def default_spec(name: str) -> "VariableSpec":
    units, bounded = DEFAULT_SPECS.get(name, ("percent", None))
    return VariableSpec(name, units, bounded)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def observed_span(column: np.ndarray) -> tuple[int, int]:
    """Return ``(start, stop)`` row indices of the non-missing run of ``column``.

    An all-missing column gives ``(0, 0)``.
    """
    idx = np.flatnonzero(~np.isnan(column))
    if idx.size == 0:
        return 0, 0
    return int(idx[0]), int(idx[-1]) + 1


@dataclass(frozen=True, eq=False)
class CountrySeries:
    """One country's annual observations, ``values`` is ``T_i x M`` with NaN for missing."""

    country_id: str
    years: np.ndarray
    values: np.ndarray
    variable_names: tuple[str, ...]

    def __post_init__(self):
        years = np.asarray(self.years, dtype=np.int64).copy()
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        names = tuple(self.variable_names)
        if values.ndim != 2 or values.shape != (years.size, len(names)):
            raise ValidationError(
                f"{self.country_id}: values shape {values.shape} does not match "
                f"{years.size} years x {len(names)} variables"
            )
        if years.size and np.any(np.diff(years) != 1):
            gap = int(years[np.flatnonzero(np.diff(years) != 1)[0]])
            raise ValidationError(f"{self.country_id}: years not contiguous after {gap}")
        if np.any(np.isinf(values)):
            raise ValidationError(f"{self.country_id}: non-finite value")
        for m, name in enumerate(names):
            col = values[:, m]
            start, stop = observed_span(col)
            interior = np.flatnonzero(np.isnan(col[start:stop]))
            if interior.size:
                year = int(years[start + interior[0]])
                raise ValidationError(
                    f"interior gap: country {self.country_id}, variable {name}, year {year}"
                )
        object.__setattr__(self, "years", _readonly(years))
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "variable_names", names)

    def __eq__(self, other):
        if not isinstance(other, CountrySeries):
            return NotImplemented
        return (
            self.country_id == other.country_id
            and self.variable_names == other.variable_names
            and np.array_equal(self.years, other.years)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None

    @property
    def n_periods(self) -> int:
        return self.years.size

    def index(self, name: str) -> int:
        try:
            return self.variable_names.index(name)
        except ValueError:
            raise KeyError(f"{self.country_id}: no variable {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def span(self, name: str) -> tuple[int, int]:
        return observed_span(self.column(name))

    def common_span(self, names: Optional[Sequence[str]] = None) -> tuple[int, int]:
        """Rows on which every variable in ``names`` is observed (contiguous by construction)."""
        names = self.variable_names if names is None else names
        start, stop = 0, self.n_periods
        for name in names:
            a, b = self.span(name)
            start, stop = max(start, a), min(stop, b)
        return (start, stop) if stop > start else (0, 0)

    def select(self, names: Sequence[str]) -> "CountrySeries":
        cols = [self.index(n) for n in names]
        return CountrySeries(self.country_id, self.years, self.values[:, cols], tuple(names))

    def slice_rows(self, start: int, stop: int) -> "CountrySeries":
        return CountrySeries(
            self.country_id, self.years[start:stop], self.values[start:stop], self.variable_names
        )

    def with_values(self, values: np.ndarray) -> "CountrySeries":
        return CountrySeries(self.country_id, self.years, values, self.variable_names)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    countries: tuple[CountrySeries, ...]
    variable_names: tuple[str, ...]
    frequency: str = "annual"
    schema: tuple[VariableSpec, ...] = field(default=())

    def __post_init__(self):
        countries = tuple(self.countries)
        names = tuple(self.variable_names)
        object.__setattr__(self, "countries", countries)
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "schema", tuple(self.schema))
        if len(countries) < 2:
            raise ValidationError(f"panel needs at least 2 countries, got {len(countries)}")
        if not names:
            raise ValidationError("panel needs at least 1 variable")
        ids = [c.country_id for c in countries]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValidationError(f"duplicate country ids: {dupes}")
        for c in countries:
            if c.variable_names != names:
                raise ValidationError(
                    f"{c.country_id}: variables {c.variable_names} differ from panel {names}"
                )
        for spec in self.schema:
            if spec.bounded is None or spec.name not in names:
                continue
            low, high = spec.bounded
            for c in countries:
                col = c.column(spec.name)
                bad = np.flatnonzero((col < low) | (col > high))
                if bad.size:
                    raise ValidationError(
                        f"bound violation: country {c.country_id}, variable {spec.name}, "
                        f"year {int(c.years[bad[0]])}, value {col[bad[0]]!r} outside [{low}, {high}]"
                    )

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.variable_names == other.variable_names
            and self.frequency == other.frequency
            and len(self.countries) == len(other.countries)
            and all(a == b for a, b in zip(self.countries, other.countries))
        )

    __hash__ = None

    def __iter__(self):
        return iter(self.countries)

    def __len__(self):
        return len(self.countries)

    @property
    def country_ids(self) -> list[str]:
        return [c.country_id for c in self.countries]

    def country(self, country_id: str) -> CountrySeries:
        for c in self.countries:
            if c.country_id == country_id:
                return c
        raise UnknownCountryError(f"unknown country id {country_id!r}")

    def spec_for(self, name: str) -> Optional[VariableSpec]:
        for s in self.schema:
            if s.name == name:
                return s
        return None

    def select_variables(self, names: Sequence[str]) -> "PanelDataset":
        names = tuple(names)
        schema = tuple(s for s in self.schema if s.name in names)
        return PanelDataset(tuple(c.select(names) for c in self.countries), names, self.frequency, schema)

    def replace_countries(self, countries: Iterable[CountrySeries]) -> "PanelDataset":
        countries = tuple(countries)
        names = countries[0].variable_names if countries else self.variable_names
        schema = tuple(s for s in self.schema if s.name in names)
        return PanelDataset(countries, names, self.frequency, schema)


def select_sample(panel: PanelDataset, countries: Sequence[str]) -> PanelDataset:
    """Restrict ``panel`` to ``countries``, keeping the panel's own country order."""
    wanted = list(dict.fromkeys(countries))
    known = set(panel.country_ids)
    unknown = [c for c in wanted if c not in known]
    if unknown:
        raise UnknownCountryError(f"unknown country ids: {unknown}")
    keep = set(wanted)
    return panel.replace_countries(c for c in panel.countries if c.country_id in keep)


def _parse_float(text: str, line: int, column: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: cannot parse {text!r} as a number", line) from None
    if not math.isfinite(value):
        raise ParseError(f"column {column!r}: non-finite value {text!r}", line)
    return value


def load_panel(path, schema: Optional[Sequence[VariableSpec]] = None) -> PanelDataset:
    """Read and validate a long-format panel CSV.

    Parameters
    ----------
    path : str or Path
        CSV with header ``country,year,<var>...``.
    schema : sequence of VariableSpec, optional
        When given, the file's variable columns must be exactly these names;
        the panel's variable order follows the schema and bounds are enforced.
        Without a schema, variables are taken in header order and the units and
        bounds in ``DEFAULT_SPECS`` apply to recognised column names.

    Raises
    ------
    ParseError
        Malformed row, with the 1-based file line number.
    ValidationError
        Duplicate ``(country, year)``, interior gap, bound violation or a
        panel-level invariant failure.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0] != "country" or header[1] != "year":
            raise ParseError("header must start with 'country,year' followed by variables", 1)
        file_vars = header[2:]
        if len(set(file_vars)) != len(file_vars):
            raise ParseError("duplicate variable columns in header", 1)
        if schema is not None:
            schema = tuple(schema)
            expected = [s.name for s in schema]
            if sorted(expected) != sorted(file_vars):
                raise ValidationError(f"columns {file_vars} do not match schema {expected}")
            names = tuple(expected)
        else:
            names = tuple(file_vars)
            schema = tuple(default_spec(n) for n in names)
        order = [file_vars.index(n) for n in names]

        rows: dict[str, dict[int, list[float]]] = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            country = row[0].strip()
            if not country:
                raise ParseError("empty country id", line)
            try:
                year = int(row[1].strip())
            except ValueError:
                raise ParseError(f"cannot parse year {row[1]!r}", line) from None
            raw = [_parse_float(row[2 + j], line, file_vars[j]) for j in range(len(file_vars))]
            per_country = rows.setdefault(country, {})
            if year in per_country:
                raise ValidationError(f"duplicate observation: country {country}, year {year}")
            per_country[year] = [raw[j] for j in order]

    countries = []
    for country in sorted(rows):
        by_year = rows[country]
        years = np.array(sorted(by_year), dtype=np.int64)
        missing = sorted(set(range(int(years[0]), int(years[-1]) + 1)) - set(by_year))
        if missing:
            raise ValidationError(
                f"interior gap: country {country}, all variables, year {missing[0]}"
            )
        values = np.array([by_year[int(y)] for y in years], dtype=float).reshape(len(years), len(names))
        countries.append(CountrySeries(country, years, values, names))
    panel = PanelDataset(tuple(countries), names, "annual", schema)
    logger.debug("loaded %d countries x %d variables from %s", len(panel), len(names), path)
    return panel


def write_panel(panel: PanelDataset, path) -> None:
    """Write ``panel`` in the canonical CSV layout; floats use ``repr`` so loading round-trips exactly."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["country", "year", *panel.variable_names])
        for c in panel.countries:
            for year, row in zip(c.years, c.values):
                writer.writerow([c.country_id, int(year), *("" if np.isnan(v) else repr(float(v)) for v in row)])
