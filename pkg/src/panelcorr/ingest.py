"""Price-index panel ingestion: CSV parsing, log returns, rolling windows.

Panels are labeled matrices of strictly positive index levels, one row per
entity (e.g. a US state) and one column per calendar quarter.  All downstream
analysis operates on the derived log-return panel and on moving windows over
its quarter axis.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Quarter",
    "PricePanel",
    "ReturnPanel",
    "WindowSpec",
    "CsvSchema",
    "ParseError",
    "load_schema",
    "parse_price_csv",
    "write_price_csv",
    "write_return_csv",
    "log_returns",
    "national_return_series",
    "windows",
]


class ParseError(ValueError):
    """Raised for malformed price CSV input; messages carry the row number."""


_QUARTER_RE = re.compile(r"^\s*(\d{4})\s*[-/ ]?\s*[Qq]\s*([1-4])\s*$")


@dataclass(frozen=True, order=True)
class Quarter:
    """A calendar quarter, ordered by (year, quarter). No date arithmetic."""

    year: int
    quarter: int

    def __post_init__(self):
        if not 1 <= self.quarter <= 4:
            raise ValueError(f"quarter must be in 1..4, got {self.quarter}")

    @classmethod
    def parse(cls, text: str) -> "Quarter":
        m = _QUARTER_RE.match(str(text))
        if m is None:
            raise ValueError(f"cannot parse quarter label {text!r} (expected e.g. '1994Q3')")
        return cls(int(m.group(1)), int(m.group(2)))

    @property
    def ordinal(self) -> int:
        return self.year * 4 + (self.quarter - 1)

    def shift(self, n: int) -> "Quarter":
        o = self.ordinal + n
        return Quarter(o // 4, o % 4 + 1)

    def __sub__(self, other: "Quarter") -> int:
        return self.ordinal - other.ordinal

    def __str__(self) -> str:
        return f"{self.year}Q{self.quarter}"

    @staticmethod
    def span(start: "Quarter", count: int) -> list["Quarter"]:
        return [start.shift(i) for i in range(count)]


def _check_quarter_axis(quarters: Sequence[Quarter]) -> None:
    for prev, cur in zip(quarters, quarters[1:]):
        if cur.ordinal != prev.ordinal + 1:
            raise ValueError(
                f"quarter axis must be strictly increasing and gap-free; "
                f"found {prev} followed by {cur}"
            )


@dataclass
class PricePanel:
    """Levels of a price index per entity per quarter."""

    entities: list[str]
    quarters: list[Quarter]
    levels: np.ndarray  # shape (n_entities, n_quarters)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        if len(set(self.entities)) != len(self.entities):
            raise ValueError("duplicate entity identifiers")
        if self.levels.shape != (len(self.entities), len(self.quarters)):
            raise ValueError(
                f"levels shape {self.levels.shape} does not match "
                f"{len(self.entities)} entities x {len(self.quarters)} quarters"
            )
        if not np.all(np.isfinite(self.levels)):
            raise ValueError("levels must be finite")
        if np.any(self.levels <= 0):
            i, t = np.argwhere(self.levels <= 0)[0]
            raise ValueError(
                f"levels must be strictly positive; entity {self.entities[i]!r} "
                f"at {self.quarters[t]} is {self.levels[i, t]}"
            )
        _check_quarter_axis(self.quarters)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_quarters(self) -> int:
        return len(self.quarters)


@dataclass
class ReturnPanel:
    """Log returns per entity per quarter; one column fewer than the levels."""

    entities: list[str]
    quarters: list[Quarter]
    returns: np.ndarray  # shape (n_entities, n_quarters)

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=float)
        if len(set(self.entities)) != len(self.entities):
            raise ValueError("duplicate entity identifiers")
        if self.returns.shape != (len(self.entities), len(self.quarters)):
            raise ValueError(
                f"returns shape {self.returns.shape} does not match "
                f"{len(self.entities)} entities x {len(self.quarters)} quarters"
            )
        if not np.all(np.isfinite(self.returns)):
            raise ValueError("returns must be finite")
        _check_quarter_axis(self.quarters)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_quarters(self) -> int:
        return len(self.quarters)

    def quarter_index(self, quarter: Quarter) -> int:
        offset = quarter - self.quarters[0]
        if offset < 0 or offset >= self.n_quarters:
            raise ValueError(f"quarter {quarter} outside panel range "
                             f"[{self.quarters[0]}, {self.quarters[-1]}]")
        return offset

    def window_slice(self, window: "WindowSpec") -> np.ndarray:
        """Return the (n_entities, size_s) block of returns ending at the window's end quarter."""
        end = self.quarter_index(window.end_quarter)
        start = end - window.size_s + 1
        if start < 0:
            raise ValueError(
                f"window of size {window.size_s} ending at {window.end_quarter} "
                f"is not contained in the panel"
            )
        return self.returns[:, start : end + 1]

    def window_quarters(self, window: "WindowSpec") -> list[Quarter]:
        end = self.quarter_index(window.end_quarter)
        return self.quarters[end - window.size_s + 1 : end + 1]

    def restrict(self, entities: Sequence[str]) -> "ReturnPanel":
        """Sub-panel keeping only the given entities, in the given order."""
        pos = {e: i for i, e in enumerate(self.entities)}
        missing = [e for e in entities if e not in pos]
        if missing:
            raise ValueError(f"unknown entities: {missing}")
        idx = [pos[e] for e in entities]
        return ReturnPanel(list(entities), list(self.quarters), self.returns[idx])


@dataclass(frozen=True)
class WindowSpec:
    """A moving window of size_s return quarters ending at end_quarter (inclusive)."""

    end_quarter: Quarter
    size_s: int

    def __str__(self) -> str:
        return f"{self.end_quarter}(s={self.size_s})"


@dataclass
class CsvSchema:
    """Column mapping for price CSV files.

    ``layout`` is ``"long"`` (one row per entity/quarter/value) or ``"wide"``
    (one row per quarter, one column per entity).
    """

    layout: str = "long"
    entity: str = "entity"
    quarter: str = "quarter"
    value: str = "value"
    delimiter: str = ","

    def __post_init__(self):
        if self.layout not in ("long", "wide"):
            raise ValueError(f"layout must be 'long' or 'wide', got {self.layout!r}")


_SCHEMA_KEYS = {"layout", "entity", "quarter", "value", "delimiter"}


def load_schema(source: str | Path) -> CsvSchema:
    """Read a flat key=value schema file (``#`` starts a comment line)."""
    if isinstance(source, str) and ("\n" in source or "=" in source):
        text = source
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"no such schema file: {source}")
        text = path.read_text(encoding="utf-8")
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"schema line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _SCHEMA_KEYS:
            raise ValueError(f"schema line {lineno}: unknown key {key!r} "
                             f"(valid: {sorted(_SCHEMA_KEYS)})")
        fields[key] = val.strip()
    return CsvSchema(**fields)


def _rows_from_source(source, delimiter: str) -> list[list[str]]:
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif hasattr(source, "read"):
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    elif isinstance(source, str) and "\n" in source:
        text = source
    elif isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"no such CSV file: {source}")
        text = path.read_text(encoding="utf-8")
    else:
        raise TypeError(f"unsupported CSV source type {type(source)!r}")
    return list(csv.reader(io.StringIO(text), delimiter=delimiter))


def _parse_value(text: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row}: cannot parse value {text!r} as a number") from None
    if not np.isfinite(value):
        raise ParseError(f"row {row}: value {text!r} is not finite")
    if value <= 0:
        raise ParseError(f"row {row}: index level must be positive, got {value}")
    return value


def _parse_quarter(text: str, row: int) -> Quarter:
    try:
        return Quarter.parse(text)
    except ValueError as exc:
        raise ParseError(f"row {row}: {exc}") from None


def parse_price_csv(source, schema: CsvSchema | None = None) -> PricePanel:
    """Parse a price-index CSV (long or wide layout) into a validated PricePanel.

    ``source`` may be a path, raw text, bytes, or a file-like object.  Any
    malformed row raises :class:`ParseError` naming the offending row; missing
    cells, non-positive values, duplicate (entity, quarter) keys and gappy
    quarter axes are all rejected.
    """
    schema = schema or CsvSchema()
    rows = _rows_from_source(source, schema.delimiter)
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError("row 1: empty input")
    header = [h.strip() for h in rows[0]]

    if schema.layout == "long":
        return _parse_long(rows, header, schema)
    return _parse_wide(rows, header, schema)


def _parse_long(rows, header, schema: CsvSchema) -> PricePanel:
    try:
        e_col = header.index(schema.entity)
        q_col = header.index(schema.quarter)
        v_col = header.index(schema.value)
    except ValueError:
        raise ParseError(
            f"row 1: header {header!r} is missing one of the configured columns "
            f"({schema.entity!r}, {schema.quarter!r}, {schema.value!r})"
        ) from None

    cells: dict[tuple[str, Quarter], float] = {}
    entities: list[str] = []
    seen = set()
    for rowno, row in enumerate(rows[1:], start=2):
        if len(row) <= max(e_col, q_col, v_col):
            raise ParseError(f"row {rowno}: expected at least {max(e_col, q_col, v_col) + 1} "
                             f"columns, got {len(row)}")
        entity = row[e_col].strip()
        if not entity:
            raise ParseError(f"row {rowno}: empty entity identifier")
        quarter = _parse_quarter(row[q_col].strip(), rowno)
        value = _parse_value(row[v_col].strip(), rowno)
        key = (entity, quarter)
        if key in cells:
            raise ParseError(f"row {rowno}: duplicate entry for entity {entity!r} at {quarter}")
        cells[key] = value
        if entity not in seen:
            seen.add(entity)
            entities.append(entity)

    quarters = sorted({q for _, q in cells})
    _check_quarters_parsed(quarters)
    levels = np.empty((len(entities), len(quarters)))
    for i, entity in enumerate(entities):
        for t, quarter in enumerate(quarters):
            try:
                levels[i, t] = cells[(entity, quarter)]
            except KeyError:
                raise ParseError(
                    f"missing cell: entity {entity!r} has no value for {quarter}"
                ) from None
    return PricePanel(entities, quarters, levels)


def _parse_wide(rows, header, schema: CsvSchema) -> PricePanel:
    try:
        q_col = header.index(schema.quarter)
    except ValueError:
        raise ParseError(
            f"row 1: header {header!r} is missing the quarter column {schema.quarter!r}"
        ) from None
    entities = [h for i, h in enumerate(header) if i != q_col]
    if not entities:
        raise ParseError("row 1: wide layout needs at least one entity column")

    by_quarter: dict[Quarter, list[float]] = {}
    for rowno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"row {rowno}: expected {len(header)} columns, got {len(row)}")
        quarter = _parse_quarter(row[q_col].strip(), rowno)
        if quarter in by_quarter:
            raise ParseError(f"row {rowno}: duplicate entry for quarter {quarter}")
        values = []
        for i, cell in enumerate(row):
            if i == q_col:
                continue
            if not cell.strip():
                raise ParseError(f"row {rowno}: missing cell in column {header[i]!r}")
            values.append(_parse_value(cell.strip(), rowno))
        by_quarter[quarter] = values

    quarters = sorted(by_quarter)
    _check_quarters_parsed(quarters)
    levels = np.array([by_quarter[q] for q in quarters]).T
    return PricePanel(entities, quarters, levels)


def _check_quarters_parsed(quarters: list[Quarter]) -> None:
    if not quarters:
        raise ParseError("no data rows found")
    for prev, cur in zip(quarters, quarters[1:]):
        if cur.ordinal != prev.ordinal + 1:
            raise ParseError(
                f"ragged quarters: axis jumps from {prev} to {cur} "
                f"(every entity must cover a gap-free quarter range)"
            )


def write_price_csv(panel: PricePanel, dest, schema: CsvSchema | None = None) -> None:
    """Write a PricePanel as CSV in the schema's layout (default long)."""
    schema = schema or CsvSchema()
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=schema.delimiter, lineterminator="\n")
    if schema.layout == "long":
        writer.writerow([schema.entity, schema.quarter, schema.value])
        for i, entity in enumerate(panel.entities):
            for t, quarter in enumerate(panel.quarters):
                writer.writerow([entity, str(quarter), repr(float(panel.levels[i, t]))])
    else:
        writer.writerow([schema.quarter] + list(panel.entities))
        for t, quarter in enumerate(panel.quarters):
            writer.writerow([str(quarter)] + [repr(float(v)) for v in panel.levels[:, t]])
    text = buf.getvalue()
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)


def write_return_csv(panel: ReturnPanel, dest, schema: CsvSchema | None = None) -> None:
    """Write a ReturnPanel as long-format CSV (returns may be negative)."""
    schema = schema or CsvSchema()
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=schema.delimiter, lineterminator="\n")
    writer.writerow([schema.entity, schema.quarter, schema.value])
    for i, entity in enumerate(panel.entities):
        for t, quarter in enumerate(panel.quarters):
            writer.writerow([entity, str(quarter), repr(float(panel.returns[i, t]))])
    text = buf.getvalue()
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text, encoding="utf-8")
    else:
        dest.write(text)


def log_returns(panel: PricePanel) -> ReturnPanel:
    """Difference of log levels along the quarter axis."""
    returns = np.diff(np.log(panel.levels), axis=1)
    return ReturnPanel(list(panel.entities), list(panel.quarters[1:]), returns)


def national_return_series(
    panel: ReturnPanel,
    override: np.ndarray | Mapping[Quarter, float] | None = None,
) -> np.ndarray:
    """Aggregate market return per quarter.

    With no override this is the equal-weight cross-entity mean of the panel
    returns.  An override (a full-length array, or a mapping from quarter to
    return covering every panel quarter) is passed through unchanged.
    """
    if override is None:
        return panel.returns.mean(axis=0)
    if isinstance(override, Mapping):
        missing = [q for q in panel.quarters if q not in override]
        if missing:
            raise ValueError(f"override does not cover panel quarters, e.g. {missing[0]}")
        return np.array([float(override[q]) for q in panel.quarters])
    override = np.asarray(override, dtype=float)
    if override.shape != (panel.n_quarters,):
        raise ValueError(
            f"override length {override.shape} does not match the "
            f"{panel.n_quarters} panel quarters"
        )
    return override.copy()


def windows(panel: ReturnPanel, size_s: int) -> list[WindowSpec]:
    """All moving windows of size_s return quarters, stepping one quarter.

    The first window ends at the size_s-th return quarter.  size_s below the
    entity count is rejected: the windowed correlation matrix would be
    singular.
    """
    if size_s < panel.n_entities:
        raise ValueError(
            f"window size {size_s} is below the entity count {panel.n_entities}; "
            f"the correlation matrix would not be invertible"
        )
    if panel.n_quarters < size_s:
        raise ValueError(
            f"panel has {panel.n_quarters} return quarters, fewer than window size {size_s}"
        )
    return [WindowSpec(end, size_s) for end in panel.quarters[size_s - 1 :]]
