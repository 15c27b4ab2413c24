"""Listing schema, CSV ingestion, cleansing, one-hot encoding and max-normalization."""

from __future__ import annotations

import csv
import logging
import math
import statistics
import unicodedata
from dataclasses import dataclass, field, fields, replace
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DataError,
    DegenerateColumn,
    EmptyFile,
    MissingHeader,
    TypeMismatch,
    UnknownCategory,
)

logger = logging.getLogger(__name__)

ZONES = (1, 2, 3, 4, 5, 6)
POSTAL_CODES = ("28001", "28006", "28009", "28014", "28028", "28046")
FLOOR_NUMBERS = ("Basement", "Floor", "Mezz") + tuple(str(i) for i in range(1, 15))
ASSET_TYPES = ("Apartment", "Villa")

# Observed ranges of the reference dataset, used only for warnings.
CONSTRUCTED_AREA_RANGE = (50.0, 2041.0)
MIN_PRICE_EUR = 1_000_000.0


@dataclass(frozen=True)
class RawListing:
    id: str
    zone: int | None = None
    postal_code: str | None = None
    street_name: str | None = None
    street_number: str | None = None
    floor_number: str | None = None
    asset_type: str | None = None
    constructed_area_sqm: float | None = None
    floor_area_sqm: float | None = None
    construction_year: int | None = None
    num_rooms: int | None = None
    num_baths: int | None = None
    is_penthouse: bool | None = None
    is_duplex: bool | None = None
    has_lift: bool | None = None
    has_box_room: bool | None = None
    has_swimming_pool: bool | None = None
    has_garden: bool | None = None
    has_parking: bool | None = None
    parking_price_eur: float | None = None
    community_costs_eur_month: float | None = None
    activation_date: date | None = None
    deactivation_date: date | None = None
    price_eur: float | None = None


BOOLEAN_FIELDS = (
    "is_penthouse",
    "is_duplex",
    "has_lift",
    "has_box_room",
    "has_swimming_pool",
    "has_garden",
    "has_parking",
)
CONTINUOUS_FIELDS = ("constructed_area_sqm", "floor_area_sqm", "num_rooms", "num_baths")

# CSV column -> (RawListing attribute, parser kind)
CSV_COLUMNS: dict[str, tuple[str, str]] = {
    "id": ("id", "str"),
    "zone": ("zone", "int"),
    "postal_code": ("postal_code", "str"),
    "street_name": ("street_name", "str"),
    "street_number": ("street_number", "str"),
    "floor_number": ("floor_number", "str"),
    "asset_type": ("asset_type", "str"),
    "constructed_area": ("constructed_area_sqm", "float"),
    "floor_area": ("floor_area_sqm", "float"),
    "construction_year": ("construction_year", "int"),
    "num_rooms": ("num_rooms", "int"),
    "num_baths": ("num_baths", "int"),
    **{name: (name, "bool") for name in BOOLEAN_FIELDS},
    "parking_price": ("parking_price_eur", "float"),
    "community_costs": ("community_costs_eur_month", "float"),
    "activation_date": ("activation_date", "date"),
    "deactivation_date": ("deactivation_date", "date"),
    "price": ("price_eur", "float"),
}
CSV_HEADER = tuple(CSV_COLUMNS)


def _parse_cell(kind: str, text: str):
    if kind == "str":
        return text
    if kind == "int":
        return int(text)
    if kind == "float":
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(text)
        return value
    if kind == "bool":
        lowered = text.strip().lower()
        if lowered == "true":
            return True
        if lowered == "false":
            return False
        raise ValueError(text)
    if kind == "date":
        return date.fromisoformat(text.strip())
    raise AssertionError(kind)


def _format_cell(kind: str, value) -> str:
    if value is None:
        return ""
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    if kind == "date":
        return value.isoformat()
    return str(value)


@dataclass
class IngestResult:
    listings: list[RawListing]
    skipped: int = 0
    skipped_rows: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.listings)

    def __iter__(self):
        return iter(self.listings)


def ingest_csv(path: str | Path, strict: bool = False) -> IngestResult:
    """Read a listing CSV.

    Empty cells become absent fields. In strict mode the first unparseable
    cell raises :class:`TypeMismatch`; otherwise the offending row is skipped
    and counted in ``IngestResult.skipped``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise MissingHeader(missing)
        positions = {c: header.index(c) for c in CSV_HEADER}

        result = IngestResult(listings=[])
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                result.listings.append(_parse_row(row, positions, row_no))
            except TypeMismatch:
                if strict:
                    raise
                result.skipped += 1
                result.skipped_rows.append(row_no)
    if result.skipped:
        logger.warning("skipped %d unparseable rows in %s", result.skipped, path)
    return result


def _parse_row(row: Sequence[str], positions: Mapping[str, int], row_no: int) -> RawListing:
    values = {}
    for column, (attr, kind) in CSV_COLUMNS.items():
        pos = positions[column]
        text = row[pos] if pos < len(row) else ""
        if text.strip() == "":
            values[attr] = None
            continue
        try:
            values[attr] = _parse_cell(kind, text)
        except ValueError:
            raise TypeMismatch(row_no, column, text) from None
    if values["id"] is None:
        raise TypeMismatch(row_no, "id", "")
    return RawListing(**values)


def write_csv(listings: Iterable[RawListing], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for listing in listings:
            writer.writerow(
                _format_cell(kind, getattr(listing, attr)) for attr, kind in CSV_COLUMNS.values()
            )


def validate(listing: RawListing) -> list[str]:
    """Return human-readable warnings for values outside the reference profile."""
    warnings = []
    area = listing.constructed_area_sqm
    lo, hi = CONSTRUCTED_AREA_RANGE
    if area is not None and not lo <= area <= hi:
        warnings.append(f"{listing.id}: constructed area {area} outside [{lo:g}, {hi:g}]")
    if listing.price_eur is not None and listing.price_eur < MIN_PRICE_EUR:
        warnings.append(f"{listing.id}: price {listing.price_eur:.0f} below one million euros")
    if (
        area is not None
        and listing.floor_area_sqm is not None
        and listing.floor_area_sqm > area
    ):
        warnings.append(f"{listing.id}: floor area exceeds constructed area")
    return warnings


# --- cleansing ---------------------------------------------------------------


def _street_key(name: str) -> str:
    decomposed = unicodedata.normalize("NFKD", name)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return " ".join(stripped.casefold().split())


def load_aliases(path: str | Path) -> dict[str, str]:
    """Load an ``alias,canonical`` CSV into a lookup table."""
    aliases = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"alias", "canonical"} <= set(reader.fieldnames):
            raise MissingHeader([c for c in ("alias", "canonical") if c not in (reader.fieldnames or [])])
        for row in reader:
            aliases[row["alias"]] = row["canonical"]
    return aliases


def _median_int(values: list[int]) -> int:
    if not values:
        return 0
    return int(math.floor(statistics.median(values) + 0.5))


def cleanse(
    listings: Sequence[RawListing], street_aliases: Mapping[str, str] | None = None
) -> list[RawListing]:
    """Fill the gaps the models cannot tolerate.

    Street names go through the alias table (accent-, case- and
    whitespace-insensitive), a missing floor area falls back to the
    constructed area, missing flags mean the amenity is not available, and
    missing room/bath counts take the column median.
    """
    lookup = {}
    if street_aliases:
        lookup = {_street_key(k): v for k, v in street_aliases.items()}
        lookup.update({_street_key(v): v for v in street_aliases.values()})

    rooms = _median_int([x.num_rooms for x in listings if x.num_rooms is not None])
    baths = _median_int([x.num_baths for x in listings if x.num_baths is not None])

    out = []
    for x in listings:
        changes = {}
        if x.street_name is not None and lookup:
            canonical = lookup.get(_street_key(x.street_name))
            if canonical is not None and canonical != x.street_name:
                changes["street_name"] = canonical
        if x.floor_area_sqm is None and x.constructed_area_sqm is not None:
            changes["floor_area_sqm"] = x.constructed_area_sqm
        for name in BOOLEAN_FIELDS:
            if getattr(x, name) is None:
                changes[name] = False
        if x.num_rooms is None:
            changes["num_rooms"] = rooms
        if x.num_baths is None:
            changes["num_baths"] = baths
        out.append(replace(x, **changes) if changes else x)
    return out


# --- encoding ----------------------------------------------------------------


@dataclass(frozen=True)
class ColumnDescriptor:
    name: str
    kind: str  # "continuous" | "binary"
    origin: str = "native"  # "native" | "one-hot(<source>)"
    train_max: float | None = None

    @property
    def block(self) -> str | None:
        if self.origin.startswith("one-hot("):
            return self.origin[len("one-hot(") : -1]
        return None


@dataclass(frozen=True)
class Vocabulary:
    """Category lists for every one-hot block, in column order."""

    zone: tuple = tuple(str(z) for z in ZONES)
    postal_code: tuple = POSTAL_CODES
    floor_number: tuple = FLOOR_NUMBERS
    asset_type: tuple = ASSET_TYPES
    street_name: tuple = ()

    BLOCKS = ("zone", "postal_code", "floor_number", "asset_type", "street_name")

    @classmethod
    def from_listings(cls, listings: Iterable[RawListing]) -> "Vocabulary":
        streets = sorted({x.street_name for x in listings if x.street_name is not None})
        return cls(street_name=tuple(streets))

    def to_dict(self) -> dict:
        return {b: list(getattr(self, b)) for b in self.BLOCKS}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocabulary":
        return cls(**{b: tuple(d[b]) for b in cls.BLOCKS})


def _dim_count(vocab: Vocabulary) -> int:
    return len(CONTINUOUS_FIELDS) + len(BOOLEAN_FIELDS) + sum(
        len(getattr(vocab, b)) for b in Vocabulary.BLOCKS
    )


@dataclass(frozen=True)
class FeatureMatrix:
    columns: tuple[ColumnDescriptor, ...]
    rows: np.ndarray
    target: np.ndarray
    row_ids: tuple[str, ...]

    def __post_init__(self):
        n, d = self.rows.shape
        if d != len(self.columns) or self.target.shape != (n,) or len(self.row_ids) != n:
            raise DataError("inconsistent FeatureMatrix shapes")
        if not np.all(np.isfinite(self.rows)) or not np.all(np.isfinite(self.target)):
            raise DataError("FeatureMatrix contains absent or non-finite values")
        self.rows.flags.writeable = False
        self.target.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def continuous_mask(self) -> np.ndarray:
        return np.array([c.kind == "continuous" for c in self.columns])

    def take(self, index) -> "FeatureMatrix":
        index = np.asarray(index)
        return FeatureMatrix(
            self.columns,
            self.rows[index].copy(),
            self.target[index].copy(),
            tuple(self.row_ids[i] for i in index),
        )

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.names.index(name)]


def _columns_for(vocab: Vocabulary) -> tuple[ColumnDescriptor, ...]:
    cols = [ColumnDescriptor(_feature_name(f), "continuous") for f in CONTINUOUS_FIELDS]
    cols += [ColumnDescriptor(f, "binary") for f in BOOLEAN_FIELDS]
    for block in Vocabulary.BLOCKS:
        cols += [
            ColumnDescriptor(f"{block}={v}", "binary", f"one-hot({block})")
            for v in getattr(vocab, block)
        ]
    return tuple(cols)


def _feature_name(attr: str) -> str:
    return {
        "constructed_area_sqm": "constructed_area",
        "floor_area_sqm": "floor_area",
    }.get(attr, attr)


def encode(
    listings: Sequence[RawListing],
    vocabulary: Vocabulary | None = None,
    strict: bool = True,
    require_target: bool = True,
) -> FeatureMatrix:
    """Build the dense design matrix; target is the price in millions of euros.

    An absent street name or floor number leaves its one-hot block all zero.
    Street number, construction year, parking price and community costs are
    not carried into the matrix.
    """
    vocab = vocabulary or Vocabulary.from_listings(listings)
    columns = _columns_for(vocab)
    n = len(listings)
    rows = np.zeros((n, len(columns)))
    target = np.zeros(n)

    offset = len(CONTINUOUS_FIELDS) + len(BOOLEAN_FIELDS)
    block_offsets = {}
    for block in Vocabulary.BLOCKS:
        values = getattr(vocab, block)
        block_offsets[block] = (offset, {v: i for i, v in enumerate(values)})
        offset += len(values)

    for i, x in enumerate(listings):
        for j, attr in enumerate(CONTINUOUS_FIELDS):
            value = getattr(x, attr)
            if value is None:
                raise DataError(f"{x.id}: {attr} is absent; run cleanse first")
            rows[i, j] = value
        for j, attr in enumerate(BOOLEAN_FIELDS, start=len(CONTINUOUS_FIELDS)):
            rows[i, j] = 1.0 if getattr(x, attr) else 0.0
        for block in Vocabulary.BLOCKS:
            value = getattr(x, block)
            if value is None:
                continue
            start, index = block_offsets[block]
            pos = index.get(str(value))
            if pos is None:
                if strict:
                    raise UnknownCategory(block, value)
                continue
            rows[i, start + pos] = 1.0
        if x.price_eur is None:
            if require_target:
                raise DataError(f"{x.id}: price is absent")
            target[i] = 0.0
        else:
            target[i] = x.price_eur / 1e6

    return FeatureMatrix(columns, rows, target, tuple(x.id for x in listings))


# --- normalization -----------------------------------------------------------


@dataclass(frozen=True)
class Normalizer:
    """Per-column divisors fitted on a training fold (1.0 for binary columns)."""

    names: tuple[str, ...]
    scale: np.ndarray

    def to_dict(self) -> dict:
        return {"names": list(self.names), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Normalizer":
        return cls(tuple(d["names"]), np.asarray(d["scale"], dtype=float))


def fit_normalizer(train: FeatureMatrix) -> Normalizer:
    scale = np.ones(len(train.columns))
    for j, col in enumerate(train.columns):
        if col.kind != "continuous":
            continue
        top = float(train.rows[:, j].max()) if train.n_rows else 0.0
        if not top > 0:
            raise DegenerateColumn(col.name)
        scale[j] = top
    return Normalizer(tuple(train.names), scale)


def apply_normalizer(state: Normalizer, m: FeatureMatrix) -> FeatureMatrix:
    """Divide continuous columns by their training maxima; test values may exceed 1."""
    if tuple(m.names) != state.names:
        raise DataError("normalizer was fitted on a different column layout")
    columns = tuple(
        replace(c, train_max=float(s)) if c.kind == "continuous" else c
        for c, s in zip(m.columns, state.scale)
    )
    return FeatureMatrix(columns, m.rows / state.scale, m.target.copy(), m.row_ids)


def listing_field_names() -> list[str]:
    return [f.name for f in fields(RawListing)]
