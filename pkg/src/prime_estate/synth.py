"""Schema-faithful synthetic listings.

The reference dataset cannot be redistributed, so tests and the CLI run on
listings drawn from a :class:`SynthProfile` whose marginals mirror the
published summary table (counts, ranges, means, standard deviations and
number of empty cells per feature). Prices come from a known generative
function, which makes the ground truth inspectable.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .dataset import BOOLEAN_FIELDS, FLOOR_NUMBERS, POSTAL_CODES, ZONES, RawListing
from .errors import InfeasibleProfile


@dataclass(frozen=True)
class Marginal:
    low: float | None = None
    high: float | None = None
    mean: float | None = None
    std: float | None = None
    empty: int = 0
    true_count: int | None = None
    false_count: int | None = None
    n_values: int | None = None


@dataclass(frozen=True)
class PriceModel:
    """price (M EUR) = area_coef*area + zone offset + amenity bumps + lognormal noise, floored."""

    area_coef: float = 0.004
    zone_offsets: tuple[float, ...] = (0.35, -0.45, -0.45, -0.35, -0.2, -0.2)
    parking_bump: float = 0.15
    penthouse_bump: float = 0.09
    noise_sigma: float = 0.25
    floor: float = 1.0

    def expected_median(self, area, zone, has_parking, is_penthouse):
        """Noise-free price (the lognormal noise has median 1)."""
        base = (
            self.area_coef * np.asarray(area, dtype=float)
            + np.asarray(self.zone_offsets)[np.asarray(zone) - 1]
            + self.parking_bump * np.asarray(has_parking, dtype=float)
            + self.penthouse_bump * np.asarray(is_penthouse, dtype=float)
        )
        return np.maximum(base + 1.0, self.floor)


DEFAULT_MARGINALS = {
    "constructed_area": Marginal(50, 2041, 288.76, 133.71, 0),
    "floor_area": Marginal(93, 1700, 257.63, 126.43, 1673),
    "construction_year": Marginal(1848, 2018, 1953.23, 31.35, 1517),
    "num_rooms": Marginal(0, 20, 4.19, 1.35, 6),
    "num_baths": Marginal(0, 10, 3.53, 1.14, 5),
    "parking_price": Marginal(115, 750_000, 52_359.50, 102_670, 2209),
    "community_costs": Marginal(0, 3000, 353.71, 299.61, 1536),
    "street_name": Marginal(empty=1453, n_values=65),
    "street_number": Marginal(empty=2049, n_values=77),
    "floor_number": Marginal(empty=119, n_values=len(FLOOR_NUMBERS)),
    "is_penthouse": Marginal(empty=1809, true_count=169, false_count=288),
    "is_duplex": Marginal(empty=1956, true_count=50, false_count=260),
    "has_lift": Marginal(empty=123, true_count=2123, false_count=20),
    "has_box_room": Marginal(empty=785, true_count=1212, false_count=269),
    "has_swimming_pool": Marginal(empty=1726, true_count=127, false_count=413),
    "has_garden": Marginal(empty=1720, true_count=155, false_count=391),
    "has_parking": Marginal(empty=1502, true_count=687, false_count=77),
}

CONTINUOUS_MARGINALS = (
    "constructed_area",
    "floor_area",
    "construction_year",
    "num_rooms",
    "num_baths",
    "parking_price",
    "community_costs",
)


@dataclass(frozen=True)
class SynthProfile:
    n_total: int = 2266
    n_apartments: int = 2174
    n_villas: int = 92
    marginals: dict = field(default_factory=lambda: dict(DEFAULT_MARGINALS))
    price_model: PriceModel = PriceModel()
    seed: int = 1

    def scaled(self, n_total: int) -> "SynthProfile":
        """Same shape of profile for a different row count (counts scale proportionally)."""
        ratio = n_total / self.n_total if self.n_total else 0.0
        villas = int(round(self.n_villas * ratio))
        marginals = {}
        for name, m in self.marginals.items():
            changes = {"empty": min(n_total, int(round(m.empty * ratio)))}
            if m.true_count is not None:
                changes["true_count"] = int(round(m.true_count * ratio))
                changes["false_count"] = int(round(m.false_count * ratio))
            marginals[name] = replace(m, **changes)
        return replace(
            self, n_total=n_total, n_apartments=n_total - villas, n_villas=villas, marginals=marginals
        )

    def validate(self) -> None:
        if self.n_total < 0 or self.n_apartments < 0 or self.n_villas < 0:
            raise InfeasibleProfile("row counts must be non-negative")
        if self.n_apartments + self.n_villas != self.n_total:
            raise InfeasibleProfile("n_apartments + n_villas must equal n_total")
        for name, m in self.marginals.items():
            if m.empty > self.n_total or m.empty < 0:
                raise InfeasibleProfile(f"{name}: empty count {m.empty} exceeds n_total {self.n_total}")

    def to_json(self) -> str:
        d = asdict(self)
        d["price_model"]["zone_offsets"] = list(self.price_model.zone_offsets)
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SynthProfile":
        d = json.loads(text)
        base = cls()
        marginals = dict(base.marginals)
        for name, m in d.get("marginals", {}).items():
            marginals[name] = Marginal(**m)
        pm = d.get("price_model", {})
        if "zone_offsets" in pm:
            pm = {**pm, "zone_offsets": tuple(pm["zone_offsets"])}
        return cls(
            n_total=d.get("n_total", base.n_total),
            n_apartments=d.get("n_apartments", base.n_apartments),
            n_villas=d.get("n_villas", base.n_villas),
            marginals=marginals,
            price_model=replace(base.price_model, **pm),
            seed=d.get("seed", base.seed),
        )

    @classmethod
    def load(cls, path: str | Path) -> "SynthProfile":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _lognormal_params(mean: float, std: float) -> tuple[float, float]:
    sigma2 = math.log1p((std / mean) ** 2)
    return math.log(mean) - sigma2 / 2, math.sqrt(sigma2)


def _match_mean(values, m: Marginal, multiplicative: bool, rounds: int = 30):
    """Shift or rescale a sample so its mean hits the target after clipping to range."""
    v = np.clip(values, m.low, m.high)
    for _ in range(rounds):
        current = v.mean()
        if abs(current - m.mean) <= 1e-6 * abs(m.mean):
            break
        if multiplicative:
            v = np.clip(v * (m.mean / current), m.low, m.high)
        else:
            v = np.clip(v + (m.mean - current), m.low, m.high)
    return v


def _empty_mask(rng: np.random.Generator, n: int, empty: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    if empty:
        mask[rng.choice(n, size=empty, replace=False)] = True
    return mask


ZONE_AREA_FACTOR = np.array([0.96, 0.96, 0.96, 1.2, 0.96, 0.96])
VILLA_AREA_FACTOR = 1.5
# Zone -> postal code it mostly belongs to; the rest are spread uniformly.
ZONE_POSTAL = ("28001", "28006", "28009", "28028", "28014", "28046")
FLOOR_WEIGHTS = np.array([2, 8, 5] + [14, 14, 13, 12, 10, 7, 5, 3, 2, 1, 1, 1, 1, 1], dtype=float)


def synthesize(profile: SynthProfile | None = None) -> list[RawListing]:
    """Draw ``profile.n_total`` listings; equal seeds give bit-identical output."""
    profile = profile or SynthProfile()
    profile.validate()
    n = profile.n_total
    if n == 0:
        return []
    rng = np.random.Generator(np.random.PCG64(profile.seed))
    M = profile.marginals

    is_villa = np.zeros(n, dtype=bool)
    is_villa[rng.choice(n, size=profile.n_villas, replace=False)] = True
    zone = rng.integers(1, len(ZONES) + 1, size=n)
    postal = np.array(ZONE_POSTAL)[zone - 1]
    stray = rng.random(n) < 0.2
    postal[stray] = rng.choice(np.array(POSTAL_CODES), size=int(stray.sum()))

    # constructed area: lognormal, heavier for villas and zone 4
    m = M["constructed_area"]
    mu, sigma = _lognormal_params(m.mean, m.std)
    z_area = rng.standard_normal(n)
    area = np.exp(mu + sigma * z_area) * ZONE_AREA_FACTOR[zone - 1]
    area[is_villa] *= VILLA_AREA_FACTOR
    area = np.round(_match_mean(area, m, multiplicative=True), 0)

    m = M["floor_area"]
    ratio = rng.uniform(0.80, 0.985, size=n)
    floor_area = np.round(np.minimum(area * ratio, area), 0)
    floor_missing = _empty_mask(rng, n, m.empty)
    present = ~floor_missing
    if present.any():
        adjusted = _match_mean(floor_area[present], m, multiplicative=True)
        floor_area[present] = np.minimum(np.round(adjusted, 0), area[present])

    m = M["construction_year"]
    year = rng.normal(m.mean, m.std, size=n)
    year_missing = _empty_mask(rng, n, m.empty)
    year[~year_missing] = _match_mean(year[~year_missing], m, multiplicative=False)
    year = np.round(year)

    def counts(name, z):
        mm = M[name]
        raw = mm.mean + mm.std * z
        missing = _empty_mask(rng, n, mm.empty)
        out = np.clip(raw, mm.low, mm.high)
        if (~missing).any():
            # rounding keeps the mean within a fraction of a unit; correct before rounding
            shifted = out[~missing]
            for _ in range(10):
                shifted = np.clip(shifted + (mm.mean - np.round(shifted).mean()), mm.low, mm.high)
            out[~missing] = shifted
        return np.round(out).astype(int), missing

    rooms, rooms_missing = counts(
        "num_rooms", 0.7 * z_area + math.sqrt(1 - 0.49) * rng.standard_normal(n)
    )
    baths, baths_missing = counts(
        "num_baths", 0.7 * z_area + math.sqrt(1 - 0.49) * rng.standard_normal(n)
    )

    m = M["parking_price"]
    mu, sigma = _lognormal_params(m.mean, m.std)
    parking_price = np.round(np.exp(rng.normal(mu, sigma, size=n)), 0)
    parking_missing = _empty_mask(rng, n, m.empty)
    if (~parking_missing).any():
        parking_price[~parking_missing] = np.round(
            _match_mean(parking_price[~parking_missing], m, multiplicative=True), 0
        )

    m = M["community_costs"]
    shape = (m.mean / m.std) ** 2
    costs = rng.gamma(shape, m.mean / shape, size=n)
    costs_missing = _empty_mask(rng, n, m.empty)
    if (~costs_missing).any():
        costs[~costs_missing] = np.round(
            _match_mean(costs[~costs_missing], m, multiplicative=True), 2
        )

    flags = {}
    for name in BOOLEAN_FIELDS:
        mm = M[name]
        missing = _empty_mask(rng, n, mm.empty)
        stated = np.flatnonzero(~missing)
        total = (mm.true_count or 0) + (mm.false_count or 0)
        n_true = int(round(len(stated) * mm.true_count / total)) if total else 0
        values = np.zeros(n, dtype=bool)
        values[rng.permutation(stated)[:n_true]] = True
        flags[name] = (values, missing)

    m = M["street_name"]
    streets = np.array([f"Calle {i + 1:02d}" for i in range(m.n_values)])
    street = streets[rng.integers(0, m.n_values, size=n)]
    street_missing = _empty_mask(rng, n, m.empty)
    m = M["street_number"]
    street_no = rng.integers(1, m.n_values + 1, size=n)
    street_no_missing = _empty_mask(rng, n, m.empty)
    floors = np.array(FLOOR_NUMBERS)[
        rng.choice(len(FLOOR_NUMBERS), size=n, p=FLOOR_WEIGHTS / FLOOR_WEIGHTS.sum())
    ]
    floors[is_villa] = "Floor"
    floor_missing_no = _empty_mask(rng, n, M["floor_number"].empty)

    activation_offset = rng.integers(0, 184, size=n)
    listed_days = rng.integers(7, 181, size=n)

    pm = profile.price_model
    has_parking = flags["has_parking"][0] & ~flags["has_parking"][1]
    is_penthouse = flags["is_penthouse"][0] & ~flags["is_penthouse"][1]
    noise = np.exp(rng.normal(0.0, pm.noise_sigma, size=n))
    price_m = (
        pm.area_coef * area
        + np.asarray(pm.zone_offsets)[zone - 1]
        + pm.parking_bump * has_parking
        + pm.penthouse_bump * is_penthouse
        + noise
    )
    price_eur = np.round(np.maximum(price_m, pm.floor) * 1e6, 0)

    start = date(2017, 7, 1)
    out = []
    for i in range(n):
        activation = start + timedelta(days=int(activation_offset[i]))
        out.append(
            RawListing(
                id=f"L{i + 1:05d}",
                zone=int(zone[i]),
                postal_code=str(postal[i]),
                street_name=None if street_missing[i] else str(street[i]),
                street_number=None if street_no_missing[i] else str(street_no[i]),
                floor_number=None if floor_missing_no[i] else str(floors[i]),
                asset_type="Villa" if is_villa[i] else "Apartment",
                constructed_area_sqm=float(area[i]),
                floor_area_sqm=None if floor_missing[i] else float(floor_area[i]),
                construction_year=None if year_missing[i] else int(year[i]),
                num_rooms=None if rooms_missing[i] else int(rooms[i]),
                num_baths=None if baths_missing[i] else int(baths[i]),
                **{
                    name: (None if missing[i] else bool(values[i]))
                    for name, (values, missing) in flags.items()
                },
                parking_price_eur=None if parking_missing[i] else float(parking_price[i]),
                community_costs_eur_month=None if costs_missing[i] else float(costs[i]),
                activation_date=activation,
                deactivation_date=activation + timedelta(days=int(listed_days[i])),
                price_eur=float(price_eur[i]),
            )
        )
    return out
