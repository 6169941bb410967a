"""Market-weight paths from a GBM simulator or from ingested price CSVs.

All functions are pure; the simulator's PRNG state is local to each call.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True)
class PricePath:
    """Strictly positive capitalisations, rows = trading days, columns = assets.

    dates are integer day indices for synthetic data, ISO-8601 strings for real data.
    """

    dates: list
    prices: np.ndarray
    tickers: list

    def __post_init__(self):
        p = np.asarray(self.prices, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 2 or p.shape[1] < 2:
            raise DataError(f"price matrix must be at least 2x2, got shape {p.shape}")
        if len(self.dates) != p.shape[0]:
            raise DataError("dates length does not match number of price rows")
        if len(self.tickers) != p.shape[1]:
            raise DataError("tickers length does not match number of price columns")
        if not all(a < b for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        if not np.all(p > 0):
            r, c = np.argwhere(~(p > 0))[0]
            raise DataError(f"non-positive price at row {r}, column {self.tickers[c]!r}")
        object.__setattr__(self, "prices", p)

    @property
    def n_assets(self):
        return self.prices.shape[1]


@dataclass(frozen=True)
class MarketWeightPath:
    """Rows live in the open unit simplex; same index as the source PricePath."""

    dates: list
    weights: np.ndarray
    tickers: list

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not np.allclose(w.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise DataError("weight rows must sum to 1 within 1e-12")
        if np.any(w < WEIGHT_FLOOR):
            raise DataError(f"weights must be >= {WEIGHT_FLOOR}")
        object.__setattr__(self, "weights", w)

    @property
    def n_assets(self):
        return self.weights.shape[1]

    def __len__(self):
        return self.weights.shape[0]

    def slice(self, start, stop):
        return MarketWeightPath(self.dates[start:stop], self.weights[start:stop], self.tickers)


@dataclass(frozen=True)
class GbmConfig:
    n_assets: int = 5
    n_days: int = 1000
    dt: float = 1.0 / 252.0
    drift_range: tuple = (-0.05, 0.15)
    vol_range: tuple = (0.20, 0.80)
    seed: int = 0
    initial_price: float = 1.0

    def __post_init__(self):
        if self.n_assets < 2:
            raise ConfigError("n_assets must be >= 2")
        if self.n_days < 2:
            raise ConfigError("n_days must be >= 2")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.vol_range[0] <= 0:
            raise ConfigError("vol_range low bound must be positive")
        if self.drift_range[0] > self.drift_range[1] or self.vol_range[0] > self.vol_range[1]:
            raise ConfigError("drift/vol ranges must be ordered (low, high)")
        if self.initial_price <= 0:
            raise ConfigError("initial_price must be positive")


def gbm_simulate(cfg: GbmConfig) -> PricePath:
    """Simulate independent GBM paths with per-asset drift and vol drawn uniformly.

    Uses numpy's PCG64 generator, so a fixed seed reproduces the path exactly.
    Per asset i the log-price increment is (m_i - s_i^2/2) dt + s_i sqrt(dt) Z.
    """
    rng = np.random.default_rng(cfg.seed)
    drifts = rng.uniform(cfg.drift_range[0], cfg.drift_range[1], cfg.n_assets)
    vols = rng.uniform(cfg.vol_range[0], cfg.vol_range[1], cfg.n_assets)
    z = rng.standard_normal((cfg.n_days - 1, cfg.n_assets))
    increments = (drifts - 0.5 * vols**2) * cfg.dt + vols * np.sqrt(cfg.dt) * z
    log_prices = np.vstack(
        [np.full(cfg.n_assets, np.log(cfg.initial_price)), increments]
    ).cumsum(axis=0)
    tickers = [f"A{i}" for i in range(cfg.n_assets)]
    return PricePath(list(range(cfg.n_days)), np.exp(log_prices), tickers)


def normalize_to_weights(path: PricePath) -> MarketWeightPath:
    """Divide each price row by its total; floor at 1e-12 and renormalise."""
    w = path.prices / path.prices.sum(axis=1, keepdims=True)
    if np.any(w < WEIGHT_FLOOR):
        w = np.maximum(w, WEIGHT_FLOOR)
        w = w / w.sum(axis=1, keepdims=True)
    return MarketWeightPath(path.dates, w, path.tickers)


def load_prices_csv(path, tickers=None) -> PricePath:
    """Read a wide-format price CSV: header `date,<t1>,<t2>,...`, empty cell = missing.

    Missing cells are forward-filled from the previous row; leading rows that
    still contain gaps are dropped.
    """
    with open(path, newline="") as fh:
        return _parse_prices(fh, tickers, str(path))


def parse_prices_csv(text, tickers=None) -> PricePath:
    """Same as load_prices_csv but from an in-memory string."""
    return _parse_prices(io.StringIO(text), tickers, "<string>")


def _parse_prices(fh, tickers, name):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{name}: empty CSV") from None
    if len(header) < 3 or header[0].strip().lower() != "date":
        raise DataError(f"{name}: expected header 'date,<ticker>,...' with >= 2 tickers")
    available = [h.strip() for h in header[1:]]
    if tickers is None:
        tickers = available
    missing = [t for t in tickers if t not in available]
    if missing:
        raise DataError(f"{name}: unknown tickers {missing}; CSV has {available}")
    cols = [available.index(t) for t in tickers]

    dates = []
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{name}: row {lineno} has {len(row)} fields, expected {len(header)}")
        parsed = []
        for t, c in zip(tickers, cols):
            cell = row[1 + c].strip()
            if not cell:
                parsed.append(np.nan)
                continue
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DataError(f"{name}: unparsable cell at row {lineno}, column {t!r}: {cell!r}") from None
        date = row[0].strip()
        # synthetic CSVs carry integer day indices; restore them so ordering is numeric
        dates.append(int(date) if date.lstrip("-").isdigit() else date)
        rows.append(parsed)

    prices = np.array(rows, dtype=np.float64)
    if prices.size == 0:
        raise DataError(f"{name}: no data rows")

    # forward-fill, then drop leading rows that still have gaps
    for i in range(1, prices.shape[0]):
        gap = np.isnan(prices[i])
        prices[i, gap] = prices[i - 1, gap]
    keep = ~np.isnan(prices).any(axis=1)
    first = int(np.argmax(keep)) if keep.any() else len(keep)
    prices, dates = prices[first:], dates[first:]
    if np.isnan(prices).any():
        r = int(np.argwhere(np.isnan(prices).any(axis=1))[0])
        raise DataError(f"{name}: unfillable missing value at data row {r}")
    if prices.shape[0] < 2:
        raise DataError(f"{name}: fewer than 2 usable rows after forward-fill")
    bad = np.argwhere(~(prices > 0))
    if bad.size:
        r, c = bad[0]
        raise DataError(f"{name}: non-positive price at date {dates[r]}, column {tickers[c]!r}")
    return PricePath(dates, prices, list(tickers))


def write_prices_csv(path, price_path: PricePath):
    """Write the wide-format CSV schema consumed by load_prices_csv."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(price_path.tickers))
        for date, row in zip(price_path.dates, price_path.prices):
            writer.writerow([date] + [repr(float(v)) for v in row])


def fetch_csv(url, out_path, timeout=30):
    """Download a wide-format price CSV from any HTTP endpoint.

    Opt-in network use; validates the payload parses before writing it out.
    """
    import requests

    resp = requests.get(url, timeout=timeout)
    resp.raise_for_status()
    parse_prices_csv(resp.text)
    with open(out_path, "w", newline="") as fh:
        fh.write(resp.text)
    return out_path
