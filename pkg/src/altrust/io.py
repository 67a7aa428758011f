"""File formats: the monthly ROE/rate series, chain draws, summaries and run metadata.

Every float is written with 17 significant digits so that a write/read
round trip is lossless.
"""

from __future__ import annotations

import configparser
import csv
import datetime as dt
import json
import math
from pathlib import Path

import numpy as np

from .calibration import INTERVAL_LEVELS, ObservationSeries, PosteriorDraws, PosteriorSummary
from .errors import ConfigError

__all__ = [
    "load_timeseries",
    "write_timeseries",
    "load_config",
    "encode_states",
    "decode_states",
    "write_draws_csv",
    "read_draws_csv",
    "write_summary_csv",
    "write_metadata",
    "read_metadata",
    "fmt",
]

REQUIRED_COLUMNS = ("date", "roe", "rate")
DRAW_COLUMNS = ("iteration", "c1", "c2", "sigma2", "lambda_rate", "mu_rate", "L1", "T1", "states")


def fmt(x) -> str:
    return format(float(x), ".17g")


def _parse_float(text: str, col: str, row: int) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"row {row}: column {col!r} is not numeric: {text!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"row {row}: column {col!r} is not finite: {text!r}")
    return v


def _month_index(d: dt.date) -> int:
    return d.year * 12 + d.month - 1


def load_timeseries(path) -> ObservationSeries:
    """Read a ``date,roe,rate`` file into a chronologically sorted series.

    Rows may appear in any order but each calendar month must occur exactly
    once and no month may be missing between the first and the last.
    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ConfigError(f"{path}: missing column(s) {', '.join(missing)}; header is {header}")
        reader.fieldnames = header
        rows = []
        for i, rec in enumerate(reader, start=2):
            raw = (rec.get("date") or "").strip()
            try:
                date = dt.date.fromisoformat(raw)
            except ValueError:
                raise ConfigError(f"row {i}: invalid ISO date {raw!r}") from None
            roe = _parse_float(rec.get("roe"), "roe", i)
            rate = _parse_float(rec.get("rate"), "rate", i)
            rows.append((date, roe, rate, i))
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    for prev, cur in zip(rows, rows[1:]):
        step = _month_index(cur[0]) - _month_index(prev[0])
        if step == 0:
            raise ConfigError(f"row {cur[3]}: duplicate month {cur[0]:%Y-%m} (also row {prev[3]})")
        if step > 1:
            gap = prev[0].replace(day=1)
            y, m = divmod(_month_index(gap) + 1, 12)
            raise ConfigError(f"row {cur[3]}: missing month {y:04d}-{m + 1:02d} before {cur[0].isoformat()}")
    return ObservationSeries(np.array([r[1] for r in rows]), np.array([r[2] for r in rows]),
                             tuple(r[0].isoformat() for r in rows))


def write_timeseries(path, obs: ObservationSeries) -> None:
    if obs.dates is None:
        raise ConfigError("series has no dates to write")
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REQUIRED_COLUMNS)
        for d, roe, rate in zip(obs.dates, obs.roe, obs.rate):
            w.writerow([d, fmt(roe), fmt(rate)])


def load_config(path) -> configparser.ConfigParser:
    """INI-style configuration: one section per subcommand, ``key = value``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return cp


# -- state paths as run lengths -----------------------------------------------

def encode_states(s) -> str:
    """``[0, 0, 1]`` -> ``"1x2;2x1"`` (state labels 1 and 2)."""
    out = []
    s = [int(x) for x in s]
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        out.append(f"{s[i] + 1}x{j - i}")
        i = j
    return ";".join(out)


def decode_states(text: str) -> np.ndarray:
    out = []
    for part in filter(None, text.split(";")):
        try:
            label, count = part.split("x")
            label, count = int(label), int(count)
        except ValueError:
            raise ConfigError(f"malformed run-length token {part!r}") from None
        if label not in (1, 2) or count < 1:
            raise ConfigError(f"malformed run-length token {part!r}")
        out.extend([label - 1] * count)
    return np.array(out, dtype=np.int8)


def write_draws_csv(path, draws: PosteriorDraws) -> None:
    """One row per retained iteration, numbered from the end of burn-in."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DRAW_COLUMNS)
        for j in range(len(draws)):
            w.writerow([draws.burn_in + j]
                       + [fmt(draws.scalar(n)[j]) for n in PosteriorDraws.SCALARS]
                       + [encode_states(draws.states[j])])


def read_draws_csv(path) -> dict:
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DRAW_COLUMNS:
            raise ConfigError(f"{path}: unexpected draws header {reader.fieldnames}")
        rows = list(reader)
    out = {n: np.array([float(r[n]) for r in rows]) for n in PosteriorDraws.SCALARS}
    out["iteration"] = np.array([int(r["iteration"]) for r in rows])
    out["states"] = np.array([decode_states(r["states"]) for r in rows])
    return out


def _band_header() -> list[str]:
    return ["median"] + [f"{side}{lev}" for lev in INTERVAL_LEVELS for side in ("lo", "hi")]


def write_summary_csv(params_path, series_path, summary: PosteriorSummary, dates=None) -> None:
    """Parameter table and per-step table with the nested central bands."""
    cols = _band_header()
    with open(Path(params_path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name"] + cols)
        for name, bands in summary.params.items():
            w.writerow([name] + [fmt(bands[c]) for c in cols])
    quantities = list(summary.series)
    n = summary.p_s2.size
    with open(Path(series_path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "date", "p_s2"] + [f"{q}_{c}" for q in quantities for c in cols])
        for t in range(n):
            row = [t + 1, dates[t] if dates is not None else "", fmt(summary.p_s2[t])]
            for q in quantities:
                row += [fmt(summary.series[q][c][t]) for c in cols]
            w.writerow(row)


def write_metadata(path, meta: dict) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_metadata(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"metadata file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed metadata {path}: {exc}") from None
