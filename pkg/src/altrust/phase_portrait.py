"""Grid data for phase portraits: ROA fields, basin maps and trajectory bundles.

Nothing here draws; the CSV files are meant for an external plotting tool.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .core import EconState, Params, _rates
from .errors import ConfigError
from .trajectory import (
    IntegratorConfig, TerminalKind, TrajectoryRecord, integrate, integrate_terminals,
)

__all__ = [
    "GridSpec",
    "BasinLabel",
    "PRESETS",
    "RoaField",
    "BasinMap",
    "roa_field",
    "basin_map",
    "trajectory_bundle",
]


@dataclass(frozen=True)
class GridSpec:
    n_L: int = 101
    n_T: int = 101
    margin: float = 1e-3

    def __post_init__(self):
        if self.n_L < 2 or self.n_T < 2:
            raise ConfigError("grid needs at least 2 nodes per axis")
        if not 0.0 < self.margin < 0.1:
            raise ConfigError(f"margin must lie in (0, 0.1), got {self.margin!r}")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(0.0, 1.0, self.n_L), np.linspace(0.0, 1.0, self.n_T)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays of shape (n_T, n_L): row index is T, column index is L."""
        L, T = self.axes()
        return np.meshgrid(L, T)


class BasinLabel(str, Enum):
    DIAGONAL = "DiagonalBasin"
    POINT = "PointBasin"
    EXIT = "ExitBasin"


# module-chosen values placing L0 above, inside and exactly at the top of [0, 1]
PRESETS = {
    "regular": Params(0.05, 0.06, 0.04),
    "crisis": Params(0.05, -0.01, 0.04),
    "stagnation": Params(0.05, 0.0, 0.0),
}


def _fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass
class RoaField:
    L: np.ndarray      # (n_T, n_L)
    T: np.ndarray
    rA: np.ma.MaskedArray

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L", "T", "rA"])
            for L, T, v, m in zip(self.L.ravel(), self.T.ravel(), self.rA.data.ravel(),
                                  np.ma.getmaskarray(self.rA).ravel()):
                if not m:
                    w.writerow([_fmt(L), _fmt(T), _fmt(v)])


def roa_field(p: Params, grid: GridSpec = GridSpec()) -> RoaField:
    """Return on assets at every node; nodes with ``T >= 1 - margin`` are masked."""
    L, T = grid.mesh()
    mask = T >= 1.0 - grid.margin
    Ts = np.where(mask, 0.0, T)
    r_a = _rates(L, Ts, p.a_tilde, p.g_tilde, p.r_tilde)[0]
    return RoaField(L, T, np.ma.masked_array(r_a, mask=mask))


@dataclass
class BasinMap:
    L: np.ndarray                 # (n_T, n_L)
    T: np.ndarray
    label: np.ndarray             # object array of BasinLabel, None where masked
    confidence: np.ndarray        # object array of "high" / "low", None where masked
    terminal: np.ndarray          # object array of TerminalKind, None where masked or on axis
    mask: np.ndarray

    def region(self, where: str) -> np.ndarray:
        """Boolean selector of unmasked nodes above, below or on the axis."""
        sel = {"above": self.T > self.L, "below": self.T < self.L, "axis": self.T == self.L}[where]
        return sel & ~self.mask

    def counts(self, where: str | None = None) -> dict[BasinLabel, int]:
        sel = ~self.mask if where is None else self.region(where)
        labels = self.label[sel]
        return {b: int(sum(1 for x in labels if x is b)) for b in BasinLabel}

    def fraction(self, label: BasinLabel, where: str | None = None) -> float:
        c = self.counts(where)
        total = sum(c.values())
        return c[label] / total if total else math.nan

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L", "T", "label", "confidence"])
            for L, T, lab, conf, m in zip(self.L.ravel(), self.T.ravel(), self.label.ravel(),
                                          self.confidence.ravel(), self.mask.ravel()):
                if not m:
                    w.writerow([_fmt(L), _fmt(T), lab.value, conf])


def _nearest(L: float, T: float, L0: float | None) -> BasinLabel:
    d = {BasinLabel.DIAGONAL: abs(T - L) / math.sqrt(2.0), BasinLabel.EXIT: min(L, 1.0 - L)}
    if L0 is not None and 0.0 <= L0 <= 1.0:
        d[BasinLabel.POINT] = math.hypot(1.0 - T, L - L0)
    return min(d, key=d.get)


def _label(kind: TerminalKind, L: float, T: float, L0) -> tuple[BasinLabel, str]:
    if kind is TerminalKind.CONVERGED_TO_DIAGONAL:
        return BasinLabel.DIAGONAL, "high"
    if kind is TerminalKind.CONVERGED_TO_POINT:
        return BasinLabel.POINT, "high"
    if kind is TerminalKind.EXITED_LEVERAGE_DOMAIN:
        return BasinLabel.EXIT, "high"
    if kind is TerminalKind.SINGULAR_APPROACH and 1.0 - L <= 1.0 - T:
        # leverage ran into 1
        return BasinLabel.EXIT, "high"
    # trust ran into 1 away from (1, L0), or horizon: closest attractor
    return _nearest(L, T, L0), "low"


def basin_map(p: Params, grid: GridSpec = GridSpec(), cfg: IntegratorConfig | None = None) -> BasinMap:
    """Label every node by the attractor its trajectory reaches.

    Nodes within ``margin`` of ``T = 1`` or ``L = 1`` are masked. Nodes on
    the axis are labelled without integration. Each remaining node is
    integrated independently (vectorised, with its own step size), so the
    result does not depend on evaluation order.
    """
    cfg = cfg or IntegratorConfig()
    L, T = grid.mesh()
    mask = (T >= 1.0 - grid.margin) | (L >= 1.0 - grid.margin)
    label = np.full(L.shape, None, dtype=object)
    conf = np.full(L.shape, None, dtype=object)
    term = np.full(L.shape, None, dtype=object)

    on_axis = (T == L) & ~mask
    label[on_axis] = BasinLabel.DIAGONAL
    conf[on_axis] = "high"

    todo = ~mask & ~on_axis
    try:
        L0 = p.L0
    except Exception:
        L0 = None
    if np.any(todo):
        res = integrate_terminals(L[todo], T[todo], p, cfg)
        kinds = res.kinds()
        flat = np.flatnonzero(todo.ravel())
        for n, idx in enumerate(flat):
            lab, c = _label(kinds[n], float(res.L[n]), float(res.T[n]), L0)
            label.flat[idx] = lab
            conf.flat[idx] = c
            term.flat[idx] = kinds[n]
    return BasinMap(L, T, label, conf, term, mask)


def trajectory_bundle(p: Params, seeds, cfg: IntegratorConfig | None = None) -> list[TrajectoryRecord]:
    """One trajectory per seed, in seed order."""
    return [integrate(s if isinstance(s, EconState) else EconState(*s), p, cfg) for s in seeds]
