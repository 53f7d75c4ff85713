"""Censored and left-truncated survival samples, risk paths and step functions.

The at-risk process is left-continuous: a subject with entry time ``v`` and
exit time ``t`` is at risk on ``(v, t]``.  Every integral against ``Y(s)`` is
computed exactly by summing over the gaps between consecutive entry/exit
times, on which ``Y`` is constant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "DataFormatError",
    "NoEventsError",
    "Subject",
    "SurvivalSample",
    "RiskPath",
    "StepCurve",
    "DiscreteTable",
    "build_risk_path",
    "nelson_aalen",
    "step_integral",
    "quartic_kernel",
    "kernel_smooth_hazard",
    "group_to_discrete",
    "read_sample_csv",
    "write_sample_csv",
    "read_discrete_csv",
    "write_discrete_csv",
]


class DataFormatError(ValueError):
    """Malformed input data; ``line`` is the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NoEventsError(ValueError):
    """Raised when a sample has no observed events."""

    def __init__(self, message: str = "no events"):
        super().__init__(message)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Subject:
    exit_time: float
    status: int
    entry_time: float = 0.0
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        if self.status not in (0, 1):
            raise ValueError(f"status must be 0 or 1, got {self.status!r}")
        if not (0.0 <= self.entry_time < self.exit_time):
            raise ValueError(
                f"need 0 <= entry_time < exit_time, got entry={self.entry_time}, "
                f"exit={self.exit_time}"
            )


@dataclass(frozen=True, eq=False)
class SurvivalSample:
    """Right-censored, possibly left-truncated survival data.

    Use :meth:`from_arrays` or :meth:`from_subjects` to construct; both
    validate the data.  Subjects still under observation at ``tau`` are
    administratively censored there.

    Attributes
    ----------
    time, status, entry : ndarray of shape (n,)
        Exit times, event indicators (1 = event) and entry times.
    covariates : ndarray of shape (n, p_z)
        Fixed covariates; ``p_z`` may be 0.
    tau : float
        End of the observation window.
    """

    time: np.ndarray
    status: np.ndarray
    entry: np.ndarray
    covariates: np.ndarray
    tau: float

    @classmethod
    def from_arrays(cls, time, status, entry=None, covariates=None, tau=None):
        time = np.asarray(time, dtype=float).ravel()
        n = time.size
        if n < 1:
            raise ValueError("a sample needs at least one subject")
        status = np.asarray(status, dtype=float).ravel()
        if status.size != n:
            raise ValueError("time and status lengths differ")
        if not np.all((status == 0) | (status == 1)):
            raise ValueError("status values must be 0 or 1")
        entry = np.zeros(n) if entry is None else np.asarray(entry, dtype=float).ravel()
        if entry.size != n:
            raise ValueError("time and entry lengths differ")
        if covariates is None:
            covariates = np.zeros((n, 0))
        else:
            covariates = np.asarray(covariates, dtype=float)
            if covariates.ndim == 1:
                covariates = covariates[:, None]
            if covariates.shape[0] != n:
                raise ValueError("covariate rows must match the number of subjects")
        if not (np.all(np.isfinite(time)) and np.all(np.isfinite(entry))):
            raise ValueError("times must be finite")
        if np.any(entry < 0):
            raise ValueError("entry times must be nonnegative")
        if np.any(time <= entry):
            raise ValueError("exit times must exceed entry times")
        if tau is None:
            tau = float(time.max())
        tau = float(tau)
        if not tau > 0:
            raise ValueError("tau must be positive")
        if np.any(entry >= tau):
            raise ValueError("entry times must lie before tau")
        late = time > tau
        if np.any(late):
            time = np.where(late, tau, time)
            status = np.where(late, 0.0, status)
        return cls(_frozen(time), _frozen(status), _frozen(entry), _frozen(covariates), tau)

    @classmethod
    def from_subjects(cls, subjects: Iterable[Subject], tau=None):
        subjects = list(subjects)
        if not subjects:
            raise ValueError("a sample needs at least one subject")
        dims = {len(s.covariates) for s in subjects}
        if len(dims) != 1:
            raise ValueError("all subjects must share the covariate dimension")
        p = dims.pop()
        cov = np.array([s.covariates for s in subjects], dtype=float).reshape(len(subjects), p)
        return cls.from_arrays(
            [s.exit_time for s in subjects],
            [s.status for s in subjects],
            [s.entry_time for s in subjects],
            cov,
            tau,
        )

    @property
    def n(self) -> int:
        return self.time.size

    @property
    def p_z(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.status.sum())

    @property
    def truncated(self) -> bool:
        return bool(np.any(self.entry > 0))

    @property
    def subjects(self) -> list[Subject]:
        return [
            Subject(float(t), int(d), float(v), tuple(float(x) for x in z))
            for t, d, v, z in zip(self.time, self.status, self.entry, self.covariates)
        ]

    def without_covariates(self) -> "SurvivalSample":
        return SurvivalSample.from_arrays(self.time, self.status, self.entry, None, self.tau)


@dataclass(frozen=True, eq=False)
class RiskPath:
    """Event grid and piecewise-constant at-risk counts of a sample.

    ``event_times`` holds the distinct event times ``u_i`` with
    ``at_risk[i] = Y(u_i)`` and ``events[i] = dN(u_i)``.  ``edges`` are the
    sorted distinct entry/exit times (starting at 0); ``gap_risk[k]`` is the
    constant value of ``Y`` on ``(edges[k], edges[k+1]]``.  Beyond the last
    edge ``Y`` is 0.
    """

    event_times: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    edges: np.ndarray
    gap_risk: np.ndarray
    n: int

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    def risk_at(self, t) -> np.ndarray:
        """Left-continuous ``Y(t)``."""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.edges, t, side="left") - 1
        inside = (k >= 0) & (k < self.gap_risk.size)
        return np.where(inside, self.gap_risk[np.clip(k, 0, self.gap_risk.size - 1)], 0.0)

    def events_upto(self, t) -> np.ndarray:
        """``N(t)``, the number of events in ``[0, t]``."""
        cum = np.concatenate([[0.0], np.cumsum(self.events)])
        return cum[np.searchsorted(self.event_times, np.asarray(t, dtype=float), side="right")]


def build_risk_path(sample: SurvivalSample) -> RiskPath:
    if sample.n_events == 0:
        raise NoEventsError()
    edges = np.unique(np.concatenate([[0.0], sample.entry, sample.time]))
    start = np.searchsorted(edges, sample.entry)
    stop = np.searchsorted(edges, sample.time)
    diff = np.zeros(edges.size)
    np.add.at(diff, start, 1.0)
    np.add.at(diff, stop, -1.0)
    gap_risk = np.cumsum(diff)[:-1]

    ev = sample.status == 1
    event_times, events = np.unique(sample.time[ev], return_counts=True)
    at_risk = gap_risk[np.searchsorted(edges, event_times) - 1]
    return RiskPath(
        _frozen(event_times),
        _frozen(at_risk),
        _frozen(events),
        _frozen(edges),
        _frozen(gap_risk),
        sample.n,
    )


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Right-continuous step function, zero before the first knot."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.knots.shape != self.values.shape:
            raise ValueError("knots and values must have equal length")
        if np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="right") - 1
        out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)] if self.values.size else 0.0, 0.0)
        return out if out.ndim else float(out)

    @property
    def jumps(self) -> np.ndarray:
        return np.diff(self.values, prepend=0.0)


def nelson_aalen(path: RiskPath) -> tuple[StepCurve, StepCurve]:
    """Nelson-Aalen estimate and its variance accumulator.

    Returns ``(H, V)`` with ``H(t) = sum dN/Y`` and ``V(t) = sum dN/Y**2``
    over event times ``u <= t``.
    """
    inc = path.events / path.at_risk
    H = StepCurve(path.event_times, _frozen(np.cumsum(inc)))
    V = StepCurve(path.event_times, _frozen(np.cumsum(path.events / path.at_risk**2)))
    return H, V


def step_integral(
    path: RiskPath,
    antiderivative: Callable[[np.ndarray, np.ndarray], np.ndarray],
    t,
    start: float = 0.0,
):
    """Integrate ``g(s, Y(s))`` from ``start`` to ``t`` gap by gap.

    Parameters
    ----------
    antiderivative : callable
        ``F(s, Y)``, an antiderivative in ``s`` of ``g(s, Y)`` for fixed
        ``Y``.  Called with equal-length arrays; may return extra trailing
        dimensions (vector or matrix integrands).
    t : float or array_like
        Upper limits, each ``>= start``.

    The result is exact whenever ``F`` is.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0) or start < 0:
        raise ValueError("integration limits must be nonnegative")
    if np.any(t_arr < start):
        raise ValueError("upper limit lies below the lower limit")
    edges, Y = path.edges, path.gap_risk
    K = Y.size
    right = np.asarray(antiderivative(edges[1:], Y))
    left = np.asarray(antiderivative(edges[:-1], Y))
    cum = np.concatenate([np.zeros((1,) + right.shape[1:]), np.cumsum(right - left, axis=0)])

    def at(x):
        k = np.searchsorted(edges, x, side="left") - 1
        kk = np.clip(k, 0, K)
        y = np.where(k < K, Y[np.clip(kk, 0, K - 1)], 0.0)
        lo = edges[kk]
        part = np.asarray(antiderivative(x, y)) - np.asarray(antiderivative(lo, y))
        val = cum[kk] + part
        mask = (k < 0).reshape((-1,) + (1,) * (val.ndim - 1))
        return np.where(mask, 0.0, val)

    out = at(t_arr)
    if start > 0:
        out = out - at(np.array([start]))
    if np.ndim(t) == 0:
        return out[0] if out.ndim > 1 else float(out[0])
    return out


def quartic_kernel(z):
    """Biweight kernel ``(15/8)(1 - 4 z**2)**2`` on ``[-1/2, 1/2]``."""
    z = np.asarray(z, dtype=float)
    return np.where(np.abs(z) <= 0.5, 15.0 / 8.0 * (1.0 - 8.0 * z**2 + 16.0 * z**4), 0.0)


def kernel_smooth_hazard(H: StepCurve, bandwidth: float, grid) -> np.ndarray:
    """Kernel-smoothed hazard from the jumps of a cumulative hazard.

    Each jump at ``u`` is mirrored at ``-u``, so the estimate has zero slope
    at time 0.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(grid < 0):
        raise ValueError("grid times must be nonnegative")
    u, dH = H.knots, H.jumps
    z_plus = (grid[:, None] - u[None, :]) / bandwidth
    z_minus = (grid[:, None] + u[None, :]) / bandwidth
    w = quartic_kernel(z_plus) + quartic_kernel(z_minus)
    return (w @ dH) / bandwidth


@dataclass(frozen=True, eq=False)
class DiscreteTable:
    """Grouped life table over contiguous intervals ``(left, right]``."""

    left: np.ndarray
    right: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray
    n: int

    @classmethod
    def from_arrays(cls, left, right, at_risk, events, n=None):
        left = np.asarray(left, dtype=float).ravel()
        right = np.asarray(right, dtype=float).ravel()
        Y = np.asarray(at_risk, dtype=float).ravel()
        dN = np.asarray(events, dtype=float).ravel()
        if not (left.size == right.size == Y.size == dN.size) or left.size == 0:
            raise ValueError("table columns must be nonempty and of equal length")
        if np.any(right <= left):
            raise ValueError("intervals need left < right")
        if np.any(np.diff(left) <= 0) or np.any(left[1:] < right[:-1]):
            raise ValueError("intervals must be increasing and non-overlapping")
        if np.any(dN < 0) or np.any(dN > Y):
            raise ValueError("need 0 <= events <= at_risk")
        if np.any(Y != np.round(Y)) or np.any(dN != np.round(dN)):
            raise ValueError("counts must be integers")
        n = int(Y.max()) if n is None else int(n)
        if n < Y.max():
            raise ValueError("n must be at least the largest at-risk count")
        return cls(_frozen(left), _frozen(right), _frozen(Y), _frozen(dN), n)

    @property
    def k(self) -> int:
        return self.left.size

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.left + self.right)


def group_to_discrete(sample: SurvivalSample, cut_points: Sequence[float]) -> DiscreteTable:
    """Group a sample into intervals ``(c_i, c_{i+1}]``.

    A subject counts as at risk in every interval it is observed in at some
    point (``entry < c_{i+1}`` and ``exit > c_i``); its event is counted in
    the interval containing its exit time.
    """
    c = np.asarray(cut_points, dtype=float)
    if c.ndim != 1 or c.size < 2 or np.any(np.diff(c) <= 0):
        raise ValueError("cut points must be strictly increasing, at least two")
    ev = sample.status == 1
    if np.any(sample.time[ev] > c[-1]):
        raise ValueError("event time beyond the last cut point")
    if np.any(sample.time[ev] <= c[0]):
        raise ValueError("event time at or before the first cut point")
    left, right = c[:-1], c[1:]
    Y = ((sample.entry[:, None] < right[None, :]) & (sample.time[:, None] > left[None, :])).sum(0)
    idx = np.searchsorted(c, sample.time[ev], side="left") - 1
    dN = np.bincount(idx, minlength=left.size)[: left.size]
    return DiscreteTable.from_arrays(left, right, Y, dN, n=sample.n)


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(f"column {column!r}: cannot parse {text!r} as a number", line) from None
    if not math.isfinite(value):
        raise DataFormatError(f"column {column!r}: value must be finite", line)
    return value


def read_sample_csv(path, tau=None) -> SurvivalSample:
    """Read ``time,status[,entry][,z1,...,zp]`` with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError("empty file", 1)
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["time", "status"]:
        raise DataFormatError("header must start with 'time,status'", 1)
    has_entry = len(header) > 2 and header[2] == "entry"
    zcols = header[3:] if has_entry else header[2:]
    for j, name in enumerate(zcols, start=1):
        if name != f"z{j}":
            raise DataFormatError(f"unexpected column {name!r}; expected 'z{j}'", 1)
    time, status, entry, cov = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, got {len(row)}", lineno)
        t = _parse_float(row[0], lineno, "time")
        d = _parse_float(row[1], lineno, "status")
        if d not in (0.0, 1.0):
            raise DataFormatError("status must be 0 or 1", lineno)
        v = _parse_float(row[2], lineno, "entry") if has_entry else 0.0
        if v < 0 or t <= v:
            raise DataFormatError("need 0 <= entry < time", lineno)
        z = [_parse_float(x, lineno, name) for x, name in zip(row[len(header) - len(zcols):], zcols)]
        time.append(t)
        status.append(d)
        entry.append(v)
        cov.append(z)
    if not time:
        raise DataFormatError("no data rows", 2)
    return SurvivalSample.from_arrays(time, status, entry, np.array(cov).reshape(len(time), len(zcols)), tau)


def write_sample_csv(sample: SurvivalSample, path) -> None:
    header = ["time", "status"]
    with_entry = sample.truncated
    if with_entry:
        header.append("entry")
    header += [f"z{j + 1}" for j in range(sample.p_z)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(sample.n):
            row = [repr(float(sample.time[i])), str(int(sample.status[i]))]
            if with_entry:
                row.append(repr(float(sample.entry[i])))
            row += [repr(float(x)) for x in sample.covariates[i]]
            w.writerow(row)


def read_discrete_csv(path, n=None) -> DiscreteTable:
    """Read ``left,right,at_risk,events`` with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["left", "right", "at_risk", "events"]:
        raise DataFormatError("header must be 'left,right,at_risk,events'", 1)
    cols = [[], [], [], []]
    names = ("left", "right", "at_risk", "events")
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise DataFormatError(f"expected 4 fields, got {len(row)}", lineno)
        for col, text, name in zip(cols, row, names):
            col.append(_parse_float(text, lineno, name))
    if not cols[0]:
        raise DataFormatError("no data rows", 2)
    try:
        return DiscreteTable.from_arrays(*cols, n=n)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None


def write_discrete_csv(table: DiscreteTable, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["left", "right", "at_risk", "events"])
        for row in zip(table.left, table.right, table.at_risk, table.events):
            w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), int(row[3])])
