"""
Count traces (timestamp, site_id, count) to per-terminal demand.

Counts at 15-minute resolution are augmented to 1 s by interpolating the
window means, applying seeded log-normal jitter and renormalizing each
window so its total is unchanged.  Every count is one packet of
``packet_size`` bits.
"""

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

NATIVE_RESOLUTION = 900
DEFAULT_PACKET_SIZE = 12000
JITTER_SIGMA = 0.1


class TraceError(ValueError):
    pass


@dataclass
class CountTrace:
    """Counts on a common time grid: ``counts[i, s]`` is the count of site
    ``sites[s]`` in the interval starting at ``timestamps[i]``."""
    timestamps: np.ndarray
    sites: List[str]
    counts: np.ndarray
    resolution: float

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (len(self.timestamps), len(self.sites)):
            raise TraceError("counts shape does not match timestamps x sites")
        if np.any(self.counts < 0):
            raise TraceError("negative count")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise TraceError("non-increasing timestamp")

    def __len__(self):
        return len(self.timestamps)

    @property
    def n_rows(self) -> int:
        return self.counts.size

    def window(self, start: int, stop: int) -> "CountTrace":
        return CountTrace(self.timestamps[start:stop], list(self.sites), self.counts[start:stop],
                          self.resolution)


def parse_trace(text: str) -> CountTrace:
    """Parse ``timestamp,site_id,count`` rows (header optional)."""
    per_site: Dict[str, List[Tuple[int, float]]] = {}
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row) or row[0].lstrip().startswith("#"):
            continue
        if lineno == 1 and row[0].strip().lower() == "timestamp":
            continue
        if len(row) != 3:
            raise TraceError(f"line {lineno}: expected 3 columns, got {len(row)}")
        try:
            ts = int(float(row[0]))
            count = float(row[2])
        except ValueError:
            raise TraceError(f"line {lineno}: malformed row {row!r}") from None
        site = row[1].strip()
        if not site:
            raise TraceError(f"line {lineno}: empty site_id")
        if count < 0 or not np.isfinite(count):
            raise TraceError(f"line {lineno}: negative count {count:g}")
        rows = per_site.setdefault(site, [])
        if rows and ts <= rows[-1][0]:
            raise TraceError(f"line {lineno}: non-increasing timestamp {ts} for site {site}")
        rows.append((ts, count))
    if not per_site:
        raise TraceError("trace has no rows")
    sites = sorted(per_site)
    grid = [t for t, _ in per_site[sites[0]]]
    for s in sites[1:]:
        if [t for t, _ in per_site[s]] != grid:
            raise TraceError(f"site {s} does not share the time grid of site {sites[0]}")
    counts = np.array([[c for _, c in per_site[s]] for s in sites]).T
    if len(grid) > 1:
        steps = np.diff(grid)
        resolution = float(steps.min())
        if np.any(steps != resolution):
            raise TraceError("irregular sampling interval")
    else:
        resolution = float(NATIVE_RESOLUTION)
    return CountTrace(np.array(grid), sites, counts, resolution)


def bundled_trace_path() -> Path:
    return Path(str(resources.files("mwiab") / "data" / "synthetic_week.csv"))


def load_trace(path: Union[str, Path]) -> CountTrace:
    """Load a count trace; ``"bundled"`` names the packaged synthetic week."""
    p = bundled_trace_path() if str(path) == "bundled" else Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise TraceError(f"cannot read trace {str(path)!r}: {e.strerror}") from None
    return parse_trace(text)


def dump_trace(trace: CountTrace) -> str:
    out = io.StringIO()
    out.write("timestamp,site_id,count\n")
    for i, ts in enumerate(trace.timestamps):
        for s, site in enumerate(trace.sites):
            c = trace.counts[i, s]
            out.write(f"{ts},{site},{int(c) if float(c).is_integer() else repr(float(c))}\n")
    return out.getvalue()


def augment(trace: CountTrace, seed: Optional[int] = 0, jitter: float = JITTER_SIGMA) -> CountTrace:
    """Resample a 900 s trace to 1 s.

    Window means are linearly interpolated between window centers, multiplied
    by log-normal(0, jitter) noise and rescaled so each window keeps its
    original total.  ``jitter=0`` disables the noise."""
    if trace.resolution != NATIVE_RESOLUTION:
        raise TraceError(f"augment expects {NATIVE_RESOLUTION} s resolution, got {trace.resolution:g}")
    n_win, n_sites = trace.counts.shape
    res = NATIVE_RESOLUTION
    means = trace.counts / res
    centers = np.arange(n_win) * res + res / 2.0
    t = np.arange(n_win * res) + 0.5
    fine = np.empty((n_win * res, n_sites))
    for s in range(n_sites):
        fine[:, s] = np.interp(t, centers, means[:, s])
    if jitter > 0:
        rng = np.random.default_rng(seed)
        fine *= rng.lognormal(0.0, jitter, size=fine.shape)
    win = fine.reshape(n_win, res, n_sites)
    sums = win.sum(axis=1)
    scale = np.divide(trace.counts, sums, out=np.zeros_like(sums), where=sums > 0)
    # windows whose interpolation is all zero but whose count is not: spread evenly
    flat = (sums == 0) & (trace.counts > 0)
    win = win * scale[:, None, :]
    if flat.any():
        w_idx, s_idx = np.nonzero(flat)
        win[w_idx, :, s_idx] = (trace.counts[w_idx, s_idx] / res)[:, None]
    ts = trace.timestamps[0] + np.arange(n_win * res, dtype=np.int64)
    return CountTrace(ts, list(trace.sites), win.reshape(n_win * res, n_sites), 1.0)


@dataclass
class DemandSeries:
    """Per-terminal demand d_v(t) in bit/s at 1 s resolution.

    Stored as per-site rates plus each terminal's (site, share); the aggregate
    D(t) is the row sum of the materialized terminal matrix."""
    terminal_ids: List[str]
    site_index: np.ndarray       # terminal -> column of site_rates
    shares: np.ndarray
    site_rates: np.ndarray       # (T, n_sites) bit/s
    aggregate: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.aggregate is None:
            agg = np.zeros(len(self.site_rates))
            for a, b in _chunks(len(self.site_rates)):
                agg[a:b] = self.block(a, b).sum(axis=1)
            self.aggregate = agg

    def __len__(self):
        return len(self.site_rates)

    def block(self, start: int, stop: int) -> np.ndarray:
        """d_v(t) for ticks [start, stop), shape (stop-start, V)."""
        return self.site_rates[start:stop][:, self.site_index] * self.shares

    def at(self, t: int) -> np.ndarray:
        return self.site_rates[t, self.site_index] * self.shares

    def by_terminal(self, t: int) -> Dict[str, float]:
        return dict(zip(self.terminal_ids, self.at(t).tolist()))

    def slice(self, start: int, stop: int) -> "DemandSeries":
        return DemandSeries(list(self.terminal_ids), self.site_index, self.shares,
                            self.site_rates[start:stop], self.aggregate[start:stop])

    def scaled(self, factor: float) -> "DemandSeries":
        return DemandSeries(list(self.terminal_ids), self.site_index, self.shares,
                            self.site_rates * factor)

    @classmethod
    def constant(cls, terminal_ids: Sequence[str], rates: Sequence[float], ticks: int) -> "DemandSeries":
        n = len(terminal_ids)
        site_rates = np.tile(np.asarray(rates, dtype=float), (ticks, 1))
        return cls(list(terminal_ids), np.arange(n), np.ones(n), site_rates)

    @classmethod
    def from_aggregate(cls, terminal_ids: Sequence[str], shares: Sequence[float],
                       aggregate: Sequence[float]) -> "DemandSeries":
        """All terminals draw fixed shares of one aggregate series."""
        n = len(terminal_ids)
        return cls(list(terminal_ids), np.zeros(n, dtype=int), np.asarray(shares, dtype=float),
                   np.asarray(aggregate, dtype=float)[:, None])

    def export(self, stream, start: int = 0, stop: Optional[int] = None):
        """Write ``tick,terminal_id,bits_per_second`` rows."""
        stop = len(self) if stop is None else stop
        stream.write("tick,terminal_id,bits_per_second\n")
        for a, b in _chunks(stop - start, offset=start):
            blk = self.block(a, b)
            for i in range(b - a):
                for v, tid in enumerate(self.terminal_ids):
                    stream.write(f"{a + i},{tid},{float(blk[i, v])!r}\n")


def _chunks(n: int, size: int = 65536, offset: int = 0):
    for a in range(offset, offset + n, size):
        yield a, min(a + size, offset + n)


def to_demand(trace: CountTrace, packet_size: float,
              site_map: Mapping[str, Tuple[str, float]]) -> DemandSeries:
    """d_v(t) = count(site(v), t) * packet_size * share(v) in bit/s.

    ``site_map`` maps terminal id -> (site id, share weight)."""
    if packet_size <= 0:
        raise TraceError("packet_size must be positive")
    col = {s: i for i, s in enumerate(trace.sites)}
    ids, idx, shares = [], [], []
    for tid, (site, share) in site_map.items():
        if site not in col:
            raise TraceError(f"terminal {tid}: unmapped site {site!r}")
        ids.append(tid)
        idx.append(col[site])
        shares.append(share)
    rates = trace.counts * (packet_size / trace.resolution)
    return DemandSeries(ids, np.array(idx, dtype=int), np.array(shares, dtype=float), rates)


def site_map_from_scenario(scenario) -> Dict[str, Tuple[str, float]]:
    return {t.id: (t.site_id, t.share) for t in scenario.cpes}


def synthetic_week(sites: Sequence[str], peak_counts: Sequence[float], seed: int = 2024,
                   days: int = 7, start: int = 1_700_000_000) -> CountTrace:
    """Diurnal 15-minute counts with a weekday/weekend modulation.

    Each site follows 0.55 - 0.45 cos(2 pi (h - 3) / 24) (trough at 03:00,
    peak at 15:00), scaled by 0.8 on the last two days of the week, times a
    small seeded per-window variation."""
    rng = np.random.default_rng(seed)
    n = days * 96
    hours = (np.arange(n) * 900 + 450) / 3600.0
    base = 0.55 - 0.45 * np.cos(2 * np.pi * (hours - 3.0) / 24.0)
    weekday = np.where((hours // 24) % 7 >= 5, 0.8, 1.0)
    counts = np.empty((n, len(sites)))
    for s, peak in enumerate(peak_counts):
        noise = 1.0 + 0.03 * rng.standard_normal(n)
        counts[:, s] = np.round(peak * base * weekday * np.clip(noise, 0.9, 1.1))
    return CountTrace(start + np.arange(n, dtype=np.int64) * 900, list(sites), counts, 900.0)
