"""Monitors and analyses: raw/temporal-average sampling, BOLD, EEG, FC, seizure zones."""
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal, stats

from .errors import ConfigError, NeuroloomError


@dataclass
class TimeSeries:
    """Monitor output. ``data`` is ``[n_channels][n_samples]``; sample j is at
    ``t0 + j * dt_out`` (ms)."""

    t0: float
    dt_out: float
    labels: list
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] != len(self.labels):
            raise NeuroloomError(f"data shape {self.data.shape} does not match "
                                 f"{len(self.labels)} labels")

    @property
    def n_channels(self):
        return self.data.shape[0]

    @property
    def n_samples(self):
        return self.data.shape[1]

    def times(self):
        return self.t0 + self.dt_out * np.arange(self.n_samples)


# -- monitors ----------------------------------------------------------------------

class Monitor:
    """Base monitor; the engine calls ``start`` once and ``record`` after every commit
    with the step count and the committed exposures ``[n_exposures][n_regions]``."""

    kind = "monitor"

    def __init__(self, exposure=0, name=None):
        self.exposure = exposure
        self.name = name or self.kind
        self._j = None

    def start(self, model, n_regions, dt, labels):
        if isinstance(self.exposure, str):
            if self.exposure not in model.exposure_names:
                raise ConfigError(f"model {model.name} has no exposure {self.exposure!r}; "
                                  f"choose from {', '.join(model.exposure_names)}")
            self._j = model.exposure_names.index(self.exposure)
        else:
            if not 0 <= self.exposure < model.n_exposures:
                raise ConfigError(f"exposure index {self.exposure} out of range")
            self._j = int(self.exposure)
        self.exposure_name = model.exposure_names[self._j]
        self.dt = dt
        self.labels = list(labels)
        self.n = n_regions
        self._samples = []

    def _stack(self):
        if self._samples:
            return np.stack(self._samples, axis=1)
        return np.zeros((self.n, 0))


class RawMonitor(Monitor):
    """Every ``decimation``-th committed sample (first at step ``decimation``)."""

    kind = "raw"

    def __init__(self, decimation=1, exposure=0, name=None):
        if int(decimation) < 1:
            raise ConfigError("raw monitor decimation must be >= 1")
        super().__init__(exposure, name)
        self.decimation = int(decimation)

    def record(self, step, exposures):
        if step % self.decimation == 0:
            self._samples.append(exposures[self._j].copy())

    def series(self):
        k = self.decimation
        return TimeSeries(k * self.dt, k * self.dt, self.labels, self._stack(),
                          {"monitor": self.kind, "exposure": self.exposure_name})


class TavgMonitor(Monitor):
    """Mean of each non-overlapping window of ``window`` samples, stamped at
    the window's last step; a trailing partial window is dropped."""

    kind = "tavg"

    def __init__(self, window=1, exposure=0, name=None):
        if int(window) < 1:
            raise ConfigError("tavg monitor window must be >= 1")
        super().__init__(exposure, name)
        self.window = int(window)

    def start(self, model, n_regions, dt, labels):
        super().start(model, n_regions, dt, labels)
        self._buf = np.zeros((self.window, n_regions))
        self._fill = 0

    def record(self, step, exposures):
        self._buf[self._fill] = exposures[self._j]
        self._fill += 1
        if self._fill == self.window:
            self._samples.append(window_mean(self._buf))
            self._fill = 0

    def series(self):
        k = self.window
        return TimeSeries(k * self.dt, k * self.dt, self.labels, self._stack(),
                          {"monitor": self.kind, "exposure": self.exposure_name})


def window_mean(block):
    """Mean over axis 0 accumulated row by row (fixed summation order)."""
    acc = np.zeros(block.shape[1:])
    for row in block:
        acc = acc + row
    return acc / block.shape[0]


def tavg(ts, window):
    """Temporal average of an existing series (same arithmetic as the monitor)."""
    if int(window) < 1:
        raise ConfigError("window must be >= 1")
    n_out = ts.n_samples // window
    data = np.empty((ts.n_channels, n_out))
    for j in range(n_out):
        data[:, j] = window_mean(ts.data[:, j * window:(j + 1) * window].T)
    return TimeSeries(ts.t0 + (window - 1) * ts.dt_out, ts.dt_out * window, ts.labels, data)


class BoldMonitor(RawMonitor):
    """Raw samples convolved with the canonical HRF and decimated to ``tr``."""

    kind = "bold"

    def __init__(self, tr, decimation=1, exposure=0, name=None, hrf=None):
        super().__init__(decimation, exposure, name)
        self.tr = float(tr)
        self.hrf = hrf or HrfParams()

    def start(self, model, n_regions, dt, labels):
        super().start(model, n_regions, dt, labels)
        check_tr(self.tr, dt * self.decimation)

    def series(self):
        return bold_hrf(super().series(), self.tr, self.hrf)


def make_monitor(kind, **kw):
    kinds = {"raw": RawMonitor, "tavg": TavgMonitor, "bold": BoldMonitor}
    if kind not in kinds:
        raise ConfigError(f"unknown monitor {kind!r}; use one of {', '.join(kinds)}")
    return kinds[kind](**kw)


# -- BOLD ----------------------------------------------------------------------------

@dataclass(frozen=True)
class HrfParams:
    """Double-gamma HRF (times in seconds)."""

    peak: float = 6.0
    undershoot: float = 16.0
    dispersion: float = 1.0
    undershoot_dispersion: float = 1.0
    ratio: float = 1.0 / 6.0
    length: float = 32.0


def hrf_kernel(dt_ms, hrf=None):
    """Sampled HRF weights ``h[j] = hrf(j*dt) * dt`` over the kernel length."""
    hrf = hrf or HrfParams()
    dt_s = dt_ms * 1e-3
    n = int(round(hrf.length / dt_s))
    t = np.arange(n) * dt_s
    g1 = stats.gamma.pdf(t, hrf.peak / hrf.dispersion, scale=hrf.dispersion)
    g2 = stats.gamma.pdf(t, hrf.undershoot / hrf.undershoot_dispersion,
                         scale=hrf.undershoot_dispersion)
    return (g1 - hrf.ratio * g2) * dt_s


def check_tr(tr, dt_out):
    ratio = tr / dt_out
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9 * max(1.0, ratio):
        raise ConfigError(f"TR {tr} ms must be a positive multiple of the sample step {dt_out} ms")
    return r


def bold_hrf(ts, tr, hrf=None):
    """Convolve every channel with the HRF, drop the first ``len(kernel) - 1``
    (warm-up) samples, and keep the last sample of each TR block."""
    r = check_tr(tr, ts.dt_out)
    h = hrf_kernel(ts.dt_out, hrf)
    K = len(h)
    N = ts.n_samples
    idx = np.arange(r - 1, N, r)  # last sample of every complete TR block
    idx = idx[idx >= K - 1]
    if len(idx) == 0 or N == 0:
        data = np.zeros((ts.n_channels, 0))
        t0 = ts.t0 + (K - 1) * ts.dt_out
    else:
        full = signal.fftconvolve(ts.data, h[None, :], mode="full", axes=1)[:, :N]
        data = full[:, idx]
        t0 = ts.t0 + idx[0] * ts.dt_out
    return TimeSeries(t0, float(tr), ts.labels, np.ascontiguousarray(data), {"monitor": "bold"})


# -- EEG -----------------------------------------------------------------------------

@dataclass
class LeadField:
    """Gain ``[n_sensors][n_sources]``; vertex granularity needs ``mapping``
    (per-vertex region index)."""

    gain: np.ndarray
    labels: list
    granularity: str = "region"
    mapping: np.ndarray = None

    def __post_init__(self):
        self.gain = np.asarray(self.gain, dtype=np.float64)
        if self.gain.ndim != 2 or not np.all(np.isfinite(self.gain)):
            raise NeuroloomError("lead field must be a finite 2-D matrix")
        if len(self.labels) != self.gain.shape[0]:
            raise NeuroloomError("one label per sensor row is required")
        if self.granularity not in ("region", "vertex"):
            raise NeuroloomError(f"unknown granularity {self.granularity!r}")
        if self.granularity == "vertex":
            if self.mapping is None:
                raise NeuroloomError("vertex lead field requires a region mapping")
            self.mapping = np.asarray(self.mapping, dtype=np.int64)
            if self.mapping.shape != (self.gain.shape[1],) or np.any(self.mapping < 0):
                raise NeuroloomError("region mapping must give one region index per vertex")

    def region_gain(self, n_regions):
        if self.granularity == "region":
            if self.gain.shape[1] != n_regions:
                raise NeuroloomError(f"lead field has {self.gain.shape[1]} sources, "
                                     f"time series has {n_regions} regions")
            return self.gain
        if self.mapping.max(initial=-1) >= n_regions:
            raise NeuroloomError("region mapping refers to a region beyond the time series")
        counts = np.bincount(self.mapping, minlength=n_regions)
        if np.any(counts == 0):
            missing = np.flatnonzero(counts == 0)
            raise NeuroloomError(f"regions without vertices in mapping: {missing.tolist()}")
        out = np.zeros((self.gain.shape[0], n_regions))
        np.add.at(out.T, self.mapping, self.gain.T)
        return out / counts[None, :]


def load_leadfield(path, region_mapping=None):
    """Read ``# sensors=S sources=N granularity=G`` + S rows of N reals.

    An optional ``# labels a b c`` line names the sensors. ``region_mapping``
    defaults to ``region_mapping.txt`` next to the file for vertex fields.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise NeuroloomError(f"{path}: line 1: missing '# sensors=... sources=... granularity=...' header")
    head = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
    try:
        S, N, gran = int(head["sensors"]), int(head["sources"]), head.get("granularity", "region")
    except (KeyError, ValueError):
        raise NeuroloomError(f"{path}: line 1: malformed header") from None
    labels = [f"s{i}" for i in range(S)]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("# labels"):
            labels = line.split()[2:]
            continue
        if not line.strip() or line.startswith("#"):
            continue
        try:
            rows.append([float(x) for x in line.split()])
        except ValueError:
            raise NeuroloomError(f"{path}: line {lineno}: malformed number") from None
        if len(rows[-1]) != N:
            raise NeuroloomError(f"{path}: line {lineno}: expected {N} values, got {len(rows[-1])}")
    if len(rows) != S:
        raise NeuroloomError(f"{path}: expected {S} sensor rows, got {len(rows)}")
    mapping = None
    if gran == "vertex":
        mp = Path(region_mapping) if region_mapping else path.with_name("region_mapping.txt")
        if not mp.exists():
            raise NeuroloomError(f"{mp}: region mapping not found")
        mapping = np.loadtxt(mp, dtype=np.int64, ndmin=1)
    return LeadField(np.array(rows).reshape(S, N), labels, gran, mapping)


def save_leadfield(lf, path):
    path = Path(path)
    S, N = lf.gain.shape
    with open(path, "w") as fh:
        fh.write(f"# sensors={S} sources={N} granularity={lf.granularity}\n")
        fh.write("# labels " + " ".join(lf.labels) + "\n")
        for row in lf.gain:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    if lf.granularity == "vertex":
        np.savetxt(path.with_name("region_mapping.txt"), lf.mapping, fmt="%d")


def eeg_project(ts, lf):
    gain = lf.region_gain(ts.n_channels)
    return TimeSeries(ts.t0, ts.dt_out, list(lf.labels), gain @ ts.data, {"monitor": "eeg"})


# -- functional connectivity -------------------------------------------------------------

def fc(ts, discard=0, return_flags=False):
    """Pearson correlation matrix of the channels after dropping ``discard`` samples.

    Constant channels get a zero row/column (diagonal included) and a warning;
    ``return_flags=True`` also returns their indices.
    """
    data = ts.data if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=np.float64)
    x = data[:, int(discard):]
    if x.shape[1] < 3:
        raise NeuroloomError(f"fc needs at least 3 retained samples, got {x.shape[1]}")
    flat = np.all(x == x[:, :1], axis=1)
    if np.all(flat):
        raise NeuroloomError("fc needs at least one channel with nonzero variance")
    xc = x - x.mean(axis=1, keepdims=True)
    norm = np.sqrt(np.einsum("ij,ij->i", xc, xc))
    z = np.zeros_like(xc)
    good = ~flat
    z[good] = xc[good] / norm[good, None]
    c = z @ z.T
    c = np.clip((c + c.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(c, np.where(good, 1.0, 0.0))
    flags = np.flatnonzero(flat).tolist()
    if flags:
        warnings.warn(f"zero-variance channels {flags}: FC rows set to 0", RuntimeWarning,
                      stacklevel=2)
    return (c, flags) if return_flags else c


def fc_fit(fc_sim, fc_emp):
    """Pearson correlation of the strictly-upper-triangular entries."""
    a = np.asarray(fc_sim, dtype=np.float64)
    b = np.asarray(fc_emp, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NeuroloomError(f"fc_fit needs equal square matrices, got {a.shape} and {b.shape}")
    if a.shape[0] < 3:
        raise NeuroloomError("fc_fit needs n >= 3")
    iu = np.triu_indices(a.shape[0], k=1)
    u, v = a[iu], b[iu]
    if np.all(u == u[0]) or np.all(v == v[0]):
        raise NeuroloomError("fc_fit: zero variance in an upper-triangle vector")
    u = u - u.mean()
    v = v - v.mean()
    r = float(u @ v / np.sqrt((u @ u) * (v @ v)))
    return min(1.0, max(-1.0, r))


# -- seizure zones -------------------------------------------------------------------------

ZONES = ("EZ", "PZ", "HZ")
DEFAULT_SEIZURE_THRESHOLD = 0.0
DEFAULT_SEIZURE_MIN_DURATION = 50.0


def seizing(ts, threshold=DEFAULT_SEIZURE_THRESHOLD, min_duration=DEFAULT_SEIZURE_MIN_DURATION):
    """Per channel: does the signal stay above ``threshold`` for ``min_duration`` ms?"""
    need = max(1, int(np.ceil(min_duration / ts.dt_out - 1e-9)))
    out = np.zeros(ts.n_channels, dtype=bool)
    for i, row in enumerate(ts.data > threshold):
        run = best = 0
        for above in row:
            run = run + 1 if above else 0
            best = max(best, run)
        out[i] = best >= need
    return out


def classify_zones(coupled, isolated, threshold=DEFAULT_SEIZURE_THRESHOLD,
                   min_duration=DEFAULT_SEIZURE_MIN_DURATION, model_name="Epileptor"):
    """EZ: seizes in isolation; PZ: only when coupled; HZ: never.

    ``coupled`` / ``isolated`` are x1 series of the coupled and G=0 runs.
    """
    if model_name != "Epileptor":
        raise ConfigError(f"zone classification needs the Epileptor model, got {model_name}")
    if coupled.n_channels != isolated.n_channels:
        raise NeuroloomError("coupled and isolated runs must have the same regions")
    s_iso = seizing(isolated, threshold, min_duration)
    s_cpl = seizing(coupled, threshold, min_duration)
    return ["EZ" if a else ("PZ" if b else "HZ") for a, b in zip(s_iso, s_cpl)]


def epileptor_zones(model, sc, cfg, params=None, threshold=DEFAULT_SEIZURE_THRESHOLD,
                    min_duration=DEFAULT_SEIZURE_MIN_DURATION, decimation=10):
    """Run coupled and G=0 simulations of ``model`` and classify each region."""
    from dataclasses import replace
    from .engine import run
    if model.name != "Epileptor":
        raise ConfigError(f"zone classification needs the Epileptor model, got {model.name}")
    out = {}
    for key, G in (("coupled", cfg.G), ("isolated", 0.0)):
        res = run(model, sc, replace(cfg, G=G), [RawMonitor(decimation, "x1")], params)
        out[key] = res.series["raw"]
    return classify_zones(out["coupled"], out["isolated"], threshold, min_duration), out
