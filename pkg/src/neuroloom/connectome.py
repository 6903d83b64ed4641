"""Structural connectomes: TVB zip I/O, sparse coupling layout, lesions.

Orientation convention: ``weights[i, j]`` is the strength of the edge
FROM source region ``j`` INTO target region ``i`` (rows are targets).
"""
import io
import logging
import math
import os
import zipfile
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConnectomeError

log = logging.getLogger(__name__)

WEIGHTS = "weights.txt"
TRACTS = "tract_lengths.txt"
CENTRES = "centres.txt"
CORTICAL = "cortical.txt"
HEMISPHERE = "hemisphere.txt"
ORIENTATIONS = "average_orientations.txt"
AREAS = "areas.txt"
KNOWN_FILES = (WEIGHTS, TRACTS, CENTRES, CORTICAL, HEMISPHERE, ORIENTATIONS, AREAS)

# fixed timestamp keeps archives byte-reproducible
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Connectome:
    """Region-level structural connectivity with per-region metadata."""

    weights: np.ndarray
    tract_lengths: np.ndarray
    labels: tuple
    centres: np.ndarray = None
    cortical: np.ndarray = None
    hemisphere: np.ndarray = None
    orientations: np.ndarray = None
    areas: np.ndarray = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "weights", _frozen(self.weights))
        set_(self, "tract_lengths", _frozen(self.tract_lengths))
        set_(self, "labels", tuple(str(s) for s in self.labels))
        if self.centres is not None:
            set_(self, "centres", _frozen(self.centres))
        if self.cortical is not None:
            set_(self, "cortical", _frozen(self.cortical, bool))
        if self.hemisphere is not None:
            set_(self, "hemisphere", _frozen(self.hemisphere, bool))
        if self.orientations is not None:
            set_(self, "orientations", _frozen(self.orientations))
        if self.areas is not None:
            set_(self, "areas", _frozen(self.areas))
        self.validate()

    @property
    def n_regions(self):
        return self.weights.shape[0]

    @property
    def n_edges(self):
        return int(np.count_nonzero(self.weights))

    def validate(self):
        n = self.weights.shape[0]
        for name, m in (("weights", self.weights), ("tract_lengths", self.tract_lengths)):
            if m.ndim != 2 or m.shape != (n, n):
                raise ConnectomeError(f"{name} must be a square {n}x{n} matrix, got {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ConnectomeError(f"{name} contains non-finite entries")
            if np.any(m < 0):
                raise ConnectomeError(f"{name} contains negative entries")
        if len(self.labels) != n:
            raise ConnectomeError(f"expected {n} labels, got {len(self.labels)}")
        if any(not s for s in self.labels):
            raise ConnectomeError("region labels must be non-empty")
        if len(set(self.labels)) != n:
            raise ConnectomeError("region labels must be unique")
        shapes = {"centres": (n, 3), "cortical": (n,), "hemisphere": (n,),
                  "orientations": (n, 3), "areas": (n,)}
        for name, shape in shapes.items():
            a = getattr(self, name)
            if a is not None and a.shape != shape:
                raise ConnectomeError(f"{name} must have shape {shape}, got {a.shape}")
        if self.orientations is not None:
            norms = np.linalg.norm(self.orientations, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ConnectomeError("orientation vectors must have unit norm")
        if self.areas is not None and np.any(~np.isfinite(self.areas) | (self.areas < 0)):
            raise ConnectomeError("areas must be finite and non-negative")
        if self.centres is not None and not np.all(np.isfinite(self.centres)):
            raise ConnectomeError("centres must be finite")

    def equals(self, other):
        """Field-by-field equality (exact)."""
        if self.labels != other.labels:
            return False
        for name in ("weights", "tract_lengths", "centres", "cortical",
                     "hemisphere", "orientations", "areas"):
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True


def default_labels(n):
    return tuple(f"r{i}" for i in range(n))


# -- zip format -------------------------------------------------------------

def _parse_rows(text, fname, width=None):
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks:
            continue
        row = []
        for tok in toks:
            try:
                v = float(tok)
            except ValueError:
                raise ConnectomeError(
                    f"{fname} line {lineno}: malformed numeric token {tok!r}") from None
            row.append(v)
        if width is not None and len(row) != width:
            raise ConnectomeError(
                f"{fname} line {lineno}: expected {width} values, got {len(row)}")
        rows.append((lineno, row))
    return rows


def _parse_matrix(text, fname, n=None):
    rows = _parse_rows(text, fname)
    if n is None:
        n = len(rows)
    if len(rows) != n:
        raise ConnectomeError(f"{fname}: expected {n} rows, got {len(rows)}")
    for lineno, row in rows:
        if len(row) != n:
            raise ConnectomeError(
                f"{fname} line {lineno}: matrix is not square ({len(row)} columns, {n} rows)")
        for v in row:
            if math.isnan(v) or math.isinf(v):
                raise ConnectomeError(f"{fname} line {lineno}: non-finite entry")
            if v < 0:
                raise ConnectomeError(f"{fname} line {lineno}: negative entry {v!r}")
    return np.array([r for _, r in rows], dtype=np.float64).reshape(n, n)


def _parse_vector(text, fname, n, width, kind=float):
    rows = _parse_rows(text, fname, width)
    if len(rows) != n:
        raise ConnectomeError(f"{fname}: expected {n} rows, got {len(rows)}")
    out = np.array([r for _, r in rows], dtype=np.float64)
    if kind is bool:
        bad = [ln for ln, r in rows if r[0] not in (0.0, 1.0)]
        if bad:
            raise ConnectomeError(f"{fname} line {bad[0]}: expected 0 or 1")
        return out[:, 0].astype(bool)
    return out if width > 1 else out[:, 0]


def _parse_centres(text, n):
    labels, xyz = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 4:
            raise ConnectomeError(f"{CENTRES} line {lineno}: expected 'label x y z'")
        try:
            xyz.append([float(t) for t in toks[1:]])
        except ValueError:
            raise ConnectomeError(f"{CENTRES} line {lineno}: malformed numeric token") from None
        labels.append(toks[0])
    if len(labels) != n:
        raise ConnectomeError(f"{CENTRES}: expected {n} rows, got {len(labels)}")
    return labels, np.array(xyz, dtype=np.float64)


def load_connectome(zip_path):
    """Load a TVB-style connectome zip archive.

    Files may sit at the archive root or inside one folder; they are matched
    by basename. Unknown files are ignored with a warning.
    """
    zip_path = os.fspath(zip_path)
    if not os.path.exists(zip_path):
        raise FileNotFoundError(f"connectome archive not found: {zip_path}")
    try:
        zf = zipfile.ZipFile(zip_path)
    except zipfile.BadZipFile as exc:
        raise ConnectomeError(f"{zip_path}: not a zip archive ({exc})") from None
    with zf:
        members = {}
        for info in zf.infolist():
            if info.is_dir():
                continue
            base = os.path.basename(info.filename)
            if base in KNOWN_FILES:
                members[base] = zf.read(info).decode("ascii")
            else:
                log.warning("ignoring unknown file %r in %s", info.filename, zip_path)
    for required in (WEIGHTS, TRACTS):
        if required not in members:
            raise ConnectomeError(f"{zip_path}: missing mandatory file {required}")

    weights = _parse_matrix(members[WEIGHTS], WEIGHTS)
    n = weights.shape[0]
    tracts = _parse_matrix(members[TRACTS], TRACTS, n)
    labels, centres = default_labels(n), None
    if CENTRES in members:
        labels, centres = _parse_centres(members[CENTRES], n)
    opt = {}
    if CORTICAL in members:
        opt["cortical"] = _parse_vector(members[CORTICAL], CORTICAL, n, 1, bool)
    if HEMISPHERE in members:
        opt["hemisphere"] = _parse_vector(members[HEMISPHERE], HEMISPHERE, n, 1, bool)
    if ORIENTATIONS in members:
        opt["orientations"] = _parse_vector(members[ORIENTATIONS], ORIENTATIONS, n, 3)
    if AREAS in members:
        opt["areas"] = _parse_vector(members[AREAS], AREAS, n, 1)
    return Connectome(weights=weights, tract_lengths=tracts, labels=labels,
                      centres=centres, **opt)


def _fmt(v):
    return format(float(v), ".17g")


def _matrix_text(m):
    return "".join(" ".join(_fmt(v) for v in row) + "\n" for row in m)


def connectome_files(c):
    """Ordered ``(filename, text)`` pairs of the archive payload."""
    files = [(WEIGHTS, _matrix_text(c.weights)), (TRACTS, _matrix_text(c.tract_lengths))]
    if c.centres is not None:
        files.append((CENTRES, "".join(
            f"{lab} {_fmt(x)} {_fmt(y)} {_fmt(z)}\n"
            for lab, (x, y, z) in zip(c.labels, c.centres))))
    if c.cortical is not None:
        files.append((CORTICAL, "".join(f"{int(b)}\n" for b in c.cortical)))
    if c.hemisphere is not None:
        files.append((HEMISPHERE, "".join(f"{int(b)}\n" for b in c.hemisphere)))
    if c.orientations is not None:
        files.append((ORIENTATIONS, _matrix_text(c.orientations)))
    if c.areas is not None:
        files.append((AREAS, "".join(_fmt(v) + "\n" for v in c.areas)))
    return files


def save_connectome(c, zip_path):
    """Write ``c`` as a TVB-style zip archive (deterministic bytes).

    Labels are only persisted through ``centres.txt``; a connectome without
    centres reloads with default labels ``r0..r{n-1}``.
    """
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name, text in connectome_files(c):
            info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, text.encode("ascii"))
    with open(zip_path, "wb") as fh:
        fh.write(buf.getvalue())


# -- sparse coupling ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SparseCoupling:
    """Per-target CSR edge list with integer delays.

    Edges of target ``i`` occupy ``row_ptr[i]:row_ptr[i+1]``, ordered by
    ascending source index; that order fixes the accumulation order.
    """

    n_regions: int
    row_ptr: np.ndarray
    src_idx: np.ndarray
    weight: np.ndarray
    delay_steps: np.ndarray
    horizon: int

    @property
    def n_edges(self):
        return int(self.row_ptr[-1])

    def targets(self):
        """Target index of every edge (expanded from ``row_ptr``)."""
        return np.repeat(np.arange(self.n_regions, dtype=np.int64), np.diff(self.row_ptr))

    def to_dense(self):
        """Dense ``(weights, delay_steps)`` with -1 delay where no edge exists."""
        w = np.zeros((self.n_regions, self.n_regions))
        d = np.full((self.n_regions, self.n_regions), -1, dtype=np.int64)
        t = self.targets()
        w[t, self.src_idx] = self.weight
        d[t, self.src_idx] = self.delay_steps
        return w, d

    def min_delay(self, sources=None, targets=None):
        """Smallest delay over edges from ``sources`` or into ``targets``."""
        mask = np.zeros(self.n_edges, dtype=bool)
        if sources is not None:
            mask |= np.isin(self.src_idx, list(sources))
        if targets is not None:
            mask |= np.isin(self.targets(), list(targets))
        if not mask.any():
            return None
        return int(self.delay_steps[mask].min())


def delay_steps_for(tract_lengths, conduction_speed, dt):
    """Round-half-up conversion of tract lengths (mm) to integer steps."""
    return np.floor(np.asarray(tract_lengths, dtype=np.float64) / (conduction_speed * dt)
                    + 0.5).astype(np.int64)


def build_sparse(c, conduction_speed, dt, weight_threshold=0.0):
    """Keep edges with ``weight > weight_threshold`` and convert lengths to delays."""
    if not conduction_speed > 0:
        raise ConnectomeError(f"conduction speed must be positive, got {conduction_speed}")
    if not dt > 0:
        raise ConnectomeError(f"dt must be positive, got {dt}")
    if weight_threshold < 0:
        raise ConnectomeError("weight threshold must be non-negative")
    tgt, src = np.nonzero(c.weights > weight_threshold)  # row-major: sorted by target, then source
    n = c.n_regions
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(tgt, minlength=n), out=row_ptr[1:])
    delays = delay_steps_for(c.tract_lengths[tgt, src], conduction_speed, dt)
    horizon = int(delays.max()) + 1 if delays.size else 1
    return SparseCoupling(
        n_regions=n,
        row_ptr=_frozen(row_ptr, np.int64),
        src_idx=_frozen(src, np.int64),
        weight=_frozen(c.weights[tgt, src]),
        delay_steps=_frozen(delays, np.int64),
        horizon=horizon,
    )


# -- lesions and rewiring ----------------------------------------------------

def _check_region(c, region):
    if not 0 <= region < c.n_regions:
        raise ConnectomeError(f"region {region} out of range [0, {c.n_regions})")


def round_half_up(x):
    return int(math.floor(x + 0.5))


def in_strength(c, region):
    return float(c.weights[region].sum())


def lesion_incoming(c, region, fraction, seed):
    """Zero ``round(fraction * m)`` of the ``m`` nonzero incoming edges of ``region``.

    The removed subset is drawn uniformly without replacement from a
    generator seeded with ``seed``.
    """
    _check_region(c, region)
    if not 0.0 <= fraction <= 1.0:
        raise ConnectomeError(f"lesion fraction must lie in [0, 1], got {fraction}")
    sources = np.flatnonzero(c.weights[region] > 0)
    k = round_half_up(fraction * sources.size)
    w = c.weights.copy()
    if k:
        rng = np.random.default_rng(seed)
        w[region, rng.choice(sources, size=k, replace=False)] = 0.0
    return replace(c, weights=w)


def rewire_scale(c, region, factor=None, restore_strength=None):
    """Scale the surviving incoming weights of ``region``.

    Exactly one mode is used: ``factor`` multiplies every surviving weight;
    ``restore_strength`` (the pre-lesion in-strength) rescales them so that
    their sum matches it again. With no surviving edge the latter is a no-op.
    """
    _check_region(c, region)
    if (factor is None) == (restore_strength is None):
        raise ConnectomeError("give exactly one of factor or restore_strength")
    w = c.weights.copy()
    if factor is not None:
        if not factor > 0:
            raise ConnectomeError(f"rewire factor must be positive, got {factor}")
        w[region] *= factor
    else:
        current = w[region].sum()
        if current > 0:
            w[region] *= restore_strength / current
    return replace(c, weights=w)


# -- statistics ----------------------------------------------------------------

@dataclass(frozen=True)
class ConnectomeStats:
    n_regions: int
    n_edges: int
    in_degree: np.ndarray
    out_degree: np.ndarray
    in_strength: np.ndarray
    out_strength: np.ndarray
    weight_min: float
    weight_mean: float
    weight_max: float
    length_min: float
    length_mean: float
    length_max: float
    extra: dict = field(default_factory=dict)

    def format(self, labels=None):
        lines = [
            f"regions: {self.n_regions}",
            f"edges: {self.n_edges}",
            f"weight min/mean/max: {_fmt(self.weight_min)} {_fmt(self.weight_mean)} {_fmt(self.weight_max)}",
            f"length min/mean/max: {_fmt(self.length_min)} {_fmt(self.length_mean)} {_fmt(self.length_max)}",
            "region in_degree out_degree in_strength out_strength",
        ]
        labels = labels or default_labels(self.n_regions)
        for i, lab in enumerate(labels):
            lines.append(f"{lab} {self.in_degree[i]} {self.out_degree[i]} "
                         f"{_fmt(self.in_strength[i])} {_fmt(self.out_strength[i])}")
        return "\n".join(lines)


def connectome_stats(c):
    """Degree/strength summary; edges are the nonzero weights."""
    w = c.weights
    mask = w > 0
    ew, el = w[mask], c.tract_lengths[mask]

    def mmm(a):
        if a.size == 0:
            return math.nan, math.nan, math.nan
        return float(a.min()), float(a.mean()), float(a.max())

    wmin, wmean, wmax = mmm(ew)
    lmin, lmean, lmax = mmm(el)
    return ConnectomeStats(
        n_regions=c.n_regions,
        n_edges=int(mask.sum()),
        in_degree=mask.sum(axis=1),
        out_degree=mask.sum(axis=0),
        in_strength=w.sum(axis=1),
        out_strength=w.sum(axis=0),
        weight_min=wmin, weight_mean=wmean, weight_max=wmax,
        length_min=lmin, length_mean=lmean, length_max=lmax,
    )


def random_connectome(n, density=0.5, seed=0, max_weight=1.0, max_length=100.0,
                      self_loops=False, symmetric=False, with_centres=True):
    """Synthetic connectome for fixtures, demos and benchmarks."""
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.0, max_weight, size=(n, n)) * (rng.random((n, n)) < density)
    lengths = rng.uniform(1.0, max_length, size=(n, n))
    if symmetric:
        w = np.triu(w) + np.triu(w, 1).T
        lengths = np.triu(lengths) + np.triu(lengths, 1).T
    if not self_loops:
        np.fill_diagonal(w, 0.0)
    np.fill_diagonal(lengths, 0.0)
    labels = default_labels(n)
    centres = rng.uniform(-50.0, 50.0, size=(n, 3)) if with_centres else None
    return Connectome(weights=w, tract_lengths=lengths, labels=labels, centres=centres)
