"""Per-species densities on a uniform periodic grid, plus CSV dump/load."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

NORMALIZATION_TOL = 1e-8


@dataclass(frozen=True)
class DensityField:
    """Cell-centred densities ``values[s, c_1, ..., c_d]`` for species ``s+1``.

    Cell ``c`` covers ``[c/M, (c+1)/M)`` per coordinate, centred at ``(c+0.5)/M``.
    """

    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim < 2:
            raise ValueError("values must have shape (n_species, M, ..., M)")
        if len(set(v.shape[1:])) != 1:
            raise ValueError(f"grid must be square, got {v.shape[1:]}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "time", float(self.time))

    @property
    def n_species(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.ndim - 1

    @property
    def cellvol(self) -> float:
        return float(self.M) ** (-self.d)

    def masses(self) -> np.ndarray:
        """Integral of each species density."""
        return self.values.reshape(self.n_species, -1).sum(axis=1) * self.cellvol

    def total_mass(self) -> float:
        return float(self.values.sum()) * self.cellvol

    def with_values(self, values, time=None) -> "DensityField":
        return DensityField(values, self.time if time is None else time)

    def cell_centers(self) -> np.ndarray:
        """Centre coordinates, shape ``(M,)*d + (d,)``."""
        c = (np.arange(self.M) + 0.5) / self.M
        mesh = np.meshgrid(*([c] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def check_normalized(self, tol: float = NORMALIZATION_TOL):
        if np.any(self.values < 0):
            raise ValueError("density has negative values")
        mass = self.total_mass()
        if abs(mass - 1.0) > tol:
            raise ValueError(f"density total mass {mass!r} is not 1 within {tol}")


def coarsen(field: DensityField, bins: int) -> DensityField:
    """Average cells onto a coarser grid whose size divides ``M``."""
    M, d = field.M, field.d
    if M % bins:
        raise ValueError(f"grid size {M} is not a multiple of {bins}")
    f = M // bins
    shape = [field.n_species]
    for _ in range(d):
        shape += [bins, f]
    v = field.values.reshape(shape)
    return field.with_values(v.mean(axis=tuple(range(2, 2 + 2 * d, 2))))


def analytic_profile(kind: str, masses, M: int, d: int = 1, amplitude: float = 0.5) -> DensityField:
    """Smooth initial data with the given per-species masses.

    ``uniform`` is constant per species. ``cosine`` is
    ``mass * (1 + a * prod_dims cos(2 pi (x - shift_s)))`` with a species-dependent
    phase shift ``(s-1)/n``; it is positive for ``|a| < 1``.
    """
    masses = np.asarray(masses, dtype=float)
    if np.any(masses < 0):
        raise ValueError("masses must be nonnegative")
    n = len(masses)
    c = (np.arange(M) + 0.5) / M
    vals = np.empty((n,) + (M,) * d)
    for s in range(n):
        if kind == "uniform":
            shape = np.ones((M,) * d)
        elif kind == "cosine":
            if not abs(amplitude) < 1:
                raise ValueError("cosine amplitude must satisfy |a| < 1")
            prof = np.cos(2 * np.pi * (c - s / n))
            mode = prof
            for _ in range(d - 1):
                mode = np.multiply.outer(mode, prof)
            shape = 1.0 + amplitude * mode
            shape = shape / shape.mean()
        else:
            raise ValueError(f"unknown profile {kind!r}")
        vals[s] = masses[s] * shape
    return DensityField(vals)


def write_fields(fields, fh) -> None:
    """Dump one or more fields sharing a grid as ``time,species,cell_index,density``."""
    fields = list(fields)
    if not fields:
        raise ValueError("nothing to write")
    M, d = fields[0].M, fields[0].d
    fh.write(f"# M={M} d={d}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["time", "species", "cell_index", "density"])
    for f in fields:
        if (f.M, f.d) != (M, d):
            raise ValueError("all dumped fields must share a grid")
        flat = f.values.reshape(f.n_species, -1)
        for s in range(f.n_species):
            for c, val in enumerate(flat[s]):
                w.writerow([repr(f.time), s + 1, c, repr(float(val))])


def fields_to_csv(fields) -> str:
    buf = io.StringIO()
    write_fields(fields, buf)
    return buf.getvalue()


def read_fields(fh) -> list[DensityField]:
    """Inverse of :func:`write_fields`; returns fields in time order."""
    first = fh.readline().strip()
    meta = {}
    if first.startswith("#"):
        for tok in first[1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k.strip()] = int(v)
    if "M" not in meta or "d" not in meta:
        raise ValueError("field file must start with '# M=<int> d=<int>'")
    M, d = meta["M"], meta["d"]
    reader = csv.DictReader(fh)
    if reader.fieldnames != ["time", "species", "cell_index", "density"]:
        raise ValueError(f"unexpected field header {reader.fieldnames}")
    data: dict[float, dict[int, np.ndarray]] = {}
    for row in reader:
        t = float(row["time"])
        s = int(row["species"])
        c = int(row["cell_index"])
        if not 0 <= c < M**d or s < 1:
            raise ValueError(f"index out of range in row {row}")
        per = data.setdefault(t, {})
        if s not in per:
            per[s] = np.full(M**d, np.nan)
        per[s][c] = float(row["density"])
    out = []
    for t in sorted(data):
        per = data[t]
        n = max(per)
        if sorted(per) != list(range(1, n + 1)):
            raise ValueError(f"missing species at time {t}")
        vals = np.stack([per[s] for s in range(1, n + 1)])
        if np.isnan(vals).any():
            raise ValueError(f"missing cells at time {t}")
        out.append(DensityField(vals.reshape((n,) + (M,) * d), t))
    return out


def load_fields(path) -> list[DensityField]:
    with open(path, newline="") as fh:
        return read_fields(fh)


def save_fields(fields, path) -> None:
    with open(path, "w", newline="") as fh:
        write_fields(fields, fh)
