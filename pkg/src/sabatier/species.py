"""Per-species physical constants and fit coefficients for CO2, H2, CH4, H2O.

The species table is loaded from a line-oriented text file with one
``[species <name>]`` block per species (see ``data/species.dat``).  After
loading, the table is immutable and safe to share across threads.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

# Fixed species order used throughout the package.
SPECIES_NAMES = ("CO2", "H2", "CH4", "H2O")
CO2, H2, CH4, H2O = 0, 1, 2, 3

# Sabatier stoichiometry: CO2 + 4 H2 <=> CH4 + 2 H2O.
NU_FORWARD = np.array([1.0, 4.0, 0.0, 0.0])
NU_BACKWARD = np.array([0.0, 0.0, 1.0, 2.0])
NU = NU_BACKWARD - NU_FORWARD  # net coefficients, sum(NU) = -2

# Temperature envelope [K] that every fit of every species must cover.
T_ENVELOPE = (250.0, 900.0)


class SpeciesDataError(ValueError):
    """Raised for a missing species, malformed block, or inconsistent fit ranges."""


@dataclass(frozen=True)
class FitRange:
    """One temperature range of a polynomial fit."""

    t_low: float
    t_high: float
    coeffs: tuple[float, ...]


@dataclass(frozen=True)
class SpeciesRecord:
    """Constants and fit coefficients for a single species."""

    name: str
    molar_mass: float  # kg/mol
    nasa_ranges: tuple[FitRange, ...]  # 9 coefficients (a1..a7, b1, b2)
    visc_ranges: tuple[FitRange, ...]  # 4 coefficients (A, B, C, D), SI output
    cond_ranges: tuple[FitRange, ...]  # 4 coefficients (A, B, C, D), SI output
    lj_sigma: float  # collision diameter, m
    lj_eps_kb: float  # well depth / k_B, K
    source: str = ""


class PropertyPack(NamedTuple):
    """Stacked coefficient arrays for vectorized property evaluation.

    Per-species fit ranges are padded to a common count with unreachable
    sentinel intervals; range selection picks exactly one interval for any
    temperature inside the validated envelope.  A NamedTuple so jax treats it
    as a pytree and jitted kernels can take it as an argument.
    """

    molar_mass: np.ndarray  # (4,)
    nasa_lo: np.ndarray  # (4, Rn)
    nasa_hi: np.ndarray
    nasa_last: np.ndarray  # (4, Rn) bool, marks the last real range
    nasa_coeffs: np.ndarray  # (4, Rn, 9)
    visc_lo: np.ndarray
    visc_hi: np.ndarray
    visc_last: np.ndarray
    visc_coeffs: np.ndarray  # (4, Rv, 4)
    cond_lo: np.ndarray
    cond_hi: np.ndarray
    cond_last: np.ndarray
    cond_coeffs: np.ndarray  # (4, Rc, 4)
    lj_sigma: np.ndarray  # (4,)
    lj_eps_kb: np.ndarray  # (4,)
    t_min: float  # clamp bounds for property evaluation
    t_max: float
    sigma_pair: np.ndarray  # (4, 4), m
    eps_pair: np.ndarray  # (4, 4), K
    reduced_mass: np.ndarray  # (4, 4), kg


@dataclass(frozen=True)
class SpeciesTable:
    """The four Sabatier species in fixed order (CO2, H2, CH4, H2O)."""

    records: tuple[SpeciesRecord, ...]

    def __post_init__(self):
        names = tuple(r.name for r in self.records)
        if names != SPECIES_NAMES:
            raise SpeciesDataError(f"species order must be {SPECIES_NAMES}, got {names}")

    def __getitem__(self, k: int) -> SpeciesRecord:
        return self.records[k]

    def molar_mass(self, k: int) -> float:
        """Molar mass of species ``k`` in kg/mol."""
        return self.records[k].molar_mass

    @property
    def molar_masses(self) -> np.ndarray:
        return np.array([r.molar_mass for r in self.records])

    def pack(self) -> PropertyPack:
        """Build (and cache) the stacked coefficient arrays."""
        cached = getattr(self, "_pack_cache", None)
        if cached is None:
            cached = _build_pack(self)
            object.__setattr__(self, "_pack_cache", cached)
        return cached


def default_species_path() -> Path:
    """Path of the species data file shipped with the package."""
    return Path(importlib.resources.files("sabatier") / "data" / "species.dat")


def load_species_table(path=None) -> SpeciesTable:
    """Load and validate the species table.

    Raises SpeciesDataError with a distinct diagnostic for a missing species,
    a malformed coefficient block, or a gap/overlap in fit temperature ranges.
    """
    path = Path(path) if path is not None else default_species_path()
    if not path.exists():
        raise SpeciesDataError(f"species file not found: {path}")
    blocks = _parse_blocks(path)

    records = []
    for name in SPECIES_NAMES:
        if name not in blocks:
            raise SpeciesDataError(f"species {name} absent from {path}")
        records.append(_record_from_block(name, blocks[name]))
    table = SpeciesTable(records=tuple(records))
    _validate(table)
    return table


def _parse_blocks(path: Path) -> dict:
    blocks: dict[str, list[tuple[str, str]]] = {}
    current = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            head = line[1:-1].split()
            if len(head) != 2 or head[0] != "species":
                raise SpeciesDataError(f"{path}:{lineno}: malformed section header {line!r}")
            current = head[1]
            blocks[current] = []
        elif "=" in line:
            if current is None:
                raise SpeciesDataError(f"{path}:{lineno}: key outside of a species block")
            key, value = (s.strip() for s in line.split("=", 1))
            blocks[current].append((key, value))
        else:
            raise SpeciesDataError(f"{path}:{lineno}: unparseable line {line!r}")
    return blocks


def _floats(name: str, key: str, value: str, n: int) -> list[float]:
    parts = value.split()
    if len(parts) != n:
        raise SpeciesDataError(f"species {name}: {key} expects {n} numbers, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise SpeciesDataError(f"species {name}: malformed {key} entry: {exc}") from exc


def _record_from_block(name: str, items: list) -> SpeciesRecord:
    scalars = {}
    ranges = {"nasa_range": [], "visc_range": [], "cond_range": []}
    n_coeff = {"nasa_range": 9, "visc_range": 4, "cond_range": 4}
    source = ""
    for key, value in items:
        if key in ranges:
            vals = _floats(name, key, value, 2 + n_coeff[key])
            ranges[key].append(FitRange(vals[0], vals[1], tuple(vals[2:])))
        elif key in ("molar_mass", "lj_sigma", "lj_eps_kb"):
            scalars[key] = _floats(name, key, value, 1)[0]
        elif key == "source":
            source = value
        else:
            raise SpeciesDataError(f"species {name}: unknown key {key!r}")
    for key in ("molar_mass", "lj_sigma", "lj_eps_kb"):
        if key not in scalars:
            raise SpeciesDataError(f"species {name}: missing {key}")
    for key, lst in ranges.items():
        if not lst:
            raise SpeciesDataError(f"species {name}: missing {key} block")
    return SpeciesRecord(
        name=name,
        molar_mass=scalars["molar_mass"],
        nasa_ranges=tuple(ranges["nasa_range"]),
        visc_ranges=tuple(ranges["visc_range"]),
        cond_ranges=tuple(ranges["cond_range"]),
        lj_sigma=scalars["lj_sigma"],
        lj_eps_kb=scalars["lj_eps_kb"],
        source=source,
    )


def _check_ranges(name: str, kind: str, ranges: tuple[FitRange, ...]):
    for r in ranges:
        if not r.t_low < r.t_high:
            raise SpeciesDataError(f"species {name}: {kind} range [{r.t_low}, {r.t_high}] not ascending")
    for a, b in zip(ranges, ranges[1:]):
        if b.t_low > a.t_high + 1e-9:
            raise SpeciesDataError(f"species {name}: {kind} range gap {a.t_high:g}-{b.t_low:g} K")
        if b.t_low < a.t_high - 1e-9:
            raise SpeciesDataError(f"species {name}: {kind} ranges overlap at {b.t_low:g} K")
    lo, hi = T_ENVELOPE
    if ranges[0].t_low > lo or ranges[-1].t_high < hi:
        raise SpeciesDataError(
            f"species {name}: {kind} ranges cover [{ranges[0].t_low:g}, {ranges[-1].t_high:g}] K, "
            f"need [{lo:g}, {hi:g}] K"
        )


def _validate(table: SpeciesTable):
    for rec in table.records:
        if rec.molar_mass <= 0.0:
            raise SpeciesDataError(f"species {rec.name}: molar_mass must be positive")
        if rec.lj_sigma <= 0.0 or rec.lj_eps_kb <= 0.0:
            raise SpeciesDataError(f"species {rec.name}: Lennard-Jones parameters must be positive")
        _check_ranges(rec.name, "nasa", rec.nasa_ranges)
        _check_ranges(rec.name, "visc", rec.visc_ranges)
        _check_ranges(rec.name, "cond", rec.cond_ranges)
    # Balanced stoichiometry: the reaction must conserve mass exactly.
    if abs(float(NU @ table.molar_masses)) > 1e-9:
        raise SpeciesDataError("molar masses are not consistent with the reaction stoichiometry")


def _stack_ranges(ranges_per_species, n_coeff):
    n_max = max(len(r) for r in ranges_per_species)
    lo = np.full((4, n_max), np.inf)
    hi = np.full((4, n_max), np.inf)
    last = np.zeros((4, n_max), dtype=bool)
    coeffs = np.zeros((4, n_max, n_coeff))
    for k, ranges in enumerate(ranges_per_species):
        for j, r in enumerate(ranges):
            lo[k, j] = r.t_low
            hi[k, j] = r.t_high
            coeffs[k, j] = r.coeffs
        last[k, len(ranges) - 1] = True
    return lo, hi, last, coeffs


def _build_pack(table: SpeciesTable) -> PropertyPack:
    from sabatier.constants import N_AVOGADRO

    nasa = _stack_ranges([r.nasa_ranges for r in table.records], 9)
    visc = _stack_ranges([r.visc_ranges for r in table.records], 4)
    cond = _stack_ranges([r.cond_ranges for r in table.records], 4)
    t_min = max(
        max(r.nasa_ranges[0].t_low, r.visc_ranges[0].t_low, r.cond_ranges[0].t_low) for r in table.records
    )
    t_max = min(
        min(r.nasa_ranges[-1].t_high, r.visc_ranges[-1].t_high, r.cond_ranges[-1].t_high)
        for r in table.records
    )
    sigma = np.array([r.lj_sigma for r in table.records])
    eps = np.array([r.lj_eps_kb for r in table.records])
    m = table.molar_masses / N_AVOGADRO  # molecular masses, kg
    return PropertyPack(
        molar_mass=table.molar_masses,
        nasa_lo=nasa[0],
        nasa_hi=nasa[1],
        nasa_last=nasa[2],
        nasa_coeffs=nasa[3],
        visc_lo=visc[0],
        visc_hi=visc[1],
        visc_last=visc[2],
        visc_coeffs=visc[3],
        cond_lo=cond[0],
        cond_hi=cond[1],
        cond_last=cond[2],
        cond_coeffs=cond[3],
        lj_sigma=sigma,
        lj_eps_kb=eps,
        t_min=t_min,
        t_max=t_max,
        sigma_pair=0.5 * (sigma[:, None] + sigma[None, :]),
        eps_pair=np.sqrt(eps[:, None] * eps[None, :]),
        reduced_mass=m[:, None] * m[None, :] / (m[:, None] + m[None, :]),
    )
