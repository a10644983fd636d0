"""Bimolecular reaction networks: parsing, pretty-printing and species closure.

Species are 1-based indices. Both the input and output pair of every reaction
are stored in ascending order, which fixes the rule of assignment used by the
particle sampler: a firing on the ordered particle pair (i, j) gives particle
i the smaller output type and particle j the larger one.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel

POSITIVE_MASS_TOL = 1e-12


class CRNSyntaxError(ValueError):
    """Malformed network text. ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Reaction:
    input: tuple[int, int]
    output: tuple[int, int]
    kernel_name: str

    def __post_init__(self):
        k, l = self.input
        kp, lp = self.output
        if k > l or kp > lp:
            raise ValueError(f"reaction pairs must be ascending, got {self.input} -> {self.output}")

    @property
    def input_set(self) -> frozenset:
        return frozenset(self.input)

    @property
    def output_set(self) -> frozenset:
        return frozenset(self.output)

    @property
    def is_self(self) -> bool:
        """True when both reactants share a type."""
        return self.input[0] == self.input[1]


@dataclass(frozen=True)
class ReactionNetwork:
    n_species: int
    reactions: tuple[Reaction, ...]
    kernel_table: dict = field(default_factory=dict)
    species_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_species < 1:
            raise ValueError("network needs at least one species")
        object.__setattr__(self, "reactions", tuple(self.reactions))
        if not self.species_names:
            object.__setattr__(
                self, "species_names", tuple(f"S{i}" for i in range(1, self.n_species + 1))
            )
        if len(self.species_names) != self.n_species:
            raise ValueError("species_names length does not match n_species")
        seen = set()
        for r in self.reactions:
            for s in r.input + r.output:
                if not 1 <= s <= self.n_species:
                    raise ValueError(f"species index {s} outside 1..{self.n_species}")
            if r.kernel_name not in self.kernel_table:
                raise ValueError(f"reaction references unknown kernel {r.kernel_name!r}")
            if r in seen:
                raise ValueError(f"duplicate reaction {r}")
            seen.add(r)

    def __hash__(self):
        return hash((self.n_species, self.reactions, tuple(sorted(self.kernel_table.items())),
                     self.species_names))

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    def kernel(self, reaction: Reaction) -> Kernel:
        return self.kernel_table[reaction.kernel_name]

    def kernels(self) -> list[Kernel]:
        """Kernel of each reaction, in reaction order."""
        return [self.kernel_table[r.kernel_name] for r in self.reactions]


_KERNEL_RE = re.compile(r"^kernel\s+([A-Za-z_]\w*)\s*=\s*([A-Za-z_]\w*)\s*\((.*)\)\s*$")
_SPECIES_RE = re.compile(r"^species\s*:(.*)$")
_NAME_RE = re.compile(r"^[A-Za-z_]\w*$")
_TERM_RE = re.compile(r"^(?:(\d+)\s*)?([A-Za-z_]\w*)$")

_KERNEL_PARAMS = {
    "tophat": {"radius", "rate"},
    "constant": {"rate"},
    "gaussian": {"width", "rate"},
}


def _col(raw: str, token: str) -> int:
    pos = raw.find(token)
    return pos + 1 if pos >= 0 else 1


def _parse_kernel(body: str, shape: str, lineno: int, raw: str) -> Kernel:
    if shape not in _KERNEL_PARAMS:
        raise CRNSyntaxError(f"unknown kernel shape {shape!r}", lineno, _col(raw, shape))
    params = {}
    for item in filter(None, (s.strip() for s in body.split(","))):
        if "=" not in item:
            raise CRNSyntaxError(f"expected key=value, got {item!r}", lineno, _col(raw, item))
        key, val = (s.strip() for s in item.split("=", 1))
        if key not in _KERNEL_PARAMS[shape]:
            raise CRNSyntaxError(f"{shape} takes no parameter {key!r}", lineno, _col(raw, key))
        try:
            params[key] = float(val)
        except ValueError:
            raise CRNSyntaxError(f"bad number {val!r}", lineno, _col(raw, val)) from None
    missing = _KERNEL_PARAMS[shape] - params.keys()
    if missing:
        raise CRNSyntaxError(f"{shape} missing {sorted(missing)}", lineno, _col(raw, shape))
    try:
        return Kernel(shape, **params)
    except ValueError as exc:
        raise CRNSyntaxError(str(exc), lineno, _col(raw, shape)) from None


def _parse_side(side: str, lineno: int, raw: str) -> list[str]:
    names = []
    for term in (t.strip() for t in side.split("+")):
        m = _TERM_RE.match(term)
        if not m:
            raise CRNSyntaxError(f"bad species term {term!r}", lineno, _col(raw, term) if term else 1)
        names.extend([m.group(2)] * int(m.group(1) or 1))
    return names


def parse_network(text: str) -> ReactionNetwork:
    """Parse network source text into a validated :class:`ReactionNetwork`."""
    declared: list[str] | None = None
    kernels: dict[str, Kernel] = {}
    pending = []  # (lineno, raw, inputs, outputs, kernel_name)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SPECIES_RE.match(line)
        if m:
            if declared is not None:
                raise CRNSyntaxError("species declared twice", lineno)
            names = [s.strip() for s in m.group(1).split(",") if s.strip()]
            for nm in names:
                if not _NAME_RE.match(nm):
                    raise CRNSyntaxError(f"bad species name {nm!r}", lineno, _col(raw, nm))
            if len(set(names)) != len(names) or not names:
                raise CRNSyntaxError("species list empty or repeated", lineno)
            declared = names
            continue
        if line.startswith("kernel"):
            m = _KERNEL_RE.match(line)
            if not m:
                raise CRNSyntaxError("malformed kernel line", lineno)
            name, shape, body = m.groups()
            if name in kernels:
                raise CRNSyntaxError(f"kernel {name!r} defined twice", lineno, _col(raw, name))
            kernels[name] = _parse_kernel(body, shape, lineno, raw)
            continue
        if "->" not in line:
            raise CRNSyntaxError("expected a species, kernel or reaction line", lineno)
        lhs, rest = line.split("->", 1)
        if "@" not in rest:
            raise CRNSyntaxError("reaction needs '@ <kernel>'", lineno, len(raw.rstrip()) + 1)
        rhs, kname = rest.rsplit("@", 1)
        kname = kname.strip()
        if not _NAME_RE.match(kname):
            raise CRNSyntaxError(f"bad kernel reference {kname!r}", lineno, _col(raw, "@") + 1)
        ins = _parse_side(lhs, lineno, raw)
        outs = _parse_side(rhs, lineno, raw)
        if len(ins) != 2 or len(outs) != 2:
            raise CRNSyntaxError(
                f"non-bimolecular reaction ({len(ins)} inputs, {len(outs)} outputs)", lineno
            )
        pending.append((lineno, raw, ins, outs, kname))

    index: dict[str, int] = {}
    if declared is not None:
        index = {nm: i + 1 for i, nm in enumerate(declared)}
    reactions = []
    seen = set()
    for lineno, raw, ins, outs, kname in pending:
        ids = []
        for nm in ins + outs:
            if nm not in index:
                if declared is not None:
                    raise CRNSyntaxError(
                        f"species index overflow: {nm!r} not in declared species", lineno, _col(raw, nm)
                    )
                index[nm] = len(index) + 1
            ids.append(index[nm])
        if kname not in kernels:
            raise CRNSyntaxError(f"unknown kernel {kname!r}", lineno, _col(raw, "@") + 1)
        r = Reaction(tuple(sorted(ids[:2])), tuple(sorted(ids[2:])), kname)
        if r in seen:
            raise CRNSyntaxError("duplicate reaction", lineno)
        seen.add(r)
        reactions.append(r)
    if not index:
        raise CRNSyntaxError("network declares no species", 1)
    names = tuple(sorted(index, key=index.get))
    return ReactionNetwork(len(names), tuple(reactions), dict(kernels), names)


def format_network(net: ReactionNetwork) -> str:
    """Canonical source text; ``parse_network(format_network(n)) == n``."""
    lines = ["species: " + ", ".join(net.species_names)]
    for name in sorted(net.kernel_table):
        lines.append(f"kernel {name} = {net.kernel_table[name].describe()}")
    nm = net.species_names
    for r in net.reactions:
        k, l = r.input
        kp, lp = r.output
        lines.append(f"{nm[k - 1]} + {nm[l - 1]} -> {nm[kp - 1]} + {nm[lp - 1]} @ {r.kernel_name}")
    return "\n".join(lines) + "\n"


def closure(net: ReactionNetwork, v0) -> frozenset:
    """Smallest superset of ``v0`` closed under firing every enabled reaction."""
    current = frozenset(int(s) for s in v0)
    bad = [s for s in current if not 1 <= s <= net.n_species]
    if bad:
        raise ValueError(f"species {bad} outside 1..{net.n_species}")
    for _ in range(net.n_species + 1):
        grown = set(current)
        for r in net.reactions:
            if r.input_set <= current:
                grown.update(r.output)
        grown = frozenset(grown)
        if grown == current:
            return current
        current = grown
    return current


def positive_species(masses, tol: float = POSITIVE_MASS_TOL) -> frozenset:
    """1-based indices whose total mass exceeds ``tol``."""
    return frozenset(int(i) + 1 for i in np.flatnonzero(np.asarray(masses) > tol))


def is_propagating(net: ReactionNetwork, rho0) -> bool:
    """Whether the closure of the initially massed species is the full species set.

    ``rho0`` is a :class:`~chaoskit.field.DensityField` or a per-species mass vector.
    """
    masses = rho0.masses() if hasattr(rho0, "masses") else np.asarray(rho0, dtype=float)
    if len(masses) != net.n_species:
        raise ValueError(f"density has {len(masses)} species, network has {net.n_species}")
    return closure(net, positive_species(masses)) == frozenset(range(1, net.n_species + 1))
