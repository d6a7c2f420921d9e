"""Network data model, IEEE Common Data Format ingestion and the native JSON case format.

All electrical quantities are stored in per-unit on ``Network.base_mva``.
Cost coefficients stay in their usual MW-based units ($/hr, $/MWhr, $/MW^2hr).
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from typing import Iterable, Mapping, Sequence

DEFAULT_V_MIN = 0.95
DEFAULT_V_MAX = 1.10
# Stand-in for "no limit" so that the JSON case format stays standard JSON.
UNLIMITED_MW = 9999.0


class CaseError(ValueError):
    """Base class for problems with case data."""


class CaseParseError(CaseError):
    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EmptyCaseError(CaseError):
    pass


class ValidationError(CaseError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class BusKind(str, enum.Enum):
    SLACK = "Slack"
    PV = "PV"
    PQ = "PQ"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_load: float = 0.0
    q_load: float = 0.0
    g_shunt: float = 0.0
    b_shunt: float = 0.0
    v_mag: float = 1.0
    v_angle: float = 0.0
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    rating: float = 0.0  # MVA, 0 means unlimited
    is_transformer: bool = False

    @property
    def is_rated(self) -> bool:
        return self.rating > 0.0


@dataclass(frozen=True)
class Generator:
    bus: int
    p_gen: float = 0.0
    q_gen: float = 0.0
    p_min: float = 0.0
    p_max: float = UNLIMITED_MW / 100.0
    q_min: float = -UNLIMITED_MW / 100.0
    q_max: float = UNLIMITED_MW / 100.0
    cost_a: float | None = None
    cost_b: float | None = None
    cost_c: float | None = None

    @property
    def has_cost(self) -> bool:
        return None not in (self.cost_a, self.cost_b, self.cost_c)


@dataclass(frozen=True)
class Network:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...] = field(default_factory=tuple)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))

    @property
    def bus_index(self) -> dict[int, int]:
        """Map from bus id to position in ``buses``."""
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def slack_position(self) -> int:
        for i, b in enumerate(self.buses):
            if b.kind is BusKind.SLACK:
                return i
        raise ValidationError(["network has no slack bus"])

    def total_load_mw(self) -> float:
        return sum(b.p_load for b in self.buses) * self.base_mva

    def summary(self) -> str:
        return f"{len(self.buses)} buses, {len(self.branches)} branches, {len(self.generators)} generators"


# ---------------------------------------------------------------------------
# IEEE Common Data Format
# ---------------------------------------------------------------------------

def _field(line: str, start: int, end: int) -> str:
    # 1-based inclusive column numbers, as printed in the format description
    return line[start - 1:end]


def _num(line: str, start: int, end: int, lineno: int, what: str, cast=float, default=None):
    raw = _field(line, start, end).strip()
    if not raw:
        if default is not None:
            return default
        raise CaseParseError(f"missing {what} in columns {start}-{end}", lineno)
    try:
        return cast(float(raw)) if cast is int else cast(raw)
    except ValueError:
        raise CaseParseError(f"bad {what} {raw!r} in columns {start}-{end}", lineno) from None


_CDF_KIND = {3: BusKind.SLACK, 2: BusKind.PV, 1: BusKind.PQ, 0: BusKind.PQ}


def parse_ieee_cdf(text: str | Iterable[str]) -> Network:
    """Parse an IEEE Common Data Format case.

    Only the title card, the bus section and the branch section are read;
    everything after the branch section terminator is ignored.
    """
    lines = text.splitlines() if isinstance(text, str) else [ln.rstrip("\n") for ln in text]
    if not lines:
        raise EmptyCaseError("empty input")

    title = lines[0]
    base_mva = _num(title, 32, 37, 1, "MVA base")
    if not base_mva > 0:
        raise CaseParseError("MVA base must be positive", 1)
    name = _field(title, 46, 73).strip()

    i = 1
    while i < len(lines) and not lines[i].startswith("BUS DATA FOLLOWS"):
        i += 1
    if i == len(lines):
        raise CaseParseError("no BUS DATA section", len(lines))

    buses: list[Bus] = []
    generators: list[Generator] = []
    i += 1
    while True:
        if i >= len(lines):
            raise CaseParseError("BUS DATA section not terminated by -999", len(lines))
        line = lines[i]
        lineno = i + 1
        i += 1
        if line.strip().startswith("-999"):
            break
        if not line.strip():
            continue
        bus_id = _num(line, 1, 4, lineno, "bus number", int)
        code = _num(line, 25, 26, lineno, "bus type", int)
        if code not in _CDF_KIND:
            raise CaseParseError(f"unknown bus type code {code}", lineno)
        kind = _CDF_KIND[code]
        v_final = _num(line, 28, 33, lineno, "voltage")
        angle = _num(line, 34, 40, lineno, "angle")
        p_load = _num(line, 41, 49, lineno, "load MW")
        q_load = _num(line, 50, 59, lineno, "load MVAR")
        p_gen = _num(line, 60, 67, lineno, "generation MW")
        q_gen = _num(line, 68, 75, lineno, "generation MVAR")
        v_desired = _num(line, 85, 90, lineno, "desired volts", default=0.0)
        lim_max = _num(line, 91, 98, lineno, "max limit", default=0.0)
        lim_min = _num(line, 99, 106, lineno, "min limit", default=0.0)
        g_sh = _num(line, 107, 114, lineno, "shunt G", default=0.0)
        b_sh = _num(line, 115, 122, lineno, "shunt B", default=0.0)
        if not all(math.isfinite(v) for v in (p_load, q_load, p_gen, q_gen)):
            raise CaseParseError("non-finite power value", lineno)

        v_min, v_max = DEFAULT_V_MIN, DEFAULT_V_MAX
        # type 1 buses carry voltage limits in the limit columns, types 2/3 carry MVAR limits
        if code == 1 and lim_max > lim_min > 0:
            v_min, v_max = lim_min, lim_max
        v_set = v_desired if kind is not BusKind.PQ and v_desired > 0 else v_final
        buses.append(Bus(
            id=bus_id, kind=kind,
            p_load=p_load / base_mva, q_load=q_load / base_mva,
            g_shunt=g_sh, b_shunt=b_sh,
            v_mag=v_set, v_angle=math.radians(angle),
            v_min=v_min, v_max=v_max,
        ))
        if kind is not BusKind.PQ or p_gen != 0.0:
            if lim_max == 0.0 and lim_min == 0.0 or code < 2:
                q_min, q_max = -UNLIMITED_MW, UNLIMITED_MW
            else:
                q_min, q_max = lim_min, lim_max
            generators.append(Generator(
                bus=bus_id, p_gen=p_gen / base_mva, q_gen=q_gen / base_mva,
                p_min=0.0, p_max=UNLIMITED_MW / base_mva,
                q_min=q_min / base_mva, q_max=q_max / base_mva,
            ))

    if not buses:
        raise EmptyCaseError("BUS DATA section has no records")

    while i < len(lines) and not lines[i].startswith("BRANCH DATA FOLLOWS"):
        i += 1
    if i == len(lines):
        raise CaseParseError("no BRANCH DATA section", len(lines))
    i += 1
    branches: list[Branch] = []
    while True:
        if i >= len(lines):
            raise CaseParseError("BRANCH DATA section not terminated by -999", len(lines))
        line = lines[i]
        lineno = i + 1
        i += 1
        if line.strip().startswith("-999"):
            break
        if not line.strip():
            continue
        f = _num(line, 1, 4, lineno, "tap bus", int)
        t = _num(line, 6, 9, lineno, "Z bus", int)
        br_type = _num(line, 19, 19, lineno, "branch type", int, default=0)
        r = _num(line, 20, 29, lineno, "R")
        x = _num(line, 30, 40, lineno, "X")
        b = _num(line, 41, 50, lineno, "B", default=0.0)
        rating = _num(line, 51, 55, lineno, "rating", default=0.0)
        ratio = _num(line, 77, 82, lineno, "turns ratio", default=0.0)
        branches.append(Branch(
            from_bus=f, to_bus=t, r=r, x=x, b_charging=b,
            tap=ratio if ratio != 0.0 else 1.0,
            rating=rating, is_transformer=br_type != 0 or ratio != 0.0,
        ))

    network = Network(base_mva=base_mva, buses=tuple(buses), branches=tuple(branches),
                      generators=tuple(generators), name=name)
    problems = validate(network)
    if problems:
        raise ValidationError(problems)
    return network


def read_ieee_cdf(path) -> Network:
    with open(path, encoding="ascii", errors="replace") as fh:
        return parse_ieee_cdf(fh.read())


# ---------------------------------------------------------------------------
# Supplementary data: costs, generator limits, branch ratings
# ---------------------------------------------------------------------------

def attach_cost_data(network: Network, costs: Mapping[int, Sequence[float]]) -> Network:
    """Return a copy of ``network`` with (a, b, c) fuel-cost coefficients keyed by generator bus."""
    gen_buses = {g.bus for g in network.generators}
    unknown = sorted(set(costs) - gen_buses)
    if unknown:
        raise CaseError(f"cost data for unknown generator bus(es) {unknown}")
    if len(costs) != len(gen_buses):
        raise CaseError(f"expected {len(gen_buses)} cost triples, got {len(costs)}")
    gens = []
    for g in network.generators:
        a, b, c = (float(v) for v in costs[g.bus])
        if c < 0:
            raise ValidationError([f"generator at bus {g.bus}: quadratic cost coefficient {c} < 0"])
        gens.append(replace(g, cost_a=a, cost_b=b, cost_c=c))
    return replace(network, generators=tuple(gens))


def attach_generation_limits(network: Network, limits_mw: Mapping[int, Sequence[float]]) -> Network:
    """Set (p_min, p_max) in MW for the generators at the given buses."""
    gen_buses = {g.bus for g in network.generators}
    unknown = sorted(set(limits_mw) - gen_buses)
    if unknown:
        raise CaseError(f"limits for unknown generator bus(es) {unknown}")
    gens = []
    for g in network.generators:
        if g.bus in limits_mw:
            lo, hi = limits_mw[g.bus]
            g = replace(g, p_min=lo / network.base_mva, p_max=hi / network.base_mva)
        gens.append(g)
    return replace(network, generators=tuple(gens))


def attach_ratings(network: Network, ratings_mva: Sequence[float]) -> Network:
    """Set branch MVA ratings, one value per branch in case order."""
    if len(ratings_mva) != len(network.branches):
        raise CaseError(f"expected {len(network.branches)} ratings, got {len(ratings_mva)}")
    branches = tuple(replace(br, rating=float(r)) for br, r in zip(network.branches, ratings_mva))
    return replace(network, branches=branches)


def load_cost_file(network: Network, path) -> Network:
    with open(path) as fh:
        doc = json.load(fh)
    entries = doc["generators"]
    network = attach_cost_data(network, {e["bus"]: (e["a"], e["b"], e["c"]) for e in entries})
    limits = {e["bus"]: (e["p_min_mw"], e["p_max_mw"]) for e in entries if "p_max_mw" in e}
    return attach_generation_limits(network, limits) if limits else network


def load_ratings_file(network: Network, path) -> Network:
    with open(path) as fh:
        doc = json.load(fh)
    entries = doc["branches"]
    for k, (e, br) in enumerate(zip(entries, network.branches)):
        if (e["from_bus"], e["to_bus"]) != (br.from_bus, br.to_bus):
            raise CaseError(f"rating entry {k} is for {e['from_bus']}-{e['to_bus']}, "
                            f"branch {k} is {br.from_bus}-{br.to_bus}")
    return attach_ratings(network, [e["rating_mva"] for e in entries])


def ieee30() -> Network:
    """The IEEE 30-bus case with the bundled cost table, generator limits and branch ratings."""
    data = resources.files("gridopt") / "data"
    network = parse_ieee_cdf(data.joinpath("ieee30cdf.txt").read_text())
    with resources.as_file(data / "ieee30_costs.json") as p:
        network = load_cost_file(network, p)
    with resources.as_file(data / "ieee30_ratings.json") as p:
        network = load_ratings_file(network, p)
    return network


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate(network: Network) -> list[str]:
    """Return every invariant violation in ``network``; an empty list means valid."""
    problems: list[str] = []
    ids = [b.id for b in network.buses]
    seen: set[int] = set()
    dupes = sorted({i for i in ids if i in seen or seen.add(i)})
    if dupes:
        problems.append(f"duplicate bus ids {dupes}")
    slacks = [b.id for b in network.buses if b.kind is BusKind.SLACK]
    if len(slacks) == 0:
        problems.append("no slack bus")
    elif len(slacks) > 1:
        problems.append(f"multiple slack buses {slacks}")
    for b in network.buses:
        if not (0 < b.v_min < b.v_max):
            problems.append(f"bus {b.id}: voltage bounds [{b.v_min}, {b.v_max}] invalid")
        if not (math.isfinite(b.p_load) and math.isfinite(b.q_load)):
            problems.append(f"bus {b.id}: non-finite load")
    known = set(ids)
    for k, br in enumerate(network.branches):
        tag = f"branch {k} ({br.from_bus}-{br.to_bus})"
        if br.from_bus not in known or br.to_bus not in known:
            problems.append(f"{tag}: endpoint not in bus list")
        if br.from_bus == br.to_bus:
            problems.append(f"{tag}: from_bus equals to_bus")
        if br.x == 0:
            problems.append(f"{tag}: zero series reactance")
        if br.rating < 0:
            problems.append(f"{tag}: negative rating")
        if br.tap <= 0:
            problems.append(f"{tag}: non-positive tap")
    for g in network.generators:
        if g.bus not in known:
            problems.append(f"generator at bus {g.bus}: bus not in bus list")
        if g.p_min > g.p_max:
            problems.append(f"generator at bus {g.bus}: p_min > p_max")
        if g.q_min > g.q_max:
            problems.append(f"generator at bus {g.bus}: q_min > q_max")
        if g.cost_c is not None and g.cost_c < 0:
            problems.append(f"generator at bus {g.bus}: negative quadratic cost coefficient")
    return problems


# ---------------------------------------------------------------------------
# Native JSON case format
# ---------------------------------------------------------------------------

def network_to_dict(network: Network) -> dict:
    doc = asdict(network)
    for b in doc["buses"]:
        b["kind"] = b["kind"].value
    return doc


def network_from_dict(doc: Mapping) -> Network:
    buses = tuple(Bus(**{**b, "kind": BusKind(b["kind"])}) for b in doc["buses"])
    return Network(
        base_mva=doc["base_mva"],
        buses=buses,
        branches=tuple(Branch(**br) for br in doc["branches"]),
        generators=tuple(Generator(**g) for g in doc["generators"]),
        name=doc.get("name", ""),
    )


def dumps_case(network: Network) -> str:
    return json.dumps(network_to_dict(network), indent=1)


def loads_case(text: str) -> Network:
    return network_from_dict(json.loads(text))


def scale_loads(network: Network, factor: float) -> Network:
    """Multiply every bus load by ``factor``; generator schedules are left alone."""
    if not factor > 0:
        raise ValueError(f"load factor must be > 0, got {factor}")
    if factor == 1.0:
        return network
    buses = tuple(replace(b, p_load=b.p_load * factor, q_load=b.q_load * factor) for b in network.buses)
    return replace(network, buses=buses)
