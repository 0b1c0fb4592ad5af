"""TNTP network / trip-table reader and writer."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .latency import LatencyModel, PerturbationSpec
from .network import Edge, ODPair, TrafficNetwork

LINK_COLUMNS = ("init_node", "term_node", "capacity", "length", "free_flow_time", "b", "power", "speed", "toll", "link_type")

_META = re.compile(r"^\s*<([^>]+)>\s*(.*)$")
_TRIP = re.compile(r"(\d+)\s*:\s*([-+0-9.eE]+)\s*;")


class TntpParseError(ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass
class LinkRecord:
    init_node: int
    term_node: int
    capacity: float
    length: float
    free_flow_time: float
    b: float
    power: float
    speed: float
    toll: float
    link_type: int


@dataclass
class TntpNetworkFile:
    metadata: dict = field(default_factory=dict)
    links: list[LinkRecord] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return int(self.metadata["NUMBER OF NODES"])

    @property
    def n_links(self) -> int:
        return int(self.metadata["NUMBER OF LINKS"])


def _read_metadata(lines, required):
    meta = {}
    for no, raw in enumerate(lines, start=1):
        m = _META.match(raw)
        if m is None:
            if raw.strip() and not raw.lstrip().startswith("~"):
                raise TntpParseError("expected metadata tag or <END OF METADATA>", no)
            continue
        key, val = m.group(1).strip().upper(), m.group(2).strip()
        if key == "END OF METADATA":
            missing = [k for k in required if k not in meta]
            if missing:
                raise TntpParseError(f"missing header field(s) {missing}", no)
            return meta, no
        meta[key] = val
    raise TntpParseError("no <END OF METADATA> line")


def _to_float(tok, no):
    try:
        return float(tok)
    except ValueError:
        raise TntpParseError(f"not a number: {tok!r}", no) from None


def parse_network_file(text: str) -> TntpNetworkFile:
    lines = text.splitlines()
    meta, end = _read_metadata(lines, ("NUMBER OF NODES", "NUMBER OF LINKS"))
    for key in ("NUMBER OF NODES", "NUMBER OF LINKS"):
        if not meta[key].isdigit():
            raise TntpParseError(f"malformed <{key}> value {meta[key]!r}")
    out = TntpNetworkFile(meta)
    n_nodes = out.n_nodes
    for no in range(end + 1, len(lines) + 1):
        raw = lines[no - 1].strip()
        if not raw or raw.startswith("~"):
            continue
        if not raw.endswith(";"):
            raise TntpParseError("link row must end with ';'", no)
        toks = raw[:-1].split()
        if len(toks) != len(LINK_COLUMNS):
            raise TntpParseError(f"expected {len(LINK_COLUMNS)} fields, got {len(toks)}", no)
        vals = [_to_float(t, no) for t in toks]
        rec = LinkRecord(int(vals[0]), int(vals[1]), *vals[2:9], int(vals[9]))
        if not (1 <= rec.init_node <= n_nodes and 1 <= rec.term_node <= n_nodes):
            raise TntpParseError("node id out of range", no)
        if rec.capacity < 0:
            raise TntpParseError("negative capacity", no)
        out.links.append(rec)
    if len(out.links) != out.n_links:
        raise TntpParseError(f"header says {out.n_links} links, found {len(out.links)}")
    return out


def parse_trips_file(text: str) -> dict[tuple[int, int], float]:
    """OD demands keyed by (origin, destination); zero entries are skipped."""
    lines = text.splitlines()
    _, end = _read_metadata(lines, ())
    demand: dict[tuple[int, int], float] = {}
    origin = None
    for no in range(end + 1, len(lines) + 1):
        raw = lines[no - 1].strip()
        if not raw or raw.startswith("~"):
            continue
        if raw.lower().startswith("origin"):
            parts = raw.split()
            if len(parts) != 2 or not parts[1].isdigit():
                raise TntpParseError("malformed Origin line", no)
            origin = int(parts[1])
            continue
        if origin is None:
            raise TntpParseError("trip entry before any Origin block", no)
        if _TRIP.sub("", raw).strip():
            raise TntpParseError("malformed trip entry", no)
        for dest, flow in _TRIP.findall(raw):
            val = _to_float(flow, no)
            if val < 0:
                raise TntpParseError("negative demand", no)
            if val > 0 and int(dest) != origin:
                demand[(origin, int(dest))] = demand.get((origin, int(dest)), 0.0) + val
    return demand


@dataclass
class ParsedInstance:
    network: TrafficNetwork
    latency: LatencyModel
    net_file: TntpNetworkFile


def parse_tntp(net_text: str, trips_text: str, perturbation: PerturbationSpec | None = None) -> ParsedInstance:
    """Network (without path sets) and BPR parameters from TNTP text.

    b -> alpha1, power -> alpha2, capacity -> C_e, free_flow_time -> t_e.
    """
    nf = parse_network_file(net_text)
    demand = parse_trips_file(trips_text)
    nodes = list(range(1, nf.n_nodes + 1))
    edges = [Edge(r.init_node, r.term_node, k) for k, r in enumerate(nf.links)]
    ods = [ODPair(o, d, m) for (o, d), m in sorted(demand.items())]
    for od in ods:
        if not (1 <= od.origin <= nf.n_nodes and 1 <= od.destination <= nf.n_nodes):
            raise TntpParseError(f"OD ({od.origin}, {od.destination}) references unknown node")
    latency = LatencyModel(
        np.array([r.free_flow_time for r in nf.links]),
        np.array([r.capacity for r in nf.links]),
        np.array([r.b for r in nf.links]),
        np.array([r.power for r in nf.links]),
        perturbation or PerturbationSpec("none"),
    )
    return ParsedInstance(TrafficNetwork(nodes, edges, ods), latency, nf)


def _fmt(x):
    return repr(float(x)) if float(x) != int(x) else str(int(x))


def format_network_file(nf: TntpNetworkFile) -> str:
    out = [f"<{k}> {v}" for k, v in nf.metadata.items()]
    out += ["<END OF METADATA>", "", "", "~ \t" + "\t".join(LINK_COLUMNS) + "\t;"]
    for r in nf.links:
        vals = [r.init_node, r.term_node, r.capacity, r.length, r.free_flow_time, r.b, r.power, r.speed, r.toll, r.link_type]
        out.append("\t" + "\t".join(_fmt(v) for v in vals) + "\t;")
    return "\n".join(out) + "\n"


def format_trips_file(demand: dict[tuple[int, int], float], n_zones: int) -> str:
    out = [f"<NUMBER OF ZONES> {n_zones}", f"<TOTAL OD FLOW> {sum(demand.values()):.1f}", "<END OF METADATA>", "", ""]
    for o in range(1, n_zones + 1):
        row = sorted((d, m) for (oo, d), m in demand.items() if oo == o)
        out.append(f"Origin  {o}")
        for s in range(0, len(row), 5):
            out.append("".join(f"{d:5d} : {_fmt(m):>8};" for d, m in row[s:s + 5]))
        out.append("")
    return "\n".join(out)


def read_text(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def builtin_path(name: str) -> Path:
    """Path of a shipped data file (``SiouxFalls_net.tntp`` etc.)."""
    return Path(str(resources.files("wanes") / "data" / name))


def sioux_falls(perturbation: PerturbationSpec | None = None) -> ParsedInstance:
    return parse_tntp(
        read_text(builtin_path("SiouxFalls_net.tntp")),
        read_text(builtin_path("SiouxFalls_trips.tntp")),
        perturbation,
    )
