"""
Scenario files: YAML with top-level sections ``nodes``, ``radios``, ``dus``,
``terminals``, ``thresholds`` and ``carrier``.  See docs/scenario.md for the
field list and units.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from mwiab.domain import (
    AccessBand, BandAvailability, CarrierParams, DuConfig, MicrowaveNode,
    PolicyThresholds, RadioState, RadioUnit, ScenarioError, Terminal,
    TerminalKind,
)
from mwiab.tables import NUMEROLOGY_TABLE, UnknownNumerology

BUNDLED = ("rural_montreal",)


@dataclass
class Scenario:
    name: str
    nodes: List[MicrowaveNode]
    dus: List[DuConfig]
    terminals: List[Terminal]
    thresholds: PolicyThresholds
    carriers: Dict[str, AccessBand]
    extra: Dict[str, Any] = field(default_factory=dict)

    def node(self, node_id: str) -> MicrowaveNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def du(self, du_id: str) -> DuConfig:
        for d in self.dus:
            if d.id == du_id:
                return d
        raise KeyError(du_id)

    def terminals_of(self, du_id: str) -> List[Terminal]:
        return [t for t in self.terminals if t.parent_du_id == du_id]

    @property
    def cpes(self) -> List[Terminal]:
        return [t for t in self.terminals if t.kind is TerminalKind.CPE]

    @property
    def root_nodes(self) -> List[MicrowaveNode]:
        return [n for n in self.nodes if n.upstream_id is None]

    def copy(self) -> "Scenario":
        return copy.deepcopy(self)


# --------------------------------------------------------------------------
# YAML loading with line numbers

class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=deep)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _strip_lines(obj):
    if isinstance(obj, dict):
        return {k: _strip_lines(v) for k, v in obj.items() if k != "__line__"}
    if isinstance(obj, list):
        return [_strip_lines(v) for v in obj]
    return obj


class _Section:
    """Helper that reports field errors with the YAML line of the record."""

    def __init__(self, raw: dict, where: str):
        if not isinstance(raw, dict):
            raise ScenarioError(f"{where}: expected a mapping")
        self.raw = raw
        self.where = where
        self.line = raw.get("__line__")

    def fail(self, key: str, msg: str):
        loc = f" (line {self.line})" if self.line else ""
        raise ScenarioError(f"{self.where}{loc}: field '{key}': {msg}")

    def get(self, key: str, default=...):
        if key not in self.raw:
            if default is ...:
                self.fail(key, "missing")
            return default
        return self.raw[key]

    def num(self, key: str, default=...) -> Optional[float]:
        v = self.get(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(key, f"expected a number, got {v!r}")
        return float(v)

    def integer(self, key: str, default=...) -> int:
        v = self.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(key, f"expected an integer, got {v!r}")
        return v

    def build(self, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ScenarioError as e:
            loc = f" (line {self.line})" if self.line else ""
            raise ScenarioError(f"{self.where}{loc}: {e}") from None


def _parse_carrier(name: str, raw: dict) -> AccessBand:
    s = _Section(raw, f"carrier.{name}")
    params = s.build(
        CarrierParams,
        num_carriers=s.integer("num_carriers", 1),
        layers=s.integer("layers", 4),
        modulation_order=s.integer("modulation_order", 8),
        scaling=s.num("scaling", 1.0),
        max_code_rate=s.num("max_code_rate", 948 / 1024),
        overhead=s.num("overhead", 0.14),
        numerology=s.integer("numerology"),
    )
    band = s.build(
        AccessBand, name=name, carrier_ghz=s.num("carrier_ghz"),
        frequency_range=s.get("frequency_range"), params=params,
        fixed_numerology=s.integer("fixed_numerology"),
        fixed_bandwidth_hz=s.num("fixed_bandwidth_hz"),
    )
    for mu, bw in ((band.fixed_numerology, band.fixed_bandwidth_hz),):
        try:
            e = NUMEROLOGY_TABLE.entry(mu, bw)
        except UnknownNumerology as err:
            s.fail("fixed_numerology", str(err.args[0]))
        if e.frequency_range != band.frequency_range:
            s.fail("fixed_numerology", f"entry is {e.frequency_range}, carrier is {band.frequency_range}")
    if not NUMEROLOGY_TABLE.for_range(band.frequency_range):
        s.fail("frequency_range", "no numerology entries")
    return band


def _parse_radio(raw: dict, i: int) -> (str, RadioUnit):
    s = _Section(raw, f"radios[{i}]")
    rid = s.get("id")
    s.where = f"radios[{i}] (id={rid})"
    prof_raw = s.get("power_w", None)
    profile = None
    if prof_raw is not None:
        ps = _Section(prof_raw, f"{s.where}.power_w")
        profile = {}
        for st in RadioState:
            profile[st] = ps.num(st.key)
    kwargs = dict(
        id=str(rid), band_ghz=s.num("band_ghz"), bandwidth_hz=s.num("bandwidth_hz"),
        tx_power=s.num("tx_power_w", 1.0), tx_power_cap=s.num("tx_power_cap_w", 1.0),
        startup_duration=s.num("startup_s", 60.0), wakeup_duration=s.num("wakeup_s", 10.0),
        antenna_gain_dbi=s.num("antenna_gain_dbi", 0.0),
        noise_figure_db=s.num("noise_figure_db", 5.0),
        link_distance_m=s.num("link_distance_m", 1000.0),
    )
    if profile is not None:
        kwargs["power_profile"] = profile
    return str(s.get("node")), s.build(RadioUnit, **kwargs)


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario: top level must be a mapping")
    for sec in ("nodes", "radios", "dus", "terminals", "carrier"):
        if sec not in data:
            raise ScenarioError(f"scenario: missing section '{sec}'")

    ts = _Section(data.get("thresholds") or {}, "thresholds")
    thresholds = ts.build(
        PolicyThresholds,
        sleep_threshold=ts.num("sleep_threshold_bps", None),
        wake_threshold=ts.num("wake_threshold_bps", None),
        completely_off_period=ts.num("completely_off_period_s", 7 * 86400.0),
        rb_update_period_ms=ts.num("rb_update_period_ms", 1000.0),
        wake_fraction=ts.num("wake_fraction", 0.1),
    )

    cs = _Section(data["carrier"], "carrier")
    carriers = {}
    for name in ("mmwave", "midband"):
        carriers[name] = _parse_carrier(name, cs.get(name))

    radios_by_node: Dict[str, List[RadioUnit]] = {}
    radio_ids = set()
    for i, raw in enumerate(data["radios"] or []):
        node_id, radio = _parse_radio(raw, i)
        if radio.id in radio_ids:
            raise ScenarioError(f"radios[{i}]: duplicate radio id {radio.id!r}")
        radio_ids.add(radio.id)
        radios_by_node.setdefault(node_id, []).append(radio)

    nodes = []
    node_ids = [n.get("id") if isinstance(n, dict) else None for n in data["nodes"] or []]
    if len(set(node_ids)) != len(node_ids):
        raise ScenarioError("nodes: duplicate node id")
    for i, raw in enumerate(data["nodes"] or []):
        s = _Section(raw, f"nodes[{i}]")
        nid = str(s.get("id"))
        s.where = f"nodes[{i}] (id={nid})"
        up = s.get("upstream", None)
        down = tuple(str(d) for d in (s.get("downstream", None) or ()))
        for ref in ([up] if up is not None else []) + list(down):
            if ref not in node_ids:
                s.fail("upstream" if ref == up else "downstream", f"dangling reference {ref!r}")
        nodes.append(s.build(MicrowaveNode, id=nid, radios=radios_by_node.pop(nid, []),
                             upstream_id=None if up is None else str(up),
                             downstream_ids=down, thresholds=thresholds))
    if radios_by_node:
        bad = sorted(radios_by_node)[0]
        raise ScenarioError(f"radios: dangling node reference {bad!r}")
    by_id = {n.id: n for n in nodes}
    for n in nodes:
        for d in n.downstream_ids:
            if by_id[d].upstream_id != n.id:
                raise ScenarioError(f"nodes: {d!r} is downstream of {n.id!r} but names a different upstream")
            if len(by_id[d].radios) != len(n.radios):
                raise ScenarioError(f"nodes: {d!r} and {n.id!r} must have matching radio counts")

    dus = []
    for i, raw in enumerate(data["dus"] or []):
        s = _Section(raw, f"dus[{i}]")
        did = str(s.get("id"))
        s.where = f"dus[{i}] (id={did})"
        node = s.get("node", None)
        if node is not None and node not in by_id:
            s.fail("node", f"dangling reference {node!r}")
        cap = s.num("power_cap_w", 40.0)
        if cap <= 0:
            s.fail("power_cap_w", "must be positive")
        dus.append(DuConfig(did, node, cap, s.num("antenna_gain_dbi", 20.0)))
    du_ids = {d.id for d in dus}
    if len(du_ids) != len(dus):
        raise ScenarioError("dus: duplicate DU id")

    terminals = []
    for i, raw in enumerate(data["terminals"] or []):
        s = _Section(raw, f"terminals[{i}]")
        tid = str(s.get("id"))
        s.where = f"terminals[{i}] (id={tid})"
        try:
            kind = TerminalKind(s.get("kind"))
        except ValueError:
            s.fail("kind", "expected CPE or IAB-MT")
        parent = str(s.get("parent_du"))
        if parent not in du_ids:
            s.fail("parent_du", f"dangling reference {parent!r}")
        child = s.get("child_du", None)
        if kind is TerminalKind.IAB_MT:
            if child not in du_ids:
                s.fail("child_du", f"dangling reference {child!r}")
        elif child is not None:
            s.fail("child_du", "only IAB-MT terminals have a child DU")
        site = s.get("site", None)
        avail = s.build(BandAvailability, s.num("phi", 1.0))
        terminals.append(s.build(
            Terminal, id=tid, kind=kind, parent_du_id=parent,
            distance_m=s.num("distance_m"), band_availability=avail,
            noise_figure_db=s.num("noise_figure_db", 7.0),
            antenna_gain_dbi=s.num("antenna_gain_dbi", 15.0),
            site_id=None if site is None else str(site), share=s.num("share", 1.0),
            child_du_id=None if child is None else str(child)))
    if len({t.id for t in terminals}) != len(terminals):
        raise ScenarioError("terminals: duplicate terminal id")
    _check_du_tree(dus, terminals)

    extra = {k: _strip_lines(v) for k, v in data.items()
             if k not in ("name", "nodes", "radios", "dus", "terminals", "thresholds", "carrier", "__line__")}
    return Scenario(str(data.get("name", "scenario")), nodes, dus, terminals, thresholds, carriers, extra)


def _check_du_tree(dus: List[DuConfig], terminals: List[Terminal]):
    parent_of = {}
    for t in terminals:
        if t.child_du_id is not None:
            if t.child_du_id in parent_of:
                raise ScenarioError(f"dus: {t.child_du_id!r} is backhauled by more than one IAB-MT")
            parent_of[t.child_du_id] = t.parent_du_id
    for d in dus:
        seen = set()
        cur = d.id
        while cur in parent_of:
            if cur in seen:
                raise ScenarioError(f"dus: backhaul cycle through {cur!r}")
            seen.add(cur)
            cur = parent_of[cur]


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("mwiab") / "data" / f"{name}.yaml"))


def resolve_scenario_path(path: Union[str, Path]) -> Path:
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        return bundled_path(str(path))
    return p


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Load and validate a scenario file; a bare bundled name such as
    ``"rural_montreal"`` resolves to the packaged copy."""
    p = resolve_scenario_path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {str(path)!r}: {e.strerror}") from None
    return loads_scenario(text)


def loads_scenario(text: str) -> Scenario:
    try:
        data = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(f"scenario parse error{loc}: {getattr(e, 'problem', e)}") from None
    return scenario_from_dict(data)


# --------------------------------------------------------------------------
# Serialization

def scenario_to_dict(sc: Scenario) -> dict:
    th = sc.thresholds
    out = {
        "name": sc.name,
        "thresholds": {
            "sleep_threshold_bps": th.sleep_threshold,
            "wake_threshold_bps": th.wake_threshold,
            "completely_off_period_s": th.completely_off_period,
            "rb_update_period_ms": th.rb_update_period_ms,
            "wake_fraction": th.wake_fraction,
        },
        "carrier": {},
        "nodes": [],
        "radios": [],
        "dus": [],
        "terminals": [],
    }
    for name, b in sc.carriers.items():
        p = b.params
        out["carrier"][name] = {
            "carrier_ghz": b.carrier_ghz, "frequency_range": b.frequency_range,
            "numerology": p.numerology, "num_carriers": p.num_carriers, "layers": p.layers,
            "modulation_order": p.modulation_order, "scaling": p.scaling,
            "max_code_rate": p.max_code_rate, "overhead": p.overhead,
            "fixed_numerology": b.fixed_numerology, "fixed_bandwidth_hz": b.fixed_bandwidth_hz,
        }
    for n in sc.nodes:
        out["nodes"].append({"id": n.id, "upstream": n.upstream_id, "downstream": list(n.downstream_ids)})
        for r in n.radios:
            out["radios"].append({
                "id": r.id, "node": n.id, "band_ghz": r.band_ghz, "bandwidth_hz": r.bandwidth_hz,
                "tx_power_w": r.tx_power, "tx_power_cap_w": r.tx_power_cap,
                "startup_s": r.startup_duration, "wakeup_s": r.wakeup_duration,
                "antenna_gain_dbi": r.antenna_gain_dbi, "noise_figure_db": r.noise_figure_db,
                "link_distance_m": r.link_distance_m,
                "power_w": {s.key: r.power_profile[s] for s in RadioState},
            })
    for d in sc.dus:
        out["dus"].append({"id": d.id, "node": d.node_id, "power_cap_w": d.power_cap,
                           "antenna_gain_dbi": d.antenna_gain_dbi})
    for t in sc.terminals:
        rec = {"id": t.id, "kind": t.kind.value, "parent_du": t.parent_du_id,
               "distance_m": t.distance_m, "phi": t.band_availability.phi,
               "noise_figure_db": t.noise_figure_db, "antenna_gain_dbi": t.antenna_gain_dbi,
               "share": t.share}
        if t.site_id is not None:
            rec["site"] = t.site_id
        if t.child_du_id is not None:
            rec["child_du"] = t.child_du_id
        out["terminals"].append(rec)
    out.update(copy.deepcopy(sc.extra))
    return out


def dumps_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False)


def scenario_hash(sc: Scenario) -> str:
    blob = json.dumps(scenario_to_dict(sc), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
