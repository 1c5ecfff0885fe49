"""KDL experiment configs and sweep grids.

An experiment config looks like::

    version 1
    seed 7
    mode "deterministic"
    output { dir "$HOME/hsp-runs/{devices}"; }
    trace "hotcold" { bundled "hotcold"; }
    trace "hm_0" { path "$MSRC_DIR/hm_0.csv"; }
    devices "H&M" {
        tier "H" { capacity "10%"; }
        tier "M" { capacity "100%"; }
    }
    policy "agent"
    hyperparams { gamma 0.9; learning-rate 0.0001; epsilon 0.001; }
    reward { eviction-penalty 0.001; }
    env { charge-migration-read true; }

Node names are kebab-case and become snake_case keys. Path values get
``$ENV`` expansion and ``{key}`` interpolation against the top-level scalar
settings. Every validation failure names the offending field path.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import math
import os
import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import kdl

from hsp_lib.c51 import Hyperparams
from hsp_lib.devices import CONFIGURATIONS, DeviceProfile, preset
from hsp_lib.errors import ConfigError, HspError, NothingToDoError
from hsp_lib.trace import BUNDLED_WORKLOADS, MIX_PRESETS, SyntheticSpec
from hsp_lib.types import ExecMode, PolicyName

SCHEMA_VERSION = 1

# default capacities (percent of working set) when a devices node has no tiers
_DEFAULT_CAPACITY = {2: ("10%", "100%"), 3: ("10%", "30%", "100%")}

_PROFILE_OVERRIDES = {
    "read_latency_per_page",
    "write_latency_per_page",
    "seq_read_bandwidth",
    "seq_write_bandwidth",
    "seek_penalty",
}

_HYPERPARAM_KEYS = {f.name for f in dataclasses.fields(Hyperparams)}

GRID_KEYS = (
    "gamma",
    "learning_rate",
    "epsilon",
    "batch_size",
    "fast_capacity",
    "eviction_penalty",
    "seed",
)


# ---------------------------------------------------------------------------
# Data classes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceSource:
    name: str
    kind: str  # "msrc" | "bundled" | "synthetic" | "mix" | "mix-preset"
    path: Path | None = None
    bundled: str | None = None
    synthetic: SyntheticSpec | None = None
    members: tuple[tuple[str, int], ...] = ()  # (trace name, start offset ns)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.path is not None:
            d["path"] = str(self.path)
        if self.bundled is not None:
            d["bundled"] = self.bundled
        if self.synthetic is not None:
            d["synthetic"] = dataclasses.asdict(self.synthetic)
            d["synthetic"]["request_size_dist"] = {
                str(k): v for k, v in sorted(self.synthetic.request_size_dist.items())
            }
        if self.members:
            d["members"] = [list(m) for m in self.members]
        return d


@dataclass(frozen=True)
class TierSpec:
    preset: str
    capacity: str | int  # "10%" or absolute pages
    overrides: dict[str, float] = field(default_factory=dict)

    def capacity_pages(self, working_set: int) -> int:
        if isinstance(self.capacity, int):
            return self.capacity
        pct = float(self.capacity.rstrip("%"))
        return max(1, math.ceil(working_set * pct / 100.0))

    def build(self, working_set: int) -> DeviceProfile:
        profile = preset(self.preset).with_capacity(self.capacity_pages(working_set))
        return dataclasses.replace(profile, **self.overrides) if self.overrides else profile


@dataclass(frozen=True)
class ExperimentConfig:
    traces: tuple[TraceSource, ...]
    tiers: tuple[TierSpec, ...]
    policy: PolicyName = PolicyName.AGENT
    policy_params: dict[str, int | float] = field(default_factory=dict)
    devices_label: str = "H&M"
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    eviction_penalty: float = 0.001
    charge_migration_read: bool = True
    seed: int = 0
    mode: ExecMode = ExecMode.DETERMINISTIC
    output_dir: Path | None = None
    source: Path | None = None

    @property
    def n_tiers(self) -> int:
        return len(self.tiers)

    def trace(self, name: str) -> TraceSource:
        for t in self.traces:
            if t.name == name:
                return t
        raise ConfigError(f"no trace named '{name}'", "trace")

    def to_dict(self) -> dict[str, Any]:
        hp = dataclasses.asdict(self.hyperparams)
        hp["v_max"] = self.hyperparams.support_max
        return {
            "version": SCHEMA_VERSION,
            "seed": self.seed,
            "mode": str(self.mode),
            "traces": [t.to_dict() for t in self.traces],
            "devices": {
                "label": self.devices_label,
                "tiers": [
                    {"preset": t.preset, "capacity": t.capacity, "overrides": dict(sorted(t.overrides.items()))}
                    for t in self.tiers
                ],
            },
            "policy": {"name": str(self.policy), "params": dict(sorted(self.policy_params.items()))},
            "hyperparams": hp,
            "reward": {"eviction_penalty": self.eviction_penalty},
            "env": {"charge_migration_read": self.charge_migration_read},
        }

    def config_hash(self) -> str:
        """First 12 hex digits of SHA-256 over the canonical config (seed excluded)."""
        d = self.to_dict()
        del d["seed"]
        canonical = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Value helpers
# ---------------------------------------------------------------------------


def _arg(node: Any, field_path: str, index: int = 0) -> Any:
    if not node.args or len(node.args) <= index:
        raise ConfigError("missing value", field_path)
    return node.args[index]


def _num(value: Any, field_path: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", field_path)
    try:
        return float(value)
    except (TypeError, ValueError):
        try:
            return float(str(value))
        except ValueError:
            raise ConfigError(f"expected a number, got {value!r}", field_path) from None


def _int(value: Any, field_path: str) -> int:
    number = _num(value, field_path)
    if number != int(number):
        raise ConfigError(f"expected an integer, got {value!r}", field_path)
    return int(number)


def _bool(value: Any, field_path: str) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).lower()
    if text in ("true", "false"):
        return text == "true"
    raise ConfigError(f"expected true or false, got {value!r}", field_path)


def _capacity(value: Any, field_path: str) -> str | int:
    if isinstance(value, str):
        m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*%\s*", value)
        if not m:
            raise ConfigError(f"expected '<n>%' or a page count, got {value!r}", field_path)
        pct = float(m.group(1))
        if not 0 < pct <= 100:
            raise ConfigError(f"percentage must be in (0, 100], got {pct}", field_path)
        return f"{m.group(1)}%"
    pages = _int(value, field_path)
    if pages < 1:
        raise ConfigError("capacity must be >= 1 page", field_path)
    return pages


def _key(node: Any) -> str:
    return str(node.name).replace("-", "_")


def resolve_value(value: str, settings: dict[str, str]) -> str:
    """Expand $ENV / ${ENV}, then resolve {key} against ``settings``."""
    value = os.path.expandvars(value)
    return re.sub(r"\{(\w+)\}", lambda m: settings.get(m.group(1), m.group(0)), value)


# ---------------------------------------------------------------------------
# Section parsers
# ---------------------------------------------------------------------------


def _parse_synthetic(node: Any, field_path: str, seed: int) -> SyntheticSpec:
    values: dict[str, Any] = {"seed": seed}
    sizes: dict[int, float] = {}
    for child in node.nodes or []:
        key = _key(child)
        path = f"{field_path}.{child.name}"
        if key == "request_size":
            sizes[_int(_arg(child, path), path)] = _num(_arg(child, path, 1), path)
        elif key in ("n_requests", "hot_page_count", "cold_page_count", "seed", "interarrival_ns"):
            values[key] = _int(_arg(child, path), path)
        elif key in ("hot_access_fraction", "write_fraction", "scan_fraction"):
            values[key] = _num(_arg(child, path), path)
        else:
            raise ConfigError(f"unknown setting '{child.name}'", path)
    if sizes:
        values["request_size_dist"] = sizes
    for required in ("n_requests", "hot_page_count", "cold_page_count", "hot_access_fraction", "write_fraction"):
        if required not in values:
            raise ConfigError("missing required setting", f"{field_path}.{required.replace('_', '-')}")
    return SyntheticSpec(**values)


def _parse_trace(node: Any, settings: dict[str, str], seed: int, base: Path | None) -> TraceSource:
    name = str(_arg(node, "trace"))
    field_path = f"trace.{name}"
    children = list(node.nodes or [])
    if len(children) != 1:
        raise ConfigError(
            "expected exactly one of path, bundled, synthetic, mix, mix-preset", field_path
        )
    child = children[0]
    key = _key(child)
    path = f"{field_path}.{child.name}"
    match key:
        case "path":
            p = Path(resolve_value(str(_arg(child, path)), settings)).expanduser()
            if not p.is_absolute() and base is not None:
                p = base / p
            if not p.is_file():
                raise ConfigError(f"trace file not found: {p}", path)
            return TraceSource(name, "msrc", path=p)
        case "bundled":
            bundle = str(_arg(child, path))
            if bundle not in BUNDLED_WORKLOADS:
                known = ", ".join(sorted(BUNDLED_WORKLOADS))
                raise ConfigError(f"unknown bundled workload '{bundle}' (known: {known})", path)
            return TraceSource(name, "bundled", bundled=bundle)
        case "synthetic":
            return TraceSource(name, "synthetic", synthetic=_parse_synthetic(child, path, seed))
        case "mix":
            members = []
            for m in child.nodes or []:
                mpath = f"{path}.{m.name}"
                if m.name != "member":
                    raise ConfigError(f"unknown setting '{m.name}'", mpath)
                members.append((str(_arg(m, mpath)), _int(_arg(m, mpath, 1), mpath)))
            if not members:
                raise ConfigError("mix needs at least one member", path)
            return TraceSource(name, "mix", members=tuple(members))
        case "mix_preset":
            mix = str(_arg(child, path))
            if mix not in MIX_PRESETS:
                raise ConfigError(f"unknown mix preset '{mix}'", path)
            return TraceSource(name, "mix-preset", bundled=mix)
    raise ConfigError(f"unknown trace source '{child.name}'", path)


def _parse_devices(node: Any) -> tuple[str, tuple[TierSpec, ...]]:
    label = str(_arg(node, "devices"))
    tier_nodes = [c for c in node.nodes or [] if c.name == "tier"]
    others = [c for c in node.nodes or [] if c.name != "tier"]
    if others:
        raise ConfigError(f"unknown setting '{others[0].name}'", f"devices.{others[0].name}")

    if not tier_nodes:
        if label not in CONFIGURATIONS:
            known = ", ".join(CONFIGURATIONS)
            raise ConfigError(f"unknown configuration '{label}' (known: {known})", "devices")
        names = CONFIGURATIONS[label]
        caps = _DEFAULT_CAPACITY[len(names)]
        return label, tuple(TierSpec(n, c) for n, c in zip(names, caps))

    tiers = []
    for i, t in enumerate(tier_nodes):
        tpath = f"devices.tier[{i}]"
        name = str(_arg(t, tpath))
        try:
            preset(name)
        except HspError as exc:
            raise ConfigError(str(exc), tpath) from None
        capacity: str | int | None = None
        overrides: dict[str, float] = {}
        for c in t.nodes or []:
            key = _key(c)
            cpath = f"{tpath}.{c.name}"
            if key == "capacity":
                capacity = _capacity(_arg(c, cpath), cpath)
            elif key in _PROFILE_OVERRIDES:
                overrides[key] = _num(_arg(c, cpath), cpath)
            else:
                raise ConfigError(f"unknown setting '{c.name}'", cpath)
        if capacity is None:
            raise ConfigError("missing capacity", f"{tpath}.capacity")
        tiers.append(TierSpec(name, capacity, overrides))
    if not 2 <= len(tiers) <= 3:
        raise ConfigError(f"expected 2 or 3 tiers, got {len(tiers)}", "devices")
    return label, tuple(tiers)


def _parse_hyperparams(node: Any) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for child in node.nodes or []:
        key = _key(child)
        path = f"hyperparams.{child.name}"
        if key not in _HYPERPARAM_KEYS:
            raise ConfigError(f"unknown setting '{child.name}'", path)
        raw = _arg(child, path)
        if key in ("batch_size", "n_batches", "buffer_size", "sync_interval", "n_atoms"):
            values[key] = _int(raw, path)
        else:
            values[key] = _num(raw, path)
    return values


def _single(doc: Any, name: str, *, required: bool = False) -> Any:
    nodes = list(doc.getAll(name))
    if len(nodes) > 1:
        raise ConfigError(f"'{name}' given {len(nodes)} times", name)
    if required and not nodes:
        raise ConfigError("missing", name)
    return nodes[0] if nodes else None


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

_TOP_LEVEL = {"version", "seed", "mode", "output", "trace", "devices", "policy", "hyperparams", "reward", "env"}


def parse_config(text: str, *, source: Path | None = None) -> ExperimentConfig:
    try:
        doc = kdl.parse(text)
    except kdl.ParseError as exc:
        raise ConfigError(f"KDL parse error: {exc}") from None

    for node in doc.nodes:
        if node.name not in _TOP_LEVEL:
            raise ConfigError(f"unknown node '{node.name}'", str(node.name))

    version = _int(_arg(_single(doc, "version", required=True), "version"), "version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version} (expected {SCHEMA_VERSION})", "version")

    seed_node = _single(doc, "seed")
    seed = _int(_arg(seed_node, "seed"), "seed") if seed_node is not None else 0

    mode = ExecMode.DETERMINISTIC
    if (mode_node := _single(doc, "mode")) is not None:
        try:
            mode = ExecMode(str(_arg(mode_node, "mode")))
        except ValueError:
            raise ConfigError(f"unknown mode '{mode_node.args[0]}'", "mode") from None

    devices_node = _single(doc, "devices", required=True)
    label, tiers = _parse_devices(devices_node)

    settings = {"seed": str(seed), "mode": str(mode), "devices": label}
    base = source.parent if source is not None else None

    output_dir = None
    if (output_node := _single(doc, "output")) is not None:
        for child in output_node.nodes or []:
            if child.name != "dir":
                raise ConfigError(f"unknown setting '{child.name}'", f"output.{child.name}")
            output_dir = Path(resolve_value(str(_arg(child, "output.dir")), settings)).expanduser()

    traces = tuple(_parse_trace(n, settings, seed, base) for n in doc.getAll("trace"))
    if not traces:
        raise ConfigError("at least one trace is required", "trace")
    names = [t.name for t in traces]
    if len(set(names)) != len(names):
        raise ConfigError("trace names must be unique", "trace")
    for t in traces:
        for member, _ in t.members:
            if member not in names and member not in BUNDLED_WORKLOADS:
                raise ConfigError(f"unknown mix member '{member}'", f"trace.{t.name}.mix")

    policy_nodes = list(doc.getAll("policy"))
    if len(policy_nodes) != 1:
        raise ConfigError(f"exactly one policy is required, got {len(policy_nodes)}", "policy")
    policy_node = policy_nodes[0]
    try:
        policy = PolicyName(str(_arg(policy_node, "policy")))
    except ValueError:
        known = ", ".join(p.value for p in PolicyName)
        raise ConfigError(f"unknown policy '{policy_node.args[0]}' (known: {known})", "policy") from None
    policy_params = {
        _key(c): _num(_arg(c, f"policy.{c.name}"), f"policy.{c.name}") for c in policy_node.nodes or []
    }

    hp_node = _single(doc, "hyperparams")
    hyperparams = Hyperparams(**(_parse_hyperparams(hp_node) if hp_node else {}))

    eviction_penalty = 0.001
    if (reward_node := _single(doc, "reward")) is not None:
        for child in reward_node.nodes or []:
            path = f"reward.{child.name}"
            if child.name != "eviction-penalty":
                raise ConfigError(f"unknown setting '{child.name}'", path)
            eviction_penalty = _num(_arg(child, path), path)
    if eviction_penalty < 0:
        raise ConfigError("must be >= 0", "reward.eviction-penalty")

    charge_migration_read = True
    if (env_node := _single(doc, "env")) is not None:
        for child in env_node.nodes or []:
            path = f"env.{child.name}"
            if child.name != "charge-migration-read":
                raise ConfigError(f"unknown setting '{child.name}'", path)
            charge_migration_read = _bool(_arg(child, path), path)

    if policy == PolicyName.TRI_HEURISTIC and len(tiers) != 3:
        raise ConfigError("tri-heuristic needs a 3-tier devices node", "policy")

    return ExperimentConfig(
        traces=traces,
        tiers=tiers,
        policy=policy,
        policy_params={k: int(v) if v == int(v) else v for k, v in policy_params.items()},
        devices_label=label,
        hyperparams=hyperparams,
        eviction_penalty=eviction_penalty,
        charge_migration_read=charge_migration_read,
        seed=seed,
        mode=mode,
        output_dir=output_dir,
        source=source,
    )


def load_config(path: Path) -> ExperimentConfig:
    """Load and validate an experiment config file."""
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, source=path)


# ---------------------------------------------------------------------------
# Overrides and sweep grids
# ---------------------------------------------------------------------------


def with_policy(cfg: ExperimentConfig, policy: str | PolicyName, params: dict[str, int | float] | None = None) -> ExperimentConfig:
    try:
        name = PolicyName(policy)
    except ValueError:
        raise ConfigError(f"unknown policy '{policy}'", "policy") from None
    keep = params if params is not None else (cfg.policy_params if name == cfg.policy else {})
    return dataclasses.replace(cfg, policy=name, policy_params=dict(keep))


def apply_grid_point(cfg: ExperimentConfig, point: dict[str, Any]) -> ExperimentConfig:
    """Return ``cfg`` with the grid point's values substituted."""
    hp_changes: dict[str, Any] = {}
    changes: dict[str, Any] = {}
    for key, value in point.items():
        match key:
            case "gamma" | "learning_rate" | "epsilon" | "batch_size":
                hp_changes[key] = value
            case "fast_capacity":
                tiers = list(cfg.tiers)
                tiers[0] = dataclasses.replace(tiers[0], capacity=value)
                changes["tiers"] = tuple(tiers)
            case "eviction_penalty":
                changes["eviction_penalty"] = value
            case "seed":
                changes["seed"] = value
            case _:
                raise ConfigError(f"unknown grid parameter '{key}'", f"grid.{key}")
    if hp_changes:
        changes["hyperparams"] = dataclasses.replace(cfg.hyperparams, **hp_changes)
    return dataclasses.replace(cfg, **changes)


def parse_grid(text: str) -> dict[str, list[Any]]:
    try:
        doc = kdl.parse(text)
    except kdl.ParseError as exc:
        raise ConfigError(f"KDL parse error: {exc}") from None
    grid_node = doc.get("grid")
    if grid_node is None:
        raise ConfigError("missing grid node", "grid")
    grid: dict[str, list[Any]] = {}
    for child in grid_node.nodes or []:
        key = _key(child)
        path = f"grid.{child.name}"
        if key not in GRID_KEYS:
            raise ConfigError(f"unknown grid parameter (known: {', '.join(GRID_KEYS)})", path)
        if not child.args:
            raise ConfigError("needs at least one value", path)
        match key:
            case "fast_capacity":
                grid[key] = [_capacity(v, path) for v in child.args]
            case "batch_size" | "seed":
                grid[key] = [_int(v, path) for v in child.args]
            case _:
                grid[key] = [_num(v, path) for v in child.args]
    if not grid:
        raise NothingToDoError("grid is empty", "grid")
    return grid


def load_grid(path: Path) -> dict[str, list[Any]]:
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read grid: {exc}") from None
    return parse_grid(text)


def grid_points(grid: dict[str, Sequence[Any]]) -> list[dict[str, Any]]:
    """Cross product of the grid, in key order."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise NothingToDoError("grid is empty", "grid")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
