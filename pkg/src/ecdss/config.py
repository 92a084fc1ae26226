"""TOML scenario files: one base configuration plus an optional one-parameter sweep.

Layout::

    [scenario]          name, description
    [system]            n, mu, f, policy
    [service]           family = exponential | pareto | deterministic, alpha
    [arrival]           family = poisson | pareto, alpha
    [power]             c0, p_a, c_l, p_l, d_l, w_l
    [sim]               jobs, warmup, replications, seed, allow_unstable, split_merge
    [[class]]           id, k, l, lam, r, priority
    [sweep]             param = "class.2.k", values = [...] (or start/stop/step)

Numbers may be written as rational strings such as ``"1/6"``.  Any scalar can
be addressed by a dotted path (``system.mu``, ``class.2.k``, ``power.w_l``)
for sweeps and command-line overrides.
"""
from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import (
    ArrivalFamily,
    ConfigError,
    DataClass,
    Issue,
    PowerModel,
    ServiceFamily,
    SimControls,
    SystemConfig,
    validate,
)

__all__ = ["Scenario", "load", "loads", "parse_value", "set_path", "shipped", "resolve"]

_TABLES = {
    "scenario": {"name", "description"},
    "system": {"n", "mu", "f", "policy"},
    "service": {"family", "alpha"},
    "arrival": {"family", "alpha"},
    "power": {"c0", "p_a", "c_l", "p_l", "d_l", "w_l"},
    "sim": {"jobs", "warmup", "replications", "seed", "allow_unstable", "split_merge", "max_queued", "max_time"},
    "sweep": {"param", "values", "start", "stop", "step"},
}
_CLASS_KEYS = {"id", "k", "l", "lam", "r", "priority"}
_INT_KEYS = {"n", "k", "r", "id", "priority", "jobs", "warmup", "replications", "seed", "max_queued"}


def parse_value(text):
    """Coerce an override string: bool, int, rational/float, else the raw string."""
    if not isinstance(text, str):
        return text
    s = text.strip()
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        q = Fraction(s)
    except (ValueError, ZeroDivisionError):
        return s
    return float(q)


def _num(value, path, issues):
    if isinstance(value, str):
        v = parse_value(value)
        if isinstance(v, str):
            issues.append(Issue(path, f"expected a number, got {value!r}"))
            return None
        return v
    if isinstance(value, bool):
        issues.append(Issue(path, f"expected a number, got {value!r}"))
        return None
    return value


def _int(value, path, issues):
    v = _num(value, path, issues)
    if v is None:
        return None
    if isinstance(v, float) and v.is_integer():
        return int(v)
    if not isinstance(v, int):
        issues.append(Issue(path, f"expected an integer, got {value!r}"))
        return None
    return v


def set_path(doc: dict, path: str, value) -> None:
    """Set a dotted-path scalar in a raw scenario document, in place; None removes it."""
    parts = path.split(".")
    if parts[0] == "class":
        if len(parts) != 3:
            raise KeyError(f"{path}: class paths look like class.<id>.<key>")
        cid, key = parse_value(parts[1]), parts[2]
        if key not in _CLASS_KEYS:
            raise KeyError(f"{path}: unknown class key {key!r}")
        for entry in doc.get("class", []):
            if entry.get("id") == cid:
                if value is None:
                    entry.pop(key, None)
                else:
                    entry[key] = value
                return
        raise KeyError(f"{path}: no class with id {cid}")
    if len(parts) != 2 or parts[0] not in _TABLES or parts[1] not in _TABLES[parts[0]]:
        raise KeyError(f"{path}: unknown parameter")
    if value is None:
        doc.get(parts[0], {}).pop(parts[1], None)
    else:
        doc.setdefault(parts[0], {})[parts[1]] = value


def _build(doc: dict) -> SystemConfig:
    issues: list[Issue] = []
    for key, val in doc.items():
        if key == "class":
            continue
        if key not in _TABLES:
            issues.append(Issue(key, "unknown table"))
        elif not isinstance(val, dict):
            issues.append(Issue(key, "expected a table"))
        else:
            for sub in val:
                if sub not in _TABLES[key]:
                    issues.append(Issue(f"{key}.{sub}", "unknown key"))

    def get(table, key, default, conv=None):
        if key not in doc.get(table, {}):
            return default
        raw = doc[table][key]
        path = f"{table}.{key}"
        if conv is None:
            conv = _int if key in _INT_KEYS else _num
        return conv(raw, path, issues)

    system = doc.get("system", {})
    if "n" not in system:
        issues.append(Issue("system.n", "missing"))
    if "mu" not in system:
        issues.append(Issue("system.mu", "missing"))

    classes = []
    raw_classes = doc.get("class", [])
    if not isinstance(raw_classes, list) or not raw_classes:
        issues.append(Issue("class", "at least one [[class]] table is required"))
        raw_classes = []
    for pos, entry in enumerate(raw_classes):
        base = f"class[{pos}]"
        for sub in entry:
            if sub not in _CLASS_KEYS:
                issues.append(Issue(f"{base}.{sub}", "unknown key"))
        missing = [key for key in ("k", "l", "lam") if key not in entry]
        for key in missing:
            issues.append(Issue(f"{base}.{key}", "missing"))
        if missing:
            continue
        classes.append(
            DataClass(
                id=_int(entry.get("id", pos + 1), f"{base}.id", issues),
                k=_int(entry["k"], f"{base}.k", issues),
                l=_num(entry["l"], f"{base}.l", issues),
                lam=_num(entry["lam"], f"{base}.lam", issues),
                r=_int(entry["r"], f"{base}.r", issues) if "r" in entry else None,
                priority_rank=_int(entry["priority"], f"{base}.priority", issues) if "priority" in entry else None,
            )
        )

    dflt_power, dflt_sim = PowerModel(), SimControls()
    cfg = SystemConfig(
        n=get("system", "n", None),
        mu=get("system", "mu", None),
        classes=tuple(classes),
        f=get("system", "f", 1.0),
        policy=doc.get("system", {}).get("policy", "fcfs"),
        service=ServiceFamily(doc.get("service", {}).get("family", "exponential"), get("service", "alpha", None)),
        arrival=ArrivalFamily(doc.get("arrival", {}).get("family", "poisson"), get("arrival", "alpha", None)),
        power=PowerModel(**{k: get("power", k, getattr(dflt_power, k)) for k in _TABLES["power"]}),
        sim=SimControls(
            horizon_jobs=get("sim", "jobs", dflt_sim.horizon_jobs),
            warmup_jobs=get("sim", "warmup", None),
            replications=get("sim", "replications", dflt_sim.replications),
            seed=get("sim", "seed", dflt_sim.seed),
            allow_unstable=bool(doc.get("sim", {}).get("allow_unstable", False)),
            split_merge=bool(doc.get("sim", {}).get("split_merge", False)),
            max_queued=get("sim", "max_queued", dflt_sim.max_queued),
            max_time=get("sim", "max_time", dflt_sim.max_time),
        ),
    )
    if issues:
        raise ConfigError(issues)
    return cfg


@dataclass
class Scenario:
    name: str
    doc: dict = field(repr=False)
    sweep_param: str | None = None
    sweep_values: tuple = ()
    description: str = ""

    @property
    def base(self):
        return validate(_build(self.doc))

    def with_overrides(self, overrides: dict) -> "Scenario":
        doc = copy.deepcopy(self.doc)
        for path, value in overrides.items():
            set_path(doc, path, value)
        return _scenario(doc, self.name)

    def points(self) -> list:
        """(sweep value, validated config) for every point; one point if no sweep."""
        if self.sweep_param is None:
            return [(None, self.base)]
        out, issues = [], []
        for j, v in enumerate(self.sweep_values):
            doc = copy.deepcopy(self.doc)
            set_path(doc, self.sweep_param, v)
            try:
                out.append((v, validate(_build(doc))))
            except ConfigError as exc:
                issues += [Issue(f"sweep.values[{j}] ({self.sweep_param}={v}): {i.path}", i.message, i.kind) for i in exc.issues]
        if issues:
            raise ConfigError(issues)
        return out


def _scenario(doc: dict, default_name: str) -> Scenario:
    sweep = doc.get("sweep")
    param, values = None, ()
    if sweep is not None:
        param = sweep.get("param")
        if not isinstance(param, str):
            raise ConfigError([Issue("sweep.param", "missing or not a string")])
        try:
            set_path(copy.deepcopy(doc), param, 0)
        except KeyError as exc:
            raise ConfigError([Issue("sweep.param", str(exc.args[0]))]) from None
        if "values" in sweep:
            values = tuple(parse_value(v) for v in sweep["values"])
        elif "start" in sweep and "stop" in sweep:
            start, stop, step = parse_value(sweep["start"]), parse_value(sweep["stop"]), parse_value(sweep.get("step", 1))
            ok = all(isinstance(x, int) and not isinstance(x, bool) for x in (start, stop, step)) and step > 0
            values = tuple(range(start, stop + 1, step)) if ok else ()
            if not values:
                raise ConfigError([Issue("sweep", "start/stop/step must be integers with start <= stop")])
        else:
            raise ConfigError([Issue("sweep.values", "missing")])
        if not values:
            raise ConfigError([Issue("sweep.values", "empty sweep")])
    meta = doc.get("scenario", {})
    sc = Scenario(meta.get("name", default_name), doc, param, values, meta.get("description", ""))
    sc.points()  # surface every invalid point now
    return sc


def loads(text: str, name: str = "scenario") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([Issue("<toml>", str(exc))]) from None
    return _scenario(doc, name)


def load(path, overrides: dict | None = None) -> Scenario:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([Issue(str(path), str(exc))]) from None
    if overrides:
        for key, value in overrides.items():
            try:
                set_path(doc, key, value)
            except KeyError as exc:
                raise ConfigError([Issue(key, str(exc.args[0]))]) from None
    return _scenario(doc, path.stem)


def shipped() -> dict:
    """Name -> path of the scenario files bundled with the package."""
    root = resources.files("ecdss") / "scenarios"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml")}


def resolve(name_or_path) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = shipped()
    if str(name_or_path) in bundled:
        return bundled[str(name_or_path)]
    raise FileNotFoundError(f"no config file or shipped scenario named {name_or_path!r}")
