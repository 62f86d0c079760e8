"""Run configuration: presets, INI files with [model]/[database]/[sweep] sections, overrides."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .harness import TABLE_GRID, SweepConfig, default_estimators
from .tdgl import ModelConfig, Observable


class ConfigError(ValueError):
    pass


_GRID = ",".join(f"{t:g}" for t in TABLE_GRID)

# Every accepted key with its default (as text). None means required.
DEFAULTS: dict[str, dict[str, str | None]] = {
    "model": {
        "lattice_size": "40",
        "n_steps": "5000",
        "dt": "0.01",
        "dx": "1.0",
        "chi": "1.0",
        "diffusion": "1.0",
        "boundary": "periodic",
        "initial_condition": "zero",
        "initial_value": "0.0",
        "point_site": "center",
        "point_time_step": "final",
    },
    "database": {
        "nominals": None,
        "observable": "P3",
        "n_paths": "16384",
        "master_seed": "2008",
        "path": "dbmc.db",
    },
    "sweep": {
        "theta_grid": _GRID,
        "estimators": "auto",
        "n_micro": "256",
        "n_macro": "40",
        "seed": "1",
        "scheme": "i1",
        "output": "vrr.csv",
        "rebuild_per_macro": "false",
    },
}

PRESETS: dict[str, dict[str, dict[str, str]]] = {
    "paper": {
        "model": {"lattice_size": "40", "n_steps": "5000", "dt": "0.01"},
        "database": {"nominals": "1.2,1.35", "n_paths": "16384", "path": "paper_P3.db"},
        "sweep": {"n_micro": "256", "n_macro": "40", "output": "paper_vrr.csv"},
    },
    "desk": {
        "model": {"lattice_size": "16", "n_steps": "1000", "dt": "0.01"},
        "database": {"nominals": "1.2,1.35", "n_paths": "4096", "path": "desk_P3.db"},
        "sweep": {"n_micro": "256", "n_macro": "20", "output": "desk_vrr.csv"},
    },
    "tiny": {
        "model": {"lattice_size": "8", "n_steps": "50", "dt": "0.01"},
        "database": {"nominals": "1.2,1.35", "n_paths": "64", "path": "tiny_P3.db"},
        "sweep": {"n_micro": "32", "n_macro": "4", "output": "tiny_vrr.csv"},
    },
}


@dataclass
class RunConfig:
    model: ModelConfig
    nominals: tuple[float, ...]
    observable: Observable
    n_paths: int
    master_seed: int
    db_path: str
    sweep: SweepConfig
    raw: dict[str, dict[str, str]] = field(repr=False, default_factory=dict)

    def to_ini(self) -> str:
        lines = []
        for section, values in self.raw.items():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in values.items())
            lines.append("")
        return "\n".join(lines)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_ini())


def _merge(raw, updates, origin):
    for section, values in updates.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}] in {origin}")
        for key, value in values.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {section}.{key} in {origin}")
            raw[section][key] = str(value).strip()


def parse_override(text: str) -> tuple[str, str, str]:
    """``section.key=value`` -> (section, key, value)."""
    name, sep, value = text.partition("=")
    section, dot, key = name.strip().partition(".")
    if not sep or not dot:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    return section, key, value


def resolve_raw(preset: str | None = None, path=None, overrides=()) -> dict[str, dict[str, str]]:
    raw = {s: {k: v for k, v in d.items() if v is not None} for s, d in DEFAULTS.items()}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        _merge(raw, PRESETS[preset], f"preset {preset}")
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        _merge(raw, {s: dict(parser[s]) for s in parser.sections()}, path)
    for item in overrides:
        section, key, value = item if isinstance(item, tuple) else parse_override(item)
        _merge(raw, {section: {key: value}}, "overrides")
    return raw


def _floats(text, key):
    try:
        vals = tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {text!r}") from None
    return vals


def _estimators(text, nominals):
    if text.strip().lower() == "auto":
        return default_estimators(nominals)
    out = []
    for part in text.split(";"):
        if not part.strip():
            continue
        label, sep, idx = part.partition("=")
        if not sep:
            raise ConfigError(f"sweep.estimators entry {part!r} is not label=indices")
        try:
            sub = tuple(int(i) for i in idx.split(",") if i.strip())
        except ValueError:
            raise ConfigError(f"sweep.estimators entry {part!r} has non-integer control indices") from None
        if any(i < 0 or i >= len(nominals) for i in sub):
            raise ConfigError(f"sweep.estimators entry {part!r} refers to a missing nominal")
        out.append((label.strip(), sub))
    return out


def build(raw: dict[str, dict[str, str]], workers: int = 1) -> RunConfig:
    """Validate every field of ``raw`` and assemble a :class:`RunConfig`."""
    for section, keys in DEFAULTS.items():
        for key, default in keys.items():
            if default is None and not raw[section].get(key, "").strip():
                raise ConfigError(f"missing required key {section}.{key}")
    m, d, s = raw["model"], raw["database"], raw["sweep"]
    key = "?"
    try:
        key = "model"
        L = int(m["lattice_size"])
        site = None if m["point_site"] == "center" else tuple(int(v) for v in m["point_site"].split(","))
        step = None if m["point_time_step"] == "final" else int(m["point_time_step"])
        model = ModelConfig(theta=None, chi=float(m["chi"]), diffusion=float(m["diffusion"]), dt=float(m["dt"]),
                            dx=float(m["dx"]), lattice_size=L, n_steps=int(m["n_steps"]), boundary=m["boundary"],
                            initial_condition=m["initial_condition"], initial_value=float(m["initial_value"]),
                            point_site=site, point_time_step=step)
        key = "database.nominals"
        nominals = _floats(d["nominals"], key)
        if not nominals:
            raise ConfigError("database.nominals is empty")
        if any(b <= a for a, b in zip(nominals, nominals[1:])):
            raise ConfigError("database.nominals must be strictly increasing")
        key = "database.observable"
        observable = Observable.parse(d["observable"])
        key = "database.n_paths"
        n_paths = int(d["n_paths"])
        if n_paths < 2:
            raise ConfigError("database.n_paths must be >= 2")
        key = "database.master_seed"
        master_seed = int(d["master_seed"])
        if not 0 <= master_seed < 2**64:
            raise ConfigError("database.master_seed must fit in 64 bits")
        key = "sweep.theta_grid"
        grid = _floats(s["theta_grid"], key)
        if not grid:
            raise ConfigError("sweep.theta_grid is empty")
        key = "sweep.rebuild_per_macro"
        rebuild = s["rebuild_per_macro"].lower()
        if rebuild not in ("true", "false", "yes", "no", "1", "0"):
            raise ConfigError(f"sweep.rebuild_per_macro must be a boolean, got {rebuild!r}")
        key = "sweep"
        sweep = SweepConfig(theta_grid=grid, estimators=_estimators(s["estimators"], nominals),
                            n_micro=int(s["n_micro"]), n_macro=int(s["n_macro"]), seed=int(s["seed"]),
                            scheme=s["scheme"].lower(), rebuild_per_macro=rebuild in ("true", "yes", "1"),
                            workers=workers, db_path=d["path"], output=s["output"])
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    return RunConfig(model=model, nominals=nominals, observable=observable, n_paths=n_paths,
                     master_seed=master_seed, db_path=d["path"], sweep=sweep, raw=raw)


def load(preset=None, path=None, overrides=(), workers: int = 1) -> RunConfig:
    return build(resolve_raw(preset, path, overrides), workers=workers)
