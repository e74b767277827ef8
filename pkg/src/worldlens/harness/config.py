"""Flat ``key = value`` experiment configs; repeating a key builds a grid.

::

    world = builtin:chain        # builtin:<name> | file:<path> | random:<seed>:<states>:<actions>
    param = p_L=0.5              # builtin parameter, repeatable
    vary = p_R                   # builtin parameter set from each ``p`` value
    p = 0.35
    triple = s0,R,s1             # or "all"
    method = t2
    n = 25
    n = 50
    delta = 0.2
    agent = adversarial
    seed = 0
    out = sweep.csv
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from ..builtins import make_builtin
from ..extraction import METHOD_NAMES, ExtractionMethod
from ..mdp import ObservableWorld, World
from ..worldfile import load_world, random_world

AGENT_MODES = ("optimal", "random", "adversarial")
STOCHASTIC_ONLY_DELTA = (ExtractionMethod.T2_STOCH, ExtractionMethod.T3_POMDP, ExtractionMethod.T4_WIDTH2_DELTA)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WorldSource:
    kind: str  # builtin | file | random
    name: str = ""
    params: tuple = ()
    seed: int = 0
    sizes: tuple = (0, 0)

    @classmethod
    def parse(cls, text: str, params=()) -> "WorldSource":
        kind, _, rest = text.partition(":")
        if kind == "builtin":
            return cls("builtin", rest, tuple(params))
        if kind == "file":
            return cls("file", rest)
        if kind == "random":
            try:
                seed, ns, na = (int(x) for x in rest.split(":"))
            except ValueError:
                raise ConfigError(f"expected random:<seed>:<states>:<actions>, got {text!r}") from None
            return cls("random", seed=seed, sizes=(ns, na))
        raise ConfigError(f"unknown world source {text!r}")

    def build(self, check: bool = True, **overrides) -> World | ObservableWorld:
        if self.kind == "builtin":
            return make_builtin(self.name, **{**dict(self.params), **overrides})
        if overrides:
            raise ConfigError("only builtin worlds take parameters")
        if self.kind == "file":
            return load_world(self.name, check=check)
        return random_world(self.seed, *self.sizes)

    @property
    def ident(self) -> str:
        if self.kind == "builtin":
            extra = "".join(f";{k}={v}" for k, v in self.params)
            return f"{self.name}{extra}"
        if self.kind == "file":
            return Path(self.name).name
        return f"random-{self.seed}-{self.sizes[0]}x{self.sizes[1]}"


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldSource = WorldSource("builtin", "chain")
    vary: str | None = None
    p_grid: tuple = ()
    triples: tuple | str = "default"
    method: ExtractionMethod = ExtractionMethod.T2_STOCH
    n_grid: tuple = (100,)
    delta_grid: tuple = (0.0,)
    agent: str = "optimal"
    seeds: tuple = (0,)
    out: str | None = None
    s0: int | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def validate(self) -> "ExperimentConfig":
        if not self.n_grid or not self.delta_grid or not self.seeds:
            raise ConfigError("n, delta and seed grids must be non-empty")
        if self.agent not in AGENT_MODES:
            raise ConfigError(f"agent must be one of {AGENT_MODES}")
        if any(n < 1 for n in self.n_grid):
            raise ConfigError("n must be positive")
        if self.vary is not None and not self.p_grid:
            raise ConfigError("'vary' needs at least one 'p' value")
        return self

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _parse_method(text: str) -> ExtractionMethod:
    try:
        return METHOD_NAMES[text.lower()] if text.lower() in METHOD_NAMES else ExtractionMethod(text)
    except ValueError:
        raise ConfigError(f"unknown method {text!r}; choose from {sorted(METHOD_NAMES)}") from None


def parse_param(text: str) -> tuple[str, float]:
    key, eq, val = text.partition("=")
    if not eq:
        raise ConfigError(f"expected name=value, got {text!r}")
    try:
        return key.strip(), float(val)
    except ValueError:
        raise ConfigError(f"parameter {key!r} needs a number, got {val!r}") from None


def parse_triple(text: str) -> tuple[str, str, str]:
    parts = [t.strip() for t in text.split(",")]
    if len(parts) != 3 or not all(parts):
        raise ConfigError(f"expected s,a,s', got {text!r}")
    return tuple(parts)


KEYS = {"world", "param", "vary", "p", "triple", "method", "n", "delta", "agent", "seed", "out", "s0"}


def parse_config(text: str) -> ExperimentConfig:
    values: dict[str, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not eq or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values.setdefault(key, []).append(val)

    def one(key, default=None):
        vals = values.get(key)
        if not vals:
            return default
        if len(vals) > 1:
            raise ConfigError(f"key {key!r} may appear only once")
        return vals[0]

    try:
        params = tuple(parse_param(v) for v in values.get("param", []))
        cfg = ExperimentConfig(
            world=WorldSource.parse(one("world", "builtin:chain"), params),
            vary=one("vary"),
            p_grid=tuple(float(v) for v in values.get("p", [])),
            triples="all" if values.get("triple") == ["all"] else tuple(parse_triple(v) for v in values["triple"]) if "triple" in values else "default",
            method=_parse_method(one("method", "t2")),
            n_grid=tuple(int(v) for v in values.get("n", ["100"])),
            delta_grid=tuple(float(v) for v in values.get("delta", ["0"])),
            agent=one("agent", "optimal"),
            seeds=tuple(int(v) for v in values.get("seed", ["0"])),
            out=one("out"),
            s0=None if one("s0") is None else int(one("s0")),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from None
    return cfg.validate()


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
