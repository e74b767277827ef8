"""Line-oriented world files and random world generation.

Format::

    # comment
    states 3
    actions 2
    observations 2              # optional
    names states s1 s2 s3       # optional name tables
    names actions a b
    t <s> <a> <s'> <prob>
    o <s> <obs> <prob>

Identifiers are integer indices or names from the tables. Probabilities are
plain decimal literals; parsing goes through ``float`` and is therefore
locale-independent.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mdp import ObservableWorld, World, WorldError


class WorldFileError(WorldError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


def parse_world(text: str, check: bool = True) -> World | ObservableWorld:
    sizes: dict[str, int] = {}
    names: dict[str, tuple[str, ...]] = {}
    trans: list[tuple[int, list[str]]] = []
    obs: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0]
        if head in ("states", "actions", "observations"):
            if len(tok) != 2 or not tok[1].isdigit() or int(tok[1]) <= 0:
                raise WorldFileError(f"expected '{head} <positive int>'", lineno)
            sizes[head] = int(tok[1])
        elif head == "names":
            if len(tok) < 3 or tok[1] not in ("states", "actions", "observations"):
                raise WorldFileError("expected 'names states|actions|observations <name>...'", lineno)
            names[tok[1]] = tuple(tok[2:])
        elif head == "t":
            if len(tok) != 5:
                raise WorldFileError("expected 't <s> <a> <s_next> <prob>'", lineno)
            trans.append((lineno, tok[1:]))
        elif head == "o":
            if len(tok) != 4:
                raise WorldFileError("expected 'o <s> <obs> <prob>'", lineno)
            obs.append((lineno, tok[1:]))
        else:
            raise WorldFileError(f"unknown directive {head!r}", lineno)
    for req in ("states", "actions"):
        if req not in sizes:
            raise WorldFileError(f"missing '{req}' header")
    nS, nA = sizes["states"], sizes["actions"]
    nO = sizes.get("observations")
    if obs and nO is None:
        raise WorldFileError("'o' lines require an 'observations' header")
    for key, n in (("states", nS), ("actions", nA), ("observations", nO)):
        if key in names and len(names[key]) != n:
            raise WorldFileError(f"{len(names[key])} {key} names for {n} {key}")

    def index(tok, key, n, lineno):
        table = names.get(key, ())
        if tok in table:
            return table.index(tok)
        if tok.isdigit() and int(tok) < n:
            return int(tok)
        raise WorldFileError(f"unknown {key[:-1]} {tok!r}", lineno)

    def prob(tok, lineno):
        try:
            v = float(tok)
        except ValueError:
            raise WorldFileError(f"bad probability {tok!r}", lineno) from None
        if not 0.0 <= v <= 1.0:
            raise WorldFileError(f"probability {tok} outside [0, 1]", lineno)
        return v

    P = np.zeros((nS, nA, nS))
    for lineno, (s, a, t, p) in trans:
        P[index(s, "states", nS, lineno), index(a, "actions", nA, lineno), index(t, "states", nS, lineno)] += prob(p, lineno)
    world = World(P, names.get("states", ()), names.get("actions", ()), check=check)
    if nO is None:
        return world
    O = np.zeros((nS, nO))
    for lineno, (s, o, p) in obs:
        O[index(s, "states", nS, lineno), index(o, "observations", nO, lineno)] += prob(p, lineno)
    return ObservableWorld(world, O, names.get("observations", ()), check=check)


def load_world(path: str | Path, check: bool = True) -> World | ObservableWorld:
    return parse_world(Path(path).read_text(encoding="utf-8"), check=check)


def format_world(world: World | ObservableWorld) -> str:
    base = world.base if isinstance(world, ObservableWorld) else world
    out = [f"states {base.n_states}", f"actions {base.n_actions}"]
    if isinstance(world, ObservableWorld):
        out.append(f"observations {world.n_observations}")
    out.append("names states " + " ".join(base.state_names))
    out.append("names actions " + " ".join(base.action_names))
    if isinstance(world, ObservableWorld):
        out.append("names observations " + " ".join(world.observation_names))
    for s, a, t in zip(*np.nonzero(base.kernel)):
        out.append(f"t {base.state_names[s]} {base.action_names[a]} {base.state_names[t]} {float(base.kernel[s, a, t])!r}")
    if isinstance(world, ObservableWorld):
        for s, o in zip(*np.nonzero(world.obs_kernel)):
            out.append(f"o {base.state_names[s]} {world.observation_names[o]} {float(world.obs_kernel[s, o])!r}")
    return "\n".join(out) + "\n"


def save_world(world, path: str | Path) -> None:
    Path(path).write_text(format_world(world), encoding="utf-8")


def random_world(seed: int, n_states: int, n_actions: int, max_support: int = 3, grain: int = 1000) -> World:
    """Random communicating world: sparse random rows plus a forced Hamiltonian cycle.

    Probabilities are multiples of ``1/grain`` so the written file is exact.
    The cycle visits the states in a random order and uses action ``i % |A|``
    for the ``i``-th edge.
    """
    if n_states < 1 or n_actions < 1:
        raise ValueError("sizes must be positive")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_states)
    cycle = {int(order[i]): (i % n_actions, int(order[(i + 1) % n_states])) for i in range(n_states)}
    counts = np.zeros((n_states, n_actions, n_states), dtype=np.int64)
    for s in range(n_states):
        for a in range(n_actions):
            k = int(rng.integers(1, min(max_support, n_states) + 1))
            support = rng.choice(n_states, size=k, replace=False)
            forced = cycle[s][1] if cycle[s][0] == a else None
            if forced is not None and forced not in support:
                support[0] = forced
            # every support entry gets at least one grain
            weights = rng.dirichlet(np.ones(k))
            c = 1 + np.floor(weights * (grain - k)).astype(np.int64)
            c[0] += grain - c.sum()
            counts[s, a, support] = c
    return World(counts / grain, tuple(f"s{i}" for i in range(n_states)), tuple(f"a{i}" for i in range(n_actions)))
