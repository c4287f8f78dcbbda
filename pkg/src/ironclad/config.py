"""Experiment configuration files and sweep presets.

Config grammar (INI, read with :mod:`configparser`)::

    [params]
    p_per_delta = 1        ; or p = 1e-13 (per-slot probability of one chain)
    rho = 0.25
    delta = 10000000000000
    q = auto               ; a number, or auto for the numerically optimal q
    theta = 500

    [sim]                  ; any SimConfig field except params
    miners = 50
    horizon = 10000
    adversary = convergence-prevention
    k_grid = 1, 5, 20

    [walk]                 ; any WalkConfig field
    q_tilde = 0.053

JSON files use the same sections as nested objects.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .analytics import optimal_q_numeric
from .errors import InvalidParameterError
from .params import ProtocolParams
from .simulator import SimConfig
from .walk import WalkConfig

SCHEMA_VERSION = 1
DEFAULT_DELTA = 10**13
PARAM_KEYS = ("p", "p_per_delta", "p_total", "rho", "delta", "q", "theta")

_SIM_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig) if f.name != "params"}
_WALK_FIELDS = {f.name: f for f in dataclasses.fields(WalkConfig)}


def resolve_q(q, p: float, rho: float, delta: int, theta: float) -> float:
    """Return ``q`` as a float; ``"auto"`` means the numerically optimal q for the honest rate."""
    if isinstance(q, str) and q.strip().lower() == "auto":
        if theta <= 1.0:
            return 0.0
        return optimal_q_numeric((1.0 - rho) * p, delta, theta)
    return _as_float("q", q)


def _as_float(name: str, value) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(name, f"expected a number, got {value!r}") from None


def _as_int(name: str, value) -> int:
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(name, f"expected an integer, got {value!r}") from None
    if isinstance(value, str):
        try:
            return int(value)
        except ValueError:
            pass
    if not math.isfinite(f) or f != int(f):
        raise InvalidParameterError(name, f"expected an integer, got {value!r}")
    return int(f)


def build_params(section: dict, per_chain: int = 1) -> ProtocolParams:
    """Build ``ProtocolParams`` from a ``[params]`` mapping.

    ``per_chain`` multiplies the rate given by ``p_per_delta`` or ``p`` (used
    for parallel chains, where the mapping holds the rate of one chain).
    ``p_total`` gives the summed per-slot rate of all chains directly.
    """
    unknown = set(section) - set(PARAM_KEYS)
    if unknown:
        name = sorted(unknown)[0]
        raise InvalidParameterError(name, "unknown parameter")
    for name in ("rho", "theta"):
        if name not in section:
            raise InvalidParameterError(name, "is required")
    delta = _as_int("delta", section.get("delta", DEFAULT_DELTA))
    if delta < 1:
        raise InvalidParameterError("delta", f"must be a positive integer, got {delta!r}")
    given = [k for k in ("p", "p_per_delta", "p_total") if k in section]
    if len(given) > 1:
        raise InvalidParameterError(given[0], f"give only one of {', '.join(given)}")
    total = None
    if "p_total" in section:
        total = _as_float("p_total", section["p_total"])
        p = total / per_chain
    elif "p" in section:
        p = _as_float("p", section["p"])
    elif "p_per_delta" in section:
        p = _as_float("p_per_delta", section["p_per_delta"]) / delta
    else:
        raise InvalidParameterError("p", "is required (or p_per_delta)")
    rho = _as_float("rho", section["rho"])
    theta = _as_float("theta", section["theta"])
    q = resolve_q(section.get("q", "auto"), p, rho, delta, theta)
    return ProtocolParams(p=total if total is not None else p * per_chain, rho=rho, delta=delta, q=q, theta=theta)


def _coerce(name: str, fld: dataclasses.Field, value):
    kind = fld.type if isinstance(fld.type, str) else getattr(fld.type, "__name__", str(fld.type))
    empty = value is None or (isinstance(value, str) and value.strip().lower() in ("none", ""))
    if empty and "None" in kind:
        return None
    if value is None or (empty and not kind.startswith("str")):
        raise InvalidParameterError(name, "may not be empty")
    if kind.startswith("tuple"):
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        return tuple(_as_int(name, v) for v in value)
    if kind.startswith("bool"):
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise InvalidParameterError(name, f"expected a boolean, got {value!r}")
        return bool(value)
    if kind.startswith("int"):
        return _as_int(name, value)
    if kind.startswith("float"):
        return _as_float(name, value)
    return str(value)


def build_sim_config(cfg: dict) -> SimConfig:
    sim = dict(cfg.get("sim", {}))
    fields = {}
    for name, value in sim.items():
        if name not in _SIM_FIELDS:
            raise InvalidParameterError(name, "unknown simulation setting")
        fields[name] = _coerce(name, _SIM_FIELDS[name], value)
    params = build_params(dict(cfg.get("params", {})), per_chain=int(fields.get("chains", 1)))
    return SimConfig(params=params, **fields)


def build_walk_config(cfg: dict) -> WalkConfig:
    walk = dict(cfg.get("walk", {}))
    fields = {}
    for name, value in walk.items():
        if name not in _WALK_FIELDS:
            raise InvalidParameterError(name, "unknown walk setting")
        fields[name] = _coerce(name, _WALK_FIELDS[name], value)
    for name in ("q", "q_tilde"):
        if name not in fields:
            raise InvalidParameterError(name, "is required")
    return WalkConfig(**fields)


def parse_config_text(text: str, fmt: str = "ini") -> dict:
    """Parse config text into ``{section: {key: value}}``."""
    if fmt == "json":
        data = json.loads(text)
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise InvalidParameterError("config", "JSON config must map section names to objects")
        return {k: dict(v) for k, v in data.items()}
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidParameterError("config", str(exc)) from None
    return {s: dict(cp[s]) for s in cp.sections()}


def load_config(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    fmt = "json" if path.suffix.lower() == ".json" or text.lstrip().startswith("{") else "ini"
    return parse_config_text(text, fmt)


def sim_config_sections(config: SimConfig) -> dict:
    """The inverse of :func:`build_sim_config`: fully resolved sections."""
    p = config.params
    params = {"p_total": repr(p.p), "rho": repr(p.rho), "delta": str(p.delta), "q": repr(p.q), "theta": repr(p.theta)}
    sim = {}
    for name in _SIM_FIELDS:
        v = getattr(config, name)
        if isinstance(v, tuple):
            sim[name] = ", ".join(str(x) for x in v)
        elif isinstance(v, float):
            sim[name] = repr(v)
        else:
            sim[name] = str(v)
    return {"params": params, "sim": sim}


def walk_config_sections(config: WalkConfig) -> dict:
    walk = {}
    for name in _WALK_FIELDS:
        v = getattr(config, name)
        walk[name] = repr(v) if isinstance(v, float) else str(v)
    return {"walk": walk}


def dump_config(sections: dict, fmt: str = "ini") -> str:
    if fmt == "json":
        return json.dumps(sections, indent=2, sort_keys=True) + "\n"
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for name, values in sections.items():
        cp[name] = {k: str(v) for k, v in values.items()}
    buf = io.StringIO()
    buf.write(f"# schema: ironclad-config v{SCHEMA_VERSION}\n")
    cp.write(buf)
    return buf.getvalue()


@dataclass(frozen=True)
class ExperimentPreset:
    """A named, versioned grid of simulation points."""

    name: str
    version: int
    description: str
    points: tuple[SimConfig, ...]

    def keys(self) -> list[str]:
        return [point_key(c) for c in self.points]


def point_key(config: SimConfig) -> str:
    """Stable key identifying a grid point, used to resume sweeps."""
    p = config.params
    return (
        f"rho={p.rho!r};pd={p.p * p.delta / config.chains!r};theta={p.theta!r};q={p.q!r};"
        f"adv={config.adversary};m={config.chains};n={config.miners};T={config.horizon};seed={config.seed}"
    )


RHO_GRID = tuple(round(0.05 * i, 2) for i in range(10))
P_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1, 2, 5, 10, 20, 50, 100)


def _point(pd: float, rho: float, theta: float, chains: int, base: dict) -> SimConfig:
    params = build_params({"p_per_delta": pd, "rho": rho, "delta": DEFAULT_DELTA, "q": "auto" if theta > 1 else 0, "theta": theta}, per_chain=chains)
    return SimConfig(params=params, chains=chains, **base)


def make_preset(name: str, seed: int = 0, miners: int = 50, horizon: int = 10_000) -> ExperimentPreset:
    """Build a sweep preset.

    ``single-adv`` and ``single-c`` are the Ironclad rho- and rate-sweeps
    (theta 500, optimal q); the ``-nakamoto`` variants use plain blocks; the
    ``parallel-`` variants use ten chains at the same per-chain rate; the
    ``-heavy`` variants use 1000 miners and ten times the horizon.
    """
    heavy = name.endswith("-heavy")
    base_name = name[: -len("-heavy")] if heavy else name
    if heavy:
        miners, horizon = 1000, 10 * horizon
    base = dict(miners=miners, horizon=horizon, adversary="convergence-prevention", seed=seed)
    theta = 1.0 if "nakamoto" in base_name else 500.0
    chains = 10 if base_name.startswith("parallel") else 1
    kind = base_name.replace("-nakamoto", "").replace("parallel-", "single-")
    if kind == "single-adv":
        pd = 2.0 if chains > 1 else 1.0
        points = tuple(_point(pd, rho, theta, chains, base) for rho in RHO_GRID)
        desc = f"rho sweep at {pd:g} blocks per delta per chain"
    elif kind == "single-c":
        points = tuple(_point(pd, 0.25, theta, chains, base) for pd in P_GRID)
        desc = "block-rate sweep"
    else:
        raise KeyError(name)
    return ExperimentPreset(name, 1, desc, points)


PRESET_NAMES = tuple(
    f"{prefix}{kind}{variant}{heavy}"
    for prefix in ("single-", "parallel-")
    for kind in ("adv", "c")
    for variant in ("", "-nakamoto")
    for heavy in ("", "-heavy")
)
