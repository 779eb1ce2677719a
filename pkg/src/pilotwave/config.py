"""Experiment configuration files (TOML).

Numbers may be written as plain TOML numbers or as strings holding a small
arithmetic expression in ``pi``, ``e`` and ``sqrt``; implicit multiplication
is accepted, so angles can be written the way they are usually printed::

    theta = "16pi/5"
    magnitude = "1/sqrt(6)"
    phi = "2.2pi"

See ``configs/`` for complete examples; the README documents every key.
"""
import ast
import hashlib
import math
import operator
import re
import sys
from dataclasses import asdict, dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .errors import ConfigError, StateError
from .states import EigenstateSpec, SuperpositionState, WindowedState

MIN_CELLS_PER_AXIS = 8

_IMPLICIT = [
    (re.compile(r"(\d|\.)\s*(?=pi\b|e\b|sqrt\b|\()"), r"\1*"),
    (re.compile(r"\)\s*(?=[\w(])"), ")*"),
    (re.compile(r"\bpi\s*(?=[\d(]|sqrt\b)"), "pi*"),
]
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt}


def parse_real(value, where="value"):
    """A real number from a TOML number or an expression string."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a number or expression string, got {value!r}")
    text = value.strip().replace("π", "pi")
    for pattern, repl in _IMPLICIT:
        text = pattern.sub(repl, text)
    try:
        tree = ast.parse(text, mode="eval")
        result = _eval(tree.body)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError, TypeError) as exc:
        raise ConfigError(f"{where}: cannot evaluate {value!r} ({exc})") from None
    if not math.isfinite(result):
        raise ConfigError(f"{where}: {value!r} is not finite")
    return float(result)


def _eval(node):
    if isinstance(node, ast.Constant):
        if isinstance(node.value, complex):
            raise ConfigError("complex values are not allowed")
        if isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return node.value
        raise ConfigError(f"unsupported constant {node.value!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_eval(node.operand))
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.Name) and node.id == "j":
        raise ConfigError("complex values are not allowed")
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
        return _FUNCS[node.func.id](_eval(node.args[0]))
    raise ConfigError(f"unsupported expression element {ast.dump(node)[:40]}")


def _real_list(value, where):
    if not isinstance(value, list):
        value = [value]
    return [parse_real(v, f"{where}[{i}]") for i, v in enumerate(value)]


def _int(value, where, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {value}")
    return value


def _section(doc, name, required=False):
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _check_keys(sec, allowed, where):
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")


@dataclass
class ParticleConfig:
    K: float
    theta: float = 0.0
    phi: float = 0.0


@dataclass
class TermConfig:
    magnitude: float
    phase: float
    particles: list


@dataclass
class GridConfig:
    lo: list = field(default_factory=lambda: [-8.0])
    hi: list = field(default_factory=lambda: [8.0])
    n_cells: list = field(default_factory=lambda: [64])
    subsample: int = 4
    quad_order: int = 0


@dataclass
class Rho0Config:
    kind: str = "uniform"
    support_lo: list = field(default_factory=lambda: [-4.0])
    support_hi: list = field(default_factory=lambda: [4.0])
    mu: list = field(default_factory=list)
    sigma: list = field(default_factory=list)


@dataclass
class ToleranceConfig:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-8
    min_step: float = 1e-12
    node_gap: float = 60.0
    max_halvings: int = 40
    h_increase: float = 0.05
    norm_drift: float = 1e-3
    identity: float = 1e-6
    h_exact_drift: float = 0.02
    equilibrium_h: float = 0.01
    failed_fraction: float = 1e-3


@dataclass
class SamplingConfig:
    y_lo: list = field(default_factory=lambda: [-6.0])
    y_hi: list = field(default_factory=lambda: [6.0])
    n: list = field(default_factory=lambda: [601])
    t: float = 0.0


@dataclass
class TrajectoryConfig:
    starts: list = field(default_factory=list)
    t0: float = 0.0
    t1: float = 1.0
    samples: int = 51


@dataclass
class ExperimentConfig:
    terms: list
    n_particles: int
    seed: int = 0
    output_dir: str = "."
    auto_normalize: bool = False
    window_L: float = 0.0
    window_m: int = 1
    grid: GridConfig = field(default_factory=GridConfig)
    rho0: Rho0Config = field(default_factory=Rho0Config)
    times: list = field(default_factory=lambda: [0.0])
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    trajectories: TrajectoryConfig = field(default_factory=TrajectoryConfig)

    def build_state(self):
        terms = []
        for term in self.terms:
            coeff = term.magnitude * complex(math.cos(term.phase), math.sin(term.phase))
            specs = [EigenstateSpec(p.K, p.theta, p.phi) for p in term.particles]
            terms.append((coeff, specs))
        try:
            state = SuperpositionState(terms, auto_normalize=self.auto_normalize)
        except StateError as exc:
            raise ConfigError(f"state: {exc}") from None
        if self.window_L > 0:
            state = WindowedState(state, self.window_L, self.window_m)
        return state

    def to_dict(self):
        d = asdict(self)
        out = {
            "run": {"seed": d["seed"], "output_dir": d["output_dir"],
                    "auto_normalize": d["auto_normalize"]},
            "state": {"n_particles": d["n_particles"], "window_L": d["window_L"],
                      "window_m": d["window_m"], "terms": d["terms"]},
            "grid": d["grid"],
            "rho0": d["rho0"],
            "times": {"values": d["times"]},
            "tolerances": d["tolerances"],
            "sampling": d["sampling"],
            "trajectories": d["trajectories"],
        }
        return out

    def dumps(self):
        return tomli_w.dumps(self.to_dict())

    def digest(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def loads(text):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    return from_dict(doc)


def load(path):
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def _parse_terms(state):
    raw_terms = state.get("terms", [])
    if not isinstance(raw_terms, list):
        raise ConfigError("state.terms must be an array of tables")
    if not raw_terms:
        raise ConfigError("state must contain at least one term")
    terms = []
    for i, t in enumerate(raw_terms):
        where = f"state.terms[{i}]"
        if not isinstance(t, dict):
            raise ConfigError(f"{where}: must be a table")
        _check_keys(t, ("magnitude", "phase", "particles"), where)
        if "magnitude" not in t:
            raise ConfigError(f"{where}.magnitude: missing")
        mag = parse_real(t["magnitude"], f"{where}.magnitude")
        if mag < 0:
            raise ConfigError(f"{where}.magnitude: must be >= 0")
        phase = parse_real(t.get("phase", 0.0), f"{where}.phase")
        parts = t.get("particles")
        if not isinstance(parts, list) or not parts:
            raise ConfigError(f"{where}.particles: must be a non-empty array of {{K, theta, phi}}")
        plist = []
        for g, p in enumerate(parts):
            pw = f"{where}.particles[{g}]"
            if not isinstance(p, dict) or "K" not in p:
                raise ConfigError(f"{pw}: needs at least K")
            _check_keys(p, ("K", "theta", "phi"), pw)
            plist.append(ParticleConfig(parse_real(p["K"], f"{pw}.K"),
                                        parse_real(p.get("theta", 0.0), f"{pw}.theta"),
                                        parse_real(p.get("phi", 0.0), f"{pw}.phi")))
        terms.append(TermConfig(mag, phase, plist))
    return terms


def from_dict(doc):
    _check_keys(doc, ("run", "state", "grid", "rho0", "times", "tolerances", "sampling",
                      "trajectories"), "config")
    run = _section(doc, "run")
    _check_keys(run, ("seed", "output_dir", "auto_normalize"), "run")
    state = _section(doc, "state", required=True)
    _check_keys(state, ("n_particles", "terms", "window_L", "window_m"), "state")
    terms = _parse_terms(state)
    n_particles = _int(state.get("n_particles", len(terms[0].particles)), "state.n_particles", 1)
    for i, t in enumerate(terms):
        if len(t.particles) != n_particles:
            raise ConfigError(f"state.terms[{i}].particles: expected {n_particles} entries, "
                              f"got {len(t.particles)}")

    seed = _int(run.get("seed", 0), "run.seed", 0)
    if seed >= 2 ** 64:
        raise ConfigError("run.seed: must fit in 64 bits")
    auto = run.get("auto_normalize", False)
    if not isinstance(auto, bool):
        raise ConfigError("run.auto_normalize: expected true or false")
    output_dir = run.get("output_dir", ".")
    if not isinstance(output_dir, str):
        raise ConfigError("run.output_dir: expected a string")

    window_L = parse_real(state.get("window_L", 0.0), "state.window_L")
    window_m = _int(state.get("window_m", 1), "state.window_m", 1)
    if window_L < 0:
        raise ConfigError("state.window_L: must be >= 0 (0 disables the window)")

    g = _section(doc, "grid")
    _check_keys(g, ("lo", "hi", "n_cells", "subsample", "quad_order"), "grid")
    grid = GridConfig(
        lo=_real_list(g.get("lo", [-8.0] * n_particles), "grid.lo"),
        hi=_real_list(g.get("hi", [8.0] * n_particles), "grid.hi"),
        n_cells=[_int(v, f"grid.n_cells[{i}]", 1)
                 for i, v in enumerate(_as_list(g.get("n_cells", [64] * n_particles)))],
        subsample=_int(g.get("subsample", 4), "grid.subsample", 2),
        quad_order=_int(g.get("quad_order", 0), "grid.quad_order", 0),
    )

    r = _section(doc, "rho0")
    _check_keys(r, ("kind", "support_lo", "support_hi", "mu", "sigma"), "rho0")
    kind = r.get("kind", "uniform")
    if kind not in ("uniform", "gaussian", "equilibrium"):
        raise ConfigError(f"rho0.kind: expected uniform, gaussian or equilibrium, got {kind!r}")
    rho0 = Rho0Config(
        kind=kind,
        support_lo=_real_list(r.get("support_lo", [-4.0] * n_particles), "rho0.support_lo"),
        support_hi=_real_list(r.get("support_hi", [4.0] * n_particles), "rho0.support_hi"),
        mu=_real_list(r.get("mu", []), "rho0.mu") if "mu" in r else [],
        sigma=_real_list(r.get("sigma", []), "rho0.sigma") if "sigma" in r else [],
    )
    if kind == "gaussian" and (len(rho0.mu) != n_particles or len(rho0.sigma) != n_particles):
        raise ConfigError("rho0: gaussian needs mu and sigma with one entry per particle")

    tm = _section(doc, "times")
    _check_keys(tm, ("values",), "times")
    times = _real_list(tm.get("values", [0.0]), "times.values")

    tol = _section(doc, "tolerances")
    defaults = ToleranceConfig()
    _check_keys(tol, asdict(defaults).keys(), "tolerances")
    tolerances = ToleranceConfig(**{
        k: (_int(tol[k], f"tolerances.{k}", 1) if k == "max_halvings"
            else parse_real(tol[k], f"tolerances.{k}"))
        for k in tol
    })

    s = _section(doc, "sampling")
    _check_keys(s, ("y_lo", "y_hi", "n", "t"), "sampling")
    sampling = SamplingConfig(
        y_lo=_real_list(s.get("y_lo", [-6.0] * n_particles), "sampling.y_lo"),
        y_hi=_real_list(s.get("y_hi", [6.0] * n_particles), "sampling.y_hi"),
        n=[_int(v, f"sampling.n[{i}]", 2)
           for i, v in enumerate(_as_list(s.get("n", [601] * n_particles)))],
        t=parse_real(s.get("t", 0.0), "sampling.t"),
    )

    tr = _section(doc, "trajectories")
    _check_keys(tr, ("starts", "t0", "t1", "samples"), "trajectories")
    starts = []
    for i, st in enumerate(tr.get("starts", [])):
        pt = _real_list(st, f"trajectories.starts[{i}]")
        if len(pt) != n_particles:
            raise ConfigError(f"trajectories.starts[{i}]: expected {n_particles} coordinates")
        starts.append(pt)
    trajectories = TrajectoryConfig(
        starts=starts,
        t0=parse_real(tr.get("t0", 0.0), "trajectories.t0"),
        t1=parse_real(tr.get("t1", 1.0), "trajectories.t1"),
        samples=_int(tr.get("samples", 51), "trajectories.samples", 2),
    )

    _check_dims(n_particles, {
        "grid.lo": grid.lo, "grid.hi": grid.hi, "grid.n_cells": grid.n_cells,
        "rho0.support_lo": rho0.support_lo, "rho0.support_hi": rho0.support_hi,
        "sampling.y_lo": sampling.y_lo, "sampling.y_hi": sampling.y_hi, "sampling.n": sampling.n,
    })
    for i, (lo, hi) in enumerate(zip(grid.lo, grid.hi)):
        if not hi > lo:
            raise ConfigError(f"grid: axis {i} needs hi > lo")
    for i, n in enumerate(grid.n_cells):
        if n < MIN_CELLS_PER_AXIS:
            raise ConfigError(f"grid too coarse: grid.n_cells[{i}] = {n}, "
                              f"need at least {MIN_CELLS_PER_AXIS} cells per axis")
    if any(t < 0 for t in times):
        raise ConfigError("times.values: sample times must be >= 0")
    if rho0.kind == "gaussian" and any(s <= 0 for s in rho0.sigma):
        raise ConfigError("rho0.sigma: must be positive")

    cfg = ExperimentConfig(terms, n_particles, seed, output_dir, auto, window_L, window_m, grid,
                           rho0, times, tolerances, sampling, trajectories)
    cfg.build_state()  # validates coefficients and angles
    return cfg


def _check_dims(n_particles, lists):
    for name, values in lists.items():
        if len(values) != n_particles:
            raise ConfigError(f"dimension mismatch: {name} has {len(values)} entries but the "
                              f"state has {n_particles} particle(s)")


def _as_list(v):
    return v if isinstance(v, list) else [v]
