"""Scenario registry and run orchestration behind the command-line front end.

A run configuration is a nested mapping (parsed from TOML or a manifest's
JSON echo). Sections:

``scenario``, ``engine``, ``initial_state``, ``outputs``, ``seed``, ``n_traj``
    top-level keys
``[parameters]``
    rates in MHz; ``A_over_B`` keys are resolved as ``A = value * B`` and
    ``wc`` as ``w = wc / sqrt(2)``
``[model]``
    structural options (``n``, ``boundary``, ``connectivity``, ``collective``,
    ``n_atoms``, ``reduction``)
``[grid]``
    ``t0``, ``t1``, ``n_steps``, optional ``unit`` and ``dt``
``[jitter]``, ``[spam]``, ``[shots]``, ``[scan]``
    optional post-processing and parameter scans
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dynamics as dyn
from . import measurement as meas
from . import models
from . import spectra
from .operators import (
    Operator,
    PureState,
    SectorBasis,
    TensorBasis,
    antisymmetric_pair_state,
    basis_state,
    bloch_state,
    parse_momentum,
    symmetric_pair_state,
)

__all__ = [
    "ConfigError",
    "SCENARIOS",
    "ENGINES",
    "resolve_parameters",
    "resolve_grid",
    "parse_state",
    "resolve_observables",
    "build_scenario",
    "simulate",
    "run_evolve",
    "run_sweep",
    "run_ep",
    "EvolveResult",
]

ENGINES = ("lindblad", "nonhermitian", "trajectories")
DEFAULT_N_TRAJ = 1000
SPAM_DEFAULT_TRACKS = ("loss_fraction",)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    required: tuple
    defaults: dict
    model_options: dict
    engines: tuple


@dataclass
class Built:
    """Models for one resolved scenario; either member may be ``None``."""

    lindblad: Optional[models.LindbladModel]
    nh: Optional[Operator]


SCENARIOS: dict[str, ScenarioSpec] = {
    "single_atom_loss": ScenarioSpec(
        "single_atom_loss", ("w", "gamma"), {}, {}, ENGINES),
    "pair_exchange": ScenarioSpec(
        "pair_exchange", ("w", "gamma"), {"V": 0.0}, {"collective": True}, ENGINES),
    "selective_pair": ScenarioSpec(
        "selective_pair", ("w0", "gamma"),
        {"w": 0.0, "V_up": 0.0, "V_down": 0.0, "Delta": 0.0},
        {"collective": True, "n_atoms": 2, "reduction": "none"}, ENGINES),
    "effective_pair": ScenarioSpec(
        "effective_pair", ("w", "gamma_eff"), {}, {}, ("nonhermitian",)),
    "chain": ScenarioSpec(
        "chain", ("n", "w", "gamma_eff"), {}, {"n": 7, "boundary": "periodic"}, ("nonhermitian",)),
    "distillation": ScenarioSpec(
        "distillation", ("n", "w0", "gamma", "V"), {"w": 0.0, "Delta": 0.0},
        {"n": 3, "boundary": "periodic", "connectivity": "nearest-neighbor", "collective": True},
        ENGINES),
}

_PARAM_NAMES = {"w", "w0", "gamma", "V", "V_up", "V_down", "Delta", "gamma_eff"}
_INTERACTIONS = ("V", "V_up", "V_down")


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a table")
    return sec


def _number(path: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return float(value)


def resolve_parameters(raw: dict, spec: ScenarioSpec) -> dict:
    """Turn ``[parameters]`` (MHz values and ratios) into plain MHz values."""
    vals: dict[str, float] = {}
    pending: dict[str, tuple[str, float, str]] = {}
    for key, value in raw.items():
        path = f"parameters.{key}"
        v = _number(path, value)
        if "_over_" in key:
            target, ref = key.split("_over_", 1)
            if target in pending or target in vals:
                raise ConfigError(path, f"{target} given more than once")
            pending[target] = (ref, v, path)
        else:
            if key in vals or key in pending:
                raise ConfigError(path, f"{key} given more than once")
            vals[key] = v
    while pending:
        progress = False
        for target, (ref, v, path) in list(pending.items()):
            if ref in vals:
                vals[target] = v * vals[ref]
            elif ref == "wc" and "w" in vals:
                vals[target] = v * math.sqrt(2.0) * vals["w"]
            else:
                continue
            del pending[target]
            progress = True
        if not progress:
            target, (ref, _, path) = next(iter(pending.items()))
            raise ConfigError(path, f"reference parameter {ref!r} is not defined")
    if "wc" in vals:
        if "w" in vals:
            raise ConfigError("parameters.wc", "give either w or wc, not both")
        vals["w"] = vals.pop("wc") / math.sqrt(2.0)
    if "gamma_eff" in spec.required and "gamma_eff" not in vals and {"w0", "gamma"} <= vals.keys():
        vals["gamma_eff"] = models.gamma_eff(vals.pop("w0"), vals.pop("gamma"))
    for key in vals:
        if key not in _PARAM_NAMES:
            raise ConfigError(f"parameters.{key}", f"unknown parameter for scenario {spec.name!r}")
    out = dict(spec.defaults)
    out.update(vals)
    for key in spec.required:
        if key != "n" and key not in out:
            raise ConfigError(f"parameters.{key}", f"required by scenario {spec.name!r}")
    for key in ("gamma", "gamma_eff"):
        if out.get(key, 0.0) < 0:
            raise ConfigError(f"parameters.{key}", "must be non-negative")
    return out


def _model_options(cfg: dict, spec: ScenarioSpec) -> dict:
    raw = _section(cfg, "model")
    opts = dict(spec.model_options)
    for key, value in raw.items():
        if key not in spec.model_options:
            raise ConfigError(f"model.{key}", f"unknown option for scenario {spec.name!r}")
        opts[key] = value
    return opts


def build_scenario(name: str, params: dict, opts: dict) -> Built:
    try:
        return _build(name, params, opts)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError("parameters", str(exc)) from exc


def _build(name: str, params: dict, opts: dict) -> Built:
    if name == "single_atom_loss":
        model = models.build_single_atom_lossy(params["w"], params["gamma"])
        return Built(model, model.manifold_hamiltonian())
    if name == "pair_exchange":
        p = models.PairParams(w=params["w"], gamma=params["gamma"], V=params["V"])
        model = models.build_pair_exchange_lindblad(p, collective=bool(opts["collective"]))
        return Built(model, model.manifold_hamiltonian())
    if name == "selective_pair":
        p = models.PairParams(w=params["w"], w0=params["w0"], gamma=params["gamma"],
                              V_up=params["V_up"], V_down=params["V_down"], Delta=params["Delta"])
        n_atoms, reduction = int(opts["n_atoms"]), opts["reduction"]
        if n_atoms == 1:
            model = models.build_selective_single_atom(p.w, p.w0, p.gamma, p.Delta)
            return Built(model, model.manifold_hamiltonian())
        if n_atoms != 2:
            raise ConfigError("model.n_atoms", "must be 1 or 2")
        if reduction == "none":
            model = models.build_selective_pair_full(p, collective=bool(opts["collective"]))
            return Built(model, model.manifold_hamiltonian())
        if reduction == "sector":
            return Built(None, models.build_pair_spin_nh_full(p))
        if reduction == "reduced":
            return Built(None, models.build_pair_spin_nh_reduced(p))
        raise ConfigError("model.reduction", "must be one of none, sector, reduced")
    if name == "effective_pair":
        return Built(None, models.build_pair_effective_nh(params["w"], params["gamma_eff"]))
    if name == "chain":
        cp = models.ChainParams(n=int(opts["n"]), w=params["w"], gamma_eff=params["gamma_eff"],
                                boundary=opts["boundary"])
        return Built(None, models.build_chain_nh(cp))
    if name == "distillation":
        cp = models.ChainParams(n=int(opts["n"]), V=params["V"], w=params["w"], w0=params["w0"],
                                gamma=params["gamma"], Delta=params["Delta"],
                                boundary=opts["boundary"], connectivity=opts["connectivity"])
        model = models.build_distillation_model(cp, collective=bool(opts["collective"]))
        return Built(model, model.manifold_hamiltonian())
    raise ConfigError("scenario", f"unknown scenario {name!r}")


_UNITS = {
    "us": lambda p: 1.0,
    "2pi_gamma": lambda p: 1.0 / (2.0 * math.pi * p["gamma"]),
    "2pi_w": lambda p: 1.0 / (2.0 * math.pi * p["w"]),
    "pi_time": lambda p: dyn.pi_time(p["w"]),
}


def resolve_grid(cfg: dict, params: dict) -> tuple[dyn.TimeGrid, Optional[float]]:
    """``[grid]`` to a :class:`TimeGrid` in μs plus an optional substep ``dt``."""
    g = _section(cfg, "grid")
    unit = g.get("unit", "us")
    if unit not in _UNITS:
        raise ConfigError("grid.unit", f"must be one of {sorted(_UNITS)}")
    try:
        scale = _UNITS[unit](params)
    except (KeyError, ZeroDivisionError, ValueError):
        raise ConfigError("grid.unit", f"unit {unit!r} needs a positive reference rate") from None
    if "t1" not in g:
        raise ConfigError("grid.t1", "required")
    n_steps = g.get("n_steps", 100)
    if isinstance(n_steps, bool) or not isinstance(n_steps, int) or n_steps < 1:
        raise ConfigError("grid.n_steps", "must be a positive integer")
    t0 = _number("grid.t0", g.get("t0", 0.0)) * scale
    t1 = _number("grid.t1", g["t1"]) * scale
    try:
        grid = dyn.TimeGrid(t0, t1, n_steps)
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None
    dt = g.get("dt")
    return grid, (None if dt is None else _number("grid.dt", dt))


_PAIR_LABEL = re.compile(r"^([+-])(.+)$")


def parse_state(text: str, basis) -> PureState:
    """Named or configuration initial state on ``basis``.

    Accepts a configuration (``"00"``, ``"down-up-down"``), a sector label,
    ``"+rs"``/``"-rs"`` pair combinations, ``"W:k=2pi/3"``, ``"polarized"``
    and ``"single-flip:<site>"``.
    """
    text = text.strip()
    if isinstance(basis, SectorBasis):
        return basis_state(basis, text)
    if text.startswith("W:"):
        key, _, value = text[2:].partition("=")
        if key.strip() != "k":
            raise ValueError(f"expected W:k=<momentum>, got {text!r}")
        return bloch_state(basis, parse_momentum(value))
    if text == "polarized":
        return basis_state(basis, ("up",) * basis.n_sites)
    if text.startswith("single-flip:"):
        site = int(text.split(":", 1)[1])
        if not 0 <= site < basis.n_sites:
            raise ValueError(f"site {site} out of range")
        labels = ["up"] * basis.n_sites
        labels[site] = "down"
        return basis_state(basis, tuple(labels))
    mt = _PAIR_LABEL.match(text)
    if mt and basis.n_sites == 2:
        r, s = basis.parse(mt.group(2))
        fn = symmetric_pair_state if mt.group(1) == "+" else antisymmetric_pair_state
        return fn(r, s, basis)
    return basis_state(basis, text)


_POP = re.compile(r"^P_(.+)_site(\d+)$")
_BLOCH = re.compile(r"^overlap_W([+-]?\d+)$")


def _observable(name: str, basis, n_sites: int) -> dyn.Observable:
    if name.startswith("pop:"):
        label = name[4:]
        if isinstance(basis, SectorBasis):
            return dyn.Observable(name, "diag", np.eye(basis.dim)[basis.index(label)])
        return dyn.Observable.configuration(basis, label, name)
    if name.startswith("overlap:"):
        return dyn.Observable.projector(parse_state(name[8:], basis), name)
    if isinstance(basis, SectorBasis):
        raise KeyError(f"{name!r} needs a tensor basis; use pop:<label> or overlap:<state>")
    mt = _POP.match(name)
    if mt:
        return dyn.Observable.population(basis, mt.group(1), int(mt.group(2)), name)
    mt = _BLOCH.match(name)
    if mt:
        j = int(mt.group(1))
        return dyn.Observable.projector(bloch_state(basis, 2 * math.pi * j / n_sites), name)
    if name == "loss_fraction":
        return dyn.Observable.level_fraction(basis, "g", name)
    if name == "loss_any":
        return dyn.Observable.any_level(basis, "g", name)
    if name.endswith("_fraction"):
        return dyn.Observable.level_fraction(basis, name[: -len("_fraction")], name)
    raise KeyError(f"unknown observable {name!r}")


def resolve_observables(names, basis, engine: str):
    """Observables for ``names`` plus post-hoc derived tracks.

    Returns ``(observables, derived)`` where ``derived`` maps a track name to
    a function of the recorded tracks. ``<x>_normalized`` divides ``x`` by the
    surviving norm; on the non-Hermitian engine, where ``g`` is not part of
    the basis, ``loss_any`` is ``1 - norm`` (and so is ``loss_fraction`` for
    one atom).
    """
    norm_key = "trace" if engine == "lindblad" else "norm"
    n_sites = getattr(basis, "n_sites", 0)
    has_g = isinstance(basis, TensorBasis) and "g" in basis.levels
    obs, derived, seen = [], {}, set()

    def add(name):
        if name in seen or name in ("norm", "trace"):
            return
        seen.add(name)
        obs.append(_observable(name, basis, n_sites))

    for i, name in enumerate(names):
        path = f"outputs[{i}]"
        try:
            if name in ("norm", "trace"):
                if engine == "trajectories":
                    raise KeyError(f"{name!r} is identically 1 for normalized trajectories")
                continue
            if name.endswith("_normalized"):
                base = name[: -len("_normalized")]
                add(base)
                derived[name] = (lambda tr, b=base: tr[b] / tr[norm_key]) if engine != "trajectories" \
                    else (lambda tr, b=base: tr[b])
                continue
            if not has_g and name in ("loss_any", "loss_fraction"):
                if engine != "nonhermitian" or (name == "loss_fraction" and n_sites != 1):
                    raise KeyError(f"{name!r} needs the loss level g; use the lindblad engine")
                derived[name] = lambda tr: 1.0 - tr["norm"]
                continue
            add(name)
        except (KeyError, ValueError, IndexError, TypeError) as exc:
            raise ConfigError(path, str(exc.args[0] if exc.args else exc)) from None
    return obs, derived


@dataclass
class EvolveResult:
    times: np.ndarray
    tracks: dict
    meta: dict = field(default_factory=dict)
    scan: Optional[dict] = None


def _prepare(cfg: dict, raw_params: Optional[dict] = None):
    name = cfg.get("scenario")
    if name not in SCENARIOS:
        raise ConfigError("scenario", f"must be one of {sorted(SCENARIOS)}")
    spec = SCENARIOS[name]
    engine = cfg.get("engine", "lindblad")
    if engine not in ENGINES:
        raise ConfigError("engine", f"must be one of {list(ENGINES)}")
    if engine not in spec.engines:
        raise ConfigError("engine", f"scenario {name!r} supports {list(spec.engines)}")
    params = resolve_parameters(_section(cfg, "parameters") if raw_params is None else raw_params, spec)
    opts = _model_options(cfg, spec)
    if name == "selective_pair" and opts.get("reduction", "none") != "none" and engine != "nonhermitian":
        raise ConfigError("engine", "sector-reduced models run on the nonhermitian engine only")
    return spec, engine, params, opts


def simulate(cfg: dict, engine: Optional[str] = None, dt: Optional[float] = None,
             params_override: Optional[dict] = None, seed: Optional[int] = None,
             jobs: int = 1) -> EvolveResult:
    """One deterministic (or seeded) simulation without post-processing."""
    cfg = dict(cfg)
    if engine is not None:
        cfg["engine"] = engine
    raw = dict(_section(cfg, "parameters"))
    if params_override:
        for key, value in params_override.items():
            _drop_param(raw, key)
            raw[key] = value
    spec, engine, params, opts = _prepare(cfg, raw)
    grid, cfg_dt = resolve_grid(cfg, params)
    dt = cfg_dt if dt is None else dt
    built = build_scenario(spec.name, params, opts)
    model = built.lindblad
    basis = built.nh.basis if engine == "nonhermitian" else model.basis
    if "initial_state" not in cfg:
        raise ConfigError("initial_state", "required")
    try:
        psi0 = parse_state(str(cfg["initial_state"]), basis)
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError("initial_state", str(exc.args[0] if exc.args else exc)) from None
    names = cfg.get("outputs", [])
    if not isinstance(names, list) or not names:
        raise ConfigError("outputs", "must be a non-empty list of observable names")
    obs, derived = resolve_observables(names, basis, engine)
    if engine == "nonhermitian":
        series = dyn.evolve_nonhermitian(built.nh, psi0, grid, obs, dt=dt)
    elif engine == "lindblad":
        series = dyn.evolve_lindblad(model, psi0, grid, obs, dt=dt)
    else:
        n_traj = cfg.get("n_traj", DEFAULT_N_TRAJ)
        if isinstance(n_traj, bool) or not isinstance(n_traj, int) or n_traj < 1:
            raise ConfigError("n_traj", "must be a positive integer")
        s = int(cfg.get("seed", 0) if seed is None else seed)
        series = dyn.trajectory_oracle(model, psi0, grid, n_traj, s, obs, dt=dt, jobs=jobs)
    tracks = {}
    for name in names:
        if name in derived:
            tracks[name] = np.asarray(derived[name](series.tracks), float)
        elif name in series.tracks:
            tracks[name] = np.asarray(series.tracks[name], float)
    for aux in ("norm", "trace"):
        if aux in series.tracks and aux not in tracks:
            tracks[aux] = np.asarray(series.tracks[aux], float)
    for name, err in (series.stderr or {}).items():
        if name in tracks:
            tracks[f"{name}_stderr"] = np.asarray(err, float)
    meta = dict(series.meta)
    meta.update(scenario=spec.name, parameters_MHz=params)
    return EvolveResult(np.asarray(series.times, float), tracks, meta)


def _drop_param(raw: dict, key: str) -> None:
    """Remove every spelling of the parameter ``key`` sets."""
    target = key.split("_over_", 1)[0]
    targets = {target, "w", "wc"} if target in ("w", "wc") else {target}
    for k in list(raw):
        if k.split("_over_", 1)[0] in targets:
            del raw[k]


def _seed_for(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=keys).generate_state(1, dtype=np.uint64)[0])


def _post_process(cfg: dict, result: EvolveResult, seed: int, scan_index: int = 0) -> None:
    """Jitter is handled by the caller; here SPAM-forward then shot-sample, in place."""
    spam_cfg = cfg.get("spam")
    shots_cfg = cfg.get("shots")
    spam = None
    if spam_cfg is not None:
        try:
            spam = meas.SpamParams(_number("spam.P_u", spam_cfg.get("P_u")),
                                   _number("spam.P_l", spam_cfg.get("P_l")))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("spam", str(exc)) from None
        for name in _tracks_for(spam_cfg, result, "spam"):
            result.tracks[f"{name}_bare"] = meas.forward_bare(np.clip(result.tracks[name], 0, 1), spam)
    if shots_cfg is not None:
        n = shots_cfg.get("n_shots", meas.DEFAULT_SHOTS)
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ConfigError("shots.n_shots", "must be a positive integer")
        source = spam_cfg if (spam_cfg is not None and "tracks" not in shots_cfg) else shots_cfg
        for k, name in enumerate(_tracks_for(source, result, "shots")):
            p = result.tracks[f"{name}_bare"] if spam is not None else result.tracks[name]
            est, err = meas.sample_shots(np.clip(p, 0.0, 1.0), n, _seed_for(seed, scan_index, k))
            if spam is not None:
                result.tracks[f"{name}_measured"] = meas.renormalize(est, spam)
                result.tracks[f"{name}_measured_err"] = err / spam.span
            else:
                result.tracks[f"{name}_shots"] = est
                result.tracks[f"{name}_shots_err"] = err


def _tracks_for(section: dict, result: EvolveResult, path: str) -> list:
    names = section.get("tracks", list(SPAM_DEFAULT_TRACKS))
    for name in names:
        if name not in result.tracks:
            raise ConfigError(f"{path}.tracks", f"{name!r} is not among the outputs")
    return list(names)


def _with_jitter(cfg: dict, seed: int, jobs: int, override: Optional[dict]) -> EvolveResult:
    jit = cfg.get("jitter")
    if jit is None:
        return simulate(cfg, params_override=override, seed=seed, jobs=jobs)
    sigma = _number("jitter.sigma", jit.get("sigma", 0.05))
    samples = jit.get("samples", 20)
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
        raise ConfigError("jitter.samples", "must be a positive integer")
    if sigma < 0:
        raise ConfigError("jitter.sigma", "must be non-negative")
    base = simulate(cfg, params_override=override, seed=seed, jobs=jobs)
    resolved = base.meta["parameters_MHz"]
    factors = models.sample_interaction_factors(sigma, samples, _seed_for(seed, 0xA11))
    acc = {k: np.zeros_like(v) for k, v in base.tracks.items()}
    for f in factors:
        # scan override first so the scaled interaction values win
        scaled = dict(override or {})
        for k in _INTERACTIONS:
            if k in resolved:
                scaled[k] = resolved[k] * f
        run = simulate(cfg, params_override=scaled, seed=seed, jobs=jobs)
        for k in acc:
            acc[k] += run.tracks[k]
    base.tracks = {k: v / samples for k, v in acc.items()}
    base.meta["jitter"] = {"sigma": sigma, "samples": samples}
    return base


def run_evolve(cfg: dict, seed: Optional[int] = None, jobs: int = 1) -> EvolveResult:
    """Full pipeline: simulate, jitter-average, SPAM-forward, shot-sample; optional scan."""
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    scan = cfg.get("scan")
    if scan is None:
        result = _with_jitter(cfg, seed, jobs, None)
        _post_process(cfg, result, seed)
        return result
    key = scan.get("parameter")
    if not isinstance(key, str):
        raise ConfigError("scan.parameter", "required")
    values = _axis_values(scan, "scan")
    rows = {}
    times = meta = None
    for i, v in enumerate(values):
        res = _with_jitter(cfg, seed, jobs, {key: float(v)})
        _post_process(cfg, res, seed, scan_index=i + 1)
        times, meta = res.times, res.meta
        for name, track in res.tracks.items():
            rows.setdefault(name, []).append(track[-1])
    meta = dict(meta)
    meta["scan"] = {"parameter": key, "n_points": len(values), "at_t_us": float(times[-1])}
    table = {key: np.asarray(values, float)}
    table.update({k: np.asarray(v, float) for k, v in rows.items()})
    return EvolveResult(times, {}, meta, scan=table)


def _axis_values(sec: dict, path: str) -> np.ndarray:
    if "values" in sec:
        vals = sec["values"]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"{path}.values", "must be a non-empty list")
        return np.array([_number(f"{path}.values", v) for v in vals])
    try:
        start, stop, num = sec["start"], sec["stop"], sec["num"]
    except KeyError as exc:
        raise ConfigError(f"{path}.{exc.args[0]}", "required (or give values)") from None
    if isinstance(num, bool) or not isinstance(num, int) or num < 1:
        raise ConfigError(f"{path}.num", "must be a positive integer")
    return np.linspace(_number(f"{path}.start", start), _number(f"{path}.stop", stop), num)


def _family(sec: dict, path: str):
    name = sec.get("family")
    if name not in spectra.FAMILIES:
        raise ConfigError(f"{path}.family", f"must be one of {sorted(spectra.FAMILIES)}")
    fixed = sec.get("fixed", {})
    if not isinstance(fixed, dict):
        raise ConfigError(f"{path}.fixed", "must be a table")
    return spectra.family(name, **{k: _number(f"{path}.fixed.{k}", v) for k, v in fixed.items()})


def _check_family_call(builder, kwargs: dict, path: str) -> None:
    try:
        builder(**kwargs)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def run_sweep(cfg: dict, jobs: int = 1) -> spectra.SweepGrid:
    sec = _section(cfg, "sweep")
    builder = _family(sec, "sweep")
    axes_cfg = sec.get("axes")
    if not isinstance(axes_cfg, list) or not 1 <= len(axes_cfg) <= 2:
        raise ConfigError("sweep.axes", "give one or two axes")
    axes = []
    for i, ax in enumerate(axes_cfg):
        path = f"sweep.axes[{i}]"
        if "name" not in ax:
            raise ConfigError(f"{path}.name", "required")
        try:
            axes.append(spectra.ParamAxis(ax["name"], tuple(_axis_values(ax, path))))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(path, str(exc)) from None
    _check_family_call(builder, {a.name: a.values[0] for a in axes}, "sweep.axes")
    return spectra.sweep_spectrum(builder, axes, jobs=jobs)


def run_ep(cfg: dict) -> dict:
    """Exceptional-point or symmetry-breaking search; raises :class:`spectra.NoEPError`."""
    sec = _section(cfg, "ep")
    builder = _family(sec, "ep")
    axis = sec.get("axis")
    if not isinstance(axis, str):
        raise ConfigError("ep.axis", "required")
    rng = sec.get("range")
    if not isinstance(rng, list) or len(rng) != 2:
        raise ConfigError("ep.range", "must be [lo, hi]")
    lo, hi = (_number("ep.range", v) for v in rng)
    if not hi > lo:
        raise ConfigError("ep.range", "must be increasing")
    _check_family_call(builder, {axis: lo}, "ep.axis")
    coarse = sec.get("coarse_points", spectra.COARSE_POINTS)
    if isinstance(coarse, bool) or not isinstance(coarse, int) or coarse < 3:
        raise ConfigError("ep.coarse_points", "must be an integer >= 3")
    tol = _number("ep.tol", sec.get("tol", spectra.EP_TOL))
    one_d: Callable[[float], Operator] = lambda x: builder(**{axis: x})
    method = sec.get("method", "gap")
    report = {"family": sec["family"], "axis": axis, "range": [lo, hi]}
    if method == "gap":
        report.update(spectra.locate_ep(one_d, (lo, hi), coarse, tol).as_dict())
    elif method == "pt_threshold":
        spread_tol = sec.get("spread_tol")
        spread_tol = None if spread_tol is None else _number("ep.spread_tol", spread_tol)
        report["threshold"] = spectra.pt_breaking_threshold(one_d, (lo, hi), spread_tol, coarse, tol)
        report["method"] = "spread+bisection"
    else:
        raise ConfigError("ep.method", "must be gap or pt_threshold")
    return report
