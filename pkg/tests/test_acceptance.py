"""Acceptance suite: one PASS/FAIL line per criterion, printed even under capture.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the report lines inline.
"""

import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from rydiss import spectra
from rydiss.cli import load_config
from rydiss.measurement import SpamParams, fit_cosine, fit_exponential_loss, forward_bare, renormalize, sample_shots
from rydiss.scenarios import SCENARIOS, simulate
from rydiss.spectra import ParamAxis, family, locate_ep, pt_breaking_threshold, sweep_spectrum

TWO_PI = 2.0 * math.pi
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str, elapsed: float = None, budget: float = None):
        timing = ""
        if budget is not None:
            timing = f" [{elapsed:.2f} s / {budget:g} s]"
            ok = ok and elapsed < budget
        with capsys.disabled():
            print(f"\nCRITERION {number:2d}: {'PASS' if ok else 'FAIL'}: {detail}{timing}")
        return ok

    return emit


def _line(builder_name, axis, **fixed):
    b = family(builder_name, **fixed)
    return lambda x: b(**{axis: x})


def _cfg(scenario, engine, state, outputs, params, t1, n_steps=100, unit="us", model=None, **extra):
    cfg = {"scenario": scenario, "engine": engine, "initial_state": state, "outputs": outputs,
           "parameters": params, "grid": {"t1": t1, "n_steps": n_steps, "unit": unit}}
    if model:
        cfg["model"] = model
    cfg.update(extra)
    return cfg


def test_criterion_01_single_atom_ep(report):
    t0 = time.perf_counter()
    ep = locate_ep(_line("single_atom", "w_over_gamma"), (0.0, 1.0))
    el = time.perf_counter() - t0
    err = abs(ep.location - 0.25)
    assert report(1, err <= 1e-6, f"single-atom EP at w/gamma = {ep.location:.9f} (|err| = {err:.1e})", el, 1.0)


def test_criterion_02_noninteracting_pair_ep(report):
    t0 = time.perf_counter()
    ep = locate_ep(_line("pair_exchange", "wc_over_gamma", V_over_gamma=0.0), (0.0, 1.0))
    el = time.perf_counter() - t0
    err = abs(ep.location - math.sqrt(2) / 4)
    assert report(2, err <= 1e-4, f"V=0 pair EP at wc/gamma = {ep.location:.9f} (|err| = {err:.1e})", el, 1.0)


EP_STRONG_EXCHANGE = 6.576418553  # regression pin from the reference run


def test_criterion_03_interaction_shifted_ep(report):
    t0 = time.perf_counter()
    ep = locate_ep(_line("pair_exchange", "wc_over_gamma", V_over_gamma=86.0), (0.5, 15.0))
    el = time.perf_counter() - t0
    ok = 6.3 <= ep.location <= 7.7 and abs(ep.location - EP_STRONG_EXCHANGE) <= 1e-6
    assert report(3, ok, f"V=86 gamma EP at wc/gamma = {ep.location:.9f} (pin {EP_STRONG_EXCHANGE})", el, 5.0)


def test_criterion_04_pt_breaking_in_interaction(report):
    f = _line("pair_exchange", "V_over_gamma", wc_over_gamma=3.5)
    thr = pt_breaking_threshold(f, (0.0, 100.0))
    below = max(spectra.imag_spread(f(v)) for v in np.linspace(0.0, thr - 1e-3, 200))
    above = np.array([spectra.imag_spread(f(v)) for v in np.linspace(thr + 1e-3, 10 * thr, 400)])
    interior = 0.0 < thr < 100.0
    monotone = bool(np.all(np.diff(above) > 0))
    ok = interior and below < 1e-6 and monotone
    assert report(4, ok, f"threshold V/gamma = {thr:.6f}; spread below {below:.1e}; "
                         f"monotone growth to 10x threshold: {monotone}")


def test_criterion_05_engine_equivalence(report):
    t0 = time.perf_counter()
    outputs = ["pop:00", "pop:01", "pop:10", "pop:11"]
    worst = 0.0
    for wc in np.linspace(0.5, 12.0, 5):
        cfg = _cfg("pair_exchange", "lindblad", "00", outputs,
                   {"gamma": 0.08, "V": 6.88, "wc_over_gamma": float(wc)}, 1.0, 100)
        a = simulate(cfg)
        b = simulate(cfg, engine="nonhermitian")
        worst = max(worst, max(np.max(np.abs(a.tracks[k] - b.tracks[k])) for k in outputs))
    el = time.perf_counter() - t0
    assert report(5, worst <= 1e-8, f"max |Lindblad - NH| manifold population = {worst:.1e}", el, 30.0)


def _oracle_fraction(cfg, tracks):
    exact = simulate(cfg)
    traj = simulate(cfg, engine="trajectories")
    hits = total = 0
    for k in tracks:
        diff = np.abs(traj.tracks[k] - exact.tracks[k])
        hits += int(np.sum(diff <= 3 * traj.tracks[f"{k}_stderr"] + 1e-9))
        total += diff.size
    return hits / total


def test_criterion_06_trajectory_oracle(report):
    t0 = time.perf_counter()
    single = _cfg("single_atom_loss", "lindblad", "0", ["P_0_site0", "loss_fraction"],
                  {"w": 0.0, "gamma": 0.13}, 5.0, 99, seed=21, n_traj=2000)
    pair = _cfg("pair_exchange", "lindblad", "00", ["pop:00", "pop:01", "pop:11", "loss_fraction"],
                {"w": 0.2, "gamma": 0.08, "V": 4.0}, 3.0, 99, seed=22, n_traj=2000)
    f1 = _oracle_fraction(single, ["P_0_site0", "loss_fraction"])
    f2 = _oracle_fraction(pair, ["pop:00", "pop:01", "pop:11", "loss_fraction"])
    el = time.perf_counter() - t0
    ok = f1 >= 0.99 and f2 >= 0.99
    assert report(6, ok, f"within 3 SE: single atom {f1:.1%}, pair {f2:.1%}", el, 120.0)


def _loss_at_1us(params, key, values):
    out = []
    for v in values:
        cfg = _cfg("pair_exchange", "lindblad", "00", ["loss_fraction"], dict(params, **{key: float(v)}), 1.0, 10)
        out.append(simulate(cfg).tracks["loss_fraction"][-1])
    return np.array(out)


def test_criterion_07_zeno_and_interaction_trends(report):
    wc = np.linspace(1.0, 10.0, 91)
    zeno = _loss_at_1us({"gamma": 0.13, "V": 0.0}, "wc_over_gamma", wc)
    v = np.linspace(0.0, 8.0, 33)
    inter = _loss_at_1us({"w": 0.2, "gamma": 0.08}, "V", v)
    inc = np.flatnonzero(np.diff(zeno) > 0)
    zeno_ok = inc.size == 0
    inter_ok = bool(np.all(np.diff(inter) > 0))
    first = "none" if zeno_ok else f"{wc[inc[0]]:.2f}"
    detail = (f"loss vs wc/gamma on [1, 10] monotone decreasing: {zeno_ok} (first rise at {first}, "
              f"range {zeno.min():.3f}..{zeno.max():.3f}); loss vs V on [0, 8] increasing: {inter_ok}")
    assert report(7, zeno_ok and inter_ok, detail)


def test_criterion_08_adiabatic_elimination(report):
    t0 = time.perf_counter()
    gamma, w0 = 1.0, 0.01
    expected = 4 * w0**2 / gamma
    t1 = 2.0 / (TWO_PI * expected)
    cfg = _cfg("selective_pair", "nonhermitian", "+updown", ["pop:+updown"],
               {"gamma": gamma, "w": 0.0, "w0": w0, "V_up": 5.0, "Delta": 5.0}, t1, 200,
               model={"reduction": "reduced"})
    res = simulate(cfg)
    fit = fit_exponential_loss((res.times, 1.0 - res.tracks["pop:+updown"]))
    rel = abs(fit.params["Gamma"] - expected) / expected
    el = time.perf_counter() - t0
    assert report(8, fit.converged and rel <= 0.05,
                  f"fitted rate {fit.params['Gamma']:.4e} MHz vs 4 w0^2/gamma = {expected:.1e} "
                  f"(rel {rel:.1%})", el, 10.0)


def _subset_hausdorff(small, big):
    best = np.inf
    for sub in itertools.combinations(big, len(small)):
        d = np.abs(np.asarray(small)[:, None] - np.asarray(sub)[None, :])
        best = min(best, max(d.min(axis=1).max(), d.min(axis=0).max()))
    return best


def test_criterion_09_reduction_hierarchy(report):
    t0 = time.perf_counter()
    axis = [ParamAxis.linspace("wc_over_w0", 0.05, 5.0, 200)]
    fixed = dict(w_over_gamma=1.0, Vup_over_gamma=500.0, Delta_over_gamma=500.0, Vdown_over_gamma=250.0)
    red = sweep_spectrum(family("pair_spin_reduced", **fixed), axis).eigenvalues.imag
    full = sweep_spectrum(family("pair_spin_full", **fixed), axis).eigenvalues.imag
    worst = max(_subset_hausdorff(r, f) for r, f in zip(red, full))
    el = time.perf_counter() - t0
    assert report(9, worst <= 0.05 * TWO_PI,
                  f"worst 4-of-6 Hausdorff distance of Im(lambda) = {worst:.3f} "
                  f"(limit {0.05 * TWO_PI:.3f}, units 2 pi gamma = 2 pi)", el, 30.0)


SELECTIVE = {"gamma": 0.16, "w_over_gamma": 1.0, "w0_over_gamma": 15.0, "V_up_over_gamma": 500.0,
             "V_down_over_gamma": 250.0, "Delta_over_gamma": 500.0}


def test_criterion_10_two_body_zeno_contrast(report):
    single = simulate(_cfg("selective_pair", "lindblad", "up", ["P_up_site0", "loss_fraction"], SELECTIVE,
                           2.0, 400, unit="pi_time", model={"n_atoms": 1}))
    contrast = single.tracks["P_up_site0"].max() - single.tracks["P_up_site0"].min()
    loss1 = single.tracks["loss_fraction"].max()
    pair = simulate(_cfg("selective_pair", "lindblad", "upup", ["pop:up-up", "loss_fraction"], SELECTIVE,
                         1.0, 100, unit="pi_time"))
    p_upup = pair.tracks["pop:up-up"][-1]
    ok = contrast >= 0.99 and loss1 < 0.01 and p_upup >= 0.9
    assert report(10, ok, f"single-atom contrast {contrast:.4f} (need >= 0.99), single-atom loss {loss1:.4f}, "
                          f"pair P_upup at pi time {p_upup:.4f}")


def _distill(delta_over_v):
    cfg = load_config(CONFIGS / "w_state_distillation.toml")
    cfg["parameters"] = dict(cfg["parameters"], Delta_over_V=delta_over_v)
    return simulate(cfg).tracks


def test_criterion_11_w_state_distillation(report):
    t0 = time.perf_counter()
    lo, hi = 0.31, 0.3334
    a = _distill(1.0)
    b = _distill(-2.0)
    moving = ("overlap_W+1", "overlap_W-1")
    ok_a = all(a[k][-1] < 0.02 for k in moving) and lo <= a["overlap_W0"].min() and a["overlap_W0"].max() <= hi
    ok_b = b["overlap_W0"][-1] < 0.02 and all(lo <= b[k].min() and b[k].max() <= hi for k in moving)
    el = time.perf_counter() - t0
    detail = (f"Delta=V: W+-1 final {a['overlap_W+1'][-1]:.4f}/{a['overlap_W-1'][-1]:.4f}, "
              f"W0 in [{a['overlap_W0'].min():.4f}, {a['overlap_W0'].max():.4f}]; "
              f"Delta=-2V: W0 final {b['overlap_W0'][-1]:.4f}, "
              f"W+1 in [{b['overlap_W+1'].min():.4f}, {b['overlap_W+1'].max():.4f}]")
    assert report(11, ok_a and ok_b, detail, el, 60.0)


def test_criterion_12_five_atom_selectivity(report):
    t0 = time.perf_counter()
    base = load_config(CONFIGS / "five_atom_selectivity.toml")
    names = base["outputs"]
    runs = {}
    for d in (0.0, -2.0):
        cfg = dict(base, parameters=dict(base["parameters"], Delta_over_V=d))
        runs[d] = simulate(cfg).tracks
    dev = max(np.max(np.abs(runs[0.0][k] - 0.2)) for k in names)
    k0 = runs[-2.0]["overlap_W0"][-1]
    others = max(runs[-2.0][k][-1] for k in names if k != "overlap_W0")
    el = time.perf_counter() - t0
    ok = dev <= 0.005 and k0 < 0.02 and others > 0.15
    assert report(12, ok, f"Delta=0 max |overlap - 0.2| = {dev:.1e}; Delta=-2V: k=0 final {k0:.4f}, "
                          f"best |k|>0 final {others:.4f}", el, 180.0)


CHAIN_FLIP_TIME = 0.01  # 2 pi w t at which the single-flip norm has fallen below 0.5 (pinned)


def test_criterion_13_chain_protection(report):
    t0 = time.perf_counter()
    base = load_config(CONFIGS / "chain_protection.toml")
    pol = simulate(base).tracks["up_fraction_normalized"][-1]
    flip_cfg = dict(base, initial_state="single-flip:3", outputs=["up_fraction"],
                    grid={"t1": CHAIN_FLIP_TIME, "n_steps": 20, "unit": "2pi_w"})
    norm = simulate(flip_cfg).tracks["norm"][-1]
    el = time.perf_counter() - t0
    ok = pol >= 0.95 and norm < 0.5
    assert report(13, ok, f"polarized normalized up fraction at 2 pi w t = 1: {pol:.5f}; "
                          f"single-flip norm at 2 pi w t = {CHAIN_FLIP_TIME}: {norm:.4f}", el, 30.0)


def test_criterion_14_spam_round_trip(report):
    rng = np.random.default_rng(14)
    pairs = [(0.93, 0.35), (0.92, 0.34), (0.90, 0.38)]
    while len(pairs) < 103:
        lo, hi = np.sort(rng.uniform(0, 1, 2))
        if hi > lo:
            pairs.append((hi, lo))
    p = np.linspace(0, 1, 101)
    worst = max(np.max(np.abs(renormalize(forward_bare(p, SpamParams(u, l)), SpamParams(u, l)) - p))
                for u, l in pairs)
    assert report(14, worst <= 1e-12, f"max round-trip error over {len(pairs)} SPAM pairs = {worst:.1e}")


def test_criterion_15_fit_recovery(report):
    t_loss = np.linspace(0, 5, 51)
    loss = 1 - np.exp(-TWO_PI * 0.11 * t_loss)
    t_rabi = np.linspace(0, 6, 61)
    rabi = np.sin(TWO_PI * 0.15 * t_rabi) ** 2
    g = fit_exponential_loss((t_loss, loss)).params["Gamma"]
    w = fit_cosine((t_rabi, rabi)).params["nu"]
    exact = abs(g - 0.11) <= 1e-6 and abs(w - 0.15) <= 1e-6
    inside = [0, 0]
    for s in range(50):
        fl = fit_exponential_loss((t_loss, sample_shots(loss, 500, 100 + s)[0]), n_shots=500)
        fr = fit_cosine((t_rabi, sample_shots(rabi, 500, 200 + s)[0]), n_shots=500)
        inside[0] += fl.converged and abs(fl.params["Gamma"] - 0.11) <= 3 * fl.uncertainties["Gamma"]
        inside[1] += fr.converged and abs(fr.params["nu"] - 0.15) <= 3 * fr.uncertainties["nu"]
    ok = exact and inside == [50, 50]
    assert report(15, ok, f"noiseless gamma {g:.9f}, w {w:.9f}; 500-shot fits within 3 sigma: "
                          f"loss {inside[0]}/50, Rabi {inside[1]}/50")


def _evolve_configs():
    out = []
    for path in sorted(CONFIGS.glob("*.toml")):
        cfg = load_config(path)
        if "scenario" in cfg:
            out.append((path.stem, cfg))
    return out


def _hygiene(cfg):
    """Max deviation between default step and half step over the config's parameter points."""
    engine = cfg.get("engine", "lindblad")
    if engine == "trajectories":
        engine = "lindblad"
    overrides = [None]
    if "scan" in cfg:
        sec = cfg["scan"]
        vals = sec.get("values") or [sec["start"], sec["stop"]]
        overrides = [{sec["parameter"]: float(vals[0])}, {sec["parameter"]: float(vals[-1])}]
    worst = 0.0
    for ov in overrides:
        ref = simulate(cfg, engine=engine, params_override=ov)
        half = simulate(cfg, engine=engine, params_override=ov, dt=ref.meta["dt"] / 2)
        worst = max(worst, max(np.max(np.abs(ref.tracks[k] - half.tracks[k])) for k in ref.tracks))
    return worst


def test_criterion_16_numerical_hygiene(report):
    configs = _evolve_configs()
    results = {name: _hygiene(cfg) for name, cfg in configs}
    worst_name = max(results, key=results.get)
    ok = all(v <= 1e-7 for v in results.values()) and len(configs) >= 1
    assert {cfg["scenario"] for _, cfg in configs} <= set(SCENARIOS)
    assert report(16, ok, f"{len(configs)} shipped evolve configs pass trace/Hermiticity/positivity checks; "
                          f"worst step-halving deviation {results[worst_name]:.1e} ({worst_name})")
