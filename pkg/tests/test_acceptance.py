"""Acceptance criteria, each checked at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion with the measured values.
"""

import time

import numpy as np
import pytest

from roughpme.characteristics import (CharacteristicContext, TestBump, pi_backward, weight_v,
                                      xi_forward, xi_forward_dxi)
from roughpme.config import InitialSpec, barenblatt, barenblatt_radius, parse_config
from roughpme.domain import CoefficientSpec, build_coefficients, build_grid
from roughpme.experiments import (_interior_psi, build_context, run_cocycle, run_contraction,
                                  run_convergence, run_positivity)
from roughpme.kinetic import (ibp_residual, trajectory_log_moment, trajectory_singular_moment,
                              transport_residual, xi_grid_for)
from roughpme.rough_paths import from_samples, mollify, sample_fbm
from roughpme.solver import SolverConfig, energy_report, solve

NOISE = "coefficients = cosine(a=0.5, b=0.5)\n"


def config(experiment, **kw):
    text = f"experiment = {experiment}\n" + "".join(f"{k} = {v}\n" for k, v in kw.items())
    return parse_config(text)


def noiseless(grid):
    # zero path fine enough for any mollification width used below
    return CharacteristicContext(build_coefficients(grid, []), from_samples(np.zeros((1, 1001)), 1e-3))


def noisy(grid, hurst=0.5, seed=0, eps=0.05, T=0.1):
    cfg = config("solve", m=2, T=T, hurst=hurst, seed=seed, epsilon=eps,
                 coefficients="cosine(a=0.5, b=0.5)")
    return build_context(cfg, grid)


def ratios(values):
    v = np.asarray(values, dtype=float)
    return v[:-1] / v[1:]


# -- 1 ----------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_heat_oracle(acceptance):
    g = build_grid(1, 1.0, 257)
    x = g.coords[0]
    start = time.perf_counter()
    traj = solve(np.sin(np.pi * x), 0.1, SolverConfig(m=1.0, dt=1e-4), noiseless(g))
    runtime = time.perf_counter() - start
    err = max(np.abs(u - np.exp(-np.pi**2 * t) * np.sin(np.pi * x)).max()
              for t, u in zip(traj.times, traj.states))
    ok = acceptance(err <= 5e-3 and runtime <= 10.0,
                    f"max sup error {err:.3e} <= 5e-3; runtime {runtime:.2f} s <= 10 s")
    assert ok


# -- 2 ----------------------------------------------------------------------------

def barenblatt_error(nodes, dt):
    g = build_grid(1, 1.0, nodes)
    m, r0, t0 = 2.0, 0.2, 0.05
    traj = solve(barenblatt(g, m, t0, r0, t0), 0.05, SolverConfig(m=m, dt=dt), noiseless(g),
                 record_every=int(round(0.05 / dt)))
    exact = barenblatt(g, m, t0 + 0.05, r0, t0)
    u = traj.states[-1]
    rel = g.integrate(np.abs(u - exact)) / g.integrate(exact)
    outside = np.abs(g.coords[0] - 0.5) >= 0.3
    return rel, float(np.abs(u[outside]).max())


@pytest.mark.criterion(2)
def test_barenblatt_oracle(acceptance):
    r_end = barenblatt_radius(2.0, 1, 0.2, 0.05, 0.1)
    e1, leak1 = barenblatt_error(513, 1e-4)
    e2, leak2 = barenblatt_error(1025, 5e-5)
    ok = acceptance(e1 <= 0.02 and e2 < e1 and r_end < 0.3 and max(leak1, leak2) <= 1e-12,
                    f"rel L1 error {e1:.3e} <= 2e-2 at h=1/512; {e2:.3e} after halving (decreasing); "
                    f"exact radius {r_end:.4f} < 0.3; max |u| outside (0.2, 0.8) {max(leak1, leak2):.1e}")
    assert ok


# -- 3 ----------------------------------------------------------------------------

@pytest.mark.criterion(3)
@pytest.mark.parametrize("mollified", [False, True], ids=["raw", "mollified"])
def test_characteristics_identities(acceptance, mollified):
    g = build_grid(1, 1.0, 33)
    coeffs = build_coefficients(g, [CoefficientSpec("cosine", {"a": 0.5, "b": 0.5}),
                                    CoefficientSpec("gaussian", {"amp": 0.3, "width": 0.2})])
    path = sample_fbm(0.5, 2, 1024, 1 / 512, seed=0)
    ctx = CharacteristicContext(coeffs, mollify(path, 0.02) if mollified else path)
    rng = np.random.default_rng(0)
    n = 10_000
    x = rng.uniform(0, 1, n)
    xi = rng.uniform(-10, 10, n)
    s, t, u = np.sort(rng.uniform(0, 1.9, (3, n)), axis=0)
    scale = np.maximum(1.0, np.abs(xi))
    start = time.perf_counter()
    errs = {
        "Xi(Pi)": np.abs(xi_forward(ctx, x, pi_backward(ctx, x, xi, t, s), s, t) - xi) / scale,
        "Pi(Xi)": np.abs(pi_backward(ctx, x, xi_forward(ctx, x, xi, s, t), t, s) - xi) / scale,
        "v dXi": np.abs(weight_v(ctx, x, s, t) * xi_forward_dxi(ctx, x, s, t) - 1.0),
        "cocycle": np.abs(weight_v(ctx, x, s, u) - weight_v(ctx, x, s, t) * weight_v(ctx, x, t, u))
        / weight_v(ctx, x, s, u),
    }
    runtime = time.perf_counter() - start
    worst = {k: float(e.max()) for k, e in errs.items()}
    top = max(worst.values())
    ok = acceptance(top <= 1e-12 and runtime < 1.0,
                    f"{'mollified' if mollified else 'raw'} path, 10^4 samples: max relative error "
                    f"{top:.2e} <= 1e-12 ({', '.join(f'{k} {v:.1e}' for k, v in worst.items())}); "
                    f"runtime {runtime:.2f} s < 1 s")
    assert ok


# -- 4 ----------------------------------------------------------------------------

TWO_BUMPS = dict(initial="bump(center=0.4, width=0.2)", initial2="bump(center=0.6, width=0.25, amplitude=0.5)")


@pytest.mark.criterion(4)
@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 3.0])
def test_contraction_noiseless(acceptance, m):
    T = 0.05 if m < 1 else 0.2
    rep = run_contraction(config("contraction", m=m, T=T, dt=2e-3, nodes=65, **TWO_BUMPS))
    worst = rep.metrics["max_increment_on_t_star"]
    tol = rep.metrics["tolerance"]
    ok = acceptance(rep.passed and rep.metrics["t_star"] >= T - 1e-12,
                    f"f=0 m={m}: max step increase of D {worst:.2e} <= {tol:.0e} on [0, {T}]")
    assert ok


@pytest.mark.criterion(4)
@pytest.mark.parametrize("m,T", [(0.5, 0.05), (2.0, 0.2)])
def test_contraction_noisy(acceptance, m, T):
    reps = []
    for nodes, dt in ((65, 2e-3), (129, 1e-3)):
        kw = dict(TWO_BUMPS, m=m, T=T, dt=dt, nodes=nodes, hurst=0.5, seed=0, epsilon=0.02)
        cfg = parse_config("experiment = contraction\n" + NOISE
                           + "".join(f"{k} = {v}\n" for k, v in kw.items()))
        reps.append(run_contraction(cfg))
    c0, c1 = (r.metrics["C_obs"] for r in reps)
    drift = abs(c1 - c0) / c0
    monotone = all(r.verdicts[0].passed for r in reps)
    ok = acceptance(monotone and np.isfinite(c0) and np.isfinite(c1) and drift <= 0.10,
                    f"H=0.5 m={m}: D monotone on [0, t*] (t* = {reps[0].metrics['t_star']:.3g}, "
                    f"{reps[1].metrics['t_star']:.3g}; max increase "
                    f"{max(r.metrics['max_increment_on_t_star'] for r in reps):.1e}); "
                    f"C_obs {c0:.4f} -> {c1:.4f}, drift {drift:.1%} <= 10%")
    assert ok


# -- 5 ----------------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_energy_identity(acceptance):
    res = []
    for lvl in range(4):
        g = build_grid(1, 1.0, 32 * 2**lvl + 1)
        u0 = InitialSpec("bump", {"width": 0.3}).evaluate(g, 2.0)
        traj = solve(u0, 0.1, SolverConfig(m=2.0, dt=4e-3 / 2**lvl), noiseless(g))
        res.append(energy_report(traj).identity_residual)
    r = ratios(res)
    ok = acceptance(np.all(r >= 1.5),
                    f"residuals {', '.join(f'{v:.3e}' for v in res)}; ratios "
                    f"{', '.join(f'{v:.2f}' for v in r)} >= 1.5")
    assert ok


# -- 6 ----------------------------------------------------------------------------

@pytest.mark.criterion(6)
@pytest.mark.parametrize("m", [0.5, 2.0])
def test_positivity(acceptance, m):
    cfg = parse_config("experiment = positivity\n" + NOISE
                       + f"m = {m}\nT = 0.1\ndt = 1e-3\nnodes = 129\nepsilon = 0.02\nhurst = 0.5\n"
                       "seed = 0\ninitial = bump(width=0.3)\n")
    rep = run_positivity(cfg)
    v = rep.verdicts[0]
    ok = acceptance(rep.passed, f"m={m}: min node value {v.value:.3e} >= {v.threshold:.0e}")
    assert ok


# -- 7 ----------------------------------------------------------------------------

@pytest.mark.criterion(7)
@pytest.mark.parametrize("m", [0.5, 2.0])
def test_eps_eta_cauchy(acceptance, m):
    cfg = parse_config("experiment = convergence\n" + NOISE
                       + f"m = {m}\nT = 0.1\ndt = 5e-4\nnodes = 129\nepsilon = 0.04\neta = 0.01\n"
                       "levels = 3\nhurst = 0.75\nseed = 0\ninitial = bump(center=0.5, width=0.3)\n")
    rep = run_convergence(cfg)
    e = rep.metrics["e"]
    nonincreasing = all(b <= a for a, b in zip(e, e[1:]))
    halved = e[-1] <= e[0] / 2
    ok = acceptance(nonincreasing and halved,
                    f"m={m}: e_1..e_3 = {', '.join(f'{v:.3e}' for v in e)}; "
                    f"nonincreasing {nonincreasing}; e_3/e_1 = {e[-1] / e[0]:.3f} <= 0.5")
    assert ok


# -- 8 ----------------------------------------------------------------------------

COCYCLE = "m = 2\nT = 0.4\nsplit = 0.2\ndt = 0.01\nnodes = 65\nepsilon = 0.04\nlevels = 3\n" \
          "initial = bump(width=0.3)\n"


@pytest.mark.criterion(8)
def test_cocycle_noiseless(acceptance):
    rep = run_cocycle(parse_config("experiment = cocycle\n" + COCYCLE))
    M = max(rep.metrics["M"])
    ok = acceptance(M <= 1e-10, f"f=0: max restart mismatch {M:.2e} <= newton_tol 1e-10")
    assert ok


@pytest.mark.criterion(8)
def test_cocycle_noisy(acceptance):
    rep = run_cocycle(parse_config("experiment = cocycle\n" + NOISE + COCYCLE
                                   + "hurst = 0.75\nseed = 0\nensemble = 64\n"))
    r = rep.metrics["ratios"]
    ok = acceptance(min(r) >= 1.5,
                    f"H=0.75, mean over seeds 0..63: M = {', '.join(f'{v:.3e}' for v in rep.metrics['M'])}; "
                    f"ratios {', '.join(f'{v:.2f}' for v in r)} >= 1.5")
    assert ok


# -- 9 ----------------------------------------------------------------------------

@pytest.mark.criterion(9)
@pytest.mark.parametrize("with_noise", [False, True])
def test_singular_moments(acceptance, with_noise):
    m = 0.5
    sing, logm = [], []
    for lvl in range(2):
        g = build_grid(1, 1.0, 64 * 2**lvl + 1)
        ctx = noisy(g, eps=0.02, T=0.05) if with_noise else noiseless(g)
        u0 = InitialSpec("bump", {"width": 0.3}).evaluate(g, m)
        traj = solve(u0, 0.05, SolverConfig(m=m, dt=2e-3 / 2**lvl, epsilon=0.02), ctx)
        xg = xi_grid_for(traj, 128 * 2**lvl)
        sing.append(trajectory_singular_moment(traj, m, xg))
        logm.append(trajectory_log_moment(traj, _interior_psi(g), xg))
    ds = abs(sing[1] - sing[0]) / abs(sing[0])
    dl = abs(logm[1] - logm[0]) / abs(logm[0])
    finite = np.all(np.isfinite(sing + logm))
    ok = acceptance(finite and ds <= 0.15 and dl <= 0.15,
                    f"{'noisy' if with_noise else 'f=0'}: delta=m moment {sing[0]:.4g} -> {sing[1]:.4g} "
                    f"({ds:.1%}); log moment {logm[0]:.4g} -> {logm[1]:.4g} ({dl:.1%}); both <= 15%")
    assert ok


# -- 10 ---------------------------------------------------------------------------

RHO = TestBump((0.45,), (0.3,), 0.6, 0.5)
PSI_XI = TestBump((0.4,), (0.25,), 0.6, 0.5)
PSI_X = TestBump((0.4,), (0.25,), xi_width=None)


def weak_form_levels(m, with_noise, levels=4, T=0.1):
    out = []
    for lvl in range(levels):
        g = build_grid(1, 1.0, 32 * 2**lvl + 1)
        ctx = noisy(g, eps=0.05, T=T) if with_noise else noiseless(g)
        u0 = InitialSpec("sine", {}).evaluate(g, m)
        traj = solve(u0, T, SolverConfig(m=m, dt=0.01 / 2**lvl, epsilon=0.05), ctx)
        out.append((traj, xi_grid_for(traj, 64 * 2**lvl)))
    return out


@pytest.mark.criterion(10)
@pytest.mark.parametrize("m,with_noise,psi", [(1.0, False, PSI_XI), (2.0, True, PSI_X)],
                         ids=["m1-heat", "m2-noisy"])
def test_weak_form_residuals(acceptance, m, with_noise, psi):
    runs = weak_form_levels(m, with_noise)
    tr = [transport_residual(traj, RHO, 0.0, 0.1, xg) for traj, xg in runs]
    ib = [ibp_residual(traj, psi, xg) for traj, xg in runs]
    rt, ri = ratios(tr), ratios(ib)
    label = f"m={m:g} {'noisy' if with_noise else 'f=0'}"
    ok_t = acceptance(np.all(rt >= 1.5), f"{label} transport: {', '.join(f'{v:.2e}' for v in tr)}; "
                                         f"ratios {', '.join(f'{v:.2f}' for v in rt)} >= 1.5")
    ok_i = acceptance(np.all(ri >= 1.5), f"{label} ibp ({'xi-dependent' if psi.xi_width else 'xi-independent'}"
                                         f" psi): {', '.join(f'{v:.2e}' for v in ib)}; "
                                         f"ratios {', '.join(f'{v:.2f}' for v in ri)} >= 1.5")
    assert ok_t and ok_i


# -- 11 ---------------------------------------------------------------------------

PAIRS = [(0.25, 0.25), (0.25, 0.5), (0.5, 1.0), (0.125, 0.875), (1.0, 1.0)]


@pytest.mark.criterion(11)
@pytest.mark.parametrize("hurst", [0.3, 0.5, 0.75])
def test_fbm_covariance(acceptance, hurst):
    n_paths, n_steps, dt = 10_000, 64, 1 / 64
    p = sample_fbm(hurst, n_paths, n_steps, dt, seed=0)
    worst = 0.0
    for s, t in PAIRS:
        zs, zt = p.values[:, round(s / dt)], p.values[:, round(t / dt)]
        prod = zs * zt
        exact = 0.5 * (t ** (2 * hurst) + s ** (2 * hurst) - abs(t - s) ** (2 * hurst))
        se = prod.std(ddof=1) / np.sqrt(n_paths)
        worst = max(worst, abs(prod.mean() - exact) / se)
    ok = acceptance(worst <= 3.0, f"H={hurst}: worst |mean - exact| = {worst:.2f} SE <= 3 over {len(PAIRS)} pairs")
    assert ok
