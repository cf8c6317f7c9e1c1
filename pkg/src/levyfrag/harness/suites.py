"""Verification suites.

Each suite compares tree-side Monte Carlo estimates (or numerical solutions)
with closed forms or independent estimators and returns a
:class:`SuiteReport` whose records carry the pass decision.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache

import numpy as np
from scipy import stats as sps

from ..dislocation import FunctionalSpec, ImportanceConfig, ngg_rhs_mc, ngg_rhs_quadrature, ngh_rhs
from ..errors import ConfigError, TreeOverflow
from ..fragment import (
    LevelMap,
    default_window,
    fragments_at_level,
    local_time_profile,
    small_fragment_stats,
    tagged_path,
)
from ..mechanism import (
    BranchingMechanism,
    eval_phi,
    eval_phi_prime,
    eval_psi,
    stable_constants,
)
from ..odelaw import closed_form_w_lambda0, local_time_mean, solve_w
from ..rng import stream
from ..treesim import (
    PlaneTree,
    analyze,
    offspring_table,
    sample_total_progeny,
    sample_tree,
    sample_tree_conditioned,
)
from . import kernels
from .calibrate import (
    depth_weights,
    level_depth_limit,
    level_moments,
    levels_layout,
    local_time_weights,
)
from .estimate import TreeSource, bind, damped, laplace_defect, run_blocks, sigma_of
from .report import CaseRecord, SuiteReport

log = logging.getLogger(__name__)

TREE_SUITES = ("excursion", "ngh", "ngg", "local-time", "ode-mc",
               "small-fragments", "poisson-counts", "frag-property")


def _check(suite, case, inputs, est, se, target, tol_rel, n_se=None, diagnostics=None):
    err = abs(est - target)
    passed = err <= tol_rel * abs(target)
    tol = {"rel": tol_rel}
    if n_se is not None:
        tol["n_se"] = n_se
        passed = passed and err <= n_se * se
    return CaseRecord(suite, case, inputs, est, se, target, tol, bool(passed), diagnostics or {})


def _source(config):
    return TreeSource(config.alpha, config.n0, config.cap(), config.seed, config["block_size"])


def _mech(config):
    return BranchingMechanism.stable(config.alpha)


# ---------------------------------------------------------------- analytic


def suite_mechanism(config, calib=None):
    mechs = {
        "stable": BranchingMechanism.stable(config.alpha),
        "drifted_stable": BranchingMechanism.drifted_stable(1.0, config.alpha),
        "atom_test": BranchingMechanism.atom_test(0.5, [(1.0, 1.0), (0.1, 3.0)]),
    }
    xs = np.logspace(-3, 3, 61)
    records = []
    for name, mech in mechs.items():
        err = max(abs(eval_psi(mech, eval_phi(mech, x)) - x) / max(x, 1.0) for x in xs)
        records.append(CaseRecord("mechanism", f"inverse/{name}", {"grid": "1e-3..1e3"},
                                  err, 0.0, 0.0, {"abs": 1e-10}, err <= 1e-10))
    mech = mechs["stable"]
    lams = 10.0 ** np.arange(1, 9)
    ratio = np.array([lam / eval_psi(mech, lam) for lam in lams])
    at_1e6 = float(ratio[5])
    ok = bool(np.all(np.diff(ratio) < 0) and at_1e6 <= 1e-3 * (1 + 1e-12))
    records.append(CaseRecord("mechanism", "lambda_over_psi", {"lambda": 1e6}, at_1e6, 0.0, 0.0,
                              {"max": 1e-3, "decreasing": True}, ok,
                              {"ratios": [float(r) for r in ratio]}))
    return records


def _observed_orders(mech, lam, gamma, t_max, steps):
    errs = []
    for h in steps:
        sol = solve_w(mech, lam, gamma, t_max, h)
        exact = np.array([closed_form_w_lambda0(mech.alpha, gamma, t) for t in sol.t_grid])
        errs.append(float(np.max(np.abs(sol.w_values - exact))))
    return [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)], errs


def suite_ode_analytic(config, calib=None):
    mech = _mech(config)
    records = []
    for gamma in config["ode.gammas"]:
        sol = solve_w(mech, 0.0, gamma, config["ode.t_max"], config["ode.step"])
        exact = np.array([closed_form_w_lambda0(config.alpha, gamma, t) for t in sol.t_grid])
        err = float(np.max(np.abs(sol.w_values - exact)))
        tol = config["ode.tol_abs"]
        records.append(CaseRecord("ode-analytic", f"max_error/gamma={gamma!r}",
                                  {"gamma": gamma, "step": config["ode.step"], "t_max": config["ode.t_max"]},
                                  err, 0.0, 0.0, {"abs": tol}, err <= tol))
        # coarse steps so truncation error dominates round-off
        orders, errs = _observed_orders(mech, 0.0, gamma, config["ode.t_max"], (0.2, 0.1, 0.05))
        lo, hi = config["ode.order_min"], config["ode.order_max"]
        ok = all(lo <= o <= hi for o in orders)
        records.append(CaseRecord("ode-analytic", f"order/gamma={gamma!r}",
                                  {"gamma": gamma, "steps": [0.2, 0.1, 0.05]},
                                  min(orders), 0.0, 4.0, {"min": lo, "max": hi}, ok,
                                  {"orders": orders, "errors": errs}))
    return records


# ---------------------------------------------------------------- excursion law


def _excursion_job(source, block, count, lam0, lams, dlams):
    total = kernels.sizes_block(source.rng(block), *source.law_args(), source.cap, count)
    sigma = sigma_of(total, source.n0)
    cols = [laplace_defect(sigma, lam0)]
    cols += [laplace_defect(sigma, lam) for lam in lams]
    finite = np.isfinite(sigma)
    for lam in dlams:
        cols.append(np.where(finite, np.where(finite, sigma, 0.0) * damped(sigma, lam), 0.0))
    cols.append((total < 0).astype(float))
    return np.column_stack(cols)


def suite_excursion(config, calib):
    mech = _mech(config)
    lams, dlams = config["excursion.lambdas"], config["excursion.deriv_lambdas"]
    n = config.trees_for("excursion")
    mom = run_blocks(bind(_excursion_job, config.lambda0, lams, dlams), _source(config), n, config["workers"])
    dim = len(mom.total)
    phi0 = eval_phi(mech, config.lambda0)
    e = np.eye(dim)
    tol, n_se = config["excursion.tol_rel"], config["excursion.n_se"]
    c_N_sample = phi0 / mom.mean[0]
    diag = {"trees": n, "overflow": int(round(mom.total[-1])), "c_N_sample": c_N_sample, "c_N_calib": calib.c_N}
    records = []
    for j, lam in enumerate(lams):
        r, se = mom.ratio(e[1 + j], e[0])
        records.append(_check("excursion", f"laplace/lambda={lam!r}", {"lambda": lam, "trees": n},
                               phi0 * r, phi0 * se, eval_phi(mech, lam), tol, n_se, diag))
    for j, lam in enumerate(dlams):
        r, se = mom.ratio(e[1 + len(lams) + j], e[0])
        records.append(_check("excursion", f"sigma_damped/lambda={lam!r}", {"lambda": lam, "trees": n},
                               phi0 * r, phi0 * se, eval_phi_prime(mech, lam), tol, n_se, diag))
    return records


# ---------------------------------------------------------------- level functionals


def _ngh_job(source, block, count, kmax, lam, lam0, pvals):
    """Columns: [1 - e^{-lam0 sigma}] then, per p, e^{-lam sigma} sum over depth-k
    vertices of mass * e^{-p mass} (k <= kmax)."""
    total, _, A = kernels.levels_block(
        source.rng(block), *source.law_args(), source.cap, count, kmax,
        float(source.n0), np.asarray(pvals, dtype=float),
    )
    sigma = sigma_of(total, source.n0)
    w = damped(sigma, lam)
    cols = [laplace_defect(sigma, lam0)[:, None]]
    cols += [w[:, None] * A[:, j, :] / source.n0 for j in range(len(pvals))]
    return np.hstack(cols)


def _propagate_c_H(fn, calib):
    """Half-difference of ``fn(c_H)`` across one standard error of c_H."""
    se = calib.stderr.get("c_H", 0.0)
    if not se:
        return 0.0
    return 0.5 * abs(fn(calib.c_H + se) - fn(calib.c_H - se))


def suite_ngh(config, calib):
    mech = _mech(config)
    lam, pvals, ts = config["ngh.lambda"], config["ngh.p"], config["ngh.t"]
    kmax = level_depth_limit(config)
    n = config.trees_for("ngh")
    mom = run_blocks(bind(_ngh_job, kmax, lam, config.lambda0, pvals), _source(config), n, config["workers"])
    dim = len(mom.total)
    phi0 = eval_phi(mech, config.lambda0)
    g = np.eye(dim)[0]
    records = []
    for j, p in enumerate(pvals):
        block = slice(1 + j * (kmax + 1), 1 + (j + 1) * (kmax + 1))
        for t in ts:
            def est_at(c_H, t=t, block=block):
                x = LevelMap(config.alpha, config.n0, c_H).real_depth(t)
                return phi0 * mom.ratio(depth_weights(block, dim, x), g)[0]

            x = calib.level_map().real_depth(t)
            r, se = mom.ratio(depth_weights(block, dim, x), g)
            se_h = _propagate_c_H(est_at, calib)
            se_tot = math.hypot(phi0 * se, se_h)
            records.append(_check(
                "ngh", f"p={p!r}/t={t!r}", {"lambda": lam, "p": p, "t": t, "trees": n},
                phi0 * r, se_tot, ngh_rhs(mech, lam, p, t),
                config["ngh.tol_rel"], config["ngh.n_se"],
                {"real_depth": x, "stderr_mc": phi0 * se, "stderr_c_H": se_h},
            ))
    return records


def suite_local_time(config, calib):
    mech = _mech(config)
    lam0 = config.lambda0
    kmax = level_depth_limit(config)
    n = config.trees_for("local_time")
    mom = level_moments(config, lam0, n, kmax)
    layout = levels_layout(kmax)
    dim = layout["dim"]
    g = np.eye(dim)[layout["g"]]
    phi0 = eval_phi(mech, lam0)
    window = calib.diagnostics.get("window") or default_window(calib.level_map())
    records = []
    for t in config["local_time.t"]:
        target_mean = local_time_mean(mech, lam0, t)

        def est_at(c_H, t=t):
            lm = LevelMap(config.alpha, config.n0, c_H)
            return phi0 * calib.c_L * mom.ratio(local_time_weights(layout, lm, t, window), g)[0]

        r, se = mom.ratio(local_time_weights(layout, calib.level_map(), t, window), g)
        est = phi0 * calib.c_L * r / target_mean
        se_h = _propagate_c_H(est_at, calib) / target_mean
        se_tot = math.hypot(phi0 * calib.c_L * se / target_mean, se_h)
        role = "calibration" if abs(t - calib.diagnostics.get("t_ref", -1)) < 1e-12 else "held-out"
        records.append(_check(
            "local-time", f"t={t!r}", {"t": t, "lambda0": lam0, "role": role, "trees": n},
            est, se_tot, 1.0, config["local_time.tol_rel"], None,
            {"damped_mean_target": target_mean, "window": window},
        ))
    return records


def _ode_mc_job(source, block, count, kmax, lam, lam0, gamma, c_H, c_L, alpha, ts, window):
    total, Z, _ = kernels.levels_block(
        source.rng(block), *source.law_args(), source.cap, count, kmax,
        float(source.n0), np.zeros(0),
    )
    sigma = sigma_of(total, source.n0)
    lm = LevelMap(alpha, source.n0, c_H)
    layout = levels_layout(kmax)
    Zf = np.hstack([np.zeros((count, layout["Z"].start)), Z[:, : kmax + 1].astype(float)])
    cols = [laplace_defect(sigma, lam0)]
    w = damped(sigma, lam)
    for t in ts:
        weights = local_time_weights(layout, lm, t, window)[: layout["Z"].stop]
        L = c_L * (Zf @ weights)
        cols.append(w * -np.expm1(-gamma * L))
    return np.column_stack(cols)


def suite_ode_mc(config, calib):
    mech = _mech(config)
    lam, gamma, ts = config["ode_mc.lambda"], config["ode_mc.gamma"], config["ode_mc.t"]
    kmax = level_depth_limit(config)
    n = config.trees_for("ode_mc")
    window = calib.diagnostics.get("window") or default_window(calib.level_map())
    job = bind(_ode_mc_job, kmax, lam, config.lambda0, gamma, calib.c_H, calib.c_L, config.alpha, ts, window)
    mom = run_blocks(job, _source(config), n, config["workers"])
    phi0 = eval_phi(mech, config.lambda0)
    sol = solve_w(mech, lam, gamma, max(ts) + 0.1, config["ode.step"])
    e = np.eye(len(mom.total))
    records = []
    for j, t in enumerate(ts):
        r, se = mom.ratio(e[1 + j], e[0])
        records.append(_check(
            "ode-mc", f"t={t!r}", {"lambda": lam, "gamma": gamma, "t": t, "trees": n},
            phi0 * r, phi0 * se, sol.at(t), config["ode_mc.tol_rel"], config["ode_mc.n_se"],
        ))
    return records


# ---------------------------------------------------------------- dislocations


def _ngg_job(source, block, count, lam, lam0, delta_count, scale, offset, rate, kind):
    total, val = kernels.ngg_block(
        source.rng(block), *source.law_args(), source.cap, count, float(source.n0),
        delta_count, scale, offset, rate, kind,
    )
    sigma = sigma_of(total, source.n0)
    return np.column_stack([laplace_defect(sigma, lam0), damped(sigma, lam) * val])


def suite_ngg(config, calib):
    mech = _mech(config)
    spec = FunctionalSpec(lam=config["ngg.lambda"], rate=config["ngg.rate"],
                          G=config["ngg.G"], delta=config["ngg.delta"])
    n = config.trees_for("ngg")
    delta_count = int(math.ceil(spec.delta * config.n0 - 1e-9))
    scale = calib.level_map().scale
    job = bind(_ngg_job, spec.lam, config.lambda0, delta_count, scale,
               config["ngg.level_offset"], spec.rate, spec.kind_code)
    mom = run_blocks(job, _source(config), n, config["workers"])
    phi0 = eval_phi(mech, config.lambda0)
    r, se = mom.ratio([0.0, 1.0], [1.0, 0.0])
    tree, tree_se = phi0 * r, phi0 * se

    base = ImportanceConfig(samples=config["ngg.samples"], v_min=config["ngg.v_min"], v_max=config["ngg.v_max"])
    variants = {
        "base": base,
        "half_r_min": ImportanceConfig(samples=base.samples, v_min=base.v_min, v_max=base.v_max,
                                       r_min=0.5 * base.cutoff(spec.delta)),
        "wide_v": ImportanceConfig(samples=base.samples, v_min=0.1 * base.v_min, v_max=2.0 * base.v_max),
    }
    sub = {k: ngg_rhs_mc(config.alpha, spec, cfg, stream(config.seed, f"subordinator/{k}"))
           for k, cfg in variants.items()}
    ref = sub["base"]
    n_se, tol = config["ngg.n_se"], config["ngg.tol_rel"]
    inputs = {"lambda": spec.lam, "rate": spec.rate, "G": spec.G, "delta": spec.delta,
              "trees": n, "samples": base.samples, "level_offset": config["ngg.level_offset"]}
    combined = math.hypot(tree_se, ref.stderr)
    err = abs(tree - ref.value)
    diag = {
        "subordinator_stderr": ref.stderr, "tree_stderr": tree_se,
        "bias_bound": ref.bias_bound, "bias_below_tenth_stderr": ref.bias_bound < 0.1 * ref.stderr,
        "warning": ref.warning,
    }
    records = [CaseRecord("ngg", "tree_vs_subordinator", inputs, tree, combined, ref.value,
                          {"rel": tol, "n_se": n_se},
                          bool(err <= n_se * combined and err <= tol * abs(ref.value)), diag)]
    for k in ("half_r_min", "wide_v"):
        v = sub[k]
        comb = math.hypot(v.stderr, ref.stderr)
        records.append(CaseRecord("ngg", f"stability/{k}", dict(inputs, variant=k), v.value, comb, ref.value,
                                  {"n_se": n_se}, bool(abs(v.value - ref.value) <= n_se * comb),
                                  {"bias_bound": v.bias_bound}))
    if spec.G == "second_mass_indicator":
        quad = ngg_rhs_quadrature(config.alpha, spec)
        records.append(CaseRecord("ngg", "subordinator_vs_quadrature", inputs, ref.value, ref.stderr, quad,
                                  {"n_se": n_se}, bool(abs(ref.value - quad) <= n_se * ref.stderr)))
    return records


# ---------------------------------------------------------------- conditioned trees


def _conditioned_one(args):
    alpha, n0, window, seed, i, max_attempts = args
    law = offspring_table(alpha)
    tree = sample_tree_conditioned(law, n0, window, stream(seed, "conditioned", i), max_attempts)
    return tree.parent.astype(np.int32)


@lru_cache(maxsize=4)
def conditioned_parents(alpha, n0, window, seed, count, max_attempts, workers=1):
    """Parent arrays of size-conditioned trees; tree ``i`` uses its own stream."""
    tasks = [(alpha, n0, window, seed, i, max_attempts) for i in range(count)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return tuple(pool.map(_conditioned_one, tasks, chunksize=8))
    return tuple(_conditioned_one(t) for t in tasks)


def _conditioned_stats(config):
    parents = conditioned_parents(
        config.alpha, config.n0, config["conditioned.window"], config.seed,
        config["conditioned.trees"], config["conditioned.max_attempts"], config["workers"],
    )
    for p in parents:
        yield analyze(PlaneTree(p.astype(np.int64)))


def mid_height(config, calib) -> float:
    """Half the median height of the conditioned sample, in level units."""
    if config["conditioned.t"] > 0:
        return config["conditioned.t"]
    lm = calib.level_map()
    heights = [st.height for st in _conditioned_stats(config)]
    return 0.5 * float(np.median(heights)) / lm.scale


def eps_decades(config):
    """Two decades of mass thresholds starting at the resolution limit."""
    k0 = config["conditioned.min_vertices"]
    per = config["conditioned.eps_per_decade"]
    ks = k0 * 10.0 ** (np.arange(2 * per) / per)
    eps = ks / config.n0
    return eps[:per], eps[per:]


def _small_fragment_table(config, calib, t, eps):
    lm = calib.level_map()
    N, M, L = [], [], []
    for st in _conditioned_stats(config):
        s = small_fragment_stats(st, lm, t, eps)
        N.append(s.N_eps)
        M.append(s.M_eps)
        L.append(local_time_profile(st, lm, [t], c_L=calib.c_L).values[0])
    return np.array(N), np.array(M), np.array(L)


def suite_small_fragments(config, calib):
    a = config.alpha
    g = stable_constants(a).gamma_value
    t = mid_height(config, calib)
    eps, _ = eps_decades(config)
    N, M, L = _small_fragment_table(config, calib, t, eps)
    total_L = L.sum()
    n_err, m_err = [], []
    for j, e in enumerate(eps):
        n_err.append(abs((e ** (1 / a) * g * N[:, j]).sum() - total_L) / total_L)
        m_err.append(abs(((a - 1) * e ** (1 / a - 1) * g * M[:, j]).sum() - total_L) / total_L)
    tol = config["small_fragments.tol_rel"]
    inputs = {"t": t, "eps": [float(e) for e in eps], "trees": int(len(L)), "m": config.n0,
              "window": config["conditioned.window"]}
    records = []
    for name, errs in (("count", n_err), ("mass", m_err)):
        mean_err = float(np.mean(errs))
        records.append(CaseRecord("small-fragments", f"{name}_vs_local_time", inputs, mean_err, 0.0, 0.0,
                                  {"rel": tol}, mean_err <= tol,
                                  {"per_eps_error": [float(x) for x in errs], "mean_local_time": float(L.mean())}))
    return records


def pooled_dispersion(counts: np.ndarray, groups: np.ndarray) -> float:
    """Within-group variance over within-group mean, pooled across groups."""
    num = den = 0.0
    for gval in np.unique(groups):
        x = counts[groups == gval]
        if len(x) > 1:
            num += ((x - x.mean()) ** 2).sum()
            den += (len(x) - 1) * x.mean()
    return num / den if den > 0 else float("nan")


def _groups(L, bins):
    """Bins of the local time: exact values when ``bins == 0``, else quantile bins."""
    if bins <= 0:
        return np.unique(L, return_inverse=True)[1]
    edges = np.quantile(L, np.linspace(0, 1, bins + 1))
    return np.clip(np.searchsorted(edges, L, side="right") - 1, 0, bins - 1)


def suite_poisson_counts(config, calib):
    t = mid_height(config, calib)
    d1, d2 = eps_decades(config)
    eps = np.concatenate([d1, d2])
    N, _, L = _small_fragment_table(config, calib, t, eps)
    groups = _groups(L, config["poisson_counts.bins"])
    lo, hi = config["poisson_counts.dispersion_min"], config["poisson_counts.dispersion_max"]
    records = []
    for j, e in enumerate(eps):
        counts = N[:, j].astype(float)
        if counts.mean() < config["poisson_counts.min_mean"]:
            # fragments this large are too rare to carry any count information
            log.info("poisson-counts: skipping eps=%.4g (mean count %.3f)", e, counts.mean())
            continue
        disp = pooled_dispersion(counts, groups)
        records.append(CaseRecord(
            "poisson-counts", f"eps={float(e):.6g}",
            {"t": t, "eps": float(e), "vertices": float(e * config.n0), "decade": 1 if j < len(d1) else 2,
             "trees": int(len(L)), "bins": config["poisson_counts.bins"]},
            disp, math.sqrt(2.0 / max(len(L) - len(np.unique(groups)), 1)), 1.0,
            {"min": lo, "max": hi}, bool(lo <= disp <= hi), {"mean_count": float(counts.mean())},
        ))
    return records


def _fresh_largest(law, config, i, frags, depth_gap):
    """Largest mass at ``depth_gap`` levels below fresh trees matched to ``frags``."""
    best = 0.0
    window = config["conditioned.window"]
    for j, k in enumerate(frags):
        if (k - 1) / config.n0 <= best or k < 2:
            break
        fresh = sample_tree_conditioned(law, int(k), window, stream(config.seed, "fresh", i * 65536 + j),
                                        config["conditioned.max_attempts"])
        pieces = fragments_at_level(analyze(fresh), depth_gap - 1)
        if len(pieces):
            # rescale the realized size back to the fragment's
            best = max(best, pieces[0] / fresh.total_progeny * k / config.n0)
    return best


def suite_frag_property(config, calib):
    law = offspring_table(config.alpha)
    lm = calib.level_map()
    t, tp = config["frag_property.t"], config["frag_property.t_prime"]
    d_t = lm.depth_of(t)
    gap = lm.depth_of(t + tp) - d_t
    if gap < 1:
        raise ConfigError("t_prime is below one depth step")
    X, Y, Yf = [], [], []
    for i, st in enumerate(_conditioned_stats(config)):
        frags = fragments_at_level(st, d_t)
        later = fragments_at_level(st, d_t + gap)
        X.append(frags[0] / config.n0 if len(frags) else 0.0)
        Y.append(later[0] / config.n0 if len(later) else 0.0)
        Yf.append(_fresh_largest(law, config, i, frags, gap))
    X, Y, Yf = map(np.asarray, (X, Y, Yf))
    groups = _groups(X, config["frag_property.buckets"])
    p_min = config["frag_property.p_min"]
    pvals = []
    for b in range(config["frag_property.buckets"]):
        sel = groups == b
        pvals.append(float(sps.ks_2samp(Y[sel], Yf[sel]).pvalue) if sel.sum() > 1 else float("nan"))
    passed_buckets = sum(p > p_min for p in pvals)
    need = config["frag_property.min_pass"]
    return [CaseRecord(
        "frag-property", "ks_buckets",
        {"t": t, "t_prime": tp, "buckets": config["frag_property.buckets"], "trees": int(len(X))},
        float(passed_buckets), 0.0, float(config["frag_property.buckets"]),
        {"p_min": p_min, "min_pass": need}, passed_buckets >= need,
        {"p_values": pvals, "mean_largest_t": float(X.mean()), "mean_largest_later": float(Y.mean()),
         "mean_largest_fresh": float(Yf.mean())},
    )]


# ---------------------------------------------------------------- tails and structure


def tail_slope(sizes: np.ndarray, decades: float, min_exceed: int, per_decade: int = 10):
    """Log-log slope of the empirical survival function over the top decades.

    The upper end is the largest size still exceeded by ``min_exceed`` trees;
    overflowed trees (size -1) count as exceeding every level.
    """
    n = len(sizes)
    finite = np.sort(sizes[sizes > 0])
    over = n - len(finite)

    def survival(x):
        return (len(finite) - np.searchsorted(finite, x, side="left") + over) / n

    top = finite[len(finite) - (min_exceed - over)] if min_exceed > over else finite[-1]
    grid = np.unique(np.floor(np.logspace(math.log10(top) - decades, math.log10(top),
                                          int(decades * per_decade) + 1)))
    surv = np.array([survival(x) for x in grid])
    slope, intercept = np.polyfit(np.log(grid), np.log(surv), 1)
    return float(slope), float(intercept), grid, surv


def suite_tails(config, calib=None):
    law = offspring_table(config.alpha)
    n, cap = config["tails.trees"], config["tails.cap"]
    sizes = np.concatenate([
        sample_total_progeny(law, stream(config.seed, "tails", b), cap, c)
        for b, c in enumerate(_chunks(n, config["block_size"]))
    ])
    slope, _, grid, _ = tail_slope(sizes, config["tails.decades"], config["tails.min_exceed"])
    target = -1.0 / config.alpha
    tol = config["tails.tol"]
    diag = {"range": [float(grid[0]), float(grid[-1])], "overflow": int((sizes < 0).sum()),
            "freq_T1": float(np.mean(sizes == 1)), "freq_T3": float(np.mean(sizes == 3))}
    return [CaseRecord("tails", "slope", {"trees": n, "cap": cap}, slope, 0.0, target,
                       {"abs": tol}, abs(slope - target) <= tol, diag)]


def _chunks(n, size):
    full, rest = divmod(n, size)
    return [size] * full + ([rest] if rest else [])


def brute_force_components(parent: np.ndarray, depth: np.ndarray, d: int) -> list:
    """Sizes of connected components of {depth > d} by union-find over tree edges."""
    n = len(parent)
    root = list(range(n))

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    for v in range(1, n):
        p = parent[v]
        if depth[v] > d and depth[p] > d:
            root[find(v)] = find(p)
    sizes = {}
    for v in range(n):
        if depth[v] > d:
            r = find(v)
            sizes[r] = sizes.get(r, 0) + 1
    return sorted(sizes.values(), reverse=True)


def check_tree_invariants(st, level_map, brute=False, tags=()) -> dict:
    """Exact identities on one analyzed tree; returns counts of violations."""
    bad = {"conservation": 0, "level_count": 0, "components": 0, "tagged": 0}
    sub = st.subtree_size
    kids_sum = np.zeros(st.total_progeny, np.int64)
    np.add.at(kids_sum, st.parent[1:], sub[1:])
    bad["conservation"] = int(np.sum(kids_sum + 1 != sub))
    above = np.cumsum(st.depth_histogram[::-1])[::-1]
    for d in range(st.height):
        if int(sub[st.vertices_at_depth(d + 1)].sum()) != int(above[d + 1]):
            bad["level_count"] += 1
        if brute:
            if list(fragments_at_level(st, d)) != brute_force_components(st.parent, st.depth, d):
                bad["components"] += 1
    for v in tags:
        if not tagged_path(st, level_map, int(v)).check_conservation():
            bad["tagged"] += 1
    return bad


def suite_structure(config, calib=None):
    law = offspring_table(config.alpha)
    lm = LevelMap(config.alpha, config.n0, calib.c_H if calib else 1.0)
    totals = {"conservation": 0, "level_count": 0, "components": 0, "tagged": 0}
    n_small = n_trees = 0
    rng = stream(config.seed, "structure")
    cap = config.cap()
    for i in range(2000):
        try:
            tree = sample_tree(law, rng, cap)
        except TreeOverflow:
            continue
        st = analyze(tree)
        small = st.total_progeny <= 200
        n_small += small
        tags = rng.integers(0, st.total_progeny, size=3)
        for k, v in check_tree_invariants(st, lm, brute=small, tags=tags).items():
            totals[k] += v
        n_trees += 1
    for st in _conditioned_stats(config.replace(**{"conditioned.trees": min(50, config["conditioned.trees"])})):
        tags = rng.integers(0, st.total_progeny, size=3)
        for k, v in check_tree_invariants(st, lm, tags=tags).items():
            totals[k] += v
        n_trees += 1
    return [CaseRecord("structure", name, {"trees": n_trees, "brute_force_trees": n_small},
                       float(v), 0.0, 0.0, {"abs": 0}, v == 0) for name, v in totals.items()]


SUITES = {
    "mechanism": suite_mechanism,
    "ode-analytic": suite_ode_analytic,
    "excursion": suite_excursion,
    "ngh": suite_ngh,
    "ngg": suite_ngg,
    "local-time": suite_local_time,
    "ode-mc": suite_ode_mc,
    "small-fragments": suite_small_fragments,
    "poisson-counts": suite_poisson_counts,
    "frag-property": suite_frag_property,
    "tails": suite_tails,
    "structure": suite_structure,
}


def run_suite(suite_id: str, config, calib=None) -> SuiteReport:
    if suite_id not in SUITES:
        raise ConfigError(f"unknown suite {suite_id!r}; choose from {', '.join(SUITES)}")
    if suite_id in TREE_SUITES and calib is None:
        raise ConfigError(f"suite {suite_id!r} needs a calibration")
    start = time.perf_counter()
    records = SUITES[suite_id](config, calib)
    report = SuiteReport(suite_id, records, config.seed, time.perf_counter() - start)
    report.warnings = [r.diagnostics.get("warning") for r in records if r.diagnostics.get("warning")]
    log.info("suite %s: %s in %.1fs", suite_id, "pass" if report.passed else "FAIL", report.wall_time)
    return report
