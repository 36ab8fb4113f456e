"""Simulation designs from configs, single-fit summaries and replicate studies."""

import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .baselines import hierarchical_ward, pairwise_riemannian, pam
from .errors import ConfigError
from .io import DatasetBundle, require
from .mfm_prior import DpmPriorSpec, MfmPriorSpec
from .postprocess import (adjusted_rand_index, credible_interval, dahl_partition, ess,
                          modal_k)
from .sampler import SamplerConfig, run
from .simulation import (MixtureSpec, Var1Spec, balanced_sizes, choose_T_for_target_nu,
                         default_nu, generate_large_setting, generate_var1_dataset,
                         generate_wishart_mixture, load_scales, proportion_sizes)
from .spd import SpdMatrix
from .wishart import PriorHyper

CHAIN_SEED_OFFSET = 1_000_000


# -- designs ----------------------------------------------------------------------------

def _scales(cfg, source, setting, k0):
    raw = cfg.get("scales")
    if raw is None:
        return load_scales(setting, k0)
    try:
        return tuple(SpdMatrix(m) for m in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: field 'scales': {exc}") from None


def _sizes(cfg, source, n, k0):
    balance = cfg.get("balance", "balanced")
    if balance == "balanced":
        return balanced_sizes(n, k0)
    if isinstance(balance, list) and len(balance) == k0:
        return proportion_sizes(n, balance)
    raise ConfigError(f"{source}: field 'balance' must be \"balanced\" or {k0} proportions")


def dataset_from_config(cfg, source="<config>", seed=None):
    """Build a :class:`DatasetBundle` from a simulation config dict.

    Fields: ``setting`` (small, medium, large, var1 or custom), ``n``,
    ``seed``, and as needed ``k0``, ``balance``, ``nu``, ``scales``,
    ``matrix_setting``, ``phi``, ``nu0`` and ``T``.
    """
    if not isinstance(cfg, dict):
        raise ConfigError(f"{source}: config must be a JSON object")
    setting = require(cfg, "setting", source, str)
    n = require(cfg, "n", source, int)
    seed = require(cfg, "seed", source, int) if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    meta = {"setting": setting, "seed": seed, "n": n}
    if setting == "large":
        fixed = cfg.get("scales")
        data, labels, _ = generate_large_setting(n, rng, fixed_scales=fixed,
                                                 nu=float(cfg.get("nu", 15.0)))
        meta.update(k0=3, nu=float(cfg.get("nu", 15.0)))
    elif setting in ("small", "medium", "custom"):
        k0 = int(cfg.get("k0", 3))
        if setting == "custom" and "scales" not in cfg:
            raise ConfigError(f"{source}: a custom setting needs field 'scales'")
        scales = _scales(cfg, source, setting, k0)
        k0 = len(scales)
        nu = float(cfg["nu"]) if "nu" in cfg else default_nu(k0)
        _sizes(cfg, source, n, k0)
        balance = cfg.get("balance", "balanced")
        spec = MixtureSpec(scales, nu, n, None if balance == "balanced" else tuple(balance))
        sizes = spec.sizes()
        data, labels = generate_wishart_mixture(spec, rng)
        meta.update(k0=k0, nu=nu, sizes=list(sizes))
    elif setting == "var1":
        k0 = int(cfg.get("k0", 3))
        mset = cfg.get("matrix_setting", "medium")
        scales = _scales(cfg, source, mset, k0)
        phi = require(cfg, "phi", source, float)
        nu0 = float(cfg.get("nu0", 10.0))
        T = int(cfg["T"]) if "T" in cfg else choose_T_for_target_nu(nu0, phi)
        sizes = _sizes(cfg, source, n, len(scales))
        specs = [Var1Spec(phi, s, T, nu0) for s in scales]
        data, labels = generate_var1_dataset(specs, sizes, rng)
        meta.update(k0=len(scales), phi=phi, nu0=nu0, T=T, sizes=list(sizes))
    else:
        raise ConfigError(f"{source}: unknown setting {setting!r}")
    return DatasetBundle(data, labels, meta=meta)


def mixture_design(p_setting="medium", k0=3, n=100, balance="balanced", **extra):
    cfg = {"setting": p_setting, "k0": k0, "n": n, "balance": balance}
    cfg.update(extra)
    return cfg


# -- sampler configs ---------------------------------------------------------------------

def prior_from_config(d, p, source="<config>"):
    psi0 = d.get("psi0", 1.0)
    try:
        psi0 = SpdMatrix(np.eye(p) * float(psi0)) if np.ndim(psi0) == 0 else SpdMatrix(psi0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: field 'prior.psi0': {exc}") from None
    kappa0 = float(d.get("kappa0", p + 2.0))
    return PriorHyper(psi0, kappa0, float(d.get("nu_lo", p + 2.0)), float(d.get("nu_hi", 50.0)))


def application_config(p, seed=0):
    """Settings of the connectivity analysis: nu ~ U(10, 100), kappa0 = 12, sd 3."""
    kappa0, lo, hi = 12.0, 10.0, 100.0
    nu_mid = 0.5 * (lo + hi)
    psi0 = SpdMatrix(np.eye(p) * (kappa0 - p - 1) / nu_mid)
    return SamplerConfig(iterations=20_000, burn_in=8_000, proposal_sd=3.0, seed=seed,
                         prior=PriorHyper(psi0, kappa0, lo, hi))


def model_from_name(name):
    if name == "mfm":
        return MfmPriorSpec()
    if name == "dpm":
        return DpmPriorSpec()
    raise ConfigError(f"unknown model {name!r}; expected 'mfm' or 'dpm'")


# -- one fit ------------------------------------------------------------------------------

def summarize_fit(trace, truth=None, level=0.95):
    """Result record of a chain: Dahl partition, K+ posterior and nu summary."""
    est = dahl_partition(trace)
    lo, hi = credible_interval(trace.nu, level)
    out = {
        "dahl": {"labels": est.labels.tolist(), "draw_index": est.draw_index,
                 "k_hat": est.k_hat},
        "k_plus_hist": {str(k): v for k, v in sorted(est.k_plus_hist.items())},
        "k_plus_mode": modal_k(est.k_plus_hist),
        "nu": {"mean": float(np.mean(trace.nu)), "ci": [lo, hi], "level": level,
               "ess": ess(trace.nu) if len(trace) >= 10 else None,
               "acceptance_rate": (trace.acceptance_rate if trace.nu_proposed else None)},
        "draws": len(trace),
    }
    if truth is not None:
        k0 = int(np.unique(truth).size)
        out["truth"] = {"k0": k0, "ari": adjusted_rand_index(truth, est.labels),
                        "k_correct": est.k_hat == k0}
    return out


def score_replicate(data, truth, config, baselines=False, metric="affine"):
    """Fit one dataset and score it; baselines get ``k`` from the Dahl estimate."""
    t0 = time.perf_counter()
    trace = run(data, config)
    secs = time.perf_counter() - t0
    summ = summarize_fit(trace, truth)
    rec = {"model": summ, "seconds": secs, "k0": int(np.unique(truth).size)}
    if baselines:
        k = summ["dahl"]["k_hat"]
        d = pairwise_riemannian(data, metric)
        for name, fn in (("hc", hierarchical_ward), ("pam", pam)):
            z = fn(d, k)
            rec[name] = {"ari": adjusted_rand_index(truth, z), "k": k}
    return rec


def _replicate_job(args):
    design, seed, cfg_dict, baselines = args
    bundle = dataset_from_config(design, seed=seed)
    cfg = SamplerConfig.from_dict(dict(cfg_dict, seed=seed + CHAIN_SEED_OFFSET))
    rec = score_replicate(bundle.matrices, bundle.labels, cfg, baselines)
    rec["seed"] = seed
    return rec


def run_study(design, seeds, config, baselines=False, workers=1):
    """Fit every seeded replicate of a design; one chain per worker process.

    Replicate ``s`` draws its dataset with seed ``s`` and runs its chain
    with seed ``s + CHAIN_SEED_OFFSET``.
    """
    jobs = [(design, int(s), config.to_dict(), baselines) for s in seeds]
    if workers <= 1:
        return [_replicate_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replicate_job, jobs))


def study_summary(records, key="model"):
    """Mean and sd of ARI, K-recovery accuracy and mean seconds over replicates."""
    ari = np.array([r[key]["truth"]["ari"] if key == "model" else r[key]["ari"] for r in records])
    out = {"replicates": len(records), "ari_mean": float(ari.mean()),
           "ari_sd": float(ari.std(ddof=1)) if ari.size > 1 else 0.0}
    if key == "model":
        kc = np.array([r["model"]["truth"]["k_correct"] for r in records])
        out["k_accuracy"] = float(kc.mean())
        out["seconds_mean"] = float(np.mean([r["seconds"] for r in records]))
    return out
