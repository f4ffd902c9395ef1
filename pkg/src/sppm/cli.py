"""Command-line driver.

Subcommands: ``gen``, ``prior-sim``, ``fit``, ``predict``, ``metrics``,
``corr``, ``simstudy``. Every option can come from a ``key = value`` config
file (``--config``; '#' starts a comment) or a flag of the same name; flags
win. Unknown config keys are rejected and numeric keys are range-checked.
All outputs are deterministic given a seed.
"""

from __future__ import annotations

import argparse
import sys
from math import exp
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import io as sio
from .cohesion import CohesionConfig, NiwParams
from .correlation import corr_prop1, corr_prop2, phi_for_effective_range
from .datagen import SimScenario, gen_dataset
from .metrics import adjusted_rand, lpml, mse, mspe, waic
from .models import (
    CpsSpec,
    Dataset,
    JointSpec,
    McmcConfig,
    fit_cps,
    fit_joint,
    predict_cps,
    predict_joint,
)
from .prior import coclustering_matrix, exact_prior, prior_summaries
from .metrics import coclustering_from_draws, dahl_estimate
from .simstudy import StudyConfig, run_simstudy, study_rows_header
from .spatial import LocationSet, Partition, standardize

__all__ = ["main"]


def _positive(v: float) -> bool:
    return v > 0


def _nonneg(v: float) -> bool:
    return v >= 0


def _float_list(text: str) -> tuple:
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _str_list(text: str) -> tuple:
    return tuple(s for s in str(text).replace(",", " ").split() if s)


def _int_list(text: str) -> tuple:
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# name -> (parser, default, validator or None, help)
KEYS: Dict[str, tuple] = {
    "model": (str, "cps", lambda v: v in ("cps", "jps", "jls"), "model kind"),
    "cohesion": (str, "C4", lambda v: v in ("C1", "C2", "C3", "C4"), "cohesion kind"),
    "M": (float, 1.0, _positive, "cohesion mass parameter"),
    "alpha": (float, 1.0, _positive, "C1 distance penalty"),
    "a": (float, 1.0, _positive, "C2 distance threshold"),
    "a_median": (_bool, False, None, "set a to the median pairwise distance"),
    "kappa0": (float, 1.0, _positive, "NIW precision scale"),
    "nu0": (float, 2.0, lambda v: v > 1, "NIW degrees of freedom"),
    "lambda0": (_float_list, (1.0,), None, "NIW scale: one value or l11 l12 l22"),
    "mu0_policy": (str, "centroid", lambda v: v in ("centroid", "fixed"), "NIW mean policy"),
    "mu0_point": (_float_list, (0.0, 0.0), None, "fixed NIW mean"),
    "iters": (int, 2000, lambda v: v >= 2, "MCMC sweeps"),
    "burnin": (int, 1000, _nonneg, "burn-in sweeps"),
    "thin": (int, 1, _positive, "thinning interval"),
    "neal_m": (int, 1, _positive, "auxiliary components"),
    "seed": (int, 0, None, "master seed"),
    "init": (str, "single", lambda v: v in ("single", "kmeans"), "initial partition"),
    "standardize_locations": (_bool, True, None, "standardize coordinates"),
    "standardize_response": (_bool, False, None, "standardize y (and x)"),
    "prior_only": (_bool, False, None, "drop likelihood terms"),
    "out_dir": (str, ".", None, "output directory"),
    "train": (str, "", None, "training data file"),
    "test": (str, "", None, "test data / prediction sites file"),
    "locations": (str, "", None, "locations file (s1, s2)"),
    "n_draws": (int, 5000, _positive, "prior simulation draws"),
    "layout": (str, "square", lambda v: v in ("square", "mixture"), "location layout"),
    "n_clusters": (int, 4, lambda v: v in (1, 4), "true cluster count"),
    "error": (str, "gaussian", lambda v: v in ("gaussian", "mixture"), "noise family"),
    "n_train": (int, 100, _positive, "training size"),
    "n_test": (int, 100, _nonneg, "test size"),
    "tau2": (float, 1.0, _nonneg, "cluster-mean variance for corr curves"),
    "sigma2": (float, 0.1, _positive, "error variance for corr curves"),
    "lambda2": (float, 0.0, _nonneg, "global GP sill for corr curves"),
    "gp_range": (float, 6.0, _positive, "effective range for corr curves"),
    "max_dist": (float, 4.0, _positive, "largest distance in corr outputs"),
    "n_points": (int, 60, lambda v: v >= 2, "points on the corr curve"),
    "n_grid": (int, 21, lambda v: v >= 3, "corr field grid side"),
    "reps": (int, 20, _positive, "simulation replicates per cell"),
    "cohesions": (_str_list, ("C1", "C2", "C3", "C4"), None, "cohesions for simstudy"),
    "m_values": (_float_list, (1.0, 0.1, 0.01), None, "M grid for simstudy"),
    "layouts": (_str_list, ("square", "mixture"), None, "layouts for simstudy"),
    "errors": (_str_list, ("gaussian", "mixture"), None, "error families for simstudy"),
    "clusters": (_int_list, (1, 4), None, "cluster counts for simstudy"),
    "workers": (int, 1, _positive, "simstudy worker processes"),
    "loglik": (str, "", None, "loglik matrix file"),
    "fitted": (str, "", None, "in-sample fitted values file"),
    "predicted": (str, "", None, "prediction file (column mean)"),
    "true_partition": (str, "", None, "true partition file"),
    "est_partition": (str, "", None, "estimated partition file"),
}


def parse_config_file(path) -> Dict[str, object]:
    """``key = value`` lines; '#' comments; unknown keys rejected."""
    out: Dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def resolve_options(args: argparse.Namespace) -> Dict[str, object]:
    """Defaults < config file < explicit flags, all validated."""
    values: Dict[str, object] = {k: spec[1] for k, spec in KEYS.items()}
    raw: Dict[str, object] = {}
    if getattr(args, "config", None):
        raw.update(parse_config_file(args.config))
    for key in KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = flag
    for key, value in raw.items():
        parser, _, check, _ = KEYS[key]
        parsed = parser(value) if isinstance(value, str) else value
        if check is not None and not check(parsed):
            raise ValueError(f"value out of range for {key}: {parsed!r}")
        values[key] = parsed
    return values


def _add_keys(sub: argparse.ArgumentParser, names: List[str]) -> None:
    sub.add_argument("--config", help="config file with key = value lines")
    for name in names:
        parser, default, _, help_text = KEYS[name]
        flag = "--" + name.replace("_", "-")
        if parser is _bool:
            sub.add_argument(
                flag, dest=name, action=argparse.BooleanOptionalAction,
                default=None, help=help_text,
            )
        else:
            sub.add_argument(flag, dest=name, default=None, help=f"{help_text} (default {default})")


def build_cohesion(opt: Dict[str, object], loc: Optional[LocationSet] = None) -> CohesionConfig:
    lam = opt["lambda0"]
    if len(lam) == 1:
        lam = (lam[0], 0.0, lam[0])
    elif len(lam) != 3:
        raise ValueError("lambda0 needs 1 or 3 values")
    mu0 = tuple(opt["mu0_point"]) if opt["mu0_policy"] == "fixed" else None
    a = opt["a"]
    if opt["a_median"]:
        if loc is None:
            raise ValueError("a_median requires location data")
        iu = np.triu_indices(loc.n, 1)
        a = float(np.median(loc.dist[iu]))
    return CohesionConfig(
        kind=opt["cohesion"],
        M=opt["M"],
        alpha=opt["alpha"],
        a=a,
        niw=NiwParams(kappa0=opt["kappa0"], nu0=opt["nu0"], lambda0=lam, mu0=mu0),
    )


def _load_locations(opt) -> LocationSet:
    path = opt["locations"] or opt["train"]
    if not path:
        raise ValueError("need --locations (or --train) with columns s1, s2")
    coords = sio.read_locations(path)
    return standardize(coords) if opt["standardize_locations"] else LocationSet(coords)


def _out(opt, name: str) -> Path:
    return Path(opt["out_dir"]) / name


def cmd_gen(opt) -> int:
    scenario = SimScenario(
        n_train=opt["n_train"],
        n_test=opt["n_test"],
        n_clusters=opt["n_clusters"],
        layout=opt["layout"],
        error=opt["error"],
        seed=opt["seed"],
    )
    train, test, truth = gen_dataset(scenario)
    sio.write_dataset(_out(opt, "train.csv"), train, truth.partition_train.labels)
    sio.write_dataset(_out(opt, "test.csv"), test, truth.partition_test.labels)
    rows = [("beta", truth.beta), ("sigma2", truth.sigma2)]
    rows += [(f"mu_star_{j + 1}", v) for j, v in enumerate(truth.mu_star)]
    sio.write_rows(_out(opt, "truth.csv"), ["name", "value"], rows)
    return 0


def cmd_prior_sim(opt) -> int:
    loc = _load_locations(opt)
    cfg = build_cohesion(opt, loc)
    summary = prior_summaries(loc, cfg, opt["n_draws"], np.random.default_rng(opt["seed"]))
    sio.write_rows(
        _out(opt, "prior_summary.csv"),
        ["mean_k", "mean_singletons", "mean_max_cluster", "n_draws", "mc_se_k", "ess", "low_ess"],
        [[
            summary.mean_k,
            summary.mean_singletons,
            summary.mean_max_cluster,
            summary.n_draws,
            summary.mc_se_k,
            summary.ess,
            summary.low_ess,
        ]],
    )
    co = coclustering_matrix(loc, cfg, opt["n_draws"], np.random.default_rng(opt["seed"] + 1))
    sio.write_matrix(_out(opt, "coclust.csv"), co)
    return 0


def _fitted_values(samples) -> np.ndarray:
    """Posterior-mean in-sample fit (first response coordinate for joint models)."""
    data = samples.data
    n = data.n
    acc = np.zeros(n)
    T = samples.n_draws
    for t in range(T):
        labels = np.asarray(samples.partitions[t].labels) - 1
        mu = np.asarray(samples.params["mu_star"][t])
        if samples.model == "cps":
            mean = mu[labels]
            if data.x is not None:
                mean = mean + data.x @ samples.params["beta"][t]
        else:
            mean = mu[labels][:, 0]
            if samples.model == "jls":
                gamma = float(samples.params["gamma"][t])
                A = np.array([[1.0, gamma], [gamma, 1.0]])
                mean = mean + (A @ samples.params["theta_tilde"][t])[0]
        acc += mean
    return acc / T


def _run_fit(opt):
    train = sio.read_dataset(opt["train"])
    frame_mean = train.loc.coords.mean(axis=0)
    frame_sd = train.loc.coords.std(axis=0, ddof=1)
    if opt["standardize_locations"]:
        train = Dataset(
            LocationSet((train.loc.coords - frame_mean) / frame_sd), train.y, train.x
        )
    if opt["standardize_response"]:
        train = train.standardize_response()
    cfg = build_cohesion(opt, train.loc)
    mcmc = McmcConfig(
        n_iter=opt["iters"],
        burnin=opt["burnin"],
        thin=opt["thin"],
        neal_m=opt["neal_m"],
        seed=opt["seed"],
        init=opt["init"],
    )
    if opt["model"] == "cps":
        samples = fit_cps(train, CpsSpec(cohesion=cfg), mcmc, prior_only=opt["prior_only"])
    else:
        samples = fit_joint(
            train,
            JointSpec(cohesion=cfg, mode=opt["model"]),
            mcmc,
            prior_only=opt["prior_only"],
        )
    return samples, (frame_mean, frame_sd)


def _write_fit_outputs(opt, samples) -> None:
    params = samples.params
    if samples.model == "cps":
        p = params["beta"].shape[1]
        header = ["draw", "k", "sigma", "mu0", "sigma0"] + [f"beta_{j+1}" for j in range(p)]
        rows = [
            [t, samples.partitions[t].k, params["sigma"][t], params["mu0"][t], params["sigma0"][t]]
            + list(params["beta"][t])
            for t in range(samples.n_draws)
        ]
    else:
        header = [
            "draw", "k",
            "Sigma11", "Sigma12", "Sigma22",
            "T11", "T12", "T22",
            "mu0_1", "mu0_2",
        ]
        if samples.model == "jls":
            header += ["tau2_1", "tau2_2", "phi_1", "phi_2", "gamma"]
        rows = []
        for t in range(samples.n_draws):
            S = params["Sigma"][t]
            Tm = params["Tmat"][t]
            row = [
                t, samples.partitions[t].k,
                S[0, 0], S[0, 1], S[1, 1],
                Tm[0, 0], Tm[0, 1], Tm[1, 1],
                params["mu0"][t][0], params["mu0"][t][1],
            ]
            if samples.model == "jls":
                row += [
                    params["tau2"][t][0], params["tau2"][t][1],
                    params["phi"][t][0], params["phi"][t][1],
                    params["gamma"][t],
                ]
            rows.append(row)
    sio.write_rows(_out(opt, "samples.csv"), header, rows)
    sio.write_partitions(_out(opt, "partitions.csv"), samples.partitions)
    sio.write_matrix(_out(opt, "loglik.csv"), samples.loglik, prefix="obs")
    sio.write_matrix(_out(opt, "coclust.csv"), coclustering_from_draws(samples.partitions))
    sio.write_partition_row(_out(opt, "partition.csv"), dahl_estimate(samples.partitions))
    fitted = _fitted_values(samples)
    sio.write_rows(_out(opt, "fitted.csv"), ["obs", "fitted"], list(enumerate(fitted)))


def _predict_to_file(opt, samples, frame) -> None:
    test = sio.read_dataset(opt["test"])
    coords = test.loc.coords
    if opt["standardize_locations"]:
        coords = (coords - frame[0]) / frame[1]
    rng = np.random.default_rng(opt["seed"] + 10_000)
    if samples.model == "cps":
        pred = predict_cps(samples, coords, test.x, rng=rng)
    else:
        y2 = test.y[:, 1] if test.bivariate else None
        pred = predict_joint(samples, coords, observed_y2=y2, rng=rng)
    rows = [
        [s, pred["mean"][s], pred["lo90"][s], pred["hi90"][s]]
        for s in range(coords.shape[0])
    ]
    sio.write_rows(_out(opt, "predict.csv"), ["site", "mean", "lo90", "hi90"], rows)


def cmd_fit(opt) -> int:
    samples, frame = _run_fit(opt)
    _write_fit_outputs(opt, samples)
    if opt["test"]:
        _predict_to_file(opt, samples, frame)
    return 0


def cmd_predict(opt) -> int:
    """Deterministic refit + prediction (fit state is not persisted)."""
    if not opt["test"]:
        raise ValueError("predict needs --test with prediction sites")
    samples, frame = _run_fit(opt)
    _predict_to_file(opt, samples, frame)
    return 0


def cmd_metrics(opt) -> int:
    if not opt["loglik"]:
        raise ValueError("metrics needs --loglik from a fit")
    L = sio.read_matrix(opt["loglik"])
    row: Dict[str, object] = {"waic": waic(L), "lpml": lpml(L), "mse": "", "mspe": "", "rand": ""}
    if opt["train"] and opt["fitted"]:
        data = sio.read_dataset(opt["train"])
        y = data.y[:, 0] if data.bivariate else data.y
        fitted = sio.read_matrix(opt["fitted"])[:, 1]
        row["mse"] = mse(y, fitted)
    if opt["test"] and opt["predicted"]:
        data = sio.read_dataset(opt["test"])
        y = data.y[:, 0] if data.bivariate else data.y
        pred = sio.read_matrix(opt["predicted"])[:, 1]
        row["mspe"] = mspe(y, pred)
    if opt["true_partition"] and opt["est_partition"]:
        row["rand"] = adjusted_rand(
            sio.read_partition_row(opt["est_partition"]),
            sio.read_partition_row(opt["true_partition"]),
        )
    sio.write_rows(
        _out(opt, "metrics.csv"),
        ["waic", "lpml", "mse", "mspe", "rand"],
        [[row["waic"], row["lpml"], row["mse"], row["mspe"], row["rand"]]],
    )
    return 0


def _pair_prob(cfg: CohesionConfig, d: float) -> float:
    loc2 = LocationSet([[0.0, 0.0], [d, 0.0]])
    return exact_prior(loc2, cfg)[Partition([1, 1])]


def cmd_corr(opt) -> int:
    cfg = build_cohesion(opt)
    tau2, sigma2, lam2 = opt["tau2"], opt["sigma2"], opt["lambda2"]
    phi = phi_for_effective_range(opt["gp_range"])
    one = np.ones(1)
    T = np.array([[tau2]])

    def corr_at(d: float) -> tuple:
        p_same = _pair_prob(cfg, max(d, 1e-9))
        if lam2 > 0:
            c = corr_prop2(one, one, T, sigma2, lam2, exp(-phi * d), p_same)
        else:
            c = corr_prop1(one, one, T, sigma2, p_same)
        return p_same, c

    ds = np.linspace(1e-6, opt["max_dist"], opt["n_points"])
    rows = []
    for d in ds:
        p_same, c = corr_at(float(d))
        rows.append([float(d), p_same, c])
    sio.write_rows(_out(opt, "corr_curve.csv"), ["distance", "p_same", "corr"], rows)

    g = np.linspace(-opt["max_dist"], opt["max_dist"], opt["n_grid"])
    rows = []
    for yv in g:
        for xv in g:
            p_same, c = corr_at(float(np.hypot(xv, yv)))
            rows.append([float(xv), float(yv), c])
    sio.write_rows(_out(opt, "corr_field.csv"), ["s2_x", "s2_y", "corr"], rows)
    return 0


def cmd_simstudy(opt) -> int:
    study = StudyConfig(
        reps=opt["reps"],
        n_train=opt["n_train"],
        n_test=opt["n_test"],
        n_iter=opt["iters"],
        burnin=opt["burnin"],
        thin=opt["thin"],
        neal_m=opt["neal_m"],
        cohesions=tuple(opt["cohesions"]),
        m_values=tuple(opt["m_values"]),
        layouts=tuple(opt["layouts"]),
        errors=tuple(opt["errors"]),
        cluster_counts=tuple(opt["clusters"]),
        alpha=opt["alpha"],
        master_seed=opt["seed"],
        workers=opt["workers"],
    )
    rows = run_simstudy(study)
    sio.write_rows(_out(opt, "simstudy.csv"), study_rows_header(), rows)
    return 0


_COHESION_KEYS = [
    "cohesion", "M", "alpha", "a", "a_median",
    "kappa0", "nu0", "lambda0", "mu0_policy", "mu0_point",
]
_MCMC_KEYS = ["iters", "burnin", "thin", "neal_m", "seed", "init"]

_SUBCOMMANDS = {
    "gen": (
        cmd_gen,
        ["layout", "n_clusters", "error", "n_train", "n_test", "seed", "out_dir"],
    ),
    "prior-sim": (
        cmd_prior_sim,
        ["locations", "train", "n_draws", "seed", "standardize_locations", "out_dir"]
        + _COHESION_KEYS,
    ),
    "fit": (
        cmd_fit,
        ["train", "test", "model", "standardize_locations", "standardize_response",
         "prior_only", "out_dir"] + _COHESION_KEYS + _MCMC_KEYS,
    ),
    "predict": (
        cmd_predict,
        ["train", "test", "model", "standardize_locations", "standardize_response",
         "out_dir"] + _COHESION_KEYS + _MCMC_KEYS,
    ),
    "metrics": (
        cmd_metrics,
        ["loglik", "train", "fitted", "test", "predicted",
         "true_partition", "est_partition", "out_dir"],
    ),
    "corr": (
        cmd_corr,
        ["tau2", "sigma2", "lambda2", "gp_range", "max_dist", "n_points", "n_grid",
         "out_dir"] + _COHESION_KEYS,
    ),
    "simstudy": (
        cmd_simstudy,
        ["reps", "n_train", "n_test", "iters", "burnin", "thin", "neal_m", "alpha",
         "cohesions", "m_values", "layouts", "errors", "clusters", "workers",
         "seed", "out_dir"],
    ),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sppm",
        description="Spatially dependent partition priors and Gaussian cluster models",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, (_, keys) in _SUBCOMMANDS.items():
        sub = subs.add_parser(name)
        _add_keys(sub, keys)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    runner, _ = _SUBCOMMANDS[args.command]
    try:
        opt = resolve_options(args)
        Path(opt["out_dir"]).mkdir(parents=True, exist_ok=True)
        return runner(opt)
    except (ValueError, OSError, RuntimeError) as err:
        print(f"sppm {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
