"""Command-line front end.

Every subcommand reads an optional ``key = value`` config file (``--config``)
whose settings are overridden by flags.  The resolved settings are written as
``#`` comment lines at the top of CSV outputs and into the JSON outputs.

Exit codes: 0 success, 2 the estimated set is empty, 1 error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .counterfactual import Objective, entry_objectives, policy_experiment
from .data import BinnedData
from .equilibria import ConceptSpec, NoEquilibriumError, find_equilibrium, induced_ccp
from .game_core import CovariateBin
from .identify import EntryModel, ScanConfig, ScanResult, minimize_criterion, scan_set
from .inference import coverage_csv, coverage_table, fs_region
from .lp_backend import ZERO_THRESHOLD

log = logging.getLogger("stablegames")

EXIT_OK, EXIT_ERROR, EXIT_EMPTY = 0, 1, 2

DEFAULTS = {
    "simulate": {
        "covariates": "const", "x": "1", "theta": "kappa1=-1, kappa2=-1",
        "dgp_concept": "psne", "dgp_info": "null", "selection": "uniform", "selection_seed": "0",
        "grid_n": "10", "n_obs": "0", "seed": "0", "out": "bins.csv",
    },
    "scan": {
        "bins": "bins.csv", "concept": "bse", "info": "private", "alpha": "0.05", "population": "false",
        "grid_n": "10", "rho_grid": "", "free": "", "bounds": "", "start": "", "starts": "4",
        "weights": "count", "seed": "0", "chains": "2", "max_points": "200", "max_proposals": "",
        "step": "0.1", "min_step": "0.001", "out": "scan",
    },
    "counterfactual": {
        "scan": "scan.jsonl", "bins_pre": "bins.csv", "bins_post": "", "post_shift": "",
        "concept": "bse", "info": "private", "grid_n": "10", "objectives": "num_entrants,firm1_entry,firm2_entry,no_entry",
        "cap": "", "weights": "count", "out": "bounds.csv",
    },
    "coverage": {
        "bins_list": "4,10", "n_list": "100,1000", "alpha_list": "0.05,0.01", "trials": "20000",
        "seed": "0", "out": "coverage.csv",
    },
}

FLAG_KEYS = {
    "concept": "concept", "info": "info", "alpha": "alpha", "grid_n": "grid_n", "rho_grid": "rho_grid",
    "seed": "seed", "chains": "chains", "max_points": "max_points", "out": "out",
}


def read_config(path: str | None) -> dict:
    if not path:
        return {}
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[run]\n" + text)
    return {k.replace("-", "_"): v.strip() for k, v in parser["run"].items()}


def resolve(command: str, args) -> dict:
    settings = dict(DEFAULTS[command])
    for k, v in read_config(args.config).items():
        if k not in settings:
            raise ValueError(f"unknown config key {k!r} for {command}")
        settings[k] = v
    for flag, key in FLAG_KEYS.items():
        val = getattr(args, flag, None)
        if val is not None and key in settings:
            settings[key] = str(val)
    if getattr(args, "population", False) and "population" in settings:
        settings["population"] = "true"
    for k, v in getattr(args, "set", None) or []:
        if k not in settings:
            raise ValueError(f"unknown setting {k!r} for {command}")
        settings[k] = v
    return settings


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _pairs(text: str) -> dict:
    out = {}
    for part in _names(text):
        k, _, v = part.partition("=")
        out[k.strip()] = v.strip()
    return out


def _theta_vector(text: str, model: EntryModel) -> np.ndarray:
    vec = np.zeros(model.n_params)
    for k, v in _pairs(text).items():
        if k not in model.names:
            raise ValueError(f"unknown parameter {k!r}; expected names from {model.names}")
        vec[model.names.index(k)] = float(v)
    return vec


def _bounds(text: str) -> dict:
    # "kappa1=-5:0, beta1_const=:0"
    out = {}
    for k, v in _pairs(text).items():
        a, _, b = v.partition(":")
        out[k] = (float(a) if a.strip() else None, float(b) if b.strip() else None)
    return out


def _bins_x(text: str) -> list[list[float]]:
    return [[float(v) for v in row.split(",") if v.strip()] for row in text.split(";") if row.strip()]


def _header(command: str, settings: dict) -> list[str]:
    return [f"stablegames {__version__} {command}"] + [f"{k} = {v}" for k, v in sorted(settings.items())]


def _spec(settings: dict) -> ConceptSpec:
    return ConceptSpec(settings["concept"], settings.get("info", "null"))


def simulate(settings: dict) -> BinnedData:
    covs = _names(settings["covariates"])
    model = EntryModel(covs, grid_n=int(settings["grid_n"]))
    vec = _theta_vector(settings["theta"], model)
    spec = ConceptSpec(settings["dgp_concept"], settings["dgp_info"])
    n_obs = int(settings["n_obs"])
    rng = np.random.default_rng(int(settings["seed"]))
    bins, phis = [], []
    for x in _bins_x(settings["x"]):
        b = CovariateBin(x, 1.0, n_obs)
        game = model.game(vec, b)
        rule = find_equilibrium(game, spec, int(settings["selection_seed"]), settings["selection"])
        info = None if spec.concept == "psne" else spec.info_for(game)
        phi = induced_ccp(game, info, rule)
        phi = np.clip(phi, 0.0, None)
        phi /= phi.sum()
        if n_obs > 0:
            phi = rng.multinomial(n_obs, phi) / n_obs
        bins.append(b)
        phis.append(phi)
    return BinnedData(covs, bins, np.array(phis)).with_weights("count")


def cmd_simulate(settings: dict) -> int:
    data = simulate(settings)
    data.save(settings["out"], _header("simulate", settings))
    print(f"wrote {data.n_bins} bin(s) to {settings['out']}")
    return EXIT_OK


def _scan_model(settings: dict, data: BinnedData) -> EntryModel:
    free = _names(settings["free"]) or None
    return EntryModel(data.covariates, grid_n=int(settings["grid_n"]), free=free,
                      bounds=tuple(_bounds(settings["bounds"]).items()))


def cmd_scan(settings: dict) -> int:
    data = BinnedData.load(settings["bins"])
    population = settings["population"].lower() in ("1", "true", "yes") or data.population
    if not population:
        data = data.drop_empty()
    data = data.with_weights(settings["weights"])
    spec = _spec(settings)
    model = _scan_model(settings, data)
    region = None if population else fs_region(data, float(settings["alpha"]))
    start = _theta_vector(settings["start"], model) if settings["start"] else np.zeros(model.n_params)
    rng = np.random.default_rng(int(settings["seed"]))
    starts = [start]
    free = model.free_index
    lo, hi = model.lower_upper()
    for _ in range(max(int(settings["starts"]) - 1, 0)):
        s = start.copy()
        s[free] = np.clip(s[free] + rng.normal(0.0, 0.5, free.size), lo[free], hi[free])
        starts.append(s)
    rho_grid = _floats(settings["rho_grid"]) or None
    best = minimize_criterion(data, spec, model, starts, region=region, rho_grid=rho_grid)
    out = settings["out"]
    summary = {
        "settings": settings, "concept": spec.label, "names": model.names,
        "min_criterion": best.point.criterion, "argmin": best.point.theta.tolist(),
        "zero_threshold": ZERO_THRESHOLD, "converged": best.converged,
    }
    if not best.nonempty:
        summary["status"] = "EMPTY"
        Path(f"{out}_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        print(f"EMPTY: minimum criterion {best.point.criterion:.6g} > {ZERO_THRESHOLD:g}")
        return EXIT_EMPTY
    config = ScanConfig(
        max_points=int(settings["max_points"]), initial_step_sigma=float(settings["step"]),
        min_step=float(settings["min_step"]), rng_seed=int(settings["seed"]), chains=int(settings["chains"]),
        max_proposals=int(settings["max_proposals"]) if settings["max_proposals"] else None,
    )
    result = scan_set(data, spec, model, best.point.theta, config, region=region)
    result.meta["settings"] = settings
    Path(f"{out}.jsonl").write_text(result.to_jsonl())
    summary["status"] = "OK"
    summary["accepted"] = int(len(result.accepted()))
    summary["evaluated"] = len(result.records)
    summary["projections"] = result.projections()
    Path(f"{out}_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for name, (a, b) in summary["projections"].items():
        print(f"{name:>16s}  [{a: .4f}, {b: .4f}]")
    return EXIT_OK


def _objectives(text: str) -> list[Objective]:
    known = {h.name: h for h in entry_objectives() + [Objective("constant")]}
    out = []
    for name in _names(text):
        if name not in known:
            raise ValueError(f"unknown objective {name!r}; choose from {sorted(known)}")
        out.append(known[name])
    return out


def cmd_counterfactual(settings: dict) -> int:
    scan = ScanResult.from_jsonl(Path(settings["scan"]).read_text())
    pre = BinnedData.load(settings["bins_pre"]).with_weights(settings["weights"])
    if settings["bins_post"]:
        post = BinnedData.load(settings["bins_post"]).with_weights(settings["weights"])
        post_bins = post.bins
    else:
        shift = _pairs(settings["post_shift"])
        post_bins = []
        for b in pre.bins:
            x = b.x.copy()
            for name, val in shift.items():
                x[pre.covariates.index(name)] = float(val)
            post_bins.append(CovariateBin(x, b.weight, b.count))
    model = EntryModel(pre.covariates, grid_n=int(settings["grid_n"]))
    if list(scan.names) != model.names:
        raise ValueError("scan parameters do not match the bins' covariates")
    cap = int(settings["cap"]) if settings["cap"] else None
    table = policy_experiment(scan, _spec(settings), model, pre.bins, post_bins,
                              _objectives(settings["objectives"]), cap=cap, data=pre)
    header = _header("counterfactual", settings) + [f"points = {table.n_points}", f"excluded = {table.excluded}"]
    Path(settings["out"]).write_text(table.to_csv(header))
    print(table.to_csv())
    return EXIT_OK


def cmd_coverage(settings: dict) -> int:
    rows = coverage_table(
        [int(v) for v in _floats(settings["bins_list"])], [int(v) for v in _floats(settings["n_list"])],
        _floats(settings["alpha_list"]), int(settings["trials"]), int(settings["seed"]),
    )
    text = coverage_csv(rows, _header("coverage", settings))
    Path(settings["out"]).write_text(text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "scan": cmd_scan, "counterfactual": cmd_counterfactual,
            "coverage": cmd_coverage}


def _kv(text: str):
    k, sep, v = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected key=value")
    return k.strip().replace("-", "_"), v.strip()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stablegames", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run {name}")
        sp.add_argument("--config", help="key = value settings file")
        sp.add_argument("--set", action="append", type=_kv, metavar="KEY=VALUE",
                        help="override any setting (repeatable)")
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        if name in ("scan", "counterfactual"):
            sp.add_argument("--concept", choices=["bse", "bce", "psne"])
            sp.add_argument("--info", choices=["null", "1p", "private", "complete"])
            sp.add_argument("--grid-n", dest="grid_n", type=int)
        if name == "scan":
            sp.add_argument("--alpha", type=float)
            sp.add_argument("--rho-grid", dest="rho_grid", help="comma-separated rho values")
            sp.add_argument("--chains", type=int)
            sp.add_argument("--max-points", dest="max_points", type=int)
            sp.add_argument("--population", action="store_true", help="treat CCPs as exact")
        if name == "simulate":
            sp.add_argument("--grid-n", dest="grid_n", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args.command, args)
        return COMMANDS[args.command](settings)
    except (ValueError, OSError, NoEquilibriumError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # solver failures and anything unexpected
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
