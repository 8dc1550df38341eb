"""Command line entry point: ``concentra <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .bounds import ConcentrationParams, concentration_bound, noise_event_membership
from .dantzig import dantzig_select, failure_mass
from .harness import (
    ExperimentConfig,
    InstanceFamily,
    PowerQuery,
    asymptotic_sweep,
    build_truth,
    confirm_power,
    find_certified_design,
    power_calculation,
    prior_mass_terms,
    run_concentration_experiment,
    run_dantzig_experiment,
)
from .posterior import (
    enumerate_posterior,
    save_mixture,
    verify_determinant_bounds,
    verify_reconstruction_terms,
    verify_ridge_projection_gap,
)
from .priors import PriorSpec
from .problem import (
    Observation,
    ProblemInstance,
    generate_design,
    normalized_design,
    synthesize_observation,
)
from .report import SWEEP_COLUMNS, emit_report
from .rip import certify_rip

SUBCOMMANDS = ("generate", "rip", "dantzig", "posterior", "bounds", "verify-lemmas",
               "concentrate", "power", "sweep")


def _common(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=default, help="master seed")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--threads", type=int, default=default, help="worker threads")
    parser.add_argument("--format", choices=("csv", "json", "svg"), default=default)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="concentra",
        description="Posterior concentration bounds for sparse Gaussian regression.")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a design, truth and observation")
    p.add_argument("--certify", action="store_true", help="search design seeds until certified")

    p = sub.add_parser("rip", help="restricted isometry certificate of an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--fallback-trials", type=int, default=None)

    p = sub.add_parser("dantzig", help="Dantzig selector fit, or a failure-rate experiment")
    p.add_argument("--instance")
    p.add_argument("--observation")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--experiment", action="store_true",
                   help="run the failure-rate experiment described by the config")

    p = sub.add_parser("posterior", help="exact sparsity-Gaussian posterior summary")
    p.add_argument("--instance", required=True)
    p.add_argument("--observation", required=True)
    p.add_argument("--v", type=float, default=None)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--dump", help="write the full mixture to this .npz file")

    p = sub.add_parser("bounds", help="evaluate the four-term concentration bound")
    p.add_argument("--instance", required=True)
    p.add_argument("--prior", help="prior JSON file (default: sparsity-Gaussian from config)")
    p.add_argument("--params", help="JSON file with alpha, tau and optionally delta, theta")

    p = sub.add_parser("verify-lemmas", help="check the deterministic inequalities and the noise event")
    p.add_argument("--instance", required=True)
    p.add_argument("--v", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--noise-draws", type=int, default=10_000)

    sub.add_parser("concentrate", help="Monte Carlo posterior concentration experiment")
    sub.add_parser("power", help="power calculation over the grids in config['power']")
    sub.add_parser("sweep", help="bound totals along the schedule in config['sweep']")

    for name, sp in sub.choices.items():
        _common(sp, suppress=True)
    return parser


def _load_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


class _Output:
    def __init__(self, args, default_format):
        self.dir = args.out
        self.format = args.format or default_format
        if self.dir:
            os.makedirs(self.dir, exist_ok=True)

    def write(self, name, results, format=None, **kw):
        fmt = format or self.format
        path = os.path.join(self.dir, f"{name}.{fmt}") if self.dir else None
        text = emit_report(results, fmt, path, **kw)
        if path is None:
            sys.stdout.write(text)
        return text


def _config(args):
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out is None and cfg.out is not None:
        args.out = cfg.out
    return cfg


def cmd_generate(args, cfg, out):
    if args.certify:
        inst, cert, _ = find_certified_design(cfg)
    else:
        X = generate_design(cfg.n, cfg.p, cfg.ensemble, cfg.design_seed)
        beta0 = build_truth(cfg.p, cfg.S, cfg.signal, cfg.beta0)
        inst = ProblemInstance(cfg.S, X, beta0, cfg.sigma, cfg.R, seed=cfg.design_seed,
                               ensemble=cfg.ensemble)
    obs = synthesize_observation(inst, cfg.seed)
    if out.dir:
        out.write("instance", inst.to_dict(), "json")
        out.write("observation", obs.to_dict(), "json")
    else:
        out.write("generate", {"instance": inst.to_dict(), "observation": obs.to_dict()}, "json")


def cmd_rip(args, cfg, out):
    inst = ProblemInstance.from_json(args.instance)
    cap = args.cap if args.cap is not None else cfg.cap
    cert = certify_rip(inst.Xtilde, inst.S, cap=cap, fallback_trials=args.fallback_trials,
                       seed=cfg.seed)
    d = cert.to_dict()
    out.write("rip", {k: d[k] for k in ("delta", "theta", "method", "a4")}
              | {k: d[k] for k in ("k", "k1", "k2")})


def cmd_dantzig(args, cfg, out):
    alpha = args.alpha if args.alpha is not None else cfg.alpha
    if args.experiment:
        cfg.alpha = alpha
        res = run_dantzig_experiment(cfg)
        out.write("dantzig_trials", res["rows"], out.format if out.format != "svg" else "csv")
        out.write("dantzig_summary", res["summary"], "json")
        return
    if not (args.instance and args.observation):
        raise SystemExit("dantzig needs --instance and --observation, or --experiment")
    inst = ProblemInstance.from_json(args.instance)
    obs = Observation.from_json(args.observation)
    sol = dantzig_select(inst.X, obs.y, inst.sigma, alpha)
    out.write("dantzig", sol.to_dict())


def cmd_posterior(args, cfg, out):
    inst = ProblemInstance.from_json(args.instance)
    obs = Observation.from_json(args.observation)
    V = args.v if args.v is not None else cfg.V
    mix = enumerate_posterior(inst, obs.y, V, cap=cfg.cap)
    if args.dump:
        save_mixture(mix, args.dump)
    out.write("posterior", mix.summary(args.top_k))


def cmd_bounds(args, cfg, out):
    inst = ProblemInstance.from_json(args.instance)
    prior = (PriorSpec.from_dict(_load_json(args.prior)) if args.prior
             else PriorSpec.sparsity_gaussian(inst.p, inst.S, cfg.V))
    params = {"alpha": cfg.alpha, "tau": cfg.tau}
    if args.params:
        extra = _load_json(args.params)
        unknown = set(extra) - {"alpha", "tau", "delta", "theta"}
        if unknown:
            raise ValueError(f"unknown params keys: {sorted(unknown)}")
        params.update(extra)
    if "delta" not in params or "theta" not in params:
        cert = certify_rip(inst.Xtilde, inst.S, cap=cfg.cap)
        params.setdefault("delta", cert.delta_k)
        params.setdefault("theta", cert.theta)
    cp = ConcentrationParams(alpha=params["alpha"], tau=params["tau"], S=inst.S, n=inst.n,
                             p=inst.p, sigma=inst.sigma, delta=params["delta"],
                             theta=params["theta"], R=inst.R)
    log_sb, log_tail, exact = prior_mass_terms(prior, inst.beta0, cp.small_ball_radius, inst.S)
    rep = concentration_bound(cp, log_smallball=log_sb, log_nonsparse_tail=log_tail)
    d = rep.to_dict()
    d["inputs_echo"]["small_ball_is_lower_bound"] = exact
    out.write("bounds", d)


def cmd_verify_lemmas(args, cfg, out):
    inst = ProblemInstance.from_json(args.instance)
    V = args.v if args.v is not None else cfg.V
    alpha = args.alpha if args.alpha is not None else cfg.alpha
    cert = certify_rip(inst.Xtilde, inst.S, cap=cfg.cap)
    obs = synthesize_observation(inst, cfg.seed)
    reports = [verify_ridge_projection_gap(inst, V, cert, cap=cfg.cap),
               verify_determinant_bounds(inst, V, cert, cap=cfg.cap),
               verify_reconstruction_terms(inst, V, cert, obs.e, alpha, cap=cfg.cap)]
    hits = sum(noise_event_membership(inst.Xtilde, synthesize_observation(inst, cfg.seed, t).e,
                                      inst.sigma, alpha)
               for t in range(args.noise_draws))
    freq = hits / args.noise_draws
    se = float(np.sqrt(freq * (1 - freq) / args.noise_draws))
    out.write("verify_lemmas", {
        "certificate": cert.to_dict(),
        "reports": [r.to_dict() for r in reports],
        "noise_event": {"draws": args.noise_draws, "frequency": freq, "std_error": se,
                        "required": 1 - failure_mass(inst.p, alpha),
                        "passed": bool(freq >= 1 - failure_mass(inst.p, alpha) - 3 * se)},
    }, "json")


def cmd_concentrate(args, cfg, out):
    res = run_concentration_experiment(cfg)
    if out.format == "svg":
        out.write("concentrate_frontier", res["frontier"], "svg", x="alpha", ys=("total",),
                  logx=False, title="bound total against alpha")
    else:
        out.write("concentrate", res["rows"])
    if out.dir:
        out.write("concentrate_frontier", res["frontier"], "csv")
        out.write("concentrate_summary", res["summary"], "json")


def cmd_power(args, cfg, out):
    if not cfg.power:
        raise SystemExit("config needs a 'power' section")
    settings = dict(cfg.power)
    confirm = int(settings.pop("confirm_trials", 0))
    query = PowerQuery.from_dict(settings)
    prior = cfg.prior_spec
    family = InstanceFamily(p=cfg.p, S=cfg.S, sigma=cfg.sigma, signal=cfg.signal,
                            ensemble=cfg.ensemble, design_seed=cfg.design_seed,
                            seed_search_limit=cfg.seed_search_limit, cap=cfg.cap)
    n, a, t, r, cert = power_calculation(query, prior, family)
    result = {"n_star": n, "alpha_star": a, "tau_star": t, "r_star": r, "certificate": cert}
    if confirm:
        freq, se = confirm_power(query, prior, family, n, r, trials=confirm, seed=cfg.seed,
                                 threads=cfg.threads)
        result["confirmation"] = {"trials": confirm, "frequency": freq, "std_error": se,
                                  "passed": bool(freq <= query.xi + 3 * se)}
    out.write("power", result, "json")


def cmd_sweep(args, cfg, out):
    s = dict(cfg.sweep or {})
    unknown = set(s) - {"example", "ns", "p_factor", "growth", "v", "c_sup", "q"}
    if unknown:
        raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
    example = s.get("example", "sg")
    ns = s.get("ns", [int(x) for x in np.logspace(2, 8, 13)])
    rows, summary = asymptotic_sweep(example, ns=ns, p_factor=s.get("p_factor", 2.0),
                                     growth=s.get("growth", 0.4), sigma=cfg.sigma,
                                     V=s.get("v", cfg.V), C_sup=s.get("c_sup", cfg.signal),
                                     q=s.get("q", 1.0))
    if out.format == "svg":
        out.write("sweep", rows, "svg", x="n", ys=("total", "epsilon"),
                  title=f"{example} schedule")
    elif out.format == "json":
        out.write("sweep", {"rows": rows, "summary": summary})
    else:
        out.write("sweep", rows, "csv", columns=SWEEP_COLUMNS)


HANDLERS = {
    "generate": (cmd_generate, "json"),
    "rip": (cmd_rip, "json"),
    "dantzig": (cmd_dantzig, "json"),
    "posterior": (cmd_posterior, "json"),
    "bounds": (cmd_bounds, "json"),
    "verify-lemmas": (cmd_verify_lemmas, "json"),
    "concentrate": (cmd_concentrate, "csv"),
    "power": (cmd_power, "json"),
    "sweep": (cmd_sweep, "csv"),
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler, default_format = HANDLERS[args.command]
    try:
        cfg = _config(args)
        out = _Output(args, default_format)
        handler(args, cfg, out)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"concentra {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
