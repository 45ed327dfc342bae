"""Command-line interface: simulate, estimate, oracle, sweep.

MDPs are referenced either by builtin id ("mdp1", "mdp2", optionally with
--alpha/--beta for mdp1) or by a JSON description file.  Policies come from
a pair file or the builtin pair library via a divergence label.
"""

import argparse
import json
import sys

from .errors import FactoredOpeError
from .estimators import ESTIMATOR_IDS, Grouping, apply_estimator
from .experiment import ExperimentConfig, append_results, builtin_experiments, run_experiment
from .mdp import Mdp1Params, build_mdp1, build_mdp2, load_mdp, mdp_from_name, save_mdp
from .oracle import check_assumption_covariances, exact_estimator_moments
from .policies import builtin_policy_pair, load_pair, policy_from_dict
from .sampling import generate_dataset, load_dataset, save_dataset


def _resolve_mdp(spec, alpha=1.0, beta=0.0):
    if spec in ("mdp1", "mdp2"):
        if spec == "mdp1":
            return build_mdp1(Mdp1Params(alpha=alpha, beta=beta))
        return build_mdp2()
    try:
        return mdp_from_name(spec)
    except ValueError:
        return load_mdp(spec)


def _resolve_pair(spec, mdp):
    if spec.startswith("builtin:"):
        return builtin_policy_pair(mdp, spec.split(":", 1)[1])
    from .policies import BUILTIN_PAIR_LABELS
    if spec in BUILTIN_PAIR_LABELS:
        return builtin_policy_pair(mdp, spec)
    return load_pair(spec, mdp)


def _resolve_policy(spec, mdp):
    """A single policy: 'builtin:<label>:<behaviour|evaluation>' or a JSON file."""
    if spec.startswith("builtin:"):
        _, label, role = spec.split(":")
        pair = builtin_policy_pair(mdp, label)
        if role not in ("behaviour", "evaluation"):
            raise ValueError("policy role must be 'behaviour' or 'evaluation'")
        return getattr(pair, role)
    with open(spec) as fh:
        doc = json.load(fh)
    if "behaviour" in doc:
        raise ValueError("got a pair file; pick one side via builtin:<label>:<role> "
                         "or pass a single-policy file")
    return policy_from_dict(doc, mdp)


def _cmd_simulate(args):
    mdp = _resolve_mdp(args.mdp, args.alpha, args.beta)
    policy = _resolve_policy(args.policy, mdp)
    dataset = generate_dataset(mdp, policy, args.n, args.t, args.seed)
    save_dataset(dataset, args.out, mdp)
    print(f"wrote {dataset.n} trajectories of length {dataset.t} to {args.out}")


def _cmd_estimate(args):
    mdp = _resolve_mdp(args.mdp, args.alpha, args.beta) if args.mdp else None
    dataset = load_dataset(args.dataset, mdp)
    if mdp is None:
        mdp = _resolve_mdp(dataset.meta.mdp)
    pair = _resolve_pair(args.pair, mdp)
    grouping = Grouping.from_string(args.grouping, mdp.n_factors) if args.grouping else None
    estimators = [e.strip() for e in args.estimators.split(",")]
    records = []
    for est in estimators:
        if est not in ESTIMATOR_IDS:
            raise ValueError(f"unknown estimator {est!r}")
        records.append(apply_estimator(est, dataset, pair, args.gamma, grouping).to_dict())
    payload = json.dumps(records, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _cmd_oracle(args):
    mdp = _resolve_mdp(args.mdp, args.alpha, args.beta)
    pair = _resolve_pair(args.pair, mdp)
    if args.estimator == "assumptions":
        report = check_assumption_covariances(mdp, pair, args.t).to_dict()
    else:
        report = exact_estimator_moments(
            mdp, pair, args.estimator, args.n, args.t, args.gamma).to_dict()
    payload = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _cmd_sweep(args):
    if args.builtin:
        library = builtin_experiments(full=args.full, smoke=args.smoke)
        if args.builtin == "all":
            names = list(library)
        else:
            names = [n.strip() for n in args.builtin.split(",")]
        rows, manifests = [], []
        for name in names:
            if name not in library:
                raise ValueError(f"unknown builtin experiment {name!r}; "
                                 f"choose from {', '.join(library)} or 'all'")
            r, m = run_experiment(library[name], threads=args.threads)
            rows.extend(r)
            manifests.append(m)
            print(f"{name}: {len(r)} rows")
        append_results(rows, manifests, args.out_dir)
    else:
        with open(args.config) as fh:
            config = ExperimentConfig.from_dict(json.load(fh))
        rows, _ = run_experiment(config, out_dir=args.out_dir, threads=args.threads)
        print(f"{config.name}: {len(rows)} rows")
    print(f"wrote results.csv and manifest.json to {args.out_dir}")


def _cmd_export_mdp(args):
    save_mdp(_resolve_mdp(args.mdp, args.alpha, args.beta), args.out)
    print(f"wrote {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="factored-ope",
                                     description="Factored-action-space OPE toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_mdp_options(p, required=True):
        p.add_argument("--mdp", required=required,
                       help="mdp1 | mdp2 | path to an MDP JSON file")
        p.add_argument("--alpha", type=float, default=1.0, help="mdp1 alpha (default 1)")
        p.add_argument("--beta", type=float, default=0.0, help="mdp1 beta (default 0)")

    p = sub.add_parser("simulate", help="generate a trajectory dataset CSV")
    add_mdp_options(p)
    p.add_argument("--policy", required=True,
                   help="policy JSON file or builtin:<label>:<behaviour|evaluation>")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="run estimators on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pair", required=True,
                   help="pair JSON file or a builtin divergence label (e.g. 2.56)")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--estimators", default=",".join(ESTIMATOR_IDS),
                   help="comma list: is,pdis,pdwis,decis,decpdis,decpdwis,onpolicy")
    p.add_argument("--grouping", default=None,
                   help="factor grouping for decomposed estimators, e.g. '1,2|3' (1-based)")
    add_mdp_options(p, required=False)
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("oracle", help="exact moments or assumption covariances")
    add_mdp_options(p)
    p.add_argument("--pair", required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--estimator", required=True,
                   help="estimator id, or 'assumptions' for the covariance report")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("sweep", help="run an experiment grid, emit results.csv")
    p.add_argument("--config", help="experiment config JSON file")
    p.add_argument("--builtin", help="builtin experiment name(s), comma list, or 'all'")
    p.add_argument("--full", action="store_true", help="original grids instead of desk scale")
    p.add_argument("--smoke", action="store_true", help="tiny grids for functional checks")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("export-mdp", help="write a builtin MDP as a JSON description file")
    add_mdp_options(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_mdp)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "sweep" and bool(args.config) == bool(args.builtin):
        parser.error("sweep needs exactly one of --config or --builtin")
    try:
        args.func(args)
    except (FactoredOpeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
