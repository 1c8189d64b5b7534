"""Command-line front end: accounting jobs, T-sweeps, noise-parameter
optimization, distortion reports, noise sampling, and the toy training demo.

Job files are JSON with top-level keys ``mechanism`` ("plrvo" | "gaussian" |
"laplace"), ``params`` (mechanism-specific), ``job`` (accounting fields),
and optional ``target`` / ``optimizer`` for the solver. Unknown keys are
rejected. Exit codes: 0 success, 1 input or schema error, 2 numerical-domain
error, 3 infeasible. Stdout JSON is stable-key-ordered; every command is
deterministic given (input file, flags, seed). ``--threads`` caps internal
workers and is mirrored by the PLRV_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import accountant, distortion, dpsgd, optimizer, sampler
from .params import (
    AccountingJob,
    GammaPlrvParams,
    GaussianParams,
    LaplaceParams,
    MgfDomainViolation,
    PrivacyTarget,
    from_json_dict,
)

MECHANISM_PARAM_TYPES = {
    "plrvo": GammaPlrvParams,
    "gaussian": GaussianParams,
    "laplace": LaplaceParams,
}

_JOBFILE_KEYS = {"mechanism", "params", "job", "target", "optimizer"}
_OPTIMIZER_KEYS = {"clip_min", "clip_max", "gamma_cdf_tol", "distortion_cap"}


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True, indent=2))


def load_job_file(path: str) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("job file must be a JSON object")
    unknown = set(data) - _JOBFILE_KEYS
    if unknown:
        raise ValueError(f"job file: unknown keys {sorted(unknown)}")
    for key in ("mechanism", "params", "job"):
        if key not in data:
            raise ValueError(f"job file: missing required key {key!r}")
    mech = data["mechanism"]
    if mech not in MECHANISM_PARAM_TYPES:
        raise ValueError(f"unknown mechanism {mech!r}; "
                         f"expected one of {sorted(MECHANISM_PARAM_TYPES)}")
    out = {
        "mechanism": mech,
        "params": from_json_dict(MECHANISM_PARAM_TYPES[mech], data["params"]),
        "job": from_json_dict(AccountingJob, data["job"]),
        "target": None,
        "optimizer": None,
    }
    if "target" in data:
        out["target"] = from_json_dict(PrivacyTarget, data["target"])
    if "optimizer" in data:
        opt = data["optimizer"]
        unknown = set(opt) - _OPTIMIZER_KEYS
        if unknown:
            raise ValueError(f"optimizer: unknown keys {sorted(unknown)}")
        out["optimizer"] = opt
    return out


def cmd_account(args) -> int:
    spec = load_job_file(args.job_file)
    result = accountant.account(spec["params"], spec["job"],
                                lambda_search=args.lambda_search,
                                mode=args.mode, threads=args.threads)
    _emit(result.to_json_dict())
    if args.curve:
        curve = accountant.build_curve(spec["params"], spec["job"], threads=args.threads)
        with open(args.curve, "w") as fh:
            fh.write(curve.to_csv())
    return 0


def cmd_sweep_t(args) -> int:
    spec = load_job_file(args.job_file)
    t_values = [int(t) for t in args.t_values.split(",") if t.strip()]
    if not t_values or any(t < 1 for t in t_values):
        raise ValueError(f"--t-values must be positive integers, got {args.t_values!r}")
    job = spec["job"]
    lambdas = None
    if args.lambda_search == "coarse":
        gamma = spec["params"] if isinstance(spec["params"], GammaPlrvParams) else None
        from .params import effective_lambda_max
        lambdas = accountant.coarse_lambda_ladder(effective_lambda_max(job, gamma))
    curve = accountant.build_curve(spec["params"], job, lambdas=lambdas,
                                   threads=args.threads)
    lines = ["T,epsilon"]
    for t in t_values:
        eps, _ = accountant.epsilon_from_delta(accountant.compose(curve, t), job.delta)
        lines.append(f"{t},{eps:.17g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_optimize(args) -> int:
    spec = load_job_file(args.job_file)
    if spec["target"] is None or spec["optimizer"] is None:
        raise ValueError("optimize requires 'target' and 'optimizer' sections in the job file")
    opt = spec["optimizer"]
    cfg = optimizer.FeasibilityConfig(
        clip_min=opt["clip_min"],
        clip_max=opt["clip_max"],
        target=spec["target"],
        job_skeleton=spec["job"],
        gamma_cdf_tol=opt.get("gamma_cdf_tol", 1e-6),
        distortion_cap=opt.get("distortion_cap", 10.0),
    )
    result = optimizer.solve(cfg, threads=args.threads)
    _emit(result.to_json_dict())
    return 0


_TABLE2_CHECKS = [
    ("plrvo", GammaPlrvParams(k=141.06, theta=8.32e-4), None, 8.58),
    ("plrvo", GammaPlrvParams(k=5242.4, theta=2.08e-5), None, 9.17),
    ("gaussian", GaussianParams(sigma=0.9456), 5.0, 3.77),
    ("gaussian", GaussianParams(sigma=1.8812), 15.0, 22.51),
]


def cmd_distortion(args) -> int:
    if args.table2:
        rows = []
        ok = True
        for mech, params, clip, expected in _TABLE2_CHECKS:
            if mech == "plrvo":
                got = distortion.plrv_distortion(params).per_coordinate_l1
            else:
                got = distortion.gaussian_distortion(params, clip)
            passed = abs(got - expected) <= 0.01
            ok &= passed
            rows.append({"mechanism": mech, "expected": expected,
                         "computed": got, "passed": passed})
        _emit({"table2": rows, "all_passed": ok})
        return 0 if ok else 2
    if args.mechanism == "plrvo":
        if args.k is None or args.theta is None:
            raise ValueError("plrvo distortion requires --k and --theta")
        report = distortion.plrv_distortion(GammaPlrvParams(k=args.k, theta=args.theta))
    elif args.mechanism == "gaussian":
        if args.sigma is None or args.clip is None:
            raise ValueError("gaussian distortion requires --sigma and --clip")
        value = distortion.gaussian_distortion(GaussianParams(sigma=args.sigma), args.clip)
        report = distortion.DistortionReport("gaussian", value, True)
    else:
        raise ValueError(f"distortion supports plrvo and gaussian, got {args.mechanism!r}")
    if args.csv:
        sys.stdout.write(report.csv_header() + "\n" + report.to_csv_row() + "\n")
    else:
        _emit(report.to_json_dict())
    return 0


def cmd_sample(args) -> int:
    rng = sampler.make_rng(args.seed, secure=args.secure)
    n, draws = args.n, args.draws
    if args.mechanism == "plrvo":
        if args.k is None or args.theta is None:
            raise ValueError("plrvo sampling requires --k and --theta")
        params = GammaPlrvParams(k=args.k, theta=args.theta)
        scales, coords = sampler.sample_plrv_noise_matrix(params, draws, n, rng)
    elif args.mechanism == "gaussian":
        if args.sigma_eff is None:
            raise ValueError("gaussian sampling requires --sigma-eff")
        coords = np.stack([sampler.sample_gaussian_noise(args.sigma_eff, n, rng)
                           for _ in range(draws)])
        scales = np.full(draws, args.sigma_eff)
    elif args.mechanism == "laplace":
        if args.b is None:
            raise ValueError("laplace sampling requires --b")
        coords = sampler.sample_laplace_vector(args.b, (draws, n), rng)
        scales = np.full(draws, args.b)
    else:
        raise ValueError(f"unknown mechanism {args.mechanism!r}")

    header = "draw_index,scale_b," + ",".join(f"coord_{j}" for j in range(n))
    lines = [header]
    for i in range(draws):
        row = ",".join(f"{v:.17g}" for v in coords[i])
        lines.append(f"{i},{scales[i]:.17g},{row}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_train_demo(args) -> int:
    zeta = args.batch / args.examples
    steps = -(-args.epochs * args.examples // args.batch)
    job = AccountingJob(steps_T=int(steps), sampling_rate_zeta=zeta,
                        model_dim_N=args.dim, clip_C=args.clip,
                        delta=args.delta, lambda_max=args.lambda_max)
    if args.mechanism == "gaussian":
        sigma = dpsgd.calibrate_gaussian_sigma(args.epsilon, job)
        mechanism = GaussianParams(sigma=sigma)
    elif args.mechanism == "plrvo":
        cfg = optimizer.FeasibilityConfig(
            clip_min=args.clip, clip_max=args.clip,
            target=PrivacyTarget(epsilon_star=args.epsilon, delta_star=args.delta),
            job_skeleton=job,
        )
        result = optimizer.solve(cfg, threads=args.threads)
        mechanism = GammaPlrvParams(k=result.k_star, theta=result.theta_star)
    else:
        raise ValueError(f"train-demo supports plrvo and gaussian, got {args.mechanism!r}")

    run = dpsgd.TrainingRun(
        mechanism=mechanism, model_dim=args.dim, n_examples=args.examples,
        epochs=args.epochs, batch_size=args.batch, clip_C=args.clip,
        learning_rate=args.lr, delta=args.delta, lambda_max=args.lambda_max,
        seed=args.seed,
    )
    ledger = dpsgd.train(run, threads=args.threads)
    ledger["target_epsilon"] = args.epsilon
    _emit(ledger)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plrvo",
        description="noise design for DP-SGD: accounting, optimization, sampling")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (default: PLRV_THREADS or cpu count)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("account", help="epsilon(delta) for one job file")
    p.add_argument("job_file")
    p.add_argument("--mode", choices=["exact", "accelerated"], default="exact")
    p.add_argument("--lambda-search", choices=["full", "coarse"], default="full")
    p.add_argument("--curve", metavar="OUT_CSV", default=None,
                   help="also write the full per-step moment curve")
    p.set_defaults(fn=cmd_account)

    p = sub.add_parser("sweep-t", help="epsilon vs step count, one curve reused")
    p.add_argument("job_file")
    p.add_argument("--t-values", required=True, help="comma-separated step counts")
    p.add_argument("--lambda-search", choices=["full", "coarse"], default="full")
    p.add_argument("--out", default=None, help="CSV destination (default stdout)")
    p.set_defaults(fn=cmd_sweep_t)

    p = sub.add_parser("optimize", help="solve for (k*, theta*, C*)")
    p.add_argument("job_file")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("distortion", help="expected |noise| per coordinate")
    p.add_argument("--mechanism", choices=["plrvo", "gaussian"], default="plrvo")
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--clip", type=float, default=None)
    p.add_argument("--csv", action="store_true", help="CSV row instead of JSON")
    p.add_argument("--table2", action="store_true",
                   help="run the built-in reference-value self-test")
    p.set_defaults(fn=cmd_distortion)

    p = sub.add_parser("sample", help="draw noise vectors to CSV")
    p.add_argument("--mechanism", choices=["plrvo", "gaussian", "laplace"], default="plrvo")
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--sigma-eff", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--n", type=int, required=True, help="coordinates per draw")
    p.add_argument("--draws", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--secure", action="store_true",
                   help="cryptographic randomness (not reproducible; "
                        "test vectors do not apply)")
    p.add_argument("--out", default=None, help="CSV destination (default stdout)")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("train-demo", help="toy DP-SGD run with accounting ledger")
    p.add_argument("--mechanism", choices=["plrvo", "gaussian"], default="plrvo")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch", type=int, default=40)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--examples", type=int, default=400)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--lambda-max", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except MgfDomainViolation as exc:
        print(f"numerical domain error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except optimizer.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostics, sort_keys=True, indent=2), file=sys.stderr)
        return 3
    except (ValueError, TypeError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
