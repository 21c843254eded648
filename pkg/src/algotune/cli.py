"""Config-driven command line runner binding all modules.

Subcommands: gen, tune-batch, tune-online, bounds, dispersion, path-study,
convergence, acceptance. Experiment subcommands read a JSON config and
write CSV; every output starts with a header carrying the tool version,
the seed, and a hash of the effective config, so results can be audited.

Exit codes: 0 success, 2 config/flag validation error (the message names
the offending field), 1 runtime failure. The only recognized environment
variable is ALGOTUNE_OUT_DIR, which re-roots relative output paths.
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .acceptance import (
    CRITERION_NAMES,
    mis_anchored_path,
    run_acceptance_suite,
)
from .bounds import bound_report, family_params, pdim_for_family
from .instances import (
    LogRegInstance,
    ValidationError,
    _instance_to_dict,
    gen_clustering,
    gen_logreg,
    gen_ssl,
    load_instance,
)
from .linkage import alpha_utility_curve
from .logreg import approx_path, solve_rlr
from .online import estimate_dispersion, hedge_run, online_logreg_run
from .tune import GridSpec, TuneConfig, convergence_report, erm_tune


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _header_line(seed, cfg_hash):
    return f"# algotune {__version__} seed={seed} config={cfg_hash}"


def _header_obj(seed, cfg_hash):
    return {"tool": "algotune", "version": __version__,
            "seed": seed, "config_hash": cfg_hash}


def _out_path(path):
    root = os.environ.get("ALGOTUNE_OUT_DIR")
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def _write_csv(path, seed, cfg_hash, fieldnames, rows, extra_comments=()):
    path = _out_path(path)
    with open(path, "w", newline="") as fh:
        fh.write(_header_line(seed, cfg_hash) + "\n")
        for line in extra_comments:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        w.writerows(rows)
    return path


def _load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ValidationError("config", f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError("config", f"not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ValidationError("config", "top level must be an object")
    return cfg


def _cfg_get(cfg, field, default=None, required=False):
    if field not in cfg:
        if required:
            raise ValidationError(field, "missing from config")
        return default
    return cfg[field]


_GEN_FUNCS = {"clustering": gen_clustering, "ssl": gen_ssl, "logreg": gen_logreg}


def _gen_kind(task):
    return task.split("-")[0]


def _gen_stream(task, gen_cfg, count, seed):
    """count i.i.d. instances drawn with child seeds of (seed, "gen")."""
    if not isinstance(gen_cfg, dict):
        raise ValidationError("generate", "must be an object of generator arguments")
    fn = _GEN_FUNCS[_gen_kind(task)]
    rng = np.random.default_rng([int(seed), 0x67656e])
    try:
        return [fn(seed=int(s), **gen_cfg)
                for s in rng.integers(0, 2**63 - 1, size=int(count))]
    except TypeError as exc:
        raise ValidationError("generate", str(exc))


def _instances_from_cfg(cfg, task, seed, field="instances"):
    paths = _cfg_get(cfg, field)
    gen_cfg = _cfg_get(cfg, "generate")
    if paths is not None:
        if not isinstance(paths, list) or not paths:
            raise ValidationError(field, "must be a nonempty list of file paths")
        return [load_instance(p) for p in paths]
    if gen_cfg is None:
        raise ValidationError(field, "config needs 'instances' or 'generate'")
    gen_cfg = dict(gen_cfg)
    count = gen_cfg.pop("count", None)
    if count is None:
        raise ValidationError("generate.count", "missing from config")
    return _gen_stream(task, gen_cfg, count, seed)


def _scalar_grid_from_cfg(value, field="grid"):
    """A {lo,hi,num,spacing} object or an explicit list of values."""
    if isinstance(value, list):
        if not value:
            raise ValidationError(field, "empty grid")
        return [float(v) for v in value]
    if isinstance(value, dict):
        spec = GridSpec(lo=float(_cfg_get(value, "lo", required=True)),
                        hi=float(_cfg_get(value, "hi", required=True)),
                        num=int(_cfg_get(value, "num", required=True)),
                        spacing=_cfg_get(value, "spacing", "linear"))
        return list(spec.points())
    raise ValidationError(field, "must be a list or a {lo,hi,num,spacing} object")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_gen(args):
    kind = args.task
    if kind == "clustering":
        cfg = {"n": args.n, "L": args.L, "k": args.k, "R": args.R,
               "generator": args.generator}
        if args.n is None:
            raise ValidationError("n", "required for --task clustering")
        inst = gen_clustering(seed=args.seed, **cfg)
    elif kind == "ssl":
        if args.n_labeled is None or args.n_unlabeled is None:
            raise ValidationError("n-labeled",
                                  "--n-labeled and --n-unlabeled required for --task ssl")
        cfg = {"n_labeled": args.n_labeled, "n_unlabeled": args.n_unlabeled,
               "L": args.L, "R": args.R, "generator": args.generator}
        inst = gen_ssl(seed=args.seed, **cfg)
    else:
        if args.m is None or args.p is None or args.m_val is None:
            raise ValidationError("m", "--m, --p and --m-val required for --task logreg")
        cfg = {"m": args.m, "p": args.p, "m_val": args.m_val, "signal": args.signal}
        inst = gen_logreg(seed=args.seed, **cfg)

    effective = {"subcommand": "gen", "task": kind, "seed": args.seed, **cfg}
    payload = {"_header": _header_obj(args.seed, _config_hash(effective))}
    payload.update(_instance_to_dict(inst))
    path = _out_path(args.out)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    print(f"wrote {path}")
    return 0


def _cmd_bounds(args):
    if args.family is None and args.formula is None:
        raise ValidationError("family", "need --family or --formula")
    if args.family is not None:
        kwargs = {}
        if args.n_unlabeled is not None:
            kwargs["n_unlabeled"] = args.n_unlabeled
        if args.n is None:
            raise ValidationError("n", "required with --family")
        report = pdim_for_family(args.family, args.n, args.L, **kwargs)
        params = family_params(args.family, args.n, args.L, **kwargs)
        effective = {"subcommand": "bounds", "family": args.family,
                     "n": args.n, "L": args.L, **kwargs}
        out = {
            "_header": _header_obj(0, _config_hash(effective)),
            "family": args.family, "n": args.n, "L": args.L,
            "tuple": list(params.as_tuple()),
            "formula": report.formula_name,
            "pdim_bound": report.pdim_bound,
            "note": report.note,
        }
    else:
        need = {"pfaffian_gj": ("d", "q", "M", "delta", "K"),
                "piecewise": ("d", "q", "M", "delta", "k_f", "k_g"),
                "partition": ("d", "q", "M", "delta", "n_regions"),
                "comparison": ("d", "q", "M", "delta", "k_g")}[args.formula]
        vals = {}
        for name in need:
            flag = name.replace("_", "-")
            v = getattr(args, name)
            if v is None:
                raise ValidationError(name, f"--{flag} required with --formula {args.formula}")
            vals[name] = v
        report = bound_report(args.formula, **vals)
        effective = {"subcommand": "bounds", "formula": args.formula, **vals}
        out = json.loads(report.to_json())
        out = {"_header": _header_obj(0, _config_hash(effective)), **out}
    text = json.dumps(out, indent=1, default=str)
    print(text)
    if args.out:
        path = _out_path(args.out)
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return 0


def _param_columns(task, param):
    if task == "clustering-M3":
        return {f"alpha_{i}": a for i, a in enumerate(param.alpha)}
    if task == "ssl":
        return {"sigma": param.sigma}
    if task == "logreg":
        return {"lam": param.lam}
    return {"alpha": param.alpha}


def _cmd_tune_batch(args):
    cfg = _load_config(args.config)
    task = _cfg_get(cfg, "task", required=True)
    seed = int(_cfg_get(cfg, "seed", 0))
    grid_cfg = _cfg_get(cfg, "grid", required=True)
    if not isinstance(grid_cfg, dict) or len(grid_cfg) != 1:
        raise ValidationError("grid", "must be an object with exactly one axis")
    axis, value = next(iter(grid_cfg.items()))
    if isinstance(value, dict):
        grid = {axis: GridSpec(lo=float(_cfg_get(value, "lo", required=True)),
                               hi=float(_cfg_get(value, "hi", required=True)),
                               num=int(_cfg_get(value, "num", required=True)),
                               spacing=_cfg_get(value, "spacing", "linear"))}
    else:
        grid = {axis: value}
    tc = TuneConfig(task=task, grid=grid,
                    budget=int(_cfg_get(cfg, "budget", 0)),
                    seed=seed,
                    beta=_cfg_get(cfg, "beta"),
                    penalty=_cfg_get(cfg, "penalty", "l2"),
                    objective=_cfg_get(cfg, "objective", "hamming"),
                    exact_m1=bool(_cfg_get(cfg, "exact_m1", False)),
                    n_jobs=int(_cfg_get(cfg, "n_jobs", os.cpu_count() or 1)))
    instances = _instances_from_cfg(cfg, task, seed)
    holdout = None
    hold_cfg = _cfg_get(cfg, "holdout")
    if hold_cfg is not None:
        if isinstance(hold_cfg, list):
            holdout = [load_instance(p) for p in hold_cfg]
        else:
            h = dict(hold_cfg)
            count = h.pop("count", None)
            if count is None:
                raise ValidationError("holdout.count", "missing from config")
            holdout = _gen_stream(task, h, count, seed + 1)

    result = erm_tune(instances, tc, holdout=holdout)

    rows = []
    fieldnames = None
    for param, mean, _ in result.utility_table:
        row = _param_columns(task, param)
        if fieldnames is None:
            fieldnames = list(row) + ["mean_utility", "n_instances", "is_best"]
        row["mean_utility"] = repr(float(mean))
        row["n_instances"] = len(instances)
        row["is_best"] = int(param.key() == result.best_param.key())
        rows.append(row)

    extras = [f"task={task} best={_param_columns(task, result.best_param)} "
              f"train_utility={result.train_utility!r}"]
    if result.holdout_utility is not None:
        extras.append(f"holdout_utility={result.holdout_utility!r}")
    if result.bound_report is not None:
        extras.append(f"pdim_bound={result.bound_report.pdim_bound!r}")
    path = _write_csv(args.out, seed, _config_hash(cfg), fieldnames, rows, extras)
    print(f"wrote {path}")
    return 0


def _cmd_tune_online(args):
    cfg = _load_config(args.config)
    mode = _cfg_get(cfg, "mode", "hedge")
    seed = int(_cfg_get(cfg, "seed", 0))
    T = int(_cfg_get(cfg, "T", required=True))
    cfg_hash = _config_hash(cfg)

    if mode == "hedge":
        task = _cfg_get(cfg, "task", required=True)
        grid = _scalar_grid_from_cfg(_cfg_get(cfg, "grid", required=True))
        stream = _instances_from_cfg(cfg, task, seed) if "instances" in cfg \
            else _gen_stream(task, dict(_cfg_get(cfg, "generate", required=True)), T, seed)
        if len(stream) < T:
            raise ValidationError("T", f"stream has {len(stream)} instances, need {T}")
        run = hedge_run(stream[:T], task, grid, seed=seed,
                        eta=_cfg_get(cfg, "eta"),
                        beta=_cfg_get(cfg, "beta"),
                        objective=_cfg_get(cfg, "objective", "hamming"),
                        penalty=_cfg_get(cfg, "penalty", "l2"))
    elif mode == "logreg-path":
        lam_min = float(_cfg_get(cfg, "lam_min", required=True))
        lam_max = float(_cfg_get(cfg, "lam_max", required=True))
        stream = _instances_from_cfg(cfg, "logreg", seed) if "instances" in cfg \
            else _gen_stream("logreg", dict(_cfg_get(cfg, "generate", required=True)), T, seed)
        run = online_logreg_run(stream[:T], lam_min, lam_max, T=T, seed=seed,
                                penalty=_cfg_get(cfg, "penalty", "l2"))
    else:
        raise ValidationError("mode", f"unknown mode {mode!r} (hedge | logreg-path)")

    cum = np.cumsum(run.grid_values, axis=0)
    chosen = np.cumsum(run.chosen_values)
    best = cum.max(axis=1) if run.maximize else cum.min(axis=1)
    rows = [{"t": t + 1,
             "cum_utility": repr(float(chosen[t])),
             "cum_best": repr(float(best[t])),
             "regret": repr(float(run.regret_trace[t]))}
            for t in range(run.T)]
    extras = [f"mode={mode} T={run.T} eta={run.eta!r} final_regret={run.regret!r}"]
    if run.audit is not None:
        extras.append("audit=" + json.dumps(run.audit, sort_keys=True, default=str))
    path = _write_csv(args.out, seed, cfg_hash,
                      ["t", "cum_utility", "cum_best", "regret"], rows, extras)
    print(f"wrote {path}")
    return 0


def _cmd_dispersion(args):
    cfg = _load_config(args.config)
    task = _cfg_get(cfg, "task", "clustering-M1")
    family = {"clustering-M1": "M1", "clustering-M2": "M2"}.get(task)
    if family is None:
        raise ValidationError("task", "dispersion curves need clustering-M1 or clustering-M2")
    seed = int(_cfg_get(cfg, "seed", 0))
    T = int(_cfg_get(cfg, "T", required=True))
    eps_list = _cfg_get(cfg, "eps_list", required=True)
    lo = float(_cfg_get(cfg, "lo", 0.5))
    hi = float(_cfg_get(cfg, "hi", 4.0))
    stream = _instances_from_cfg(cfg, task, seed) if "instances" in cfg \
        else _gen_stream(task, dict(_cfg_get(cfg, "generate", required=True)), T, seed)
    curves = [alpha_utility_curve(ins, family=family) for ins in stream[:T]]
    rep = estimate_dispersion(curves, eps_list, lo, hi,
                              resolution=int(_cfg_get(cfg, "resolution", 2048)),
                              L_lip=float(_cfg_get(cfg, "L_lip", 0.0)))
    rows = [{"eps": repr(float(r["eps"])), "max_count": r["max_count"],
             "ratio": repr(float(r["ratio"]))} for r in rep.rows()]
    path = _write_csv(args.out, seed, _config_hash(cfg),
                      ["eps", "max_count", "ratio"], rows,
                      [f"T={rep.T} lo={lo} hi={hi}"])
    print(f"wrote {path}")
    return 0


def _cmd_path_study(args):
    cfg = _load_config(args.config)
    seed = int(_cfg_get(cfg, "seed", 0))
    gen_cfg = dict(_cfg_get(cfg, "generate", required=True))
    scale = float(_cfg_get(cfg, "scale", 1.0))
    base = gen_logreg(seed=seed, **gen_cfg)
    ins = LogRegInstance(X=base.X * scale, y=base.y, X_val=base.X_val * scale,
                         y_val=base.y_val, meta=dict(base.meta))
    lam_min = float(_cfg_get(cfg, "lam_min", 0.1))
    lam_max = float(_cfg_get(cfg, "lam_max", 1.1))
    eps_list = [float(e) for e in _cfg_get(cfg, "eps_list", [0.2, 0.1, 0.05])]
    penalties = _cfg_get(cfg, "penalties", ["l2", "l1"])
    npts = int(_cfg_get(cfg, "grid_points", 101))
    lams = np.linspace(lam_min, lam_max, npts)

    rows = []
    for penalty in penalties:
        if penalty not in ("l2", "l1"):
            raise ValidationError("penalties", f"unknown penalty {penalty!r}")
        exact = [solve_rlr(ins.X, ins.y, l, penalty) for l in lams]
        errs = []
        for eps in eps_list:
            path = approx_path(ins, eps, lam_min, lam_max, penalty)
            errs.append(max(float(np.max(np.abs(path.beta_at(l) - bx)))
                            for l, bx in zip(lams, exact)))
        slope = float(np.polyfit(np.log(eps_list), np.log(errs), 1)[0]) \
            if len(eps_list) > 1 else float("nan")
        for eps, err in zip(eps_list, errs):
            rows.append({"penalty": penalty, "eps": repr(eps),
                         "max_error": repr(err), "slope": repr(slope)})
    path = _write_csv(args.out, seed, _config_hash(cfg),
                      ["penalty", "eps", "max_error", "slope"], rows)
    print(f"wrote {path}")
    return 0


def _cmd_convergence(args):
    cfg = _load_config(args.config)
    task = _cfg_get(cfg, "task", required=True)
    seed = int(_cfg_get(cfg, "seed", 0))
    gen_cfg = _cfg_get(cfg, "generate", required=True)
    N_list = _cfg_get(cfg, "N_list", required=True)
    fresh_M = int(_cfg_get(cfg, "fresh_M", required=True))
    grid = _scalar_grid_from_cfg(_cfg_get(cfg, "grid", required=True))
    rows = convergence_report(task, dict(gen_cfg), N_list, fresh_M, grid,
                              seed=seed, delta=float(_cfg_get(cfg, "delta", 0.05)))
    out_rows = [{"N": r["N"], "sup_gap": repr(float(r["sup_gap"])),
                 "theory_gap": "" if r["theory_gap"] is None
                 else repr(float(r["theory_gap"]))} for r in rows]
    path = _write_csv(args.out, seed, _config_hash(cfg),
                      ["N", "sup_gap", "theory_gap"], out_rows)
    print(f"wrote {path}")
    return 0


def _cmd_acceptance(args):
    criteria = None
    if args.criteria:
        criteria = []
        for tok in args.criteria.split(","):
            tok = tok.strip()
            if tok.isdigit():
                if not 1 <= int(tok) <= len(CRITERION_NAMES):
                    raise ValidationError("criteria", f"index {tok} out of range")
                criteria.append(int(tok))
            elif tok in CRITERION_NAMES:
                criteria.append(tok)
            else:
                raise ValidationError("criteria", f"unknown criterion {tok!r}")
    builder = mis_anchored_path if args.mis_anchor_path else None
    results = run_acceptance_suite(seed=args.seed, criteria=criteria,
                                   path_builder=builder,
                                   progress=lambda r: print(r.line(), flush=True))
    effective = {"subcommand": "acceptance", "seed": args.seed,
                 "criteria": args.criteria, "mis_anchor_path": args.mis_anchor_path}
    if args.out:
        path = _write_csv(args.out, args.seed, _config_hash(effective),
                          ["name", "measured", "threshold", "passed",
                           "seconds", "detail"],
                          [r.row() for r in results])
        print(f"wrote {path}")
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return 0 if n_fail == 0 else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="algotune",
        description="Hyperparameter-tuning experiment runner")
    p.add_argument("--version", action="version",
                   version=f"algotune {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("gen", help="generate one instance file")
    g.add_argument("--task", required=True, choices=("clustering", "ssl", "logreg"))
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int)
    g.add_argument("--L", type=int, default=1)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--R", type=float, default=1.0)
    g.add_argument("--generator", default="uniform-smooth",
                   choices=("uniform-smooth", "planted-blobs"))
    g.add_argument("--n-labeled", type=int)
    g.add_argument("--n-unlabeled", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--p", type=int)
    g.add_argument("--m-val", type=int)
    g.add_argument("--signal", type=float, default=2.0)
    g.set_defaults(func=_cmd_gen)

    b = sub.add_parser("bounds", help="pseudo-dimension bound calculator")
    b.add_argument("--family", choices=("H1", "H2", "H3", "G"))
    b.add_argument("--n", type=int)
    b.add_argument("--L", type=int, default=1)
    b.add_argument("--n-unlabeled", type=int)
    b.add_argument("--formula",
                   choices=("pfaffian_gj", "piecewise", "partition", "comparison"))
    b.add_argument("--d", type=int)
    b.add_argument("--q", type=int)
    b.add_argument("--M", type=int)
    b.add_argument("--delta", type=int)
    b.add_argument("--K", type=int)
    b.add_argument("--k-f", type=int, dest="k_f")
    b.add_argument("--k-g", type=int, dest="k_g")
    b.add_argument("--n-regions", type=int, dest="n_regions")
    b.add_argument("--out")
    b.set_defaults(func=_cmd_bounds)

    for name, fn, help_text in (
            ("tune-batch", _cmd_tune_batch, "grid/refined ERM tuning"),
            ("tune-online", _cmd_tune_online, "no-regret online tuning"),
            ("dispersion", _cmd_dispersion, "discontinuity dispersion study"),
            ("path-study", _cmd_path_study, "regularization path error study"),
            ("convergence", _cmd_convergence, "train-vs-fresh gap study")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--out", required=True, help="output CSV path")
        s.set_defaults(func=fn)

    a = sub.add_parser("acceptance", help="run the acceptance criteria")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", help="report CSV path")
    a.add_argument("--criteria",
                   help="comma list of names or 1-based indices "
                        f"(names: {', '.join(CRITERION_NAMES)})")
    a.add_argument("--mis-anchor-path", action="store_true",
                   help="self-test: swap in a broken path builder; the "
                        "path-accuracy criterion must then fail")
    a.set_defaults(func=_cmd_acceptance)
    return p


def cli_main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage/error naming the flag
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
