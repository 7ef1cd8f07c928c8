"""Command-line interface: ``symdyn <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .complexity import FeatureGrid, FeatureMatrix, extract_features
from .dataio import DataError, TimeSeries, load_dataset, normalize_dataset
from .discovery import CausalGraph, discover
from .ensemble import BaggedTreeClassifier, oob_importance, oob_score
from .graphkernel import kernel_matrix
from .graphnet import FusionNetwork, centralities, fuse
from .pipelines import (ConfigError, StageError, bench_table3, evaluate_features, resolve_config, run_meta,
                        run_pipeline_a, run_pipeline_b, write_json)
from .synthgen import SCENARIOS, gen_scenario

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("symdyn")


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _set(cfg, dotted, value):
    """Apply a CLI override unless the flag was left unset."""
    if value is None:
        return
    *head, last = dotted.split(".")
    node = cfg
    for key in head:
        node = node.setdefault(key, {})
    node[last] = value


def _load_graph(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return FusionNetwork.from_json(obj) if obj.get("kind") == "fusion" else CausalGraph.from_json(obj)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(a):
    ts, truth = gen_scenario(a.scenario, a.t, seed=a.seed, coef=a.coef)
    ts.to_csv(a.out)
    if a.truth:
        obj = truth.to_json()
        obj["meta"] = {"scenario": a.scenario, "t": a.t, "seed": a.seed, "coef": a.coef}
        write_json(a.truth, obj)


def cmd_discover(a):
    ts = TimeSeries.from_csv(a.inp)
    if a.method == "pcmci+":
        params = {"tau_max": a.tau_max, "alpha": a.alpha, "test": a.test, "p_j": a.p_j, "seed": a.seed,
                  "n_jobs": a.jobs}
        if a.test == "cmiknn":
            params["test_params"] = {"k": a.k, "n_perm": a.n_perm, "k_perm": a.k_perm}
    elif a.method == "var":
        params = {"lag": a.tau_max, "alpha": a.alpha}
    else:
        params = {"lag": a.tau_max, "alpha": a.alpha, "seed": a.seed}
    g = discover(ts, a.method, **params)
    g.meta["source"] = Path(a.inp).name
    g.save(a.out)


def cmd_fuse(a):
    graphs = [CausalGraph.load(p) for p in a.inp]
    f = fuse(graphs, group=a.group)
    f.meta["members"] = [Path(p).name for p in a.inp]
    f.save(a.out)


def cmd_centrality(a):
    centralities(_load_graph(a.inp), a.mode, a.min_count).to_csv(a.out)


def cmd_kernel(a):
    graphs = [_load_graph(p) for p in a.inp]
    labels = [Path(p).stem for p in a.inp]
    km = kernel_matrix(graphs, a.kind, labels, h=a.h, init_labels="uniform" if a.uniform_init else "identity")
    out = Path(a.out)
    if a.normalize:
        km.normalized().to_csv(out)
        km.to_csv(out.with_name(out.stem + "_raw" + out.suffix))
    else:
        km.to_csv(out)
        km.normalized().to_csv(out.with_name(out.stem + "_normalized" + out.suffix))


def cmd_features(a):
    grid = FeatureGrid.from_dict(_read_json(a.grid)) if a.grid else FeatureGrid()
    ds = normalize_dataset(load_dataset(a.inp), a.norm_scope)
    fm = extract_features(list(ds), grid, n_jobs=a.jobs, ordered_pairs=not a.unordered_pairs)
    fm.to_csv(a.out)


def cmd_classify(a):
    fm = FeatureMatrix.from_csv(a.features)
    cfg = resolve_config({"seed": a.seed, "jobs": a.jobs, "classifier": {
        "trees": a.trees, "boruta": not a.no_boruta, "boruta_importance": a.boruta_importance,
        "individual_bootstrap": a.individual_bootstrap, "max_rounds": a.max_rounds, "raw_baseline": False}})
    meta = run_meta(cfg)
    meta["features"] = Path(a.features).name
    if a.loocv:
        report = {"meta": meta, **evaluate_features(fm, cfg["classifier"], a.seed, a.jobs)}
    else:
        labels = np.array(fm.labels)
        train = labels != "COMORBID"
        model = BaggedTreeClassifier(a.trees, a.seed, n_jobs=a.jobs,
                                     bootstrap="individual" if a.individual_bootstrap else "rows")
        model.fit(fm.values[train], labels[train], np.array(fm.ids)[train])
        imp = oob_importance(model, fm.values[train], labels[train], a.seed)
        order = sorted(range(len(fm.columns)), key=lambda j: (-imp[j], fm.columns[j]))
        report = {"meta": meta, "oob_accuracy": oob_score(model, fm.values[train], labels[train]),
                  "importance": [{"feature": fm.columns[j], "importance": float(imp[j])} for j in order]}
    write_json(a.out, report)


def _pipeline_config(a):
    cfg = _read_json(a.config) if a.config else {}
    cfg = resolve_config(cfg)
    _set(cfg, "seed", a.seed)
    _set(cfg, "jobs", a.jobs)
    _set(cfg, "out", a.out)
    for dotted, attr in (("data.path", "inp"), ("data.norm_scope", "norm_scope")):
        _set(cfg, dotted, getattr(a, attr, None))
    return cfg


def cmd_pipeline_a(a):
    cfg = _pipeline_config(a)
    _set(cfg, "discovery.test", a.test)
    _set(cfg, "discovery.tau_max", a.tau_max)
    _set(cfg, "discovery.alpha", a.alpha)
    if not cfg.get("out"):
        raise ConfigError("an output directory (--out or config 'out') is required")
    run_pipeline_a(cfg)


def cmd_pipeline_b(a):
    cfg = _pipeline_config(a)
    _set(cfg, "features.path", a.features)
    _set(cfg, "classifier.trees", a.trees)
    if a.grid:
        cfg["features"]["grid"] = _read_json(a.grid)
    if not cfg.get("out"):
        raise ConfigError("an output directory (--out or config 'out') is required")
    run_pipeline_b(cfg)


def cmd_bench(a):
    cfg = _read_json(a.config) if a.config else {}
    cfg = resolve_config(cfg)
    _set(cfg, "seed", a.seed)
    _set(cfg, "jobs", a.jobs)
    _set(cfg, "out", a.out)
    for dotted, val in (("bench.t", a.t), ("bench.seeds", a.seeds), ("bench.alpha", a.alpha),
                        ("bench.tau_max", a.tau_max), ("bench.k", a.k), ("bench.methods", a.methods)):
        _set(cfg, dotted, val)
    report = bench_table3(cfg)
    for sc, row in report["table"].items():
        print(sc, " ".join(f"{m}={v['rate']:.2f}" for m, v in row.items()))


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(prog="symdyn", description="Causal and complexity analysis of symptom time series.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", help="generate a synthetic scenario")
    s.add_argument("--scenario", choices=SCENARIOS, required=True)
    s.add_argument("--t", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--coef", type=float, default=3.0)
    s.add_argument("--out", required=True)
    s.add_argument("--truth")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("discover", help="causal discovery on one series CSV")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--method", choices=("pcmci+", "var", "te"), default="pcmci+")
    s.add_argument("--test", choices=("parcorr", "cmiknn"), default="cmiknn")
    s.add_argument("--tau-max", type=int, default=1)
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--p-j", type=int, default=3)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--n-perm", type=int, default=200)
    s.add_argument("--k-perm", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_discover)

    s = sub.add_parser("fuse", help="sum binarised graphs of one group")
    s.add_argument("--group")
    s.add_argument("--in", dest="inp", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("centrality", help="node centralities of a graph or fusion network")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--mode", choices=("mixed", "directed-lagged"), default="mixed")
    s.add_argument("--min-count", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_centrality)

    s = sub.add_parser("kernel", help="graph kernel matrix (raw and normalised)")
    s.add_argument("--kind", choices=("degree", "wl"), default="wl")
    s.add_argument("--h", type=int, default=3)
    s.add_argument("--normalize", action="store_true")
    s.add_argument("--uniform-init", action="store_true")
    s.add_argument("--in", dest="inp", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_kernel)

    s = sub.add_parser("features", help="complexity features per individual and grid point")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--grid")
    s.add_argument("--norm-scope", choices=("individual", "pooled"), default="individual")
    s.add_argument("--unordered-pairs", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("classify", help="bagged-tree classification of a feature CSV")
    s.add_argument("--features", required=True)
    s.add_argument("--trees", type=int, default=300)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--loocv", action="store_true")
    s.add_argument("--no-boruta", action="store_true")
    s.add_argument("--boruta-importance", choices=("loocv", "single"), default="loocv")
    s.add_argument("--max-rounds", type=int, default=20)
    s.add_argument("--individual-bootstrap", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_classify)

    for name, func, helptext in (("pipeline-a", cmd_pipeline_a, "causal graphs, fusion, kernels, centralities"),
                                 ("pipeline-b", cmd_pipeline_b, "complexity features and classifier")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config")
        s.add_argument("--in", dest="inp")
        s.add_argument("--out")
        s.add_argument("--seed", type=int)
        s.add_argument("--jobs", type=int)
        s.add_argument("--norm-scope", choices=("individual", "pooled"))
        if name == "pipeline-a":
            s.add_argument("--test", choices=("parcorr", "cmiknn"))
            s.add_argument("--tau-max", type=int)
            s.add_argument("--alpha", type=float)
        else:
            s.add_argument("--features")
            s.add_argument("--grid")
            s.add_argument("--trees", type=int)
        s.set_defaults(func=func)

    s = sub.add_parser("bench-table3", help="detection rates on the three synthetic scenarios")
    s.add_argument("--config")
    s.add_argument("--t", type=int)
    s.add_argument("--seeds", type=int)
    s.add_argument("--alpha", type=float)
    s.add_argument("--tau-max", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--methods", nargs="+", choices=("var", "te", "parcorr", "cmiknn"))
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)
    return p


def exit_code(exc):
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (np.linalg.LinAlgError, FloatingPointError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, ValueError, OSError, KeyError)):
        return EXIT_DATA
    return None


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = exit_code(exc)
        if code is None:
            raise
        print(f"symdyn {args.command}: error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
