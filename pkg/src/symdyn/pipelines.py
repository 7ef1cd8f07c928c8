"""End-to-end runs: causal-graph branch (A), complexity/classifier branch (B)
and the synthetic detection benchmark.

Every written artifact carries a ``meta`` block with the resolved
parameters, seeds and library versions. Nothing time-dependent is written,
so identical configurations reproduce identical bytes.
"""

import copy
import json
import logging
from pathlib import Path

import numpy as np
import scipy
import sklearn
from joblib import Parallel, delayed

from . import __version__
from ._utils import derive_seed
from .complexity import FeatureGrid, FeatureMatrix, extract_features
from .dataio import DataError, Diagnosis, load_dataset, normalize_dataset
from .discovery import CausalGraph, pcmci_plus, te_discovery, var_granger
from .ensemble import (BaggedTreeClassifier, boruta_select, loocv_by_individual, predict_holdout,
                       roc_and_threshold)
from .graphkernel import kernel_matrix
from .graphnet import centralities, fuse
from .synthgen import SCENARIOS, gen_scenario

log = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "seed": 0,
    "jobs": 1,
    "data": {"path": None, "schema": None, "norm_scope": "individual"},
    "discovery": {"test": "cmiknn", "tau_max": 1, "alpha": 0.01, "p_j": 3, "max_conds_contemp": 3,
                  "k": 4, "n_perm": 200, "k_perm": 5},
    "graphs": {"mode": "mixed", "min_count": 1, "wl_h": 3, "uniform_init": False},
    "features": {"grid": FeatureGrid().to_dict(), "ordered_pairs": True, "path": None},
    "classifier": {"trees": 300, "positive": "MDD", "boruta": True, "boruta_importance": "loocv",
                   "max_rounds": 20, "individual_bootstrap": False, "raw_baseline": True},
    "bench": {"t": 100, "seeds": 100, "alpha": 0.01, "tau_max": 1, "k": 4, "n_perm": 200,
              "methods": ["var", "te", "parcorr", "cmiknn"], "scenarios": list(SCENARIOS)},
    "out": None,
}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class StageError(RuntimeError):
    """An error raised inside a named pipeline stage."""

    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def merge_config(base, override):
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if key not in out:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(out[key], dict) and isinstance(val, dict) and key != "grid":
            for sub in val:
                if sub not in out[key]:
                    raise ConfigError(f"unknown config key {key}.{sub}")
            out[key].update(copy.deepcopy(val))
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(override=None):
    return merge_config(DEFAULT_CONFIG, override)


def versions():
    return {"symdyn": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__}


def run_meta(config):
    """Resolved config (minus the worker count, which never changes results) and versions."""
    return {"config": {k: v for k, v in config.items() if k != "jobs"}, "versions": versions()}


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jobs(config):
    jobs = int(config.get("jobs") or 1)
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return jobs


def _load(config):
    data = config["data"]
    if not data.get("path"):
        raise ConfigError("data.path is required")
    ds = load_dataset(data["path"], data.get("schema"))
    if not len(ds):
        raise DataError("dataset has no individuals")
    return normalize_dataset(ds, data.get("norm_scope", "individual"))


# ---------------------------------------------------------------------------
# branch A


def _discover_one(ind, dcfg, seed):
    test_params = {"k": dcfg["k"], "n_perm": dcfg["n_perm"], "k_perm": dcfg["k_perm"]} \
        if dcfg["test"] == "cmiknn" else {}
    g = pcmci_plus(ind.series, tau_max=dcfg["tau_max"], alpha=dcfg["alpha"], test=dcfg["test"],
                   p_j=dcfg["p_j"], seed=derive_seed(seed, "discover", ind.id),
                   max_conds_contemp=dcfg["max_conds_contemp"], test_params=test_params)
    g.meta.update({"individual": ind.id, "diagnosis": ind.diagnosis.value})
    return g


def run_pipeline_a(config, dataset=None):
    """Per-individual PCMCI+ graphs, group fusion networks, kernels and centralities.

    Writes into ``config["out"]`` when set and returns a summary dict with
    the in-memory artifacts under ``"artifacts"``.
    """
    config = resolve_config(config)
    jobs = _jobs(config)
    seed = config["seed"]
    with _stage("load"):
        dataset = dataset if dataset is not None else _load(config)
    dcfg = config["discovery"]
    with _stage("discover"):
        if jobs == 1:
            graphs = [_discover_one(ind, dcfg, seed) for ind in dataset]
        else:
            graphs = Parallel(n_jobs=jobs)(delayed(_discover_one)(ind, dcfg, seed) for ind in dataset)
    gcfg = config["graphs"]
    with _stage("fuse"):
        fusions = {}
        for dx in Diagnosis:
            members = [g for g, ind in zip(graphs, dataset) if ind.diagnosis is dx]
            if members:
                fusions[dx.value] = fuse(members, group=dx.value)
    with _stage("centrality"):
        reports = {grp: centralities(f, gcfg["mode"], gcfg["min_count"]) for grp, f in fusions.items()}
    with _stage("kernel"):
        init = "uniform" if gcfg["uniform_init"] else "identity"
        ids = [ind.id for ind in dataset]
        kernels = {
            "individual_wl": kernel_matrix(graphs, "wl", ids, h=gcfg["wl_h"], init_labels=init),
            "individual_degree": kernel_matrix(graphs, "degree", ids),
            "group_wl": kernel_matrix(list(fusions.values()), "wl", list(fusions), h=gcfg["wl_h"],
                                      init_labels=init),
            "group_degree": kernel_matrix(list(fusions.values()), "degree", list(fusions)),
        }
    meta = run_meta(config)
    for f in fusions.values():
        f.meta.update(meta)
    summary = {
        "meta": meta,
        "n_graphs": len(graphs),
        "groups": {grp: f.group_size for grp, f in fusions.items()},
        "kernels": {name: {"labels": km.labels, "values": km.values.tolist(),
                           "normalized": km.normalized().values.tolist(),
                           "min_eigenvalue": km.min_eigenvalue()} for name, km in kernels.items()},
        "centrality_variants": {grp: r.closeness_variant for grp, r in reports.items()},
    }
    out = config.get("out")
    if out:
        with _stage("write"):
            out = Path(out)
            (out / "graphs").mkdir(parents=True, exist_ok=True)
            for g, ind in zip(graphs, dataset):
                g.save(out / "graphs" / f"{ind.id}.json")
            for grp, f in fusions.items():
                f.save(out / f"fusion_{grp}.json")
                reports[grp].to_csv(out / f"centrality_{grp}.csv")
            for name, km in kernels.items():
                km.to_csv(out / f"kernel_{name}.csv")
                km.normalized().to_csv(out / f"kernel_{name}_normalized.csv")
            write_json(out / "pipeline_a.json", summary)
    summary["artifacts"] = {"graphs": graphs, "fusions": fusions, "centralities": reports, "kernels": kernels}
    return summary


# ---------------------------------------------------------------------------
# branch B


def _raw_matrix(dataset):
    ids, labels, rows = [], [], []
    for ind in dataset:
        for row in ind.series.values:
            ids.append(ind.id)
            labels.append(ind.diagnosis.value)
            rows.append(row)
    return FeatureMatrix(ids, ["raw"] * len(ids), labels, list(dataset.var_names), np.array(rows))


def evaluate_features(fm, ccfg, seed, jobs=1, select=True):
    """Selection, LOOCV, ROC and holdout prediction on one feature matrix.

    Rows whose label is COMORBID form the holdout block; the rest train.
    """
    positive = ccfg["positive"]
    labels = np.array(fm.labels)
    train = labels != Diagnosis.COMORBID.value
    if len(set(labels[train])) < 2:
        raise DataError("training data needs both GAD and MDD individuals")
    X = fm.values[train]
    y = labels[train]
    groups = np.array(fm.ids)[train]
    params = {"n_estimators": ccfg["trees"], "n_jobs": jobs,
              "bootstrap": "individual" if ccfg["individual_bootstrap"] else "rows"}
    columns = list(fm.columns)
    history, empty = [], False
    if select and ccfg["boruta"] and X.shape[1] >= 2:
        res = boruta_select(X, y, columns, groups if ccfg["boruta_importance"] == "loocv" else None,
                            seed=derive_seed(seed, "boruta"), max_rounds=ccfg["max_rounds"], **params)
        history, empty = res.history, res.empty
        if not empty:
            columns = res.selected
    idx = [fm.columns.index(c) for c in columns]
    X = X[:, idx]
    cv = loocv_by_individual(X, y, groups, positive=positive, random_state=derive_seed(seed, "loocv"), **params)
    roc = roc_and_threshold(cv.probabilities, cv.labels, positive)
    model = BaggedTreeClassifier(random_state=derive_seed(seed, "final"), **params).fit(X, y, groups)
    hold = []
    if (~train).any():
        hold = predict_holdout(model, roc.optimal_threshold, fm.values[~train][:, idx],
                               np.array(fm.ids)[~train], positive)
    return {"selected": columns, "selection_empty": empty, "boruta_history": history,
            "loocv": cv.to_json(), "roc": roc.to_json(), "holdout": hold}


def run_pipeline_b(config, dataset=None, features=None):
    """Complexity features, Boruta selection, LOOCV/ROC and holdout predictions.

    A raw-data baseline (one row per survey response, no selection) is
    evaluated alongside when ``classifier.raw_baseline`` is set and a
    dataset is available.
    """
    config = resolve_config(config)
    jobs = _jobs(config)
    seed = config["seed"]
    fcfg, ccfg = config["features"], config["classifier"]
    with _stage("load"):
        if features is None and fcfg.get("path"):
            features = FeatureMatrix.from_csv(fcfg["path"])
        if dataset is None and (features is None or ccfg["raw_baseline"]) and config["data"].get("path"):
            dataset = _load(config)
        if features is None and dataset is None:
            raise ConfigError("need data.path or features.path")
    with _stage("features"):
        if features is None:
            features = extract_features(list(dataset), FeatureGrid.from_dict(fcfg["grid"]), n_jobs=jobs,
                                        ordered_pairs=fcfg["ordered_pairs"])
    with _stage("classify"):
        result = evaluate_features(features, ccfg, seed, jobs)
    report = {"meta": run_meta(config),
              "n_rows": features.shape[0], "n_features": features.shape[1], "complexity": result}
    if ccfg["raw_baseline"] and dataset is not None:
        with _stage("baseline"):
            report["raw_baseline"] = evaluate_features(_raw_matrix(dataset), ccfg, derive_seed(seed, "raw"),
                                                       jobs, select=False)
            report["auc_gap"] = result["roc"]["auc"] - report["raw_baseline"]["roc"]["auc"]
    out = config.get("out")
    if out:
        with _stage("write"):
            out = Path(out)
            out.mkdir(parents=True, exist_ok=True)
            features.to_csv(out / "features.csv")
            write_json(out / "pipeline_b.json", report)
    return report


# ---------------------------------------------------------------------------
# Table-3 style benchmark


def _bench_run(scenario, s, bcfg, seed):
    ts, truth = gen_scenario(scenario, bcfg["t"], seed=s)
    out = {}
    for method in bcfg["methods"]:
        mseed = derive_seed(seed, "bench", scenario, s, method)
        if method == "var":
            g = var_granger(ts, lag=bcfg["tau_max"], alpha=bcfg["alpha"])
        elif method == "te":
            g = te_discovery(ts, lag=bcfg["tau_max"], alpha=bcfg["alpha"], seed=mseed)
        elif method == "parcorr":
            g = pcmci_plus(ts, bcfg["tau_max"], bcfg["alpha"], "parcorr", seed=mseed)
        elif method == "cmiknn":
            g = pcmci_plus(ts, bcfg["tau_max"], bcfg["alpha"], "cmiknn", seed=mseed,
                           test_params={"k": bcfg["k"], "n_perm": bcfg["n_perm"]})
        else:
            raise ConfigError(f"unknown bench method {method!r}")
        found = [g.has_link(*e) for e in sorted(truth.edges)]
        false_links = sorted(g.lagged_links() - set(truth.edges))
        out[method] = {"any": any(found), "all": all(found), "false_positives": len(false_links)}
    return out


def bench_table3(config=None):
    """Detection rates of the true lag-1 links over seeds for each scenario and method.

    A scenario counts as detected in a seed when at least one true parent
    link is found (``rate``); ``rate_all`` requires every true link.
    """
    config = resolve_config(config)
    bcfg = config["bench"]
    jobs = _jobs(config)
    seed = config["seed"]
    tasks = [(sc, s) for sc in bcfg["scenarios"] for s in range(bcfg["seeds"])]
    if jobs == 1:
        runs = [_bench_run(sc, s, bcfg, seed) for sc, s in tasks]
    else:
        runs = Parallel(n_jobs=jobs)(delayed(_bench_run)(sc, s, bcfg, seed) for sc, s in tasks)
    table = {}
    for sc in bcfg["scenarios"]:
        rows = [r for (name, _), r in zip(tasks, runs) if name == sc]
        table[sc] = {m: {"rate": float(np.mean([r[m]["any"] for r in rows])),
                         "rate_all": float(np.mean([r[m]["all"] for r in rows])),
                         "mean_false_positives": float(np.mean([r[m]["false_positives"] for r in rows]))}
                     for m in bcfg["methods"]}
    report = {"meta": run_meta(config), "table": table}
    if config.get("out"):
        write_json(config["out"], report)
    return report


def graphs_from_paths(paths):
    return [CausalGraph.load(p) for p in paths]

