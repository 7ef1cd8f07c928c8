import numpy as np
import pytest

from symdyn.dataio import Dataset, Diagnosis, Individual, TimeSeries, normalize_dataset


def make_cohort(n_per=5, T=120, N=3, seed=0, comorbid=True):
    """Synthetic cohort: GAD individuals are AR(1) with phi=0.8, MDD are white noise.

    After per-individual z-scoring every row has the same marginal law in
    both groups, so raw values carry no label information while dynamics do.
    """
    rng = np.random.default_rng(seed)
    names = [f"s{i}" for i in range(N)]
    kinds = [Diagnosis.GAD, Diagnosis.MDD] + ([Diagnosis.COMORBID] if comorbid else [])
    phis = {Diagnosis.GAD: 0.8, Diagnosis.MDD: 0.0, Diagnosis.COMORBID: 0.4}
    inds = []
    for k in range(len(kinds) * n_per):
        dx = kinds[k % len(kinds)]
        x = np.zeros((T + 50, N))
        e = rng.standard_normal((T + 50, N))
        for t in range(1, T + 50):
            x[t] = phis[dx] * x[t - 1] + e[t]
        inds.append(Individual(f"P{k:03d}", dx, TimeSeries(x[50:], names)))
    return normalize_dataset(Dataset(tuple(inds)))


def write_long_csv(path, dataset):
    names = dataset.var_names
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["id", "diagnosis"] + list(names)) + "\n")
        for ind in dataset:
            for row in ind.series.values:
                fh.write(",".join([ind.id, ind.diagnosis.value] + [repr(float(v)) for v in row]) + "\n")


@pytest.fixture
def cohort():
    return make_cohort()


ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    """Store and print the one-line verdict for an acceptance criterion."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
