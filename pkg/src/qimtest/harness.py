"""Monte Carlo harness: power / type-I scenarios, kappa sweeps, Euclidean limit.

Replicate ``r`` of a run with seed ``s`` draws its graphs from
``default_rng([s, r])`` and its permutations from a stream seeded by a value
derived from ``(s, r)``. Replicates are therefore independent tasks and a run
is reproducible at any worker count.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .generators import GeneratorSpec, ba_matched_p
from .metrics import QimParams
from .permtest import (
    DistanceMatrix,
    distance_components,
    distance_matrix,
    f_statistic,
    permutation_test,
    permuted_statistics,
    vector_distance_matrix,
)
from .remoteness import remoteness_matrix

log = logging.getLogger(__name__)

DESK_REPS = 100
DESK_PERMS = 500
FULL_REPS = 1000
FULL_PERMS = 1000
MAX_FAILURE_RATE = 0.01


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    groupA: GeneratorSpec
    groupB: GeneratorSpec
    nA: int = 20
    nB: int = 20
    reps: int = DESK_REPS
    perms: int = DESK_PERMS
    alpha: float = 0.05
    metric: str = "qim"
    kappa: float = 1.0
    variant: str = "product"
    mr: bool = False
    pseudo_count: float = 1
    abs_weights: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.reps < 1 or self.perms < 1:
            raise HarnessError("reps and perms must be at least 1")
        if not 0 < self.alpha < 1:
            raise HarnessError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.nA < 2 or self.nB < 2:
            raise HarnessError("each group needs at least 2 graphs")
        _ = self.params  # validates metric, variant and kappa

    @property
    def params(self) -> QimParams:
        return QimParams(
            metric=self.metric,
            kappa=self.kappa,
            variant=self.variant,
            abs_weights=self.abs_weights,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise HarnessError(f"unknown scenario fields: {sorted(extra)}")
        for key in ("groupA", "groupB"):
            if isinstance(data.get(key), dict):
                data[key] = GeneratorSpec.from_dict(data[key])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass
class PowerReport:
    rejection_rate: float
    ci95: tuple[float, float]
    per_replicate: list[dict]
    failures: list[dict] = field(default_factory=list)
    config: dict | None = None
    wall_time: float | None = None

    def to_dict(self, *, timing: bool = False) -> dict:
        out = {
            "rejection_rate": self.rejection_rate,
            "ci95": list(self.ci95),
            "reps": len(self.per_replicate),
            "failures": self.failures,
            "per_replicate": self.per_replicate,
        }
        if self.config is not None:
            out["config"] = self.config
        if timing:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self, *, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing=timing), indent=2)

    def csv_rows(self) -> list[str]:
        lines = ["replicate,p_value,f0,rejected"]
        for row in self.per_replicate:
            lines.append(f"{row['replicate']},{row['p_value']!r},{row['f0']!r},{int(row['rejected'])}")
        return lines


def wilson_interval(k: int, n: int) -> tuple[float, float]:
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def perm_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(rep)]).generate_state(1)[0])


def draw_samples(cfg: ScenarioConfig, rep: int):
    rng = np.random.default_rng([int(cfg.seed), int(rep)])
    group_a = [cfg.groupA.sample(rng) for _ in range(cfg.nA)]
    group_b = [cfg.groupB.sample(rng) for _ in range(cfg.nB)]
    return group_a + group_b


def _test_matrix(cfg: ScenarioConfig, d_a, im, params: QimParams) -> DistanceMatrix:
    raw = params.combine(d_a, im if im is not None else 0.0)
    if cfg.mr:
        return remoteness_matrix(raw, cfg.nA)
    return DistanceMatrix(raw * raw, cfg.nA)


def run_replicate(cfg: ScenarioConfig, rep: int) -> dict:
    """One replicate: draw both samples, build distances, run the test."""
    graphs = draw_samples(cfg, rep)
    params = cfg.params
    if params.metric == "euclidean":
        D = distance_matrix(graphs, cfg.nA, params)
        if cfg.mr:
            D = remoteness_matrix(np.sqrt(D.entries), cfg.nA)
    else:
        d_a, im = distance_components(graphs, params)
        D = _test_matrix(cfg, d_a, im, params)
    res = permutation_test(D, cfg.perms, cfg.pseudo_count, perm_seed(cfg.seed, rep))
    return {
        "replicate": rep,
        "p_value": res.p_value,
        "f0": res.f0,
        "rejected": res.p_value <= cfg.alpha,
    }


class _Task:
    def __init__(self, func, cfg, *extra):
        self.func = func
        self.cfg = cfg
        self.extra = extra

    def __call__(self, rep):
        try:
            return self.func(self.cfg, rep, *self.extra)
        except Exception as exc:  # reported per replicate, aggregated below
            return {"replicate": rep, "error": f"{type(exc).__name__}: {exc}"}


def _map_replicates(task, reps: int, workers: int):
    if workers <= 1:
        return [task(r) for r in range(reps)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(task, range(reps), chunksize=max(1, reps // (4 * workers))))


def _split_failures(results, reps):
    ok = [r for r in results if "error" not in r]
    failed = [r for r in results if "error" in r]
    for f in failed:
        log.warning("replicate %d failed: %s", f["replicate"], f["error"])
    if len(failed) > MAX_FAILURE_RATE * reps:
        raise HarnessError(
            f"{len(failed)} of {reps} replicates failed; first: replicate "
            f"{failed[0]['replicate']}: {failed[0]['error']}"
        )
    return ok, failed


def _report(rows, failed, cfg_dict, start) -> PowerReport:
    k = sum(1 for r in rows if r["rejected"])
    n = len(rows)
    return PowerReport(
        rejection_rate=k / n if n else math.nan,
        ci95=wilson_interval(k, n) if n else (math.nan, math.nan),
        per_replicate=rows,
        failures=failed,
        config=cfg_dict,
        wall_time=time.perf_counter() - start,
    )


def run_scenario(cfg: ScenarioConfig, *, workers: int = 1) -> PowerReport:
    """Estimate the rejection rate of the test over ``cfg.reps`` replicates."""
    start = time.perf_counter()
    results = _map_replicates(_Task(run_replicate, cfg), cfg.reps, workers)
    rows, failed = _split_failures(results, cfg.reps)
    return _report(rows, failed, cfg.to_dict(), start)


# -- kappa sweep -------------------------------------------------------------


def _sweep_replicate(cfg: ScenarioConfig, rep: int, cells) -> dict:
    graphs = draw_samples(cfg, rep)
    d_a, im = distance_components(graphs, QimParams(metric="qim", kappa=1.0))
    seed = perm_seed(cfg.seed, rep)
    out = {"replicate": rep, "cells": []}
    for kappa, variant in cells:
        params = QimParams(metric="qim", kappa=kappa, variant=variant)
        D = _test_matrix(cfg, d_a, im, params)
        res = permutation_test(D, cfg.perms, cfg.pseudo_count, seed)
        out["cells"].append({"p_value": res.p_value, "f0": res.f0})
    return out


def kappa_sweep(
    cfg: ScenarioConfig,
    kappas,
    variants=("product", "plus"),
    *,
    workers: int = 1,
) -> list[dict]:
    """Power for every ``(kappa, variant)`` cell on shared replicates.

    Each replicate's graphs, local and global distance components and
    permutation stream are reused across all cells, so cells are paired.
    """
    start = time.perf_counter()
    cells = [(float(k), v) for k in kappas for v in variants]
    results = _map_replicates(_Task(_sweep_replicate, cfg, cells), cfg.reps, workers)
    ok, failed = _split_failures(results, cfg.reps)
    table = []
    for idx, (kappa, variant) in enumerate(cells):
        rows = []
        for r in ok:
            cell = r["cells"][idx]
            rows.append(
                {
                    "replicate": r["replicate"],
                    "p_value": cell["p_value"],
                    "f0": cell["f0"],
                    "rejected": cell["p_value"] <= cfg.alpha,
                }
            )
        report = _report(rows, failed, None, start)
        table.append({"kappa": kappa, "variant": variant, "report": report})
    return table


def sweep_to_dict(table, cfg: ScenarioConfig) -> dict:
    return {
        "config": cfg.to_dict(),
        "cells": [
            {"kappa": c["kappa"], "variant": c["variant"], **c["report"].to_dict()}
            for c in table
        ],
    }


# -- Euclidean theory check --------------------------------------------------


def theory_check_euclidean(
    v: int = 5,
    nA: int = 100,
    nB: int = 100,
    reps: int = 500,
    seed: int = 0,
    *,
    shift_sq: float = 0.0,
    perms_per_rep: int = 1,
) -> dict:
    """Compare simulated pseudo-F values on Gaussian vectors with their limits.

    Group B is shifted by a vector of squared norm ``shift_sq``. The observed
    statistics are tested against the (noncentral) scaled chi-square limit and
    the permuted statistics against the central one; the two empirical
    distributions are also compared under the null.
    """
    if v < 1 or nA < 2 or nB < 2:
        raise HarnessError("need v >= 1 and both groups of size >= 2")
    n = nA + nB
    shift = np.full(v, math.sqrt(shift_sq / v))
    observed = np.empty(reps)
    permuted = []
    for r in range(reps):
        rng = np.random.default_rng([int(seed), r])
        x = rng.standard_normal((n, v))
        x[nA:] += shift
        D = vector_distance_matrix(x, nA)
        observed[r] = f_statistic(D)
        permuted.append(permuted_statistics(D, perms_per_rep, perm_seed(seed, r)))
    permuted = np.concatenate(permuted)

    noncentrality = nA * nB * shift_sq / n
    if noncentrality > 0:
        limit = stats.ncx2(df=v, nc=noncentrality, scale=1.0 / v)
    else:
        limit = stats.chi2(df=v, scale=1.0 / v)
    null_limit = stats.chi2(df=v, scale=1.0 / v)
    gof = stats.kstest(observed, limit.cdf)
    perm_gof = stats.kstest(permuted, null_limit.cdf)
    out = {
        "v": v,
        "nA": nA,
        "nB": nB,
        "reps": reps,
        "shift_sq": shift_sq,
        "mean_f": float(observed.mean()),
        "var_f": float(observed.var(ddof=1)),
        "expected_mean": 1.0 + noncentrality / v,
        "expected_var_null": 2.0 / v,
        "ks_stat": float(gof.statistic),
        "ks_pvalue": float(gof.pvalue),
        "perm_mean": float(permuted.mean()),
        "perm_var": float(permuted.var(ddof=1)),
        "perm_ks_pvalue": float(perm_gof.pvalue),
    }
    if noncentrality == 0:
        two = stats.ks_2samp(observed, permuted)
        out["obs_vs_perm_ks_pvalue"] = float(two.pvalue)
    return out


# -- presets -----------------------------------------------------------------


def _unweighted(family, v=20, p=0.1, m=1):
    return GeneratorSpec(family=family, v=v, p=p, m=m)


def _weighted(family, v=20, p=0.1, mu=4.0, sigma2=0.25, corr="identity"):
    return GeneratorSpec(family=family, v=v, p=p, mu=mu, sigma2=sigma2, corr=corr)


def _build_presets() -> dict[str, ScenarioConfig]:
    presets: dict[str, ScenarioConfig] = {}
    # 1.a: ER vs density-matched bipartite
    for d in (0.02, 0.04, 0.06, 0.08, 0.10, 0.12, 0.14, 0.16, 0.18, 0.20, 0.22, 0.24, 0.26, 0.28, 0.30):
        presets[f"1a-d{d:.2f}"] = ScenarioConfig(_unweighted("er", p=d), _unweighted("bipartite", p=d))
    # 1.b: ER matched to BA(20, m)
    for m in range(1, 11):
        presets[f"1b-m{m}"] = ScenarioConfig(
            _unweighted("er", p=ba_matched_p(20, m)), _unweighted("ba", m=m)
        )
    # 1.c: ER vs ER
    for p in (0.1, 0.3, 0.5, 0.7, 0.9):
        presets[f"1c-p{p:.1f}"] = ScenarioConfig(_unweighted("er", p=p), _unweighted("er", p=p))
    # 1.d: BA(m=1) vs BA(m=1)
    for v in (20, 50, 100):
        presets[f"1d-v{v}"] = ScenarioConfig(_unweighted("ba", v=v, m=1), _unweighted("ba", v=v, m=1))
    # 2.a / 2.b: complete graphs, mean shift
    for mu2 in (8.5, 9.75, 10.0, 10.25, 11.5):
        presets[f"2a-mu{mu2:g}"] = ScenarioConfig(
            _weighted("mvn-full", mu=10.0, sigma2=1.0), _weighted("mvn-full", mu=mu2, sigma2=1.0)
        )
    for mu2 in (8.8, 8.95, 10.0, 11.05, 11.2):
        presets[f"2b-mu{mu2:g}"] = ScenarioConfig(
            _weighted("mvn-full", mu=10.0, sigma2=1.0, corr="toeplitz-bartlett"),
            _weighted("mvn-full", mu=mu2, sigma2=1.0, corr="toeplitz-bartlett"),
        )
    # 2.c: weighted ER, density shift
    for p2 in (0.4, 0.45, 0.5, 0.55, 0.6):
        presets[f"2c-p{p2:g}"] = ScenarioConfig(_weighted("weighted-er", p=0.5), _weighted("weighted-er", p=p2))
    # 3.a-c: weighted ER vs weighted bipartite
    for d in (0.1, 0.15, 0.2):
        presets[f"3a-d{d:g}"] = ScenarioConfig(
            _weighted("weighted-er", p=d), _weighted("weighted-bipartite", p=d)
        )
        presets[f"3b-d{d:g}"] = ScenarioConfig(
            _weighted("weighted-er", v=100, p=d), _weighted("weighted-bipartite", v=100, p=d)
        )
        presets[f"3c-d{d:g}"] = ScenarioConfig(
            _weighted("weighted-er", p=d), _weighted("weighted-bipartite", p=d), nA=100, nB=100
        )
    # 4: kappa sweep base (scenario 1 settings)
    presets["4"] = presets["1a-d0.10"]
    # short aliases for the representative table rows
    presets["1a"] = presets["1a-d0.10"]
    presets["1b"] = presets["1b-m1"]
    presets["1c"] = presets["1c-p0.5"]
    presets["1d"] = presets["1d-v20"]
    presets["2a"] = presets["2a-mu11.5"]
    presets["2b"] = presets["2b-mu11.05"]
    presets["2c"] = presets["2c-p0.45"]
    presets["3a"] = presets["3a-d0.1"]
    presets["3b"] = presets["3b-d0.1"]
    presets["3c"] = presets["3c-d0.1"]
    return presets


PRESETS = _build_presets()

KAPPA_GRIDS = {
    "wide": (0.0, 0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0),
    "discussion": (0.5, 1.0, 2.0, 5.0, 10.0),
}


def preset(name: str, *, full: bool = False, **overrides) -> ScenarioConfig:
    """Named scenario configuration; ``full=True`` restores 1000 reps x 1000 perms."""
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise HarnessError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    if full:
        cfg = replace(cfg, reps=FULL_REPS, perms=FULL_PERMS)
    return replace(cfg, **overrides) if overrides else cfg
