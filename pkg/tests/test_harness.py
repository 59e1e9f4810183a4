import json

import numpy as np
import pytest

from qimtest import harness
from qimtest.generators import GeneratorSpec
from qimtest.harness import (
    HarnessError,
    ScenarioConfig,
    kappa_sweep,
    perm_seed,
    preset,
    run_replicate,
    run_scenario,
    sweep_to_dict,
    theory_check_euclidean,
    wilson_interval,
)

small = ScenarioConfig(
    GeneratorSpec("er", v=10, p=0.2), GeneratorSpec("bipartite", v=10, p=0.2), nA=6, nB=6, reps=4, perms=40
)


class TestConfig:
    def test_roundtrip(self, tmp_path):
        cfg = preset("2b-mu11.05", reps=7)
        cfg.dump(tmp_path / "c.json")
        assert ScenarioConfig.load(tmp_path / "c.json") == cfg

    def test_unknown_field(self):
        data = small.to_dict() | {"foo": 1}
        with pytest.raises(HarnessError):
            ScenarioConfig.from_dict(data)

    @pytest.mark.parametrize("bad", [dict(reps=0), dict(alpha=1.5), dict(nA=1), dict(metric="x")])
    def test_invalid(self, bad):
        with pytest.raises(ValueError if "metric" in bad else HarnessError):
            ScenarioConfig(small.groupA, small.groupB, **bad)

    def test_presets(self):
        assert preset("1a") == preset("1a-d0.10")
        full = preset("1a", full=True)
        assert (full.reps, full.perms) == (1000, 1000)
        assert preset("3c").nA == 100
        with pytest.raises(HarnessError):
            preset("9z")

    def test_every_preset_samples(self):
        for name, cfg in harness.PRESETS.items():
            cfg.groupA.sample(0)
            cfg.groupB.sample(0)


class TestRun:
    def test_single_replicate(self):
        rep = run_scenario(ScenarioConfig(small.groupA, small.groupB, nA=6, nB=6, reps=1, perms=20))
        assert len(rep.per_replicate) == 1
        assert rep.rejection_rate in (0.0, 1.0)

    def test_replicate_fields(self):
        row = run_replicate(small, 2)
        assert set(row) == {"replicate", "p_value", "f0", "rejected"}
        assert row["rejected"] == (row["p_value"] <= small.alpha)

    def test_workers_identical(self):
        a = run_scenario(small, workers=1).to_json()
        b = run_scenario(small, workers=2).to_json()
        assert a == b

    def test_timing_optional(self):
        rep = run_scenario(small)
        assert "wall_time" not in rep.to_dict()
        assert rep.to_dict(timing=True)["wall_time"] >= 0

    def test_csv(self):
        rows = run_scenario(small).csv_rows()
        assert rows[0] == "replicate,p_value,f0,rejected"
        assert len(rows) == 5

    def test_mr_and_euclidean(self):
        from dataclasses import replace

        for cfg in (replace(small, mr=True), replace(small, metric="euclidean"), replace(small, metric="euclidean", mr=True)):
            rep = run_scenario(cfg)
            assert len(rep.per_replicate) == 4

    def test_failures_abort(self):
        # negative weights make the spectral part fail in every replicate
        neg = GeneratorSpec("mvn-full", v=6, mu=-1.0, sigma2=0.01)
        cfg = ScenarioConfig(neg, neg, nA=3, nB=3, reps=3, perms=10)
        with pytest.raises(HarnessError, match="3 of 3 replicates failed"):
            run_scenario(cfg)

    def test_abs_weights_recover(self):
        neg = GeneratorSpec("mvn-full", v=6, mu=-1.0, sigma2=0.01)
        cfg = ScenarioConfig(neg, neg, nA=3, nB=3, reps=2, perms=10, abs_weights=True)
        assert len(run_scenario(cfg).per_replicate) == 2


class TestSweep:
    def test_grid_shape_and_pairing(self):
        table = kappa_sweep(small, harness.KAPPA_GRIDS["wide"])
        assert len(table) == 16
        zero = [c["report"] for c in table if c["kappa"] == 0.0]
        assert zero[0].per_replicate == zero[1].per_replicate

    def test_cell_matches_scenario(self):
        from dataclasses import replace

        table = kappa_sweep(small, [2.0], ["plus"])
        direct = run_scenario(replace(small, kappa=2.0, variant="plus"))
        got = [r["p_value"] for r in table[0]["report"].per_replicate]
        assert got == pytest.approx([r["p_value"] for r in direct.per_replicate], abs=1e-12)

    def test_serialisable(self):
        out = sweep_to_dict(kappa_sweep(small, [0.0, 1.0], ["product"]), small)
        json.dumps(out)
        assert [c["kappa"] for c in out["cells"]] == [0.0, 1.0]


class TestTheory:
    def test_null(self):
        out = theory_check_euclidean(v=5, nA=30, nB=30, reps=200, seed=1)
        assert out["mean_f"] == pytest.approx(1.0, abs=0.1)
        assert out["ks_pvalue"] > 0.001

    def test_shift_mean(self):
        out = theory_check_euclidean(v=5, nA=50, nB=50, reps=200, seed=2, shift_sq=0.2)
        assert out["expected_mean"] == pytest.approx(1 + 25 * 0.2 / 5)
        assert out["mean_f"] == pytest.approx(out["expected_mean"], rel=0.1)


def test_wilson():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert wilson_interval(0, 10)[0] == 0.0


def test_perm_seed_distinct():
    assert len({perm_seed(0, r) for r in range(1000)}) == 1000
    assert perm_seed(1, 0) != perm_seed(0, 1)
