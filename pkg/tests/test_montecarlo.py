import json
import time
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np
import pytest

import levysde.montecarlo as mc
from levysde.errors import NoProgressError, StudyFailedError
from levysde.montecarlo import (
    ExperimentConfig,
    bundled_config_path,
    emit_table,
    read_table_csv,
    run_replication,
    run_study,
    summarize,
    write_study_outputs,
)
from study_cache import bundled_config, study

SCHEMA = json.loads((Path(__file__).parents[1] / "docs" / "table_schema.json").read_text())
ROWS = ((10.0, 0.05), (50.0, 0.025), (100.0, 0.01))
COLUMNS = ("alpha", "gamma", "kappa(1)", "kappa(3)", "kappa(5)")


def _small(**kw):
    base = dict(model="cmodel", theta0=[0.5, 0.2], driver="nig", delta=5.0, grid=[[10.0, 0.05]],
                u=[1.0, 3.0], replications=4, base_seed=77)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_bundled_configs_load():
    for name, delta in (("table1", 1.0), ("table2", 5.0), ("table3", 10.0)):
        c = ExperimentConfig.from_toml(bundled_config_path(name))
        assert c.delta == delta and c.grid == ROWS and c.u == (1.0, 3.0, 5.0)
        assert c.replications == 200 and c.fine_factor == 10
    with pytest.raises(FileNotFoundError):
        bundled_config_path("table9")


def test_config_validation():
    with pytest.raises(ValueError):
        _small(grid=[[10.0, 0.03]])
    with pytest.raises(ValueError):
        _small(replications=0)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"model": "cmodel", "bogus": 1})
    with pytest.raises(ValueError):
        _small(theta0=[9.0, 0.2])
    with pytest.raises(ValueError):
        _small(driver="nig", delta=None)
    assert mc.grid_size(100.0, 0.01) == 10_000


def test_replication_is_deterministic():
    c = _small()
    a = run_replication(c, (10.0, 0.05), 2)
    b = run_replication(c, (10.0, 0.05), 2)
    assert a == b and a.seed == 79 and a.ok


def test_single_replication_study_matches_run_replication():
    c = _small(replications=1)
    table, recs = run_study(c, return_records=True)
    rec = run_replication(c, (10.0, 0.05), 0)
    assert recs[(10.0, 0.05)] == [rec]
    row = table.rows[0]
    assert row.mean["alpha"] == rec.theta_hat[0] and row.sd["alpha"] == 0.0


def test_replication_runtime_budget():
    c = replace(bundled_config(10.0), grid=((100.0, 0.01),))
    t0 = time.perf_counter()
    rec = run_replication(c, (100.0, 0.01), 0)
    assert time.perf_counter() - t0 < 2.0
    assert rec.ok


def test_study_is_deterministic_and_schedule_independent():
    c = _small(replications=6)
    t1 = run_study(c)
    t2 = run_study(c)
    t3 = run_study(c, workers=2)
    assert emit_table(t1, "json") == emit_table(t2, "json") == emit_table(t3, "json")


def test_identical_records_give_zero_sd():
    c = _small(replications=1)
    rec = run_replication(c, (10.0, 0.05), 0)
    table = summarize(c, {(10.0, 0.05): [rec] * 5})
    assert all(table.rows[0].sd[k] == 0.0 for k in table.columns)


def test_failures_are_itemised(monkeypatch):
    real = mc.fit_gqmle
    calls = {"n": 0}

    def flaky(model, obs, *a, **kw):
        calls["n"] += 1
        if calls["n"] == 3:
            raise NoProgressError("synthetic failure")
        return real(model, obs, *a, **kw)

    monkeypatch.setattr(mc, "fit_gqmle", flaky)
    table, recs = run_study(_small(replications=6), return_records=True)
    row = table.rows[0]
    assert row.failures == 1 and row.failed_indices == (2,)
    assert "synthetic failure" in recs[(10.0, 0.05)][2].error
    ok = [r.theta_hat[0] for r in recs[(10.0, 0.05)] if r.ok]
    assert row.mean["alpha"] == pytest.approx(np.mean(ok), rel=1e-15)


def test_study_fails_above_failure_cap(monkeypatch):
    def broken(*a, **kw):
        raise NoProgressError("always")

    monkeypatch.setattr(mc, "fit_gqmle", broken)
    with pytest.raises(StudyFailedError):
        run_study(_small(replications=5))


def test_emit_formats(tmp_path):
    table, recs = run_study(_small(replications=3), return_records=True)
    md = emit_table(table, "markdown").splitlines()
    assert len(md) == 3 and md[0].startswith("| T | h | alpha | gamma | kappa(1) | kappa(3) |")
    assert "(" in md[2]
    back = read_table_csv(emit_table(table, "csv"))
    assert len(back) == 1
    for c in table.columns:
        assert back[0][f"mean_{c}"] == table.rows[0].mean[c]
        assert back[0][f"sd_{c}"] == table.rows[0].sd[c]
    jsonschema.validate(json.loads(emit_table(table, "json")), SCHEMA)
    with pytest.raises(ValueError):
        emit_table(table, "xml")
    files = write_study_outputs(table, recs, tmp_path)
    assert sorted(p.name for p in files) == ["records.csv", "table.csv", "table.json", "table.md"]
    lines = (tmp_path / "records.csv").read_text().splitlines()
    assert len(lines) == 4 and lines[0].startswith("rep_index,seed,T,h,converged")


def test_plan_for_dry_run():
    plan = bundled_config(10.0).plan()
    assert [p["n"] for p in plan] == [200, 2000, 10_000]
    assert plan[0]["seeds"] == [20240000, 20240199]


# -- properties over the bundled studies (200 replications each) -------------

def test_bundled_table_json_validates():
    table, _ = study(10.0)
    jsonschema.validate(json.loads(emit_table(table, "json")), SCHEMA)
    assert all(r.failures <= 0.2 * r.replications for r in table.rows)


def test_table1_first_row_kappa_mean():
    table, _ = study(1.0)
    assert table.row(10.0, 0.05).mean["kappa(1)"] == pytest.approx(-0.4455, abs=0.01)


def test_table3_last_row_gamma():
    row = study(10.0)[0].row(100.0, 0.01)
    assert row.mean["gamma"] == pytest.approx(0.1994, abs=0.001)
    assert 0.5 * 0.0023 <= row.sd["gamma"] <= 1.5 * 0.0023


@pytest.mark.parametrize("delta", [1.0, 5.0, 10.0])
def test_precision_improves_with_horizon(delta):
    table, _ = study(delta)
    for c in COLUMNS:
        assert table.row(100.0, 0.01).sd[c] < table.row(10.0, 0.05).sd[c], c


@pytest.mark.parametrize("row", ROWS)
def test_scale_precision_improves_with_delta(row):
    assert study(10.0)[0].row(*row).sd["gamma"] < study(1.0)[0].row(*row).sd["gamma"]


@pytest.mark.parametrize("delta", [1.0, 5.0, 10.0])
def test_cumulant_precision_ordering(delta):
    table, _ = study(delta)
    for r in table.rows:
        assert r.sd["kappa(1)"] < r.sd["kappa(3)"] < r.sd["kappa(5)"]
