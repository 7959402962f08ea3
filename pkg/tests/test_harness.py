"""End-to-end frame simulation, scoring, configs, and power search."""

import math
from dataclasses import replace

import numpy as np
import pytest

import risura.harness as harness
from risura.exceptions import ConfigError, DomainError
from risura.harness import (SystemConfig, TrialStats, apply_overrides,
                            avg_symbol_power, dbm_to_watt, eb_n0,
                            estimate_pupe, load_config, power_search,
                            run_trial, run_trials, save_config,
                            summarize_trials, watt_to_dbm)


def test_dbm_conversions():
    assert dbm_to_watt(30.0) == pytest.approx(1.0, rel=1e-12)
    assert dbm_to_watt(0.0) == pytest.approx(1e-3, rel=1e-12)
    assert dbm_to_watt(-95.0) == pytest.approx(10.0 ** (-12.5), rel=1e-12)
    assert watt_to_dbm(dbm_to_watt(17.3)) == pytest.approx(17.3, abs=1e-10)
    with pytest.raises(DomainError):
        watt_to_dbm(0.0)


def test_derived_sizes():
    cfg = SystemConfig()
    assert cfg.m == cfg.m1 * cfg.m2
    assert cfg.n_ris == cfg.n1 * cfg.n2
    assert cfg.b_total == cfg.b_p + cfg.b_c
    assert cfg.n_t == cfg.s_slots * (cfg.n_p + cfg.n_s * cfg.n_d)
    assert cfg.code_k == cfg.b_c + cfg.crc_width
    # the default frame: 4 slots of a 440-chip pilot block plus 10x256
    # spread data chips
    assert cfg.n_t == 4 * (440 + 10 * 256)


def test_t_max_effective():
    cfg = SystemConfig(k_a=8, s_slots=4, l_r=2, l_b=1, use_ris=True,
                       direct_link=False, t_max=0)
    assert cfg.t_max_effective == math.ceil(4 * 8 * 2 / 4)
    both = replace(cfg, direct_link=True)
    assert both.t_max_effective == math.ceil(4 * 8 * 3 / 4)
    assert replace(cfg, t_max=7).t_max_effective == 7


def test_validate_names_offending_field():
    with pytest.raises(ConfigError, match="n_p"):
        SystemConfig(n_p=0).validate()
    with pytest.raises(ConfigError, match="p_c"):
        SystemConfig(p_c=-1.0).validate()
    with pytest.raises(ConfigError, match="sigma_z2"):
        SystemConfig(sigma_z2=0.0).validate()
    with pytest.raises(ConfigError, match="n_d"):
        SystemConfig(n_d=200).validate()
    with pytest.raises(ConfigError, match="ris_strategy"):
        SystemConfig(ris_strategy="C7").validate()
    with pytest.raises(ConfigError, match="use_ris"):
        SystemConfig(use_ris=False, direct_link=False).validate()
    SystemConfig().validate()


def test_eb_n0_values():
    # one unit-power symbol per bit with unit noise: 0 dB
    out = eb_n0(1.0, 100, 100, 1.0)
    assert out.linear == pytest.approx(1.0)
    assert out.db == pytest.approx(0.0, abs=1e-12)
    # doubling the power adds 10 log10(2) dB
    assert (eb_n0(2.0, 100, 100, 1.0).db
            == pytest.approx(10.0 * math.log10(2.0), abs=1e-12))
    with pytest.raises(DomainError):
        eb_n0(1.0, 100, 0, 1.0)


def test_avg_symbol_power_mixes_phases():
    cfg = SystemConfig(p_p=8.0, p_c=2.0, n_p=100, n_s=1, n_d=100)
    assert avg_symbol_power(cfg) == pytest.approx(
        (8.0 * 100 + 2.0 * 100) / 200)


def test_summarize_trials_arithmetic():
    stats = [
        TrialStats(transmitted={b"a", b"b"}, decoded={b"a", b"b"},
                   missed=0, false_alarms=0),
        TrialStats(transmitted={b"c", b"d"}, decoded={b"c", b"x"},
                   missed=1, false_alarms=1),
    ]
    est = summarize_trials(stats, k_a=2)
    assert est.p_md == pytest.approx(1.0 / 4.0)
    assert est.p_fa == pytest.approx(1.0 / 4.0)
    assert est.pupe == pytest.approx(0.5)
    assert est.trials == 2
    empty = summarize_trials(
        [TrialStats(transmitted=set(), decoded=set(), missed=0,
                    false_alarms=0)], k_a=0)
    assert empty.pupe == 0.0 and empty.ci == 0.0


def _tiny_cfg(**kw):
    base = dict(m1=2, m2=2, n1=3, n2=3, k_a=1, s_slots=1, n_p=32, n_s=4,
                n_d=256, b_p=4, b_c=90, p_p=200.0, p_c=100.0,
                sigma_z2=dbm_to_watt(-95.0), l_g=2, l_r=2, l_b=1,
                alpha_pl_ris=2.0, alpha_pl_direct=3.5,
                ris_bs_distance=100.0, user_ris_range=(200.0, 300.0),
                user_bs_range=(250.0, 350.0), design="random",
                t_max=4, trials=4, seed=7)
    base.update(kw)
    return SystemConfig(**base)


def test_run_trial_no_users():
    cfg = _tiny_cfg(k_a=0)
    rng = np.random.default_rng(0)
    stats = run_trial(cfg, rng)
    assert stats.transmitted == set()
    assert stats.missed == 0
    # anything decoded out of pure noise is a false alarm, almost surely none
    assert stats.false_alarms == len(stats.decoded)


def test_run_trial_single_user_comfortable_power():
    cfg = _tiny_cfg()
    hits = 0
    for s in run_trials(cfg, trials=100, seed=123):
        hits += (s.missed == 0 and s.false_alarms == 0
                 and s.decoded == s.transmitted)
    assert hits >= 99


def test_run_trials_deterministic_replay():
    cfg = _tiny_cfg(k_a=2, trials=3)
    a = run_trials(cfg)
    b = run_trials(cfg)
    assert [(s.missed, s.false_alarms, sorted(s.decoded)) for s in a] == \
        [(s.missed, s.false_alarms, sorted(s.decoded)) for s in b]
    c = run_trials(cfg, seed=999)
    assert [s.transmitted for s in a] != [s.transmitted for s in c]


def test_estimate_pupe_counts():
    cfg = _tiny_cfg(k_a=2, trials=5)
    est = estimate_pupe(cfg)
    assert 0.0 <= est.pupe <= 2.0
    assert est.trials == 5
    assert len(est.per_trial) == 5


def test_power_search_with_synthetic_model(monkeypatch):
    # replace the estimator with a deterministic threshold model: PUPE is
    # 1 below the crossing power 0.4 and 0.01 above it
    def fake_estimate(cfg, trials=None, seed=None):
        pupe = 0.01 if cfg.p_c >= 0.4 else 1.0
        return harness.PupeEstimate(pupe=pupe, p_md=pupe, p_fa=0.0,
                                    ci=0.001, trials=10)

    monkeypatch.setattr(harness, "estimate_pupe", fake_estimate)
    cfg = _tiny_cfg()
    res = power_search(cfg, target_pupe=0.1, tol_db=0.05,
                       bracket=(1e-2, 1e2))
    assert res.status == "ok"
    assert 0.4 <= res.power <= 0.4 * 10 ** (0.05 / 10.0)
    assert res.pupe == 0.01
    # an impossible target reports both endpoints
    res = power_search(cfg, target_pupe=0.001, bracket=(1e-2, 1e2))
    assert res.status == "unreachable"
    assert res.pupe_lo == 1.0 and res.pupe_hi == 0.01
    # a target met already at the lower endpoint returns it directly
    res = power_search(cfg, target_pupe=1.0, bracket=(1e-2, 1e2))
    assert res.status == "ok" and res.power == 1e-2


def test_power_search_rejects_bad_inputs():
    cfg = _tiny_cfg()
    with pytest.raises(ConfigError):
        power_search(cfg, 0.1, param="nonsense")
    with pytest.raises(ConfigError):
        power_search(cfg, 0.1, bracket=(1.0, 0.5))


def test_config_file_roundtrip(tmp_path):
    cfg = _tiny_cfg(design="aevd", ris_strategy="C1", alpha1=0.031,
                    user_ris_range=(120.0, 180.5))
    path = tmp_path / "sys.cfg"
    save_config(cfg, path)
    loaded = load_config(path)
    assert loaded == cfg


def test_config_file_defaults_and_errors(tmp_path):
    empty = tmp_path / "empty.cfg"
    empty.write_text("# nothing but a comment\n\n")
    assert load_config(empty) == SystemConfig()
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_knob = 3\n")
    with pytest.raises(ConfigError, match="no_such_knob"):
        load_config(bad)
    malformed = tmp_path / "malformed.cfg"
    malformed.write_text("just words\n")
    with pytest.raises(ConfigError, match="malformed.cfg:1"):
        load_config(malformed)


def test_apply_overrides_types():
    cfg = apply_overrides(SystemConfig(), ["k_a=3", "p_c = 0.25",
                                           "use_ris = false",
                                           "direct_link=true",
                                           "user_ris_range = 10, 20"])
    assert cfg.k_a == 3 and cfg.p_c == 0.25
    assert cfg.use_ris is False and cfg.direct_link is True
    assert cfg.user_ris_range == (10.0, 20.0)
    with pytest.raises(ConfigError):
        apply_overrides(SystemConfig(), ["k_a"])
    with pytest.raises(ConfigError, match="k_a"):
        apply_overrides(SystemConfig(), ["k_a=three"])


def test_emit_results_float_repr(tmp_path):
    path = tmp_path / "out.csv"
    harness.emit_results(path, ["a", "b"], [[1, 0.30000000000000004],
                                            ["x", 2.5]])
    text = path.read_text()
    assert text == "a,b\n1,0.30000000000000004\nx,2.5\n"