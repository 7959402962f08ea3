"""Acceptance battery: one numbered check per release criterion.

Every test prints a ``[criterion N] PASS`` line with its measured margin
(visible under ``pytest -s``); the stated thresholds are asserted directly,
so a red test is a failed criterion.  Scenarios are desk-scale and seeded —
reruns are deterministic.
"""

import math
import time
from dataclasses import replace

import numpy as np

from risura.bound import (BoundConfig, best_qpsk_point, eps_lambda,
                          lemma1_rhs, p_coll, p_cons, pupe_bound)
from risura.channel import (angle_grid, assemble_user_ris, rayleigh_ris_bs,
                            sample_paths)
from risura.cli import main as cli_main
from risura.codec import bpsk, crc_append, polar_construct, polar_encode, \
    scl_decode_batch
from risura.datadetect import mmse_detect
from risura.harness import SystemConfig, dbm_to_watt, estimate_pupe, \
    power_search
from risura.jdce import jdce_run
from risura.numerics import sample_cn
from risura.risdesign import aevd, asdr, design_cost, make_problem, \
    random_phases
from risura.transmitter import gen_codebooks

SZ2 = dbm_to_watt(-95.0)


def test_criterion_01_exponential_moment_closed_form_vs_monte_carlo():
    # E[exp(a^H B a + Re(r a))] for a ~ CN(0, A): sample the expectation
    # directly and compare with the closed form, ten instances, 1e6 draws.
    t0 = time.time()
    rng = np.random.default_rng(0)
    n_draws = 10 ** 6
    worst = 0.0
    for inst in range(10):
        k = inst % 4 + 1
        X = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        A = X @ X.conj().T / (2.0 * k) + 0.1 * np.eye(k)
        Y = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        Bm = 0.3 * (Y + Y.conj().T) / 2.0
        scale = max(np.linalg.eigvals(A @ Bm).real, default=0.0)
        if scale >= 0.4:        # keep exp moments comfortably light-tailed
            Bm = Bm * (0.35 / scale)
        r = 0.5 * (rng.normal(size=k) + 1j * rng.normal(size=k))
        closed = lemma1_rhs(A, Bm, r)
        L = np.linalg.cholesky(A)
        Z = rng.normal(size=(n_draws, k)) + 1j * rng.normal(size=(n_draws, k))
        a = Z @ (L.T / np.sqrt(2.0))    # rows ~ CN(0, A)
        quad = np.einsum("ij,jl,il->i", a.conj(), Bm, a).real
        samples = np.exp(quad + (a @ r).real)
        mean = samples.mean()
        rse = samples.std(ddof=1) / (np.sqrt(n_draws) * mean)
        dev = abs(closed - mean) / (rse * mean)
        worst = max(worst, dev)
        assert dev <= 3.0, f"instance {inst} (K={k}): {dev:.2f} rse"
    elapsed = time.time() - t0
    assert elapsed <= 120.0
    print(f"[criterion 1] PASS — worst deviation {worst:.2f} rse "
          f"(limit 3), {elapsed:.0f}s")


def test_criterion_02_planted_pilot_and_path_recovery():
    # one user, one cascaded path on the detector grid, 4x4 arrays on both
    # ends, transmit power rescaled so each realization sits at 20 dB pilot
    # SNR; the detector must name the right (pilot, angle) and the channel
    # estimate must land within -20 dB NMSE.
    t0 = time.time()
    rng = np.random.default_rng(42)
    m1 = m2 = n1 = n2 = 4
    M, N = m1 * m2, n1 * n2
    n_p, sigma_z2 = 64, 1.0
    trials, hits, nmses = 100, 0, []
    for _ in range(trials):
        books = gen_codebooks(b_p=6, n_s=1, n_p=n_p, n_elements=N,
                              s_slots=1, rng=rng)
        G = rayleigh_ris_bs(M, N, 1e-3, 2.3, 100.0, rng)
        paths = sample_paths(1, 250.0, angle_grid(n1), angle_grid(n2),
                             1e-3, 2.3, rng)
        h = assemble_user_ris(paths, n1, n2)
        pilot_idx = int(rng.integers(books.P.shape[0]))
        p_row = books.P[pilot_idx]
        W = books.W_ps[0]
        sig = (G * h[None, :]) @ (W * p_row[None, :])
        p_tx = 100.0 * M * n_p * sigma_z2 / np.linalg.norm(sig) ** 2
        Y = np.sqrt(p_tx) * sig + sample_cn(sigma_z2, rng, (M, n_p))
        dets, est = jdce_run(Y, G, W, books.P, p_tx, sigma_z2,
                             alpha1=0.01, t_max=6, n1=n1, n2=n2)
        if dets and dets[0].pilot == pilot_idx \
                and np.isclose(dets[0].phi, paths[0].phi) \
                and np.isclose(dets[0].psi, paths[0].psi):
            hits += 1
        if pilot_idx in est.h_hat:
            h_hat = est.h_hat[pilot_idx]
            nmses.append(np.linalg.norm(h_hat - h) ** 2
                         / np.linalg.norm(h) ** 2)
    elapsed = time.time() - t0
    nmse_db = 10.0 * np.log10(np.mean(nmses))
    assert hits >= 99, f"detection {hits}/{trials}"
    assert nmse_db <= -20.0, f"NMSE {nmse_db:.1f} dB"
    assert elapsed <= 300.0
    print(f"[criterion 2] PASS — detection {hits}/{trials}, mean NMSE "
          f"{nmse_db:.1f} dB (limit -20), {elapsed:.0f}s")


def _design_instance(p_c, users, rng, n1=4, n2=4, n_s=4, **kwargs):
    G = rayleigh_ris_bs(16, n1 * n2, 1e-3, 2.0, 100.0, rng)
    hs, bs = [], []
    for _ in range(users):
        paths = sample_paths(2, 250.0, angle_grid(n1), angle_grid(n2),
                             1e-3, 2.0, rng)
        hs.append(assemble_user_ris(paths, n1, n2))
        b = rng.standard_normal(n_s) + 1j * rng.standard_normal(n_s)
        bs.append(b * np.sqrt(n_s) / np.linalg.norm(b))
    return make_problem(G, hs, bs, p_c, SZ2, strategy="C0", **kwargs)


def test_criterion_03_designed_phases_beat_random_and_sdr_tracks_evd():
    # four users over two slots (two per design problem), exact channel
    # knowledge: the adaptive eigen design must beat a random surface on the
    # summed error proxy in >= 95/100 paired draws, and the relaxation-based
    # solver must land within 20% of its cost on single-user problems.
    wins = 0
    for t in range(100):
        cost_rand = cost_evd = 0.0
        for slot, off in ((0, 10_000), (1, 20_000)):
            prob = _design_instance(0.3, 2, np.random.default_rng(off + t),
                                    t_iter=8, t_sdr=30)
            w_rand = random_phases(prob.dim,
                                   np.random.default_rng(30_000 + 2 * t + slot))
            cost_rand += design_cost(prob, w_rand)
            sol = aevd(prob, np.random.default_rng(40_000 + 2 * t + slot))
            cost_evd += design_cost(prob, sol.bare)
        wins += cost_evd < cost_rand
    assert wins >= 95, f"designed surface won only {wins}/100"

    costs_sdr, costs_evd = [], []
    for t in range(30):
        prob = _design_instance(0.1, 1, np.random.default_rng(50_000 + t),
                                t_iter=20, t_sdr=160)
        costs_sdr.append(design_cost(
            prob, asdr(prob, np.random.default_rng(60_000 + t)).bare))
        costs_evd.append(design_cost(
            prob, aevd(prob, np.random.default_rng(60_000 + t)).bare))
    mean_sdr, mean_evd = np.mean(costs_sdr), np.mean(costs_evd)
    gap = abs(mean_sdr - mean_evd)
    assert gap <= 0.2 * mean_evd + 1e-3, \
        f"mean costs {mean_sdr:.4f} vs {mean_evd:.4f}"
    print(f"[criterion 3] PASS — designed-vs-random wins {wins}/100, "
          f"single-user mean costs {mean_sdr:.4f} vs {mean_evd:.4f}")


def test_criterion_04_two_element_design_matches_grid_optimum():
    # with only two surface elements the whole phase plane can be scanned:
    # the solver's final cost must sit within 5% of the 64x64 grid optimum.
    thetas = 2.0 * np.pi * np.arange(64) / 64
    ok = 0
    for t in range(100):
        prob = _design_instance(0.3, 1, np.random.default_rng(4000 + t),
                                n1=2, n2=1, t_iter=8, t_sdr=30)
        cost = design_cost(
            prob, asdr(prob, np.random.default_rng(5000 + t)).bare)
        best = np.inf
        for a in thetas:
            for b in thetas:
                best = min(best, design_cost(
                    prob, np.exp(1j * np.array([a, b]))))
        ok += cost <= 1.05 * best + 1e-9
    assert ok >= 90, f"matched the grid optimum in only {ok}/100"
    print(f"[criterion 4] PASS — within 5% of the exhaustive optimum "
          f"in {ok}/100 trials")


def test_criterion_05_codec_identity_and_awgn_block_errors():
    # noiseless round trip on 1000 random 90-bit messages, then block error
    # rate <= 1e-2 over 1e4 AWGN blocks at 6 dB Eb/N0 (rate 106/256).
    code = polar_construct(256, 106)
    rng = np.random.default_rng(5)
    msgs = rng.integers(0, 2, size=(1000, 90))
    clean = np.empty((1000, 256))
    for i, m in enumerate(msgs):
        clean[i] = bpsk(polar_encode(crc_append(m), code))
    payload, ok, _ = scl_decode_batch(20.0 * clean, code, list_size=32)
    assert ok.all() and (payload == msgs).all()

    blocks = 10 ** 4
    rate = 106.0 / 256.0
    sigma2 = 1.0 / (2.0 * rate * 10.0 ** 0.6)
    msgs = rng.integers(0, 2, size=(blocks, 90))
    x = np.empty((blocks, 256))
    for i, m in enumerate(msgs):
        x[i] = bpsk(polar_encode(crc_append(m), code))
    errors = 0
    for lo in range(0, blocks, 1000):
        sl = slice(lo, lo + 1000)
        y = x[sl] + rng.normal(scale=np.sqrt(sigma2), size=(1000, 256))
        payload, ok, _ = scl_decode_batch(2.0 * y / sigma2, code,
                                          list_size=32)
        errors += int(np.sum(~ok | np.any(payload != msgs[sl], axis=1)))
    bler = errors / blocks
    assert bler <= 1e-2, f"BLER {bler:.4f}"
    print(f"[criterion 5] PASS — noiseless identity 1000/1000, "
          f"AWGN BLER {bler:.4f} (limit 0.01)")


def test_criterion_06_mmse_residual_factors():
    # residual factors must live strictly inside (0,1) across wildly scaled
    # instances, and collapse to the scalar closed form for a single user.
    rng = np.random.default_rng(6)
    for _ in range(100):
        dim = int(rng.integers(4, 25))
        k = int(rng.integers(1, dim + 1))
        scale = 10.0 ** rng.uniform(-2.0, 2.0)
        T = scale * (rng.normal(size=(dim, k))
                     + 1j * rng.normal(size=(dim, k))) / np.sqrt(2.0)
        sigma2 = 10.0 ** rng.uniform(-2.0, 1.0)
        y = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        _, delta = mmse_detect(y, T, sigma2)
        assert np.all(delta > 0.0) and np.all(delta < 1.0)
    worst = 0.0
    for _ in range(100):
        dim = int(rng.integers(2, 40))
        t = rng.normal(size=(dim, 1)) + 1j * rng.normal(size=(dim, 1))
        sigma2 = 10.0 ** rng.uniform(-2.0, 1.0)
        y = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        _, delta = mmse_detect(y, t, sigma2)
        nt = np.linalg.norm(t) ** 2
        worst = max(worst, abs((1.0 - delta[0]) - nt / (nt + sigma2)))
    assert worst <= 1e-10, f"closed-form deviation {worst:.2e}"
    print(f"[criterion 6] PASS — factors in (0,1) on 100 instances, "
          f"single-user deviation {worst:.1e} (limit 1e-10)")


def test_criterion_07_power_search_meets_target_pupe():
    # full receive chain at desk scale (16 antennas, 16 elements, 8 users
    # over 4 slots, blocked direct link): the bisection search must find a
    # data power meeting PUPE <= 0.1, and the paired-seed power sweep must
    # be nonincreasing within the pooled confidence slack.
    t0 = time.time()
    cfg = SystemConfig(m1=4, m2=4, n1=4, n2=4, k_a=8, s_slots=4,
                       n_p=128, n_s=4, n_d=256, b_p=10, p_p=50.0,
                       design="aevd", ris_strategy="C0",
                       use_ris=True, direct_link=False)
    res = power_search(cfg, 0.1, bracket=(0.05, 20.0), trials=200, seed=11)
    assert res.status == "ok", f"search failed: {res}"
    assert res.pupe <= 0.1

    sweep = [estimate_pupe(replace(cfg, p_c=p), trials=100, seed=13)
             for p in (0.25, 0.5, 1.0, 2.0, 4.0)]
    for lo_est, hi_est in zip(sweep, sweep[1:]):
        assert hi_est.pupe <= lo_est.pupe + lo_est.ci + hi_est.ci, \
            [(e.pupe, e.ci) for e in sweep]
    elapsed = time.time() - t0
    assert elapsed <= 3600.0
    print(f"[criterion 7] PASS — P_c* = {res.power:.3f} W at PUPE "
          f"{res.pupe:.3f} ± {res.ci:.3f}, sweep "
          f"{[round(e.pupe, 3) for e in sweep]}, {elapsed:.0f}s")


def test_criterion_08_surface_lowers_required_power():
    # direct link present: with the surface the required data power must
    # not exceed the no-surface requirement at both path-loss exponents,
    # and the saving must widen when the direct link is fully blocked.
    t0 = time.time()
    base = SystemConfig(m1=4, m2=4, n1=6, n2=6, k_a=2, s_slots=2,
                        n_p=128, n_s=8, n_d=256, b_p=10,
                        l_g=1, l_r=1, l_b=1, alpha_pl_ris=2.0,
                        ris_strategy="C0", direct_link=True,
                        t_max=4, p_p=10.0)
    bracket = (1e-4, 0.3)
    required = {}
    for alpha in (3.5, float("inf")):
        for ris in (True, False):
            cfg = replace(base, use_ris=ris, alpha_pl_direct=alpha,
                          design="aevd" if ris else "random")
            res = power_search(cfg, 0.1, bracket=bracket, trials=100,
                               seed=5)
            # an unreachable arm needs more than the bracket top; use that
            # top as a conservative lower bound on its requirement
            required[(alpha, ris)] = \
                res.power if res.status == "ok" else bracket[1]
            if ris:
                assert res.status == "ok", f"alpha={alpha}: {res}"
    for alpha in (3.5, float("inf")):
        assert required[(alpha, True)] <= required[(alpha, False)], \
            f"alpha={alpha}: {required}"
    gap_35 = required[(3.5, False)] / required[(3.5, True)]
    gap_inf = required[(float("inf"), False)] / required[(float("inf"), True)]
    assert gap_inf > gap_35, f"gaps {gap_35:.2f} vs {gap_inf:.2f}"
    elapsed = time.time() - t0
    print(f"[criterion 8] PASS — required W {required}, saving x{gap_35:.1f} "
          f"(direct strong) vs x{gap_inf:.1f} (blocked), {elapsed:.0f}s")


def test_criterion_09_bound_closed_forms_and_power_trend():
    # frozen closed-form values, the lambda=0 endpoint, range checks, and a
    # paired-realization sweep: the bound must fall as codebook power grows.
    assert p_coll(2, 1) == 0.5
    assert p_coll(3, 2) == 0.75
    assert math.isclose(p_cons(2, 1, 0.2, 0.2), 2.0 * math.exp(-1.0),
                        rel_tol=1e-12)
    mu = 0.2 + 0.05j
    assert eps_lambda(0.0, 0.04, mu, best_qpsk_point(mu),
                      np.array([0.5, 1.0]), 1e-2, 50) == 1.0

    cfg0 = BoundConfig(k_a=2, b_bits=100, n=2560, m1=4, m2=4, n1=4, n2=4,
                       power=0.1, l_g=1, l_r=1, mc_count=100,
                       lambda_points=32, l0=1.0, alpha_pl=2.0,
                       ris_bs_distance=5.0, user_dist_range=(10.0, 15.0),
                       sigma_z2=1e-3)
    eps = []
    for p_prime in (3e-4, 1e-3, 3e-3, 1e-2, 3e-2):
        res = pupe_bound(replace(cfg0, p_prime=p_prime),
                         np.random.default_rng(2025))
        for value in (res.p_coll, res.p_cons, res.p_mis, res.eps):
            assert 0.0 <= value <= 1.0
        eps.append(res.eps)
    assert all(b < a for a, b in zip(eps, eps[1:])), eps
    print(f"[criterion 9] PASS — closed forms exact, bound sweep "
          f"{[round(e, 3) for e in eps]} strictly decreasing")


def test_criterion_10_selftest_reruns_byte_identical(tmp_path):
    out1, out2 = tmp_path / "first.csv", tmp_path / "second.csv"
    assert cli_main(["selftest", "--seed", "0", "--out", str(out1)]) == 0
    assert cli_main(["selftest", "--seed", "0", "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    print("[criterion 10] PASS — selftest reruns byte-identical")
