"""Command-line front end: simulate, sweep, search, bound, selftest."""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace

import numpy as np

from .bound import (BoundConfig, lemma1_rhs, p_coll, p_cons, pstop_bound,
                    pupe_bound)
from .channel import grid_steering_matrix
from .codec import (bpsk, crc_append, crc_remainder, polar_construct,
                    polar_encode, scl_decode_batch)
from .datadetect import mmse_detect, stack_signatures
from .exceptions import ConfigError
from .harness import (SystemConfig, apply_overrides, avg_symbol_power,
                      eb_n0, emit_results, estimate_pupe, load_config,
                      parse_config_value, power_search, run_trial,
                      summarize_trials, watt_to_dbm)
from .numerics import hermitian_evd, sample_cn
from .risdesign import error_proxy
from .sdp import sdp_solve


def _base_config(args):
    cfg = load_config(args.config) if args.config else SystemConfig()
    cfg = apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "trials", None) is not None:
        cfg = replace(cfg, trials=args.trials)
    cfg.validate()
    return cfg


def _floats(text, flag):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, "
                          f"got {text!r}")
    if not values:
        raise ConfigError(f"{flag} expects at least one number")
    return values


def _cmd_simulate(args):
    cfg = _base_config(args)
    est = estimate_pupe(cfg)
    power = avg_symbol_power(cfg)
    energy = eb_n0(power, cfg.n_t, cfg.b_total, cfg.sigma_z2)
    print(f"trials={est.trials} pupe={est.pupe:.4f} "
          f"p_md={est.p_md:.4f} p_fa={est.p_fa:.4f} ci={est.ci:.4f} "
          f"eb_n0_db={energy.db:.2f}")
    if args.out:
        rows = [(t, m, f, d) for t, (m, f, d) in enumerate(est.per_trial)]
        emit_results(args.out, ["trial", "missed", "false_alarms", "decoded"],
                     rows)
        print(f"wrote {args.out}")
    return 0


def _cmd_sweep(args):
    cfg = _base_config(args)
    rows = []
    for power in _floats(args.powers, "--powers"):
        swept = replace(cfg, **{args.param: power})
        est = estimate_pupe(swept)
        energy = eb_n0(avg_symbol_power(swept), cfg.n_t, cfg.b_total,
                       cfg.sigma_z2)
        rows.append((power, watt_to_dbm(power), energy.db, est.pupe,
                     est.p_md, est.p_fa, est.ci))
        print(f"{args.param}={power:g} pupe={est.pupe:.4f} ci={est.ci:.4f}")
    header = [args.param + "_watt", args.param + "_dbm", "eb_n0_db",
              "pupe", "p_md", "p_fa", "ci"]
    if args.out:
        emit_results(args.out, header, rows)
        print(f"wrote {args.out}")
    return 0


def _cmd_search(args):
    cfg = _base_config(args)
    bracket = _floats(args.bracket, "--bracket")
    if len(bracket) != 2 or bracket[0] >= bracket[1]:
        raise ConfigError("--bracket expects lo,hi with lo < hi")
    lo, hi = bracket
    res = power_search(cfg, args.target, tol_db=args.tol_db,
                       bracket=(lo, hi), param=args.param)
    if res.status == "ok":
        print(f"status=ok {args.param}={res.power:g} "
              f"({watt_to_dbm(res.power):.2f} dBm) pupe={res.pupe:.4f} "
              f"ci={res.ci:.4f}")
    else:
        print(f"status=unreachable pupe_lo={res.pupe_lo:.4f} "
              f"pupe_hi={res.pupe_hi:.4f} at bracket top {hi:g}")
    if args.out:
        emit_results(args.out, ["power_watt", "pupe", "ci"], res.history)
        print(f"wrote {args.out}")
    return 0 if res.status == "ok" else 1


def _bound_config(args):
    cfg = BoundConfig()
    updates = {}
    names = {f.name for f in fields(BoundConfig)}
    for pair in args.overrides:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        name, text = pair.split("=", 1)
        name = name.strip()
        if name not in names:
            raise ConfigError(f"unknown bound config key: {name}")
        updates[name] = parse_config_value(name, text,
                                           type(getattr(cfg, name)))
    return replace(cfg, **updates)


def _cmd_bound(args):
    cfg = _bound_config(args)
    powers = (_floats(args.powers, "--powers") if args.powers
              else [cfg.p_prime])
    rows = []
    for p_prime in powers:
        point = replace(cfg, p_prime=p_prime)
        rng = np.random.default_rng(args.seed)
        res = pupe_bound(point, rng)
        rows.append((point.power, p_prime, res.p_coll, res.p_cons,
                     res.p_mis, res.eps))
        print(f"p_prime={p_prime:g} eps={res.eps:.4g} "
              f"(coll={res.p_coll:.3g} cons={res.p_cons:.3g} "
              f"mis={res.p_mis:.3g})")
    if args.out:
        emit_results(args.out, ["power", "p_prime", "p_coll", "p_cons",
                                "p_mis", "eps"], rows)
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# selftest battery
# ---------------------------------------------------------------------------

def _selftest_rows(seed):
    """Deterministic smoke checks across every stage; (name, value, status)."""
    rows = []

    def record(name, value, ok):
        rows.append((name, value, "pass" if ok else "fail"))

    # CRC against the classic check vector "123456789"
    data = np.unpackbits(np.frombuffer(b"123456789", dtype=np.uint8))
    crc = int("".join(map(str, crc_remainder(data))), 2)
    record("crc_check_vector", hex(crc), crc == 0x31C3)

    # codec round trip and a tiny AWGN run
    rng = np.random.default_rng(seed)
    code = polar_construct(256, 106)
    msgs = rng.integers(0, 2, (20, 90)).astype(np.uint8)
    clean = bpsk(polar_encode(crc_append(msgs), code))
    payloads, ok, _ = scl_decode_batch(clean * 50.0, code)
    record("codec_roundtrip", f"{int(ok.sum())}/20",
           bool(ok.all()) and np.array_equal(payloads, msgs))

    ebn0 = 10.0 ** (6.0 / 10.0)
    sigma2 = 1.0 / (2.0 * (106.0 / 256.0) * ebn0)
    noisy = clean + rng.normal(scale=np.sqrt(sigma2), size=clean.shape)
    _, ok, _ = scl_decode_batch(2.0 * noisy / sigma2, code)
    bler = 1.0 - ok.mean()
    record("codec_awgn_bler_6db", repr(float(bler)), bler <= 0.10)

    # steering matrix unitarity
    Phi = grid_steering_matrix(4, 4)
    resid = float(np.abs(Phi.conj().T @ Phi - np.eye(16)).max())
    record("steering_unitary_residual", repr(resid), resid < 1e-10)

    # Hermitian EVD reconstruction
    A = sample_cn(1.0, rng, (8, 8))
    H = A + A.conj().T
    evals, evecs = hermitian_evd(H)
    resid = float(np.abs(evecs @ np.diag(evals) @ evecs.conj().T - H).max())
    record("evd_residual", repr(resid), resid < 1e-9)

    # rank-one SDP with known optimum 2 + 2*rho
    rho = 0.375
    C = np.array([[1.0, rho], [rho, 1.0]], dtype=complex)
    _, obj, _ = sdp_solve(C)
    record("sdp_two_by_two", repr(float(obj)), abs(obj - (2 + 2 * rho)) < 1e-3)

    # error proxy is monotone decreasing in the SINR proxy
    grid = [error_proxy(x, 106, 256) for x in np.linspace(0.05, 0.9, 18)]
    record("proxy_monotone", repr(float(grid[0] - grid[-1])),
           all(a >= b - 1e-12 for a, b in zip(grid, grid[1:])))

    # Lemma-1 closed form vs Monte-Carlo on a fixed instance
    A = np.array([[1.0, 0.2], [0.2, 0.8]], dtype=complex)
    Bm = np.array([[0.3, 0.05], [0.05, 0.2]], dtype=complex)
    r = np.array([0.4 - 0.1j, 0.2j])
    closed = lemma1_rhs(A, Bm, r)
    cf = np.linalg.cholesky(A)
    draws = (cf @ sample_cn(1.0, rng, (2, 20000))).T
    vals = np.exp(np.einsum("ij,jk,ik->i", draws.conj(), Bm, draws).real
                  + (draws @ r).real)
    mc = float(vals.mean())
    rse = float(vals.std() / np.sqrt(len(vals))) / mc
    rel = float(abs(mc - closed.real) / abs(closed.real))
    record("lemma1_mc_rel_err", repr(rel), rel < 4 * max(rse, 1e-3))

    # MMSE residual factors live strictly inside (0, 1)
    T_list = [sample_cn(1.0, rng, (4, 3)) for _ in range(3)]
    Tbar = stack_signatures(T_list)
    _, delta = mmse_detect(sample_cn(1.0, rng, 12), Tbar, 0.5)
    record("mmse_delta_range", repr(float(delta.min())),
           bool((delta > 0).all() and (delta < 1).all()))

    # closed-form stopping bounds
    record("pcoll_pair", repr(p_coll(2, 1)), p_coll(2, 1) == 0.5)
    cons = p_cons(1, 1, 1.0, 1.0)
    record("pcons_exp_form", repr(cons), abs(cons - np.exp(-1)) < 1e-12)
    cfg_b = BoundConfig(k_a=2, l_r=1, mc_count=2, n=64, rho_options=(0,))
    gains = np.array([0.1 + 0.05j, 0.2 - 0.1j])
    sigma_g = np.linspace(0.1, 1.0, cfg_b.m)
    stop = pstop_bound(1, gains, sigma_g, cfg_b)
    record("pstop_rho_zero", repr(stop), stop == 1.0)

    # one tiny end-to-end frame
    cfg = SystemConfig(m1=3, m2=3, n1=3, n2=3, k_a=2, s_slots=2, n_p=48,
                       n_s=2, n_d=64, b_p=4, b_c=40, p_p=5e3, p_c=5e3,
                       l_g=1, l_r=1, t_iter=3, t_sdr=10, list_size=8,
                       seed=seed, trials=1)
    stats = run_trial(cfg, np.random.default_rng(seed))
    est = summarize_trials([stats], cfg.k_a)
    record("e2e_smoke_pupe", repr(float(est.pupe)), 0.0 <= est.pupe <= 1.0)

    return rows


def _cmd_selftest(args):
    rows = _selftest_rows(args.seed)
    failed = [name for name, _, status in rows if status == "fail"]
    for name, value, status in rows:
        print(f"{status:>4}  {name} = {value}")
    if args.out:
        emit_results(args.out, ["check", "value", "status"], rows)
        print(f"wrote {args.out}")
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    return 1 if failed else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="risura",
        description="Link-level simulator for surface-aided unsourced "
                    "random access")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=True):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--seed", type=int, help="master seed")
        if trials:
            p.add_argument("--trials", type=int, help="Monte-Carlo trials")
        p.add_argument("--out", help="CSV output path")

    p_sim = sub.add_parser("simulate", help="estimate PUPE at a fixed config")
    common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="PUPE over a power grid")
    common(p_sweep)
    p_sweep.add_argument("--param", default="p_c", help="config field to sweep")
    p_sweep.add_argument("--powers", required=True,
                         help="comma-separated linear Watts")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_search = sub.add_parser("search",
                              help="bisect for the power meeting a PUPE target")
    common(p_search)
    p_search.add_argument("--target", type=float, required=True)
    p_search.add_argument("--bracket", default="1e-2,1e3",
                          help="lo,hi linear Watts")
    p_search.add_argument("--tol-db", type=float, default=0.5, dest="tol_db")
    p_search.add_argument("--param", default="p_c")
    p_search.set_defaults(func=_cmd_search)

    p_bound = sub.add_parser("bound", help="achievability bound sweep")
    p_bound.add_argument("--set", action="append", default=[],
                         dest="overrides", metavar="KEY=VALUE")
    p_bound.add_argument("--powers", help="comma-separated P' values")
    p_bound.add_argument("--seed", type=int, default=0)
    p_bound.add_argument("--out", help="CSV output path")
    p_bound.set_defaults(func=_cmd_bound)

    p_self = sub.add_parser("selftest",
                            help="deterministic smoke checks, CSV output")
    p_self.add_argument("--seed", type=int, default=0)
    p_self.add_argument("--out", help="CSV output path")
    p_self.set_defaults(func=_cmd_selftest)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
