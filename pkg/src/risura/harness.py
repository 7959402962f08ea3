"""Scenario configuration, Monte-Carlo trials, PUPE metrics, and power search.

One trial runs the whole chain: draw codebooks and channels, put every
active user's pilot and data on the air, detect pilots and estimate
channels per slot, design the surface phases from those estimates, then
run MMSE-SIC data detection and score decoded messages against the
transmitted set.  Aggregation follows the per-user error convention
P_e = p_md + p_fa.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .channel import (angle_grid, assemble_ris_bs, assemble_user_bs,
                      assemble_user_ris, sample_paths)
from .codec import polar_construct
from .datadetect import build_Ti, data_phase
from .exceptions import ConfigError, DomainError
from .jdce import jdce_run, jdce_run_direct
from .numerics import sample_cn, vec
from .risdesign import aevd, asdr, make_problem, random_phases
from .transmitter import (encode_user, gen_codebooks, index_to_bits,
                          simulate_pilot_slot)


def dbm_to_watt(x):
    """Exact dBm to Watt conversion, 10^((x-30)/10)."""
    return 10.0 ** ((x - 30.0) / 10.0)


def watt_to_dbm(p):
    if p <= 0:
        raise DomainError("power must be positive to convert to dBm")
    return 10.0 * math.log10(p) + 30.0


@dataclass
class SystemConfig:
    """Full scenario description with the reference defaults.

    Powers are linear Watts.  ``t_max = 0`` lets the detector budget be
    derived from the expected path load; ``alpha_pl_direct = inf`` models a
    fully obstructed direct link.
    """

    m1: int = 8
    m2: int = 8
    n1: int = 8
    n2: int = 8
    spacing: float = 0.5
    k_a: int = 8
    s_slots: int = 4
    n_p: int = 440
    n_s: int = 10
    n_d: int = 256
    b_p: int = 10
    b_c: int = 90
    crc_width: int = 16
    p_p: float = 10.0
    p_c: float = 10.0
    sigma_z2: float = dbm_to_watt(-95.0)
    l_g: int = 2
    l_r: int = 2
    l_b: int = 1
    l0: float = 1e-3
    alpha_pl_ris: float = 2.3
    alpha_pl_direct: float = 3.5
    ris_bs_distance: float = 100.0
    user_ris_range: tuple = (200.0, 300.0)
    user_bs_range: tuple = (250.0, 350.0)
    ris_strategy: str = "C0"
    design: str = "aevd"
    use_ris: bool = True
    direct_link: bool = False
    alpha1: float = 0.01
    alpha_bar: float = 0.53
    alpha2: float = 1e-4
    t_iter: int = 10
    t_sdr: int = 50
    t_max: int = 0
    list_size: int = 32
    design_snr_db: float = 2.0
    seed: int = 1234
    trials: int = 100

    @property
    def m(self):
        return self.m1 * self.m2

    @property
    def n_ris(self):
        return self.n1 * self.n2

    @property
    def b_total(self):
        return self.b_p + self.b_c

    @property
    def n_t(self):
        return self.s_slots * (self.n_p + self.n_s * self.n_d)

    @property
    def code_k(self):
        return self.b_c + self.crc_width

    @property
    def t_max_effective(self):
        if self.t_max > 0:
            return self.t_max
        per_user = (self.l_r if self.use_ris else 0) + \
            (self.l_b if self.direct_link else 0)
        return max(1, math.ceil(4.0 * max(self.k_a, 1) * per_user / self.s_slots))

    def validate(self):
        for name in ("m1", "m2", "n1", "n2", "s_slots", "n_p", "n_s", "n_d",
                     "b_c", "l_g", "l_r", "l_b", "t_iter", "t_sdr",
                     "list_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        for name in ("k_a", "b_p", "t_max", "crc_width"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("p_p", "p_c"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.sigma_z2 <= 0:
            raise ConfigError("sigma_z2 must be positive")
        if self.n_d & (self.n_d - 1):
            raise ConfigError("n_d must be a power of two")
        if self.code_k > self.n_d:
            raise ConfigError("b_c + crc_width exceeds the block length n_d")
        if self.ris_strategy not in ("C0", "C1"):
            raise ConfigError(
                f"ris_strategy must be C0 or C1, got {self.ris_strategy!r}")
        if self.design not in ("asdr", "aevd", "random"):
            raise ConfigError(
                f"design must be asdr, aevd or random, got {self.design!r}")
        if not self.use_ris and not self.direct_link:
            raise ConfigError("use_ris=false requires direct_link=true")
        for name in ("user_ris_range", "user_bs_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 < lo <= hi")
        if self.ris_bs_distance <= 0:
            raise ConfigError("ris_bs_distance must be positive")
        return self


@dataclass
class TrialStats:
    """Outcome of one frame: message sets and the error counts."""

    transmitted: set
    decoded: set
    missed: int
    false_alarms: int


_CODE_CACHE = {}


def _code_for(cfg):
    key = (cfg.n_d, cfg.code_k, cfg.design_snr_db)
    if key not in _CODE_CACHE:
        _CODE_CACHE[key] = polar_construct(cfg.n_d, cfg.code_k,
                                           design_snr_db=cfg.design_snr_db)
    return _CODE_CACHE[key]


def _user_channels(cfg, rng):
    """Draw one user's surface-link row and direct-link column."""
    if cfg.use_ris:
        dist = rng.uniform(*cfg.user_ris_range)
        paths = sample_paths(cfg.l_r, dist, angle_grid(cfg.n1),
                             angle_grid(cfg.n2), cfg.l0, cfg.alpha_pl_ris, rng)
        h = assemble_user_ris(paths, cfg.n1, cfg.n2, cfg.spacing)
    else:
        h = np.zeros(cfg.n_ris, dtype=complex)
    if cfg.direct_link:
        dist = rng.uniform(*cfg.user_bs_range)
        paths = sample_paths(cfg.l_b, dist, angle_grid(cfg.m1),
                             angle_grid(cfg.m2), cfg.l0,
                             cfg.alpha_pl_direct, rng)
        d = assemble_user_bs(paths, cfg.m1, cfg.m2, cfg.spacing)
    else:
        d = np.zeros(cfg.m, dtype=complex)
    return h, d


def _design_slot(cfg, G, estimates, books, rng):
    """Pick this slot's surface pattern from the pilot-phase estimates."""
    dim = cfg.n_ris if cfg.ris_strategy == "C0" else cfg.n_ris * cfg.n_s
    pilots = [k for k in estimates.pilots if k in estimates.h_hat]
    if not cfg.use_ris or cfg.design == "random" or not pilots:
        w = random_phases(dim, rng)
    else:
        b_rows = [books.B[k] for k in pilots]
        h_rows = [estimates.h_hat[k] for k in pilots]
        d_cols = None
        if cfg.direct_link:
            zeros_d = np.zeros(cfg.m, dtype=complex)
            d_cols = [estimates.d_hat.get(k, zeros_d) for k in pilots]
        problem = make_problem(G, h_rows, b_rows, cfg.p_c, cfg.sigma_z2,
                               strategy=cfg.ris_strategy, d_cols=d_cols,
                               alpha_bar=cfg.alpha_bar, t_iter=cfg.t_iter,
                               t_sdr=cfg.t_sdr, alpha2=cfg.alpha2,
                               info_bits=cfg.code_k, block_len=cfg.n_d)
        solver = asdr if cfg.design == "asdr" else aevd
        w = solver(problem, rng).bare
    if cfg.ris_strategy == "C0":
        return np.repeat(w[:, None], cfg.n_s, axis=1)
    return w.reshape(cfg.n_ris, cfg.n_s, order="F")


def _message_key(bits):
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def run_trial(cfg, rng):
    """Simulate one frame end to end and score it."""
    cfg.validate()
    books = gen_codebooks(cfg.b_p, cfg.n_s, cfg.n_p, cfg.n_ris,
                          cfg.s_slots, rng)
    code = _code_for(cfg)

    if cfg.use_ris:
        g_paths = sample_paths(cfg.l_g, cfg.ris_bs_distance,
                               angle_grid(cfg.m1), angle_grid(cfg.m2),
                               cfg.l0, cfg.alpha_pl_ris, rng,
                               tx_grid_phi=angle_grid(cfg.n1),
                               tx_grid_psi=angle_grid(cfg.n2))
        G = assemble_ris_bs(g_paths, cfg.m1, cfg.m2, cfg.n1, cfg.n2,
                            cfg.spacing)
    else:
        G = np.zeros((cfg.m, cfg.n_ris), dtype=complex)

    users = []
    for _ in range(cfg.k_a):
        message = rng.integers(0, 2, cfg.b_total).astype(np.uint8)
        tx = encode_user(message, books, code, cfg.s_slots, rng,
                         crc_width=cfg.crc_width)
        h, d = _user_channels(cfg, rng)
        users.append((tx, h, d))

    transmitted = {_message_key(tx.message) for tx, _, _ in users}
    decoded = set()

    for s in range(cfg.s_slots):
        active = [u for u in users if u[0].slot == s]
        h_rows = [h for _, h, _ in active]
        p_rows = [tx.p for tx, _, _ in active]
        d_list = [d for _, _, d in active] if cfg.direct_link else None

        Y_p = simulate_pilot_slot(G, h_rows, p_rows, books.W_ps[s],
                                  cfg.p_p, cfg.sigma_z2, rng, d_cols=d_list)
        if cfg.use_ris and not cfg.direct_link:
            _, est = jdce_run(Y_p, G, books.W_ps[s], books.P, cfg.p_p,
                              cfg.sigma_z2, cfg.alpha1, cfg.t_max_effective,
                              cfg.n1, cfg.n2, cfg.spacing)
        else:
            _, est = jdce_run_direct(Y_p, G, books.W_ps[s], books.P, cfg.p_p,
                                     cfg.sigma_z2, cfg.alpha1,
                                     cfg.t_max_effective, cfg.m1, cfg.m2,
                                     cfg.n1, cfg.n2, cfg.spacing,
                                     cascaded=cfg.use_ris)

        w_cs = _design_slot(cfg, G, est, books, rng)

        Y_d = sample_cn(cfg.sigma_z2, rng, (cfg.m * cfg.n_s, cfg.n_d))
        for tx, h, d in active:
            T_true = build_Ti(G, h, w_cs, tx.b, cfg.p_c,
                              d if cfg.direct_link else None)
            Y_d += np.outer(vec(T_true), tx.v)

        entries = []
        for k in est.pilots:
            h_hat = est.h_hat.get(k)
            d_hat = est.d_hat.get(k) if cfg.direct_link else None
            if h_hat is None and d_hat is None:
                continue
            if h_hat is None:
                h_hat = np.zeros(cfg.n_ris, dtype=complex)
            entries.append((k, build_Ti(G, h_hat, w_cs, books.B[k],
                                        cfg.p_c, d_hat)))

        found, _ = data_phase(Y_d, entries, code, cfg.sigma_z2,
                              list_size=cfg.list_size,
                              crc_width=cfg.crc_width)
        for du in found:
            msg = np.concatenate([index_to_bits(du.pilot, cfg.b_p),
                                  du.payload]).astype(np.uint8)
            decoded.add(_message_key(msg))

    missed = sum(1 for tx, _, _ in users
                 if _message_key(tx.message) not in decoded)
    return TrialStats(transmitted=transmitted, decoded=decoded,
                      missed=missed,
                      false_alarms=len(decoded - transmitted))


@dataclass
class PupeEstimate:
    """Aggregated per-user error estimate over a batch of trials."""

    pupe: float
    p_md: float
    p_fa: float
    ci: float           # 95% normal-approximation half width on pupe
    trials: int
    per_trial: list = field(default_factory=list)


def run_trials(cfg, trials=None, seed=None):
    """Independent trials with seeds split off one master seed."""
    count = cfg.trials if trials is None else trials
    master = cfg.seed if seed is None else seed
    children = np.random.SeedSequence(master).spawn(count)
    return [run_trial(cfg, np.random.default_rng(child))
            for child in children]


def summarize_trials(stats, k_a):
    """Pool trial counts into (P_e, p_md, p_fa) with a CI half-width."""
    count = len(stats)
    user_total = k_a * count
    missed = sum(s.missed for s in stats)
    false = sum(s.false_alarms for s in stats)
    decoded_total = sum(len(s.decoded) for s in stats)
    p_md = missed / user_total if user_total else 0.0
    p_fa = false / decoded_total if decoded_total else 0.0
    ci = 0.0
    if user_total:
        ci += 1.96 * math.sqrt(p_md * (1.0 - p_md) / user_total)
    if decoded_total:
        ci += 1.96 * math.sqrt(p_fa * (1.0 - p_fa) / decoded_total)
    rows = [(s.missed, s.false_alarms, len(s.decoded)) for s in stats]
    return PupeEstimate(pupe=p_md + p_fa, p_md=p_md, p_fa=p_fa, ci=ci,
                        trials=count, per_trial=rows)


def estimate_pupe(cfg, trials=None, seed=None):
    return summarize_trials(run_trials(cfg, trials, seed), cfg.k_a)


@dataclass
class EbN0:
    linear: float   # energy per bit, P * n_T / B
    db: float       # 10 log10 of the ratio to the noise variance


def eb_n0(power, n_t, bits, sigma_z2):
    """Energy-per-bit bookkeeping for a frame of n_t symbols carrying B bits."""
    if bits <= 0:
        raise DomainError("bit count must be positive")
    linear = power * n_t / bits
    return EbN0(linear=linear, db=10.0 * math.log10(linear / sigma_z2))


def avg_symbol_power(cfg):
    """Per-user average transmit power over the whole frame."""
    return (cfg.p_p * cfg.n_p + cfg.p_c * cfg.n_s * cfg.n_d) / \
        (cfg.n_p + cfg.n_s * cfg.n_d)


@dataclass
class PowerSearchResult:
    status: str                 # "ok" or "unreachable"
    power: float
    pupe: float
    ci: float
    pupe_lo: float              # estimate at the lower bracket endpoint
    pupe_hi: float | None       # estimate at the upper endpoint, if evaluated
    history: list = field(default_factory=list)


def power_search(cfg, target_pupe, tol_db=0.5, bracket=(1e-2, 1e3),
                 trials=None, seed=None, param="p_c"):
    """Smallest power (within tol_db) whose estimated PUPE meets the target.

    Bisection in log power with paired seeds, assuming PUPE is statistically
    nonincreasing in the power.  When even the upper endpoint misses the
    target, returns status "unreachable" with both endpoint estimates.
    """
    if param not in {f.name for f in fields(cfg)}:
        raise ConfigError(f"unknown power field {param!r}")
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ConfigError("bracket must satisfy 0 < lo < hi")
    history = []

    def evaluate(p):
        est = estimate_pupe(replace(cfg, **{param: p}), trials=trials,
                            seed=seed)
        history.append((p, est.pupe, est.ci))
        return est

    est_lo = evaluate(lo)
    if est_lo.pupe <= target_pupe:
        return PowerSearchResult("ok", lo, est_lo.pupe, est_lo.ci,
                                 est_lo.pupe, None, history)
    est_hi = evaluate(hi)
    if est_hi.pupe > target_pupe:
        return PowerSearchResult("unreachable", hi, est_hi.pupe, est_hi.ci,
                                 est_lo.pupe, est_hi.pupe, history)
    best_pupe, best_ci = est_hi.pupe, est_hi.ci
    while 10.0 * math.log10(hi / lo) > tol_db:
        mid = math.sqrt(lo * hi)
        est = evaluate(mid)
        if est.pupe <= target_pupe:
            hi, best_pupe, best_ci = mid, est.pupe, est.ci
        else:
            lo = mid
    return PowerSearchResult("ok", hi, best_pupe, best_ci,
                             est_lo.pupe, est_hi.pupe, history)


# ---------------------------------------------------------------------------
# config and result files
# ---------------------------------------------------------------------------

_DEFAULTS = SystemConfig()


def parse_config_value(name, text, kind):
    text = text.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(float(tok) for tok in text.split(","))
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def apply_overrides(cfg, pairs):
    """Apply ``key=value`` strings on top of a config; returns a new config."""
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        name, text = pair.split("=", 1)
        name = name.strip()
        if not hasattr(_DEFAULTS, name):
            raise ConfigError(f"unknown config key: {name}")
        updates[name] = parse_config_value(name, text,
                                     type(getattr(_DEFAULTS, name)))
    return replace(cfg, **updates)


def load_config(path):
    """Read a ``key = value`` config file; missing keys keep defaults."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            pairs.append(line)
    cfg = apply_overrides(SystemConfig(), pairs)
    cfg.validate()
    return cfg


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def save_config(cfg, path):
    """Write the config in the load_config format (full precision)."""
    with open(path, "w") as fh:
        for f in fields(cfg):
            fh.write(f"{f.name} = {_format_value(getattr(cfg, f.name))}\n")


def emit_results(path, header, rows):
    """Write a CSV with a documented, stable header; floats use repr."""
    def fmt(cell):
        if isinstance(cell, (float, np.floating)):
            return repr(float(cell))
        return str(cell)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(c) for c in row])
