"""Link-level simulator and algorithm library for surface-aided unsourced
random access: cascaded mmWave channel synthesis, joint pilot detection and
channel estimation, surface phase design, polar-coded MMSE-SIC decoding, and
a numerical achievability bound."""

from .bound import (BoundConfig, BoundResult, eps_lambda, lemma1_rhs, p_coll,
                    p_cons, pmis_mc, pstop_bound, pupe_bound)
from .channel import (angle_grid, assemble_ris_bs, assemble_user_bs,
                      assemble_user_ris, grid_steering_matrix, sample_paths,
                      steering_vector)
from .codec import (PolarCode, bpsk, crc_append, crc_check, crc_remainder,
                    polar_construct, polar_encode, polar_transform,
                    scl_decode, scl_decode_batch)
from .datadetect import (build_Ti, data_phase, llr_compute, mmse_detect,
                         mmse_detect_all, sic_remove, stack_signatures)
from .exceptions import (ConfigError, ContractViolation, DomainError,
                         SdpInfeasibleError, SingularSystemError)
from .harness import (PowerSearchResult, PupeEstimate, SystemConfig,
                      TrialStats, avg_symbol_power, dbm_to_watt, eb_n0,
                      emit_results, estimate_pupe, load_config, power_search,
                      run_trial, run_trials, save_config, summarize_trials,
                      watt_to_dbm)
from .jdce import jdce_run, jdce_run_direct
from .numerics import (chi2_cdf, hermitian_evd, ls_solve, qfunc, sample_cn,
                       unvec, vec)
from .risdesign import (DesignProblem, RISPhaseVector, aevd, asdr,
                        design_cost, error_proxy, make_problem,
                        random_phases)
from .sdp import sdp_solve
from .transmitter import Codebooks, UserTransmission, encode_user, gen_codebooks

__version__ = "0.1.0"
