//! Full-duplex wireless link analysis.
//!
//! Computes sum rates and TDD capacity-region extensions for single-channel
//! and OFDM full-duplex links under imperfect self-interference cancellation,
//! and jointly optimizes per-channel transmit powers together with the
//! frequency placement of the RF canceller. The residual self-interference of
//! a compact receiver grows quadratically with the distance from the
//! canceller's center frequency, which couples the power allocation to the
//! placement; a general-SINR grid-plus-biconcave solver and a closed-form
//! high-SINR solver are provided, plus ingestion of measured isolation
//! traces.

pub mod high_sinr;
pub mod model;
pub mod multi_channel;
pub mod sic;
pub mod single_channel;

pub use model::{
    fd_sum_rate, per_channel_rates, sum_rate_multi, sum_rate_single, sum_rate_two_uni, water_fill,
    xinr_ms, Allocation, LinkInstance, ModelError, RateReport, SicProfile, StationParams,
    TabulatedSic,
};

pub use single_channel::{
    capacity_extension_p, check_condition1, single_channel_optimum, tdd_gap_check,
    trace_capacity_boundary, two_uni_extension_map, CapRegionPoint, DuplexWinner,
    SingleChannelOptimum, TwoUniGeometry,
};

pub use multi_channel::{
    build_constraints, derivative_bound, dr_dc, maximum_rate, solve_fixed_c, ChannelConstraint,
    SolveError, SolveOptions,
};

pub use high_sinr::{hsinr_maximum_rate, hsinr_ms_allocation, hsinr_rate, HsinrError};

pub use sic::{
    calibrate_evaluation, fit_gm, load_trace, parse_trace, to_profile, AntennaInterface,
    IsolationTrace, TraceError, TraceRow,
};
