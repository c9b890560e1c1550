//! Single-channel analyses: the FD-vs-TDD trichotomy, capacity-region
//! boundary tracing, the capacity-region extension metric, the biconcavity
//! condition, and the path-loss geometry of two unidirectional links.

use serde::Serialize;
use thiserror::Error;

use crate::model::{log2, sum_rate_single, StationParams};

#[derive(Debug, Error)]
pub enum SingleChannelError {
    #[error("capacity extension undefined: max SNR on {0} is zero")]
    ZeroMaxSnr(&'static str),
    #[error("no grid point violates the biconcavity condition")]
    ConditionNeverViolated,
}

/// Which operating mode attains the maximum sum rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DuplexWinner {
    FullDuplex,
    TddUplink,
    TddDownlink,
}

/// Outcome of the single-channel rate maximization: the maximizer is always
/// one of the three corner points of the power box.
#[derive(Debug, Clone, Serialize)]
pub struct SingleChannelOptimum {
    pub p_b: f64,
    pub p_m: f64,
    pub winner: DuplexWinner,
    /// FD sum rate at (p_max, p_max).
    pub fd_sum_rate: f64,
    pub tdd_ul_max: f64,
    pub tdd_dl_max: f64,
}

/// A point of the capacity region, b/s/Hz on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapRegionPoint {
    pub r_dl: f64,
    pub r_ul: f64,
}

/// Maximize the single-channel sum rate. Any FD gain is attained at full
/// powers on both sides, so the candidates reduce to the FD corner and the
/// two TDD corners.
pub fn single_channel_optimum(
    bs: &StationParams,
    ms: &StationParams,
    h_mb: f64,
    h_bm: f64,
) -> SingleChannelOptimum {
    let fd = sum_rate_single(bs, ms, h_mb, h_bm, bs.p_max, ms.p_max);
    let tdd_ul = log2(1.0 + h_mb * ms.p_max / bs.noise);
    let tdd_dl = log2(1.0 + h_bm * bs.p_max / ms.noise);
    let (winner, p_b, p_m) = if fd >= tdd_ul && fd >= tdd_dl {
        (DuplexWinner::FullDuplex, bs.p_max, ms.p_max)
    } else if tdd_ul >= tdd_dl {
        (DuplexWinner::TddUplink, 0.0, ms.p_max)
    } else {
        (DuplexWinner::TddDownlink, bs.p_max, 0.0)
    };
    SingleChannelOptimum {
        p_b,
        p_m,
        winner,
        fd_sum_rate: fd,
        tdd_ul_max: tdd_ul,
        tdd_dl_max: tdd_dl,
    }
}

/// Capacity-region extension `p`: the FD point `(s_b, s_m)` scaled by
/// `1/(1+p)` lands on the TDD triangle boundary. Clamped at 0 when the FD
/// point already lies inside the triangle.
pub fn capacity_extension_p(
    gamma_bm_max: f64,
    gamma_mb_max: f64,
    gamma_mm_max: f64,
    gamma_bb_max: f64,
) -> Result<f64, SingleChannelError> {
    if gamma_bm_max <= 0.0 {
        return Err(SingleChannelError::ZeroMaxSnr("downlink"));
    }
    if gamma_mb_max <= 0.0 {
        return Err(SingleChannelError::ZeroMaxSnr("uplink"));
    }
    let lhs = log2(1.0 + gamma_bm_max / (1.0 + gamma_mm_max)) / log2(1.0 + gamma_bm_max)
        + log2(1.0 + gamma_mb_max / (1.0 + gamma_bb_max)) / log2(1.0 + gamma_mb_max);
    Ok((lhs - 1.0).max(0.0))
}

/// Trace the FD capacity-region boundary parametrically.
///
/// For each `alpha` on a uniform grid over (0, 1], the DL rate is lowered to
/// `alpha * s_b` by reducing `p_b` (found by bisection; the rate is monotone
/// in the power) while the MS transmits at full power; the symmetric sweep
/// lowers the UL rate. The two axis endpoints, where one station is silent
/// and the other reaches its TDD maximum, close the curve. Returns the union
/// of both sweeps sorted by `r_dl`.
pub fn trace_capacity_boundary(
    bs: &StationParams,
    ms: &StationParams,
    h_mb: f64,
    h_bm: f64,
    n_points: usize,
) -> Vec<CapRegionPoint> {
    assert!(n_points >= 2);
    let g_b = bs.sic.single_channel_residual();
    let g_m = ms.sic.single_channel_residual();
    // rates at full power on both sides
    let dl_at = |p_b: f64| log2(1.0 + h_bm * p_b / (ms.noise + g_m * ms.p_max));
    let ul_at = |p_m: f64| log2(1.0 + h_mb * p_m / (bs.noise + g_b * bs.p_max));
    let s_b = dl_at(bs.p_max);
    let s_m = ul_at(ms.p_max);

    let bisect = |target: f64, rate: &dyn Fn(f64) -> f64, p_hi: f64| -> f64 {
        let (mut lo, mut hi) = (0.0f64, p_hi);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if rate(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let mut points = Vec::with_capacity(2 * n_points);
    for i in 1..=n_points {
        let alpha = i as f64 / n_points as f64;
        // DL sweep: hold p_m at max, lower p_b until r_dl = alpha * s_b
        let p_b = bisect(alpha * s_b, &dl_at, bs.p_max);
        points.push(CapRegionPoint {
            r_dl: dl_at(p_b),
            r_ul: log2(1.0 + h_mb * ms.p_max / (bs.noise + g_b * p_b)),
        });
        // UL sweep: hold p_b at max, lower p_m until r_ul = alpha * s_m
        let p_m = bisect(alpha * s_m, &ul_at, ms.p_max);
        points.push(CapRegionPoint {
            r_dl: log2(1.0 + h_bm * bs.p_max / (ms.noise + g_m * p_m)),
            r_ul: ul_at(p_m),
        });
    }
    points.push(CapRegionPoint {
        r_dl: log2(1.0 + h_bm * bs.p_max / ms.noise),
        r_ul: 0.0,
    });
    points.push(CapRegionPoint {
        r_dl: 0.0,
        r_ul: log2(1.0 + h_mb * ms.p_max / bs.noise),
    });
    points.sort_by(|a, b| {
        a.r_dl
            .partial_cmp(&b.r_dl)
            .unwrap()
            .then(a.r_ul.partial_cmp(&b.r_ul).unwrap())
    });
    points
}

/// Biconcavity condition at the given powers: `(holds for the UL direction,
/// holds for the DL direction)`. The UL half guarantees the sum rate is
/// concave and increasing in `p_m`, the DL half in `p_b`.
pub fn check_condition1(
    bs: &StationParams,
    ms: &StationParams,
    h_mb: f64,
    h_bm: f64,
    p_b: f64,
    p_m: f64,
) -> (bool, bool) {
    let gamma_mb = h_mb * p_m / bs.noise;
    let gamma_bm = h_bm * p_b / ms.noise;
    let gamma_bb = bs.sic.single_channel_residual() * p_b / bs.noise;
    let gamma_mm = ms.sic.single_channel_residual() * p_m / ms.noise;
    let holds_ul = gamma_mm <= gamma_mb / (1.0 + gamma_bb);
    let holds_dl = gamma_bb <= gamma_bm / (1.0 + gamma_mm);
    (holds_ul, holds_dl)
}

/// Largest FD-over-TDD gap across a 101x101 power grid restricted to points
/// where the biconcavity condition fails. Errors when no grid point violates
/// the condition. The gap stays below 1 b/s/Hz whenever the condition fails.
pub fn tdd_gap_check(
    bs: &StationParams,
    ms: &StationParams,
    h_mb: f64,
    h_bm: f64,
) -> Result<f64, SingleChannelError> {
    const N: usize = 101;
    let tdd_max =
        log2(1.0 + h_mb * ms.p_max / bs.noise).max(log2(1.0 + h_bm * bs.p_max / ms.noise));
    let mut best: Option<f64> = None;
    for i in 0..N {
        let p_b = bs.p_max * i as f64 / (N - 1) as f64;
        for j in 0..N {
            let p_m = ms.p_max * j as f64 / (N - 1) as f64;
            let (ul_ok, dl_ok) = check_condition1(bs, ms, h_mb, h_bm, p_b, p_m);
            if ul_ok && dl_ok {
                continue;
            }
            let gap = sum_rate_single(bs, ms, h_mb, h_bm, p_b, p_m) - tdd_max;
            best = Some(best.map_or(gap, |b: f64| b.max(gap)));
        }
    }
    best.ok_or(SingleChannelError::ConditionNeverViolated)
}

/// Path-loss geometry for two unidirectional links: SNRs decay from their
/// reference values as the corresponding distances grow, and the MS-to-MS
/// distance is tied to the two hop distances by `rho`.
#[derive(Debug, Clone)]
pub struct TwoUniGeometry {
    /// Path-loss exponent, typically 2..4.
    pub eta: f64,
    /// `d_m1m2 = rho * (d_m1b + d_bm2)`.
    pub rho: f64,
    /// SNR/INR values at the reference distance (all distances normalized to
    /// it).
    pub gamma_m1b_max: f64,
    pub gamma_bm2_max: f64,
    pub gamma_m1m2_max: f64,
}

impl TwoUniGeometry {
    pub fn new(
        eta: f64,
        rho: f64,
        gamma_m1b_max: f64,
        gamma_bm2_max: f64,
        gamma_m1m2_max: f64,
    ) -> Self {
        assert!(eta > 0.0);
        assert!(rho > 0.0);
        Self {
            eta,
            rho,
            gamma_m1b_max,
            gamma_bm2_max,
            gamma_m1m2_max,
        }
    }
}

/// Capacity-region extension over a grid of (uplink, downlink) SNRs for the
/// two-unidirectional use case.
///
/// Each swept SNR implies a distance `d = (gamma_max / gamma)^(1/eta)` in
/// reference-distance units; the inter-MS distance follows from `rho`, and
/// cells whose three distances cannot form a triangle get `p = 0`.
/// Row `i` corresponds to `sweep_m1b[i]`, column `j` to `sweep_bm2[j]`.
pub fn two_uni_extension_map(
    geom: &TwoUniGeometry,
    bs: &StationParams,
    sweep_m1b: &[f64],
    sweep_bm2: &[f64],
) -> Vec<Vec<f64>> {
    let gamma_bb = bs.max_self_xinr();
    sweep_m1b
        .iter()
        .map(|&g1| {
            assert!(g1 > 0.0 && g1 <= geom.gamma_m1b_max);
            let d1 = (geom.gamma_m1b_max / g1).powf(1.0 / geom.eta);
            sweep_bm2
                .iter()
                .map(|&g2| {
                    assert!(g2 > 0.0 && g2 <= geom.gamma_bm2_max);
                    let d2 = (geom.gamma_bm2_max / g2).powf(1.0 / geom.eta);
                    let d12 = geom.rho * (d1 + d2);
                    let triangle_ok = d1 <= d2 + d12 && d2 <= d1 + d12 && d12 <= d1 + d2;
                    if !triangle_ok {
                        return 0.0;
                    }
                    let gamma_12 = geom.gamma_m1m2_max / d12.powf(geom.eta);
                    capacity_extension_p(g2, g1, gamma_12, gamma_bb)
                        .expect("swept SNRs are positive")
                })
                .collect()
        })
        .collect()
}
