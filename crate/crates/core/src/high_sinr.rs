//! Closed-form power allocation under the high-SINR approximation.
//!
//! In this regime the optimal BS allocation is the equal split, the optimal
//! canceller position is the band center, and the MS allocation follows a
//! one-parameter family: every per-channel share is a closed-form function of
//! the last channel's share, which a binary search pins down until the shares
//! sum to one within the requested tolerance.
//!
//! Wireless channel gains enter the approximate objective as additive
//! constants, so they shift the rate but drop out of the argmax: the optimal
//! allocation depends on the link only through the residual-SI coefficients,
//! the noise, and the power budgets.

use thiserror::Error;

use crate::model::{log2, Allocation, LinkInstance, ModelError};

#[derive(Debug, Error)]
pub enum HsinrError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("binary search on the last MS share failed to land in the target window")]
    SearchDidNotConverge,
    #[error("reference channel K sits at the canceller position; pick c < K")]
    DegenerateReference,
}

/// High-SINR approximation of the sum rate: per channel,
/// `log2(SINR_ul) + log2(SINR_dl)` without the `1 +` terms. A channel with
/// zero power in either direction contributes negative infinity; callers in
/// this regime keep every channel active.
pub fn hsinr_rate(link: &LinkInstance, a: &Allocation) -> Result<f64, HsinrError> {
    let mut total = 0.0f64;
    for i in 0..link.k_channels {
        let k = i + 1;
        let gamma_mb = link.h_mb[i] * a.p_m[i] / link.bs.noise;
        let gamma_bb = link.bs.sic.residual_at(k, a.c)? * a.p_b[i] / link.bs.noise;
        let gamma_bm = link.h_bm[i] * a.p_b[i] / link.ms.noise;
        let gamma_mm = link.ms.sic.residual_at(k, a.c)? * a.p_m[i] / link.ms.noise;
        total += log2(gamma_mb / (1.0 + gamma_bb)) + log2(gamma_bm / (1.0 + gamma_mm));
    }
    Ok(total)
}

/// MS share solution for a fixed canceller position: the shares and the
/// number of binary-search iterations spent.
#[derive(Debug, Clone)]
pub struct MsShareSolve {
    pub alphas: Vec<f64>,
    pub iterations: usize,
}

/// Stationarity family: given the last channel's share `alpha_last`, every
/// other share follows so that `alpha_k (N_m + R_k alpha_k)` is constant
/// across channels with nonzero offset.
fn shares_from_last(r: &[f64], n_m: f64, alpha_last: f64) -> Vec<f64> {
    let r_last = r[r.len() - 1];
    let q = alpha_last * (n_m + r_last * alpha_last);
    r.iter()
        .map(|&rk| {
            if rk == 0.0 {
                q / n_m
            } else {
                // positive root of alpha (N_m + R alpha) = q, in a form that
                // avoids cancellation for small R
                2.0 * q / (n_m + (n_m * n_m + 4.0 * q * rk).sqrt())
            }
        })
        .collect()
}

/// Optimal MS shares under the high-SINR approximation for an arbitrary fixed
/// canceller position `c < K`. The share sum is strictly increasing in the
/// last channel's share, so a plain bisection lands it in
/// `[1 - eps/(K+eps), 1]`.
pub fn hsinr_ms_allocation(
    link: &LinkInstance,
    c: f64,
    epsilon: f64,
) -> Result<MsShareSolve, HsinrError> {
    assert!(epsilon > 0.0);
    let kk = link.k_channels;
    let n_m = link.ms.noise;
    let r: Vec<f64> = (1..=kk)
        .map(|k| {
            link.ms
                .sic
                .residual_at(k, c)
                .map(|coeff| coeff * link.ms.p_max)
        })
        .collect::<Result<_, _>>()?;

    if r.iter().all(|&rk| rk == 0.0) {
        // no self-interference at all: the equal split is exact
        return Ok(MsShareSolve {
            alphas: vec![1.0 / kk as f64; kk],
            iterations: 0,
        });
    }
    if r[kk - 1] == 0.0 {
        return Err(HsinrError::DegenerateReference);
    }

    let eps_prime = epsilon / (kk as f64 + epsilon);
    let sum_at = |alpha_last: f64| -> f64 { shares_from_last(&r, n_m, alpha_last).iter().sum() };

    // every share grows with the last one, which is what licenses a plain
    // bisection on the share sum
    debug_assert!(sum_at(1.0 / kk as f64) >= sum_at(0.5 / kk as f64));

    // the centered optimum has alpha_last <= 1/K; off-center positions can
    // need more, so widen the bracket by doubling when required
    let mut lo = 0.0f64;
    let mut hi = 1.0 / kk as f64;
    while sum_at(hi) < 1.0 {
        lo = hi;
        hi *= 2.0;
    }

    for iterations in 1..=256usize {
        let mid = 0.5 * (lo + hi);
        let s = sum_at(mid);
        if s > 1.0 {
            hi = mid;
        } else if s < 1.0 - eps_prime {
            lo = mid;
        } else {
            return Ok(MsShareSolve {
                alphas: shares_from_last(&r, n_m, mid),
                iterations,
            });
        }
    }
    Err(HsinrError::SearchDidNotConverge)
}

/// Full high-SINR solution: canceller at the band center, equal BS split, MS
/// shares from the binary search. Runs in `O(K log(1/epsilon))`.
pub fn hsinr_maximum_rate(link: &LinkInstance, epsilon: f64) -> Result<Allocation, HsinrError> {
    let kk = link.k_channels;
    let c = (kk as f64 + 1.0) / 2.0;
    let p_b = vec![link.bs.p_max / kk as f64; kk];
    if kk == 1 {
        return Ok(Allocation {
            p_b,
            p_m: vec![link.ms.p_max],
            c,
        });
    }
    let shares = hsinr_ms_allocation(link, c, epsilon)?;
    let p_m = shares.alphas.iter().map(|&a| a * link.ms.p_max).collect();
    Ok(Allocation { p_b, p_m, c })
}
