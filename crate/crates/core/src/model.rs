//! Link model and rate arithmetic.
//!
//! Holds the station/link domain types and the Shannon-rate expressions that
//! every analysis in this crate composes: per-channel SNR/XINR ratios, the
//! bidirectional full-duplex sum rate for single-channel, two-unidirectional
//! and OFDM links, and the TDD baselines used for capacity-region comparisons.
//!
//! All powers, gains and noise levels are linear-scale; dB conversion happens
//! only at I/O boundaries. Channels are indexed 1..=K to keep the canceller
//! position `c` in the same units as the channel index.

use serde::Serialize;
use thiserror::Error;

/// Base-2 logarithm via natural log, so rate and derivative formulas share
/// one ln(2) constant.
#[inline]
pub(crate) fn log2(x: f64) -> f64 {
    x.ln() / std::f64::consts::LN_2
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("tabulated SIC lookup at offset {offset_hz} Hz outside sampled span [{min_hz}, {max_hz}] Hz")]
    SicOffsetOutOfRange {
        offset_hz: f64,
        min_hz: f64,
        max_hz: f64,
    },
}

/// Residual self-interference profile of a station's canceller.
///
/// The residual SI power on channel `k` with the canceller centered at `c`
/// equals `residual_at(k, c) * tx_power`.
#[derive(Debug, Clone, PartialEq)]
pub enum SicProfile {
    /// Frequency-flat residual: a constant fraction `g` of the transmitted
    /// power leaks through (the BS-style canceller).
    Flat { g: f64 },
    /// Quadratic residual `g_m * (k - c)^2` of a compact receiver whose RF
    /// canceller has flat amplitude/phase response.
    Quadratic { g_m: f64 },
    /// Measured isolation samples versus frequency offset from the canceller
    /// center, assumed shift-invariant under retuning.
    Tabulated(TabulatedSic),
}

/// Tabulated isolation: `(offset from canceller center in Hz, isolation as a
/// linear power fraction)`, strictly increasing in offset. Lookups interpolate
/// linearly in dB and fold in a flat digital-SIC stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSic {
    samples: Vec<(f64, f64)>,
    digital_sic_db: f64,
    channel_width_hz: f64,
}

impl TabulatedSic {
    /// Panics if fewer than two samples, offsets are not strictly increasing,
    /// or any isolation value is non-positive.
    pub fn new(samples: Vec<(f64, f64)>, digital_sic_db: f64, channel_width_hz: f64) -> Self {
        assert!(samples.len() >= 2, "tabulated SIC needs at least 2 samples");
        assert!(channel_width_hz > 0.0);
        for w in samples.windows(2) {
            assert!(
                w[1].0 > w[0].0,
                "tabulated SIC offsets must strictly increase"
            );
        }
        assert!(
            samples.iter().all(|&(_, iso)| iso > 0.0),
            "tabulated isolation values must be positive"
        );
        Self {
            samples,
            digital_sic_db,
            channel_width_hz,
        }
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn digital_sic_db(&self) -> f64 {
        self.digital_sic_db
    }

    pub fn channel_width_hz(&self) -> f64 {
        self.channel_width_hz
    }

    /// Residual power fraction at a frequency offset from the canceller
    /// center, including the digital stage. No extrapolation outside the
    /// sampled span.
    pub fn residual_fraction(&self, offset_hz: f64) -> Result<f64, ModelError> {
        let (min_hz, max_hz) = (self.samples[0].0, self.samples[self.samples.len() - 1].0);
        if offset_hz < min_hz || offset_hz > max_hz {
            return Err(ModelError::SicOffsetOutOfRange {
                offset_hz,
                min_hz,
                max_hz,
            });
        }
        let idx = self
            .samples
            .partition_point(|&(off, _)| off <= offset_hz)
            .min(self.samples.len() - 1)
            .max(1);
        let (x0, y0) = self.samples[idx - 1];
        let (x1, y1) = self.samples[idx];
        let t = (offset_hz - x0) / (x1 - x0);
        // interpolate in dB space: linear in ln(isolation)
        let analog = (y0.ln() + t * (y1.ln() - y0.ln())).exp();
        Ok(analog * 10f64.powf(-self.digital_sic_db / 10.0))
    }
}

impl SicProfile {
    /// Residual-SI power fraction per unit transmit power on channel `k`
    /// (1-based) with the canceller at position `c`.
    pub fn residual_at(&self, k: usize, c: f64) -> Result<f64, ModelError> {
        match self {
            SicProfile::Flat { g } => Ok(*g),
            SicProfile::Quadratic { g_m } => {
                let d = k as f64 - c;
                Ok(g_m * d * d)
            }
            SicProfile::Tabulated(t) => t.residual_fraction((k as f64 - c) * t.channel_width_hz),
        }
    }

    /// Flat-equivalent residual fraction for single-channel analyses, where
    /// residual SI is a constant fraction of transmit power. For a quadratic
    /// profile this is the per-unit-power fraction `g_m` itself; a tabulated
    /// profile contributes its peak-cancellation (zero-offset) residual.
    pub fn single_channel_residual(&self) -> f64 {
        match self {
            SicProfile::Flat { g } => *g,
            SicProfile::Quadratic { g_m } => *g_m,
            SicProfile::Tabulated(t) => t
                .residual_fraction(0.0)
                .expect("tabulated SIC profile does not cover zero offset"),
        }
    }

    /// Residual fraction one channel-width away from the canceller center.
    /// This is the coefficient the frequency-placement constraints compare
    /// against the wireless channel gains.
    pub fn unit_offset_residual(&self) -> f64 {
        match self {
            SicProfile::Flat { g } => *g,
            SicProfile::Quadratic { g_m } => *g_m,
            SicProfile::Tabulated(t) => {
                let w = t.channel_width_hz;
                let plus = t.residual_fraction(w);
                let minus = t.residual_fraction(-w);
                match (plus, minus) {
                    (Ok(a), Ok(b)) => a.max(b),
                    (Ok(a), Err(_)) => a,
                    (Err(_), Ok(b)) => b,
                    (Err(_), Err(_)) => {
                        panic!("tabulated SIC profile does not cover a one-channel offset")
                    }
                }
            }
        }
    }
}

/// Transmit-side parameters of one station (BS or MS).
#[derive(Debug, Clone, PartialEq)]
pub struct StationParams {
    /// Maximum total transmit power, linear scale. Defaults are normalized so
    /// `p_max = 1`.
    pub p_max: f64,
    /// Thermal noise per channel, linear scale.
    pub noise: f64,
    pub sic: SicProfile,
}

impl StationParams {
    pub fn new(p_max: f64, noise: f64, sic: SicProfile) -> Self {
        assert!(p_max > 0.0, "p_max must be positive");
        assert!(noise > 0.0, "noise must be positive");
        Self { p_max, noise, sic }
    }

    /// XINR when transmitting at full power, single-channel sense.
    pub fn max_self_xinr(&self) -> f64 {
        self.sic.single_channel_residual() * self.p_max / self.noise
    }
}

/// One OFDM link: per-channel gains in both directions plus both stations.
#[derive(Debug, Clone)]
pub struct LinkInstance {
    pub k_channels: usize,
    /// Gain MS -> BS per channel (uplink), length `k_channels`.
    pub h_mb: Vec<f64>,
    /// Gain BS -> MS per channel (downlink), length `k_channels`.
    pub h_bm: Vec<f64>,
    pub bs: StationParams,
    pub ms: StationParams,
}

impl LinkInstance {
    pub fn new(
        k_channels: usize,
        h_mb: Vec<f64>,
        h_bm: Vec<f64>,
        bs: StationParams,
        ms: StationParams,
    ) -> Self {
        assert!(k_channels >= 1);
        assert_eq!(h_mb.len(), k_channels);
        assert_eq!(h_bm.len(), k_channels);
        assert!(
            h_mb.iter().chain(h_bm.iter()).all(|&h| h > 0.0),
            "gains must be positive"
        );
        Self {
            k_channels,
            h_mb,
            h_bm,
            bs,
            ms,
        }
    }
}

/// Per-channel power vectors plus the canceller position `c` in channel-index
/// units.
#[derive(Debug, Clone, Serialize)]
pub struct Allocation {
    pub p_b: Vec<f64>,
    pub p_m: Vec<f64>,
    pub c: f64,
}

impl Allocation {
    /// Nonnegative powers, budget sums within a 1e-9 relative slack.
    pub fn is_feasible(&self, link: &LinkInstance) -> bool {
        if self.p_b.len() != link.k_channels || self.p_m.len() != link.k_channels {
            return false;
        }
        let nonneg = self.p_b.iter().chain(self.p_m.iter()).all(|&p| p >= 0.0);
        let tot_b: f64 = self.p_b.iter().sum();
        let tot_m: f64 = self.p_m.iter().sum();
        nonneg && tot_b <= link.bs.p_max * (1.0 + 1e-9) && tot_m <= link.ms.p_max * (1.0 + 1e-9)
    }
}

/// Rates of one allocation together with the TDD baselines it is compared
/// against.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    /// `(uplink, downlink)` rate per channel in b/s/Hz.
    pub per_channel: Vec<(f64, f64)>,
    pub sum_rate: f64,
    /// Best achievable TDD uplink rate (water-filled over channels).
    pub tdd_ul_max: f64,
    pub tdd_dl_max: f64,
    pub tdd_max: f64,
    /// Capacity-region extension of the operating point over the TDD
    /// triangle; 0 when the point is already inside.
    pub extension_p: f64,
}

/// XINR at the MS on channel `k` for transmit power `p` and canceller
/// position `c`.
pub fn xinr_ms(ms: &StationParams, p: f64, k: usize, c: f64) -> Result<f64, ModelError> {
    debug_assert!(p >= 0.0);
    Ok(ms.sic.residual_at(k, c)? * p / ms.noise)
}

/// Sum of uplink and downlink rates on a single bidirectional FD channel.
pub fn sum_rate_single(
    bs: &StationParams,
    ms: &StationParams,
    h_mb: f64,
    h_bm: f64,
    p_b: f64,
    p_m: f64,
) -> f64 {
    let gamma_mb = h_mb * p_m / bs.noise;
    let gamma_bm = h_bm * p_b / ms.noise;
    let gamma_bb = bs.sic.single_channel_residual() * p_b / bs.noise;
    let gamma_mm = ms.sic.single_channel_residual() * p_m / ms.noise;
    log2(1.0 + gamma_mb / (1.0 + gamma_bb)) + log2(1.0 + gamma_bm / (1.0 + gamma_mm))
}

/// Sum rate for two unidirectional links sharing one channel: MS 1 transmits
/// uplink while the BS serves MS 2 downlink. The inter-node interference from
/// MS 1 at MS 2 cannot be cancelled.
#[allow(clippy::too_many_arguments)]
pub fn sum_rate_two_uni(
    bs: &StationParams,
    _ms1: &StationParams,
    ms2: &StationParams,
    h_m1b: f64,
    h_bm2: f64,
    h_m1m2: f64,
    p_m1: f64,
    p_b: f64,
) -> f64 {
    let gamma_m1b = h_m1b * p_m1 / bs.noise;
    let gamma_bb = bs.sic.single_channel_residual() * p_b / bs.noise;
    let gamma_bm2 = h_bm2 * p_b / ms2.noise;
    let gamma_m1m2 = h_m1m2 * p_m1 / ms2.noise;
    log2(1.0 + gamma_m1b / (1.0 + gamma_bb)) + log2(1.0 + gamma_bm2 / (1.0 + gamma_m1m2))
}

/// Per-channel FD rates of an allocation, without the TDD baselines.
pub fn per_channel_rates(
    link: &LinkInstance,
    a: &Allocation,
) -> Result<Vec<(f64, f64)>, ModelError> {
    assert_eq!(a.p_b.len(), link.k_channels);
    assert_eq!(a.p_m.len(), link.k_channels);
    let mut rates = Vec::with_capacity(link.k_channels);
    for i in 0..link.k_channels {
        let k = i + 1;
        let gamma_mb = link.h_mb[i] * a.p_m[i] / link.bs.noise;
        let gamma_bb = link.bs.sic.residual_at(k, a.c)? * a.p_b[i] / link.bs.noise;
        let gamma_bm = link.h_bm[i] * a.p_b[i] / link.ms.noise;
        let gamma_mm = xinr_ms(&link.ms, a.p_m[i], k, a.c)?;
        let ul = log2(1.0 + gamma_mb / (1.0 + gamma_bb));
        let dl = log2(1.0 + gamma_bm / (1.0 + gamma_mm));
        rates.push((ul, dl));
    }
    Ok(rates)
}

/// FD sum rate of an allocation over all channels.
pub fn fd_sum_rate(link: &LinkInstance, a: &Allocation) -> Result<f64, ModelError> {
    Ok(per_channel_rates(link, a)?
        .iter()
        .map(|&(ul, dl)| ul + dl)
        .sum())
}

/// Full rate report: per-channel and total FD rates, water-filled TDD
/// baselines, and the capacity-region extension of the operating point.
pub fn sum_rate_multi(link: &LinkInstance, a: &Allocation) -> Result<RateReport, ModelError> {
    let per_channel = per_channel_rates(link, a)?;
    let sum_rate: f64 = per_channel.iter().map(|&(ul, dl)| ul + dl).sum();
    let r_ul: f64 = per_channel.iter().map(|&(ul, _)| ul).sum();
    let r_dl: f64 = per_channel.iter().map(|&(_, dl)| dl).sum();

    let ul_gains: Vec<f64> = link.h_mb.iter().map(|h| h / link.bs.noise).collect();
    let dl_gains: Vec<f64> = link.h_bm.iter().map(|h| h / link.ms.noise).collect();
    let (_, tdd_ul_max) = water_fill(&ul_gains, link.ms.p_max);
    let (_, tdd_dl_max) = water_fill(&dl_gains, link.bs.p_max);
    let tdd_max = tdd_ul_max.max(tdd_dl_max);

    // Smallest 1+p scaling the point back onto the TDD triangle is the sum of
    // the normalized coordinates.
    let extension_p = (r_dl / tdd_dl_max + r_ul / tdd_ul_max - 1.0).max(0.0);

    Ok(RateReport {
        per_channel,
        sum_rate,
        tdd_ul_max,
        tdd_dl_max,
        tdd_max,
        extension_p,
    })
}

/// Water-filling over parallel channels: maximize `sum log2(1 + a_k p_k)`
/// subject to `sum p_k <= p_total`, `p_k >= 0`, where `a_k` is gain over
/// noise. The water level is found by bisection on the common level.
pub fn water_fill(gain_over_noise: &[f64], p_total: f64) -> (Vec<f64>, f64) {
    assert!(!gain_over_noise.is_empty());
    assert!(gain_over_noise.iter().all(|&a| a > 0.0));
    if p_total <= 0.0 {
        return (vec![0.0; gain_over_noise.len()], 0.0);
    }
    let inv: Vec<f64> = gain_over_noise.iter().map(|a| 1.0 / a).collect();
    let base = inv.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lo = base;
    let mut hi = base + p_total;
    let spent = |level: f64| -> f64 { inv.iter().map(|&b| (level - b).max(0.0)).sum() };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if spent(mid) > p_total {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let powers: Vec<f64> = inv.iter().map(|&b| (lo - b).max(0.0)).collect();
    let rate = powers
        .iter()
        .zip(gain_over_noise)
        .map(|(&p, &a)| log2(1.0 + a * p))
        .sum();
    (powers, rate)
}
