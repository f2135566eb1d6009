//! Post-processing of recorded traces: steady-window statistics, the
//! grid-locked period, spectral period extraction and harmonic subtraction.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::units::UnitSystem;

/// Slack when matching window edges against sample times, ps.
const TIME_TOL: f64 = 1e-9;
/// Blocks used for the batch-means standard error.
pub const SE_BLOCKS: usize = 20;
/// Zero-padding factor of the period search.
const PAD: usize = 16;
/// Significance level of the dominant-peak test.
const PEAK_P_VALUE: f64 = 1e-3;

/// Closed time interval [t_lo, t_hi] in ps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyWindow {
    pub t_lo: f64,
    pub t_hi: f64,
}

impl SteadyWindow {
    pub fn new(t_lo: f64, t_hi: f64) -> Result<Self> {
        if !(t_lo.is_finite() && t_hi.is_finite() && t_lo < t_hi) {
            return Err(Error::Window {
                lo: t_lo,
                hi: t_hi,
                reason: "need finite bounds with lo < hi".into(),
            });
        }
        Ok(Self { t_lo, t_hi })
    }

    /// Default window for mean/RMS tables.
    pub fn stats_default() -> Self {
        Self {
            t_lo: 3.0,
            t_hi: 5.0,
        }
    }

    /// Default window for period and harmonic work.
    pub fn fit_default() -> Self {
        Self {
            t_lo: 2.5,
            t_hi: 5.0,
        }
    }

    /// Parses `lo:hi`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            what: "window".into(),
            reason: format!("expected lo:hi in ps, got `{s}`"),
        };
        let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        Self::new(lo, hi)
    }

    fn error(&self, reason: impl Into<String>) -> Error {
        Error::Window {
            lo: self.t_lo,
            hi: self.t_hi,
            reason: reason.into(),
        }
    }

    /// Index range of the samples inside the window. `t` must be increasing.
    pub fn indices(&self, t: &[f64]) -> Result<Range<usize>> {
        let (Some(&first), Some(&last)) = (t.first(), t.last()) else {
            return Err(self.error("series is empty"));
        };
        if self.t_lo < first - TIME_TOL || self.t_hi > last + TIME_TOL {
            return Err(self.error(format!("outside the series span [{first}, {last}]")));
        }
        let lo = t.partition_point(|&x| x < self.t_lo - TIME_TOL);
        let hi = t.partition_point(|&x| x <= self.t_hi + TIME_TOL);
        if hi < lo + 2 {
            return Err(self.error("fewer than two samples in window"));
        }
        Ok(lo..hi)
    }
}

/// Mean, RMS fluctuation and batch-means standard error over a window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStats {
    pub mean: f64,
    pub rms: f64,
    pub se: f64,
    pub n: usize,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standard error of the mean from `blocks` contiguous batch means.
pub fn batch_means_se(x: &[f64], blocks: usize) -> f64 {
    let n = x.len();
    let blocks = blocks.min(n);
    if blocks < 2 {
        return 0.0;
    }
    let means: Vec<f64> = (0..blocks)
        .map(|b| mean(&x[b * n / blocks..(b + 1) * n / blocks]))
        .collect();
    let m = mean(&means);
    let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (blocks - 1) as f64;
    (var / blocks as f64).sqrt()
}

pub fn window_stats(t: &[f64], y: &[f64], w: &SteadyWindow) -> Result<WindowStats> {
    check_lengths(t, y)?;
    let r = w.indices(t)?;
    let x = &y[r];
    let m = mean(x);
    let rms = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    Ok(WindowStats {
        mean: m,
        rms,
        se: batch_means_se(x, SE_BLOCKS),
        n: x.len(),
    })
}

fn check_lengths(t: &[f64], y: &[f64]) -> Result<()> {
    if t.len() != y.len() {
        return Err(Error::Parse {
            what: "series".into(),
            reason: format!("{} times but {} values", t.len(), y.len()),
        });
    }
    Ok(())
}

/// Recurrence period ħΔk/(eE_x) of the drift shift, ps.
pub fn grid_period(dk: f64, e_x_kv_per_cm: f64, units: &UnitSystem) -> Result<f64> {
    if e_x_kv_per_cm == 0.0 || !e_x_kv_per_cm.is_finite() {
        return Err(Error::Config(
            "grid period undefined without a field along x".into(),
        ));
    }
    Ok(dk / (units.kdot_per_kv_per_cm() * e_x_kv_per_cm.abs()))
}

/// Result of the spectral period search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PeriodEstimate {
    Period {
        period: f64,
        /// Interpolated peak frequency, ps⁻¹.
        frequency: f64,
        /// Upper bound on the probability that white noise produces a peak
        /// this dominant.
        p_value: f64,
    },
    NoDominantPeriod {
        p_value: f64,
    },
}

impl PeriodEstimate {
    pub fn period(&self) -> Option<f64> {
        match *self {
            PeriodEstimate::Period { period, .. } => Some(period),
            PeriodEstimate::NoDominantPeriod { .. } => None,
        }
    }
}

fn power_spectrum(x: &[f64], len: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    buf[..len / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Dominant nonzero period in the window.
///
/// The mean-subtracted samples are tested for a dominant periodogram peak
/// (Fisher's g statistic), then the peak is located on a zero-padded spectrum
/// and refined by a parabola through the log-magnitudes around it.
/// Frequencies below the first natural bin are not considered.
pub fn extract_period(t: &[f64], y: &[f64], w: &SteadyWindow) -> Result<PeriodEstimate> {
    check_lengths(t, y)?;
    let r = w.indices(t)?;
    let n = r.len();
    if n < 16 {
        return Err(w.error(format!("period search needs at least 16 samples, got {n}")));
    }
    let ts = &t[r.clone()];
    let dt = (ts[n - 1] - ts[0]) / (n - 1) as f64;
    if ts
        .windows(2)
        .any(|p| ((p[1] - p[0]) - dt).abs() > 1e-6 * dt)
    {
        return Err(w.error("samples are not uniformly spaced"));
    }
    let m = mean(&y[r.clone()]);
    let x: Vec<f64> = y[r].iter().map(|v| v - m).collect();

    // Fisher's test on the natural bins 1..⌊(n−1)/2⌋.
    let coarse = power_spectrum(&x, n);
    let bins = &coarse[1..=(n - 1) / 2];
    let total: f64 = bins.iter().sum();
    if total <= 0.0 {
        return Ok(PeriodEstimate::NoDominantPeriod { p_value: 1.0 });
    }
    let g = bins.iter().cloned().fold(0.0, f64::max) / total;
    let q = bins.len() as f64;
    let p_value = (q * (1.0 - g).powf(q - 1.0)).min(1.0);
    if p_value >= PEAK_P_VALUE {
        return Ok(PeriodEstimate::NoDominantPeriod { p_value });
    }

    let len = n * PAD;
    let fine = power_spectrum(&x, len);
    let lo = PAD;
    let hi = fine.len() - 1;
    let peak = (lo..=hi)
        .max_by(|&a, &b| fine[a].total_cmp(&fine[b]))
        .expect("non-empty search range");
    let mut offset = 0.0;
    if peak > lo && peak < hi {
        let (a, b, c) = (fine[peak - 1].ln(), fine[peak].ln(), fine[peak + 1].ln());
        let denom = a - 2.0 * b + c;
        if denom.is_finite() && denom < 0.0 {
            offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    let frequency = (peak as f64 + offset) / (len as f64 * dt);
    Ok(PeriodEstimate::Period {
        period: 1.0 / frequency,
        frequency,
        p_value,
    })
}

/// Least-squares fit of a₀ + Σ_h [b_h sin(hωt) + c_h cos(hωt)].
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicFit {
    pub omega: f64,
    pub order: usize,
    pub a0: f64,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// RMS of the fit residual over the window.
    pub residual_rms: f64,
    pub window: SteadyWindow,
}

impl HarmonicFit {
    /// Fitted oscillatory part at time t (a₀ excluded).
    pub fn oscillation(&self, t: f64) -> f64 {
        (1..=self.order)
            .map(|h| {
                let (s, c) = (h as f64 * self.omega * t).sin_cos();
                self.b[h - 1] * s + self.c[h - 1] * c
            })
            .sum()
    }

    /// The zero fit of order `order`.
    pub fn zero(omega: f64, order: usize, window: SteadyWindow) -> Self {
        Self {
            omega,
            order,
            a0: 0.0,
            b: vec![0.0; order],
            c: vec![0.0; order],
            residual_rms: 0.0,
            window,
        }
    }
}

/// Fits harmonics of the fixed angular frequency `omega` (rad/ps) over the
/// window.
pub fn harmonic_fit(
    t: &[f64],
    y: &[f64],
    w: &SteadyWindow,
    omega: f64,
    order: usize,
) -> Result<HarmonicFit> {
    check_lengths(t, y)?;
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::Config(format!(
            "harmonic frequency must be positive, got {omega}"
        )));
    }
    if order == 0 {
        return Err(Error::Config("harmonic order must be at least 1".into()));
    }
    let r = w.indices(t)?;
    let n = r.len();
    let cols = 2 * order + 1;
    if n <= cols {
        return Err(Error::RankDeficient(format!(
            "{n} samples for {cols} coefficients"
        )));
    }
    let span = t[r.end - 1] - t[r.start];
    if span < 2.0 * PI / omega {
        return Err(Error::RankDeficient(format!(
            "window of {span} ps is shorter than one period of {} ps",
            2.0 * PI / omega
        )));
    }
    let ts = &t[r.clone()];
    let design = DMatrix::from_fn(n, cols, |i, j| {
        if j == 0 {
            1.0
        } else {
            let h = j.div_ceil(2) as f64;
            let arg = h * omega * ts[i];
            if j % 2 == 1 {
                arg.sin()
            } else {
                arg.cos()
            }
        }
    });
    let rhs = DVector::from_row_slice(&y[r.clone()]);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin.is_nan() || smin <= 1e-10 * smax {
        return Err(Error::RankDeficient(format!(
            "condition {} for harmonic order {order}",
            smax / smin
        )));
    }
    let coef = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let resid = &rhs - &design * &coef;
    let residual_rms = (resid.norm_squared() / n as f64).sqrt();
    Ok(HarmonicFit {
        omega,
        order,
        a0: coef[0],
        b: (0..order).map(|h| coef[2 * h + 1]).collect(),
        c: (0..order).map(|h| coef[2 * h + 2]).collect(),
        residual_rms,
        window: *w,
    })
}

/// Removes the fitted oscillation over the whole series, keeping a₀.
pub fn subtract_harmonics(t: &[f64], y: &[f64], fit: &HarmonicFit) -> Vec<f64> {
    t.iter()
        .zip(y)
        .map(|(&ti, &yi)| yi - fit.oscillation(ti))
        .collect()
}

/// Window mean shift caused by a correction and its size in standard errors
/// of the raw mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanShift {
    pub raw_mean: f64,
    pub corrected_mean: f64,
    pub delta: f64,
    pub z: f64,
}

pub fn mean_shift_z(
    t: &[f64],
    raw: &[f64],
    corrected: &[f64],
    w: &SteadyWindow,
) -> Result<MeanShift> {
    check_lengths(t, raw)?;
    check_lengths(t, corrected)?;
    let a = window_stats(t, raw, w)?;
    let b = window_stats(t, corrected, w)?;
    let delta = b.mean - a.mean;
    let z = if delta == 0.0 { 0.0 } else { delta / a.se };
    Ok(MeanShift {
        raw_mean: a.mean,
        corrected_mean: b.mean,
        delta,
        z,
    })
}
