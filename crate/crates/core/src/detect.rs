//! Analytic attack detectors over exported historian series: a rolling
//! z-score residual test for step-style injections and a periodogram peak
//! test for implant oscillations, plus interval-level scoring against
//! scenario ground truth.

use crate::attacks::LabeledInterval;
use crate::historian::Sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("bad detector config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Rolling-statistics window for the z-score test.
    pub window: usize,
    pub k_sigma: f64,
    /// Periodogram window; capped at 1024 samples (direct transform).
    pub spectral_window: usize,
    pub peak_ratio_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: 64,
            k_sigma: 6.0,
            spectral_window: 256,
            peak_ratio_threshold: 10.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.window < 8 {
            return Err(DetectError::BadConfig("window must be >= 8".to_string()));
        }
        if self.spectral_window < 16 || self.spectral_window > 1024 {
            return Err(DetectError::BadConfig(
                "spectral_window must be in 16..=1024".to_string(),
            ));
        }
        if !(self.k_sigma > 0.0) || !(self.peak_ratio_threshold > 0.0) {
            return Err(DetectError::BadConfig("thresholds must be > 0".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionKind {
    Step,
    Oscillation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Detection {
    pub tag: String,
    pub t_ms: u64,
    pub kind: DetectionKind,
    /// z value for steps, peak/median power ratio for oscillations.
    pub score: f64,
    pub dominant_freq_hz: Option<f64>,
}

/// Minimum standard deviation assumed for any window. Process values are
/// engineering-unit floats; a window that is numerically constant (for
/// example a perfectly settled level) would otherwise alarm on changes far
/// below instrument resolution.
const STD_FLOOR: f64 = 1e-3;

/// Flags samples whose residual against the trailing window's mean exceeds
/// `k_sigma` standard deviations. The tested sample is excluded from the
/// statistics, so a clean step registers on the sample it lands on.
pub fn zscore_detect(
    tag: &str,
    series: &[Sample],
    cfg: &DetectorConfig,
) -> Result<Vec<Detection>, DetectError> {
    cfg.validate()?;
    let w = cfg.window;
    let mut out = Vec::new();
    if series.len() <= w {
        return Ok(out);
    }
    for i in w..series.len() {
        let window = &series[i - w..i];
        let mean = window.iter().map(|s| s.value).sum::<f64>() / w as f64;
        let var = window
            .iter()
            .map(|s| (s.value - mean).powi(2))
            .sum::<f64>()
            / (w - 1) as f64;
        let std = var.sqrt().max(STD_FLOOR);
        let z = (series[i].value - mean).abs() / std;
        if z > cfg.k_sigma {
            out.push(Detection {
                tag: tag.to_string(),
                t_ms: series[i].t_ms,
                kind: DetectionKind::Step,
                score: z,
                dominant_freq_hz: None,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub detections: Vec<Detection>,
    /// Windows skipped for non-uniform sampling.
    pub skipped_windows: usize,
}

/// Number of segments averaged per window. Averaging sub-periodograms
/// collapses the variance of noise bins so a fixed peak/median ratio of 10
/// separates tones from white noise with margin; the dominant frequency is
/// then read off a full-window transform for resolution.
const SEGMENTS: usize = 4;

/// Periodogram peak test over half-overlapping windows. Fires when the
/// maximum averaged-bin power exceeds `peak_ratio_threshold` times the
/// median bin.
pub fn spectral_detect(
    tag: &str,
    series: &[Sample],
    cfg: &DetectorConfig,
) -> Result<SpectralReport, DetectError> {
    cfg.validate()?;
    let w = cfg.spectral_window;
    let mut detections = Vec::new();
    let mut skipped = 0;
    if series.len() < w {
        return Ok(SpectralReport {
            detections,
            skipped_windows: skipped,
        });
    }
    let stride = w / 2;
    let mut start = 0;
    while start + w <= series.len() {
        let win = &series[start..start + w];
        start += stride;
        let Some(dt_s) = uniform_dt_s(win) else {
            skipped += 1;
            continue;
        };
        let values: Vec<f64> = win.iter().map(|s| s.value).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();

        let seg_len = w / SEGMENTS;
        let bins = seg_len / 2;
        let mut avg = vec![0.0f64; bins];
        for s in 0..SEGMENTS {
            let seg = &centered[s * seg_len..(s + 1) * seg_len];
            for (k, a) in avg.iter_mut().enumerate().take(bins).skip(1) {
                *a += dft_power(seg, k) / SEGMENTS as f64;
            }
        }
        let peak = avg[1..]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sorted: Vec<f64> = avg[1..].to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        if peak < 1e-18 {
            continue; // flat window, nothing to test
        }
        let ratio = peak / median.max(1e-18);
        if ratio > cfg.peak_ratio_threshold {
            // full-window transform for the frequency estimate
            let full_bins = w / 2;
            let mut best_k = 1;
            let mut best_p = f64::NEG_INFINITY;
            for k in 1..full_bins {
                let p = dft_power(&centered, k);
                if p > best_p {
                    best_p = p;
                    best_k = k;
                }
            }
            let freq = best_k as f64 / (w as f64 * dt_s);
            detections.push(Detection {
                tag: tag.to_string(),
                t_ms: win[w - 1].t_ms,
                kind: DetectionKind::Oscillation,
                score: ratio,
                dominant_freq_hz: Some(freq),
            });
        }
    }
    Ok(SpectralReport {
        detections,
        skipped_windows: skipped,
    })
}

/// Power of DFT bin `k` via direct evaluation, normalized by length.
fn dft_power(x: &[f64], k: usize) -> f64 {
    let n = x.len() as f64;
    let mut re = 0.0;
    let mut im = 0.0;
    for (i, v) in x.iter().enumerate() {
        let phase = -std::f64::consts::TAU * k as f64 * i as f64 / n;
        re += v * phase.cos();
        im += v * phase.sin();
    }
    (re * re + im * im) / n
}

/// Sample period when the window is uniformly sampled (within 25%), else
/// `None`.
fn uniform_dt_s(win: &[Sample]) -> Option<f64> {
    let mut dts: Vec<u64> = win.windows(2).map(|p| p[1].t_ms - p[0].t_ms).collect();
    dts.sort_unstable();
    let median = dts[dts.len() / 2];
    if median == 0 {
        return None;
    }
    let tol = median / 4;
    if dts
        .iter()
        .any(|&dt| dt + tol < median || dt > median + tol)
    {
        return None;
    }
    Some(median as f64 / 1000.0)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectorMetrics {
    /// Fraction of labeled intervals with at least one detection.
    pub detection_rate: f64,
    /// Fraction of detections falling outside every labeled interval.
    pub false_alarm_rate: f64,
    /// Mean first-detection latency over detected intervals.
    pub mean_latency_ms: f64,
}

/// Scores detections against ground-truth intervals. A detection counts
/// for an interval when its tag matches (labels with tag `*` match any)
/// and it lands within `[start, end + grace_ms)` — poll pipelines delay
/// observability by up to one window.
pub fn evaluate(
    detections: &[Detection],
    labels: &[LabeledInterval],
    grace_ms: u64,
) -> DetectorMetrics {
    let in_interval = |d: &Detection, l: &LabeledInterval| {
        (l.tag == "*" || l.tag == d.tag) && d.t_ms >= l.start_ms && d.t_ms < l.end_ms + grace_ms
    };

    let mut detected = 0usize;
    let mut latency_sum = 0.0;
    for l in labels {
        let first = detections
            .iter()
            .filter(|d| in_interval(d, l))
            .map(|d| d.t_ms)
            .min();
        if let Some(t) = first {
            detected += 1;
            latency_sum += t.saturating_sub(l.start_ms) as f64;
        }
    }
    let false_alarms = detections
        .iter()
        .filter(|d| !labels.iter().any(|l| in_interval(d, l)))
        .count();

    DetectorMetrics {
        detection_rate: if labels.is_empty() {
            1.0
        } else {
            detected as f64 / labels.len() as f64
        },
        false_alarm_rate: if detections.is_empty() {
            0.0
        } else {
            false_alarms as f64 / detections.len() as f64
        },
        mean_latency_ms: if detected == 0 {
            0.0
        } else {
            latency_sum / detected as f64
        },
    }
}
