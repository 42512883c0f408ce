//! EEG band-feature pipeline: Hanning-windowed power spectra over
//! non-overlapped frames, per-band differential entropy under a Gaussian
//! band model, and the temporal slicing window that turns band series into
//! spatio-temporal volumes.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::graph::GridLayout;
use crate::volume::SpatioTemporalVolume;

/// Floor substituted for non-positive band power before the log.
pub const BAND_POWER_FLOOR: f64 = 1e-12;

/// One frequency band, bounds in Hz (inclusive).
#[derive(Clone, Debug, PartialEq)]
pub struct BandSpec {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    pub fn new(name: &str, low_hz: f64, high_hz: f64) -> Self {
        assert!(
            0.0 < low_hz && low_hz <= high_hz,
            "invalid band {name}: [{low_hz}, {high_hz}]"
        );
        BandSpec {
            name: name.to_string(),
            low_hz,
            high_hz,
        }
    }
}

/// The standard five EEG bands.
pub fn default_bands() -> Vec<BandSpec> {
    vec![
        BandSpec::new("delta", 1.0, 3.0),
        BandSpec::new("theta", 4.0, 7.0),
        BandSpec::new("alpha", 8.0, 13.0),
        BandSpec::new("beta", 14.0, 30.0),
        BandSpec::new("gamma", 31.0, 50.0),
    ]
}

/// Symmetric Hanning window `w_n = 0.5 (1 - cos(2 pi n / (N - 1)))`.
pub fn hanning(n: usize) -> Vec<f64> {
    assert!(n >= 2, "window needs at least two points");
    (0..n)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Windowed power-spectrum transform of a fixed frame length.
pub struct Stft {
    frame_len: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(frame_len: usize) -> Self {
        Stft {
            frame_len,
            window: hanning(frame_len),
            fft: FftPlanner::new().plan_fft_forward(frame_len),
        }
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// `|DFT(w . x)|^2` at the nonnegative frequencies: `N/2 + 1` bins.
    /// Panics on a frame of the wrong length.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(
            frame.len(),
            self.frame_len,
            "frame has {} samples, transform expects {}",
            frame.len(),
            self.frame_len
        );
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(&x, &w)| Complex::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf[..self.frame_len / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }
}

/// Mean power over the bins whose frequency falls inside the band.
/// `bin_hz` is the spacing of spectrum bins (`sample_rate / frame_len`).
pub fn band_power(power: &[f64], band: &BandSpec, bin_hz: f64) -> f64 {
    assert!(bin_hz > 0.0);
    let nyquist = (power.len() - 1) as f64 * bin_hz;
    assert!(
        band.high_hz <= nyquist,
        "band {} exceeds the Nyquist frequency {nyquist}",
        band.name
    );
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, &p) in power.iter().enumerate() {
        let f = k as f64 * bin_hz;
        if f >= band.low_hz && f <= band.high_hz {
            sum += p;
            count += 1;
        }
    }
    assert!(count > 0, "band {} covers no spectrum bins", band.name);
    sum / count as f64
}

/// Differential entropy of the band under a Gaussian model:
/// `0.5 ln(2 pi e sigma^2)` with the mean band power as the variance
/// estimate. Non-positive power is floored at [`BAND_POWER_FLOOR`]; the
/// returned flag marks floored values.
pub fn de_feature(power: &[f64], band: &BandSpec, bin_hz: f64) -> (f64, bool) {
    let p = band_power(power, band, bin_hz);
    let floored = p <= 0.0;
    let p = if floored { BAND_POWER_FLOOR } else { p };
    (
        0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * p).ln(),
        floored,
    )
}

/// Per-channel, per-band differential-entropy time series. One step spans
/// one analysis frame (1 s at the default 256 Hz / 256-point setup).
#[derive(Clone, Debug, PartialEq)]
pub struct BandSeries {
    channels: usize,
    bands: usize,
    steps: usize,
    values: Vec<f64>,
}

impl BandSeries {
    pub fn zeros(channels: usize, bands: usize, steps: usize) -> Self {
        BandSeries {
            channels,
            bands,
            steps,
            values: vec![0.0; channels * bands * steps],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn get(&self, channel: usize, band: usize, step: usize) -> f64 {
        self.values[(channel * self.bands + band) * self.steps + step]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, band: usize, step: usize, v: f64) {
        self.values[(channel * self.bands + band) * self.steps + step] = v;
    }
}

/// Keeps every `factor`-th sample; used when recordings arrive at an
/// integer multiple of the analysis rate.
pub fn decimate(signal: &[f64], factor: usize) -> Vec<f64> {
    assert!(factor >= 1);
    signal.iter().step_by(factor).copied().collect()
}

/// Runs the full frame pipeline over multichannel signals: non-overlapped
/// frames, windowed power spectrum, DE per band. Returns the series and
/// the number of floored band powers.
pub fn extract_band_series(
    signals: &[Vec<f64>],
    bands: &[BandSpec],
    frame_len: usize,
    sample_rate: f64,
) -> (BandSeries, usize) {
    assert!(!signals.is_empty(), "need at least one channel");
    let samples = signals[0].len();
    assert!(
        signals.iter().all(|s| s.len() == samples),
        "all channels must have the same length"
    );
    let steps = samples / frame_len;
    let stft = Stft::new(frame_len);
    let bin_hz = sample_rate / frame_len as f64;

    let mut series = BandSeries::zeros(signals.len(), bands.len(), steps);
    let mut floored = 0usize;
    for (ch, signal) in signals.iter().enumerate() {
        for step in 0..steps {
            let frame = &signal[step * frame_len..(step + 1) * frame_len];
            let power = stft.power_spectrum(frame);
            for (b, band) in bands.iter().enumerate() {
                let (de, hit) = de_feature(&power, band, bin_hz);
                floored += hit as usize;
                series.set(ch, b, step, de);
            }
        }
    }
    (series, floored)
}

/// Scans the series with a centered window of `width` steps, one step at a
/// time. Each position yields one volume of `width` slices whose cells
/// carry the per-band values of the channel mapped to that cell (channel
/// `k` sits at the layout's `k`-th occupied cell); unoccupied cells stay
/// zero. Returns `steps - width + 1` volumes, or none when the series is
/// shorter than the window.
pub fn slice_windows(
    series: &BandSeries,
    width: usize,
    layout: &GridLayout,
) -> Vec<SpatioTemporalVolume> {
    assert!(width >= 1);
    assert_eq!(
        series.channels(),
        layout.occupied_count(),
        "series has {} channels but the layout has {} occupied cells",
        series.channels(),
        layout.occupied_count()
    );
    if series.steps() < width {
        return Vec::new();
    }
    let count = series.steps() - width + 1;
    let (h, w, d) = (layout.height(), layout.width(), series.bands());
    let mut volumes = Vec::with_capacity(count);
    for start in 0..count {
        let mut volume = SpatioTemporalVolume::zeros(width, h, w, d);
        for t in 0..width {
            for (k, &(i, j)) in layout.cells().iter().enumerate() {
                let cell = volume.input_mut(t, i, j);
                for (b, value) in cell.iter_mut().enumerate() {
                    *value = series.get(k, b, start + t);
                }
            }
        }
        volumes.push(volume);
    }
    volumes
}
