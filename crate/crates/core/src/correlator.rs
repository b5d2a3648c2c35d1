//! Coincidence histograms of time-tag streams.
//!
//! Bin convention: a delay `d` lands in bin `floor((d − min) / width)`; the
//! histogram range is half-open, `[min, max)`. Pairs outside the range are
//! not counted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::TimeTagStream;

/// Reference tags per parallel work item.
const CHUNK_TAGS: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelatorError {
    #[error("bin width must be positive")]
    ZeroBinWidth,
    #[error("delay range [{min}, {max}) ps is empty")]
    EmptyRange { min: i64, max: i64 },
    #[error("delay range {span} ps is not a multiple of the bin width {bin} ps")]
    RangeNotDivisible { span: i64, bin: u64 },
    #[error("channel {channel} does not exist (stream has {channel_count} channels)")]
    NoSuchChannel { channel: u8, channel_count: u8 },
    #[error("sync channel {0} carries no tags")]
    MissingSync(u8),
    #[error("window {window_ps} ps exceeds the peak period {period_ps} ps; neighbouring windows would overlap")]
    WindowExceedsPeriod { window_ps: f64, period_ps: f64 },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub bin_width_ps: u64,
    pub min_delay_ps: i64,
    pub max_delay_ps: i64,
    pub counts: Vec<u64>,
    /// Number of reference tags (channel A, or sync for start-stop).
    pub n_ref_events: u64,
    pub acquisition_duration_ps: u64,
}

impl CorrelationHistogram {
    fn empty(
        bin_width_ps: u64,
        min_delay_ps: i64,
        max_delay_ps: i64,
        n_ref_events: u64,
        acquisition_duration_ps: u64,
    ) -> Result<Self, CorrelatorError> {
        if bin_width_ps == 0 {
            return Err(CorrelatorError::ZeroBinWidth);
        }
        if max_delay_ps <= min_delay_ps {
            return Err(CorrelatorError::EmptyRange {
                min: min_delay_ps,
                max: max_delay_ps,
            });
        }
        let span = max_delay_ps - min_delay_ps;
        if span % bin_width_ps as i64 != 0 {
            return Err(CorrelatorError::RangeNotDivisible {
                span,
                bin: bin_width_ps,
            });
        }
        Ok(Self {
            bin_width_ps,
            min_delay_ps,
            max_delay_ps,
            counts: vec![0; (span / bin_width_ps as i64) as usize],
            n_ref_events,
            acquisition_duration_ps,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_lower_edge(&self, k: usize) -> f64 {
        self.min_delay_ps as f64 + (k as u64 * self.bin_width_ps) as f64
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.bin_lower_edge(k) + 0.5 * self.bin_width_ps as f64
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|k| self.bin_center(k)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin index of `delay_ps`, if inside the range.
    pub fn bin_of(&self, delay_ps: i64) -> Option<usize> {
        if delay_ps < self.min_delay_ps || delay_ps >= self.max_delay_ps {
            return None;
        }
        Some(((delay_ps - self.min_delay_ps) / self.bin_width_ps as i64) as usize)
    }

    /// Histogram mirrored about zero delay: a count at delay `d` moves to `−d`.
    /// Delays are whole picoseconds, so the bin holding `a..a+w−1` becomes the
    /// bin holding `−a−w+1..−a` and the range turns into `[1 − max, 1 − min)`.
    pub fn mirrored(&self) -> Self {
        let mut counts = self.counts.clone();
        counts.reverse();
        Self {
            min_delay_ps: 1 - self.max_delay_ps,
            max_delay_ps: 1 - self.min_delay_ps,
            counts,
            ..self.clone()
        }
    }

    /// Counts in `[lo_ps, hi_ps)`, with partially covered bins weighted by
    /// the covered fraction.
    pub fn window_sum(&self, lo_ps: f64, hi_ps: f64) -> f64 {
        let w = self.bin_width_ps as f64;
        let lo = lo_ps.max(self.min_delay_ps as f64);
        let hi = hi_ps.min(self.max_delay_ps as f64);
        if hi <= lo {
            return 0.0;
        }
        let first = ((lo - self.min_delay_ps as f64) / w).floor() as usize;
        let last = (((hi - self.min_delay_ps as f64) / w).ceil() as usize).min(self.n_bins());
        (first..last)
            .map(|k| {
                let b_lo = self.bin_lower_edge(k);
                let covered = (hi.min(b_lo + w) - lo.max(b_lo)).max(0.0);
                self.counts[k] as f64 * covered / w
            })
            .sum()
    }

    /// CSV text: header `bin_center_ps,counts`, one row per bin, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(16 * self.n_bins() + 24);
        out.push_str("bin_center_ps,counts\n");
        for (k, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.bin_center(k), c));
        }
        out
    }
}

fn check_channel(stream: &TimeTagStream, channel: u8) -> Result<(), CorrelatorError> {
    if channel >= stream.channel_count() {
        return Err(CorrelatorError::NoSuchChannel {
            channel,
            channel_count: stream.channel_count(),
        });
    }
    Ok(())
}

fn times_i64(stream: &TimeTagStream, channel: u8) -> Vec<i64> {
    stream
        .tags()
        .iter()
        .filter(|t| t.channel == channel)
        .map(|t| t.time_ps as i64)
        .collect()
}

/// Adds all pairs `(a, b)` with `b − a ∈ [min, max)` for the `a` in `chunk`.
fn sweep(chunk: &[i64], times_b: &[i64], hist: &CorrelationHistogram, counts: &mut [u64]) {
    let (min, max) = (hist.min_delay_ps, hist.max_delay_ps);
    let w = hist.bin_width_ps as i64;
    let Some(&first) = chunk.first() else {
        return;
    };
    let mut lo = times_b.partition_point(|&t| t - first < min);
    for &ta in chunk {
        while lo < times_b.len() && times_b[lo] - ta < min {
            lo += 1;
        }
        for &tb in &times_b[lo..] {
            let d = tb - ta;
            if d >= max {
                break;
            }
            counts[((d - min) / w) as usize] += 1;
        }
    }
}

/// Histogram of `t_b − t_a` over all ordered pairs of a channel-A and a
/// channel-B tag, on `[min_delay_ps, max_delay_ps)`. With `a == b` the
/// self-pairs at zero delay are included.
///
/// The sweep is linear in the number of tags times the mean number of
/// partners inside the range. Chunks of A run in parallel; the merged
/// integer histogram does not depend on the thread count.
pub fn cross_correlate_range(
    stream: &TimeTagStream,
    channel_a: u8,
    channel_b: u8,
    bin_width_ps: u64,
    min_delay_ps: i64,
    max_delay_ps: i64,
) -> Result<CorrelationHistogram, CorrelatorError> {
    check_channel(stream, channel_a)?;
    check_channel(stream, channel_b)?;
    let times_a = times_i64(stream, channel_a);
    let times_b = if channel_a == channel_b {
        times_a.clone()
    } else {
        times_i64(stream, channel_b)
    };
    let mut hist = CorrelationHistogram::empty(
        bin_width_ps,
        min_delay_ps,
        max_delay_ps,
        times_a.len() as u64,
        stream.duration_ps(),
    )?;
    let n_bins = hist.n_bins();
    let counts = times_a
        .par_chunks(CHUNK_TAGS)
        .fold(
            || vec![0u64; n_bins],
            |mut acc, chunk| {
                sweep(chunk, &times_b, &hist, &mut acc);
                acc
            },
        )
        .reduce(
            || vec![0u64; n_bins],
            |mut x, y| {
                for (a, b) in x.iter_mut().zip(&y) {
                    *a += b;
                }
                x
            },
        );
    hist.counts = counts;
    Ok(hist)
}

/// Symmetric range `[−max_delay_ps, max_delay_ps)`.
pub fn cross_correlate(
    stream: &TimeTagStream,
    channel_a: u8,
    channel_b: u8,
    bin_width_ps: u64,
    max_delay_ps: i64,
) -> Result<CorrelationHistogram, CorrelatorError> {
    cross_correlate_range(
        stream,
        channel_a,
        channel_b,
        bin_width_ps,
        -max_delay_ps,
        max_delay_ps,
    )
}

/// Histogram of the delay from each signal tag back to the most recent sync
/// tag at or before it, on `[0, range_ps)`. Signal tags before the first sync
/// are skipped.
pub fn start_stop(
    stream: &TimeTagStream,
    sync_channel: u8,
    signal_channel: u8,
    bin_width_ps: u64,
    range_ps: i64,
) -> Result<CorrelationHistogram, CorrelatorError> {
    check_channel(stream, sync_channel)?;
    check_channel(stream, signal_channel)?;
    let mut n_sync = 0u64;
    let mut last_sync: Option<i64> = None;
    let mut hist = CorrelationHistogram::empty(bin_width_ps, 0, range_ps, 0, stream.duration_ps())?;
    let w = bin_width_ps as i64;
    // Ties are ordered by channel; treat a sync at the same instant as earlier.
    let tags = stream.tags();
    let mut i = 0;
    while i < tags.len() {
        let t = tags[i].time_ps;
        let mut j = i;
        while j < tags.len() && tags[j].time_ps == t {
            if tags[j].channel == sync_channel {
                last_sync = Some(t as i64);
                n_sync += 1;
            }
            j += 1;
        }
        for tag in &tags[i..j] {
            if tag.channel == signal_channel && tag.channel != sync_channel {
                if let Some(s) = last_sync {
                    let d = tag.time_ps as i64 - s;
                    if d < range_ps {
                        hist.counts[(d / w) as usize] += 1;
                    }
                }
            }
        }
        i = j;
    }
    if n_sync == 0 {
        return Err(CorrelatorError::MissingSync(sync_channel));
    }
    hist.n_ref_events = n_sync;
    Ok(hist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakIntegral {
    /// Peak number `m`; the nominal centre is `offset + m·period`.
    pub index: i64,
    pub center_ps: f64,
    pub window_ps: f64,
    pub area: f64,
    pub area_error: f64,
}

/// Sums the histogram in a window of full width `window_ps` around every
/// peak centre `offset_ps + m·period_ps` whose whole window lies inside the
/// histogram range. Each area carries a Poisson error √area.
pub fn integrate_peaks_with_offset(
    hist: &CorrelationHistogram,
    period_ps: f64,
    window_ps: f64,
    offset_ps: f64,
) -> Result<Vec<PeakIntegral>, CorrelatorError> {
    if !(period_ps > 0.0) {
        return Err(CorrelatorError::NonPositive("period"));
    }
    if !(window_ps > 0.0) {
        return Err(CorrelatorError::NonPositive("window"));
    }
    if window_ps > period_ps {
        return Err(CorrelatorError::WindowExceedsPeriod {
            window_ps,
            period_ps,
        });
    }
    let (lo, hi) = (hist.min_delay_ps as f64, hist.max_delay_ps as f64);
    let half = 0.5 * window_ps;
    let m_min = ((lo + half - offset_ps) / period_ps).ceil() as i64;
    let m_max = ((hi - half - offset_ps) / period_ps).floor() as i64;
    Ok((m_min..=m_max)
        .map(|m| {
            let center = offset_ps + m as f64 * period_ps;
            let area = hist.window_sum(center - half, center + half);
            PeakIntegral {
                index: m,
                center_ps: center,
                window_ps,
                area,
                area_error: area.sqrt(),
            }
        })
        .collect())
}

/// Peaks centred on multiples of `period_ps`.
pub fn integrate_peaks(
    hist: &CorrelationHistogram,
    period_ps: f64,
    window_ps: f64,
) -> Result<Vec<PeakIntegral>, CorrelatorError> {
    integrate_peaks_with_offset(hist, period_ps, window_ps, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::TimeTag;

    fn stream(tags: &[(u8, u64)]) -> TimeTagStream {
        TimeTagStream::from_unsorted(
            1,
            1_000_000,
            3,
            tags.iter().map(|&(c, t)| TimeTag::new(c, t)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_pair() {
        let s = stream(&[(0, 0), (1, 100)]);
        let h = cross_correlate(&s, 0, 1, 10, 200).unwrap();
        assert_eq!(h.n_bins(), 40);
        assert_eq!(h.total(), 1);
        let k = h.bin_of(100).unwrap();
        assert_eq!(h.counts[k], 1);
        assert_eq!(h.bin_lower_edge(k), 100.0);
    }

    #[test]
    fn boundaries_are_half_open() {
        let s = stream(&[(0, 1000), (1, 800), (1, 1200)]);
        let h = cross_correlate(&s, 0, 1, 10, 200).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.counts[0], 1);
    }

    #[test]
    fn argument_errors() {
        let s = stream(&[(0, 0)]);
        assert_eq!(cross_correlate(&s, 0, 1, 0, 100), Err(CorrelatorError::ZeroBinWidth));
        assert!(matches!(
            cross_correlate(&s, 0, 1, 30, 100),
            Err(CorrelatorError::RangeNotDivisible { .. })
        ));
        assert!(matches!(
            cross_correlate(&s, 0, 7, 10, 100),
            Err(CorrelatorError::NoSuchChannel { .. })
        ));
        assert_eq!(start_stop(&s, 1, 0, 10, 100), Err(CorrelatorError::MissingSync(1)));
    }

    #[test]
    fn start_stop_basics() {
        let s = stream(&[(0, 0), (0, 13_119), (1, 15_119), (1, 20), (0, 26_238)]);
        let h = start_stop(&s, 0, 1, 100, 13_100).unwrap();
        assert_eq!(h.n_ref_events, 3);
        assert_eq!(h.total(), 2);
        assert_eq!(h.counts[20], 1);
        assert_eq!(h.counts[0], 1);
        let quiet = stream(&[(0, 0), (0, 10)]);
        assert_eq!(start_stop(&quiet, 0, 1, 10, 100).unwrap().total(), 0);
    }

    #[test]
    fn start_stop_same_instant_counts_as_zero_delay() {
        let s = stream(&[(1, 50), (0, 50)]);
        let h = start_stop(&s, 0, 1, 10, 100).unwrap();
        assert_eq!(h.counts[0], 1);
    }

    fn flat(bins: usize, width: u64, min: i64, value: u64) -> CorrelationHistogram {
        CorrelationHistogram {
            bin_width_ps: width,
            min_delay_ps: min,
            max_delay_ps: min + (bins as u64 * width) as i64,
            counts: vec![value; bins],
            n_ref_events: 0,
            acquisition_duration_ps: 0,
        }
    }

    #[test]
    fn flat_histogram_peak_areas() {
        let h = flat(1000, 100, -50_000, 7);
        let peaks = integrate_peaks(&h, 13_118.55, 2_000.0).unwrap();
        assert_eq!(peaks.len(), 7);
        for p in &peaks {
            assert!((p.area - 7.0 * 20.0).abs() < 1e-9, "{p:?}");
        }
        // Windows that do not fall on bin edges are weighted by overlap.
        let peaks = integrate_peaks(&h, 13_118.55, 1_130.0).unwrap();
        for p in &peaks {
            assert!((p.area - 7.0 * 11.3).abs() < 1e-9);
        }
    }

    #[test]
    fn full_period_windows_partition_the_histogram() {
        let mut h = flat(300, 100, -15_000, 0);
        for (k, c) in h.counts.iter_mut().enumerate() {
            *c = (k * 7 % 13) as u64;
        }
        let peaks = integrate_peaks(&h, 10_000.0, 10_000.0).unwrap();
        assert_eq!(peaks.len(), 3);
        let sum: f64 = peaks.iter().map(|p| p.area).sum();
        assert_eq!(sum, h.total() as f64);
        assert!(matches!(
            integrate_peaks(&h, 1_000.0, 2_000.0),
            Err(CorrelatorError::WindowExceedsPeriod { .. })
        ));
    }

    #[test]
    fn csv_format() {
        let h = flat(2, 10, -10, 3);
        assert_eq!(h.to_csv(), "bin_center_ps,counts\n-5,3\n5,3\n");
    }
}
