use crate::ingest::{Behavior, LabeledSeries, SensorSample};

/// A run of `size` consecutive samples starting at `start`.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub start: usize,
    pub samples: &'a [SensorSample],
    /// Majority behaviour of the member samples.
    pub label: Behavior,
}

/// Majority label. Ties go to the most recent sample whose label is among the
/// tied classes.
pub fn majority_label(labels: &[Behavior]) -> Behavior {
    let mut counts = [0usize; Behavior::COUNT];
    for b in labels {
        counts[b.index()] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    labels
        .iter()
        .rev()
        .copied()
        .find(|b| counts[b.index()] == best)
        .unwrap_or(Behavior::Others)
}

/// Number of full windows of `size` at `stride` over `n` samples.
pub fn window_count(n: usize, size: usize, stride: usize) -> usize {
    if n < size {
        0
    } else {
        (n - size) / stride + 1
    }
}

/// Sliding windows at offsets `0, stride, 2*stride, ...` while a full window fits.
pub fn rolling_windows(series: &LabeledSeries, size: usize, stride: usize) -> Vec<Window<'_>> {
    assert!(size >= 2, "window size must be >= 2");
    assert!(stride >= 1, "stride must be >= 1");
    let samples = series.series.samples();
    (0..window_count(samples.len(), size, stride))
        .map(|w| {
            let start = w * stride;
            Window {
                start,
                samples: &samples[start..start + size],
                label: majority_label(&series.labels[start..start + size]),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SampleSeries;
    use Behavior::*;

    fn labeled(labels: Vec<Behavior>) -> LabeledSeries {
        let samples = (0..labels.len())
            .map(|i| SensorSample::new(i as i64 * 500 + 1, [i as f64; 6]))
            .collect();
        LabeledSeries::new(SampleSeries::new(samples).unwrap(), labels)
    }

    #[test]
    fn counting() {
        let s = labeled(vec![Others; 20]);
        assert_eq!(rolling_windows(&s, 10, 1).len(), 11);
        assert_eq!(rolling_windows(&s, 10, 10).len(), 2);
        assert_eq!(rolling_windows(&s, 10, 3).len(), 4);
        let s = labeled(vec![Others; 9]);
        assert!(rolling_windows(&s, 10, 1).is_empty());
    }

    #[test]
    fn tie_goes_to_last_sample() {
        let labels = vec![
            Feeding, Feeding, Feeding, Feeding, Feeding, Lying, Lying, Lying, Lying, Lying,
        ];
        assert_eq!(majority_label(&labels), Lying);
        let s = labeled(labels);
        assert_eq!(rolling_windows(&s, 10, 1)[0].label, Lying);
    }

    #[test]
    fn strict_majority_wins() {
        let labels = [Feeding, Feeding, Feeding, Lying, Lying, Others];
        assert_eq!(majority_label(&labels), Feeding);
    }
}
