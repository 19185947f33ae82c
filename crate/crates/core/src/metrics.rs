//! Agreement metrics between a predicted and an observed series of volumes.
//!
//! Mean absolute percentage error is deliberately absent: it penalizes
//! over-prediction and under-prediction unequally. The median symmetric accuracy
//! works on `|ln(p/o)|` and does not.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("series lengths differ: {predicted} predicted vs {observed} observed")]
    LengthMismatch { predicted: usize, observed: usize },
    #[error("series are empty")]
    EmptySeries,
    #[error("value at index {0} is not strictly positive")]
    NonPositiveValue(usize),
}

/// Aligned predicted/observed values.
#[derive(Debug, Clone, Copy)]
pub struct SeriesPair<'a> {
    predicted: &'a [f64],
    observed: &'a [f64],
}

impl<'a> SeriesPair<'a> {
    pub fn new(predicted: &'a [f64], observed: &'a [f64]) -> Result<Self, MetricsError> {
        if predicted.len() != observed.len() {
            return Err(MetricsError::LengthMismatch { predicted: predicted.len(), observed: observed.len() });
        }
        if predicted.is_empty() {
            return Err(MetricsError::EmptySeries);
        }
        Ok(Self { predicted, observed })
    }

    pub fn predicted(&self) -> &[f64] {
        self.predicted
    }

    pub fn observed(&self) -> &[f64] {
        self.observed
    }

    pub fn swapped(&self) -> Self {
        Self { predicted: self.observed, observed: self.predicted }
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + 'a {
        self.predicted.iter().copied().zip(self.observed.iter().copied())
    }
}

/// Root mean squared difference `√(Σ(p − o)² / N)`.
pub fn rms_error(pair: &SeriesPair<'_>) -> f64 {
    let n = pair.predicted.len() as f64;
    (pair.pairs().map(|(p, o)| (p - o).powi(2)).sum::<f64>() / n).sqrt()
}

/// Median of a non-empty slice; even lengths average the two central values.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    }
}

/// Median symmetric accuracy in percent: `100 · (exp(median |ln(p/o)|) − 1)`.
pub fn median_symmetric_accuracy(pair: &SeriesPair<'_>) -> Result<f64, MetricsError> {
    let mut log_ratios = Vec::with_capacity(pair.predicted.len());
    for (i, (p, o)) in pair.pairs().enumerate() {
        if !(p > 0.0 && o > 0.0) {
            return Err(MetricsError::NonPositiveValue(i));
        }
        log_ratios.push((p.ln() - o.ln()).abs());
    }
    Ok(100.0 * median(&mut log_ratios).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-300)
    }

    #[test]
    fn rms_examples() {
        let s = [1.0, 2.0, 3.0];
        assert_eq!(rms_error(&SeriesPair::new(&s, &s).unwrap()), 0.0);
        assert_eq!(rms_error(&SeriesPair::new(&[3.0], &[0.0]).unwrap()), 3.0);
        let r = rms_error(&SeriesPair::new(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap());
        assert!(close(r, (2.0f64 / 3.0).sqrt()));
        assert!(close(r, 0.816_496_580_927_726));
    }

    #[test]
    fn msa_examples() {
        let s = [0.5, 2.0, 7.0];
        assert_eq!(median_symmetric_accuracy(&SeriesPair::new(&s, &s).unwrap()), Ok(0.0));
        let e = std::f64::consts::E;
        let p = [e, 2.0 * e, 5.0 * e, 0.1 * e];
        let o = [1.0, 2.0, 5.0, 0.1];
        let m = median_symmetric_accuracy(&SeriesPair::new(&p, &o).unwrap()).unwrap();
        assert!(close(m, 100.0 * (e - 1.0)));
        assert!(close(m, 171.828_182_845_904_5));
    }

    #[test]
    fn even_length_median_averages() {
        // |ln ratios| = ln 2, ln 4 -> median ln(2·√2)... mean of logs = ln(√8).
        let m = median_symmetric_accuracy(&SeriesPair::new(&[2.0, 4.0], &[1.0, 1.0]).unwrap()).unwrap();
        assert!(close(m, 100.0 * (8f64.sqrt() - 1.0)));
    }

    #[test]
    fn errors() {
        assert_eq!(
            SeriesPair::new(&[1.0], &[1.0, 2.0]).unwrap_err(),
            MetricsError::LengthMismatch { predicted: 1, observed: 2 }
        );
        assert_eq!(SeriesPair::new(&[], &[]).unwrap_err(), MetricsError::EmptySeries);
        let pair = SeriesPair::new(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(median_symmetric_accuracy(&pair), Err(MetricsError::NonPositiveValue(1)));
    }

    proptest! {
        #[test]
        fn msa_symmetric_and_scale_free(
            values in proptest::collection::vec((1e-6f64..1e3, 1e-6f64..1e3), 1..30),
            scale in 1e-3f64..1e3,
        ) {
            let (p, o): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
            let pair = SeriesPair::new(&p, &o).unwrap();
            let m = median_symmetric_accuracy(&pair).unwrap();
            let swapped = median_symmetric_accuracy(&pair.swapped()).unwrap();
            prop_assert!((m - swapped).abs() <= 1e-9 * m.max(1.0));
            let ps: Vec<f64> = p.iter().map(|x| x * scale).collect();
            let os: Vec<f64> = o.iter().map(|x| x * scale).collect();
            let scaled = median_symmetric_accuracy(&SeriesPair::new(&ps, &os).unwrap()).unwrap();
            prop_assert!((m - scaled).abs() <= 1e-6 * m.max(1.0));
            prop_assert!(m >= 0.0);
        }

        #[test]
        fn rms_nonnegative_zero_iff_equal(p in proptest::collection::vec(-1e3f64..1e3, 1..20), bump in 0usize..20) {
            let pair = SeriesPair::new(&p, &p).unwrap();
            prop_assert_eq!(rms_error(&pair), 0.0);
            let mut o = p.clone();
            let i = bump % o.len();
            o[i] += 1.0;
            let r = rms_error(&SeriesPair::new(&p, &o).unwrap());
            prop_assert!(r > 0.0);
            prop_assert_eq!(r, rms_error(&SeriesPair::new(&o, &p).unwrap()));
        }
    }
}
