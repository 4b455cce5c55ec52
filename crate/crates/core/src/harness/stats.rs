//! Mean, median and the two rank correlations used by the run reports.

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired samples")]
    TooFewSamples,
    #[error("degenerate variance")]
    DegenerateVariance,
}

pub fn mean(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Middle element of the sorted list, or the average of the two middles.
pub fn median(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        Ok(sorted[n / 2])
    } else {
        Ok((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0)
    }
}

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewSamples);
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        var_x += (a - mx) * (a - mx);
        var_y += (b - my) * (b - my);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// Average ranks: ties receive the mean of the rank positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j share the value; 1-based ranks i+1..=j+1.
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson over average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Spot answer rows and the empirical risk baseline used by the
    // bundled cycling scenario.
    const SPOT_A: [f64; 11] = [2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 2.0];
    const SPOT_B: [f64; 11] = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0];
    const SPOT_C: [f64; 11] = [2.0, 1.0, 1.0, 1.0, 2.0, 3.0, 1.0, 3.0, 4.0, 2.0, 2.0];
    const SPOT_D: [f64; 11] = [3.0, 3.0, 3.0, 2.0, 4.0, 4.0, 2.0, 2.0, 3.0, 4.0, 4.0];
    const ACTUAL: [f64; 4] = [1.36, 0.42, 6.21, 8.31];

    #[test]
    fn spot_means_and_medians() {
        assert!((mean(&SPOT_A).unwrap() - 1.5454545454545454).abs() < 1e-12);
        assert_eq!(median(&SPOT_A).unwrap(), 2.0);
        assert!((mean(&SPOT_B).unwrap() - 1.0909090909090908).abs() < 1e-12);
        assert_eq!(median(&SPOT_B).unwrap(), 1.0);
        assert_eq!(mean(&SPOT_C).unwrap(), 2.0);
        assert_eq!(median(&SPOT_C).unwrap(), 2.0);
        assert!((mean(&SPOT_D).unwrap() - 3.090909090909091).abs() < 1e-12);
        assert_eq!(median(&SPOT_D).unwrap(), 3.0);
    }

    #[test]
    fn single_value_mean_equals_median() {
        assert_eq!(mean(&[7.0]).unwrap(), 7.0);
        assert_eq!(median(&[7.0]).unwrap(), 7.0);
        assert_eq!(median(&[1.0, 2.0]).unwrap(), 1.5);
        assert_eq!(mean(&[]), Err(StatsError::Empty));
    }

    #[test]
    fn pearson_of_spot_summaries() {
        let means: Vec<f64> = [&SPOT_A[..], &SPOT_B[..], &SPOT_C[..], &SPOT_D[..]]
            .iter()
            .map(|s| mean(s).unwrap())
            .collect();
        let medians: Vec<f64> = [&SPOT_A[..], &SPOT_B[..], &SPOT_C[..], &SPOT_D[..]]
            .iter()
            .map(|s| median(s).unwrap())
            .collect();
        let r_mean = pearson(&means, &ACTUAL).unwrap();
        let r_median = pearson(&medians, &ACTUAL).unwrap();
        assert!((r_mean - 0.94).abs() <= 0.005, "pearson mean {r_mean}");
        assert!(
            (r_median - 0.85).abs() <= 0.005,
            "pearson median {r_median}"
        );
    }

    #[test]
    fn pearson_identity_and_errors() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(pearson(&x, &x).unwrap(), 1.0);
        assert_eq!(
            pearson(&x, &[1.0, 1.0, 1.0]),
            Err(StatsError::DegenerateVariance)
        );
        assert_eq!(pearson(&x, &[1.0]), Err(StatsError::LengthMismatch(3, 1)));
    }

    #[test]
    fn spearman_of_spot_summaries() {
        let means: Vec<f64> = [&SPOT_A[..], &SPOT_B[..], &SPOT_C[..], &SPOT_D[..]]
            .iter()
            .map(|s| mean(s).unwrap())
            .collect();
        // Mean column has no ties and the same ordering as the baseline.
        assert_eq!(spearman(&means, &ACTUAL).unwrap(), 1.0);
        // Median column [2, 1, 2, 3] carries a tie at 2; average ranks
        // give [2.5, 1, 2.5, 4] against [2, 1, 3, 4]:
        // r = 4.5 / sqrt(4.5 * 5) = 0.94868...
        let medians = [2.0, 1.0, 2.0, 3.0];
        let rho = spearman(&medians, &ACTUAL).unwrap();
        assert!((rho - 0.9486832980505138).abs() < 1e-12, "rho {rho}");
        assert!((rho - 0.949).abs() <= 0.001);
    }

    #[test]
    fn spearman_reversed_is_minus_one() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(spearman(&x, &rev).unwrap(), -1.0);
    }

    #[test]
    fn average_ranks_handle_ties() {
        assert_eq!(
            average_ranks(&[2.0, 1.0, 2.0, 3.0]),
            vec![2.5, 1.0, 2.5, 4.0]
        );
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }
}
