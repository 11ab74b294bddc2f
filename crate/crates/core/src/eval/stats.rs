use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Two-tailed significance level.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    /// Infinite (with the sign of the mean difference) when all differences
    /// are equal and non-zero.
    pub t: f64,
    pub df: usize,
    /// Two-tailed p-value.
    pub p_value: f64,
    pub significant: bool,
}

fn students_t(df: usize) -> Result<StudentsT> {
    StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::param("df", e.to_string()))
}

/// CDF of Student's t distribution with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: usize) -> Result<f64> {
    Ok(students_t(df)?.cdf(t))
}

/// Two-tailed critical value: `|t|` beyond it has probability `level`.
pub fn t_critical(df: usize, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param("level", format!("must lie in (0, 1), got {level}")));
    }
    Ok(students_t(df)?.inverse_cdf(1.0 - level / 2.0))
}

/// Two-tailed paired t-test on `d = a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::param("b", "sample lengths differ"));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::param("a", "need at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;

    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult { t: 0.0, df, p_value: 1.0, significant: false }
        } else {
            TTestResult { t: f64::INFINITY.copysign(mean), df, p_value: 0.0, significant: true }
        });
    }

    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = students_t(df)?;
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    let critical = dist.inverse_cdf(1.0 - SIGNIFICANCE_LEVEL / 2.0);
    Ok(TTestResult { t, df, p_value, significant: t.abs() > critical })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_samples() {
        let a = [0.3, 0.5, 0.7];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!(r, TTestResult { t: 0.0, df: 2, p_value: 1.0, significant: false });
    }

    #[test]
    fn constant_shift_is_infinite() {
        let r = paired_t_test(&[0.5, 0.6, 0.7], &[0.4, 0.5, 0.6]).unwrap();
        assert!(r.t.is_infinite() || r.t.abs() > 1e12);
        assert!(r.significant);
        let r = paired_t_test(&[1.0, 2.0], &[2.0, 3.0]).unwrap();
        assert_eq!(r.t, f64::NEG_INFINITY);
    }

    #[test]
    fn hand_computed_statistic() {
        // d = [1, 2, 3]: mean 2, sd 1, t = 2 * sqrt(3)
        let r = paired_t_test(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2);
        // critical value for df = 2 is 4.303
        assert!(!r.significant);
    }

    #[test]
    fn critical_values() {
        assert!((t_critical(29, 0.05).unwrap() - 2.045).abs() < 5e-4);
        assert!((t_critical(14, 0.05).unwrap() - 2.145).abs() < 5e-4);
        assert!((t_cdf(0.0, 7).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn input_errors() {
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
        assert!(t_critical(5, 0.0).is_err());
    }
}
