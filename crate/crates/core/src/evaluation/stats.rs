use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

impl CorrelationResult {
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_value)
    }
}

/// Sample Pearson correlation with a two-tailed p-value from Student's t
/// distribution on `n - 2` degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::Stats(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Stats(format!("need at least 3 pairs, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Stats("non-finite input".into()));
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Stats("zero variance: correlation undefined".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(CorrelationResult {
        r,
        p_value: two_tailed_p(r, n),
        n,
    })
}

/// `P(|T| >= |t|)` for `t = r sqrt(df / (1 - r^2))`, computed as the
/// regularized incomplete beta `I_{df/(df+t^2)}(df/2, 1/2)`, which keeps
/// precision for very small p.
fn two_tailed_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let one_minus_r2 = 1.0 - r * r;
    if one_minus_r2 <= 0.0 {
        return 0.0;
    }
    // df / (df + t^2) simplifies to 1 - r^2
    beta_reg(df / 2.0, 0.5, one_minus_r2).clamp(0.0, 1.0)
}

/// `***` for p < .001, `**` for p < .01, nothing otherwise.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else {
        ""
    }
}

/// Coefficient without a leading zero (`-.12`, `.03`), two decimals, or
/// three when |r| < .01 (`.005`).
pub fn format_coefficient(r: f64) -> String {
    let decimals = if r.abs() < 0.01 && r != 0.0 { 3 } else { 2 };
    let s = format!("{:.*}", decimals, r.abs());
    let s = s.strip_prefix('0').unwrap_or(&s).to_owned();
    let zero = s.trim_start_matches('.').chars().all(|c| c == '0');
    if r < 0.0 && !zero {
        format!("-{s}")
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_lines() {
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(r.r, 1.0);
        assert_eq!(r.p_value, 0.0);
        let r = pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap();
        assert_eq!(r.r, -1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    /// r = 0.8 at n = 4: t = 0.8 * sqrt(2 / 0.36) = 1.8856, two-tailed
    /// p = 0.2 (tabulated critical value of r at alpha = .2, df = 2 is 0.8).
    #[test]
    fn p_value_reference() {
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.r - 0.8).abs() < 1e-12);
        assert!((r.p_value - 0.2).abs() < 1e-9, "{}", r.p_value);
    }

    #[test]
    fn p_value_matches_t_distribution_cdf() {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 1.7).sin() + v * 0.05).collect();
        let res = pearson(&x, &y).unwrap();
        let df = 28.0;
        let t = res.r * (df / (1.0 - res.r * res.r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        let p = 2.0 * (1.0 - dist.cdf(t.abs()));
        assert!((res.p_value - p).abs() < 1e-10);
    }

    #[test]
    fn stars_and_format() {
        assert_eq!(significance_stars(0.0005), "***");
        assert_eq!(significance_stars(0.005), "**");
        assert_eq!(significance_stars(0.01), "");
        assert_eq!(format_coefficient(-0.12), "-.12");
        assert_eq!(format_coefficient(0.005), ".005");
        assert_eq!(format_coefficient(0.03), ".03");
        assert_eq!(format_coefficient(-0.26), "-.26");
        assert_eq!(format_coefficient(1.0), "1.00");
        assert_eq!(format_coefficient(-0.001), "-.001");
    }
}
