//! Descriptive statistics and the hypothesis tests used in cohort reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Linear-interpolation quantile (numpy's default), `q` in [0,1].
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (v[hi] - v[lo]) * frac
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Yates-corrected chi-square test on `[[a, b], [c, d]]`, df = 1.
pub fn chi2_yates(table: [[f64; 2]; 2]) -> Result<TestResult> {
    let [[a, b], [c, d]] = table;
    if [a, b, c, d].iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidInput("counts must be finite and nonnegative".into()));
    }
    let n = a + b + c + d;
    let margins = [a + b, c + d, a + c, b + d];
    if margins.iter().any(|&m| m == 0.0) {
        return Err(Error::Undefined("zero marginal in 2x2 table".into()));
    }
    let corrected = ((a * d - b * c).abs() - n / 2.0).max(0.0);
    let statistic = n * corrected * corrected / margins.iter().product::<f64>();
    let p_value = chi2_sf(statistic, 1.0);
    Ok(TestResult { statistic, p_value })
}

/// Pearson chi-square test of independence on an r x c table (no correction).
pub fn chi2_contingency(table: &[Vec<f64>]) -> Result<TestResult> {
    let r = table.len();
    let c = table.first().map_or(0, Vec::len);
    if r < 2 || c < 2 || table.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidInput("contingency table must be at least 2x2".into()));
    }
    if r == 2 && c == 2 {
        return chi2_yates([[table[0][0], table[0][1]], [table[1][0], table[1][1]]]);
    }
    let row_sums: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    if row_sums.iter().chain(&col_sums).any(|&m| m == 0.0) {
        return Err(Error::Undefined("zero marginal in contingency table".into()));
    }
    let n: f64 = row_sums.iter().sum();
    let mut statistic = 0.0;
    for i in 0..r {
        for j in 0..c {
            let e = row_sums[i] * col_sums[j] / n;
            statistic += (table[i][j] - e).powi(2) / e;
        }
    }
    let df = ((r - 1) * (c - 1)) as f64;
    Ok(TestResult {
        statistic,
        p_value: chi2_sf(statistic, df),
    })
}

fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).expect("df > 0").sf(x).clamp(0.0, 1.0)
}

/// Classical one-way ANOVA F test.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidInput("anova needs at least 2 groups".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::InvalidInput(format!(
            "anova needs at least 2 values per group, got {}",
            g.len()
        )));
    }
    let k = groups.len() as f64;
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = mean(g);
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df1 = k - 1.0;
    let df2 = n - k;
    if ssw == 0.0 {
        return Err(Error::Undefined(if ssb == 0.0 {
            "all values identical".into()
        } else {
            "zero within-group variance with unequal means (infinite F)".into()
        }));
    }
    let f = (ssb / df1) / (ssw / df2);
    let p_value = if f <= 0.0 {
        1.0
    } else {
        FisherSnedecor::new(df1, df2)
            .expect("df > 0")
            .sf(f)
            .clamp(0.0, 1.0)
    };
    Ok(TestResult {
        statistic: f,
        p_value,
    })
}
