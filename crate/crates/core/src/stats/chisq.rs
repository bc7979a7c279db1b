use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const EPS: f64 = 1e-15;
const TINY: f64 = 1e-300;

/// Lanczos approximation (g = 7, n = 9) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Lower regularized incomplete gamma `P(a, x)` by its power series.
fn gamma_p_series(a: f64, x: f64) -> Result<f64> {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITERATIONS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            return Ok(sum * (-x + a * x.ln() - ln_gamma(a)).exp());
        }
    }
    Err(Error::Convergence { what: "incomplete gamma series", iterations: MAX_ITERATIONS })
}

/// Upper regularized incomplete gamma `Q(a, x)` by Lentz's continued fraction.
fn gamma_q_continued_fraction(a: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITERATIONS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            return Ok((-x + a * x.ln() - ln_gamma(a)).exp() * h);
        }
    }
    Err(Error::Convergence {
        what: "incomplete gamma continued fraction",
        iterations: MAX_ITERATIONS,
    })
}

/// Upper regularized incomplete gamma function `Q(a, x) = Γ(a, x) / Γ(a)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(x >= 0.0) || !a.is_finite() || x.is_nan() {
        return Err(Error::invalid(format!("gamma_q undefined for a={a}, x={x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        Ok((1.0 - gamma_p_series(a, x)?).clamp(0.0, 1.0))
    } else {
        Ok(gamma_q_continued_fraction(a, x)?.clamp(0.0, 1.0))
    }
}

/// Upper-tail probability of the chi-square distribution.
pub fn chi_square_sf(statistic: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(Error::invalid("chi-square needs at least one degree of freedom"));
    }
    gamma_q(dof as f64 / 2.0, statistic.max(0.0) / 2.0)
}

/// Counts with rows for the intervened axis's counterfactual values and
/// columns for the target axis's values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(rows: Vec<String>, cols: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != rows.len() || counts.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::invalid(format!(
                "contingency counts do not match a {}x{} layout",
                rows.len(),
                cols.len()
            )));
        }
        Ok(ContingencyTable { rows, cols, counts })
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.cols.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn grand_total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Removes rows and columns whose marginal total is zero.
    pub fn drop_empty_margins(&self) -> ContingencyTable {
        let keep_r: Vec<usize> = self
            .row_totals()
            .iter()
            .enumerate()
            .filter(|(_, t)| **t > 0)
            .map(|(i, _)| i)
            .collect();
        let keep_c: Vec<usize> = self
            .col_totals()
            .iter()
            .enumerate()
            .filter(|(_, t)| **t > 0)
            .map(|(j, _)| j)
            .collect();
        ContingencyTable {
            rows: keep_r.iter().map(|&i| self.rows[i].clone()).collect(),
            cols: keep_c.iter().map(|&j| self.cols[j].clone()).collect(),
            counts: keep_r
                .iter()
                .map(|&i| keep_c.iter().map(|&j| self.counts[i][j]).collect())
                .collect(),
        }
    }

    /// Cellwise sum of tables sharing the same row and column labels.
    pub fn sum(tables: &[ContingencyTable]) -> Result<ContingencyTable> {
        let (first, rest) = tables
            .split_first()
            .ok_or_else(|| Error::invalid("cannot sum zero contingency tables"))?;
        let mut out = first.clone();
        for t in rest {
            if t.rows != first.rows || t.cols != first.cols {
                return Err(Error::invalid(format!(
                    "contingency schema mismatch: {:?}x{:?} vs {:?}x{:?}",
                    first.rows, first.cols, t.rows, t.cols
                )));
            }
            for (acc, row) in out.counts.iter_mut().zip(&t.counts) {
                for (a, c) in acc.iter_mut().zip(row) {
                    *a += c;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p: f64,
}

/// Pearson chi-square test of independence on a contingency table.
///
/// Zero-marginal rows and columns are dropped first; a table with fewer than
/// two rows or columns left is not testable.
pub fn chi_square_p(table: &ContingencyTable) -> Result<ChiSquareResult> {
    let t = table.drop_empty_margins();
    let (r, c) = (t.rows.len(), t.cols.len());
    if r < 2 || c < 2 {
        return Err(Error::NotTestable(format!(
            "{r}x{c} table after removing empty margins"
        )));
    }
    let rows = t.row_totals();
    let cols = t.col_totals();
    let n = t.grand_total() as f64;
    let mut statistic = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = rows[i] as f64 * cols[j] as f64 / n;
            let diff = obs as f64 - expected;
            statistic += diff * diff / expected;
        }
    }
    let dof = (r - 1) * (c - 1);
    Ok(ChiSquareResult { statistic, dof, p: chi_square_sf(statistic, dof)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!(ln_gamma(2.0).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gamma_q_closed_forms() {
        // Q(1, x) = e^-x on both sides of the series/fraction switchover
        for x in [0.1, 1.5, 2.0, 5.0, 30.0] {
            let q = gamma_q(1.0, x).unwrap();
            assert!(((q - (-x).exp()) / (-x).exp()).abs() < 1e-10, "x={x}");
        }
        assert_eq!(gamma_q(2.5, 0.0).unwrap(), 1.0);
        assert!(gamma_q(0.0, 1.0).is_err());
    }

    #[test]
    fn critical_values() {
        assert!((chi_square_sf(3.841, 1).unwrap() - 0.05).abs() < 1e-4);
        assert!((chi_square_sf(5.991, 2).unwrap() - 0.05).abs() < 1e-4);
    }

    #[test]
    fn independence_table_has_zero_statistic() {
        // outer product of marginals [1,3] x [2,1,1] scaled by 4
        let counts = vec![vec![2, 1, 1], vec![6, 3, 3]];
        let t = ContingencyTable::new(labels(2), labels(3), counts).unwrap();
        let res = chi_square_p(&t).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.dof, 2);
        assert_eq!(res.p, 1.0);
    }

    #[test]
    fn deterministic_table_is_significant() {
        let t = ContingencyTable::new(labels(2), labels(2), vec![vec![48, 0], vec![0, 48]]).unwrap();
        let res = chi_square_p(&t).unwrap();
        assert!((res.statistic - 96.0).abs() < 1e-12);
        assert!(res.p < 1e-4);
    }

    #[test]
    fn empty_margins_are_dropped_before_testing() {
        let t = ContingencyTable::new(labels(2), labels(3), vec![vec![5, 0, 5], vec![5, 0, 5]]).unwrap();
        let res = chi_square_p(&t).unwrap();
        assert_eq!(res.dof, 1);
        let t = ContingencyTable::new(labels(2), labels(2), vec![vec![5, 0], vec![7, 0]]).unwrap();
        assert!(matches!(chi_square_p(&t), Err(Error::NotTestable(_))));
        let t = ContingencyTable::new(labels(2), labels(2), vec![vec![0, 0], vec![0, 0]]).unwrap();
        assert!(matches!(chi_square_p(&t), Err(Error::NotTestable(_))));
    }

    #[test]
    fn sum_requires_matching_schema() {
        let a = ContingencyTable::new(labels(2), labels(2), vec![vec![1, 2], vec![3, 4]]).unwrap();
        let s = ContingencyTable::sum(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(s.counts, vec![vec![2, 4], vec![6, 8]]);
        let b = ContingencyTable::new(labels(3), labels(2), vec![vec![0, 0]; 3]).unwrap();
        assert!(ContingencyTable::sum(&[a, b]).is_err());
    }

    #[test]
    fn sf_is_monotone_in_statistic() {
        for dof in 1..8 {
            let mut prev = 1.0;
            for i in 0..400 {
                let p = chi_square_sf(i as f64 * 0.25, dof).unwrap();
                assert!(p <= prev + 1e-15, "dof={dof} stat={}", i as f64 * 0.25);
                prev = p;
            }
        }
    }
}
