//! Chi-square statistic and its upper-tail p-value (1 degree of freedom).

use libm::{exp, fabs, sqrt};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};

/// 2x2 contingency table of document counts for (token presence, class
/// membership).
///
/// `o11` = present & class c, `o12` = present & not c, `o21` = absent &
/// class c, `o22` = absent & not c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub o11: u64,
    pub o12: u64,
    pub o21: u64,
    pub o22: u64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.o11 + self.o12 + self.o21 + self.o22
    }

    /// True when a row or column marginal is zero: the table carries no
    /// information about association.
    pub fn is_degenerate(&self) -> bool {
        let r1 = self.o11 + self.o12;
        let r2 = self.o21 + self.o22;
        let c1 = self.o11 + self.o21;
        let c2 = self.o12 + self.o22;
        r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0
    }
}

/// Result of [`chi_square`]: the statistic plus a degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub chi2: f64,
    pub degenerate: bool,
}

/// Chi-square test of independence on a 2x2 table, without continuity
/// correction: sum over cells of `(O - E)^2 / E` with `E_ij = row_i *
/// col_j / total`.
///
/// A degenerate table (zero row or column marginal) yields 0 with the
/// `degenerate` flag set.
pub fn chi_square(table: &ContingencyTable) -> CoreResult<ChiSquareResult> {
    let total = table.total();
    if total == 0 {
        return Err(CoreError::InvalidArgument("contingency table total is 0".into()));
    }
    if table.is_degenerate() {
        return Ok(ChiSquareResult { chi2: 0.0, degenerate: true });
    }
    let n = total as f64;
    let r = [(table.o11 + table.o12) as f64, (table.o21 + table.o22) as f64];
    let c = [(table.o11 + table.o21) as f64, (table.o12 + table.o22) as f64];
    let o = [[table.o11 as f64, table.o12 as f64], [table.o21 as f64, table.o22 as f64]];
    let mut chi2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = r[i] * c[j] / n;
            let d = o[i][j] - e;
            chi2 += d * d / e;
        }
    }
    Ok(ChiSquareResult { chi2, degenerate: false })
}

/// Complementary error function.
///
/// Rational Chebyshev approximation (Numerical Recipes `erfcc`), fractional
/// error below 1.2e-7 everywhere.
pub fn erfc(x: f64) -> f64 {
    let z = fabs(x);
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * exp(
            -z * z - 1.26551223
                + t * (1.00002368
                    + t * (0.37409196
                        + t * (0.09678418
                            + t * (-0.18628806
                                + t * (0.27886807
                                    + t * (-1.13520398
                                        + t * (1.48851587
                                            + t * (-0.82215223 + t * 0.17087277)))))))),
        );
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Upper-tail probability of a chi-square distribution with 1 degree of
/// freedom: `p = erfc(sqrt(chi2 / 2))`.
pub fn p_value_chi2_1dof(chi2: f64) -> CoreResult<f64> {
    if chi2 < 0.0 {
        return Err(CoreError::InvalidArgument("chi2 must be non-negative".into()));
    }
    Ok(erfc(sqrt(chi2 / 2.0)).clamp(0.0, 1.0))
}
