use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use crate::problems::io::{parse_table, Table};

/// Reference input and expected output for one correctness check.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessCase {
    pub id: String,
    pub input: PathBuf,
    pub expected: Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessSuite {
    pub cases: Vec<CorrectnessCase>,
    /// Maximum elementwise relative error.
    pub tolerance: f64,
    /// Wall-clock limit per case.
    pub timeout: Duration,
}

/// `|got - expected| / |expected|`, falling back to `|got|` when the
/// expected value is exactly zero. Non-finite results compare as infinite.
pub fn relative_error(got: f64, expected: f64) -> f64 {
    let err = if expected == 0.0 {
        got.abs()
    } else {
        (got - expected).abs() / expected.abs()
    };
    if err.is_nan() {
        f64::INFINITY
    } else {
        err
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub case: String,
    pub row: usize,
    pub column: usize,
    pub got: f64,
    pub expected: f64,
    pub rel_error: f64,
    pub tolerance: f64,
    /// Number of elements over tolerance in this case.
    pub count: usize,
    pub total: usize,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "case `{}`: {} of {} values exceed relative error {:e}; first at row {}, column {}: got {:e}, expected {:e} (relative error {:e})",
            self.case,
            self.count,
            self.total,
            self.tolerance,
            self.row,
            self.column,
            self.got,
            self.expected,
            self.rel_error
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    Pass { max_rel_error: f64 },
    Mismatch(Mismatch),
    Malformed(String),
}

/// Compares candidate output text with expected values.
pub fn compare_tables(case: &str, produced: &str, expected: &Table, tolerance: f64) -> Comparison {
    let got = match parse_table(produced) {
        Ok(t) => t,
        Err(e) => return Comparison::Malformed(e.to_string()),
    };
    if got.len() != expected.len() {
        return Comparison::Malformed(format!("expected {} rows, found {}", expected.len(), got.len()));
    }
    let mut first: Option<Mismatch> = None;
    let mut count = 0;
    let mut total = 0;
    let mut max_rel_error: f64 = 0.0;
    for (r, (g_row, e_row)) in got.iter().zip(expected).enumerate() {
        if g_row.len() != e_row.len() {
            return Comparison::Malformed(format!(
                "row {}: expected {} values, found {}",
                r + 1,
                e_row.len(),
                g_row.len()
            ));
        }
        for (c, (&g, &e)) in g_row.iter().zip(e_row).enumerate() {
            total += 1;
            let err = relative_error(g, e);
            max_rel_error = max_rel_error.max(err);
            if !(err <= tolerance) {
                count += 1;
                first.get_or_insert(Mismatch {
                    case: case.to_string(),
                    row: r + 1,
                    column: c + 1,
                    got: g,
                    expected: e,
                    rel_error: err,
                    tolerance,
                    count: 0,
                    total: 0,
                });
            }
        }
    }
    match first {
        Some(mut m) => {
            m.count = count;
            m.total = total;
            Comparison::Mismatch(m)
        }
        None => Comparison::Pass { max_rel_error },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_expected_uses_absolute_error() {
        assert_eq!(relative_error(1e-7, 0.0), 1e-7);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(f64::NAN, 1.0), f64::INFINITY);
    }

    #[test]
    fn boundary_at_tolerance() {
        let exp = vec![vec![1.0]];
        assert!(matches!(compare_tables("t", "1.000001\n", &exp, 1.1e-6), Comparison::Pass { .. }));
        assert!(matches!(compare_tables("t", "1.000002\n", &exp, 1e-6), Comparison::Mismatch(_)));
    }

    #[test]
    fn reports_first_mismatch_and_count() {
        let exp = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        match compare_tables("m", "1,2.5\n3,5\n", &exp, 1e-6) {
            Comparison::Mismatch(m) => {
                assert_eq!((m.row, m.column, m.count, m.total), (1, 2, 2, 4));
                assert!(m.to_string().contains("case `m`"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shape_and_parse_errors_are_malformed() {
        let exp = vec![vec![1.0, 2.0]];
        assert!(matches!(compare_tables("s", "1\n", &exp, 1e-6), Comparison::Malformed(_)));
        assert!(matches!(compare_tables("s", "1,2\n3,4\n", &exp, 1e-6), Comparison::Malformed(_)));
        assert!(matches!(compare_tables("s", "1,abc\n", &exp, 1e-6), Comparison::Malformed(_)));
        assert!(matches!(compare_tables("s", "nan,2\n", &exp, 1e-6), Comparison::Mismatch(_)));
    }

    proptest! {
        #[test]
        fn identical_output_always_passes(rows in prop::collection::vec(
            prop::collection::vec(-1e6f64..1e6, 1..5), 1..8)) {
            let text = crate::problems::io::format_table(&rows);
            let is_pass = matches!(compare_tables("p", &text, &rows, 0.0), Comparison::Pass { .. });
            prop_assert!(is_pass);
        }

        #[test]
        fn relative_error_is_scale_invariant(e in 1e-3f64..1e3, d in -0.5f64..0.5, s in 1e-3f64..1e3) {
            let a = relative_error(e * (1.0 + d), e);
            let b = relative_error(s * e * (1.0 + d), s * e);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
    }
}
