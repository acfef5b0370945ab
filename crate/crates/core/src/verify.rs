//! The verification oracle: the single place where attack output meets
//! ground truth. Exactness means integer equality in the fixed-point domain.

use crate::attacks::AttackReport;
use crate::error::AttackError;
use crate::pipeline::GradientMatrix;

/// Per-entry grading of an [`AttackReport`] against the true matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryVerdict {
    /// `None` where unrecovered, otherwise whether the entry is exact.
    pub exact: Vec<Vec<Option<bool>>>,
    pub coverage: f64,
    pub recovered_entries: usize,
    pub inexact_entries: usize,
    pub all_recovered_exact: bool,
}

pub fn verify_recovery(
    report: &AttackReport,
    ground_truth: &GradientMatrix,
) -> Result<RecoveryVerdict, AttackError> {
    let m = ground_truth.m();
    let n = ground_truth.n();
    if report.recovered.len() != m || report.recovered.iter().any(|row| row.len() != n) {
        return Err(AttackError::ShapeMismatch(format!(
            "report shape does not match {m}x{n} ground truth"
        )));
    }
    let mut recovered_entries = 0usize;
    let mut inexact_entries = 0usize;
    let exact: Vec<Vec<Option<bool>>> = (0..m)
        .map(|x| {
            (0..n)
                .map(|i| {
                    report.recovered[x][i].map(|v| {
                        recovered_entries += 1;
                        let ok = v == ground_truth.raw(x, i);
                        if !ok {
                            inexact_entries += 1;
                        }
                        ok
                    })
                })
                .collect()
        })
        .collect();
    Ok(RecoveryVerdict {
        exact,
        coverage: recovered_entries as f64 / (m * n) as f64,
        recovered_entries,
        inexact_entries,
        all_recovered_exact: inexact_entries == 0,
    })
}
