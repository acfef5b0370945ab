//! Cloud-platform attacks. Everything in this module operates on
//! [`CloudViews`] (what CP decrypted) plus declared [`SideInformation`] —
//! never on SP's secret state or the gradient matrix itself. Reports are
//! graded against ground truth elsewhere, in `verify`.

use serde::{Deserialize, Serialize};

use crate::error::AttackError;
use crate::pipeline::CloudViews;

/// What the adversary knows beyond the decrypted views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SideInformation {
    None,
    /// CP registered as an honest user and knows its own submitted row.
    OwnRow { user: usize, gradient: Vec<i64> },
    /// CP knows a single gradient entry `(user, coord) = value`.
    SingleEntry {
        user: usize,
        coord: usize,
        value: i64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackMethod {
    #[serde(rename = "combined")]
    Combined,
    #[serde(rename = "secmed-diffs")]
    SecmedDiffs,
    #[serde(rename = "cp-user")]
    CpAsUser,
    #[serde(rename = "single-known")]
    SingleKnown,
    #[serde(rename = "probabilistic")]
    Probabilistic,
}

impl std::fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AttackMethod::Combined => "combined",
            AttackMethod::SecmedDiffs => "secmed-diffs",
            AttackMethod::CpAsUser => "cp-user",
            AttackMethod::SingleKnown => "single-known",
            AttackMethod::Probabilistic => "probabilistic",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for AttackMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "combined" => AttackMethod::Combined,
            "secmed-diffs" => AttackMethod::SecmedDiffs,
            "cp-user" => AttackMethod::CpAsUser,
            "single-known" => AttackMethod::SingleKnown,
            "probabilistic" => AttackMethod::Probabilistic,
            other => {
                return Err(format!(
                    "unknown attack id '{other}' (expected combined | cp-user | \
                     single-known | probabilistic | secmed-diffs)"
                ))
            }
        })
    }
}

/// What an attack recovered. `None` entries were not recovered; exactness is
/// graded only by the verification oracle, never by the attack itself.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub method: AttackMethod,
    /// Recovered gradient raws, user-major; `None` where unrecovered.
    pub recovered: Vec<Vec<Option<i64>>>,
    /// Recovered per-coordinate additive masks, when the attack derives them.
    pub recovered_r: Vec<Option<i64>>,
    /// Recovered per-user multiplicative masks.
    pub recovered_s: Vec<Option<i64>>,
    /// Recovered per-user additive masks.
    pub recovered_t: Vec<Option<i64>>,
    /// Fraction of matrix entries recovered.
    pub coverage: f64,
    /// Solver notes: anchor pairs, derivation order, unrecovered rows.
    pub diagnostics: Vec<String>,
}

impl AttackReport {
    fn new(method: AttackMethod, m: usize, n: usize) -> Self {
        Self {
            method,
            recovered: vec![vec![None; n]; m],
            recovered_r: vec![None; n],
            recovered_s: vec![None; m],
            recovered_t: vec![None; m],
            coverage: 0.0,
            diagnostics: Vec::new(),
        }
    }

    /// A report with nothing recovered, for attacks that only derive
    /// relational information.
    pub fn empty(method: AttackMethod, m: usize, n: usize) -> Self {
        Self::new(method, m, n)
    }

    pub fn recovered_entries(&self) -> usize {
        self.recovered
            .iter()
            .map(|row| row.iter().filter(|e| e.is_some()).count())
            .sum()
    }

    fn finalize(mut self) -> Self {
        let total: usize = self.recovered.iter().map(Vec::len).sum();
        self.coverage = if total == 0 {
            0.0
        } else {
            self.recovered_entries() as f64 / total as f64
        };
        self
    }
}

/// Solution of the two-coordinate system from the multiplicative and additive
/// views of one user: `a = g * s`, `b = g + t` at coordinates `i`, `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadPairSolution {
    pub g_i: i64,
    pub g_j: i64,
    pub s: i64,
    pub t: i64,
}

fn exact_div(num: i64, den: i64) -> Option<i64> {
    if den == 0 || num % den != 0 {
        None
    } else {
        Some(num / den)
    }
}

/// Solves `a1 = g_i*s`, `a2 = g_j*s`, `b1 = g_i + t`, `b2 = g_j + t`.
///
/// The additive view hands the adversary `delta = g_j - g_i = b2 - b1`, and
/// `a2 - a1 = delta * s` then reveals the multiplicative mask; everything
/// else follows by exact integer division.
pub fn solve_pad_pair(a1: i64, a2: i64, b1: i64, b2: i64) -> Result<PadPairSolution, AttackError> {
    let delta = b2 - b1;
    if delta == 0 {
        return Err(AttackError::ZeroDelta);
    }
    let s = exact_div(a2 - a1, delta).ok_or_else(|| {
        AttackError::InconsistentViews("multiplicative mask is not an integer".into())
    })?;
    if s <= 0 {
        return Err(AttackError::InconsistentViews(format!(
            "derived mask s = {s} is not positive"
        )));
    }
    let g_i = exact_div(a1, s).ok_or_else(|| {
        AttackError::InconsistentViews("a1 is not a multiple of the derived mask".into())
    })?;
    let g_j = g_i + delta;
    let t = b1 - g_i;
    if g_j as i128 * s as i128 != a2 as i128 || g_j + t != b2 {
        return Err(AttackError::InconsistentViews(
            "solution does not reproduce the observed views".into(),
        ));
    }
    Ok(PadPairSolution { g_i, g_j, s, t })
}

/// Full-recovery attack combining the multiplicative and additive views.
///
/// Per user row, the first coordinate pair (lexicographic) whose additive
/// view entries differ anchors [`solve_pad_pair`]; the recovered mask then
/// unpads the whole row, cross-checked against the additive view. Rows that
/// are constant across all coordinates stay unrecovered (zero delta
/// everywhere), which the report states explicitly.
pub fn attack_combined(views: &CloudViews) -> AttackReport {
    let m = views.m();
    let n = views.n();
    let mut report = AttackReport::new(AttackMethod::Combined, m, n);
    for x in 0..m {
        let mut anchor = None;
        'scan: for i in 0..n {
            for j in (i + 1)..n {
                if views.v_secagg[x][j] != views.v_secagg[x][i] {
                    anchor = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((i, j)) = anchor else {
            report.diagnostics.push(format!(
                "user {x}: additive view constant across coordinates, row unrecovered"
            ));
            continue;
        };
        let sol = match solve_pad_pair(
            views.v_secpear[x][i],
            views.v_secpear[x][j],
            views.v_secagg[x][i],
            views.v_secagg[x][j],
        ) {
            Ok(sol) => sol,
            Err(e) => {
                report.diagnostics.push(format!("user {x}: {e}"));
                continue;
            }
        };
        let mut row = Vec::with_capacity(n);
        let mut consistent = true;
        for k in 0..n {
            match exact_div(views.v_secpear[x][k], sol.s) {
                Some(g) if g == views.v_secagg[x][k] - sol.t => row.push(Some(g)),
                _ => {
                    consistent = false;
                    break;
                }
            }
        }
        if consistent {
            report.recovered[x] = row;
            report.recovered_s[x] = Some(sol.s);
            report.recovered_t[x] = Some(sol.t);
            report.diagnostics.push(format!(
                "user {x}: anchored on coordinates ({i}, {j}), s = {}, t = {}",
                sol.s, sol.t
            ));
        } else {
            report.diagnostics.push(format!(
                "user {x}: views inconsistent when unpadding with s = {}, t = {}",
                sol.s, sol.t
            ));
        }
    }
    report.finalize()
}

/// Per-coordinate pairwise differences exposed by the shared additive mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecMedDiffs {
    /// For each coordinate, `(x, z, view[x] - view[z])` over all user pairs
    /// `x < z`. These equal the true gradient differences.
    pub per_coordinate: Vec<Vec<(usize, usize, i64)>>,
}

/// Shifted-distribution leakage: the common per-coordinate mask preserves all
/// inter-user differences, so CP reads them straight off the SecMed view.
pub fn attack_secmed_diffs(views: &CloudViews) -> SecMedDiffs {
    let m = views.m();
    let n = views.n();
    let per_coordinate = (0..n)
        .map(|i| {
            let mut diffs = Vec::with_capacity(m.saturating_sub(1) * m / 2);
            for x in 0..m {
                for z in (x + 1)..m {
                    diffs.push((x, z, views.v_secmed[x][i] - views.v_secmed[z][i]));
                }
            }
            diffs
        })
        .collect();
    SecMedDiffs { per_coordinate }
}

/// CP registered as an honest user: knowing its own submitted row, it reads
/// every per-coordinate mask off the SecMed view and unshifts the whole
/// matrix. Coverage is always total.
pub fn attack_cp_as_user(
    views: &CloudViews,
    side: &SideInformation,
) -> Result<AttackReport, AttackError> {
    let SideInformation::OwnRow { user, gradient } = side else {
        return Err(AttackError::WrongSideInformation("own-row"));
    };
    let m = views.m();
    let n = views.n();
    if *user >= m {
        return Err(AttackError::ShapeMismatch(format!(
            "own row index {user} out of range for {m} users"
        )));
    }
    if gradient.len() != n {
        return Err(AttackError::ShapeMismatch(format!(
            "own row has {} coordinates, views have {n}",
            gradient.len()
        )));
    }
    let r: Vec<i64> = (0..n)
        .map(|i| views.v_secmed[*user][i] - gradient[i])
        .collect();
    // The declared row must be consistent with the public mask range.
    let bound = 1i64 << views.pad_bits;
    if r.iter().any(|&ri| ri < 0 || ri >= bound) {
        return Err(AttackError::RowMismatch);
    }
    let mut report = AttackReport::new(AttackMethod::CpAsUser, m, n);
    for (x, view_row) in views.v_secmed.iter().enumerate() {
        for ((entry, &view), &ri) in report.recovered[x].iter_mut().zip(view_row).zip(&r) {
            *entry = Some(view - ri);
        }
    }
    report.recovered_r = r.into_iter().map(Some).collect();
    report.diagnostics.push(format!(
        "registered as user {user}: all {n} per-coordinate masks derived, matrix unshifted"
    ));
    Ok(report.finalize())
}

/// One known gradient entry compromises everything: it reveals the additive
/// mask of its coordinate (whole column) and the multiplicative mask of its
/// user (whole row), and each newly recovered entry repeats the trick. The
/// single known entry must be nonzero to start the multiplicative chain.
///
/// The fixpoint iteration extends the one-step attack; unrecovered entries,
/// if any remain, are reported explicitly.
pub fn attack_single_known(
    views: &CloudViews,
    side: &SideInformation,
) -> Result<AttackReport, AttackError> {
    let SideInformation::SingleEntry { user, coord, value } = side else {
        return Err(AttackError::WrongSideInformation("single-entry"));
    };
    let (x0, i0, v0) = (*user, *coord, *value);
    let m = views.m();
    let n = views.n();
    if x0 >= m || i0 >= n {
        return Err(AttackError::ShapeMismatch(format!(
            "anchor ({x0}, {i0}) out of range for {m}x{n} views"
        )));
    }
    if v0 == 0 {
        return Err(AttackError::ZeroAnchor);
    }

    let mut report = AttackReport::new(AttackMethod::SingleKnown, m, n);
    report.recovered[x0][i0] = Some(v0);
    report.diagnostics.push(format!(
        "anchor: user {x0}, coordinate {i0}, value {v0}"
    ));

    let mut rounds = 0usize;
    loop {
        let mut changed = false;
        // Any recovered nonzero entry reveals its user's multiplicative mask.
        for z in 0..m {
            if report.recovered_s[z].is_some() {
                continue;
            }
            let hit = (0..n).find_map(|k| match report.recovered[z][k] {
                Some(g) if g != 0 => Some((k, g)),
                _ => None,
            });
            if let Some((k, g)) = hit {
                match exact_div(views.v_secpear[z][k], g) {
                    Some(s) if s > 0 => {
                        report.recovered_s[z] = Some(s);
                        changed = true;
                    }
                    _ => {
                        return Err(AttackError::InconsistentViews(format!(
                            "multiplicative view of user {z} not divisible by recovered entry"
                        )));
                    }
                }
            }
        }
        // A known multiplicative mask unpads the user's whole row.
        for z in 0..m {
            let Some(s) = report.recovered_s[z] else { continue };
            for k in 0..n {
                if report.recovered[z][k].is_none() {
                    match exact_div(views.v_secpear[z][k], s) {
                        Some(g) => {
                            report.recovered[z][k] = Some(g);
                            changed = true;
                        }
                        None => {
                            return Err(AttackError::InconsistentViews(format!(
                                "row {z} not divisible by derived mask {s}"
                            )));
                        }
                    }
                }
            }
        }
        // Any recovered entry reveals its coordinate's additive mask.
        for k in 0..n {
            if report.recovered_r[k].is_some() {
                continue;
            }
            if let Some((z, g)) = (0..m).find_map(|z| report.recovered[z][k].map(|g| (z, g))) {
                report.recovered_r[k] = Some(views.v_secmed[z][k] - g);
                changed = true;
            }
        }
        // A known additive mask unshifts the coordinate's whole column.
        for k in 0..n {
            let Some(r) = report.recovered_r[k] else { continue };
            for z in 0..m {
                if report.recovered[z][k].is_none() {
                    report.recovered[z][k] = Some(views.v_secmed[z][k] - r);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        rounds += 1;
    }

    report.diagnostics.push(format!(
        "fixpoint reached after {rounds} rounds (iteration extends the one-step attack)"
    ));
    let mut unrecovered = Vec::new();
    for (z, row) in report.recovered.iter().enumerate() {
        for (k, entry) in row.iter().enumerate() {
            if entry.is_none() {
                unrecovered.push(format!("({z}, {k})"));
            }
        }
    }
    if unrecovered.is_empty() {
        report.diagnostics.push("no unrecovered entries".into());
    } else {
        report
            .diagnostics
            .push(format!("unrecovered entries: {}", unrecovered.join(", ")));
    }
    Ok(report.finalize())
}

/// Exact value collision between two users at one coordinate of the SecMed
/// view (the shared mask makes collisions meaningful: the underlying
/// gradients are equal).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EqualityConstraint {
    pub user_a: usize,
    pub user_b: usize,
    pub coord: usize,
}

/// Cross-user mask-ratio constraint `s_a / s_b = num / den` (reduced), derived
/// from a collision with nonzero multiplicative view entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatioConstraint {
    pub user_a: usize,
    pub user_b: usize,
    pub coord: usize,
    pub num: i64,
    pub den: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticOutcome {
    pub equalities: Vec<EqualityConstraint>,
    pub ratios: Vec<RatioConstraint>,
    pub report: AttackReport,
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

/// Collision-hunting attack: equal SecMed entries pin equal gradients and
/// induce a mask-ratio constraint graph over users in the SecPear view. With
/// one anchored value, the constraints propagate to every connected user's
/// row; without one, the report carries the constraint set alone.
pub fn attack_probabilistic(
    views: &CloudViews,
    anchor: Option<&SideInformation>,
) -> Result<ProbabilisticOutcome, AttackError> {
    attack_probabilistic_with(views, anchor, None)
}

/// Like [`attack_probabilistic`], optionally also counting near-collisions
/// (entries within `near_threshold` of each other). Near-collisions only
/// show up in the diagnostics; they are candidates, never used for recovery.
pub fn attack_probabilistic_with(
    views: &CloudViews,
    anchor: Option<&SideInformation>,
    near_threshold: Option<i64>,
) -> Result<ProbabilisticOutcome, AttackError> {
    let m = views.m();
    let n = views.n();
    let mut equalities = Vec::new();
    let mut ratios = Vec::new();
    let mut near_candidates = 0usize;
    for i in 0..n {
        for x in 0..m {
            for z in (x + 1)..m {
                if views.v_secmed[x][i] != views.v_secmed[z][i] {
                    if let Some(threshold) = near_threshold {
                        if (views.v_secmed[x][i] - views.v_secmed[z][i]).abs() <= threshold {
                            near_candidates += 1;
                        }
                    }
                    continue;
                }
                equalities.push(EqualityConstraint {
                    user_a: x,
                    user_b: z,
                    coord: i,
                });
                let (a, b) = (views.v_secpear[x][i], views.v_secpear[z][i]);
                if a != 0 && b != 0 {
                    // Same (nonzero) gradient and positive masks: the ratio
                    // of the views is s_x / s_z, a positive rational.
                    let g = gcd(a, b);
                    ratios.push(RatioConstraint {
                        user_a: x,
                        user_b: z,
                        coord: i,
                        num: (a / g).abs(),
                        den: (b / g).abs(),
                    });
                }
            }
        }
    }

    let mut report = AttackReport::new(AttackMethod::Probabilistic, m, n);
    report.diagnostics.push(format!(
        "{} equality constraints, {} mask-ratio constraints",
        equalities.len(),
        ratios.len()
    ));
    if near_threshold.is_some() {
        report.diagnostics.push(format!(
            "{near_candidates} near-collision candidates (not used for recovery)"
        ));
    }

    if let Some(side) = anchor {
        let SideInformation::SingleEntry { user, coord, value } = side else {
            return Err(AttackError::WrongSideInformation("single-entry"));
        };
        let (x0, i0, v0) = (*user, *coord, *value);
        if x0 >= m || i0 >= n {
            return Err(AttackError::ShapeMismatch(format!(
                "anchor ({x0}, {i0}) out of range for {m}x{n} views"
            )));
        }
        if v0 == 0 {
            return Err(AttackError::ZeroAnchor);
        }
        let s0 = exact_div(views.v_secpear[x0][i0], v0)
            .filter(|&s| s > 0)
            .ok_or_else(|| {
                AttackError::InconsistentViews("anchor does not divide its view entry".into())
            })?;
        report.recovered_s[x0] = Some(s0);
        // Propagate the anchored mask along the ratio graph.
        let mut queue = vec![x0];
        while let Some(a) = queue.pop() {
            let s_a = report.recovered_s[a].expect("queued users have masks");
            for edge in &ratios {
                let (from, to, num, den) = if edge.user_a == a {
                    (edge.user_a, edge.user_b, edge.num, edge.den)
                } else if edge.user_b == a {
                    (edge.user_b, edge.user_a, edge.den, edge.num)
                } else {
                    continue;
                };
                let _ = from;
                if report.recovered_s[to].is_some() {
                    continue;
                }
                // s_from / s_to = num / den  =>  s_to = s_from * den / num.
                let product = s_a as i128 * den as i128;
                if num != 0 && product % num as i128 == 0 {
                    let s_to = (product / num as i128) as i64;
                    if s_to > 0 {
                        report.recovered_s[to] = Some(s_to);
                        queue.push(to);
                    }
                }
            }
        }
        let mut recovered_users = 0;
        for z in 0..m {
            let Some(s) = report.recovered_s[z] else { continue };
            let mut ok = true;
            let mut row = Vec::with_capacity(n);
            for k in 0..n {
                match exact_div(views.v_secpear[z][k], s) {
                    Some(g) => row.push(Some(g)),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                report.recovered[z] = row;
                recovered_users += 1;
            }
        }
        report.diagnostics.push(format!(
            "anchor at ({x0}, {i0}) propagated to {recovered_users} users via the constraint graph"
        ));
    }

    Ok(ProbabilisticOutcome {
        equalities,
        ratios,
        report: report.finalize(),
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    // Forward-simulate views from plain integer vectors; no protocol types.
    fn views_from(
        g: &[Vec<i64>],
        r: &[i64],
        s: &[i64],
        s_y: i64,
        t: &[i64],
        pad_bits: u32,
    ) -> CloudViews {
        let m = g.len();
        let n = g[0].len();
        let median = |col: Vec<i64>| {
            let mut sorted = col;
            sorted.sort_unstable();
            sorted[(sorted.len() - 1) / 2]
        };
        let medians: Vec<i64> = (0..n)
            .map(|i| median(g.iter().map(|row| row[i]).collect()))
            .collect();
        CloudViews {
            v_secmed: (0..m)
                .map(|x| (0..n).map(|i| g[x][i] + r[i]).collect())
                .collect(),
            v_secpear: (0..m)
                .map(|x| (0..n).map(|i| g[x][i] * s[x]).collect())
                .collect(),
            v_secpear_median: medians.iter().map(|&gy| gy * s_y).collect(),
            v_secagg: (0..m)
                .map(|x| (0..n).map(|i| g[x][i] + t[x]).collect())
                .collect(),
            medians_padded: medians.iter().zip(r).map(|(&gy, &ri)| gy + ri).collect(),
            pad_bits,
        }
    }

    #[test]
    fn solve_pad_pair_examples() {
        // Simulated from g = (2, 5), s = 3, t = 7.
        let sol = solve_pad_pair(6, 15, 9, 12).unwrap();
        assert_eq!(
            sol,
            PadPairSolution {
                g_i: 2,
                g_j: 5,
                s: 3,
                t: 7
            }
        );
        // Simulated from g = (-2, 4), s = 2, t = 5.
        let sol = solve_pad_pair(-4, 8, 3, 9).unwrap();
        assert_eq!(
            sol,
            PadPairSolution {
                g_i: -2,
                g_j: 4,
                s: 2,
                t: 5
            }
        );
        assert_eq!(solve_pad_pair(6, 15, 9, 9), Err(AttackError::ZeroDelta));
    }

    #[test]
    fn solve_pad_pair_rejects_inconsistent_views() {
        // (a2 - a1) not a multiple of (b2 - b1).
        assert!(matches!(
            solve_pad_pair(6, 14, 9, 12),
            Err(AttackError::InconsistentViews(_))
        ));
        // Negative derived mask.
        assert!(matches!(
            solve_pad_pair(15, 6, 9, 12),
            Err(AttackError::InconsistentViews(_))
        ));
    }

    #[test]
    fn combined_recovers_single_user_views() {
        // The attack is per-row, so one user is enough.
        let views = views_from(&[vec![2, 5, -3]], &[10, 20, 30], &[3], 7, &[7], 32);
        let report = attack_combined(&views);
        assert_eq!(report.coverage, 1.0);
        assert_eq!(report.recovered[0], vec![Some(2), Some(5), Some(-3)]);
        assert_eq!(report.recovered_s[0], Some(3));
        assert_eq!(report.recovered_t[0], Some(7));
    }

    #[test]
    fn combined_skips_constant_rows() {
        let views = views_from(
            &[vec![4, 4, 4], vec![1, 2, 3]],
            &[5, 6, 7],
            &[2, 3],
            11,
            &[9, 13],
            32,
        );
        let report = attack_combined(&views);
        assert_eq!(report.recovered[0], vec![None, None, None]);
        assert_eq!(report.recovered[1], vec![Some(1), Some(2), Some(3)]);
        assert!((report.coverage - 0.5).abs() < 1e-12);
        assert!(report
            .diagnostics
            .iter()
            .any(|d| d.contains("user 0") && d.contains("unrecovered")));
    }

    #[test]
    fn secmed_diffs_examples() {
        let views = views_from(
            &[vec![5, 1], vec![5, 9]],
            &[100, 200],
            &[1, 1],
            1,
            &[0, 0],
            32,
        );
        let diffs = attack_secmed_diffs(&views);
        assert_eq!(diffs.per_coordinate[0], vec![(0, 1, 0)]);
        assert_eq!(diffs.per_coordinate[1], vec![(0, 1, -8)]);

        let single = views_from(&[vec![5, 1]], &[100, 200], &[1], 1, &[0], 32);
        let diffs = attack_secmed_diffs(&single);
        assert!(diffs.per_coordinate.iter().all(Vec::is_empty));
    }

    #[test]
    fn cp_as_user_zero_row_reads_masks_directly() {
        let views = views_from(
            &[vec![3, -4], vec![8, 2], vec![0, 0]],
            &[40, 50],
            &[1, 1, 1],
            1,
            &[0, 0, 0],
            32,
        );
        let side = SideInformation::OwnRow {
            user: 2,
            gradient: vec![0, 0],
        };
        let report = attack_cp_as_user(&views, &side).unwrap();
        assert_eq!(report.recovered_r, vec![Some(40), Some(50)]);
        assert_eq!(report.coverage, 1.0);
        assert_eq!(report.recovered[0], vec![Some(3), Some(-4)]);
        assert_eq!(report.recovered[1], vec![Some(8), Some(2)]);
    }

    #[test]
    fn cp_as_user_hand_instance() {
        // Three users plus CP's registered row, four coordinates.
        let g = vec![
            vec![10, -20, 30, 40],
            vec![-1, -2, -3, -4],
            vec![7, 7, 7, 7],
            vec![100, 200, 300, 400],
        ];
        let views = views_from(&g, &[1000, 2000, 3000, 4000], &[2, 3, 4, 5], 6, &[1, 2, 3, 4], 32);
        let side = SideInformation::OwnRow {
            user: 3,
            gradient: g[3].clone(),
        };
        let report = attack_cp_as_user(&views, &side).unwrap();
        assert_eq!(report.coverage, 1.0);
        for (x, row) in g.iter().enumerate() {
            let recovered: Vec<i64> = report.recovered[x].iter().map(|e| e.unwrap()).collect();
            assert_eq!(&recovered, row);
        }
    }

    #[test]
    fn cp_as_user_rejects_mismatched_row() {
        let views = views_from(&[vec![3, -4], vec![8, 2]], &[40, 50], &[1, 1], 1, &[0, 0], 32);
        // Declared row larger than the view entries: masks would be negative.
        let side = SideInformation::OwnRow {
            user: 0,
            gradient: vec![1000, 1000],
        };
        assert_eq!(
            attack_cp_as_user(&views, &side),
            Err(AttackError::RowMismatch)
        );
    }

    #[test]
    fn single_known_zero_anchor_rejected() {
        let views = views_from(&[vec![0, 1], vec![2, 3]], &[9, 9], &[2, 2], 2, &[1, 1], 32);
        let side = SideInformation::SingleEntry {
            user: 0,
            coord: 0,
            value: 0,
        };
        assert_eq!(
            attack_single_known(&views, &side),
            Err(AttackError::ZeroAnchor)
        );
    }

    #[test]
    fn single_known_recovers_through_planted_zeros() {
        // User 1 has a zero at the anchor coordinate but a nonzero elsewhere;
        // the fixpoint picks it up through the recovered column.
        let g = vec![vec![5, 8, -2], vec![0, 4, 9], vec![-7, 0, 0]];
        let views = views_from(&g, &[100, 200, 300], &[3, 5, 7], 2, &[11, 12, 13], 32);
        let side = SideInformation::SingleEntry {
            user: 0,
            coord: 0,
            value: 5,
        };
        let report = attack_single_known(&views, &side).unwrap();
        assert_eq!(report.coverage, 1.0);
        for (x, row) in g.iter().enumerate() {
            let recovered: Vec<i64> = report.recovered[x].iter().map(|e| e.unwrap()).collect();
            assert_eq!(&recovered, row);
        }
        assert!(report.diagnostics.iter().any(|d| d.contains("fixpoint")));
        assert!(report
            .diagnostics
            .iter()
            .any(|d| d.contains("no unrecovered entries")));
    }

    #[test]
    fn probabilistic_finds_planted_collision() {
        // G[0][2] == G[1][2] = 6; masks s = (4, 10) give ratio 2/5.
        let g = vec![vec![1, 2, 6], vec![3, 4, 6], vec![5, 6, 7]];
        let views = views_from(&g, &[10, 20, 30], &[4, 10, 3], 2, &[1, 2, 3], 32);
        let out = attack_probabilistic(&views, None).unwrap();
        assert_eq!(
            out.equalities,
            vec![EqualityConstraint {
                user_a: 0,
                user_b: 1,
                coord: 2
            }]
        );
        assert_eq!(out.ratios.len(), 1);
        assert_eq!((out.ratios[0].num, out.ratios[0].den), (2, 5));
        assert_eq!(out.report.coverage, 0.0);
    }

    #[test]
    fn probabilistic_all_distinct_yields_no_constraints() {
        let g = vec![vec![1, 2], vec![3, 4], vec![5, 6]];
        let views = views_from(&g, &[10, 20], &[2, 3, 4], 2, &[1, 2, 3], 32);
        let out = attack_probabilistic(&views, None).unwrap();
        assert!(out.equalities.is_empty());
        assert!(out.ratios.is_empty());
    }

    #[test]
    fn probabilistic_near_collisions_only_diagnosed() {
        let g = vec![vec![10, 2], vec![11, 40], vec![90, 41]];
        let views = views_from(&g, &[5, 5], &[2, 3, 4], 2, &[1, 2, 3], 32);
        let out = attack_probabilistic_with(&views, None, Some(1)).unwrap();
        assert!(out.equalities.is_empty());
        assert!(out
            .report
            .diagnostics
            .iter()
            .any(|d| d.contains("2 near-collision candidates")));
        assert_eq!(out.report.coverage, 0.0);
    }

    #[test]
    fn probabilistic_chain_with_anchor_recovers_connected_rows() {
        // Collisions chain users 0-1 (coord 0) and 1-2 (coord 1); user 3 is
        // disconnected. An anchor in row 0 recovers rows 0, 1, 2 only.
        let g = vec![
            vec![9, 1, 2],
            vec![9, 7, 3],
            vec![4, 7, 5],
            vec![100, 200, 300],
        ];
        let views = views_from(&g, &[10, 20, 30], &[6, 10, 15, 2], 3, &[1, 2, 3, 4], 32);
        let side = SideInformation::SingleEntry {
            user: 0,
            coord: 2,
            value: 2,
        };
        let out = attack_probabilistic(&views, Some(&side)).unwrap();
        assert_eq!(out.equalities.len(), 2);
        for x in 0..3 {
            let recovered: Vec<i64> = out.report.recovered[x].iter().map(|e| e.unwrap()).collect();
            assert_eq!(&recovered, &g[x]);
        }
        assert!(out.report.recovered[3].iter().all(Option::is_none));
        assert!((out.report.coverage - 0.75).abs() < 1e-12);
    }
}
