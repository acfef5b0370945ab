//! Honest/poisoned population generators, end-to-end trials, and the
//! distinct-pad "fix" variants showing that replacing the shared pads with
//! independent ones destroys protocol correctness.
//!
//! Gradients are synthesized rather than trained: the claims under test
//! concern the protocol algebra, so a clustered-Gaussian surrogate (or a tiny
//! shared linear-regression task) keeps trials sub-second.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    attack_combined, attack_cp_as_user, attack_probabilistic, attack_secmed_diffs,
    attack_single_known, AttackMethod, AttackReport, SideInformation,
};
use crate::error::{NumericError, PipelineError};
use crate::fixed::{median_int, median_int_with_source};
use crate::he::BackendKind;
use crate::pipeline::{
    run_round, stream_rng, GradientMatrix, RoundConfig, RoundResult, WeightFn,
};
use crate::stats::{pearson, StatVector};
use crate::verify::{verify_recovery, RecoveryVerdict};

const STREAM_POPULATION: u64 = 10;
const STREAM_FIX_SECMED: u64 = 11;
const STREAM_FIX_SECPEAR: u64 = 12;
const HONEST_NOISE_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HonestModel {
    /// Rows are a shared base direction plus small per-user Gaussian noise.
    ClusteredGaussian,
    /// Rows are true least-squares gradients of a shared linear task on
    /// per-user synthetic data.
    LinearTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Poison {
    None,
    SignFlip,
    Scale { factor: f64 },
    GaussianNoise { sigma: f64 },
}

/// Scenario-level knobs: population shape, attacker-free protocol parameters,
/// and the master seed everything derives from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub m: usize,
    pub n: usize,
    pub honest_model: HonestModel,
    pub poison: Poison,
    pub poison_fraction: f64,
    pub pad_bits: u32,
    pub mult_pad_bits: u32,
    pub scale_bits: u32,
    pub backend: BackendKind,
    pub key_bits: u32,
    pub weight_function: WeightFn,
    pub master_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            m: 10,
            n: 32,
            honest_model: HonestModel::ClusteredGaussian,
            poison: Poison::SignFlip,
            poison_fraction: 0.2,
            pad_bits: 32,
            mult_pad_bits: 20,
            scale_bits: 16,
            backend: BackendKind::Transparent,
            key_bits: 512,
            weight_function: WeightFn::LogOdds,
            master_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.m < 3 || self.n < 2 {
            return Err(PipelineError::Invalid(format!(
                "population needs m >= 3 and n >= 2, got {}x{}",
                self.m, self.n
            )));
        }
        if !(0.0..0.5).contains(&self.poison_fraction) {
            return Err(PipelineError::Invalid(format!(
                "poison_fraction {} outside [0, 0.5): the median defense assumes a poisoned minority",
                self.poison_fraction
            )));
        }
        if self.backend == BackendKind::Paillier && self.key_bits < 512 {
            return Err(PipelineError::Invalid(
                "paillier key_bits must be at least 512".into(),
            ));
        }
        if self.scale_bits == 0 || self.scale_bits > 30 {
            return Err(PipelineError::Invalid("scale_bits out of range".into()));
        }
        Ok(())
    }

    pub fn round_config(&self) -> RoundConfig {
        RoundConfig {
            scale_bits: self.scale_bits,
            pad_bits: self.pad_bits,
            mult_pad_bits: self.mult_pad_bits,
            backend: self.backend,
            key_bits: self.key_bits,
            weight_fn: self.weight_function,
        }
    }
}

/// A generated population: the ground-truth matrix, which rows were
/// poisoned, and the shared honest direction (for defense metrics).
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub matrix: GradientMatrix,
    pub poison_mask: Vec<bool>,
    pub base: StatVector,
}

/// Draws honest rows around a shared direction, then applies the poison
/// transform to the first `floor(poison_fraction * m)` rows. Deterministic
/// given `seed`.
pub fn gen_population(config: &ScenarioConfig, seed: u64) -> Result<Population, PipelineError> {
    config.validate()?;
    let mut rng = stream_rng(seed, STREAM_POPULATION);
    let m = config.m;
    let n = config.n;

    let (base, mut rows): (Vec<f64>, Vec<Vec<f64>>) = match config.honest_model {
        HonestModel::ClusteredGaussian => {
            let base: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let rows = (0..m)
                .map(|_| {
                    base.iter()
                        .map(|&b| b + HONEST_NOISE_SIGMA * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            (base, rows)
        }
        HonestModel::LinearTask => {
            let w_star: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            // Expected least-squares gradient at the zero model is -2 w*.
            let base: Vec<f64> = w_star.iter().map(|w| -2.0 * w).collect();
            let samples = 8 * n;
            let rows = (0..m)
                .map(|_| {
                    let mut grad = vec![0.0; n];
                    for _ in 0..samples {
                        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                        let noise: f64 = 0.1 * rng.sample::<f64, _>(StandardNormal);
                        let y: f64 =
                            x.iter().zip(&w_star).map(|(a, b)| a * b).sum::<f64>() + noise;
                        for (g, &xi) in grad.iter_mut().zip(&x) {
                            *g -= 2.0 * y * xi / samples as f64;
                        }
                    }
                    grad
                })
                .collect();
            (base, rows)
        }
    };

    let poisoned = match config.poison {
        Poison::None => 0,
        _ => (config.poison_fraction * m as f64).floor() as usize,
    };
    let mut mask = vec![false; m];
    for (z, row) in rows.iter_mut().enumerate().take(poisoned) {
        mask[z] = true;
        match config.poison {
            Poison::None => unreachable!(),
            Poison::SignFlip => row.iter_mut().for_each(|v| *v = -*v),
            Poison::Scale { factor } => row.iter_mut().for_each(|v| *v *= factor),
            Poison::GaussianNoise { sigma } => row
                .iter_mut()
                .for_each(|v| *v += sigma * rng.sample::<f64, _>(StandardNormal)),
        }
    }

    Ok(Population {
        matrix: GradientMatrix::from_f64_rows(&rows, config.scale_bits)?,
        poison_mask: mask,
        base: StatVector::from_f64(&base, config.scale_bits)?,
    })
}

/// Weights and correlations split by honest/poisoned, plus the aggregate's
/// correlation with the honest base direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseMetrics {
    pub poisoned_users: usize,
    pub min_honest_weight: Option<f64>,
    pub max_poisoned_weight: Option<f64>,
    pub min_honest_rho: Option<f64>,
    pub max_poisoned_rho: Option<f64>,
    pub aggregate_rho_with_base: Option<f64>,
}

fn defense_metrics(round: &RoundResult, population: &Population) -> DefenseMetrics {
    let mut min_honest_weight: Option<f64> = None;
    let mut max_poisoned_weight: Option<f64> = None;
    let mut min_honest_rho: Option<f64> = None;
    let mut max_poisoned_rho: Option<f64> = None;
    for (x, &poisoned) in population.poison_mask.iter().enumerate() {
        let w = round.weights[x];
        if poisoned {
            max_poisoned_weight = Some(max_poisoned_weight.map_or(w, |m: f64| m.max(w)));
            if let Some(r) = round.rho[x] {
                max_poisoned_rho = Some(max_poisoned_rho.map_or(r, |m: f64| m.max(r)));
            }
        } else {
            min_honest_weight = Some(min_honest_weight.map_or(w, |m: f64| m.min(w)));
            if let Some(r) = round.rho[x] {
                min_honest_rho = Some(min_honest_rho.map_or(r, |m: f64| m.min(r)));
            }
        }
    }
    DefenseMetrics {
        poisoned_users: population.poison_mask.iter().filter(|&&p| p).count(),
        min_honest_weight,
        max_poisoned_weight,
        min_honest_rho,
        max_poisoned_rho,
        aggregate_rho_with_base: pearson(&round.aggregate, &population.base).ok(),
    }
}

/// One attack's run inside a trial, already graded against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub method: AttackMethod,
    pub report: AttackReport,
    pub verdict: RecoveryVerdict,
    /// Probabilistic attack only: constraint counts.
    pub equality_constraints: Option<usize>,
    pub ratio_constraints: Option<usize>,
    /// SecMed-diffs only: whether every pairwise difference matched ground truth.
    pub diffs_exact: Option<bool>,
}

/// Per-trial correctness deltas of the distinct-pad fix variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixVariantSummary {
    pub secmed_wrong_fraction: f64,
    pub secmed_mean_abs_delta: f64,
    pub secpear_mean_abs_delta_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial_index: u64,
    pub round: RoundResult,
    pub population: Population,
    pub attacks: Vec<AttackOutcome>,
    pub defense: DefenseMetrics,
    pub fix: FixVariantSummary,
}

pub fn all_attacks() -> Vec<AttackMethod> {
    vec![
        AttackMethod::Combined,
        AttackMethod::SecmedDiffs,
        AttackMethod::CpAsUser,
        AttackMethod::SingleKnown,
        AttackMethod::Probabilistic,
    ]
}

fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    stream_rng(master_seed, 0x8000_0000_0000_0000 | trial_index).gen()
}

/// First nonzero entry of the matrix in row-major order, used as the declared
/// side information for the single-known-gradient attack.
fn first_nonzero_entry(g: &GradientMatrix) -> Option<(usize, usize, i64)> {
    (0..g.m()).find_map(|x| (0..g.n()).find_map(|i| match g.raw(x, i) {
        0 => None,
        v => Some((x, i, v)),
    }))
}

/// Runs population generation, one full round, the requested attacks, and the
/// fix variants; everything is a pure function of `(config, trial_index)`.
pub fn run_trial(
    config: &ScenarioConfig,
    attacks: &[AttackMethod],
    trial_index: u64,
) -> Result<TrialOutcome, PipelineError> {
    let seed = trial_seed(config.master_seed, trial_index);
    let population = gen_population(config, seed)?;
    let g = &population.matrix;
    let round = run_round(g, &config.round_config(), seed)?;

    let mut outcomes = Vec::with_capacity(attacks.len());
    for &method in attacks {
        let outcome = match method {
            AttackMethod::Combined => {
                let report = attack_combined(&round.views);
                let verdict = verify_recovery(&report, g).map_err(invalid)?;
                AttackOutcome {
                    method,
                    report,
                    verdict,
                    equality_constraints: None,
                    ratio_constraints: None,
                    diffs_exact: None,
                }
            }
            AttackMethod::SecmedDiffs => {
                let diffs = attack_secmed_diffs(&round.views);
                let mut exact = true;
                for (i, coord) in diffs.per_coordinate.iter().enumerate() {
                    for &(x, z, d) in coord {
                        if d != g.raw(x, i) - g.raw(z, i) {
                            exact = false;
                        }
                    }
                }
                let mut report = AttackReport::empty(AttackMethod::SecmedDiffs, g.m(), g.n());
                report.diagnostics.push(format!(
                    "{} pairwise differences per coordinate, ground-truth match: {exact}",
                    g.m() * g.m().saturating_sub(1) / 2
                ));
                let verdict = verify_recovery(&report, g).map_err(invalid)?;
                AttackOutcome {
                    method,
                    report,
                    verdict,
                    equality_constraints: None,
                    ratio_constraints: None,
                    diffs_exact: Some(exact),
                }
            }
            AttackMethod::CpAsUser => {
                // CP registers as the last (honest) user and knows its row.
                let own = g.m() - 1;
                let side = SideInformation::OwnRow {
                    user: own,
                    gradient: g.rows()[own].clone(),
                };
                let report = attack_cp_as_user(&round.views, &side).map_err(invalid)?;
                let verdict = verify_recovery(&report, g).map_err(invalid)?;
                AttackOutcome {
                    method,
                    report,
                    verdict,
                    equality_constraints: None,
                    ratio_constraints: None,
                    diffs_exact: None,
                }
            }
            AttackMethod::SingleKnown => {
                let Some((x, i, v)) = first_nonzero_entry(g) else {
                    return Err(PipelineError::Invalid(
                        "all-zero matrix: no anchor for single-known attack".into(),
                    ));
                };
                let side = SideInformation::SingleEntry {
                    user: x,
                    coord: i,
                    value: v,
                };
                let report = attack_single_known(&round.views, &side).map_err(invalid)?;
                let verdict = verify_recovery(&report, g).map_err(invalid)?;
                AttackOutcome {
                    method,
                    report,
                    verdict,
                    equality_constraints: None,
                    ratio_constraints: None,
                    diffs_exact: None,
                }
            }
            AttackMethod::Probabilistic => {
                let out = attack_probabilistic(&round.views, None).map_err(invalid)?;
                let verdict = verify_recovery(&out.report, g).map_err(invalid)?;
                AttackOutcome {
                    method,
                    report: out.report,
                    verdict,
                    equality_constraints: Some(out.equalities.len()),
                    ratio_constraints: Some(out.ratios.len()),
                    diffs_exact: None,
                }
            }
        };
        outcomes.push(outcome);
    }

    let defense = defense_metrics(&round, &population);

    let mut secmed_pad_rng = stream_rng(seed, STREAM_FIX_SECMED);
    let per_user_pads: Vec<Vec<i64>> = (0..g.m())
        .map(|_| {
            (0..g.n())
                .map(|_| secmed_pad_rng.gen_range(0..(1i64 << config.pad_bits)))
                .collect()
        })
        .collect();
    let secmed_fix = fix_variant_secmed(g, &per_user_pads)?;

    let mut secpear_pad_rng = stream_rng(seed, STREAM_FIX_SECPEAR);
    let per_coord_pads: Vec<Vec<i64>> = (0..g.m())
        .map(|_| {
            (0..g.n())
                .map(|_| secpear_pad_rng.gen_range(1..=(1i64 << 16)))
                .collect()
        })
        .collect();
    let median_pads: Vec<i64> = (0..g.n())
        .map(|_| secpear_pad_rng.gen_range(1..=(1i64 << 16)))
        .collect();
    let secpear_delta = match fix_variant_secpear(g, &per_coord_pads, &median_pads) {
        Ok(out) => Some(out.mean_abs_delta),
        Err(NumericError::DegenerateVector) => None,
        Err(e) => return Err(e.into()),
    };

    let fix = FixVariantSummary {
        secmed_wrong_fraction: secmed_fix.wrong_fraction,
        secmed_mean_abs_delta: secmed_fix.mean_abs_delta,
        secpear_mean_abs_delta_rho: secpear_delta,
    };

    Ok(TrialOutcome {
        trial_index,
        round,
        population,
        attacks: outcomes,
        defense,
        fix,
    })
}

fn invalid(e: crate::error::AttackError) -> PipelineError {
    PipelineError::Invalid(e.to_string())
}

/// Trials are embarrassingly parallel; outcomes come back in index order.
pub fn run_trials(
    config: &ScenarioConfig,
    attacks: &[AttackMethod],
    trials: u64,
) -> Result<Vec<TrialOutcome>, PipelineError> {
    (0..trials)
        .into_par_iter()
        .map(|i| run_trial(config, attacks, i))
        .collect()
}

/// Outcome of running SecMed with pads drawn independently per user.
#[derive(Debug, Clone, PartialEq)]
pub struct SecMedFixOutcome {
    /// Per coordinate: |unpadded "median" - true median| in raw units, under
    /// the most charitable unpadding (subtract the pad of the user whose
    /// padded value was selected).
    pub deltas_raw: Vec<i64>,
    /// Per coordinate: spread (max - min) of the candidate unpadded values
    /// across all pad choices; nonzero spread means unpadding is ill-defined.
    pub candidate_spreads: Vec<i64>,
    pub wrong_fraction: f64,
    /// Mean |delta| in decoded units.
    pub mean_abs_delta: f64,
}

/// SecMed with per-user pads: the padded median no longer corresponds to any
/// single removable pad, so the protocol returns some user's value rather
/// than the median.
pub fn fix_variant_secmed(
    g: &GradientMatrix,
    per_user_pads: &[Vec<i64>],
) -> Result<SecMedFixOutcome, PipelineError> {
    if per_user_pads.len() != g.m() || per_user_pads.iter().any(|p| p.len() != g.n()) {
        return Err(PipelineError::Invalid(
            "per-user pads must match the matrix shape".into(),
        ));
    }
    let mut deltas_raw = Vec::with_capacity(g.n());
    let mut candidate_spreads = Vec::with_capacity(g.n());
    for i in 0..g.n() {
        let column = g.column(i);
        let padded: Vec<i64> = column
            .iter()
            .zip(per_user_pads)
            .map(|(&v, pads)| v + pads[i])
            .collect();
        let (padded_median, src) = median_int_with_source(&padded)?;
        let true_median = median_int(&column)?;
        let unpadded = padded_median - per_user_pads[src][i];
        deltas_raw.push((unpadded - true_median).abs());
        let candidates: Vec<i64> = per_user_pads.iter().map(|p| padded_median - p[i]).collect();
        candidate_spreads
            .push(candidates.iter().max().unwrap() - candidates.iter().min().unwrap());
    }
    let wrong = deltas_raw.iter().filter(|&&d| d != 0).count();
    let mean_abs_delta = deltas_raw.iter().map(|&d| d as f64).sum::<f64>()
        / (g.n() as f64 * (1i64 << g.scale_bits()) as f64);
    Ok(SecMedFixOutcome {
        wrong_fraction: wrong as f64 / g.n() as f64,
        deltas_raw,
        candidate_spreads,
        mean_abs_delta,
    })
}

/// Outcome of running SecPear with pads drawn independently per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SecPearFixOutcome {
    /// Per user: |rho on per-coordinate-padded values - true rho|.
    pub deltas: Vec<f64>,
    pub mean_abs_delta: f64,
}

/// SecPear with per-coordinate pads: the covariance and sigma identities that
/// make the padded correlation equal the true one no longer hold.
pub fn fix_variant_secpear(
    g: &GradientMatrix,
    per_coord_pads: &[Vec<i64>],
    median_pads: &[i64],
) -> Result<SecPearFixOutcome, NumericError> {
    if per_coord_pads.len() != g.m()
        || per_coord_pads.iter().any(|p| p.len() != g.n())
        || median_pads.len() != g.n()
    {
        return Err(NumericError::LengthMismatch(per_coord_pads.len(), g.m()));
    }
    let medians: Vec<i64> = (0..g.n())
        .map(|i| median_int(&g.column(i)))
        .collect::<Result<_, _>>()?;
    let gy: Vec<f64> = medians.iter().map(|&v| v as f64).collect();
    let dy: Vec<f64> = medians
        .iter()
        .zip(median_pads)
        .map(|(&v, &p)| v as f64 * p as f64)
        .collect();
    let mut deltas = Vec::with_capacity(g.m());
    for (row, pads) in g.rows().iter().zip(per_coord_pads) {
        let gx: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        let dx: Vec<f64> = row
            .iter()
            .zip(pads)
            .map(|(&v, &p)| v as f64 * p as f64)
            .collect();
        let rho_true = crate::stats::pearson_f64(&gx, &gy)?;
        let rho_padded = crate::stats::pearson_f64(&dx, &dy)?;
        deltas.push((rho_padded - rho_true).abs());
    }
    let mean_abs_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
    Ok(SecPearFixOutcome {
        deltas,
        mean_abs_delta,
    })
}

/// Monte Carlo over independent coordinates for the SecMed fix variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SecMedMonteCarlo {
    pub coordinates: usize,
    pub wrong: usize,
    pub wrong_fraction: f64,
    pub mean_abs_delta_raw: f64,
}

/// Samples `coordinates` independent columns of `users` random gradient raws,
/// pads each user independently with `pad_bits`-bit pads, and counts how
/// often the charitably-unpadded median is wrong.
pub fn secmed_fix_monte_carlo(
    coordinates: usize,
    users: usize,
    pad_bits: u32,
    seed: u64,
) -> SecMedMonteCarlo {
    let mut rng = stream_rng(seed, STREAM_FIX_SECMED);
    let mut wrong = 0usize;
    let mut total_delta = 0.0f64;
    for _ in 0..coordinates {
        let column: Vec<i64> = (0..users)
            .map(|_| rng.gen_range(-(1i64 << 24)..(1i64 << 24)))
            .collect();
        let pads: Vec<i64> = (0..users)
            .map(|_| rng.gen_range(0..(1i64 << pad_bits)))
            .collect();
        let padded: Vec<i64> = column.iter().zip(&pads).map(|(&v, &p)| v + p).collect();
        let (padded_median, src) = median_int_with_source(&padded).expect("non-empty");
        let unpadded = padded_median - pads[src];
        let true_median = median_int(&column).expect("non-empty");
        if unpadded != true_median {
            wrong += 1;
        }
        total_delta += (unpadded - true_median).abs() as f64;
    }
    SecMedMonteCarlo {
        coordinates,
        wrong,
        wrong_fraction: wrong as f64 / coordinates as f64,
        mean_abs_delta_raw: total_delta / coordinates as f64,
    }
}

/// Monte Carlo over clustered instances for the SecPear fix variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SecPearMonteCarlo {
    pub instances: usize,
    pub mean_abs_delta: f64,
    pub min_instance_delta: f64,
}

/// Runs `instances` clustered-Gaussian populations, pads each coordinate
/// independently with pads uniform in `[1, pad_max]`, and reports the mean
/// |delta rho| against the true correlations.
pub fn secpear_fix_monte_carlo(
    instances: usize,
    m: usize,
    n: usize,
    pad_max: i64,
    seed: u64,
) -> Result<SecPearMonteCarlo, PipelineError> {
    let config = ScenarioConfig {
        m,
        n,
        poison: Poison::None,
        ..ScenarioConfig::default()
    };
    let mut mean_sum = 0.0f64;
    let mut min_delta = f64::INFINITY;
    for k in 0..instances {
        let pop = gen_population(&config, seed.wrapping_add(k as u64))?;
        let mut rng = stream_rng(seed.wrapping_add(k as u64), STREAM_FIX_SECPEAR);
        let per_coord: Vec<Vec<i64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.gen_range(1..=pad_max)).collect())
            .collect();
        let median_pads: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=pad_max)).collect();
        let out = fix_variant_secpear(&pop.matrix, &per_coord, &median_pads)
            .map_err(PipelineError::from)?;
        mean_sum += out.mean_abs_delta;
        min_delta = min_delta.min(out.mean_abs_delta);
    }
    Ok(SecPearMonteCarlo {
        instances,
        mean_abs_delta: mean_sum / instances as f64,
        min_instance_delta: min_delta,
    })
}
