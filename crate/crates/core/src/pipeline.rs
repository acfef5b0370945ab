//! One aggregation round across the four entities, with the cloud platform's
//! decrypted views recorded verbatim.
//!
//! Entity roles per protocol step:
//! - users encrypt their gradient rows under the cloud platform's key,
//! - the service provider (SP) applies random pads homomorphically,
//! - the cloud platform (CP) decrypts the padded values, computes medians /
//!   correlations / weighted sums, and everything CP decrypts is appended to
//!   [`CloudViews`] exactly as observed.
//!
//! Pads: one additive pad per coordinate shared by all users (`r`), one
//! positive multiplicative pad per user (`s`, plus `s_y` for the median
//! vector), one additive pad per user shared across coordinates (`t`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NumericError, PipelineError};
use crate::fixed::{median_int, DEFAULT_VALUE_BITS};
use crate::he::{
    add_plain, decrypt, encrypt, keygen, mul_plain, BackendKind, Ciphertext, KeyPair, PublicKey,
};
use crate::stats::{pearson, StatVector};

/// m x n matrix of fixed-point gradient raws: rows are users, columns are
/// gradient coordinates. This is the secret every attack tries to recover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradientMatrix {
    rows: Vec<Vec<i64>>,
    scale_bits: u32,
}

impl GradientMatrix {
    /// Builds a matrix from raw fixed-point values. Rows must be non-empty,
    /// rectangular, and inside the value range `|raw| < 2^40`.
    pub fn from_raw_rows(rows: Vec<Vec<i64>>, scale_bits: u32) -> Result<Self, PipelineError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(PipelineError::Invalid("matrix must be non-empty".into()));
        }
        let n = rows[0].len();
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(PipelineError::Invalid(format!(
                    "row {x} has length {}, expected {n}",
                    row.len()
                )));
            }
            for &v in row {
                if (v.unsigned_abs() >> DEFAULT_VALUE_BITS) != 0 {
                    return Err(PipelineError::Invalid(format!(
                        "entry {v} outside the value range"
                    )));
                }
            }
        }
        Ok(Self { rows, scale_bits })
    }

    pub fn from_f64_rows(rows: &[Vec<f64>], scale_bits: u32) -> Result<Self, PipelineError> {
        let raw = rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| crate::fixed::encode_fixed(v, scale_bits).map(|f| f.raw))
                    .collect::<Result<Vec<_>, NumericError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_raw_rows(raw, scale_bits)
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    pub fn raw(&self, x: usize, i: usize) -> i64 {
        self.rows[x][i]
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.rows
    }

    pub fn row_vector(&self, x: usize) -> StatVector {
        StatVector::from_raw(self.rows[x].clone(), self.scale_bits)
    }

    pub fn column(&self, i: usize) -> Vec<i64> {
        self.rows.iter().map(|row| row[i]).collect()
    }
}

/// The three pad families SP samples for one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PadSet {
    /// Per-coordinate additive pads, shared by all users (SecMed).
    pub r: Vec<i64>,
    /// Per-user positive multiplicative pads, shared across coordinates (SecPear).
    pub s: Vec<i64>,
    /// Multiplicative pad for the median vector.
    pub s_y: i64,
    /// Per-user additive pads, shared across coordinates (SecAgg).
    pub t: Vec<i64>,
}

impl PadSet {
    /// Samples fresh pads: `r`, `t` uniform in `[0, 2^pad_bits)`, `s`, `s_y`
    /// uniform in `[1, 2^mult_pad_bits]` (positive, so Pearson is invariant).
    pub fn sample<R: Rng>(m: usize, n: usize, pad_bits: u32, mult_pad_bits: u32, rng: &mut R) -> Self {
        let add_range = 1i64 << pad_bits;
        let mult_max = 1i64 << mult_pad_bits;
        let r = (0..n).map(|_| rng.gen_range(0..add_range)).collect();
        let s = (0..m).map(|_| rng.gen_range(1..=mult_max)).collect();
        let s_y = rng.gen_range(1..=mult_max);
        let t = (0..m).map(|_| rng.gen_range(0..add_range)).collect();
        Self { r, s, s_y, t }
    }
}

/// Everything CP decrypts during one round, verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CloudViews {
    /// SecMed view: entry `(x, i)` is `g[x][i] + r[i]`.
    pub v_secmed: Vec<Vec<i64>>,
    /// SecPear view: entry `(x, i)` is `g[x][i] * s[x]`.
    pub v_secpear: Vec<Vec<i64>>,
    /// SecPear median row: entry `i` is `g_y[i] * s_y`.
    pub v_secpear_median: Vec<i64>,
    /// SecAgg view: entry `(x, i)` is `g[x][i] + t[x]`.
    pub v_secagg: Vec<Vec<i64>>,
    /// The per-coordinate medians CP computed (still shifted by `r[i]`).
    pub medians_padded: Vec<i64>,
    /// Public protocol parameter: additive pads were drawn from `[0, 2^pad_bits)`.
    pub pad_bits: u32,
}

impl CloudViews {
    pub fn m(&self) -> usize {
        self.v_secmed.len()
    }

    pub fn n(&self) -> usize {
        self.v_secmed.first().map_or(0, Vec::len)
    }
}

/// Weight assigned to a user from its correlation score. The exact formula is
/// a deployment choice, so it is pluggable; `LogOdds` is the default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFn {
    /// `max(0, ln((1+rho)/(1-rho)) - 0.5)` with rho clamped to +/-0.999999.
    #[default]
    LogOdds,
    /// `max(0, rho)`.
    PositiveRho,
}

impl WeightFn {
    /// Undefined correlations (degenerate vectors) always get weight 0.
    pub fn eval(self, rho: Option<f64>) -> f64 {
        let Some(rho) = rho else { return 0.0 };
        match self {
            WeightFn::LogOdds => {
                let r = rho.clamp(-0.999999, 0.999999);
                (((1.0 + r) / (1.0 - r)).ln() - 0.5).max(0.0)
            }
            WeightFn::PositiveRho => rho.max(0.0),
        }
    }
}

/// Default weighting: `max(0, ln((1+rho)/(1-rho)) - 0.5)`.
pub fn weight_from_rho(rho: Option<f64>) -> f64 {
    WeightFn::LogOdds.eval(rho)
}

/// Protocol parameters for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundConfig {
    pub scale_bits: u32,
    pub pad_bits: u32,
    pub mult_pad_bits: u32,
    pub backend: BackendKind,
    pub key_bits: u32,
    pub weight_fn: WeightFn,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            scale_bits: 16,
            pad_bits: 32,
            mult_pad_bits: 20,
            backend: BackendKind::Transparent,
            key_bits: 512,
            weight_fn: WeightFn::LogOdds,
        }
    }
}

/// Result of one full round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    /// The unpadded coordinate-wise median vector `g_y`.
    pub median_vector: StatVector,
    /// Pearson score per user; `None` when the user's vector is degenerate.
    pub rho: Vec<Option<f64>>,
    pub weights: Vec<f64>,
    /// Weighted-mean aggregate, re-encoded to fixed point.
    pub aggregate: StatVector,
    /// Set when every weight is zero (aggregate is then the zero vector).
    pub all_weights_zero: bool,
    pub views: CloudViews,
    /// SP's secret pads. Held here for the verification oracle only; attack
    /// code never receives a `RoundResult`.
    pub pads: PadSet,
}

const STREAM_KEYS: u64 = 1;
const STREAM_PADS: u64 = 2;
const STREAM_ENC: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[16..24].copy_from_slice(&stream.to_le_bytes());
    ChaCha20Rng::from_seed(bytes)
}

/// A user encrypts its gradient element-wise under CP's public key.
pub fn user_submit<R: Rng>(
    gradient: &StatVector,
    expected_n: usize,
    pk: &PublicKey,
    rng: &mut R,
) -> Result<Vec<Ciphertext>, PipelineError> {
    if gradient.len() != expected_n {
        return Err(PipelineError::Invalid(format!(
            "gradient length {} does not match pipeline n = {expected_n}",
            gradient.len()
        )));
    }
    gradient
        .entries()
        .iter()
        .map(|f| encrypt(pk, f.raw, rng).map_err(PipelineError::from))
        .collect()
}

pub struct SecMedOutput {
    /// Encrypted unpadded medians `Enc(g_y)`, after SP removed the pads.
    pub encrypted_medians: Vec<Ciphertext>,
    pub v_secmed: Vec<Vec<i64>>,
    pub medians_padded: Vec<i64>,
}

/// SecMed: SP pads every user's coordinate `i` with the same `r[i]`, CP
/// decrypts, takes per-coordinate medians, re-encrypts, SP removes the pads.
pub fn secmed<R: Rng>(
    encrypted: &[Vec<Ciphertext>],
    pads: &PadSet,
    keys: &KeyPair,
    rng: &mut R,
) -> Result<SecMedOutput, PipelineError> {
    let n = encrypted[0].len();
    // SP pads, CP decrypts: this is CP's view.
    let mut v_secmed = Vec::with_capacity(encrypted.len());
    for row in encrypted {
        let mut view_row = Vec::with_capacity(n);
        for (i, ct) in row.iter().enumerate() {
            let padded = add_plain(&keys.public, ct, pads.r[i])?;
            view_row.push(decrypt(&keys.secret, &padded)?);
        }
        v_secmed.push(view_row);
    }
    // CP computes padded medians and returns them encrypted.
    let mut medians_padded = Vec::with_capacity(n);
    let mut encrypted_medians = Vec::with_capacity(n);
    for i in 0..n {
        let column: Vec<i64> = v_secmed.iter().map(|row| row[i]).collect();
        let med = median_int(&column)?;
        medians_padded.push(med);
        let ct = encrypt(&keys.public, med, rng)?;
        // SP removes the pad homomorphically.
        encrypted_medians.push(add_plain(&keys.public, &ct, -pads.r[i])?);
    }
    Ok(SecMedOutput {
        encrypted_medians,
        v_secmed,
        medians_padded,
    })
}

pub struct SecPearOutput {
    pub rho: Vec<Option<f64>>,
    pub v_secpear: Vec<Vec<i64>>,
    pub v_secpear_median: Vec<i64>,
}

/// SecPear: SP scales user `x` by `s[x]` (and the medians by `s_y`), CP
/// decrypts and computes Pearson coefficients on the padded values.
pub fn secpear(
    encrypted: &[Vec<Ciphertext>],
    encrypted_medians: &[Ciphertext],
    pads: &PadSet,
    keys: &KeyPair,
    scale_bits: u32,
) -> Result<SecPearOutput, PipelineError> {
    let mut v_secpear = Vec::with_capacity(encrypted.len());
    for (x, row) in encrypted.iter().enumerate() {
        let mut view_row = Vec::with_capacity(row.len());
        for ct in row {
            let scaled = mul_plain(&keys.public, ct, pads.s[x])?;
            view_row.push(decrypt(&keys.secret, &scaled)?);
        }
        v_secpear.push(view_row);
    }
    let mut v_secpear_median = Vec::with_capacity(encrypted_medians.len());
    for ct in encrypted_medians {
        let scaled = mul_plain(&keys.public, ct, pads.s_y)?;
        v_secpear_median.push(decrypt(&keys.secret, &scaled)?);
    }
    // CP-side statistics on what it just decrypted.
    let d_y = StatVector::from_raw(v_secpear_median.clone(), scale_bits);
    let mut rho = Vec::with_capacity(v_secpear.len());
    for view_row in &v_secpear {
        let d_x = StatVector::from_raw(view_row.clone(), scale_bits);
        match pearson(&d_x, &d_y) {
            Ok(r) => rho.push(Some(r)),
            Err(NumericError::DegenerateVector) => rho.push(None),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(SecPearOutput {
        rho,
        v_secpear,
        v_secpear_median,
    })
}

pub struct SecAggOutput {
    pub aggregate: StatVector,
    pub all_weights_zero: bool,
    pub v_secagg: Vec<Vec<i64>>,
}

/// SecAgg: SP pads user `x`'s whole row with the same `t[x]`, CP decrypts and
/// computes the weighted sums; SP subtracts the pad contribution and divides
/// once at the end, so no per-term rounding accumulates.
pub fn secagg(
    encrypted: &[Vec<Ciphertext>],
    weights: &[f64],
    pads: &PadSet,
    keys: &KeyPair,
    scale_bits: u32,
) -> Result<SecAggOutput, PipelineError> {
    if weights.len() != encrypted.len() {
        return Err(PipelineError::Invalid(format!(
            "{} weights for {} users",
            weights.len(),
            encrypted.len()
        )));
    }
    let n = encrypted[0].len();
    let mut v_secagg = Vec::with_capacity(encrypted.len());
    for (x, row) in encrypted.iter().enumerate() {
        let mut view_row = Vec::with_capacity(n);
        for ct in row {
            let padded = add_plain(&keys.public, ct, pads.t[x])?;
            view_row.push(decrypt(&keys.secret, &padded)?);
        }
        v_secagg.push(view_row);
    }
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum <= 0.0 {
        return Ok(SecAggOutput {
            aggregate: StatVector::from_raw(vec![0; n], scale_bits),
            all_weights_zero: true,
            v_secagg,
        });
    }
    // CP's weighted sums over padded rows, SP's pad correction, one division.
    let pad_correction: f64 = weights
        .iter()
        .zip(&pads.t)
        .map(|(&w, &t)| w * t as f64)
        .sum();
    let mut aggregate_raw = Vec::with_capacity(n);
    for i in 0..n {
        let padded_sum: f64 = v_secagg
            .iter()
            .zip(weights)
            .map(|(row, &w)| w * row[i] as f64)
            .sum();
        let value = (padded_sum - pad_correction) / weight_sum;
        aggregate_raw.push(value.round_ties_even() as i64);
    }
    Ok(SecAggOutput {
        aggregate: StatVector::from_raw(aggregate_raw, scale_bits),
        all_weights_zero: false,
        v_secagg,
    })
}

/// Runs one full round: submit, SecMed, SecPear, weighting, SecAgg.
/// Deterministic given `seed`; the pad stream is independent of the backend's
/// encryption randomness, so swapping backends reproduces identical views.
pub fn run_round(
    g: &GradientMatrix,
    config: &RoundConfig,
    seed: u64,
) -> Result<RoundResult, PipelineError> {
    if g.m() < 3 || g.n() < 2 {
        return Err(PipelineError::Invalid(format!(
            "pipeline needs m >= 3 and n >= 2, got {}x{}",
            g.m(),
            g.n()
        )));
    }
    if g.scale_bits() != config.scale_bits {
        return Err(PipelineError::Invalid(
            "matrix scale does not match round config".into(),
        ));
    }
    if DEFAULT_VALUE_BITS + config.mult_pad_bits + 1 >= crate::he::TRANSPARENT_GUARD_BITS {
        return Err(PipelineError::Invalid(
            "mult_pad_bits too large for the plaintext space".into(),
        ));
    }

    let key_seed = stream_rng(seed, STREAM_KEYS).gen::<u64>();
    let keys = keygen(config.backend, config.key_bits, key_seed);
    let mut pad_rng = stream_rng(seed, STREAM_PADS);
    let pads = PadSet::sample(g.m(), g.n(), config.pad_bits, config.mult_pad_bits, &mut pad_rng);
    let mut enc_rng = stream_rng(seed, STREAM_ENC);

    let encrypted: Vec<Vec<Ciphertext>> = g
        .rows()
        .iter()
        .map(|row| {
            user_submit(
                &StatVector::from_raw(row.clone(), g.scale_bits()),
                g.n(),
                &keys.public,
                &mut enc_rng,
            )
        })
        .collect::<Result<_, _>>()?;

    let med = secmed(&encrypted, &pads, &keys, &mut enc_rng)?;
    let pear = secpear(&encrypted, &med.encrypted_medians, &pads, &keys, config.scale_bits)?;
    let weights: Vec<f64> = pear.rho.iter().map(|&r| config.weight_fn.eval(r)).collect();
    let agg = secagg(&encrypted, &weights, &pads, &keys, config.scale_bits)?;

    let median_raw = med
        .encrypted_medians
        .iter()
        .map(|ct| decrypt(&keys.secret, ct).map_err(PipelineError::from))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(RoundResult {
        median_vector: StatVector::from_raw(median_raw, config.scale_bits),
        rho: pear.rho,
        weights,
        aggregate: agg.aggregate,
        all_weights_zero: agg.all_weights_zero,
        views: CloudViews {
            v_secmed: med.v_secmed,
            v_secpear: pear.v_secpear,
            v_secpear_median: pear.v_secpear_median,
            v_secagg: agg.v_secagg,
            medians_padded: med.medians_padded,
            pad_bits: config.pad_bits,
        },
        pads,
    })
}

/// Plaintext forward simulation of the views from `(G, pads)` alone. This is
/// the definitional oracle the HE pipeline is checked against: it computes
/// each entry by the algebraic identity rather than through encrypt/decrypt.
pub fn simulate_views(g: &GradientMatrix, pads: &PadSet, pad_bits: u32) -> CloudViews {
    let m = g.m();
    let n = g.n();
    let v_secmed: Vec<Vec<i64>> = (0..m)
        .map(|x| (0..n).map(|i| g.raw(x, i) + pads.r[i]).collect())
        .collect();
    let v_secpear: Vec<Vec<i64>> = (0..m)
        .map(|x| (0..n).map(|i| g.raw(x, i) * pads.s[x]).collect())
        .collect();
    let medians: Vec<i64> = (0..n)
        .map(|i| median_int(&g.column(i)).expect("non-empty column"))
        .collect();
    let v_secpear_median: Vec<i64> = medians.iter().map(|&gy| gy * pads.s_y).collect();
    // Shift equivariance: median(col + r) = median(col) + r.
    let medians_padded: Vec<i64> = medians.iter().zip(&pads.r).map(|(&gy, &r)| gy + r).collect();
    let v_secagg: Vec<Vec<i64>> = (0..m)
        .map(|x| (0..n).map(|i| g.raw(x, i) + pads.t[x]).collect())
        .collect();
    CloudViews {
        v_secmed,
        v_secpear,
        v_secpear_median,
        v_secagg,
        medians_padded,
        pad_bits,
    }
}
