//! Error structure of a 2^p design with m randomization stages.
//!
//! Runs are numbered in standard order: run `r` sets factor `j` to level
//! `(r >> j) & 1`. The model matrix recodes level 0 as +1 and level 1 as
//! -1, so the column of effect `E` at run `r` is `(-1)^<r, E>` and `X` is
//! the Sylvester-Hadamard matrix; `X'Y` is a fast Walsh-Hadamard transform.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::projective::{Effect, Subspace};

/// Minimum number of effects for a usable half-normal plot.
pub const MIN_PLOT_EFFECTS: usize = 7;

/// Run-by-batch 0/1 matrix of one stage, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    pub runs: usize,
    pub batches: usize,
    pub data: Vec<u8>,
}

impl IncidenceMatrix {
    pub fn get(&self, run: usize, batch: usize) -> u8 {
        self.data[run * self.batches + batch]
    }

    pub fn set(&mut self, run: usize, batch: usize, v: u8) {
        self.data[run * self.batches + batch] = v;
    }

    /// The batch of `run` when the row has exactly one 1.
    pub fn batch_of(&self, run: usize) -> Option<usize> {
        let row = &self.data[run * self.batches..(run + 1) * self.batches];
        let mut hits = row.iter().enumerate().filter(|(_, &v)| v == 1);
        match (hits.next(), hits.next()) {
            (Some((l, _)), None) => Some(l),
            _ => None,
        }
    }

    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.batches)
            .map(|l| (0..self.runs).map(|r| u64::from(self.get(r, l))).sum())
            .collect()
    }

    /// `N'N` in exact integer arithmetic.
    pub fn gram(&self) -> Vec<Vec<u64>> {
        let b = self.batches;
        let mut g = vec![vec![0u64; b]; b];
        for r in 0..self.runs {
            let row = &self.data[r * b..(r + 1) * b];
            for (i, &x) in row.iter().enumerate() {
                if x == 0 {
                    continue;
                }
                for (j, &y) in row.iter().enumerate() {
                    g[i][j] += u64::from(x) * u64::from(y);
                }
            }
        }
        g
    }
}

/// Batch index of a run: the bits `<run, b_1>, ..., <run, b_t>` read with
/// `b_1` most significant.
pub fn batch_index(levels: u32, basis: &[Effect]) -> usize {
    basis
        .iter()
        .fold(0usize, |acc, b| acc << 1 | b.parity(levels) as usize)
}

fn build_incidence(n: usize, subspace: &Subspace) -> IncidenceMatrix {
    let batches = 1usize << subspace.dim();
    let mut m = IncidenceMatrix {
        runs: n,
        batches,
        data: vec![0; n * batches],
    };
    for r in 0..n {
        m.set(r, batch_index(r as u32, subspace.basis()), 1);
    }
    m
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub subspace: Subspace,
    pub incidence: IncidenceMatrix,
}

/// A single-replicate 2^p factorial with its randomization stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design {
    pub p: usize,
    pub stages: Vec<Stage>,
}

impl Design {
    pub fn new(p: usize, stages: Vec<Subspace>) -> Result<Self> {
        if p == 0 || p > 20 {
            return Err(Error::InvalidParameters(format!("design needs 1 <= p <= 20, got {p}")));
        }
        let n = 1usize << p;
        let stages = stages
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if s.ambient() != p {
                    return Err(Error::DimensionMismatch(s.ambient(), p));
                }
                if s.dim() == 0 || s.dim() >= p {
                    return Err(Error::InvalidParameters(format!(
                        "stage {} has t = {}; need 0 < t < p",
                        i + 1,
                        s.dim()
                    )));
                }
                let incidence = build_incidence(n, &s);
                Ok(Stage { subspace: s, incidence })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { p, stages })
    }

    /// Number of runs.
    pub fn n(&self) -> usize {
        1 << self.p
    }

    /// Factor levels of run `r` as a bit mask.
    pub fn levels(&self, r: usize) -> u32 {
        r as u32
    }

    /// Runs per batch at stage `i`, `2^(p - t_i)`.
    pub fn batch_size(&self, i: usize) -> usize {
        1 << (self.p - self.stages[i].subspace.dim())
    }

    /// Stages whose subspace contains `e` (0-based).
    pub fn stages_containing(&self, e: Effect) -> Vec<usize> {
        (0..self.stages.len())
            .filter(|&i| self.stages[i].subspace.contains(e))
            .collect()
    }

    /// 0/1 run matrix, one row per run.
    pub fn run_matrix(&self) -> Vec<Vec<u8>> {
        (0..self.n())
            .map(|r| (0..self.p).map(|j| (r >> j & 1) as u8).collect())
            .collect()
    }

    /// Dense ±1 model matrix; column `j` belongs to the effect with mask
    /// `j` (column 0 is the grand mean).
    pub fn model_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |r, j| {
            if (r & j).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
    }

    pub fn incidence_matrix(&self, i: usize) -> &IncidenceMatrix {
        &self.stages[i].incidence
    }
}

/// In-place unnormalized Walsh-Hadamard transform.
pub fn fwht(v: &mut [f64]) {
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

fn fwht_i64(v: &mut [i64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// `X'X = nI` in exact integer arithmetic.
pub fn check_orthogonality(design: &Design) -> bool {
    let n = design.n();
    (0..n).all(|k| {
        let mut col: Vec<i64> = (0..n)
            .map(|r| if (r & k).count_ones() % 2 == 0 { 1 } else { -1 })
            .collect();
        fwht_i64(&mut col);
        col.iter()
            .enumerate()
            .all(|(j, &v)| v == if j == k { n as i64 } else { 0 })
    })
}

/// `N_i'N_i = n_i I` with `n_i = 2^(p - t_i)`, for every stage, and each
/// run in exactly one batch.
pub fn check_incidence_identity(design: &Design) -> bool {
    design.stages.iter().enumerate().all(|(i, st)| {
        let ni = design.batch_size(i) as u64;
        let g = st.incidence.gram();
        st.incidence.runs == design.n()
            && (0..st.incidence.runs).all(|r| st.incidence.batch_of(r).is_some())
            && g.iter().enumerate().all(|(a, row)| {
                row.iter()
                    .enumerate()
                    .all(|(b, &v)| v == if a == b { ni } else { 0 })
            })
    })
}

/// Replication variance and one variance per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSpec {
    pub sigma2: f64,
    pub stage_sigma2: Vec<f64>,
}

impl VarianceSpec {
    pub fn validate(&self, design: &Design) -> Result<()> {
        if self.stage_sigma2.len() != design.stages.len() {
            return Err(Error::InvalidParameters(format!(
                "{} stage variances for {} stages",
                self.stage_sigma2.len(),
                design.stages.len()
            )));
        }
        if self.sigma2 < 0.0 || self.stage_sigma2.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameters("variances must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// `sigma^2 I + sum_i sigma_i^2 N_i N_i'`.
    pub fn covariance(&self, design: &Design) -> DMatrix<f64> {
        let n = design.n();
        let mut cov = DMatrix::identity(n, n) * self.sigma2;
        for (st, &s2) in design.stages.iter().zip(&self.stage_sigma2) {
            for a in 0..n {
                let ba = st.incidence.batch_of(a);
                for b in 0..n {
                    if ba.is_some() && ba == st.incidence.batch_of(b) {
                        cov[(a, b)] += s2;
                    }
                }
            }
        }
        cov
    }
}

/// `Var(beta_hat_E) = sigma^2/n + sum_{i in T_E} (n_i/n) sigma_i^2`.
pub fn effect_variance(e: Effect, design: &Design, spec: &VarianceSpec) -> f64 {
    let n = design.n() as f64;
    spec.sigma2 / n
        + design
            .stages_containing(e)
            .into_iter()
            .map(|i| design.batch_size(i) as f64 / n * spec.stage_sigma2[i])
            .sum::<f64>()
}

/// Effects sharing the same set of containing stages, and hence the same
/// variance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarianceGroup {
    pub id: usize,
    /// 1-based stage numbers; empty for effects outside every stage.
    pub stages: Vec<usize>,
    pub effects: Vec<Effect>,
    /// Fewer than [`MIN_PLOT_EFFECTS`] effects.
    pub too_small: bool,
    /// Effects confounded with two or more stages; few degrees of freedom.
    pub overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectVariance {
    pub effect: Effect,
    pub stages: Vec<usize>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub effects: Vec<EffectVariance>,
    pub groups: Vec<VarianceGroup>,
    pub warnings: Vec<String>,
}

/// Partitions the effect space by containing-stage set. Single-stage
/// groups come first in stage order, then overlaps, then the remainder.
pub fn variance_groups(design: &Design) -> Vec<VarianceGroup> {
    let mut keyed: std::collections::BTreeMap<(bool, usize, Vec<usize>), Vec<Effect>> =
        Default::default();
    for m in 1u32..(1 << design.p) {
        let e = Effect::new(m).expect("nonzero");
        let t: Vec<usize> = design.stages_containing(e).into_iter().map(|i| i + 1).collect();
        keyed.entry((t.is_empty(), t.len(), t)).or_default().push(e);
    }
    keyed
        .into_iter()
        .enumerate()
        .map(|(k, ((_, len, stages), effects))| VarianceGroup {
            id: k + 1,
            too_small: effects.len() < MIN_PLOT_EFFECTS,
            overlap: len >= 2,
            stages,
            effects,
        })
        .collect()
}

pub fn variance_report(design: &Design, spec: &VarianceSpec) -> Result<VarianceReport> {
    spec.validate(design)?;
    let groups = variance_groups(design);
    let mut effects: Vec<EffectVariance> = groups
        .iter()
        .flat_map(|g| {
            g.effects.iter().map(|&e| EffectVariance {
                effect: e,
                stages: g.stages.clone(),
                variance: effect_variance(e, design, spec),
            })
        })
        .collect();
    effects.sort_by_key(|ev| ev.effect);
    let mut warnings = Vec::new();
    for g in &groups {
        if g.too_small {
            warnings.push(format!(
                "group {} has {} effects; a half-normal plot needs at least {MIN_PLOT_EFFECTS}",
                g.id,
                g.effects.len()
            ));
        }
        if g.overlap {
            warnings.push(format!(
                "group {} is confounded with stages {:?}; its effects may lack degrees of freedom for assessment",
                g.id, g.stages
            ));
        }
    }
    for i in 0..design.stages.len() {
        for j in i + 1..design.stages.len() {
            if design.stages[i].subspace.points() == design.stages[j].subspace.points() {
                warnings.push(format!(
                    "stages {} and {} use the same subspace; both variance terms apply",
                    i + 1,
                    j + 1
                ));
            }
        }
    }
    Ok(VarianceReport {
        effects,
        groups,
        warnings,
    })
}

/// Per-replicate estimates `beta_hat = X'Y / n`, indexed by effect mask
/// (index 0 is the grand mean).
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub n: usize,
    pub estimates: Vec<Vec<f64>>,
}

impl Simulation {
    pub fn reps(&self) -> usize {
        self.estimates.len()
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.estimates.iter().map(|b| b[j]).sum::<f64>() / self.reps() as f64
    }

    /// Unbiased sample covariance of estimates `j` and `k`.
    pub fn covariance(&self, j: usize, k: usize) -> f64 {
        let (mj, mk) = (self.mean(j), self.mean(k));
        self.estimates
            .iter()
            .map(|b| (b[j] - mj) * (b[k] - mk))
            .sum::<f64>()
            / (self.reps() as f64 - 1.0)
    }

    pub fn variance(&self, j: usize) -> f64 {
        self.covariance(j, j)
    }
}

/// One replicate: `Y = X beta + eps_0 + sum_i N_i eps_i`, estimates by FWHT.
/// The stream for replicate `rep` depends only on `(seed, rep)`.
fn one_rep(design: &Design, spec: &VarianceSpec, beta: &[f64], seed: u64, rep: u64) -> Vec<f64> {
    let n = design.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    let mut y = beta.to_vec();
    fwht(&mut y);
    let sd0 = spec.sigma2.sqrt();
    for v in y.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += sd0 * z;
    }
    for (st, &s2) in design.stages.iter().zip(&spec.stage_sigma2) {
        let sd = s2.sqrt();
        let batch_err: Vec<f64> = (0..st.incidence.batches)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for (r, v) in y.iter_mut().enumerate() {
            if let Some(l) = st.incidence.batch_of(r) {
                *v += batch_err[l];
            }
        }
    }
    fwht(&mut y);
    let inv = 1.0 / n as f64;
    y.iter_mut().for_each(|v| *v *= inv);
    y
}

/// Draws `reps` responses under the stage error model and returns the
/// least-squares estimates for each. `beta` defaults to zero.
pub fn simulate(
    design: &Design,
    spec: &VarianceSpec,
    beta: Option<&[f64]>,
    reps: usize,
    seed: u64,
    exec: Exec,
) -> Result<Simulation> {
    spec.validate(design)?;
    if reps == 0 {
        return Err(Error::InvalidParameters("reps must be >= 1".into()));
    }
    let n = design.n();
    let zero = vec![0.0; n];
    let beta = beta.unwrap_or(&zero);
    if beta.len() != n {
        return Err(Error::InvalidParameters(format!(
            "beta has {} entries, expected {n}",
            beta.len()
        )));
    }
    let estimates = exec::map_indexed(exec, reps, |rep| one_rep(design, spec, beta, seed, rep as u64));
    Ok(Simulation { n, estimates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlsCheck {
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub passes: bool,
}

/// Relative tolerance for the GLS = OLS identity.
pub const GLS_TOLERANCE: f64 = 1e-9;

/// Compares `(X' S^-1 X)^-1 X' S^-1 Y` with `X'Y/n` for a random `Y`,
/// using dense linear algebra. Limited to n <= 64.
pub fn check_gls_equals_ols(design: &Design, spec: &VarianceSpec, seed: u64) -> Result<GlsCheck> {
    spec.validate(design)?;
    let n = design.n();
    if n > 64 {
        return Err(Error::InvalidParameters(format!("dense GLS check limited to n <= 64, got {n}")));
    }
    if spec.sigma2 <= 0.0 {
        return Err(Error::SingularCovariance);
    }
    let x = design.model_matrix();
    let cov = spec.covariance(design);
    let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let si_x = chol.solve(&x);
    let si_y = chol.solve(&y);
    let lhs = x.transpose() * &si_x;
    let rhs = x.transpose() * &si_y;
    let gls = lhs
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularCovariance)?;
    let ols = x.transpose() * &y / n as f64;
    let scale = ols.amax().max(1.0);
    let max_abs_diff = (gls - &ols).amax();
    Ok(GlsCheck {
        max_abs_diff,
        tolerance: GLS_TOLERANCE * scale,
        passes: max_abs_diff <= GLS_TOLERANCE * scale,
    })
}

/// One point of a half-normal plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfNormalRow {
    pub group: usize,
    pub effect: Effect,
    pub abs_estimate: f64,
    pub quantile: f64,
}

/// Per variance group, effects sorted by |estimate| and paired with the
/// half-normal quantile `Phi^-1((k - 0.5 + g) / (2g))` for rank `k` of `g`.
pub fn halfnormal_emit(estimates: &[f64], groups: &[VarianceGroup]) -> Vec<HalfNormalRow> {
    let std = Normal::standard();
    let mut rows = Vec::new();
    for g in groups.iter().filter(|g| !g.effects.is_empty()) {
        let size = g.effects.len() as f64;
        let mut pts: Vec<(Effect, f64)> = g
            .effects
            .iter()
            .map(|&e| (e, estimates[e.bits() as usize].abs()))
            .collect();
        pts.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        for (k, (effect, abs_estimate)) in pts.into_iter().enumerate() {
            let prob = ((k + 1) as f64 - 0.5 + size) / (2.0 * size);
            rows.push(HalfNormalRow {
                group: g.id,
                effect,
                abs_estimate,
                quantile: std.inverse_cdf(prob),
            });
        }
    }
    rows
}
