//! Two-component counterexample families, scaling sweeps and the mixture-proximity probe.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{mixture_deficit_upper, shannon_entropy};
use crate::error::{Error, Result};
use crate::estimate::{Estimate, Method};
use crate::functionals::{Budget, Functionals, Welford};
use crate::gaussmix::GaussianMixture;
use crate::rng::{self, Purpose};
use crate::transport::{infimum_over_translates, optimal_matching, EmpiricalMeasure};

/// Largest support allowed for the fitted discrete measure.
pub const MAX_SUPPORT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// (1 − 1/k)γ_{0,1} + (1/k)γ_{k²,1}
    VarianceBlowup,
    /// (1 − t)γ_{a,σ} + tγ_{b,σ} with t = k^{-3/2}, a = −1/k, b = a + √k, σ = 1 − t(1 − t)k.
    Isotropic,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "variance_blowup" => Ok(Family::VarianceBlowup),
            "isotropic" => Ok(Family::Isotropic),
            other => Err(Error::Config(format!("unknown family '{other}' (expected variance_blowup or isotropic)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Analytic {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub mean: f64,
    pub variance: f64,
    /// ¼(σ⁻¹ − 1)² − φ(t)
    pub deficit_upper: f64,
    /// min(t, 1−t)|b − a|/16, a lower bound on inf_m W₁ when the tail condition holds.
    pub w_lower_p1: f64,
    /// min(t, 1−t)|b − a|²/64, a lower bound on inf_m W₂² when the tail condition holds.
    pub w2_lower: f64,
    /// min(t, 1−t) ≥ 2exp(−(b − a)²/32)
    pub tail_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyMember {
    pub family: Family,
    pub k: f64,
    #[serde(skip)]
    pub mixture: GaussianMixture,
    pub analytic: Analytic,
}

fn member(family: Family, k: f64, t: f64, a: f64, b: f64, sigma: f64) -> Result<FamilyMember> {
    let mixture = GaussianMixture::mixture_1d(&[(1.0 - t, a, sigma), (t, b, sigma)])?;
    let gap = (b - a).abs();
    let m = t.min(1.0 - t);
    let analytic = Analytic {
        t,
        a,
        b,
        sigma,
        mean: (1.0 - t) * a + t * b,
        variance: sigma + t * (1.0 - t) * gap * gap,
        deficit_upper: mixture_deficit_upper(a, b, sigma, t)?,
        w_lower_p1: m * gap / 16.0,
        w2_lower: m * gap * gap / 64.0,
        tail_ok: m >= 2.0 * (-gap * gap / 32.0).exp(),
    };
    Ok(FamilyMember { family, k, mixture, analytic })
}

pub fn variance_blowup_family(k: f64) -> Result<FamilyMember> {
    if !(k >= 2.0) {
        return Err(Error::DomainError(format!("k must be at least 2, got {k}")));
    }
    member(Family::VarianceBlowup, k, 1.0 / k, 0.0, k * k, 1.0)
}

pub fn isotropic_family(k: f64) -> Result<FamilyMember> {
    if !(k >= 2.0) {
        return Err(Error::DomainError(format!("k must be at least 2, got {k}")));
    }
    let t = k.powf(-1.5);
    let a = -1.0 / k;
    let b = -(1.0 - t) * a / t;
    let sigma = 1.0 - t * (1.0 - t) * (b - a) * (b - a);
    if sigma <= 0.0 {
        return Err(Error::SigmaNonPositive(sigma));
    }
    member(Family::Isotropic, k, t, a, b, sigma)
}

pub fn family_member(family: Family, k: f64) -> Result<FamilyMember> {
    match family {
        Family::VarianceBlowup => variance_blowup_family(k),
        Family::Isotropic => isotropic_family(k),
    }
}

/// n(k) = ⌊k^{3/4}⌋
pub fn tensor_dimension(k: f64) -> usize {
    k.powf(0.75).floor() as usize
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepOptions {
    /// Add the measured columns (quadrature deficit, translate-infimum distances).
    pub monte_carlo: bool,
    pub samples: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { monte_carlo: false, samples: 2048, reps: 5, seed: rng::DEFAULT_SEED }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Measured {
    pub deficit: Estimate,
    /// inf_m W₂²(μ̂, γ̂ + m), mean and standard error over repetitions.
    pub w2_sq_inf: Estimate,
    /// inf_m W₁(μ̂, γ̂ + m), mean and standard error over repetitions.
    pub w1_inf: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub k: f64,
    pub variance: f64,
    pub deficit_upper: f64,
    pub w_lower_p1: f64,
    pub w2_lower: f64,
    pub tail_ok: bool,
    pub n_k: usize,
    pub tensor_deficit_upper: f64,
    pub tensor_w2_lower: f64,
    /// w2_lower / deficit_upper
    pub ratio: f64,
    pub measured: Option<Measured>,
}

/// Fixed column order of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 17] = [
    "k",
    "variance",
    "deficit_upper",
    "w_lower_p1",
    "w2_lower",
    "tail_ok",
    "n_k",
    "tensor_deficit_upper",
    "tensor_w2_lower",
    "ratio",
    "measured_deficit",
    "measured_deficit_err",
    "w2_sq_inf",
    "w2_sq_inf_se",
    "w1_inf",
    "w1_inf_se",
    "reps",
];

impl SweepRow {
    pub fn csv_record(&self) -> Vec<String> {
        let mut r = vec![
            format!("{}", self.k),
            format!("{:.12e}", self.variance),
            format!("{:.12e}", self.deficit_upper),
            format!("{:.12e}", self.w_lower_p1),
            format!("{:.12e}", self.w2_lower),
            self.tail_ok.to_string(),
            self.n_k.to_string(),
            format!("{:.12e}", self.tensor_deficit_upper),
            format!("{:.12e}", self.tensor_w2_lower),
            format!("{:.12e}", self.ratio),
        ];
        match &self.measured {
            Some(m) => {
                for e in [&m.deficit, &m.w2_sq_inf, &m.w1_inf] {
                    r.push(format!("{:.12e}", e.value));
                    r.push(format!("{:.12e}", e.abs_error));
                }
                r.push(m.w2_sq_inf.n.to_string());
            }
            None => r.extend(std::iter::repeat_n(String::new(), 7)),
        }
        r
    }
}

fn measure(member: &FamilyMember, row: usize, opts: &SweepOptions) -> Result<Measured> {
    let deficit = Functionals::compute(&member.mixture, &Budget::default())?.deficit;
    let mut w2 = Welford::new(1);
    let mut w1 = Welford::new(1);
    for rep in 0..opts.reps {
        let stream = (row * 1000 + rep) as u64;
        let x = EmpiricalMeasure::sample(&member.mixture, opts.samples, opts.seed, stream)?;
        let g = EmpiricalMeasure::standard_gaussian(1, opts.samples, opts.seed, stream)?;
        let two = infimum_over_translates(&x, &g, 2.0, 1e-9)?.value;
        let one = infimum_over_translates(&x, &g, 1.0, 1e-9)?.value;
        w2.push(&[two * two]);
        w1.push(&[one]);
    }
    let se = |w: &Welford| if w.count > 1.0 { w.stderr()[0] } else { f64::NAN };
    Ok(Measured {
        deficit,
        w2_sq_inf: Estimate::new(w2.mean[0], se(&w2), Method::MonteCarlo, opts.reps),
        w1_inf: Estimate::new(w1.mean[0], se(&w1), Method::MonteCarlo, opts.reps),
    })
}

/// One row per k, sorted by k; measured columns only when requested.
pub fn sweep(family: Family, ks: &[f64], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if ks.is_empty() {
        return Err(Error::Config("k list is empty".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_by(f64::total_cmp);
    let rows: Vec<Result<SweepRow>> = ks
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let m = family_member(family, k)?;
            let a = &m.analytic;
            let n_k = tensor_dimension(k);
            let measured = if opts.monte_carlo { Some(measure(&m, i, opts)?) } else { None };
            Ok(SweepRow {
                k,
                variance: a.variance,
                deficit_upper: a.deficit_upper,
                w_lower_p1: a.w_lower_p1,
                w2_lower: a.w2_lower,
                tail_ok: a.tail_ok,
                n_k,
                tensor_deficit_upper: n_k as f64 * a.deficit_upper,
                tensor_w2_lower: n_k as f64 * a.w2_lower,
                ratio: a.w2_lower / a.deficit_upper,
                measured,
            })
        })
        .collect();
    rows.into_iter().collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeOptions {
    pub samples: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { samples: 2048, iterations: 30, seed: rng::DEFAULT_SEED }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Question1Probe {
    /// Exploratory: an empirical fit, not a bound check.
    pub exploratory: bool,
    pub support_size: usize,
    pub weights: Vec<f64>,
    pub atoms: Vec<Vec<f64>>,
    /// S(p)
    pub shannon: f64,
    /// W₂²(μ̂, (p*γ)^) for the fitted p.
    pub w2_sq: f64,
    pub deficit: Estimate,
    /// max(S(p), W₂²)/δ(μ); absent when δ(μ) is within its error of 0.
    pub implied_constant: Option<f64>,
    pub iterations: usize,
}

impl Question1Probe {
    pub fn implied_constant_checked(&self) -> Result<f64> {
        self.implied_constant
            .ok_or(Error::DegenerateDeficit { deficit: self.deficit.value, error: self.deficit.abs_error })
    }
}

/// k-means++ seeding followed by Lloyd iterations.
fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> (Vec<DVector<f64>>, Vec<usize>) {
    let (count, n) = (points.nrows(), points.ncols());
    let row = |i: usize| points.row(i).transpose();
    let mut r = rng::stream(seed, Purpose::Probe, 0);
    let mut centres = vec![row(r.random_range(0..count))];
    let mut d2: Vec<f64> = (0..count).map(|i| (row(i) - &centres[0]).norm_squared()).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut u = r.random::<f64>() * total;
        let mut pick = count - 1;
        for (i, &d) in d2.iter().enumerate() {
            if u < d {
                pick = i;
                break;
            }
            u -= d;
        }
        let c = row(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min((row(i) - &c).norm_squared());
        }
        centres.push(c);
    }
    let mut labels = vec![0; count];
    for _ in 0..100 {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let x = row(i);
            let best = (0..centres.len())
                .min_by(|&a, &b| (&x - &centres[a]).norm_squared().total_cmp(&(&x - &centres[b]).norm_squared()))
                .unwrap();
            changed |= best != *label;
            *label = best;
        }
        let mut sums = vec![DVector::zeros(n); centres.len()];
        let mut sizes = vec![0usize; centres.len()];
        for (i, &l) in labels.iter().enumerate() {
            sums[l] += row(i);
            sizes[l] += 1;
        }
        for j in 0..centres.len() {
            if sizes[j] > 0 {
                centres[j] = &sums[j] / sizes[j] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    (centres, labels)
}

/// Largest-remainder apportionment of `total` slots to the weights.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let mut left = total - counts.iter().sum::<usize>();
    for &j in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[j] += 1;
        left -= 1;
    }
    counts
}

/// Fits a discrete p with at most `support` atoms so that p*γ is close to μ in W₂, by alternating
/// exact matching and centroid updates against a fixed Gaussian noise sample.
pub fn question1_probe(mix: &GaussianMixture, support: usize, opts: &ProbeOptions) -> Result<Question1Probe> {
    if support == 0 || support > MAX_SUPPORT {
        return Err(Error::DomainError(format!("support size must be in 1..={MAX_SUPPORT}, got {support}")));
    }
    let n = mix.dim();
    let deficit = Functionals::compute(mix, &Budget::default().with_seed(opts.seed))?.deficit;
    let x = EmpiricalMeasure::sample(mix, opts.samples, opts.seed, 0)?;
    let noise = EmpiricalMeasure::standard_gaussian(n, opts.samples, opts.seed, 0)?;
    let (mut atoms, labels) = kmeans(x.points(), support, opts.seed);
    let mut sizes = vec![0usize; atoms.len()];
    for &l in &labels {
        sizes[l] += 1;
    }
    let keep: Vec<usize> = (0..atoms.len()).filter(|&j| sizes[j] > 0).collect();
    atoms = keep.iter().map(|&j| atoms[j].clone()).collect();
    let weights: Vec<f64> = keep.iter().map(|&j| sizes[j] as f64 / opts.samples as f64).collect();
    let counts = apportion(&weights, opts.samples);
    let owner: Vec<usize> = counts.iter().enumerate().flat_map(|(j, &c)| std::iter::repeat_n(j, c)).collect();

    let build = |atoms: &[DVector<f64>]| -> Result<EmpiricalMeasure> {
        let pts = DMatrix::from_fn(opts.samples, n, |i, a| atoms[owner[i]][a] + noise.points()[(i, a)]);
        EmpiricalMeasure::new(pts)
    };
    let mut best = (f64::INFINITY, atoms.clone());
    let mut iterations = 0;
    for _ in 0..opts.iterations {
        iterations += 1;
        let y = build(&atoms)?;
        // matching[i] is the point of y paired with x_i.
        let (matching, cost) = optimal_matching(&x, &y, 2.0)?;
        if cost < best.0 - 1e-15 {
            best = (cost, atoms.clone());
        } else {
            break;
        }
        let mut sums = vec![DVector::zeros(n); atoms.len()];
        for (i, &j) in matching.iter().enumerate() {
            let xi = x.points().row(i).transpose();
            let gj = noise.points().row(j).transpose();
            sums[owner[j]] += xi - gj;
        }
        for (a, s) in atoms.iter_mut().zip(&sums).enumerate() {
            *s.0 = s.1 / counts[a] as f64;
        }
    }
    let (w2_sq, atoms) = best;
    let shannon = shannon_entropy(&weights);
    let degenerate = deficit.value <= deficit.abs_error + 1e-12;
    Ok(Question1Probe {
        exploratory: true,
        support_size: atoms.len(),
        weights,
        atoms: atoms.iter().map(|a| a.iter().copied().collect()).collect(),
        shannon,
        w2_sq,
        deficit,
        implied_constant: (!degenerate).then(|| shannon.max(w2_sq) / deficit.value),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn blowup_examples() {
        let m = variance_blowup_family(4.0).unwrap();
        assert_abs_diff_eq!(m.analytic.variance, 49.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.analytic.deficit_upper, -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln()), epsilon = 1e-15);
        let m = variance_blowup_family(10.0).unwrap();
        assert_abs_diff_eq!(m.analytic.variance, 901.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.analytic.deficit_upper, 0.325_083, epsilon = 1e-6);
        let (_, c) = m.mixture.moments();
        assert_abs_diff_eq!(c[(0, 0)], 901.0, epsilon = 1e-9);
        assert!(variance_blowup_family(1.0).is_err());
    }

    #[test]
    fn blowup_sweep_is_monotone() {
        let rows = sweep(Family::VarianceBlowup, &[100.0, 4.0, 10.0, 1000.0], &SweepOptions::default()).unwrap();
        assert_eq!(rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![4.0, 10.0, 100.0, 1000.0]);
        for w in rows.windows(2) {
            assert!(w[1].deficit_upper < w[0].deficit_upper && w[1].variance > w[0].variance);
        }
        assert!(rows.iter().all(|r| r.measured.is_none()));
    }

    #[test]
    fn isotropic_examples() {
        let m = isotropic_family(100.0).unwrap();
        let a = &m.analytic;
        assert_abs_diff_eq!(a.t, 1e-3, epsilon = 1e-18);
        assert_abs_diff_eq!(a.a, -0.01, epsilon = 1e-18);
        assert_abs_diff_eq!(a.b, 9.99, epsilon = 1e-12);
        assert_abs_diff_eq!(a.sigma, 0.9001, epsilon = 1e-12);
        assert!(!a.tail_ok);
        let m = isotropic_family(400.0).unwrap();
        let a = &m.analytic;
        assert!(a.tail_ok);
        assert_abs_diff_eq!(a.w2_lower, 1.0 / 1280.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a.deficit_upper, 1.94e-3, epsilon = 1e-5);
        for k in [2.0, 7.5, 400.0, 2500.0] {
            let (m, c) = isotropic_family(k).unwrap().mixture.moments();
            assert!(m[0].abs() < 1e-10 && (c[(0, 0)] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn isotropic_tensor_trend() {
        let rows = sweep(Family::Isotropic, &[400.0, 900.0, 1600.0], &SweepOptions::default()).unwrap();
        assert!(rows[0].ratio >= 0.4);
        for w in rows.windows(2) {
            assert!(w[1].ratio > w[0].ratio);
            assert!(w[1].tensor_w2_lower > w[0].tensor_w2_lower);
            assert!(w[1].tensor_deficit_upper < w[0].tensor_deficit_upper);
        }
        assert_eq!(rows.iter().map(|r| r.n_k).collect::<Vec<_>>(), vec![89, 164, 252]);
    }

    #[test]
    fn measured_columns() {
        let opts = SweepOptions { monte_carlo: true, samples: 512, reps: 3, ..SweepOptions::default() };
        let rows = sweep(Family::Isotropic, &[400.0], &opts).unwrap();
        let m = rows[0].measured.as_ref().unwrap();
        assert!(m.deficit.value <= rows[0].deficit_upper + 1e-8);
        assert_eq!(rows[0].csv_record().len(), SWEEP_COLUMNS.len());
    }

    #[test]
    fn probe_on_honest_mixture() {
        let mu = GaussianMixture::mixture_1d(&[(0.75, 0.0, 1.0), (0.25, 16.0, 1.0)]).unwrap();
        let p = question1_probe(&mu, 2, &ProbeOptions::default()).unwrap();
        assert!((p.shannon - 0.562_335).abs() < 0.02, "{p:?}");
        assert!(p.w2_sq < 0.02);
        assert!(p.implied_constant.unwrap() >= 1.0);
        let mut atoms: Vec<f64> = p.atoms.iter().map(|a| a[0]).collect();
        atoms.sort_by(f64::total_cmp);
        assert!((atoms[0]).abs() < 0.2 && (atoms[1] - 16.0).abs() < 0.2);
    }

    #[test]
    fn probe_degenerate_for_translate() {
        let mu = GaussianMixture::gaussian_1d(2.0, 1.0).unwrap();
        let p = question1_probe(&mu, 1, &ProbeOptions::default()).unwrap();
        assert_eq!(p.shannon, 0.0);
        assert!(p.w2_sq < 0.01);
        assert!(matches!(p.implied_constant_checked(), Err(Error::DegenerateDeficit { .. })));
        assert!(question1_probe(&mu, 17, &ProbeOptions::default()).is_err());
    }

    #[test]
    fn probe_single_atom_for_contracted_gaussian() {
        let mu = GaussianMixture::gaussian_1d(0.0, 0.8).unwrap();
        let p = question1_probe(&mu, 1, &ProbeOptions::default()).unwrap();
        // Population value (1 − √0.8)²; the empirical matching adds an O(1/N) bias.
        let exact = (1.0 - 0.8f64.sqrt()).powi(2);
        assert!(p.w2_sq >= exact - 2e-3 && p.w2_sq < exact + 5e-3, "{p:?}");
        assert_abs_diff_eq!(p.deficit.value, 0.5 * (1.0 / 0.8 - 1.0 + 0.8f64.ln()), epsilon = 1e-12);
    }
}
