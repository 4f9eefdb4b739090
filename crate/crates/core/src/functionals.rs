//! Relative entropy, Fisher information (scalar and matrix) and the log-Sobolev deficit.
//!
//! Single Gaussians use closed forms. Mixtures in one or two dimensions are
//! integrated by adaptive cubature; higher dimensions use Monte Carlo with
//! exact draws from the mixture itself.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{BoundReport, Direction, Estimate, MatrixEstimate, Method};
use crate::gaussmix::{GaussianMixture, LN_2PI};
use crate::quadrature::{self, QuadOptions, Region};
use crate::rng::{self, Purpose, DEFAULT_SEED};
use crate::spectral::{max_abs_entry, SpectralData, SpectralSource};

/// Half-width of each component box in units of its largest standard deviation.
pub const BOX_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    /// Closed form for a single Gaussian, cubature up to dimension 2, Monte Carlo above.
    Auto,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Budget {
    pub quad_tol: f64,
    pub quad_rel_tol: f64,
    pub max_evaluations: usize,
    pub samples: usize,
    pub chunk: usize,
    pub seed: u64,
    pub method: MethodChoice,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            quad_tol: 1e-8,
            quad_rel_tol: 1e-10,
            max_evaluations: 20_000_000,
            samples: 1_000_000,
            chunk: 1 << 16,
            seed: DEFAULT_SEED,
            method: MethodChoice::Auto,
        }
    }
}

impl Budget {
    pub fn with_method(mut self, method: MethodChoice) -> Self {
        self.method = method;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn quad_options(&self) -> QuadOptions {
        QuadOptions { abs_tol: self.quad_tol, rel_tol: self.quad_rel_tol, max_evaluations: self.max_evaluations }
    }
}

/// Closed forms for one Gaussian with covariance eigenvalues s_i and mean m.
#[derive(Debug, Clone)]
pub struct GaussianClosedForms {
    pub h_gamma: f64,
    pub i_gamma: f64,
    pub h_leb: f64,
    pub i_leb: f64,
    pub fisher_leb: DMatrix<f64>,
    pub fisher_gauss: DMatrix<f64>,
    pub deficit: f64,
}

pub fn gaussian_closed_forms(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<GaussianClosedForms> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: cov.nrows() });
    }
    let spec = SpectralData::of(cov, SpectralSource::Cov);
    if !(spec.min() > 0.0) {
        return Err(Error::NonPositiveDefiniteCovariance { component: 0, min_eigenvalue: spec.min() });
    }
    let m2 = mean.norm_squared();
    let s = &spec.eigenvalues;
    let h_gamma = 0.5 * s.iter().map(|&v| v - 1.0 - v.ln()).sum::<f64>() + 0.5 * m2;
    let i_gamma = s.iter().map(|&v| (v - 1.0) * (v - 1.0) / v).sum::<f64>() + m2;
    let h_leb = -0.5 * s.iter().map(|v| v.ln()).sum::<f64>() - 0.5 * n as f64 * (1.0 + LN_2PI);
    let deficit = 0.5 * s.iter().map(|&v| 1.0 / v - 1.0 + v.ln()).sum::<f64>();
    let fisher_leb = spec.map(|v| 1.0 / v);
    let fisher_gauss = spec.map(|v| v - 2.0 + 1.0 / v) + mean * mean.transpose();
    let i_leb = s.iter().map(|v| 1.0 / v).sum();
    Ok(GaussianClosedForms { h_gamma, i_gamma, h_leb, i_leb, fisher_leb, fisher_gauss, deficit })
}

/// H(γ|𝓛) for the standard Gaussian in dimension n.
pub fn standard_entropy_leb(n: usize) -> f64 {
    -0.5 * n as f64 * (1.0 + LN_2PI)
}

/// Every functional of μ needed by the inequality checks.
#[derive(Debug, Clone, Serialize)]
pub struct Functionals {
    pub dim: usize,
    pub method: Method,
    /// H(μ|γ)
    pub entropy_gauss: Estimate,
    /// I(μ|γ)
    pub fisher_info_gauss: Estimate,
    /// δ(μ) = ½I(μ|γ) − H(μ|γ)
    pub deficit: Estimate,
    /// H(μ|𝓛) = ∫ p log p
    pub entropy_leb: Estimate,
    /// I(μ|𝓛)
    pub fisher_info_leb: Estimate,
    /// 𝓘(μ|𝓛) = E[s⊗s]
    pub fisher_leb: MatrixEstimate,
    /// 𝓘(μ|γ) = E[(s+x)⊗(s+x)]
    pub fisher_gauss: MatrixEstimate,
    /// −E[∇² log p]
    pub neg_hessian: MatrixEstimate,
    /// Total mass seen by the integrator (1 for closed form and Monte Carlo).
    pub mass: Estimate,
    #[serde(skip)]
    pub mean: DVector<f64>,
    #[serde(skip)]
    pub cov: DMatrix<f64>,
    #[serde(skip)]
    pub second_moment: DMatrix<f64>,
}

impl Functionals {
    pub fn compute(mix: &GaussianMixture, budget: &Budget) -> Result<Self> {
        let method = match budget.method {
            MethodChoice::Auto if mix.is_single_gaussian() => Method::ClosedForm,
            MethodChoice::Auto if mix.dim() <= 2 => Method::Quadrature,
            MethodChoice::Auto => Method::MonteCarlo,
            MethodChoice::Quadrature if mix.dim() > 2 => {
                return Err(Error::DomainError(format!("cubature supports dims 1 and 2, got {}", mix.dim())))
            }
            MethodChoice::Quadrature => Method::Quadrature,
            MethodChoice::MonteCarlo => Method::MonteCarlo,
        };
        match method {
            Method::ClosedForm => Self::closed_form(mix),
            Method::Quadrature => Self::by_quadrature(mix, budget),
            Method::MonteCarlo => Self::by_monte_carlo(mix, budget),
        }
    }

    fn closed_form(mix: &GaussianMixture) -> Result<Self> {
        let c = &mix.components()[0];
        let g = gaussian_closed_forms(&c.mean, &c.cov)?;
        let (mean, cov) = mix.moments();
        Ok(Self {
            dim: mix.dim(),
            method: Method::ClosedForm,
            entropy_gauss: Estimate::exact(g.h_gamma),
            fisher_info_gauss: Estimate::exact(g.i_gamma),
            deficit: Estimate::exact(g.deficit),
            entropy_leb: Estimate::exact(g.h_leb),
            fisher_info_leb: Estimate::exact(g.i_leb),
            fisher_leb: MatrixEstimate::exact(g.fisher_leb.clone()),
            fisher_gauss: MatrixEstimate::exact(g.fisher_gauss),
            neg_hessian: MatrixEstimate::exact(g.fisher_leb),
            mass: Estimate::exact(1.0),
            second_moment: mix.second_moment(),
            mean,
            cov,
        })
    }

    fn by_quadrature(mix: &GaussianMixture, budget: &Budget) -> Result<Self> {
        let regions = integration_domain(mix);
        let flat = FlatMixture::new(mix);
        let layout = Layout::new(mix.dim());
        let res = quadrature::integrate(regions, layout.len(), &budget.quad_options(), |x, out| {
            let mut scratch = flat.scratch();
            let lp = flat.eval(x, &mut scratch, true);
            layout.fill(x, lp, &scratch, out);
            let p = lp.exp();
            for v in out.iter_mut() {
                *v *= p;
            }
        })?;
        // Floor for truncation outside the boxes and summation rounding.
        let errors: Vec<f64> =
            res.values.iter().zip(&res.errors).map(|(v, e)| e.max(1e-12 * (1.0 + v.abs()))).collect();
        Ok(Self::assemble(mix, &layout, &res.values, &errors, Method::Quadrature, res.evaluations))
    }

    fn by_monte_carlo(mix: &GaussianMixture, budget: &Budget) -> Result<Self> {
        if budget.samples < 2 || budget.chunk == 0 {
            return Err(Error::Config("Monte Carlo needs at least two samples and a positive chunk".into()));
        }
        let flat = FlatMixture::new(mix);
        let layout = Layout::new(mix.dim());
        let stats = monte_carlo_mean(mix, budget.samples, budget.chunk, budget.seed, layout.len(), |x, out| {
            let mut scratch = flat.scratch();
            let lp = flat.eval(x, &mut scratch, true);
            layout.fill(x, lp, &scratch, out);
        });
        let errors: Vec<f64> = stats.stderr();
        Ok(Self::assemble(mix, &layout, &stats.mean, &errors, Method::MonteCarlo, budget.samples))
    }

    fn assemble(
        mix: &GaussianMixture,
        layout: &Layout,
        values: &[f64],
        errors: &[f64],
        method: Method,
        n_used: usize,
    ) -> Self {
        let est = |k: usize| Estimate::new(values[k], errors[k], method, n_used);
        let mat = |block: usize| {
            let (m, e) = layout.matrix(block, values, errors);
            MatrixEstimate { value: m, abs_error: e, method, n: n_used }
        };
        let (mean, cov) = mix.moments();
        Self {
            dim: mix.dim(),
            method,
            mass: est(Layout::MASS),
            entropy_gauss: est(Layout::LOG_RATIO),
            fisher_info_gauss: est(Layout::FISHER_GAUSS),
            deficit: est(Layout::DEFICIT),
            entropy_leb: est(Layout::LOG_DENSITY),
            fisher_info_leb: est(Layout::FISHER_LEB),
            fisher_leb: mat(0),
            fisher_gauss: mat(1),
            neg_hessian: mat(2),
            second_moment: mix.second_moment(),
            mean,
            cov,
        }
    }

    /// Spectral data of 𝓘(μ|𝓛).
    pub fn fisher_leb_spectrum(&self) -> SpectralData {
        SpectralData::of(&self.fisher_leb.value, SpectralSource::FisherLeb)
    }

    /// Spectral data of 𝓘(μ|γ).
    pub fn fisher_gauss_spectrum(&self) -> SpectralData {
        SpectralData::of(&self.fisher_gauss.value, SpectralSource::FisherGauss)
    }

    pub fn cov_spectrum(&self) -> SpectralData {
        SpectralData::of(&self.cov, SpectralSource::Cov)
    }
}

/// Union of per-component boxes mean ± 8√λmax, with cells no wider than 2√λmin.
pub fn integration_domain(mix: &GaussianMixture) -> Vec<Region> {
    let boxes: Vec<(Vec<f64>, Vec<f64>, f64)> = mix
        .components()
        .iter()
        .map(|c| {
            let hi = c.eigenvalues[0].sqrt();
            let lo = c.eigenvalues.last().unwrap().sqrt();
            (c.mean.iter().copied().collect(), vec![BOX_SIGMAS * hi; mix.dim()], lo)
        })
        .collect();
    quadrature::cover_boxes(&boxes)
}

/// Output layout of the shared integrand:
/// scalars [1, log dμ/dγ, |s+x|², deficit density, log p, |s|²] followed by the
/// upper triangles of s⊗s, (s+x)⊗(s+x) and −∇²log p.
pub(crate) struct Layout {
    dim: usize,
    tri: usize,
}

impl Layout {
    const MASS: usize = 0;
    const LOG_RATIO: usize = 1;
    const FISHER_GAUSS: usize = 2;
    const DEFICIT: usize = 3;
    const LOG_DENSITY: usize = 4;
    const FISHER_LEB: usize = 5;
    const SCALARS: usize = 6;

    fn new(dim: usize) -> Self {
        Self { dim, tri: dim * (dim + 1) / 2 }
    }

    fn len(&self) -> usize {
        Self::SCALARS + 3 * self.tri
    }

    fn fill(&self, x: &[f64], lp: f64, scratch: &Scratch, out: &mut [f64]) {
        let n = self.dim;
        let nf = n as f64;
        let s = &scratch.score;
        let x2: f64 = x.iter().map(|v| v * v).sum();
        let s2: f64 = s.iter().map(|v| v * v).sum();
        let sx2: f64 = s.iter().zip(x).map(|(a, b)| (a + b) * (a + b)).sum();
        out[Self::MASS] = 1.0;
        out[Self::LOG_RATIO] = lp + 0.5 * x2 + 0.5 * nf * LN_2PI;
        out[Self::FISHER_GAUSS] = sx2;
        // ½|s|² − log p − n − (n/2)log 2π integrates to δ without the |x|² cancellation.
        out[Self::DEFICIT] = 0.5 * s2 - lp - nf - 0.5 * nf * LN_2PI;
        out[Self::LOG_DENSITY] = lp;
        out[Self::FISHER_LEB] = s2;
        let mut k = Self::SCALARS;
        for i in 0..n {
            for j in i..n {
                out[k] = s[i] * s[j];
                out[k + self.tri] = (s[i] + x[i]) * (s[j] + x[j]);
                out[k + 2 * self.tri] = -scratch.hessian[i * n + j];
                k += 1;
            }
        }
    }

    fn matrix(&self, block: usize, values: &[f64], errors: &[f64]) -> (DMatrix<f64>, f64) {
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        let mut err = 0.0_f64;
        let mut k = Self::SCALARS + block * self.tri;
        for i in 0..n {
            for j in i..n {
                m[(i, j)] = values[k];
                m[(j, i)] = values[k];
                err = err.max(errors[k]);
                k += 1;
            }
        }
        (m, err)
    }
}

struct FlatComponent {
    /// log w − ½ log det C − (n/2) log 2π
    log_norm: f64,
    mean: Vec<f64>,
    /// Row-major C⁻¹.
    precision: Vec<f64>,
}

/// Allocation-free evaluator for log p, its gradient and Hessian.
pub(crate) struct FlatMixture {
    dim: usize,
    comps: Vec<FlatComponent>,
}

pub(crate) struct Scratch {
    lw: Vec<f64>,
    grads: Vec<f64>,
    pub(crate) score: Vec<f64>,
    pub(crate) hessian: Vec<f64>,
}

impl FlatMixture {
    pub(crate) fn new(mix: &GaussianMixture) -> Self {
        let n = mix.dim();
        let comps = mix
            .components()
            .iter()
            .map(|c| FlatComponent {
                log_norm: c.log_weight - 0.5 * c.log_det - 0.5 * n as f64 * LN_2PI,
                mean: c.mean.iter().copied().collect(),
                precision: (0..n * n).map(|k| c.precision[(k / n, k % n)]).collect(),
            })
            .collect();
        Self { dim: n, comps }
    }

    pub(crate) fn scratch(&self) -> Scratch {
        let n = self.dim;
        Scratch {
            lw: vec![0.0; self.comps.len()],
            grads: vec![0.0; self.comps.len() * n],
            score: vec![0.0; n],
            hessian: vec![0.0; n * n],
        }
    }

    /// Returns log p(x); fills the score and optionally the Hessian.
    pub(crate) fn eval(&self, x: &[f64], sc: &mut Scratch, hessian: bool) -> f64 {
        let n = self.dim;
        let mut max = f64::NEG_INFINITY;
        for (j, c) in self.comps.iter().enumerate() {
            let g = &mut sc.grads[j * n..(j + 1) * n];
            let mut quad = 0.0;
            for a in 0..n {
                let mut acc = 0.0;
                for b in 0..n {
                    acc += c.precision[a * n + b] * (x[b] - c.mean[b]);
                }
                g[a] = -acc;
                quad += acc * (x[a] - c.mean[a]);
            }
            let l = c.log_norm - 0.5 * quad;
            sc.lw[j] = l;
            max = max.max(l);
        }
        let mut total = 0.0;
        for l in sc.lw.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        let lse = max + total.ln();
        sc.score.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.comps.len() {
            let r = sc.lw[j] / total;
            sc.lw[j] = r;
            for a in 0..n {
                sc.score[a] += r * sc.grads[j * n + a];
            }
        }
        if hessian {
            sc.hessian.iter_mut().for_each(|v| *v = 0.0);
            for (j, c) in self.comps.iter().enumerate() {
                let r = sc.lw[j];
                if r == 0.0 {
                    continue;
                }
                for a in 0..n {
                    let da = sc.grads[j * n + a] - sc.score[a];
                    for b in 0..n {
                        let db = sc.grads[j * n + b] - sc.score[b];
                        sc.hessian[a * n + b] += r * (da * db - c.precision[a * n + b]);
                    }
                }
            }
        }
        lse
    }
}

/// Running mean and centred second moment per output.
#[derive(Debug, Clone)]
pub(crate) struct Welford {
    pub(crate) count: f64,
    pub(crate) mean: Vec<f64>,
    pub(crate) m2: Vec<f64>,
}

impl Welford {
    pub(crate) fn new(width: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; width], m2: vec![0.0; width] }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        for k in 0..x.len() {
            let d = x[k] - self.mean[k];
            self.mean[k] += d / self.count;
            self.m2[k] += d * (x[k] - self.mean[k]);
        }
    }

    pub(crate) fn merge(&mut self, other: &Welford) {
        if other.count == 0.0 {
            return;
        }
        let n = self.count + other.count;
        for k in 0..self.mean.len() {
            let d = other.mean[k] - self.mean[k];
            self.m2[k] += other.m2[k] + d * d * self.count * other.count / n;
            self.mean[k] += d * other.count / n;
        }
        self.count = n;
    }

    pub(crate) fn stderr(&self) -> Vec<f64> {
        self.m2.iter().map(|m| (m / (self.count - 1.0) / self.count).max(0.0).sqrt()).collect()
    }
}

/// Mean of `f(X)` over exact draws from μ, in fixed-size chunks with one stream each,
/// merged in chunk order.
pub(crate) fn monte_carlo_mean<F>(
    mix: &GaussianMixture,
    samples: usize,
    chunk: usize,
    seed: u64,
    width: usize,
    f: F,
) -> Welford
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let chunks = samples.div_ceil(chunk);
    let parts: Vec<Welford> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, Purpose::MonteCarlo, c as u64);
            let count = chunk.min(samples - c * chunk);
            let mut w = Welford::new(width);
            let mut out = vec![0.0; width];
            for _ in 0..count {
                let x = mix.draw(&mut r);
                f(x.as_slice(), &mut out);
                w.push(&out);
            }
            w
        })
        .collect();
    let mut total = Welford::new(width);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// H(μ|γ).
pub fn entropy_rel_gaussian(mix: &GaussianMixture, budget: &Budget) -> Result<Estimate> {
    Ok(Functionals::compute(mix, budget)?.entropy_gauss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Lebesgue,
    Gaussian,
}

/// 𝓘(μ|𝓛) or 𝓘(μ|γ).
pub fn fisher_matrix(mix: &GaussianMixture, reference: Reference, budget: &Budget) -> Result<MatrixEstimate> {
    let f = Functionals::compute(mix, budget)?;
    Ok(match reference {
        Reference::Lebesgue => f.fisher_leb,
        Reference::Gaussian => f.fisher_gauss,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DeficitReport {
    pub deficit: Estimate,
    pub entropy: Estimate,
    pub fisher: Estimate,
    /// ½·fisher − entropy from the two constituents, errors added.
    pub from_constituents: Estimate,
}

pub fn deficit(mix: &GaussianMixture, budget: &Budget) -> Result<DeficitReport> {
    let f = Functionals::compute(mix, budget)?;
    Ok(deficit_from(&f))
}

pub fn deficit_from(f: &Functionals) -> DeficitReport {
    DeficitReport {
        deficit: f.deficit,
        entropy: f.entropy_gauss,
        fisher: f.fisher_info_gauss,
        from_constituents: f.fisher_info_gauss.scale(0.5).minus(f.entropy_gauss),
    }
}

/// 𝓘(μ|𝓛) − Id against 𝓘(μ|γ) + Id − E[x⊗x]; lhs is the max-entry discrepancy, rhs is 0.
pub fn integration_by_parts_check(mix: &GaussianMixture, budget: &Budget) -> Result<BoundReport> {
    let f = Functionals::compute(mix, budget)?;
    Ok(integration_by_parts_from(&f))
}

pub fn integration_by_parts_from(f: &Functionals) -> BoundReport {
    let id = DMatrix::<f64>::identity(f.dim, f.dim);
    let lhs = &f.fisher_leb.value - &id;
    let rhs = &f.fisher_gauss.value + &id - &f.second_moment;
    let err = f.fisher_leb.abs_error + f.fisher_gauss.abs_error;
    let disc = Estimate::new(max_abs_entry(&(lhs - rhs)), err, f.method, f.fisher_leb.n);
    BoundReport::new("integration_by_parts", disc, Estimate::exact(0.0), Direction::LhsLeRhs)
        .with_note("lhs = max entry of |(I_leb − Id) − (I_gauss + Id − E[x⊗x])|")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quad() -> Budget {
        Budget::default().with_method(MethodChoice::Quadrature)
    }

    fn bimodal() -> GaussianMixture {
        GaussianMixture::mixture_1d(&[(0.5, -1.0, 0.5), (0.5, 1.0, 0.5)]).unwrap()
    }

    #[test]
    fn closed_forms_examples() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let g = gaussian_closed_forms(&DVector::from_element(1, 0.0), &one).unwrap();
        assert_eq!((g.h_gamma, g.i_gamma, g.deficit), (0.0, 0.0, 0.0));
        let g = gaussian_closed_forms(&DVector::from_element(1, 2.0), &one).unwrap();
        assert_abs_diff_eq!(g.h_gamma, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.i_gamma, 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.deficit, 0.0, epsilon = 1e-15);
        let g = gaussian_closed_forms(&DVector::from_element(1, 0.0), &DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert_abs_diff_eq!(g.deficit, 0.153_426, epsilon = 1e-6);
        assert!(gaussian_closed_forms(&DVector::zeros(1), &DMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn quadrature_reproduces_gaussian_deficit() {
        let mu = GaussianMixture::gaussian_1d(0.0, 0.5).unwrap();
        let f = Functionals::compute(&mu, &quad()).unwrap();
        assert_eq!(f.method, Method::Quadrature);
        // Independent 1D oracle: trapezoid rule on ½|∇log f|² − log f with f = dμ/dγ.
        let h = 1e-4;
        let mut trap = 0.0;
        for k in 0..=200_000 {
            let x = -10.0 + k as f64 * h;
            let p = (-x * x).exp() / std::f64::consts::PI.sqrt();
            let log_f = -0.5 * x * x + 0.5 * 2f64.ln();
            let grad_log_f = -x;
            trap += h * p * (0.5 * grad_log_f * grad_log_f - log_f);
        }
        assert_abs_diff_eq!(trap, 0.153_426, epsilon = 1e-6);
        assert_abs_diff_eq!(f.deficit.value, trap, epsilon = 1e-8);
        assert!(f.deficit.abs_error <= 1e-8);
    }

    #[test]
    fn translated_gaussian_entropy() {
        let mu = GaussianMixture::gaussian_1d(3.0, 1.0).unwrap();
        let f = Functionals::compute(&mu, &quad()).unwrap();
        assert_abs_diff_eq!(f.entropy_gauss.value, 4.5, epsilon = 1e-8);
        assert_abs_diff_eq!(f.deficit.value, 0.0, epsilon = 1e-8);
        let c = Functionals::compute(&mu, &Budget::default()).unwrap();
        assert_eq!(c.method, Method::ClosedForm);
        assert_eq!(c.entropy_gauss.value, 4.5);
    }

    #[test]
    fn fisher_matrix_examples() {
        let g = GaussianMixture::standard(2);
        let m = fisher_matrix(&g, Reference::Lebesgue, &quad()).unwrap();
        assert!(max_abs_entry(&(m.value - DMatrix::identity(2, 2))) < 1e-8);
        let s = GaussianMixture::gaussian_1d(0.0, 0.4).unwrap();
        let m = fisher_matrix(&s, Reference::Lebesgue, &quad()).unwrap();
        assert_abs_diff_eq!(m.value[(0, 0)], 2.5, epsilon = 1e-8);
    }

    #[test]
    fn score_outer_equals_negative_hessian() {
        let f = Functionals::compute(&bimodal(), &quad()).unwrap();
        let d = max_abs_entry(&(&f.fisher_leb.value - &f.neg_hessian.value));
        assert!(d <= 1e-4, "{d}");
        assert!(f.fisher_leb.abs_error + f.neg_hessian.abs_error <= 1e-4);
    }

    #[test]
    fn trace_matches_scalar() {
        let f = Functionals::compute(&bimodal(), &quad()).unwrap();
        let t = f.fisher_gauss.trace();
        assert!((t.value - f.fisher_info_gauss.value).abs() <= t.abs_error + f.fisher_info_gauss.abs_error + 1e-12);
        let t = f.fisher_leb.trace();
        assert!((t.value - f.fisher_info_leb.value).abs() <= t.abs_error + f.fisher_info_leb.abs_error + 1e-12);
    }

    #[test]
    fn deficit_constituents_agree() {
        let r = deficit(&bimodal(), &quad()).unwrap();
        let d = (r.deficit.value - r.from_constituents.value).abs();
        assert!(d <= r.deficit.abs_error + r.from_constituents.abs_error, "{d}");
        assert!(r.deficit.value > 0.0);
    }

    #[test]
    fn mixdef_example_is_bounded() {
        let mu = GaussianMixture::mixture_1d(&[(0.75, 0.0, 1.0), (0.25, 16.0, 1.0)]).unwrap();
        let f = Functionals::compute(&mu, &quad()).unwrap();
        assert!(f.deficit.value >= -f.deficit.abs_error);
        let bound = -0.75 * 0.75f64.ln() - 0.25 * 0.25f64.ln();
        assert_abs_diff_eq!(bound, 0.562_335, epsilon = 1e-6);
        assert!(f.deficit.value <= bound + f.deficit.abs_error, "{:?}", f.deficit);
    }

    #[test]
    fn integration_by_parts_gaussian() {
        let mu = GaussianMixture::gaussian_1d(0.0, 0.3).unwrap();
        let r = integration_by_parts_check(&mu, &Budget::default()).unwrap();
        assert!(r.lhs.value <= 1e-8);
        let r = integration_by_parts_check(&bimodal(), &quad()).unwrap();
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn monte_carlo_matches_closed_form_in_three_dims() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.5, 0.2, 0.0, 0.2, 0.7, 0.1, 0.0, 0.1, 0.9]);
        let mean = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let mu = GaussianMixture::gaussian(mean.clone(), cov.clone()).unwrap();
        let b = Budget::default().with_method(MethodChoice::MonteCarlo).with_samples(200_000);
        let f = Functionals::compute(&mu, &b).unwrap();
        let g = gaussian_closed_forms(&mean, &cov).unwrap();
        assert!((f.entropy_gauss.value - g.h_gamma).abs() <= 4.0 * f.entropy_gauss.abs_error);
        assert!((f.deficit.value - g.deficit).abs() <= 4.0 * f.deficit.abs_error);
        assert!((f.entropy_leb.value - g.h_leb).abs() <= 4.0 * f.entropy_leb.abs_error);
    }

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut a = Welford::new(1);
        for x in &xs {
            a.push(&[*x]);
        }
        let mut b = Welford::new(1);
        let mut c = Welford::new(1);
        for x in &xs[..37] {
            b.push(&[*x]);
        }
        for x in &xs[37..] {
            c.push(&[*x]);
        }
        b.merge(&c);
        assert_abs_diff_eq!(a.mean[0], b.mean[0], epsilon = 1e-14);
        assert_abs_diff_eq!(a.m2[0], b.m2[0], epsilon = 1e-12);
    }
}
