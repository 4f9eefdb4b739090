//! Both sides of each log-Sobolev stability inequality, as `BoundReport`s.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{BoundReport, Direction, Estimate, Method};
use crate::functionals::{integration_by_parts_from, standard_entropy_leb, Budget, Functionals};
use crate::gaussmix::GaussianMixture;
use crate::rng::{self, Purpose};
use crate::spectral::{smallest_eigenvalue, sym_inverse, sym_sqrt, SpectralData, SpectralSource};
use crate::transport::{wp_exact, EmpiricalMeasure};

/// Tolerance for semidefinite-order preconditions and for clipping noisy eigenvalues.
pub const PSD_TOL: f64 = 1e-9;

/// Default value of the unspecified universal constant in the W₂⁴ form.
pub const DEFAULT_BGRS_C: f64 = 0.01;

/// Δ(t) = t − log(1 + t).
pub fn delta_fn(t: f64) -> Result<f64> {
    if !(t > -1.0) {
        return Err(Error::DomainError(format!("Δ(t) needs t > −1, got {t}")));
    }
    if t.abs() < 1e-4 {
        let t2 = t * t;
        return Ok(t2 * (0.5 - t / 3.0 + t2 / 4.0 - t2 * t / 5.0));
    }
    Ok(t - t.ln_1p())
}

/// Δ'(t) = t / (1 + t).
fn delta_prime(t: f64) -> f64 {
    t / (1.0 + t)
}

/// x log x with 0 log 0 = 0.
pub fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// φ(t) = t log t + (1 − t) log(1 − t).
pub fn phi(t: f64) -> f64 {
    xlogx(t) + xlogx(1.0 - t)
}

/// Shannon entropy −Σ p log p.
pub fn shannon_entropy(weights: &[f64]) -> f64 {
    -weights.iter().map(|&w| xlogx(w)).sum::<f64>()
}

/// Bound on eigenvalue errors of a matrix estimate with entrywise error `e` (Weyl, Frobenius).
fn eigen_error(n: usize, e: f64) -> f64 {
    n as f64 * e
}

fn est(value: f64, abs_error: f64, f: &Functionals) -> Estimate {
    Estimate::new(value, abs_error, f.method, f.fisher_leb.n)
}

/// H(μ|𝓛) − H(γ|𝓛).
fn entropy_gap(f: &Functionals) -> Estimate {
    f.entropy_leb.shift(-standard_entropy_leb(f.dim))
}

/// H(μ|γ) ≤ ½I(μ|γ); slack = rhs − lhs.
pub fn check_lsi(f: &Functionals) -> BoundReport {
    BoundReport::new("lsi", f.entropy_gauss, f.fisher_info_gauss.scale(0.5), Direction::LhsLeRhs)
}

/// H(μ|𝓛) − H(γ|𝓛) ≤ (n/2) log(I(μ|𝓛)/n); slack = rhs − lhs.
pub fn check_dimensional_lsi(f: &Functionals) -> BoundReport {
    let n = f.dim as f64;
    let tr = f.fisher_leb.trace();
    let rhs = est(0.5 * n * (tr.value / n).ln(), 0.5 * n * tr.abs_error / tr.value, f);
    BoundReport::new("dimensional_lsi", entropy_gap(f), rhs, Direction::LhsLeRhs)
}

/// H(μ|𝓛) − H(γ|𝓛) ≤ ½ log det 𝓘(μ|𝓛), plus the AM/GM ordering against the dimensional form.
#[derive(Debug, Clone, Serialize)]
pub struct LogdetReport {
    pub report: BoundReport,
    /// lhs = ½ log det 𝓘, rhs = (n/2) log(Tr 𝓘 / n); slack is the AM/GM gap.
    pub amgm: BoundReport,
}

pub fn check_logdet_bound(f: &Functionals) -> Result<LogdetReport> {
    let spec = f.fisher_leb_spectrum();
    let e = eigen_error(f.dim, f.fisher_leb.abs_error);
    if spec.min() <= 1e-12 {
        return Err(Error::SingularFisherMatrix(spec.min()));
    }
    let logdet = 0.5 * spec.eigenvalues.iter().map(|a| a.ln()).sum::<f64>();
    let logdet_err = 0.5 * spec.eigenvalues.iter().map(|a| e / a).sum::<f64>();
    let rhs = est(logdet, logdet_err, f);
    let report = BoundReport::new("logdet_fisher", entropy_gap(f), rhs, Direction::LhsLeRhs);
    let dimensional = check_dimensional_lsi(f);
    // Both sides come from the same matrix estimate, so AM/GM holds up to rounding.
    let amgm = BoundReport::new(
        "amgm_ordering",
        Estimate { abs_error: 1e-12 * (1.0 + logdet.abs()), ..rhs },
        Estimate { abs_error: 0.0, ..dimensional.rhs },
        Direction::LhsLeRhs,
    );
    Ok(LogdetReport { report, amgm })
}

/// δ(μ) ≥ ½ΣΔ(α_i − 1) and, when E[x⊗x] ⪯ Id, δ(μ) ≥ ½ΣΔ(β_i).
pub fn check_eigen_deficit_bounds(f: &Functionals) -> Result<(BoundReport, BoundReport)> {
    let n = f.dim;
    let alpha = f.fisher_leb_spectrum();
    let ea = eigen_error(n, f.fisher_leb.abs_error);
    let mut rhs = 0.0;
    let mut err = 0.0;
    for &a in &alpha.eigenvalues {
        rhs += 0.5 * delta_fn(a - 1.0)?;
        err += 0.5 * delta_prime(a - 1.0).abs() * ea;
    }
    let eig3 = BoundReport::new("fisher_eig_leb", f.deficit, est(rhs, err, f), Direction::LhsGeRhs);

    let m2 = SpectralData::of(&f.second_moment, SpectralSource::Other);
    let pre = m2.max() <= 1.0 + PSD_TOL;
    let beta = f.fisher_gauss_spectrum();
    let eb = eigen_error(n, f.fisher_gauss.abs_error);
    let mut rhs = 0.0;
    let mut err = 0.0;
    let mut clipped = 0;
    for &b in &beta.eigenvalues {
        let b = if b < 0.0 && b > -PSD_TOL {
            clipped += 1;
            0.0
        } else {
            b
        };
        rhs += 0.5 * delta_fn(b)?;
        err += 0.5 * delta_prime(b).abs() * eb;
    }
    let mut eig2 = BoundReport::new("fisher_eig_gauss", f.deficit, est(rhs, err, f), Direction::LhsGeRhs)
        .with_preconditions(pre);
    if !pre {
        eig2 = eig2.with_note(format!("E[x⊗x] has eigenvalue {:.6} > 1; informational", m2.max()));
    }
    if clipped > 0 {
        eig2 = eig2.with_note(format!("{clipped} eigenvalue(s) clipped at 0"));
    }
    Ok((eig3, eig2))
}

/// δ(μ) ≥ ½Σ_{λ_i<1}(λ_i⁻¹ − 1 + log λ_i), and the Hilbert–Schmidt form when cov ⪯ Id.
pub fn check_cov_bound(f: &Functionals) -> (BoundReport, BoundReport) {
    let lambda = f.cov_spectrum();
    let rhs: f64 =
        0.5 * lambda.eigenvalues.iter().filter(|&&l| l < 1.0).map(|&l| 1.0 / l - 1.0 + l.ln()).sum::<f64>();
    let cov = BoundReport::new("covariance", f.deficit, Estimate::exact(rhs), Direction::LhsGeRhs);
    let pre = lambda.max() <= 1.0 + PSD_TOL;
    let hs = 0.25 * (&f.cov - DMatrix::identity(f.dim, f.dim)).norm_squared();
    let mut hs = BoundReport::new("covariance_hilbert_schmidt", f.deficit, Estimate::exact(hs), Direction::LhsGeRhs)
        .with_preconditions(pre);
    if !pre {
        hs = hs.with_note(format!("cov has eigenvalue {:.6} > 1; informational", lambda.max()));
    }
    (cov, hs)
}

/// Smallest eigenvalue of 𝓘(μ|𝓛) − cov(μ)⁻¹ against 0.
pub fn check_cramer_rao(f: &Functionals) -> BoundReport {
    let d = &f.fisher_leb.value - sym_inverse(&f.cov);
    let lhs = est(smallest_eigenvalue(&d), eigen_error(f.dim, f.fisher_leb.abs_error), f);
    BoundReport::new("cramer_rao", lhs, Estimate::exact(0.0), Direction::LhsGeRhs)
}

/// ½(Tr(Σ⁻²𝓘) − n + log det Σ²): the log-Sobolev bound applied to the law of ΣX.
pub fn scaled_rhs(sigma: &DMatrix<f64>, fisher: &DMatrix<f64>) -> f64 {
    let n = sigma.nrows() as f64;
    let s = SpectralData::of(sigma, SpectralSource::Other);
    let inv2 = s.map(|x| 1.0 / (x * x));
    let logdet2: f64 = s.eigenvalues.iter().map(|x| 2.0 * x.ln()).sum();
    0.5 * ((inv2 * fisher).trace() - n + logdet2)
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalScaling {
    #[serde(serialize_with = "crate::estimate::serialize_matrix")]
    pub sigma: DMatrix<f64>,
    /// H(μ|𝓛) − H(γ|𝓛) against the scaled bound at Σ = √𝓘.
    pub report: BoundReport,
    /// The same bound rebuilt from the exact pushforward μ_Σ.
    pub pushforward_rhs: Estimate,
    pub pushforward_consistent: bool,
    /// Smallest increase of the scaled bound over the ±5% probes (≥ 0 at a local minimum).
    pub probe_min_increase: f64,
    pub probes: usize,
}

/// Σ = √𝓘(μ|𝓛) minimizes the scaled bound; checked through the pushforward and by probing.
pub fn optimal_scaling(mix: &GaussianMixture, f: &Functionals, budget: &Budget, probes: usize) -> Result<OptimalScaling> {
    let spec = f.fisher_leb_spectrum();
    if spec.min() <= 1e-12 {
        return Err(Error::SingularFisherMatrix(spec.min()));
    }
    let n = f.dim;
    let sigma = sym_sqrt(&f.fisher_leb.value);
    let fisher = &f.fisher_leb.value;
    let best = scaled_rhs(&sigma, fisher);
    let logdet = check_logdet_bound(f)?;
    let rhs = Estimate { value: best, ..logdet.report.rhs };
    let report = BoundReport::new("optimal_scaling", entropy_gap(f), rhs, Direction::LhsLeRhs);

    // Elsi on μ_Σ: H(μ_Σ|𝓛) − H(γ|𝓛) ≤ ½(I(μ_Σ|𝓛) − n), with H(μ_Σ|𝓛) = H(μ|𝓛) − log det Σ.
    let pushed = Functionals::compute(&mix.pushforward(&sigma)?, budget)?;
    let log_det_sigma: f64 = SpectralData::of(&sigma, SpectralSource::Other).eigenvalues.iter().map(|x| x.ln()).sum();
    let tr = pushed.fisher_leb.trace();
    let pushforward_rhs = Estimate::new(
        0.5 * (tr.value - n as f64) + log_det_sigma,
        0.5 * tr.abs_error,
        pushed.method.weaker(f.method),
        tr.n,
    );
    let pushforward_consistent =
        (pushforward_rhs.value - best).abs() <= pushforward_rhs.abs_error + rhs.abs_error + 1e-9 * (1.0 + best.abs());

    let mut r = rng::stream(f.fisher_leb.n as u64 ^ budget.seed, Purpose::Probe, 0);
    let scale = SpectralData::of(&sigma, SpectralSource::Other).max();
    let mut probe_min_increase = f64::INFINITY;
    for _ in 0..probes {
        let mut d = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(StandardNormal));
        d = (&d + d.transpose()) * 0.5;
        let norm = d.norm();
        if norm == 0.0 {
            continue;
        }
        d /= norm;
        for sign in [1.0, -1.0] {
            let trial = &sigma + &d * (sign * 0.05 * scale);
            if smallest_eigenvalue(&trial) <= 0.0 {
                continue;
            }
            probe_min_increase = probe_min_increase.min(scaled_rhs(&trial, fisher) - best);
        }
    }
    Ok(OptimalScaling { sigma, report, pushforward_rhs, pushforward_consistent, probe_min_increase, probes })
}

/// ¼(σ⁻¹ − 1)² − (1−t)log(1−t) − t log t.
pub fn mixture_deficit_upper(_a: f64, _b: f64, sigma: f64, t: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::DomainError(format!("sigma {sigma} not in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::DomainError(format!("t {t} not in [0, 1]")));
    }
    let r = 1.0 / sigma - 1.0;
    Ok(0.25 * r * r - phi(t))
}

/// δ((1−t)μ + tν) ≤ (1−t)δ(μ) + tδ(ν) − φ(t); slack = rhs − lhs.
pub fn convexity_deficit_bound(
    mu: &GaussianMixture,
    nu: &GaussianMixture,
    t: f64,
    budget: &Budget,
) -> Result<BoundReport> {
    let mixed = mu.convex_combination(nu, t)?;
    let lhs = Functionals::compute(&mixed, budget)?.deficit;
    let dm = Functionals::compute(mu, budget)?.deficit;
    let dn = Functionals::compute(nu, budget)?.deficit;
    let rhs = dm.scale(1.0 - t).plus(dn.scale(t)).shift(-phi(t));
    Ok(BoundReport::new("deficit_convexity", lhs, rhs, Direction::LhsLeRhs))
}

/// δ(p * N(0, base_cov)) ≤ S(p) for a discrete p given as (weight, location) pairs.
pub fn shannon_bound(atoms: &[(f64, DVector<f64>)], base_cov: Option<&DMatrix<f64>>, budget: &Budget) -> Result<BoundReport> {
    let first = atoms.first().ok_or_else(|| Error::BadWeights("no atoms".into()))?;
    let n = first.1.len();
    let mut merged: Vec<(f64, DVector<f64>)> = Vec::new();
    for (w, x) in atoms {
        match merged.iter_mut().find(|(_, y)| y == x) {
            Some(m) => m.0 += w,
            None => merged.push((*w, x.clone())),
        }
    }
    let id = DMatrix::identity(n, n);
    let cov = base_cov.unwrap_or(&id);
    let parts = merged.iter().map(|(w, x)| (*w, x.clone(), cov.clone())).collect();
    let mix = GaussianMixture::new(n, parts)?;
    let weights: Vec<f64> = mix.components().iter().map(|c| c.weight).collect();
    let lhs = Functionals::compute(&mix, budget)?.deficit;
    let report = BoundReport::new("shannon", lhs, Estimate::exact(shannon_entropy(&weights)), Direction::LhsLeRhs);
    let standard = (cov - &id).amax() == 0.0;
    Ok(if standard {
        report
    } else {
        report.with_preconditions(false).with_note("base covariance is not the identity; informational")
    })
}

/// min(t,1−t)·|b−a|^p / 4^{p+1}, valid when min(t,1−t) ≥ 2exp(−(b−a)²/32).
pub fn wasserstein_lower_two_point(a: f64, b: f64, sigma: f64, t: f64, p: f64) -> Result<Estimate> {
    if !(sigma > 0.0 && sigma <= 1.0) || !(0.0..=1.0).contains(&t) || !(p >= 1.0) {
        return Err(Error::DomainError(format!("invalid parameters sigma={sigma}, t={t}, p={p}")));
    }
    let lhs = t.min(1.0 - t);
    let rhs = 2.0 * (-(b - a) * (b - a) / 32.0).exp();
    if lhs < rhs {
        return Err(Error::TailAssumptionViolated { lhs, rhs });
    }
    Ok(Estimate::exact(lhs * (b - a).abs().powf(p) / 4f64.powf(p + 1.0)))
}

/// δ ≥ (n/2)Δ(I(μ|γ)/n) and δ ≥ (c/n)W₂⁴(μ,γ), both under E|x|² ≤ n.
pub fn check_bgrs_bounds(f: &Functionals, w2: Estimate, c: f64) -> Result<(BoundReport, BoundReport)> {
    let n = f.dim as f64;
    let pre = f.second_moment.trace() <= n + PSD_TOL;
    let i = f.fisher_info_gauss;
    let rhs = est(0.5 * n * delta_fn(i.value / n)?, 0.5 * delta_prime(i.value / n).abs() * i.abs_error, f);
    let mut fisher = BoundReport::new("dimensional_fisher", f.deficit, rhs, Direction::LhsGeRhs).with_preconditions(pre);
    let w4 = w2.value.powi(4);
    let rhs = Estimate::new(c / n * w4, c / n * 4.0 * w2.value.powi(3) * w2.abs_error, w2.method, w2.n);
    let mut was = BoundReport::new("dimensional_wasserstein", f.deficit, rhs, Direction::LhsGeRhs)
        .with_preconditions(pre)
        .with_note(format!("constant c = {c} is a configurable choice; no value is fixed by theory"));
    if !pre {
        let note = format!("E|x|² = {:.6} > n; informational", f.second_moment.trace());
        fisher = fisher.with_note(note.clone());
        was = was.with_note(note);
    }
    Ok((fisher, was))
}

/// W₂(μ, γ) by exact matching of `count` draws from each.
pub fn w2_to_standard(mix: &GaussianMixture, count: usize, seed: u64) -> Result<Estimate> {
    let a = EmpiricalMeasure::sample(mix, count, seed, 0)?;
    let g = EmpiricalMeasure::standard_gaussian(mix.dim(), count, seed, 0)?;
    let w = wp_exact(&a, &g, 2.0)?;
    // Spread of the plug-in estimator across independent draws is O(1/√count).
    let abs_error = (mix.second_moment().trace() + mix.dim() as f64).sqrt() / (count as f64).sqrt();
    Ok(Estimate::new(w, abs_error, Method::MonteCarlo, count))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SuiteOptions {
    pub bgrs_c: f64,
    pub w2_samples: usize,
    pub scaling_probes: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { bgrs_c: DEFAULT_BGRS_C, w2_samples: 1024, scaling_probes: 16 }
    }
}

/// Every single-measure report for μ.
pub fn run_suite(mix: &GaussianMixture, budget: &Budget, opts: &SuiteOptions) -> Result<Vec<BoundReport>> {
    let f = Functionals::compute(mix, budget)?;
    let mut out = vec![check_lsi(&f), check_dimensional_lsi(&f)];
    let logdet = check_logdet_bound(&f)?;
    out.push(logdet.report);
    out.push(logdet.amgm);
    let (eig3, eig2) = check_eigen_deficit_bounds(&f)?;
    out.push(eig3);
    out.push(eig2);
    let (cov, hs) = check_cov_bound(&f);
    out.push(cov);
    out.push(hs);
    out.push(check_cramer_rao(&f));
    let scaling = optimal_scaling(mix, &f, budget, opts.scaling_probes)?;
    let mut report = scaling.report;
    if !scaling.pushforward_consistent || scaling.probe_min_increase < -1e-12 {
        report.holds = false;
        report = report.with_note("pushforward or minimality probe disagrees");
    }
    out.push(report);
    let w2 = w2_to_standard(mix, opts.w2_samples, budget.seed)?;
    let (bf, bw) = check_bgrs_bounds(&f, w2, opts.bgrs_c)?;
    out.push(bf);
    out.push(bw);
    out.push(integration_by_parts_from(&f));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::MethodChoice;
    use approx::assert_abs_diff_eq;

    fn closed(var: f64) -> Functionals {
        Functionals::compute(&GaussianMixture::gaussian_1d(0.0, var).unwrap(), &Budget::default()).unwrap()
    }

    fn quad() -> Budget {
        Budget::default().with_method(MethodChoice::Quadrature)
    }

    fn bimodal() -> GaussianMixture {
        GaussianMixture::mixture_1d(&[(0.5, -1.0, 0.5), (0.5, 1.0, 0.5)]).unwrap()
    }

    #[test]
    fn delta_values() {
        assert_eq!(delta_fn(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(delta_fn(1.0).unwrap(), 1.0 - 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(delta_fn(1.0).unwrap(), 0.306_853, epsilon = 1e-6);
        assert_abs_diff_eq!(delta_fn(-0.5).unwrap(), 0.193_147, epsilon = 1e-6);
        assert!(delta_fn(-1.0).is_err());
        // Series branch agrees with the direct formula at the switch point.
        let t = 0.999e-4;
        assert!((delta_fn(t).unwrap() - (t - t.ln_1p())).abs() < 1e-15);
    }

    #[test]
    fn lsi_examples() {
        let r = check_lsi(&closed(1.0));
        assert_eq!((r.lhs.value, r.rhs.value), (0.0, 0.0));
        let r = check_lsi(&closed(0.5));
        assert_abs_diff_eq!(r.slack, 0.153_426, epsilon = 1e-6);
        let f = Functionals::compute(&GaussianMixture::gaussian_1d(3.0, 1.0).unwrap(), &quad()).unwrap();
        let r = check_dimensional_lsi(&f);
        assert!(r.slack.abs() <= 1e-8 && r.holds, "{r:?}");
    }

    #[test]
    fn logdet_examples() {
        for s in [0.3, 1.0, 2.5] {
            let r = check_logdet_bound(&closed(s)).unwrap();
            assert_abs_diff_eq!(r.report.lhs.value, -0.5 * s.ln(), epsilon = 1e-12);
            assert_abs_diff_eq!(r.report.slack, 0.0, epsilon = 1e-12);
        }
        let f = Functionals::compute(&bimodal(), &quad()).unwrap();
        let r = check_logdet_bound(&f).unwrap();
        assert!(r.report.holds && r.report.slack > 0.0);
        assert!(r.amgm.holds);
        assert!(r.report.slack <= check_dimensional_lsi(&f).slack + 1e-12);
    }

    #[test]
    fn eigen_examples() {
        let (e3, e2) = check_eigen_deficit_bounds(&closed(0.5)).unwrap();
        assert_abs_diff_eq!(e3.rhs.value, 0.153_426, epsilon = 1e-6);
        assert_abs_diff_eq!(e3.slack, 0.0, epsilon = 1e-12);
        assert!(e2.preconditions_met && e2.holds);
        let (e3, e2) = check_eigen_deficit_bounds(&closed(2.0)).unwrap();
        assert!(!e2.preconditions_met);
        assert_abs_diff_eq!(e3.rhs.value, 0.096_574, epsilon = 1e-6);
        assert_abs_diff_eq!(e3.slack, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cov_examples() {
        let (c, hs) = check_cov_bound(&closed(0.5));
        assert_abs_diff_eq!(c.rhs.value, 0.153_426, epsilon = 1e-6);
        assert!(c.slack.abs() <= 1e-7);
        assert!(hs.preconditions_met && hs.holds);
        let (c, hs) = check_cov_bound(&closed(2.0));
        assert_eq!(c.rhs.value, 0.0);
        assert_abs_diff_eq!(c.lhs.value, 0.096_574, epsilon = 1e-6);
        assert!(!hs.preconditions_met);
    }

    #[test]
    fn cramer_rao_examples() {
        assert_abs_diff_eq!(check_cramer_rao(&closed(0.7)).lhs.value, 0.0, epsilon = 1e-12);
        let f = Functionals::compute(&bimodal(), &quad()).unwrap();
        let r = check_cramer_rao(&f);
        assert!(r.lhs.value > 0.0 && r.holds);
    }

    #[test]
    fn scaling_examples() {
        let b = Budget::default();
        let g = GaussianMixture::standard(2);
        let s = optimal_scaling(&g, &Functionals::compute(&g, &b).unwrap(), &b, 8).unwrap();
        assert!((s.sigma.clone() - DMatrix::identity(2, 2)).amax() < 1e-12);
        let m = GaussianMixture::gaussian_1d(0.0, 0.25).unwrap();
        let s = optimal_scaling(&m, &Functionals::compute(&m, &b).unwrap(), &b, 8).unwrap();
        assert_abs_diff_eq!(s.sigma[(0, 0)], 2.0, epsilon = 1e-12);
        assert!(s.pushforward_consistent && s.report.slack.abs() < 1e-12);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 4.0]));
        let m = GaussianMixture::gaussian(DVector::zeros(2), cov).unwrap();
        let s = optimal_scaling(&m, &Functionals::compute(&m, &b).unwrap(), &b, 8).unwrap();
        assert!((s.sigma - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]))).amax() < 1e-12);
        assert!(s.probe_min_increase >= 0.0);
        let m = bimodal();
        let s = optimal_scaling(&m, &Functionals::compute(&m, &quad()).unwrap(), &quad(), 8).unwrap();
        assert!(s.pushforward_consistent, "{s:?}");
        assert!(s.probe_min_increase >= 0.0);
    }

    #[test]
    fn mixture_upper_examples() {
        assert_abs_diff_eq!(mixture_deficit_upper(0.0, 0.0, 1.0, 0.5).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(mixture_deficit_upper(0.0, 16.0, 1.0, 0.25).unwrap(), 0.562_335, epsilon = 1e-6);
        assert_abs_diff_eq!(mixture_deficit_upper(0.0, 0.0, 0.5, 0.0).unwrap(), 0.25, epsilon = 1e-15);
        assert!(mixture_deficit_upper(0.0, 0.0, 1.5, 0.5).is_err());
    }

    #[test]
    fn convexity_examples() {
        let g = GaussianMixture::standard(1);
        let r = convexity_deficit_bound(&g, &g, 0.5, &quad()).unwrap();
        assert!(r.lhs.value.abs() < 1e-8 && r.holds);
        assert_abs_diff_eq!(r.rhs.value, 2f64.ln(), epsilon = 1e-8);
        let nu = GaussianMixture::gaussian_1d(5.0, 1.0).unwrap();
        assert!(convexity_deficit_bound(&g, &nu, 0.5, &quad()).unwrap().holds);
        assert!(convexity_deficit_bound(&g, &nu, 1e-6, &quad()).unwrap().holds);
    }

    #[test]
    fn shannon_examples() {
        let at = |x: f64| DVector::from_element(1, x);
        let r = shannon_bound(&[(1.0, at(2.0))], None, &quad()).unwrap();
        assert!(r.lhs.value.abs() < 1e-8 && r.rhs.value == 0.0 && r.holds);
        let r = shannon_bound(&[(0.5, at(0.0)), (0.5, at(16.0))], None, &quad()).unwrap();
        assert!(r.holds);
        assert_abs_diff_eq!(r.rhs.value, 2f64.ln(), epsilon = 1e-15);
        let r = shannon_bound(&[(0.75, at(0.0)), (0.25, at(16.0))], None, &quad()).unwrap();
        assert!(r.holds);
        let r = shannon_bound(&[(0.25, at(0.0)), (0.5, at(0.0)), (0.25, at(16.0))], None, &quad()).unwrap();
        assert_abs_diff_eq!(r.rhs.value, 0.562_335, epsilon = 1e-6);
    }

    #[test]
    fn two_point_lower_bound() {
        assert_abs_diff_eq!(wasserstein_lower_two_point(0.0, 8.0, 1.0, 0.5, 1.0).unwrap().value, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(wasserstein_lower_two_point(0.0, 8.0, 1.0, 0.5, 2.0).unwrap().value, 0.5, epsilon = 1e-15);
        match wasserstein_lower_two_point(0.0, 4.0, 1.0, 0.1, 1.0) {
            Err(Error::TailAssumptionViolated { lhs, rhs }) => {
                assert_eq!(lhs, 0.1);
                assert_abs_diff_eq!(rhs, 2.0 * (-0.5f64).exp(), epsilon = 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bgrs_examples() {
        let (a, b) = check_bgrs_bounds(&closed(1.0), Estimate::exact(0.0), DEFAULT_BGRS_C).unwrap();
        assert_eq!((a.lhs.value, a.rhs.value, b.rhs.value), (0.0, 0.0, 0.0));
        let f = closed(0.5);
        let (a, _) = check_bgrs_bounds(&f, Estimate::exact(1.0 - 0.5f64.sqrt()), DEFAULT_BGRS_C).unwrap();
        assert_abs_diff_eq!(a.rhs.value, 0.5 * (0.5 - 1.5f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(a.rhs.value, 0.047_267, epsilon = 1e-6);
        assert!(a.holds && a.preconditions_met);
        let (a, b) = check_bgrs_bounds(&closed(2.0), Estimate::exact(0.5), DEFAULT_BGRS_C).unwrap();
        assert!(!a.preconditions_met && !b.preconditions_met);
    }

    #[test]
    fn suite_on_bimodal_holds() {
        let opts = SuiteOptions { w2_samples: 256, ..Default::default() };
        let reports = run_suite(&bimodal(), &quad(), &opts).unwrap();
        for r in &reports {
            assert!(!r.violated(), "{r:?}");
        }
        assert_eq!(reports.len(), 13);
    }
}
