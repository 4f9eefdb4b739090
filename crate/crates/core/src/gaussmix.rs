//! Finite Gaussian mixtures with closed-form density calculus.
//!
//! Densities are evaluated in log space through log-sum-exp, so components
//! placed thousands of standard deviations apart never underflow. Each
//! component caches the eigendecomposition of its covariance; solves,
//! determinants and sampling all go through it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::spectral::{SpectralData, SpectralSource};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Largest component count `product_measure` will materialize.
pub const MAX_PRODUCT_COMPONENTS: usize = 4096;

const WEIGHT_SUM_TOL: f64 = 1e-9;
const SYMMETRY_TOL: f64 = 1e-12;

/// One weighted Gaussian component with its cached factorization.
#[derive(Debug, Clone)]
pub struct Component {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub(crate) log_weight: f64,
    /// Eigenvalues of the covariance (descending).
    pub(crate) eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub(crate) basis: DMatrix<f64>,
    pub(crate) precision: DMatrix<f64>,
    pub(crate) log_det: f64,
    /// U diag(sqrt(c)), used for sampling.
    pub(crate) sqrt_factor: DMatrix<f64>,
}

impl Component {
    fn build(index: usize, weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        let scale = cov.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NonPositiveDefiniteCovariance {
                        component: index,
                        min_eigenvalue: f64::NAN,
                    });
                }
            }
        }
        if cov.iter().any(|v| !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainError(format!("component {index} has non-finite entries")));
        }
        let spec = SpectralData::of(&cov, SpectralSource::Cov);
        if !(spec.min() > 0.0) {
            return Err(Error::NonPositiveDefiniteCovariance { component: index, min_eigenvalue: spec.min() });
        }
        let precision = spec.map(|l| 1.0 / l);
        let log_det = spec.eigenvalues.iter().map(|l| l.ln()).sum();
        let mut sqrt_factor = spec.eigenvectors.clone();
        for (k, l) in spec.eigenvalues.iter().enumerate() {
            sqrt_factor.column_mut(k).scale_mut(l.sqrt());
        }
        Ok(Self {
            weight,
            log_weight: weight.ln(),
            mean,
            cov: crate::spectral::symmetrize(&cov),
            eigenvalues: spec.eigenvalues,
            basis: spec.eigenvectors,
            precision,
            log_det,
            sqrt_factor,
        })
    }

    /// log N(x; mean, cov).
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let y = self.basis.tr_mul(&d);
        let quad: f64 = y.iter().zip(&self.eigenvalues).map(|(yi, c)| yi * yi / c).sum();
        -0.5 * (quad + self.log_det + self.mean.len() as f64 * LN_2PI)
    }
}

/// Pointwise density data of a mixture.
#[derive(Debug, Clone)]
pub struct LocalDensityData {
    pub point: DVector<f64>,
    /// log dμ/dx
    pub log_density: f64,
    /// ∇ log dμ/dx
    pub score: DVector<f64>,
    /// ∇² log dμ/dx
    pub hessian: DMatrix<f64>,
    /// log dμ/dγ
    pub log_ratio: f64,
}

/// Finite mixture of Gaussians; immutable after construction.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<Component>,
}

impl GaussianMixture {
    /// Validate and build a mixture from `(weight, mean, cov)` triples.
    pub fn new(dim: usize, components: Vec<(f64, DVector<f64>, DMatrix<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DomainError("dimension must be positive".into()));
        }
        if components.is_empty() {
            return Err(Error::BadWeights("no components".into()));
        }
        let mut sum = 0.0;
        for (i, (w, m, c)) in components.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::BadWeights(format!("weight {i} is {w}")));
            }
            if m.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: m.len() });
            }
            if c.nrows() != dim || c.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.nrows().max(c.ncols()) });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::BadWeights(format!("weights sum to {sum}")));
        }
        let components = components
            .into_iter()
            .enumerate()
            .map(|(i, (w, m, c))| Component::build(i, w / sum, m, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, components })
    }

    /// γ_{m, C}.
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(mean.len(), vec![(1.0, mean, cov)])
    }

    /// Standard Gaussian in dimension `dim`.
    pub fn standard(dim: usize) -> Self {
        Self::gaussian(DVector::zeros(dim), DMatrix::identity(dim, dim)).expect("identity is valid")
    }

    /// One-dimensional γ_{a,s} (mean a, variance s).
    pub fn gaussian_1d(mean: f64, var: f64) -> Result<Self> {
        Self::gaussian(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    /// One-dimensional mixture from `(weight, mean, variance)` triples.
    pub fn mixture_1d(parts: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(
            1,
            parts
                .iter()
                .map(|&(w, m, s)| (w, DVector::from_element(1, m), DMatrix::from_element(1, 1, s)))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_single_gaussian(&self) -> bool {
        self.components.len() == 1
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        Ok(())
    }

    /// log dμ/dx at `x`.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_point(x)?;
        let lw: Vec<f64> = self.components.iter().map(|c| c.log_weight + c.log_pdf(x)).collect();
        Ok(log_sum_exp(&lw))
    }

    /// log dμ/dx and its gradient.
    pub fn log_density_and_score(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check_point(x)?;
        let (lse, resp, grads) = self.responsibilities(x);
        let mut score = DVector::zeros(self.dim);
        for (r, g) in resp.iter().zip(&grads) {
            score.axpy(*r, g, 1.0);
        }
        Ok((lse, score))
    }

    fn responsibilities(&self, x: &DVector<f64>) -> (f64, Vec<f64>, Vec<DVector<f64>>) {
        let mut lw = Vec::with_capacity(self.components.len());
        let mut grads = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let d = x - &c.mean;
            let y = c.basis.tr_mul(&d);
            let mut quad = 0.0;
            let mut z = DVector::zeros(self.dim);
            for i in 0..self.dim {
                quad += y[i] * y[i] / c.eigenvalues[i];
                z[i] = y[i] / c.eigenvalues[i];
            }
            lw.push(c.log_weight - 0.5 * (quad + c.log_det + self.dim as f64 * LN_2PI));
            grads.push(-(&c.basis * z));
        }
        let lse = log_sum_exp(&lw);
        let resp = lw.iter().map(|l| (l - lse).exp()).collect();
        (lse, resp, grads)
    }

    /// Log density, score, Hessian and log dμ/dγ at `x`.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<LocalDensityData> {
        self.check_point(x)?;
        let (lse, resp, grads) = self.responsibilities(x);
        let mut score = DVector::zeros(self.dim);
        for (r, g) in resp.iter().zip(&grads) {
            score.axpy(*r, g, 1.0);
        }
        // ∇² log p = Σ r_j (g_j − s)(g_j − s)ᵀ − Σ r_j C_j⁻¹
        let mut hessian = DMatrix::zeros(self.dim, self.dim);
        for ((r, g), c) in resp.iter().zip(&grads).zip(&self.components) {
            if *r == 0.0 {
                continue;
            }
            let d = g - &score;
            hessian.ger(*r, &d, &d, 1.0);
            hessian -= &c.precision * *r;
        }
        let log_ratio = lse + 0.5 * x.norm_squared() + 0.5 * self.dim as f64 * LN_2PI;
        Ok(LocalDensityData { point: x.clone(), log_density: lse, score, hessian, log_ratio })
    }

    /// Draw one point.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let c = self.pick_component(rng);
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        &c.mean + &c.sqrt_factor * z
    }

    fn pick_component<R: Rng + ?Sized>(&self, rng: &mut R) -> &Component {
        if self.components.len() == 1 {
            return &self.components[0];
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                return c;
            }
        }
        self.components.last().unwrap()
    }

    /// `count` i.i.d. draws as rows of a `count × dim` matrix.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(count, self.dim);
        for i in 0..count {
            let x = self.draw(rng);
            out.row_mut(i).copy_from(&x.transpose());
        }
        out
    }

    /// `count` draws from stream `(seed, stream)`.
    pub fn sample_stream(&self, count: usize, seed: u64, stream: u64) -> DMatrix<f64> {
        let mut r = rng::stream(seed, Purpose::Sample, stream);
        self.sample(count, &mut r)
    }

    /// Exact mean and covariance (law of total covariance).
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mut mean = DVector::zeros(self.dim);
        for c in &self.components {
            mean.axpy(c.weight, &c.mean, 1.0);
        }
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for c in &self.components {
            let d = &c.mean - &mean;
            cov += &c.cov * c.weight;
            cov.ger(c.weight, &d, &d, 1.0);
        }
        (mean, cov)
    }

    /// E[x ⊗ x].
    pub fn second_moment(&self) -> DMatrix<f64> {
        let (m, c) = self.moments();
        c + &m * m.transpose()
    }

    /// Tensor product; components are the Cartesian product.
    pub fn product_measure(&self, other: &GaussianMixture) -> Result<GaussianMixture> {
        let count = self.len() * other.len();
        if count > MAX_PRODUCT_COMPONENTS {
            return Err(Error::ComponentBudgetExceeded { count, limit: MAX_PRODUCT_COMPONENTS });
        }
        let n = self.dim + other.dim;
        let mut parts = Vec::with_capacity(count);
        for a in &self.components {
            for b in &other.components {
                let mut mean = DVector::zeros(n);
                mean.rows_mut(0, self.dim).copy_from(&a.mean);
                mean.rows_mut(self.dim, other.dim).copy_from(&b.mean);
                let mut cov = DMatrix::zeros(n, n);
                cov.view_mut((0, 0), (self.dim, self.dim)).copy_from(&a.cov);
                cov.view_mut((self.dim, self.dim), (other.dim, other.dim)).copy_from(&b.cov);
                parts.push((a.weight * b.weight, mean, cov));
            }
        }
        renormalized(n, parts)
    }

    /// Law of `S X` for `X ~ μ` and invertible `S`: means S m_j, covariances S C_j Sᵀ.
    pub fn pushforward(&self, s: &DMatrix<f64>) -> Result<GaussianMixture> {
        if s.nrows() != self.dim || s.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: s.nrows() });
        }
        let parts = self
            .components
            .iter()
            .map(|c| {
                let cov = crate::spectral::symmetrize(&(s * &c.cov * s.transpose()));
                (c.weight, s * &c.mean, cov)
            })
            .collect();
        renormalized(self.dim, parts)
    }

    /// Law of `X + shift`.
    pub fn translate(&self, shift: &DVector<f64>) -> Result<GaussianMixture> {
        self.check_point(shift)?;
        let parts = self.components.iter().map(|c| (c.weight, &c.mean + shift, c.cov.clone())).collect();
        renormalized(self.dim, parts)
    }

    /// (1 − t) self + t other.
    pub fn convex_combination(&self, other: &GaussianMixture, t: f64) -> Result<GaussianMixture> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::DomainError(format!("mixing parameter {t} not in (0,1)")));
        }
        let mut parts = Vec::with_capacity(self.len() + other.len());
        for c in &self.components {
            parts.push(((1.0 - t) * c.weight, c.mean.clone(), c.cov.clone()));
        }
        for c in &other.components {
            parts.push((t * c.weight, c.mean.clone(), c.cov.clone()));
        }
        renormalized(self.dim, parts)
    }

    /// Smallest / largest covariance eigenvalue over all components.
    pub fn eigenvalue_range(&self) -> (f64, f64) {
        self.components.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), c| {
            (lo.min(*c.eigenvalues.last().unwrap()), hi.max(c.eigenvalues[0]))
        })
    }

    pub fn to_spec(&self) -> MixtureSpec {
        MixtureSpec {
            dim: self.dim,
            components: self
                .components
                .iter()
                .map(|c| ComponentSpec {
                    w: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    cov: (0..self.dim).map(|i| c.cov.row(i).iter().copied().collect()).collect(),
                })
                .collect(),
        }
    }
}

/// Weights that come from products or sums of valid weights can drift by an ulp; rescale them.
fn renormalized(dim: usize, mut parts: Vec<(f64, DVector<f64>, DMatrix<f64>)>) -> Result<GaussianMixture> {
    let sum: f64 = parts.iter().map(|p| p.0).sum();
    for p in &mut parts {
        p.0 /= sum;
    }
    GaussianMixture::new(dim, parts)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// JSON form `{"dim": n, "components": [{"w":…, "mean":[…], "cov":[[…]]}]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub dim: usize,
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub w: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl MixtureSpec {
    pub fn build(&self) -> Result<GaussianMixture> {
        let n = self.dim;
        let parts = self
            .components
            .iter()
            .map(|c| {
                if c.mean.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: c.mean.len() });
                }
                if c.cov.len() != n || c.cov.iter().any(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch { expected: n, found: c.cov.len() });
                }
                let cov = DMatrix::from_fn(n, n, |i, j| c.cov[i][j]);
                Ok((c.w, DVector::from_vec(c.mean.clone()), cov))
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(n, parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn bimodal() -> GaussianMixture {
        GaussianMixture::mixture_1d(&[(0.5, -1.0, 1.0), (0.5, 1.0, 1.0)]).unwrap()
    }

    #[test]
    fn standard_gaussian_at_origin() {
        let g = GaussianMixture::standard(1);
        let d = g.evaluate(&DVector::from_element(1, 0.0)).unwrap();
        assert!((d.log_density + 0.5 * LN_2PI).abs() < 1e-15);
        assert_eq!(d.score[0], 0.0);
        assert!((d.hessian[(0, 0)] + 1.0).abs() < 1e-15);
        assert!(d.log_ratio.abs() < 1e-15);
    }

    #[test]
    fn scaled_gaussian_score_and_hessian() {
        let s = 0.37;
        let g = GaussianMixture::gaussian_1d(0.0, s).unwrap();
        let d = g.evaluate(&DVector::from_element(1, 1.0)).unwrap();
        assert!((d.score[0] + 1.0 / s).abs() < 1e-13);
        assert!((d.hessian[(0, 0)] + 1.0 / s).abs() < 1e-13);
    }

    #[test]
    fn symmetric_bimodal_at_origin() {
        let mu = bimodal();
        let d = mu.evaluate(&DVector::from_element(1, 0.0)).unwrap();
        let direct = (0.5 * (phi(-1.0) + phi(1.0))).ln();
        assert!((d.log_density - direct).abs() < 1e-14);
        assert!(d.score[0].abs() < 1e-15);
        let h = 1e-5;
        let f = |x: f64| mu.log_density(&DVector::from_element(1, x)).unwrap();
        let fd = (f(h) - f(-h)) / (2.0 * h);
        assert!(fd.abs() < 1e-9);
    }

    #[test]
    fn construction_examples() {
        let mu4 = GaussianMixture::mixture_1d(&[(0.75, 0.0, 1.0), (0.25, 16.0, 1.0)]).unwrap();
        assert_eq!(mu4.len(), 2);
        let err = GaussianMixture::mixture_1d(&[(0.5, 0.0, 0.0)]).unwrap_err();
        // weights are checked first; a valid weight with zero covariance must report the covariance
        assert!(matches!(err, Error::BadWeights(_)));
        let err = GaussianMixture::mixture_1d(&[(1.0, 0.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveDefiniteCovariance { .. }));
    }

    #[test]
    fn weight_validation() {
        let ok = GaussianMixture::mixture_1d(&[(0.3, 0.0, 1.0), (0.7 + 5e-10, 1.0, 1.0)]).unwrap();
        let total: f64 = ok.components().iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(matches!(
            GaussianMixture::mixture_1d(&[(0.3, 0.0, 1.0), (0.6, 1.0, 1.0)]),
            Err(Error::BadWeights(_))
        ));
        assert!(matches!(
            GaussianMixture::mixture_1d(&[(1.5, 0.0, 1.0), (-0.5, 1.0, 1.0)]),
            Err(Error::BadWeights(_))
        ));
        let bad_dim = GaussianMixture::new(2, vec![(1.0, DVector::zeros(1), DMatrix::identity(2, 2))]);
        assert!(matches!(bad_dim, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            GaussianMixture::gaussian(DVector::zeros(2), cov),
            Err(Error::NonPositiveDefiniteCovariance { .. })
        ));
    }

    #[test]
    fn far_points_stay_finite() {
        let mu = GaussianMixture::mixture_1d(&[(0.75, 0.0, 1.0), (0.25, 16.0, 1.0)]).unwrap();
        for x in [-100.0, 100.0, 116.0, -1e3] {
            let d = mu.evaluate(&DVector::from_element(1, x)).unwrap();
            assert!(d.log_density.is_finite());
            assert!(d.score[0].is_finite());
        }
    }

    #[test]
    fn moments_closed_forms() {
        let mu = GaussianMixture::mixture_1d(&[(0.75, 0.0, 1.0), (0.25, 16.0, 1.0)]).unwrap();
        let (m, c) = mu.moments();
        assert!((m[0] - 4.0).abs() < 1e-13);
        assert!((c[(0, 0)] - 49.0).abs() < 1e-12);
        let g = GaussianMixture::standard(3);
        let (m, c) = g.moments();
        assert_eq!(m, DVector::zeros(3));
        assert_eq!(c, DMatrix::identity(3, 3));
    }

    #[test]
    fn product_structure() {
        let g = GaussianMixture::standard(1);
        let gg = g.product_measure(&g).unwrap();
        assert_eq!(gg.dim(), 2);
        assert_eq!(gg.len(), 1);
        assert_eq!(gg.components()[0].cov, DMatrix::identity(2, 2));

        let a = GaussianMixture::mixture_1d(&[(0.4, 0.0, 1.0), (0.6, 2.0, 0.5)]).unwrap();
        let b = GaussianMixture::mixture_1d(&[(0.2, -1.0, 1.0), (0.3, 0.0, 2.0), (0.5, 1.0, 1.0)]).unwrap();
        let ab = a.product_measure(&b).unwrap();
        assert_eq!(ab.len(), 6);
        let expected = [0.08, 0.12, 0.2, 0.12, 0.18, 0.3];
        for (c, e) in ab.components().iter().zip(expected) {
            assert!((c.weight - e).abs() < 1e-15);
        }
        let (m, c) = ab.moments();
        let (ma, ca) = a.moments();
        let (mb, cb) = b.moments();
        assert!((m[0] - ma[0]).abs() < 1e-14 && (m[1] - mb[0]).abs() < 1e-14);
        assert!((c[(0, 0)] - ca[(0, 0)]).abs() < 1e-13 && (c[(1, 1)] - cb[(0, 0)]).abs() < 1e-13);
        assert!(c[(0, 1)].abs() < 1e-13);
    }

    #[test]
    fn product_budget() {
        let two = GaussianMixture::mixture_1d(&[(0.5, -1.0, 1.0), (0.5, 1.0, 1.0)]).unwrap();
        let mut acc = two.clone();
        let mut result = Ok(());
        for _ in 0..12 {
            match acc.product_measure(&two) {
                Ok(next) => acc = next,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        assert_eq!(acc.len(), 4096);
        assert!(matches!(result, Err(Error::ComponentBudgetExceeded { count: 8192, .. })));
    }

    #[test]
    fn spec_round_trip_and_shapes() {
        let json = r#"{"dim":1,"components":[{"w":0.75,"mean":[0],"cov":[[1]]},{"w":0.25,"mean":[16],"cov":[[1]]}]}"#;
        let spec: MixtureSpec = serde_json::from_str(json).unwrap();
        let mu = spec.build().unwrap();
        assert_eq!(mu.to_spec(), spec);
        let bad = r#"{"dim":2,"components":[{"w":1.0,"mean":[0],"cov":[[1]]}]}"#;
        let spec: MixtureSpec = serde_json::from_str(bad).unwrap();
        assert!(matches!(spec.build(), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sampling_shapes() {
        let g = GaussianMixture::standard(3);
        let s = g.sample_stream(1, 1, 0);
        assert_eq!(s.shape(), (1, 3));
    }
}
