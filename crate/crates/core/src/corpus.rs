//! Seeded random test corpus of Gaussian mixtures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::Result;
use crate::gaussmix::GaussianMixture;
use crate::rng::{self, Purpose};
use crate::spectral::largest_eigenvalue;

pub const CORPUS_SIZE: usize = 200;

#[derive(Debug, Clone, Copy)]
pub struct CorpusOptions {
    pub max_dim: usize,
    pub max_components: usize,
    pub eigen_range: (f64, f64),
    pub mean_box: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self { max_dim: 3, max_components: 4, eigen_range: (0.1, 10.0), mean_box: 5.0 }
    }
}

/// Haar-distributed rotation from the QR factorization of a Gaussian matrix.
fn random_rotation<R: Rng>(n: usize, r: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, rr) = (qr.q(), qr.r());
    let signs = DVector::from_fn(n, |i, _| if rr[(i, i)] < 0.0 { -1.0 } else { 1.0 });
    q * DMatrix::from_diagonal(&signs)
}

/// Member `index` of the corpus; each member has its own stream, so members are independent of the corpus size.
pub fn corpus_member(seed: u64, index: usize, opts: &CorpusOptions) -> Result<GaussianMixture> {
    let mut r = rng::stream(seed, Purpose::Corpus, index as u64);
    let n = r.random_range(1..=opts.max_dim);
    let k = r.random_range(1..=opts.max_components);
    let raw: Vec<f64> = (0..k).map(|_| r.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    let (lo, hi) = (opts.eigen_range.0.ln(), opts.eigen_range.1.ln());
    let mut parts = Vec::with_capacity(k);
    for w in raw {
        let mean = DVector::from_fn(n, |_, _| r.random_range(-opts.mean_box..=opts.mean_box));
        let eig = DVector::from_fn(n, |_, _| r.random_range(lo..=hi).exp());
        let q = random_rotation(n, &mut r);
        let cov = &q * DMatrix::from_diagonal(&eig) * q.transpose();
        parts.push((w / total, mean, (&cov + cov.transpose()) * 0.5));
    }
    GaussianMixture::new(n, parts)
}

pub fn random_corpus(seed: u64, count: usize, opts: &CorpusOptions) -> Result<Vec<GaussianMixture>> {
    (0..count).map(|i| corpus_member(seed, i, opts)).collect()
}

/// μ translated to mean 0 and, if needed, scaled so that cov ⪯ 0.9·Id.
pub fn centred_contraction(mix: &GaussianMixture) -> Result<GaussianMixture> {
    let (m, c) = mix.moments();
    let centred = mix.translate(&-m)?;
    let top = largest_eigenvalue(&c);
    let scale = if top > 0.9 { (0.9 / top).sqrt() } else { 1.0 };
    let n = mix.dim();
    centred.pushforward(&(DMatrix::identity(n, n) * scale))
}
