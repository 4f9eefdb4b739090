//! Wasserstein distances between equal-size empirical measures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{Estimate, Method};
use crate::gaussmix::GaussianMixture;
use crate::rng::{self, Purpose};
use crate::spectral::{smallest_eigenvalue, sym_sqrt};

/// Largest sample count accepted by the assignment solver.
pub const MAX_ASSIGNMENT: usize = 4096;

/// Equal-weight point cloud, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: DMatrix<f64>,
}

impl EmpiricalMeasure {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::DomainError("empirical measure needs at least one point".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainError("empirical measure has non-finite entries".into()));
        }
        Ok(Self { points })
    }

    pub fn from_1d(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn from_rows(rows: &[DVector<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut m = DMatrix::zeros(rows.len(), dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
            }
            m.row_mut(i).copy_from(&r.transpose());
        }
        Self::new(m)
    }

    /// `count` exact draws from μ on stream `(seed, Sample, stream)`.
    pub fn sample(mix: &GaussianMixture, count: usize, seed: u64, stream: u64) -> Result<Self> {
        Self::new(mix.sample_stream(count, seed, stream))
    }

    /// `count` standard Gaussian draws in dimension `dim` on stream `(seed, Reference, stream)`.
    pub fn standard_gaussian(dim: usize, count: usize, seed: u64, stream: u64) -> Result<Self> {
        let mut r = rng::stream(seed, Purpose::Reference, stream);
        Self::new(DMatrix::from_fn(count, dim, |_, _| r.sample(StandardNormal)))
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn count(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.points.row_mean().transpose()
    }

    pub fn translated(&self, shift: &DVector<f64>) -> Self {
        let mut points = self.points.clone();
        for mut row in points.row_iter_mut() {
            row += shift.transpose();
        }
        Self { points }
    }

    /// Sum of two clouds point by point (the law of X + Y under the index coupling).
    pub fn pointwise_sum(&self, other: &EmpiricalMeasure) -> Result<Self> {
        check_pair(self, other)?;
        Ok(Self { points: &self.points + &other.points })
    }

    fn column(&self, axis: usize) -> Vec<f64> {
        self.points.column(axis).iter().copied().collect()
    }
}

fn check_pair(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<()> {
    if a.count() != b.count() {
        return Err(Error::CountMismatch(a.count(), b.count()));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::DomainError(format!("transport exponent {p} must be at least 1")));
    }
    Ok(())
}

fn pow_abs(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x.abs()
    } else if p == 2.0 {
        x * x
    } else {
        x.abs().powf(p)
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// W_p^p between sorted 1D samples of equal length.
fn sorted_cost(a: &[f64], b: &[f64], p: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| pow_abs(x - y, p)).sum::<f64>() / a.len() as f64
}

/// W_p in one dimension via the monotone coupling.
pub fn wp_1d_exact(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_pair(a, b)?;
    check_p(p)?;
    if a.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: a.dim() });
    }
    let (x, y) = (sorted(a.column(0)), sorted(b.column(0)));
    Ok(sorted_cost(&x, &y, p).powf(1.0 / p))
}

fn point_cost(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize, p: f64) -> f64 {
    let mut d2 = 0.0;
    for k in 0..a.ncols() {
        let d = a[(i, k)] - b[(j, k)];
        d2 += d * d;
    }
    if p == 2.0 {
        d2
    } else {
        d2.sqrt().powf(p)
    }
}

/// Minimum-cost perfect matching for a dense square cost matrix (row-major).
/// Shortest augmenting paths with dual potentials; returns `col_of_row`.
pub fn solve_assignment(n: usize, cost: &[f64]) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    // 1-based arrays as in the classical formulation; index 0 is the virtual source.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[row_of_col[j] - 1] = j - 1;
    }
    col_of_row
}

/// Optimal matching between two clouds and its W_p^p cost.
pub fn optimal_matching(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> Result<(Vec<usize>, f64)> {
    check_pair(a, b)?;
    check_p(p)?;
    let n = a.count();
    if n > MAX_ASSIGNMENT {
        return Err(Error::BudgetExceeded(format!("assignment on {n} points exceeds the limit {MAX_ASSIGNMENT}")));
    }
    let (pa, pb) = (&a.points, &b.points);
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = point_cost(pa, i, pb, j, p);
        }
    }
    let matching = solve_assignment(n, &cost);
    let total = matching.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64;
    Ok((matching, total))
}

/// Exact W_p between empirical measures by optimal assignment.
pub fn wp_assignment(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> Result<f64> {
    Ok(optimal_matching(a, b, p)?.1.powf(1.0 / p))
}

/// Exact W_p: sorted coupling in one dimension, assignment otherwise.
pub fn wp_exact(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> Result<f64> {
    if a.dim() == 1 {
        wp_1d_exact(a, b, p)
    } else {
        wp_assignment(a, b, p)
    }
}

/// Root-mean-square of 1D W₂ over random unit directions; a heuristic, not W₂ itself.
pub fn w2_sliced(a: &EmpiricalMeasure, b: &EmpiricalMeasure, n_projections: usize, seed: u64) -> Result<Estimate> {
    check_pair(a, b)?;
    if n_projections == 0 {
        return Err(Error::Config("sliced estimate needs at least one projection".into()));
    }
    let mut r = rng::stream(seed, Purpose::Projection, 0);
    let dim = a.dim();
    let mut squares = Vec::with_capacity(n_projections);
    for _ in 0..n_projections {
        let mut dir = DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal));
        let norm = dir.norm();
        if norm == 0.0 {
            dir[0] = 1.0;
        } else {
            dir /= norm;
        }
        let x = sorted((&a.points * &dir).iter().copied().collect());
        let y = sorted((&b.points * &dir).iter().copied().collect());
        squares.push(sorted_cost(&x, &y, 2.0));
    }
    let k = squares.len() as f64;
    let mean = squares.iter().sum::<f64>() / k;
    let value = mean.sqrt();
    let se = if squares.len() > 1 {
        let var = squares.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    let abs_error = if value > 0.0 { se / (2.0 * value) } else { se.sqrt() };
    Ok(Estimate::new(value, abs_error, Method::MonteCarlo, squares.len()))
}

/// W₂ between two Gaussians.
pub fn w2_gaussian_closed(m1: &DVector<f64>, c1: &DMatrix<f64>, m2: &DVector<f64>, c2: &DMatrix<f64>) -> Result<f64> {
    let n = m1.len();
    for m in [c1, c2] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: m.nrows() });
        }
    }
    if m2.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: m2.len() });
    }
    for (k, c) in [c1, c2].into_iter().enumerate() {
        let lo = smallest_eigenvalue(c);
        if lo < -1e-12 {
            return Err(Error::NonPositiveDefiniteCovariance { component: k, min_eigenvalue: lo });
        }
    }
    let r2 = sym_sqrt(c2);
    let cross = sym_sqrt(&(&r2 * c1 * &r2));
    let tr = (c1 + c2 - cross * 2.0).trace().max(0.0);
    Ok(((m1 - m2).norm_squared() + tr).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct TranslateInfimum {
    #[serde(serialize_with = "crate::estimate::serialize_vector")]
    pub m_star: DVector<f64>,
    pub value: f64,
    pub p: f64,
    pub evaluations: usize,
}

/// Golden-section minimization of a unimodal function on [lo, hi].
fn golden_section(mut lo: f64, mut hi: f64, tol: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// inf over m of W_p(μ̂, γ̂ + m), with γ̂ a fixed reference Gaussian sample.
///
/// p = 2 uses the exact split W₂² = W₂²(centred clouds) + |mean gap − m|². One-dimensional
/// p ≠ 2 uses golden-section search on the convex map m ↦ W_p^p; higher dimensions use
/// cyclic coordinate golden-section search. `tol` is the search tolerance on m.
pub fn infimum_over_translates(
    samples: &EmpiricalMeasure,
    reference: &EmpiricalMeasure,
    p: f64,
    tol: f64,
) -> Result<TranslateInfimum> {
    check_pair(samples, reference)?;
    check_p(p)?;
    let dim = samples.dim();
    let gap = samples.mean() - reference.mean();
    if p == 2.0 {
        let a = samples.translated(&-samples.mean());
        let b = reference.translated(&-reference.mean());
        let value = wp_exact(&a, &b, 2.0)?;
        return Ok(TranslateInfimum { m_star: gap, value, p, evaluations: 1 });
    }
    let spread = samples.points.iter().chain(reference.points.iter()).fold(0.0_f64, |a, v| a.max(v.abs()));
    let radius = 2.0 * spread + 1.0;
    let mut evaluations = 0usize;
    if dim == 1 {
        let x = sorted(samples.column(0));
        let y = sorted(reference.column(0));
        let mut f = |m: f64| {
            evaluations += 1;
            x.iter().zip(&y).map(|(a, b)| pow_abs(a - b - m, p)).sum::<f64>() / x.len() as f64
        };
        let (m, v) = golden_section(gap[0] - radius, gap[0] + radius, tol, &mut f);
        return Ok(TranslateInfimum { m_star: DVector::from_element(1, m), value: v.powf(1.0 / p), p, evaluations });
    }
    let mut m = gap;
    let mut best = f64::INFINITY;
    let mut err = None;
    for _sweep in 0..20 {
        let before = best;
        for axis in 0..dim {
            let centre = m[axis];
            let mut f = |s: f64| {
                evaluations += 1;
                let mut shift = m.clone();
                shift[axis] = s;
                match optimal_matching(samples, &reference.translated(&shift), p) {
                    Ok((_, c)) => c,
                    Err(e) => {
                        err = Some(e);
                        f64::INFINITY
                    }
                }
            };
            let (s, v) = golden_section(centre - 1.0, centre + 1.0, tol, &mut f);
            m[axis] = s;
            best = v;
        }
        if let Some(e) = err.take() {
            return Err(e);
        }
        if before - best <= tol * best.max(1e-300) {
            break;
        }
    }
    Ok(TranslateInfimum { m_star: m, value: best.powf(1.0 / p), p, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pts(rows: &[&[f64]]) -> EmpiricalMeasure {
        let v: Vec<DVector<f64>> = rows.iter().map(|r| DVector::from_row_slice(r)).collect();
        EmpiricalMeasure::from_rows(&v).unwrap()
    }

    #[test]
    fn one_dimensional_examples() {
        let a = EmpiricalMeasure::from_1d(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(wp_1d_exact(&a, &a, 2.0).unwrap(), 0.0);
        let a = EmpiricalMeasure::from_1d(&[0.0]).unwrap();
        let b = EmpiricalMeasure::from_1d(&[3.0]).unwrap();
        assert_eq!(wp_1d_exact(&a, &b, 1.0).unwrap(), 3.0);
        let c = EmpiricalMeasure::from_1d(&[0.0, 1.0]).unwrap();
        assert!(matches!(wp_1d_exact(&a, &c, 1.0), Err(Error::CountMismatch(1, 2))));
    }

    #[test]
    fn assignment_small_examples() {
        let a = pts(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let b = pts(&[&[1.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(wp_assignment(&a, &b, 2.0).unwrap(), 0.0);
        // Brute force over all permutations of 4 points.
        let a = pts(&[&[0.0, 1.0], &[2.0, -1.0], &[0.5, 0.5], &[3.0, 3.0]]);
        let b = pts(&[&[1.0, 1.0], &[-1.0, 0.0], &[2.0, 2.0], &[0.0, -2.0]]);
        let perms = permutations(4);
        let brute = perms
            .iter()
            .map(|pm| pm.iter().enumerate().map(|(i, &j)| point_cost(&a.points, i, &b.points, j, 1.5)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            / 4.0;
        let (_, got) = optimal_matching(&a, &b, 1.5).unwrap();
        assert_abs_diff_eq!(got, brute, epsilon = 1e-12);
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn assignment_matches_sorted_coupling() {
        let a = EmpiricalMeasure::sample(&GaussianMixture::standard(1), 300, 5, 0).unwrap();
        let b = EmpiricalMeasure::sample(&GaussianMixture::gaussian_1d(1.0, 2.0).unwrap(), 300, 5, 1).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let x = wp_1d_exact(&a, &b, p).unwrap();
            let y = wp_assignment(&a, &b, p).unwrap();
            assert!((x - y).abs() <= 1e-12, "p={p}: {x} vs {y}");
        }
    }

    #[test]
    fn budget_limit() {
        let a = EmpiricalMeasure::new(DMatrix::zeros(MAX_ASSIGNMENT + 1, 1)).unwrap();
        assert!(matches!(wp_assignment(&a, &a, 2.0), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn gaussian_closed_examples() {
        let m0 = DVector::zeros(3);
        let id = DMatrix::identity(3, 3);
        assert_abs_diff_eq!(w2_gaussian_closed(&m0, &id, &m0, &id).unwrap(), 0.0, epsilon = 1e-12);
        let s = 0.3;
        let w = w2_gaussian_closed(&m0, &id, &m0, &(&id * s)).unwrap();
        assert_abs_diff_eq!(w, 3f64.sqrt() * (1.0 - s.sqrt()), epsilon = 1e-12);
        let m = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        assert_abs_diff_eq!(w2_gaussian_closed(&m0, &id, &m, &id).unwrap(), 3.0, epsilon = 1e-12);
        assert!(w2_gaussian_closed(&m0, &id, &m0, &(-&id)).is_err());
    }

    #[test]
    fn sliced_examples() {
        let g = GaussianMixture::standard(2);
        let a = EmpiricalMeasure::sample(&g, 4000, 9, 0).unwrap();
        assert_eq!(w2_sliced(&a, &a, 16, 1).unwrap().value, 0.0);
        let b = a.translated(&DVector::from_vec(vec![3.0, 0.0]));
        let e = w2_sliced(&a, &b, 400, 2).unwrap();
        assert!((e.value - 3.0 / 2f64.sqrt()).abs() <= 4.0 * e.abs_error + 1e-3, "{e:?}");
        let c = EmpiricalMeasure::new(a.points() * 0.5).unwrap();
        let e = w2_sliced(&a, &c, 64, 3).unwrap();
        assert!((e.value - 0.5).abs() < 0.03, "{e:?}");
    }

    #[test]
    fn translate_search() {
        let mu = GaussianMixture::gaussian_1d(5.0, 1.0).unwrap();
        let a = EmpiricalMeasure::sample(&mu, 2000, 3, 0).unwrap();
        let g = EmpiricalMeasure::standard_gaussian(1, 2000, 3, 0).unwrap();
        let r = infimum_over_translates(&a, &g, 2.0, 1e-3).unwrap();
        assert!((r.m_star[0] - 5.0).abs() < 0.15 && r.value < 0.15, "{r:?}");
        let r1 = infimum_over_translates(&a, &g, 1.0, 1e-6).unwrap();
        assert!((r1.m_star[0] - 5.0).abs() < 0.15 && r1.value <= r.value + 1e-12, "{r1:?}");
        // The golden-section minimum is not beaten by nearby shifts.
        let x = sorted(a.column(0));
        let y = sorted(g.column(0));
        let at = |m: f64| x.iter().zip(&y).map(|(a, b)| (a - b - m).abs()).sum::<f64>() / x.len() as f64;
        for d in [-0.01, 0.01] {
            assert!(at(r1.m_star[0] + d) >= r1.value - 1e-9);
        }
    }

    #[test]
    fn translate_search_two_dims() {
        let mu = GaussianMixture::gaussian(DVector::from_vec(vec![1.0, -2.0]), DMatrix::identity(2, 2)).unwrap();
        let a = EmpiricalMeasure::sample(&mu, 64, 4, 0).unwrap();
        let g = EmpiricalMeasure::standard_gaussian(2, 64, 4, 0).unwrap();
        let r1 = infimum_over_translates(&a, &g, 1.0, 1e-3).unwrap();
        let r2 = infimum_over_translates(&a, &g, 2.0, 1e-3).unwrap();
        assert!(r1.value <= r2.value + 1e-9);
        assert!((r1.m_star[0] - 1.0).abs() < 0.6 && (r1.m_star[1] + 2.0).abs() < 0.6, "{r1:?}");
    }
}
