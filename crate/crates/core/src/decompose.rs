//! Constructive decompositions of μ built from a simulated Föllmer ensemble.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{BoundReport, Direction, Estimate, Method};
use crate::follmer::{median, PathEnsemble, DIAG_FLOOR};
use crate::functionals::Welford;
use crate::gaussmix::GaussianMixture;
use crate::rng::{self, Purpose};
use crate::spectral::{largest_eigenvalue, symmetrize};
use crate::transport::{wp_exact, EmpiricalMeasure};

/// Eigenvalues of C within this distance of 1 count as having reached 1.
pub const RANK_TOL: f64 = 1e-9;

/// Largest overshoot of an eigenvalue of C past 1 tolerated after event location.
pub const OVERSHOOT_TOL: f64 = 1e-3;

pub const BISECTION_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// M₊: eigenvalues clipped below at 0.
    PositivePart,
    /// max(M, Id): eigenvalues clipped below at 1.
    MaxWithIdentity,
}

pub fn spectral_clip(m: &DMatrix<f64>, mode: ClipMode) -> DMatrix<f64> {
    let floor = match mode {
        ClipMode::PositivePart => 0.0,
        ClipMode::MaxWithIdentity => 1.0,
    };
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleOptions {
    /// Points per exact-assignment problem.
    pub sample_size: usize,
    /// Independent assignment problems averaged for an error bar.
    pub blocks: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { sample_size: 1024, blocks: 5 }
    }
}

fn rows_of(ens: &PathEnsemble, range: std::ops::Range<usize>, f: impl Fn(usize) -> Vec<f64>) -> Result<EmpiricalMeasure> {
    let n = ens.dim();
    let count = range.len();
    let mut m = DMatrix::zeros(count, n);
    for (i, p) in range.enumerate() {
        let row = f(p);
        for a in 0..n {
            m[(i, a)] = row[a];
        }
    }
    EmpiricalMeasure::new(m)
}

fn second_moment(e: &EmpiricalMeasure) -> f64 {
    e.points().iter().map(|v| v * v).sum::<f64>() / e.count() as f64
}

struct BlockDistances {
    /// W₂ per block.
    values: Vec<f64>,
    /// W₂ between two independent samples of the first law, per block.
    nulls: Vec<f64>,
    spread: f64,
    points: usize,
}

fn blocked_w2(
    blocks: usize,
    make: impl Fn(usize) -> Result<(EmpiricalMeasure, EmpiricalMeasure, EmpiricalMeasure)> + Sync,
) -> Result<BlockDistances> {
    let parts: Vec<Result<(f64, f64, f64, usize)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let (x, y, x_again) = make(b)?;
            let w = wp_exact(&x, &y, 2.0)?;
            let null = wp_exact(&x, &x_again, 2.0)?;
            let spread = ((second_moment(&x) + second_moment(&y)) / x.count() as f64).sqrt();
            Ok((w, null, spread, x.count()))
        })
        .collect();
    let mut out = BlockDistances { values: Vec::new(), nulls: Vec::new(), spread: 0.0, points: 0 };
    for r in parts {
        let (w, z, s, c) = r?;
        out.values.push(w);
        out.nulls.push(z);
        out.spread = out.spread.max(s);
        out.points += c;
    }
    Ok(out)
}

impl BlockDistances {
    /// Mean of g(W₂) over blocks. The error is the standard error across blocks (or a first-order
    /// plug-in error for a single block) plus the mean of g at the null level, which bounds the
    /// finite-sample bias of the empirical distance.
    fn summarize(&self, g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64) -> Estimate {
        let mut acc = Welford::new(1);
        for &w in &self.values {
            acc.push(&[g(w)]);
        }
        let null = self.nulls.iter().map(|&z| g(z)).sum::<f64>() / self.nulls.len() as f64;
        let err = if self.values.len() > 1 { acc.stderr()[0] } else { dg(self.values[0]).abs() * self.spread };
        Estimate::new(acc.mean[0], err + null.abs(), Method::MonteCarlo, self.points)
    }
}

fn nearest_grid_index(grid: &[f64], t: f64) -> usize {
    (0..grid.len()).min_by(|&a, &b| (grid[a] - t).abs().total_cmp(&(grid[b] - t).abs())).unwrap()
}

#[derive(Debug, Clone, Serialize)]
pub struct DimDecomposition {
    /// (δ/n)^{1/3}, or 1 when δ > n.
    pub t_star: f64,
    /// Grid time actually used.
    pub grid_time: f64,
    /// δ > n, so ν = μ.
    pub nu_is_mu: bool,
    #[serde(skip)]
    pub nu_samples: EmpiricalMeasure,
    #[serde(serialize_with = "crate::estimate::serialize_vector")]
    pub nu_mean: DVector<f64>,
    /// RMS distance of the ν samples from their mean.
    pub nu_spread: f64,
    /// W₂(μ, ν*γ) by exact assignment.
    pub w2_estimate: Estimate,
    /// δ(μ) ≥ W₂³(μ, ν*γ)/(15√n).
    pub bound_report: BoundReport,
    /// (2/t)δ(μ) ≥ E|X₁ − Y_t|² with Y_t = E[X₁|𝓕_t] + B₁ − B_t on the same path.
    pub coupling_report: BoundReport,
    /// (2/t)δ(μ) ≥ W₂²(μ, ν_t*γ_{0,1−t}) by exact assignment.
    pub intermediate_report: BoundReport,
}

/// ν_t samples at t = (δ/n)^{1/3} from the ensemble, with the distance checks.
pub fn theorem_dim(
    mix: &GaussianMixture,
    ens: &PathEnsemble,
    deficit: Estimate,
    opts: &SampleOptions,
) -> Result<DimDecomposition> {
    let n = ens.dim();
    if mix.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: mix.dim() });
    }
    let nf = n as f64;
    let delta = deficit.value.max(0.0);
    let nu_is_mu = delta > nf;
    let t_star = if nu_is_mu { 1.0 } else { (delta / nf).cbrt() };
    let grid = ens.grid();
    let k = nearest_grid_index(grid, t_star);
    let t = if nu_is_mu { 1.0 } else { grid[k] };
    let s = 1.0 - t;
    let seed = ens.options.seed;
    let size = opts.sample_size.min(ens.n_paths());
    let blocks = opts.blocks.clamp(1, (ens.n_paths() / size).max(1));

    let nu_point = |p: usize| -> Vec<f64> {
        if nu_is_mu {
            ens.x1(p).to_vec()
        } else {
            let (x, v) = (ens.x(p, k), ens.v(p, k));
            (0..n).map(|a| x[a] + s * v[a]).collect()
        }
    };
    let nu_samples = rows_of(ens, 0..ens.n_paths(), nu_point)?;
    let nu_mean = nu_samples.mean();
    let nu_spread = (0..nu_samples.count())
        .map(|i| (nu_samples.points().row(i).transpose() - &nu_mean).norm_squared())
        .sum::<f64>()
        .sqrt()
        / (nu_samples.count() as f64).sqrt();

    let dist = blocked_w2(blocks, |b| {
        let x = EmpiricalMeasure::sample(mix, size, seed, 100 + b as u64)?;
        let nu = rows_of(ens, b * size..(b + 1) * size, nu_point)?;
        let g = EmpiricalMeasure::standard_gaussian(n, size, seed, 100 + b as u64)?;
        let again = EmpiricalMeasure::sample(mix, size, seed, 150 + b as u64)?;
        Ok((x, nu.pointwise_sum(&g)?, again))
    })?;
    let w2_estimate = dist.summarize(|w| w, |_| 1.0);
    let scale = 15.0 * nf.sqrt();
    let w3 = dist.summarize(|w| w.powi(3) / scale, |w| 3.0 * w * w / scale);
    let bound_report = BoundReport::new("dimension", deficit, w3, Direction::LhsGeRhs);

    // Pathwise coupling and the assignment version of the intermediate step.
    let rhs_budget = if t > 0.0 { deficit.scale(2.0 / t) } else { Estimate::exact(f64::INFINITY) };
    let coupling = {
        let vals: Vec<f64> = (0..ens.n_paths())
            .into_par_iter()
            .map(|p| {
                let nu = nu_point(p);
                let mut tail = vec![0.0; n];
                if !nu_is_mu {
                    for j in k..ens.n_steps() {
                        for (a, d) in ens.db(p, j).iter().enumerate() {
                            tail[a] += d;
                        }
                    }
                    for (a, d) in ens.db_terminal(p).iter().enumerate() {
                        tail[a] += d;
                    }
                }
                let x1 = ens.x1(p);
                (0..n).map(|a| (x1[a] - nu[a] - tail[a]).powi(2)).sum()
            })
            .collect();
        let mut w = Welford::new(1);
        for v in &vals {
            w.push(&[*v]);
        }
        Estimate::new(w.mean[0], w.stderr()[0], Method::MonteCarlo, vals.len())
    };
    let coupling_report = BoundReport::new("dimension_coupling", rhs_budget, coupling, Direction::LhsGeRhs)
        .with_preconditions(t > 0.0 && !nu_is_mu);
    let inter = blocked_w2(blocks, |b| {
        let x = EmpiricalMeasure::sample(mix, size, seed, 200 + b as u64)?;
        let nu = rows_of(ens, b * size..(b + 1) * size, nu_point)?;
        let g = EmpiricalMeasure::standard_gaussian(n, size, seed, 200 + b as u64)?;
        let scaled = EmpiricalMeasure::new(g.points() * s.sqrt())?;
        let again = EmpiricalMeasure::sample(mix, size, seed, 250 + b as u64)?;
        Ok((x, nu.pointwise_sum(&scaled)?, again))
    })?
    .summarize(|w| w * w, |w| 2.0 * w);
    let intermediate_report = BoundReport::new("dimension_intermediate", rhs_budget, inter, Direction::LhsGeRhs)
        .with_preconditions(t > 0.0 && !nu_is_mu);
    Ok(DimDecomposition {
        t_star,
        grid_time: t,
        nu_is_mu,
        nu_samples,
        nu_mean,
        nu_spread,
        w2_estimate,
        bound_report,
        coupling_report,
        intermediate_report,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct UncorOptions {
    pub samples: SampleOptions,
    pub rank_tol: f64,
    pub overshoot_tol: f64,
    pub bisection_steps: usize,
}

impl Default for UncorOptions {
    fn default() -> Self {
        Self { samples: SampleOptions::default(), rank_tol: RANK_TOL, overshoot_tol: OVERSHOOT_TOL, bisection_steps: BISECTION_STEPS }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ZMoments {
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    pub skewness_se: f64,
    pub kurtosis_se: f64,
    /// E|Z₁|², to be compared with n.
    pub radius: Estimate,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UncorDecomposition {
    #[serde(skip)]
    pub y_samples: EmpiricalMeasure,
    #[serde(skip)]
    pub w_samples: EmpiricalMeasure,
    #[serde(skip)]
    pub z_samples: EmpiricalMeasure,
    /// E⟨Y, W⟩
    pub inner_product_check: Estimate,
    pub inner_product_ok: bool,
    /// max over paths of ‖[Z]₁ − Id‖_max.
    pub qv_residual: f64,
    /// max over paths and steps of ‖L² − L‖_max and ‖LC − CL‖_max.
    pub projection_residual: f64,
    /// Largest overshoot of C past Id left after event location.
    pub max_overshoot: f64,
    /// Median of ‖Y₁ + W − X₁‖.
    pub reconstruction_median: f64,
    /// ½E|Y₁ − Z₁|²
    pub coupling: Estimate,
    /// ½E∫Tr[(Id − A_t)₊²]dt
    pub deficit_lower: Estimate,
    /// W₂²(ν̂, γ̂) by exact assignment.
    pub w2_nu_gamma: Estimate,
    /// δ(μ) ≥ ½W₂²(ν, γ).
    pub report: BoundReport,
    /// δ(μ) ≥ ½E|Y₁ − Z₁|².
    pub coupling_report: BoundReport,
    /// δ(μ) ≥ ½E∫Tr[(Id − A_t)₊²]dt.
    pub deficit_lower_report: BoundReport,
    pub z_moments: ZMoments,
    #[serde(skip)]
    pub stopping_times: Vec<Vec<f64>>,
    /// Mean of the first stopping time τ₁ over paths.
    pub mean_first_stop: f64,
    pub max_stops: usize,
}

struct PathOutcome {
    y: Vec<f64>,
    w: Vec<f64>,
    z: Vec<f64>,
    qv_residual: f64,
    projection_residual: f64,
    overshoot: f64,
    deficit_integral: f64,
    taus: Vec<f64>,
}

fn projection_below_one(c: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = c.nrows();
    let eig = SymmetricEigen::new(symmetrize(c));
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        if eig.eigenvalues[i] < 1.0 - tol {
            let u = eig.eigenvectors.column(i);
            l += u * u.transpose();
        }
    }
    l
}

/// Eigenvalues within `tol` of 1 or above are set to exactly 1.
fn snap_to_identity(c: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(symmetrize(c));
    let vals = eig.eigenvalues.map(|v| if v >= 1.0 - tol { 1.0 } else { v });
    let all = vals.iter().all(|&v| v == 1.0);
    (symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())), all)
}

fn uncor_path(ens: &PathEnsemble, mean: &DVector<f64>, p: usize, opts: &UncorOptions) -> Result<PathOutcome> {
    let n = ens.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let mut bridge = rng::stream(ens.options.seed, Purpose::Bridge, p as u64);
    let mut c = DMatrix::<f64>::zeros(n, n);
    let mut qv = DMatrix::<f64>::zeros(n, n);
    let mut y = DVector::<f64>::zeros(n);
    let mut z = DVector::<f64>::zeros(n);
    let mut w = mean.clone();
    let mut done = false;
    let mut taus = Vec::new();
    let (mut proj_res, mut overshoot, mut deficit_integral) = (0.0_f64, 0.0_f64, 0.0);
    let grid = ens.grid();
    let k_max = ens.n_steps();
    for k in 0..=k_max {
        let (t0, h, db) = if k < k_max {
            (grid[k], grid[k + 1] - grid[k], DVector::from_column_slice(ens.db(p, k)))
        } else {
            (grid[k], 1.0 - grid[k], DVector::from_column_slice(ens.db_terminal(p)))
        };
        let a = ens.cov_mu_t(p, k).ok_or_else(|| Error::DomainError("decomposition needs full curvature".into()))?;
        let a = symmetrize(&a);
        let eig = SymmetricEigen::new(a.clone());
        deficit_integral += h * eig.eigenvalues.iter().map(|&v| (1.0 - v).max(0.0).powi(2)).sum::<f64>();
        let amax = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(1.0)))
            * eig.eigenvectors.transpose();
        let rate = symmetrize(&(&amax * &amax));
        let mut rem_h = h;
        let mut rem_db = db;
        while rem_h > 0.0 {
            if done {
                w += &a * &rem_db;
                break;
            }
            let l = projection_below_one(&c, opts.rank_tol);
            proj_res = proj_res.max((&l * &l - &l).amax()).max((&l * &c - &c * &l).amax());
            let pinc = symmetrize(&(&l * &rate * &l));
            let lcl = symmetrize(&(&l * &c * &l));
            let top = |dt: f64| largest_eigenvalue(&(&lcl + &pinc * dt));
            let (dt, db_piece, event) = if top(rem_h) <= 1.0 + opts.rank_tol {
                (rem_h, rem_db.clone(), false)
            } else {
                let (mut lo, mut hi) = (0.0, rem_h);
                for _ in 0..opts.bisection_steps {
                    let mid = 0.5 * (lo + hi);
                    if top(mid) > 1.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                overshoot = overshoot.max(top(hi) - 1.0);
                if top(hi) - 1.0 > opts.overshoot_tol {
                    return Err(Error::GridTooCoarse(top(hi) - 1.0));
                }
                // Brownian bridge split of the remaining increment at hi.
                let frac = hi / rem_h;
                let sd = (hi * (rem_h - hi) / rem_h).max(0.0).sqrt();
                let xi = DVector::from_fn(n, |_, _| bridge.sample::<f64, _>(StandardNormal));
                (hi, &rem_db * frac + xi * sd, true)
            };
            let la = &l * &a;
            y += &la * &db_piece;
            z += &l * &amax * &db_piece;
            w += (&a - &la) * &db_piece;
            c += &pinc * dt;
            qv += &pinc * dt;
            rem_db -= &db_piece;
            rem_h -= dt;
            if event {
                taus.push(t0 + (h - rem_h));
                let (snapped, all) = snap_to_identity(&c, opts.rank_tol);
                c = snapped;
                done = all;
            } else if rem_h <= 0.0 {
                break;
            }
        }
    }
    if !done {
        let (_, all) = snap_to_identity(&c, opts.rank_tol);
        if all {
            taus.push(1.0);
        }
    }
    Ok(PathOutcome {
        y: y.iter().copied().collect(),
        w: w.iter().copied().collect(),
        z: z.iter().copied().collect(),
        qv_residual: (qv - id).amax(),
        projection_residual: proj_res,
        overshoot,
        deficit_integral,
        taus,
    })
}

fn z_moment_checks(z: &EmpiricalMeasure) -> ZMoments {
    let (count, n) = (z.count(), z.dim());
    let nf = count as f64;
    let pts = z.points();
    let mut skewness = Vec::with_capacity(n);
    let mut excess_kurtosis = Vec::with_capacity(n);
    for a in 0..n {
        let col = pts.column(a);
        let m = col.mean();
        let (m2, m3, m4) = col.iter().fold((0.0, 0.0, 0.0), |(s2, s3, s4), &x| {
            let d = x - m;
            (s2 + d * d, s3 + d * d * d, s4 + d * d * d * d)
        });
        let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
        skewness.push(m3 / m2.powf(1.5));
        excess_kurtosis.push(m4 / (m2 * m2) - 3.0);
    }
    let mut r = Welford::new(1);
    for i in 0..count {
        r.push(&[pts.row(i).norm_squared()]);
    }
    let radius = Estimate::new(r.mean[0], r.stderr()[0], Method::MonteCarlo, count);
    let skewness_se = (6.0 / nf).sqrt();
    let kurtosis_se = (24.0 / nf).sqrt();
    let ok = skewness.iter().all(|s| s.abs() <= 4.0 * skewness_se)
        && excess_kurtosis.iter().all(|k| k.abs() <= 4.0 * kurtosis_se)
        && (radius.value - n as f64).abs() <= 4.0 * radius.abs_error;
    ZMoments { skewness, excess_kurtosis, skewness_se, kurtosis_se, radius, ok }
}

/// Per-path C/L process with event-located stopping times, and the checks on Y, Z and W.
pub fn theorem_uncor(
    mix: &GaussianMixture,
    ens: &PathEnsemble,
    deficit: Estimate,
    opts: &UncorOptions,
) -> Result<UncorDecomposition> {
    let n = ens.dim();
    if mix.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: mix.dim() });
    }
    if !ens.has_full_curvature() {
        return Err(Error::DomainError("decomposition needs full curvature".into()));
    }
    let (mean, _) = mix.moments();
    let outcomes: Vec<Result<PathOutcome>> =
        (0..ens.n_paths()).into_par_iter().map(|p| uncor_path(ens, &mean, p, opts)).collect();
    let outcomes: Vec<PathOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let paths = outcomes.len();
    let matrix = |f: &dyn Fn(&PathOutcome) -> &Vec<f64>| {
        EmpiricalMeasure::new(DMatrix::from_fn(paths, n, |i, a| f(&outcomes[i])[a]))
    };
    let y_samples = matrix(&|o| &o.y)?;
    let w_samples = matrix(&|o| &o.w)?;
    let z_samples = matrix(&|o| &o.z)?;

    let mut ip = Welford::new(3);
    let mut recon = Vec::with_capacity(paths);
    for (p, o) in outcomes.iter().enumerate() {
        let yw: f64 = (0..n).map(|a| o.y[a] * o.w[a]).sum();
        let yz: f64 = (0..n).map(|a| (o.y[a] - o.z[a]).powi(2)).sum();
        ip.push(&[yw, 0.5 * yz, 0.5 * o.deficit_integral]);
        let x1 = ens.x1(p);
        recon.push((0..n).map(|a| (o.y[a] + o.w[a] - x1[a]).powi(2)).sum::<f64>().sqrt());
    }
    let se = ip.stderr();
    let inner_product_check = Estimate::new(ip.mean[0], se[0], Method::MonteCarlo, paths);
    let inner_product_ok = ip.mean[0].abs() <= 4.0 * se[0] + DIAG_FLOOR;
    let coupling = Estimate::new(ip.mean[1], se[1], Method::MonteCarlo, paths);
    let deficit_lower = Estimate::new(ip.mean[2], se[2], Method::MonteCarlo, paths);

    let seed = ens.options.seed;
    let size = opts.samples.sample_size.min(paths);
    let blocks = opts.samples.blocks.clamp(1, (paths / size).max(1));
    let w2_nu_gamma = blocked_w2(blocks, |b| {
        let rows = EmpiricalMeasure::new(y_samples.points().rows(b * size, size).into_owned())?;
        let g = EmpiricalMeasure::standard_gaussian(n, size, seed, 300 + b as u64)?;
        let again = EmpiricalMeasure::standard_gaussian(n, size, seed, 350 + b as u64)?;
        Ok((g, rows, again))
    })?
    .summarize(|w| w * w, |w| 2.0 * w);
    let report = BoundReport::new("uncorrelated", deficit, w2_nu_gamma.scale(0.5), Direction::LhsGeRhs);
    let coupling_report = BoundReport::new("uncorrelated_coupling", deficit, coupling, Direction::LhsGeRhs);
    let deficit_lower_report = BoundReport::new("uncorrelated_covariance", deficit, deficit_lower, Direction::LhsGeRhs);
    let z_moments = z_moment_checks(&z_samples);
    let stopping_times: Vec<Vec<f64>> = outcomes.iter().map(|o| o.taus.clone()).collect();
    let firsts: Vec<f64> = stopping_times.iter().filter_map(|t| t.first().copied()).collect();
    Ok(UncorDecomposition {
        inner_product_check,
        inner_product_ok,
        qv_residual: outcomes.iter().map(|o| o.qv_residual).fold(0.0, f64::max),
        projection_residual: outcomes.iter().map(|o| o.projection_residual).fold(0.0, f64::max),
        max_overshoot: outcomes.iter().map(|o| o.overshoot).fold(0.0, f64::max),
        reconstruction_median: median(&recon),
        coupling,
        deficit_lower,
        w2_nu_gamma,
        report,
        coupling_report,
        deficit_lower_report,
        z_moments,
        mean_first_stop: if firsts.is_empty() { f64::NAN } else { firsts.iter().sum::<f64>() / firsts.len() as f64 },
        max_stops: stopping_times.iter().map(Vec::len).max().unwrap_or(0),
        stopping_times,
        y_samples,
        w_samples,
        z_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::follmer::{simulate_ensemble, SimOptions};
    use crate::spectral::smallest_eigenvalue;
    use proptest::prelude::*;

    fn sim(mix: &GaussianMixture, paths: usize, steps: usize) -> PathEnsemble {
        simulate_ensemble(mix, &SimOptions { n_paths: paths, n_steps: steps, ..SimOptions::default() }).unwrap()
    }

    #[test]
    fn clip_examples() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0]));
        let c = spectral_clip(&m, ClipMode::PositivePart);
        assert!((c - DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0]))).amax() < 1e-15);
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0]));
        let c = spectral_clip(&m, ClipMode::MaxWithIdentity);
        assert!((c - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]))).amax() < 1e-15);
    }

    proptest! {
        #[test]
        fn positive_part_dominates(entries in prop::collection::vec(-5.0f64..5.0, 9)) {
            let m = symmetrize(&DMatrix::from_row_slice(3, 3, &entries));
            let p = spectral_clip(&m, ClipMode::PositivePart);
            prop_assert!(smallest_eigenvalue(&p) >= -1e-10);
            prop_assert!(smallest_eigenvalue(&(&p - &m)) >= -1e-10);
            let q = spectral_clip(&m, ClipMode::MaxWithIdentity);
            prop_assert!(smallest_eigenvalue(&q) >= 1.0 - 1e-10);
            prop_assert!(smallest_eigenvalue(&(&q - &m)) >= -1e-10);
        }
    }

    #[test]
    fn dim_for_translated_gaussian() {
        let mu = GaussianMixture::gaussian_1d(1.5, 1.0).unwrap();
        let ens = sim(&mu, 2048, 64);
        let d = theorem_dim(&mu, &ens, Estimate::exact(0.0), &SampleOptions { sample_size: 1024, blocks: 2 }).unwrap();
        assert_eq!(d.t_star, 0.0);
        assert!(d.nu_spread < 1e-12 && (d.nu_mean[0] - 1.5).abs() < 1e-12);
        assert!(d.w2_estimate.value < 0.2);
        assert!(d.bound_report.holds);
        assert!(!d.coupling_report.preconditions_met);
    }

    #[test]
    fn dim_for_bimodal() {
        let mu = GaussianMixture::mixture_1d(&[(0.5, -1.0, 0.5), (0.5, 1.0, 0.5)]).unwrap();
        let ens = sim(&mu, 2048, 128);
        let delta = Estimate::new(0.191_462_101_928, 1e-9, Method::Quadrature, 0);
        let d = theorem_dim(&mu, &ens, delta, &SampleOptions { sample_size: 1024, blocks: 2 }).unwrap();
        assert!((d.t_star - (0.191_462_101_928f64).cbrt()).abs() < 1e-12);
        assert!(d.bound_report.holds && d.coupling_report.holds && d.intermediate_report.holds);
    }

    #[test]
    fn uncor_for_standard_gaussian() {
        let g = GaussianMixture::standard(2);
        let ens = sim(&g, 256, 32);
        let u = theorem_uncor(&g, &ens, Estimate::exact(0.0), &UncorOptions::default()).unwrap();
        for p in 0..256 {
            let b1: Vec<f64> = (0..2)
                .map(|a| (0..32).map(|k| ens.db(p, k)[a]).sum::<f64>() + ens.db_terminal(p)[a])
                .collect();
            for a in 0..2 {
                assert!((u.y_samples.points()[(p, a)] - b1[a]).abs() < 1e-12);
                assert!((u.z_samples.points()[(p, a)] - b1[a]).abs() < 1e-12);
                assert!(u.w_samples.points()[(p, a)].abs() < 1e-12);
            }
        }
        assert!(u.qv_residual < 1e-12 && u.projection_residual < 1e-10);
        assert_eq!(u.coupling.value, 0.0);
        assert!(u.stopping_times.iter().all(|t| t.len() == 1 && (t[0] - 1.0).abs() < 1e-9));
    }

    #[test]
    fn uncor_for_contracted_gaussian() {
        // A_t = s/(1 − t + st) < 1, so C_t = t·Id, Z₁ = B₁ and Var(Y₁) = ∫A² = s.
        let s = 0.5;
        let mu = GaussianMixture::gaussian_1d(0.0, s).unwrap();
        let ens = sim(&mu, 4096, 256);
        let u = theorem_uncor(&mu, &ens, Estimate::exact(0.5 * (1.0 / s - 1.0 + s.ln())), &UncorOptions::default()).unwrap();
        assert!(u.qv_residual < 1e-9);
        let y = u.y_samples.points().column(0);
        let var = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        assert!((var - s).abs() < 4.0 * s * (2.0 / y.len() as f64).sqrt() + 2e-3, "{var}");
        // ½E|Y₁ − Z₁|² = ½∫(1 − A)²dt = ½(1 + 2s·log s/(1 − s) + s), and ½(1 − √s)² ≤ δ.
        let lower = 0.5 * (1.0 + 2.0 * s * s.ln() / (1.0 - s) + s);
        assert!((u.deficit_lower.value - lower).abs() < 1e-3, "{:?} {lower}", u.deficit_lower);
        assert!((u.coupling.value - lower).abs() < 4.0 * u.coupling.abs_error + 2e-3, "{:?}", u.coupling);
        assert!(0.5 * (1.0 - s.sqrt()).powi(2) <= 0.5 * (1.0 / s - 1.0 + s.ln()));
        assert!(u.coupling_report.holds && u.report.holds && u.deficit_lower_report.holds);
    }

    #[test]
    fn uncor_for_bimodal() {
        let mu = GaussianMixture::mixture_1d(&[(0.5, -1.0, 0.5), (0.5, 1.0, 0.5)]).unwrap();
        let ens = sim(&mu, 4096, 128);
        let delta = Estimate::new(0.191_462_101_928, 1e-9, Method::Quadrature, 0);
        let u = theorem_uncor(&mu, &ens, delta, &UncorOptions::default()).unwrap();
        assert!(u.inner_product_ok, "{:?}", u.inner_product_check);
        assert!(u.report.holds && u.coupling_report.holds);
        assert!(u.qv_residual < 1e-2 && u.projection_residual < 1e-10);
        assert!(u.max_overshoot < OVERSHOOT_TOL);
        assert!(u.mean_first_stop < 1.0);
    }
}
