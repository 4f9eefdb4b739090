//! Föllmer drift for Gaussian-mixture targets, ensemble simulation and pathwise diagnostics.
//!
//! For a component N(m, C) with C = U diag(c) Uᵀ, s = 1 − t and K = sC⁻¹ + tI, the
//! conditional law of X₁ given X_t = x is N(x + s·K⁻¹u, s·K⁻¹) with u = C⁻¹(m − x) + x,
//! and the component weight is proportional to w·Z where
//! log Z = −½Σlog c_i − ½Σlog k_i + Σ_i [½x̃²(1 + s/c) + s·d·x̃/c − ½t·d²/c] / k
//! in the eigenbasis (x̃ = Uᵀx, d = Uᵀm − x̃). The drift is the posterior average of
//! v_j = K⁻¹u and the curvature is Σπ_j K_j⁻¹(I − C_j⁻¹) + Σπ_j (v_j − v)(v_j − v)ᵀ.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{BoundReport, Direction, Estimate, Method};
use crate::functionals::{Budget, Functionals, MethodChoice, Welford};
use crate::gaussmix::{GaussianMixture, LN_2PI};
use crate::quadrature::{self, QuadOptions, Region};
use crate::rng::{self, Purpose, DEFAULT_SEED};
use crate::spectral::{smallest_eigenvalue, sym_inverse};

/// Posterior weights below this are dropped.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Absolute floor added to noise bands; paths are deterministic at t = 0.
pub const DIAG_FLOOR: f64 = 1e-9;

/// Largest dimension for which the full curvature matrix is stored per path and time.
pub const FULL_Q_MAX_DIM: usize = 8;

struct KernelComponent {
    log_weight: f64,
    /// Eigenvectors as rows (Uᵀ), row-major.
    ut: Vec<f64>,
    c: Vec<f64>,
    log_c: Vec<f64>,
    /// Uᵀm
    mt: Vec<f64>,
}

/// Closed-form posterior calculus shared by `bridge_state` and the simulator.
pub(crate) struct Kernel {
    dim: usize,
    comps: Vec<KernelComponent>,
}

/// Scratch and output of one kernel evaluation.
pub(crate) struct KernelOut {
    pub(crate) v: Vec<f64>,
    /// Row-major curvature Q.
    pub(crate) q: Vec<f64>,
    pub(crate) pi: Vec<f64>,
    /// Component drifts v_j, component-major.
    pub(crate) vj: Vec<f64>,
    /// k_i per component, component-major.
    pub(crate) k: Vec<f64>,
    logit: Vec<f64>,
    xt: Vec<f64>,
    vt: Vec<f64>,
}

impl Kernel {
    pub(crate) fn new(mix: &GaussianMixture) -> Self {
        let n = mix.dim();
        let comps = mix
            .components()
            .iter()
            .map(|c| {
                let ut: Vec<f64> = (0..n * n).map(|k| c.basis[(k % n, k / n)]).collect();
                let mt = (0..n).map(|i| (0..n).map(|a| ut[i * n + a] * c.mean[a]).sum()).collect();
                KernelComponent {
                    log_weight: c.log_weight,
                    ut,
                    c: c.eigenvalues.clone(),
                    log_c: c.eigenvalues.iter().map(|v| v.ln()).collect(),
                    mt,
                }
            })
            .collect();
        Self { dim: n, comps }
    }

    pub(crate) fn out(&self) -> KernelOut {
        let (n, j) = (self.dim, self.comps.len());
        KernelOut {
            v: vec![0.0; n],
            q: vec![0.0; n * n],
            pi: vec![0.0; j],
            vj: vec![0.0; j * n],
            k: vec![0.0; j * n],
            logit: vec![0.0; j],
            xt: vec![0.0; n],
            vt: vec![0.0; n],
        }
    }

    /// Drift, curvature and posterior weights at (t, x), t ∈ [0, 1].
    pub(crate) fn eval(&self, t: f64, x: &[f64], o: &mut KernelOut, want_q: bool) {
        let n = self.dim;
        let s = 1.0 - t;
        let mut max = f64::NEG_INFINITY;
        for (j, c) in self.comps.iter().enumerate() {
            for i in 0..n {
                o.xt[i] = (0..n).map(|a| c.ut[i * n + a] * x[a]).sum();
            }
            let mut logz = 0.0;
            for i in 0..n {
                let inv_c = 1.0 / c.c[i];
                let k = s * inv_c + t;
                let xt = o.xt[i];
                let d = c.mt[i] - xt;
                logz += -0.5 * c.log_c[i] - 0.5 * k.ln()
                    + (0.5 * xt * xt * (1.0 + s * inv_c) + s * d * xt * inv_c - 0.5 * t * d * d * inv_c) / k;
                o.vt[i] = (d * inv_c + xt) / k;
                o.k[j * n + i] = k;
            }
            for a in 0..n {
                o.vj[j * n + a] = (0..n).map(|i| c.ut[i * n + a] * o.vt[i]).sum();
            }
            o.logit[j] = c.log_weight + logz;
            max = max.max(o.logit[j]);
        }
        let mut total = 0.0;
        for j in 0..self.comps.len() {
            let w = (o.logit[j] - max).exp();
            o.pi[j] = w;
            total += w;
        }
        let mut kept = 0.0;
        for p in o.pi.iter_mut() {
            *p /= total;
            if *p < WEIGHT_FLOOR {
                *p = 0.0;
            }
            kept += *p;
        }
        o.v.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.comps.len() {
            o.pi[j] /= kept;
            for a in 0..n {
                o.v[a] += o.pi[j] * o.vj[j * n + a];
            }
        }
        if !want_q {
            return;
        }
        o.q.iter_mut().for_each(|q| *q = 0.0);
        for (j, c) in self.comps.iter().enumerate() {
            let p = o.pi[j];
            if p == 0.0 {
                continue;
            }
            for i in 0..n {
                let h = p * (1.0 - 1.0 / c.c[i]) / o.k[j * n + i];
                for a in 0..n {
                    let ua = c.ut[i * n + a];
                    for b in 0..n {
                        o.q[a * n + b] += h * ua * c.ut[i * n + b];
                    }
                }
            }
            for a in 0..n {
                let da = o.vj[j * n + a] - o.v[a];
                for b in 0..n {
                    o.q[a * n + b] += p * da * (o.vj[j * n + b] - o.v[b]);
                }
            }
        }
    }

    /// K_j^{-1/2} z for component j, using the k values of the last evaluation.
    fn apply_inv_sqrt_k(&self, j: usize, o: &KernelOut, z: &[f64], out: &mut [f64]) {
        let n = self.dim;
        let c = &self.comps[j];
        for a in 0..n {
            out[a] = 0.0;
        }
        for i in 0..n {
            let zi: f64 = (0..n).map(|a| c.ut[i * n + a] * z[a]).sum::<f64>() / o.k[j * n + i].sqrt();
            for a in 0..n {
                out[a] += c.ut[i * n + a] * zi;
            }
        }
    }

    /// Posterior component covariance K_j⁻¹ as a matrix.
    fn inv_k(&self, j: usize, o: &KernelOut) -> DMatrix<f64> {
        let n = self.dim;
        let c = &self.comps[j];
        DMatrix::from_fn(n, n, |a, b| (0..n).map(|i| c.ut[i * n + a] * c.ut[i * n + b] / o.k[j * n + i]).sum())
    }
}

/// State of the bridge at (t, x).
#[derive(Debug, Clone)]
pub struct BridgeState {
    pub t: f64,
    pub x: DVector<f64>,
    /// Law of (X₁ − X_t)/√(1−t) given X_t = x.
    pub posterior: GaussianMixture,
    pub drift: DVector<f64>,
    pub curvature: DMatrix<f64>,
}

impl BridgeState {
    /// E[X₁ | X_t = x].
    pub fn conditional_mean(&self) -> DVector<f64> {
        &self.x + &self.drift * (1.0 - self.t)
    }

    /// cov(X₁ | X_t = x) = (1 − t)·cov(posterior).
    pub fn conditional_cov(&self) -> DMatrix<f64> {
        self.posterior.moments().1 * (1.0 - self.t)
    }
}

pub fn bridge_state(mix: &GaussianMixture, t: f64, x: &DVector<f64>) -> Result<BridgeState> {
    let n = mix.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x.len() });
    }
    if !(0.0..1.0).contains(&t) {
        return Err(Error::DomainError(format!("bridge time {t} not in [0, 1)")));
    }
    let kernel = Kernel::new(mix);
    let mut o = kernel.out();
    kernel.eval(t, x.as_slice(), &mut o, true);
    let rs = (1.0 - t).sqrt();
    let mut parts = Vec::new();
    for j in 0..kernel.comps.len() {
        if o.pi[j] == 0.0 {
            continue;
        }
        let mean = DVector::from_fn(n, |a, _| rs * o.vj[j * n + a]);
        parts.push((o.pi[j], mean, kernel.inv_k(j, &o)));
    }
    let sum: f64 = parts.iter().map(|p| p.0).sum();
    parts.iter_mut().for_each(|p| p.0 /= sum);
    Ok(BridgeState {
        t,
        x: x.clone(),
        posterior: GaussianMixture::new(n, parts)?,
        drift: DVector::from_column_slice(&o.v),
        curvature: DMatrix::from_row_slice(n, n, &o.q),
    })
}

/// ∇ log P_{1−t} f(x) by central differences of a cubature of the heat convolution.
/// Test oracle for `bridge_state`; dimensions 1 and 2 only.
pub fn drift_quadrature_oracle(mix: &GaussianMixture, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = mix.dim();
    if !(1..=2).contains(&n) {
        return Err(Error::DomainError(format!("oracle supports dims 1 and 2, got {n}")));
    }
    if !(0.0..=1.0 - 1e-6).contains(&t) {
        return Err(Error::DomainError(format!("oracle time {t} outside [0, 1 − 1e-6]")));
    }
    let s = 1.0 - t;
    let rs = s.sqrt();
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-13, max_evaluations: 5_000_000 };
    let log_pf = |y: &DVector<f64>| -> Result<f64> {
        // ∫ f(y + √s z) φ(z) dz with f = p/φ, evaluated as exp(log p(y+√s z) + |y+√s z|²/2 − |z|²/2).
        let cells = Region::new(vec![-12.0; n], vec![12.0; n]).subdivide(1.0);
        let res = quadrature::integrate(cells, 1, &opts, |z, out| {
            let p = DVector::from_fn(n, |a, _| y[a] + rs * z[a]);
            let lp = mix.log_density(&p).unwrap_or(f64::NEG_INFINITY);
            let z2: f64 = z.iter().map(|v| v * v).sum();
            out[0] = (lp + 0.5 * p.norm_squared() - 0.5 * z2).exp();
        })?;
        Ok(res.values[0].ln())
    };
    let h = 1e-4;
    let mut grad = DVector::zeros(n);
    for a in 0..n {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[a] += h;
        dn[a] -= h;
        grad[a] = (log_pf(&up)? - log_pf(&dn)?) / (2.0 * h);
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Uniform,
    /// 1 − t_k = ε^{k/K}: refined near t = 1.
    Geometric,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimOptions {
    pub n_paths: usize,
    pub n_steps: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub grid: GridKind,
    /// Brownian increments are drawn on a grid this many times finer and summed, so that
    /// runs at n and n·m steps can share one Brownian path.
    pub noise_substeps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { n_paths: 10_000, n_steps: 512, epsilon: 1e-3, seed: DEFAULT_SEED, grid: GridKind::Uniform, noise_substeps: 1 }
    }
}

impl SimOptions {
    fn validate(&self) -> Result<()> {
        if self.n_steps < 8 {
            return Err(Error::Config(format!("n_steps must be at least 8, got {}", self.n_steps)));
        }
        if !(1e-6..=1e-2).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} not in [1e-6, 1e-2]", self.epsilon)));
        }
        if self.n_paths == 0 || self.noise_substeps == 0 {
            return Err(Error::Config("n_paths and noise_substeps must be positive".into()));
        }
        Ok(())
    }

    pub fn grid_points(&self) -> Vec<f64> {
        let k = self.n_steps;
        let end = 1.0 - self.epsilon;
        match self.grid {
            GridKind::Uniform => (0..=k).map(|i| if i == k { end } else { i as f64 * end / k as f64 }).collect(),
            GridKind::Geometric => (0..=k)
                .map(|i| if i == k { end } else { 1.0 - self.epsilon.powf(i as f64 / k as f64) })
                .collect(),
        }
    }
}

/// Simulated Föllmer paths on [0, 1 − ε] plus an exact terminal draw.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub options: SimOptions,
    grid: Vec<f64>,
    dim: usize,
    full_q: bool,
    x: Vec<f64>,
    v: Vec<f64>,
    q: Vec<f64>,
    db: Vec<f64>,
    db_term: Vec<f64>,
    x1: Vec<f64>,
    v1: Vec<f64>,
    q1: Vec<f64>,
}

impl PathEnsemble {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.options.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_full_curvature(&self) -> bool {
        self.full_q
    }

    fn q_width(&self) -> usize {
        if self.full_q {
            self.dim * self.dim
        } else {
            1
        }
    }

    fn idx(&self, p: usize, k: usize, width: usize) -> std::ops::Range<usize> {
        let base = (p * self.grid.len() + k) * width;
        base..base + width
    }

    pub fn x(&self, p: usize, k: usize) -> &[f64] {
        &self.x[self.idx(p, k, self.dim)]
    }

    pub fn v(&self, p: usize, k: usize) -> &[f64] {
        &self.v[self.idx(p, k, self.dim)]
    }

    /// Row-major Q at grid time k, when stored in full.
    pub fn q(&self, p: usize, k: usize) -> Option<&[f64]> {
        self.full_q.then(|| &self.q[self.idx(p, k, self.dim * self.dim)])
    }

    pub fn q_trace(&self, p: usize, k: usize) -> f64 {
        let w = self.q_width();
        let q = &self.q[self.idx(p, k, w)];
        if self.full_q {
            (0..self.dim).map(|i| q[i * self.dim + i]).sum()
        } else {
            q[0]
        }
    }

    /// Brownian increment over [t_k, t_{k+1}].
    pub fn db(&self, p: usize, k: usize) -> &[f64] {
        let base = (p * (self.grid.len() - 1) + k) * self.dim;
        &self.db[base..base + self.dim]
    }

    /// Brownian increment over [1 − ε, 1] used by the terminal draw.
    pub fn db_terminal(&self, p: usize) -> &[f64] {
        &self.db_term[p * self.dim..(p + 1) * self.dim]
    }

    pub fn x1(&self, p: usize) -> &[f64] {
        &self.x1[p * self.dim..(p + 1) * self.dim]
    }

    pub fn v1(&self, p: usize) -> &[f64] {
        &self.v1[p * self.dim..(p + 1) * self.dim]
    }

    /// Q at t = 1, i.e. ∇² log f(X₁), when stored in full.
    pub fn q1(&self, p: usize) -> Option<&[f64]> {
        let w = self.dim * self.dim;
        self.full_q.then(|| &self.q1[p * w..(p + 1) * w])
    }

    /// cov(μ_t) = Id + (1 − t)Q at grid time k.
    pub fn cov_mu_t(&self, p: usize, k: usize) -> Option<DMatrix<f64>> {
        let n = self.dim;
        let s = 1.0 - self.grid[k];
        self.q(p, k).map(|q| DMatrix::from_fn(n, n, |a, b| if a == b { 1.0 } else { 0.0 } + s * q[a * n + b]))
    }

    /// Largest deviation from X_{k+1} = X_k + v_k·h_k + ΔB_k over all paths and steps.
    pub fn euler_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for p in 0..self.n_paths() {
            for k in 0..self.n_steps() {
                let h = self.grid[k + 1] - self.grid[k];
                let (x0, x1, v, db) = (self.x(p, k), self.x(p, k + 1), self.v(p, k), self.db(p, k));
                for a in 0..self.dim {
                    worst = worst.max((x1[a] - (x0[a] + v[a] * h + db[a])).abs());
                }
            }
        }
        worst
    }
}

struct PathBuffers<'a> {
    x: &'a mut [f64],
    v: &'a mut [f64],
    q: &'a mut [f64],
    db: &'a mut [f64],
    db_term: &'a mut [f64],
    x1: &'a mut [f64],
    v1: &'a mut [f64],
    q1: &'a mut [f64],
}

fn simulate_path(kernel: &Kernel, grid: &[f64], opts: &SimOptions, full_q: bool, path: usize, b: PathBuffers) {
    let n = kernel.dim;
    let steps = grid.len() - 1;
    let qw = if full_q { n * n } else { 1 };
    let mut noise = rng::stream(opts.seed, Purpose::Path, path as u64);
    let mut term = rng::stream(opts.seed, Purpose::Terminal, path as u64);
    let mut o = kernel.out();
    let mut x = vec![0.0; n];
    let store_q = |q: &[f64], dst: &mut [f64]| {
        if full_q {
            dst.copy_from_slice(q);
        } else {
            dst[0] = (0..n).map(|i| q[i * n + i]).sum();
        }
    };
    for k in 0..=steps {
        kernel.eval(grid[k], &x, &mut o, true);
        b.x[k * n..(k + 1) * n].copy_from_slice(&x);
        b.v[k * n..(k + 1) * n].copy_from_slice(&o.v);
        store_q(&o.q, &mut b.q[k * qw..(k + 1) * qw]);
        if k == steps {
            break;
        }
        let h = grid[k + 1] - grid[k];
        let sd = (h / opts.noise_substeps as f64).sqrt();
        let db = &mut b.db[k * n..(k + 1) * n];
        db.iter_mut().for_each(|d| *d = 0.0);
        for _ in 0..opts.noise_substeps {
            for d in db.iter_mut() {
                *d += sd * noise.sample::<f64, _>(StandardNormal);
            }
        }
        for a in 0..n {
            x[a] += o.v[a] * h + db[a];
        }
    }
    // Exact draw from the conditional law at 1 − ε, driven by the stored terminal increment.
    let eps = 1.0 - grid[steps];
    let u: f64 = term.random();
    let mut acc = 0.0;
    let mut j = o.pi.iter().rposition(|&p| p > 0.0).unwrap();
    for (i, &p) in o.pi.iter().enumerate() {
        acc += p;
        if u < acc && p > 0.0 {
            j = i;
            break;
        }
    }
    let sd = eps.sqrt();
    for d in b.db_term.iter_mut() {
        *d = sd * term.sample::<f64, _>(StandardNormal);
    }
    let mut shift = vec![0.0; n];
    kernel.apply_inv_sqrt_k(j, &o, b.db_term, &mut shift);
    for a in 0..n {
        b.x1[a] = x[a] + eps * o.vj[j * n + a] + shift[a];
    }
    kernel.eval(1.0, b.x1, &mut o, true);
    b.v1.copy_from_slice(&o.v);
    if full_q {
        b.q1.copy_from_slice(&o.q);
    }
}

/// Euler–Maruyama on [0, 1 − ε] with an exact terminal draw; one RNG stream per path.
pub fn simulate_ensemble(mix: &GaussianMixture, opts: &SimOptions) -> Result<PathEnsemble> {
    opts.validate()?;
    let n = mix.dim();
    let full_q = n <= FULL_Q_MAX_DIM;
    let grid = opts.grid_points();
    let nodes = grid.len();
    let paths = opts.n_paths;
    let qw = if full_q { n * n } else { 1 };
    let mut x = vec![0.0; paths * nodes * n];
    let mut v = vec![0.0; paths * nodes * n];
    let mut q = vec![0.0; paths * nodes * qw];
    let mut db = vec![0.0; paths * (nodes - 1) * n];
    let mut db_term = vec![0.0; paths * n];
    let mut x1 = vec![0.0; paths * n];
    let mut v1 = vec![0.0; paths * n];
    let mut q1 = vec![0.0; if full_q { paths * n * n } else { 0 }];
    let kernel = Kernel::new(mix);
    let q1_chunks: Vec<&mut [f64]> =
        if full_q { q1.chunks_mut(n * n).collect() } else { (0..paths).map(|_| &mut [][..]).collect() };
    (
        x.par_chunks_mut(nodes * n),
        v.par_chunks_mut(nodes * n),
        q.par_chunks_mut(nodes * qw),
        db.par_chunks_mut((nodes - 1) * n),
        db_term.par_chunks_mut(n),
        x1.par_chunks_mut(n),
        v1.par_chunks_mut(n),
        q1_chunks.into_par_iter(),
    )
        .into_par_iter()
        .enumerate()
        .for_each(|(p, (x, v, q, db, db_term, x1, v1, q1))| {
            simulate_path(&kernel, &grid, opts, full_q, p, PathBuffers { x, v, q, db, db_term, x1, v1, q1 });
        });
    Ok(PathEnsemble { options: *opts, grid, dim: n, full_q, x, v, q, db, db_term, x1, v1, q1 })
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-path trapezoid of g over the grid extended by the node t = 1.
fn path_time_integral(ens: &PathEnsemble, g: impl Fn(usize, f64) -> f64, g_one: f64) -> f64 {
    let grid = &ens.grid;
    let mut total = 0.0;
    let mut prev = g(0, grid[0]);
    for k in 1..grid.len() {
        let cur = g(k, grid[k]);
        total += 0.5 * (grid[k] - grid[k - 1]) * (prev + cur);
        prev = cur;
    }
    total + 0.5 * (1.0 - grid[grid.len() - 1]) * (prev + g_one)
}

fn mean_over_paths(ens: &PathEnsemble, f: impl Fn(usize) -> f64 + Sync + Send) -> Estimate {
    let vals: Vec<f64> = (0..ens.n_paths()).into_par_iter().map(f).collect();
    let mut w = Welford::new(1);
    for v in &vals {
        w.push(&[*v]);
    }
    Estimate::new(w.mean[0], w.stderr()[0], Method::MonteCarlo, vals.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyIdentities {
    /// ½E∫|v_t|²dt, which equals H(μ|γ).
    pub entropy_path: Estimate,
    /// ½E∫|v₁ − v_t|²dt, which equals δ(μ).
    pub deficit_path: Estimate,
    /// E|v₁|², which equals I(μ|γ).
    pub fisher_path: Estimate,
}

pub fn energy_identities(ens: &PathEnsemble) -> EnergyIdentities {
    let entropy_path = mean_over_paths(ens, |p| 0.5 * path_time_integral(ens, |k, _| sq_norm(ens.v(p, k)), sq_norm(ens.v1(p))));
    let deficit_path =
        mean_over_paths(ens, |p| 0.5 * path_time_integral(ens, |k, _| sq_dist(ens.v1(p), ens.v(p, k)), 0.0));
    let fisher_path = mean_over_paths(ens, |p| sq_norm(ens.v1(p)));
    EnergyIdentities { entropy_path, deficit_path, fisher_path }
}

/// One grid time of the martingale diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct TimeRow {
    pub t: f64,
    /// (a) max_i |E[v_t]_i − E_μ[x]_i| and its standard error.
    pub mean_v_dev: f64,
    pub mean_v_se: f64,
    /// E|v_t|²
    pub ev2: f64,
    pub ev2_se: f64,
    /// E|v_t|² − E|v_{t_prev}|² with its paired standard error (0 at the first node).
    pub ev2_step: f64,
    pub ev2_step_se: f64,
    /// (c) max entry of E[Q_t + v_t⊗v_t] − (E_μ[x⊗x] − Id) and its standard error.
    pub q_resid: f64,
    pub q_resid_se: f64,
    /// (d) RMS over paths of v_t − v_0 − ΣQ·ΔB.
    pub ito_resid_rms: f64,
    /// (e) max entry of E[Q_t + ∫₀ᵗQ²ds] − Q_0 and its standard error.
    pub qv_drift: f64,
    pub qv_drift_se: f64,
    /// (f) forward difference of E|v_t|² in time, E Tr(Q_t²) and Tr(m(t)²) with m(t) = −E[Q_t].
    pub dev2_dt: f64,
    pub e_tr_q2: f64,
    pub tr_m2: f64,
    /// Smallest eigenvalue of (m(1)⁻¹ + (1−t)Id)⁻¹ − m(t), and its error bar.
    pub comparison_gap: f64,
    pub comparison_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleDiagnostics {
    pub rows: Vec<TimeRow>,
    pub mean_v_ok: bool,
    pub monotonicity_violations: usize,
    pub q_identity_ok: bool,
    pub qv_martingale_ok: bool,
    pub comparison_ok: bool,
    pub ito_resid_terminal_rms: f64,
    /// Band multiplier used for the verdicts.
    pub z: f64,
}

fn within(dev: f64, se: f64, z: f64) -> bool {
    dev.abs() <= z * se + DIAG_FLOOR * (1.0 + dev.abs().max(se))
}

/// Items (a)–(f) and the m(t) comparison at every grid time, with noise bands of `z` standard errors
/// (E|v_t|² monotonicity always uses 3).
pub fn martingale_diagnostics(ens: &PathEnsemble, mix: &GaussianMixture, z: f64) -> Result<MartingaleDiagnostics> {
    if !ens.full_q {
        return Err(Error::DomainError(format!(
            "martingale diagnostics need full curvature, stored only up to dimension {FULL_Q_MAX_DIM}"
        )));
    }
    let n = ens.dim;
    let nn = n * n;
    let (mean, _) = mix.moments();
    let target = mix.second_moment() - DMatrix::identity(n, n);
    let paths = ens.n_paths();
    let k_max = ens.n_steps();
    let grid = &ens.grid;

    // m(1) = −E[Q₁] from the terminal states.
    let mut w1 = Welford::new(nn);
    for p in 0..paths {
        w1.push(ens.q1(p).unwrap());
    }
    let m1 = -DMatrix::from_row_slice(n, n, &w1.mean);
    let m1_se = w1.stderr().iter().cloned().fold(0.0, f64::max);

    // Running per-path accumulators for (d) and (e).
    let mut ito = vec![0.0; paths * n];
    let mut qv = vec![0.0; paths * nn];
    let mut rows = Vec::with_capacity(k_max + 1);
    let mut prev_ev2: Option<Vec<f64>> = None;
    let width = n + 1 + nn + nn + 1;
    for k in 0..=k_max {
        let t = grid[k];
        let mut w = Welford::new(width);
        let mut step = Welford::new(1);
        let mut ito_sq = 0.0;
        let mut ev2_now = vec![0.0; paths];
        let mut buf = vec![0.0; width];
        for p in 0..paths {
            let v = ens.v(p, k);
            let q = ens.q(p, k).unwrap();
            let v0 = ens.v(p, 0);
            let r = &mut ito[p * n..(p + 1) * n];
            let resid: f64 = (0..n).map(|a| (v[a] - v0[a] - r[a]).powi(2)).sum();
            ito_sq += resid;
            let v2 = sq_norm(v);
            ev2_now[p] = v2;
            buf[..n].copy_from_slice(v);
            buf[n] = v2;
            for a in 0..n {
                for b in 0..n {
                    buf[n + 1 + a * n + b] = q[a * n + b] + v[a] * v[b];
                    buf[n + 1 + nn + a * n + b] = q[a * n + b] + qv[p * nn + a * n + b];
                }
            }
            let mut trq2 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    trq2 += q[a * n + b] * q[b * n + a];
                }
            }
            buf[n + 1 + 2 * nn] = trq2;
            w.push(&buf);
            if let Some(prev) = &prev_ev2 {
                step.push(&[v2 - prev[p]]);
            }
            if k < k_max {
                let h = grid[k + 1] - t;
                let db = ens.db(p, k);
                for a in 0..n {
                    r[a] += (0..n).map(|b| q[a * n + b] * db[b]).sum::<f64>();
                }
                for a in 0..n {
                    for b in 0..n {
                        let q2: f64 = (0..n).map(|c| q[a * n + c] * q[c * n + b]).sum();
                        qv[p * nn + a * n + b] += q2 * h;
                    }
                }
            }
        }
        let se = w.stderr();
        let mut mean_v_dev = 0.0_f64;
        let mut mean_v_se = 0.0;
        for a in 0..n {
            let d = (w.mean[a] - mean[a]).abs();
            if d - 3.0 * se[a] >= mean_v_dev - 3.0 * mean_v_se || a == 0 {
                mean_v_dev = d;
                mean_v_se = se[a];
            }
        }
        let (mut q_resid, mut q_resid_se) = (0.0_f64, 0.0);
        let (mut qv_drift, mut qv_drift_se) = (0.0_f64, 0.0);
        let q0: Vec<f64> = ens.q(0, 0).unwrap().to_vec();
        for a in 0..n {
            for b in 0..n {
                let i = n + 1 + a * n + b;
                let d = w.mean[i] - target[(a, b)];
                if d.abs() - z * se[i] > q_resid.abs() - z * q_resid_se || (a == 0 && b == 0) {
                    q_resid = d;
                    q_resid_se = se[i];
                }
                let i = n + 1 + nn + a * n + b;
                let d = w.mean[i] - q0[a * n + b];
                if d.abs() - z * se[i] > qv_drift.abs() - z * qv_drift_se || (a == 0 && b == 0) {
                    qv_drift = d;
                    qv_drift_se = se[i];
                }
            }
        }
        let mut eq = Welford::new(nn);
        for p in 0..paths {
            eq.push(ens.q(p, k).unwrap());
        }
        let m_t = -DMatrix::from_row_slice(n, n, &eq.mean);
        let m_t_se = eq.stderr().iter().cloned().fold(0.0, f64::max);
        let s = 1.0 - t;
        let bound = &m1 * sym_inverse(&(DMatrix::identity(n, n) + &m1 * s));
        let bound = (&bound + bound.transpose()) * 0.5;
        let comparison_gap = smallest_eigenvalue(&(bound - &m_t));
        let comparison_se = n as f64 * (m_t_se + m1_se);
        let tr_m2 = (&m_t * &m_t).trace();
        let ev2 = w.mean[n];
        let (ev2_step, ev2_step_se) = if step.count > 1.0 { (step.mean[0], step.stderr()[0]) } else { (0.0, 0.0) };
        rows.push(TimeRow {
            t,
            mean_v_dev,
            mean_v_se,
            ev2,
            ev2_se: se[n],
            ev2_step,
            ev2_step_se,
            q_resid,
            q_resid_se,
            ito_resid_rms: (ito_sq / paths as f64).sqrt(),
            qv_drift,
            qv_drift_se,
            dev2_dt: 0.0,
            e_tr_q2: w.mean[n + 1 + 2 * nn],
            tr_m2,
            comparison_gap,
            comparison_se,
        });
        prev_ev2 = Some(ev2_now);
    }
    for k in 0..k_max {
        let dt = grid[k + 1] - grid[k];
        rows[k].dev2_dt = rows[k + 1].ev2_step / dt;
    }
    let mean_v_ok = rows.iter().all(|r| within(r.mean_v_dev, r.mean_v_se, z.min(3.0)));
    let monotonicity_violations =
        rows.iter().filter(|r| r.ev2_step < -(3.0 * r.ev2_step_se + DIAG_FLOOR * (1.0 + r.ev2))).count();
    let q_identity_ok = rows.iter().all(|r| within(r.q_resid, r.q_resid_se, z));
    let qv_martingale_ok = rows.iter().all(|r| within(r.qv_drift, r.qv_drift_se, z));
    let comparison_ok = rows.iter().all(|r| r.comparison_gap >= -(z * r.comparison_se + DIAG_FLOOR));
    let ito_resid_terminal_rms = rows.last().map_or(0.0, |r| r.ito_resid_rms);
    Ok(MartingaleDiagnostics {
        rows,
        mean_v_ok,
        monotonicity_violations,
        q_identity_ok,
        qv_martingale_ok,
        comparison_ok,
        ito_resid_terminal_rms,
        z,
    })
}

/// Per-path residual ‖X₁ − E_μ[x] − Σ_k cov(μ_{t_k})ΔB_k‖, the last term using the terminal increment.
pub fn dat_residuals(ens: &PathEnsemble, mix: &GaussianMixture) -> Result<Vec<f64>> {
    if !ens.full_q {
        return Err(Error::DomainError("residual needs full curvature".into()));
    }
    let n = ens.dim;
    let (mean, _) = mix.moments();
    let k_max = ens.n_steps();
    Ok((0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut acc: Vec<f64> = mean.iter().copied().collect();
            for k in 0..=k_max {
                let s = 1.0 - ens.grid[k];
                let q = ens.q(p, k).unwrap();
                let db = if k < k_max { ens.db(p, k) } else { ens.db_terminal(p) };
                for a in 0..n {
                    acc[a] += db[a] + s * (0..n).map(|b| q[a * n + b] * db[b]).sum::<f64>();
                }
            }
            sq_dist(ens.x1(p), &acc).sqrt()
        })
        .collect())
}

/// Same residual against the martingale E[X₁|𝓕_{1−ε}] = X_{1−ε} + εv_{1−ε}, without the terminal term.
pub fn martingale_residuals(ens: &PathEnsemble, mix: &GaussianMixture) -> Result<Vec<f64>> {
    if !ens.full_q {
        return Err(Error::DomainError("residual needs full curvature".into()));
    }
    let n = ens.dim;
    let (mean, _) = mix.moments();
    let k_max = ens.n_steps();
    let eps = 1.0 - ens.grid[k_max];
    Ok((0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut acc: Vec<f64> = mean.iter().copied().collect();
            for k in 0..k_max {
                let s = 1.0 - ens.grid[k];
                let q = ens.q(p, k).unwrap();
                let db = ens.db(p, k);
                for a in 0..n {
                    acc[a] += db[a] + s * (0..n).map(|b| q[a * n + b] * db[b]).sum::<f64>();
                }
            }
            let x = ens.x(p, k_max);
            let v = ens.v(p, k_max);
            let m: Vec<f64> = (0..n).map(|a| x[a] + eps * v[a]).collect();
            sq_dist(&m, &acc).sqrt()
        })
        .collect())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LocalizationOptions {
    /// Paths used for the direct per-state deficit (0 disables it).
    pub direct_paths: usize,
    /// Number of time intervals for the direct per-state deficit.
    pub direct_intervals: usize,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        Self { direct_paths: 64, direct_intervals: 16 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizationReport {
    pub dat_residual_median: f64,
    pub dat_residual_max: f64,
    pub martingale_residual_median: f64,
    /// ∫E[δ(μ_t)]dt through ½∫ s·E|v₁ − v_s|² ds.
    pub integrated_state_deficit: Estimate,
    /// ∫E[δ(μ_t)]dt with δ(μ_t) computed on the posterior at a subsample of states.
    pub integrated_state_deficit_direct: Option<Estimate>,
    /// δ(μ) ≥ ∫E[δ(μ_t)]dt against the supplied δ(μ).
    pub report: BoundReport,
    pub report_direct: Option<BoundReport>,
}

/// δ of the posterior μ_t at (t, x): closed form for one component, cubature otherwise.
pub fn state_deficit(mix: &GaussianMixture, t: f64, x: &DVector<f64>) -> Result<Estimate> {
    let st = bridge_state(mix, t, x)?;
    let b = Budget { method: MethodChoice::Auto, ..Budget::default() };
    Ok(Functionals::compute(&st.posterior, &b)?.deficit)
}

pub fn localization_checks(
    ens: &PathEnsemble,
    mix: &GaussianMixture,
    deficit: Estimate,
    opts: &LocalizationOptions,
) -> Result<LocalizationReport> {
    let dat = dat_residuals(ens, mix)?;
    let mart = martingale_residuals(ens, mix)?;
    let integrated = mean_over_paths(ens, |p| {
        0.5 * path_time_integral(ens, |k, t| t * sq_dist(ens.v1(p), ens.v(p, k)), 0.0)
    });
    let report = BoundReport::new("state_deficit_integral", deficit, integrated, Direction::LhsGeRhs);

    let (direct, report_direct) = if opts.direct_paths > 0 && ens.dim <= 2 {
        let k_max = ens.n_steps();
        let intervals = opts.direct_intervals.clamp(1, k_max);
        let mut ks: Vec<usize> = (0..=intervals).map(|i| i * k_max / intervals).collect();
        ks.dedup();
        let count = opts.direct_paths.min(ens.n_paths());
        let per_path: Vec<Result<(f64, f64)>> = (0..count)
            .into_par_iter()
            .map(|p| {
                let mut vals = Vec::with_capacity(ks.len());
                let mut err = 0.0_f64;
                for &k in &ks {
                    let e = state_deficit(mix, ens.grid[k], &DVector::from_column_slice(ens.x(p, k)))?;
                    err = err.max(e.abs_error);
                    vals.push(e.value);
                }
                let mut total = 0.0;
                for i in 1..ks.len() {
                    total += 0.5 * (ens.grid[ks[i]] - ens.grid[ks[i - 1]]) * (vals[i] + vals[i - 1]);
                }
                // δ(μ_t) → 0 as t → 1.
                total += 0.5 * (1.0 - ens.grid[k_max]) * vals[vals.len() - 1];
                Ok((total, err))
            })
            .collect();
        let mut w = Welford::new(1);
        let mut quad_err = 0.0_f64;
        for r in per_path {
            let (v, e) = r?;
            w.push(&[v]);
            quad_err = quad_err.max(e);
        }
        let se = if w.count > 1.0 { w.stderr()[0] } else { 0.0 };
        let est = Estimate::new(w.mean[0], se + quad_err, Method::MonteCarlo, count);
        let rep = BoundReport::new("state_deficit_integral_direct", deficit, est, Direction::LhsGeRhs)
            .with_note(format!("{count} paths, {} time nodes", ks.len()));
        (Some(est), Some(rep))
    } else {
        (None, None)
    };
    Ok(LocalizationReport {
        dat_residual_median: median(&dat),
        dat_residual_max: dat.iter().cloned().fold(0.0, f64::max),
        martingale_residual_median: median(&mart),
        integrated_state_deficit: integrated,
        integrated_state_deficit_direct: direct,
        report,
        report_direct,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DatConvergence {
    pub coarse_steps: usize,
    pub fine_steps: usize,
    pub coarse_median: f64,
    pub fine_median: f64,
    /// coarse_median / fine_median
    pub ratio: f64,
    pub coarse_martingale_median: f64,
    pub fine_martingale_median: f64,
}

/// Residual medians at `steps` and `2·steps` on a shared Brownian path.
pub fn dat_convergence(mix: &GaussianMixture, base: &SimOptions) -> Result<DatConvergence> {
    let coarse_opts = SimOptions { noise_substeps: 2, grid: GridKind::Uniform, ..*base };
    let coarse = simulate_ensemble(mix, &coarse_opts)?;
    let coarse_median = median(&dat_residuals(&coarse, mix)?);
    let coarse_martingale_median = median(&martingale_residuals(&coarse, mix)?);
    drop(coarse);
    let fine_opts = SimOptions { n_steps: 2 * base.n_steps, noise_substeps: 1, grid: GridKind::Uniform, ..*base };
    let fine = simulate_ensemble(mix, &fine_opts)?;
    let fine_median = median(&dat_residuals(&fine, mix)?);
    let fine_martingale_median = median(&martingale_residuals(&fine, mix)?);
    Ok(DatConvergence {
        coarse_steps: base.n_steps,
        fine_steps: 2 * base.n_steps,
        coarse_median,
        fine_median,
        ratio: coarse_median / fine_median,
        coarse_martingale_median,
        fine_martingale_median,
    })
}

/// log N(x; 0, Id) for reference in tests and reports.
pub fn standard_log_density(x: &[f64]) -> f64 {
    -0.5 * (sq_norm(x) + x.len() as f64 * LN_2PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bimodal() -> GaussianMixture {
        GaussianMixture::mixture_1d(&[(0.5, -1.0, 0.5), (0.5, 1.0, 0.5)]).unwrap()
    }

    fn small(paths: usize, steps: usize) -> SimOptions {
        SimOptions { n_paths: paths, n_steps: steps, ..SimOptions::default() }
    }

    #[test]
    fn standard_gaussian_bridge() {
        let g = GaussianMixture::standard(2);
        let st = bridge_state(&g, 0.3, &DVector::from_vec(vec![1.0, -2.0])).unwrap();
        assert!(st.drift.amax() < 1e-15 && st.curvature.amax() < 1e-15);
        let (m, c) = st.posterior.moments();
        assert!(m.amax() < 1e-15 && (c - DMatrix::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn translated_gaussian_drift_is_constant() {
        let mu = GaussianMixture::gaussian(DVector::from_vec(vec![1.5, -0.5]), DMatrix::identity(2, 2)).unwrap();
        for (t, x) in [(0.0, [0.0, 0.0]), (0.7, [3.0, 1.0]), (0.999, [-2.0, 5.0])] {
            let st = bridge_state(&mu, t, &DVector::from_row_slice(&x)).unwrap();
            assert!((st.drift[0] - 1.5).abs() < 1e-12 && (st.drift[1] + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_gaussian_closed_form() {
        let s0 = 0.3;
        let mu = GaussianMixture::gaussian_1d(0.0, s0).unwrap();
        for (t, x) in [(0.0, 0.0), (0.4, 1.3), (0.95, -2.0)] {
            let st = bridge_state(&mu, t, &DVector::from_element(1, x)).unwrap();
            let den = 1.0 - t + s0 * t;
            assert_abs_diff_eq!(st.drift[0], (s0 - 1.0) * x / den, epsilon = 1e-12);
            assert_abs_diff_eq!(st.curvature[(0, 0)], (s0 - 1.0) / den, epsilon = 1e-12);
            // Q = cov(X₁|𝓕_t)/(1−t)² − 1/(1−t)
            let c = st.conditional_cov()[(0, 0)];
            assert_abs_diff_eq!(st.curvature[(0, 0)], c / (1.0 - t).powi(2) - 1.0 / (1.0 - t), epsilon = 1e-10);
        }
    }

    #[test]
    fn drift_matches_quadrature_oracle() {
        let g = GaussianMixture::standard(1);
        let v = drift_quadrature_oracle(&g, 0.5, &DVector::from_element(1, 1.0)).unwrap();
        assert!(v[0].abs() < 1e-6);
        let mu = GaussianMixture::gaussian_1d(0.0, 0.5).unwrap();
        let v = drift_quadrature_oracle(&mu, 0.5, &DVector::from_element(1, 1.0)).unwrap();
        assert_abs_diff_eq!(v[0], -2.0 / 3.0, epsilon = 1e-5);
        let mix = GaussianMixture::mixture_1d(&[(0.3, -1.5, 0.4), (0.7, 2.0, 1.7)]).unwrap();
        let mut r = rng::stream(7, Purpose::Probe, 0);
        for _ in 0..10 {
            let t: f64 = r.random_range(0.0..0.95);
            let x: f64 = r.random_range(-3.0..3.0);
            let xv = DVector::from_element(1, x);
            let a = drift_quadrature_oracle(&mix, t, &xv).unwrap();
            let b = bridge_state(&mix, t, &xv).unwrap().drift;
            assert!((a[0] - b[0]).abs() < 1e-5, "t={t} x={x}: {} vs {}", a[0], b[0]);
        }
    }

    #[test]
    fn drift_matches_oracle_in_two_dims() {
        let c1 = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, 0.2, 1.4]);
        let mix = GaussianMixture::new(
            2,
            vec![(0.4, DVector::from_vec(vec![1.0, 0.0]), c1), (0.6, DVector::from_vec(vec![-1.0, 0.5]), DMatrix::identity(2, 2) * 0.8)],
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.3, -0.4]);
        let a = drift_quadrature_oracle(&mix, 0.6, &x).unwrap();
        let b = bridge_state(&mix, 0.6, &x).unwrap().drift;
        assert!((a - b).amax() < 1e-5);
    }

    #[test]
    fn curvature_is_drift_jacobian() {
        let mix = GaussianMixture::mixture_1d(&[(0.5, -1.0, 0.5), (0.5, 1.0, 0.5)]).unwrap();
        let t = 0.6;
        let x = DVector::from_element(1, 0.2);
        let h = 1e-5;
        let up = bridge_state(&mix, t, &DVector::from_element(1, 0.2 + h)).unwrap().drift[0];
        let dn = bridge_state(&mix, t, &DVector::from_element(1, 0.2 - h)).unwrap().drift[0];
        let q = bridge_state(&mix, t, &x).unwrap().curvature[(0, 0)];
        assert!(((up - dn) / (2.0 * h) - q).abs() < 1e-7);
    }

    #[test]
    fn terminal_drift_is_log_ratio_gradient() {
        let mix = bimodal();
        let k = Kernel::new(&mix);
        let mut o = k.out();
        k.eval(1.0, &[0.7], &mut o, true);
        let d = mix.evaluate(&DVector::from_element(1, 0.7)).unwrap();
        assert_abs_diff_eq!(o.v[0], d.score[0] + 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(o.q[0], d.hessian[(0, 0)] + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ensemble_structure_and_determinism() {
        let mix = bimodal();
        let opts = small(64, 16);
        let a = simulate_ensemble(&mix, &opts).unwrap();
        let b = simulate_ensemble(&mix, &opts).unwrap();
        assert_eq!(a.x1, b.x1);
        assert_eq!(a.grid().len(), 17);
        assert_abs_diff_eq!(a.grid()[16], 1.0 - 1e-3, epsilon = 1e-15);
        assert!(a.euler_defect() < 1e-12);
        assert!(simulate_ensemble(&mix, &small(4, 4)).is_err());
        let bad = SimOptions { epsilon: 0.5, ..opts };
        assert!(simulate_ensemble(&mix, &bad).is_err());
    }

    #[test]
    fn shared_noise_across_resolutions() {
        let mix = bimodal();
        let coarse = simulate_ensemble(&mix, &SimOptions { noise_substeps: 2, ..small(8, 16) }).unwrap();
        let fine = simulate_ensemble(&mix, &small(8, 32)).unwrap();
        for p in 0..8 {
            for k in 0..16 {
                let a = coarse.db(p, k)[0];
                let b = fine.db(p, 2 * k)[0] + fine.db(p, 2 * k + 1)[0];
                assert!((a - b).abs() < 1e-14);
            }
            assert_eq!(coarse.db_terminal(p), fine.db_terminal(p));
        }
    }

    #[test]
    fn constant_drift_for_translates() {
        let mu = GaussianMixture::gaussian_1d(3.0, 1.0).unwrap();
        let ens = simulate_ensemble(&mu, &small(32, 16)).unwrap();
        for p in 0..32 {
            for k in 0..=16 {
                assert!((ens.v(p, k)[0] - 3.0).abs() < 1e-12);
            }
        }
        let e = energy_identities(&ens);
        assert_abs_diff_eq!(e.entropy_path.value, 4.5, epsilon = 1e-10);
        assert_abs_diff_eq!(e.deficit_path.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn standard_gaussian_paths() {
        let g = GaussianMixture::standard(1);
        let ens = simulate_ensemble(&g, &small(2000, 16)).unwrap();
        let e = energy_identities(&ens);
        assert_eq!((e.entropy_path.value, e.deficit_path.value), (0.0, 0.0));
        let d = martingale_diagnostics(&ens, &g, 4.0).unwrap();
        assert!(d.rows.iter().all(|r| r.q_resid.abs() < 1e-12 && r.qv_drift.abs() < 1e-12));
        let loc = localization_checks(&ens, &g, Estimate::exact(0.0), &LocalizationOptions::default()).unwrap();
        assert!(loc.dat_residual_max <= 3.0 * 1e-3f64.sqrt());
    }

    #[test]
    fn gaussian_comparison_is_equality() {
        let mu = GaussianMixture::gaussian_1d(0.0, 0.5).unwrap();
        let ens = simulate_ensemble(&mu, &small(200, 32)).unwrap();
        let d = martingale_diagnostics(&ens, &mu, 4.0).unwrap();
        for r in &d.rows {
            let m = -(-0.5 / (1.0 - r.t + 0.5 * r.t));
            assert_abs_diff_eq!(r.tr_m2.sqrt(), m, epsilon = 1e-12);
            assert!(r.comparison_gap.abs() < 1e-10);
        }
        assert!(d.comparison_ok);
    }

    #[test]
    fn gaussian_state_deficit_integral() {
        // δ(μ_t) = ½(1 − t − log(2 − t)) for γ_{0,1/2}; its integral is ½(3/2 − 2log2).
        let mu = GaussianMixture::gaussian_1d(0.0, 0.5).unwrap();
        for t in [0.0, 0.3, 0.9] {
            let d = state_deficit(&mu, t, &DVector::from_element(1, 0.4)).unwrap();
            assert_abs_diff_eq!(d.value, 0.5 * (1.0 - t - (2.0 - t).ln()), epsilon = 1e-12);
        }
        let exact = 0.5 * (1.5 - 2.0 * 2f64.ln());
        let ens = simulate_ensemble(&mu, &small(2000, 64)).unwrap();
        let loc = localization_checks(&ens, &mu, Estimate::exact(0.153_426_409_720_027_35), &LocalizationOptions::default())
            .unwrap();
        let direct = loc.integrated_state_deficit_direct.unwrap();
        assert!((direct.value - exact).abs() < 5e-3, "{direct:?}");
        assert!((loc.integrated_state_deficit.value - exact).abs() < 4.0 * loc.integrated_state_deficit.abs_error + 5e-3);
        assert!(loc.report.holds && loc.report_direct.unwrap().holds);
    }
}
