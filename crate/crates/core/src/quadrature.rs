//! Adaptive tensor-product Gauss–Kronrod cubature in one and two dimensions.
//!
//! Each region is integrated with the 15-point Kronrod rule (tensorized in 2D)
//! and the embedded 7-point Gauss rule; |K − G| per output component is the
//! local error bound. Regions with the largest normalized error are bisected
//! along their widest-error axis until every component meets
//! `max(abs_tol, rel_tol·|value|)` or the evaluation budget runs out.

use rayon::prelude::*;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Reference nodes on [-1, 1] with Kronrod and Gauss weights (Gauss weight 0 off the Gauss nodes).
fn rule() -> [(f64, f64, f64); 15] {
    let mut out = [(0.0, 0.0, 0.0); 15];
    let mut k = 0;
    for i in 0..7 {
        let wg = if i % 2 == 1 { WG[i / 2] } else { 0.0 };
        out[k] = (-XGK[i], WGK[i], wg);
        out[k + 1] = (XGK[i], WGK[i], wg);
        k += 2;
    }
    out[14] = (0.0, WGK[7], WG[3]);
    out
}

/// Axis-aligned box in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { lo, hi }
    }

    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    fn split(&self, axis: usize) -> (Region, Region) {
        let mid = 0.5 * (self.lo[axis] + self.hi[axis]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[axis] = mid;
        right.lo[axis] = mid;
        (left, right)
    }

    /// Split into equal pieces so that no side exceeds `max_width`.
    pub fn subdivide(&self, max_width: f64) -> Vec<Region> {
        let counts: Vec<usize> = (0..self.dim())
            .map(|a| ((self.width(a) / max_width).ceil() as usize).max(1))
            .collect();
        let mut out = vec![self.clone()];
        for (axis, &count) in counts.iter().enumerate() {
            let mut next = Vec::with_capacity(out.len() * count);
            for r in &out {
                let h = r.width(axis) / count as f64;
                for k in 0..count {
                    let mut piece = r.clone();
                    piece.lo[axis] = r.lo[axis] + k as f64 * h;
                    piece.hi[axis] = if k + 1 == count { r.hi[axis] } else { r.lo[axis] + (k + 1) as f64 * h };
                    next.push(piece);
                }
            }
            out = next;
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evaluations: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-8, rel_tol: 1e-10, max_evaluations: 20_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub evaluations: usize,
    pub regions: usize,
}

struct Evaluated {
    region: Region,
    value: Vec<f64>,
    error: Vec<f64>,
    /// Error attributable to each axis, used to pick the split direction.
    axis_error: Vec<f64>,
}

fn evaluate_region<F>(region: Region, outputs: usize, f: &F) -> Evaluated
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let nodes = rule();
    let dim = region.dim();
    let centre: Vec<f64> = (0..dim).map(|a| 0.5 * (region.lo[a] + region.hi[a])).collect();
    let half: Vec<f64> = (0..dim).map(|a| 0.5 * region.width(a)).collect();
    let mut kk = vec![0.0; outputs];
    let mut gg = vec![0.0; outputs];
    let mut buf = vec![0.0; outputs];
    let mut axis_error = vec![0.0; dim];
    match dim {
        1 => {
            for &(x, wk, wg) in &nodes {
                let p = [centre[0] + half[0] * x];
                f(&p, &mut buf);
                for c in 0..outputs {
                    kk[c] += wk * buf[c];
                    gg[c] += wg * buf[c];
                }
            }
            let vol = half[0];
            let mut error = vec![0.0; outputs];
            for c in 0..outputs {
                kk[c] *= vol;
                gg[c] *= vol;
                error[c] = (kk[c] - gg[c]).abs();
            }
            axis_error[0] = error.iter().cloned().fold(0.0, f64::max);
            Evaluated { region, value: kk, error, axis_error }
        }
        2 => {
            // kg: Kronrod in x, Gauss in y; gk: the reverse.
            let mut kg = vec![0.0; outputs];
            let mut gk = vec![0.0; outputs];
            for &(x, wkx, wgx) in &nodes {
                for &(y, wky, wgy) in &nodes {
                    let p = [centre[0] + half[0] * x, centre[1] + half[1] * y];
                    f(&p, &mut buf);
                    for c in 0..outputs {
                        let v = buf[c];
                        kk[c] += wkx * wky * v;
                        gg[c] += wgx * wgy * v;
                        kg[c] += wkx * wgy * v;
                        gk[c] += wgx * wky * v;
                    }
                }
            }
            let vol = half[0] * half[1];
            let mut error = vec![0.0; outputs];
            let (mut ex, mut ey) = (0.0_f64, 0.0_f64);
            for c in 0..outputs {
                kk[c] *= vol;
                gg[c] *= vol;
                kg[c] *= vol;
                gk[c] *= vol;
                error[c] = (kk[c] - gg[c]).abs();
                ex = ex.max((kk[c] - gk[c]).abs());
                ey = ey.max((kk[c] - kg[c]).abs());
            }
            axis_error[0] = ex;
            axis_error[1] = ey;
            Evaluated { region, value: kk, error, axis_error }
        }
        _ => unreachable!("cubature supports one or two dimensions"),
    }
}

fn points_per_region(dim: usize) -> usize {
    15usize.pow(dim as u32)
}

/// Integrate a vector-valued `f` over the union of `initial` regions.
pub fn integrate<F>(initial: Vec<Region>, outputs: usize, opts: &QuadOptions, f: F) -> Result<QuadResult>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    if initial.is_empty() {
        return Err(Error::DomainError("no integration regions".into()));
    }
    let dim = initial[0].dim();
    if !(1..=2).contains(&dim) || initial.iter().any(|r| r.dim() != dim) {
        return Err(Error::DomainError(format!("cubature supports dims 1 and 2, got {dim}")));
    }
    let per = points_per_region(dim);
    let mut evaluations = initial.len() * per;
    let mut regions: Vec<Evaluated> =
        initial.into_par_iter().map(|r| evaluate_region(r, outputs, &f)).collect();

    loop {
        let mut values = vec![0.0; outputs];
        let mut errors = vec![0.0; outputs];
        for r in &regions {
            for c in 0..outputs {
                values[c] += r.value[c];
                errors[c] += r.error[c];
            }
        }
        let tol: Vec<f64> = values.iter().map(|v| opts.abs_tol.max(opts.rel_tol * v.abs())).collect();
        if errors.iter().zip(&tol).all(|(e, t)| e <= t) {
            return Ok(QuadResult { values, errors, evaluations, regions: regions.len() });
        }

        let score = |r: &Evaluated| r.error.iter().zip(&tol).map(|(e, t)| e / t).fold(0.0, f64::max);
        let mut order: Vec<(usize, f64)> = regions.iter().enumerate().map(|(i, r)| (i, score(r))).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let total: f64 = order.iter().map(|o| o.1).sum();
        let mut chosen = Vec::new();
        let mut acc = 0.0;
        for &(i, s) in &order {
            if s <= 0.0 || (acc >= 0.5 * total && !chosen.is_empty()) {
                break;
            }
            let r = &regions[i].region;
            let axis = if dim == 2 && regions[i].axis_error[1] > regions[i].axis_error[0] { 1 } else { 0 };
            let scale = r.lo[axis].abs().max(r.hi[axis].abs()).max(1.0);
            if r.width(axis) < 1e-13 * scale {
                continue;
            }
            chosen.push((i, axis));
            acc += s;
        }
        if chosen.is_empty() {
            // Nothing left to refine: regions have collapsed to rounding level.
            return Ok(QuadResult { values, errors, evaluations, regions: regions.len() });
        }
        let new_evals = 2 * chosen.len() * per;
        if evaluations + new_evals > opts.max_evaluations {
            let worst = errors
                .iter()
                .zip(&tol)
                .map(|(e, t)| e / t)
                .fold(0.0, f64::max);
            return Err(Error::BudgetExceeded(format!(
                "cubature used {evaluations} evaluations; error is {worst:.3e} times the tolerance"
            )));
        }
        evaluations += new_evals;
        chosen.sort_by_key(|c| c.0);
        let pieces: Vec<Region> = chosen
            .iter()
            .flat_map(|&(i, axis)| {
                let (a, b) = regions[i].region.split(axis);
                [a, b]
            })
            .collect();
        let fresh: Vec<Evaluated> = pieces.into_par_iter().map(|r| evaluate_region(r, outputs, &f)).collect();
        let mut fresh = fresh.into_iter();
        let mut keep: Vec<Evaluated> = Vec::with_capacity(regions.len() + chosen.len());
        let mut next_chosen = chosen.iter().map(|c| c.0).peekable();
        for (i, r) in regions.into_iter().enumerate() {
            if next_chosen.peek() == Some(&i) {
                next_chosen.next();
                keep.push(fresh.next().unwrap());
                keep.push(fresh.next().unwrap());
            } else {
                keep.push(r);
            }
        }
        regions = keep;
    }
}

/// Cover the union of axis-aligned boxes `(centre, half_width, resolution)` with a grid of
/// cells, each subdivided so that no side exceeds twice the finest covering resolution.
pub fn cover_boxes(boxes: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<Region> {
    let dim = boxes[0].0.len();
    let mut edges: Vec<Vec<f64>> = vec![Vec::new(); dim];
    for (c, h, _) in boxes {
        for a in 0..dim {
            edges[a].push(c[a] - h[a]);
            edges[a].push(c[a] + h[a]);
        }
    }
    for e in &mut edges {
        e.sort_by(f64::total_cmp);
        e.dedup();
    }
    let mut cells = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        let lo: Vec<f64> = (0..dim).map(|a| edges[a][idx[a]]).collect();
        let hi: Vec<f64> = (0..dim).map(|a| edges[a][idx[a] + 1]).collect();
        let mid: Vec<f64> = (0..dim).map(|a| 0.5 * (lo[a] + hi[a])).collect();
        let resolution = boxes
            .iter()
            .filter(|(c, h, _)| (0..dim).all(|a| (mid[a] - c[a]).abs() <= h[a]))
            .map(|b| b.2)
            .fold(f64::INFINITY, f64::min);
        if resolution.is_finite() {
            cells.extend(Region::new(lo, hi).subdivide(2.0 * resolution));
        }
        let mut a = 0;
        loop {
            if a == dim {
                return cells;
            }
            idx[a] += 1;
            if idx[a] + 1 < edges[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_mass_1d() {
        let r = integrate(vec![Region::new(vec![-10.0], vec![10.0])], 2, &QuadOptions::default(), |x, out| {
            let p = (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt();
            out[0] = p;
            out[1] = p * x[0] * x[0];
        })
        .unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-12);
        assert!((r.values[1] - 1.0).abs() < 1e-12);
        assert!(r.errors[0] <= 1e-8);
    }

    #[test]
    fn polynomial_2d_is_exact() {
        let r = integrate(vec![Region::new(vec![0.0, -1.0], vec![2.0, 3.0])], 1, &QuadOptions::default(), |x, out| {
            out[0] = x[0] * x[0] * x[1] + 3.0 * x[1].powi(4);
        })
        .unwrap();
        // ∫0^2 ∫-1^3 x²y + 3y⁴ dy dx = (8/3)(4) + 2·(3/5)(243+1)
        let exact = 8.0 / 3.0 * 4.0 + 2.0 * 0.6 * 244.0;
        assert!((r.values[0] - exact).abs() < 1e-10);
    }

    #[test]
    fn peaked_integrand_refines() {
        let r = integrate(vec![Region::new(vec![-1.0], vec![1.0])], 1, &QuadOptions::default(), |x, out| {
            out[0] = 1.0 / (1e-4 + x[0] * x[0]);
        })
        .unwrap();
        let exact = 2.0 * (1.0 / 1e-2) * (1.0 / 1e-2_f64).atan();
        assert!((r.values[0] - exact).abs() < 1e-7 * exact);
    }

    #[test]
    fn budget_is_enforced() {
        let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 0.0, max_evaluations: 200 };
        let res = integrate(vec![Region::new(vec![0.0], vec![1.0])], 1, &opts, |x, out| out[0] = x[0].sqrt());
        assert!(matches!(res, Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn cover_skips_gaps() {
        let boxes = vec![(vec![0.0], vec![8.0], 1.0), (vec![100.0], vec![8.0], 1.0)];
        let cells = cover_boxes(&boxes);
        let total: f64 = cells.iter().map(|c| c.hi[0] - c.lo[0]).sum();
        assert!((total - 32.0).abs() < 1e-12);
        assert!(cells.iter().all(|c| c.hi[0] - c.lo[0] <= 2.0 + 1e-12));
    }
}
