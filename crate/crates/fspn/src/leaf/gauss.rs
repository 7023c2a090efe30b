//! Gaussian mixture leaves and box-probability quadrature.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;

use crate::model::interval::Interval;

const SQRT_TAU: f64 = 2.506_628_274_631_000_5; // sqrt(2*pi)

fn std_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).unwrap())
}

pub(crate) fn phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

fn phi_inv(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * SQRT_TAU)
}

/// Univariate Gaussian mixture truncated to `[domain_lo, domain_hi]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
    pub domain_lo: f64,
    pub domain_hi: f64,
    /// Mixture mass inside the domain; recomputed by `prepare`.
    #[serde(skip)]
    norm: f64,
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<f64>,
        stddevs: Vec<f64>,
        domain_lo: f64,
        domain_hi: f64,
    ) -> Result<Self, String> {
        let mut g = Self { weights, means, stddevs, domain_lo, domain_hi, norm: 0.0 };
        g.prepare()?;
        Ok(g)
    }

    pub fn prepare(&mut self) -> Result<(), String> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.stddevs.len() != k {
            return Err("gaussian mixture has inconsistent component arrays".into());
        }
        if self.stddevs.iter().any(|&s| !(s > 0.0)) {
            return Err("gaussian mixture has a non-positive stddev".into());
        }
        if !(self.domain_lo < self.domain_hi) {
            return Err("gaussian mixture domain is empty".into());
        }
        self.norm = self.raw_cdf(self.domain_hi) - self.raw_cdf(self.domain_lo);
        if !(self.norm > 1e-300) {
            return Err("gaussian mixture has no mass inside its domain".into());
        }
        Ok(())
    }

    fn raw_cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stddevs)
            .map(|((&w, &m), &s)| w * phi((x - m) / s))
            .sum()
    }

    pub fn mass(&self, iv: &Interval) -> f64 {
        let lo = iv.lo.max(self.domain_lo);
        let hi = iv.hi.min(self.domain_hi);
        if hi <= lo {
            return 0.0;
        }
        ((self.raw_cdf(hi) - self.raw_cdf(lo)) / self.norm).clamp(0.0, 1.0)
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < self.domain_lo || x > self.domain_hi {
            return 0.0;
        }
        let raw: f64 = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.stddevs)
            .map(|((&w, &m), &s)| w * normal_pdf(x, m, s))
            .sum();
        raw / self.norm
    }

    pub fn param_count(&self) -> usize {
        3 * self.weights.len()
    }

    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.stddevs.len() != k {
            out.push("gaussian mixture has inconsistent component arrays".into());
            return out;
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            out.push("gaussian mixture has a non-positive weight".into());
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            out.push(format!("gaussian mixture weights sum {total:.12} != 1"));
        }
        if self.stddevs.iter().any(|&s| !(s > 0.0)) {
            out.push("gaussian mixture has a non-positive stddev".into());
        }
        if !(self.domain_lo < self.domain_hi) {
            out.push("gaussian mixture domain is empty".into());
        }
        out
    }
}

/// Multivariate Gaussian mixture with full covariance, truncated to the
/// domain box. Discrete dimensions hold integer codes and are treated as
/// unit-width boxes so that lattice sums stay consistent with box masses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiGaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    pub discrete_dims: Vec<bool>,
    #[serde(skip)]
    prepared: Option<Prepared>,
}

#[derive(Debug, Clone)]
struct Prepared {
    covs: Vec<DMatrix<f64>>,
    chols: Vec<DMatrix<f64>>,
    norm: f64,
}

impl MultiGaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
        domain_lo: Vec<f64>,
        domain_hi: Vec<f64>,
        discrete_dims: Vec<bool>,
    ) -> Result<Self, String> {
        let mut g = Self {
            weights,
            means,
            covariances,
            domain_lo,
            domain_hi,
            discrete_dims,
            prepared: None,
        };
        g.prepare()?;
        Ok(g)
    }

    pub fn dims(&self) -> usize {
        self.domain_lo.len()
    }

    /// Domain box after widening discrete dimensions by half a unit.
    fn effective_domain(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self
            .domain_lo
            .iter()
            .zip(&self.discrete_dims)
            .map(|(&l, &d)| if d { l - 0.5 } else { l })
            .collect();
        let hi = self
            .domain_hi
            .iter()
            .zip(&self.discrete_dims)
            .map(|(&h, &d)| if d { h + 0.5 } else { h })
            .collect();
        (lo, hi)
    }

    pub fn prepare(&mut self) -> Result<(), String> {
        let k = self.weights.len();
        let d = self.dims();
        if k == 0 {
            return Err("multivariate mixture has no components".into());
        }
        if d == 0 || self.domain_hi.len() != d || self.discrete_dims.len() != d {
            return Err("multivariate mixture has inconsistent domain arrays".into());
        }
        if self.means.len() != k || self.covariances.len() != k {
            return Err("multivariate mixture has inconsistent component arrays".into());
        }
        if d > MAX_GENZ_DIMS {
            return Err(format!("multivariate mixture dimension {d} exceeds quadrature limit"));
        }
        let mut covs = Vec::with_capacity(k);
        let mut chols = Vec::with_capacity(k);
        for c in 0..k {
            if self.means[c].len() != d {
                return Err("multivariate mixture mean has wrong dimension".into());
            }
            let rows = &self.covariances[c];
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err("multivariate mixture covariance has wrong shape".into());
            }
            let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
            let chol = cholesky_with_jitter(&m)
                .ok_or_else(|| "multivariate mixture covariance is not positive definite".to_string())?;
            covs.push(m);
            chols.push(chol);
        }
        let (dlo, dhi) = self.effective_domain();
        let mut norm = 0.0;
        for c in 0..k {
            norm += self.weights[c] * self.component_box(c, &chols[c], &dlo, &dhi);
        }
        if !(norm > 1e-300) {
            return Err("multivariate mixture has no mass inside its domain".into());
        }
        self.prepared = Some(Prepared { covs, chols, norm });
        Ok(())
    }

    fn component_box(&self, c: usize, chol: &DMatrix<f64>, lo: &[f64], hi: &[f64]) -> f64 {
        let mean = &self.means[c];
        let rel_lo: Vec<f64> = lo.iter().zip(mean).map(|(&b, &m)| b - m).collect();
        let rel_hi: Vec<f64> = hi.iter().zip(mean).map(|(&b, &m)| b - m).collect();
        mvn_box_prob(chol, &rel_lo, &rel_hi)
    }

    fn prepared(&self) -> &Prepared {
        self.prepared
            .as_ref()
            .expect("multivariate mixture used before prepare()")
    }

    pub fn mass(&self, bounds: &[Interval]) -> f64 {
        let prep = self.prepared();
        let (dlo, dhi) = self.effective_domain();
        let mut lo = Vec::with_capacity(bounds.len());
        let mut hi = Vec::with_capacity(bounds.len());
        for (i, iv) in bounds.iter().enumerate() {
            let (l, h) = if self.discrete_dims[i] {
                (iv.lo - 0.5, iv.hi + 0.5)
            } else {
                (iv.lo, iv.hi)
            };
            let l = l.max(dlo[i]);
            let h = h.min(dhi[i]);
            if h <= l {
                return 0.0;
            }
            lo.push(l);
            hi.push(h);
        }
        let raw: f64 = (0..self.weights.len())
            .map(|c| self.weights[c] * self.component_box(c, &prep.chols[c], &lo, &hi))
            .sum();
        (raw / prep.norm).clamp(0.0, 1.0)
    }

    /// Hybrid point evaluation: density along continuous dimensions times the
    /// unit-box mass of discrete dimensions (conditioned on the continuous part).
    pub fn point(&self, x: &[f64]) -> f64 {
        let prep = self.prepared();
        let (dlo, dhi) = self.effective_domain();
        let cont: Vec<usize> = (0..self.dims()).filter(|&i| !self.discrete_dims[i]).collect();
        let disc: Vec<usize> = (0..self.dims()).filter(|&i| self.discrete_dims[i]).collect();
        for &i in &cont {
            if x[i] < dlo[i] || x[i] > dhi[i] {
                return 0.0;
            }
        }
        let mut disc_lo = Vec::with_capacity(disc.len());
        let mut disc_hi = Vec::with_capacity(disc.len());
        for &i in &disc {
            let l = (x[i] - 0.5).max(dlo[i]);
            let h = (x[i] + 0.5).min(dhi[i]);
            if h <= l {
                return 0.0;
            }
            disc_lo.push(l);
            disc_hi.push(h);
        }
        let mut raw = 0.0;
        for c in 0..self.weights.len() {
            raw += self.weights[c] * self.component_point(c, prep, x, &cont, &disc, &disc_lo, &disc_hi);
        }
        raw / prep.norm
    }

    fn component_point(
        &self,
        c: usize,
        prep: &Prepared,
        x: &[f64],
        cont: &[usize],
        disc: &[usize],
        disc_lo: &[f64],
        disc_hi: &[f64],
    ) -> f64 {
        let mean = &self.means[c];
        if disc.is_empty() {
            return mvn_pdf(&prep.chols[c], x, mean, cont);
        }
        if cont.is_empty() {
            let rel_lo: Vec<f64> = disc_lo.iter().zip(disc).map(|(&b, &i)| b - mean[i]).collect();
            let rel_hi: Vec<f64> = disc_hi.iter().zip(disc).map(|(&b, &i)| b - mean[i]).collect();
            return mvn_box_prob(&prep.chols[c], &rel_lo, &rel_hi);
        }
        // Condition the discrete block on the continuous coordinates.
        let cov = &prep.covs[c];
        let nc = cont.len();
        let nd = disc.len();
        let s_cc = DMatrix::from_fn(nc, nc, |i, j| cov[(cont[i], cont[j])]);
        let s_dc = DMatrix::from_fn(nd, nc, |i, j| cov[(disc[i], cont[j])]);
        let s_dd = DMatrix::from_fn(nd, nd, |i, j| cov[(disc[i], disc[j])]);
        let chol_cc = match cholesky_with_jitter(&s_cc) {
            Some(l) => l,
            None => return 0.0,
        };
        let diff = DVector::from_fn(nc, |i, _| x[cont[i]] - mean[cont[i]]);
        let solved = chol_solve(&chol_cc, &diff);
        let quad = diff.dot(&solved);
        let log_det: f64 = (0..nc).map(|i| chol_cc[(i, i)].ln()).sum();
        let pdf_c = (-0.5 * quad - log_det - 0.5 * nc as f64 * (2.0 * std::f64::consts::PI).ln()).exp();
        let mu_cond = {
            let adj = &s_dc * &solved;
            DVector::from_fn(nd, |i, _| mean[disc[i]] + adj[i])
        };
        let sigma_cond = &s_dd - &s_dc * chol_solve_matrix(&chol_cc, &s_dc.transpose());
        let chol_cond = match cholesky_with_jitter(&sigma_cond) {
            Some(l) => l,
            None => return 0.0,
        };
        let rel_lo: Vec<f64> = disc_lo.iter().enumerate().map(|(i, &b)| b - mu_cond[i]).collect();
        let rel_hi: Vec<f64> = disc_hi.iter().enumerate().map(|(i, &b)| b - mu_cond[i]).collect();
        pdf_c * mvn_box_prob(&chol_cond, &rel_lo, &rel_hi)
    }

    pub fn param_count(&self) -> usize {
        let d = self.dims();
        self.weights.len() * (1 + d + d * (d + 1) / 2)
    }

    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.covariances.len() != k {
            out.push("multivariate mixture has inconsistent component arrays".into());
            return out;
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            out.push("multivariate mixture has a non-positive weight".into());
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            out.push(format!("multivariate mixture weights sum {total:.12} != 1"));
        }
        let d = self.dims();
        for rows in &self.covariances {
            for i in 0..d.min(rows.len()) {
                for j in 0..d.min(rows[i].len()) {
                    if (rows[i][j] - rows[j][i]).abs() > 1e-9 * (1.0 + rows[i][j].abs()) {
                        out.push("multivariate mixture covariance is not symmetric".into());
                        return out;
                    }
                }
            }
        }
        if self.prepared.is_none() {
            out.push("multivariate mixture is unprepared".into());
        }
        out
    }
}

/// Density of N(mean, LL^T) at the coordinates `x[idx]`.
fn mvn_pdf(chol: &DMatrix<f64>, x: &[f64], mean: &[f64], idx: &[usize]) -> f64 {
    let d = idx.len();
    let diff = DVector::from_fn(d, |i, _| x[idx[i]] - mean[idx[i]]);
    let solved = chol_solve(chol, &diff);
    let quad = diff.dot(&solved);
    let log_det: f64 = (0..d).map(|i| chol[(i, i)].ln()).sum();
    (-0.5 * quad - log_det - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()).exp()
}

/// Solve (LL^T) x = b by forward then backward substitution.
fn chol_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * y[j];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in i + 1..n {
            s -= l[(j, i)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

fn chol_solve_matrix(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.nrows(), b.ncols());
    for c in 0..b.ncols() {
        let col = chol_solve(l, &b.column(c).into_owned());
        out.set_column(c, &col);
    }
    out
}

fn cholesky_with_jitter(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c.l());
    }
    let d = m.nrows();
    let scale = (0..d).map(|i| m[(i, i)].abs()).sum::<f64>().max(1e-12) / d as f64;
    let mut jitter = scale * 1e-12;
    for _ in 0..10 {
        let mut jittered = m.clone();
        for i in 0..d {
            jittered[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Some(c.l());
        }
        jitter *= 10.0;
    }
    None
}

const MAX_GENZ_DIMS: usize = 13;
const GENZ_POINTS: usize = 2048;
const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Probability that N(0, LL^T) falls in the box [lo, hi], by sequential
/// conditioning over a fixed low-discrepancy point set with antithetics.
/// Deterministic; accuracy well inside 1e-4 for the dimensions in use.
pub(crate) fn mvn_box_prob(chol: &DMatrix<f64>, lo: &[f64], hi: &[f64]) -> f64 {
    let d = lo.len();
    if d == 0 {
        return 1.0;
    }
    let l00 = chol[(0, 0)];
    let d1 = phi(lo[0] / l00);
    let e1 = phi(hi[0] / l00);
    if d == 1 {
        return (e1 - d1).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut y = vec![0.0; d - 1];
    for idx in 0..GENZ_POINTS {
        for flip in [false, true] {
            let mut dcur = d1;
            let mut ecur = e1;
            let mut f = (ecur - dcur).max(0.0);
            for i in 1..d {
                let mut w = halton(idx as u64 + 1, PRIMES[i - 1]);
                if flip {
                    w = 1.0 - w;
                }
                let z = (dcur + w * (ecur - dcur)).clamp(1e-15, 1.0 - 1e-15);
                y[i - 1] = phi_inv(z);
                let shift: f64 = (0..i).map(|j| chol[(i, j)] * y[j]).sum();
                let lii = chol[(i, i)];
                dcur = phi((lo[i] - shift) / lii);
                ecur = phi((hi[i] - shift) / lii);
                f *= (ecur - dcur).max(0.0);
            }
            sum += f;
        }
    }
    (sum / (2.0 * GENZ_POINTS as f64)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn univariate_mixture_mass_and_normalization() {
        let g = GaussianMixture::new(vec![0.4, 0.6], vec![-1.0, 2.0], vec![0.5, 1.0], -10.0, 10.0)
            .unwrap();
        let full = g.mass(&Interval::closed(-10.0, 10.0));
        assert!((full - 1.0).abs() < 1e-12);
        let a = g.mass(&Interval::closed(-10.0, 0.0));
        let b = g.mass(&Interval::closed(0.0, 10.0));
        assert!((a + b - 1.0).abs() < 1e-12);
        assert!(g.density(-1.0) > g.density(5.0));
    }

    #[test]
    fn bivariate_orthant_matches_monte_carlo() {
        // rho = 0.9 standard bivariate normal, box [0, inf)^2 clipped to the
        // domain; closed form is 1/4 + asin(rho)/(2 pi).
        let rho: f64 = 0.9;
        let g = MultiGaussianMixture::new(
            vec![1.0],
            vec![vec![0.0, 0.0]],
            vec![vec![vec![1.0, rho], vec![rho, 1.0]]],
            vec![-50.0, -50.0],
            vec![50.0, 50.0],
            vec![false, false],
        )
        .unwrap();
        let got = g.mass(&[Interval::closed(0.0, 50.0), Interval::closed(0.0, 50.0)]);

        // Monte Carlo oracle, 1e6 samples with a frozen seed.
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
        let mut hits = 0u64;
        let n = 1_000_000;
        let a = rho;
        let b = (1.0 - rho * rho).sqrt();
        for _ in 0..n {
            let u: f64 = box_muller(&mut rng);
            let v: f64 = box_muller(&mut rng);
            let x = u;
            let y = a * u + b * v;
            if x >= 0.0 && y >= 0.0 {
                hits += 1;
            }
        }
        let mc = hits as f64 / n as f64;
        let exact = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
        assert!((got - mc).abs() < 0.01, "quadrature {got} vs mc {mc}");
        assert!((got - exact).abs() < 1e-3, "quadrature {got} vs exact {exact}");
    }

    fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[test]
    fn full_domain_mass_is_exactly_one() {
        let g = MultiGaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![1.0, 2.0], vec![-1.0, 0.0]],
            vec![
                vec![vec![1.0, 0.3], vec![0.3, 2.0]],
                vec![vec![0.5, -0.1], vec![-0.1, 0.8]],
            ],
            vec![-8.0, -8.0],
            vec![8.0, 8.0],
            vec![false, false],
        )
        .unwrap();
        let full = g.mass(&[Interval::closed(-8.0, 8.0), Interval::closed(-8.0, 8.0)]);
        assert_eq!(full, 1.0);
    }

    #[test]
    fn discrete_dims_sum_to_box_mass() {
        // one discrete dim (3 codes), one continuous: summing unit boxes over
        // the lattice equals the full-domain mass.
        let g = MultiGaussianMixture::new(
            vec![1.0],
            vec![vec![1.0, 0.0]],
            vec![vec![vec![0.8, 0.2], vec![0.2, 1.0]]],
            vec![0.0, -5.0],
            vec![2.0, 5.0],
            vec![true, false],
        )
        .unwrap();
        let mut total = 0.0;
        for v in 0..3 {
            total += g.mass(&[Interval::point(v as f64), Interval::closed(-5.0, 5.0)]);
        }
        assert!((total - 1.0).abs() < 2e-4, "lattice sum {total}");
    }

    #[test]
    fn hybrid_point_integrates_to_discrete_mass() {
        let g = MultiGaussianMixture::new(
            vec![1.0],
            vec![vec![1.0, 0.0]],
            vec![vec![vec![0.8, 0.2], vec![0.2, 1.0]]],
            vec![0.0, -5.0],
            vec![2.0, 5.0],
            vec![true, false],
        )
        .unwrap();
        // integrate point(v, y) over y by trapezoid; should match mass of the box
        let v = 1.0;
        let steps = 4000;
        let (lo, hi) = (-5.0, 5.0);
        let hstep = (hi - lo) / steps as f64;
        let mut acc = 0.0;
        for i in 0..=steps {
            let yv = lo + i as f64 * hstep;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            acc += w * g.point(&[v, yv]);
        }
        acc *= hstep;
        let direct = g.mass(&[Interval::point(v), Interval::closed(lo, hi)]);
        assert!((acc - direct).abs() < 1e-3, "integral {acc} vs mass {direct}");
    }
}
