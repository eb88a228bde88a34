//! Exact enumeration of small coupled systems.
//!
//! A realization draws the Gaussian parts `X¹, X²` of both Hamiltonians
//! over all `2^N` configurations, with
//! `Cov(X^j(σ), X^{j'}(τ)) = N ξ_{j,j'}(R(σ, τ))`, together with the site
//! fields `h_i¹, h_i²`. Configuration `x` has `σ_i = −1` exactly when bit
//! `i` of `x` is set.
//!
//! Two samplers are available. The tensor scheme draws the interaction
//! tensors of each order `2p` as `√t_p G + √(1 − t_p) G^j` with a shared
//! `G`, folds every index tuple into the Walsh coefficient of its parity
//! set and recovers all energies with one fast Walsh–Hadamard transform.
//! The configuration scheme factors the exact `2^{N+1}`-dimensional
//! covariance by pivoted Cholesky and handles any mixture.
//!
//! Random streams are keyed by `(seed, realization, component)`, so every
//! report is independent of scheduling and thread count.

mod enumerate;
mod gg;
mod stats;

pub use enumerate::{
    coupled_free_energy, exact_shell_energies, free_energy_concentration, gibbs_transforms, overlap_statistics,
    ConcentrationReport, FreeEnergyReport, GibbsTransforms, OverlapReport, ShellEnergies,
};
pub use gg::{gg_residuals, FunctionSpec, GgEstimate, GgFunctional, GgReport};
pub use stats::MeanSe;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::mixture::CoupledModelSpec;
use crate::{Error, Result};

/// Largest `N` for the tensor scheme.
pub const MAX_TENSOR_N: usize = 20;
/// Largest interaction order `2p` for the tensor scheme.
pub const MAX_TENSOR_ORDER: usize = 4;
/// Largest `N` for the configuration-space scheme.
pub const MAX_CONFIG_N: usize = 10;

/// Disorder sampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Tensor,
    ConfigCholesky,
}

/// One draw of both Hamiltonians.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization {
    pub n: usize,
    pub scheme: Scheme,
    pub seed: u64,
    pub realization: u64,
    /// `X¹(x)`, `X²(x)` over all configurations, fields excluded.
    pub energy: [Vec<f64>; 2],
    /// `h_i¹`, `h_i²`.
    pub field: [Vec<f64>; 2],
}

impl DisorderRealization {
    /// `H^j(x) = X^j(x) + Σ_i h_i^j σ_i` for `j ∈ {1, 2}`.
    pub fn hamiltonian(&self, j: usize) -> Vec<f64> {
        let e = &self.energy[j - 1];
        let h = &self.field[j - 1];
        let total: f64 = h.iter().sum();
        e.iter()
            .enumerate()
            .map(|(x, &v)| {
                let mut f = total;
                for (i, hi) in h.iter().enumerate() {
                    if x >> i & 1 == 1 {
                        f -= 2.0 * hi;
                    }
                }
                v + f
            })
            .collect()
    }
}

const COMPONENTS: u64 = 64;
const FIELD_STREAM: u64 = 0;
const CONFIG_STREAM: u64 = 1;

fn stream(seed: u64, realization: u64, component: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization * COMPONENTS + component);
    rng
}

/// Streams of the shared and the two independent tensors of order `2(p+1)`.
fn tensor_streams(p: usize) -> [u64; 3] {
    let b = 2 + 3 * p as u64;
    [b, b + 1, b + 2]
}

/// Unnormalized in-place Walsh–Hadamard transform.
pub(crate) fn fwht(a: &mut [f64]) {
    let n = a.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (a[j], a[j + h]);
                a[j] = x + y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
}

/// Low-rank factor `K ≈ L Lᵀ` stored column by column.
#[derive(Debug, Clone)]
struct LowRankFactor {
    columns: Vec<Vec<f64>>,
}

impl LowRankFactor {
    /// Pivoted Cholesky of the joint covariance of `(X¹(x), X²(x))`.
    fn joint(coupled: &CoupledModelSpec, n: usize) -> Result<Self> {
        let size = 1usize << n;
        let dim = 2 * size;
        // kernel[j][j'][d] = N ξ_{j,j'}(1 − 2d/N)
        let mut kernel = [[vec![0.0; n + 1], vec![0.0; n + 1]], [vec![0.0; n + 1], vec![0.0; n + 1]]];
        for (a, row) in kernel.iter_mut().enumerate() {
            for (b, k) in row.iter_mut().enumerate() {
                for (d, v) in k.iter_mut().enumerate() {
                    let r = 1.0 - 2.0 * d as f64 / n as f64;
                    *v = n as f64 * coupled.xi_jj(a + 1, b + 1, r, 0);
                }
            }
        }
        let entry = |i: usize, j: usize| -> f64 {
            let (a, x) = (i / size, i % size);
            let (b, y) = (j / size, j % size);
            kernel[a][b][(x ^ y).count_ones() as usize]
        };
        let mut diag: Vec<f64> = (0..dim).map(|i| entry(i, i)).collect();
        let max0 = diag.iter().copied().fold(0.0, f64::max);
        let tol = 1e-12 * max0.max(f64::MIN_POSITIVE);
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut pivoted = vec![false; dim];
        loop {
            let (piv, &dmax) = diag
                .iter()
                .enumerate()
                .filter(|(i, _)| !pivoted[*i])
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap_or((0, &0.0));
            if dmax <= tol || columns.len() == dim {
                break;
            }
            pivoted[piv] = true;
            let s = dmax.sqrt();
            let mut col = vec![0.0; dim];
            for (i, c) in col.iter_mut().enumerate() {
                if pivoted[i] && i != piv {
                    continue;
                }
                let mut v = entry(i, piv);
                for prev in &columns {
                    v -= prev[i] * prev[piv];
                }
                *c = v / s;
            }
            for (i, c) in col.iter().enumerate() {
                if !pivoted[i] {
                    diag[i] -= c * c;
                }
            }
            diag[piv] = 0.0;
            columns.push(col);
        }
        if let Some(d) = diag.iter().find(|&&d| d < -1e-8 * max0.max(1.0)) {
            return Err(Error::NotPsd(format!("residual diagonal {d} in configuration covariance")));
        }
        Ok(Self { columns })
    }
}

/// Prepared sampler for one coupled model and system size.
#[derive(Debug, Clone)]
pub struct DisorderSampler {
    coupled: CoupledModelSpec,
    n: usize,
    scheme: Scheme,
    factor: Option<LowRankFactor>,
}

impl DisorderSampler {
    /// Checks the size guards and, for the configuration scheme, factors
    /// the covariance once.
    pub fn new(coupled: &CoupledModelSpec, n: usize, scheme: Scheme) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("N must be positive".into()));
        }
        let factor = match scheme {
            Scheme::Tensor => {
                if n > MAX_TENSOR_N {
                    return Err(Error::Guard(format!("tensor scheme supports N <= {MAX_TENSOR_N}, got {n}")));
                }
                let order = 2 * coupled.spec1.max_order().max(coupled.spec2.max_order());
                if order > MAX_TENSOR_ORDER {
                    return Err(Error::Guard(format!(
                        "tensor scheme supports interaction order <= {MAX_TENSOR_ORDER}, got {order}"
                    )));
                }
                None
            }
            Scheme::ConfigCholesky => {
                if n > MAX_CONFIG_N {
                    return Err(Error::Guard(format!("config-cholesky scheme supports N <= {MAX_CONFIG_N}, got {n}")));
                }
                Some(LowRankFactor::joint(coupled, n)?)
            }
        };
        Ok(Self { coupled: coupled.clone(), n, scheme, factor })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn coupled(&self) -> &CoupledModelSpec {
        &self.coupled
    }

    /// Rank of the configuration-space factor, if any.
    pub fn factor_rank(&self) -> Option<usize> {
        self.factor.as_ref().map(|f| f.columns.len())
    }

    /// Draws realization `realization` of the stream family `seed`.
    pub fn sample(&self, seed: u64, realization: u64) -> DisorderRealization {
        let n = self.n;
        let energy = match &self.factor {
            None => self.tensor_energies(seed, realization),
            Some(f) => {
                let size = 1usize << n;
                let mut rng = stream(seed, realization, CONFIG_STREAM);
                let mut x = vec![0.0; 2 * size];
                for col in &f.columns {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    for (xi, ci) in x.iter_mut().zip(col) {
                        *xi += z * ci;
                    }
                }
                let x2 = x.split_off(size);
                [x, x2]
            }
        };
        let field = self.fields(seed, realization);
        DisorderRealization { n, scheme: self.scheme, seed, realization, energy, field }
    }

    fn fields(&self, seed: u64, realization: u64) -> [Vec<f64>; 2] {
        let f = &self.coupled.field;
        let mut rng = stream(seed, realization, FIELD_STREAM);
        let rc = (1.0 - f.corr * f.corr).max(0.0).sqrt();
        let mut h1 = Vec::with_capacity(self.n);
        let mut h2 = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            h1.push(f.mean1 + f.std1 * z1);
            h2.push(f.mean2 + f.std2 * (f.corr * z1 + rc * z2));
        }
        [h1, h2]
    }

    fn tensor_energies(&self, seed: u64, realization: u64) -> [Vec<f64>; 2] {
        let n = self.n;
        let size = 1usize << n;
        let mut c = [vec![0.0; size], vec![0.0; size]];
        let b1 = self.coupled.spec1.betas();
        let b2 = self.coupled.spec2.betas();
        let t = self.coupled.t();
        for p in 0..t.len() {
            let (beta1, beta2) = (b1[p], b2[p]);
            if beta1 == 0.0 && beta2 == 0.0 {
                continue;
            }
            let order = 2 * (p + 1);
            let scale = (n as f64).powf(-(order as f64 - 1.0) / 2.0);
            let (ws, wi) = (t[p].sqrt(), (1.0 - t[p]).sqrt());
            let [s0, s1, s2] = tensor_streams(p);
            let mut shared = stream(seed, realization, s0);
            let mut ind = [stream(seed, realization, s1), stream(seed, realization, s2)];
            let mut idx = vec![0usize; order];
            let total = n.pow(order as u32);
            for _ in 0..total {
                let mask = idx.iter().fold(0usize, |m, &i| m ^ (1 << i));
                let gs: f64 = StandardNormal.sample(&mut shared);
                for (j, beta) in [beta1, beta2].into_iter().enumerate() {
                    let gi: f64 = StandardNormal.sample(&mut ind[j]);
                    c[j][mask] += scale * beta * (ws * gs + wi * gi);
                }
                for d in idx.iter_mut() {
                    *d += 1;
                    if *d < n {
                        break;
                    }
                    *d = 0;
                }
            }
        }
        for cj in c.iter_mut() {
            fwht(cj);
        }
        c
    }
}

/// One realization drawn with `realization = 0`.
pub fn sample_disorder(coupled: &CoupledModelSpec, n: usize, seed: u64, scheme: Scheme) -> Result<DisorderRealization> {
    Ok(DisorderSampler::new(coupled, n, scheme)?.sample(seed, 0))
}
