//! Gibbs quantities of single realizations and their disorder averages.

use rayon::prelude::*;
use serde::Serialize;

use super::stats::{mean_var, MeanSe};
use super::{fwht, DisorderRealization, DisorderSampler, Scheme};
use crate::mixture::CoupledModelSpec;
use crate::{Error, Result};

/// Largest `N` for the `4^N` pair sweep.
pub const MAX_SWEEP_N: usize = 13;

/// Fast-path threshold on the spread of each energy table.
const SPREAD_LIMIT: f64 = 300.0;

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Ascending shell grid `u_i = −1 + 2i/N`; shell `i` holds pairs at
/// Hamming distance `N − i`.
fn shell_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect()
}

/// Per-shell log partition sums of one realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellEnergies {
    pub n: usize,
    /// Attainable overlaps, ascending.
    pub u: Vec<f64>,
    /// `log Σ_{R(σ,τ) = u} exp(H¹(σ) + H²(τ))`.
    pub log_shell: Vec<f64>,
    /// `log Z¹`, `log Z²`.
    pub log_z: [f64; 2],
}

impl ShellEnergies {
    /// `|Σ_u shell / (Z¹ Z²) − 1|`.
    pub fn identity_error(&self) -> f64 {
        (log_sum_exp(&self.log_shell) - self.log_z[0] - self.log_z[1]).exp_m1().abs()
    }
}

/// Single sweep over all `4^N` pairs accumulating each shell.
pub fn exact_shell_energies(real: &DisorderRealization) -> Result<ShellEnergies> {
    let n = real.n;
    if n > MAX_SWEEP_N {
        return Err(Error::Guard(format!("pair sweep supports N <= {MAX_SWEEP_N}, got {n}")));
    }
    let h1 = real.hamiltonian(1);
    let h2 = real.hamiltonian(2);
    let log_z = [log_sum_exp(&h1), log_sum_exp(&h2)];
    let size = h1.len();
    let chunk = (size / 64).max(1);
    let spread = |h: &[f64]| {
        let (lo, hi) = h.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        (hi - lo, hi)
    };
    let (s1, m1) = spread(&h1);
    let (s2, m2) = spread(&h2);
    let by_distance: Vec<f64> = if s1 < SPREAD_LIMIT && s2 < SPREAD_LIMIT {
        let e1: Vec<f64> = h1.iter().map(|h| (h - m1).exp()).collect();
        let e2: Vec<f64> = h2.iter().map(|h| (h - m2).exp()).collect();
        let parts: Vec<Vec<f64>> = (0..size)
            .into_par_iter()
            .step_by(chunk)
            .map(|start| {
                let mut total = vec![0.0; n + 1];
                let mut acc = vec![0.0; n + 1];
                for x in start..(start + chunk).min(size) {
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    for (y, w) in e2.iter().enumerate() {
                        acc[(x ^ y).count_ones() as usize] += w;
                    }
                    for (t, a) in total.iter_mut().zip(&acc) {
                        *t += e1[x] * a;
                    }
                }
                total
            })
            .collect();
        let mut total = vec![0.0; n + 1];
        for p in &parts {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total.iter().map(|s| s.ln() + m1 + m2).collect()
    } else {
        let parts: Vec<Vec<(f64, f64)>> = (0..size)
            .into_par_iter()
            .step_by(chunk)
            .map(|start| {
                let mut acc = vec![(f64::NEG_INFINITY, 0.0); n + 1];
                for x in start..(start + chunk).min(size) {
                    for (y, hy) in h2.iter().enumerate() {
                        let v = h1[x] + hy;
                        let (m, s) = &mut acc[(x ^ y).count_ones() as usize];
                        if v > *m {
                            *s = *s * (*m - v).exp() + 1.0;
                            *m = v;
                        } else {
                            *s += (v - *m).exp();
                        }
                    }
                }
                acc
            })
            .collect();
        (0..=n)
            .map(|d| {
                let m = parts.iter().map(|p| p[d].0).fold(f64::NEG_INFINITY, f64::max);
                m + parts.iter().map(|p| p[d].1 * (p[d].0 - m).exp()).sum::<f64>().ln()
            })
            .collect()
    };
    let log_shell = by_distance.into_iter().rev().collect();
    Ok(ShellEnergies { n, u: shell_grid(n), log_shell, log_z })
}

/// Gibbs measures of one realization in the Walsh basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsTransforms {
    pub n: usize,
    pub log_z: [f64; 2],
    /// `spectrum[j][S] = ⟨Π_{i∈S} σ_i⟩` under system `j + 1`.
    pub spectrum: [Vec<f64>; 2],
}

impl GibbsTransforms {
    /// Masses of the overlap between replicas of systems `a` and `b`
    /// (0-based), indexed like the ascending shell grid.
    pub fn overlap_masses(&self, a: usize, b: usize) -> Vec<f64> {
        let size = 1usize << self.n;
        let mut c: Vec<f64> = self.spectrum[a].iter().zip(&self.spectrum[b]).map(|(x, y)| x * y).collect();
        fwht(&mut c);
        let mut masses = vec![0.0; self.n + 1];
        for (z, v) in c.iter().enumerate() {
            masses[self.n - z.count_ones() as usize] += v / size as f64;
        }
        masses
    }

    /// `⟨R²⟩` for a replica of system `a` against one of system `b`.
    pub fn second_moment(&self, a: usize, b: usize) -> f64 {
        let n = self.n;
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let s = (1 << i) | (1 << j);
                off += self.spectrum[a][s] * self.spectrum[b][s];
            }
        }
        (n as f64 + 2.0 * off) / (n * n) as f64
    }
}

/// Normalized Gibbs weights of both systems and their Walsh transforms.
pub fn gibbs_transforms(real: &DisorderRealization) -> GibbsTransforms {
    let mut log_z = [0.0; 2];
    let spectrum = [1, 2].map(|j| {
        let h = real.hamiltonian(j);
        let lz = log_sum_exp(&h);
        log_z[j - 1] = lz;
        let mut g: Vec<f64> = h.iter().map(|x| (x - lz).exp()).collect();
        let total: f64 = g.iter().sum();
        g.iter_mut().for_each(|x| *x /= total);
        fwht(&mut g);
        g
    });
    GibbsTransforms { n: real.n, log_z, spectrum }
}

pub(super) fn realizations<T: Send>(sampler: &DisorderSampler, m: usize, seed: u64, f: impl Fn(DisorderRealization) -> T + Sync) -> Vec<T> {
    (0..m as u64).into_par_iter().map(|r| f(sampler.sample(seed, r))).collect()
}

fn check_samples(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Domain("at least one disorder sample is required".into()));
    }
    Ok(())
}

fn column(rows: &[Vec<f64>], i: usize) -> MeanSe {
    MeanSe::from_samples(&rows.iter().map(|r| r[i]).collect::<Vec<_>>())
}

/// Disorder-averaged overlap distributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub n: usize,
    pub samples: usize,
    /// Attainable overlaps, ascending.
    pub u: Vec<f64>,
    /// `E⟨I(R(σ,τ) = u)⟩`.
    pub mass_r: Vec<MeanSe>,
    /// `E⟨I(R¹₁₂ = u)⟩`.
    pub mass_r1: Vec<MeanSe>,
    /// `E⟨I(R²₁₂ = u)⟩`.
    pub mass_r2: Vec<MeanSe>,
    /// `E⟨I(R(σ,τ) ≤ u)⟩`.
    pub cdf_r: Vec<MeanSe>,
    /// `E⟨I(R¹₁₂ ≤ u)⟩`.
    pub cdf_r1: Vec<MeanSe>,
    /// `E⟨I(R²₁₂ ≤ u)⟩`.
    pub cdf_r2: Vec<MeanSe>,
    /// `E⟨R(σ,τ)²⟩`.
    pub moment_r: MeanSe,
    /// `E⟨(R¹₁₂)²⟩`.
    pub moment_r1: MeanSe,
    /// `E⟨(R²₁₂)²⟩`.
    pub moment_r2: MeanSe,
    /// `E⟨(R¹₁₂)²⟩ − E⟨R(σ,τ)²⟩` from paired samples.
    pub moment_gap: MeanSe,
    /// `(1/N) E log Z^j`.
    pub free_energy: [MeanSe; 2],
}

/// Exact Gibbs overlap distributions averaged over `m` realizations.
pub fn overlap_statistics(
    coupled: &CoupledModelSpec,
    n: usize,
    m: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<OverlapReport> {
    check_samples(m)?;
    let sampler = DisorderSampler::new(coupled, n, scheme)?;
    let rows = realizations(&sampler, m, seed, |real| {
        let g = gibbs_transforms(&real);
        let masses = [g.overlap_masses(0, 1), g.overlap_masses(0, 0), g.overlap_masses(1, 1)];
        let mut row = Vec::with_capacity(6 * (n + 1) + 6);
        for m in &masses {
            row.extend(m);
        }
        for m in &masses {
            row.extend(m.iter().scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            }));
        }
        let (r, r1, r2) = (g.second_moment(0, 1), g.second_moment(0, 0), g.second_moment(1, 1));
        row.extend([r, r1, r2, r1 - r, g.log_z[0] / n as f64, g.log_z[1] / n as f64]);
        row
    });
    let k = n + 1;
    let block = |b: usize| (0..k).map(|i| column(&rows, b * k + i)).collect();
    let tail = 6 * k;
    Ok(OverlapReport {
        n,
        samples: m,
        u: shell_grid(n),
        mass_r: block(0),
        mass_r1: block(1),
        mass_r2: block(2),
        cdf_r: block(3),
        cdf_r1: block(4),
        cdf_r2: block(5),
        moment_r: column(&rows, tail),
        moment_r1: column(&rows, tail + 1),
        moment_r2: column(&rows, tail + 2),
        moment_gap: column(&rows, tail + 3),
        free_energy: [column(&rows, tail + 4), column(&rows, tail + 5)],
    })
}

/// Disorder-averaged shell free energies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeEnergyReport {
    pub n: usize,
    pub samples: usize,
    /// Attainable overlaps, ascending.
    pub u: Vec<f64>,
    /// `p̂_{N,u} = (1/N) E log Σ_{R(σ,τ)=u} exp(H¹(σ) + H²(τ))`.
    pub shell: Vec<MeanSe>,
    /// `(1/N) E log Z^j`.
    pub free_energy: [MeanSe; 2],
    /// Largest partition-identity error over all realizations.
    pub max_identity_error: f64,
}

/// Exact shell free energies averaged over `m` realizations.
pub fn coupled_free_energy(
    coupled: &CoupledModelSpec,
    n: usize,
    m: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<FreeEnergyReport> {
    check_samples(m)?;
    let sampler = DisorderSampler::new(coupled, n, scheme)?;
    if n > MAX_SWEEP_N {
        return Err(Error::Guard(format!("pair sweep supports N <= {MAX_SWEEP_N}, got {n}")));
    }
    let shells = realizations(&sampler, m, seed, |real| exact_shell_energies(&real))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let nf = n as f64;
    let rows: Vec<Vec<f64>> = shells
        .iter()
        .map(|s| s.log_shell.iter().map(|l| l / nf).chain(s.log_z.iter().map(|l| l / nf)).collect())
        .collect();
    Ok(FreeEnergyReport {
        n,
        samples: m,
        u: shell_grid(n),
        shell: (0..=n).map(|i| column(&rows, i)).collect(),
        free_energy: [column(&rows, n + 1), column(&rows, n + 2)],
        max_identity_error: shells.iter().map(ShellEnergies::identity_error).fold(0.0, f64::max),
    })
}

/// Fluctuations of `(1/N) log Z¹` across realizations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub variance_se: f64,
    /// Deviation thresholds, as multiples of the sample standard deviation.
    pub eps: Vec<f64>,
    /// Empirical `P(|dev| ≥ ε)`.
    pub tail: Vec<f64>,
    /// Smallest `K` with `K exp(−N ε² / K) ≥ tail(ε)` on the whole grid.
    pub k_fit: f64,
    /// Whether the fitted `K` stays below [`K_MAX`].
    pub consistent: bool,
}

/// Floor of the fitted tail constant.
pub const K_FLOOR: f64 = 1e-6;
/// Largest tail constant regarded as a plausible fit.
pub const K_MAX: f64 = 1e6;

const EPS_MULTIPLES: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

/// Smallest `K ≥ K_FLOOR` with `K exp(−a / K) ≥ freq`.
fn min_tail_constant(a: f64, freq: f64) -> f64 {
    let g = |k: f64| k * (-a / k).exp();
    if g(K_FLOOR) >= freq {
        return K_FLOOR;
    }
    let (mut lo, mut hi) = (K_FLOOR.ln(), 1.0f64);
    while g(hi.exp()) < freq {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid.exp()) >= freq {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.exp()
}

/// Sample variance and sub-Gaussian tail fit of `(1/N) log Z¹`.
pub fn free_energy_concentration(
    coupled: &CoupledModelSpec,
    n: usize,
    m: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<ConcentrationReport> {
    check_samples(m)?;
    let sampler = DisorderSampler::new(coupled, n, scheme)?;
    let values = realizations(&sampler, m, seed, |real| log_sum_exp(&real.hamiltonian(1)) / n as f64);
    let (mean, variance) = mean_var(&values);
    let variance_se = if m > 1 {
        let m4 = values.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / m as f64;
        ((m4 - variance * variance).max(0.0) / m as f64).sqrt()
    } else {
        0.0
    };
    let sd = variance.sqrt();
    let eps: Vec<f64> = if sd > 0.0 { EPS_MULTIPLES.iter().map(|c| c * sd).collect() } else { Vec::new() };
    let tail: Vec<f64> =
        eps.iter().map(|e| values.iter().filter(|x| (*x - mean).abs() >= *e).count() as f64 / m as f64).collect();
    let k_fit = eps
        .iter()
        .zip(&tail)
        .filter(|(_, f)| **f > 0.0)
        .map(|(e, f)| min_tail_constant(n as f64 * e * e, *f))
        .fold(K_FLOOR, f64::max);
    Ok(ConcentrationReport {
        n,
        samples: m,
        mean,
        variance,
        variance_se,
        eps,
        tail,
        k_fit,
        consistent: k_fit.is_finite() && k_fit <= K_MAX,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{FieldLaw, MixtureSpec};

    fn pair(b1: f64, b2: f64, t: f64, field: FieldLaw) -> CoupledModelSpec {
        CoupledModelSpec::new(MixtureSpec::sk(b1).unwrap(), MixtureSpec::sk(b2).unwrap(), vec![t], field).unwrap()
    }

    fn brute_shells(real: &DisorderRealization) -> Vec<f64> {
        let (h1, h2) = (real.hamiltonian(1), real.hamiltonian(2));
        let n = real.n;
        let mut terms = vec![Vec::new(); n + 1];
        for (x, a) in h1.iter().enumerate() {
            for (y, b) in h2.iter().enumerate() {
                terms[n - (x ^ y).count_ones() as usize].push(a + b);
            }
        }
        terms.iter().map(|t| log_sum_exp(t)).collect()
    }

    #[test]
    fn single_site_closed_form() {
        let h = 0.7;
        let c = pair(1.3, 0.4, 0.2, FieldLaw { mean1: h, mean2: h, ..Default::default() });
        let rep = coupled_free_energy(&c, 1, 400, 5, Scheme::ConfigCholesky).unwrap();
        let exact = 2f64.ln() + h.cosh().ln();
        for j in 0..2 {
            assert!(rep.free_energy[j].within(exact, 4.0), "{:?}", rep.free_energy[j]);
        }
    }

    #[test]
    fn two_site_counts() {
        let c = pair(0.0, 0.0, 0.0, FieldLaw::default());
        let s = exact_shell_energies(&sample_zero(&c, 2)).unwrap();
        let counts: Vec<f64> = s.log_shell.iter().map(|l| l.exp()).collect();
        for (a, b) in counts.iter().zip([4.0, 8.0, 4.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((s.log_shell[1] / 2.0 - 0.5 * 8f64.ln()).abs() < 1e-15);
    }

    fn sample_zero(c: &CoupledModelSpec, n: usize) -> DisorderRealization {
        DisorderSampler::new(c, n, Scheme::Tensor).unwrap().sample(0, 0)
    }

    #[test]
    fn sweep_matches_brute_force_on_both_paths() {
        let field = FieldLaw { std1: 0.5, std2: 0.5, corr: 0.3, ..Default::default() };
        for beta in [1.0, 60.0] {
            let c = pair(beta, 0.8 * beta, 0.5, field);
            let real = DisorderSampler::new(&c, 6, Scheme::Tensor).unwrap().sample(11, 2);
            let s = exact_shell_energies(&real).unwrap();
            for (a, b) in s.log_shell.iter().zip(brute_shells(&real)) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} {b}");
            }
            assert!(s.identity_error() < 1e-12);
        }
    }

    #[test]
    fn masses_match_brute_force() {
        let field = FieldLaw { mean1: 0.2, std1: 0.4, std2: 0.4, ..Default::default() };
        let c = pair(0.9, 1.1, 0.4, field);
        let real = DisorderSampler::new(&c, 5, Scheme::Tensor).unwrap().sample(3, 1);
        let g = gibbs_transforms(&real);
        let w = [1, 2].map(|j| {
            let h = real.hamiltonian(j);
            let lz = log_sum_exp(&h);
            h.iter().map(|x| (x - lz).exp()).collect::<Vec<_>>()
        });
        for (a, b) in [(0, 1), (0, 0), (1, 1)] {
            let mut brute = vec![0.0; 6];
            let mut second = 0.0;
            for x in 0..32usize {
                for y in 0..32usize {
                    let d = (x ^ y).count_ones() as usize;
                    brute[5 - d] += w[a][x] * w[b][y];
                    let r = 1.0 - 2.0 * d as f64 / 5.0;
                    second += w[a][x] * w[b][y] * r * r;
                }
            }
            let fast = g.overlap_masses(a, b);
            for (p, q) in fast.iter().zip(&brute) {
                assert!((p - q).abs() < 1e-14);
            }
            assert!((g.second_moment(a, b) - second).abs() < 1e-14);
            assert!((fast.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_temperature_second_moment() {
        let c = pair(0.0, 0.0, 0.0, FieldLaw::default());
        for n in [3, 7] {
            let rep = overlap_statistics(&c, n, 4, 0, Scheme::Tensor).unwrap();
            assert_eq!(rep.moment_r.mean, 1.0 / n as f64);
            assert_eq!(rep.moment_r1.mean, 1.0 / n as f64);
        }
    }

    #[test]
    fn perfect_coupling_matches_self_overlap() {
        let field = FieldLaw { std1: 0.3, std2: 0.3, corr: 1.0, ..Default::default() };
        let c = pair(0.8, 0.8, 1.0, field);
        let rep = overlap_statistics(&c, 6, 20, 2, Scheme::Tensor).unwrap();
        for (a, b) in rep.mass_r.iter().zip(&rep.mass_r1) {
            assert!((a.mean - b.mean).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_has_no_fluctuation() {
        let c = pair(0.0, 0.0, 0.0, FieldLaw { mean1: 0.4, mean2: 0.4, ..Default::default() });
        let rep = free_energy_concentration(&c, 6, 30, 1, Scheme::Tensor).unwrap();
        assert_eq!(rep.variance, 0.0);
        assert!(rep.k_fit > 0.0 && rep.k_fit.is_finite());
        let exact = 2f64.ln() + 0.4f64.cosh().ln();
        assert!((rep.mean - exact).abs() < 1e-14);
    }

    #[test]
    fn tail_constant_is_minimal() {
        for (a, f) in [(0.3, 0.4), (2.0, 0.05), (0.01, 1.0)] {
            let k = min_tail_constant(a, f);
            assert!(k * (-a / k).exp() >= f);
            let k2 = k * (1.0 - 1e-9);
            assert!(k2 * (-a / k2).exp() < f);
        }
    }

    #[test]
    fn sweep_guard() {
        let c = pair(1.0, 1.0, 0.5, FieldLaw::default());
        let real = DisorderSampler::new(&c, 14, Scheme::Tensor).unwrap().sample(0, 0);
        assert!(matches!(exact_shell_energies(&real), Err(Error::Guard(_))));
    }
}
