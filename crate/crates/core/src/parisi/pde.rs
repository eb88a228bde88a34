//! Finite-difference solver for the Parisi PDE
//!
//! ```text
//! ∂_q Φ = −(ξ''(q)/2) (∂_xx Φ + μ([0, q]) (∂_x Φ)²),   Φ(x, 1) = log cosh x,
//! ```
//!
//! integrated backwards from `q = 1` by the method of lines: fourth-order
//! centered differences in `x`, classical Runge–Kutta in `q`, with step
//! boundaries aligned to the jumps of `μ([0, ·])`.

use crate::mixture::MixtureSpec;
use crate::{Error, Result};

use super::{Grid, GridFunction, OrderParameterTriplet};

/// Profiles returned by [`phi_pde_solve`].
#[derive(Debug, Clone)]
pub struct PdeSolution {
    /// `Φ(·, 0)`.
    pub at_zero: GridFunction,
    /// `(q, Φ(·, q))` for each requested `q`, in request order.
    pub snapshots: Vec<(f64, GridFunction)>,
    /// Number of Runge–Kutta steps taken.
    pub steps: usize,
}

/// Reads `v[i]` with linear continuation past both ends.
#[inline]
fn ext(v: &[f64], i: isize) -> f64 {
    let n = v.len() as isize;
    if i < 0 {
        v[0] + (-i) as f64 * (v[0] - v[1])
    } else if i >= n {
        let l = (n - 1) as usize;
        v[l] + (i - n + 1) as f64 * (v[l] - v[l - 1])
    } else {
        v[i as usize]
    }
}

fn d1(v: &[f64], i: isize, h: f64) -> f64 {
    (-ext(v, i + 2) + 8.0 * ext(v, i + 1) - 8.0 * ext(v, i - 1) + ext(v, i - 2)) / (12.0 * h)
}

fn d2(v: &[f64], i: isize, h: f64) -> f64 {
    (-ext(v, i + 2) + 16.0 * ext(v, i + 1) - 30.0 * ext(v, i) + 16.0 * ext(v, i - 1) - ext(v, i - 2)) / (12.0 * h * h)
}

fn d3(v: &[f64], i: isize, h: f64) -> f64 {
    (-ext(v, i + 3) + 8.0 * ext(v, i + 2) - 13.0 * ext(v, i + 1) + 13.0 * ext(v, i - 1) - 8.0 * ext(v, i - 2)
        + ext(v, i - 3))
        / (8.0 * h * h * h)
}

fn rhs(v: &[f64], out: &mut [f64], h: f64, a: f64, mu: f64) {
    for i in 0..v.len() {
        let ii = i as isize;
        let px = d1(v, ii, h);
        out[i] = a * (d2(v, ii, h) + mu * px * px);
    }
}

fn to_grid_function(grid: Grid, v: Vec<f64>) -> Result<GridFunction> {
    let h = grid.step();
    let n = v.len();
    let g1 = (0..n).map(|i| d1(&v, i as isize, h)).collect();
    let g2 = (0..n).map(|i| d2(&v, i as isize, h)).collect();
    let g3 = (0..n).map(|i| d3(&v, i as isize, h)).collect();
    GridFunction::new(grid, v, g1, g2, g3)
}

/// Solves the PDE for the measure of `cdf` and returns `Φ(·, 0)` together
/// with the profiles at the requested `q` values.
///
/// `q_steps` fixes the largest step `1 / q_steps`; it must respect
/// `dq ≤ h² / (2 max ξ'')` on the grid of step `h`.
pub fn phi_pde_solve(
    spec: &MixtureSpec,
    cdf: &OrderParameterTriplet,
    grid: Grid,
    q_steps: usize,
    snapshots_at: &[f64],
) -> Result<PdeSolution> {
    cdf.validate()?;
    if q_steps == 0 {
        return Err(Error::Domain("q_steps must be positive".into()));
    }
    if let Some(q) = snapshots_at.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::Domain(format!("snapshot q = {q} outside [0, 1]")));
    }
    let h = grid.step();
    let dq_max = 1.0 / q_steps as f64;
    let xi2max = spec.max_xi2();
    if xi2max > 0.0 && dq_max > h * h / (2.0 * xi2max) {
        return Err(Error::Unstable(format!(
            "q step {dq_max:e} exceeds h^2/(2 max xi'') = {:e}",
            h * h / (2.0 * xi2max)
        )));
    }
    let t = cdf.normalized();
    let mut breaks: Vec<f64> = t.q.iter().chain(snapshots_at).copied().collect();
    breaks.push(0.0);
    breaks.push(1.0);
    breaks.sort_by(|a, b| b.total_cmp(a));
    breaks.dedup();

    let init = GridFunction::log_cosh(grid);
    let mut v = init.values().to_vec();
    let n = v.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut snaps: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut steps = 0;
    if snapshots_at.contains(&1.0) {
        snaps.push((1.0, v.clone()));
    }
    for w in breaks.windows(2) {
        let (q_hi, q_lo) = (w[0], w[1]);
        // μ([0, q]) = m_p on [q_p, q_{p+1}); constant on (q_lo, q_hi)
        let mu = t.cdf(q_lo);
        let nsteps = ((q_hi - q_lo) / dq_max).ceil().max(1.0) as usize;
        let dq = (q_hi - q_lo) / nsteps as f64;
        for s in 0..nsteps {
            let q0 = q_hi - s as f64 * dq;
            let a = |q: f64| 0.5 * spec.xi(q, 2);
            // dΦ/ds = (ξ''/2)(Φ_xx + μ Φ_x²) with s = −q
            rhs(&v, &mut k1, h, a(q0), mu);
            for i in 0..n {
                tmp[i] = v[i] + 0.5 * dq * k1[i];
            }
            rhs(&tmp, &mut k2, h, a(q0 - 0.5 * dq), mu);
            for i in 0..n {
                tmp[i] = v[i] + 0.5 * dq * k2[i];
            }
            rhs(&tmp, &mut k3, h, a(q0 - 0.5 * dq), mu);
            for i in 0..n {
                tmp[i] = v[i] + dq * k3[i];
            }
            rhs(&tmp, &mut k4, h, a(q0 - dq), mu);
            for i in 0..n {
                v[i] += dq / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            steps += 1;
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("PDE solution diverged".into()));
        }
        if snapshots_at.contains(&q_lo) {
            snaps.push((q_lo, v.clone()));
        }
    }
    let mut snapshots = Vec::new();
    for &q in snapshots_at {
        let vals = snaps.iter().find(|(sq, _)| *sq == q).map(|(_, s)| s.clone()).unwrap_or_else(|| v.clone());
        snapshots.push((q, to_grid_function(grid, vals)?));
    }
    Ok(PdeSolution { at_zero: to_grid_function(grid, v)?, snapshots, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parisi::phi_profile;

    #[test]
    fn zero_mixture_keeps_terminal_profile() {
        let zero = MixtureSpec::new(vec![0.0]).unwrap();
        let grid = Grid::new(8.0, 161).unwrap();
        let t = OrderParameterTriplet::rs(0.5).unwrap();
        let s = phi_pde_solve(&zero, &t, grid, 10, &[]).unwrap();
        assert_eq!(s.at_zero.values(), GridFunction::log_cosh(grid).values());
    }

    #[test]
    fn step_bound_is_enforced() {
        let spec = MixtureSpec::sk(1.0).unwrap();
        let grid = Grid::new(8.0, 321).unwrap();
        let t = OrderParameterTriplet::rs(0.5).unwrap();
        assert!(matches!(phi_pde_solve(&spec, &t, grid, 10, &[]), Err(Error::Unstable(_))));
    }

    #[test]
    fn rs_measure_matches_representation() {
        let spec = MixtureSpec::sk(0.6).unwrap();
        let c = 0.35;
        let t = OrderParameterTriplet::rs(c).unwrap();
        let grid = Grid::new(10.0, 401).unwrap();
        let h = grid.step();
        let q_steps = (2.0 * spec.max_xi2() / (h * h)).ceil() as usize;
        let s = phi_pde_solve(&spec, &t, grid, q_steps, &[c]).unwrap();
        let fine = Grid::new(10.0, 2049).unwrap();
        let rep = phi_profile(&spec, &t, c, fine, 40).unwrap();
        let pde = &s.snapshots[0].1;
        let mut worst: f64 = 0.0;
        for i in 0..grid.points() {
            let x = grid.x(i);
            worst = worst.max((pde.node(i)[0] - rep.eval(x)[0]).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }
}
