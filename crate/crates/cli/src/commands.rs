//! One function per subcommand.

use anyhow::Result;
use chaos_core::chaos::{at_index, find_uf, rs_fixed_point, support_min, FixedPointResult};
use chaos_core::guerra::{BoundTerms, ChaosBand, ManageableBound};
use chaos_core::mixture::{cauchy_schwarz_gap, diagnose_conditions, CoupledModelSpec};
use chaos_core::parisi::{
    evaluate_functional, minimize_functional_with, MinimizeOptions, MinimizeResult, OrderParameterTriplet,
    ParisiSettings, ParisiSolution,
};
use chaos_core::sim::{
    coupled_free_energy, free_energy_concentration, gg_residuals, overlap_statistics, MeanSe, OverlapReport,
};
use serde_json::{json, Value};

use crate::config::{BoundSchedule, ExperimentConfig};
use crate::output::{jnum, num, Sink};

/// Mass threshold for the smallest support point of a minimizer.
const SUPPORT_MASS_TOL: f64 = 1e-3;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub model: CoupledModelSpec,
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let model = cfg.model()?;
        Ok(Self { cfg, model })
    }

    fn minimize(&self, j: usize) -> Result<(MinimizeResult, ParisiSolution)> {
        let mut opts = MinimizeOptions::new(self.cfg.parisi.restarts, self.cfg.seed);
        opts.settings = ParisiSettings::with_quad_n(self.cfg.quad_n);
        let field = self.model.field.marginal(j);
        let min = minimize_functional_with(self.model.spec(j), field, self.cfg.parisi.k, &opts)?;
        let sol = evaluate_functional(self.model.spec(j), field, &min.triplet, self.cfg.quad_n)?;
        Ok((min, sol))
    }

    fn solve_both(&self) -> Result<[(MinimizeResult, ParisiSolution); 2]> {
        Ok([self.minimize(1)?, self.minimize(2)?])
    }

    /// `c_j` from the config, else the smallest support point of the minimizer.
    fn c_values(&self, solved: &[(MinimizeResult, ParisiSolution); 2]) -> (f64, f64) {
        let c = |over: Option<f64>, t: &OrderParameterTriplet| over.unwrap_or_else(|| support_min(t, SUPPORT_MASS_TOL));
        (c(self.cfg.fixed_point.c1, &solved[0].0.triplet), c(self.cfg.fixed_point.c2, &solved[1].0.triplet))
    }

    fn fixed_point(&self, solved: &[(MinimizeResult, ParisiSolution); 2]) -> Result<(f64, f64, FixedPointResult)> {
        let (c1, c2) = self.c_values(solved);
        let r = find_uf(&self.model, &solved[0].1, &solved[1].1, c1, c2, self.cfg.fixed_point.tol)?;
        if !r.contracting {
            eprintln!("warning: the coupling map is not a contraction (max |phi'| = {:.4}); u_f may not be unique", r.max_abs_derivative);
        }
        Ok((c1, c2, r))
    }

    /// Caveats printed before any chaos computation.
    pub fn warn(&self) {
        let f = &self.model.field;
        for j in [1, 2] {
            let m = f.marginal(j);
            if m.std == 0.0 && m.mean != 0.0 {
                eprintln!(
                    "warning: system {j} has a constant field; temperature chaos with constant fields is unclear, results are computed regardless"
                );
            }
        }
        let report = diagnose_conditions(&self.model);
        eprintln!(
            "warning: chaos conditions are not certified for finite mixtures (proportional half-degrees {:?}, deviating index {:?}){}",
            report.proportional_set,
            report.deviating_index,
            if report.notes.is_empty() { String::new() } else { format!("; {}", report.notes.trim_end_matches([' ', ';'])) }
        );
    }
}

fn grid(b: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| if points == 1 { 0.0 } else { -b + 2.0 * b * i as f64 / (points - 1) as f64 }).collect()
}

fn mean_se(s: MeanSe) -> Value {
    json!({ "mean": jnum(s.mean), "se": jnum(s.se) })
}

pub fn mixture_info(ctx: &Context, sink: &mut Sink) -> Result<()> {
    let model = &ctx.model;
    let mut systems = Vec::new();
    for j in [1, 2] {
        let spec = model.spec(j);
        let field = model.field.marginal(j);
        let c = rs_fixed_point(spec, field);
        systems.push(json!({
            "betas": spec.betas(),
            "xi_at_1": [jnum(spec.xi(1.0, 0)), jnum(spec.xi(1.0, 1)), jnum(spec.xi(1.0, 2))],
            "theta_at_1": jnum(spec.theta(1.0)),
            "rs_fixed_point": jnum(c),
            "at_index": jnum(at_index(spec, field, c)?),
        }));
    }
    let body = json!({
        "system1": systems[0],
        "system2": systems[1],
        "t": model.t(),
        "cross_xi_at_1": [jnum(model.xi_jj(1, 2, 1.0, 0)), jnum(model.xi_jj(1, 2, 1.0, 1)), jnum(model.xi_jj(1, 2, 1.0, 2))],
        "cauchy_schwarz_gap_at_1": jnum(cauchy_schwarz_gap(model, 1.0, 1.0)?),
        "conditions": serde_json::to_value(diagnose_conditions(model))?,
    });
    sink.json("mixture_info.json", body)
}

pub fn parisi(ctx: &Context, sink: &mut Sink) -> Result<()> {
    let mut summary = serde_json::Map::new();
    for (j, (min, sol)) in [1, 2].into_iter().zip(ctx.solve_both()?) {
        let t = &min.triplet;
        let rows: Vec<Vec<String>> = (0..=t.k + 1).map(|p| vec![num(t.q[p]), num(t.m[p])]).collect();
        sink.csv(&format!("parisi_triplet_{j}.csv"), &["q_p", "m_p"], &rows)?;
        let prof = &sol.level_tables[0];
        let rows: Vec<Vec<String>> = (0..prof.grid().points())
            .map(|i| {
                let d = prof.node(i);
                vec![num(prof.grid().x(i)), num(d[0]), num(d[1]), num(d[2]), num(d[3])]
            })
            .collect();
        sink.csv(&format!("parisi_profile_{j}.csv"), &["x", "phi", "d1", "d2", "d3"], &rows)?;
        if !min.converged {
            eprintln!("warning: minimization of system {j} did not converge within budget");
        }
        summary.insert(
            format!("system{j}"),
            json!({
                "value": jnum(min.value),
                "triplet": t,
                "x0": jnum(sol.x0),
                "penalty": jnum(sol.penalty),
                "converged": min.converged,
                "evaluations": min.evaluations,
                "restart_values": min.restart_values.iter().map(|v| jnum(*v)).collect::<Vec<_>>(),
            }),
        );
    }
    sink.json("parisi.json", Value::Object(summary))
}

pub fn fixed_point(ctx: &Context, sink: &mut Sink) -> Result<()> {
    ctx.warn();
    let solved = ctx.solve_both()?;
    let (c1, c2, r) = ctx.fixed_point(&solved)?;
    println!("u_f = {}", num(r.u_f));
    sink.json(
        "fixed_point.json",
        json!({
            "u_f": jnum(r.u_f),
            "residual": jnum(r.residual),
            "max_abs_derivative": jnum(r.max_abs_derivative),
            "c1": jnum(c1),
            "c2": jnum(c2),
            "contracting": r.contracting,
            "iterations": r.iterations,
            "used_bisection": r.used_bisection,
        }),
    )
}

/// `(u, terms)` over the configured grid.
fn bound_terms(ctx: &Context, solved: &[(MinimizeResult, ParisiSolution); 2]) -> Result<Vec<BoundTerms>> {
    let b = &ctx.cfg.bound;
    match b.schedule {
        BoundSchedule::Band => {
            let (c1, c2) = ctx.c_values(solved);
            let (v1, v2) = (b.v1.unwrap_or(c1), b.v2.unwrap_or(c2));
            let band = ChaosBand::new(&ctx.model, &solved[0].1, &solved[1].1, c1, c2, v1, v2)?;
            grid(band.bound(), b.u_grid).into_iter().map(|u| Ok(band.terms(u)?)).collect()
        }
        BoundSchedule::Manageable => {
            let t1 = &solved[0].0.triplet;
            let t2 = OrderParameterTriplet::new(t1.m.clone(), solved[1].0.triplet.q.clone())?;
            let mb = ManageableBound::new(&ctx.model, t1, &t2, b.iota)?;
            let lim = (t1.q[b.iota] * t2.q[b.iota]).sqrt();
            grid(lim, b.u_grid).into_iter().map(|u| Ok(mb.terms(u)?)).collect()
        }
    }
}

fn bound_row(t: &BoundTerms) -> Vec<String> {
    vec![num(t.u), num(t.bound), num(t.p1), num(t.p2), num(t.penalty), num(t.extra)]
}

pub fn bound(ctx: &Context, sink: &mut Sink) -> Result<()> {
    ctx.warn();
    let solved = ctx.solve_both()?;
    let rows: Vec<Vec<String>> = bound_terms(ctx, &solved)?.iter().map(bound_row).collect();
    sink.csv("bound.csv", &["u", "bound", "P1", "P2", "penalty", "positive_parts"], &rows)
}

fn overlap_rows(r: &OverlapReport) -> Vec<Vec<String>> {
    let half = 1.0 / r.n as f64;
    (0..r.u.len())
        .map(|i| {
            vec![
                num((r.u[i] - half).max(-1.0)),
                num((r.u[i] + half).min(1.0)),
                num(r.mass_r[i].mean),
                num(r.mass_r1[i].mean),
                num(r.mass_r2[i].mean),
                num(r.mass_r[i].se),
                num(r.mass_r1[i].se),
                num(r.mass_r2[i].se),
            ]
        })
        .collect()
}

pub fn simulate(ctx: &Context, sink: &mut Sink) -> Result<()> {
    let s = &ctx.cfg.simulate;
    let seed = ctx.cfg.seed;
    let shells = coupled_free_energy(&ctx.model, s.n, s.m, seed, s.scheme)?;
    let overlaps = overlap_statistics(&ctx.model, s.n, s.m, seed, s.scheme)?;
    let conc = free_energy_concentration(&ctx.model, s.n, s.m, seed, s.scheme)?;
    let rows: Vec<Vec<String>> =
        shells.u.iter().zip(&shells.shell).map(|(u, e)| vec![num(*u), num(e.mean), num(e.se)]).collect();
    sink.csv("simulate_shells.csv", &["u", "shell_logsum", "se"], &rows)?;
    sink.csv(
        "simulate_overlaps.csv",
        &["bin_lo", "bin_hi", "mass_R", "mass_R1", "mass_R2", "se_R", "se_R1", "se_R2"],
        &overlap_rows(&overlaps),
    )?;
    if !conc.consistent {
        eprintln!("warning: free-energy tails are not fitted by K exp(-N eps^2 / K) with a plausible K");
    }
    sink.json(
        "simulate_summary.json",
        json!({
            "N": s.n,
            "M": s.m,
            "scheme": s.scheme,
            "free_energy": [mean_se(shells.free_energy[0]), mean_se(shells.free_energy[1])],
            "max_identity_error": jnum(shells.max_identity_error),
            "moment_R": mean_se(overlaps.moment_r),
            "moment_R1": mean_se(overlaps.moment_r1),
            "moment_R2": mean_se(overlaps.moment_r2),
            "moment_gap": mean_se(overlaps.moment_gap),
            "concentration": {
                "mean": jnum(conc.mean),
                "variance": jnum(conc.variance),
                "variance_se": jnum(conc.variance_se),
                "eps": conc.eps.iter().map(|v| jnum(*v)).collect::<Vec<_>>(),
                "tail": conc.tail.iter().map(|v| jnum(*v)).collect::<Vec<_>>(),
                "k_fit": jnum(conc.k_fit),
                "consistent": conc.consistent,
            },
        }),
    )
}

pub fn gg_check(ctx: &Context, sink: &mut Sink) -> Result<()> {
    let (psi, f) = ctx.cfg.gg_functions()?;
    let s = &ctx.cfg.simulate;
    let report = gg_residuals(&ctx.model, s.n, s.m, ctx.cfg.gg.n, &psi, &f, ctx.cfg.seed, s.scheme)?;
    let rows: Vec<Vec<String>> = report
        .estimates
        .iter()
        .map(|e| vec![e.functional.to_string(), e.n.to_string(), num(e.estimate), num(e.se)])
        .collect();
    sink.csv("gg.csv", &["functional", "n", "estimate", "se"], &rows)
}

pub fn chaos_scan(ctx: &Context, sink: &mut Sink) -> Result<()> {
    ctx.warn();
    let solved = ctx.solve_both()?;
    let (c1, c2, fp) = ctx.fixed_point(&solved)?;
    let s = &ctx.cfg.simulate;
    let overlaps = overlap_statistics(&ctx.model, s.n, s.m, ctx.cfg.seed, s.scheme)?;
    let band = ChaosBand::new(&ctx.model, &solved[0].1, &solved[1].1, c1, c2, c1, c2)?;
    let terms: Vec<BoundTerms> =
        grid(band.bound(), ctx.cfg.bound.u_grid).into_iter().map(|u| band.terms(u)).collect::<Result<_, _>>()?;
    let half = 1.0 / s.n as f64;
    let mode = (0..overlaps.u.len())
        .max_by(|&a, &b| overlaps.mass_r[a].mean.total_cmp(&overlaps.mass_r[b].mean).then(b.cmp(&a)))
        .expect("at least one shell");
    let (lo, hi) = ((overlaps.u[mode] - half).max(-1.0), (overlaps.u[mode] + half).min(1.0));
    let contains = lo <= fp.u_f && fp.u_f <= hi;
    println!("u_f = {}, mode bin [{}, {}]", num(fp.u_f), num(lo), num(hi));
    if !contains {
        eprintln!("warning: the overlap histogram's mode bin does not contain u_f at N = {}", s.n);
    }
    sink.json(
        "chaos_scan.json",
        json!({
            "u_f": jnum(fp.u_f),
            "residual": jnum(fp.residual),
            "max_abs_derivative": jnum(fp.max_abs_derivative),
            "c1": jnum(c1),
            "c2": jnum(c2),
            "P1": jnum(solved[0].0.value),
            "P2": jnum(solved[1].0.value),
            "band": terms.iter().map(|t| json!({
                "u": jnum(t.u),
                "bound": jnum(t.bound),
                "penalty": jnum(t.penalty),
                "positive_parts": jnum(t.extra),
            })).collect::<Vec<_>>(),
            "histogram": (0..overlaps.u.len()).map(|i| json!({
                "bin_lo": jnum((overlaps.u[i] - half).max(-1.0)),
                "bin_hi": jnum((overlaps.u[i] + half).min(1.0)),
                "mass_R": jnum(overlaps.mass_r[i].mean),
                "se_R": jnum(overlaps.mass_r[i].se),
            })).collect::<Vec<_>>(),
            "mode_bin": [jnum(lo), jnum(hi)],
            "mode_contains_u_f": contains,
            "N": s.n,
            "M": s.m,
        }),
    )
}
