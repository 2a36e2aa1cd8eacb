use std::fmt;
use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use eikon_core::funcs::FamilySpec;
use eikon_core::solutions::SolveError;
use eikon_core::symmetry::table::CONTROL_THRESHOLD;
use eikon_core::symmetry::{verify_generator, RowParams, AffineFlow, GeneratorReport, TransformedField};
use eikon_core::verify::{fd_jet, hessian_rank, residual, verify_linear, verify_root, Field, FieldError, RootTrackedField};
use eikon_core::{Jet, Newton, Row};
use rayon::prelude::*;

use crate::scenario::{Model, Scenario};

/// Exit status when the run completed but nothing verified.
pub const EXIT_NOTHING_OK: i32 = 2;
/// Fraction of ok flow points whose FD residual must stay within tolerance.
const FLOW_PASS_FRACTION: f64 = 0.95;
const FLOW_RESIDUAL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NoRoot,
    SingularJacobian,
    BranchJump,
    DomainError,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Ok => "ok",
            Status::NoRoot => "no_root",
            Status::SingularJacobian => "singular_jacobian",
            Status::BranchJump => "branch_jump",
            Status::DomainError => "domain_error",
        })
    }
}

impl Status {
    fn of_solve(e: &SolveError) -> Self {
        match e {
            SolveError::NoRoot => Status::NoRoot,
            SolveError::SingularJacobian { .. } => Status::SingularJacobian,
            _ => Status::DomainError,
        }
    }

    fn of_field(e: &FieldError) -> Self {
        match e {
            FieldError::BranchJump { .. } => Status::BranchJump,
            FieldError::Solve(s) => Status::of_solve(s),
            _ => Status::DomainError,
        }
    }
}

/// One CSV row: a grid point and one of its roots.
#[derive(Debug, Clone)]
pub struct GridRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub root: i64,
    pub u: f64,
    pub res_closed: f64,
    pub res_fd: f64,
    pub rank: i64,
    pub singular_values: Vec<f64>,
    pub status: Status,
}

impl GridRecord {
    fn failed(t: f64, x: &[f64], root: i64, u: f64, status: Status) -> Self {
        Self {
            t,
            x: x.to_vec(),
            root,
            u,
            res_closed: f64::NAN,
            res_fd: f64::NAN,
            rank: -1,
            singular_values: Vec::new(),
            status,
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn write_grid(records: &[GridRecord], n: usize, out: Option<&Path>) -> Result<()> {
    let mut w = writer(out)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|a| format!("x{a}")));
    header.extend(["root", "u", "res_closed", "res_fd", "rank", "status"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![num(r.t)];
        row.extend(r.x.iter().map(|&v| num(v)));
        row.extend([r.root.to_string(), num(r.u), num(r.res_closed), num(r.res_fd), r.rank.to_string(), r.status.to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_ranks(records: &[GridRecord], n: usize, out: Option<&Path>) -> Result<()> {
    let mut w = writer(out)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|a| format!("x{a}")));
    header.extend(["root".to_string(), "rank".to_string()]);
    header.extend((1..=n).map(|i| format!("sv{i}")));
    header.push("status".into());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![num(r.t)];
        row.extend(r.x.iter().map(|&v| num(v)));
        row.extend([r.root.to_string(), r.rank.to_string()]);
        row.extend((0..n).map(|i| num(r.singular_values.get(i).copied().unwrap_or(f64::NAN))));
        row.push(r.status.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn summarize(command: &str, points: usize, records: &[GridRecord]) {
    let count = |s: Status| records.iter().filter(|r| r.status == s).count();
    let ok: Vec<&GridRecord> = records.iter().filter(|r| r.status == Status::Ok).collect();
    let max = |f: fn(&GridRecord) -> f64| ok.iter().map(|r| f(r)).fold(0.0, f64::max);
    eprintln!(
        "{command}: {points} points, {} rows: {} ok, {} no_root, {} singular_jacobian, {} branch_jump, {} domain_error",
        records.len(),
        ok.len(),
        count(Status::NoRoot),
        count(Status::SingularJacobian),
        count(Status::BranchJump),
        count(Status::DomainError),
    );
    if !ok.is_empty() {
        eprintln!("  max res_closed {:.3e}, max res_fd {:.3e}", max(|r| r.res_closed), max(|r| r.res_fd));
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

fn evaluate_point(model: &Model, cfg: &Newton, rank_tol: f64, t: f64, x: &[f64]) -> Vec<GridRecord> {
    let solution = match model {
        Model::Implicit(s) => s,
        Model::Linear { family, solution } => {
            return vec![match verify_linear(family, solution, t, x, rank_tol) {
                Ok(rep) => GridRecord {
                    t,
                    x: x.to_vec(),
                    root: 0,
                    u: rep.point.u,
                    res_closed: rep.residual_closed,
                    res_fd: rep.residual_fd,
                    rank: rep.hessian_rank as i64,
                    singular_values: rep.singular_values,
                    status: Status::Ok,
                },
                Err(e) => GridRecord::failed(t, x, 0, solution.value(t, x), Status::of_field(&e)),
            }];
        }
    };
    let roots = match solution.evaluate(t, x, cfg) {
        Ok(res) => res.roots,
        Err(e) => return vec![GridRecord::failed(t, x, -1, f64::NAN, Status::of_solve(&e))],
    };
    roots
        .iter()
        .enumerate()
        .map(|(i, root)| match verify_root(solution, t, x, root, cfg, rank_tol) {
            Ok(rep) => GridRecord {
                t,
                x: x.to_vec(),
                root: i as i64,
                u: root.u,
                res_closed: rep.residual_closed,
                res_fd: rep.residual_fd,
                rank: rep.hessian_rank as i64,
                singular_values: rep.singular_values,
                status: Status::Ok,
            },
            Err(e) => GridRecord::failed(t, x, i as i64, root.u, Status::of_field(&e)),
        })
        .collect()
}

pub struct Options<'a> {
    pub out: Option<&'a Path>,
    pub seed: Option<u64>,
    pub threads: usize,
}

fn grid_records(scenario: &Scenario, opts: &Options) -> Result<(Model, usize, usize, Vec<GridRecord>)> {
    let model = scenario.model()?;
    let n = scenario.n()?;
    let points = scenario.grid()?.points();
    let cfg = scenario.newton(opts.seed.unwrap_or(scenario.rng_seed));
    let rank_tol = scenario.rank_tol.unwrap_or(eikon_core::verify::DEFAULT_RANK_TOL);
    let records: Vec<Vec<GridRecord>> = pool(opts.threads)?
        .install(|| points.par_iter().map(|(t, x)| evaluate_point(&model, &cfg, rank_tol, *t, x)).collect());
    Ok((model, n, points.len(), records.into_iter().flatten().collect()))
}

fn any_ok(records: &[GridRecord]) -> i32 {
    if records.iter().any(|r| r.status == Status::Ok) {
        0
    } else {
        EXIT_NOTHING_OK
    }
}

pub fn evaluate(scenario: &Scenario, opts: &Options) -> Result<i32> {
    let (_, n, points, records) = grid_records(scenario, opts)?;
    write_grid(&records, n, opts.out)?;
    summarize("evaluate", points, &records);
    Ok(any_ok(&records))
}

pub fn rank(scenario: &Scenario, opts: &Options) -> Result<i32> {
    let (_, n, points, records) = grid_records(scenario, opts)?;
    write_ranks(&records, n, opts.out)?;
    summarize("rank", points, &records);
    let mut hist = vec![0usize; n + 1];
    for r in records.iter().filter(|r| r.status == Status::Ok) {
        hist[r.rank as usize] += 1;
    }
    let parts: Vec<String> = hist.iter().enumerate().map(|(k, c)| format!("rank {k}: {c}")).collect();
    eprintln!("  {}", parts.join(", "));
    Ok(any_ok(&records))
}

pub fn verify_table(scenario: &Scenario, opts: &Options) -> Result<i32> {
    let spec = scenario.table()?;
    let n = match spec.n {
        Some(n) => n,
        None => scenario.n.unwrap_or(2),
    };
    let row = Row::new(spec.row, n, &spec.params)?;
    let seed = opts.seed.unwrap_or(scenario.rng_seed);
    let count = row.checks().count();
    let reports: Vec<GeneratorReport> = pool(opts.threads)?.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| verify_generator(&row, i, spec.samples, spec.tol, seed))
            .collect::<Result<_, _>>()
    })?;

    println!("row {} (n = {n}), {} samples per field, tol {:.1e}", spec.row, spec.samples, spec.tol);
    for r in &reports {
        let verdict = match (r.control, r.passed) {
            (false, true) => "pass",
            (false, false) => "FAIL",
            (true, _) if r.max_defect >= CONTROL_THRESHOLD => "rejected (control)",
            (true, _) => "NOT REJECTED (control)",
        };
        println!("  {:<16} max defect {:.3e}  {verdict}", r.id, r.max_defect);
    }
    if let Some(path) = opts.out {
        let mut w = writer(Some(path))?;
        w.write_record(["generator", "control", "samples", "max_defect", "passed"])?;
        for r in &reports {
            w.write_record([r.id.clone(), r.control.to_string(), r.samples.to_string(), num(r.max_defect), r.passed.to_string()])?;
        }
        w.flush()?;
    }
    let generators_pass = reports.iter().filter(|r| !r.control).all(|r| r.passed);
    let controls_rejected = reports.iter().filter(|r| r.control).all(|r| r.max_defect >= CONTROL_THRESHOLD);
    let all = generators_pass && controls_rejected;
    println!(
        "{}",
        match (generators_pass, controls_rejected) {
            (true, true) => "all generators pass",
            (false, _) => "some generators FAIL",
            (true, false) => "a control was not rejected; the check is not discriminating",
        }
    );
    Ok(if all { 0 } else { EXIT_NOTHING_OK })
}

/// Everything about a flow run that is fixed across grid points.
struct FlowRun<'a> {
    model: &'a Model,
    flow: &'a AffineFlow,
    eps: f64,
    cfg: &'a Newton,
    rank_tol: f64,
}

impl FlowRun<'_> {
    /// Verifies `inner` moved through the flow, at `(t, x)` in the new coordinates.
    fn record<F: Field<f64>>(&self, inner: F, inner_jet: &Jet, t: f64, x: &[f64], root: i64) -> GridRecord {
        let family = self.model.family();
        let moved = TransformedField::new(self.flow, self.eps, inner);
        let closed = moved.push_jet(t, x, inner_jet);
        let run = || -> Result<GridRecord, FieldError> {
            let fd = fd_jet(&moved, t, x)?;
            let (rank, sv) = hessian_rank(&moved, t, x, self.rank_tol)?;
            Ok(GridRecord {
                t,
                x: x.to_vec(),
                root,
                u: closed.u,
                res_closed: residual(family, &closed)?.abs(),
                res_fd: residual(family, &fd)?.abs(),
                rank: rank as i64,
                singular_values: sv,
                status: Status::Ok,
            })
        };
        run().unwrap_or_else(|e| GridRecord::failed(t, x, root, closed.u, Status::of_field(&e)))
    }

    fn point(&self, t: f64, x: &[f64]) -> Vec<GridRecord> {
        let n = x.len();
        let mut z = vec![t];
        z.extend_from_slice(x);
        z.push(0.0);
        let pre = self.flow.map_point(-self.eps, &z);
        let (pt, px) = (pre[0], &pre[1..=n]);
        match self.model {
            Model::Linear { solution, .. } => vec![self.record(solution, &solution.jet(pt, px), t, x, 0)],
            Model::Implicit(sol) => {
                let roots = match sol.evaluate(pt, px, self.cfg) {
                    Ok(res) => res.roots,
                    Err(e) => return vec![GridRecord::failed(t, x, -1, f64::NAN, Status::of_solve(&e))],
                };
                roots
                    .iter()
                    .enumerate()
                    .map(|(i, root)| match RootTrackedField::new(sol, pt, px, root, self.cfg) {
                        Ok(tracked) => self.record(&tracked, &sol.jet_closed_form(pt, px, root), t, x, i as i64),
                        Err(e) => GridRecord::failed(t, x, i as i64, f64::NAN, Status::of_field(&e)),
                    })
                    .collect()
            }
        }
    }
}

/// Row parameters implied by the family itself, so that generators which
/// depend on β or the ε's match the solution being transformed.
fn family_params(spec: Option<&FamilySpec>) -> RowParams {
    let mut params = RowParams::default();
    match spec {
        Some(FamilySpec::Power { beta }) => params.beta = *beta,
        Some(FamilySpec::Quadratic { eps1, eps2 }) => {
            params.eps1 = *eps1;
            params.eps2 = *eps2;
        }
        _ => {}
    }
    params
}

pub fn flow(scenario: &Scenario, generator: &str, eps: f64, opts: &Options) -> Result<i32> {
    let model = scenario.model()?;
    let n = scenario.n()?;
    let row_id = match &scenario.table {
        Some(t) => t.row,
        None => model.family().row().context("family is not tied to a table row; add a `table` block")?,
    };
    let params = match &scenario.table {
        Some(t) => t.params.clone(),
        None => family_params(scenario.family.as_ref()),
    };
    let row = Row::new(row_id, n, &params)?;
    let Some(g) = row.generator(generator) else {
        let ids: Vec<&str> = row.generators.iter().map(|g| g.id.as_str()).collect();
        bail!("unknown generator `{generator}` for row {row_id}; available: {}", ids.join(", "));
    };
    let flow = AffineFlow::new(&g.id, &g.field)?;
    let points = scenario.grid()?.points();
    let cfg = scenario.newton(opts.seed.unwrap_or(scenario.rng_seed));
    let rank_tol = scenario.rank_tol.unwrap_or(eikon_core::verify::DEFAULT_RANK_TOL);
    let run = FlowRun { model: &model, flow: &flow, eps, cfg: &cfg, rank_tol };
    let records: Vec<Vec<GridRecord>> =
        pool(opts.threads)?.install(|| points.par_iter().map(|(t, x)| run.point(*t, x)).collect());
    let records: Vec<GridRecord> = records.into_iter().flatten().collect();
    write_grid(&records, n, opts.out)?;
    summarize(&format!("flow {generator} (eps = {eps})"), points.len(), &records);

    let ok: Vec<&GridRecord> = records.iter().filter(|r| r.status == Status::Ok).collect();
    let pass = ok.iter().filter(|r| r.res_fd <= FLOW_RESIDUAL_TOL).count();
    let frac = pass as f64 / ok.len().max(1) as f64;
    eprintln!("  FD residual ≤ {FLOW_RESIDUAL_TOL:.0e} at {pass}/{} ok rows", ok.len());
    Ok(if !ok.is_empty() && frac >= FLOW_PASS_FRACTION { 0 } else { EXIT_NOTHING_OK })
}
