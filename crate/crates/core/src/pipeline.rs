//! Stage orchestration behind the command-line interface.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::algebra::{self, Model, ModelSpec};
use crate::error::{Error, Result};
use crate::hybridgen;
use crate::io::{self, json_cmat, json_num, json_rmat, json_vec, Format, RunConfig, Table};
use crate::linalg::{self, CMat};
use crate::macroflow::{self, MacroTrajectory};
use crate::mesoflow;
use crate::oracle::{self, SweepOptions};
use crate::quasilocal;
use crate::refexample::{self, QubitExampleConfig};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Macro,
    Quasilocal,
    Meso,
    Hybrid,
    Oracle,
    Example,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Macro, Stage::Quasilocal, Stage::Meso, Stage::Hybrid, Stage::Oracle, Stage::Example];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Macro => "macro",
            Stage::Quasilocal => "quasilocal",
            Stage::Meso => "meso",
            Stage::Hybrid => "hybrid",
            Stage::Oracle => "oracle",
            Stage::Example => "example",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown stage {s:?}")))
    }

    /// Comma-separated list; "all" selects every stage.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        if s.trim() == "all" {
            return Ok(Stage::ALL.to_vec());
        }
        let mut v: Vec<Stage> = s.split(',').filter(|x| !x.trim().is_empty()).map(Stage::parse).collect::<Result<_>>()?;
        v.sort();
        v.dedup();
        Ok(v)
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub stages: Vec<Stage>,
    pub out_dir: PathBuf,
    pub format: Format,
    pub workers: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidateOutcome {
    pub report: algebra::ValidationReport,
    pub violations: Vec<String>,
    pub basis_orthonormality: f64,
    pub basis_hermiticity: f64,
    pub structure_real_residue: f64,
    pub passed: bool,
}

pub fn validate(spec: &ModelSpec, tol: &Tolerances) -> ValidateOutcome {
    let report = algebra::validate_model(spec, tol);
    let mut violations = report.violations(tol);
    let (mut orth, mut herm, mut resid) = (f64::NAN, f64::NAN, f64::NAN);
    if let Ok(basis) = algebra::build_basis(spec.d) {
        (herm, orth) = algebra::basis_defects(&basis);
        resid = algebra::structure_tensor(&basis).real_residue();
        if !(orth <= tol.alg && herm <= tol.alg) {
            violations.push(format!("basis defects {orth:.3e}, {herm:.3e}"));
        }
        if resid.is_nan() || resid > tol.alg {
            violations.push(format!("structure tensor real residue {resid:.3e}"));
        }
    }
    let passed = violations.is_empty();
    ValidateOutcome {
        report,
        violations,
        basis_orthonormality: orth,
        basis_hermiticity: herm,
        structure_real_residue: resid,
        passed,
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}_{k}")).collect()
}

fn matrix_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).flat_map(|i| (0..n).map(move |j| format!("{prefix}_{i}_{j}"))).collect()
}

fn row_major(m: &linalg::RMat) -> Vec<f64> {
    (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect()
}

struct Context<'a> {
    cfg: &'a RunConfig,
    model: Model,
    grid: Vec<f64>,
    opts: &'a RunOptions,
    traj: Option<MacroTrajectory>,
}

impl Context<'_> {
    fn ode(&self) -> crate::ode::OdeOptions {
        self.model.tol.ode()
    }

    fn trajectory(&mut self) -> Result<&MacroTrajectory> {
        if self.traj.is_none() {
            let t = macroflow::integrate_macro_at(&self.model, &self.cfg.omega0, &self.grid, &self.ode())?;
            self.traj = Some(t);
        }
        Ok(self.traj.as_ref().expect("trajectory"))
    }

    fn write(&self, table: &Table, stem: &str, out: &mut RunSummary) -> Result<()> {
        out.files.push(table.write(&self.opts.out_dir, stem, self.opts.format)?);
        Ok(())
    }

    fn write_json(&self, value: &Value, stem: &str, out: &mut RunSummary) -> Result<()> {
        let path = self.opts.out_dir.join(format!("{stem}.json"));
        fs::write(&path, serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?)?;
        out.files.push(path);
        Ok(())
    }
}

fn stage_macro(ctx: &mut Context, out: &mut RunSummary) -> Result<Value> {
    let n = ctx.model.n();
    let traj = ctx.trajectory()?.clone();
    let mut cols = vec!["t".to_string()];
    cols.extend(names("omega", n));
    cols.extend(matrix_names("M", n));
    let mut table = Table::new(cols);
    for ((t, w), m) in traj.times.iter().zip(&traj.states).zip(&traj.propagators) {
        let mut row = vec![*t];
        row.extend_from_slice(w);
        row.extend(row_major(m));
        table.push(row);
    }
    ctx.write(&table, "macro", out)?;
    let inv = traj.invariants(&ctx.model);
    Ok(json!({
        "orthogonality": json_num(inv.orthogonality),
        "conservation": json_num(inv.conservation),
        "propagator_consistency": json_num(inv.propagator_consistency),
        "min_state_eig": json_num(inv.min_state_eig),
        "sigma_transport": json_num(mesoflow::sigma_transport_defect(&ctx.model, &traj)),
    }))
}

fn stage_quasilocal(ctx: &mut Context, out: &mut RunSummary) -> Result<Value> {
    let n = ctx.model.n();
    let s = ctx.cfg.support;
    let traj = ctx.trajectory()?.clone();
    let model = &ctx.model;
    let flow = quasilocal::single_site_flow(model, &ctx.cfg.omega0, &traj.times, &ctx.ode())?;
    let rho0 = model.basis.rho(&ctx.cfg.omega0);
    let mut cols = vec!["t".to_string(), "unitarity".to_string(), "average_defect".to_string()];
    cols.extend(names("c", n));
    let mut table = Table::new(cols);
    let (mut worst_u, mut worst_a): (f64, f64) = (0.0, 0.0);
    for ((t, u), w) in flow.times.iter().zip(&flow.single).zip(&traj.states) {
        let us = linalg::tensor_power(u, s);
        let dim = us.nrows();
        let unit = linalg::frob(&(us.adjoint() * &us - CMat::identity(dim, dim)));
        let avg = model
            .basis
            .v
            .iter()
            .zip(w)
            .map(|(v, wg)| (linalg::trace_product(&rho0, &(u.adjoint() * v * u)).re - wg).abs())
            .fold(0.0, f64::max);
        worst_u = worst_u.max(unit);
        worst_a = worst_a.max(avg);
        let mut row = vec![*t, unit, avg];
        row.extend(quasilocal::effective_coefficients(model, w)?);
        table.push(row);
    }
    ctx.write(&table, "quasilocal", out)?;
    let t_end = traj.t_end();
    let (t1, t0) = (t_end, t_end / 3.0);
    let g_late = quasilocal::nonmarkov_generator(model, &traj, s, t1, t0, &ctx.ode())?;
    let g_early = quasilocal::nonmarkov_generator(model, &traj, s, t1 - t0, 0.0, &ctx.ode())?;
    Ok(json!({
        "support": s,
        "max_unitarity_defect": json_num(worst_u),
        "max_average_defect": json_num(worst_a),
        "generator_initial_time_dependence": {
            "t": json_num(t1), "t0": json_num(t0),
            "norm_difference": json_num(g_late.norm_difference(&g_early)),
            "dissipative_norm_difference": json_num(g_late.dissipative_norm_difference(&g_early)),
        },
    }))
}

fn stage_meso(ctx: &mut Context, out: &mut RunSummary) -> Result<Value> {
    let n = ctx.model.n();
    let traj = ctx.trajectory()?.clone();
    let model = &ctx.model;
    let flow = mesoflow::integrate_flow(model, &traj, &ctx.ode())?;
    let certs = mesoflow::certificate_along(&flow);
    let k0 = mesoflow::product_state_kernel(model, &ctx.cfg.omega0)?;
    let mut cols = vec!["t".to_string(), "cert_min_eig".to_string(), "gaussian_validity".to_string()];
    cols.extend(matrix_names("X", n));
    cols.extend(matrix_names("Y", n));
    let mut table = Table::new(cols);
    let mut min_cert = f64::INFINITY;
    for (i, c) in certs.iter().enumerate() {
        let p = flow.point(i);
        let kt = mesoflow::transport_covariance(&k0, &p, model.tol.psd)?;
        min_cert = min_cert.min(*c);
        let mut row = vec![p.t, *c, kt.validity()];
        row.extend(row_major(&p.x));
        row.extend(row_major(&p.y));
        table.push(row);
    }
    if min_cert < -model.tol.psd {
        return Err(Error::CpViolation(min_cert));
    }
    ctx.write(&table, "flow", out)?;
    let cert = mesoflow::cp_certificate(model, &traj, traj.t_end(), &ctx.ode())?;
    Ok(json!({
        "min_certificate_eig": json_num(min_cert),
        "quadrature_discrepancy": json_num(cert.quadrature_discrepancy),
        "y_quadrature_discrepancy": json_num(cert.y_quadrature_discrepancy),
    }))
}

fn stage_hybrid(ctx: &mut Context, out: &mut RunSummary) -> Result<Value> {
    let traj = ctx.trajectory()?.clone();
    let model = &ctx.model;
    let mut table = Table::new(
        ["t", "d0", "d1", "k11_min_eig", "k11_max_eig", "correction_trace", "consistency_defect"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    let mut entries = Vec::new();
    let mut samples = Vec::new();
    for (t, w) in traj.times.iter().zip(&traj.states) {
        match hybridgen::blocks_at(model, w) {
            Ok((split, b)) => {
                let ev = b.k11_eigenvalues();
                let consistency = hybridgen::generator_consistency(model, w, &split, &b, 1e-4);
                let defect = match &consistency {
                    Ok(r) => r.max_defect,
                    Err(Error::Assembly { defect, .. }) => *defect,
                    Err(e) => return Err(Error::InvalidState(format!("consistency check at t = {t}: {e}"))),
                };
                let tr = linalg::trace(&b.k11_correction).norm();
                table.push(vec![
                    *t,
                    b.d0 as f64,
                    b.d1 as f64,
                    ev.first().copied().unwrap_or(f64::NAN),
                    ev.last().copied().unwrap_or(f64::NAN),
                    tr,
                    defect,
                ]);
                entries.push(json!({
                    "t": json_num(*t),
                    "d0": b.d0,
                    "d1": b.d1,
                    "R": json_rmat(&split.r),
                    "sigma11": json_rmat(&b.sigma11),
                    "H11": json_cmat(&b.h11),
                    "H10": json_rmat(&b.h10),
                    "H01": json_rmat(&b.h01),
                    "K11": json_cmat(&b.k11),
                    "K11_eigenvalues": json_vec(&ev),
                    "singular_values": json_vec(&split.singular_values),
                    "consistency_defect": json_num(defect),
                    "assembly_error": consistency.err().map(|e| e.to_string()),
                }));
                samples.push((*t, Ok(hybridgen::BlockSample {
                    t: *t,
                    d0: b.d0,
                    d1: b.d1,
                    k11_min_eig: ev.first().copied().unwrap_or(0.0),
                    k11_max_eig: ev.last().copied().unwrap_or(0.0),
                    correction_trace: tr,
                })));
            }
            Err(e @ (Error::RankAmbiguity { .. } | Error::SingularBlock(_))) => {
                table.push(vec![*t, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN]);
                entries.push(json!({ "t": json_num(*t), "error": e.to_string() }));
                samples.push((*t, Err(e)));
            }
            Err(e) => return Err(e),
        }
    }
    ctx.write(&table, "hybrid", out)?;
    let jumps: Vec<Value> = hybridgen::kernel_jumps(&samples)
        .into_iter()
        .map(|(t, a, b)| json!({ "t": json_num(t), "from": a, "to": b }))
        .collect();
    let k11_min = table.rows.iter().map(|r| r[3]).filter(|x| !x.is_nan()).fold(f64::INFINITY, f64::min);
    ctx.write_json(&json!({ "samples": entries, "kernel_jumps": jumps.clone() }), "hybrid_blocks", out)?;
    Ok(json!({ "k11_min_eig": json_num(k11_min), "kernel_jumps": jumps }))
}

fn stage_oracle(ctx: &mut Context, out: &mut RunSummary) -> Result<Value> {
    let n = ctx.model.n();
    let opts = SweepOptions { ode: ctx.ode(), workers: ctx.opts.workers, ..SweepOptions::default() };
    let rep = oracle::convergence_study(&ctx.model, &ctx.cfg.omega0, ctx.cfg.t_oracle, &ctx.cfg.n_list, &opts)?;
    let mut cols: Vec<String> = ["N", "omega_defect", "sym_defect", "asym_defect", "trace_defect", "min_eig"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(names("defect", n));
    let mut table = Table::new(cols);
    for r in &rep.rows {
        let mut row = vec![r.n as f64, r.omega_defect, r.sym_defect, r.asym_defect, r.trace_defect, r.min_eig];
        row.extend_from_slice(&r.component_defects);
        table.push(row);
    }
    ctx.write(&table, "sweep", out)?;
    let mut cols = vec!["t".to_string()];
    cols.extend(names("omega", n));
    for r in &rep.rows {
        let mut t = Table::new(cols.clone());
        let mut row = vec![rep.t];
        row.extend_from_slice(&r.omega);
        t.push(row);
        ctx.write(&t, &format!("oracle_N{}", r.n), out)?;
    }
    let opt = |x: Option<f64>| x.map(json_num).unwrap_or(Value::Null);
    let summary = json!({
        "t": json_num(rep.t),
        "slope": opt(rep.slope),
        "intercept": opt(rep.intercept),
        "residual": opt(rep.residual),
        "sym_slope": opt(rep.sym_slope),
        "asym_slope": opt(rep.asym_slope),
        "sym_monotone": rep.sym_monotone,
        "asym_monotone": rep.asym_monotone,
    });
    ctx.write_json(&summary, "sweep_fit", out)?;
    Ok(summary)
}

fn stage_example(ctx: &mut Context, out: &mut RunSummary) -> Result<Value> {
    let reference = refexample::example_model();
    let spec = &ctx.model.spec;
    let same = spec.d == 2
        && linalg::frob(&(&spec.c - &reference.c)) < 1e-12
        && linalg::frob(&(&spec.h - &reference.h)) < 1e-12
        && spec.eps.iter().all(|z| z.norm() < 1e-12);
    if !same {
        return Err(Error::Schema("the example stage needs the reference qubit model".into()));
    }
    let spin = refexample::omega_from_basis(&ctx.cfg.omega0);
    let cfg = QubitExampleConfig::new(spin)?;
    let traj = ctx.trajectory()?.clone();
    let mut cols = vec!["t".to_string()];
    cols.extend(names("omega", 4));
    let mut table = Table::new(cols);
    let mut worst: f64 = 0.0;
    for (t, w) in traj.times.iter().zip(&traj.states) {
        let exact = refexample::omega_to_basis(&refexample::analytic_omega(&cfg, *t)?);
        worst = worst.max(exact.iter().zip(w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let mut row = vec![*t];
        row.extend(exact);
        table.push(row);
    }
    ctx.write(&table, "golden", out)?;
    Ok(json!({ "max_macro_vs_golden": json_num(worst), "b": cfg.b.map(json_num) }))
}

/// Runs the selected stages in order and writes their artifacts plus `summary.json`.
pub fn run(cfg: &RunConfig, spec: ModelSpec, opts: &RunOptions) -> std::result::Result<RunSummary, StageError> {
    let setup = |error| StageError { stage: "setup", error };
    let model = Model::new(spec, cfg.tolerances).map_err(setup)?;
    model.check_state(&cfg.omega0).map_err(setup)?;
    fs::create_dir_all(&opts.out_dir).map_err(|e| setup(e.into()))?;
    let grid = macroflow::merge_times(macroflow::uniform_grid(cfg.t_end, cfg.grid), &[cfg.t_oracle]);
    let mut ctx = Context { cfg, model, grid, opts, traj: None };
    let mut out = RunSummary::default();
    for &stage in &opts.stages {
        let r = match stage {
            Stage::Macro => stage_macro(&mut ctx, &mut out),
            Stage::Quasilocal => stage_quasilocal(&mut ctx, &mut out),
            Stage::Meso => stage_meso(&mut ctx, &mut out),
            Stage::Hybrid => stage_hybrid(&mut ctx, &mut out),
            Stage::Oracle => stage_oracle(&mut ctx, &mut out),
            Stage::Example => stage_example(&mut ctx, &mut out),
        };
        let v = r.map_err(|error| StageError { stage: stage.name(), error })?;
        out.summary.insert(stage.name().to_string(), v);
    }
    let path = opts.out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&Value::Object(out.summary.clone()))
        .map_err(|e| StageError { stage: "summary", error: Error::Parse(e.to_string()) })?;
    fs::write(&path, text).map_err(|e| StageError { stage: "summary", error: e.into() })?;
    out.files.push(path);
    Ok(out)
}

/// Writes `model.toml` and `run.toml` for the reference qubit example into `dir`.
pub fn write_example_config(dir: &Path, format: Format) -> Result<(PathBuf, RunConfig)> {
    fs::create_dir_all(dir)?;
    let model = io::ModelFile::from_spec(&refexample::example_model());
    io::write_toml(&dir.join("model.toml"), &model)?;
    let cfg = RunConfig {
        model: io::ModelSource::Path(PathBuf::from("model.toml")),
        omega0: refexample::omega_to_basis(&[0.3, 0.0, 0.4]),
        t_end: 5.0,
        grid: 101,
        support: 2,
        t_oracle: 0.5,
        n_list: (2..=8).collect(),
        tolerances: Tolerances::default(),
        output: io::OutputConfig { dir: PathBuf::from("."), format },
    };
    let path = dir.join("run.toml");
    io::write_toml(&path, &cfg)?;
    Ok((path, cfg))
}
