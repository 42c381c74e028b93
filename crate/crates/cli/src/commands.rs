use std::fs;
use std::path::Path;

use adelim_core::lindblad::Lindbladian;
use adelim_core::qops::{DensityOperator, Operator};
use adelim_core::reduce::{reduce, CompositeModel, ReductionResult};
use adelim_core::tlsbath;
use adelim_core::verify::{
    compare_full_vs_reduced, cptp_order_check, default_horizon, defect_scaling, epsilon_scaling_fit,
    invariance_residual, ComparisonOptions, CptpReport, DefectScaling, EmbeddingForm, VerifyError,
};
use thiserror::Error;

use crate::config::{ConfigError, ModelSpec, RunConfig};
use crate::report::{matrix_text, num, short, short_c, write_csv, write_text, Table};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
        }
    }
}

fn solver<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Solver(e.to_string())
}

fn model_spec(cfg: &RunConfig) -> Result<&ModelSpec, CliError> {
    cfg.model.as_ref().ok_or_else(|| CliError::Config("this command needs a [model] section".into()))
}

fn build_model(cfg: &RunConfig) -> Result<CompositeModel, CliError> {
    model_spec(cfg)?.build(cfg.seed).map_err(CliError::Solver)
}

fn prepare_out(cfg: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.out)?;
    Ok(&cfg.out)
}

fn generator_text(name: &str, gen: &Lindbladian) -> String {
    let mut s = format!("{name}: Hamiltonian\n{}", matrix_text(gen.hamiltonian()));
    if gen.jumps().is_empty() {
        s.push_str(&format!("{name}: no dissipators\n"));
    }
    for (i, j) in gen.jumps().iter().enumerate() {
        s.push_str(&format!("{name}: dissipator {i}, rate {}\n{}", short(j.rate), matrix_text(&j.operator)));
    }
    s
}

fn generator_csv(rows: &mut Vec<Vec<String>>, name: &str, gen: &Lindbladian) {
    push_matrix(rows, &format!("{name}.hamiltonian"), "", gen.hamiltonian());
    for (i, j) in gen.jumps().iter().enumerate() {
        rows.push(vec![format!("{name}.rate"), i.to_string(), String::new(), String::new(), num(j.rate), num(0.0)]);
        push_matrix(rows, &format!("{name}.jump"), &i.to_string(), &j.operator);
    }
}

fn push_matrix(rows: &mut Vec<Vec<String>>, name: &str, k: &str, m: &Operator) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            rows.push(vec![name.into(), k.into(), i.to_string(), j.to_string(), num(m[(i, j)].re), num(m[(i, j)].im)]);
        }
    }
}

const REDUCE_CSV_HEADER: [&str; 6] = ["quantity", "k", "i", "j", "re", "im"];

pub fn reduce_report(model: &CompositeModel, r: &ReductionResult) -> (String, Vec<Vec<String>>) {
    let mut text = String::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let scalar = |rows: &mut Vec<Vec<String>>, name: &str, k: String, re: f64, im: f64| {
        rows.push(vec![name.into(), k, String::new(), String::new(), num(re), num(im)]);
    };
    text.push_str(&format!(
        "environments K = {}, dim A = {}, dim B = {}, epsilon = {}, c = {}, order = {}, gauge = {}\n\n",
        model.num_fast(),
        model.dims_a().total(),
        model.dim_b(),
        short(model.epsilon()),
        short(r.cb.value),
        r.order,
        r.gauge
    ));
    scalar(&mut rows, "epsilon", String::new(), model.epsilon(), 0.0);
    scalar(&mut rows, "c", String::new(), r.cb.value, 0.0);

    let mut zt = Table::new("per-environment coefficients", &["k", "z0", "z1", "z2"]);
    for (k, t) in r.first.per_k.iter().enumerate() {
        zt.push(vec![k.to_string(), short_c(t.z0), short_c(t.z1), short_c(t.z2)]);
        scalar(&mut rows, "z0", k.to_string(), t.z0.re, t.z0.im);
        scalar(&mut rows, "z1", k.to_string(), t.z1.re, t.z1.im);
        scalar(&mut rows, "z2", k.to_string(), t.z2.re, t.z2.im);
    }
    text.push_str(&zt.to_text());
    text.push('\n');

    text.push_str(&generator_text("L_s0", &r.l_s0));
    generator_csv(&mut rows, "L_s0", &r.l_s0);
    if r.order >= 1 {
        text.push_str(&generator_text("L_s1", &r.l_s1));
        generator_csv(&mut rows, "L_s1", &r.l_s1);
    }
    if let Some(s) = &r.second {
        text.push('\n');
        let mut rt = Table::new("second-order rates", &["k", "H coeff BB†", "H coeff B†B", "rate B†", "rate B"]);
        for (k, c) in s.per_k.iter().enumerate() {
            rt.push(vec![k.to_string(), short(c.h_bbdag), short(c.h_bdagb), short(c.rate_bdag), short(c.rate_b)]);
            scalar(&mut rows, "h_bbdag", k.to_string(), c.h_bbdag, 0.0);
            scalar(&mut rows, "h_bdagb", k.to_string(), c.h_bdagb, 0.0);
            scalar(&mut rows, "rate_bdag", k.to_string(), c.rate_bdag, 0.0);
            scalar(&mut rows, "rate_b", k.to_string(), c.rate_b, 0.0);
        }
        text.push_str(&rt.to_text());
        text.push_str(&format!("cross-term coefficient of [B, B†] (sum over pairs): {}\n\n", short(s.total_cross())));
        for (k, row) in s.delta_cross.iter().enumerate() {
            for (kp, &d) in row.iter().enumerate() {
                if k > kp {
                    rows.push(vec!["delta_cross".into(), k.to_string(), kp.to_string(), String::new(), num(d), num(0.0)]);
                }
            }
        }
        text.push_str(&generator_text("L_s2", &s.l_s2));
        generator_csv(&mut rows, "L_s2", &s.l_s2);
        match &s.k2 {
            Some(k2) => {
                let d = &k2.diagnostics;
                text.push_str(&format!(
                    "\nsecond-order embedding: tau = {}, f1 = {}, f2 = {}, Kraus form N {}\n",
                    short(k2.tau_bar),
                    short(k2.f1),
                    short(k2.f2),
                    if k2.n.is_some() { "available" } else { "unavailable" }
                ));
                let mut bt = Table::new("", &["k", "b"]);
                for (k, single) in k2.per_k.iter().enumerate() {
                    bt.push(vec![k.to_string(), short_c(single.b)]);
                    scalar(&mut rows, "b", k.to_string(), single.b.re, single.b.im);
                }
                text.push_str(&bt.to_text());
                text.push_str(&format!(
                    "identity residual {}, U residual {}, trace defect {}, kernel min eigenvalue {}\n",
                    short(d.kbar_residual),
                    short(d.u_residual),
                    short(d.trace_defect),
                    short(d.kernel_min_eigenvalue)
                ));
                for (name, v) in [("tau", k2.tau_bar), ("f1", k2.f1), ("f2", k2.f2)] {
                    scalar(&mut rows, name, String::new(), v, 0.0);
                }
            }
            None => text.push_str("\nsecond-order embedding not constructed (needs c > 0)\n"),
        }
    }
    (text, rows)
}

pub fn cmd_reduce(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = build_model(cfg)?;
    let r = reduce(&model, cfg.order, cfg.gauge).map_err(solver)?;
    let (text, rows) = reduce_report(&model, &r);
    let out = prepare_out(cfg)?;
    write_text(&out.join("reduce.txt"), &text)?;
    write_csv(&out.join("reduce.csv"), &REDUCE_CSV_HEADER, &rows)?;
    print!("{text}");
    Ok(Outcome::Pass)
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub residuals: Table,
    pub cptp: Table,
    pub scaling: Table,
    pub passed: bool,
}

fn exponent_cell(s: &DefectScaling) -> String {
    match s {
        DefectScaling::Exact => "exact".into(),
        DefectScaling::Fitted(r) => format!("{:.3}", r.fitted_slope),
    }
}

pub fn verify_result(
    model: &CompositeModel,
    r: &ReductionResult,
    cfg: &RunConfig,
) -> Result<VerifyReport, VerifyError> {
    let mut passed = true;
    let mut residuals = Table::new("invariance residuals", &["order", "residual_fro", "residual_rel", "tolerance", "status"]);
    for order in 0..=r.order {
        let rep = invariance_residual(model, r, order)?;
        let tol = cfg.tolerances.residual[order];
        let ok = rep.residual_rel <= tol;
        passed &= ok;
        residuals.push(vec![
            order.to_string(),
            num(rep.residual_fro),
            num(rep.residual_rel),
            num(tol),
            status(ok).into(),
        ]);
    }

    let mut cptp = Table::new("embedding CPTP checks", &["order", "form", "epsilon", "min_choi_eigenvalue", "trace_defect"]);
    let mut scaling = Table::new("defect scaling exponents", &["order", "form", "quantity", "exponent", "minimum", "status"]);
    if r.order >= 1 && !cfg.epsilons.is_empty() {
        for order in 1..=r.order {
            let reports = cptp_order_check(r, &cfg.epsilons, order)?;
            for rep in &reports {
                cptp.push(vec![
                    order.to_string(),
                    form_name(rep.form).into(),
                    num(rep.epsilon_used),
                    num(rep.min_choi_eigenvalue),
                    num(rep.trace_defect),
                ]);
            }
            if epsilon_scaling_fit(&cfg.epsilons, &vec![1.0; cfg.epsilons.len()]).is_ok() {
                let min = cfg.tolerances.min_exponent[order - 1];
                for form in [EmbeddingForm::Series, EmbeddingForm::Kraus] {
                    let of_form: Vec<&CptpReport> = reports.iter().filter(|x| x.form == form).collect();
                    let trace: Vec<f64> = of_form.iter().map(|x| x.trace_defect).collect();
                    let cp: Vec<f64> = of_form.iter().map(|x| x.cp_violation()).collect();
                    for (quantity, values) in [("trace_defect", trace), ("cp_violation", cp)] {
                        let s = defect_scaling(&cfg.epsilons, &values)?;
                        let ok = s.passes(min);
                        passed &= ok;
                        scaling.push(vec![
                            order.to_string(),
                            form_name(form).into(),
                            quantity.into(),
                            exponent_cell(&s),
                            format!("{min}"),
                            status(ok).into(),
                        ]);
                    }
                }
            }
        }
    }
    Ok(VerifyReport { residuals, cptp, scaling, passed })
}

fn form_name(f: EmbeddingForm) -> &'static str {
    match f {
        EmbeddingForm::Series => "series",
        EmbeddingForm::Kraus => "kraus",
    }
}

fn status(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn table_csv(path: &Path, t: &Table) -> std::io::Result<()> {
    let headers: Vec<&str> = t.headers.iter().map(String::as_str).collect();
    write_csv(path, &headers, &t.rows)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = build_model(cfg)?;
    let r = reduce(&model, cfg.order, cfg.gauge).map_err(solver)?;
    if r.second.as_ref().is_some_and(|s| s.k2.is_none()) {
        return Err(CliError::Solver(format!(
            "the second-order embedding is only constructed for c > 0 (c = {}); verify at order 1 instead",
            r.cb.value
        )));
    }
    let rep = verify_result(&model, &r, cfg).map_err(solver)?;
    let mut text = rep.residuals.to_text();
    if !rep.cptp.rows.is_empty() {
        text.push('\n');
        text.push_str(&rep.cptp.to_text());
    }
    if !rep.scaling.rows.is_empty() {
        text.push('\n');
        text.push_str(&rep.scaling.to_text());
    }
    text.push_str(&format!("\noverall: {}\n", if rep.passed { "pass" } else { "FAIL" }));
    let out = prepare_out(cfg)?;
    write_text(&out.join("verify.txt"), &text)?;
    table_csv(&out.join("verify_residuals.csv"), &rep.residuals)?;
    table_csv(&out.join("verify_cptp.csv"), &rep.cptp)?;
    table_csv(&out.join("verify_scaling.csv"), &rep.scaling)?;
    print!("{text}");
    Ok(if rep.passed { Outcome::Pass } else { Outcome::Fail })
}

pub const SWEEP_HEADER: [&str; 6] = ["delta_c_hz", "v_tilde_hz", "n_photons", "shift_hz", "gamma_a_hz", "gamma_adag_hz"];

/// `n` grid points spread evenly over the table, as `(i_Δc, i_ṽ)`.
fn sample_points(n_dc: usize, n_v: usize, n: usize) -> Vec<(usize, usize)> {
    let total = n_dc * n_v;
    if n == 0 || total == 0 {
        return Vec::new();
    }
    let n = n.min(total);
    let mut idx: Vec<usize> = (0..n).map(|i| if n == 1 { 0 } else { i * (total - 1) / (n - 1) }).collect();
    idx.dedup();
    idx.into_iter().map(|i| (i / n_v, i % n_v)).collect()
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("sweep needs a [sweep] section".into()))?;
    let table = tlsbath::sweep(&spec.grid).map_err(solver)?;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| vec![num(r.delta_c), num(r.v_tilde), num(r.n_photons), num(r.shift), num(r.gamma_a), num(r.gamma_adag)])
        .collect();
    let out = prepare_out(cfg)?;
    write_csv(&out.join("sweep.csv"), &SWEEP_HEADER, &rows)?;

    let finite = table.all_finite();
    let points = sample_points(table.n_delta_c, table.n_v_tilde, spec.cross_check);
    let check = tlsbath::cross_check(&spec.grid, &points).map_err(solver)?;
    let passed = finite && check <= 1e-9;
    println!(
        "{} rows ({} delta_c x {} v_tilde, {} TLS)\nall finite: {finite}\nlargest shift step / range: {:.4}\ngain-dominated points: {}\nnumeric cross-check on {} points: max rel error {:.3e}\noverall: {}",
        table.rows.len(),
        table.n_delta_c,
        table.n_v_tilde,
        spec.grid.delta_q.len(),
        table.max_relative_step(|r| r.shift),
        table.gain_dominated().len(),
        points.len(),
        check,
        if passed { "pass" } else { "FAIL" }
    );
    Ok(if passed { Outcome::Pass } else { Outcome::Fail })
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spec = model_spec(cfg)?;
    let model = build_model(cfg)?;
    let r = reduce(&model, cfg.order, cfg.gauge).map_err(solver)?;
    let epsilons = if cfg.epsilons.is_empty() { vec![spec.epsilon()] } else { cfg.epsilons.clone() };
    let sim = &cfg.simulate;
    if sim.initial_level >= model.dim_b() {
        return Err(CliError::Config(format!(
            "[simulate] initial_level {} is outside the target space (dimension {})",
            sim.initial_level,
            model.dim_b()
        )));
    }
    let eps_max = epsilons.iter().copied().fold(0.0, f64::max);
    let horizon = sim.horizon.unwrap_or_else(|| match spec {
        ModelSpec::TlsBath(p) => 5.0 / p.gamma_minus,
        _ => default_horizon(&r, eps_max),
    });
    let rho0 = DensityOperator::basis_state(model.dim_b(), sim.initial_level);
    let out = prepare_out(cfg)?;

    let mut summary = Table::new("trajectory comparison", &["index", "epsilon", "max_err_trace_norm", "trace_drift", "file"]);
    let mut max_errors = Vec::new();
    for (i, &epsilon) in epsilons.iter().enumerate() {
        let opts = ComparisonOptions {
            epsilon,
            horizon,
            steps: sim.steps,
            order: cfg.order,
            off_manifold: sim.off_manifold,
            dimension_cap: sim.dimension_cap,
        };
        let cmp = compare_full_vs_reduced(&model, &r, &rho0, &opts).map_err(solver)?;
        let file = format!("simulate_{i}.csv");
        let rows: Vec<Vec<String>> = cmp.times.iter().zip(&cmp.errors).map(|(t, e)| vec![num(*t), num(*e)]).collect();
        write_csv(&out.join(&file), &["t", "err_trace_norm"], &rows)?;
        summary.push(vec![i.to_string(), num(epsilon), num(cmp.max_error), num(cmp.trace_drift), file]);
        max_errors.push(cmp.max_error);
    }

    let mut text = format!("order {}, horizon {}, steps {}\n", cfg.order, short(horizon), sim.steps);
    text.push_str(&summary.to_text());
    let mut passed = true;
    let mut fit_table = Table::new("error scaling fit", &["slope", "stderr", "expected", "status"]);
    if epsilons.len() > 1 {
        match epsilon_scaling_fit(&epsilons, &max_errors) {
            Ok(fit) => {
                let expected = (cfg.order + 1) as f64;
                let ok = (fit.fitted_slope - expected).abs() <= 0.4;
                passed &= ok;
                fit_table.push(vec![
                    num(fit.fitted_slope),
                    num(fit.slope_stderr),
                    format!("{expected} ± 0.4"),
                    status(ok).into(),
                ]);
                text.push('\n');
                text.push_str(&fit_table.to_text());
            }
            Err(e) => text.push_str(&format!("\nno scaling fit: {e}\n")),
        }
    }
    write_text(&out.join("simulate.txt"), &text)?;
    table_csv(&out.join("simulate_summary.csv"), &summary)?;
    table_csv(&out.join("simulate_fit.csv"), &fit_table)?;
    print!("{text}");
    Ok(if passed { Outcome::Pass } else { Outcome::Fail })
}
