//! Subcommand bodies. Each returns a summary whose pass flags decide the exit code.

use std::fs;
use std::path::Path;

use ldp_core::assumptions::{check_a1_tail, check_a2_modulus};
use ldp_core::report::{read_pass_column, write_ldp_csv, write_tails_csv};
use ldp_core::sim::Trajectory;
use ldp_core::skeleton::{rate_of_target, skeleton_apriori_bound, solve_skeleton, RateOptions, RateValue};
use ldp_core::tails::{chow_menaldi_check, convolution_eta2, peszat_convolution_check, TailBoundParams};
use ldp_core::verify::{row_seed, sample_paths, verify_lower_bound, verify_upper_bound, LdpReport, TubeMethod};
use ldp_core::{hs_norm, LdpError, SpectralBasis};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{tails_xi, Loaded};
use crate::Failure;

pub const LOWER_CSV: &str = "report_lower.csv";
pub const UPPER_CSV: &str = "report_upper.csv";
pub const TAILS_CSV: &str = "report_tails.csv";
pub const ASSUMPTIONS_CSV: &str = "assumptions.csv";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub check_count: usize,
    pub pass_count: usize,
    pub all_pass: bool,
    pub details: Value,
}

impl Summary {
    fn new(command: &str, loaded: &Loaded, seeds: Vec<u64>, passes: &[bool], details: Value) -> Self {
        let pass_count = passes.iter().filter(|p| **p).count();
        Self {
            command: command.to_string(),
            config: serde_json::to_value(&loaded.table).unwrap_or(Value::Null),
            seeds,
            check_count: passes.len(),
            pass_count,
            all_pass: pass_count == passes.len(),
            details,
        }
    }
}

fn runtime(err: LdpError) -> Failure {
    in_section("run", err)
}

fn in_section(section: &str, err: LdpError) -> Failure {
    match err {
        LdpError::InvalidArgument { name, reason } => {
            let name = match name {
                "r" if section == "assumptions" => "radius",
                other => other,
            };
            Failure::Invalid(format!("invalid {section}.{name}: {reason}"))
        }
        other => Failure::Runtime(other.to_string()),
    }
}

fn io(path: &Path, err: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {err}", path.display()))
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        Value::Null
    } else {
        json!(if v > 0.0 { "inf" } else { "-inf" })
    }
}

fn ldp_details(report: &LdpReport) -> Value {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "epsilon": r.epsilon,
                "estimate": r.estimate,
                "stderr": r.stderr,
                "eps_log_estimate": finite_or_null(r.eps_log_estimate),
                "threshold": r.threshold,
                "pass": r.pass,
                "zero_hit": r.zero_hit,
                "upper_confidence": r.upper_confidence,
                "n_samples": r.n_samples,
                "seed": r.seed,
            })
        })
        .collect();
    json!({
        "rows": rows,
        "smallest_passing_epsilon": report.smallest_passing_eps(),
        "passes_persist_from": report.passes_persist_from(),
    })
}

fn prepare(loaded: &Loaded) -> Result<std::path::PathBuf, Failure> {
    loaded.config.validate()?;
    let dir = loaded.config.output_dir(&loaded.base_dir);
    fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    Ok(dir)
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), Failure> {
    let path = dir.join(SUMMARY_JSON);
    let mut text = serde_json::to_string_pretty(summary).map_err(|e| io(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io(&path, e))
}

pub fn simulate(loaded: &Loaded) -> Result<Summary, Failure> {
    let dir = prepare(loaded)?;
    let cfg = &loaded.config;
    let eq = cfg.equation()?;
    let eps = cfg.simulate.epsilon.unwrap_or(cfg.run.epsilon[0]);
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Failure::Invalid(format!("invalid simulate.epsilon: must lie in (0, 1], got {eps}")));
    }
    let paths = sample_paths(&cfg.initial_point(), &eq, eps, cfg.run.steps, cfg.simulate.paths, cfg.run.seed)
        .map_err(runtime)?;
    let mut files = Vec::new();
    for (k, p) in paths.iter().enumerate() {
        let name = format!("traj_{k:05}.csv");
        p.write_csv(&dir.join(&name)).map_err(runtime)?;
        files.push(name);
    }
    Ok(Summary::new(
        "simulate",
        loaded,
        vec![cfg.run.seed],
        &[],
        json!({ "epsilon": eps, "files": files }),
    ))
}

pub fn skeleton(loaded: &Loaded) -> Result<Summary, Failure> {
    let dir = prepare(loaded)?;
    let cfg = &loaded.config;
    let eq = cfg.equation()?;
    let phi = cfg.control(eq.dim_u())?;
    let x = cfg.initial_point();
    let z = solve_skeleton(&x, &phi, &eq.model).map_err(runtime)?;
    z.write_csv(&dir.join("skeleton.csv")).map_err(runtime)?;
    let (sup, bound) = skeleton_apriori_bound(&x, &phi, &eq.model).map_err(runtime)?;
    Ok(Summary::new(
        "skeleton",
        loaded,
        vec![],
        &[sup <= bound],
        json!({ "energy": phi.energy(), "sup_norm": sup, "apriori_bound": bound, "file": "skeleton.csv" }),
    ))
}

pub fn rate(loaded: &Loaded) -> Result<Summary, Failure> {
    let dir = prepare(loaded)?;
    let cfg = &loaded.config;
    let eq = cfg.equation()?;
    let target = cfg
        .rate
        .target
        .as_ref()
        .ok_or_else(|| Failure::Invalid("invalid rate.target: a trajectory CSV is required".into()))?;
    if !(cfg.rate.tol > 0.0) {
        return Err(Failure::Invalid(format!("invalid rate.tol: must be positive, got {}", cfg.rate.tol)));
    }
    let path = if target.is_absolute() {
        target.clone()
    } else {
        loaded.base_dir.join(target)
    };
    let u = Trajectory::read_csv(&path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    let opts = RateOptions {
        tol: cfg.rate.tol,
        ..RateOptions::default()
    };
    let res = rate_of_target(&cfg.initial_point(), &u, &eq.model, &opts).map_err(runtime)?;
    if let Some(control) = &res.control {
        let rows: Vec<Vec<f64>> = control.values().iter().map(|v| v.iter().copied().collect()).collect();
        let path = dir.join("rate_control.json");
        fs::write(&path, serde_json::to_string(&rows).map_err(|e| io(&path, e))? + "\n").map_err(|e| io(&path, e))?;
    }
    let value = match res.value {
        RateValue::Finite(v) => json!(v),
        RateValue::Infinite => json!("inf"),
    };
    Ok(Summary::new(
        "rate",
        loaded,
        vec![],
        &[res.value.is_finite()],
        json!({ "value": value, "residual": res.residual, "stage": res.stage }),
    ))
}

fn method(name: &str) -> TubeMethod {
    if name == "direct" {
        TubeMethod::Direct
    } else {
        TubeMethod::Importance
    }
}

pub fn verify_lower(loaded: &Loaded) -> Result<Summary, Failure> {
    let dir = prepare(loaded)?;
    let cfg = &loaded.config;
    let eq = cfg.equation()?;
    let phi = cfg.control(eq.dim_u())?;
    let run = &cfg.run;
    let report = verify_lower_bound(
        &cfg.initial_point(),
        &phi,
        run.delta,
        run.gamma,
        &run.epsilon,
        &eq,
        run.n_samples,
        run.seed,
        method(&run.method),
    )
    .map_err(runtime)?;
    write_ldp_csv(&report, &dir.join(LOWER_CSV)).map_err(runtime)?;
    let passes: Vec<bool> = report.rows.iter().map(|r| r.pass).collect();
    let seeds = report.rows.iter().map(|r| r.seed).collect();
    Ok(Summary::new("verify-lower", loaded, seeds, &passes, ldp_details(&report)))
}

pub fn verify_upper(loaded: &Loaded) -> Result<Summary, Failure> {
    let dir = prepare(loaded)?;
    let cfg = &loaded.config;
    let eq = cfg.equation()?;
    let run = &cfg.run;
    let report = verify_upper_bound(
        &cfg.initial_point(),
        run.r,
        run.delta,
        run.gamma,
        &run.epsilon,
        &eq,
        run.n_samples,
        run.seed,
        run.steps,
        &RateOptions::default(),
    )
    .map_err(runtime)?;
    write_ldp_csv(&report, &dir.join(UPPER_CSV)).map_err(runtime)?;
    let passes: Vec<bool> = report.rows.iter().map(|r| r.pass).collect();
    let seeds = report.rows.iter().map(|r| r.seed).collect();
    Ok(Summary::new("verify-upper", loaded, seeds, &passes, ldp_details(&report)))
}

pub fn tails(loaded: &Loaded) -> Result<Summary, Failure> {
    let dir = prepare(loaded)?;
    let cfg = &loaded.config;
    let eq = cfg.equation()?;
    let t = &cfg.tails;
    let xi = tails_xi(cfg, &eq)?;
    let eta1 = t.eta1.unwrap_or_else(|| hs_norm(&xi).powi(2));
    let steps = cfg.run.steps;
    let (n, seed) = (cfg.run.n_samples, cfg.run.seed);
    let mut rows = chow_menaldi_check(&vec![xi.clone(); steps], eta1, &t.deltas, n, seed)
        .map_err(|e| in_section("tails", e))?;
    let eta2 = convolution_eta2(&eq.basis, t.scale, &xi, t.alpha0).map_err(|e| in_section("tails", e))?;
    let params = TailBoundParams::new(t.alpha0, t.p0, &eq.basis, t.scale, eta2).map_err(|e| in_section("tails", e))?;
    let conv_seed = row_seed(seed, 1);
    rows.extend(
        peszat_convolution_check(&eq.basis, t.scale, &xi, &params, &t.deltas, steps, n, conv_seed)
            .map_err(|e| in_section("tails", e))?,
    );
    write_tails_csv(&rows, &dir.join(TAILS_CSV)).map_err(runtime)?;
    let passes: Vec<bool> = rows.iter().map(|r| r.pass).collect();
    Ok(Summary::new(
        "tails",
        loaded,
        vec![seed, conv_seed],
        &passes,
        json!({ "eta1": eta1, "eta2": eta2, "convolution_bound": params, "rows": rows }),
    ))
}

pub fn assumptions(loaded: &Loaded) -> Result<Summary, Failure> {
    let dir = prepare(loaded)?;
    let cfg = &loaded.config;
    let eq = cfg.equation()?;
    let a = &cfg.assumptions;
    let mut records: Vec<(String, f64, f64, bool)> = Vec::new();
    let m = eq.dim_u();
    let mut previous = f64::INFINITY;
    for n in 0..=m {
        let tail = check_a1_tail(&eq.model, a.radius, n, a.samples, cfg.run.seed)
            .map_err(|e| in_section("assumptions", e))?;
        let pass = tail <= previous && (n < m || tail == 0.0);
        records.push(("noise_tail".into(), n as f64, tail, pass));
        previous = tail;
    }
    let basis: &SpectralBasis = &eq.basis;
    let mut previous = f64::INFINITY;
    for &mesh in &a.meshes {
        let rep = check_a2_modulus(basis, a.a, mesh).map_err(|e| in_section("assumptions", e))?;
        let pass = rep.modulus <= previous && rep.max_ratio <= 1.0 + 1e-12;
        records.push(("semigroup_modulus".into(), mesh, rep.modulus, pass));
        previous = rep.modulus;
    }
    let path = dir.join(ASSUMPTIONS_CSV);
    let mut text = String::from("check,parameter,value,pass\n");
    for (check, p, v, pass) in &records {
        text.push_str(&format!("{check},{p},{},{pass}\n", v + 0.0));
    }
    fs::write(&path, text).map_err(|e| io(&path, e))?;
    let passes: Vec<bool> = records.iter().map(|r| r.3).collect();
    Ok(Summary::new(
        "assumptions",
        loaded,
        vec![cfg.run.seed],
        &passes,
        json!({ "file": ASSUMPTIONS_CSV }),
    ))
}

pub fn report(loaded: &Loaded) -> Result<Summary, Failure> {
    let dir = prepare(loaded)?;
    let cfg = &loaded.config;
    let mut files = serde_json::Map::new();
    let mut passes = Vec::new();
    for name in [LOWER_CSV, UPPER_CSV, TAILS_CSV, ASSUMPTIONS_CSV] {
        let path = dir.join(name);
        if !path.exists() {
            continue;
        }
        let column = read_pass_column(&path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
        let count = column.iter().filter(|p| **p).count();
        files.insert(name.to_string(), json!({ "rows": column.len(), "passes": count }));
        passes.extend(column);
    }
    if files.is_empty() {
        return Err(Failure::Parse(format!("no report CSVs found in {}", dir.display())));
    }
    let mut seeds = vec![cfg.run.seed];
    seeds.extend((0..cfg.run.epsilon.len()).map(|i| row_seed(cfg.run.seed, i)));
    seeds.dedup();
    Ok(Summary::new("report", loaded, seeds, &passes, json!({ "reports": files })))
}
