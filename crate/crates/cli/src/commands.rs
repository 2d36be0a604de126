use std::fmt::Write as _;
use std::path::PathBuf;

use csav::diagnostics::EnergyTrace;
use csav::grid::ScalarField;
use csav::harness::{self, HarnessError, ReferenceCache, LIBRARY_VERSION};
use csav::integrators::Scheme;
use csav::models::ModelSpec;
use csav::snapshot;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::RunDir;

/// Accurate-energy step the published comparisons use.
const PUBLISHED_REFERENCE_DT: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Run,
    Converge,
    Sweep,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Converge => "converge",
            Command::Sweep => "sweep",
            Command::Compare => "compare",
        }
    }
}

pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
    pub preset: Option<String>,
    pub output_root: PathBuf,
    pub dir_name: String,
    pub jobs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

pub struct Outcome {
    pub dir: PathBuf,
    pub assertions: Vec<Assertion>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

/// Everything a command produces besides the files it writes itself.
#[derive(Default)]
struct Report {
    assertions: Vec<Assertion>,
    references: Vec<Value>,
}

/// Command-specific requirements, checked before anything is written.
pub fn precheck(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    let exp = &cfg.experiment;
    let fail = |msg: &str| Err(CliError::Validation(msg.to_string()));
    match command {
        Command::Converge if exp.dt_list.len() < 2 => fail("converge needs at least two entries in experiment.dt_list"),
        Command::Sweep if exp.alpha_list.is_empty() && exp.dt_list.is_empty() => {
            fail("sweep needs experiment.alpha_list and/or experiment.dt_list")
        }
        Command::Compare if exp.schemes.is_empty() => fail("compare needs experiment.schemes"),
        _ => Ok(()),
    }
}

pub fn execute(inv: &Invocation) -> Result<Outcome, CliError> {
    precheck(inv.command, &inv.config)?;
    let (grid, model) = inv.config.build()?;
    let phi0 = harness::build_initial(&inv.config.initial, &grid).map_err(CliError::from)?;
    let dir = RunDir::create(&inv.output_root, &inv.dir_name)?;
    let mut report = Report::default();
    let result = match inv.command {
        Command::Run => cmd_run(inv, &model, &phi0, &dir, &mut report),
        Command::Converge => cmd_converge(inv, &model, &phi0, &dir, &mut report),
        Command::Sweep => cmd_sweep(inv, &model, &phi0, &dir, &mut report),
        Command::Compare => cmd_compare(inv, &model, &phi0, &dir, &mut report),
    };
    let status = match &result {
        Ok(()) if report.assertions.iter().all(|a| a.passed) => "passed".to_string(),
        Ok(()) => "assertion_failed".to_string(),
        Err(CliError::Diverged(_)) => "diverged".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    dir.write_json("manifest.json", &manifest(inv, &report, &status))?;
    let path = dir.commit()?;
    match result {
        Ok(()) => Ok(Outcome {
            dir: path,
            assertions: report.assertions,
        }),
        Err(CliError::Diverged(msg)) => Err(CliError::Diverged(format!("{msg}; partial results in {}", path.display()))),
        Err(e) => Err(e),
    }
}

fn manifest(inv: &Invocation, report: &Report, status: &str) -> Value {
    let config = inv.config.to_value();
    let input_hash = harness::hex_digest(&serde_json::to_vec(&config).expect("config serializes"));
    json!({
        "tool": "csav",
        "version": LIBRARY_VERSION,
        "command": inv.command.name(),
        "preset": inv.preset,
        "status": status,
        "input_hash": input_hash,
        "seed": inv.config.initial.seed(),
        "scheme": inv.config.scheme.scheme,
        "bootstrap": inv.config.scheme.bootstrap,
        "jobs": inv.jobs,
        "references": report.references,
        "assertions": report.assertions,
        "config": config,
    })
}

fn write_trace(dir: &RunDir, file: &str, trace: &EnergyTrace, decimation: usize) -> Result<(), CliError> {
    dir.write_text(file, &trace.to_csv_string(decimation))
}

fn write_field(dir: &RunDir, stem: &str, field: &ScalarField, csv: bool) -> Result<(), CliError> {
    let bin = dir.path(&format!("{stem}.bin"));
    snapshot::save_binary(field, &bin).map_err(CliError::io("writing snapshot", &bin))?;
    if csv {
        let p = dir.path(&format!("{stem}.csv"));
        snapshot::save_csv(field, &p).map_err(CliError::io("writing snapshot", &p))?;
    }
    Ok(())
}

fn trace_assertions(inv: &Invocation, trace: &EnergyTrace, out: &mut Vec<Assertion>) {
    let expect = &inv.config.experiment.expect;
    let skip_bootstrap = inv.config.scheme.scheme == Scheme::CsavBdf2;
    if expect.energy_monotone {
        let v = trace.energy_violations(inv.config.experiment.rel_slack, skip_bootstrap);
        let detail = match v.first() {
            None => format!("{} steps, no increase", trace.len().saturating_sub(1)),
            Some(first) => format!("{} increases, first at step {}", v.len(), first.step),
        };
        out.push(Assertion::new("energy_monotone", v.is_empty(), detail));
    }
    if let Some(bound) = expect.max_r_deviation {
        let dev = trace.max_r_deviation();
        out.push(Assertion::new(
            "max_r_deviation",
            dev <= bound,
            format!("max|r-1| = {dev:.3e}, bound {bound:.1e}"),
        ));
    }
    if let Some(bound) = expect.max_mass_drift {
        let drift = trace.max_mass_drift();
        out.push(Assertion::new(
            "max_mass_drift",
            drift <= bound,
            format!("drift = {drift:.3e}, bound {bound:.1e}"),
        ));
    }
}

fn cmd_run(
    inv: &Invocation,
    model: &ModelSpec,
    phi0: &ScalarField,
    dir: &RunDir,
    report: &mut Report,
) -> Result<(), CliError> {
    let cfg = &inv.config;
    let out = &cfg.output;
    match harness::run_simulation(model, &cfg.scheme, phi0, cfg.experiment.t_final, &out.snapshot_times) {
        Ok(run) => {
            write_trace(dir, "trace.csv", &run.trace, out.decimation)?;
            if !run.snapshots.is_empty() {
                dir.subdir("snapshots")?;
            }
            let mut index = Vec::new();
            for snap in &run.snapshots {
                let stem = format!("snapshots/t_{}", snap.requested);
                write_field(dir, &stem, &snap.field, out.snapshot_csv)?;
                index.push(json!({"requested": snap.requested, "t": snap.t, "step": snap.step, "file": format!("{stem}.bin")}));
            }
            write_field(dir, "final", &run.final_state.phi, false)?;
            dir.write_json("snapshots.json", &index)?;
            trace_assertions(inv, &run.trace, &mut report.assertions);
            Ok(())
        }
        Err(HarnessError::Diverged(d)) => {
            write_trace(dir, "trace.csv", &d.trace, out.decimation)?;
            write_field(dir, "last_good", &d.last_good.phi, false)?;
            Err(CliError::Diverged(d.to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_converge(
    inv: &Invocation,
    model: &ModelSpec,
    phi0: &ScalarField,
    dir: &RunDir,
    report: &mut Report,
) -> Result<(), CliError> {
    let exp = &inv.config.experiment;
    let alphas = if exp.alpha_list.is_empty() {
        vec![inv.config.scheme.alpha]
    } else {
        exp.alpha_list.clone()
    };
    let cache = ReferenceCache::on_disk(inv.output_root.join(".reference-cache"));
    let mut csv = String::from("alpha,dt,error,order,r_deviation,r_error\n");
    let mut results = Vec::new();
    for &alpha in &alphas {
        let mut cfg = inv.config.scheme.clone();
        cfg.alpha = alpha;
        let res = harness::convergence_study(
            model,
            &cfg,
            &exp.dt_list,
            phi0,
            exp.t_final,
            &exp.reference,
            &cache,
            inv.jobs,
        )?;
        for row in &res.rows {
            let order = row.order.map(|o| format!("{o:.6}")).unwrap_or_default();
            let _ = writeln!(
                csv,
                "{alpha:e},{:e},{:.10e},{order},{:.6e},{:.6e}",
                row.dt, row.error, row.r_deviation, row.r_error
            );
        }
        if let Some([lo, hi]) = exp.expect.order_range {
            let orders = res.orders();
            let ok = !orders.is_empty() && orders.iter().all(|o| (lo..=hi).contains(o));
            let shown: Vec<String> = orders.iter().map(|o| format!("{o:.3}")).collect();
            report.assertions.push(Assertion::new(
                &format!("order_range[alpha={alpha:e}]"),
                ok,
                format!("orders [{}] against [{lo}, {hi}]", shown.join(", ")),
            ));
        }
        report.references.push(serde_json::to_value(&res.reference).expect("serializable"));
        results.push(res);
    }
    dir.write_text("convergence.csv", &csv)?;
    dir.write_json("summary.json", &json!({"results": results, "assertions": report.assertions}))
}

fn cmd_sweep(
    inv: &Invocation,
    model: &ModelSpec,
    phi0: &ScalarField,
    dir: &RunDir,
    report: &mut Report,
) -> Result<(), CliError> {
    let exp = &inv.config.experiment;
    let mut summary = json!({});
    if !exp.alpha_list.is_empty() {
        let sweep = harness::alpha_sweep(model, &inv.config.scheme, &exp.alpha_list, phi0, exp.t_final, inv.jobs)?;
        let mut csv = String::from("alpha,max_r_deviation,ratio_to_next\n");
        for (i, row) in sweep.rows.iter().enumerate() {
            let ratio = sweep.ratios.get(i).map(|r| format!("{r:.6}")).unwrap_or_default();
            let _ = writeln!(csv, "{:e},{:.10e},{ratio}", row.alpha, row.max_r_deviation);
        }
        dir.write_text("alpha_sweep.csv", &csv)?;
        if let Some([lo, hi]) = exp.expect.alpha_ratio_range {
            let shown: Vec<String> = sweep.ratios.iter().map(|r| format!("{r:.3}")).collect();
            report.assertions.push(Assertion::new(
                "alpha_ratio_range",
                !sweep.ratios.is_empty() && sweep.ratios_within(lo, hi),
                format!("ratios [{}] against [{lo}, {hi}]", shown.join(", ")),
            ));
        }
        summary["alpha_sweep"] = serde_json::to_value(&sweep).expect("serializable");
    }
    if !exp.dt_list.is_empty() {
        let rows = harness::stability_sweep(
            model,
            &inv.config.scheme,
            &exp.dt_list,
            phi0,
            exp.t_final,
            exp.rel_slack,
            inv.jobs,
        )?;
        dir.subdir("stability")?;
        let mut csv = String::from("dt,steps,violations,first_violation_step,max_relative_change\n");
        let mut table = Vec::new();
        for row in &rows {
            let first = row.violations.first().map(|v| v.step.to_string()).unwrap_or_default();
            let _ = writeln!(
                csv,
                "{:e},{},{},{first},{:.6e}",
                row.dt,
                row.steps,
                row.violations.len(),
                row.max_relative_change
            );
            write_trace(
                dir,
                &format!("stability/trace_dt_{:e}.csv", row.dt),
                &row.trace,
                inv.config.output.decimation,
            )?;
            table.push(json!({"dt": row.dt, "steps": row.steps, "violations": row.violations.len(), "passed": row.passed()}));
        }
        dir.write_text("stability.csv", &csv)?;
        if exp.expect.energy_monotone {
            let failing: Vec<String> = rows.iter().filter(|r| !r.passed()).map(|r| format!("{:e}", r.dt)).collect();
            report.assertions.push(Assertion::new(
                "energy_monotone",
                failing.is_empty(),
                format!("{} step sizes, failing [{}]", rows.len(), failing.join(", ")),
            ));
        }
        summary["stability"] = Value::Array(table);
    }
    summary["assertions"] = serde_json::to_value(&report.assertions).expect("serializable");
    dir.write_json("summary.json", &summary)
}

fn cmd_compare(
    inv: &Invocation,
    model: &ModelSpec,
    phi0: &ScalarField,
    dir: &RunDir,
    report: &mut Report,
) -> Result<(), CliError> {
    let exp = &inv.config.experiment;
    let reference_dt = exp.reference_dt.unwrap_or(PUBLISHED_REFERENCE_DT);
    let table = harness::scheme_comparison(
        model,
        &inv.config.scheme,
        &exp.schemes,
        phi0,
        exp.t_final,
        reference_dt,
        inv.jobs,
    )?;
    let mut reference = json!({"scheme": Scheme::SicnRef, "dt": reference_dt, "alpha": 0.0});
    if reference_dt != PUBLISHED_REFERENCE_DT {
        reference["note"] = json!(format!("accurate energy computed at dt = {reference_dt:e} instead of 1e-5"));
    }
    report.references.push(reference);

    let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
    let mut csv = String::from("scheme,final_error,max_ratio_deviation,max_energy_deviation,failure\n");
    dir.subdir("series")?;
    for row in &table.rows {
        let failure = row.failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            csv,
            "{},{},{},{},{failure}",
            row.scheme,
            opt(row.final_error),
            opt(row.max_ratio_deviation),
            opt(row.max_energy_deviation)
        );
        let mut series = String::from("t,energy,reference_energy,ratio\n");
        for p in &row.series {
            let ratio = p.ratio.map(|r| format!("{r:.17e}")).unwrap_or_default();
            let _ = writeln!(series, "{:.17e},{:.17e},{:.17e},{ratio}", p.t, p.energy, p.reference_energy);
        }
        dir.write_text(&format!("series/{}.csv", row.scheme), &series)?;
    }
    dir.write_text("comparison.csv", &csv)?;

    let failed: Vec<String> = table
        .rows
        .iter()
        .filter_map(|r| r.failure.as_ref().map(|f| format!("{}: {f}", r.scheme)))
        .collect();
    report.assertions.push(Assertion::new(
        "all_schemes_completed",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} schemes", table.rows.len())
        } else {
            failed.join("; ")
        },
    ));
    if exp.expect.csav_closest {
        report.assertions.push(csav_closest(&table));
    }
    dir.write_json("summary.json", &json!({"table": table, "assertions": report.assertions}))
}

fn csav_closest(table: &harness::ComparisonTable) -> Assertion {
    let Some(csav) = table.rows.iter().find(|r| r.scheme == Scheme::CsavCn) else {
        return Assertion::new("csav_closest", false, "csav-cn is not among the compared schemes".into());
    };
    let mut ok = csav.failure.is_none();
    let mut detail = Vec::new();
    for other in table.rows.iter().filter(|r| r.scheme != Scheme::CsavCn) {
        let pairs = [
            ("ratio", csav.max_ratio_deviation, other.max_ratio_deviation),
            ("energy", csav.max_energy_deviation, other.max_energy_deviation),
        ];
        for (what, a, b) in pairs {
            match (a, b) {
                (Some(a), Some(b)) => {
                    ok &= a <= b;
                    detail.push(format!("{what}: csav-cn {a:.3e} vs {} {b:.3e}", other.scheme));
                }
                _ => {
                    ok = false;
                    detail.push(format!("{what}: missing value for {}", other.scheme));
                }
            }
        }
    }
    Assertion::new("csav_closest", ok, detail.join("; "))
}
