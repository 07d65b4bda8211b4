use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use reinfer_core::baselines::InnerOptions;
use reinfer_core::compare::{compare, CompareConfig, MethodRun};
use reinfer_core::data::{read_csv, CsvSpec};
use reinfer_core::engine::{run_chain, RunConfig};
use reinfer_core::export::{
    coefficient_names, report_rows, write_draws, write_json, write_jsonl, write_report_csv, Diagnostics, ErrorRecord,
    ReportRow,
};
use reinfer_core::inference::summarize;
use reinfer_core::models::{builtin_gradient_checks, make_ols, make_probit, mroz, saddle_demo, simulate_dgp, DgpKind, Nls, SaddleConfig};
use reinfer_core::study::{run_study, Replication};
use reinfer_core::{Dataset, Error, Model, Result};

use crate::config::{echo, Flat, View};

fn coefficient_labels(data: &Dataset, d: usize) -> Vec<String> {
    let names = data.column_names();
    coefficient_names(names.get(1..).unwrap_or(&[]), d)
}

fn build_model(name: &str, d: usize) -> Result<Box<dyn Model>> {
    Ok(match name {
        "ols" => Box::new(make_ols(d)),
        "probit" | "mroz" => Box::new(make_probit(d)),
        "nls-exp" => Box::new(Nls::exponential(d)),
        other => return Err(Error::Config(format!("unknown model '{other}' (expected ols, probit, nls-exp or mroz)"))),
    })
}

/// Dataset and model named by `data`, `model` and the column keys.
pub fn load(view: &View) -> Result<(Dataset, Box<dyn Model>)> {
    let path = view.require_string("data")?;
    let name = view.require_string("model")?;
    let spec = if name == "mroz" {
        mroz::csv_spec()
    } else {
        CsvSpec {
            outcome: view.require_string("outcome")?,
            regressors: view
                .strings("regressors")?
                .ok_or_else(|| Error::Config("config key 'regressors' is required".into()))?,
            cluster: view.string("cluster")?,
            ..CsvSpec::default()
        }
    };
    let data = read_csv(&path, &spec)?;
    let model = build_model(&name, data.width() - 1)?;
    Ok((data, model))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn diagnostics(config: Value, start: Instant) -> Diagnostics {
    Diagnostics { config, failure_log: Vec::new(), wall_time_ms: start.elapsed().as_millis(), acceptance_rate: None, error: None }
}

/// Write `diagnostics.json` carrying `err`, then hand the error back.
fn fail(dir: &Path, config: Value, start: Instant, err: Error) -> Error {
    let mut diag = diagnostics(config, start);
    diag.error = Some(ErrorRecord::from(&err));
    let _ = write_json(&dir.join("diagnostics.json"), &diag);
    err
}

fn print_rows(rows: &[ReportRow]) {
    println!("{:<14} {:>8} {:>12} {:>10} {:>12} {:>12} {:>8}", "coefficient", "method", "estimate", "se", "ci_lo", "ci_hi", "acf1");
    for r in rows {
        println!(
            "{:<14} {:>8} {:>12.6} {:>10.6} {:>12.6} {:>12.6} {:>8.3}",
            r.coefficient, r.method, r.estimate, r.se, r.ci_lo, r.ci_hi, r.autocorr1
        );
    }
}

pub fn fit(flat: &Flat) -> Result<()> {
    let start = Instant::now();
    let view = View(flat);
    let dir = view.out_dir()?;
    prepare_out(&dir)?;
    let (data, model) = load(&view).map_err(|e| fail(&dir, echo(flat, None), start, e))?;
    let run = view.run_config(model.dim()).map_err(|e| fail(&dir, echo(flat, None), start, e))?;
    let config = echo(flat, Some(&run));
    let result = (|| {
        let chain = run_chain(model.as_ref(), &data, &run)?;
        let report = summarize(&chain, view.alpha()?)?;
        Ok((chain, report))
    })();
    let (chain, report) = result.map_err(|e| fail(&dir, config.clone(), start, e))?;
    let names = coefficient_labels(&data, model.dim());
    write_draws(&dir.join("draws.csv"), &chain.burned, &chain.draws, &names)?;
    let rows = report_rows(&report, &names, run.method.as_str());
    write_report_csv(&dir.join("report.csv"), &rows)?;
    write_json(
        &dir.join("report.json"),
        &json!({ "config": config, "method": run.method.as_str(), "coefficients": names, "report": report }),
    )?;
    write_json(&dir.join("config.json"), &config)?;
    let mut diag = diagnostics(config, start);
    diag.failure_log = chain.failure_log.clone();
    write_json(&dir.join("diagnostics.json"), &diag)?;
    print_rows(&rows);
    Ok(())
}

fn compare_config(view: &View, run: RunConfig) -> Result<CompareConfig> {
    let mut cfg = CompareConfig::new(run);
    cfg.alpha = view.alpha()?;
    cfg.dmk_k = view.usize("dmk.k")?.unwrap_or(1);
    cfg.inner = InnerOptions::default();
    Ok(cfg)
}

fn run_row(r: &MethodRun) -> Value {
    json!({
        "method": r.method,
        "report": r.report,
        "acceptance_rate": r.acceptance_rate,
        "failures": r.failures,
        "warning": r.warning,
        "error": r.error,
    })
}

pub fn compare_cmd(flat: &Flat) -> Result<()> {
    let start = Instant::now();
    let view = View(flat);
    let dir = view.out_dir()?;
    prepare_out(&dir)?;
    let (data, model) = load(&view).map_err(|e| fail(&dir, echo(flat, None), start, e))?;
    let run = view.run_config(model.dim()).map_err(|e| fail(&dir, echo(flat, None), start, e))?;
    let config = echo(flat, Some(&run));
    let methods = view.strings("methods")?.unwrap_or_default();
    let cfg = compare_config(&view, run)?;
    let runs = compare(model.as_ref(), &data, &methods, &cfg).map_err(|e| fail(&dir, config.clone(), start, e))?;
    let names = coefficient_labels(&data, model.dim());
    let mut rows = Vec::new();
    for r in &runs {
        match (&r.report, &r.draws) {
            (Some(rep), Some(draws)) => {
                rows.extend(report_rows(rep, &names, &r.method));
                let burned = r.burned.clone().unwrap_or_else(|| DMatrix::zeros(0, draws.ncols()));
                write_draws(&dir.join(format!("draws_{}.csv", r.method)), &burned, draws, &names)?;
            }
            _ => {
                let e = r.error.as_ref().map_or("unknown failure", |e| e.message.as_str());
                eprintln!("{}: failed: {e}", r.method);
            }
        }
    }
    write_report_csv(&dir.join("report.csv"), &rows)?;
    let listing: Vec<Value> = runs.iter().map(run_row).collect();
    write_json(&dir.join("report.json"), &json!({ "config": config, "coefficients": names, "methods": listing }))?;
    write_json(&dir.join("config.json"), &config)?;
    let mut diag = diagnostics(config, start);
    diag.acceptance_rate = runs.iter().find_map(|r| r.acceptance_rate);
    write_json(&dir.join("diagnostics.json"), &diag)?;
    print_rows(&rows);
    if !runs.is_empty() && runs.iter().all(|r| r.error.is_some()) {
        return Err(runs[0]
            .error
            .as_ref()
            .map(|e| Error::Domain(format!("every method failed; first: {}", e.message)))
            .unwrap_or_else(|| Error::Domain("every method failed".into())));
    }
    Ok(())
}

fn dgp_kind(view: &View) -> Result<DgpKind> {
    let n = view.usize("dgp.n")?.ok_or_else(|| Error::Config("dgp.n is required".into()))?;
    let theta = view.f64s("dgp.theta")?.ok_or_else(|| Error::Config("dgp.theta is required".into()))?;
    match view.require_string("dgp")?.as_str() {
        "linear" => Ok(DgpKind::LinearGaussian { n, theta }),
        "probit" => Ok(DgpKind::Probit { n, theta }),
        other => Err(Error::Config(format!("unknown dgp '{other}' (expected linear or probit)"))),
    }
}

pub fn mc(flat: &Flat) -> Result<()> {
    let start = Instant::now();
    let view = View(flat);
    let dir = view.out_dir()?;
    prepare_out(&dir)?;
    let kind = dgp_kind(&view)?;
    let (model, truth): (Box<dyn Model>, Vec<f64>) = match &kind {
        DgpKind::LinearGaussian { theta, .. } => (Box::new(make_ols(theta.len())), theta.clone()),
        DgpKind::Probit { theta, .. } => (Box::new(make_probit(theta.len())), theta.clone()),
        _ => unreachable!("dgp_kind only builds cross-section designs"),
    };
    let run = view.run_config(model.dim())?;
    let config = echo(flat, Some(&run));
    let method = run.method.as_str().to_string();
    let base = compare_config(&view, run.clone())?;
    let reps = view.usize("replications")?.unwrap_or(1);
    let (summary, _) = run_study(reps, run.seed, &truth, base.alpha, |_, seed| {
        let sim = simulate_dgp(&kind, seed)?;
        let mut cfg = base.clone();
        cfg.run.seed = seed;
        let out = compare(model.as_ref(), &sim.data, std::slice::from_ref(&method), &cfg)?.remove(0);
        match (out.report, out.error) {
            (Some(r), _) => Ok(Replication::from(&r)),
            (None, e) => Err(Error::Domain(e.map_or("replication failed".into(), |e| format!("{}: {}", e.category, e.message)))),
        }
    })?;
    let names = coefficient_names(&[], truth.len());
    let mut w = String::from("coefficient,truth,mean,sd,bias,reject_quantile,reject_se\n");
    println!("{:<10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}", "coef", "truth", "mean", "sd", "bias", "rej_q", "rej_se");
    for (j, name) in names.iter().enumerate() {
        let fields = [summary.truth[j], summary.mean[j], summary.sd[j], summary.bias[j], summary.reject_quantile[j], summary.reject_se[j]];
        w.push_str(name);
        for f in fields {
            w.push(',');
            w.push_str(&f.to_string());
        }
        w.push('\n');
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.3} {:>10.3}",
            name, fields[0], fields[1], fields[2], fields[3], fields[4], fields[5]
        );
    }
    fs::write(dir.join("summary.csv"), w)?;
    write_jsonl(&dir.join("failures.jsonl"), &summary.failures)?;
    write_json(&dir.join("summary.json"), &json!({ "config": config, "method": method, "summary": summary }))?;
    write_json(&dir.join("config.json"), &config)?;
    write_json(&dir.join("diagnostics.json"), &diagnostics(config, start))?;
    println!("completed {}/{} replications{}", summary.completed, summary.requested, if summary.flagged { " (flagged: too many failures)" } else { "" });
    Ok(())
}

pub fn check(flat: &Flat) -> Result<()> {
    let view = View(flat);
    let checks = builtin_gradient_checks(20, view.u64("seed")?)?;
    println!("{:<20} {:>8} {:>16}", "model", "points", "max discrepancy");
    for c in &checks {
        let status = if c.max_discrepancy <= 1e-5 { "ok" } else { "FAIL" };
        println!("{:<20} {:>8} {:>16.3e}  {status}", c.model, c.points, c.max_discrepancy);
    }
    let dir = view.out_dir()?;
    prepare_out(&dir)?;
    write_json(&dir.join("check.json"), &checks)?;
    Ok(())
}

pub fn saddle(flat: &Flat) -> Result<()> {
    let view = View(flat);
    let mut cfg = SaddleConfig::standard();
    let diag = view.f64s("saddle.h")?.ok_or_else(|| Error::Config("saddle.h is required".into()))?;
    cfg.h = DMatrix::from_diagonal(&DVector::from_vec(diag));
    cfg.center = DVector::zeros(cfg.h.nrows());
    cfg.gamma = view.f64("saddle.gamma")?.unwrap_or(cfg.gamma);
    cfg.iters = view.usize("saddle.iters")?.unwrap_or(cfg.iters);
    cfg.c_grid = view.f64s("saddle.c_grid")?.unwrap_or(cfg.c_grid);
    cfg.seeds = view.usize("saddle.seeds")?.unwrap_or(cfg.seeds);
    cfg.noise_sd = view.f64("saddle.noise_sd")?.unwrap_or(cfg.noise_sd);
    cfg.seed = view.u64("seed")?;
    let rows = saddle_demo(&cfg)?;
    println!("{:>6} {:>24} {:>10} {:>24} {:>12} {:>8}", "c", "NR theta", "NR Q", "rNR theta", "rNR Q", "escape");
    let fmt = |v: &[f64]| format!("({})", v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", "));
    for r in &rows {
        println!(
            "{:>6} {:>24} {:>10.4} {:>24} {:>12.4e} {:>8.2}",
            r.c,
            fmt(&r.nr_theta),
            r.nr_q,
            fmt(&r.rnr_theta),
            r.rnr_q,
            r.rnr_escape_rate
        );
    }
    let dir = view.out_dir()?;
    prepare_out(&dir)?;
    write_json(&dir.join("saddle.json"), &json!({ "config": echo(flat, None), "rows": rows }))?;
    Ok(())
}
