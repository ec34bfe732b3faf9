use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::anyhow;
use serde::Serialize;
use sfsod::heuristics::{default_ensemble, with_ensemble_bounds};
use sfsod::pipeline::{finish, prepare, solve_prepared};
use sfsod::simulation::{generate_scenario, run_experiment, ExperimentConfig, ScenarioConfig};
use sfsod::solver::{write_lp, BoundMode};
use sfsod::tuning::{tune as run_tuning, TuningMethod, TuningResult};
use sfsod::SolveStatus;

use crate::config::{method, read_toml, RunConfig};
use crate::data::{dataset_csv, read_csv, Table};
use crate::{BenchArgs, CriterionArg, DataArgs, Failure, FitArgs, SimulateArgs, TuneArgs};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Internal(anyhow!(e).context(format!("cannot write {}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    std::fs::write(path, text).map_err(io(path))
}

fn load(args: &DataArgs) -> Result<Table, Failure> {
    let t = read_csv(&args.data, &args.response, !args.no_intercept).map_err(Failure::Data)?;
    // Name a constant column before the solver reports it by index.
    if let Err(sfsod::Error::ZeroMadColumn(j)) = t.data.standardize_robust() {
        return Err(Failure::Data(anyhow!(
            "column `{}` has zero median absolute deviation and cannot be standardized",
            t.column_name(j)
        )));
    }
    Ok(t)
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::TimeLimit => "time_limit",
        SolveStatus::NodeLimit => "node_limit",
        SolveStatus::Heuristic => "heuristic",
    }
}

#[derive(Serialize)]
struct Coefficient {
    name: String,
    value: f64,
}

#[derive(Serialize)]
struct Timings {
    solve_seconds: f64,
}

/// The solution file written by `fit`.
#[derive(Serialize)]
struct FitOutput {
    response: String,
    intercept: bool,
    k_p: usize,
    k_n: usize,
    /// `null` when no ridge constraint is imposed.
    lambda: Option<f64>,
    coefficients: Vec<Coefficient>,
    beta: Vec<f64>,
    phi: Vec<f64>,
    selected_features: Vec<String>,
    /// 1-based row numbers of trimmed cases.
    outliers: Vec<usize>,
    n_retained: usize,
    objective: f64,
    lower_bound: f64,
    gap: f64,
    status: &'static str,
    nodes_explored: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

pub fn fit(args: FitArgs) -> Result<u8, Failure> {
    let cfg = RunConfig::resolve(&args.solve)?;
    let table = load(&args.data)?;
    let data = &table.data;
    let fc = cfg.fit_config();
    let problem = prepare(data, args.kp, args.kn, cfg.lambda(), cfg.raw)?;
    if let Some(path) = &args.export_lp {
        let lp_problem = if fc.solver.bound_mode == BoundMode::BigM {
            with_ensemble_bounds(&problem, &default_ensemble(&problem, &fc.heuristics), &fc.heuristics)?
        } else {
            problem.clone()
        };
        write_lp(&lp_problem, path)?;
    }
    let t0 = Instant::now();
    let sol = solve_prepared(&problem, method(args.solve.method), &fc, &[])?;
    let secs = t0.elapsed().as_secs_f64();
    let res = finish(data, &problem, sol)?;
    let st = &res.standardized;

    let lambda = cfg.lambda();
    let off = usize::from(data.intercept());
    let out = FitOutput {
        response: table.response.clone(),
        intercept: data.intercept(),
        k_p: args.kp,
        k_n: args.kn,
        lambda: lambda.is_finite().then_some(lambda),
        coefficients: (0..data.p())
            .map(|j| Coefficient {
                name: table.column_name(j).to_string(),
                value: res.beta[j],
            })
            .collect(),
        beta: res.beta.clone(),
        phi: res.phi.clone(),
        selected_features: res.feature_support().iter().map(|&j| table.column_name(j).to_string()).collect(),
        outliers: res.case_support().iter().map(|i| i + 1).collect(),
        n_retained: data.n() - res.case_support().len(),
        objective: res.objective,
        lower_bound: st.lower_bound,
        gap: st.gap,
        status: status_name(st.status),
        nodes_explored: st.nodes_explored,
        timings: args.timings.then_some(Timings { solve_seconds: secs }),
    };

    let mut s = String::new();
    let _ = writeln!(s, "{:<24} {:>14}", "coefficient", "estimate");
    for j in 0..data.p() {
        if res.beta[j] != 0.0 || (off == 1 && j == 0) {
            let _ = writeln!(s, "{:<24} {:>14.6}", table.column_name(j), res.beta[j]);
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "features selected   {}", out.selected_features.len());
    let _ = writeln!(s, "outliers (1-based)  {:?}", out.outliers);
    let _ = writeln!(s, "non-outlying cases  {}", out.n_retained);
    let _ = writeln!(s, "objective           {:.6e}", out.objective);
    let _ = writeln!(s, "gap                 {:.3e} ({})", out.gap, out.status);
    let _ = writeln!(s, "nodes               {}", out.nodes_explored);
    let _ = writeln!(s, "solve time          {secs:.2}s");
    print!("{s}");
    if st.status == SolveStatus::TimeLimit || st.status == SolveStatus::NodeLimit {
        eprintln!("warning: search stopped early; optimality gap {:.3e}", st.gap);
    }

    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&out).map_err(|e| Failure::Internal(e.into()))?;
        write_file(path, &(json + "\n"))?;
    }
    Ok(0)
}

fn tuning_csvs(res: &TuningResult) -> Vec<(&'static str, String)> {
    let mut files = Vec::new();
    let mut cv = String::from("lambda,k_p,score\n");
    let mut bic = String::from("lambda,k_p,size,h,loss,bic,objective,status,gap\n");
    let mut kn = String::from("lambda,k_n,min_abs_deletion,threshold,objective,status,gap\n");
    for run in &res.runs {
        if let Some(c) = &run.cv {
            for s in &c.scores {
                let _ = writeln!(cv, "{},{},{}", run.lambda, s.k_p, s.score);
            }
        }
        if let Some(b) = &run.bic {
            for p in &b.path {
                let _ = writeln!(
                    bic,
                    "{},{},{},{},{},{},{},{},{}",
                    run.lambda,
                    p.k_p,
                    p.size,
                    p.h,
                    p.loss,
                    p.bic,
                    p.objective,
                    status_name(p.status),
                    p.gap
                );
            }
        }
        for st in &run.refine.trace {
            let _ = writeln!(
                kn,
                "{},{},{},{},{},{},{}",
                run.lambda,
                st.k_n,
                st.min_abs_deletion,
                st.threshold,
                st.objective,
                status_name(st.status),
                st.gap
            );
        }
    }
    if res.runs.iter().any(|r| r.cv.is_some()) {
        files.push(("cv_scores.csv", cv));
    }
    if res.runs.iter().any(|r| r.bic.is_some()) {
        files.push(("bic_path.csv", bic));
    }
    files.push(("refine_trace.csv", kn));
    files
}

pub fn tune(args: TuneArgs) -> Result<u8, Failure> {
    let mut cfg = RunConfig::resolve(&args.solve)?;
    if let Some(c) = args.criterion {
        cfg.tuning.method = match c {
            CriterionArg::Cv => TuningMethod::TrimmedCv,
            CriterionArg::Bic => TuningMethod::Bic,
        };
    }
    if let Some(k) = args.kn_start {
        cfg.tuning.kn_start = Some(k);
    }
    if let Some(f) = args.folds {
        cfg.tuning.folds = f;
    }
    if let Some(a) = args.alpha {
        cfg.tuning.alpha = a;
    }
    if let Some(l) = args.solve.lambda {
        cfg.tuning.lambda_grid = vec![l];
    }
    cfg.tuning.validate()?;
    let table = load(&args.data)?;
    let res = run_tuning(&table.data, &cfg.tuning, method(args.solve.method), &cfg.fit_config())?;

    let model_size = res.k_p + usize::from(table.data.intercept());
    println!("k_p     {} (model size {model_size})", res.k_p);
    println!("k_n     {} (started at {})", res.k_n, res.kn_start);
    println!("lambda  {}", res.lambda);

    if let Some(dir) = &args.out {
        let json = serde_json::to_string_pretty(&res).map_err(|e| Failure::Internal(e.into()))?;
        write_file(&dir.join("tuning.json"), &(json + "\n"))?;
        for (name, text) in tuning_csvs(&res) {
            write_file(&dir.join(name), &text)?;
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct TruthFile<'a> {
    beta: &'a [f64],
    /// 1-based rows of contaminated training cases.
    outliers: Vec<usize>,
    noise_sd: f64,
}

pub fn simulate(args: SimulateArgs) -> Result<u8, Failure> {
    let mut sc: ScenarioConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    if let Some(r) = args.replications {
        sc.replications = r;
    }
    sc.validate()?;
    for r in 0..sc.replications {
        let s = generate_scenario(&sc, r as u64)?;
        write_file(&args.out.join(format!("train_{r}.csv")), &dataset_csv(&s.train))?;
        write_file(&args.out.join(format!("test_{r}.csv")), &dataset_csv(&s.test))?;
        let truth = TruthFile {
            beta: &s.truth.beta,
            outliers: s.truth.outliers.iter().map(|i| i + 1).collect(),
            noise_sd: s.truth.noise_sd,
        };
        let json = serde_json::to_string_pretty(&truth).map_err(|e| Failure::Internal(e.into()))?;
        write_file(&args.out.join(format!("truth_{r}.json")), &(json + "\n"))?;
    }
    println!("wrote {} replications to {}", sc.replications, args.out.display());
    Ok(0)
}

pub fn bench(args: BenchArgs) -> Result<u8, Failure> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = args.threads {
        cfg.fit.solver.thread_count = t.max(1);
        cfg.fit.heuristics.threads = t.max(1);
    }
    let report = run_experiment(&cfg)?;
    report
        .write(&args.out)
        .map_err(|e| Failure::Internal(anyhow!(e).context(format!("writing reports to {}", args.out.display()))))?;
    print!("{}", report.summary_csv());
    let failed = report.failures();
    if failed > 0 {
        eprintln!("error: {failed} fits failed; see {}", args.out.join("replications.csv").display());
        return Ok(3);
    }
    Ok(0)
}
