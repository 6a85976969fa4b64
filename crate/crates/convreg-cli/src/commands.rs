//! Subcommand implementations. `cmd_solve` owns the artifact contract:
//! `<method>.model.json`, `<method>.metrics.csv`, `<method>.summary.json`
//! in the output directory, with the summary's objective and infeasibility
//! recomputed from the re-read model file and cross-checked against the
//! solver's own numbers before anything is reported.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};

use convreg::admm::{admm_solve, AdmmConfig};
use convreg::asm::{asm_solve, AsmConfig};
use convreg::dataset::{Dataset, Partition, PrimalPoint};
use convreg::io::{self, RunSummary};
use convreg::ipm::{ipm_solve, IpmConfig};
use convreg::ops::ConstraintOperator;
use convreg::oracle::{oracle_solve, primal_objective, OracleConfig};
use convreg::papg::{continuation_solve, papg_solve, ContinuationConfig, PapgConfig};
use convreg::report::{accuracy, MetricsLog};
use convreg::synth::{gen_instance, FunctionKind};
use convreg::{RunCaps, StopRule, Termination};

use crate::config::{self, continuation_eps0, Method, SolveOptions, StopRegime};
use crate::{CompareArgs, GenerateArgs, OracleArgs, SolveArgs};

/// Solver-reported numbers the summary must reproduce from the saved model.
const AGREE_TOL: f64 = 1e-10;

pub fn cmd_generate(args: &GenerateArgs) -> Result<u8> {
    let kind: FunctionKind = args.kind.parse()?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let (data, truth) = gen_instance(kind, args.n, args.n_points, args.seed)?;
    let stem = format!(
        "{}-n{}-N{}-seed{}",
        kind.as_str(),
        args.n,
        args.n_points,
        args.seed
    );
    let csv = args.out_dir.join(format!("{stem}.csv"));
    let sidecar = args.out_dir.join(format!("{stem}.meta.json"));
    io::write_dataset(&csv, &data)?;
    io::write_sidecar(&sidecar, &truth)?;
    println!("{}", csv.display());
    println!("{}", sidecar.display());
    Ok(0)
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<u8> {
    let solve = SolveArgs {
        instance: args.instance.clone(),
        method: Method::Oracle,
        config: None,
        out_dir: args.out_dir.clone(),
        stop: "gap".to_string(),
        ref_model: None,
        ref_summary: None,
        gamma: Some(args.gamma.unwrap_or(0.0)),
        k: None,
        workers: None,
        step_mode: None,
        upsilon_step: None,
        eps0: None,
        beta: None,
        kappa_gamma: None,
        kappa_delta: None,
        stages: None,
        infeas_tol: None,
        gap_tol: None,
        accuracy_tol: None,
        rho: None,
        iter_cap: None,
        time_cap_s: None,
    };
    cmd_solve(&solve)
}

/// What a solver run hands back to the artifact-writing stage.
struct RunOutput {
    point: PrimalPoint,
    termination: Termination,
    iterations: usize,
    preprocess_s: f64,
    log: MetricsLog,
    /// Normalized duality gap of the final iterate (papg methods only).
    dualgap: Option<f64>,
    /// Regularization the returned point was solved under (0 for admm;
    /// the final stage's γ for papg-c).
    gamma: f64,
    solver_objective: f64,
    solver_infeasibility: f64,
}

pub fn cmd_solve(args: &SolveArgs) -> Result<u8> {
    let method = args.method;
    let opts = config::merge_options(args, method)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let data = io::read_dataset(&args.instance)
        .with_context(|| format!("reading instance {}", args.instance.display()))?;
    let instance_sha256 = io::sha256_file(&args.instance)?;

    // Optional references: the unregularized fit for the accuracy metric,
    // and a same-γ oracle summary for relative suboptimality.
    let ref_y: Option<Vec<f64>> = match &args.ref_model {
        Some(path) => {
            let (n, point) = io::read_model(path)
                .with_context(|| format!("reading reference model {}", path.display()))?;
            if n != data.dim() || point.y.len() != data.n_points() {
                bail!(
                    "reference model {} is {}-dimensional with {} points; \
                     the instance has n={}, N={}",
                    path.display(),
                    n,
                    point.y.len(),
                    data.dim(),
                    data.n_points()
                );
            }
            Some(point.y)
        }
        None => None,
    };
    let ref_objective: Option<f64> = match &args.ref_summary {
        Some(path) => {
            let s = io::read_summary(path)
                .with_context(|| format!("reading reference summary {}", path.display()))?;
            if s.instance_sha256 != instance_sha256 {
                bail!(
                    "reference summary {} was produced on a different instance \
                     (fingerprint {}… vs {}…)",
                    path.display(),
                    &s.instance_sha256[..12],
                    &instance_sha256[..12]
                );
            }
            if s.gamma != opts.gamma {
                bail!(
                    "reference summary {} was solved at gamma={} but this run \
                     uses gamma={}; relative suboptimality needs the same γ",
                    path.display(),
                    s.gamma,
                    opts.gamma
                );
            }
            Some(s.objective)
        }
        None => None,
    };

    let solve_started = Instant::now();
    let run = match run_solver(&data, &opts, ref_y.as_deref()) {
        Ok(run) => run,
        Err(e) => {
            write_diagnostic(&args.out_dir, method, &args.instance, &format!("{e:#}"));
            return Err(e);
        }
    };
    let walltime_s = solve_started.elapsed().as_secs_f64();

    // Persist the model, then recompute the reported metrics from the file
    // so the summary never repeats an internal accumulator drifted from
    // what was actually saved.
    let model_path = args.out_dir.join(format!("{method}.model.json"));
    io::write_model(&model_path, data.dim(), &run.point)?;
    let (_, saved) = io::read_model(&model_path)?;
    let op = ConstraintOperator::full(&data);
    let objective = primal_objective(&data, run.gamma, &saved);
    let infeasibility = op.infeasibility(&saved);
    for (label, reported, recomputed) in [
        ("objective", run.solver_objective, objective),
        ("infeasibility", run.solver_infeasibility, infeasibility),
    ] {
        if (reported - recomputed).abs() > AGREE_TOL * (1.0 + recomputed.abs()) {
            let msg = format!(
                "solver-reported {label} {reported} disagrees with the value \
                 recomputed from {} ({recomputed})",
                model_path.display()
            );
            write_diagnostic(&args.out_dir, method, &args.instance, &msg);
            bail!(msg);
        }
    }

    let acc = ref_y.as_deref().map(|y_ref| accuracy(&saved.y, y_ref));
    let subopt_reg = ref_objective.and_then(|p_star| {
        (p_star > 0.0).then(|| (objective - p_star).abs() / p_star)
    });

    let metrics_path = args.out_dir.join(format!("{method}.metrics.csv"));
    io::write_metrics(&metrics_path, &run.log)?;
    let summary = RunSummary {
        method: method.as_str().to_string(),
        instance: args.instance.display().to_string(),
        instance_sha256,
        n: data.dim(),
        n_points: data.n_points(),
        gamma: run.gamma,
        termination: run.termination.as_str().to_string(),
        iterations: run.iterations,
        walltime_s,
        preprocess_s: run.preprocess_s,
        objective,
        infeasibility,
        dualgap: run.dualgap,
        subopt_reg,
        accuracy: acc,
    };
    let summary_path = args.out_dir.join(format!("{method}.summary.json"));
    io::write_summary(&summary_path, &summary)?;

    println!(
        "method={method} termination={} iterations={} objective={objective:.9e} \
         infeasibility={infeasibility:.3e}",
        summary.termination, summary.iterations
    );
    println!("model:   {}", model_path.display());
    println!("metrics: {}", metrics_path.display());
    println!("summary: {}", summary_path.display());

    match run.termination {
        Termination::Converged => Ok(0),
        Termination::IterCap | Termination::TimeCap => Ok(2),
        Termination::Diverged => {
            let msg = "run diverged; artifacts hold the best iterate seen".to_string();
            write_diagnostic(&args.out_dir, method, &args.instance, &msg);
            eprintln!("error: {msg}");
            Ok(1)
        }
    }
}

fn run_caps(opts: &SolveOptions) -> RunCaps {
    RunCaps {
        iter_cap: opts.iter_cap,
        time_cap: opts.time_cap_s.map(Duration::from_secs_f64),
    }
}

fn gap_stop(opts: &SolveOptions, ref_y: Option<&[f64]>) -> Result<StopRule> {
    Ok(match opts.stop_regime {
        StopRegime::Gap => StopRule::GapInfeas {
            infeas_tol: opts.infeas_tol,
            gap_tol: opts.gap_tol,
        },
        StopRegime::Accuracy => StopRule::AccuracyInfeas {
            accuracy_tol: opts.accuracy_tol,
            infeas_tol: opts.infeas_tol,
            y_ref: ref_y
                .ok_or_else(|| anyhow!("accuracy stopping needs --ref-model"))?
                .to_vec(),
        },
    })
}

fn run_solver(data: &Dataset, opts: &SolveOptions, ref_y: Option<&[f64]>) -> Result<RunOutput> {
    let op = ConstraintOperator::full(data);
    match opts.method {
        Method::PapgA => {
            let part = Partition::new(data, opts.k)?;
            let cfg = PapgConfig {
                step: opts.step_mode,
                stop: gap_stop(opts, ref_y)?,
                caps: run_caps(opts),
                workers: opts.workers,
                trace: true,
                step_growth: opts.upsilon_step,
                ..PapgConfig::default()
            };
            let out = papg_solve(data, part, opts.gamma, &cfg)?;
            Ok(RunOutput {
                solver_objective: primal_objective(data, opts.gamma, &out.point),
                solver_infeasibility: op.infeasibility(&out.point),
                dualgap: out.records.last().map(|r| r.gap_norm),
                point: out.point,
                termination: out.termination,
                iterations: out.iterations,
                preprocess_s: out.preprocess_s,
                log: MetricsLog::Papg(out.records),
                gamma: opts.gamma,
            })
        }
        Method::PapgC => {
            let part = Partition::new(data, opts.k)?;
            let cfg = ContinuationConfig {
                eps0: continuation_eps0(opts),
                beta: opts.beta,
                kappa_gamma: opts.kappa_gamma,
                kappa_delta: opts.kappa_delta,
                stages: opts.stages,
                stage_iter_cap: opts.iter_cap,
                step: opts.step_mode,
                workers: opts.workers,
                trace: true,
                time_cap: opts.time_cap_s.map(Duration::from_secs_f64),
            };
            let out = continuation_solve(data, part, &cfg)?;
            let gamma = out
                .stages
                .last()
                .map(|s| s.gamma)
                .expect("continuation ran at least one stage");
            Ok(RunOutput {
                solver_objective: primal_objective(data, gamma, &out.point),
                solver_infeasibility: op.infeasibility(&out.point),
                dualgap: out.records.last().map(|r| r.gap_norm),
                point: out.point,
                termination: out.termination,
                iterations: out.total_inner_iterations,
                preprocess_s: out.preprocess_s,
                log: MetricsLog::Papg(out.records),
                gamma,
            })
        }
        Method::Asm => {
            let cfg = AsmConfig {
                caps: run_caps(opts),
                trace: true,
                ..AsmConfig::default()
            };
            let out = asm_solve(data, opts.gamma, &cfg)?;
            Ok(RunOutput {
                solver_objective: out.objective,
                solver_infeasibility: op.infeasibility(&out.point),
                dualgap: None,
                point: out.point,
                termination: out.termination,
                iterations: out.iterations,
                preprocess_s: out.preprocess_s,
                log: MetricsLog::Asm(out.records),
                gamma: opts.gamma,
            })
        }
        Method::Admm => {
            let cfg = AdmmConfig {
                rho: opts.rho,
                caps: run_caps(opts),
                trace: true,
                stop: gap_stop(opts, ref_y)?,
            };
            let out = admm_solve(data, &cfg)?;
            Ok(RunOutput {
                solver_objective: out.objective,
                solver_infeasibility: out.infeasibility,
                dualgap: None,
                point: out.point,
                termination: out.termination,
                iterations: out.iterations,
                preprocess_s: out.preprocess_s,
                log: MetricsLog::Admm(out.records),
                gamma: 0.0,
            })
        }
        Method::Ipm => {
            let started = Instant::now();
            let mut c: Vec<f64> = data.observations().iter().map(|v| -v).collect();
            c.resize(data.n_points() * (1 + data.dim()), 0.0);
            let preprocess_s = started.elapsed().as_secs_f64();
            let cfg = IpmConfig {
                max_iters: opts.iter_cap,
                time_cap: opts.time_cap_s.map(Duration::from_secs_f64),
                ..IpmConfig::default()
            };
            let out = ipm_solve(&op, opts.gamma, &c, &cfg, None, true)?;
            let nb = data.n_points();
            let point = PrimalPoint {
                y: out.state.eta[..nb].to_vec(),
                xi: out.state.eta[nb..].to_vec(),
            };
            Ok(RunOutput {
                solver_objective: primal_objective(data, opts.gamma, &point),
                solver_infeasibility: op.infeasibility(&point),
                dualgap: None,
                point,
                termination: out.termination,
                iterations: out.iterations,
                preprocess_s,
                log: MetricsLog::Ipm(out.records),
                gamma: opts.gamma,
            })
        }
        Method::Oracle => {
            let cfg = OracleConfig {
                cap: data.n_points().max(OracleConfig::default().cap),
                ..OracleConfig::default()
            };
            let sol = oracle_solve(data, opts.gamma, &cfg)?;
            Ok(RunOutput {
                solver_objective: sol.objective,
                solver_infeasibility: op.infeasibility(&sol.point),
                dualgap: None,
                point: sol.point,
                termination: Termination::Converged,
                iterations: sol.iterations,
                preprocess_s: 0.0,
                log: MetricsLog::None,
                gamma: opts.gamma,
            })
        }
    }
}

fn write_diagnostic(out_dir: &Path, method: Method, instance: &Path, message: &str) {
    let value = serde_json::json!({
        "method": method.as_str(),
        "instance": instance.display().to_string(),
        "error": message,
    });
    let path = out_dir.join(format!("{method}.error.json"));
    let text = serde_json::to_string_pretty(&value).unwrap_or_default();
    // Diagnostics are best-effort; the error itself still reaches stderr.
    let _ = fs::write(path, text + "\n");
}

pub fn cmd_compare(args: &CompareArgs) -> Result<u8> {
    let mut rows: Vec<RunSummary> = Vec::with_capacity(args.summaries.len());
    for path in &args.summaries {
        rows.push(
            io::read_summary(path)
                .with_context(|| format!("reading summary {}", path.display()))?,
        );
    }
    if rows.len() < 2 {
        bail!("compare needs at least two summaries");
    }
    let fingerprint = rows[0].instance_sha256.clone();
    for r in &rows[1..] {
        if r.instance_sha256 != fingerprint {
            bail!(
                "summaries come from different instances: method {} has \
                 fingerprint {}… but method {} has {}…",
                rows[0].method,
                &fingerprint[..12.min(fingerprint.len())],
                r.method,
                &r.instance_sha256[..12.min(r.instance_sha256.len())]
            );
        }
    }
    rows.sort_by_key(|r| {
        (
            Method::from_name(&r.method).map_or(usize::MAX, |m| m as usize),
            r.method.clone(),
        )
    });

    let header = [
        "method",
        "termination",
        "iterations",
        "walltime_s",
        "preprocess_s",
        "objective",
        "infeasibility",
        "dualgap",
        "subopt_reg",
        "accuracy",
    ];
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
    let cells: Vec<[String; 10]> = rows
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                r.termination.clone(),
                r.iterations.to_string(),
                format!("{:.3}", r.walltime_s),
                format!("{:.3}", r.preprocess_s),
                format!("{:.9e}", r.objective),
                format!("{:.3e}", r.infeasibility),
                opt(r.dualgap),
                opt(r.subopt_reg),
                opt(r.accuracy),
            ]
        })
        .collect();

    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let print_row = |cols: &[String]| {
        let line: Vec<String> = cols
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        println!("{}", line.join("  ").trim_end());
    };
    print_row(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    print_row(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>(),
    );
    for row in &cells {
        print_row(row);
    }

    if let Some(csv_path) = &args.csv {
        let full = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.16e}"));
        let mut text = header.join(",") + "\n";
        for r in &rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.method,
                r.termination,
                r.iterations,
                format_args!("{:.16e}", r.walltime_s),
                format_args!("{:.16e}", r.preprocess_s),
                format_args!("{:.16e}", r.objective),
                format_args!("{:.16e}", r.infeasibility),
                full(r.dualgap),
                full(r.subopt_reg),
                full(r.accuracy),
            ));
        }
        fs::write(csv_path, text)
            .with_context(|| format!("writing {}", csv_path.display()))?;
    }
    Ok(0)
}
