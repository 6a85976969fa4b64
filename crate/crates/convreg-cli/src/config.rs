//! Solve options with three-layer precedence: CLI flag > config file >
//! built-in default. The config file is line-oriented `key=value`; blank
//! lines and `#` comments are ignored. Every key (and every method-specific
//! CLI flag) is validated against the chosen method before any solve work
//! starts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use convreg::papg::StepRule;

use crate::SolveArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Method {
    #[value(name = "papg-a")]
    PapgA,
    #[value(name = "papg-c")]
    PapgC,
    Asm,
    Admm,
    Ipm,
    Oracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::PapgA => "papg-a",
            Method::PapgC => "papg-c",
            Method::Asm => "asm",
            Method::Admm => "admm",
            Method::Ipm => "ipm",
            Method::Oracle => "oracle",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        Method::value_variants().iter().copied().find(|m| m.as_str() == name)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRegime {
    /// Normalized infeasibility + normalized duality gap.
    Gap,
    /// RMS distance to a reference fit + normalized infeasibility.
    Accuracy,
}

/// Fully merged options for one solve.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub method: Method,
    pub gamma: f64,
    pub k: usize,
    pub workers: Option<usize>,
    pub step_mode: StepRule,
    pub upsilon_step: f64,
    pub eps0: Option<f64>,
    pub beta: f64,
    pub kappa_gamma: f64,
    pub kappa_delta: f64,
    pub stages: usize,
    pub infeas_tol: f64,
    pub gap_tol: f64,
    pub accuracy_tol: f64,
    pub rho: f64,
    pub iter_cap: usize,
    pub time_cap_s: Option<f64>,
    pub stop_regime: StopRegime,
}

/// Config-file keys each method accepts (`gamma` for papg-c is the final
/// stage's regularization). Shared caps are listed per method so the error
/// message for a rejected key can print the exact legal set.
fn allowed_keys(method: Method) -> &'static [&'static str] {
    match method {
        Method::PapgA | Method::PapgC => &[
            "gamma",
            "K",
            "step_mode",
            "upsilon_step",
            "eps0",
            "beta",
            "kappa_gamma",
            "kappa_delta",
            "infeas_tol",
            "gap_tol",
            "iter_cap",
            "time_cap_s",
        ],
        Method::Admm => &["rho", "infeas_tol", "gap_tol", "iter_cap", "time_cap_s"],
        Method::Asm | Method::Ipm => &["gamma", "iter_cap", "time_cap_s"],
        Method::Oracle => &["gamma"],
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| anyhow!("config key {key}: {value:?} is not a number"))?;
    if !v.is_finite() {
        bail!("config key {key}: {value:?} is not finite");
    }
    Ok(v)
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| anyhow!("config key {key}: {value:?} is not a nonnegative integer"))
}

fn parse_step_mode(value: &str) -> Result<StepRule> {
    match value {
        "constant" => Ok(StepRule::Constant),
        "adaptive" => Ok(StepRule::Adaptive),
        other => bail!("step_mode must be \"constant\" or \"adaptive\", got {other:?}"),
    }
}

/// Parse a line-oriented `key=value` file into an ordered map, rejecting
/// malformed lines and duplicate keys.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            anyhow!("{}:{}: expected key=value, got {raw:?}", path.display(), i + 1)
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            bail!("{}:{}: duplicate key {key:?}", path.display(), i + 1);
        }
    }
    Ok(map)
}

/// Merge defaults, the optional config file, and CLI flags (in increasing
/// precedence) into one validated option set.
pub fn merge_options(args: &SolveArgs, method: Method) -> Result<SolveOptions> {
    let mut opts = SolveOptions {
        method,
        gamma: match method {
            Method::Admm => 0.0,
            Method::Oracle => 0.0,
            _ => 1e-4,
        },
        k: 2,
        workers: None,
        step_mode: StepRule::Adaptive,
        upsilon_step: 2.0,
        eps0: None,
        beta: 2.0,
        kappa_gamma: 1e-2,
        kappa_delta: 1e-2,
        stages: 5,
        infeas_tol: 1e-1,
        gap_tol: 5e-7,
        accuracy_tol: 5e-3,
        rho: 1.0,
        iter_cap: 200_000,
        time_cap_s: None,
        stop_regime: StopRegime::Gap,
    };
    // `solve --method oracle` defaults to the common regularized problem;
    // the dedicated `oracle` command passes gamma explicitly.
    if method == Method::Oracle {
        opts.gamma = 1e-4;
    }

    if let Some(path) = &args.config {
        let map = read_config_file(path)?;
        let legal = allowed_keys(method);
        for (key, value) in &map {
            if !legal.contains(&key.as_str()) {
                bail!(
                    "config key {key:?} does not apply to method {method}; \
                     accepted keys: {}",
                    legal.join(", ")
                );
            }
            match key.as_str() {
                "gamma" => opts.gamma = parse_f64(key, value)?,
                "K" => opts.k = parse_usize(key, value)?,
                "step_mode" => opts.step_mode = parse_step_mode(value)?,
                "upsilon_step" => opts.upsilon_step = parse_f64(key, value)?,
                "eps0" => opts.eps0 = Some(parse_f64(key, value)?),
                "beta" => opts.beta = parse_f64(key, value)?,
                "kappa_gamma" => opts.kappa_gamma = parse_f64(key, value)?,
                "kappa_delta" => opts.kappa_delta = parse_f64(key, value)?,
                "infeas_tol" => opts.infeas_tol = parse_f64(key, value)?,
                "gap_tol" => opts.gap_tol = parse_f64(key, value)?,
                "rho" => opts.rho = parse_f64(key, value)?,
                "iter_cap" => opts.iter_cap = parse_usize(key, value)?,
                "time_cap_s" => opts.time_cap_s = Some(parse_f64(key, value)?),
                other => unreachable!("key {other} passed the allow-list"),
            }
        }
    }

    apply_cli_flags(args, method, &mut opts)?;
    validate(&opts)?;
    Ok(opts)
}

/// Reject a method-specific CLI flag that does not apply to `method`, and
/// apply the ones that do.
fn apply_cli_flags(args: &SolveArgs, method: Method, opts: &mut SolveOptions) -> Result<()> {
    let legal = allowed_keys(method);
    let reject = |flag: &str, given: bool| -> Result<()> {
        if given && !legal.contains(&flag) {
            bail!(
                "--{} does not apply to method {method}; accepted keys: {}",
                flag.replace('_', "-"),
                legal.join(", ")
            );
        }
        Ok(())
    };
    reject("gamma", args.gamma.is_some())?;
    reject("K", args.k.is_some())?;
    reject("step_mode", args.step_mode.is_some())?;
    reject("upsilon_step", args.upsilon_step.is_some())?;
    reject("eps0", args.eps0.is_some())?;
    reject("beta", args.beta.is_some())?;
    reject("kappa_gamma", args.kappa_gamma.is_some())?;
    reject("kappa_delta", args.kappa_delta.is_some())?;
    reject("infeas_tol", args.infeas_tol.is_some())?;
    reject("gap_tol", args.gap_tol.is_some())?;
    reject("rho", args.rho.is_some())?;
    reject("iter_cap", args.iter_cap.is_some())?;
    reject("time_cap_s", args.time_cap_s.is_some())?;
    // Flags without a config-file equivalent.
    if args.stages.is_some() && method != Method::PapgC {
        bail!("--stages applies only to papg-c");
    }
    if args.workers.is_some() && !matches!(method, Method::PapgA | Method::PapgC) {
        bail!("--workers applies only to the papg methods");
    }

    opts.stop_regime = match args.stop.as_str() {
        "gap" => StopRegime::Gap,
        "accuracy" => StopRegime::Accuracy,
        other => bail!("--stop must be \"gap\" or \"accuracy\", got {other:?}"),
    };
    if opts.stop_regime == StopRegime::Accuracy {
        if !matches!(method, Method::PapgA | Method::Admm) {
            bail!(
                "--stop accuracy applies only to papg-a and admm \
                 (asm, ipm, oracle and papg-c stop on their own certificates)"
            );
        }
        if args.ref_model.is_none() {
            bail!("--stop accuracy needs --ref-model for the reference fit");
        }
    }
    if args.accuracy_tol.is_some() && opts.stop_regime != StopRegime::Accuracy {
        bail!("--accuracy-tol applies only with --stop accuracy");
    }

    if let Some(v) = args.gamma {
        opts.gamma = v;
    }
    if let Some(v) = args.k {
        opts.k = v;
    }
    if let Some(v) = args.workers {
        opts.workers = Some(v);
    }
    if let Some(v) = &args.step_mode {
        opts.step_mode = parse_step_mode(v)?;
    }
    if let Some(v) = args.upsilon_step {
        opts.upsilon_step = v;
    }
    if let Some(v) = args.eps0 {
        opts.eps0 = Some(v);
    }
    if let Some(v) = args.beta {
        opts.beta = v;
    }
    if let Some(v) = args.kappa_gamma {
        opts.kappa_gamma = v;
    }
    if let Some(v) = args.kappa_delta {
        opts.kappa_delta = v;
    }
    if let Some(v) = args.stages {
        opts.stages = v;
    }
    if let Some(v) = args.infeas_tol {
        opts.infeas_tol = v;
    }
    if let Some(v) = args.gap_tol {
        opts.gap_tol = v;
    }
    if let Some(v) = args.accuracy_tol {
        opts.accuracy_tol = v;
    }
    if let Some(v) = args.rho {
        opts.rho = v;
    }
    if let Some(v) = args.iter_cap {
        opts.iter_cap = v;
    }
    if let Some(v) = args.time_cap_s {
        opts.time_cap_s = Some(v);
    }
    Ok(())
}

fn validate(opts: &SolveOptions) -> Result<()> {
    if !opts.gamma.is_finite() || opts.gamma < 0.0 {
        bail!("gamma must be finite and nonnegative, got {}", opts.gamma);
    }
    if matches!(opts.method, Method::Asm | Method::Ipm) && opts.gamma == 0.0 {
        bail!("{} solves the regularized problem and needs gamma > 0", opts.method);
    }
    if opts.k == 0 {
        bail!("K must be at least 1");
    }
    if opts.upsilon_step <= 1.0 {
        bail!("upsilon_step must exceed 1, got {}", opts.upsilon_step);
    }
    if opts.method == Method::PapgC {
        if opts.beta <= 1.0 {
            bail!("beta must exceed 1, got {}", opts.beta);
        }
        if opts.kappa_gamma <= 0.0 || opts.kappa_delta <= 0.0 {
            bail!("kappa_gamma and kappa_delta must be positive");
        }
        if opts.stages == 0 {
            bail!("stages must be at least 1");
        }
        if let Some(e) = opts.eps0 {
            if e <= 0.0 {
                bail!("eps0 must be positive, got {e}");
            }
        } else if opts.gamma == 0.0 {
            bail!("papg-c needs gamma > 0 (the final stage's regularization) or an explicit eps0");
        }
    }
    if opts.method == Method::Admm && opts.rho <= 0.0 {
        bail!("rho must be positive, got {}", opts.rho);
    }
    if opts.infeas_tol < 0.0 || opts.gap_tol < 0.0 || opts.accuracy_tol < 0.0 {
        bail!("tolerances must be nonnegative");
    }
    if let Some(t) = opts.time_cap_s {
        if !t.is_finite() || t <= 0.0 {
            bail!("time_cap_s must be a positive number of seconds, got {t}");
        }
    }
    if opts.iter_cap == 0 {
        bail!("iter_cap must be at least 1");
    }
    Ok(())
}

/// ε₀ for papg-c: explicit when given, otherwise derived so the final
/// stage's regularization `κ_γ·ε₀/β^stages` equals the requested γ.
pub fn continuation_eps0(opts: &SolveOptions) -> f64 {
    match opts.eps0 {
        Some(e) => e,
        None => opts.gamma * opts.beta.powi(opts.stages as i32) / opts.kappa_gamma,
    }
}
