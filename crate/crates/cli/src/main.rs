//! `sharpiv` — analyze binary-IV datasets (complier classification,
//! subgroup-effect bounds, strength and sharpness) and reproduce the
//! simulation studies.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sharpiv_core::bounds::{estimate_late, subgroup_bounds, BoundsReport};
use sharpiv_core::classify::{bayes_classifier, error_report, fold_quantile_classifier,
    modified_quantile_classifier, stochastic_classifier, ClassifierKind, ComplierAssignment};
use sharpiv_core::data::{assign_folds, load_csv, rescale_outcome, ColumnSpec, IVDataset,
    ScaleInfo};
use sharpiv_core::error::Error;
use sharpiv_core::nuisance::{fit_crossfit, CrossfitOptions, LearnerSpec, NuisanceFit};
use sharpiv_core::num::split_seed;
use sharpiv_core::sharpness::{estimate_sharpness, estimate_strength, SharpnessReport,
    StrengthEstimate};
use sharpiv_core::simlab::margin::{default_t_grid, margin_curve, ScoreModel};
use sharpiv_core::simlab::montecarlo::{run_monte_carlo, MonteCarloConfig};
use sharpiv_core::simlab::{fstat::first_stage_fstat_demo, oracle_moments, simulate_dataset,
    solve_dgp_params, DGPConfig};

const SEED_ENV: &str = "SHARPIV_SEED";

#[derive(Parser)]
#[command(name = "sharpiv", version, about = "Sharp instrumental variables toolkit")]
struct Cli {
    /// Master RNG seed (falls back to $SHARPIV_SEED, then 1).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo replications (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a CSV dataset and write reports.
    Analyze(AnalyzeArgs),
    /// Monte Carlo study over a (sharpness, sample size) grid, or emit one
    /// simulated dataset with --dataset-out.
    Simulate(SimulateArgs),
    /// Solve for DGP coefficients achieving a target strength/sharpness.
    DgpSolve(DgpSolveArgs),
    /// First-stage F-statistic demonstration (equally strong blunt and
    /// sharp instruments).
    FstatDemo(FstatArgs),
    /// Margin curve P(|score - q| <= t) with a power-law envelope fit.
    Margin(MarginArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input CSV path (header row required).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "y")]
    y_col: String,
    #[arg(long, default_value = "a")]
    a_col: String,
    #[arg(long, default_value = "z")]
    z_col: String,
    /// Comma-separated covariate column names.
    #[arg(long, value_delimiter = ',', required = true)]
    x_cols: Vec<String>,
    /// 0/1 column defining a custom subgroup for --bounds custom.
    #[arg(long)]
    subgroup_col: Option<String>,
    /// Learner: logistic, knn:K, or constant.
    #[arg(long, default_value = "logistic")]
    learner: String,
    #[arg(long, default_value_t = 2)]
    folds: usize,
    #[arg(long, default_value_t = 0.01)]
    clip_eps: f64,
    /// Which classifier column set to emit (all = bayes+quantile+stochastic).
    #[arg(long, value_enum, default_value_t = ClassifierChoice::All)]
    classifier: ClassifierChoice,
    /// Sup-norm score error bound for the modified classifier; estimated by
    /// a seed-perturbation heuristic when omitted.
    #[arg(long)]
    kappa1: Option<f64>,
    /// Quantile error bound for the modified classifier (same heuristic).
    #[arg(long)]
    kappa2: Option<f64>,
    /// Which bounds to report.
    #[arg(long, value_enum, default_value_t = BoundsChoice::All)]
    bounds: BoundsChoice,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Which sharpness interval to print (the JSON always carries both).
    #[arg(long, value_enum, default_value_t = CiChoice::Both)]
    ci: CiChoice,
    /// Prefix for output files: `<prefix>_units.csv`, `<prefix>_summary.json`.
    #[arg(long, default_value = "sharpiv")]
    out_prefix: String,
    /// Also export every out-of-fold nuisance prediction (one row per unit).
    #[arg(long)]
    nuisances: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifierChoice {
    Bayes,
    Quantile,
    Stochastic,
    Modified,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundsChoice {
    Ate,
    Hq,
    Custom,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CiChoice {
    Wald,
    Logit,
    Both,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0.3)]
    mu: f64,
    /// Comma-separated sharpness targets.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.5, 0.8])]
    psi: Vec<f64>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_values_t = vec![500, 1000, 5000])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    nsim: usize,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    #[arg(long, default_value = "logistic")]
    learner: String,
    #[arg(long, default_value_t = 2)]
    folds: usize,
    #[arg(long, default_value_t = 0.01)]
    clip_eps: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Output CSV for the summary table.
    #[arg(long, default_value = "table1.csv")]
    out: PathBuf,
    /// Write a single simulated dataset (uses the first --psi and --n) and
    /// skip the Monte Carlo table.
    #[arg(long)]
    dataset_out: Option<PathBuf>,
}

#[derive(Args)]
struct DgpSolveArgs {
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    psi: f64,
    /// Also write a (b1, psi) scan over the solver bracket to this CSV
    /// (plot-ready; shows the monotone sharpness-in-slope relationship).
    #[arg(long)]
    scan: Option<PathBuf>,
}

#[derive(Args)]
struct FstatArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    nsim: usize,
}

#[derive(Args)]
struct MarginArgs {
    /// Target sharpness of the probit score model.
    #[arg(long)]
    psi: Option<f64>,
    #[arg(long, default_value_t = 0.3)]
    mu: f64,
    /// Score distribution: probit (solved from --mu/--psi) or uniform.
    #[arg(long, value_enum, default_value_t = ScoreDistChoice::Probit)]
    score_dist: ScoreDistChoice,
    #[arg(long, default_value_t = 0.5)]
    tmax: f64,
    /// Plot-ready CSV of (t, p) pairs.
    #[arg(long, default_value = "margin.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScoreDistChoice {
    Probit,
    Uniform,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed.or_else(|| {
        std::env::var(SEED_ENV).ok().and_then(|v| v.parse().ok())
    })
    .unwrap_or(1);
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .ok();
    }
    let result = match cli.command {
        Command::Analyze(args) => cmd_analyze(args, seed),
        Command::Simulate(args) => cmd_simulate(args, seed),
        Command::DgpSolve(args) => cmd_dgp_solve(args),
        Command::FstatDemo(args) => cmd_fstat(args, seed),
        Command::Margin(args) => cmd_margin(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Validation(_) | Error::Io(_) | Error::Csv(_) => ExitCode::from(2),
                Error::Computation(_) => ExitCode::from(3),
            }
        }
    }
}

#[derive(Serialize)]
struct Summary {
    schema_version: u32,
    n: usize,
    covariates: usize,
    seed: u64,
    learner: String,
    folds: usize,
    clip_eps: f64,
    level: f64,
    scale: ScaleInfo,
    strength: StrengthEstimate,
    sharpness: Option<SharpnessReport>,
    late: Option<LateSummary>,
    bounds: BoundsSummary,
    classification: Option<sharpiv_core::classify::ErrorReport>,
    classifiers: ClassifierSummary,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct LateSummary {
    estimate: f64,
    se: f64,
}

#[derive(Serialize, Default)]
struct BoundsSummary {
    ate: Option<BoundsJson>,
    hq: Option<BoundsJson>,
    custom: Option<BoundsJson>,
}

#[derive(Serialize)]
struct BoundsJson {
    beta_l: f64,
    beta_u: f64,
    se_l: f64,
    se_u: f64,
    ci_lo: f64,
    ci_hi: f64,
    subgroup_size: f64,
    crossed: bool,
}

impl BoundsJson {
    fn from_report(r: &BoundsReport) -> Self {
        BoundsJson {
            beta_l: r.beta_l,
            beta_u: r.beta_u,
            se_l: r.se_l,
            se_u: r.se_u,
            ci_lo: r.im_interval.0,
            ci_hi: r.im_interval.1,
            subgroup_size: r.subgroup_size,
            crossed: r.crossed,
        }
    }
}

#[derive(Serialize, Default)]
struct ClassifierSummary {
    bayes: Option<serde_json::Value>,
    quantile: Option<serde_json::Value>,
    stochastic: Option<serde_json::Value>,
    modified: Option<serde_json::Value>,
}

fn classifier_json(kind: &ClassifierKind, h: &ComplierAssignment) -> serde_json::Value {
    serde_json::json!({
        "kind": kind,
        "predicted_compliers": h.predicted_compliers(),
        "predicted_fraction": h.predicted_fraction(),
        "warning": h.warning,
    })
}

fn cmd_analyze(args: AnalyzeArgs, seed: u64) -> Result<(), Error> {
    let spec = ColumnSpec {
        y: args.y_col.clone(),
        a: args.a_col.clone(),
        z: args.z_col.clone(),
        x: args.x_cols.clone(),
        latent_c: None,
    };
    let learner = LearnerSpec::parse(&args.learner)?;
    if args.folds < 2 {
        return Err(Error::validation("need at least 2 folds"));
    }
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Error::validation("confidence level must lie in (0,1)"));
    }
    let raw: IVDataset = load_csv(&args.input, &spec)?;
    let custom_subgroup = match &args.subgroup_col {
        Some(col) => Some(load_binary_column(&args.input, col)?),
        None => None,
    };
    let (ds, scale) = rescale_outcome(&raw);
    let mut warnings = Vec::new();
    if scale.degenerate {
        warnings.push("constant outcome: effects are not estimable, only classification/sharpness".into());
    }
    let n = ds.n();
    let folds = assign_folds(n, args.folds, split_seed(seed, 1))?;
    let options = CrossfitOptions {
        learner: learner.clone(),
        nu_learner: None,
        outcome_learner: None,
        clip_eps: args.clip_eps,
    };
    let nf = fit_crossfit(&ds, &folds, &options)?;
    warnings.extend(nf.warnings.iter().cloned());

    let strength = estimate_strength(&nf);
    if !strength.in_range {
        warnings.push(format!("strength estimate {} outside (0,1)", strength.mu_hat));
    }

    let want = |c: ClassifierChoice| args.classifier == c || args.classifier == ClassifierChoice::All;
    let mut classifiers = ClassifierSummary::default();
    let mut columns: Vec<(&str, Vec<u8>)> = Vec::new();

    let h_bayes = bayes_classifier(&nf.gamma)?;
    if want(ClassifierChoice::Bayes) {
        classifiers.bayes = Some(classifier_json(&h_bayes.kind, &h_bayes));
        columns.push(("h_bayes", h_bayes.h.clone()));
    }

    let h_quantile = if strength.in_range {
        let h = fold_quantile_classifier(&nf.gamma, &folds, strength.mu_hat)?;
        if let Some(w) = &h.warning {
            warnings.push(format!("quantile classifier: {w}"));
        }
        Some(h)
    } else {
        None
    };
    if want(ClassifierChoice::Quantile) {
        if let Some(h) = &h_quantile {
            classifiers.quantile = Some(classifier_json(&h.kind, h));
            columns.push(("h_quantile", h.h.clone()));
        }
    }

    let h_stoch = stochastic_classifier(&nf.gamma, split_seed(seed, 2))?;
    if want(ClassifierChoice::Stochastic) {
        classifiers.stochastic = Some(classifier_json(&h_stoch.kind, &h_stoch));
        columns.push(("h_stochastic", h_stoch.h.clone()));
    }

    let mut h_modified: Option<ComplierAssignment> = None;
    if want(ClassifierChoice::Modified) {
        let (k1, k2, heuristic) = match (args.kappa1, args.kappa2) {
            (Some(a), Some(b)) => (a, b, false),
            _ => {
                let (k1, k2) = heuristic_kappas(&ds, &folds, &options, &nf, &strength, seed)?;
                (args.kappa1.unwrap_or(k1), args.kappa2.unwrap_or(k2), true)
            }
        };
        if let Some(hq) = &h_quantile {
            let qhat = match &hq.kind {
                ClassifierKind::FoldQuantile { q_by_fold, .. } => {
                    q_by_fold.iter().sum::<f64>() / q_by_fold.len() as f64
                }
                _ => f64::NAN,
            };
            let h_mod = modified_quantile_classifier(&nf.gamma, qhat, k1, k2)?;
            let mut json = classifier_json(&h_mod.kind, &h_mod);
            json["kappa_source"] =
                serde_json::json!(if heuristic { "heuristic (seed perturbation)" } else { "user" });
            classifiers.modified = Some(json);
            columns.push(("h_modified", h_mod.h.clone()));
            h_modified = Some(h_mod);
        }
    }

    // identified error report for the classifier the user asked about
    // (the Bayes rule when --classifier all)
    let error_basis: Option<&ComplierAssignment> = match args.classifier {
        ClassifierChoice::Quantile => h_quantile.as_ref(),
        ClassifierChoice::Stochastic => Some(&h_stoch),
        ClassifierChoice::Modified => h_modified.as_ref(),
        _ => Some(&h_bayes),
    };
    let classification = error_basis.and_then(|h| error_report(&nf.gamma, h).ok());

    // bounds and effects on the original outcome scale
    let mut bounds = BoundsSummary::default();
    let want_bounds =
        |c: BoundsChoice| args.bounds == c || args.bounds == BoundsChoice::All;
    if !scale.degenerate {
        if want_bounds(BoundsChoice::Ate) {
            let everyone = ComplierAssignment::everyone(n);
            let r = subgroup_bounds(&ds, &nf, &everyone, args.level)?.to_original_scale(&scale);
            if r.crossed {
                warnings.push("ATE bounds crossed in finite sample".into());
            }
            bounds.ate = Some(BoundsJson::from_report(&r));
        }
        if want_bounds(BoundsChoice::Hq) {
            if let Some(hq) = &h_quantile {
                let r = subgroup_bounds(&ds, &nf, hq, args.level)?.to_original_scale(&scale);
                if r.crossed {
                    warnings.push("quantile-subgroup bounds crossed in finite sample".into());
                }
                bounds.hq = Some(BoundsJson::from_report(&r));
            }
        }
        if want_bounds(BoundsChoice::Custom) {
            if let Some(col) = custom_subgroup.clone() {
                let g = ComplierAssignment::custom(col, nf.gamma.clone())?;
                let r = subgroup_bounds(&ds, &nf, &g, args.level)?.to_original_scale(&scale);
                bounds.custom = Some(BoundsJson::from_report(&r));
            } else if args.bounds == BoundsChoice::Custom {
                return Err(Error::validation("--bounds custom requires --subgroup-col"));
            }
        }
    }

    let late = if scale.degenerate {
        None
    } else {
        match estimate_late(&ds, &nf, None) {
            Ok((estimate, se)) => Some(LateSummary {
                estimate: scale.effect_to_original(estimate),
                se: scale.effect_to_original(se),
            }),
            Err(e) => {
                warnings.push(format!("LATE unavailable: {e}"));
                None
            }
        }
    };

    let sharpness = if strength.in_range {
        match h_quantile
            .as_ref()
            .map(|hq| estimate_sharpness(&nf, hq, &strength, args.level))
        {
            Some(Ok(rep)) => {
                if rep.degenerate {
                    warnings.push("degenerate quantile: sharpness reported as zero".into());
                }
                if !rep.psi_in_range && !rep.degenerate {
                    warnings.push(format!(
                        "sharpness estimate {} outside (0,1); logit interval undefined",
                        rep.psi_hat
                    ));
                }
                Some(rep)
            }
            Some(Err(e)) => {
                warnings.push(format!("sharpness unavailable: {e}"));
                None
            }
            None => None,
        }
    } else {
        None
    };

    // per-unit CSV
    let units_path = format!("{}_units.csv", args.out_prefix);
    write_units_csv(&units_path, &nf, &columns)?;
    if let Some(path) = &args.nuisances {
        nf.export_csv(path)?;
    }

    let summary = Summary {
        schema_version: 1,
        n,
        covariates: ds.n_covariates(),
        seed,
        learner: args.learner.clone(),
        folds: args.folds,
        clip_eps: args.clip_eps,
        level: args.level,
        scale,
        strength,
        sharpness,
        late,
        bounds,
        classification,
        classifiers,
        warnings: warnings.clone(),
    };
    let summary_path = format!("{}_summary.json", args.out_prefix);
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap())?;

    println!("n = {n}, strength = {:.4} (se {:.4})", summary.strength.mu_hat, summary.strength.se);
    if let Some(s) = &summary.sharpness {
        match args.ci {
            CiChoice::Wald => println!(
                "sharpness = {:.4}, wald CI [{:.4}, {:.4}]",
                s.psi_hat, s.wald_ci.0, s.wald_ci.1
            ),
            CiChoice::Logit => match s.logit_ci {
                Some((lo, hi)) => {
                    println!("sharpness = {:.4}, logit CI [{lo:.4}, {hi:.4}]", s.psi_hat)
                }
                None => println!("sharpness = {:.4}, logit CI undefined", s.psi_hat),
            },
            CiChoice::Both => {
                let logit = match s.logit_ci {
                    Some((lo, hi)) => format!("[{lo:.4}, {hi:.4}]"),
                    None => "undefined".to_string(),
                };
                println!(
                    "sharpness = {:.4}, wald CI [{:.4}, {:.4}], logit CI {logit}",
                    s.psi_hat, s.wald_ci.0, s.wald_ci.1
                );
            }
        }
    }
    if let Some(l) = &summary.late {
        println!("LATE = {:.4} (se {:.4})", l.estimate, l.se);
    }
    for (name, b) in [("ATE", &summary.bounds.ate), ("beta(h_q)", &summary.bounds.hq), ("custom", &summary.bounds.custom)] {
        if let Some(b) = b {
            println!(
                "{name} bounds [{:.4}, {:.4}], {:.0}% CI [{:.4}, {:.4}]",
                b.beta_l,
                b.beta_u,
                args.level * 100.0,
                b.ci_lo,
                b.ci_hi
            );
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {units_path} and {summary_path}");
    Ok(())
}

/// Sup-norm disagreement between two cross-fits differing only in the fold
/// seed: a labeled heuristic stand-in for the score/quantile error bounds
/// the modified classifier expects from the caller.
fn heuristic_kappas(
    ds: &IVDataset,
    folds: &sharpiv_core::data::FoldAssignment,
    options: &CrossfitOptions,
    nf: &NuisanceFit,
    strength: &StrengthEstimate,
    seed: u64,
) -> Result<(f64, f64), Error> {
    let folds2 = assign_folds(ds.n(), folds.k, split_seed(seed, 3))?;
    let nf2 = fit_crossfit(ds, &folds2, options)?;
    let kappa1 = nf
        .gamma
        .iter()
        .zip(&nf2.gamma)
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let kappa2 = if strength.in_range {
        let q1 = fold_quantile_threshold(&nf.gamma, folds, strength.mu_hat)?;
        let q2 = fold_quantile_threshold(&nf2.gamma, &folds2, strength.mu_hat)?;
        (q1 - q2).abs()
    } else {
        0.0
    };
    Ok((kappa1, kappa2))
}

fn fold_quantile_threshold(
    gamma: &[f64],
    folds: &sharpiv_core::data::FoldAssignment,
    mu: f64,
) -> Result<f64, Error> {
    let h = fold_quantile_classifier(gamma, folds, mu)?;
    match h.kind {
        ClassifierKind::FoldQuantile { q_by_fold, .. } => {
            Ok(q_by_fold.iter().sum::<f64>() / q_by_fold.len() as f64)
        }
        _ => Ok(f64::NAN),
    }
}

fn load_binary_column(path: &PathBuf, col: &str) -> Result<Vec<u8>, Error> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = headers
        .iter()
        .position(|h| h == col)
        .ok_or_else(|| Error::validation(format!("column '{col}' not found")))?;
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let raw = record.get(idx).unwrap_or("").trim();
        match raw {
            "0" => out.push(0),
            "1" => out.push(1),
            _ => {
                return Err(Error::validation(format!(
                    "row {row}: subgroup column must be 0/1, got '{raw}'"
                )))
            }
        }
    }
    Ok(out)
}

fn write_units_csv(
    path: &str,
    nf: &NuisanceFit,
    classifier_columns: &[(&str, Vec<u8>)],
) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "unit".to_string(),
        "fold".to_string(),
        "z".to_string(),
        "a".to_string(),
        "gamma_hat".to_string(),
        "pi1".to_string(),
        "lambda0".to_string(),
        "lambda1".to_string(),
    ];
    for (name, _) in classifier_columns {
        header.push((*name).to_string());
    }
    w.write_record(&header)?;
    for i in 0..nf.n() {
        let mut record = vec![
            i.to_string(),
            nf.folds.b[i].to_string(),
            nf.z[i].to_string(),
            nf.a[i].to_string(),
            format!("{}", nf.gamma[i]),
            format!("{}", nf.pi1[i]),
            format!("{}", nf.lambda0[i]),
            format!("{}", nf.lambda1[i]),
        ];
        for (_, col) in classifier_columns {
            record.push(col[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, seed: u64) -> Result<(), Error> {
    let learner = LearnerSpec::parse(&args.learner)?;
    if let Some(path) = &args.dataset_out {
        let psi = *args.psi.first().ok_or_else(|| Error::validation("need a --psi value"))?;
        let n = *args.n.first().ok_or_else(|| Error::validation("need an --n value"))?;
        let (b0, b1) = solve_dgp_params(args.mu, psi)?;
        let sim = simulate_dataset(&DGPConfig { b0, b1, beta: args.beta, n, seed })?;
        sharpiv_core::data::save_csv(&sim.data, path)?;
        println!(
            "wrote {} ({} rows; columns y,a,z,x1,x2,c; b0={b0:.6}, b1={b1:.6})",
            path.display(),
            n
        );
        return Ok(());
    }
    let cfg = MonteCarloConfig {
        mu: args.mu,
        psi_list: args.psi.clone(),
        beta: args.beta,
        n_list: args.n.clone(),
        nsim: args.nsim,
        seed,
        folds: args.folds,
        learner,
        clip_eps: args.clip_eps,
        level: args.level,
    };
    let table = run_monte_carlo(&cfg)?;
    table.write_csv(&args.out)?;
    println!(
        "{:>5} {:>6} {:>7} {:>7} {:>7} {:>8} {:>8} {:>8} {:>8} {:>7}",
        "psi", "n", "err_h0", "err_hq", "err_hs", "len_ate", "len_hq", "psi_bias", "psi_sd", "cover"
    );
    for r in &table.rows {
        println!(
            "{:>5} {:>6} {:>7.3} {:>7.3} {:>7.3} {:>8.3} {:>8.3} {:>+8.3} {:>8.3} {:>7.3}",
            r.psi_target,
            r.n,
            r.err_h0,
            r.err_hq,
            r.err_hs,
            r.len_ate,
            r.len_hq,
            r.psi_bias,
            r.psi_sd,
            r.psi_cover
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_dgp_solve(args: DgpSolveArgs) -> Result<(), Error> {
    let (b0, b1) = solve_dgp_params(args.mu, args.psi)?;
    let m = oracle_moments(b0, b1)?;
    let json = serde_json::json!({
        "b0": b0,
        "b1": b1,
        "moments": m,
    });
    println!("{}", serde_json::to_string_pretty(&json).unwrap());
    if let Some(path) = &args.scan {
        use sharpiv_core::simlab::{SOLVER_B1_MAX_LOG, SOLVER_B1_MIN_LOG};
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["b1", "psi"])?;
        let points = 200;
        for i in 0..points {
            let log_b1 = SOLVER_B1_MIN_LOG
                + (SOLVER_B1_MAX_LOG - SOLVER_B1_MIN_LOG) * i as f64 / (points - 1) as f64;
            let b1 = log_b1.exp();
            let b0 = sharpiv_core::num::normal::norm_quantile(args.mu)
                * (1.0 + b1 * b1).sqrt();
            let psi = oracle_moments(b0, b1)?.psi;
            w.write_record(&[format!("{b1}"), format!("{psi}")])?;
        }
        w.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_fstat(args: FstatArgs, seed: u64) -> Result<(), Error> {
    let demo = first_stage_fstat_demo(args.n, args.nsim, seed)?;
    println!("{}", serde_json::to_string_pretty(&demo).unwrap());
    Ok(())
}

fn cmd_margin(args: MarginArgs) -> Result<(), Error> {
    if !(args.tmax > 0.0 && args.tmax < 1.0) {
        return Err(Error::validation("--tmax must lie in (0,1)"));
    }
    let model = match args.score_dist {
        ScoreDistChoice::Uniform => ScoreModel::Uniform,
        ScoreDistChoice::Probit => {
            let psi = args
                .psi
                .ok_or_else(|| Error::validation("probit score model needs --psi"))?;
            let (b0, b1) = solve_dgp_params(args.mu, psi)?;
            ScoreModel::ProbitNormal { b0, b1 }
        }
    };
    let grid = default_t_grid(args.tmax);
    let curve = margin_curve(&model, &grid)?;
    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record(["t", "p"])?;
    for (t, p) in curve.t.iter().zip(&curve.p) {
        w.write_record(&[format!("{t}"), format!("{p}")])?;
    }
    w.flush()?;
    match (&curve.fit, curve.degenerate) {
        (Some(fit), _) => println!(
            "q = {:.6}; envelope P <= C t^alpha with C = {}, alpha = {} (sup log gap {:.4})",
            curve.q, fit.c, fit.alpha, fit.sup_log_gap
        ),
        (None, true) => println!("q = {:.6}; degenerate curve (no admissible exponent)", curve.q),
        (None, false) => println!("q = {:.6}; no envelope found on the search grid", curve.q),
    }
    println!("wrote {}", args.out.display());
    Ok(())
}
