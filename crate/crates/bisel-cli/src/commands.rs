//! The four subcommands: fit, cv, simulate, pipeline.

use std::path::Path;
use std::time::Instant;

use bisel::{cross_validate, fit_two_stage, run_experiment, Dataset, ExperimentConfig};
use ndarray::Array1;

use crate::args::{FitArgs, PipelineArgs, SimulateArgs};
use crate::config::RunConfig;
use crate::data::{load_csv, LoadedData};
use crate::error::{from_fit_error, CliError, Result};
use crate::preprocess::{bspline_expand_matrix, prescreen, split_holdout, Standardizer};
use crate::report::{
    write_coefficients, write_cv_table, write_experiment_tables, write_residuals, write_run_meta,
    write_split_errors, RunMeta, Timings,
};

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

fn meta(
    command: &str,
    cfg: &RunConfig,
    inputs: Vec<String>,
    started: Instant,
    timings: bool,
) -> Result<RunMeta> {
    Ok(RunMeta {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        inputs,
        config: serde_json::to_value(cfg)
            .map_err(|e| CliError::data(format!("cannot serialize config: {e}")))?,
        timings: timings.then(|| Timings {
            total_seconds: started.elapsed().as_secs_f64(),
        }),
    })
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = args.common.merged_config()?;
    let loaded = load_csv(&args.data, &args.response, &args.group_map()?)?;
    let ds = &loaded.dataset;
    let grid = cfg.tuning_grid(ds.num_observations(), ds.num_coefficients())?;
    let result = fit_two_stage(
        ds,
        &cfg.weight_scheme()?,
        cfg.loss_spec()?,
        cfg.penalty_spec()?,
        &grid,
        cfg.solver_config()?,
        cfg.seed,
    )
    .map_err(from_fit_error)?;

    ensure_out_dir(&args.out_dir)?;
    write_coefficients(
        &args.out_dir.join("coefficients.csv"),
        &loaded.feature_names,
        &loaded.group_ids,
        result.beta_final.values().as_slice().expect("contiguous"),
    )?;
    write_cv_table(&args.out_dir.join("cv_table.csv"), &result.cv_table)?;
    write_run_meta(
        &args.out_dir.join("run_meta.json"),
        &meta(
            "fit",
            &cfg,
            vec![args.data.display().to_string()],
            started,
            args.common.timings,
        )?,
    )?;

    let support = result.beta_final.support();
    let groups = result.beta_final.active_groups();
    println!(
        "selected lambda={} theta={}: {} nonzero coefficients in {} groups",
        result.lam_selected,
        result.theta_selected,
        support.len(),
        groups.len()
    );
    if !result.gp_fit.converged {
        eprintln!(
            "warning: final refit stopped before reaching the requested tolerances \
             (stationarity residual {:.2e})",
            result.gp_fit.stationarity_residual
        );
    }
    Ok(())
}

pub fn cv(args: &FitArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = args.common.merged_config()?;
    let loaded = load_csv(&args.data, &args.response, &args.group_map()?)?;
    let ds = &loaded.dataset;
    let grid = cfg.tuning_grid(ds.num_observations(), ds.num_coefficients())?;
    let outcome = cross_validate(
        ds,
        &cfg.weight_scheme()?,
        cfg.loss_spec()?,
        cfg.penalty_spec()?,
        &grid,
        cfg.solver_config()?,
        cfg.seed,
    )
    .map_err(from_fit_error)?;

    ensure_out_dir(&args.out_dir)?;
    write_cv_table(&args.out_dir.join("cv_table.csv"), &outcome.table)?;
    write_run_meta(
        &args.out_dir.join("run_meta.json"),
        &meta(
            "cv",
            &cfg,
            vec![args.data.display().to_string()],
            started,
            args.common.timings,
        )?,
    )?;
    println!("best cell: lambda={} theta={}", outcome.lam, outcome.theta);
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::data(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("bad experiment config: {e}")))?;
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    let report = run_experiment(&cfg).map_err(from_fit_error)?;

    ensure_out_dir(&args.out_dir)?;
    write_experiment_tables(&args.out_dir, &report)?;
    let meta = RunMeta {
        command: "simulate".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.sim.seed,
        inputs: vec![args.config.display().to_string()],
        config: serde_json::to_value(&cfg)
            .map_err(|e| CliError::data(format!("cannot serialize config: {e}")))?,
        timings: args.timings.then(|| Timings {
            total_seconds: started.elapsed().as_secs_f64(),
        }),
    };
    write_run_meta(&args.out_dir.join("run_meta.json"), &meta)?;

    let failures: usize = report.methods.iter().map(|m| m.failures).sum();
    if failures > 0 {
        eprintln!(
            "warning: {failures} of {} fits failed and were excluded from the table",
            report.replications * report.methods.len()
        );
    }
    for m in &report.methods {
        println!(
            "{}: l2={:.4} MS={:.2} GS={:.2} ({} of {} replications)",
            m.name, m.mean.l2_error, m.mean.model_size, m.mean.group_size, m.completed,
            report.replications
        );
    }
    Ok(())
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn pipeline(args: &PipelineArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = args.common.merged_config()?;
    // raw genes are loaded ungrouped; groups come from the expansion
    let loaded: LoadedData = load_csv(
        &args.data,
        &args.response,
        &crate::data::GroupMap::EqualBlocks(1),
    )?;
    let raw = &loaded.dataset;
    let n = raw.num_observations();
    let p_raw = raw.num_coefficients();

    let var_screen = args.var_screen.unwrap_or_else(|| p_raw.min(2000));
    let corr_screen = args.corr_screen.unwrap_or_else(|| var_screen.min(500));
    let kept = prescreen(raw.x(), raw.y(), var_screen, corr_screen)?;
    let kept_names: Vec<&String> = kept.iter().map(|&j| &loaded.feature_names[j]).collect();

    let (expanded, groups) = bspline_expand_matrix(raw.x(), &kept, args.n_basis)?;
    let expanded_names: Vec<String> = kept_names
        .iter()
        .flat_map(|name| (1..=args.n_basis).map(move |k| format!("{name}__b{k}")))
        .collect();
    let expanded_group_ids: Vec<usize> = (0..kept.len())
        .flat_map(|g| std::iter::repeat_n(g + 1, args.n_basis))
        .collect();
    let expanded_ds = Dataset::new(expanded, raw.y().clone(), groups)
        .map_err(|e| CliError::data(e.to_string()))?;

    let loss = cfg.loss_spec()?;
    let penalty = cfg.penalty_spec()?;
    let scheme = cfg.weight_scheme()?;
    let solver = cfg.solver_config()?;

    // full-data fit for the coefficient table and the residual diagnostics
    let full_std = if args.no_standardize {
        None
    } else {
        Some(Standardizer::fit(&expanded_ds))
    };
    let full_input = match &full_std {
        Some(s) => s.apply(&expanded_ds)?,
        None => expanded_ds.clone(),
    };
    let grid = cfg.tuning_grid(n, full_input.num_coefficients())?;
    let full_fit = fit_two_stage(&full_input, &scheme, loss, penalty, &grid, solver, cfg.seed)
        .map_err(from_fit_error)?;
    let fitted: Array1<f64> = match &full_std {
        Some(s) => s.predict(expanded_ds.x(), full_fit.beta_final.values()),
        None => expanded_ds.x().dot(full_fit.beta_final.values()),
    };
    let residuals: Vec<f64> = raw.y().iter().zip(&fitted).map(|(y, f)| y - f).collect();

    // repeated random holdouts: refit per split, score on the held-out part
    let mut split_errors = Vec::with_capacity(args.splits);
    for s in 0..args.splits {
        let (train_rows, test_rows) = split_holdout(n, args.holdout, mix_seed(cfg.seed, s as u64))?;
        let train = expanded_ds
            .subset_rows(&train_rows)
            .map_err(|e| CliError::data(e.to_string()))?;
        let std = if args.no_standardize {
            None
        } else {
            Some(Standardizer::fit(&train))
        };
        let train_input = match &std {
            Some(st) => st.apply(&train)?,
            None => train.clone(),
        };
        let grid = cfg.tuning_grid(train_input.num_observations(), train_input.num_coefficients())?;
        let fit = fit_two_stage(
            &train_input,
            &scheme,
            loss,
            penalty,
            &grid,
            solver,
            mix_seed(cfg.seed, 0xCAFE ^ s as u64),
        )
        .map_err(from_fit_error)?;
        let test_x = expanded_ds.x().select(ndarray::Axis(0), &test_rows);
        let predictions = match &std {
            Some(st) => st.predict(&test_x, fit.beta_final.values()),
            None => test_x.dot(fit.beta_final.values()),
        };
        let mse = test_rows
            .iter()
            .zip(&predictions)
            .map(|(&r, pred)| {
                let d = raw.y()[r] - pred;
                d * d
            })
            .sum::<f64>()
            / test_rows.len() as f64;
        split_errors.push(mse);
    }

    ensure_out_dir(&args.out_dir)?;
    write_coefficients(
        &args.out_dir.join("coefficients.csv"),
        &expanded_names,
        &expanded_group_ids,
        full_fit.beta_final.values().as_slice().expect("contiguous"),
    )?;
    write_cv_table(&args.out_dir.join("cv_table.csv"), &full_fit.cv_table)?;
    write_residuals(&args.out_dir.join("residuals.csv"), &residuals)?;
    write_split_errors(&args.out_dir.join("splits_mse.csv"), &split_errors)?;
    write_run_meta(
        &args.out_dir.join("run_meta.json"),
        &meta(
            "pipeline",
            &cfg,
            vec![args.data.display().to_string()],
            started,
            args.common.timings,
        )?,
    )?;

    let selected_groups = full_fit.beta_final.active_groups();
    let selected: Vec<&String> = selected_groups.iter().map(|&g| kept_names[g]).collect();
    println!(
        "screened {p_raw} -> {} -> {} features, expanded to {} columns",
        var_screen.min(p_raw),
        kept.len(),
        kept.len() * args.n_basis
    );
    println!(
        "selected {} groups: {}",
        selected.len(),
        selected
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}
