use std::fmt::Write as _;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use cdtree::data::{
    load_csv, load_csv_for_schema, make_noise_dataset, make_step_dataset, write_csv,
    write_density_grid, write_log_densities, IngestConfig, NoiseMode,
};
use cdtree::eval::{cross_validate_with, evaluate_nll, robustness as run_robustness, CvOptions};
use cdtree::inference::trapezoid;
use cdtree::{
    density_grid, fit as fit_tree, leaf_rules, predict_log_densities, to_dot, total_mdl_score,
    CdTree, DataFrame, Error, Execution, FitConfig, ModelFile, Result,
};

use crate::{ExportFormat, FitArgs, Mode};

pub enum Point {
    Row(PathBuf, usize),
    Values(String),
}

/// Writes to standard output; a closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn fit_config(args: &FitArgs) -> Result<FitConfig> {
    let config = FitConfig {
        c: args.c,
        g: args.g,
        min_leaf: args.min_leaf,
        seed: args.seed,
        execution: if args.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        ..FitConfig::default()
    };
    config.check()?;
    Ok(config)
}

fn ingest(path: &Path, target: &str, args: &FitArgs) -> Result<DataFrame> {
    let config = IngestConfig {
        jitter_sd: args.jitter_sd,
        seed: args.seed,
        ..IngestConfig::new(target)
    };
    config.check()?;
    load_csv(path, &config)
}

fn load_model(path: &Path) -> Result<(ModelFile, CdTree)> {
    let file = ModelFile::load(path)?;
    let tree = file.to_tree()?;
    Ok((file, tree))
}

fn load_for(tree: &CdTree, path: &Path) -> Result<DataFrame> {
    load_csv_for_schema(path, &tree.schema, 0.0, 0)
}

pub fn fit(train: &Path, target: &str, args: &FitArgs, out: &Path) -> Result<()> {
    let mut text = String::new();
    let config = fit_config(args)?;
    let frame = ingest(train, target, args)?;
    let (tree, trace) = fit_tree(&frame, &config)?;
    let score = total_mdl_score(&tree, &frame)?;
    ModelFile::from_tree(&tree, &trace).save(out)?;
    let _ = writeln!(text, "leaves={}", tree.leaf_count());
    let _ = writeln!(text, "splits={}", trace.records.len());
    let _ = writeln!(text, "{score}");
    emit(&text)
}

pub fn evaluate(model: &Path, data: &Path, floor_nats: f64) -> Result<()> {
    let mut text = String::new();
    if !floor_nats.is_finite() {
        return Err(Error::InvalidConfig("--floor-nats must be finite".into()));
    }
    let (_, tree) = load_model(model)?;
    let frame = load_for(&tree, data)?;
    let report = evaluate_nll(&tree, &frame, floor_nats)?;
    let _ = writeln!(text, "n_test={}", report.n_test);
    let _ = writeln!(text, "mean_nll_nats={:.6}", report.mean_nll_nats);
    let _ = writeln!(text, "zero_density_events={}", report.zero_density_events);
    let _ = writeln!(text, "clamp_floor_nats={}", report.clamp_floor_nats);
    emit(&text)
}

pub fn cv(
    data: &Path,
    target: &str,
    folds: usize,
    shared_bounds: bool,
    args: &FitArgs,
) -> Result<()> {
    let mut text = String::new();
    let config = fit_config(args)?;
    let frame = ingest(data, target, args)?;
    let opts = CvOptions {
        shared_bounds,
        ..CvOptions::new(folds, args.seed)
    };
    let report = cross_validate_with(&frame, &config, &opts)?;
    let _ = writeln!(text, "fold,n_test,mean_nll_nats,zero_density_events,leaves");
    for f in &report.folds {
        let _ = writeln!(
            text,
            "{},{},{:.6},{},{}",
            f.fold, f.eval.n_test, f.eval.mean_nll_nats, f.eval.zero_density_events, f.leaves
        );
    }
    text.push('\n');
    let _ = writeln!(text, "mean_nll_nats,sd_nll_nats,mean_leaves");
    let _ = writeln!(
        text,
        "{:.6},{:.6},{:.3}",
        report.mean_nll_nats, report.sd_nll_nats, report.mean_leaves
    );
    emit(&text)
}

pub fn predict(model: &Path, data: &Path, out: &Path) -> Result<()> {
    let (_, tree) = load_model(model)?;
    let frame = load_for(&tree, data)?;
    let values = predict_log_densities(&tree, &frame)?;
    write_log_densities(&values, out)
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            let v = v.trim();
            v.parse::<f64>()
                .map_err(|_| Error::InvalidData(format!("'{v}' in --x is not a number")))
        })
        .collect()
}

pub fn density(model: &Path, point: Point, points: usize, out: &Path) -> Result<()> {
    let mut text = String::new();
    if points < 2 {
        return Err(Error::InvalidConfig("--points must be ≥ 2".into()));
    }
    let (_, tree) = load_model(model)?;
    let x = match point {
        Point::Row(data, row) => {
            let frame = load_for(&tree, &data)?;
            if row >= frame.n_rows() {
                return Err(Error::InvalidConfig(format!(
                    "--row {row} out of range for {} rows",
                    frame.n_rows()
                )));
            }
            frame.row(row).to_vec()
        }
        Point::Values(s) => parse_values(&s)?,
    };
    let curve = density_grid(&tree, &x, points)?;
    write_density_grid(&curve, out)?;
    let _ = writeln!(text, "leaf={}", cdtree::route(&tree, &x)?);
    let _ = writeln!(text, "trapezoid_integral={:.6}", trapezoid(&curve));
    emit(&text)
}

pub fn export(model: &Path, format: ExportFormat, out: Option<&Path>) -> Result<()> {
    let (file, tree) = load_model(model)?;
    let text = match format {
        ExportFormat::Text => leaf_rules(&tree).iter().map(|r| format!("{r}\n")).collect(),
        ExportFormat::Dot => to_dot(&tree),
        ExportFormat::Json => file.to_json()?,
    };
    match out {
        Some(path) => fs::write(path, text)?,
        None => emit(&text)?,
    }
    Ok(())
}

pub fn robustness(
    data: &Path,
    target: &str,
    mode: Mode,
    ws: &[usize],
    seeds: u64,
    args: &FitArgs,
) -> Result<()> {
    let mut text = String::new();
    if seeds < 1 {
        return Err(Error::InvalidConfig("--seeds must be ≥ 1".into()));
    }
    if ws.is_empty() {
        return Err(Error::InvalidConfig("--w needs at least one value".into()));
    }
    let config = fit_config(args)?;
    let frame = ingest(data, target, args)?;
    let mode = match mode {
        Mode::Independent => NoiseMode::Independent,
        Mode::Dependent => NoiseMode::Dependent,
    };
    let seed_list: Vec<u64> = (0..seeds).map(|s| args.seed + s).collect();
    let rows = run_robustness(&frame, mode, ws, &seed_list, &config)?;
    let _ = writeln!(
        text,
        "mode,w,seed,irrelevant_splits,leaves,baseline_nll_nats,noisy_nll_nats,nll_delta"
    );
    let name = match mode {
        NoiseMode::Independent => "independent",
        NoiseMode::Dependent => "dependent",
    };
    for r in &rows {
        let _ = writeln!(
            text,
            "{name},{},{},{},{},{:.6},{:.6},{:.6}",
            r.w,
            r.seed,
            r.irrelevant_splits,
            r.leaves,
            r.baseline_nll_nats,
            r.noisy_nll_nats,
            r.nll_delta()
        );
    }
    emit(&text)
}

pub fn synth_step(n: usize, noise: usize, seed: u64, out: &Path) -> Result<()> {
    if n < 1 {
        return Err(Error::InvalidConfig("--n must be ≥ 1".into()));
    }
    write_csv(&make_step_dataset(n, noise, seed), out)
}

pub fn synth_noise(n: usize, m: usize, seed: u64, out: &Path) -> Result<()> {
    if n < 1 || m < 1 {
        return Err(Error::InvalidConfig("--n and --m must be ≥ 1".into()));
    }
    write_csv(&make_noise_dataset(n, m, seed), out)
}
