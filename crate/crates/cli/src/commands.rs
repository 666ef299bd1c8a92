use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fess_core::far1::write_sweep_csv;
use fess_core::*;
use log::{info, warn};
use serde_json::{json, Value};

use crate::{Command, Far1Command, FitArgs, InputArgs, SimulateArgs, SubsampleArgs, SweepArgs};

const CURVE_POINTS: usize = 201;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Variogram(a) => cmd_variogram(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Ess(a) => cmd_ess(&a),
        Command::Far1(Far1Command::Simulate(a)) => cmd_far1_simulate(&a),
        Command::Far1(Far1Command::Sweep(a)) => cmd_far1_sweep(&a),
        Command::Boxplot(a) => cmd_boxplot(&a),
        Command::Subsample(a) => cmd_subsample(&a),
    }
}

fn load(args: &InputArgs, out_dir: Option<&Path>) -> Result<SpatialFunctionalDataset> {
    if let Some(out) = out_dir {
        if out == args.input || Some(out) == args.config.as_deref() {
            return Err(FessError::Invalid(format!(
                "output directory {} coincides with an input path",
                out.display()
            )));
        }
    }
    let mut schema = match &args.config {
        Some(p) => CsvSchema::from_json_file(p)?,
        None => CsvSchema::default(),
    };
    if let Some(c) = args.coords {
        schema.coords = c.into();
    }
    if args.lon0.is_some() {
        schema.lon0 = args.lon0;
    }
    schema.center |= args.center;

    let loaded = load_wide_csv(&args.input, &schema)?;
    for w in &loaded.warnings {
        warn!("{w}");
    }
    let d = loaded.dataset;
    info!(
        "loaded {} curves on {} grid points from {}",
        d.n(),
        d.m(),
        args.input.display()
    );
    Ok(d)
}

fn out_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| FessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(dir.join(name))
}

fn write_file<F>(dir: &Path, name: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let path = out_path(dir, name)?;
    let io_err = |source| FessError::Io {
        path: path.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
    body(&mut w)?;
    w.flush().map_err(io_err)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    write_file(dir, name, |w| {
        let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
        writeln!(w, "{text}").map_err(|source| FessError::Io {
            path: dir.join(name),
            source,
        })
    })
}

fn print_json(value: &Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("JSON values always serialize")
    );
}

fn bins_for(a: &FitArgs, d: &SpatialFunctionalDataset) -> Result<LagBins> {
    match a.max_lag {
        Some(h) => LagBins::uniform(h, a.bins),
        None => LagBins::for_dataset(d, a.bins),
    }
}

fn fit_all(a: &FitArgs, ev: &EmpiricalVariogram) -> Result<Vec<FitResult>> {
    let opts = a.fit_options();
    a.families()
        .into_iter()
        .map(|family| {
            let fit = fit_model(ev, family, &opts)?;
            for w in &fit.warnings {
                warn!("{family}: {w}");
            }
            Ok(fit)
        })
        .collect()
}

/// Dense lag grid from 0 to the last bin edge, with the bin centres spliced
/// in so the curve passes through the evaluation points of the fit.
fn curve_lags(bins: &LagBins) -> Vec<f64> {
    let top = *bins.edges().last().expect("bins are non-empty");
    let mut hs: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| top * i as f64 / (CURVE_POINTS - 1) as f64)
        .chain(bins.centers())
        .collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    hs
}

fn write_curve(dir: &Path, fit: &FitResult, hs: &[f64]) -> Result<()> {
    let name = format!("curve_{}.csv", fit.model.family);
    write_file(dir, &name, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let err = |source| FessError::Csv {
            path: dir.join(&name),
            source,
        };
        csv.write_record(["h", "gamma"]).map_err(err)?;
        for &h in hs {
            csv.write_record([h.to_string(), model_trace_variogram(&fit.model, h).to_string()])
                .map_err(err)?;
        }
        csv.flush().map_err(|e| err(e.into()))
    })
}

fn cmd_variogram(a: &FitArgs) -> Result<()> {
    let out = a
        .out_dir
        .as_deref()
        .ok_or_else(|| FessError::Invalid("variogram requires --out-dir".into()))?;
    let d = load(&a.input, Some(out))?;
    let bins = bins_for(a, &d)?;
    let ev = empirical_trace_variogram(&d, &bins)?;
    write_file(out, "empirical.csv", |w| ev.write_csv(w))?;
    let hs = curve_lags(&bins);
    for fit in fit_all(a, &ev)? {
        write_json(out, &format!("model_{}.json", fit.model.family), &fit.to_json())?;
        write_curve(out, &fit, &hs)?;
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let d = load(&a.input, a.out_dir.as_deref())?;
    let bins = bins_for(a, &d)?;
    let ev = empirical_trace_variogram(&d, &bins)?;
    let fits = fit_all(a, &ev)?;
    if let Some(out) = &a.out_dir {
        for fit in &fits {
            write_json(out, &format!("model_{}.json", fit.model.family), &fit.to_json())?;
        }
    }
    print_json(&Value::Array(fits.iter().map(FitResult::to_json).collect()));
    Ok(())
}

fn cmd_ess(a: &FitArgs) -> Result<()> {
    let d = load(&a.input, a.out_dir.as_deref())?;
    let bins = bins_for(a, &d)?;
    let ev = empirical_trace_variogram(&d, &bins)?;
    let dist = d.distances();
    let mut reports = serde_json::Map::new();
    for fit in fit_all(a, &ev)? {
        let mut report = ess_functional(&dist, &fit.model)?;
        let mut warnings = fit.warnings.clone();
        warnings.append(&mut report.warnings);
        report.warnings = warnings;
        for w in &report.warnings {
            warn!("{}: {w}", fit.model.family);
        }
        reports.insert(fit.model.family.to_string(), report.to_json());
    }
    let value = Value::Object(reports);
    if let Some(out) = &a.out_dir {
        write_json(out, "ess.json", &value)?;
    }
    print_json(&value);
    Ok(())
}

fn cmd_far1_simulate(a: &SimulateArgs) -> Result<()> {
    let grid = EvalGrid::uniform(0.0, 1.0, a.m)?;
    let spec = match (&a.lambdas, &a.etas) {
        (Some(l), Some(e)) => Far1Spec::new(l.clone(), e.clone(), grid, a.basis.into())?,
        _ => Far1Spec::geometric(a.lambda0, a.eta0, a.k, grid, a.basis.into())?,
    };
    let d = far1_simulate(&spec, a.n, a.seed)?;
    write_file(&a.out_dir, "far1_simulate.csv", |w| write_wide_csv(&d, w))
}

fn cmd_far1_sweep(a: &SweepArgs) -> Result<()> {
    let values = a
        .values
        .clone()
        .unwrap_or_else(|| (1..=19).map(|i| i as f64 * 0.05).collect());
    if a.n_list.contains(&0) {
        return Err(FessError::Invalid("sample sizes must be positive".into()));
    }
    let axis: SweepAxis = a.axis.into();
    let rows = far1_sweep(axis, &values, &a.n_list, a.fixed)?;
    let name = match axis {
        SweepAxis::Lambda0 => "far1_sweep_lambda0.csv",
        SweepAxis::Eta0 => "far1_sweep_eta0.csv",
    };
    write_file(&a.out_dir, name, |w| write_sweep_csv(&rows, w))
}

fn run_experiment(a: &SubsampleArgs, d: &SpatialFunctionalDataset) -> Result<SubsampleExperiment> {
    let exp = subsample_experiment(d, a.size, a.reps, a.seed)?;
    write_file(&a.out_dir, "replicates.csv", |w| exp.write_replicates_csv(w))?;
    write_json(&a.out_dir, "averages.json", &exp.averages_json())?;
    Ok(exp)
}

fn cmd_boxplot(a: &SubsampleArgs) -> Result<()> {
    let d = load(&a.input, Some(&a.out_dir))?;
    let grid = d.grid().points();
    let full = functional_boxplot(&d)?;
    write_file(&a.out_dir, "boxplot_full.csv", |w| full.write_csv(grid, w))?;
    write_file(&a.out_dir, "outliers_full.csv", |w| full.write_outliers_csv(w))?;

    let exp = run_experiment(a, &d)?;
    for r in exp.replicates.iter().take(a.examples) {
        let sub = functional_boxplot(&d.subset(&r.rows)?)?;
        write_file(&a.out_dir, &format!("boxplot_sub_{}.csv", r.replicate), |w| {
            sub.write_csv(grid, w)
        })?;
    }

    let band = exp.median_band;
    write_file(&a.out_dir, "median_band.csv", |w| {
        let path = a.out_dir.join("median_band.csv");
        let err = |source| FessError::Csv {
            path: path.clone(),
            source,
        };
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["t", "median", "lower", "upper"]).map_err(err)?;
        for (t, m) in grid.iter().zip(&full.median) {
            csv.write_record([
                t.to_string(),
                m.to_string(),
                (m - band).to_string(),
                (m + band).to_string(),
            ])
            .map_err(err)?;
        }
        csv.flush().map_err(|e| err(e.into()))
    })?;

    print_json(&json!({
        "n": d.n(),
        "median_index": full.median_index,
        "outliers": full.outliers.len(),
        "averages": exp.averages_json(),
    }));
    Ok(())
}

fn cmd_subsample(a: &SubsampleArgs) -> Result<()> {
    let d = load(&a.input, Some(&a.out_dir))?;
    let exp = run_experiment(a, &d)?;
    print_json(&exp.averages_json());
    Ok(())
}
