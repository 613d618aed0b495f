use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ccb_core::ccb::{CcbModel, TrainDiagnostics, TrainingConfig};
use ccb_core::checkpoint::{load_ccb, load_lr};
use ccb_core::metrics::{evaluate_with_index, k_nearest};
use ccb_core::report::{fmt4, table_cell, write_report_csv, ReportRow};
use ccb_core::selection::{
    evaluate_checkpoints, rank_runs, submodel_report_with_index, write_grid_csv, GridRun, SelectionCriterion,
    SubmodelReport,
};

use crate::artifacts::{self, load_prepared, REPORT_DIR};
use crate::ReportArgs;

pub fn run(args: &ReportArgs) -> Result<()> {
    let prepared = load_prepared(&args.out, args.data.as_deref(), args.schema.as_deref())?;
    let dataset = prepared.manifest.dataset.clone();
    let data = &prepared.data;
    let val_index = k_nearest(&data.validation, args.k, &prepared.schema)?;
    let test_index = k_nearest(&data.test, args.k, &prepared.schema)?;

    let ccb_dirs = artifacts::run_dirs(&args.out, "ccb-")?;
    let lr_dirs = artifacts::run_dirs(&args.out, "lr-")?;
    if ccb_dirs.is_empty() && lr_dirs.is_empty() {
        anyhow::bail!("no trained runs under {}; run `ccb train` first", args.out.display());
    }

    let report_dir = args.out.join(REPORT_DIR);
    artifacts::create_dir(&report_dir)?;
    let mut rows = Vec::new();

    for dir in &lr_dirs {
        let config: ccb_core::baseline::LrConfig = artifacts::read_json(&dir.join("config.json"))?;
        let params = load_lr::<f64>(&dir.join("model.ckpt"))?;
        let preds = params.predict_split(&data.test)?;
        let report = evaluate_with_index(&preds, &data.test, &test_index, "test")?;
        for criterion in SelectionCriterion::ALL {
            rows.push(ReportRow {
                dataset: dataset.clone(),
                method: "lr".into(),
                criterion: criterion.to_string(),
                seed: config.seed,
                report: report.clone(),
            });
        }
    }

    if !ccb_dirs.is_empty() {
        let runs = ccb_dirs
            .iter()
            .map(|dir| load_run(dir, data, &val_index))
            .collect::<Result<Vec<_>>>()?;

        for criterion in SelectionCriterion::ALL {
            let ranking = rank_runs(&runs, criterion)?;
            let (best, sel) = &ranking[0];
            let run = &runs[*best];
            let model = &run.checkpoints[sel.position];
            let preds = model.predict_split(&data.test, args.mode)?;
            let report = evaluate_with_index(&preds, &data.test, &test_index, "test")?;
            println!(
                "ccb {criterion:<14} lambda {} hidden {} step {:>8}  val {}  test {}",
                run.config.lambda,
                run.config.hidden_dim,
                sel.step,
                table_cell(&sel.report),
                table_cell(&report)
            );
            rows.push(ReportRow {
                dataset: dataset.clone(),
                method: "ccb".into(),
                criterion: criterion.to_string(),
                seed: run.config.seed,
                report,
            });

            if criterion == args.criterion {
                let file = create(&report_dir.join("grid.csv"))?;
                write_grid_csv(BufWriter::new(file), &runs, criterion)?;
                let sub = submodel_report_with_index(model, &data.test, &test_index)?;
                write_submodel_csv(&report_dir.join("submodel.csv"), &sub)?;
                let run_dir = &ccb_dirs[*best];
                let curve = run_dir.join("curve.csv");
                fs::copy(&curve, report_dir.join("curve.csv"))
                    .with_context(|| format!("copying {}", curve.display()))?;
            }
        }
    }

    for row in rows.iter().filter(|r| r.method == "lr" && r.criterion == args.criterion.to_string()) {
        println!("lr  seed {:<10} test {}", row.seed, row.cell());
    }

    write_report_csv(BufWriter::new(create(&report_dir.join("report.csv"))?), &rows)?;
    let mut jsonl = BufWriter::new(create(&report_dir.join("report.jsonl"))?);
    for row in &rows {
        row.write_json_line(&mut jsonl)?;
    }
    jsonl.flush()?;
    artifacts::write_metadata(&report_dir.join("run-metadata.json"), "report")?;
    Ok(())
}

/// Reload a run directory and score every checkpoint on validation.
fn load_run(
    dir: &Path,
    data: &ccb_core::SplitDataset,
    val_index: &ccb_core::metrics::NeighborIndex,
) -> Result<GridRun<f64>> {
    let config: TrainingConfig = artifacts::read_json(&dir.join("config.json"))?;
    let diagnostics: TrainDiagnostics = artifacts::read_json(&dir.join("diagnostics.json"))?;
    let mut paths: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let step = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("step-")?.strip_suffix(".ckpt")?.parse().ok());
        if let Some(step) = step {
            paths.push((step, path));
        }
    }
    if paths.is_empty() {
        anyhow::bail!("no checkpoints in {}", dir.display());
    }
    paths.sort();
    let checkpoints = paths
        .iter()
        .map(|(_, p)| load_ccb::<f64>(p).map_err(anyhow::Error::from))
        .collect::<Result<Vec<CcbModel<f64>>>>()?;
    let reports = evaluate_checkpoints(&checkpoints, &data.validation, val_index)?;
    Ok(GridRun {
        config,
        checkpoints,
        reports,
        diagnostics,
    })
}

fn write_submodel_csv(path: &Path, sub: &SubmodelReport) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    writeln!(w, "mode,model,acc,discr,consist,delta")?;
    for (mode, r) in &sub.rows {
        writeln!(
            w,
            "{mode},{},{},{},{},{}",
            SubmodelReport::label(*mode),
            fmt4(r.accuracy),
            fmt4(r.discrimination),
            fmt4(r.consistency),
            fmt4(r.delta)
        )?;
        println!("  {:<15} {}", SubmodelReport::label(*mode), table_cell(r));
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}
