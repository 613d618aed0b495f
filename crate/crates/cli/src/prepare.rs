use anyhow::{Context, Result};
use ccb_core::data::{parse_schema, prepare, RawTable, SPLIT_RATIOS};

use crate::artifacts::{self, Manifest};
use crate::PrepareArgs;

pub fn run(args: &PrepareArgs) -> Result<()> {
    let schema_text = artifacts::read_text(&args.schema)?;
    let schema = parse_schema(&schema_text).with_context(|| format!("in {}", args.schema.display()))?;
    let table = RawTable::load(&args.data, &schema)?;
    let prepared = prepare::<f64>(&table, &schema, args.seed)?;

    artifacts::create_dir(&args.out)?;
    let dataset = args
        .data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let manifest = Manifest {
        dataset,
        data: args.data.clone(),
        schema: args.schema.clone(),
        rows: table.rows().len(),
        dropped: table.dropped(),
        ratios: SPLIT_RATIOS,
        split: prepared.indices,
    };
    artifacts::write_json(&args.out.join(artifacts::MANIFEST), &manifest)?;
    artifacts::write_json(&args.out.join(artifacts::FITTED_SCHEMA), &prepared.schema)?;
    artifacts::write_metadata(&args.out.join("prepare.meta.json"), "prepare")?;

    let [tr, va, te] = prepared.data.sizes();
    println!(
        "{}: {} rows ({} dropped for missing values), encoded dim {}, split {tr}/{va}/{te}",
        manifest.dataset,
        manifest.rows,
        manifest.dropped,
        prepared.schema.encoded_dim().unwrap_or(0)
    );
    Ok(())
}
