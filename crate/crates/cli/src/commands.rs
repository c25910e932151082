use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;

use ris_anglemap::anglemap::{self, AngleMapModel};
use ris_anglemap::dataset::{
    export_csv, ingest_csv, scene_id, split, AngleRecord, FileHeader, GridSpec, Region,
};
use ris_anglemap::experiment::{self, AngleGrid, CompareSpec, Evaluator};
use ris_anglemap::Error;

use crate::config::RunConfig;
use crate::SplitPart;

const SUMMARY_SCHEMA: &str = "ris-anglemap/summary/1";
const LOSS_SCHEMA: &str = "ris-anglemap/losses/1";
const METRICS_SCHEMA: &str = "ris-anglemap/metrics/1";
const COMPARE_SCHEMA: &str = "ris-anglemap/compare/1";
const GRID_SCHEMA: &str = "ris-anglemap/anglegrid/1";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn header(cfg: &RunConfig, schema: &str) -> Result<String> {
    Ok(FileHeader { schema: schema.into(), config_hash: cfg.hash(), scene_id: scene_id(&cfg.scene.scene())? }.render())
}

fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    if let Some(path) = out {
        let mut f = create(path)?;
        writeln!(f, "{text}")?;
        f.flush()?;
    }
    // a closed stdout (e.g. piped into `head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn read_dataset(path: &Path) -> Result<(Option<FileHeader>, Vec<AngleRecord>)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(ingest_csv(BufReader::new(file))?)
}

fn read_model(path: &Path) -> Result<(AngleMapModel, String)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(AngleMapModel::from_checkpoint(&text)?)
}

pub fn generate(cfg: &RunConfig, out: &Path, summary: Option<&Path>) -> Result<()> {
    let generated = cfg.scene.generate(cfg.dataset_size, cfg.jitter, cfg.seeds.data)?;
    let mut f = create(out)?;
    export_csv(&generated.records, &cfg.hash(), &mut f)?;
    f.flush()?;
    let value = json!({
        "schema": SUMMARY_SCHEMA,
        "config_hash": cfg.hash(),
        "scene_id": scene_id(&cfg.scene.scene())?,
        "record_count": generated.records.len(),
        "los_count": generated.count(ris_anglemap::geometry::BlockageFlag::Los),
        "nlos_count": generated.count(ris_anglemap::geometry::BlockageFlag::Nlos),
        "skipped": generated.skipped,
        "dataset": out,
    });
    emit_json(&value, summary)
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path, losses: &Path) -> Result<()> {
    let (_, records) = read_dataset(data)?;
    let outcome = anglemap::train(&records, &cfg.transformer, &cfg.vocab, &cfg.scene.region(), cfg.seeds.train)?;
    std::fs::write(out, outcome.model.to_checkpoint(&cfg.hash())?).with_context(|| format!("writing {}", out.display()))?;

    let mut f = create(losses)?;
    writeln!(f, "{}", header(cfg, LOSS_SCHEMA)?)?;
    writeln!(f, "epoch,train_loss,val_loss")?;
    for h in &outcome.history {
        writeln!(f, "{},{},{}", h.epoch + 1, h.train_loss, h.val_loss)?;
    }
    f.flush()?;

    let last = outcome.history.last();
    emit_json(
        &json!({
            "schema": SUMMARY_SCHEMA,
            "config_hash": cfg.hash(),
            "records": records.len(),
            "epochs": outcome.history.len(),
            "final_train_loss": last.map(|h| h.train_loss),
            "final_val_loss": last.map(|h| h.val_loss),
            "checkpoint": out,
            "losses": losses,
        }),
        None,
    )
}

fn select(records: Vec<AngleRecord>, part: SplitPart, seed: u64) -> Result<Vec<AngleRecord>> {
    if part == SplitPart::All {
        return Ok(records);
    }
    let s = split(&records, seed)?;
    Ok(match part {
        SplitPart::Train => s.train,
        SplitPart::Validation => s.validation,
        SplitPart::Test => s.test,
        SplitPart::All => unreachable!(),
    })
}

pub fn evaluate(cfg: &RunConfig, model_path: &Path, data: &Path, part: SplitPart, out: Option<&Path>) -> Result<()> {
    let (model, trained_with) = read_model(model_path)?;
    if model.vocab != cfg.vocab {
        return Err(Error::Compatibility("checkpoint vocabulary differs from the configured one".into()).into());
    }
    let (file_header, records) = read_dataset(data)?;
    let scene = scene_id(&cfg.scene.scene())?;
    if let Some(h) = &file_header {
        if h.scene_id != scene {
            return Err(Error::Compatibility(format!("dataset scene {} differs from configured scene {scene}", h.scene_id)).into());
        }
    }
    let records = select(records, part, cfg.seeds.train)?;
    let ev = Evaluator::new(&cfg.scene.scene(), cfg.scene.ue_height, &records, &cfg.system())?;
    let report = ev.evaluate(&model)?;
    emit_json(
        &json!({
            "schema": METRICS_SCHEMA,
            "config_hash": cfg.hash(),
            "checkpoint_config_hash": trained_with,
            "records": records.len(),
            "loss": model.mean_loss(&records)?,
            "token_accuracy": model.token_accuracy(&records)?,
            "report": report,
        }),
        out,
    )
}

pub fn compare(cfg: &RunConfig, out: &Path) -> Result<()> {
    let evaluation = cfg.scene.generate(cfg.eval_size, cfg.jitter, cfg.seeds.eval)?.records;
    let spec = CompareSpec {
        scene: &cfg.scene,
        sizes: &cfg.sizes,
        jitter: cfg.jitter,
        transformer: cfg.transformer,
        vocab: cfg.vocab,
        system: cfg.system(),
        data_seed: cfg.seeds.data,
        train_seed: cfg.seeds.train,
    };
    let outcome = experiment::compare(&spec, &evaluation)?;
    let mut f = create(out)?;
    writeln!(f, "{}", header(cfg, COMPARE_SCHEMA)?)?;
    writeln!(f, "method,dataset_size,accuracy,sum_rate,probes,val_loss")?;
    for r in &outcome.rows {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(f, "{},{},{},{},{},{}", r.method.name(), r.dataset_size, r.accuracy, r.sum_rate, r.probes, val)?;
    }
    f.flush()?;
    emit_json(
        &json!({ "schema": COMPARE_SCHEMA, "config_hash": cfg.hash(), "rows": outcome.rows.len(), "output": out }),
        None,
    )
}

fn write_grid(path: &Path, head: &str, g: &AngleGrid, values: &[Vec<Option<f64>>]) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "{head}")?;
    let xs: Vec<String> = g.xs.iter().map(f64::to_string).collect();
    writeln!(f, "y\\x,{}", xs.join(","))?;
    for (y, row) in g.ys.iter().zip(values) {
        let cells: Vec<String> = row.iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()).collect();
        writeln!(f, "{y},{}", cells.join(","))?;
    }
    f.flush()?;
    Ok(())
}

pub fn export_anglemap(
    cfg: &RunConfig,
    model_path: &Path,
    out_dir: &Path,
    rows: Option<usize>,
    cols: Option<usize>,
    region: Option<&[f64]>,
) -> Result<()> {
    let (model, _) = read_model(model_path)?;
    let z = cfg.scene.ue_height;
    let grids: Vec<(&str, GridSpec)> = if rows.is_some() || cols.is_some() || region.is_some() {
        let region = match region {
            Some(&[x0, x1, y0, y1]) => Region { x: [x0, x1], y: [y0, y1] },
            Some(_) => return Err(Error::Domain("--region takes four values x0,x1,y0,y1".into()).into()),
            None => model.region,
        };
        vec![("custom", GridSpec { region, rows: rows.unwrap_or(20), cols: cols.unwrap_or(20), z, jitter: 0.0 })]
    } else {
        let (los, _, nlos, _) = cfg.scene.grids(cfg.dataset_size, 0.0);
        vec![("los_zone", los), ("nlos_zone", nlos)]
    };
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let head = header(cfg, GRID_SCHEMA)?;
    let mut files = Vec::new();
    for (name, grid) in &grids {
        for g in experiment::export_anglemap(&model, &cfg.scene.scene(), grid)? {
            for (suffix, values) in [("predicted", &g.predicted), ("truth", &g.truth)] {
                let path = out_dir.join(format!("{name}_{}_{suffix}.csv", g.angle.name()));
                write_grid(&path, &head, &g, values)?;
                files.push(path);
            }
        }
    }
    emit_json(&json!({ "schema": GRID_SCHEMA, "config_hash": cfg.hash(), "files": files }), None)
}
