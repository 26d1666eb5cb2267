use std::fs;
use std::path::{Path, PathBuf};

use scanood::detectors::{
    boundary_interior_stats, load_bundle, md_fit, run_strategy, save_bundle, Cohorts, Detector, LogitMethod,
    LogitVolume, RegionStats, StrategyConfig, StrategyMode, MD_DEEP, RF_DEEP,
};
use scanood::eval::{emit_report, evaluate, read_scores, to_canonical_json, write_scores, ReportFormat, ScoreRecord};
use scanood::experiment::{strategy_comparison, ExperimentConfig};
use scanood::features::{
    gap_pool, load_feature_table, read_stage_map, save_feature_table, stage_subset, synth_generate, Label,
    ScanDescriptor, SynthConfig, StageSelection, BACKGROUND_DATASET,
};
use scanood::grid3d::rvol::{read_mask, read_volume};
use scanood::roi::{anchor_rois, sample_background_rois, write_manifest, RoiConfig, RoiRecord};
use scanood::seed;

use crate::config::RunConfig;
use crate::{
    BoundaryArgs, CliError, EvalArgs, PoolArgs, ReportExt, RoisArgs, ScoreArgs, StrategiesArgs, SynthArgs, TableExt,
    TrainArgs,
};

pub struct Context {
    pub seed: Option<u64>,
    pub cfg: RunConfig,
}

impl Context {
    fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage("a seed is required: pass --seed or set `seed` in the config".into()))
    }
}

fn require_files<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<(), CliError> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::Usage(format!("input {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn parse_label(s: &str) -> Result<Label, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "0" | "id" => Ok(Label::Id),
        "1" | "ood" => Ok(Label::Ood),
        _ => Err(CliError::Usage(format!("label must be id/0 or ood/1, got {s:?}"))),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string()
}

fn load_tables(paths: &[PathBuf], stages: Option<&str>) -> Result<Vec<ScanDescriptor>, CliError> {
    require_files(paths)?;
    let selection = stages.map(StageSelection::parse).transpose()?;
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(load_feature_table(p)?);
    }
    if let Some(sel) = selection {
        for r in &mut rows {
            r.vector = stage_subset(&r.vector, &sel)?;
        }
    }
    Ok(rows)
}

pub fn synth(ctx: &Context, a: SynthArgs) -> Result<(), CliError> {
    let mut cfg = SynthConfig {
        rng_seed: seed::derive_named(ctx.seed()?, "synth"),
        split: a.split,
        ..ctx.cfg.synth.clone()
    };
    if let Some(n) = a.n_rois {
        cfg.n_rois = n;
    }
    let data = synth_generate(&cfg)?;
    fs::create_dir_all(&a.out).map_err(scanood::Error::from)?;
    let ext = match a.format {
        TableExt::Bin => "feat",
        TableExt::Csv => "csv",
    };
    save_feature_table(&data.id, &a.out.join(format!("{}.{ext}", scanood::features::ID_DATASET)))?;
    for (name, rows) in &data.ood {
        save_feature_table(rows, &a.out.join(format!("{name}.{ext}")))?;
    }
    if !data.background.is_empty() {
        save_feature_table(&data.background, &a.out.join(format!("{BACKGROUND_DATASET}.{ext}")))?;
    }
    fs::write(a.out.join("synth.json"), to_canonical_json(&cfg)?).map_err(scanood::Error::from)?;
    Ok(())
}

pub fn rois(ctx: &Context, a: RoisArgs) -> Result<(), CliError> {
    require_files([&a.mask])?;
    let (mask, _) = read_mask(&a.mask)?;
    let scan_id = a.scan_id.unwrap_or_else(|| {
        let name = file_stem(&a.mask);
        name.strip_suffix(".json").unwrap_or(&name).to_string()
    });
    let mut cfg = RoiConfig {
        rng_seed: seed::derive_named(ctx.seed()?, &format!("rois:{scan_id}")),
        ..ctx.cfg.roi.clone()
    };
    if let Some(n) = a.n_rois {
        cfg.n_rois = n;
    }
    if let Some(c) = a.crop_size {
        cfg.crop_size_vox = c;
    }
    let mut specs = anchor_rois(&mask, mask.dims(), &cfg)?;
    if a.background > 0 {
        specs.extend(sample_background_rois(&mask, mask.dims(), a.background, &cfg)?);
    }
    let records: Vec<RoiRecord> = specs
        .into_iter()
        .map(|roi| RoiRecord {
            scan_id: scan_id.clone(),
            roi,
        })
        .collect();
    write_manifest(&a.out, &records)?;
    Ok(())
}

pub fn pool(a: PoolArgs) -> Result<(), CliError> {
    require_files(&a.maps)?;
    let selection = StageSelection::parse(&a.stages)?;
    let maps = a.maps.iter().map(|p| read_stage_map(p)).collect::<Result<Vec<_>, _>>()?;
    let row = ScanDescriptor {
        scan_id: a.scan_id,
        roi_index: a.roi_index,
        dataset: a.dataset,
        label: parse_label(&a.label)?,
        vector: gap_pool(&maps, &selection)?,
    };
    let mut rows = if a.append && a.out.exists() {
        load_feature_table(&a.out)?
    } else {
        Vec::new()
    };
    rows.push(row);
    save_feature_table(&rows, &a.out)?;
    Ok(())
}

pub fn train(ctx: &Context, a: TrainArgs) -> Result<(), CliError> {
    let mode = StrategyMode::parse(&a.strategy)
        .ok_or_else(|| CliError::Usage(format!("unknown strategy {:?}", a.strategy)))?;
    if mode.is_lodo() && a.held_out.is_none() {
        return Err(CliError::Usage(format!("strategy {} needs --held-out", mode.name())));
    }
    let rows = load_tables(&a.tables, a.stages.as_deref())?;
    let cohorts = Cohorts::from_rows(rows, BACKGROUND_DATASET);
    let detector = match a.method.as_str() {
        RF_DEEP => {
            let mut params = ctx.cfg.forest.clone();
            params.rng_seed = seed::derive_named(ctx.seed()?, "forest");
            if let Some(n) = a.n_trees {
                params.n_trees = n;
            }
            if let Some(d) = a.max_depth {
                params.max_depth = Some(d);
            }
            let strategy = StrategyConfig {
                mode,
                held_out: a.held_out,
                background_roi_count: a.background_count,
            };
            Detector::RfDeep(run_strategy(&strategy, &cohorts, &params)?)
        }
        MD_DEEP => {
            if mode != StrategyMode::DatasetSpecific {
                return Err(CliError::Usage("--strategy applies to rf-deep only".into()));
            }
            Detector::MdDeep(md_fit(&cohorts.id)?)
        }
        other => return Err(CliError::Usage(format!("unknown method {other:?}"))),
    };
    save_bundle(&a.out, &detector)?;
    Ok(())
}

fn logit_volume(stem: &Path, threshold: Option<f64>) -> Result<LogitVolume, CliError> {
    let part = |suffix: &str| {
        let mut name = stem.as_os_str().to_owned();
        name.push(format!(".{suffix}.json"));
        PathBuf::from(name)
    };
    let (p0, p1) = (part("f0"), part("f1"));
    require_files([&p0, &p1])?;
    Ok(LogitVolume::from_grids(&read_volume(&p0)?, &read_volume(&p1)?)?.with_threshold(threshold))
}

pub fn score(a: ScoreArgs) -> Result<(), CliError> {
    let records = if let Some(bundle) = &a.bundle {
        require_files([bundle])?;
        let detector = load_bundle(bundle)?;
        detector.score_table(&load_tables(&a.tables, a.stages.as_deref())?)?
    } else if !a.logits.is_empty() {
        let name = a.method.as_deref().unwrap_or_default();
        let method = LogitMethod::parse(name)
            .ok_or_else(|| CliError::Usage(format!("unknown logit method {name:?}")))?;
        let label = parse_label(a.label.as_deref().unwrap_or_default())?;
        let mut out = Vec::new();
        for stem in &a.logits {
            out.push(ScoreRecord {
                scan_id: file_stem(stem),
                dataset: a.dataset.clone().unwrap_or_default(),
                label,
                method: method.name().to_string(),
                score: method.score(&logit_volume(stem, a.threshold)?)?,
                group: None,
            });
        }
        out
    } else {
        return Err(CliError::Usage("pass --bundle with --tables, or --logits".into()));
    };
    write_scores(&a.out, &records)?;
    Ok(())
}

pub fn eval(ctx: &Context, a: EvalArgs) -> Result<(), CliError> {
    require_files(&a.scores)?;
    let mut protocol = ctx.cfg.eval.clone();
    protocol.master_seed = seed::derive_named(ctx.seed()?, "eval");
    if let Some(n) = a.n_runs {
        protocol.n_runs = n;
    }
    if let Some(n) = a.n_draws {
        protocol.n_draws = n;
    }
    if a.n_id.is_some() {
        protocol.n_id = a.n_id;
    }
    let mut records = Vec::new();
    for p in &a.scores {
        records.extend(read_scores(p)?);
    }
    let report = evaluate(&records, &protocol)?;
    let format = match a.format {
        ReportExt::Json => ReportFormat::Json,
        ReportExt::Csv => ReportFormat::Csv,
    };
    emit_report(&report, format, &a.out)?;
    Ok(())
}

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

fn stats_fields(s: Option<RegionStats>) -> [String; 3] {
    match s {
        Some(s) => [fixed(s.mean), fixed(s.sd), s.count.to_string()],
        None => Default::default(),
    }
}

pub fn boundary(a: BoundaryArgs) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Usage(e.to_string());
    w.write_record([
        "scan_id",
        "overall_mean",
        "overall_sd",
        "overall_n",
        "boundary_mean",
        "boundary_sd",
        "boundary_n",
        "interior_mean",
        "interior_sd",
        "interior_n",
        "interior_to_boundary",
    ])
    .map_err(csv_err)?;
    for stem in &a.logits {
        let s = boundary_interior_stats(&logit_volume(stem, a.threshold)?)?;
        let mut row = vec![file_stem(stem)];
        row.extend(stats_fields(Some(s.overall)));
        row.extend(stats_fields(Some(s.boundary)));
        row.extend(stats_fields(s.interior));
        row.push(s.interior_to_boundary_ratio().map(fixed).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(&a.out, bytes).map_err(scanood::Error::from)?;
    Ok(())
}

pub fn strategies(ctx: &Context, a: StrategiesArgs) -> Result<(), CliError> {
    let master = ctx.seed()?;
    let mut base = ExperimentConfig {
        synth: ctx.cfg.synth.clone(),
        forest: ctx.cfg.forest.clone(),
        protocol: ctx.cfg.eval.clone(),
    };
    if base.synth.n_background == 0 {
        base.synth.n_background = base.synth.n_rois;
    }
    if let Some(n) = a.n_trees {
        base.forest.n_trees = n;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Usage(e.to_string());
    w.write_record(["seed", "mode", "target", "auroc", "fpr95"]).map_err(csv_err)?;
    for i in 0..a.seeds {
        let cfg = base.with_seed(seed::derive(master, i));
        for o in strategy_comparison(&cfg.synth, &cfg.forest)? {
            w.write_record([
                i.to_string(),
                o.mode.name().to_string(),
                o.target,
                fixed(100.0 * o.auroc),
                fixed(100.0 * o.fpr95),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(&a.out, bytes).map_err(scanood::Error::from)?;
    Ok(())
}
