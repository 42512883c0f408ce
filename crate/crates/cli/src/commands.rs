//! Command implementations. Every failure is classified for the exit-code
//! contract: 1 usage, 2 data, 3 numeric.

use std::path::{Path, PathBuf};

use strnn_core::features::{
    decimate, default_bands, extract_band_series, slice_windows, BandSpec,
};
use strnn_core::graph::{seed_layout_62, GridLayout};
use strnn_core::io::{load_checkpoint, save_checkpoint, DataError, StvFile};
use strnn_core::model::{Mode, StrnnParams};
use strnn_core::numerics::{Activation, Rng};
use strnn_core::synth::{gen_synthetic, SynthSpec};
use strnn_core::training::{
    evaluate, grad_check, gradcheck_fixture, saliency_map, train, TrainError,
};
use strnn_core::volume::Dataset;

use crate::config::{ConfigError, LayoutChoice, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Numeric(e.to_string()),
            TrainError::BadLearningRate(_) | TrainError::BadBatchSize => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Flag overrides shared by several commands; applied after the config
/// file so they always win.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub profile: Option<String>,
}

fn load_config(path: Option<&Path>, over: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(profile) = &over.profile {
        cfg.apply_profile(profile)?;
    }
    if let Some(mode) = &over.mode {
        cfg.mode = Mode::parse(mode)
            .ok_or_else(|| CliError::Usage(format!("unknown mode {mode:?}")))?;
    }
    if let Some(seed) = over.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn build_layout(choice: &LayoutChoice, height: usize, width: usize) -> Result<GridLayout, CliError> {
    let layout = match choice {
        LayoutChoice::Full => GridLayout::full(height, width),
        LayoutChoice::Seed62 => seed_layout_62(),
        LayoutChoice::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read layout {path}: {e}")))?;
            GridLayout::from_text(&text).map_err(|e| CliError::Data(e.to_string()))?
        }
    };
    if (layout.height(), layout.width()) != (height, width) {
        return Err(CliError::Data(format!(
            "layout is {}x{} but the data grid is {height}x{width}",
            layout.height(),
            layout.width()
        )));
    }
    Ok(layout)
}

fn warn_bad_threads_var() {
    if let Ok(v) = std::env::var("STRNN_THREADS") {
        if v.parse::<usize>().map(|n| n > 0) != Ok(true) {
            eprintln!("warning: ignoring invalid STRNN_THREADS value {v:?}");
        }
    }
}

pub fn cmd_gen(
    out: &Path,
    classes: usize,
    height: usize,
    width: usize,
    t_len: usize,
    depth: usize,
    samples: usize,
    spatial_signal: f64,
    temporal_signal: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<(), CliError> {
    if classes < 2 {
        return Err(CliError::Usage("need at least two classes".into()));
    }
    if samples == 0 || height == 0 || width == 0 || t_len == 0 || depth == 0 {
        return Err(CliError::Usage("all sizes must be positive".into()));
    }
    let spec = SynthSpec {
        classes,
        height,
        width,
        t_len,
        depth,
        spatial_signal,
        temporal_signal,
        noise_sigma,
        samples,
        seed,
    };
    let data = gen_synthetic(&spec);
    let labels = data.labels.iter().map(|&y| y as u32).collect();
    StvFile::from_volumes(data.volumes, Some(labels)).save(out)?;
    println!(
        "wrote {samples} samples ({classes} classes, {t_len}x{height}x{width}x{depth}) to {}",
        out.display()
    );
    Ok(())
}

pub fn cmd_train(
    config: Option<&Path>,
    data_path: &Path,
    out: &Path,
    over: &Overrides,
) -> Result<(), CliError> {
    warn_bad_threads_var();
    let cfg = load_config(config, over)?;
    let stv = StvFile::load(data_path)?;
    if let Some((h, w)) = cfg.explicit_grid() {
        if (h, w) != (stv.height as usize, stv.width as usize) {
            return Err(CliError::Data(format!(
                "config grid {h}x{w} does not match the data grid {}x{}",
                stv.height, stv.width
            )));
        }
    }
    let layout = build_layout(&cfg.layout, stv.height as usize, stv.width as usize)?;
    if stv.t_len as usize != cfg.dims.seq_len {
        return Err(CliError::Data(format!(
            "data has {} slices per sample, config expects seq_len={}",
            stv.t_len, cfg.dims.seq_len
        )));
    }
    if stv.depth as usize != cfg.dims.input_dim {
        return Err(CliError::Data(format!(
            "data has depth {}, config expects input_dim={}",
            stv.depth, cfg.dims.input_dim
        )));
    }
    let dataset = stv.into_dataset(cfg.dims.classes)?;

    let mut rng = Rng::new(cfg.train.seed);
    let mut model = StrnnParams::init(
        cfg.mode,
        cfg.dims,
        layout,
        cfg.activation,
        cfg.lambda1,
        cfg.lambda2,
        &mut rng,
    );

    println!("# epoch\tdata-loss\tpenalty\ttrain-acc");
    let mut clamped_total = 0usize;
    train(&mut model, &dataset, &cfg.train, |m| {
        clamped_total += m.clamped;
        println!("{}", m.tsv_line());
    })?;
    if clamped_total > 0 {
        eprintln!("warning: {clamped_total} true-class probabilities hit the clamp floor");
    }
    save_checkpoint(out, &model)?;
    println!("# checkpoint written to {}", out.display());
    Ok(())
}

pub fn cmd_eval(checkpoint: &Path, data_path: &Path) -> Result<(), CliError> {
    warn_bad_threads_var();
    let model = load_checkpoint(checkpoint)?;
    let dataset = StvFile::load(data_path)?.into_dataset(model.dims.classes)?;
    let eval = evaluate(&model, &dataset)?;

    println!("samples: {}", eval.total);
    println!("accuracy: {:.4}", eval.accuracy);
    for (c, acc) in eval.per_class.iter().enumerate() {
        println!("class {} accuracy: {:.4}", c + 1, acc);
    }
    println!("confusion matrix (rows = true class, columns = predicted):");
    print!("      ");
    for c in 0..model.dims.classes {
        print!(" pred{:<3}", c + 1);
    }
    println!();
    for (c, row) in eval.confusion.iter().enumerate() {
        print!("true{:<3}", c + 1);
        for count in row {
            print!(" {count:>7}");
        }
        println!();
    }
    Ok(())
}

pub fn cmd_gradcheck(
    config: Option<&Path>,
    tolerance: f64,
    over: &Overrides,
) -> Result<(), CliError> {
    if tolerance < 0.0 {
        return Err(CliError::Usage("tolerance must be nonnegative".into()));
    }
    let seed = over.seed.unwrap_or(0);
    let step = 1e-4;
    let mut worst_overall = 0.0f64;

    let runs: Vec<(StrnnParams, Dataset)> = match config {
        // Check the configured model shape on a random batch. Runtime is
        // quadratic-ish in the parameter count; large profiles take a while.
        Some(_) => {
            let cfg = load_config(config, over)?;
            let (height, width) = match (&cfg.layout, cfg.explicit_grid()) {
                (LayoutChoice::Seed62, grid) => {
                    if let Some(g) = grid {
                        if g != (9, 9) {
                            return Err(CliError::Usage(
                                "layout seed62 implies a 9x9 grid".into(),
                            ));
                        }
                    }
                    (9, 9)
                }
                (LayoutChoice::File(path), grid) => {
                    let text = std::fs::read_to_string(path).map_err(|e| {
                        CliError::Data(format!("cannot read layout {path}: {e}"))
                    })?;
                    let l = GridLayout::from_text(&text)
                        .map_err(|e| CliError::Data(e.to_string()))?;
                    if let Some(g) = grid {
                        if g != (l.height(), l.width()) {
                            return Err(CliError::Usage(
                                "grid keys do not match the layout file".into(),
                            ));
                        }
                    }
                    (l.height(), l.width())
                }
                (LayoutChoice::Full, Some(g)) => g,
                (LayoutChoice::Full, None) => {
                    return Err(CliError::Usage(
                        "gradcheck with layout=full needs grid_height and grid_width".into(),
                    ))
                }
            };
            let layout = build_layout(&cfg.layout, height, width)?;
            let mut rng = Rng::new(seed);
            let mut model = StrnnParams::init(
                cfg.mode,
                cfg.dims,
                layout,
                cfg.activation,
                cfg.lambda1,
                cfg.lambda2,
                &mut rng,
            );
            strnn_core::training::nudge_projections_from_zero(&mut model, 0.05);
            let volumes = (0..3)
                .map(|_| {
                    let d = &cfg.dims;
                    let len = d.seq_len * height * width * d.input_dim;
                    strnn_core::volume::SpatioTemporalVolume::from_vec(
                        d.seq_len,
                        height,
                        width,
                        d.input_dim,
                        (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect(),
                    )
                })
                .collect();
            let labels = (0..3).map(|i| i % cfg.dims.classes).collect();
            vec![(model, Dataset::new(volumes, labels))]
        }
        // Default tiny profile exercises both activations.
        None => {
            let mode = match &over.mode {
                Some(m) => Mode::parse(m)
                    .ok_or_else(|| CliError::Usage(format!("unknown mode {m:?}")))?,
                None => Mode::Strnn,
            };
            vec![
                gradcheck_fixture(mode, Activation::Relu, seed),
                gradcheck_fixture(mode, Activation::Sigmoid, seed),
            ]
        }
    };

    for (model, data) in runs {
        let report = grad_check(&model, &data, step);
        println!(
            "gradient check: mode={} activation={} step={step:e}",
            model.mode.name(),
            model.activation.name()
        );
        print!("{report}");
        let worst = report.worst();
        println!(
            "worst relative error {worst:.3e} ({})",
            if worst < tolerance { "PASS" } else { "FAIL" }
        );
        worst_overall = worst_overall.max(worst);
    }

    if worst_overall < tolerance {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check failed: worst relative error {worst_overall:.3e} >= tolerance {tolerance:e}"
        )))
    }
}

fn parse_bands_file(path: &Path) -> Result<Vec<BandSpec>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read bands {}: {e}", path.display())))?;
    let mut bands = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(CliError::Data(format!(
                "bands line {}: expected `name low high`, got {raw:?}",
                lineno + 1
            )));
        }
        let low: f64 = parts[1]
            .parse()
            .map_err(|_| CliError::Data(format!("bands line {}: bad low bound", lineno + 1)))?;
        let high: f64 = parts[2]
            .parse()
            .map_err(|_| CliError::Data(format!("bands line {}: bad high bound", lineno + 1)))?;
        if !(0.0 < low && low <= high) {
            return Err(CliError::Data(format!(
                "bands line {}: need 0 < low <= high",
                lineno + 1
            )));
        }
        bands.push(BandSpec::new(parts[0], low, high));
    }
    if bands.is_empty() {
        return Err(CliError::Data("bands file defines no bands".into()));
    }
    Ok(bands)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_extract(
    data_path: &Path,
    out: &Path,
    layout_choice: Option<&str>,
    width: usize,
    bands_path: Option<&Path>,
    sample_rate: f64,
    decimation: usize,
) -> Result<(), CliError> {
    if width == 0 {
        return Err(CliError::Usage("window width must be positive".into()));
    }
    if decimation == 0 {
        return Err(CliError::Usage("decimation factor must be positive".into()));
    }
    if sample_rate <= 0.0 {
        return Err(CliError::Usage("sample rate must be positive".into()));
    }
    let raw = StvFile::load(data_path)?;
    if raw.width != 1 || raw.depth != 1 {
        return Err(CliError::Data(format!(
            "raw recordings must have W=1 and D=1 (H=channels, T=samples); got W={} D={}",
            raw.width, raw.depth
        )));
    }
    let channels = raw.height as usize;
    let bands = match bands_path {
        Some(p) => parse_bands_file(p)?,
        None => default_bands(),
    };
    let frame_len = 256usize;
    let nyquist = sample_rate / decimation as f64 / 2.0;
    for b in &bands {
        if b.high_hz > nyquist {
            return Err(CliError::Data(format!(
                "band {} reaches {} Hz but the Nyquist frequency is {nyquist} Hz",
                b.name, b.high_hz
            )));
        }
    }

    let layout = match layout_choice {
        None => {
            if channels == 62 {
                seed_layout_62()
            } else {
                GridLayout::full(channels, 1)
            }
        }
        Some("seed62") => seed_layout_62(),
        Some("full") => GridLayout::full(channels, 1),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read layout {path}: {e}")))?;
            GridLayout::from_text(&text).map_err(|e| CliError::Data(e.to_string()))?
        }
    };
    if layout.occupied_count() != channels {
        return Err(CliError::Data(format!(
            "layout has {} occupied cells but the recording has {channels} channels",
            layout.occupied_count()
        )));
    }

    let mut volumes = Vec::new();
    let mut floored_total = 0usize;
    for (index, recording) in raw.volumes.iter().enumerate() {
        let samples = recording.t_len();
        let signals: Vec<Vec<f64>> = (0..channels)
            .map(|ch| {
                let raw_channel: Vec<f64> =
                    (0..samples).map(|t| recording.input(t, ch, 0)[0]).collect();
                decimate(&raw_channel, decimation)
            })
            .collect();
        if signals[0].len() < frame_len {
            eprintln!(
                "warning: recording {index} is shorter than one {frame_len}-sample frame; skipped"
            );
            continue;
        }
        let (series, floored) =
            extract_band_series(&signals, &bands, frame_len, sample_rate / decimation as f64);
        floored_total += floored;
        if series.steps() < width {
            eprintln!(
                "warning: recording {index} has {} steps, shorter than the {width}-step window; no volumes",
                series.steps()
            );
            continue;
        }
        volumes.extend(slice_windows(&series, width, &layout));
    }
    if floored_total > 0 {
        eprintln!("warning: {floored_total} band powers were non-positive and floored");
    }
    if volumes.is_empty() {
        return Err(CliError::Data(
            "no volumes produced; recordings are shorter than the slicing window".into(),
        ));
    }
    let count = volumes.len();
    StvFile::from_volumes(volumes, None).save(out)?;
    println!(
        "wrote {count} volumes ({} bands, {width}-step window) to {}",
        bands.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_saliency(
    checkpoint: &Path,
    layout_path: Option<&Path>,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let model = load_checkpoint(checkpoint)?;
    if let Some(path) = layout_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read layout {}: {e}", path.display())))?;
        let layout = GridLayout::from_text(&text).map_err(|e| CliError::Data(e.to_string()))?;
        if layout != model.layout {
            return Err(CliError::Data(
                "provided layout does not match the checkpoint's grid".into(),
            ));
        }
    }
    let map = saliency_map(&model).map_err(|e| CliError::Data(e.to_string()))?;

    println!("saliency map (normalized, . = unoccupied):");
    for i in 0..map.height {
        let mut line = String::new();
        for j in 0..map.width {
            match map.get(i, j) {
                Some(v) => line.push_str(&format!(" {v:.3}")),
                None => line.push_str("   .  "),
            }
        }
        println!("{line}");
    }

    let mut csv = String::new();
    for i in 0..map.height {
        for j in 0..map.width {
            if let Some(v) = map.get(i, j) {
                csv.push_str(&format!("{i},{j},{v:.6}\n"));
            }
        }
    }
    println!("row,col,weight");
    print!("{csv}");
    if let Some(path) = out {
        std::fs::write(path, format!("row,col,weight\n{csv}"))
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        println!("# csv written to {}", path.display());
    }
    Ok(())
}

