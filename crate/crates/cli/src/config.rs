//! Plain-text `key=value` run configuration with named profiles.
//!
//! Unknown keys are rejected. Profiles prefill the published layer sizes
//! (`seed`: 62-channel band features; `ckplus`: 7x7 grids of 512-wide
//! frame features); explicit keys and command-line flags override them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use strnn_core::model::{Mode, ModelDims};
use strnn_core::numerics::Activation;
use strnn_core::training::TrainConfig;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Grid occupancy source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayoutChoice {
    /// Fully occupied grid matching the data file's H x W.
    Full,
    /// The built-in 62-electrode arrangement.
    Seed62,
    /// A layout file path.
    File(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub activation: Activation,
    pub dims: ModelDims,
    pub layout: LayoutChoice,
    /// Grid shape for commands that have no data file to derive it from;
    /// when set alongside data, it must match the data's grid. Both keys
    /// go together.
    pub grid_height: Option<usize>,
    pub grid_width: Option<usize>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Strnn,
            activation: Activation::Relu,
            dims: ModelDims {
                input_dim: 5,
                srnn_hidden: 16,
                srnn_out: 16,
                k_p: 4,
                trnn_hidden: 12,
                l_p: 4,
                classes: 3,
                seq_len: 9,
            },
            layout: LayoutChoice::Full,
            grid_height: None,
            grid_width: None,
            lambda1: 1e-3,
            lambda2: 1e-3,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Applies a named profile's published dimensions.
    pub fn apply_profile(&mut self, profile: &str) -> Result<(), ConfigError> {
        match profile {
            "seed" => {
                self.dims = ModelDims {
                    input_dim: 5,
                    srnn_hidden: 30,
                    srnn_out: 30,
                    k_p: 10,
                    trnn_hidden: 30,
                    l_p: 5,
                    classes: 3,
                    seq_len: 9,
                };
                self.layout = LayoutChoice::Seed62;
                Ok(())
            }
            "ckplus" => {
                self.dims = ModelDims {
                    input_dim: 512,
                    srnn_hidden: 50,
                    srnn_out: 50,
                    k_p: 10,
                    trnn_hidden: 150,
                    l_p: 5,
                    classes: 7,
                    seq_len: 44,
                };
                self.layout = LayoutChoice::Full;
                Ok(())
            }
            other => Err(ConfigError(format!(
                "unknown profile {other:?} (expected seed or ckplus)"
            ))),
        }
    }

    /// Parses a config file. A `profile=` line is applied first so explicit
    /// keys override it regardless of their order in the file.
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<RunConfig, ConfigError> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(ConfigError(format!("duplicate key {key:?}")));
            }
        }

        let mut cfg = RunConfig::default();
        if let Some(profile) = pairs.remove("profile") {
            cfg.apply_profile(&profile)?;
        }
        for (key, value) in pairs {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |what: &str| ConfigError(format!("key {key:?}: {what}, got {value:?}"));
        let parse_usize = |value: &str, what: &str| {
            value
                .parse::<usize>()
                .map_err(|_| ConfigError(format!("key {key:?}: expected {what}, got {value:?}")))
        };
        let parse_f64 = |value: &str, what: &str| {
            value
                .parse::<f64>()
                .map_err(|_| ConfigError(format!("key {key:?}: expected {what}, got {value:?}")))
        };
        match key {
            "mode" => {
                self.mode = Mode::parse(value).ok_or_else(|| bad("expected a mode name"))?;
            }
            "activation" => {
                self.activation = match value {
                    "relu" => Activation::Relu,
                    "sigmoid" => Activation::Sigmoid,
                    _ => return Err(bad("expected relu or sigmoid")),
                };
            }
            "layout" => {
                self.layout = match value {
                    "full" => LayoutChoice::Full,
                    "seed62" => LayoutChoice::Seed62,
                    path => LayoutChoice::File(path.to_string()),
                };
            }
            "learning_rate" => self.train.learning_rate = parse_f64(value, "a number")?,
            "momentum" => self.train.momentum = parse_f64(value, "a number")?,
            "epochs" => self.train.epochs = parse_usize(value, "a count")?,
            "batch_size" => self.train.batch_size = parse_usize(value, "a count")?,
            "seed" => {
                self.train.seed = value
                    .parse::<u64>()
                    .map_err(|_| bad("expected a 64-bit seed"))?;
            }
            "grad_clip" => {
                self.train.grad_clip = if value == "none" {
                    None
                } else {
                    Some(parse_f64(value, "a number or none")?)
                };
            }
            "lambda1" => self.lambda1 = parse_f64(value, "a number")?,
            "lambda2" => self.lambda2 = parse_f64(value, "a number")?,
            "grid_height" => self.grid_height = Some(parse_usize(value, "a count")?),
            "grid_width" => self.grid_width = Some(parse_usize(value, "a count")?),
            "input_dim" => self.dims.input_dim = parse_usize(value, "a count")?,
            "srnn_hidden" => self.dims.srnn_hidden = parse_usize(value, "a count")?,
            "srnn_out" => self.dims.srnn_out = parse_usize(value, "a count")?,
            "k_p" => self.dims.k_p = parse_usize(value, "a count")?,
            "trnn_hidden" => self.dims.trnn_hidden = parse_usize(value, "a count")?,
            "l_p" => self.dims.l_p = parse_usize(value, "a count")?,
            "classes" => self.dims.classes = parse_usize(value, "a count")?,
            "seq_len" => self.dims.seq_len = parse_usize(value, "a count")?,
            other => return Err(ConfigError(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.dims;
        let checks: [(bool, &str); 10] = [
            (self.train.learning_rate > 0.0, "learning_rate must be positive"),
            (
                (0.0..1.0).contains(&self.train.momentum),
                "momentum must be in [0, 1)",
            ),
            (self.train.batch_size >= 1, "batch_size must be at least 1"),
            (self.lambda1 >= 0.0 && self.lambda2 >= 0.0, "lambdas must be nonnegative"),
            (d.classes >= 2, "classes must be at least 2"),
            (d.input_dim >= 1, "input_dim must be at least 1"),
            (d.srnn_hidden >= 1 && d.srnn_out >= 1, "layer widths must be at least 1"),
            (d.trnn_hidden >= 1, "trnn_hidden must be at least 1"),
            (d.k_p >= 1 && d.l_p >= 1, "projection widths must be at least 1"),
            (d.seq_len >= 1 && d.l_p <= d.seq_len, "need 1 <= l_p <= seq_len"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(ConfigError(msg.to_string()));
            }
        }
        if let Some(clip) = self.train.grad_clip {
            if clip <= 0.0 {
                return Err(ConfigError("grad_clip must be positive or none".into()));
            }
        }
        match (self.grid_height, self.grid_width) {
            (None, None) => {}
            (Some(h), Some(w)) if h >= 1 && w >= 1 => {}
            (Some(_), Some(_)) => {
                return Err(ConfigError("grid_height and grid_width must be at least 1".into()))
            }
            _ => {
                return Err(ConfigError(
                    "grid_height and grid_width must be given together".into(),
                ))
            }
        }
        Ok(())
    }

    /// Grid shape from the config alone, for commands without a data file.
    pub fn explicit_grid(&self) -> Option<(usize, usize)> {
        self.grid_height.zip(self.grid_width)
    }
}
