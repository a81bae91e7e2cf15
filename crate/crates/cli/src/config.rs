//! Experiment configuration: a line-oriented `key = value` file with
//! `[section]` headers, merged with command-line overrides.
//!
//! Unknown sections and keys are rejected so typos fail loudly. Every key
//! has a default, so a minimal file can be empty. Values may carry a
//! trailing `#` comment.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use gradlens_core::attacks::Measurement;
use gradlens_core::defense::SUITE_NAMES;
use gradlens_core::flsim::AttackSpec;
use gradlens_core::{Error, Result};

/// Where images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSourceKind {
    /// Seeded generator (see [`crate::synthetic`]).
    Synthetic,
    /// Directory of `.ppm` / `.pgm` files, read in filename order.
    Directory(PathBuf),
}

/// Which malicious dispatch the server uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    None,
    Imprint,
    Trap,
    Linear,
}

impl AttackKind {
    /// The name accepted in config files and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Imprint => "imprint",
            AttackKind::Trap => "trap",
            AttackKind::Linear => "linear",
        }
    }

    fn parse(raw: &str) -> Option<Self> {
        match raw {
            "none" => Some(AttackKind::None),
            "imprint" => Some(AttackKind::Imprint),
            "trap" => Some(AttackKind::Trap),
            "linear" => Some(AttackKind::Linear),
            _ => None,
        }
    }
}

/// One experiment, fully resolved: file values, then flag overrides,
/// then validation.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: DataSourceKind,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub classes: usize,
    pub hidden: usize,
    pub attack: AttackKind,
    pub neurons: usize,
    pub sigma: f64,
    pub negative_fraction: f64,
    pub suite_name: String,
    pub users: usize,
    pub participants: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub trials: usize,
    pub batch_sizes: Vec<usize>,
    pub neuron_grid: Vec<usize>,
    pub epochs: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub train_learning_rate: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: DataSourceKind::Synthetic,
            count: 64,
            width: 8,
            height: 8,
            channels: 1,
            classes: 4,
            hidden: 32,
            attack: AttackKind::Imprint,
            neurons: 64,
            sigma: 1.0,
            negative_fraction: 0.5,
            suite_name: "none".to_string(),
            users: 4,
            participants: 1,
            batch_size: 8,
            learning_rate: 0.05,
            seed: 0,
            out: PathBuf::from("runs/gradlens"),
            trials: 10,
            batch_sizes: vec![4, 16],
            neuron_grid: vec![16, 32, 64],
            epochs: 100,
            train_count: 128,
            test_count: 160,
            train_learning_rate: 0.05,
        }
    }
}

impl ExperimentConfig {
    /// Flattened input dimension `width * height * channels`.
    pub fn input_dim(&self) -> usize {
        self.width * self.height * self.channels
    }

    /// The round attack this config describes.
    pub fn attack_spec(&self) -> AttackSpec {
        match self.attack {
            AttackKind::None => AttackSpec::None,
            AttackKind::Imprint => AttackSpec::Imprint {
                neurons: self.neurons,
                measurement: Measurement::PixelMean,
            },
            AttackKind::Trap => AttackSpec::Trap {
                neurons: self.neurons,
                sigma: self.sigma,
                negative_fraction: self.negative_fraction,
            },
            AttackKind::Linear => AttackSpec::Linear,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub attack: Option<String>,
    pub defense: Option<String>,
    pub batch_size: Option<usize>,
    pub neurons: Option<usize>,
}

/// Read `path`, apply `overrides`, and validate the result.
pub fn load_config(path: impl AsRef<Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text, &path.display().to_string())?;
    apply_overrides(&mut cfg, overrides)?;
    validate(&cfg)?;
    Ok(cfg)
}

fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut section = String::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(origin, line_no, "unterminated section header"))?
                .trim();
            if !KNOWN_SECTIONS.contains(&name) {
                return Err(parse_err(origin, line_no, &format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(origin, line_no, "expected `key = value`"))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if section.is_empty() {
            return Err(parse_err(origin, line_no, "key before any [section] header"));
        }
        if !seen.insert((section.clone(), key.clone())) {
            return Err(parse_err(
                origin,
                line_no,
                &format!("duplicate key `{key}` in [{section}]"),
            ));
        }
        apply_key(&mut cfg, &section, &key, &value, origin, line_no)?;
    }
    Ok(cfg)
}

const KNOWN_SECTIONS: [&str; 8] = [
    "data", "model", "attack", "defense", "round", "run", "sweep", "utility",
];

fn parse_err(origin: &str, line: usize, message: &str) -> Error {
    Error::Config(format!("{origin}:{line}: {message}"))
}

fn apply_key(
    cfg: &mut ExperimentConfig,
    section: &str,
    key: &str,
    value: &str,
    origin: &str,
    line: usize,
) -> Result<()> {
    match (section, key) {
        ("data", "source") => match value {
            "synthetic" => cfg.source = DataSourceKind::Synthetic,
            "directory" => {
                if !matches!(cfg.source, DataSourceKind::Directory(_)) {
                    cfg.source = DataSourceKind::Directory(PathBuf::new());
                }
            }
            _ => {
                return Err(parse_err(
                    origin,
                    line,
                    &format!("source must be `synthetic` or `directory`, got `{value}`"),
                ))
            }
        },
        ("data", "dir") => cfg.source = DataSourceKind::Directory(PathBuf::from(value)),
        ("data", "count") => cfg.count = parse_num(value, origin, line, key)?,
        ("data", "width") => cfg.width = parse_num(value, origin, line, key)?,
        ("data", "height") => cfg.height = parse_num(value, origin, line, key)?,
        ("data", "channels") => cfg.channels = parse_num(value, origin, line, key)?,
        ("data", "classes") => cfg.classes = parse_num(value, origin, line, key)?,
        ("model", "hidden") => cfg.hidden = parse_num(value, origin, line, key)?,
        ("attack", "kind") => {
            cfg.attack = AttackKind::parse(value).ok_or_else(|| {
                parse_err(origin, line, &format!("unknown attack kind `{value}`"))
            })?
        }
        ("attack", "neurons") => cfg.neurons = parse_num(value, origin, line, key)?,
        ("attack", "sigma") => cfg.sigma = parse_num(value, origin, line, key)?,
        ("attack", "negative_fraction") => {
            cfg.negative_fraction = parse_num(value, origin, line, key)?
        }
        ("attack", "measurement") => {
            if value != "pixel-mean" {
                return Err(parse_err(
                    origin,
                    line,
                    &format!("only `pixel-mean` measurement is supported, got `{value}`"),
                ));
            }
        }
        ("defense", "suite") => cfg.suite_name = value.to_string(),
        ("round", "users") => cfg.users = parse_num(value, origin, line, key)?,
        ("round", "participants") => cfg.participants = parse_num(value, origin, line, key)?,
        ("round", "batch_size") => cfg.batch_size = parse_num(value, origin, line, key)?,
        ("round", "learning_rate") => cfg.learning_rate = parse_num(value, origin, line, key)?,
        ("run", "seed") => cfg.seed = parse_num(value, origin, line, key)?,
        ("run", "out") => cfg.out = PathBuf::from(value),
        ("run", "trials") => cfg.trials = parse_num(value, origin, line, key)?,
        ("sweep", "batch_sizes") => cfg.batch_sizes = parse_list(value, origin, line, key)?,
        ("sweep", "neuron_grid") => cfg.neuron_grid = parse_list(value, origin, line, key)?,
        ("utility", "epochs") => cfg.epochs = parse_num(value, origin, line, key)?,
        ("utility", "train") => cfg.train_count = parse_num(value, origin, line, key)?,
        ("utility", "test") => cfg.test_count = parse_num(value, origin, line, key)?,
        ("utility", "learning_rate") => {
            cfg.train_learning_rate = parse_num(value, origin, line, key)?
        }
        _ => {
            return Err(parse_err(
                origin,
                line,
                &format!("unknown key `{key}` in [{section}]"),
            ))
        }
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(
    value: &str,
    origin: &str,
    line: usize,
    key: &str,
) -> Result<T> {
    value
        .parse()
        .map_err(|_| parse_err(origin, line, &format!("cannot parse `{value}` for `{key}`")))
}

fn parse_list(value: &str, origin: &str, line: usize, key: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|part| parse_num(part.trim(), origin, line, key))
        .collect()
}

fn apply_overrides(cfg: &mut ExperimentConfig, ov: &Overrides) -> Result<()> {
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &ov.out {
        cfg.out = out.clone();
    }
    if let Some(attack) = &ov.attack {
        cfg.attack = AttackKind::parse(attack)
            .ok_or_else(|| Error::Config(format!("unknown attack kind `{attack}`")))?;
    }
    if let Some(defense) = &ov.defense {
        cfg.suite_name = defense.clone();
    }
    if let Some(batch_size) = ov.batch_size {
        cfg.batch_size = batch_size;
    }
    if let Some(neurons) = ov.neurons {
        cfg.neurons = neurons;
    }
    Ok(())
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    let field = |name: &str, message: String| Error::Config(format!("{name}: {message}"));
    if cfg.width == 0 || cfg.height == 0 || cfg.channels == 0 {
        return Err(field(
            "width/height/channels",
            "image shape must be nonzero".to_string(),
        ));
    }
    if cfg.classes == 0 {
        return Err(field("classes", "need at least one class".to_string()));
    }
    if cfg.count < cfg.classes {
        return Err(field(
            "count",
            format!("need count >= classes, got {} < {}", cfg.count, cfg.classes),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(field("batch_size", "must be at least 1".to_string()));
    }
    if cfg.batch_size > cfg.count {
        return Err(field(
            "batch_size",
            format!("exceeds dataset count {}", cfg.count),
        ));
    }
    if cfg.hidden == 0 {
        return Err(field("hidden", "need at least one neuron".to_string()));
    }
    if cfg.attack == AttackKind::Imprint && cfg.neurons < 2 {
        return Err(field(
            "neurons",
            format!("imprint needs at least 2 neurons, got {}", cfg.neurons),
        ));
    }
    if cfg.attack == AttackKind::Trap {
        if cfg.sigma <= 0.0 || cfg.sigma.is_nan() {
            return Err(field("sigma", format!("must be positive, got {}", cfg.sigma)));
        }
        if !(cfg.negative_fraction > 0.0 && cfg.negative_fraction <= 1.0) {
            return Err(field(
                "negative_fraction",
                format!("must lie in (0, 1], got {}", cfg.negative_fraction),
            ));
        }
    }
    if !SUITE_NAMES.contains(&cfg.suite_name.as_str()) {
        return Err(field(
            "suite",
            format!(
                "unknown suite `{}`; expected one of {}",
                cfg.suite_name,
                SUITE_NAMES.join(", ")
            ),
        ));
    }
    if cfg.participants == 0 || cfg.participants > cfg.users {
        return Err(field(
            "participants",
            format!("need 1 <= participants <= users, got {} of {}", cfg.participants, cfg.users),
        ));
    }
    let rates = [cfg.learning_rate, cfg.train_learning_rate];
    if rates.iter().any(|&r| r <= 0.0 || r.is_nan()) {
        return Err(field("learning_rate", "must be positive".to_string()));
    }
    if cfg.trials == 0 {
        return Err(field("trials", "need at least one trial".to_string()));
    }
    if cfg.batch_sizes.is_empty() || cfg.neuron_grid.is_empty() {
        return Err(field(
            "sweep",
            "batch_sizes and neuron_grid must be nonempty".to_string(),
        ));
    }
    if cfg.batch_sizes.iter().any(|&b| b == 0 || b > cfg.count) {
        return Err(field(
            "batch_sizes",
            format!("every entry must lie in 1..={}", cfg.count),
        ));
    }
    if cfg.attack == AttackKind::Imprint && cfg.neuron_grid.iter().any(|&n| n < 2) {
        return Err(field(
            "neuron_grid",
            "imprint needs at least 2 neurons per cell".to_string(),
        ));
    }
    if cfg.train_count < cfg.classes || cfg.test_count < cfg.classes {
        return Err(field(
            "train/test",
            "utility needs at least one image per class".to_string(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        let cfg = parse_config(text, "test.cfg")?;
        validate(&cfg)?;
        Ok(cfg)
    }

    #[test]
    fn empty_file_yields_defaults() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.batch_size, 8);
        assert_eq!(cfg.suite_name, "none");
        assert_eq!(cfg.attack, AttackKind::Imprint);
    }

    #[test]
    fn sections_and_comments_parse() {
        let cfg = parse(
            "# experiment\n[round]\nbatch_size = 4  # small\n[run]\nseed = 7\n[defense]\nsuite = hflip\n",
        )
        .unwrap();
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.suite_name, "hflip");
    }

    #[test]
    fn duplicate_key_reports_its_line() {
        let err = parse("[run]\nseed = 1\nseed = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("test.cfg:3"), "{msg}");
        assert!(msg.contains("duplicate key `seed`"), "{msg}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse("[run]\nspeed = 1\n").unwrap_err();
        assert!(err.to_string().contains("unknown key `speed`"));
    }

    #[test]
    fn unknown_section_is_rejected() {
        let err = parse("[tuning]\nx = 1\n").unwrap_err();
        assert!(err.to_string().contains("unknown section [tuning]"));
    }

    #[test]
    fn zero_batch_size_names_the_field() {
        let err = parse("[round]\nbatch_size = 0\n").unwrap_err();
        assert!(err.to_string().contains("batch_size"));
    }

    #[test]
    fn unknown_suite_is_rejected() {
        let err = parse("[defense]\nsuite = blur\n").unwrap_err();
        assert!(err.to_string().contains("unknown suite `blur`"));
    }

    #[test]
    fn sweep_lists_parse() {
        let cfg = parse("[sweep]\nbatch_sizes = 2, 4\nneuron_grid = 8,16 , 32\n").unwrap();
        assert_eq!(cfg.batch_sizes, vec![2, 4]);
        assert_eq!(cfg.neuron_grid, vec![8, 16, 32]);
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = parse_config("[run]\nseed = 1\n", "test.cfg").unwrap();
        let ov = Overrides {
            seed: Some(9),
            defense: Some("vflip".to_string()),
            attack: Some("trap".to_string()),
            batch_size: Some(2),
            neurons: Some(12),
            out: Some(PathBuf::from("elsewhere")),
        };
        apply_overrides(&mut cfg, &ov).unwrap();
        validate(&cfg).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.suite_name, "vflip");
        assert_eq!(cfg.attack, AttackKind::Trap);
        assert_eq!(cfg.batch_size, 2);
        assert_eq!(cfg.neurons, 12);
        assert_eq!(cfg.out, PathBuf::from("elsewhere"));
    }

    #[test]
    fn directory_source_keeps_its_path() {
        let cfg = parse("[data]\nsource = directory\ndir = imgs\n").unwrap();
        assert_eq!(cfg.source, DataSourceKind::Directory(PathBuf::from("imgs")));
    }
}
