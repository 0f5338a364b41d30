//! Run configuration: a `key = value` file, overridden by command-line flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::dynsys::SystemKind;
use crate::error::{Error, Result};
use crate::lyapunov::{LeConfig, Profile};
use crate::pipeline::{DatasetConfig, Manifest, Regime, SERIES_LEN, SERIES_SPACING};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "LYAPNET_OUT";
pub const DEFAULT_OUT_ROOT: &str = "lyapnet-out";
pub const DEFAULT_N_MODELS: usize = 10;

const KEYS: &[&str] = &[
    "system",
    "profile",
    "regime",
    "seed",
    "model_seeds",
    "n_models",
    "sweep_seed",
    "out_root",
    "data_dir",
    "models_dir",
    "out_dir",
    "epochs",
    "lr",
    "weight_decay",
    "pool_size",
    "n_train",
    "n_val",
    "n_test",
    "measure_time",
    "jobs",
];

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemKind,
    pub profile: Profile,
    pub regime: Regime,
    /// Dataset seed.
    pub seed: u64,
    pub model_seeds: Vec<u64>,
    pub sweep_seed: u64,
    pub data_dir: PathBuf,
    pub models_dir: PathBuf,
    pub out_dir: PathBuf,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dataset: DatasetConfig,
    pub jobs: Option<usize>,
}

/// Default model seeds: `1000 * seed + k` for k = 1..=n.
pub fn default_model_seeds(seed: u64, n: usize) -> Vec<u64> {
    (1..=n as u64)
        .map(|k| seed.wrapping_mul(1000).wrapping_add(k))
        .collect()
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("malformed value for '{key}': '{v}'")))
}

fn parse_kind(v: &str) -> Result<SystemKind> {
    v.trim().parse()
}

/// Raw key/value settings, merged from a file and flags before resolution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings(Manifest);

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let m = Manifest::parse(text);
        for (lineno, line) in text.lines().enumerate() {
            let l = line.trim();
            if !l.is_empty() && !l.starts_with('#') && !l.contains('=') {
                return Err(Error::Config(format!("line {}: expected 'key = value'", lineno + 1)));
            }
        }
        let s = Settings(m);
        s.check_keys()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn check_keys(&self) -> Result<()> {
        for k in self.0 .0.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown config key '{k}'")));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown config key '{key}'")));
        }
        self.0.set(key, value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key)
    }

    fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|v| parse(key, v)).transpose()
    }

    /// Fills defaults and checks invariants. `env_root` is the value of [`OUT_ENV`], if set.
    pub fn resolve(&self, env_root: Option<&str>) -> Result<RunConfig> {
        let system = self
            .get("system")
            .map(parse_kind)
            .transpose()?
            .unwrap_or(SystemKind::Lorenz);
        let profile: Profile = self
            .get("profile")
            .map(str::parse)
            .transpose()?
            .unwrap_or(Profile::Desk);
        let regime: Regime = self
            .get("regime")
            .map(str::parse)
            .transpose()?
            .unwrap_or(Regime::Random);
        let seed: u64 = self.opt("seed")?.unwrap_or(0);
        let n_models: usize = self.opt("n_models")?.unwrap_or(DEFAULT_N_MODELS);
        let model_seeds = match self.get("model_seeds") {
            Some(list) => list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| parse("model_seeds", s))
                .collect::<Result<Vec<u64>>>()?,
            None => default_model_seeds(seed, n_models),
        };
        if self.get("model_seeds").is_some() && self.get("n_models").is_some() && model_seeds.len() != n_models {
            return Err(Error::Config(format!(
                "n_models = {n_models} but {} model seeds are listed",
                model_seeds.len()
            )));
        }
        if model_seeds.is_empty() {
            return Err(Error::Config("at least one model seed is required".into()));
        }
        if model_seeds.iter().collect::<BTreeSet<_>>().len() != model_seeds.len() {
            return Err(Error::Config(format!("model seeds must be distinct: {model_seeds:?}")));
        }

        let root = PathBuf::from(self.get("out_root").or(env_root).unwrap_or(DEFAULT_OUT_ROOT));
        let dir = |key: &str, sub: &str| self.get(key).map(PathBuf::from).unwrap_or_else(|| root.join(sub));

        let mut dataset = DatasetConfig::for_profile(profile, regime);
        if let Some(v) = self.opt("pool_size")? {
            dataset.pool_size = v;
        }
        if let Some(v) = self.opt("n_train")? {
            dataset.n_train = v;
        }
        if let Some(v) = self.opt("n_val")? {
            dataset.n_val = v;
        }
        if let Some(v) = self.opt("n_test")? {
            dataset.n_test = v;
        }
        if let Some(t) = self.opt::<f64>("measure_time")? {
            dataset.le = dataset.le.with_measure_time(t);
        }
        dataset.le.validate()?;
        let min_measure = SERIES_LEN as f64 * SERIES_SPACING;
        if dataset.le.measure_time < min_measure {
            return Err(Error::Config(format!(
                "measure_time must be at least {min_measure} to hold a {SERIES_LEN}-point series"
            )));
        }
        if dataset.pool_size == 0 || dataset.n_train == 0 || dataset.n_val == 0 || dataset.n_test == 0 {
            return Err(Error::Config("pool and split sizes must be positive".into()));
        }
        let jobs: Option<usize> = self.opt("jobs")?;
        if jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }

        Ok(RunConfig {
            system,
            profile,
            regime,
            seed,
            model_seeds,
            sweep_seed: self.opt("sweep_seed")?.unwrap_or(seed),
            data_dir: dir("data_dir", "data"),
            models_dir: dir("models_dir", "models"),
            out_dir: dir("out_dir", "results"),
            epochs: self.opt("epochs")?.unwrap_or(match profile {
                Profile::Paper => 2000,
                Profile::Desk => 300,
            }),
            lr: self.opt("lr")?.unwrap_or(0.008),
            weight_decay: self.opt("weight_decay")?.unwrap_or(1e-5),
            dataset,
            jobs,
        })
    }
}

impl RunConfig {
    pub fn le_config(&self) -> LeConfig {
        self.dataset.le
    }

    /// Every setting as a manifest, so an output directory records how to reproduce it.
    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::default();
        m.set("system", self.system);
        m.set("profile", self.profile);
        m.set("regime", self.regime);
        m.set("seed", self.seed);
        m.set(
            "model_seeds",
            self.model_seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        m.set("sweep_seed", self.sweep_seed);
        m.set("data_dir", self.data_dir.display());
        m.set("models_dir", self.models_dir.display());
        m.set("out_dir", self.out_dir.display());
        m.set("epochs", self.epochs);
        m.set("lr", self.lr);
        m.set("weight_decay", self.weight_decay);
        m.set("pool_size", self.dataset.pool_size);
        m.set("n_train", self.dataset.n_train);
        m.set("n_val", self.dataset.n_val);
        m.set("n_test", self.dataset.n_test);
        m.set("measure_time", self.dataset.le.measure_time);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_distinct_seeds() {
        let c = Settings::default().resolve(None).unwrap();
        assert_eq!(c.model_seeds.len(), 10);
        assert_eq!(c.model_seeds.iter().collect::<BTreeSet<_>>().len(), 10);
        assert_eq!(c.data_dir, Path::new("lyapnet-out/data"));
        assert_eq!(c.epochs, 300);
    }

    #[test]
    fn file_values_and_env_root() {
        let s = Settings::parse("# comment\nsystem = coupled\nseed = 7\nn_train = 40\n").unwrap();
        let c = s.resolve(Some("/tmp/x")).unwrap();
        assert_eq!(c.system, SystemKind::CoupledLorenz);
        assert_eq!(c.seed, 7);
        assert_eq!(c.dataset.n_train, 40);
        assert_eq!(c.models_dir, Path::new("/tmp/x/models"));
        assert_eq!(c.model_seeds[0], 7001);
    }

    #[test]
    fn manifest_reproduces_the_config() {
        let s =
            Settings::parse("profile = paper\nregime = nonrandom\nmodel_seeds = 5,9\nmeasure_time = 150\n").unwrap();
        let c = s.resolve(None).unwrap();
        let again = Settings::parse(&c.to_manifest().render())
            .unwrap()
            .resolve(None)
            .unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_bad_settings() {
        for text in [
            "colour = red",
            "model_seeds = 1,2,1",
            "seed = -3",
            "system = rossler",
            "jobs = 0",
            "measure_time = 50",
            "just a line",
            "n_models = 3\nmodel_seeds = 1,2",
        ] {
            let r = Settings::parse(text).and_then(|s| s.resolve(None));
            assert!(r.is_err(), "{text}");
        }
    }
}
