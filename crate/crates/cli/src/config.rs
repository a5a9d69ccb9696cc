//! Simulation grid configuration (TOML, schema version 1).
//!
//! ```toml
//! version = 1
//!
//! [grid]
//! n = [1000]
//! r2 = [0.2, 0.4, 0.6, 0.8]
//! sigma2_y = [0.5]
//! beta1 = [1.0]
//!
//! [run]
//! replicates = 200            # B
//! empirical_replicates = 1000 # B'
//! bootstrap = 200
//! strata = 10
//! methods = ["stratified_bootstrap", "weighted_linearized"]  # default: all
//! seed = 42                   # or --seed
//! ```

use gpsdrf::drf::DEFAULT_STRATA;
use gpsdrf::simulation::{
    MethodId, ScenarioGrid, DEFAULT_BOOTSTRAP, DEFAULT_EMPIRICAL_REPLICATES, DEFAULT_REPLICATES,
    FULL_EMPIRICAL_REPLICATES, FULL_REPLICATES,
};
use serde::Deserialize;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub version: u32,
    pub grid: GridSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Vec<usize>,
    pub r2: Vec<f64>,
    pub sigma2_y: Vec<f64>,
    pub beta1: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub replicates: Option<usize>,
    pub empirical_replicates: Option<usize>,
    pub bootstrap: Option<usize>,
    pub strata: Option<usize>,
    pub methods: Option<Vec<String>>,
    pub seed: Option<u64>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub empirical_replicates: Option<usize>,
    pub bootstrap: Option<usize>,
    pub strata: Option<usize>,
    pub full_scale: bool,
}

/// Configuration problem, always naming the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn err(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        message: message.into(),
    }
}

pub fn parse(text: &str) -> Result<GridFile, ConfigError> {
    let de = toml::de::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.message().to_string();
        // A missing field is reported at its parent table.
        let key = match message.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            Some(field) if path == "." => field.to_string(),
            Some(field) => format!("{path}.{field}"),
            None => path,
        };
        err(key, message)
    })
}

fn non_empty<T>(key: &str, v: &[T]) -> Result<(), ConfigError> {
    if v.is_empty() {
        return Err(err(key, "must list at least one value"));
    }
    Ok(())
}

impl GridFile {
    /// Validates every value and applies the overrides.
    pub fn into_grid(self, o: &Overrides) -> Result<ScenarioGrid, ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(err("version", format!("unsupported version {}, expected {CONFIG_VERSION}", self.version)));
        }
        let g = &self.grid;
        non_empty("grid.n", &g.n)?;
        non_empty("grid.r2", &g.r2)?;
        non_empty("grid.sigma2_y", &g.sigma2_y)?;
        non_empty("grid.beta1", &g.beta1)?;
        for (i, &n) in g.n.iter().enumerate() {
            if n < 13 {
                return Err(err(format!("grid.n[{i}]"), format!("{n} is too small for 10 covariates")));
            }
        }
        for (i, &r) in g.r2.iter().enumerate() {
            if !(r > 0.0 && r < 1.0) {
                return Err(err(format!("grid.r2[{i}]"), format!("{r} outside (0, 1)")));
            }
        }
        for (i, &s) in g.sigma2_y.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                return Err(err(format!("grid.sigma2_y[{i}]"), format!("{s} must be positive")));
            }
        }
        for (i, &b) in g.beta1.iter().enumerate() {
            if !b.is_finite() {
                return Err(err(format!("grid.beta1[{i}]"), "must be finite"));
            }
        }
        let r = &self.run;
        let (full_b, full_e) = if o.full_scale {
            (Some(FULL_REPLICATES), Some(FULL_EMPIRICAL_REPLICATES))
        } else {
            (None, None)
        };
        let replicates = o.replicates.or(full_b).or(r.replicates).unwrap_or(DEFAULT_REPLICATES);
        let empirical = o
            .empirical_replicates
            .or(full_e)
            .or(r.empirical_replicates)
            .unwrap_or(DEFAULT_EMPIRICAL_REPLICATES);
        let bootstrap = o.bootstrap.or(r.bootstrap).unwrap_or(DEFAULT_BOOTSTRAP);
        let strata = o.strata.or(r.strata).unwrap_or(DEFAULT_STRATA);
        if replicates < 2 {
            return Err(err("run.replicates", "must be at least 2"));
        }
        if empirical < 2 {
            return Err(err("run.empirical_replicates", "must be at least 2"));
        }
        if bootstrap < 2 {
            return Err(err("run.bootstrap", "must be at least 2"));
        }
        if strata == 0 {
            return Err(err("run.strata", "must be at least 1"));
        }
        if let Some((i, &n)) = g.n.iter().enumerate().find(|(_, &n)| n < 3 * strata) {
            return Err(err(format!("grid.n[{i}]"), format!("{n} units cannot fill {strata} strata")));
        }
        let methods = match &r.methods {
            None => MethodId::ALL.to_vec(),
            Some(list) => {
                non_empty("run.methods", list)?;
                list.iter()
                    .enumerate()
                    .map(|(i, m)| MethodId::parse(m).map_err(|_| err(format!("run.methods[{i}]"), format!("unknown method `{m}`"))))
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        let seed = o
            .seed
            .or(r.seed)
            .ok_or_else(|| err("run.seed", "a seed is required (set it in the file or pass --seed)"))?;
        Ok(ScenarioGrid {
            n: g.n.clone(),
            r2: g.r2.clone(),
            sigma2_y: g.sigma2_y.clone(),
            beta1: g.beta1.clone(),
            replicates,
            empirical_replicates: empirical,
            bootstrap_count: bootstrap,
            strata_count: strata,
            methods,
            master_seed: seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "version = 1\n[grid]\nn = [500]\nr2 = [0.2]\nsigma2_y = [0.25]\nbeta1 = [0.0]\n";

    #[test]
    fn defaults_and_overrides() {
        let g = parse(BASE).unwrap().into_grid(&Overrides { seed: Some(3), ..Default::default() }).unwrap();
        assert_eq!((g.replicates, g.empirical_replicates, g.bootstrap_count, g.strata_count), (200, 1000, 200, 10));
        assert_eq!(g.methods, MethodId::ALL.to_vec());
        assert_eq!(g.master_seed, 3);

        let text = format!("{BASE}[run]\nreplicates = 5\nseed = 9\nmethods = [\"naive_model_based\"]\n");
        let o = Overrides {
            replicates: Some(7),
            ..Default::default()
        };
        let g = parse(&text).unwrap().into_grid(&o).unwrap();
        assert_eq!((g.replicates, g.master_seed), (7, 9));
        assert_eq!(g.methods, vec![MethodId::NaiveModelBased]);

        let full = Overrides {
            seed: Some(1),
            full_scale: true,
            ..Default::default()
        };
        let g = parse(&text).unwrap().into_grid(&full).unwrap();
        assert_eq!((g.replicates, g.empirical_replicates), (1000, 10_000));
    }

    #[test]
    fn errors_name_the_key() {
        let key = |text: &str| match parse(text) {
            Err(e) => e.key,
            Ok(f) => f.into_grid(&Overrides::default()).unwrap_err().key,
        };
        assert_eq!(key(&BASE.replace("r2 = [0.2]", "r2 = [0.2, 1.5]")), "grid.r2[1]");
        assert_eq!(key(&BASE.replace("n = [500]", "n = [\"many\"]")), "grid.n[0]");
        assert_eq!(key(&BASE.replace("beta1 = [0.0]\n", "")), "grid.beta1");
        assert_eq!(key(&format!("{BASE}[run]\nreplicates = 1\nseed = 1\n")), "run.replicates");
        assert_eq!(key(&format!("{BASE}[run]\nmethods = [\"nope\"]\nseed = 1\n")), "run.methods[0]");
        assert_eq!(key(&format!("{BASE}[run]\nbogus = 1\n")), "run.bogus");
        assert_eq!(key(BASE), "run.seed");
        assert_eq!(key(&BASE.replace("version = 1", "version = 2")), "version");
        assert_eq!(key(&BASE.replace("n = [500]", "n = [20]")), "grid.n[0]");
    }

    #[test]
    fn shipped_configs_are_valid() {
        let o = Overrides {
            seed: Some(1),
            ..Default::default()
        };
        for text in [
            include_str!("../../../configs/desk_coverage.toml"),
            include_str!("../../../configs/desk_ratio.toml"),
            include_str!("../../../configs/full_grid.toml"),
        ] {
            parse(text).unwrap().into_grid(&o).unwrap();
        }
        let full = parse(include_str!("../../../configs/full_grid.toml")).unwrap().into_grid(&o).unwrap();
        assert_eq!(full.scenarios().len(), 72);
    }
}
