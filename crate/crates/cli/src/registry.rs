//! Named scenario configurations.

use std::collections::BTreeMap;

use crate::config::{ConfigError, ScenarioConfig};

const BUILTIN: &[(&str, &str)] = &[
    ("halfspace-1d", include_str!("../scenarios/halfspace-1d.json")),
    ("halfspace-2d", include_str!("../scenarios/halfspace-2d.json")),
    ("lipschitz-perturbed-2d", include_str!("../scenarios/lipschitz-perturbed-2d.json")),
    ("radial-2d", include_str!("../scenarios/radial-2d.json")),
    ("radial-perturbed-2d", include_str!("../scenarios/radial-perturbed-2d.json")),
    ("synthetic-polynomial", include_str!("../scenarios/synthetic-polynomial.json")),
    (
        "synthetic-polynomial-degenerate",
        include_str!("../scenarios/synthetic-polynomial-degenerate.json"),
    ),
];

#[derive(Clone, Debug, Default)]
pub struct Registry {
    scenarios: BTreeMap<String, ScenarioConfig>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        for (name, text) in BUILTIN {
            let cfg = ScenarioConfig::from_json(text).unwrap_or_else(|e| panic!("builtin scenario {name}: {e}"));
            debug_assert_eq!(&cfg.name, name);
            r.register(cfg);
        }
        r
    }

    /// Adds or replaces a scenario under its own name.
    pub fn register(&mut self, cfg: ScenarioConfig) {
        self.scenarios.insert(cfg.name.clone(), cfg);
    }

    pub fn get(&self, name: &str) -> Option<&ScenarioConfig> {
        self.scenarios.get(name)
    }

    /// Like [`Registry::get`], with a [`ConfigError`] listing the known names.
    pub fn lookup(&self, name: &str) -> Result<ScenarioConfig, ConfigError> {
        self.get(name).cloned().ok_or_else(|| ConfigError {
            path: "scenario".into(),
            message: format!(
                "unknown scenario '{name}' (known: {})",
                self.scenarios.keys().cloned().collect::<Vec<_>>().join(", ")
            ),
        })
    }

    /// `(name, description)` pairs in alphabetical order.
    pub fn list(&self) -> Vec<(String, String)> {
        self.scenarios
            .values()
            .map(|c| (c.name.clone(), c.description.clone()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

pub fn list_scenarios() -> Vec<(String, String)> {
    Registry::builtin().list()
}
