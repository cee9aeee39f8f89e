//! TOML run configuration.
//!
//! ```toml
//! a = "start.kbm"
//! b = "zero"
//! output = "out"
//!
//! [solver]
//! nt = 32
//! max_iter = 4000
//! mode = "hellinger"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KbError, Result};
use crate::solver::SolverConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// First measure file.
    pub a: Option<PathBuf>,
    /// Second measure file, or `"zero"`.
    pub b: Option<String>,
    /// Output directory.
    pub output: Option<PathBuf>,
    pub solver: SolverConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| KbError::Input(format!("config: {e}")))?;
        cfg.solver.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| KbError::Io(format!("{}: {e}", path.as_ref().display())))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| KbError::Input(format!("config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Mode;

    #[test]
    fn parses_partial_files() {
        let cfg =
            RunConfig::from_toml_str("b = \"zero\"\n[solver]\nnt = 8\nmode = \"hellinger\"\n")
                .unwrap();
        assert_eq!(cfg.b.as_deref(), Some("zero"));
        assert_eq!(cfg.solver.nt, 8);
        assert_eq!(cfg.solver.mode, Mode::Hellinger);
        assert_eq!(cfg.solver.max_iter, SolverConfig::default().max_iter);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml_str("[solver]\nntt = 8\n").is_err());
        assert!(RunConfig::from_toml_str("colour = 1\n").is_err());
        assert!(RunConfig::from_toml_str("[solver]\nnt = 1\n").is_err());
    }

    #[test]
    fn survives_serialization() {
        let mut cfg = RunConfig::default();
        cfg.solver.tau = Some(0.5);
        cfg.a = Some("x.kbm".into());
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
