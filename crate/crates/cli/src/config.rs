//! Layering of command-line flags over an optional TOML config file, and the
//! `run_config.toml` echo written into every output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use brdfmap::remap::RemapOptions;
use brdfmap::{LightConfig, LightMode, SceneConfig};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const RUN_CONFIG: &str = "run_config.toml";

pub const DEFAULT_SIZE: usize = 128;

/// Scene options shared by every command that renders. In a config file
/// they live in a `[scene]` table.
#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct SceneArgs {
    /// Render width and height in pixels [default: 128]
    #[arg(long)]
    pub size: Option<usize>,
    /// `headlight` or `oblique:<degrees>` [default: headlight]
    #[arg(long)]
    pub light: Option<String>,
    /// Light intensity multiplier for target renders [default: 1]
    #[arg(long)]
    pub light_scale: Option<f64>,
    /// Residual evaluation budget per optimizer stage
    #[arg(long)]
    pub max_evals: Option<usize>,
}

impl SceneArgs {
    pub fn fill_defaults(&mut self) {
        self.size.get_or_insert(DEFAULT_SIZE);
        self.light.get_or_insert_with(|| "headlight".into());
        self.light_scale.get_or_insert(1.0);
        self.max_evals.get_or_insert(RemapOptions::default().max_evals);
    }

    pub fn scene(&self) -> Result<SceneConfig> {
        let mode: LightMode = self.light.as_deref().unwrap_or("headlight").parse()?;
        let scene = SceneConfig::with_size(self.size.unwrap_or(DEFAULT_SIZE)).with_light(LightConfig {
            mode,
            ..Default::default()
        });
        scene.validate()?;
        Ok(scene)
    }

    pub fn options(&self) -> RemapOptions {
        let d = RemapOptions::default();
        RemapOptions {
            max_evals: self.max_evals.unwrap_or(d.max_evals),
            light_scale: self.light_scale.unwrap_or(d.light_scale),
            ..d
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Flags override the config file, which overrides built-in defaults
/// (filled in later by each command).
pub fn layered<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>, command: &str) -> Result<T> {
    let mut table = match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut t: toml::Table = text.parse().map_err(|e| brdfmap::Error::Format(format!("{}: {e}", path.display())))?;
            if let Some(c) = t.remove("command") {
                if c.as_str() != Some(command) {
                    bail!(brdfmap::Error::Config(format!(
                        "{} is a config for '{}', not '{command}'",
                        path.display(),
                        c
                    )));
                }
            }
            t
        }
        None => toml::Table::new(),
    };
    let flags = toml::Table::try_from(flags).context("serializing flags")?;
    merge(&mut table, flags);
    T::deserialize(table).map_err(|e| brdfmap::Error::Config(e.to_string()).into())
}

/// Writes the fully resolved options, tagged with the command name.
pub fn echo<T: Serialize>(args: &T, command: &str, out: &Path) -> Result<()> {
    let mut table = toml::Table::new();
    table.insert("command".into(), command.into());
    merge(&mut table, toml::Table::try_from(args).context("serializing config")?);
    let path = out.join(RUN_CONFIG);
    fs::write(&path, toml::to_string(&table)?).with_context(|| format!("writing {}", path.display()))
}

pub fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| brdfmap::Error::Config(format!("missing required option --{flag}")).into())
}

/// Makes input paths independent of the working directory so an echoed
/// config can be replayed from anywhere.
pub fn absolutize(p: &mut Option<PathBuf>) -> Result<()> {
    if let Some(path) = p {
        *path = std::path::absolute(&*path)?;
    }
    Ok(())
}

pub fn absolutize_all(ps: &mut Option<Vec<PathBuf>>) -> Result<()> {
    for p in ps.iter_mut().flatten() {
        *p = std::path::absolute(&*p)?;
    }
    Ok(())
}
