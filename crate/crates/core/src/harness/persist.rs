use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::nn::{load_params, save_params};
use crate::nn::NetworkParams;

use super::config::AgentSpec;
use super::controller::Controller;
use super::runner::Runner;
use super::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESUME_FILE: &str = "resume.bin";
const FORMAT: u32 = 1;

/// Describes a model directory: the protocol, its settings and weight files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: u32,
    pub timestep: u64,
    pub env: EnvConfig,
    pub agent: AgentSpec,
    pub networks: Vec<String>,
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

/// Writes `manifest.json` and one `net_<i>.gsnn` per parameter set.
pub fn save_model(
    dir: &Path,
    controller: &Controller,
    agent: &AgentSpec,
    env: &EnvConfig,
    timestep: u64,
) -> Result<(), HarnessError> {
    create_dir(dir)?;
    let mut networks = Vec::new();
    for (i, params) in controller.networks().into_iter().enumerate() {
        let name = format!("net_{i}.gsnn");
        save_params(params, dir.join(&name))?;
        networks.push(name);
    }
    let mut agent = agent.clone();
    agent.checkpoint = None;
    let manifest = ModelManifest { format: FORMAT, timestep, env: env.clone(), agent, networks };
    write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)
}

/// A model directory, or the agent side of a run checkpoint.
fn model_dir(dir: &Path) -> Result<PathBuf, HarnessError> {
    if dir.join(MANIFEST_FILE).is_file() {
        return Ok(dir.to_path_buf());
    }
    let left = dir.join("left");
    if left.join(MANIFEST_FILE).is_file() {
        return Ok(left);
    }
    Err(HarnessError::Io {
        path: dir.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no manifest.json"),
    })
}

pub fn read_manifest(dir: &Path) -> Result<(PathBuf, ModelManifest), HarnessError> {
    let dir = model_dir(dir)?;
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
    let manifest: ModelManifest = serde_json::from_slice(&text)?;
    if manifest.format != FORMAT {
        return Err(HarnessError::Incompatible(format!("manifest format {} (expected {FORMAT})", manifest.format)));
    }
    Ok((dir, manifest))
}

/// Loads weights saved by [`save_model`] into `controller`, checking specs.
pub fn load_weights(dir: &Path, manifest: &ModelManifest, controller: &mut Controller) -> Result<(), HarnessError> {
    let specs: Vec<_> = controller.networks().iter().map(|p| p.spec().clone()).collect();
    if specs.len() != manifest.networks.len() {
        return Err(HarnessError::Incompatible(format!(
            "{} weight files for a controller with {} networks",
            manifest.networks.len(),
            specs.len()
        )));
    }
    let params = specs
        .iter()
        .zip(&manifest.networks)
        .map(|(spec, name)| {
            load_params(spec, dir.join(name)).map_err(|e| HarnessError::Incompatible(format!("{name}: {e}")))
        })
        .collect::<Result<Vec<NetworkParams>, _>>()?;
    controller.load_networks(params)
}

/// Rebuilds a model's controller with fresh streams from `seed` and `label`.
pub fn load_model(dir: &Path, seed: u64, label: &str) -> Result<(ModelManifest, Controller), HarnessError> {
    let (dir, manifest) = read_manifest(dir)?;
    let pitch = manifest.env.pitch()?;
    let mut controller = Controller::build(&manifest.agent, &pitch, seed, label)?;
    load_weights(&dir, &manifest, &mut controller)?;
    Ok((manifest, controller))
}

/// Both sides as model directories plus the full runner state for resuming.
pub fn save_checkpoint(dir: &Path, runner: &Runner) -> Result<(), HarnessError> {
    create_dir(dir)?;
    let config = runner.config();
    for (side, spec, controller) in [
        ("left", &config.agent, runner.controller(crate::env::TeamId::Left)),
        ("right", &config.opponent, runner.controller(crate::env::TeamId::Right)),
    ] {
        save_model(&dir.join(side), controller, spec, &config.env, runner.timestep())?;
    }
    write_atomic(&dir.join(RESUME_FILE), &bincode::serialize(runner)?)
}

pub fn load_resume(dir: &Path) -> Result<Runner, HarnessError> {
    let path = dir.join(RESUME_FILE);
    let bytes = fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
    Ok(bincode::deserialize(&bytes)?)
}
