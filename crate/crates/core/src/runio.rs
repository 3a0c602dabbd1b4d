//! On-disk layouts for scenes, run artifacts, and parameter checkpoints.
//!
//! A scene directory holds `scene.json` plus `Y_clean.fmx`, `Y_noisy.fmx`,
//! `A_true.fmx`, `S_true.fmx`. Ground-truth files are optional on load so
//! real data (observation only) fits the same layout.
//!
//! A run directory holds `config.json` (resolved configuration, seeds,
//! library versions, metric conventions), `history.csv` with one row per
//! outer iteration, the estimates `A_hat.fmx` / `S_hat.fmx`, and
//! `checkpoints/` with the final network parameters. All files are written
//! byte-deterministically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::admm::IterationRecord;
use crate::error::{Result, UnmixError};
use crate::fmx::{read_fmx, write_fmx};
use crate::hsi::{AbundanceMatrix, EndmemberMatrix, HyperspectralImage};
use crate::nn::{AeParams, ConvBlock, EncoderSpec, ENCODER_KERNELS};
use crate::synth::{SceneConfig, SyntheticScene};

/// Contents of `scene.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneMeta {
    pub config: SceneConfig,
    /// SNR realized by the drawn noise (dB); absent for noise-free scenes.
    #[serde(default)]
    pub realized_snr_db: Option<f64>,
    /// Standard deviation of the drawn noise; absent for noise-free scenes.
    #[serde(default)]
    pub noise_sigma: Option<f64>,
}

/// A scene read back from disk; ground truth members are optional.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub meta: SceneMeta,
    pub y_noisy: HyperspectralImage,
    pub y_clean: Option<HyperspectralImage>,
    pub a_true: Option<AbundanceMatrix>,
    pub s_true: Option<EndmemberMatrix>,
}

impl LoadedScene {
    pub fn grid(&self) -> (usize, usize) {
        self.y_noisy.grid()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| UnmixError::Config(format!("{}: {e}", path.display())))?;
    std::fs::write(path, text + "\n").map_err(|e| UnmixError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| UnmixError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| UnmixError::Config(format!("{}: {e}", path.display())))
}

/// Writes a generated scene into `dir` (created if missing).
pub fn save_scene(dir: &Path, scene: &SyntheticScene) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| UnmixError::io(dir, e))?;
    let meta = SceneMeta {
        config: scene.config.clone(),
        realized_snr_db: scene.realized_snr_db,
        noise_sigma: scene.noise_sigma,
    };
    write_json(&dir.join("scene.json"), &meta)?;
    write_fmx(&dir.join("Y_clean.fmx"), scene.y_clean.data().view())?;
    write_fmx(&dir.join("Y_noisy.fmx"), scene.y_noisy.data().view())?;
    write_fmx(&dir.join("A_true.fmx"), scene.a_true.data().view())?;
    write_fmx(&dir.join("S_true.fmx"), scene.s_true.data().view())?;
    Ok(())
}

/// Loads a scene directory. `Y_noisy.fmx` and `scene.json` are required; the
/// clean image and ground truth are picked up when present.
pub fn load_scene(dir: &Path) -> Result<LoadedScene> {
    let meta: SceneMeta = read_json(&dir.join("scene.json"))?;
    let (h, w) = (meta.config.height, meta.config.width);
    let y_noisy = HyperspectralImage::new(read_fmx(&dir.join("Y_noisy.fmx"))?, h, w)?;
    let optional = |name: &str| -> Result<Option<Array2<f64>>> {
        let path = dir.join(name);
        if path.exists() {
            read_fmx(&path).map(Some)
        } else {
            Ok(None)
        }
    };
    let y_clean = match optional("Y_clean.fmx")? {
        Some(m) => Some(HyperspectralImage::new(m, h, w)?),
        None => None,
    };
    let a_true = match optional("A_true.fmx")? {
        Some(m) => Some(AbundanceMatrix::new(m)?),
        None => None,
    };
    let s_true = match optional("S_true.fmx")? {
        Some(m) => Some(EndmemberMatrix::new(m)?),
        None => None,
    };
    Ok(LoadedScene { meta, y_noisy, y_clean, a_true, s_true })
}

/// Metric conventions recorded with every run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricNotes {
    /// Logarithm base used by the spectral information divergence.
    pub msid_log: String,
    /// How estimated endmembers (and abundance rows) are matched to truth.
    pub endmember_alignment: String,
}

impl Default for MetricNotes {
    fn default() -> Self {
        MetricNotes {
            msid_log: "natural".into(),
            endmember_alignment:
                "permutation minimizing total spectral angle; abundance rows reordered to match before RMSE"
                    .into(),
        }
    }
}

/// Contents of a run directory's `config.json`: the fully resolved
/// configuration with seeds and library versions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub scene_dir: String,
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub seed: u64,
    /// Resolved solver configuration for autoencoder methods.
    #[serde(default)]
    pub admm: Option<crate::admm::AdmmConfig>,
    /// Iteration budget for the FCLS solver.
    #[serde(default)]
    pub fcls_iters: Option<usize>,
    pub versions: BTreeMap<String, String>,
    pub notes: MetricNotes,
}

impl RunRecord {
    /// Version stamp of this crate, recorded in every run.
    pub fn versions() -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("unmix-core".into(), env!("CARGO_PKG_VERSION").into());
        map.insert("ndarray".into(), "0.17".into());
        map
    }
}

const HISTORY_HEADER: &str = "k,ae_loss,red_value,primal_residual,rmse,msad,msid,psnr";

fn format_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `history.csv`: one row per outer iteration, metric cells empty
/// when no ground truth was available.
pub fn write_history_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut text = String::from(HISTORY_HEADER);
    text.push('\n');
    for rec in history {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            rec.k,
            rec.ae_loss,
            rec.red_value,
            rec.primal_residual,
            format_opt(rec.rmse),
            format_opt(rec.msad),
            format_opt(rec.msid),
            format_opt(rec.psnr),
        ));
    }
    std::fs::write(path, text).map_err(|e| UnmixError::io(path, e))
}

/// Reads a `history.csv` produced by [`write_history_csv`].
pub fn read_history_csv(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| UnmixError::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HISTORY_HEADER => {}
        other => {
            return Err(UnmixError::Parse {
                line: 1,
                message: format!("unexpected history header {other:?}"),
            })
        }
    }
    let parse_f64 = |cell: &str, line: usize| -> Result<f64> {
        cell.parse().map_err(|_| UnmixError::Parse {
            line,
            message: format!("bad numeric cell {cell:?}"),
        })
    };
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 8 {
            return Err(UnmixError::Parse {
                line: idx + 2,
                message: format!("expected 8 cells, found {}", cells.len()),
            });
        }
        let opt = |cell: &str| -> Result<Option<f64>> {
            if cell.is_empty() {
                Ok(None)
            } else {
                parse_f64(cell, idx + 2).map(Some)
            }
        };
        out.push(IterationRecord {
            k: cells[0].parse().map_err(|_| UnmixError::Parse {
                line: idx + 2,
                message: format!("bad iteration index {:?}", cells[0]),
            })?,
            ae_loss: parse_f64(cells[1], idx + 2)?,
            red_value: parse_f64(cells[2], idx + 2)?,
            primal_residual: parse_f64(cells[3], idx + 2)?,
            rmse: opt(cells[4])?,
            msad: opt(cells[5])?,
            msid: opt(cells[6])?,
            psnr: opt(cells[7])?,
        });
    }
    Ok(out)
}

/// Writes a complete run directory.
pub fn save_run(
    dir: &Path,
    record: &RunRecord,
    history: &[IterationRecord],
    a_hat: &AbundanceMatrix,
    s_hat: &EndmemberMatrix,
    checkpoint: Option<(&AeParams, &EncoderSpec, u64)>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| UnmixError::io(dir, e))?;
    write_json(&dir.join("config.json"), record)?;
    write_history_csv(&dir.join("history.csv"), history)?;
    write_fmx(&dir.join("A_hat.fmx"), a_hat.data().view())?;
    write_fmx(&dir.join("S_hat.fmx"), s_hat.data().view())?;
    let ckpt_root = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_root).map_err(|e| UnmixError::io(&ckpt_root, e))?;
    if let Some((params, spec, step)) = checkpoint {
        save_checkpoint(&ckpt_root.join("final"), params, spec, step)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockEntry {
    kernel: usize,
    weights: String,
    bias: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    bands: usize,
    widths: [usize; 5],
    step: u64,
    blocks: Vec<BlockEntry>,
    decoder: String,
}

/// Serializes network parameters as a directory of fmx files plus a JSON
/// manifest with the structural description and optimizer step counter.
pub fn save_checkpoint(dir: &Path, params: &AeParams, spec: &EncoderSpec, step: u64) -> Result<()> {
    params.congruent_with(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| UnmixError::io(dir, e))?;
    let mut blocks = Vec::with_capacity(params.encoder.len());
    for (i, block) in params.encoder.iter().enumerate() {
        let weights = format!("block{i}_weights.fmx");
        let bias = format!("block{i}_bias.fmx");
        write_fmx(&dir.join(&weights), block.weights.view())?;
        let bias_col = Array2::from_shape_fn((block.bias.len(), 1), |(r, _)| block.bias[r]);
        write_fmx(&dir.join(&bias), bias_col.view())?;
        blocks.push(BlockEntry { kernel: block.kernel, weights, bias });
    }
    write_fmx(&dir.join("decoder_s.fmx"), params.decoder_s.view())?;
    let manifest = CheckpointManifest {
        bands: spec.in_bands,
        widths: spec.widths,
        step,
        blocks,
        decoder: "decoder_s.fmx".into(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Restores a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<(AeParams, EncoderSpec, u64)> {
    let manifest: CheckpointManifest = read_json(&dir.join("manifest.json"))?;
    if manifest.blocks.len() != 5 {
        return Err(UnmixError::Config(format!(
            "checkpoint has {} blocks, expected 5",
            manifest.blocks.len()
        )));
    }
    let spec = EncoderSpec { in_bands: manifest.bands, widths: manifest.widths };
    let mut encoder = Vec::with_capacity(5);
    for (i, entry) in manifest.blocks.iter().enumerate() {
        if entry.kernel != ENCODER_KERNELS[i] {
            return Err(UnmixError::Config(format!(
                "checkpoint block {i} has kernel {}, expected {}",
                entry.kernel, ENCODER_KERNELS[i]
            )));
        }
        let weights = read_fmx(&dir.join(&entry.weights))?;
        let bias_col = read_fmx(&dir.join(&entry.bias))?;
        if bias_col.ncols() != 1 {
            return Err(UnmixError::Config(format!(
                "checkpoint bias {i} must be a column vector"
            )));
        }
        let bias = Array1::from_iter(bias_col.column(0).iter().cloned());
        encoder.push(ConvBlock { weights, bias, kernel: entry.kernel });
    }
    let decoder_s = read_fmx(&dir.join(&manifest.decoder))?;
    let params = AeParams { encoder, decoder_s };
    params.congruent_with(&spec)?;
    Ok((params, spec, manifest.step))
}

/// Convenience path helpers used by the CLI and tests.
pub mod paths {
    use super::*;

    pub fn a_hat(dir: &Path) -> PathBuf {
        dir.join("A_hat.fmx")
    }
    pub fn s_hat(dir: &Path) -> PathBuf {
        dir.join("S_hat.fmx")
    }
    pub fn history(dir: &Path) -> PathBuf {
        dir.join("history.csv")
    }
    pub fn run_config(dir: &Path) -> PathBuf {
        dir.join("config.json")
    }
}
