//! Implementation of the `unmix` command line tool: scene synthesis
//! (`synth`), solver runs (`unmix`), and report generation (`report`).
//!
//! Exit codes: 0 success, 2 configuration error, 1 runtime or partial
//! failure. Commands are byte-for-byte reproducible from their inputs,
//! configuration, and seed.

pub mod report;

use std::path::Path;

use serde::Deserialize;

use unmix_core::admm::{run_ae_red, AdmmConfig, GroundTruth, IterationRecord};
use unmix_core::baselines::{fcls, plain_ae};
use unmix_core::hsi::{EndmemberMatrix, HyperspectralImage};
use unmix_core::metrics;
use unmix_core::runio::{
    load_scene, save_run, save_scene, LoadedScene, MetricNotes, RunRecord,
};
use unmix_core::synth::{make_scene, SceneConfig};
use unmix_core::{Result, UnmixError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Caps the global worker pool. Only per-channel denoising fans out, and its
/// results do not depend on the schedule, so any cap preserves determinism.
pub fn configure_threads(threads: Option<usize>) {
    let threads = threads.or_else(|| {
        std::env::var("UNMIX_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = threads {
        // Ignore the error if a pool already exists (tests call this twice).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn read_config_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UnmixError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| UnmixError::Config(format!("{}: {e}", path.display())))
}

/// `unmix synth <config> <out_dir>`: generate a scene directory.
pub fn cmd_synth(config_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> i32 {
    let mut config: SceneConfig = match read_config_json(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let scene = match make_scene(&config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    if let Err(e) = save_scene(out_dir, &scene) {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    match scene.realized_snr_db {
        Some(snr) => println!(
            "scene written to {} (realized SNR {snr:.4} dB)",
            out_dir.display()
        ),
        None => println!("scene written to {} (noise free)", out_dir.display()),
    }
    EXIT_OK
}

/// Method selector of a run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Method {
    #[serde(rename = "ae-red")]
    AeRed,
    #[serde(rename = "plain-ae")]
    PlainAe,
    #[serde(rename = "fcls")]
    Fcls,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::AeRed => "ae-red",
            Method::PlainAe => "plain-ae",
            Method::Fcls => "fcls",
        }
    }
}

#[derive(Debug, Deserialize)]
struct MethodProbe {
    method: Method,
}

#[derive(Debug, Deserialize)]
struct FclsConfig {
    #[serde(default = "default_fcls_iters")]
    iters: usize,
    #[serde(default)]
    seed: u64,
}

fn default_fcls_iters() -> usize {
    500
}

fn ground_truth<'a>(scene: &'a LoadedScene) -> GroundTruth<'a> {
    GroundTruth {
        a_true: scene.a_true.as_ref(),
        s_true: scene.s_true.as_ref(),
        y_clean: scene.y_clean.as_ref(),
    }
}

fn summary_line(method: &str, record: Option<&IterationRecord>) -> String {
    let fmt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.6}"),
        None => "-".into(),
    };
    match record {
        Some(r) => format!(
            "{method}: RMSE={} mSAD={} mSID={} PSNR={}",
            fmt(r.rmse),
            fmt(r.msad),
            fmt(r.msid),
            fmt(r.psnr)
        ),
        None => format!("{method}: no iterations recorded"),
    }
}

/// `unmix unmix <scene_dir> <run_config> <out_dir>`: run a solver and write
/// the run artifacts.
pub fn cmd_unmix(
    scene_dir: &Path,
    run_config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    threads: Option<usize>,
) -> i32 {
    configure_threads(threads);
    let probe: MethodProbe = match read_config_json(run_config_path) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let scene = match load_scene(scene_dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let (h, w) = scene.grid();
    let mut record = RunRecord {
        method: probe.method.name().into(),
        scene_dir: scene_dir.display().to_string(),
        height: h,
        width: w,
        bands: scene.y_noisy.bands(),
        seed: 0,
        admm: None,
        fcls_iters: None,
        versions: RunRecord::versions(),
        notes: MetricNotes::default(),
    };

    let outcome: Result<(Vec<IterationRecord>, i32)> = match probe.method {
        Method::AeRed | Method::PlainAe => {
            let mut config: AdmmConfig = match read_config_json(run_config_path) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            if let Some(seed) = seed_override {
                config.seed = seed;
            }
            if let Err(e) = config.validate() {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
            record.seed = config.seed;
            record.admm = Some(config.clone());
            let truth = ground_truth(&scene);
            let result = match probe.method {
                Method::AeRed => run_ae_red(&scene.y_noisy, &config, None, Some(&truth)),
                _ => plain_ae(&scene.y_noisy, &config, Some(&truth)),
            };
            result.and_then(|(a_hat, s_hat, state)| {
                save_run(
                    out_dir,
                    &record,
                    &state.history,
                    &a_hat,
                    &s_hat,
                    Some((&state.params, &state.spec, state.adam.step)),
                )?;
                Ok((state.history, EXIT_OK))
            })
        }
        Method::Fcls => {
            let config: FclsConfig = match read_config_json(run_config_path) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            record.seed = seed_override.unwrap_or(config.seed);
            record.fcls_iters = Some(config.iters);
            let Some(s_true) = scene.s_true.clone() else {
                eprintln!("error: fcls needs S_true.fmx in the scene directory");
                return EXIT_RUNTIME;
            };
            fcls(&scene.y_noisy, &s_true, config.iters, None).and_then(|a_hat| {
                let history = vec![fcls_record(&scene, &s_true, &a_hat, config.iters)?];
                save_run(out_dir, &record, &history, &a_hat, &s_true, None)?;
                Ok((history, EXIT_OK))
            })
        }
    };

    match outcome {
        Ok((history, code)) => {
            println!("{}", summary_line(probe.method.name(), history.last()));
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn fcls_record(
    scene: &LoadedScene,
    s: &EndmemberMatrix,
    a_hat: &unmix_core::hsi::AbundanceMatrix,
    iters: usize,
) -> Result<IterationRecord> {
    let (h, w) = scene.grid();
    let y_hat = HyperspectralImage::new(s.data().dot(a_hat.data()), h, w)?;
    let ae_loss: f64 = (y_hat.data() - scene.y_noisy.data())
        .iter()
        .map(|v| v * v)
        .sum();
    let mut rec = IterationRecord {
        k: iters,
        ae_loss,
        red_value: 0.0,
        primal_residual: 0.0,
        rmse: None,
        msad: None,
        msid: None,
        psnr: None,
    };
    if let (Some(a_true), Some(s_true)) = (&scene.a_true, &scene.s_true) {
        let perm = metrics::sad_permutation(s_true, s)?;
        let aligned = metrics::permute_abundance_rows(a_hat, &perm)?;
        rec.rmse = Some(metrics::rmse(a_true, &aligned)?);
        rec.msad = Some(metrics::msad(s_true, s)?);
        rec.msid = Some(metrics::msid(s_true, s)?);
    }
    let reference = scene.y_clean.as_ref().unwrap_or(&scene.y_noisy);
    rec.psnr = Some(metrics::psnr(reference, &y_hat)?);
    Ok(rec)
}

/// `unmix report <run_dir>...`: aligned comparison table, `report.csv`, and
/// per-endmember abundance map PNGs.
pub fn cmd_report(run_dirs: &[&Path], out_dir: &Path) -> i32 {
    match report::generate(run_dirs, out_dir) {
        Ok(failures) if failures == 0 => EXIT_OK,
        Ok(failures) => {
            eprintln!("{failures} run director{} skipped", if failures == 1 { "y" } else { "ies" });
            EXIT_RUNTIME
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
