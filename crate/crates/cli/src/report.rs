//! Report rendering: comparison table, `report.csv`, abundance map PNGs.

use std::path::Path;

use image::GrayImage;

use unmix_core::runio::{self, read_history_csv, RunRecord};
use unmix_core::{Result, UnmixError};

struct RunSummary {
    name: String,
    method: String,
    rmse: Option<f64>,
    msad: Option<f64>,
    msid: Option<f64>,
    psnr: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "-".into(),
    }
}

fn load_summary(dir: &Path, out_dir: &Path) -> Result<RunSummary> {
    let record: RunRecord = {
        let path = runio::paths::run_config(dir);
        let text = std::fs::read_to_string(&path).map_err(|e| UnmixError::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| UnmixError::Config(format!("{}: {e}", path.display())))?
    };
    let history = read_history_csv(&runio::paths::history(dir))?;
    let last = history.last().ok_or_else(|| {
        UnmixError::Config(format!("{}: empty history", dir.display()))
    })?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    export_abundance_maps(dir, out_dir, &name, record.height, record.width)?;
    Ok(RunSummary {
        name,
        method: record.method,
        rmse: last.rmse,
        msad: last.msad,
        msid: last.msid,
        psnr: last.psnr,
    })
}

/// Writes one grayscale PNG per abundance row, mapping [0, 1] linearly to
/// [0, 255] with clamping.
fn export_abundance_maps(
    run_dir: &Path,
    out_dir: &Path,
    name: &str,
    height: usize,
    width: usize,
) -> Result<()> {
    let a_hat = unmix_core::fmx::read_fmx(&runio::paths::a_hat(run_dir))?;
    if a_hat.ncols() != height * width {
        return Err(UnmixError::DimensionMismatch(format!(
            "{}: abundance matrix covers {} pixels but config says {}x{}",
            run_dir.display(),
            a_hat.ncols(),
            height,
            width
        )));
    }
    for r in 0..a_hat.nrows() {
        let mut img = GrayImage::new(width as u32, height as u32);
        for y in 0..height {
            for x in 0..width {
                let v = a_hat[[r, y * width + x]].clamp(0.0, 1.0);
                img.put_pixel(x as u32, y as u32, image::Luma([(v * 255.0).round() as u8]));
            }
        }
        let path = out_dir.join(format!("{name}_abundance_{r}.png"));
        img.save(&path)
            .map_err(|e| UnmixError::Config(format!("{}: png encode failed: {e}", path.display())))?;
    }
    Ok(())
}

/// Builds the report for the given run directories into `out_dir`. Returns
/// the number of directories that could not be read (they are listed on
/// stderr and skipped).
pub fn generate(run_dirs: &[&Path], out_dir: &Path) -> Result<usize> {
    std::fs::create_dir_all(out_dir).map_err(|e| UnmixError::io(out_dir, e))?;
    let mut rows = Vec::new();
    let mut failures = 0usize;
    for dir in run_dirs {
        match load_summary(dir, out_dir) {
            Ok(row) => rows.push(row),
            Err(e) => {
                eprintln!("skipping {}: {e}", dir.display());
                failures += 1;
            }
        }
    }
    if !rows.is_empty() {
        print_table(&rows);
        write_csv(&out_dir.join("report.csv"), &rows)?;
    }
    Ok(failures)
}

fn print_table(rows: &[RunSummary]) {
    println!("# mSID uses the natural logarithm; endmembers matched by the");
    println!("# permutation minimizing total spectral angle, with abundance");
    println!("# rows reordered the same way before RMSE.");
    let name_w = rows
        .iter()
        .map(|r| r.name.len())
        .chain(["run".len()].into_iter())
        .max()
        .unwrap_or(3);
    let method_w = rows
        .iter()
        .map(|r| r.method.len())
        .chain(["method".len()].into_iter())
        .max()
        .unwrap_or(6);
    println!(
        "{:<name_w$}  {:<method_w$}  {:>12}  {:>12}  {:>12}  {:>12}",
        "run", "method", "RMSE", "mSAD", "mSID", "PSNR"
    );
    for r in rows {
        println!(
            "{:<name_w$}  {:<method_w$}  {:>12}  {:>12}  {:>12}  {:>12}",
            r.name,
            r.method,
            cell(r.rmse),
            cell(r.msad),
            cell(r.msid),
            cell(r.psnr)
        );
    }
}

fn write_csv(path: &Path, rows: &[RunSummary]) -> Result<()> {
    let mut text = String::from("run,method,rmse,msad,msid,psnr\n");
    for r in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name,
            r.method,
            opt(r.rmse),
            opt(r.msad),
            opt(r.msid),
            opt(r.psnr)
        ));
    }
    std::fs::write(path, text).map_err(|e| UnmixError::io(path, e))
}
