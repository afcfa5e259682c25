//! Per-stage trace export.
//!
//! A trace directory holds four images per stage,
//! `stage{k}_l_hat.pgm`, `stage{k}_l.pgm`, `stage{k}_r_hat.{ppm,pgm}` and
//! `stage{k}_r.{ppm,pgm}`, plus `metrics.txt` with one line of
//! space-separated `key=value` fields per stage. Nothing time-dependent is
//! written, so identical runs give identical directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{ImageIoError, Result};
use crate::image::MultiChannelImage;
use crate::io::write_image;
use crate::pipeline::{PipelineResult, StageTrace};

pub const METRICS_FILE: &str = "metrics.txt";

fn join(values: impl Iterator<Item = String>) -> String {
    values.collect::<Vec<_>>().join(",")
}

/// One metrics line for a stage.
pub fn stage_record(t: &StageTrace) -> String {
    let isic = t.isic.map_or_else(|| "none".to_string(), |v| format!("{v:.12e}"));
    format!(
        "stage={} energy={:.12e} isic={} cg_iterations={} residuals={} gate={:.12e} \
         illum_before={:.12e} illum_after={:.12e} refl_before={:.12e} refl_after={:.12e}",
        t.stage_index,
        t.energy,
        isic,
        join(t.cg_reports.iter().map(|r| r.iterations.to_string())),
        join(t.cg_reports.iter().map(|r| format!("{:.6e}", r.relative_residual))),
        t.gate,
        t.illumination_step.before,
        t.illumination_step.after,
        t.reflectance_step.before,
        t.reflectance_step.after,
    )
}

pub fn render_metrics(result: &PipelineResult) -> String {
    let mut out = String::new();
    for t in &result.traces {
        out.push_str(&stage_record(t));
        out.push('\n');
    }
    writeln!(out, "final_isic={:.12e}", result.final_isic).unwrap();
    out
}

fn ext(img: &MultiChannelImage) -> &'static str {
    if img.channels() == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

/// Writes the trace directory, creating it if needed, and returns the
/// image paths in stage order.
pub fn write_trace(result: &PipelineResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(ImageIoError::from)?;
    let mut written = Vec::with_capacity(4 * result.traces.len());
    for t in &result.traces {
        let k = t.stage_index;
        let l_hat = MultiChannelImage::from(t.l_hat.clone());
        let l = MultiChannelImage::from(t.l.clone());
        for (name, img) in [
            (format!("stage{k}_l_hat.pgm"), &l_hat),
            (format!("stage{k}_l.pgm"), &l),
            (format!("stage{k}_r_hat.{}", ext(&t.r_hat)), &t.r_hat),
            (format!("stage{k}_r.{}", ext(&t.r)), &t.r),
        ] {
            let path = dir.join(name);
            write_image(img, &path)?;
            written.push(path);
        }
    }
    std::fs::write(dir.join(METRICS_FILE), render_metrics(result)).map_err(ImageIoError::from)?;
    Ok(written)
}
