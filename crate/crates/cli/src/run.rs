use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::Context;
use flowtex::flowfield::direction_field_rgb;
use flowtex::geometry::load_mesh;
use flowtex::matching::LossReport;
use flowtex::transfer::{run, LossRecord, Observer, PrecomputedViewpoint, StyleInput, TransferInputs};

use crate::args::{Invocation, StylePaths};
use crate::manifest::RunManifest;
use crate::png::{load_png, save_png};

/// Files produced by a successful run.
#[derive(Clone, Debug)]
pub struct RunOutputs {
    pub texture: PathBuf,
    pub loss_csv: PathBuf,
    pub manifest: PathBuf,
    pub debug_files: Vec<PathBuf>,
}

/// Logs progress about ten times per scale.
struct ProgressLog {
    every: usize,
}

impl Observer for ProgressLog {
    fn on_iteration(&mut self, r: &LossRecord, report: &LossReport, _view: &PrecomputedViewpoint) {
        if (r.iteration + 1) % self.every == 0 {
            log::info!(
                "scale {} step {}: total {:.6} (nnfm {:.6}, tv {:.6}, {} empty-bin fallbacks)",
                r.scale,
                r.iteration + 1,
                r.total,
                r.nnfm,
                r.tv,
                report.empty_bin_fallbacks
            );
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// The same run with every input path made absolute, so the manifest can be
/// replayed from any directory.
fn with_absolute_paths(inv: &Invocation) -> Invocation {
    let mut inv = inv.clone();
    inv.mesh = absolute(&inv.mesh);
    inv.texture = inv.texture.as_deref().map(absolute);
    inv.guidance = absolute(&inv.guidance);
    inv.style_regions = inv.style_regions.as_deref().map(absolute);
    inv.styles = inv
        .styles
        .iter()
        .map(|s| StylePaths {
            image: absolute(&s.image),
            mask: s.mask.as_deref().map(absolute),
        })
        .collect();
    if let flowtex::features::WeightSource::External(p) = &mut inv.config.extractor.weights {
        *p = absolute(p);
    }
    inv
}

fn load_inputs(inv: &Invocation) -> anyhow::Result<TransferInputs> {
    let styles = inv
        .styles
        .iter()
        .map(|s| {
            Ok(StyleInput {
                image: load_png(&s.image)?,
                mask: s.mask.as_ref().map(load_png).transpose()?,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let content = if inv.config.random_init {
        None
    } else {
        inv.texture.as_ref().map(load_png).transpose()?
    };
    Ok(TransferInputs {
        mesh: load_mesh(&inv.mesh)?,
        content,
        guidance: load_png(&inv.guidance)?,
        style_regions: inv.style_regions.as_ref().map(load_png).transpose()?,
        styles,
    })
}

pub fn loss_csv(history: &[LossRecord]) -> String {
    let mut s = String::from("scale,iteration,viewpoint,nnfm,tv,total,empty_bins\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.scale, r.iteration, r.viewpoint, r.nnfm, r.tv, r.total, r.empty_bins
        );
    }
    s
}

/// Produces `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let tmp = path.with_extension("partial");
    write(&tmp)?;
    std::fs::rename(&tmp, path).with_context(|| format!("cannot move output into place at {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(text.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))
}

/// Loads the inputs, stylizes, and writes `texture.png`, `loss.csv`,
/// `manifest.txt` and, with `debug`, the contour flows of the final
/// viewpoints and the color-matched texture under `debug/`. The texture is
/// written last, so it only exists if everything else succeeded.
pub fn execute(inv: &Invocation) -> anyhow::Result<RunOutputs> {
    let started = Instant::now();
    let inv = with_absolute_paths(inv);
    let mut timings: Vec<(String, Duration)> = Vec::new();

    let t = Instant::now();
    let inputs = load_inputs(&inv).context("loading inputs")?;
    let mut manifest = RunManifest::new(inv.clone(), env!("CARGO_PKG_VERSION")).context("loading inputs")?;
    timings.push(("loading inputs".into(), t.elapsed()));

    let mut progress = ProgressLog {
        every: (inv.config.iterations / 10).max(1),
    };
    let output = run(&inv.config, &inputs, &mut progress)?;
    timings.extend(output.timings.iter().map(|(s, d)| (s.to_string(), *d)));

    let t = Instant::now();
    let write = || -> anyhow::Result<RunOutputs> {
        std::fs::create_dir_all(&inv.out).with_context(|| format!("cannot create {}", inv.out.display()))?;
        let loss_csv_path = inv.out.join("loss.csv");
        write_text(&loss_csv_path, &loss_csv(&output.history))?;
        let mut debug_files = Vec::new();
        if inv.debug {
            let dir = inv.out.join("debug");
            std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
            for (k, v) in output.viewpoints.iter().enumerate() {
                let p = dir.join(format!("contour_flow_{k:03}.png"));
                save_png(&p, &direction_field_rgb(&v.contour))?;
                debug_files.push(p);
            }
            let p = dir.join("color_matched.png");
            save_png(&p, &output.color_matched.clamped())?;
            debug_files.push(p);
        }
        Ok(RunOutputs {
            texture: inv.out.join("texture.png"),
            loss_csv: loss_csv_path,
            manifest: inv.out.join("manifest.txt"),
            debug_files,
        })
    };
    let outputs = write().context("writing outputs")?;
    timings.push(("writing outputs".into(), t.elapsed()));
    timings.push(("total".into(), started.elapsed()));
    manifest.timings = timings;
    let finish = || -> anyhow::Result<()> {
        write_text(&outputs.manifest, &manifest.to_text())?;
        write_atomic(&outputs.texture, |tmp| save_png(tmp, &output.texture))
    };
    finish().context("writing outputs")?;
    log::info!("wrote {}", outputs.texture.display());
    Ok(outputs)
}
