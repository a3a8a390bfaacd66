use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use flowtex::flowfield::LinePolarity;
use sha2::{Digest, Sha256};

use crate::args::{ExtractorChoice, Invocation};

/// Record of one run. Its text form is a valid `--config` file, so a run
/// can be replayed with `flowtex --config manifest.txt --out DIR`.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub invocation: Invocation,
    /// `(label, path, sha256)` of every input file.
    pub inputs: Vec<(String, PathBuf, String)>,
    pub version: &'static str,
    pub timings: Vec<(String, Duration)>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Input files of a run, labelled.
pub fn input_files(inv: &Invocation) -> Vec<(String, PathBuf)> {
    let mut files = vec![("mesh".to_string(), inv.mesh.clone())];
    if let Some(t) = &inv.texture {
        files.push(("texture".into(), t.clone()));
    }
    files.push(("guidance".into(), inv.guidance.clone()));
    for (k, s) in inv.styles.iter().enumerate() {
        files.push((format!("style {k}"), s.image.clone()));
        if let Some(m) = &s.mask {
            files.push((format!("style {k} mask"), m.clone()));
        }
    }
    if let Some(r) = &inv.style_regions {
        files.push(("style regions".into(), r.clone()));
    }
    if let ExtractorChoice::File(p) = ExtractorChoice::from_spec(&inv.config.extractor) {
        files.push(("extractor weights".into(), p));
    }
    files
}

impl RunManifest {
    pub fn new(invocation: Invocation, version: &'static str) -> anyhow::Result<Self> {
        let inputs = input_files(&invocation)
            .into_iter()
            .map(|(label, path)| sha256_file(&path).map(|h| (label, path, h)))
            .collect::<anyhow::Result<_>>()?;
        Ok(Self {
            invocation,
            inputs,
            version,
            timings: Vec::new(),
        })
    }

    pub fn to_text(&self) -> String {
        let inv = &self.invocation;
        let c = &inv.config;
        let mut s = String::new();
        let _ = writeln!(s, "# flowtex {}", self.version);
        for (label, path, hash) in &self.inputs {
            let _ = writeln!(s, "# sha256 {label} ({}) = {hash}", path.display());
        }
        for (stage, d) in &self.timings {
            let _ = writeln!(s, "# time {stage} = {:.3} s", d.as_secs_f64());
        }
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mesh", inv.mesh.display().to_string());
        if let Some(t) = &inv.texture {
            kv("texture", t.display().to_string());
        }
        kv("guidance", inv.guidance.display().to_string());
        for st in &inv.styles {
            kv("style", st.to_string());
        }
        if let Some(r) = &inv.style_regions {
            kv("style-regions", r.display().to_string());
        }
        kv("tau", c.tau_step.to_string());
        kv("lambda-tv", c.lambda_tv.to_string());
        kv("lr", c.learning_rate.to_string());
        kv("iterations", c.iterations.to_string());
        kv("scales", c.scales.to_string());
        kv("beta", c.beta.to_string());
        kv("viewpoints", c.viewpoints.to_string());
        kv("render-size", c.render_size.to_string());
        kv("feature-downsample", c.feature_downsample.to_string());
        kv("texture-size", c.texture_size.to_string());
        kv("etf-style", format!("{}:{}", c.etf_style.kernel_radius, c.etf_style.iterations));
        kv("etf-contour", format!("{}:{}", c.etf_contour.kernel_radius, c.etf_contour.iterations));
        kv("seed", c.seed.to_string());
        kv("extractor", ExtractorChoice::from_spec(&c.extractor).to_string());
        kv("random-init", c.random_init.to_string());
        let polarity = match c.polarity {
            LinePolarity::DarkOnLight => "dark",
            LinePolarity::LightOnDark => "light",
        };
        kv("polarity", polarity.into());
        kv("fov", c.fov_y_degrees.to_string());
        kv("camera-margin", c.camera_margin.to_string());
        if let Some(dir) = &c.dictionary_cache {
            kv("cache-dir", dir.display().to_string());
        }
        kv("debug", inv.debug.to_string());
        s
    }
}
