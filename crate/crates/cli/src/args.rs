use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Parser;
use flowtex::features::{ExtractorSpec, WeightSource};
use flowtex::flowfield::{EtfParams, LinePolarity};
use flowtex::transfer::TransferConfig;

/// Where the feature extractor weights come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtractorChoice {
    Builtin(u64),
    File(PathBuf),
}

impl ExtractorChoice {
    pub fn spec(&self) -> ExtractorSpec {
        match self {
            ExtractorChoice::Builtin(seed) => ExtractorSpec::builtin(*seed),
            ExtractorChoice::File(path) => ExtractorSpec::vgg16_prefix(path.clone()),
        }
    }

    pub fn from_spec(spec: &ExtractorSpec) -> Self {
        match &spec.weights {
            WeightSource::Builtin { seed } => ExtractorChoice::Builtin(*seed),
            WeightSource::External(path) => ExtractorChoice::File(path.clone()),
        }
    }
}

impl std::fmt::Display for ExtractorChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtractorChoice::Builtin(seed) => write!(f, "builtin:{seed}"),
            ExtractorChoice::File(path) => write!(f, "file:{}", path.display()),
        }
    }
}

/// A style image and its optional partial mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StylePaths {
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

impl std::fmt::Display for StylePaths {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.mask {
            Some(m) => write!(f, "{}:{}", self.image.display(), m.display()),
            None => write!(f, "{}", self.image.display()),
        }
    }
}

fn parse_etf(s: &str) -> Result<EtfParams, String> {
    let (r, i) = s.split_once(':').ok_or_else(|| format!("expected RADIUS:ITERATIONS, got '{s}'"))?;
    let r = r.trim().parse().map_err(|_| format!("bad radius in '{s}'"))?;
    let i = i.trim().parse().map_err(|_| format!("bad iteration count in '{s}'"))?;
    Ok(EtfParams::new(r, i))
}

fn parse_extractor(s: &str) -> Result<ExtractorChoice, String> {
    match s.split_once(':') {
        Some(("builtin", seed)) => seed
            .parse()
            .map(ExtractorChoice::Builtin)
            .map_err(|_| format!("bad builtin seed in '{s}'")),
        Some(("file", path)) if !path.is_empty() => Ok(ExtractorChoice::File(path.into())),
        _ => Err(format!("expected builtin:SEED or file:PATH, got '{s}'")),
    }
}

fn parse_style(s: &str) -> Result<StylePaths, String> {
    if s.is_empty() {
        return Err("empty style path".into());
    }
    Ok(match s.rsplit_once(':') {
        Some((image, mask)) if !image.is_empty() && !mask.is_empty() => StylePaths {
            image: image.into(),
            mask: Some(mask.into()),
        },
        _ => StylePaths {
            image: s.into(),
            mask: None,
        },
    })
}

fn parse_polarity(s: &str) -> Result<LinePolarity, String> {
    match s {
        "dark" | "dark-on-light" => Ok(LinePolarity::DarkOnLight),
        "light" | "light-on-dark" => Ok(LinePolarity::LightOnDark),
        _ => Err(format!("expected dark or light, got '{s}'")),
    }
}

/// Raw command line. Every setting is optional here so a config file can
/// fill the gaps; [`resolve`] applies defaults and checks what is required.
#[derive(Clone, Debug, Default, Parser)]
#[command(name = "flowtex", version, about = "Stylize a mesh texture along painted direction lines")]
pub struct Args {
    /// key=value file of settings; flags given on the command line win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// UV-mapped OBJ mesh.
    #[arg(long, value_name = "PATH")]
    pub mesh: Option<PathBuf>,
    /// Content texture (PNG).
    #[arg(long, value_name = "PATH")]
    pub texture: Option<PathBuf>,
    /// Guidance texture with painted direction lines (PNG).
    #[arg(long, value_name = "PATH")]
    pub guidance: Option<PathBuf>,
    /// Style image, optionally with a mask; repeat for several styles.
    #[arg(long, value_name = "PATH[:MASK]", value_parser = parse_style)]
    pub style: Vec<StylePaths>,
    /// Gray texture assigning a style to each texel.
    #[arg(long, value_name = "PATH")]
    pub style_regions: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Angle bin width in degrees.
    #[arg(long, value_name = "DEG")]
    pub tau: Option<f64>,
    #[arg(long, value_name = "W")]
    pub lambda_tv: Option<f64>,
    #[arg(long, value_name = "RATE")]
    pub lr: Option<f64>,
    /// Optimization steps per scale.
    #[arg(long, value_name = "N")]
    pub iterations: Option<usize>,
    #[arg(long, value_name = "N")]
    pub scales: Option<usize>,
    /// Weight of the original texture when moving to a finer scale.
    #[arg(long, value_name = "B")]
    pub beta: Option<f64>,
    #[arg(long, value_name = "N")]
    pub viewpoints: Option<usize>,
    #[arg(long, value_name = "PX")]
    pub render_size: Option<usize>,
    #[arg(long, value_name = "D")]
    pub feature_downsample: Option<usize>,
    /// Texture size when starting from noise.
    #[arg(long, value_name = "PX")]
    pub texture_size: Option<usize>,
    #[arg(long, value_name = "R:I", value_parser = parse_etf)]
    pub etf_style: Option<EtfParams>,
    #[arg(long, value_name = "R:I", value_parser = parse_etf)]
    pub etf_contour: Option<EtfParams>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// builtin:SEED or file:PATH (defaults to builtin:<seed>).
    #[arg(long, value_name = "SOURCE", value_parser = parse_extractor)]
    pub extractor: Option<ExtractorChoice>,
    /// Start from uniform noise instead of the content texture.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub random_init: Option<bool>,
    /// Guidance line color: dark or light.
    #[arg(long, value_name = "P", value_parser = parse_polarity)]
    pub polarity: Option<LinePolarity>,
    /// Vertical field of view of the cameras, in degrees.
    #[arg(long, value_name = "DEG")]
    pub fov: Option<f64>,
    #[arg(long, value_name = "F")]
    pub camera_margin: Option<f64>,
    /// Directory for cached style dictionaries.
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Also write contour flows and the color-matched texture.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub debug: Option<bool>,
}

impl Args {
    /// Fills every setting missing here from `base`.
    pub fn or(self, base: Args) -> Args {
        Args {
            config: self.config.or(base.config),
            mesh: self.mesh.or(base.mesh),
            texture: self.texture.or(base.texture),
            guidance: self.guidance.or(base.guidance),
            style: if self.style.is_empty() { base.style } else { self.style },
            style_regions: self.style_regions.or(base.style_regions),
            out: self.out.or(base.out),
            tau: self.tau.or(base.tau),
            lambda_tv: self.lambda_tv.or(base.lambda_tv),
            lr: self.lr.or(base.lr),
            iterations: self.iterations.or(base.iterations),
            scales: self.scales.or(base.scales),
            beta: self.beta.or(base.beta),
            viewpoints: self.viewpoints.or(base.viewpoints),
            render_size: self.render_size.or(base.render_size),
            feature_downsample: self.feature_downsample.or(base.feature_downsample),
            texture_size: self.texture_size.or(base.texture_size),
            etf_style: self.etf_style.or(base.etf_style),
            etf_contour: self.etf_contour.or(base.etf_contour),
            seed: self.seed.or(base.seed),
            extractor: self.extractor.or(base.extractor),
            random_init: self.random_init.or(base.random_init),
            polarity: self.polarity.or(base.polarity),
            fov: self.fov.or(base.fov),
            camera_margin: self.camera_margin.or(base.camera_margin),
            cache_dir: self.cache_dir.or(base.cache_dir),
            debug: self.debug.or(base.debug),
        }
    }
}

/// Turns a config file into flag tokens. Blank lines and lines starting
/// with `#` are skipped.
pub fn config_tokens(text: &str, path: &Path) -> anyhow::Result<Vec<String>> {
    let mut tokens = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value, got '{line}'", path.display(), n + 1);
        };
        let key = key.trim();
        if key == "config" {
            bail!("{}:{}: config files cannot include other config files", path.display(), n + 1);
        }
        tokens.push(format!("--{key}"));
        tokens.push(value.trim().to_string());
    }
    Ok(tokens)
}

/// Parses a config file into [`Args`], reporting the offending line.
pub fn parse_config_file(path: &Path) -> anyhow::Result<Args> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    let tokens = config_tokens(&text, path)?;
    for pair in tokens.chunks(2) {
        if let Err(e) = Args::try_parse_from(std::iter::once("flowtex").chain(pair.iter().map(String::as_str))) {
            bail!("{}: {}", path.display(), e.render().to_string().trim());
        }
    }
    Args::try_parse_from(std::iter::once("flowtex".to_string()).chain(tokens))
        .map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e.render().to_string().trim()))
}

/// A fully resolved run.
#[derive(Clone, Debug, PartialEq)]
pub struct Invocation {
    pub config: TransferConfig,
    pub mesh: PathBuf,
    pub texture: Option<PathBuf>,
    pub guidance: PathBuf,
    pub styles: Vec<StylePaths>,
    pub style_regions: Option<PathBuf>,
    pub out: PathBuf,
    pub debug: bool,
}

/// Layers the command line over the config file over the defaults and
/// checks that every required input is present.
pub fn resolve(cli: Args) -> anyhow::Result<Invocation> {
    let args = match &cli.config {
        Some(path) => cli.clone().or(parse_config_file(path)?),
        None => cli,
    };
    let d = TransferConfig::default();
    let seed = args.seed.unwrap_or(d.seed);
    let config = TransferConfig {
        tau_step: args.tau.unwrap_or(d.tau_step),
        lambda_tv: args.lambda_tv.unwrap_or(d.lambda_tv),
        learning_rate: args.lr.unwrap_or(d.learning_rate),
        iterations: args.iterations.unwrap_or(d.iterations),
        scales: args.scales.unwrap_or(d.scales),
        beta: args.beta.unwrap_or(d.beta),
        viewpoints: args.viewpoints.unwrap_or(d.viewpoints),
        render_size: args.render_size.unwrap_or(d.render_size),
        texture_size: args.texture_size.unwrap_or(d.texture_size),
        feature_downsample: args.feature_downsample.unwrap_or(d.feature_downsample),
        etf_style: args.etf_style.unwrap_or(d.etf_style),
        etf_contour: args.etf_contour.unwrap_or(d.etf_contour),
        seed,
        extractor: args.extractor.unwrap_or(ExtractorChoice::Builtin(seed)).spec(),
        random_init: args.random_init.unwrap_or(d.random_init),
        polarity: args.polarity.unwrap_or(d.polarity),
        fov_y_degrees: args.fov.unwrap_or(d.fov_y_degrees),
        camera_margin: args.camera_margin.unwrap_or(d.camera_margin),
        snapshot_every: d.snapshot_every,
        dictionary_cache: args.cache_dir,
    };
    config.validate()?;
    let need = |p: Option<PathBuf>, flag: &str| p.with_context(|| format!("missing required --{flag}"));
    let mesh = need(args.mesh, "mesh")?;
    let guidance = need(args.guidance, "guidance")?;
    let out = need(args.out, "out")?;
    if args.style.is_empty() {
        bail!("missing required --style");
    }
    if args.style.len() > 1 && args.style_regions.is_none() {
        bail!("multiple styles require a style-region texture");
    }
    if args.texture.is_none() && !config.random_init {
        bail!("missing --texture (or pass --random-init)");
    }
    Ok(Invocation {
        config,
        mesh,
        texture: args.texture,
        guidance,
        styles: args.style,
        style_regions: args.style_regions,
        out,
        debug: args.debug.unwrap_or(false),
    })
}

/// Parses `argv` (including the program name) into a resolved run.
pub fn parse_args<I, T>(argv: I) -> anyhow::Result<Invocation>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| anyhow::anyhow!("{}", e.render().to_string().trim()))?;
    resolve(args)
}
