//! Flat `key = value` run configuration and its canonical echo.

use std::fmt::Write as _;
use std::path::PathBuf;

use torrey_core::io::fmt_f64;
use torrey_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truncation {
    Fixed(usize),
    Auto,
}

impl Truncation {
    pub fn parse(text: &str) -> Result<Self> {
        if text == "auto" {
            return Ok(Truncation::Auto);
        }
        text.parse()
            .map(Truncation::Fixed)
            .map_err(|_| Error::Validation(format!("truncation must be an integer or `auto`, got `{text}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Chi {
    Adaptive,
    Fixed(f64),
}

/// Every key a config file may set. Unset keys keep the defaults below.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub geometry: String,
    pub size: f64,
    pub import_path: Option<PathBuf>,
    /// `None` means the geometry's default truncation.
    pub truncation: Option<Truncation>,
    /// Filled in once `auto` has been resolved; echoed but never read from a file.
    pub resolved_truncation: Option<usize>,
    pub sheets: usize,
    /// Relative agreement between truncations N and 2N for a sheet to be trusted.
    pub trust_tol: f64,

    // Real-g sweep for `spectrum`, along Im g = g_im.
    pub g_min: f64,
    pub g_max: f64,
    pub g_points: usize,
    pub snapshots: Vec<f64>,

    // Single point for `modes`, `evolve` and the `toy` loop.
    pub g_re: f64,
    pub g_im: f64,
    pub grid_points: usize,
    pub times: Vec<f64>,

    // Region and detector for `scan`; the region also bounds the `toy` grid.
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub epsilon: f64,
    pub contour: String,
    pub chi: Chi,
    pub samples: usize,
    pub max_depth: usize,

    pub target: f64,
    pub input: Option<PathBuf>,
    pub offsets: Vec<f64>,

    pub model: String,
    pub loop_radius: f64,
    pub turns: usize,

    pub diffusion: Option<f64>,
    pub gamma: Option<f64>,
    pub length: Option<f64>,
    pub eta: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: "interval".into(),
            size: 1.0,
            import_path: None,
            truncation: None,
            resolved_truncation: None,
            sheets: 6,
            trust_tol: 1e-6,
            g_min: 0.0,
            g_max: 100.0,
            g_points: 51,
            snapshots: Vec::new(),
            g_re: 0.0,
            g_im: 0.0,
            grid_points: 101,
            times: vec![0.0, 0.1, 1.0],
            re_min: 0.0,
            re_max: 40.0,
            im_min: -5.0,
            im_max: 5.0,
            epsilon: 0.5,
            contour: "square".into(),
            chi: Chi::Adaptive,
            samples: 64,
            max_depth: 40,
            target: 1e-9,
            input: None,
            offsets: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            model: "sqrt".into(),
            loop_radius: 1.0,
            turns: 1,
            diffusion: None,
            gamma: None,
            length: None,
            eta: None,
        }
    }
}

fn number(key: &str, value: &str) -> Result<f64> {
    let x: f64 = value
        .parse()
        .map_err(|_| Error::Validation(format!("`{key}` expects a number, got `{value}`")))?;
    if !x.is_finite() {
        return Err(Error::Validation(format!("`{key}` must be finite")));
    }
    Ok(x)
}

fn count(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Validation(format!("`{key}` expects a non-negative integer, got `{value}`")))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| number(key, v.trim())).collect()
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let x = number(key, value)?;
    if x <= 0.0 {
        return Err(Error::Validation(format!("`{key}` must be positive")));
    }
    Ok(x)
}

fn optional_positive(key: &str, value: &str) -> Result<Option<f64>> {
    if value.is_empty() {
        return Ok(None);
    }
    positive(key, value).map(Some)
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

const KEYS: &[&str] = &[
    "chi", "contour", "diffusion", "epsilon", "eta", "g_im", "g_max", "g_min", "g_points", "g_re", "gamma",
    "geometry", "grid_points", "im_max", "im_min", "import_path", "input", "length", "loop_radius", "max_depth",
    "model", "offsets", "re_max", "re_min", "samples", "sheets", "size", "snapshots", "target", "times",
    "truncation", "trust_tol", "turns",
];

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "geometry" => self.geometry = value.to_string(),
            "size" => self.size = positive(key, value)?,
            "import_path" => self.import_path = optional_path(value),
            // The echo writes unset optional keys with an empty value.
            "truncation" if value.is_empty() => self.truncation = None,
            "truncation" => self.truncation = Some(Truncation::parse(value)?),
            "sheets" => self.sheets = count(key, value)?,
            "trust_tol" => self.trust_tol = positive(key, value)?,
            "g_min" => self.g_min = number(key, value)?,
            "g_max" => self.g_max = number(key, value)?,
            "g_points" => self.g_points = count(key, value)?,
            "snapshots" => self.snapshots = list(key, value)?,
            "g_re" => self.g_re = number(key, value)?,
            "g_im" => self.g_im = number(key, value)?,
            "grid_points" => self.grid_points = count(key, value)?,
            "times" => self.times = list(key, value)?,
            "re_min" => self.re_min = number(key, value)?,
            "re_max" => self.re_max = number(key, value)?,
            "im_min" => self.im_min = number(key, value)?,
            "im_max" => self.im_max = number(key, value)?,
            "epsilon" => self.epsilon = positive(key, value)?,
            "contour" => self.contour = value.to_string(),
            "chi" => {
                self.chi = if value == "adaptive" {
                    Chi::Adaptive
                } else {
                    Chi::Fixed(positive(key, value)?)
                }
            }
            "samples" => self.samples = count(key, value)?,
            "max_depth" => self.max_depth = count(key, value)?,
            "target" => self.target = positive(key, value)?,
            "input" => self.input = optional_path(value),
            "offsets" => self.offsets = list(key, value)?,
            "model" => self.model = value.to_string(),
            "loop_radius" => self.loop_radius = positive(key, value)?,
            "turns" => self.turns = count(key, value)?,
            "diffusion" => self.diffusion = optional_positive(key, value)?,
            "gamma" => self.gamma = optional_positive(key, value)?,
            "length" => self.length = optional_positive(key, value)?,
            "eta" => self.eta = optional_positive(key, value)?,
            _ => {
                return Err(Error::Validation(format!(
                    "unknown config key `{key}`; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a `key=value` override given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("expected key=value, got `{pair}`")))?;
        self.set(key.trim(), value)
    }

    /// Parses a config file: `key = value` lines, `#` comments, blank lines ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            config.set(key.trim(), value).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(config)
    }

    /// Every key with its effective value, one per line in a fixed order. Parsing the
    /// echo gives back the same configuration.
    pub fn canonical(&self) -> String {
        let f = |x: f64| fmt_f64(x);
        let fl = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let truncation = match self.truncation {
            None => String::new(),
            Some(Truncation::Auto) => "auto".into(),
            Some(Truncation::Fixed(n)) => n.to_string(),
        };
        let chi = match self.chi {
            Chi::Adaptive => "adaptive".into(),
            Chi::Fixed(x) => f(x),
        };
        let entries: Vec<(&str, String)> = vec![
            ("chi", chi),
            ("contour", self.contour.clone()),
            ("diffusion", opt(self.diffusion)),
            ("epsilon", f(self.epsilon)),
            ("eta", opt(self.eta)),
            ("g_im", f(self.g_im)),
            ("g_max", f(self.g_max)),
            ("g_min", f(self.g_min)),
            ("g_points", self.g_points.to_string()),
            ("g_re", f(self.g_re)),
            ("gamma", opt(self.gamma)),
            ("geometry", self.geometry.clone()),
            ("grid_points", self.grid_points.to_string()),
            ("im_max", f(self.im_max)),
            ("im_min", f(self.im_min)),
            ("import_path", path(&self.import_path)),
            ("input", path(&self.input)),
            ("length", opt(self.length)),
            ("loop_radius", f(self.loop_radius)),
            ("max_depth", self.max_depth.to_string()),
            ("model", self.model.clone()),
            ("offsets", fl(&self.offsets)),
            ("re_max", f(self.re_max)),
            ("re_min", f(self.re_min)),
            ("samples", self.samples.to_string()),
            ("sheets", self.sheets.to_string()),
            ("size", f(self.size)),
            ("snapshots", fl(&self.snapshots)),
            ("target", f(self.target)),
            ("times", fl(&self.times)),
            ("truncation", truncation),
            ("trust_tol", f(self.trust_tol)),
            ("turns", self.turns.to_string()),
        ];
        let mut out = String::new();
        for (key, value) in entries {
            let _ = writeln!(out, "{key} = {value}");
        }
        if let Some(n) = self.resolved_truncation {
            let _ = writeln!(out, "# resolved truncation: {n}");
        }
        out
    }
}
