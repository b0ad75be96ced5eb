//! Flat `key = value` experiment configuration. `#` starts a comment; list
//! values are comma separated. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// How the approximation cube radius grows with `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadiusRule {
    Fixed,
    /// `r_n = r + ln n`
    Log,
    /// `r_n = r + sqrt(n)`
    Sqrt,
}

impl RadiusRule {
    pub fn radius(self, base: f64, n: usize) -> f64 {
        match self {
            RadiusRule::Fixed => base,
            RadiusRule::Log => base + (n as f64).ln(),
            RadiusRule::Sqrt => base + (n as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub rhs: String,
    pub coeffs: Vec<f64>,
    pub dim: usize,
    /// Half-width of the test cube `K = [-k, k]^d` of initial values.
    pub k_radius: f64,
    pub time_samples: usize,
    pub space_samples: usize,
    pub n_list: Vec<usize>,
    pub r_rule: RadiusRule,
    /// Base radius; `None` means `max(4, k + c + 1)`.
    pub r_n: Option<f64>,
    /// Per-block accuracy; `None` means `1/n` for convergence runs and 0.01
    /// for weight-sharing runs.
    pub block_eps: Option<f64>,
    pub oracle_tol: f64,
    pub k_list: Vec<usize>,
    /// Number of time pieces the rhs is frozen to for weight sharing.
    pub pieces: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rhs: "sin".into(),
            coeffs: Vec::new(),
            dim: 1,
            k_radius: 1.0,
            time_samples: 33,
            space_samples: 41,
            n_list: vec![8, 16, 32, 64],
            r_rule: RadiusRule::Fixed,
            r_n: None,
            block_eps: None,
            oracle_tol: 1e-8,
            k_list: vec![2, 4, 8, 16],
            pieces: 1,
            out_dir: PathBuf::from("results"),
            seed: 0,
        }
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| bad(line, format!("cannot parse `{v}` as a value for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(line, key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "rhs" => cfg.rhs = value.to_string(),
                "coeffs" => cfg.coeffs = parse_list(line, key, value)?,
                "dim" => cfg.dim = parse_num(line, key, value)?,
                "k_radius" => cfg.k_radius = parse_num(line, key, value)?,
                "time_samples" => cfg.time_samples = parse_num(line, key, value)?,
                "space_samples" => cfg.space_samples = parse_num(line, key, value)?,
                "n_list" => cfg.n_list = parse_list(line, key, value)?,
                "r_rule" => {
                    cfg.r_rule = match value {
                        "fixed" => RadiusRule::Fixed,
                        "log" => RadiusRule::Log,
                        "sqrt" => RadiusRule::Sqrt,
                        other => return Err(bad(line, format!("unknown r_rule `{other}`"))),
                    }
                }
                "r_n" => cfg.r_n = Some(parse_num(line, key, value)?),
                "block_eps" => cfg.block_eps = Some(parse_num(line, key, value)?),
                "oracle_tol" => cfg.oracle_tol = parse_num(line, key, value)?,
                "k_list" => cfg.k_list = parse_list(line, key, value)?,
                "pieces" => cfg.pieces = parse_num(line, key, value)?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "seed" => cfg.seed = parse_num(line, key, value)?,
                other => return Err(bad(line, format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.dim == 0 {
            return fail("dim must be positive");
        }
        if !(self.k_radius > 0.0 && self.k_radius.is_finite()) {
            return fail("k_radius must be positive");
        }
        if self.time_samples < 2 || self.space_samples < 2 {
            return fail("sample counts must be at least 2");
        }
        if self.n_list.is_empty()
            || self.n_list[0] == 0
            || self.n_list.windows(2).any(|w| w[1] <= w[0])
        {
            return fail("n_list must be a nonempty strictly ascending list of positive integers");
        }
        if self.k_list.is_empty()
            || self.k_list[0] == 0
            || self.k_list.windows(2).any(|w| w[1] <= w[0])
        {
            return fail("k_list must be a nonempty strictly ascending list of positive integers");
        }
        if self.pieces == 0 {
            return fail("pieces must be positive");
        }
        if let Some(r) = self.r_n {
            if !(r > 0.0 && r.is_finite()) {
                return fail("r_n must be positive");
            }
        }
        if let Some(e) = self.block_eps {
            if !(e > 0.0 && e.is_finite()) {
                return fail("block_eps must be positive");
            }
        }
        if !(self.oracle_tol > 0.0) {
            return fail("oracle_tol must be positive");
        }
        Ok(())
    }

    /// Base radius for a rhs bounded by `c`.
    pub fn base_radius(&self, c: f64) -> f64 {
        self.r_n
            .unwrap_or_else(|| (self.k_radius + c + 1.0).max(4.0))
    }
}
