//! Restricted key-value run configuration.
//!
//! The format is line-oriented `key = value` under bracketed section
//! headers, with `#` comment lines. No nesting. Unknown keys and duplicate
//! keys are rejected with line numbers; every subcommand has built-in
//! defaults, so a config only has to override what it cares about (plus the
//! required `[run] seed`).

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::latent_task::TaskModel;

/// The ten harness subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Bernstein,
    RemezVerify,
    PathAudit,
    Decay,
    Sensitivity,
    Stability,
    CotAudit,
    PaddingAudit,
    Format6Bound,
    Report,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Bernstein => "bernstein",
            Subcommand::RemezVerify => "remez-verify",
            Subcommand::PathAudit => "path-audit",
            Subcommand::Decay => "decay",
            Subcommand::Sensitivity => "sensitivity",
            Subcommand::Stability => "stability",
            Subcommand::CotAudit => "cot-audit",
            Subcommand::PaddingAudit => "padding-audit",
            Subcommand::Format6Bound => "format6-bound",
            Subcommand::Report => "report",
        }
    }

    pub fn all_runnable() -> [Subcommand; 9] {
        [
            Subcommand::Bernstein,
            Subcommand::RemezVerify,
            Subcommand::PathAudit,
            Subcommand::Decay,
            Subcommand::Sensitivity,
            Subcommand::Stability,
            Subcommand::CotAudit,
            Subcommand::PaddingAudit,
            Subcommand::Format6Bound,
        ]
    }
}

#[derive(Debug, Clone)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

/// Parsed, syntax-checked document; typed extraction happens per schema.
#[derive(Debug, Clone, Default)]
pub struct ConfigDoc {
    entries: Vec<Entry>,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<ConfigDoc> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut section = String::new();
        let mut have_section = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(format!("line {line_no}: unterminated section header")))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::config(format!("line {line_no}: empty section name")));
                }
                section = name.to_string();
                have_section = true;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {line_no}: expected `key = value`")))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::config(format!("line {line_no}: empty key")));
            }
            if !have_section {
                return Err(Error::config(format!(
                    "line {line_no}: key `{key}` appears before any [section] header"
                )));
            }
            if let Some(prev) = entries.iter().find(|e| e.section == section && e.key == key) {
                return Err(Error::config(format!(
                    "duplicate key `{key}` in section [{section}]: lines {} and {line_no}",
                    prev.line
                )));
            }
            entries.push(Entry { section: section.clone(), key: key.to_string(), value: value.to_string(), line: line_no });
        }
        Ok(ConfigDoc { entries })
    }
}

/// Schema-checked reader: every lookup marks the key consumed; leftovers are
/// unknown keys and rejected.
pub struct SchemaReader<'a> {
    doc: &'a ConfigDoc,
    consumed: BTreeSet<usize>,
}

impl<'a> SchemaReader<'a> {
    pub fn new(doc: &'a ConfigDoc) -> Self {
        SchemaReader { doc, consumed: BTreeSet::new() }
    }

    fn lookup(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        for (i, e) in self.doc.entries.iter().enumerate() {
            if e.section == section && e.key == key {
                self.consumed.insert(i);
                return Some((e.line, e.value.clone()));
            }
        }
        None
    }

    pub fn str_opt(&mut self, section: &str, key: &str) -> Option<String> {
        self.lookup(section, key).map(|(_, v)| v)
    }

    pub fn u64_opt(&mut self, section: &str, key: &str) -> Result<Option<u64>> {
        match self.lookup(section, key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| {
                Error::config(format!("line {line}: `{key}` must be an unsigned integer, got `{v}`"))
            }),
        }
    }

    pub fn usize_opt(&mut self, section: &str, key: &str) -> Result<Option<usize>> {
        Ok(self.u64_opt(section, key)?.map(|v| v as usize))
    }

    pub fn f64_opt(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.lookup(section, key) {
            None => Ok(None),
            Some((line, v)) => {
                let x: f64 = v.parse().map_err(|_| {
                    Error::config(format!("line {line}: `{key}` must be a number, got `{v}`"))
                })?;
                if !x.is_finite() {
                    return Err(Error::config(format!("line {line}: `{key}` must be finite")));
                }
                Ok(Some(x))
            }
        }
    }

    /// Comma-separated integers with inclusive `a..b` ranges.
    pub fn int_list_opt(&mut self, section: &str, key: &str) -> Result<Option<Vec<usize>>> {
        match self.lookup(section, key) {
            None => Ok(None),
            Some((line, v)) => {
                let mut out = Vec::new();
                for piece in v.split(',') {
                    let piece = piece.trim();
                    if let Some((a, b)) = piece.split_once("..") {
                        let a: usize = a.trim().parse().map_err(|_| {
                            Error::config(format!("line {line}: bad range start `{piece}` in `{key}`"))
                        })?;
                        let b: usize = b.trim().parse().map_err(|_| {
                            Error::config(format!("line {line}: bad range end `{piece}` in `{key}`"))
                        })?;
                        if b < a {
                            return Err(Error::config(format!(
                                "line {line}: descending range `{piece}` in `{key}`"
                            )));
                        }
                        out.extend(a..=b);
                    } else {
                        out.push(piece.parse().map_err(|_| {
                            Error::config(format!("line {line}: bad integer `{piece}` in `{key}`"))
                        })?);
                    }
                }
                if out.is_empty() {
                    return Err(Error::config(format!("line {line}: `{key}` must be nonempty")));
                }
                Ok(Some(out))
            }
        }
    }

    pub fn f64_list_opt(&mut self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.lookup(section, key) {
            None => Ok(None),
            Some((line, v)) => {
                let mut out = Vec::new();
                for piece in v.split(',') {
                    out.push(piece.trim().parse().map_err(|_| {
                        Error::config(format!("line {line}: bad number `{piece}` in `{key}`"))
                    })?);
                }
                Ok(Some(out))
            }
        }
    }

    /// Error if the document still holds entries no schema consumed.
    pub fn finish(self) -> Result<()> {
        for (i, e) in self.doc.entries.iter().enumerate() {
            if !self.consumed.contains(&i) {
                return Err(Error::config(format!(
                    "line {}: unknown key `{}` in section [{}]",
                    e.line, e.key, e.section
                )));
            }
        }
        Ok(())
    }
}

/// Latent-task model selection shared by the decay/sensitivity/stability
/// and format6 scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub family: String,
    pub tasks: usize,
    pub noise: f64,
    pub instr_dim: usize,
    /// Mean separation (flip) or mean radius (cyclic).
    pub instr_sep: f64,
    pub instr_scale: f64,
    pub instr_radius: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            family: "flip".into(),
            tasks: 2,
            noise: 0.1,
            instr_dim: 1,
            instr_sep: 1.5,
            instr_scale: 1.0,
            instr_radius: 4.0,
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<TaskModel> {
        match self.family.as_str() {
            "flip" => TaskModel::flip(self.noise, self.instr_dim, self.instr_sep, self.instr_scale, self.instr_radius),
            "cyclic" => TaskModel::cyclic(
                self.tasks,
                self.noise,
                self.instr_dim,
                self.instr_sep,
                self.instr_scale,
                self.instr_radius,
            ),
            other => Err(Error::config(format!("unknown model family `{other}` (flip|cyclic)"))),
        }
    }

    fn read(r: &mut SchemaReader<'_>) -> Result<ModelConfig> {
        let mut m = ModelConfig::default();
        if let Some(f) = r.str_opt("model", "family") {
            m.family = f;
        }
        if let Some(v) = r.usize_opt("model", "tasks")? {
            m.tasks = v;
        }
        if let Some(v) = r.f64_opt("model", "noise")? {
            if !(0.0..0.5).contains(&v) {
                return Err(Error::config(format!("noise must lie in [0, 0.5), got {v}")));
            }
            m.noise = v;
        }
        if let Some(v) = r.usize_opt("model", "instr_dim")? {
            m.instr_dim = v;
        }
        if let Some(v) = r.f64_opt("model", "instr_sep")? {
            m.instr_sep = v;
        }
        if let Some(v) = r.f64_opt("model", "instr_scale")? {
            m.instr_scale = v;
        }
        if let Some(v) = r.f64_opt("model", "instr_radius")? {
            m.instr_radius = v;
        }
        Ok(m)
    }
}

/// Typed per-subcommand parameter blocks (spec'd defaults baked in).
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Bernstein {
        functions: usize,
        n_values: Vec<usize>,
        grid: usize,
        l_min: f64,
        l_max: f64,
    },
    RemezVerify {
        polynomials: usize,
        max_degree: usize,
        min_measure: f64,
        grid: usize,
    },
    PathAudit {
        fields: usize,
        dim: usize,
        grid: usize,
    },
    Decay {
        model: ModelConfig,
        formats: Vec<u8>,
        variant: String,
        lambda: f64,
        n_list: Vec<usize>,
        trials: usize,
    },
    Sensitivity {
        model: ModelConfig,
        formats: Vec<u8>,
        n_list: Vec<usize>,
        trials: usize,
        fd_prompts: usize,
        fd_demos: usize,
        contrast_trials: usize,
        lambda: f64,
    },
    Stability {
        model: ModelConfig,
        format: u8,
        n_list: Vec<usize>,
        trials: usize,
        eps_log_list: Vec<f64>,
        delta: f64,
    },
    CotAudit {
        scenarios: usize,
        max_steps: usize,
    },
    PaddingAudit {
        scenes: usize,
        max_dim: usize,
        max_pad_count: usize,
        eps: f64,
    },
    Format6Bound {
        model: ModelConfig,
        n_demos_list: Vec<usize>,
        r_inner: f64,
        r_outer: f64,
        degree_cap: usize,
    },
    Report,
}

impl Scenario {
    pub fn default_for(sub: Subcommand) -> Scenario {
        match sub {
            Subcommand::Bernstein => Scenario::Bernstein {
                functions: 200,
                n_values: vec![4, 16, 64, 256],
                grid: 512,
                l_min: 0.5,
                l_max: 10.0,
            },
            Subcommand::RemezVerify => Scenario::RemezVerify {
                polynomials: 500,
                max_degree: 8,
                min_measure: 0.1,
                grid: 10_000,
            },
            Subcommand::PathAudit => Scenario::PathAudit { fields: 100, dim: 4, grid: 4096 },
            Subcommand::Decay => Scenario::Decay {
                model: ModelConfig::default(),
                formats: vec![1, 2, 3, 4, 5],
                variant: "standard".into(),
                lambda: 0.5,
                n_list: vec![1, 2, 4, 8, 16, 32, 64],
                trials: 2000,
            },
            Subcommand::Sensitivity => Scenario::Sensitivity {
                model: ModelConfig::default(),
                formats: vec![1, 2, 3, 4, 5],
                n_list: vec![1, 2, 4, 8, 16, 32, 64],
                trials: 400,
                fd_prompts: 100,
                fd_demos: 3,
                contrast_trials: 400,
                lambda: 0.5,
            },
            Subcommand::Stability => Scenario::Stability {
                model: ModelConfig::default(),
                format: 3,
                n_list: vec![1, 2, 4, 8, 16, 32, 64],
                trials: 500,
                eps_log_list: vec![0.0, 0.05, 0.1],
                delta: 0.05,
            },
            Subcommand::CotAudit => Scenario::CotAudit { scenarios: 50, max_steps: 6 },
            Subcommand::PaddingAudit => Scenario::PaddingAudit {
                scenes: 1000,
                max_dim: 8,
                max_pad_count: 32,
                eps: 0.1,
            },
            Subcommand::Format6Bound => Scenario::Format6Bound {
                model: ModelConfig::default(),
                n_demos_list: vec![4, 16, 64, 256],
                r_inner: 0.5,
                r_outer: 2.0,
                degree_cap: 1 << 20,
            },
            Subcommand::Report => Scenario::Report,
        }
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub seed: u64,
    pub seed_overridden: bool,
    pub scenario: Scenario,
}

/// Default seed for configless runs.
pub const DEFAULT_SEED: u64 = 42;

/// The seed-override environment variable.
pub const SEED_ENV_VAR: &str = "ICLLAB_SEED";

impl RunConfig {
    /// Built-in defaults for a subcommand (seed 42 unless overridden).
    pub fn default_for(sub: Subcommand) -> RunConfig {
        let mut cfg = RunConfig {
            subcommand: sub,
            seed: DEFAULT_SEED,
            seed_overridden: false,
            scenario: Scenario::default_for(sub),
        };
        cfg.apply_env_override();
        cfg
    }

    /// Parse and validate a config document for a subcommand. `[run] seed`
    /// is required; everything else falls back to the defaults.
    pub fn from_text(sub: Subcommand, text: &str) -> Result<RunConfig> {
        let doc = ConfigDoc::parse(text)?;
        let mut r = SchemaReader::new(&doc);
        let seed = r
            .u64_opt("run", "seed")?
            .ok_or_else(|| Error::config("missing required key `seed` in section [run]"))?;

        let scenario = match Scenario::default_for(sub) {
            Scenario::Bernstein { functions, n_values, grid, l_min, l_max } => Scenario::Bernstein {
                functions: r.usize_opt("bernstein", "functions")?.unwrap_or(functions),
                n_values: r.int_list_opt("bernstein", "n_values")?.unwrap_or(n_values),
                grid: r.usize_opt("bernstein", "grid")?.unwrap_or(grid),
                l_min: r.f64_opt("bernstein", "l_min")?.unwrap_or(l_min),
                l_max: r.f64_opt("bernstein", "l_max")?.unwrap_or(l_max),
            },
            Scenario::RemezVerify { polynomials, max_degree, min_measure, grid } => {
                Scenario::RemezVerify {
                    polynomials: r.usize_opt("remez", "polynomials")?.unwrap_or(polynomials),
                    max_degree: r.usize_opt("remez", "max_degree")?.unwrap_or(max_degree),
                    min_measure: r.f64_opt("remez", "min_measure")?.unwrap_or(min_measure),
                    grid: r.usize_opt("remez", "grid")?.unwrap_or(grid),
                }
            }
            Scenario::PathAudit { fields, dim, grid } => Scenario::PathAudit {
                fields: r.usize_opt("path", "fields")?.unwrap_or(fields),
                dim: r.usize_opt("path", "dim")?.unwrap_or(dim),
                grid: r.usize_opt("path", "grid")?.unwrap_or(grid),
            },
            Scenario::Decay { model: _, formats, variant, lambda, n_list, trials } => {
                let formats = r
                    .int_list_opt("decay", "formats")?
                    .map(|v| v.into_iter().map(|x| x as u8).collect())
                    .unwrap_or(formats);
                for &f in &formats {
                    if !(1..=6).contains(&f) {
                        return Err(Error::config(format!("format must be 1..=6, got {f}")));
                    }
                }
                Scenario::Decay {
                    model: ModelConfig::read(&mut r)?,
                    formats,
                    variant: r.str_opt("decay", "variant").unwrap_or(variant),
                    lambda: r.f64_opt("decay", "lambda")?.unwrap_or(lambda),
                    n_list: r.int_list_opt("decay", "n_list")?.unwrap_or(n_list),
                    trials: r.usize_opt("run", "trials")?.unwrap_or(trials),
                }
            }
            Scenario::Sensitivity {
                model: _,
                formats,
                n_list,
                trials,
                fd_prompts,
                fd_demos,
                contrast_trials,
                lambda,
            } => Scenario::Sensitivity {
                model: ModelConfig::read(&mut r)?,
                formats: r
                    .int_list_opt("sensitivity", "formats")?
                    .map(|v| v.into_iter().map(|x| x as u8).collect())
                    .unwrap_or(formats),
                n_list: r.int_list_opt("sensitivity", "n_list")?.unwrap_or(n_list),
                trials: r.usize_opt("run", "trials")?.unwrap_or(trials),
                fd_prompts: r.usize_opt("sensitivity", "fd_prompts")?.unwrap_or(fd_prompts),
                fd_demos: r.usize_opt("sensitivity", "fd_demos")?.unwrap_or(fd_demos),
                contrast_trials: r.usize_opt("sensitivity", "contrast_trials")?.unwrap_or(contrast_trials),
                lambda: r.f64_opt("sensitivity", "lambda")?.unwrap_or(lambda),
            },
            Scenario::Stability { model: _, format, n_list, trials, eps_log_list, delta } => {
                Scenario::Stability {
                    model: ModelConfig::read(&mut r)?,
                    format: r.usize_opt("stability", "format")?.map(|v| v as u8).unwrap_or(format),
                    n_list: r.int_list_opt("stability", "n_list")?.unwrap_or(n_list),
                    trials: r.usize_opt("run", "trials")?.unwrap_or(trials),
                    eps_log_list: r.f64_list_opt("stability", "eps_log")?.unwrap_or(eps_log_list),
                    delta: r.f64_opt("stability", "delta")?.unwrap_or(delta),
                }
            }
            Scenario::CotAudit { scenarios, max_steps } => Scenario::CotAudit {
                scenarios: r.usize_opt("cot", "scenarios")?.unwrap_or(scenarios),
                max_steps: r.usize_opt("cot", "max_steps")?.unwrap_or(max_steps),
            },
            Scenario::PaddingAudit { scenes, max_dim, max_pad_count, eps } => {
                Scenario::PaddingAudit {
                    scenes: r.usize_opt("padding", "scenes")?.unwrap_or(scenes),
                    max_dim: r.usize_opt("padding", "max_dim")?.unwrap_or(max_dim),
                    max_pad_count: r.usize_opt("padding", "max_pads")?.unwrap_or(max_pad_count),
                    eps: r.f64_opt("padding", "eps")?.unwrap_or(eps),
                }
            }
            Scenario::Format6Bound { model: _, n_demos_list, r_inner, r_outer, degree_cap } => {
                Scenario::Format6Bound {
                    model: ModelConfig::read(&mut r)?,
                    n_demos_list: r.int_list_opt("format6", "n_list")?.unwrap_or(n_demos_list),
                    r_inner: r.f64_opt("format6", "r_inner")?.unwrap_or(r_inner),
                    r_outer: r.f64_opt("format6", "r_outer")?.unwrap_or(r_outer),
                    degree_cap: r.usize_opt("format6", "degree_cap")?.unwrap_or(degree_cap),
                }
            }
            Scenario::Report => Scenario::Report,
        };
        r.finish()?;

        let mut cfg = RunConfig { subcommand: sub, seed, seed_overridden: false, scenario };
        cfg.apply_env_override();
        Ok(cfg)
    }

    /// ICLLAB_SEED, when set, overrides the config seed.
    fn apply_env_override(&mut self) {
        if let Ok(v) = std::env::var(SEED_ENV_VAR) {
            if let Ok(seed) = v.parse::<u64>() {
                self.seed = seed;
                self.seed_overridden = true;
            }
        }
    }
}
