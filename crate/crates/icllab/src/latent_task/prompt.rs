//! Prompt formats 1-6 and the sampling of synthetic ICL prompts.

use rand::Rng;

use crate::error::{Error, Result};
use crate::latent_task::model::TaskModel;

/// The six instruction placements.
///
/// 1. single correct instruction; 2. single incorrect instruction (or
/// absent); 3. repeated correct instruction (one vector shared at every
/// slot); 4. repeated incorrect instruction (shared); 5. varying correct
/// instructions (one per demonstration plus the query slot); 6. varying
/// incorrect instructions (one per demonstration plus the query slot, each
/// drawn from an independently chosen wrong task).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum PromptFormat {
    SingleCorrect,
    SingleIncorrect,
    RepeatedCorrect,
    RepeatedIncorrect,
    VaryingCorrect,
    VaryingIncorrect,
}

impl PromptFormat {
    pub fn from_index(i: u8) -> Result<Self> {
        Ok(match i {
            1 => PromptFormat::SingleCorrect,
            2 => PromptFormat::SingleIncorrect,
            3 => PromptFormat::RepeatedCorrect,
            4 => PromptFormat::RepeatedIncorrect,
            5 => PromptFormat::VaryingCorrect,
            6 => PromptFormat::VaryingIncorrect,
            _ => return Err(Error::domain(format!("prompt format must be 1..=6, got {i}"))),
        })
    }

    pub fn index(self) -> u8 {
        match self {
            PromptFormat::SingleCorrect => 1,
            PromptFormat::SingleIncorrect => 2,
            PromptFormat::RepeatedCorrect => 3,
            PromptFormat::RepeatedIncorrect => 4,
            PromptFormat::VaryingCorrect => 5,
            PromptFormat::VaryingIncorrect => 6,
        }
    }

    /// Formats 5 and 6 carry one instruction per demonstration plus a query
    /// slot; the others carry a single (possibly absent) instruction.
    pub fn per_slot(self) -> bool {
        matches!(self, PromptFormat::VaryingCorrect | PromptFormat::VaryingIncorrect)
    }
}

/// Sampling variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PromptVariant {
    /// The format's canonical generation rule.
    Standard,
    /// Format 2 only: the pad sentinel carrying zero instruction evidence.
    Absent,
    /// Format 6 only: demo n's output is generated under the task whose
    /// instruction occupies slot n with probability `lambda`, else under the
    /// target task.
    Coupled { lambda: f64 },
}

/// One ICL prompt: instructions, demonstrations, and a query.
///
/// Instruction layout: formats 1-4 store at most one vector (formats 3-4
/// conceptually repeat it at every slot, but it is a single random draw, so
/// it contributes one likelihood factor); format 2 with the pad sentinel
/// stores none; formats 5-6 store `n_demos + 1` vectors, the last being the
/// query-slot instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub format: PromptFormat,
    pub instructions: Vec<Vec<f64>>,
    pub demos: Vec<(usize, usize)>,
    pub query: usize,
    /// The task the prompt was generated for (the posterior's reference).
    pub target_task: usize,
}

impl PromptSpec {
    pub fn n_demos(&self) -> usize {
        self.demos.len()
    }

    /// Structural validation against a model.
    pub fn validate(&self, model: &TaskModel) -> Result<()> {
        let n = self.n_demos();
        let expect = match self.format {
            PromptFormat::SingleCorrect
            | PromptFormat::RepeatedCorrect
            | PromptFormat::RepeatedIncorrect => 1..=1,
            PromptFormat::SingleIncorrect => 0..=1,
            PromptFormat::VaryingCorrect | PromptFormat::VaryingIncorrect => (n + 1)..=(n + 1),
        };
        if !expect.contains(&self.instructions.len()) {
            return Err(Error::invalid(format!(
                "format {:?} with {n} demos cannot carry {} instruction vectors",
                self.format,
                self.instructions.len()
            )));
        }
        for i in &self.instructions {
            if i.len() != model.instr_dim() {
                return Err(Error::invalid("instruction dimension mismatch"));
            }
            if i.iter().any(|c| !c.is_finite()) {
                return Err(Error::non_finite("instruction coordinates must be finite"));
            }
        }
        if self.target_task >= model.num_tasks() {
            return Err(Error::invalid("target task out of range"));
        }
        if self.query >= model.num_inputs() {
            return Err(Error::invalid("query symbol outside alphabet"));
        }
        for &(x, y) in &self.demos {
            if x >= model.num_inputs() || y >= model.num_outputs() {
                return Err(Error::invalid("demonstration symbol outside alphabet"));
            }
        }
        Ok(())
    }

    /// Whether every instruction vector lies in the compact domain ball.
    pub fn instructions_in_domain(&self, model: &TaskModel) -> bool {
        self.instructions.iter().all(|i| model.in_domain(i))
    }
}

/// First task index distinct from the target: the fixed wrong task used by
/// the incorrect-consistent formats 2 and 4.
fn fixed_wrong_task(model: &TaskModel, t_star: usize) -> usize {
    (0..model.num_tasks()).find(|&t| t != t_star).expect("at least two tasks")
}

fn random_wrong_task(model: &TaskModel, t_star: usize, rng: &mut impl Rng) -> usize {
    let mut w = rng.random_range(0..model.num_tasks() - 1);
    if w >= t_star {
        w += 1;
    }
    w
}

/// Sample one prompt. Demonstrations are drawn i.i.d. under the target task
/// (inputs uniform, outputs through the noise channel); instructions follow
/// the format: from `p(i|t_star)` for the correct formats 1/3/5, from a fixed
/// wrong task for the incorrect-consistent formats 2/4, and from per-slot
/// independently chosen wrong tasks for format 6. The coupled variant routes
/// demo n's output through the task indicated by instruction n with
/// probability lambda.
pub fn sample_prompt(
    model: &TaskModel,
    t_star: usize,
    format: PromptFormat,
    n: usize,
    rng: &mut impl Rng,
    variant: PromptVariant,
) -> Result<PromptSpec> {
    if t_star >= model.num_tasks() {
        return Err(Error::domain("target task out of range"));
    }
    match variant {
        PromptVariant::Standard => {}
        PromptVariant::Absent => {
            if format != PromptFormat::SingleIncorrect {
                return Err(Error::domain("the absent variant applies to format 2 only"));
            }
        }
        PromptVariant::Coupled { lambda } => {
            if format != PromptFormat::VaryingIncorrect {
                return Err(Error::domain("the coupled variant applies to format 6 only"));
            }
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::domain("coupling weight must lie in [0, 1]"));
            }
        }
    }

    let query = rng.random_range(0..model.num_inputs());

    // Per-demo draws; format 6 fixes the wrong task per slot first so the
    // coupled channel and the slot instruction agree on it.
    let mut slot_tasks = Vec::new();
    let mut demos = Vec::with_capacity(n);
    for _ in 0..n {
        let channel_task = if format == PromptFormat::VaryingIncorrect {
            let w = random_wrong_task(model, t_star, rng);
            slot_tasks.push(w);
            match variant {
                PromptVariant::Coupled { lambda } if rng.random::<f64>() < lambda => w,
                _ => t_star,
            }
        } else {
            t_star
        };
        let x = rng.random_range(0..model.num_inputs());
        let y = model.sample_output(x, channel_task, rng);
        demos.push((x, y));
    }

    let instructions = match (format, variant) {
        (PromptFormat::SingleIncorrect, PromptVariant::Absent) => Vec::new(),
        (PromptFormat::SingleCorrect | PromptFormat::RepeatedCorrect, _) => {
            vec![model.sample_instruction(t_star, rng)]
        }
        (PromptFormat::SingleIncorrect | PromptFormat::RepeatedIncorrect, _) => {
            vec![model.sample_instruction(fixed_wrong_task(model, t_star), rng)]
        }
        (PromptFormat::VaryingCorrect, _) => {
            (0..=n).map(|_| model.sample_instruction(t_star, rng)).collect()
        }
        (PromptFormat::VaryingIncorrect, _) => {
            let mut v: Vec<Vec<f64>> = slot_tasks
                .iter()
                .map(|&w| model.sample_instruction(w, rng))
                .collect();
            let w_query = random_wrong_task(model, t_star, rng);
            v.push(model.sample_instruction(w_query, rng));
            v
        }
    };

    Ok(PromptSpec { format, instructions, demos, query, target_task: t_star })
}

/// Redraw the instruction assignment of an existing prompt under the same
/// format rule, leaving demonstrations and query untouched.
pub fn resample_instructions(
    model: &TaskModel,
    prompt: &PromptSpec,
    rng: &mut impl Rng,
) -> PromptSpec {
    let t_star = prompt.target_task;
    let n = prompt.n_demos();
    let instructions = match prompt.format {
        PromptFormat::SingleIncorrect if prompt.instructions.is_empty() => Vec::new(),
        PromptFormat::SingleCorrect | PromptFormat::RepeatedCorrect => {
            vec![model.sample_instruction(t_star, rng)]
        }
        PromptFormat::SingleIncorrect | PromptFormat::RepeatedIncorrect => {
            vec![model.sample_instruction(fixed_wrong_task(model, t_star), rng)]
        }
        PromptFormat::VaryingCorrect => {
            (0..=n).map(|_| model.sample_instruction(t_star, rng)).collect()
        }
        PromptFormat::VaryingIncorrect => (0..=n)
            .map(|_| {
                let w = random_wrong_task(model, t_star, rng);
                model.sample_instruction(w, rng)
            })
            .collect(),
    };
    PromptSpec { instructions, ..prompt.clone() }
}
