//! Finite-difference gradient check on a toy model.

use tbje_core::gradcheck::{check_model, toy_config, toy_examples, GradReport};
use tbje_core::{Modality, Tensor, TbjeModel};

use crate::error::{config_err, CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckOptions {
    pub modalities: Vec<Modality>,
    pub blocks: usize,
    pub hidden: usize,
    pub heads: usize,
    pub examples: usize,
    pub seed: u64,
    /// Perturb the analytic gradient of one parameter tensor so the check
    /// must fail.
    pub fault_inject: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            modalities: vec![Modality::Linguistic, Modality::Acoustic],
            blocks: 2,
            hidden: 16,
            heads: 2,
            examples: 3,
            seed: 0,
            fault_inject: false,
        }
    }
}

/// Runs the check and returns the per-parameter report, whether or not
/// it passed.
pub fn run(opts: &GradcheckOptions) -> Result<GradReport> {
    if opts.blocks > 2 || opts.hidden > 16 {
        return Err(config_err(format!(
            "gradient checks run on toy models (blocks <= 2, hidden <= 16), got {} and {}",
            opts.blocks, opts.hidden
        )));
    }
    if opts.examples == 0 {
        return Err(config_err("gradient checks need at least one example"));
    }
    let mut cfg = toy_config(&opts.modalities);
    cfg.blocks = opts.blocks;
    cfg.hidden = opts.hidden;
    cfg.heads = opts.heads;
    cfg.ff_hidden = 2 * opts.hidden;
    cfg.validate()?;
    let model = TbjeModel::new(cfg.clone(), opts.seed)?;
    let examples = toy_examples(&cfg, opts.examples, opts.seed)?;
    let target = model.params().names().next().map(str::to_string);
    let corrupt = |name: &str, g: &mut Tensor| {
        if Some(name) == target.as_deref() {
            for v in g.data_mut() {
                *v = *v * 1.5 + 1e-3;
            }
        }
    };
    let report = check_model(&model, &examples, opts.fault_inject.then_some(&corrupt as _))?;
    Ok(report)
}

pub fn format_report(report: &GradReport) -> String {
    let mut out = String::new();
    for p in &report.params {
        out.push_str(&format!(
            "{:<48} {:>7} values  rel err {:.3e}  {}\n",
            p.name,
            p.values,
            p.relative_error,
            if p.passed() { "ok" } else { "FAIL" }
        ));
    }
    out.push_str(&format!("max relative error {:.3e}\n", report.max_relative_error()));
    out
}

/// Error when any parameter tensor fails.
pub fn verdict(report: &GradReport) -> Result<()> {
    let failed = report.params.iter().filter(|p| !p.passed()).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::GradientCheck { failed, max: report.max_relative_error() })
    }
}
