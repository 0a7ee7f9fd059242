//! Measure-to-network construction with per-stage diagnostics.

use std::path::{Path, PathBuf};

use implicit_density::constructor::{
    direct_generator, l2_step_gap, theorem1_generator, PipelineConfig, PipelineOutput, StageDiagnostic,
    PIPELINE_STAGES,
};
use implicit_density::density::GenerativeDensity;
use implicit_density::measures::DiscreteMeasure;
use implicit_density::metrics::{bounding_box, hellinger_quadrature, QuadratureGrid, SUPPORT_MARGIN};

use crate::error::{read, write, CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructArgs {
    pub measure: PathBuf,
    pub sigma: f64,
    pub beta: f64,
    pub tau3: f64,
    pub c4: f64,
    pub d2: f64,
    pub kappa: Option<f64>,
    /// Build the step generator straight from the measure.
    pub direct: bool,
    pub out: PathBuf,
    pub diagnostics: PathBuf,
}

pub fn load_measure(path: &Path) -> Result<DiscreteMeasure> {
    DiscreteMeasure::from_table(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Direct mode: the discretization stages are the identity, the step stage is
/// measured against the mixture and the ReLU stage against the step density.
pub fn direct(m: &DiscreteMeasure, sigma: f64, kappa: f64, points: Option<usize>) -> Result<PipelineOutput> {
    if !(sigma > 0.0) {
        return Err(CliError::Input(format!("sigma must be positive, got {sigma}")));
    }
    let (step, generator) = direct_generator(m, kappa)?;
    let d = m.dim();
    let (lo, hi) = bounding_box(m.atoms().iter().map(Vec::as_slice)).expect("measures are non-empty");
    let pad = SUPPORT_MARGIN * sigma;
    let grid = QuadratureGrid::new(
        lo.iter().map(|v| v - pad).collect(),
        hi.iter().map(|v| v + pad).collect(),
        vec![points.unwrap_or(if d == 1 { 2001 } else { 401 }); d],
    )?;
    let step_density = GenerativeDensity::new(step.clone(), sigma)?;
    let relu_density = GenerativeDensity::new(generator.clone(), sigma)?;
    let step_h = hellinger_quadrature(
        |x: &[f64]| m.mixture_density(sigma, x),
        |x: &[f64]| step_density.exact_density(x),
        &grid,
    )?;
    let relu_h = hellinger_quadrature(
        |x: &[f64]| step_density.exact_density(x),
        |x: &[f64]| relu_density.exact_density(x),
        &grid,
    )?;
    let measured = [0.0, 0.0, 0.0, step_h, relu_h];
    let bounds = [0.0, 0.0, 0.0, 0.0, (l2_step_gap(&step, kappa) / (8.0 * sigma * sigma)).sqrt()];
    let stages = (0..5)
        .map(|i| StageDiagnostic {
            stage: PIPELINE_STAGES[i],
            atoms: m.len(),
            measured: measured[i],
            bound: bounds[i],
        })
        .collect();
    let a_sigma = generator.sup_norm();
    Ok(PipelineOutput {
        generator,
        step,
        kappa,
        a_sigma,
        stages,
    })
}

pub fn run_construct(args: &ConstructArgs) -> Result<PipelineOutput> {
    let m = load_measure(&args.measure)?;
    let out = if args.direct {
        let kappa = args
            .kappa
            .ok_or_else(|| CliError::Input("--direct needs --kappa".into()))?;
        direct(&m, args.sigma, kappa, None)?
    } else {
        let mut cfg = PipelineConfig::new(args.sigma, args.beta, args.tau3, args.c4, args.d2);
        cfg.kappa_override = args.kappa;
        theorem1_generator(&m, &cfg)?
    };
    write(&args.out, &out.generator.to_text())?;
    write(&args.diagnostics, &out.diagnostics_csv())?;
    Ok(out)
}
