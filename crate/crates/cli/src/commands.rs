//! Command execution: each command produces a serializable result plus a
//! CSV rendering, and the caller wraps both with the resolved config.

use serde::Serialize;
use serde_json::json;

use moran::codetree::Word;
use moran::estimation::{box_count_dimension, PointCloud, ScaleRange};
use moran::filtration::{verify_filtration_axioms, GeneralFiltration};
use moran::measure::MoranMeasure;
use moran::realization::{realize_on_interval, verify_moran_axioms, GapRule, IntervalRealization};
use moran::{MoranError, Result};

use crate::config::{Command, RunConfig};

/// Result of a command: a JSON-ready value and a CSV body.
pub struct CommandOutput {
    pub result: serde_json::Value,
    pub csv: String,
}

fn to_value<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("reports serialize infallibly")
}

fn measure_of(config: &RunConfig) -> Result<MoranMeasure> {
    match &config.measure {
        Some(rule) => MoranMeasure::weighted(config.spec.clone(), rule.clone()),
        None => Ok(MoranMeasure::uniform(config.spec.clone())),
    }
}

fn path_of(config: &RunConfig, measure: &MoranMeasure) -> Result<Word> {
    match &config.path {
        Some(indices) => {
            let word = Word::from(indices.clone());
            if word.len() < config.depth {
                return Err(MoranError::InvalidArgument(format!(
                    "config: path of length {} is shorter than depth {}",
                    word.len(),
                    config.depth
                )));
            }
            measure.spec.validate_word(&word)?;
            Ok(word)
        }
        None => Ok(measure
            .sample_paths(config.depth, 1, config.seed)?
            .pop()
            .expect("count = 1")),
    }
}

fn realization_of(config: &RunConfig) -> Result<IntervalRealization> {
    match &config.realization {
        Some(r) => Ok(IntervalRealization::from_intervals(
            config.spec.clone(),
            r.root,
            r.levels.clone(),
        )),
        None => {
            // Deep commands only need a moderate geometric prefix; the
            // symbolic extension covers the rest.
            let depth = config.depth.min(16);
            realize_on_interval(
                &config.spec,
                config.gap_rule.unwrap_or(GapRule::UniformGaps),
                depth,
            )
        }
    }
}

pub fn run_command(command: Command, config: &RunConfig) -> Result<CommandOutput> {
    match command {
        Command::Dim => {
            let report =
                moran::dimension::dimension_report(&config.spec, config.depth, config.tail_window)?;
            Ok(CommandOutput { csv: report.to_csv(), result: to_value(&report) })
        }
        Command::LocalDim => {
            let measure = measure_of(config)?;
            let filtration = GeneralFiltration::from_spec(&config.spec, config.depth, None)?;
            let path = path_of(config, &measure)?;
            let (lower, upper) =
                moran::filtration::local_dim_via_filtration(&measure, &filtration, &path)?;
            let result = json!({
                "path": path,
                "lower_local_dimension": lower,
                "upper_local_dimension": upper,
            });
            let csv = format!("quantity,value\nlower_local_dimension,{lower}\nupper_local_dimension,{upper}\n");
            Ok(CommandOutput { result, csv })
        }
        Command::Lq => {
            let measure = measure_of(config)?;
            let filtration = GeneralFiltration::from_spec(&config.spec, config.depth, None)?;
            let grid = config
                .q_grid
                .clone()
                .unwrap_or_else(|| moran::measure::DEFAULT_Q_GRID.to_vec());
            let mut estimates = Vec::with_capacity(grid.len());
            let mut csv = String::from("q,tau_q,dim_q\n");
            for &q in &grid {
                let est = moran::measure::lq_spectrum_symbolic(
                    &measure,
                    &filtration,
                    q,
                    None,
                    config.depth,
                    config.tail_window,
                )?;
                csv.push_str(&format!(
                    "{q},{},{}\n",
                    est.tau_q,
                    est.dim_q.map_or(String::new(), |d| d.to_string())
                ));
                estimates.push(est);
            }
            Ok(CommandOutput { result: to_value(&estimates), csv })
        }
        Command::Realize => {
            let realization = realize_on_interval(
                &config.spec,
                config.gap_rule.unwrap_or(GapRule::UniformGaps),
                config.depth,
            )?;
            let csv = realization.to_csv()?;
            let result = json!({
                "root": realization.root_interval(),
                "materialized_depth": realization.materialized_depth(),
                "c0_certified": realization.c0_certified,
                "warnings": realization.warnings,
                "max_fidelity_error": realization.max_fidelity_error()?,
            });
            Ok(CommandOutput { result, csv })
        }
        Command::Estimate => {
            let realization = realization_of(config)?;
            let depth = realization.materialized_depth();
            let points: Vec<f64> = realization
                .absolute_level(depth)?
                .iter()
                .map(|&(a, len)| a + len / 2.0)
                .collect();
            let cloud = PointCloud::new(
                points,
                realization.root_interval(),
                format!("depth-{depth} cylinder midpoints"),
            )?;
            let sc = config.scales.clone().unwrap_or_default();
            let scales = ScaleRange::geometric(sc.r_max, sc.base, sc.count)?;
            let report = box_count_dimension(&cloud, &scales)?;
            Ok(CommandOutput { csv: report.to_csv(), result: to_value(&report) })
        }
        Command::Verify => {
            let realization = realization_of(config)?;
            let depth = config.depth.max(config.tail_window + 1);
            let moran_report = verify_moran_axioms(&realization, depth, config.tail_window)?;
            let filtration = GeneralFiltration::from_realization(&realization, depth)?;
            let filtration_report = if depth >= 2 * config.tail_window {
                Some(verify_filtration_axioms(&filtration, config.tail_window)?)
            } else {
                None
            };
            let result = json!({
                "moran_axioms": to_value(&moran_report),
                "filtration_axioms": filtration_report.as_ref().map(to_value),
            });
            let csv = {
                let mut out = String::from("axiom,value\n");
                out.push_str(&format!("m2_decreasing,{}\n", moran_report.m2_decreasing));
                out.push_str(&format!("m4_c0,{}\n", moran_report.m4_c0));
                out.push_str(&format!("m5_deviation,{}\n", moran_report.m5_deviation));
                if let Some(f) = &filtration_report {
                    out.push_str(&format!("f3_deviation,{}\n", f.f3_deviation));
                    out.push_str(&format!("f4_deviation,{}\n", f.f4_deviation));
                }
                out
            };
            Ok(CommandOutput { result, csv })
        }
        Command::Conditions => {
            let measure = measure_of(config)?;
            let n_max = config.depth;
            let paths = measure.sample_paths(n_max, 3, config.seed)?;
            let report = moran::measure::check_entropy_conditions(&measure, n_max, &paths)?;
            Ok(CommandOutput { csv: report.to_csv(), result: to_value(&report) })
        }
    }
}
