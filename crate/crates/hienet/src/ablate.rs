use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hienet_core::model::FusionMode;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::dataset::Dataset;
use crate::error::{usage, HarnessError, Result};
use crate::train::train;

pub const ABLATION_MD: &str = "ablation.md";

/// One variant trained once per seed; metrics are means over the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seeds: Vec<u64>,
    /// Best validation MSLE of each seed's run.
    pub validation_per_seed: Vec<f64>,
    pub validation_msle: f64,
    pub validation_median_sle: f64,
    pub test_msle: Option<f64>,
}

/// The five variants: everything on, each branch off, concat fusion.
pub fn variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let mut out = vec![("full".to_string(), base.clone())];
    for b in ["cs", "sg", "cg"] {
        let mut c = base.clone();
        c.disable_branch(b).expect("known branch");
        out.push((format!("w/o {b}"), c));
    }
    let mut c = base.clone();
    c.set_fusion(FusionMode::Concat);
    out.push(("concat fusion".to_string(), c));
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Trains every variant with seeds `base.seed .. base.seed + repeats`.
/// A single run's best validation score is noisy on a small validation
/// split, so variants are compared on the mean over seeds.
pub fn run_ablation(dataset: &Dataset, base: &TrainConfig, repeats: usize) -> Result<Vec<AblationRow>> {
    if repeats == 0 {
        return Err(usage("repeats must be at least 1"));
    }
    let seeds: Vec<u64> = (0..repeats as u64).map(|i| base.seed.wrapping_add(i)).collect();
    variants(base)
        .into_iter()
        .map(|(name, config)| {
            let (mut val, mut median, mut test) = (Vec::new(), Vec::new(), Vec::new());
            for &seed in &seeds {
                let outcome = train(dataset, &TrainConfig { seed, ..config.clone() }, None)?;
                let r = &outcome.report;
                log::info!("{name} seed {seed}: validation msle {:.4}", r.best_validation_msle);
                val.push(r.best_validation_msle);
                median.push(r.epochs[r.best_epoch].validation.median_sle);
                test.extend(r.test.as_ref().map(|t| t.msle));
            }
            Ok(AblationRow {
                variant: name,
                seeds: seeds.clone(),
                validation_msle: mean(&val),
                validation_median_sle: mean(&median),
                test_msle: (test.len() == seeds.len()).then(|| mean(&test)),
                validation_per_seed: val,
            })
        })
        .collect()
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut s = String::from("| variant | validation MSLE | per seed | validation mSLE | test MSLE |\n");
    s.push_str("|---|---:|---|---:|---:|\n");
    for r in rows {
        let test = r.test_msle.map_or("-".to_string(), |t| format!("{t:.4}"));
        let per_seed: Vec<String> = r.validation_per_seed.iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(
            s,
            "| {} | {:.4} | {} | {:.4} | {} |",
            r.variant,
            r.validation_msle,
            per_seed.join(" "),
            r.validation_median_sle,
            test
        );
    }
    s
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    fs::write(path, ablation_markdown(rows)).map_err(HarnessError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_variants() {
        let v = variants(&TrainConfig::default());
        let names: Vec<&str> = v.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["full", "w/o cs", "w/o sg", "w/o cg", "concat fusion"]);
        assert!(!v[1].1.model.use_cs && v[1].1.model.use_sg);
        assert_eq!(v[4].1.model.fusion, FusionMode::Concat);
        let md = ablation_markdown(&[AblationRow {
            variant: "full".into(),
            seeds: vec![0, 1],
            validation_per_seed: vec![0.5, 1.5],
            validation_msle: 1.0,
            validation_median_sle: 0.5,
            test_msle: None,
        }]);
        assert_eq!(md.lines().count(), 3);
        assert!(md.contains("| full | 1.0000 | 0.5000 1.5000 | 0.5000 | - |"));
    }
}
