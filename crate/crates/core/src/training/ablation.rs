use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{train, TrainSetup};
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, Evaluation};
use crate::model::{Components, LanguageRegistry};

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    /// Removed component, `None` for the full model.
    pub removed: Option<String>,
    pub components: Components,
    pub best_epoch: usize,
    /// Test-split evaluation of the best checkpoint.
    pub test: Evaluation,
    /// Per-dataset macro-F1 minus the full model's.
    pub delta: BTreeMap<String, f64>,
}

impl AblationRow {
    pub fn name(&self) -> &str {
        self.removed.as_deref().unwrap_or("full")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub datasets: Vec<String>,
    pub rows: Vec<AblationRow>,
}

/// Trains the full model plus one run per removed component, each with the
/// same seed, and scores every best checkpoint on the test split.
pub fn ablate(
    corpus: &Corpus,
    languages: &LanguageRegistry,
    base: &TrainSetup,
    remove: &[&str],
) -> Result<AblationTable> {
    let mut variants = vec![(None, base.components)];
    for &name in remove {
        if !Components::NAMES.contains(&name) {
            return Err(Error::Usage(format!(
                "unknown component `{name}` (expected one of {})",
                Components::NAMES.join(", ")
            )));
        }
        variants.push((Some(name.to_string()), base.components.without(name)?));
    }
    let runs = variants
        .into_par_iter()
        .map(|(removed, components)| {
            let setup = TrainSetup {
                components,
                ..base.clone()
            };
            let outcome = train(&corpus.train, &corpus.validation, languages, &setup)?;
            let arch = outcome.checkpoint.architecture()?;
            let test = evaluate(
                &arch,
                &outcome.checkpoint.params,
                languages,
                &corpus.test,
                false,
            )?;
            Ok(AblationRow {
                removed,
                components,
                best_epoch: outcome.best_epoch,
                test,
                delta: BTreeMap::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let datasets: Vec<String> = runs[0].test.by_dataset.keys().cloned().collect();
    let full = runs[0].test.by_dataset.clone();
    let rows = runs
        .into_iter()
        .map(|mut r| {
            r.delta = r
                .test
                .by_dataset
                .iter()
                .map(|(d, m)| (d.clone(), m.macro_f1 - full[d].macro_f1))
                .collect();
            r
        })
        .collect();
    Ok(AblationTable { datasets, rows })
}

impl AblationTable {
    /// One row per configuration: macro-F1 and delta per dataset.
    pub fn to_tsv(&self) -> String {
        let mut header = vec!["configuration".to_string(), "best_epoch".into()];
        for d in &self.datasets {
            header.push(format!("macro_f1[{d}]"));
            header.push(format!("delta[{d}]"));
        }
        let mut out = header.join("\t");
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![r.name().to_string(), r.best_epoch.to_string()];
            for d in &self.datasets {
                cells.push(format!("{:.2}", r.test.by_dataset[d].macro_f1));
                cells.push(format!("{:+.2}", r.delta[d]));
            }
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }
}
