//! Runs every scenario–jurisdiction pair against every provider.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use intake_core::eval::{evaluate_pair, Dataset, PredictionResult};
use intake_core::screener::{DecodeParams, InstructionSet};
use intake_core::{Program, ProgramId};

use crate::providers::NamedProvider;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("no providers given")]
    NoProviders,
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("dataset references jurisdiction `{0}` with no configured program")]
    UnknownJurisdiction(ProgramId),
}

pub struct MatrixInput<'a> {
    pub dataset: &'a Dataset,
    pub programs: &'a BTreeMap<ProgramId, Program>,
    pub instructions: &'a InstructionSet,
    pub params: DecodeParams,
}

/// Scores the first response of each provider on each pair.
///
/// Output order is provider order, then dataset order, whatever the
/// completion order was. At most `parallelism` provider calls are in flight.
pub fn run_matrix(
    input: &MatrixInput<'_>,
    providers: &[NamedProvider],
    parallelism: usize,
) -> Result<Vec<PredictionResult>, MatrixError> {
    if providers.is_empty() {
        return Err(MatrixError::NoProviders);
    }
    if parallelism == 0 {
        return Err(MatrixError::ZeroParallelism);
    }
    let records = input.dataset.records();
    if let Some(r) = records.iter().find(|r| !input.programs.contains_key(&r.jurisdiction)) {
        return Err(MatrixError::UnknownJurisdiction(r.jurisdiction.clone()));
    }

    let jobs = providers.len() * records.len();
    let slots: Mutex<Vec<Option<PredictionResult>>> = Mutex::new(vec![None; jobs]);
    let next = AtomicUsize::new(0);

    thread::scope(|scope| {
        for _ in 0..parallelism.min(jobs) {
            scope.spawn(|| loop {
                let job = next.fetch_add(1, Ordering::Relaxed);
                if job >= jobs {
                    break;
                }
                let provider = &providers[job / records.len()];
                let scenario = &records[job % records.len()];
                let program = &input.programs[&scenario.jurisdiction];
                let result = evaluate_pair(
                    input.instructions,
                    program,
                    scenario,
                    &provider.name,
                    provider.provider.as_ref(),
                    input.params,
                );
                slots.lock().expect("result slots")[job] = Some(result);
            });
        }
    });

    Ok(slots.into_inner().expect("result slots").into_iter().map(|r| r.expect("every job ran")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ScriptedProvider;
    use intake_core::eval::{LabeledScenario, PredictionError};
    use intake_core::screener::PromptPayload;
    use intake_core::{Label, Provider, ProviderError, Timestamp};
    use std::sync::Arc;
    use std::time::Duration;

    fn program(id: &str) -> Program {
        Program {
            id: ProgramId::new(id),
            name: id.into(),
            service_area: ["1".into()].into_iter().collect(),
            rules_text: "rules".into(),
            website: "w".into(),
            phone: "p".into(),
            rules_updated_at: Timestamp(0),
        }
    }

    fn dataset(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| LabeledScenario {
                    scenario_id: format!("s{i}"),
                    jurisdiction: ProgramId::new("e"),
                    text: format!("scenario {i}"),
                    gold: Label::Accept,
                })
                .collect(),
        )
        .unwrap()
    }

    fn programs() -> BTreeMap<ProgramId, Program> {
        [(ProgramId::new("e"), program("e"))].into_iter().collect()
    }

    struct Gauge {
        current: AtomicUsize,
        max: AtomicUsize,
    }

    impl Provider for Gauge {
        fn complete(&self, _: &PromptPayload) -> Result<String, ProviderError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.max.fetch_max(now, Ordering::SeqCst);
            thread::sleep(Duration::from_millis(5));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok("STATUS: QUALIFIES\nEXPLANATION: ok".into())
        }
    }

    #[test]
    fn parallelism_bound_is_honored() {
        let ds = dataset(40);
        let progs = programs();
        let instr = InstructionSet::default();
        let input = MatrixInput { dataset: &ds, programs: &progs, instructions: &instr, params: DecodeParams::default() };
        let gauge = Arc::new(Gauge { current: AtomicUsize::new(0), max: AtomicUsize::new(0) });
        let providers = [NamedProvider::new("a", gauge.clone()), NamedProvider::new("b", gauge.clone())];
        let out = run_matrix(&input, &providers, 4).unwrap();
        assert_eq!(out.len(), 80);
        assert!(gauge.max.load(Ordering::SeqCst) <= 4);
        assert!(gauge.max.load(Ordering::SeqCst) >= 2, "calls should overlap");
        assert_eq!(out[0].provider, "a");
        assert_eq!(out[40].provider, "b");
        assert_eq!(out[41].scenario_id, "s1");
    }

    #[test]
    fn gibberish_is_embedded_as_parse_failure() {
        let ds = dataset(1);
        let progs = programs();
        let instr = InstructionSet::default();
        let input = MatrixInput { dataset: &ds, programs: &progs, instructions: &instr, params: DecodeParams::default() };
        let providers = [NamedProvider::new("g", Arc::new(ScriptedProvider::always("lol what")))];
        let out = run_matrix(&input, &providers, 1).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].error, Some(PredictionError::ParseFailure));
        assert_eq!(out[0].parse_retries, 1);
        assert_eq!(out[0].predicted, None);
    }

    #[test]
    fn preconditions() {
        let ds = dataset(1);
        let progs = programs();
        let instr = InstructionSet::default();
        let input = MatrixInput { dataset: &ds, programs: &progs, instructions: &instr, params: DecodeParams::default() };
        assert_eq!(run_matrix(&input, &[], 1), Err(MatrixError::NoProviders));
        let p = [NamedProvider::new("g", Arc::new(ScriptedProvider::always("x")))];
        assert_eq!(run_matrix(&input, &p, 0), Err(MatrixError::ZeroParallelism));
        let empty = BTreeMap::new();
        let input = MatrixInput { programs: &empty, ..input };
        assert_eq!(run_matrix(&input, &p, 1), Err(MatrixError::UnknownJurisdiction(ProgramId::new("e"))));
    }
}
