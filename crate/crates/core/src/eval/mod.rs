//! Offline evaluation of first-response screening accuracy.

pub mod metrics;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{Label, Program, ProgramId, Timestamp, Transcript};
use crate::provider::{Provider, ProviderError};
use crate::screener::{assemble_prompt, screen_with_retry, CallFailure, DecodeParams, InstructionSet};

pub use metrics::{
    per_class_metrics, weighted_metrics, ClassMetrics, ConfusionMatrix, EmptySupport, WeightedMetrics,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledScenario {
    pub scenario_id: String,
    pub jurisdiction: ProgramId,
    pub text: String,
    pub gold: Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetError {
    EmptyText { index: usize },
    DuplicatePair { index: usize, scenario_id: String, jurisdiction: ProgramId },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::EmptyText { .. } => f.write_str("text is empty"),
            DatasetError::DuplicatePair { scenario_id, jurisdiction, .. } => {
                write!(f, "duplicate pair ({scenario_id}, {jurisdiction})")
            }
        }
    }
}

/// Validated list of scenario–jurisdiction pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<LabeledScenario>,
}

impl Dataset {
    pub fn new(records: Vec<LabeledScenario>) -> Result<Self, DatasetError> {
        let mut seen = BTreeSet::new();
        for (index, r) in records.iter().enumerate() {
            if r.text.trim().is_empty() {
                return Err(DatasetError::EmptyText { index });
            }
            if !seen.insert((r.scenario_id.as_str(), &r.jurisdiction)) {
                return Err(DatasetError::DuplicatePair {
                    index,
                    scenario_id: r.scenario_id.clone(),
                    jurisdiction: r.jurisdiction.clone(),
                });
            }
        }
        Ok(Dataset { records })
    }

    pub fn records(&self) -> &[LabeledScenario] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn gold(&self, scenario_id: &str, jurisdiction: &ProgramId) -> Option<Label> {
        self.records
            .iter()
            .find(|r| r.scenario_id == scenario_id && &r.jurisdiction == jurisdiction)
            .map(|r| r.gold)
    }

    fn gold_index(&self) -> BTreeMap<(&str, &ProgramId), Label> {
        self.records.iter().map(|r| ((r.scenario_id.as_str(), &r.jurisdiction), r.gold)).collect()
    }

    /// Gold label counts per jurisdiction, in jurisdiction order.
    pub fn distribution(&self) -> BTreeMap<ProgramId, [u64; 3]> {
        let mut out: BTreeMap<ProgramId, [u64; 3]> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.jurisdiction.clone()).or_default()[r.gold.index()] += 1;
        }
        out
    }

    /// Gold label counts over the whole dataset.
    pub fn supports(&self) -> [u64; 3] {
        let mut s = [0; 3];
        for r in &self.records {
            s[r.gold.index()] += 1;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionError {
    ContentRefused,
    ParseFailure,
    ProviderUnavailable,
}

/// The first response of one provider to one scenario–jurisdiction pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub scenario_id: String,
    pub jurisdiction: ProgramId,
    pub provider: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default)]
    pub explanation: String,
    #[serde(default)]
    pub raw: String,
    #[serde(default)]
    pub parse_retries: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<PredictionError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
}

impl PredictionResult {
    /// Exactly one of `predicted` and `error` is set, retries at most one.
    pub fn is_well_formed(&self) -> bool {
        self.predicted.is_some() != self.error.is_some() && self.parse_retries <= 1
    }
}

/// Screens one pair with a single-turn transcript. Only the first response
/// (plus the format retry) is used; no follow-up answers are supplied.
pub fn evaluate_pair(
    instructions: &InstructionSet,
    program: &Program,
    scenario: &LabeledScenario,
    provider_name: &str,
    provider: &dyn Provider,
    params: DecodeParams,
) -> PredictionResult {
    let mut result = PredictionResult {
        scenario_id: scenario.scenario_id.clone(),
        jurisdiction: scenario.jurisdiction.clone(),
        provider: provider_name.into(),
        predicted: None,
        question: None,
        explanation: String::new(),
        raw: String::new(),
        parse_retries: 0,
        error: None,
        error_detail: None,
    };
    let transcript = match Transcript::from_description(scenario.text.clone(), Timestamp(0)) {
        Ok(t) => t,
        Err(e) => {
            result.error = Some(PredictionError::ParseFailure);
            result.error_detail = Some(alloc::format!("{e}"));
            return result;
        }
    };
    let payload = assemble_prompt(instructions, program, &transcript, params).expect("single applicant turn");
    let call = screen_with_retry(provider, &payload);
    result.raw = call.raw;
    result.parse_retries = call.parse_retries;
    match call.result {
        Ok(o) => {
            result.predicted = Some(o.status());
            result.question = o.question_text().map(Into::into);
            result.explanation = o.explanation().into();
        }
        Err(CallFailure::Unreadable(e)) => {
            result.error = Some(PredictionError::ParseFailure);
            result.error_detail = Some(alloc::format!("{e}"));
        }
        Err(CallFailure::Provider(e)) => {
            result.error = Some(match e {
                ProviderError::ContentRefused { .. } => PredictionError::ContentRefused,
                _ => PredictionError::ProviderUnavailable,
            });
            result.error_detail = Some(alloc::format!("{e}"));
        }
    }
    result
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownPair {
    pub scenario_id: String,
    pub jurisdiction: ProgramId,
}

impl fmt::Display for UnknownPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "result for ({}, {}) has no dataset record", self.scenario_id, self.jurisdiction)
    }
}

/// Gold × predicted counts over the scored results. Errored results are
/// skipped.
pub fn confusion_matrix<'r>(
    results: impl IntoIterator<Item = &'r PredictionResult>,
    ds: &Dataset,
) -> Result<ConfusionMatrix, UnknownPair> {
    let gold = ds.gold_index();
    let mut m = ConfusionMatrix::default();
    for r in results {
        let g = *gold.get(&(r.scenario_id.as_str(), &r.jurisdiction)).ok_or_else(|| UnknownPair {
            scenario_id: r.scenario_id.clone(),
            jurisdiction: r.jurisdiction.clone(),
        })?;
        if let Some(p) = r.predicted {
            m.record(g, p);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub content_refused: u64,
    pub parse_failure: u64,
    pub provider_unavailable: u64,
}

impl ErrorCounts {
    pub fn add(&mut self, e: PredictionError) {
        match e {
            PredictionError::ContentRefused => self.content_refused += 1,
            PredictionError::ParseFailure => self.parse_failure += 1,
            PredictionError::ProviderUnavailable => self.provider_unavailable += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.content_refused + self.parse_failure + self.provider_unavailable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderReport {
    pub provider: String,
    pub classes: [ClassMetrics; 3],
    /// Absent when no result was scored.
    pub weighted: Option<WeightedMetrics>,
    pub confusion: ConfusionMatrix,
    pub errors: ErrorCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub providers: Vec<ProviderReport>,
}

/// Builds one report row per provider, ordered by provider name.
pub fn build_report(results: &[PredictionResult], ds: &Dataset) -> Result<EvalReport, UnknownPair> {
    let mut by_provider: BTreeMap<&str, Vec<&PredictionResult>> = BTreeMap::new();
    for r in results {
        by_provider.entry(r.provider.as_str()).or_default().push(r);
    }
    let mut providers = Vec::with_capacity(by_provider.len());
    for (name, rs) in by_provider {
        let confusion = confusion_matrix(rs.iter().copied(), ds)?;
        let classes = per_class_metrics(&confusion);
        let mut errors = ErrorCounts::default();
        for e in rs.iter().filter_map(|r| r.error) {
            errors.add(e);
        }
        providers.push(ProviderReport {
            provider: name.into(),
            classes,
            weighted: weighted_metrics(&classes).ok(),
            confusion,
            errors,
        });
    }
    Ok(EvalReport { providers })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub scenario_id: String,
    pub jurisdiction: ProgramId,
    pub provider: String,
    pub gold: Label,
    pub predicted: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub explanation: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unscored {
    pub scenario_id: String,
    pub jurisdiction: ProgramId,
    pub provider: String,
    pub gold: Label,
    pub error: PredictionError,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
    pub raw: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub disagreements: Vec<Disagreement>,
    pub unscored: Vec<Unscored>,
}

/// Items where the prediction differs from gold, for manual review.
/// Results for pairs missing from `ds` are ignored.
pub fn disagreement_report(results: &[PredictionResult], ds: &Dataset) -> DisagreementReport {
    let gold = ds.gold_index();
    let mut report = DisagreementReport::default();
    for r in results {
        let Some(&g) = gold.get(&(r.scenario_id.as_str(), &r.jurisdiction)) else {
            continue;
        };
        match (r.predicted, r.error) {
            (Some(p), _) if p != g => report.disagreements.push(Disagreement {
                scenario_id: r.scenario_id.clone(),
                jurisdiction: r.jurisdiction.clone(),
                provider: r.provider.clone(),
                gold: g,
                predicted: p,
                question: r.question.clone(),
                explanation: r.explanation.clone(),
                raw: r.raw.clone(),
            }),
            (None, Some(e)) => report.unscored.push(Unscored {
                scenario_id: r.scenario_id.clone(),
                jurisdiction: r.jurisdiction.clone(),
                provider: r.provider.clone(),
                gold: g,
                error: e,
                error_detail: r.error_detail.clone(),
                raw: r.raw.clone(),
            }),
            _ => {}
        }
    }
    report.disagreements.sort_by(|a, b| {
        (&a.jurisdiction, &a.scenario_id, &a.provider).cmp(&(&b.jurisdiction, &b.scenario_id, &b.provider))
    });
    report.unscored.sort_by(|a, b| {
        (&a.jurisdiction, &a.scenario_id, &a.provider).cmp(&(&b.jurisdiction, &b.scenario_id, &b.provider))
    });
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use proptest::prelude::*;
    use Label::*;

    fn scenario(id: &str, gold: Label) -> LabeledScenario {
        LabeledScenario { scenario_id: id.into(), jurisdiction: ProgramId::new("eastern"), text: "t".into(), gold }
    }

    fn result(id: &str, predicted: Option<Label>) -> PredictionResult {
        PredictionResult {
            scenario_id: id.into(),
            jurisdiction: ProgramId::new("eastern"),
            provider: "m".into(),
            predicted,
            question: None,
            explanation: "because".into(),
            raw: "raw".into(),
            parse_retries: 0,
            error: if predicted.is_none() { Some(PredictionError::ParseFailure) } else { None },
            error_detail: None,
        }
    }

    fn hand_counted() -> (Dataset, Vec<PredictionResult>) {
        let golds = [Accept, Accept, Deny, Question];
        let preds = [Accept, Deny, Deny, Question];
        let ds = Dataset::new((0..4).map(|i| scenario(&i.to_string(), golds[i])).collect()).unwrap();
        let rs = (0..4).map(|i| result(&i.to_string(), Some(preds[i]))).collect();
        (ds, rs)
    }

    #[test]
    fn hand_counted_confusion_and_disagreements() {
        let (ds, rs) = hand_counted();
        assert_eq!(confusion_matrix(&rs, &ds).unwrap().0, [[1, 1, 0], [0, 1, 0], [0, 0, 1]]);
        let d = disagreement_report(&rs, &ds);
        assert_eq!(d.disagreements.len(), 1);
        assert_eq!((d.disagreements[0].gold, d.disagreements[0].predicted), (Accept, Deny));
        assert!(d.unscored.is_empty());
    }

    #[test]
    fn empty_results_zero_matrix() {
        let (ds, _) = hand_counted();
        assert_eq!(confusion_matrix(&[], &ds).unwrap(), ConfusionMatrix::default());
    }

    #[test]
    fn all_correct() {
        let (ds, _) = hand_counted();
        let rs: Vec<_> = ds.records().iter().map(|r| result(&r.scenario_id, Some(r.gold))).collect();
        let m = confusion_matrix(&rs, &ds).unwrap();
        assert_eq!(m.0, [[2, 0, 0], [0, 1, 0], [0, 0, 1]]);
        assert_eq!(disagreement_report(&rs, &ds), DisagreementReport::default());
    }

    #[test]
    fn unknown_pair_rejected() {
        let (ds, _) = hand_counted();
        assert!(confusion_matrix(&[result("zz", Some(Accept))], &ds).is_err());
    }

    #[test]
    fn errored_results_are_unscored() {
        let (ds, mut rs) = hand_counted();
        rs.push(PredictionResult { provider: "m2".into(), ..result("0", None) });
        let rep = build_report(&rs, &ds).unwrap();
        assert_eq!(rep.providers.len(), 2);
        assert_eq!(rep.providers[1].errors.parse_failure, 1);
        assert_eq!(rep.providers[1].confusion.total(), 0);
        assert_eq!(rep.providers[1].weighted, None);
        let d = disagreement_report(&rs, &ds);
        assert_eq!(d.unscored.len(), 1);
    }

    #[test]
    fn duplicate_pair_rejected() {
        let r = Dataset::new(alloc::vec![scenario("a", Accept), scenario("a", Deny)]);
        assert!(matches!(r, Err(DatasetError::DuplicatePair { index: 1, .. })));
    }

    fn arb_labels() -> impl Strategy<Value = Vec<(Label, Option<Label>)>> {
        let l = prop_oneof![Just(Accept), Just(Deny), Just(Question)];
        prop::collection::vec((l.clone(), prop::option::weighted(0.9, l)), 0..20)
    }

    proptest! {
        #[test]
        fn permutation_invariance_and_conservation(items in arb_labels(), seed in any::<u64>()) {
            let ds = Dataset::new(items.iter().enumerate().map(|(i, (g, _))| scenario(&i.to_string(), *g)).collect()).unwrap();
            let rs: Vec<_> = items.iter().enumerate().map(|(i, (_, p))| result(&i.to_string(), *p)).collect();
            let mut shuffled = rs.clone();
            // deterministic Fisher-Yates from the seed
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a = build_report(&rs, &ds).unwrap();
            let b = build_report(&shuffled, &ds).unwrap();
            prop_assert_eq!(&a, &b);
            if let Some(p) = a.providers.first() {
                prop_assert_eq!(p.confusion.total() + p.errors.total(), rs.len() as u64);
                if let Some(w) = p.weighted {
                    let f1s = p.classes.iter().filter(|c| c.support > 0).map(|c| c.f1);
                    let (lo, hi) = f1s.fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
                    prop_assert!(w.f1 >= lo - 1e-12 && w.f1 <= hi + 1e-12);
                }
            }
        }
    }
}
