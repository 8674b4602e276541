//! SI-SDR evaluation over a dataset.

use serde::{Serialize, Serializer};

use super::Dataset;
use crate::error::Result;
use crate::loss::si_sdr;
use crate::model::DeftAn;

/// Finite values as numbers, infinities and NaN as `"inf"`, `"-inf"`, `"nan"`.
fn db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalEntry {
    pub index: usize,
    #[serde(serialize_with = "db")]
    pub input_si_sdr_db: f64,
    #[serde(serialize_with = "db")]
    pub si_sdr_db: f64,
    #[serde(serialize_with = "db")]
    pub si_sdri_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub count: usize,
    #[serde(serialize_with = "db")]
    pub mean_input_si_sdr_db: f64,
    #[serde(serialize_with = "db")]
    pub mean_si_sdr_db: f64,
    #[serde(serialize_with = "db")]
    pub mean_si_sdri_db: f64,
    pub examples: Vec<EvalEntry>,
}

impl EvalReport {
    /// Builds the report from `(input, output)` SI-SDR pairs in dB.
    pub fn from_scores(scores: &[(f64, f64)]) -> Self {
        let examples: Vec<EvalEntry> = scores
            .iter()
            .enumerate()
            .map(|(index, &(input, output))| EvalEntry {
                index,
                input_si_sdr_db: input,
                si_sdr_db: output,
                si_sdri_db: improvement(output, input),
            })
            .collect();
        let mean = |f: fn(&EvalEntry) -> f64| {
            examples.iter().map(f).sum::<f64>() / examples.len().max(1) as f64
        };
        Self {
            count: examples.len(),
            mean_input_si_sdr_db: mean(|e| e.input_si_sdr_db),
            mean_si_sdr_db: mean(|e| e.si_sdr_db),
            mean_si_sdri_db: mean(|e| e.si_sdri_db),
            examples,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("eval report serializes")
    }
}

/// Output minus input, taken as 0 when both are the same infinity.
fn improvement(output: f64, input: f64) -> f64 {
    if output == input {
        0.0
    } else {
        output - input
    }
}

/// Scores eval-mode enhancement of every example against its clean target.
pub fn evaluate(model: &DeftAn<f32>, data: &Dataset) -> Result<EvalReport> {
    data.check_model(model.config())?;
    let mut scores = Vec::with_capacity(data.len());
    for ex in &data.examples {
        let input = si_sdr(&ex.noisy.select(0), &ex.clean)?;
        let output = si_sdr(&model.enhance(&ex.noisy)?, &ex.clean)?;
        scores.push((input, output));
    }
    Ok(EvalReport::from_scores(&scores))
}
