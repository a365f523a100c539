use serde_json::Value;

use crate::predict::PredictionResponse;
use enerfit_core::orchestrate::Service;

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// CSV export of one stored prediction: a metadata block, the inputs, then
/// the recommended measures (retrofit) or predicted targets (PV). Sections
/// are separated by a blank line and each starts with its own header row.
pub fn prediction_csv(p: &PredictionResponse) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    let mut put = |rec: &[&str]| w.write_record(rec).expect("in-memory write");
    put(&["prediction_id", &p.prediction_id]);
    put(&["service", p.service.name()]);
    put(&["model_version", &p.model_version]);
    put(&["timestamp", &p.timestamp.to_rfc3339()]);
    put(&[""]);
    put(&["inputs"]);
    put(&["name", "value"]);
    for (k, v) in &p.inputs {
        let imputed = p.imputed_fields.iter().any(|f| f == k);
        let value = if imputed && v.is_null() { "imputed".to_string() } else { cell(v) };
        put(&[k, &value]);
    }
    put(&[""]);
    match p.service {
        Service::Retrofit => {
            put(&["recommended_measures"]);
            put(&["measure", "recommended", "probability"]);
            for (k, v) in &p.outputs {
                let prob = p.probabilities.as_ref().and_then(|m| m.get(k)).map(cell).unwrap_or_default();
                put(&[k, &cell(v), &prob]);
            }
        }
        Service::Pv => {
            put(&["predicted_targets"]);
            put(&["target", "value"]);
            for (k, v) in &p.outputs {
                put(&[k, &cell(v)]);
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
