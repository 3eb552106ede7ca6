//! Consolidated CSV table from metric JSON files.

use serde_json::Value;

use crate::error::CliError;

pub const REPORT_COLUMNS: [&str; 8] = ["method", "KS", "TW", "CT", "SR", "EV", "K", "reference"];

/// One row per metric document, columns in [`REPORT_COLUMNS`] order.
pub fn report_csv(documents: &[(String, Value)]) -> Result<String, CliError> {
    let mut out = REPORT_COLUMNS.join(",");
    out.push('\n');
    for (source, doc) in documents {
        let cells = REPORT_COLUMNS
            .iter()
            .map(|&col| match doc.get(col) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(v @ Value::Number(_)) => Ok(v.to_string()),
                Some(other) => Err(CliError::Report(format!("{source}: field `{col}` has unexpected value {other}"))),
                None => Err(CliError::Report(format!("{source}: missing field `{col}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(method: &str) -> Value {
        json!({"method": method, "KS": 0.25, "TW": 0.9, "CT": 0.95, "SR": 1.5, "EV": 0.1, "K": 50, "reference": "geographic", "seed": 1})
    }

    #[test]
    fn rows_follow_header() {
        let csv = report_csv(&[("a".into(), doc("triplet-margin")), ("b".into(), doc("pca"))]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,KS,TW,CT,SR,EV,K,reference");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "pca,0.25,0.9,0.95,1.5,0.1,50,geographic");
    }

    #[test]
    fn missing_field_is_named() {
        let mut d = doc("x");
        d.as_object_mut().unwrap().remove("EV");
        let err = report_csv(&[("m.json".into(), d)]).unwrap_err();
        assert!(err.to_string().contains("`EV`"), "{err}");
    }

    #[test]
    fn output_is_stable() {
        let docs = [("a".to_string(), doc("a"))];
        assert_eq!(report_csv(&docs).unwrap(), report_csv(&docs).unwrap());
    }
}
