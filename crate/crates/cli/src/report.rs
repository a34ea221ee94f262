//! Published JSON schemas and the human-readable eval table.

use std::fmt::Write;

use gazetrack::eval::EvalReport;
use serde_json::Value;

pub const EVAL_REPORT_SCHEMA: &str = include_str!("../schemas/eval_report.schema.json");
pub const FRAME_RESULT_SCHEMA: &str = include_str!("../schemas/frame_result.schema.json");
pub const WS_PROTOCOL_SCHEMA: &str = include_str!("../schemas/ws_protocol.schema.json");

/// Validates `instance` against a schema document; returns every violation.
pub fn validate(schema: &str, instance: &Value) -> Result<(), Vec<String>> {
    let schema: Value = serde_json::from_str(schema).map_err(|e| vec![format!("schema is not JSON: {e}")])?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| vec![format!("invalid schema: {e}")])?;
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .map(|e| format!("{}: {e}", e.instance_path))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

pub fn table(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "targets {}  tracked {}  detection {:.1}%  distance {} mm",
        report.targets,
        report.tracked,
        100.0 * report.detection_rate,
        report.distance_mm
    );
    let _ = writeln!(
        s,
        "{:<12}{:>10}{:>10}{:>10}{:>10}",
        "", "mean mm", "max mm", "mean deg", "max deg"
    );
    let rows = [
        (
            "horizontal",
            report.mean_err_x_mm,
            report.max_err_x_mm,
            report.mean_err_x_deg,
            report.max_err_x_deg,
        ),
        (
            "vertical",
            report.mean_err_y_mm,
            report.max_err_y_mm,
            report.mean_err_y_deg,
            report.max_err_y_deg,
        ),
    ];
    for (name, a, b, c, d) in rows {
        let _ = writeln!(s, "{name:<12}{a:>10.2}{b:>10.2}{c:>10.3}{d:>10.3}");
    }
    let statuses: Vec<String> = report.by_status.iter().map(|(k, v)| format!("{k} {v}")).collect();
    let _ = writeln!(s, "status: {}", statuses.join(", "));
    let _ = writeln!(
        s,
        "({} mm on screen = {:.2} deg)",
        gazetrack::eval::ANCHOR_MM,
        report.anchor_deg
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn schemas_compile() {
        for s in [EVAL_REPORT_SCHEMA, FRAME_RESULT_SCHEMA, WS_PROTOCOL_SCHEMA] {
            let v: Value = serde_json::from_str(s).unwrap();
            jsonschema::validator_for(&v).unwrap();
        }
    }

    #[test]
    fn frame_schema_enforces_status_coupling() {
        let ok = json!({"frame_id": 0, "t_ms": 0, "status": "NoEye", "iris": null, "corner": null,
                        "delta": null, "screen": null, "inliers": 0, "proc_us": 5});
        assert!(validate(FRAME_RESULT_SCHEMA, &ok).is_ok());
        let mut bad = ok.clone();
        bad["iris"] = json!({"cx": 1.0, "cy": 2.0, "r": 3.0});
        assert!(validate(FRAME_RESULT_SCHEMA, &bad).is_err());
    }

    #[test]
    fn real_frame_results_match_their_schema() {
        use gazetrack::{process_frame, render, GrayImage, PipelineConfig, SyntheticEyeSpec};
        let cfg = PipelineConfig::default();
        let (img, _) = render(&SyntheticEyeSpec::default()).unwrap();
        for frame in [img, GrayImage::filled(64, 64, 90)] {
            let r = process_frame(&frame, None, &cfg);
            let v: Value = serde_json::from_str(&r.to_json()).unwrap();
            validate(FRAME_RESULT_SCHEMA, &v).unwrap();
        }
    }
}
